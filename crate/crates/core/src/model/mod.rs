//! Embedding models: parameters, scoring, training and checkpoints.

mod checkpoint;
mod config;
mod gradcheck;
pub mod kernels;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::TrainConfig;
pub use gradcheck::{grad_check, GradCheckReport};
pub(crate) use kernels::Query;
pub use train::{train, train_with, TrainMode, TrainOutcome};

use crate::error::{KgError, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::TransE, Family::DistMult, Family::ComplEx, Family::RotatE];

    pub fn name(self) -> &'static str {
        match self {
            Family::TransE => "TransE",
            Family::DistMult => "DistMult",
            Family::ComplEx => "ComplEx",
            Family::RotatE => "RotatE",
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, Family::ComplEx | Family::RotatE)
    }

    /// Width of a relation row for an embedding dimension of `dim`.
    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            Family::RotatE => dim / 2,
            _ => dim,
        }
    }

    pub fn check_dim(self, dim: usize) -> Result<()> {
        if dim == 0 || (self.is_complex() && dim % 2 != 0) {
            return Err(KgError::Invalid(format!(
                "{} needs a positive{} dimension, got {dim}",
                self.name(),
                if self.is_complex() { " even" } else { "" }
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(Family::TransE),
            "distmult" => Ok(Family::DistMult),
            "complex" => Ok(Family::ComplEx),
            "rotate" => Ok(Family::RotatE),
            _ => Err(KgError::Invalid(format!(
                "unknown model family `{s}` (expected transe, distmult, complex or rotate)"
            ))),
        }
    }
}

/// Dense entity and relation tables, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub family: Family,
    pub dim: usize,
    pub gamma: f32,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity: Vec<f32>,
    pub relation: Vec<f32>,
}

impl ModelParams {
    pub fn zeros(family: Family, num_entities: usize, num_relations: usize, dim: usize, gamma: f32) -> Self {
        ModelParams {
            family,
            dim,
            gamma,
            num_entities,
            num_relations,
            entity: vec![0.0; num_entities * dim],
            relation: vec![0.0; num_relations * family.relation_width(dim)],
        }
    }

    /// Entity (and non-RotatE relation) coordinates are uniform in
    /// `[-(gamma + 2) / dim, (gamma + 2) / dim]`; RotatE phases are uniform in
    /// `[-pi, pi]`.
    pub fn init<R: Rng>(
        family: Family,
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        gamma: f32,
        rng: &mut R,
    ) -> Result<Self> {
        family.check_dim(dim)?;
        let mut p = Self::zeros(family, num_entities, num_relations, dim, gamma);
        let range = (gamma + 2.0) / dim as f32;
        for x in &mut p.entity {
            *x = rng.random_range(-range..=range);
        }
        let rel_range = if family == Family::RotatE {
            std::f32::consts::PI
        } else {
            range
        };
        for x in &mut p.relation {
            *x = rng.random_range(-rel_range..=rel_range);
        }
        Ok(p)
    }

    pub fn entity_width(&self) -> usize {
        self.dim
    }

    pub fn relation_width(&self) -> usize {
        self.family.relation_width(self.dim)
    }

    #[inline]
    pub fn entity_row(&self, e: EntityId) -> &[f32] {
        let w = self.dim;
        &self.entity[e.index() * w..(e.index() + 1) * w]
    }

    #[inline]
    pub fn relation_row(&self, r: RelationId) -> &[f32] {
        let w = self.relation_width();
        &self.relation[r.index() * w..(r.index() + 1) * w]
    }

    pub fn entity_row_mut(&mut self, e: EntityId) -> &mut [f32] {
        let w = self.dim;
        &mut self.entity[e.index() * w..(e.index() + 1) * w]
    }

    pub fn relation_row_mut(&mut self, r: RelationId) -> &mut [f32] {
        let w = self.relation_width();
        &mut self.relation[r.index() * w..(r.index() + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|x| x.is_finite())
    }

    /// Plausibility of `(h, r, t)`, computed in f64.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let up = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
        kernels::score(
            self.family,
            self.gamma as f64,
            &up(self.entity_row(h)),
            &up(self.relation_row(r)),
            &up(self.entity_row(t)),
        )
    }

    pub fn score_triple(&self, t: Triple) -> f64 {
        self.score(t.head, t.relation, t.tail)
    }

    /// `out[e] = score(h, r, e)` for every entity.
    pub fn score_tails_into(&self, h: EntityId, r: RelationId, out: &mut Vec<f64>) {
        let q = Query::tails(self.family, self.gamma, self.entity_row(h), self.relation_row(r));
        out.clear();
        out.extend(self.entity.chunks_exact(self.dim).map(|e| q.score_tail(e)));
    }

    /// `out[e] = score(e, r, t)` for every entity.
    pub fn score_heads_into(&self, r: RelationId, t: EntityId, out: &mut Vec<f64>) {
        let q = Query::heads(self.family, self.gamma, self.relation_row(r), self.entity_row(t));
        out.clear();
        out.extend(self.entity.chunks_exact(self.dim).map(|e| q.score_head(e)));
    }

    pub fn score_batch_tails(&self, h: EntityId, r: RelationId) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_entities);
        self.score_tails_into(h, r, &mut v);
        v
    }

    pub fn score_batch_heads(&self, r: RelationId, t: EntityId) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_entities);
        self.score_heads_into(r, t, &mut v);
        v
    }

    /// Errors naming the first symbol of `t` that has no row in these params.
    pub fn check_covers(&self, g: &KnowledgeGraph, t: Triple) -> Result<()> {
        for e in [t.head, t.tail] {
            if e.index() >= self.num_entities {
                return Err(KgError::MissingEmbedding {
                    kind: "entity",
                    name: g.entity_name(e).to_owned(),
                    id: e.index(),
                    available: self.num_entities,
                });
            }
        }
        if t.relation.index() >= self.num_relations {
            return Err(KgError::MissingEmbedding {
                kind: "relation",
                name: g.relation_name(t.relation).to_owned(),
                id: t.relation.index(),
                available: self.num_relations,
            });
        }
        Ok(())
    }
}
