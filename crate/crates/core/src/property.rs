//! Property prediction: for an entity `h` and a relation `r` that `h` never
//! has in train, rank `r` among all relations by how well `h` supports them.
//!
//! A relation `r'` scores `max_t score(h, r', t)` (or the mean over `t`).
//! The filtered rank additionally drops candidates `r' != r` that `h`
//! already has in train.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Split, Triple};
use crate::metrics::MetricBundle;
use crate::model::ModelParams;
use crate::rank::{check_model_graph, rank_with_filter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyCase {
    pub head: EntityId,
    pub relation: RelationId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(KgError::Invalid(format!("unknown aggregation `{other}` (expected max or mean)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyRank {
    pub case: PropertyCase,
    pub rank: f64,
    pub filtered_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyEval {
    pub aggregation: Aggregation,
    pub ranks: Vec<PropertyRank>,
    pub unfiltered: MetricBundle,
    pub filtered: MetricBundle,
}

fn train_pairs(g: &KnowledgeGraph) -> HashSet<(EntityId, RelationId)> {
    g.split_triples(Split::Train).map(|t| (t.head, t.relation)).collect()
}

/// Distinct `(h, r)` of test triples such that train has no `(h, r, .)`,
/// sorted by head then relation.
pub fn build_property_testset(g: &KnowledgeGraph) -> Vec<PropertyCase> {
    let seen = train_pairs(g);
    let mut cases: Vec<PropertyCase> = g
        .split_triples(Split::Test)
        .filter(|t| !seen.contains(&(t.head, t.relation)))
        .map(|t| PropertyCase {
            head: t.head,
            relation: t.relation,
        })
        .collect();
    cases.sort();
    cases.dedup();
    cases
}

/// `s[r'] = agg_t score(h, r', t)` for every relation.
pub fn relation_scores(p: &ModelParams, h: EntityId, agg: Aggregation) -> Vec<f64> {
    let mut buf = Vec::with_capacity(p.num_entities);
    (0..p.num_relations)
        .map(|r| {
            p.score_tails_into(h, RelationId::from_index(r), &mut buf);
            match agg {
                Aggregation::Max => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Aggregation::Mean => buf.iter().sum::<f64>() / buf.len() as f64,
            }
        })
        .collect()
}

pub fn rank_properties(
    p: &ModelParams,
    g: &KnowledgeGraph,
    cases: &[PropertyCase],
    agg: Aggregation,
) -> Result<PropertyEval> {
    if cases.is_empty() {
        return Err(KgError::Empty("no property test cases"));
    }
    let probes: Vec<Triple> = cases.iter().map(|c| Triple::new(c.head, c.relation, c.head)).collect();
    check_model_graph(p, g, &probes)?;
    let seen = train_pairs(g);

    let mut heads: Vec<EntityId> = cases.iter().map(|c| c.head).collect();
    heads.sort();
    heads.dedup();
    let per_head: Vec<(EntityId, Vec<f64>)> = heads
        .par_iter()
        .map(|&h| (h, relation_scores(p, h, agg)))
        .collect();

    let ranks: Vec<PropertyRank> = cases
        .iter()
        .map(|&case| {
            let i = per_head.binary_search_by_key(&case.head, |(h, _)| *h).unwrap();
            let scores = &per_head[i].1;
            let known: Vec<usize> = (0..p.num_relations)
                .filter(|&r| r != case.relation.index() && seen.contains(&(case.head, RelationId::from_index(r))))
                .collect();
            let (rank, filtered_rank) = rank_with_filter(scores, case.relation.index(), &known);
            PropertyRank {
                case,
                rank,
                filtered_rank,
            }
        })
        .collect();
    Ok(PropertyEval {
        aggregation: agg,
        unfiltered: MetricBundle::from_ranks(ranks.iter().map(|r| r.rank))?,
        filtered: MetricBundle::from_ranks(ranks.iter().map(|r| r.filtered_rank))?,
        ranks,
    })
}

/// Writes `h r` rows.
pub fn write_cases(path: &Path, g: &KnowledgeGraph, cases: &[PropertyCase]) -> Result<()> {
    crate::io::write_rows(
        path,
        Some("h\tr"),
        cases
            .iter()
            .map(|c| format!("{}\t{}", g.entity_name(c.head), g.relation_name(c.relation))),
    )
}

/// Writes `h r rank rank_filtered` rows.
pub fn write_property_ranks(path: &Path, g: &KnowledgeGraph, ranks: &[PropertyRank]) -> Result<()> {
    crate::io::write_rows(
        path,
        Some("h\tr\trank\trank_filtered"),
        ranks.iter().map(|r| {
            format!(
                "{}\t{}\t{}\t{}",
                g.entity_name(r.case.head),
                g.relation_name(r.case.relation),
                r.rank,
                r.filtered_rank
            )
        }),
    )
}
