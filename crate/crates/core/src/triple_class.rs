//! Triple classification against model-generated hard negatives.
//!
//! For every positive `(h, r, t)` the generator model's ranked candidates
//! for one slot are walked from the top; the first entity that differs from
//! the original, satisfies the suite's type predicate and forms a triple
//! absent from the whole dataset becomes the negative. Consistent suites
//! want an entity sharing a type with the original, inconsistent suites an
//! entity whose (non-empty) types are disjoint from the original's.
//!
//! Per-relation thresholds are fit on validation suites; a triple is
//! classified positive when its score is strictly above the threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::metrics::cmp_scores;
use crate::model::ModelParams;
use crate::rank::check_model_graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    ConsistentHead,
    InconsistentHead,
    ConsistentTail,
    InconsistentTail,
    /// Uniformly random head, for contrast only.
    RandomHead,
    /// Uniformly random tail, for contrast only.
    RandomTail,
}

impl NegativeKind {
    pub const TYPED: [NegativeKind; 4] = [
        NegativeKind::ConsistentHead,
        NegativeKind::InconsistentHead,
        NegativeKind::ConsistentTail,
        NegativeKind::InconsistentTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NegativeKind::ConsistentHead => "consistent_head",
            NegativeKind::InconsistentHead => "inconsistent_head",
            NegativeKind::ConsistentTail => "consistent_tail",
            NegativeKind::InconsistentTail => "inconsistent_tail",
            NegativeKind::RandomHead => "random_head",
            NegativeKind::RandomTail => "random_tail",
        }
    }

    pub fn corrupts_head(self) -> bool {
        matches!(
            self,
            NegativeKind::ConsistentHead | NegativeKind::InconsistentHead | NegativeKind::RandomHead
        )
    }

    /// Whether `candidate` may replace `original` in this kind of suite.
    pub fn type_ok(self, g: &KnowledgeGraph, original: EntityId, candidate: EntityId) -> bool {
        match self {
            NegativeKind::ConsistentHead | NegativeKind::ConsistentTail => g.shares_type(original, candidate),
            NegativeKind::InconsistentHead | NegativeKind::InconsistentTail => {
                !g.entity_types(original).is_empty()
                    && !g.entity_types(candidate).is_empty()
                    && !g.shares_type(original, candidate)
            }
            NegativeKind::RandomHead | NegativeKind::RandomTail => true,
        }
    }
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NegativeKind {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        [
            NegativeKind::ConsistentHead,
            NegativeKind::InconsistentHead,
            NegativeKind::ConsistentTail,
            NegativeKind::InconsistentTail,
            NegativeKind::RandomHead,
            NegativeKind::RandomTail,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| KgError::Invalid(format!("unknown negative kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativePair {
    pub positive: Triple,
    pub negative: Triple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSuite {
    pub kind: NegativeKind,
    /// Identity of the model whose rankings produced the negatives.
    pub generator: String,
    /// Every positive a negative was sought for.
    pub positives: Vec<Triple>,
    pub pairs: Vec<NegativePair>,
    /// `pairs.len() / positives.len()`
    pub coverage: f64,
}

impl NegativeSuite {
    fn new(kind: NegativeKind, generator: &str, positives: &[Triple], pairs: Vec<NegativePair>) -> Self {
        let coverage = if positives.is_empty() {
            0.0
        } else {
            pairs.len() as f64 / positives.len() as f64
        };
        NegativeSuite {
            kind,
            generator: generator.to_owned(),
            positives: positives.to_vec(),
            pairs,
            coverage,
        }
    }

    pub fn negatives(&self) -> impl Iterator<Item = Triple> + '_ {
        self.pairs.iter().map(|p| p.negative)
    }
}

fn corrupt(t: Triple, head: bool, e: EntityId) -> Triple {
    if head {
        Triple::new(e, t.relation, t.tail)
    } else {
        Triple::new(t.head, t.relation, e)
    }
}

/// Candidates for the corrupted slot of `t`, best first, ties by entity id.
pub fn ranked_candidates(p: &ModelParams, t: Triple, head: bool, scores: &mut Vec<f64>) -> Vec<EntityId> {
    if head {
        p.score_heads_into(t.relation, t.tail, scores);
    } else {
        p.score_tails_into(t.head, t.relation, scores);
    }
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| cmp_scores(scores[b as usize], scores[a as usize]).then(a.cmp(&b)));
    order.into_iter().map(EntityId).collect()
}

/// Hard negatives for `positives` from the rankings of `p`.
pub fn generate_negatives(
    p: &ModelParams,
    g: &KnowledgeGraph,
    kind: NegativeKind,
    positives: &[Triple],
    generator: &str,
) -> Result<NegativeSuite> {
    if matches!(kind, NegativeKind::RandomHead | NegativeKind::RandomTail) {
        return Err(KgError::Invalid(format!(
            "{kind} negatives are not model generated; use random_negatives"
        )));
    }
    if !g.has_types() {
        return Err(KgError::Invalid("type-constrained negatives need entity types".into()));
    }
    check_model_graph(p, g, positives)?;
    let head = kind.corrupts_head();
    let found: Vec<Option<NegativePair>> = positives
        .par_iter()
        .map_init(Vec::new, |scores, &t| {
            let original = if head { t.head } else { t.tail };
            ranked_candidates(p, t, head, scores)
                .into_iter()
                .filter(|&e| e != original && kind.type_ok(g, original, e))
                .map(|e| corrupt(t, head, e))
                .find(|n| !g.contains(n.head, n.relation, n.tail))
                .map(|negative| NegativePair { positive: t, negative })
        })
        .collect();
    Ok(NegativeSuite::new(kind, generator, positives, found.into_iter().flatten().collect()))
}

/// Uniformly random corruptions absent from the dataset; up to 100 draws per
/// positive.
pub fn random_negatives(g: &KnowledgeGraph, head: bool, positives: &[Triple], seed: u64) -> Result<NegativeSuite> {
    let n = g.num_entities();
    if n < 2 {
        return Err(KgError::Invalid("random negatives need at least two entities".into()));
    }
    let kind = if head { NegativeKind::RandomHead } else { NegativeKind::RandomTail };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for &t in positives {
        let original = if head { t.head } else { t.tail };
        for _ in 0..100 {
            let e = EntityId::from_index(rng.random_range(0..n));
            let c = corrupt(t, head, e);
            if e != original && !g.contains(c.head, c.relation, c.tail) {
                pairs.push(NegativePair { positive: t, negative: c });
                break;
            }
        }
    }
    Ok(NegativeSuite::new(kind, &format!("uniform(seed={seed})"), positives, pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub per_relation: BTreeMap<RelationId, f64>,
    pub default_threshold: f64,
}

impl ThresholdTable {
    pub fn threshold(&self, r: RelationId) -> f64 {
        self.per_relation.get(&r).copied().unwrap_or(self.default_threshold)
    }
}

/// Threshold maximizing accuracy of `score > threshold` over labeled scores,
/// and that accuracy.
///
/// Candidates are the midpoints between adjacent distinct scores plus one
/// point half a unit below the minimum and above the maximum. Ties go to the
/// lowest candidate.
pub fn best_threshold(examples: &[(f64, bool)]) -> Option<(f64, f64)> {
    if examples.is_empty() {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = examples.to_vec();
    sorted.sort_by(|a, b| cmp_scores(a.0, b.0));
    let n = sorted.len();
    // threshold below everything: all predicted positive
    let mut correct = sorted.iter().filter(|e| e.1).count() as i64;
    let mut best = (sorted[0].0 - 0.5, correct);
    let mut i = 0;
    while i < n {
        let v = sorted[i].0;
        while i < n && sorted[i].0 == v {
            correct += if sorted[i].1 { -1 } else { 1 };
            i += 1;
        }
        let thr = if i < n { (v + sorted[i].0) / 2.0 } else { v + 0.5 };
        if correct > best.1 {
            best = (thr, correct);
        }
    }
    Some((best.0, best.1 as f64 / n as f64))
}

/// Per-relation thresholds from labeled `(relation, score, is_positive)`
/// examples; the default threshold is fit on all examples pooled.
pub fn learn_thresholds_from_scores(examples: &[(RelationId, f64, bool)]) -> Result<ThresholdTable> {
    if !examples.iter().any(|e| e.2) || !examples.iter().any(|e| !e.2) {
        return Err(KgError::Empty("threshold learning needs positive and negative validation examples"));
    }
    let pooled: Vec<(f64, bool)> = examples.iter().map(|e| (e.1, e.2)).collect();
    let (default_threshold, _) = best_threshold(&pooled).unwrap();
    let mut groups: BTreeMap<RelationId, Vec<(f64, bool)>> = BTreeMap::new();
    for &(r, s, y) in examples {
        groups.entry(r).or_default().push((s, y));
    }
    let per_relation = groups
        .into_iter()
        .map(|(r, ex)| (r, best_threshold(&ex).unwrap().0))
        .collect();
    Ok(ThresholdTable {
        per_relation,
        default_threshold,
    })
}

pub fn learn_thresholds(p: &ModelParams, valid_pos: &[Triple], valid_neg: &[Triple]) -> Result<ThresholdTable> {
    let examples: Vec<(RelationId, f64, bool)> = valid_pos
        .iter()
        .map(|&t| (t.relation, p.score_triple(t), true))
        .chain(valid_neg.iter().map(|&t| (t.relation, p.score_triple(t), false)))
        .collect();
    learn_thresholds_from_scores(&examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ClassificationMetrics {
    pub fn from_predictions<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fneg += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassificationMetrics {
            precision,
            recall,
            accuracy: ratio(tp + tn, tp + fp + tn + fneg),
            f1,
            true_pos: tp,
            false_pos: fp,
            true_neg: tn,
            false_neg: fneg,
        }
    }
}

/// Classifies the suite's positives and negatives with `score > threshold`.
pub fn classify(p: &ModelParams, thresholds: &ThresholdTable, suite: &NegativeSuite) -> Result<ClassificationMetrics> {
    if suite.positives.is_empty() && suite.pairs.is_empty() {
        return Err(KgError::Empty("negative suite"));
    }
    let predict = |t: Triple| p.score_triple(t) > thresholds.threshold(t.relation);
    Ok(ClassificationMetrics::from_predictions(
        suite
            .positives
            .iter()
            .map(|&t| (predict(t), true))
            .chain(suite.negatives().map(|t| (predict(t), false))),
    ))
}

/// Accuracy gaps `inconsistent - consistent` per corrupted slot. Negative
/// gaps are unexpected but not an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub head_gap: Option<f64>,
    pub tail_gap: Option<f64>,
    pub holds: bool,
}

pub fn directional_check(results: &BTreeMap<NegativeKind, ClassificationMetrics>) -> DirectionalCheck {
    let gap = |inc, con| Some(results.get(&inc)?.accuracy - results.get(&con)?.accuracy);
    let head_gap = gap(NegativeKind::InconsistentHead, NegativeKind::ConsistentHead);
    let tail_gap = gap(NegativeKind::InconsistentTail, NegativeKind::ConsistentTail);
    DirectionalCheck {
        head_gap,
        tail_gap,
        holds: [head_gap, tail_gap].iter().flatten().all(|g| *g >= 0.0),
    }
}

/// Writes `kind h r t h' r' t' slot` rows; `slot` names the corrupted position.
pub fn write_suite(path: &Path, g: &KnowledgeGraph, suite: &NegativeSuite) -> Result<()> {
    let slot = if suite.kind.corrupts_head() { "head" } else { "tail" };
    crate::io::write_rows(
        path,
        Some("kind\th\tr\tt\th'\tr'\tt'\tslot"),
        suite.pairs.iter().map(|p| {
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                suite.kind,
                g.entity_name(p.positive.head),
                g.relation_name(p.positive.relation),
                g.entity_name(p.positive.tail),
                g.entity_name(p.negative.head),
                g.relation_name(p.negative.relation),
                g.entity_name(p.negative.tail),
                slot
            )
        }),
    )
}

/// Writes `relation threshold` rows, then the default as `*`.
pub fn write_thresholds(path: &Path, g: &KnowledgeGraph, table: &ThresholdTable) -> Result<()> {
    crate::io::write_rows(
        path,
        Some("relation\tthreshold"),
        table
            .per_relation
            .iter()
            .map(|(r, v)| format!("{}\t{v:.6}", g.relation_name(*r)))
            .chain(std::iter::once(format!("*\t{:.6}", table.default_threshold))),
    )
}
