//! Entity-pair ranking: for a relation `r`, score every `(h, t)` pair, drop
//! pairs known from train or valid, and measure how high the test pairs of
//! `r` come out.
//!
//! With `relv[k] = 1` when the k-th pair is a test pair of `r`:
//!
//! ```text
//! P@k  = (# test pairs in the top k) / k
//! AP@K = (1 / min(K, |T_r|)) * sum_{k <= K} P@k * relv[k]
//! ```
//!
//! Pairs with equal scores are taken in uniformly random order and the
//! expectation of both metrics over that order is reported, so the result
//! does not depend on enumeration order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Split, Triple};
use crate::metrics::cmp_scores;
use crate::model::ModelParams;
use crate::rank::check_model_graph;

/// Pair scores allowed per relation before candidate sets are required.
pub const DEFAULT_PAIR_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRankResult {
    pub relation: RelationId,
    pub ap_at_k: f64,
    pub p_at_k: f64,
    pub num_test_pairs: usize,
    pub k: usize,
}

/// Entities allowed in the head and tail slot of one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCandidates {
    pub heads: Vec<EntityId>,
    pub tails: Vec<EntityId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Every entity in both slots, subject to the pair budget.
    #[default]
    All,
    /// Entities sharing a type with a head (tail) of `r` seen in train or valid.
    TypeCompatible,
}

/// Entities that share a type with some train/valid head (resp. tail) of `r`.
/// A slot with no typed observations falls back to all entities.
pub fn type_compatible_candidates(g: &KnowledgeGraph, r: RelationId) -> PairCandidates {
    let mut head_types = HashSet::new();
    let mut tail_types = HashSet::new();
    for (t, s) in g.triples().iter().zip(g.splits()) {
        if t.relation == r && *s != Split::Test {
            head_types.extend(g.entity_types(t.head).iter().copied());
            tail_types.extend(g.entity_types(t.tail).iter().copied());
        }
    }
    let pick = |types: &HashSet<_>| -> Vec<EntityId> {
        let all = (0..g.num_entities()).map(EntityId::from_index);
        if types.is_empty() {
            all.collect()
        } else {
            all.filter(|&e| g.entity_types(e).iter().any(|ty| types.contains(ty))).collect()
        }
    };
    PairCandidates {
        heads: pick(&head_types),
        tails: pick(&tail_types),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(f64);

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scores(self.0, other.0)
    }
}

/// Expected `(AP@K, P@K)` for a ranking given as tie groups in descending
/// score order, each `(size, relevant)`, over uniformly random orders within
/// groups.
pub(crate) fn expected_ap_p(groups: &[(usize, usize)], k: usize, num_relevant: usize) -> (f64, f64) {
    let np = k.min(num_relevant);
    if np == 0 || k == 0 {
        return (0.0, 0.0);
    }
    let mut pos = 0usize;
    let mut rel_above = 0.0f64;
    let mut ap_sum = 0.0f64;
    let mut hits = 0.0f64;
    for &(size, m) in groups {
        if pos >= k {
            break;
        }
        let (gs, mf) = (size as f64, m as f64);
        let take = size.min(k - pos);
        if m > 0 {
            let p_rel = mf / gs;
            let other = if size > 1 { (mf - 1.0) / (gs - 1.0) } else { 0.0 };
            for j in 1..=take {
                let rank = (pos + j) as f64;
                ap_sum += p_rel * (rel_above + 1.0 + (j - 1) as f64 * other) / rank;
            }
        }
        hits += mf * take as f64 / gs;
        rel_above += mf;
        pos += size;
    }
    (ap_sum / np as f64, hits / k as f64)
}

/// Collapses `(score, relevant)` items sorted by descending score into tie groups.
fn tie_groups(items: &[(Score, bool)]) -> Vec<(usize, usize)> {
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<Score> = None;
    for &(s, rel) in items {
        if prev != Some(s) {
            groups.push((0, 0));
            prev = Some(s);
        }
        let g = groups.last_mut().unwrap();
        g.0 += 1;
        g.1 += rel as usize;
    }
    groups
}

/// Streams scores and keeps every item that can still reach the top `k`
/// (ties at the cut included).
struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Score>>,
    kept: Vec<(Score, bool)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
            kept: Vec::new(),
        }
    }

    fn threshold(&self) -> Option<Score> {
        (self.heap.len() >= self.k).then(|| self.heap.peek().unwrap().0)
    }

    fn push(&mut self, s: f64, relevant: bool) {
        let s = Score(s);
        if let Some(thr) = self.threshold() {
            if s < thr {
                return;
            }
        }
        self.heap.push(Reverse(s));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
        self.kept.push((s, relevant));
        if self.kept.len() > 4 * self.k + 1024 {
            self.prune();
        }
    }

    fn prune(&mut self) {
        if let Some(thr) = self.threshold() {
            self.kept.retain(|(s, _)| *s >= thr);
        }
    }

    fn into_groups(mut self) -> Vec<(usize, usize)> {
        self.prune();
        self.kept.sort_by(|a, b| b.0.cmp(&a.0));
        tie_groups(&self.kept)
    }
}

/// AP@K and P@K of relation `r`.
///
/// Without `candidates` all `|E|^2` pairs are scored, which must fit in
/// `budget`; with them only `heads x tails` are scored and test pairs outside
/// the candidate sets count as never retrieved.
pub fn pair_rank(
    p: &ModelParams,
    g: &KnowledgeGraph,
    r: RelationId,
    k: usize,
    candidates: Option<&PairCandidates>,
    budget: u128,
) -> Result<PairRankResult> {
    if k == 0 {
        return Err(KgError::Invalid("k must be at least 1".into()));
    }
    let test_pairs: HashSet<(EntityId, EntityId)> = g
        .split_triples(Split::Test)
        .filter(|t| t.relation == r)
        .map(|t| (t.head, t.tail))
        .collect();
    if test_pairs.is_empty() {
        return Err(KgError::Invalid(format!(
            "relation `{}` has no test triples",
            g.relation_name(r)
        )));
    }
    let needed = (g.num_entities() as u128).pow(2);
    if candidates.is_none() && needed > budget {
        return Err(KgError::PairBudget {
            relation: g.relation_name(r).to_owned(),
            needed,
            budget,
        });
    }

    let all: Vec<EntityId>;
    let (heads, tails): (&[EntityId], &[EntityId]) = match candidates {
        Some(c) => (&c.heads, &c.tails),
        None => {
            all = (0..g.num_entities()).map(EntityId::from_index).collect();
            (&all, &all)
        }
    };
    let restrict_tails = candidates.is_some();

    let mut top = TopK::new(k);
    let mut scores = Vec::with_capacity(g.num_entities());
    for &h in heads {
        p.score_tails_into(h, r, &mut scores);
        let known = g.tails_of(h, r);
        let mut visit = |t: EntityId| {
            let is_test = test_pairs.contains(&(h, t));
            if !is_test && known.binary_search(&t).is_ok() {
                return;
            }
            top.push(scores[t.index()], is_test);
        };
        if restrict_tails {
            tails.iter().copied().for_each(&mut visit);
        } else {
            (0..scores.len()).map(EntityId::from_index).for_each(&mut visit);
        }
    }
    let groups = top.into_groups();
    let (ap_at_k, p_at_k) = expected_ap_p(&groups, k, test_pairs.len());
    Ok(PairRankResult {
        relation: r,
        ap_at_k,
        p_at_k,
        num_test_pairs: test_pairs.len(),
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRankMacro {
    pub k: usize,
    pub map_at_k: f64,
    pub p_at_k: f64,
    pub per_relation: Vec<PairRankResult>,
}

/// Means of AP@K and P@K over every relation with test triples, in relation
/// id order.
pub fn pair_rank_macro(
    p: &ModelParams,
    g: &KnowledgeGraph,
    k: usize,
    mode: CandidateMode,
    budget: u128,
) -> Result<PairRankMacro> {
    let test: Vec<Triple> = g.split_triples(Split::Test).collect();
    if test.is_empty() {
        return Err(KgError::Empty("test split"));
    }
    check_model_graph(p, g, &test)?;
    let mut relations: Vec<RelationId> = test.iter().map(|t| t.relation).collect();
    relations.sort();
    relations.dedup();
    let per_relation: Vec<PairRankResult> = relations
        .par_iter()
        .map(|&r| {
            let cands = match mode {
                CandidateMode::All => None,
                CandidateMode::TypeCompatible => Some(type_compatible_candidates(g, r)),
            };
            pair_rank(p, g, r, k, cands.as_ref(), budget)
        })
        .collect::<Result<_>>()?;
    let n = per_relation.len() as f64;
    Ok(PairRankMacro {
        k,
        map_at_k: per_relation.iter().map(|x| x.ap_at_k).sum::<f64>() / n,
        p_at_k: per_relation.iter().map(|x| x.p_at_k).sum::<f64>() / n,
        per_relation,
    })
}

/// Writes `relation ap@k p@k n_test` rows.
pub fn write_pair_ranks(path: &Path, g: &KnowledgeGraph, m: &PairRankMacro) -> Result<()> {
    crate::io::write_rows(
        path,
        Some(&format!("relation\tap@{0}\tp@{0}\tn_test", m.k)),
        m.per_relation.iter().map(|x| {
            format!(
                "{}\t{:.6}\t{:.6}\t{}",
                g.relation_name(x.relation),
                x.ap_at_k,
                x.p_at_k,
                x.num_test_pairs
            )
        }),
    )
}
