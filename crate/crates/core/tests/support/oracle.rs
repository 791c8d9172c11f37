//! Slow, obviously correct reference implementations. Everything here works
//! on names and full enumerations and shares no code with the library beyond
//! the graph accessors.

use std::collections::{BTreeSet, HashSet};

use kgeval::property::Aggregation;
use kgeval::triple_class::NegativeKind;
use kgeval::{EntityId, Family, KnowledgeGraph, ModelParams, RelationId, Split, Triple};

type Named = (String, String, String);

fn named(g: &KnowledgeGraph, t: Triple) -> Named {
    (
        g.entity_name(t.head).to_owned(),
        g.relation_name(t.relation).to_owned(),
        g.entity_name(t.tail).to_owned(),
    )
}

pub fn triple_set(g: &KnowledgeGraph) -> HashSet<Named> {
    g.triples().iter().map(|&t| named(g, t)).collect()
}

fn ent(i: usize) -> EntityId {
    EntityId::from_index(i)
}

fn rel(i: usize) -> RelationId {
    RelationId::from_index(i)
}

/// The score written out coordinate by coordinate.
pub fn score(p: &ModelParams, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    let d = p.dim;
    let hv: Vec<f64> = p.entity[h.index() * d..(h.index() + 1) * d].iter().map(|&x| x as f64).collect();
    let tv: Vec<f64> = p.entity[t.index() * d..(t.index() + 1) * d].iter().map(|&x| x as f64).collect();
    let rw = p.relation_width();
    let rv: Vec<f64> = p.relation[r.index() * rw..(r.index() + 1) * rw].iter().map(|&x| x as f64).collect();
    let gamma = p.gamma as f64;
    let half = d / 2;
    match p.family {
        Family::TransE => gamma - (0..d).map(|k| (hv[k] + rv[k] - tv[k]).abs()).sum::<f64>(),
        Family::DistMult => (0..d).map(|k| hv[k] * rv[k] * tv[k]).sum(),
        Family::ComplEx => (0..half)
            .map(|k| {
                let (a, b) = (hv[k], hv[k + half]);
                let (c, e) = (rv[k], rv[k + half]);
                let (x, y) = (tv[k], tv[k + half]);
                // Re((a + ib)(c + ie)(x - iy))
                (a * c - b * e) * x + (a * e + b * c) * y
            })
            .sum(),
        Family::RotatE => {
            gamma
                - (0..half)
                    .map(|k| {
                        let (a, b) = (hv[k], hv[k + half]);
                        let (c, s) = (rv[k].cos(), rv[k].sin());
                        let re = a * c - b * s - tv[k];
                        let im = a * s + b * c - tv[k + half];
                        (re * re + im * im).sqrt()
                    })
                    .sum::<f64>()
        }
    }
}

/// Sorts `(id, score)` best first and returns the mean 1-based position of
/// the entries tied with `target`.
pub fn tie_rank(mut scored: Vec<(usize, f64)>, target: usize) -> f64 {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let st = scored.iter().find(|c| c.0 == target).expect("target is a candidate").1;
    let positions: Vec<usize> = scored
        .iter()
        .enumerate()
        .filter(|(_, c)| c.1 == st)
        .map(|(i, _)| i + 1)
        .collect();
    positions.iter().sum::<usize>() as f64 / positions.len() as f64
}

/// `[head_raw, head_filtered, tail_raw, tail_filtered]` for every test triple
/// of `g`, in test-split order, filtering by the triples of `filter`.
pub fn link_ranks(p: &ModelParams, g: &KnowledgeGraph, filter: &KnowledgeGraph) -> Vec<(Triple, [f64; 4])> {
    let known = triple_set(filter);
    let n = g.num_entities();
    g.split_triples(Split::Test)
        .map(|t| {
            let heads: Vec<(usize, f64)> = (0..n).map(|e| (e, score(p, ent(e), t.relation, t.tail))).collect();
            let tails: Vec<(usize, f64)> = (0..n).map(|e| (e, score(p, t.head, t.relation, ent(e)))).collect();
            let keep_head = |c: &(usize, f64)| {
                c.0 == t.head.index() || !known.contains(&named(g, Triple::new(ent(c.0), t.relation, t.tail)))
            };
            let keep_tail = |c: &(usize, f64)| {
                c.0 == t.tail.index() || !known.contains(&named(g, Triple::new(t.head, t.relation, ent(c.0))))
            };
            let ranks = [
                tie_rank(heads.clone(), t.head.index()),
                tie_rank(heads.iter().copied().filter(keep_head).collect(), t.head.index()),
                tie_rank(tails.clone(), t.tail.index()),
                tie_rank(tails.iter().copied().filter(keep_tail).collect(), t.tail.index()),
            ];
            (t, ranks)
        })
        .collect()
}

/// Every `k`-subset of `0..n`, in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(from: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in from..n {
            cur.push(i);
            extend(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Expected `(AP@K, P@K)` of relation `r` over uniformly random orders of
/// tied pairs.
///
/// All `|E|^2` pairs are scored and sorted. Within a tie group every
/// placement of its relevant pairs is equally likely, and a group's
/// contribution to AP depends only on its own placement and the number of
/// relevant pairs above it, so the expectation is a sum over groups of the
/// mean over all placements.
pub fn pair_rank(p: &ModelParams, g: &KnowledgeGraph, r: RelationId, k: usize) -> (f64, f64) {
    let test: HashSet<(EntityId, EntityId)> = g
        .split_triples(Split::Test)
        .filter(|t| t.relation == r)
        .map(|t| (t.head, t.tail))
        .collect();
    let n = g.num_entities();
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for h in 0..n {
        for t in 0..n {
            let relevant = test.contains(&(ent(h), ent(t)));
            if !relevant && g.contains(ent(h), r, ent(t)) {
                continue;
            }
            pairs.push((score(p, ent(h), r, ent(t)), relevant));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let np = k.min(test.len()) as f64;
    let (mut ap, mut hits) = (0.0, 0.0);
    let (mut start, mut above) = (0usize, 0usize);
    while start < pairs.len() {
        let end = start + pairs[start..].iter().take_while(|x| x.0 == pairs[start].0).count();
        let size = end - start;
        let m = pairs[start..end].iter().filter(|x| x.1).count();
        let placements = subsets(size, m);
        let (mut group_ap, mut group_hits) = (0.0, 0.0);
        for slots in &placements {
            for (seen, &j) in slots.iter().enumerate() {
                let pos = start + j + 1;
                if pos <= k {
                    group_ap += (above + seen + 1) as f64 / pos as f64;
                    group_hits += 1.0;
                }
            }
        }
        let count = placements.len() as f64;
        ap += group_ap / count;
        hits += group_hits / count;
        above += m;
        start = end;
    }
    (ap / np, hits / k as f64)
}

/// Distinct `(h, r)` of test triples with no train triple `(h, r, .)`.
pub fn property_cases(g: &KnowledgeGraph) -> Vec<(EntityId, RelationId)> {
    let train: HashSet<(EntityId, RelationId)> = g.split_triples(Split::Train).map(|t| (t.head, t.relation)).collect();
    let cases: BTreeSet<(EntityId, RelationId)> = g
        .split_triples(Split::Test)
        .map(|t| (t.head, t.relation))
        .filter(|c| !train.contains(c))
        .collect();
    cases.into_iter().collect()
}

/// `(case, rank, filtered rank)`; the filtered rank drops the other
/// relations `h` already has in train.
pub fn property_ranks(p: &ModelParams, g: &KnowledgeGraph, agg: Aggregation) -> Vec<((EntityId, RelationId), f64, f64)> {
    let train: HashSet<(EntityId, RelationId)> = g.split_triples(Split::Train).map(|t| (t.head, t.relation)).collect();
    property_cases(g)
        .into_iter()
        .map(|(h, r)| {
            let scored: Vec<(usize, f64)> = (0..g.num_relations())
                .map(|q| {
                    let per_tail: Vec<f64> = (0..g.num_entities()).map(|t| score(p, h, rel(q), ent(t))).collect();
                    let s = match agg {
                        Aggregation::Max => per_tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        Aggregation::Mean => per_tail.iter().sum::<f64>() / per_tail.len() as f64,
                    };
                    (q, s)
                })
                .collect();
            let filtered: Vec<(usize, f64)> = scored
                .iter()
                .copied()
                .filter(|&(q, _)| q == r.index() || !train.contains(&(h, rel(q))))
                .collect();
            ((h, r), tie_rank(scored, r.index()), tie_rank(filtered, r.index()))
        })
        .collect()
}

fn type_set(g: &KnowledgeGraph, e: EntityId) -> BTreeSet<String> {
    g.type_names(e).map(str::to_owned).collect()
}

/// The type predicate, on type names.
pub fn type_ok(g: &KnowledgeGraph, kind: NegativeKind, original: EntityId, candidate: EntityId) -> bool {
    let (a, b) = (type_set(g, original), type_set(g, candidate));
    match kind {
        NegativeKind::ConsistentHead | NegativeKind::ConsistentTail => !a.is_disjoint(&b),
        NegativeKind::InconsistentHead | NegativeKind::InconsistentTail => {
            !a.is_empty() && !b.is_empty() && a.is_disjoint(&b)
        }
        NegativeKind::RandomHead | NegativeKind::RandomTail => true,
    }
}

/// For each positive, the best-scoring corruption (ties to the lower entity
/// id) that passes the type predicate and is absent from the dataset.
pub fn negatives(p: &ModelParams, g: &KnowledgeGraph, kind: NegativeKind, positives: &[Triple]) -> Vec<(Triple, Triple)> {
    let known = triple_set(g);
    let head = kind.corrupts_head();
    positives
        .iter()
        .filter_map(|&t| {
            let original = if head { t.head } else { t.tail };
            let mut candidates: Vec<(usize, f64, Triple)> = (0..g.num_entities())
                .map(|e| {
                    let c = if head {
                        Triple::new(ent(e), t.relation, t.tail)
                    } else {
                        Triple::new(t.head, t.relation, ent(e))
                    };
                    (e, score(p, c.head, c.relation, c.tail), c)
                })
                .collect();
            candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            candidates
                .into_iter()
                .find(|&(e, _, c)| e != original.index() && type_ok(g, kind, original, ent(e)) && !known.contains(&named(g, c)))
                .map(|(_, _, c)| (t, c))
        })
        .collect()
}

/// Accuracy of `score > threshold` with the threshold `value`.
pub fn accuracy_at(examples: &[(f64, bool)], threshold: f64) -> f64 {
    let correct = examples.iter().filter(|&&(s, y)| (s > threshold) == y).count();
    correct as f64 / examples.len() as f64
}

/// Best accuracy over every distinct way to cut the sorted scores: predict
/// all positive, or positive exactly above each observed score.
pub fn best_accuracy(examples: &[(f64, bool)]) -> f64 {
    let mut cuts = vec![f64::NEG_INFINITY];
    cuts.extend(examples.iter().map(|e| e.0));
    cuts.iter().map(|&c| accuracy_at(examples, c)).fold(0.0, f64::max)
}
