//! Link prediction: raw and filtered ranks of test triples and their
//! aggregations.
//!
//! Each test triple `(h, r, t)` is ranked twice: `h` among all `(e, r, t)`
//! and `t` among all `(h, r, e)`. The filtered rank ignores candidates whose
//! triple is present in the filter graph, apart from the test triple itself.
//! Ties take the average position.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Split, Triple};
use crate::metrics::{average_rank, MetricBundle};
use crate::model::ModelParams;
use crate::transform::{RelationCategory, RelationMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub head_raw: f64,
    pub head_filtered: f64,
    pub tail_raw: f64,
    pub tail_filtered: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSetting {
    Raw,
    #[default]
    Filtered,
}

impl RankRecord {
    pub fn head(&self, s: RankSetting) -> f64 {
        match s {
            RankSetting::Raw => self.head_raw,
            RankSetting::Filtered => self.head_filtered,
        }
    }

    pub fn tail(&self, s: RankSetting) -> f64 {
        match s {
            RankSetting::Raw => self.tail_raw,
            RankSetting::Filtered => self.tail_filtered,
        }
    }
}

/// Translates ids of the evaluated graph into a filter graph that may have
/// its own vocabulary, matching symbols by name.
struct FilterView<'a> {
    filter: &'a KnowledgeGraph,
    /// `None` when both graphs share vocabularies.
    maps: Option<IdMaps>,
}

struct IdMaps {
    ent_to: Vec<Option<EntityId>>,
    ent_from: Vec<Option<EntityId>>,
    rel_to: Vec<Option<RelationId>>,
}

impl<'a> FilterView<'a> {
    fn new(g: &KnowledgeGraph, filter: &'a KnowledgeGraph) -> Self {
        let same = g.entities().fingerprint() == filter.entities().fingerprint()
            && g.relations().fingerprint() == filter.relations().fingerprint();
        let maps = (!same).then(|| IdMaps {
            ent_to: g.entities().iter().map(|n| filter.entity_id(n)).collect(),
            ent_from: filter.entities().iter().map(|n| g.entity_id(n)).collect(),
            rel_to: g.relations().iter().map(|n| filter.relation_id(n)).collect(),
        });
        FilterView { filter, maps }
    }

    fn contains(&self, t: Triple) -> bool {
        match &self.maps {
            None => self.filter.contains(t.head, t.relation, t.tail),
            Some(m) => match (m.ent_to[t.head.index()], m.rel_to[t.relation.index()], m.ent_to[t.tail.index()]) {
                (Some(h), Some(r), Some(t)) => self.filter.contains(h, r, t),
                _ => false,
            },
        }
    }

    /// Known tails of `(h, r)` in the filter graph, as ids of the evaluated graph.
    fn tails(&self, h: EntityId, r: RelationId, out: &mut Vec<usize>) {
        out.clear();
        match &self.maps {
            None => out.extend(self.filter.tails_of(h, r).iter().map(|e| e.index())),
            Some(m) => {
                if let (Some(fh), Some(fr)) = (m.ent_to[h.index()], m.rel_to[r.index()]) {
                    out.extend(self.filter.tails_of(fh, fr).iter().filter_map(|e| m.ent_from[e.index()]).map(|e| e.index()));
                }
            }
        }
    }

    fn heads(&self, r: RelationId, t: EntityId, out: &mut Vec<usize>) {
        out.clear();
        match &self.maps {
            None => out.extend(self.filter.heads_of(r, t).iter().map(|e| e.index())),
            Some(m) => {
                if let (Some(fr), Some(ft)) = (m.rel_to[r.index()], m.ent_to[t.index()]) {
                    out.extend(self.filter.heads_of(fr, ft).iter().filter_map(|e| m.ent_from[e.index()]).map(|e| e.index()));
                }
            }
        }
    }
}

/// `(raw, filtered)` rank of `target` given all candidate scores and the
/// candidates to filter out. `known` must not repeat entries.
pub(crate) fn rank_with_filter(scores: &[f64], target: usize, known: &[usize]) -> (f64, f64) {
    let st = scores[target];
    let (mut better, mut equal) = (0usize, 0usize);
    for &s in scores {
        if s > st {
            better += 1;
        } else if s == st {
            equal += 1;
        }
    }
    equal -= 1;
    let (mut fb, mut fe) = (0usize, 0usize);
    for &k in known {
        if k == target {
            continue;
        }
        if scores[k] > st {
            fb += 1;
        } else if scores[k] == st {
            fe += 1;
        }
    }
    (average_rank(better, equal), average_rank(better - fb, equal - fe))
}

pub(crate) fn check_model_graph(p: &ModelParams, g: &KnowledgeGraph, triples: &[Triple]) -> Result<()> {
    for &t in triples {
        p.check_covers(g, t)?;
    }
    if p.num_entities != g.num_entities() || p.num_relations != g.num_relations() {
        return Err(KgError::Invalid(format!(
            "model has {} entities and {} relations, graph has {} and {}",
            p.num_entities,
            p.num_relations,
            g.num_entities(),
            g.num_relations()
        )));
    }
    if !p.is_finite() {
        return Err(KgError::Invalid("model parameters contain non-finite values".into()));
    }
    Ok(())
}

/// Ranks every test triple of `g`, filtering with `filter`.
///
/// `filter` is usually `g` itself; a superset graph gives the closed-world
/// comparison. Records follow the order of the test split.
pub fn rank_all(p: &ModelParams, g: &KnowledgeGraph, filter: &KnowledgeGraph) -> Result<Vec<RankRecord>> {
    let test: Vec<Triple> = g.split_triples(Split::Test).collect();
    rank_triples(p, g, filter, &test)
}

pub fn rank_triples(
    p: &ModelParams,
    g: &KnowledgeGraph,
    filter: &KnowledgeGraph,
    triples: &[Triple],
) -> Result<Vec<RankRecord>> {
    check_model_graph(p, g, triples)?;
    let view = FilterView::new(g, filter);
    let missing = g.triples().iter().filter(|t| !view.contains(**t)).count();
    if missing > 0 {
        return Err(KgError::Invalid(format!(
            "filter graph lacks {missing} triple(s) of the evaluated graph"
        )));
    }
    Ok(triples
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(scores, known), &t| {
                p.score_heads_into(t.relation, t.tail, scores);
                view.heads(t.relation, t.tail, known);
                let (head_raw, head_filtered) = rank_with_filter(scores, t.head.index(), known);
                p.score_tails_into(t.head, t.relation, scores);
                view.tails(t.head, t.relation, known);
                let (tail_raw, tail_filtered) = rank_with_filter(scores, t.tail.index(), known);
                RankRecord {
                    triple: t,
                    head_raw,
                    head_filtered,
                    tail_raw,
                    tail_filtered,
                }
            },
        )
        .collect())
}

fn both_directions(records: &[RankRecord], s: RankSetting) -> impl Iterator<Item = f64> + '_ {
    records.iter().flat_map(move |r| [r.head(s), r.tail(s)])
}

/// Pooled over both directions: `2 |T|` ranks.
pub fn micro_metrics(records: &[RankRecord], s: RankSetting) -> Result<MetricBundle> {
    MetricBundle::from_ranks(both_directions(records, s))
}

fn group_bundles<K: Ord>(
    records: &[RankRecord],
    s: RankSetting,
    mut key: impl FnMut(&RankRecord) -> Result<K>,
) -> Result<BTreeMap<K, MetricBundle>> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)?).or_default().extend([r.head(s), r.tail(s)]);
    }
    groups
        .into_iter()
        .map(|(k, ranks)| Ok((k, MetricBundle::from_ranks(ranks)?)))
        .collect()
}

/// Unweighted mean of per-relation bundles over the relations in `records`.
pub fn macro_by_relation(records: &[RankRecord], s: RankSetting) -> Result<MetricBundle> {
    let groups = group_bundles(records, s, |r| Ok(r.triple.relation))?;
    MetricBundle::mean(groups.values())
}

pub fn per_relation(records: &[RankRecord], s: RankSetting) -> Result<BTreeMap<RelationId, MetricBundle>> {
    group_bundles(records, s, |r| Ok(r.triple.relation))
}

fn meta_index<'m>(g: &KnowledgeGraph, meta: &'m [RelationMeta]) -> Vec<Option<&'m RelationMeta>> {
    let mut idx = vec![None; g.num_relations()];
    for m in meta {
        if let Some(slot) = idx.get_mut(m.relation.index()) {
            *slot = Some(m);
        }
    }
    idx
}

fn lookup<'m>(
    g: &KnowledgeGraph,
    idx: &[Option<&'m RelationMeta>],
    r: RelationId,
) -> Result<&'m RelationMeta> {
    idx.get(r.index())
        .copied()
        .flatten()
        .ok_or_else(|| KgError::Invalid(format!("relation `{}` has no metadata", g.relation_name(r))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBreakdown {
    pub per_domain: BTreeMap<String, MetricBundle>,
    /// Unweighted mean over domains.
    pub macro_avg: MetricBundle,
}

pub fn macro_by_domain(
    g: &KnowledgeGraph,
    records: &[RankRecord],
    meta: &[RelationMeta],
    s: RankSetting,
) -> Result<DomainBreakdown> {
    let idx = meta_index(g, meta);
    let per_domain = group_bundles(records, s, |r| Ok(lookup(g, &idx, r.triple.relation)?.domain.clone()))?;
    let macro_avg = MetricBundle::mean(per_domain.values())?;
    Ok(DomainBreakdown { per_domain, macro_avg })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionSplit {
    /// `(?, r, t)`: head ranks only.
    pub left: MetricBundle,
    /// `(h, r, ?)`: tail ranks only.
    pub right: MetricBundle,
}

pub fn direction_split(records: &[RankRecord], s: RankSetting) -> Result<DirectionSplit> {
    Ok(DirectionSplit {
        left: MetricBundle::from_ranks(records.iter().map(|r| r.head(s)))?,
        right: MetricBundle::from_ranks(records.iter().map(|r| r.tail(s)))?,
    })
}

/// Bundles keyed by `binary`, `nary`, `concatenated` (those present) and `all`.
pub fn category_split(
    g: &KnowledgeGraph,
    records: &[RankRecord],
    meta: &[RelationMeta],
    s: RankSetting,
) -> Result<BTreeMap<String, MetricBundle>> {
    let idx = meta_index(g, meta);
    let by_cat: BTreeMap<RelationCategory, MetricBundle> =
        group_bundles(records, s, |r| Ok(lookup(g, &idx, r.triple.relation)?.category))?;
    let mut out: BTreeMap<String, MetricBundle> =
        by_cat.into_iter().map(|(c, b)| (c.name().to_owned(), b)).collect();
    out.insert("all".to_owned(), micro_metrics(records, s)?);
    Ok(out)
}

/// Filtered micro metrics under a subset filter and a full filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedWorld {
    pub subset: MetricBundle,
    pub full: MetricBundle,
    /// `(full.mrr - subset.mrr) / subset.mrr * 100`
    pub pct_improvement: f64,
}

pub fn closed_world(subset_records: &[RankRecord], full_records: &[RankRecord]) -> Result<ClosedWorld> {
    if subset_records.len() != full_records.len()
        || subset_records.iter().zip(full_records).any(|(a, b)| a.triple != b.triple)
    {
        return Err(KgError::Invalid("closed-world comparison needs records of the same test triples".into()));
    }
    let subset = micro_metrics(subset_records, RankSetting::Filtered)?;
    let full = micro_metrics(full_records, RankSetting::Filtered)?;
    Ok(ClosedWorld {
        subset,
        full,
        pct_improvement: (full.mrr - subset.mrr) / subset.mrr * 100.0,
    })
}

/// Writes `h r t rank_h_raw rank_h_filt rank_t_raw rank_t_filt` rows.
pub fn write_ranks(path: &Path, g: &KnowledgeGraph, records: &[RankRecord]) -> Result<()> {
    crate::io::write_rows(
        path,
        Some("h\tr\tt\trank_h_raw\trank_h_filt\trank_t_raw\trank_t_filt"),
        records.iter().map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                g.entity_name(r.triple.head),
                g.relation_name(r.triple.relation),
                g.entity_name(r.triple.tail),
                r.head_raw,
                r.head_filtered,
                r.tail_raw,
                r.tail_filtered
            )
        }),
    )
}
