//! Dataset construction: mediator binarization, random subsets, transductive
//! splits and relation labeling.
//!
//! `binarize_cvt` and `sample_subset` return unsplit graphs (every triple
//! tagged train); run [`split`] on their output to obtain evaluation splits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};
use crate::graph::{ClosurePolicy, EntityId, KnowledgeGraph, RelationId, Split, Triple};

/// Separator placed between the two relation names of a concatenated relation.
pub const DEFAULT_SEPARATOR: &str = "-/";

/// Prefix marking an edge traversed against its stored direction.
pub const REVERSE_MARK: char = '!';

// Guards floor(f * n) against products such as 0.29 * 100 = 28.999999999999996.
const FLOOR_EPS: f64 = 1e-9;

fn floor_fraction(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + FLOOR_EPS).floor() as usize
}

fn reverse_label(label: &str) -> String {
    match label.strip_prefix(REVERSE_MARK) {
        Some(rest) => rest.to_owned(),
        None => format!("{REVERSE_MARK}{label}"),
    }
}

/// `first + separator + second`, collapsing the doubled `/` that appears when
/// the separator ends with `/` and the second name starts with one.
fn join_relations(first: &str, separator: &str, second: &str) -> String {
    let second = if separator.ends_with('/') {
        second.strip_prefix('/').unwrap_or(second)
    } else {
        second
    };
    format!("{first}{separator}{second}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizeReport {
    pub mediators: usize,
    pub removed_triples: usize,
    pub emitted_triples: usize,
    pub duplicate_emissions: usize,
    /// mediator degree -> number of mediators with that degree
    pub degree_histogram: BTreeMap<usize, usize>,
}

/// Replaces every mediator node by binary triples between each pair of its
/// neighbors.
///
/// Each incident edge is labeled as read from the mediator outward: an edge
/// `(c, r, e)` reads `r`, an edge `(e, r, c)` reads `!r`. For the edges of a
/// mediator sorted by `(neighbor id, label)`, every pair `i < j` yields
/// `(e_i, reverse(label_i) + separator + label_j, e_j)`, where `reverse`
/// toggles the `!` mark. A mediator of degree n therefore emits n(n-1)/2
/// triples before deduplication.
pub fn binarize_cvt(g: &KnowledgeGraph, separator: &str) -> Result<(KnowledgeGraph, BinarizeReport)> {
    let mut incident: BTreeMap<EntityId, Vec<(EntityId, String)>> = BTreeMap::new();
    let mut kept = Vec::new();
    let mut report = BinarizeReport::default();

    for &t in g.triples() {
        let (hm, tm) = (g.is_mediator(t.head), g.is_mediator(t.tail));
        match (hm, tm) {
            (false, false) => kept.push(t),
            (true, true) => {
                return Err(KgError::ChainedMediator(g.entity_name(t.head).to_owned()));
            }
            (true, false) => {
                report.removed_triples += 1;
                incident
                    .entry(t.head)
                    .or_default()
                    .push((t.tail, g.relation_name(t.relation).to_owned()));
            }
            (false, true) => {
                report.removed_triples += 1;
                incident.entry(t.tail).or_default().push((
                    t.head,
                    format!("{REVERSE_MARK}{}", g.relation_name(t.relation)),
                ));
            }
        }
    }
    if g.mediator_count() == 0 {
        log::warn!("binarize: graph declares no mediator entities; output equals input");
    }
    report.mediators = g.mediator_count();

    let mut b = crate::graph::GraphBuilder::new();
    for t in &kept {
        b.add(
            g.entity_name(t.head),
            g.relation_name(t.relation),
            g.entity_name(t.tail),
            Split::Train,
        );
    }
    let before = b.stats().duplicates;
    for (_, mut edges) in incident {
        edges.sort();
        *report.degree_histogram.entry(edges.len()).or_default() += 1;
        for i in 0..edges.len() {
            for j in i + 1..edges.len() {
                let (ei, li) = &edges[i];
                let (ej, lj) = &edges[j];
                let name = join_relations(&reverse_label(li), separator, lj);
                b.add(g.entity_name(*ei), &name, g.entity_name(*ej), Split::Train);
                report.emitted_triples += 1;
            }
        }
    }
    report.duplicate_emissions = b.stats().duplicates - before;
    g.copy_annotations(&mut b);
    let out = b.build(ClosurePolicy::Reject)?;
    debug_assert_eq!(out.mediator_count(), 0);
    Ok((out, report))
}

/// Uniform sample without replacement of `floor(fraction * |triples|)`
/// triples, kept in their original relative order. Vocabularies are rebuilt
/// so that symbols absent from the sample disappear.
pub fn sample_subset(g: &KnowledgeGraph, fraction: f64, seed: u64) -> Result<KnowledgeGraph> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KgError::Invalid(format!("subset fraction {fraction} not in (0, 1]")));
    }
    let n = floor_fraction(fraction, g.len());
    if n == 0 {
        return Err(KgError::Invalid(format!(
            "fraction {fraction} of {} triples selects nothing",
            g.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, g.len(), n).into_vec();
    picked.sort_unstable();
    let triples = g.triples();
    g.rebuild(picked.into_iter().map(|i| (triples[i], Split::Train)))
        .build(ClosurePolicy::Reject)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, valid_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_frac,
            valid_frac,
            test_frac,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 90/5/5 ratio.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.9,
            valid_frac: 0.05,
            test_frac: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.valid_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(KgError::Invalid(format!("split fractions {fr:?} outside [0, 1]")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(KgError::Invalid(format!("split fractions {fr:?} do not sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub achieved_train_frac: f64,
    pub achieved_valid_frac: f64,
    pub achieved_test_frac: f64,
    /// evaluation triples reassigned to train to restore closure
    pub moved_to_train: usize,
    /// train triples moved back into valid/test afterwards
    pub topped_up: usize,
}

struct TrainCounts {
    entity: Vec<u32>,
    relation: Vec<u32>,
}

impl TrainCounts {
    fn covers(&self, t: &Triple) -> bool {
        self.entity[t.head.index()] > 0
            && self.entity[t.tail.index()] > 0
            && self.relation[t.relation.index()] > 0
    }

    fn add(&mut self, t: &Triple) {
        self.entity[t.head.index()] += 1;
        self.entity[t.tail.index()] += 1;
        self.relation[t.relation.index()] += 1;
    }

    fn remove(&mut self, t: &Triple) {
        self.entity[t.head.index()] -= 1;
        self.entity[t.tail.index()] -= 1;
        self.relation[t.relation.index()] -= 1;
    }

    /// Whether `t` can leave train without orphaning one of its symbols.
    fn removable(&self, t: &Triple) -> bool {
        let need = if t.head == t.tail { 3 } else { 2 };
        self.entity[t.head.index()] >= need
            && self.entity[t.tail.index()] >= need
            && self.relation[t.relation.index()] >= 2
    }
}

/// Shuffled partition into train/valid/test with transductive repair.
///
/// Valid and test receive `floor(frac * n)` triples of a seeded shuffle.
/// Evaluation triples whose entity or relation is missing from train are
/// moved to train; valid and test are then topped up from train with triples
/// whose removal keeps every symbol present in train.
pub fn split(g: &KnowledgeGraph, spec: &SplitSpec) -> Result<(KnowledgeGraph, SplitReport)> {
    spec.validate()?;
    let n = g.len();
    let n_valid = floor_fraction(spec.valid_frac, n);
    let n_test = floor_fraction(spec.test_frac, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut tags = vec![Split::Train; n];
    for &i in &order[..n_valid] {
        tags[i] = Split::Valid;
    }
    for &i in &order[n_valid..n_valid + n_test] {
        tags[i] = Split::Test;
    }

    let triples = g.triples();
    let mut counts = TrainCounts {
        entity: vec![0; g.num_entities()],
        relation: vec![0; g.num_relations()],
    };
    for (t, s) in triples.iter().zip(&tags) {
        if *s == Split::Train {
            counts.add(t);
        }
    }

    let mut moved = 0;
    for &i in &order[..n_valid + n_test] {
        if !counts.covers(&triples[i]) {
            tags[i] = Split::Train;
            counts.add(&triples[i]);
            moved += 1;
        }
    }

    let mut topped_up = 0;
    for (target_split, target) in [(Split::Valid, n_valid), (Split::Test, n_test)] {
        let mut have = tags.iter().filter(|s| **s == target_split).count();
        if have >= target {
            continue;
        }
        for &i in order.iter().rev() {
            if have >= target {
                break;
            }
            if tags[i] == Split::Train && counts.removable(&triples[i]) {
                counts.remove(&triples[i]);
                tags[i] = target_split;
                have += 1;
                topped_up += 1;
            }
        }
    }

    let size = |s: Split| tags.iter().filter(|t| **t == s).count();
    let (train, valid, test) = (size(Split::Train), size(Split::Valid), size(Split::Test));
    if (n_valid > 0 && valid == 0) || (n_test > 0 && test == 0) {
        return Err(KgError::Invalid(format!(
            "graph of {n} triples is too small for a transductive split ({valid} valid, {test} test)"
        )));
    }

    let out = g
        .rebuild(triples.iter().copied().zip(tags.iter().copied()))
        .build(ClosurePolicy::Reject)?;
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let report = SplitReport {
        train,
        valid,
        test,
        achieved_train_frac: frac(train),
        achieved_valid_frac: frac(valid),
        achieved_test_frac: frac(test),
        moved_to_train: moved,
        topped_up,
    };
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationCategory {
    Binary,
    Nary,
    Concatenated,
}

impl RelationCategory {
    pub fn name(self) -> &'static str {
        match self {
            RelationCategory::Binary => "binary",
            RelationCategory::Nary => "nary",
            RelationCategory::Concatenated => "concatenated",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationCategory {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(RelationCategory::Binary),
            "nary" => Ok(RelationCategory::Nary),
            "concatenated" => Ok(RelationCategory::Concatenated),
            other => Err(KgError::Invalid(format!("unknown relation category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub relation: RelationId,
    pub category: RelationCategory,
    pub domain: String,
}

/// First `/`-delimited component of a relation name, ignoring reverse marks:
/// `/music/artist/genre` gives `music`. Names without a leading slash belong
/// to `unknown`.
pub fn relation_domain(name: &str) -> String {
    let name = name.trim_start_matches(REVERSE_MARK);
    name.strip_prefix('/')
        .and_then(|rest| rest.split('/').next())
        .filter(|d| !d.is_empty())
        .unwrap_or("unknown")
        .to_owned()
}

/// Labels every relation with its category and domain, in id order.
pub fn label_relations(g: &KnowledgeGraph, separator: &str) -> Vec<RelationMeta> {
    let mut touches_mediator = vec![false; g.num_relations()];
    for t in g.triples() {
        if g.is_mediator(t.head) || g.is_mediator(t.tail) {
            touches_mediator[t.relation.index()] = true;
        }
    }
    (0..g.num_relations())
        .map(|r| {
            let name = g.relations().name(r);
            let category = if touches_mediator[r] {
                RelationCategory::Nary
            } else if !separator.is_empty() && name.contains(separator) {
                RelationCategory::Concatenated
            } else {
                RelationCategory::Binary
            };
            RelationMeta {
                relation: RelationId::from_index(r),
                category,
                domain: relation_domain(name),
            }
        })
        .collect()
}

/// Writes `relation\tcategory\tdomain` rows.
pub fn write_relation_meta(path: &Path, g: &KnowledgeGraph, meta: &[RelationMeta]) -> Result<()> {
    crate::io::write_rows(
        path,
        None,
        meta.iter().map(|m| {
            format!(
                "{}\t{}\t{}",
                g.relation_name(m.relation),
                m.category,
                m.domain
            )
        }),
    )
}

/// Reads a `relation_meta.tsv`, resolving names against `g`. Rows naming
/// relations unknown to `g` are ignored.
pub fn read_relation_meta(path: &Path, g: &KnowledgeGraph) -> Result<Vec<RelationMeta>> {
    let text = std::fs::read_to_string(path).map_err(|e| KgError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(KgError::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected 3 fields, found {}", f.len()),
            });
        }
        let Some(relation) = g.relation_id(f[0]) else {
            continue;
        };
        let category = f[1].parse().map_err(|e: KgError| KgError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(RelationMeta {
            relation,
            category,
            domain: f[2].to_owned(),
        });
    }
    out.sort_by_key(|m| m.relation);
    Ok(out)
}
