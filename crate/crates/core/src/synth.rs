//! Seeded synthetic graphs.
//!
//! [`freebase_like`] builds a typed graph with Freebase-style relation names
//! (`/domain/type/property`) and mediator nodes joining 2 to 4 entities. Each
//! entity has a latent cluster and every relation maps clusters by a fixed
//! shift, so the graph has structure an embedding model can pick up.
//! [`random_graph`] builds small unstructured graphs for exhaustive checks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{ClosurePolicy, GraphBuilder, KnowledgeGraph, Split};

/// The twelve most frequent subject-matter domains of Freebase.
pub const FREEBASE_DOMAINS: [&str; 12] = [
    "music",
    "film",
    "people",
    "tv",
    "book",
    "measurement_unit",
    "location",
    "award",
    "biology",
    "organization",
    "education",
    "sports",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub domains: Vec<String>,
    /// Entities of each of the two entity types of a domain.
    pub entities_per_type: usize,
    pub clusters: usize,
    pub relations_per_domain: usize,
    pub triples_per_relation: usize,
    pub mediators_per_domain: usize,
    /// Inclusive range of mediator degrees.
    pub mediator_degree: (usize, usize),
    pub seed: u64,
}

impl SynthSpec {
    /// About 3,000 triples after binarization, one percent of FB15k-237.
    pub fn standin(seed: u64) -> Self {
        SynthSpec {
            domains: FREEBASE_DOMAINS.iter().map(|d| d.to_string()).collect(),
            entities_per_type: 20,
            clusters: 4,
            relations_per_domain: 4,
            triples_per_relation: 75,
            mediators_per_domain: 10,
            mediator_degree: (2, 4),
            seed,
        }
    }
}

/// A typed graph with mediators; every triple is in train.
pub fn freebase_like(spec: &SynthSpec) -> Result<KnowledgeGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = GraphBuilder::new();
    let c = spec.clusters.max(1);
    let per = spec.entities_per_type.max(c);
    let name = |d: &str, kind: &str, i: usize| format!("/m/{d}.{kind}{i}");
    let by_cluster = |cluster: usize| (0..per).filter(move |i| i % c == cluster);

    for d in &spec.domains {
        for kind in ["subject", "object"] {
            for i in 0..per {
                let e = name(d, kind, i);
                b.declare_entity(&e);
                b.add_type(&e, &format!("/{d}/{kind}"));
            }
        }
        for j in 0..spec.relations_per_domain {
            let rel = format!("/{d}/subject/property_{j}");
            let shift = rng.random_range(1..c.max(2));
            for _ in 0..spec.triples_per_relation {
                let s = rng.random_range(0..per);
                let target = (s % c + shift) % c;
                let objs: Vec<usize> = by_cluster(target).collect();
                let o = *objs.choose(&mut rng).unwrap();
                b.add(&name(d, "subject", s), &rel, &name(d, "object", o), Split::Train);
            }
        }
        for m in 0..spec.mediators_per_domain {
            let cvt = format!("/m/{d}.event{m}");
            let degree = rng.random_range(spec.mediator_degree.0..=spec.mediator_degree.1.max(spec.mediator_degree.0));
            let cluster = rng.random_range(0..c);
            for k in 0..degree {
                let kind = if k % 2 == 0 { "subject" } else { "object" };
                let pool: Vec<usize> = by_cluster((cluster + k) % c).collect();
                let e = *pool.choose(&mut rng).unwrap();
                b.add(&cvt, &format!("/{d}/event/role_{k}"), &name(d, kind, e), Split::Train);
            }
            b.add_mediator(&cvt);
            b.add_type(&cvt, &format!("/{d}/event"));
        }
    }
    b.build(ClosurePolicy::Reject)
}

/// Random triples over `entities` and `relations`, about 70/15/15 across
/// splits. Evaluation triples with symbols missing from train are dropped.
/// With `types > 0` every entity gets one or two of `types` types.
pub fn random_graph(entities: usize, relations: usize, triples: usize, types: usize, seed: u64) -> Result<KnowledgeGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    for e in 0..entities {
        b.declare_entity(&format!("e{e}"));
    }
    for r in 0..relations {
        b.declare_relation(&format!("r{r}"));
    }
    let mut seen = std::collections::HashSet::new();
    for _ in 0..triples {
        let h = rng.random_range(0..entities);
        let r = rng.random_range(0..relations);
        let t = rng.random_range(0..entities);
        if !seen.insert((h, r, t)) {
            continue;
        }
        let split = match rng.random_range(0..20) {
            0..=13 => Split::Train,
            14..=16 => Split::Valid,
            _ => Split::Test,
        };
        b.add(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"), split);
    }
    if types > 0 {
        for e in 0..entities {
            let n = rng.random_range(1..=2);
            for _ in 0..n {
                let ty = rng.random_range(0..types);
                b.add_type(&format!("e{e}"), &format!("type{ty}"));
            }
        }
    }
    b.build(ClosurePolicy::Drop)
}
