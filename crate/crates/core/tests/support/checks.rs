//! Property suites over many random cases. Each returns an [`Outcome`]
//! listing every disagreement instead of stopping at the first.

use std::collections::HashSet;

use kgeval::metrics::MetricBundle;
use kgeval::model::{grad_check, save_checkpoint, train, CheckpointHeader};
use kgeval::pair_rank::{pair_rank, DEFAULT_PAIR_BUDGET};
use kgeval::property::{build_property_testset, rank_properties, Aggregation};
use kgeval::rank::{closed_world, macro_by_relation, micro_metrics, rank_all, RankRecord, RankSetting};
use kgeval::synth::{freebase_like, SynthSpec, FREEBASE_DOMAINS};
use kgeval::transform::{binarize_cvt, label_relations, relation_domain, sample_subset, DEFAULT_SEPARATOR};
use kgeval::triple_class::{best_threshold, generate_negatives, random_negatives, NegativeKind};
use kgeval::{ClosurePolicy, EntityId, GraphBuilder, KnowledgeGraph, RelationId, Split, TrainConfig, Triple};
use rand::seq::SliceRandom;
use rand::Rng;

use super::oracle;
use super::toy::{random_params, rng, toy_graph, toy_params, toy_params_continuous, FAMILIES};

#[derive(Debug, Default)]
pub struct Outcome {
    pub cases: usize,
    pub failures: Vec<String>,
    /// Coverage facts reported alongside the verdict.
    pub notes: Vec<String>,
}

impl Outcome {
    fn case(&mut self) {
        self.cases += 1;
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.case();
        if !ok {
            self.fail(msg());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    pub fn summary(&self) -> String {
        let head = match self.failures.first() {
            None => format!("{} cases", self.cases),
            Some(first) => format!("{} of {} cases failed; first: {first}", self.failures.len(), self.cases),
        };
        std::iter::once(head).chain(self.notes.iter().cloned()).collect::<Vec<_>>().join("; ")
    }

    pub fn assert_ok(&self) {
        assert!(self.cases > 0, "no cases ran");
        assert!(self.failures.is_empty(), "{}\n{}", self.summary(), self.failures.join("\n"));
    }
}

fn test_relations(g: &KnowledgeGraph) -> Vec<RelationId> {
    let set: std::collections::BTreeSet<RelationId> = g.split_triples(Split::Test).map(|t| t.relation).collect();
    set.into_iter().collect()
}

/// Link, pair, property and negative generation against their oracles on
/// `graphs` toy graphs, every family on each.
pub fn oracle_equivalence(graphs: u64) -> Outcome {
    let mut out = Outcome::default();
    for seed in 0..graphs {
        let g = toy_graph(seed);
        for (fi, family) in FAMILIES.into_iter().enumerate() {
            let tag = format!("graph {seed} {}", family.name());
            let p = toy_params(family, &g, seed * 4 + fi as u64);

            let got = rank_all(&p, &g, &g).expect("rank_all");
            let want = oracle::link_ranks(&p, &g, &g);
            let same = got.len() == want.len()
                && got.iter().zip(&want).all(|(a, (t, w))| {
                    a.triple == *t && [a.head_raw, a.head_filtered, a.tail_raw, a.tail_filtered] == *w
                });
            out.check(same, || format!("{tag}: rank_all {:?} vs oracle {:?}", got, want));

            let cases = build_property_testset(&g);
            let want_cases = oracle::property_cases(&g);
            let got_cases: Vec<(EntityId, RelationId)> = cases.iter().map(|c| (c.head, c.relation)).collect();
            out.check(got_cases == want_cases, || format!("{tag}: property cases {got_cases:?} vs {want_cases:?}"));
            if !cases.is_empty() {
                for agg in [Aggregation::Max, Aggregation::Mean] {
                    let got = rank_properties(&p, &g, &cases, agg).expect("rank_properties");
                    let want = oracle::property_ranks(&p, &g, agg);
                    let same = got.ranks.len() == want.len()
                        && got.ranks.iter().zip(&want).all(|(a, (c, r, f))| {
                            (a.case.head, a.case.relation) == *c && a.rank == *r && a.filtered_rank == *f
                        });
                    out.check(same, || format!("{tag}: property {} ranks {:?} vs {want:?}", agg.name(), got.ranks));
                }
            }

            let positives: Vec<Triple> = g.split_triples(Split::Test).collect();
            for kind in NegativeKind::TYPED {
                let suite = generate_negatives(&p, &g, kind, &positives, "toy").expect("generate_negatives");
                let got: Vec<(Triple, Triple)> = suite.pairs.iter().map(|p| (p.positive, p.negative)).collect();
                let want = oracle::negatives(&p, &g, kind, &positives);
                out.check(got == want, || format!("{tag}: {kind} negatives {got:?} vs {want:?}"));
            }

            let pc = toy_params_continuous(family, &g, seed * 4 + fi as u64);
            let mut krng = rng(seed ^ fi as u64);
            let pairs = g.num_entities() * g.num_entities();
            for r in test_relations(&g) {
                for k in [1, 3, krng.random_range(1..=pairs + 5)] {
                    let got = pair_rank(&pc, &g, r, k, None, DEFAULT_PAIR_BUDGET).expect("pair_rank");
                    let (ap, pk) = oracle::pair_rank(&pc, &g, r, k);
                    let close = (got.ap_at_k - ap).abs() <= 1e-12 && (got.p_at_k - pk).abs() <= 1e-12;
                    out.check(close, || {
                        format!("{tag}: pair_rank r{} k={k}: ({}, {}) vs oracle ({ap}, {pk})", r.index(), got.ap_at_k, got.p_at_k)
                    });
                }
            }
        }
    }
    out
}

/// `full` with some valid triples and some train triples removed. Test
/// triples are all kept and every symbol keeps a train triple. Odd seeds
/// also declare the entities in reverse so the two graphs differ in ids.
pub fn thinned(full: &KnowledgeGraph, seed: u64) -> KnowledgeGraph {
    let mut rng = rng(seed);
    let mut ent_uses = vec![0usize; full.num_entities()];
    let mut rel_uses = vec![0usize; full.num_relations()];
    for t in full.split_triples(Split::Train) {
        ent_uses[t.head.index()] += 1;
        ent_uses[t.tail.index()] += 1;
        rel_uses[t.relation.index()] += 1;
    }
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut rng);
    let mut removed = HashSet::new();
    for i in order {
        let (t, s) = (full.triples()[i], full.splits()[i]);
        if s == Split::Test || !rng.random_bool(0.4) {
            continue;
        }
        if s == Split::Train {
            let spare = if t.head == t.tail { ent_uses[t.head.index()] > 2 } else {
                ent_uses[t.head.index()] > 1 && ent_uses[t.tail.index()] > 1
            };
            if !spare || rel_uses[t.relation.index()] <= 1 {
                continue;
            }
            ent_uses[t.head.index()] -= 1;
            ent_uses[t.tail.index()] -= 1;
            rel_uses[t.relation.index()] -= 1;
        }
        removed.insert(i);
    }
    let mut b = GraphBuilder::new();
    let mut names: Vec<&str> = full.entities().iter().collect();
    if seed % 2 == 1 {
        names.reverse();
    }
    for n in names {
        b.declare_entity(n);
    }
    for (i, (&t, &s)) in full.triples().iter().zip(full.splits()).enumerate() {
        if !removed.contains(&i) {
            b.add(full.entity_name(t.head), full.relation_name(t.relation), full.entity_name(t.tail), s);
        }
    }
    for e in 0..full.num_entities() {
        let id = EntityId::from_index(e);
        for ty in full.type_names(id) {
            b.add_type(full.entity_name(id), ty);
        }
    }
    b.build(ClosurePolicy::Reject).expect("thinned graph stays transductive")
}

/// Whether some candidate filtered only by `full` scores at least as high as
/// the target, which is exactly when a filtered rank can change.
fn has_extra_filter_hit(p: &kgeval::ModelParams, sub: &KnowledgeGraph, full: &KnowledgeGraph) -> bool {
    let in_sub = oracle::triple_set(sub);
    let in_full = oracle::triple_set(full);
    let extra = |c: Triple| {
        let n = (
            sub.entity_name(c.head).to_owned(),
            sub.relation_name(c.relation).to_owned(),
            sub.entity_name(c.tail).to_owned(),
        );
        in_full.contains(&n) && !in_sub.contains(&n)
    };
    sub.split_triples(Split::Test).any(|t| {
        let target = oracle::score(p, t.head, t.relation, t.tail);
        (0..sub.num_entities()).map(EntityId::from_index).any(|e| {
            let head = Triple::new(e, t.relation, t.tail);
            let tail = Triple::new(t.head, t.relation, e);
            (e != t.head && extra(head) && oracle::score(p, e, t.relation, t.tail) >= target)
                || (e != t.tail && extra(tail) && oracle::score(p, t.head, t.relation, e) >= target)
        })
    })
}

/// Filtering with a superset never lowers filtered MRR, and leaves it equal
/// exactly when no extra filtered candidate reaches the target's score.
pub fn closed_world_direction(trials: u64) -> Outcome {
    let mut out = Outcome::default();
    let mut improved = 0;
    for trial in 0..trials {
        let full = toy_graph(10_000 + trial);
        let sub = thinned(&full, trial);
        let family = FAMILIES[trial as usize % 4];
        let p = toy_params(family, &sub, trial);
        let a = rank_all(&p, &sub, &sub).expect("subset filter");
        let b = rank_all(&p, &sub, &full).expect("full filter");
        let cw = closed_world(&a, &b).expect("closed world");
        let pointwise = a
            .iter()
            .zip(&b)
            .all(|(x, y)| y.head_filtered <= x.head_filtered && y.tail_filtered <= x.tail_filtered);
        let extra = has_extra_filter_hit(&p, &sub, &full);
        improved += extra as usize;
        let expected = if extra { cw.full.mrr > cw.subset.mrr } else { cw.full.mrr == cw.subset.mrr };
        out.check(pointwise && expected, || {
            format!(
                "trial {trial} {}: subset mrr {} full mrr {} extra hits {extra} pointwise {pointwise}",
                family.name(),
                cw.subset.mrr,
                cw.full.mrr
            )
        });
    }
    out.notes.push(format!("{improved} trials with extra filter hits, {} without", trials as usize - improved));
    out
}

fn record(relation: usize, head: f64, tail: f64) -> RankRecord {
    RankRecord {
        triple: Triple::new(EntityId::from_index(0), RelationId::from_index(relation), EntityId::from_index(1)),
        head_raw: head,
        head_filtered: head,
        tail_raw: tail,
        tail_filtered: tail,
    }
}

fn bundle_close(a: &MetricBundle, b: &MetricBundle, tol: f64) -> bool {
    [(a.mrr, b.mrr), (a.mr, b.mr), (a.hits_at_1, b.hits_at_1), (a.hits_at_3, b.hits_at_3), (a.hits_at_10, b.hits_at_10)]
        .iter()
        .all(|(x, y)| (x - y).abs() <= tol)
}

/// Hits monotone in k, hits@1 <= MRR, filtered <= raw, macro = micro under
/// uniform per-relation counts, and the two-record worked example.
pub fn metric_algebra(trials: u64) -> Outcome {
    let mut out = Outcome::default();
    for trial in 0..trials {
        let g = toy_graph(20_000 + trial);
        let family = FAMILIES[trial as usize % 4];
        let p = toy_params(family, &g, trial);
        let records = rank_all(&p, &g, &g).expect("rank_all");
        for r in &records {
            out.check(r.head_filtered <= r.head_raw && r.tail_filtered <= r.tail_raw, || {
                format!("trial {trial}: filtered rank above raw in {r:?}")
            });
        }
        for s in [RankSetting::Raw, RankSetting::Filtered] {
            let m = micro_metrics(&records, s).expect("micro");
            out.check(
                m.hits_at_1 <= m.hits_at_3 && m.hits_at_3 <= m.hits_at_10 && m.hits_at_1 <= m.mrr,
                || format!("trial {trial} {s:?}: {m:?}"),
            );
        }

        let mut rng = rng(30_000 + trial);
        let relations = rng.random_range(1..=6);
        let per = rng.random_range(1..=8);
        let mut uniform = Vec::new();
        for r in 0..relations {
            for _ in 0..per {
                let rank = |rng: &mut rand_chacha::ChaCha8Rng| 1.0 + rng.random_range(0..60) as f64 / 2.0;
                uniform.push(record(r, rank(&mut rng), rank(&mut rng)));
            }
        }
        uniform.shuffle(&mut rng);
        let micro = micro_metrics(&uniform, RankSetting::Filtered).expect("micro");
        let macro_ = macro_by_relation(&uniform, RankSetting::Filtered).expect("macro");
        out.check(bundle_close(&micro, &macro_, 1e-12), || {
            format!("trial {trial}: micro {micro:?} macro {macro_:?}")
        });
    }

    let worked = [record(0, 1.0, 2.0), record(0, 4.0, 4.0)];
    let m = micro_metrics(&worked, RankSetting::Filtered).expect("worked example");
    out.check(m.mrr == 0.5 && m.mr == 2.75, || format!("worked example gave {m:?}"));
    out
}

/// Analytic gradients against central differences, `probes` random triples
/// per family.
pub fn gradients(probes: usize) -> Outcome {
    let mut out = Outcome::default();
    for (i, family) in FAMILIES.into_iter().enumerate() {
        let p = random_params(family, 40, 6, 16, 6.0, 40 + i as u64);
        let report = grad_check(&p, probes, 7 + i as u64);
        out.notes.push(format!(
            "{} max rel error {:.1e} over {} coords ({} excluded)",
            family.name(),
            report.max_rel_error,
            report.coords_checked,
            report.coords_excluded
        ));
        out.check(
            report.probes >= probes && report.coords_checked > 0 && report.max_rel_error < 1e-4,
            || format!("{}: {report:?}", family.name()),
        );
    }
    out
}

/// Negatives respect the type predicate and are absent from the dataset, and
/// the threshold search matches an exhaustive sweep.
pub fn negative_constraints(graphs: u64, score_sets: u64) -> Outcome {
    let mut out = Outcome::default();
    for seed in 0..graphs {
        let g = toy_graph(40_000 + seed);
        let known = oracle::triple_set(&g);
        let absent = |t: Triple| {
            !known.contains(&(
                g.entity_name(t.head).to_owned(),
                g.relation_name(t.relation).to_owned(),
                g.entity_name(t.tail).to_owned(),
            ))
        };
        let p = toy_params(FAMILIES[seed as usize % 4], &g, seed);
        let positives: Vec<Triple> = g.split_triples(Split::Test).chain(g.split_triples(Split::Valid)).collect();
        let mut suites = Vec::new();
        for kind in NegativeKind::TYPED {
            suites.push(generate_negatives(&p, &g, kind, &positives, "toy").expect("generate_negatives"));
        }
        for head in [true, false] {
            suites.push(random_negatives(&g, head, &positives, seed).expect("random_negatives"));
        }
        for suite in &suites {
            for pair in &suite.pairs {
                let (pos, neg) = (pair.positive, pair.negative);
                let head = suite.kind.corrupts_head();
                let slot_ok = if head {
                    neg.relation == pos.relation && neg.tail == pos.tail && neg.head != pos.head
                } else {
                    neg.relation == pos.relation && neg.head == pos.head && neg.tail != pos.tail
                };
                let (orig, cand) = if head { (pos.head, neg.head) } else { (pos.tail, neg.tail) };
                out.check(slot_ok && absent(neg) && oracle::type_ok(&g, suite.kind, orig, cand), || {
                    format!("graph {seed} {}: {} -> {}", suite.kind, g.describe(pos), g.describe(neg))
                });
            }
        }
    }

    for set in 0..score_sets {
        let mut rng = rng(50_000 + set);
        let n = rng.random_range(1..=60);
        let quantized = set % 2 == 0;
        let examples: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if quantized { rng.random_range(-4..=4) as f64 } else { rng.random_range(-3.0..3.0) };
                (s, rng.random_bool(0.5))
            })
            .collect();
        let (thr, acc) = best_threshold(&examples).expect("non-empty");
        let best = oracle::best_accuracy(&examples);
        let realized = oracle::accuracy_at(&examples, thr);
        out.check((acc - best).abs() <= 1e-12 && (realized - acc).abs() <= 1e-12, || {
            format!("score set {set}: learned ({thr}, {acc}) realizes {realized}, sweep best {best}")
        });
    }
    out
}

/// A graph of plain triples plus `mediators` mediators. With `disjoint`, each
/// mediator gets neighbors of its own. Returns the graph and each mediator's
/// neighbor names.
pub fn mediator_graph(seed: u64, mediators: usize, disjoint: bool) -> (KnowledgeGraph, Vec<Vec<String>>) {
    let mut rng = rng(seed);
    let mut b = GraphBuilder::new();
    let shared = 8;
    for _ in 0..rng.random_range(5..20) {
        let h = format!("x{}", rng.random_range(0..shared));
        let t = format!("x{}", rng.random_range(0..shared));
        b.add(&h, &format!("/plain/rel{}", rng.random_range(0..3)), &t, Split::Train);
    }
    let mut neighbors = Vec::new();
    for m in 0..mediators {
        let cvt = format!("cvt{m}");
        let degree = rng.random_range(2..=5);
        let mut names: Vec<String> = if disjoint {
            (0..degree).map(|k| format!("m{m}n{k}")).collect()
        } else {
            (0..degree).map(|_| format!("x{}", rng.random_range(0..shared))).collect()
        };
        names.sort();
        names.dedup();
        for (k, e) in names.iter().enumerate() {
            let role = format!("/event/role{k}");
            if rng.random_bool(0.5) {
                b.add(&cvt, &role, e, Split::Train);
            } else {
                b.add(e, &role, &cvt, Split::Train);
            }
        }
        b.add_mediator(&cvt);
        neighbors.push(names);
    }
    (b.build(ClosurePolicy::Reject).expect("mediator graph"), neighbors)
}

fn is_mediator_name(name: &str) -> bool {
    name.starts_with("cvt")
}

/// Binarization emits n(n-1)/2 triples per mediator of degree n and leaves no
/// mediator behind; subsets are seed-deterministic and size-exact; the twelve
/// domain labels come back from relation names.
pub fn transform_laws(trials: u64) -> Outcome {
    let mut out = Outcome::default();
    for trial in 0..trials {
        let mediators = 1 + trial as usize % 6;
        for disjoint in [true, false] {
            let (g, neighbors) = mediator_graph(60_000 + trial, mediators, disjoint);
            let (bin, report) = binarize_cvt(&g, DEFAULT_SEPARATOR).expect("binarize");
            let expected: usize = neighbors.iter().map(|n| n.len() * (n.len() - 1) / 2).sum();
            out.check(report.emitted_triples == expected, || {
                format!("trial {trial}: emitted {} expected {expected}", report.emitted_triples)
            });
            out.check(
                bin.mediator_count() == 0 && !bin.entities().iter().any(is_mediator_name),
                || format!("trial {trial}: mediators left after binarization"),
            );
            if disjoint {
                for names in &neighbors {
                    let set: HashSet<&str> = names.iter().map(String::as_str).collect();
                    let within = bin
                        .triples()
                        .iter()
                        .filter(|t| set.contains(bin.entity_name(t.head)) && set.contains(bin.entity_name(t.tail)))
                        .count();
                    let n = names.len();
                    out.check(within == n * (n - 1) / 2, || {
                        format!("trial {trial}: mediator of degree {n} gave {within} triples")
                    });
                }
            }
        }

        let g = toy_graph(70_000 + trial);
        let fraction = [0.1, 0.25, 0.29, 0.5, 0.9, 1.0][trial as usize % 6];
        let expected = (fraction * g.len() as f64 + 1e-9).floor() as usize;
        if expected > 0 {
            let a = sample_subset(&g, fraction, trial).expect("subset");
            let b = sample_subset(&g, fraction, trial).expect("subset");
            let names = |x: &KnowledgeGraph| {
                x.triples()
                    .iter()
                    .map(|&t| x.describe(t))
                    .collect::<Vec<_>>()
            };
            let full: HashSet<String> = names(&g).into_iter().collect();
            out.check(a.len() == expected && names(&a) == names(&b) && names(&a).iter().all(|t| full.contains(t)), || {
                format!("trial {trial}: subset of {} at {fraction} gave {} triples", g.len(), a.len())
            });
        }
    }

    for d in FREEBASE_DOMAINS {
        for name in [format!("/{d}/a/b"), format!("!/{d}/a/b"), format!("!/{d}/a/b-/{d}/c/e")] {
            out.check(relation_domain(&name) == d, || format!("`{name}` gave domain `{}`", relation_domain(&name)));
        }
    }
    let spec = SynthSpec {
        entities_per_type: 8,
        triples_per_relation: 10,
        mediators_per_domain: 3,
        ..SynthSpec::standin(3)
    };
    let (bin, _) = binarize_cvt(&freebase_like(&spec).expect("synthetic graph"), DEFAULT_SEPARATOR).expect("binarize");
    let domains: std::collections::BTreeSet<String> =
        label_relations(&bin, DEFAULT_SEPARATOR).into_iter().map(|m| m.domain).collect();
    let want: std::collections::BTreeSet<String> = FREEBASE_DOMAINS.iter().map(|d| d.to_string()).collect();
    out.check(domains == want, || format!("domains {domains:?}"));
    out
}

/// A small training configuration for determinism and learning checks.
pub fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 16,
        batch_size: 32,
        neg_per_pos: 8,
        learning_rate: 0.1,
        steps: 60,
        gamma: 6.0,
        adversarial_temperature: 1.0,
        regularization_coeff: 0.0,
        seed,
    }
}

/// Two deterministic trainings per family give bit-identical checkpoints.
pub fn checkpoint_determinism(dir: &std::path::Path) -> Outcome {
    let mut out = Outcome::default();
    let g = kgeval::synth::random_graph(40, 4, 300, 3, 9).expect("graph");
    for family in FAMILIES {
        let cfg = small_config(11);
        let mut files = Vec::new();
        for run in 0..2 {
            let params = train(&g, &cfg, family).expect("train").params;
            let path = dir.join(format!("{}-{run}.ckpt", family.name()));
            save_checkpoint(&path, &params, &CheckpointHeader::new(&params, &g, &cfg)).expect("save");
            files.push(std::fs::read(&path).expect("read back"));
        }
        out.check(files[0] == files[1], || format!("{}: checkpoints differ", family.name()));
    }
    out
}
