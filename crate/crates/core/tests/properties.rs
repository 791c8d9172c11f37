mod support;

use kgeval::metrics::MetricBundle;
use kgeval::pair_rank::{pair_rank, DEFAULT_PAIR_BUDGET};
use kgeval::rank::{micro_metrics, rank_all, RankSetting};
use kgeval::{ClosurePolicy, EntityId, Family, GraphBuilder, KnowledgeGraph, ModelParams, RelationId, Split};
use proptest::prelude::*;

use support::toy::{toy_graph, toy_params_continuous, FAMILIES};

fn triples_strategy() -> impl Strategy<Value = Vec<(u8, u8, u8, u8)>> {
    prop::collection::vec((0u8..12, 0u8..4, 0u8..12, 0u8..3), 1..80)
}

fn build(rows: &[(u8, u8, u8, u8)]) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    let mut seen = std::collections::HashSet::new();
    for &(h, r, t, s) in rows {
        if seen.insert((h, r, t)) {
            let split = [Split::Train, Split::Valid, Split::Test][s as usize];
            b.add(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"), split);
        }
    }
    b.build(ClosurePolicy::Drop).unwrap()
}

/// `g` with its entities declared in the order given by `perm`, and `p`
/// rearranged to match.
fn permuted(g: &KnowledgeGraph, p: &ModelParams, perm: &[usize]) -> (KnowledgeGraph, ModelParams) {
    let mut b = GraphBuilder::new();
    for &e in perm {
        b.declare_entity(g.entity_name(EntityId::from_index(e)));
    }
    for r in 0..g.num_relations() {
        b.declare_relation(g.relation_name(RelationId::from_index(r)));
    }
    for (&t, &s) in g.triples().iter().zip(g.splits()) {
        b.add(g.entity_name(t.head), g.relation_name(t.relation), g.entity_name(t.tail), s);
    }
    let h = b.build(ClosurePolicy::Reject).unwrap();
    let mut q = p.clone();
    for (new, &old) in perm.iter().enumerate() {
        q.entity_row_mut(EntityId::from_index(new))
            .copy_from_slice(p.entity_row(EntityId::from_index(old)));
    }
    (h, q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contains_agrees_with_linear_scan(rows in triples_strategy(), probes in prop::collection::vec((0usize..14, 0usize..5, 0usize..14), 40)) {
        let g = build(&rows);
        for (h, r, t) in probes {
            if h >= g.num_entities() || r >= g.num_relations() || t >= g.num_entities() {
                continue;
            }
            let (h, r, t) = (EntityId::from_index(h), RelationId::from_index(r), EntityId::from_index(t));
            let scan = g.triples().iter().any(|x| x.head == h && x.relation == r && x.tail == t);
            prop_assert_eq!(g.contains(h, r, t), scan);
            let tails: Vec<EntityId> = g.triples().iter().filter(|x| x.head == h && x.relation == r).map(|x| x.tail).collect();
            let mut sorted = tails.clone();
            sorted.sort();
            prop_assert_eq!(g.tails_of(h, r), &sorted[..]);
        }
    }

    #[test]
    fn metric_bundle_invariants(ranks in prop::collection::vec(1u32..200, 1..100)) {
        let ranks: Vec<f64> = ranks.iter().map(|&r| 1.0 + (r - 1) as f64 / 2.0).collect();
        let m = MetricBundle::from_ranks(ranks.iter().copied()).unwrap();
        prop_assert!(m.is_consistent());
        prop_assert!(m.hits_at_1 <= m.hits_at_3 && m.hits_at_3 <= m.hits_at_10);
        prop_assert!(m.hits_at_1 <= m.mrr);
        prop_assert!(1.0 / m.mr <= m.mrr + 1e-12, "harmonic mean bounds");
        prop_assert_eq!(m.count, ranks.len());
    }

    #[test]
    fn entity_order_does_not_change_results(seed in 0u64..500, fam in 0usize..4, shuffle_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = toy_graph(seed);
        let family: Family = FAMILIES[fam];
        let p = toy_params_continuous(family, &g, seed);
        let mut perm: Vec<usize> = (0..g.num_entities()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (h, q) = permuted(&g, &p, &perm);

        let a = micro_metrics(&rank_all(&p, &g, &g).unwrap(), RankSetting::Filtered).unwrap();
        let b = micro_metrics(&rank_all(&q, &h, &h).unwrap(), RankSetting::Filtered).unwrap();
        prop_assert!((a.mrr - b.mrr).abs() < 1e-12 && (a.mr - b.mr).abs() < 1e-12);

        let r = g.split_triples(Split::Test).next().unwrap().relation;
        let rh = h.relation_id(g.relation_name(r)).unwrap();
        for k in [1, 5, 50] {
            let x = pair_rank(&p, &g, r, k, None, DEFAULT_PAIR_BUDGET).unwrap();
            let y = pair_rank(&q, &h, rh, k, None, DEFAULT_PAIR_BUDGET).unwrap();
            prop_assert!((x.ap_at_k - y.ap_at_k).abs() < 1e-12, "AP {} vs {}", x.ap_at_k, y.ap_at_k);
            prop_assert!((x.p_at_k - y.p_at_k).abs() < 1e-12);
        }
    }
}
