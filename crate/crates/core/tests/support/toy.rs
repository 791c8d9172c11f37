//! Small random graphs and parameter tables.

use kgeval::{ClosurePolicy, Family, GraphBuilder, KnowledgeGraph, ModelParams, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: [Family; 4] = [Family::TransE, Family::DistMult, Family::ComplEx, Family::RotatE];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A typed graph with at most 20 entities and 6 relations and at least one
/// test triple. About one entity in six has no type.
pub fn toy_graph(seed: u64) -> KnowledgeGraph {
    for attempt in 0.. {
        let mut rng = rng(seed.wrapping_mul(7919).wrapping_add(attempt));
        let entities = rng.random_range(4..=20);
        let relations = rng.random_range(1..=6);
        let triples = rng.random_range(entities..=3 * entities);
        let types = rng.random_range(2..=4);
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
            let split = match rng.random_range(0..10) {
                0..=5 => Split::Train,
                6..=7 => Split::Valid,
                _ => Split::Test,
            };
            b.add(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"), split);
        }
        for e in 0..entities {
            if rng.random_range(0..6) == 0 {
                continue;
            }
            for _ in 0..rng.random_range(1..=2) {
                b.add_type(&format!("e{e}"), &format!("type{}", rng.random_range(0..types)));
            }
        }
        let g = b.build(ClosurePolicy::Drop).expect("toy graph builds");
        if g.split_len(Split::Test) > 0 && g.split_len(Split::Train) > 0 {
            return g;
        }
    }
    unreachable!()
}

/// Random parameters for `g`.
///
/// TransE, DistMult and ComplEx use multiples of 1/4 in [-1, 1] so that every
/// score is computed exactly in f64 and ties are common. RotatE uses
/// continuous values; there ties come only from the duplicated rows. A few
/// entity and relation rows are copies of other rows in every family.
pub fn toy_params(family: Family, g: &KnowledgeGraph, seed: u64) -> ModelParams {
    make_params(family, g, seed, family != Family::RotatE)
}

/// Like [`toy_params`] but continuous in every family, so ties come only from
/// duplicated rows and symmetries of the score.
pub fn toy_params_continuous(family: Family, g: &KnowledgeGraph, seed: u64) -> ModelParams {
    make_params(family, g, seed, false)
}

fn make_params(family: Family, g: &KnowledgeGraph, seed: u64, quantized: bool) -> ModelParams {
    let mut rng = rng(seed ^ 0x5eed);
    let dim = match family {
        Family::TransE | Family::DistMult => rng.random_range(1..=4),
        Family::ComplEx | Family::RotatE => 2 * rng.random_range(1..=2),
    };
    let gamma = if family == Family::RotatE { 2.0 } else { 1.0 };
    let mut p = ModelParams::zeros(family, g.num_entities(), g.num_relations(), dim, gamma);
    let draw = |rng: &mut ChaCha8Rng| {
        if quantized {
            rng.random_range(-4i32..=4) as f32 / 4.0
        } else {
            rng.random_range(-1.0f32..=1.0)
        }
    };
    for x in &mut p.entity {
        *x = draw(&mut rng);
    }
    for x in &mut p.relation {
        *x = if family == Family::RotatE {
            rng.random_range(-std::f32::consts::PI..=std::f32::consts::PI)
        } else {
            draw(&mut rng)
        };
    }
    // continuous tables need more copies to produce a useful number of ties
    let copies = if quantized { 3 } else { 2 };
    duplicate_rows(&mut p.entity, dim, copies, &mut rng);
    let rw = p.relation_width();
    duplicate_rows(&mut p.relation, rw, copies, &mut rng);
    p
}

/// Copies up to `rows / per` random rows over other rows.
fn duplicate_rows(table: &mut [f32], width: usize, per: usize, rng: &mut ChaCha8Rng) {
    let rows = table.len() / width;
    if rows < 2 {
        return;
    }
    for _ in 0..rng.random_range(0..=rows / per) {
        let from = rng.random_range(0..rows);
        let to = rng.random_range(0..rows);
        let src: Vec<f32> = table[from * width..(from + 1) * width].to_vec();
        table[to * width..(to + 1) * width].copy_from_slice(&src);
    }
}

/// Continuous random parameters of a given dimension, initialized the way
/// training initializes them.
pub fn random_params(family: Family, entities: usize, relations: usize, dim: usize, gamma: f32, seed: u64) -> ModelParams {
    ModelParams::init(family, entities, relations, dim, gamma, &mut rng(seed)).expect("valid dimension")
}
