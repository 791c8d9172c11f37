//! Negative-sampling training with the self-adversarial loss.
//!
//! Each step draws `batch_size` positives, corrupts head or tail (with equal
//! probability) of each with `neg_per_pos` uniform entities, and minimizes
//!
//! ```text
//! softplus(-s(pos)) + sum_i w_i softplus(s(neg_i)),  w = softmax(alpha * s(neg))
//! ```
//!
//! averaged over the batch and halved, with the weights `w` held constant.
//! With `alpha = 0` the weights are uniform. An optional N3 penalty
//! `coeff * sum |x|^3` applies to the positive rows. Parameters are updated
//! with per-coordinate Adagrad.
//!
//! [`TrainMode::Deterministic`] runs a single worker and reproduces the same
//! parameters bit for bit given the seed. [`TrainMode::Hogwild`] runs several
//! workers that update shared tables without locks; lost updates are
//! tolerated and results depend on scheduling.

use std::sync::atomic::{AtomicU32, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{score, score_grad};
use super::{Family, ModelParams, TrainConfig};
use crate::error::{KgError, Result};
use crate::graph::{KnowledgeGraph, Split, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    #[default]
    Deterministic,
    Hogwild {
        threads: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Batch loss per step, in step order.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Mean loss over the first and the last `frac` of the steps.
    pub fn loss_window_means(&self, frac: f64) -> Option<(f64, f64)> {
        let n = self.losses.len();
        let w = ((n as f64 * frac).ceil() as usize).max(1);
        if n < 2 * w {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&self.losses[..w]), mean(&self.losses[n - w..])))
    }
}

const ADAGRAD_EPS: f32 = 1e-10;

trait ParamStore {
    fn read(&self, row: usize, out: &mut [f32]);
    /// Applies one Adagrad update to `row`; false if the result is not finite.
    fn adagrad(&mut self, row: usize, grad: &[f32], lr: f32) -> bool;
}

struct Exclusive<'a> {
    values: &'a mut [f32],
    acc: &'a mut [f32],
    width: usize,
}

impl ParamStore for Exclusive<'_> {
    fn read(&self, row: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.values[row * self.width..(row + 1) * self.width]);
    }

    fn adagrad(&mut self, row: usize, grad: &[f32], lr: f32) -> bool {
        let range = row * self.width..(row + 1) * self.width;
        let mut finite = true;
        for ((x, a), g) in self.values[range.clone()].iter_mut().zip(&mut self.acc[range]).zip(grad) {
            *a += g * g;
            *x -= lr * g / (a.sqrt() + ADAGRAD_EPS);
            finite &= x.is_finite();
        }
        finite
    }
}

/// Lock-free view used by hogwild workers. Every access is a relaxed atomic
/// load or store, so concurrent updates may overwrite each other but never
/// tear a value.
#[derive(Clone, Copy)]
struct Shared<'a> {
    values: &'a [AtomicU32],
    acc: &'a [AtomicU32],
    width: usize,
}

fn atomic_view(x: &mut [f32]) -> &[AtomicU32] {
    const _: () = assert!(
        std::mem::size_of::<AtomicU32>() == std::mem::size_of::<f32>()
            && std::mem::align_of::<AtomicU32>() == std::mem::align_of::<f32>()
    );
    // SAFETY: AtomicU32 has the size and alignment of f32 (checked above) and
    // every bit pattern is valid for both. The exclusive borrow of `x` lasts
    // as long as the returned view, so no non-atomic access can overlap it.
    unsafe { &*(x as *mut [f32] as *const [AtomicU32]) }
}

impl ParamStore for Shared<'_> {
    fn read(&self, row: usize, out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(&self.values[row * self.width..]) {
            *o = f32::from_bits(v.load(Ordering::Relaxed));
        }
    }

    fn adagrad(&mut self, row: usize, grad: &[f32], lr: f32) -> bool {
        let range = row * self.width..(row + 1) * self.width;
        let mut finite = true;
        for ((x, a), g) in self.values[range.clone()].iter().zip(&self.acc[range]).zip(grad) {
            let acc = f32::from_bits(a.load(Ordering::Relaxed)) + g * g;
            a.store(acc.to_bits(), Ordering::Relaxed);
            let v = f32::from_bits(x.load(Ordering::Relaxed)) - lr * g / (acc.sqrt() + ADAGRAD_EPS);
            x.store(v.to_bits(), Ordering::Relaxed);
            finite &= v.is_finite();
        }
        finite
    }
}

#[inline]
fn softplus(x: f32) -> f32 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sparse gradient accumulator over the rows of one table.
struct RowGrads {
    width: usize,
    grad: Vec<f32>,
    touched: Vec<usize>,
    flag: Vec<bool>,
}

impl RowGrads {
    fn new(rows: usize, width: usize) -> Self {
        RowGrads {
            width,
            grad: vec![0.0; rows * width],
            touched: Vec::new(),
            flag: vec![false; rows],
        }
    }

    fn add(&mut self, row: usize, g: &[f32]) {
        if !self.flag[row] {
            self.flag[row] = true;
            self.touched.push(row);
        }
        for (acc, x) in self.grad[row * self.width..(row + 1) * self.width].iter_mut().zip(g) {
            *acc += x;
        }
    }

    /// Applies accumulated gradients in first-touch order and clears them.
    fn flush<S: ParamStore>(&mut self, store: &mut S, lr: f32) -> bool {
        let mut finite = true;
        for &row in &self.touched {
            let g = &mut self.grad[row * self.width..(row + 1) * self.width];
            finite &= store.adagrad(row, g, lr);
            g.fill(0.0);
            self.flag[row] = false;
        }
        self.touched.clear();
        finite
    }
}

struct Worker<'g> {
    family: Family,
    cfg: TrainConfig,
    positives: &'g [Triple],
    num_entities: usize,
    rng: ChaCha8Rng,
    order: Vec<u32>,
    cursor: usize,
    ent: RowGrads,
    rel: RowGrads,
    h: Vec<f32>,
    r: Vec<f32>,
    t: Vec<f32>,
    gh: Vec<f32>,
    gr: Vec<f32>,
    gt: Vec<f32>,
    gneg: Vec<f32>,
    neg_ids: Vec<usize>,
    neg_rows: Vec<f32>,
    neg_scores: Vec<f32>,
    weights: Vec<f32>,
}

impl<'g> Worker<'g> {
    fn new(
        family: Family,
        cfg: &TrainConfig,
        positives: &'g [Triple],
        num_entities: usize,
        num_relations: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let d = cfg.dim;
        let rw = family.relation_width(d);
        Worker {
            family,
            cfg: cfg.clone(),
            positives,
            num_entities,
            rng,
            order: (0..positives.len() as u32).collect(),
            cursor: positives.len(),
            ent: RowGrads::new(num_entities, d),
            rel: RowGrads::new(num_relations, rw),
            h: vec![0.0; d],
            r: vec![0.0; rw],
            t: vec![0.0; d],
            gh: vec![0.0; d],
            gr: vec![0.0; rw],
            gt: vec![0.0; d],
            gneg: vec![0.0; d],
            neg_ids: Vec::with_capacity(cfg.neg_per_pos),
            neg_rows: vec![0.0; cfg.neg_per_pos * d],
            neg_scores: vec![0.0; cfg.neg_per_pos],
            weights: vec![0.0; cfg.neg_per_pos],
        }
    }

    fn next_positive(&mut self) -> Triple {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let t = self.positives[self.order[self.cursor] as usize];
        self.cursor += 1;
        t
    }

    fn step<E: ParamStore, R: ParamStore>(&mut self, ents: &mut E, rels: &mut R) -> Option<f64> {
        let d = self.cfg.dim;
        let b = self.cfg.batch_size;
        let n = self.cfg.neg_per_pos;
        let gamma = self.cfg.gamma;
        let alpha = self.cfg.adversarial_temperature;
        let reg = self.cfg.regularization_coeff;
        let inv = 0.5 / b as f32;
        let family = self.family;
        let mut loss = 0.0f64;

        for _ in 0..b {
            let pos = self.next_positive();
            ents.read(pos.head.index(), &mut self.h);
            rels.read(pos.relation.index(), &mut self.r);
            ents.read(pos.tail.index(), &mut self.t);
            self.gh.fill(0.0);
            self.gr.fill(0.0);
            self.gt.fill(0.0);

            let s_pos = score(family, gamma, &self.h, &self.r, &self.t);
            loss += (softplus(-s_pos) * inv) as f64;
            score_grad(
                family,
                gamma,
                &self.h,
                &self.r,
                &self.t,
                -sigmoid(-s_pos) * inv,
                &mut self.gh,
                &mut self.gr,
                &mut self.gt,
            );

            let corrupt_head = self.rng.random_bool(0.5);
            self.neg_ids.clear();
            for j in 0..n {
                let id = self.rng.random_range(0..self.num_entities);
                self.neg_ids.push(id);
                ents.read(id, &mut self.neg_rows[j * d..(j + 1) * d]);
            }
            for j in 0..n {
                let row = &self.neg_rows[j * d..(j + 1) * d];
                self.neg_scores[j] = if corrupt_head {
                    score(family, gamma, row, &self.r, &self.t)
                } else {
                    score(family, gamma, &self.h, &self.r, row)
                };
            }
            if alpha > 0.0 {
                let max = self.neg_scores.iter().fold(f32::NEG_INFINITY, |m, &s| m.max(alpha * s));
                let mut z = 0.0;
                for (w, &s) in self.weights.iter_mut().zip(&self.neg_scores) {
                    *w = (alpha * s - max).exp();
                    z += *w;
                }
                self.weights.iter_mut().for_each(|w| *w /= z);
            } else {
                self.weights.fill(1.0 / n as f32);
            }
            self.apply_negatives(corrupt_head, inv, &mut loss);

            if reg > 0.0 {
                let scale = reg / b as f32;
                for (x, g) in self.h.iter().zip(&mut self.gh) {
                    loss += (scale * x.abs().powi(3)) as f64;
                    *g += 3.0 * scale * x * x.abs();
                }
                for (x, g) in self.r.iter().zip(&mut self.gr) {
                    loss += (scale * x.abs().powi(3)) as f64;
                    *g += 3.0 * scale * x * x.abs();
                }
                for (x, g) in self.t.iter().zip(&mut self.gt) {
                    loss += (scale * x.abs().powi(3)) as f64;
                    *g += 3.0 * scale * x * x.abs();
                }
            }

            self.ent.add(pos.head.index(), &self.gh);
            self.ent.add(pos.tail.index(), &self.gt);
            self.rel.add(pos.relation.index(), &self.gr);
        }

        let lr = self.cfg.learning_rate;
        let ok = self.ent.flush(ents, lr) & self.rel.flush(rels, lr);
        (ok && loss.is_finite()).then_some(loss)
    }

    fn apply_negatives(&mut self, corrupt_head: bool, inv: f32, loss: &mut f64) {
        let d = self.cfg.dim;
        let (family, gamma) = (self.family, self.cfg.gamma);
        for j in 0..self.neg_ids.len() {
            let (s, w) = (self.neg_scores[j], self.weights[j]);
            *loss += (w * softplus(s) * inv) as f64;
            let coef = w * sigmoid(s) * inv;
            self.gneg.fill(0.0);
            let row = &self.neg_rows[j * d..(j + 1) * d];
            if corrupt_head {
                score_grad(family, gamma, row, &self.r, &self.t, coef, &mut self.gneg, &mut self.gr, &mut self.gt);
            } else {
                score_grad(family, gamma, &self.h, &self.r, row, coef, &mut self.gh, &mut self.gr, &mut self.gneg);
            }
            self.ent.add(self.neg_ids[j], &self.gneg);
        }
    }
}

/// Deterministic single-worker training.
pub fn train(g: &KnowledgeGraph, cfg: &TrainConfig, family: Family) -> Result<TrainOutcome> {
    train_with(g, cfg, family, TrainMode::Deterministic)
}

pub fn train_with(
    g: &KnowledgeGraph,
    cfg: &TrainConfig,
    family: Family,
    mode: TrainMode,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    family.check_dim(cfg.dim)?;
    let positives: Vec<Triple> = g.split_triples(Split::Train).collect();
    if positives.is_empty() {
        return Err(KgError::Empty("train split"));
    }
    let (ne, nr) = (g.num_entities(), g.num_relations());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(family, ne, nr, cfg.dim, cfg.gamma, &mut rng)?;
    if cfg.steps == 0 {
        return Ok(TrainOutcome {
            params,
            losses: Vec::new(),
        });
    }

    let d = cfg.dim;
    let rw = family.relation_width(d);
    let mut ent_acc = vec![0.0f32; params.entity.len()];
    let mut rel_acc = vec![0.0f32; params.relation.len()];

    let losses = match mode {
        TrainMode::Deterministic | TrainMode::Hogwild { threads: 0 | 1 } => {
            let mut worker = Worker::new(family, cfg, &positives, ne, nr, rng);
            let mut ents = Exclusive {
                values: &mut params.entity,
                acc: &mut ent_acc,
                width: d,
            };
            let mut rels = Exclusive {
                values: &mut params.relation,
                acc: &mut rel_acc,
                width: rw,
            };
            let mut losses = Vec::with_capacity(cfg.steps);
            for step in 0..cfg.steps {
                match worker.step(&mut ents, &mut rels) {
                    Some(l) => losses.push(l),
                    None => return Err(KgError::NumericFailure { step }),
                }
            }
            losses
        }
        TrainMode::Hogwild { threads } => {
            let ents = Shared {
                values: atomic_view(&mut params.entity),
                acc: atomic_view(&mut ent_acc),
                width: d,
            };
            let rels = Shared {
                values: atomic_view(&mut params.relation),
                acc: atomic_view(&mut rel_acc),
                width: rw,
            };
            let positives = &positives;
            let per_worker: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads)
                    .map(|w| {
                        let mut wrng = rng.clone();
                        wrng.set_stream(w as u64 + 1);
                        scope.spawn(move || {
                            let mut worker = Worker::new(family, cfg, positives, ne, nr, wrng);
                            let (mut e, mut r) = (ents, rels);
                            let mut losses = Vec::new();
                            for step in (w..cfg.steps).step_by(threads) {
                                match worker.step(&mut e, &mut r) {
                                    Some(l) => losses.push(l),
                                    None => return Err(KgError::NumericFailure { step }),
                                }
                            }
                            Ok(losses)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            let mut losses = vec![0.0; cfg.steps];
            for (w, res) in per_worker.into_iter().enumerate() {
                for (i, l) in res?.into_iter().enumerate() {
                    losses[w + i * threads] = l;
                }
            }
            losses
        }
    };

    Ok(TrainOutcome { params, losses })
}
