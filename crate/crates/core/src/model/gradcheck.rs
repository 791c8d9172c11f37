//! Finite-difference check of the analytic score gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{score, score_grad};
use super::{Family, ModelParams};

pub const GRAD_STEP: f64 = 1e-4;

/// Coordinates whose TransE residual is closer than this to zero would have
/// the central difference straddle the L1 kink.
const TRANSE_KINK_MARGIN: f64 = 2.0 * GRAD_STEP;

/// RotatE coordinates with a smaller complex residual are skipped: the
/// modulus is not differentiable at zero and its curvature grows as `1/m`.
const ROTATE_MIN_MODULUS: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
    pub coords_checked: usize,
    /// Coordinates skipped because they sit at or next to a non-differentiable point.
    pub coords_excluded: usize,
}

/// Compares analytic gradients of the score with respect to `h`, `r` and `t`
/// against central differences on `probes` random triples of `p`.
///
/// The relative error of a coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(p: &ModelParams, probes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        probes,
        ..Default::default()
    };
    if p.num_entities == 0 || p.num_relations == 0 {
        return report;
    }
    let family = p.family;
    let gamma = p.gamma as f64;
    let up = |x: &[f32]| x.iter().map(|&v| v as f64).collect::<Vec<f64>>();

    for _ in 0..probes {
        let h = up(&p.entity[rng.random_range(0..p.num_entities) * p.dim..][..p.dim]);
        let t = up(&p.entity[rng.random_range(0..p.num_entities) * p.dim..][..p.dim]);
        let rw = p.relation_width();
        let r = up(&p.relation[rng.random_range(0..p.num_relations) * rw..][..rw]);

        let (mut gh, mut gr, mut gt) = (vec![0.0; h.len()], vec![0.0; r.len()], vec![0.0; t.len()]);
        score_grad(family, gamma, &h, &r, &t, 1.0, &mut gh, &mut gr, &mut gt);
        let excluded = excluded_coords(family, &h, &r, &t);

        for (which, analytic) in [(0, &gh), (1, &gr), (2, &gt)] {
            for (k, &a) in analytic.iter().enumerate() {
                if excluded(which, k) {
                    report.coords_excluded += 1;
                    continue;
                }
                let (mut hp, mut rp, mut tp) = (h.clone(), r.clone(), t.clone());
                let (mut hm, mut rm, mut tm) = (h.clone(), r.clone(), t.clone());
                match which {
                    0 => {
                        hp[k] += GRAD_STEP;
                        hm[k] -= GRAD_STEP;
                    }
                    1 => {
                        rp[k] += GRAD_STEP;
                        rm[k] -= GRAD_STEP;
                    }
                    _ => {
                        tp[k] += GRAD_STEP;
                        tm[k] -= GRAD_STEP;
                    }
                }
                let n = (score(family, gamma, &hp, &rp, &tp) - score(family, gamma, &hm, &rm, &tm))
                    / (2.0 * GRAD_STEP);
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                report.max_rel_error = report.max_rel_error.max(rel);
                report.coords_checked += 1;
            }
        }
    }
    report
}

/// Returns a predicate `(argument, coordinate) -> skip`, argument 0/1/2 for h/r/t.
fn excluded_coords(family: Family, h: &[f64], r: &[f64], t: &[f64]) -> Box<dyn Fn(usize, usize) -> bool> {
    match family {
        Family::TransE => {
            let near: Vec<bool> = (0..h.len())
                .map(|k| (h[k] + r[k] - t[k]).abs() < TRANSE_KINK_MARGIN)
                .collect();
            Box::new(move |_, k| near[k])
        }
        Family::RotatE => {
            let half = h.len() / 2;
            let small: Vec<bool> = (0..half)
                .map(|k| {
                    let (s, c) = r[k].sin_cos();
                    let ur = h[k] * c - h[k + half] * s - t[k];
                    let ui = h[k] * s + h[k + half] * c - t[k + half];
                    (ur * ur + ui * ui).sqrt() < ROTATE_MIN_MODULUS
                })
                .collect();
            Box::new(move |which, k| if which == 1 { small[k] } else { small[k % half] })
        }
        Family::DistMult | Family::ComplEx => Box::new(|_, _| false),
    }
}
