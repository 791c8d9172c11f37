//! Scalar score functions and their analytic gradients.
//!
//! Complex-valued families store a `d`-wide entity row as `[re; d/2 | im; d/2]`.
//! ComplEx relations use the same layout; RotatE relations hold `d/2` phases.
//!
//! | family   | score                                   |
//! |----------|-----------------------------------------|
//! | TransE   | `gamma - sum_k |h_k + r_k - t_k|`        |
//! | DistMult | `sum_k h_k r_k t_k`                      |
//! | ComplEx  | `Re(sum_k h_k r_k conj(t_k))`            |
//! | RotatE   | `gamma - sum_k |h_k e^{i theta_k} - t_k|` |
//!
//! Higher is more plausible for all four.

use num_traits::Float;

use super::Family;

#[inline]
fn sign<F: Float>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else if x < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

pub fn score<F: Float>(family: Family, gamma: F, h: &[F], r: &[F], t: &[F]) -> F {
    match family {
        Family::TransE => {
            let mut dist = F::zero();
            for k in 0..h.len() {
                dist = dist + (h[k] + r[k] - t[k]).abs();
            }
            gamma - dist
        }
        Family::DistMult => {
            let mut s = F::zero();
            for k in 0..h.len() {
                s = s + h[k] * r[k] * t[k];
            }
            s
        }
        Family::ComplEx => {
            let half = h.len() / 2;
            let (hr, hi) = h.split_at(half);
            let (rr, ri) = r.split_at(half);
            let (tr, ti) = t.split_at(half);
            let mut s = F::zero();
            for k in 0..half {
                let re = hr[k] * rr[k] - hi[k] * ri[k];
                let im = hr[k] * ri[k] + hi[k] * rr[k];
                s = s + re * tr[k] + im * ti[k];
            }
            s
        }
        Family::RotatE => {
            let half = h.len() / 2;
            let (hr, hi) = h.split_at(half);
            let (tr, ti) = t.split_at(half);
            let mut dist = F::zero();
            for k in 0..half {
                let (s, c) = r[k].sin_cos();
                let ur = hr[k] * c - hi[k] * s - tr[k];
                let ui = hr[k] * s + hi[k] * c - ti[k];
                dist = dist + (ur * ur + ui * ui).sqrt();
            }
            gamma - dist
        }
    }
}

/// Adds `scale * d score / d x` into `gh`, `gr`, `gt` and returns the score.
///
/// At the non-differentiable points (a zero L1 component for TransE, a zero
/// complex modulus for RotatE) the zero subgradient is used.
#[allow(clippy::too_many_arguments)]
pub fn score_grad<F: Float>(
    family: Family,
    gamma: F,
    h: &[F],
    r: &[F],
    t: &[F],
    scale: F,
    gh: &mut [F],
    gr: &mut [F],
    gt: &mut [F],
) -> F {
    match family {
        Family::TransE => {
            let mut dist = F::zero();
            for k in 0..h.len() {
                let u = h[k] + r[k] - t[k];
                dist = dist + u.abs();
                let g = -sign(u) * scale;
                gh[k] = gh[k] + g;
                gr[k] = gr[k] + g;
                gt[k] = gt[k] - g;
            }
            gamma - dist
        }
        Family::DistMult => {
            let mut s = F::zero();
            for k in 0..h.len() {
                s = s + h[k] * r[k] * t[k];
                gh[k] = gh[k] + scale * r[k] * t[k];
                gr[k] = gr[k] + scale * h[k] * t[k];
                gt[k] = gt[k] + scale * h[k] * r[k];
            }
            s
        }
        Family::ComplEx => {
            let half = h.len() / 2;
            let mut s = F::zero();
            for k in 0..half {
                let (a, b) = (h[k], h[k + half]);
                let (c, d) = (r[k], r[k + half]);
                let (e, f) = (t[k], t[k + half]);
                s = s + a * c * e + b * c * f + a * d * f - b * d * e;
                gh[k] = gh[k] + scale * (c * e + d * f);
                gh[k + half] = gh[k + half] + scale * (c * f - d * e);
                gr[k] = gr[k] + scale * (a * e + b * f);
                gr[k + half] = gr[k + half] + scale * (a * f - b * e);
                gt[k] = gt[k] + scale * (a * c - b * d);
                gt[k + half] = gt[k + half] + scale * (b * c + a * d);
            }
            s
        }
        Family::RotatE => {
            let half = h.len() / 2;
            let mut dist = F::zero();
            for k in 0..half {
                let (a, b) = (h[k], h[k + half]);
                let (e, f) = (t[k], t[k + half]);
                let (sn, cs) = r[k].sin_cos();
                let ur = a * cs - b * sn - e;
                let ui = a * sn + b * cs - f;
                let m = (ur * ur + ui * ui).sqrt();
                dist = dist + m;
                if m > F::zero() {
                    // d score / d u = -u / |u|
                    let g_re = -ur / m * scale;
                    let g_im = -ui / m * scale;
                    gh[k] = gh[k] + g_re * cs + g_im * sn;
                    gh[k + half] = gh[k + half] - g_re * sn + g_im * cs;
                    gt[k] = gt[k] - g_re;
                    gt[k + half] = gt[k + half] - g_im;
                    gr[k] = gr[k] + g_re * (-a * sn - b * cs) + g_im * (a * cs - b * sn);
                }
            }
            gamma - dist
        }
    }
}

/// A `(h, r, ?)` or `(?, r, t)` query folded into a single f64 vector so that
/// scoring one candidate entity costs one pass over its row.
#[derive(Debug, Clone)]
pub(crate) struct Query {
    family: Family,
    gamma: f64,
    q: Vec<f64>,
}

impl Query {
    pub(crate) fn tails(family: Family, gamma: f32, h: &[f32], r: &[f32]) -> Self {
        let q = match family {
            Family::TransE => h.iter().zip(r).map(|(&a, &b)| a as f64 + b as f64).collect(),
            Family::DistMult => h.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).collect(),
            Family::ComplEx => complex_mul(h, r, false),
            Family::RotatE => rotate(h, r, false),
        };
        Query {
            family,
            gamma: gamma as f64,
            q,
        }
    }

    pub(crate) fn heads(family: Family, gamma: f32, r: &[f32], t: &[f32]) -> Self {
        let q = match family {
            Family::TransE => t.iter().zip(r).map(|(&a, &b)| a as f64 - b as f64).collect(),
            Family::DistMult => r.iter().zip(t).map(|(&a, &b)| a as f64 * b as f64).collect(),
            // Re(e * r * conj(t)) = Re(e * w) with w = r * conj(t)
            Family::ComplEx => complex_mul(r, t, true),
            // |e * rot - t| = |e - t * conj(rot)| since |rot| = 1
            Family::RotatE => rotate(t, r, true),
        };
        Query {
            family,
            gamma: gamma as f64,
            q,
        }
    }

    #[inline]
    pub(crate) fn score_tail(&self, e: &[f32]) -> f64 {
        let q = &self.q;
        match self.family {
            Family::TransE => {
                self.gamma - q.iter().zip(e).map(|(a, &b)| (a - b as f64).abs()).sum::<f64>()
            }
            Family::DistMult => q.iter().zip(e).map(|(a, &b)| a * b as f64).sum(),
            Family::ComplEx => q.iter().zip(e).map(|(a, &b)| a * b as f64).sum(),
            Family::RotatE => self.gamma - modulus_distance(q, e),
        }
    }

    #[inline]
    pub(crate) fn score_head(&self, e: &[f32]) -> f64 {
        let q = &self.q;
        match self.family {
            Family::TransE => {
                self.gamma - q.iter().zip(e).map(|(a, &b)| (b as f64 - a).abs()).sum::<f64>()
            }
            Family::DistMult => q.iter().zip(e).map(|(a, &b)| a * b as f64).sum(),
            Family::ComplEx => {
                let half = e.len() / 2;
                let mut s = 0.0;
                for k in 0..half {
                    s += e[k] as f64 * q[k] - e[k + half] as f64 * q[k + half];
                }
                s
            }
            Family::RotatE => self.gamma - modulus_distance(q, e),
        }
    }
}

/// `x * y` (or `x * conj(y)`) for two `[re | im]` rows, as f64.
fn complex_mul(x: &[f32], y: &[f32], conj_y: bool) -> Vec<f64> {
    let half = x.len() / 2;
    let mut out = vec![0.0; x.len()];
    for k in 0..half {
        let (a, b) = (x[k] as f64, x[k + half] as f64);
        let (c, d) = (y[k] as f64, if conj_y { -(y[k + half] as f64) } else { y[k + half] as f64 });
        out[k] = a * c - b * d;
        out[k + half] = a * d + b * c;
    }
    out
}

/// Rotates an entity row by the phases `theta` (or by `-theta`).
fn rotate(x: &[f32], theta: &[f32], inverse: bool) -> Vec<f64> {
    let half = x.len() / 2;
    let mut out = vec![0.0; x.len()];
    for k in 0..half {
        let th = theta[k] as f64;
        let (s, c) = if inverse { (-th).sin_cos() } else { th.sin_cos() };
        let (a, b) = (x[k] as f64, x[k + half] as f64);
        out[k] = a * c - b * s;
        out[k + half] = a * s + b * c;
    }
    out
}

fn modulus_distance(q: &[f64], e: &[f32]) -> f64 {
    let half = e.len() / 2;
    let mut d = 0.0;
    for k in 0..half {
        let ur = q[k] - e[k] as f64;
        let ui = q[k + half] - e[k + half] as f64;
        d += (ur * ur + ui * ui).sqrt();
    }
    d
}
