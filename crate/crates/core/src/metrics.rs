//! Rank-based metric bundles.

use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};

pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Mean reciprocal rank, mean rank and hits@{1,3,10} over `count` ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub mrr: f64,
    pub mr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub count: usize,
}

impl MetricBundle {
    pub fn from_ranks<I: IntoIterator<Item = f64>>(ranks: I) -> Result<Self> {
        let mut acc = [0.0f64; 5];
        let mut n = 0usize;
        for r in ranks {
            acc[0] += 1.0 / r;
            acc[1] += r;
            for (slot, k) in acc[2..].iter_mut().zip(HITS_AT) {
                if r <= k as f64 {
                    *slot += 1.0;
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(KgError::Empty("no ranks to aggregate"));
        }
        let m = n as f64;
        Ok(MetricBundle {
            mrr: acc[0] / m,
            mr: acc[1] / m,
            hits_at_1: acc[2] / m,
            hits_at_3: acc[3] / m,
            hits_at_10: acc[4] / m,
            count: n,
        })
    }

    /// Unweighted mean of each metric over `bundles`; `count` is the total.
    pub fn mean<'a, I: IntoIterator<Item = &'a MetricBundle>>(bundles: I) -> Result<Self> {
        let mut sum = [0.0f64; 5];
        let (mut groups, mut count) = (0usize, 0usize);
        for b in bundles {
            for (s, v) in sum.iter_mut().zip([b.mrr, b.mr, b.hits_at_1, b.hits_at_3, b.hits_at_10]) {
                *s += v;
            }
            groups += 1;
            count += b.count;
        }
        if groups == 0 {
            return Err(KgError::Empty("no groups to average"));
        }
        let g = groups as f64;
        Ok(MetricBundle {
            mrr: sum[0] / g,
            mr: sum[1] / g,
            hits_at_1: sum[2] / g,
            hits_at_3: sum[3] / g,
            hits_at_10: sum[4] / g,
            count,
        })
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.hits_at_1),
            3 => Some(self.hits_at_3),
            10 => Some(self.hits_at_10),
            _ => None,
        }
    }

    /// `hits@1 <= mrr <= 1`, hits non-decreasing in k, `mr >= 1`.
    pub fn is_consistent(&self) -> bool {
        let eps = 1e-12;
        self.hits_at_1 <= self.mrr + eps
            && self.mrr <= 1.0 + eps
            && self.hits_at_1 <= self.hits_at_3
            && self.hits_at_3 <= self.hits_at_10
            && self.hits_at_10 <= 1.0 + eps
            && self.mr >= 1.0 - eps
    }
}

/// Orders scores with `-0.0` and `0.0` equal, unlike `f64::total_cmp`, so
/// that both zeros fall into one tie group.
#[inline]
pub fn cmp_scores(a: f64, b: f64) -> std::cmp::Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

/// Rank of a target among scored candidates with ties averaged:
/// `1 + #better + #equal / 2`, where `equal` excludes the target itself.
#[inline]
pub fn average_rank(better: usize, equal_others: usize) -> f64 {
    1.0 + better as f64 + equal_others as f64 / 2.0
}
