//! Exact solve of `Σ_t clip(p_t λ - q_t, lo_t, hi_t) = target` for `λ`.
//!
//! Both the box-constrained follower best response and the leader's QP have
//! separable KKT conditions of this shape; the left side is a nondecreasing
//! piecewise-linear function of the multiplier `λ`, so the root is found by a
//! binary search over its breakpoints and one linear interpolation.

use crate::error::{GameError, Result};

pub(crate) struct ClippedLinear<'a> {
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

pub(crate) struct ClippedSolution {
    pub multiplier: f64,
    pub x: Vec<f64>,
}

impl ClippedLinear<'_> {
    fn value(&self, t: usize, lambda: f64) -> f64 {
        (self.p[t] * lambda - self.q[t]).clamp(self.lo[t], self.hi[t])
    }

    fn total(&self, lambda: f64) -> f64 {
        (0..self.p.len()).map(|t| self.value(t, lambda)).sum()
    }

    /// Sum of `p_t` over slots strictly inside their bounds at `lambda`.
    fn slope_at(&self, lambda: f64) -> f64 {
        (0..self.p.len())
            .filter(|&t| {
                let v = self.p[t] * lambda - self.q[t];
                v > self.lo[t] && v < self.hi[t]
            })
            .map(|t| self.p[t])
            .sum()
    }

    pub fn solve(&self, target: f64) -> Result<ClippedSolution> {
        let lo_sum: f64 = self.lo.iter().sum();
        let hi_sum: f64 = self.hi.iter().sum();
        let tol = 1e-12 * target.abs().max(1.0);
        if target < lo_sum - tol || target > hi_sum + tol {
            return Err(GameError::InfeasibleBounds(format!(
                "target {target} outside [{lo_sum}, {hi_sum}]"
            )));
        }

        let mut breaks: Vec<f64> = Vec::with_capacity(2 * self.p.len());
        for t in 0..self.p.len() {
            for b in [self.lo[t], self.hi[t]] {
                if b.is_finite() {
                    breaks.push((b + self.q[t]) / self.p[t]);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let lambda = if breaks.is_empty() {
            let p_sum: f64 = self.p.iter().sum();
            let q_sum: f64 = self.q.iter().sum();
            (target + q_sum) / p_sum
        } else {
            // First breakpoint whose total reaches the target.
            let k = breaks.partition_point(|&b| self.total(b) < target);
            if k < breaks.len() && self.total(breaks[k]) == target {
                breaks[k]
            } else if k == 0 {
                let b = breaks[0];
                let slope = self.slope_at(b - 1.0);
                if slope > 0.0 {
                    b - (self.total(b) - target) / slope
                } else {
                    b
                }
            } else if k == breaks.len() {
                let b = breaks[k - 1];
                let slope = self.slope_at(b + 1.0);
                if slope > 0.0 {
                    b + (target - self.total(b)) / slope
                } else {
                    b
                }
            } else {
                let (a, b) = (breaks[k - 1], breaks[k]);
                let (fa, fb) = (self.total(a), self.total(b));
                if fb > fa {
                    a + (b - a) * (target - fa) / (fb - fa)
                } else {
                    a
                }
            }
        };

        let x = (0..self.p.len()).map(|t| self.value(t, lambda)).collect();
        Ok(ClippedSolution {
            multiplier: lambda,
            x,
        })
    }
}
