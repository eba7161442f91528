use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clipped::ClippedLinear;
use crate::gamecore::{DemandProfile, FlexUserSet, TildeSeries};
use crate::oracle::{projected_stationarity, SlotBounds};

use super::ResponseMode;

#[derive(Debug, Clone)]
pub struct StrictNeConfig {
    /// Random deviations drawn per user.
    pub samples: usize,
    pub mode: ResponseMode,
    pub seed: u64,
}

impl Default for StrictNeConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            mode: ResponseMode::Hyperplane,
            seed: 0,
        }
    }
}

/// A unilateral deviation that did not raise the deviating user's cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationViolation {
    /// Zero-based user index.
    pub user: usize,
    /// `u_i(deviation) - u_i(profile)`; not positive.
    pub cost_change: f64,
    pub deviation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictNeReport {
    pub passed: bool,
    pub seed: u64,
    pub samples_per_user: usize,
    /// Deviations actually compared.
    pub tested: usize,
    /// Draws that coincided with the profile (e.g. a singleton strategy set).
    pub skipped: usize,
    /// Projected-gradient norm per user.
    pub stationarity: Vec<f64>,
    /// Per-user stationarity threshold `1e-7 · max(1, ‖∇u_i‖∞)`.
    pub stationarity_limits: Vec<f64>,
    pub violations: Vec<DeviationViolation>,
    /// User with the largest stationarity ratio, or the largest violation.
    pub worst_user: Option<usize>,
}

fn cost_against(others: &[f64], row: &[f64], tilde: &TildeSeries) -> f64 {
    row.iter()
        .zip(others)
        .zip(tilde.w().iter().zip(tilde.r()))
        .map(|((v, s), (w, r))| (s + v + r) / w * v)
        .sum()
}

fn random_hyperplane_point(rng: &mut ChaCha8Rng, row: &[f64], scale: f64) -> Vec<f64> {
    let mut z: Vec<f64> = row.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    z.iter_mut().for_each(|v| *v -= mean);
    let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return row.to_vec();
    }
    row.iter()
        .zip(&z)
        .map(|(v, d)| v + scale * d / peak)
        .collect()
}

fn random_box_point(rng: &mut ChaCha8Rng, slots: usize, g: f64, cap: f64) -> Option<Vec<f64>> {
    let z: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.0..=cap)).collect();
    let p = vec![1.0; slots];
    let q: Vec<f64> = z.iter().map(|v| -v).collect();
    let lo = vec![0.0; slots];
    let hi = vec![cap; slots];
    ClippedLinear {
        p: &p,
        q: &q,
        lo: &lo,
        hi: &hi,
    }
    .solve(g)
    .ok()
    .map(|s| s.x)
}

/// Spot-checks that `profile` is a strict Nash equilibrium: first-order
/// stationarity for every user, and a strict cost increase under seeded
/// random unilateral deviations `ν_i + s (y - ν_i)` with `y` feasible and
/// `s ∈ [0.01, 1]` log-uniform.
pub fn verify_strict_ne(
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
    config: &StrictNeConfig,
) -> StrictNeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let slots = tilde.slots();
    let aggregate = profile.aggregate();
    let mut report = StrictNeReport {
        passed: true,
        seed: config.seed,
        samples_per_user: config.samples,
        tested: 0,
        skipped: 0,
        stationarity: Vec::with_capacity(users.len()),
        stationarity_limits: Vec::with_capacity(users.len()),
        violations: Vec::new(),
        worst_user: None,
    };
    let mut worst_ratio = 0.0f64;

    for i in 0..users.len() {
        let row = profile.row(i);
        let others: Vec<f64> = aggregate.iter().zip(row).map(|(a, v)| a - v).collect();
        let (g, cap) = (users.g()[i], users.nu_max()[i]);

        let bounds = match config.mode {
            ResponseMode::Hyperplane => SlotBounds::Free,
            ResponseMode::Box => SlotBounds::Uniform { lo: 0.0, hi: cap },
        };
        let grad_inf = (0..slots)
            .map(|t| ((2.0 * row[t] + others[t] + tilde.r()[t]) / tilde.w()[t]).abs())
            .fold(0.0, f64::max);
        let station = projected_stationarity(i, profile, tilde, users, bounds);
        let limit = 1e-7 * grad_inf.max(1.0);
        report.stationarity.push(station);
        report.stationarity_limits.push(limit);
        if station > limit {
            report.passed = false;
            if station / limit > worst_ratio {
                worst_ratio = station / limit;
                report.worst_user = Some(i);
            }
        }

        let base = cost_against(&others, row, tilde);
        let same_tol = 1e-12 * g.max(1.0);
        for _ in 0..config.samples {
            let target = match config.mode {
                ResponseMode::Hyperplane => {
                    Some(random_hyperplane_point(&mut rng, row, g / slots as f64))
                }
                ResponseMode::Box => random_box_point(&mut rng, slots, g, cap),
            };
            let s = 10f64.powf(rng.gen_range(-2.0..=0.0));
            let Some(target) = target else {
                report.skipped += 1;
                continue;
            };
            let deviation: Vec<f64> = row
                .iter()
                .zip(&target)
                .map(|(v, y)| v + s * (y - v))
                .collect();
            let moved = deviation
                .iter()
                .zip(row)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved <= same_tol {
                report.skipped += 1;
                continue;
            }
            report.tested += 1;
            let change = cost_against(&others, &deviation, tilde) - base;
            if !(change > 0.0) {
                report.passed = false;
                if worst_ratio == 0.0 && report.violations.iter().all(|v| v.cost_change > change) {
                    report.worst_user = Some(i);
                }
                report.violations.push(DeviationViolation {
                    user: i,
                    cost_change: change,
                    deviation,
                });
            }
        }
    }
    report
}
