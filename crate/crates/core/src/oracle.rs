//! Independent verifiers. Nothing here reuses the solvers' closed forms: costs
//! are summed directly from prices, gradients come from differencing,
//! projections use plain bisection and equality-constrained minimisers come
//! from a dense KKT solve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::gamecore::{DemandProfile, FlexUserSet, Scenario, TildeSeries};

/// Upper limit on grid points per user.
pub const GRID_POINT_LIMIT: f64 = 1e7;

const MAX_GRID_SWEEPS: usize = 100_000;

/// Feasible range of each slot of one user's strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotBounds {
    Free,
    Uniform { lo: f64, hi: f64 },
    PerSlot { lo: Vec<f64>, hi: Vec<f64> },
}

impl SlotBounds {
    fn at(&self, t: usize) -> (f64, f64) {
        match self {
            SlotBounds::Free => (f64::NEG_INFINITY, f64::INFINITY),
            SlotBounds::Uniform { lo, hi } => (*lo, *hi),
            SlotBounds::PerSlot { lo, hi } => (lo[t], hi[t]),
        }
    }
}

fn others_of(i: usize, profile: &DemandProfile) -> Vec<f64> {
    let mut s = vec![0.0; profile.slots()];
    for (j, row) in profile.rows().iter().enumerate() {
        if j != i {
            for (a, v) in s.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    s
}

/// `Σ_t π(t) ν(t)` with `π(t) = (others(t) + ν(t) + r~(t)) / w~(t)`.
fn direct_cost(row: &[f64], others: &[f64], tilde: &TildeSeries) -> f64 {
    let mut total = 0.0;
    for t in 0..row.len() {
        let price = (others[t] + row[t] + tilde.r()[t]) / tilde.w()[t];
        total += price * row[t];
    }
    total
}

fn reduced_cost(d: &[f64], g: f64, others: &[f64], tilde: &TildeSeries) -> f64 {
    let mut row = d.to_vec();
    row.push(g - d.iter().sum::<f64>());
    direct_cost(&row, others, tilde)
}

/// Central-difference gradient of user `i`'s cost in the reduced
/// coordinates `d = (ν_i(1), …, ν_i(T-1))`, with `ν_i(T)` implied by the sum.
/// The step in coordinate `t` is `h · max(1, |d_t|)`.
pub fn finite_diff_gradient(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
    h: f64,
) -> DVector<f64> {
    let others = others_of(i, profile);
    let g = users.g()[i];
    let row = profile.row(i);
    let m = row.len() - 1;
    let base: Vec<f64> = row[..m].to_vec();
    DVector::from_fn(m, |t, _| {
        let step = h * base[t].abs().max(1.0);
        let mut up = base.clone();
        let mut down = base.clone();
        up[t] += step;
        down[t] -= step;
        (reduced_cost(&up, g, &others, tilde) - reduced_cost(&down, g, &others, tilde))
            / (2.0 * step)
    })
}

/// Hessian of the reduced cost by second differences with step `h`.
pub fn finite_diff_hessian(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
    h: f64,
) -> DMatrix<f64> {
    let others = others_of(i, profile);
    let g = users.g()[i];
    let row = profile.row(i);
    let m = row.len() - 1;
    let base: Vec<f64> = row[..m].to_vec();
    let eval = |da: (usize, f64), db: (usize, f64)| {
        let mut d = base.clone();
        d[da.0] += da.1;
        d[db.0] += db.1;
        reduced_cost(&d, g, &others, tilde)
    };
    DMatrix::from_fn(m, m, |a, b| {
        (eval((a, h), (b, h)) - eval((a, h), (b, -h)) - eval((a, -h), (b, h))
            + eval((a, -h), (b, -h)))
            / (4.0 * h * h)
    })
}

/// Solves `Σ_t clamp(λ - grad(t), a_t, b_t) = 0` by bisection and returns
/// the Euclidean norm of the resulting direction: the projection of `-grad`
/// onto the tangent cone of `{Σ x = const, lo <= x <= hi}` at `x`.
fn cone_projection_norm(x: &[f64], grad: &[f64], lo: &[f64], hi: &[f64], tol: f64) -> f64 {
    let ranges: Vec<(f64, f64)> = (0..x.len())
        .map(|t| {
            let at_lo = x[t] <= lo[t] + tol;
            let at_hi = x[t] >= hi[t] - tol;
            match (at_lo, at_hi) {
                (true, true) => (0.0, 0.0),
                (true, false) => (0.0, f64::INFINITY),
                (false, true) => (f64::NEG_INFINITY, 0.0),
                (false, false) => (f64::NEG_INFINITY, f64::INFINITY),
            }
        })
        .collect();
    let direction = |lambda: f64| -> Vec<f64> {
        (0..x.len())
            .map(|t| (lambda - grad[t]).clamp(ranges[t].0, ranges[t].1))
            .collect()
    };
    let g_min = grad.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_max = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (g_min - 1.0, g_max + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if direction(mid).iter().sum::<f64>() < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    direction(0.5 * (a + b))
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn bounds_vectors(bounds: &SlotBounds, slots: usize) -> (Vec<f64>, Vec<f64>) {
    (0..slots).map(|t| bounds.at(t)).unzip()
}

/// Norm of the projected negative gradient of user `i`'s cost (full
/// coordinates) onto the feasible cone of `{Σ ν_i = g_i} ∩ bounds`; zero at a
/// constrained minimiser.
pub fn projected_stationarity(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
    bounds: SlotBounds,
) -> f64 {
    let others = others_of(i, profile);
    let row = profile.row(i);
    let grad: Vec<f64> = (0..row.len())
        .map(|t| (2.0 * row[t] + others[t] + tilde.r()[t]) / tilde.w()[t])
        .collect();
    let (lo, hi) = bounds_vectors(&bounds, row.len());
    let tol = 1e-9 * users.g()[i].max(1.0);
    cone_projection_norm(row, &grad, &lo, &hi, tol)
}

/// Projected-gradient norm of the leader's variance objective at an
/// aggregate demand `nu_n`.
pub fn leader_stationarity(scenario: &Scenario, users: &FlexUserSet, nu_n: &[f64]) -> f64 {
    let slots = nu_n.len() as f64;
    let c: Vec<f64> = (0..nu_n.len())
        .map(|t| nu_n[t] + scenario.r()[t] - scenario.w()[t])
        .collect();
    let mean = c.iter().sum::<f64>() / slots;
    let grad: Vec<f64> = c.iter().map(|v| 2.0 * (v - mean) / slots).collect();
    let lo = vec![0.0; nu_n.len()];
    let hi = vec![users.total_cap(); nu_n.len()];
    cone_projection_norm(nu_n, &grad, &lo, &hi, 1e-9 * users.total_demand().max(1.0))
}

/// Euclidean projection onto `{Σ x = total, lo <= x <= hi}` by bisection on
/// the shift.
pub fn project_capped_simplex(y: &[f64], lo: &[f64], hi: &[f64], total: f64) -> Vec<f64> {
    let place = |shift: f64| -> Vec<f64> {
        (0..y.len())
            .map(|t| (y[t] + shift).clamp(lo[t], hi[t]))
            .collect()
    };
    let span = y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + lo.iter()
            .chain(hi)
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
        + total.abs()
        + 1.0;
    let (mut a, mut b) = (-2.0 * span, 2.0 * span);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if place(mid).iter().sum::<f64>() < total {
            a = mid;
        } else {
            b = mid;
        }
    }
    place(0.5 * (a + b))
}

/// Minimiser of user `i`'s cost on `{Σ ν_i = g_i}` from the dense KKT system
/// `[2D 𝟙; 𝟙ᵀ 0] [ν; -λ] = [-(S + r~)/w~; g_i]`, `D = diag(1/w~)`.
pub fn kkt_hyperplane_best_response(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<Vec<f64>> {
    let slots = tilde.slots();
    let others = others_of(i, profile);
    let mut a = DMatrix::zeros(slots + 1, slots + 1);
    let mut rhs = DVector::zeros(slots + 1);
    for t in 0..slots {
        a[(t, t)] = 2.0 / tilde.w()[t];
        a[(t, slots)] = 1.0;
        a[(slots, t)] = 1.0;
        rhs[t] = -(others[t] + tilde.r()[t]) / tilde.w()[t];
    }
    rhs[slots] = users.g()[i];
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GameError::Consistency("singular KKT system".into()))?;
    Ok(sol.iter().take(slots).copied().collect())
}

/// Box-constrained best response of user `i` by projected gradient descent
/// with step `min w~ / 2`, run until the iterate stops moving.
pub fn projected_gradient_best_response(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
    max_iter: usize,
) -> Vec<f64> {
    let slots = tilde.slots();
    let others = others_of(i, profile);
    let g = users.g()[i];
    let lo = vec![0.0; slots];
    let hi = vec![users.nu_max()[i]; slots];
    let eta = 0.5 * tilde.w().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut x = vec![g / slots as f64; slots];
    for _ in 0..max_iter {
        let y: Vec<f64> = (0..slots)
            .map(|t| x[t] - eta * (2.0 * x[t] + others[t] + tilde.r()[t]) / tilde.w()[t])
            .collect();
        let next = project_capped_simplex(&y, &lo, &hi, g);
        let moved = next
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        if moved <= 1e-15 * g.max(1.0) {
            break;
        }
    }
    x
}

/// Leader optimum by projected gradient descent on the variance objective.
pub fn projected_gradient_leader(
    scenario: &Scenario,
    users: &FlexUserSet,
    max_iter: usize,
) -> Vec<f64> {
    let slots = scenario.slots();
    let g_n = users.total_demand();
    let lo = vec![0.0; slots];
    let hi = vec![users.total_cap(); slots];
    let mut x = vec![g_n / slots as f64; slots];
    // Gradient (2/T)(c - c̄); step T/4 halves the error per iteration.
    let eta = slots as f64 / 4.0;
    for _ in 0..max_iter {
        let c: Vec<f64> = (0..slots)
            .map(|t| x[t] + scenario.r()[t] - scenario.w()[t])
            .collect();
        let mean = c.iter().sum::<f64>() / slots as f64;
        let y: Vec<f64> = (0..slots)
            .map(|t| x[t] - eta * 2.0 * (c[t] - mean) / slots as f64)
            .collect();
        let next = project_capped_simplex(&y, &lo, &hi, g_n);
        let moved = next
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        if moved <= 1e-15 * g_n.max(1.0) {
            break;
        }
    }
    x
}

/// Per-user, per-slot grid ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Intervals per dimension (`m + 1` points).
    pub resolution: usize,
    /// `lower[i][t]`, one entry per slot including the implied last one.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl GridSpec {
    /// Every slot of user `i` on `[0, g_i]`.
    pub fn natural(users: &FlexUserSet, slots: usize, resolution: usize) -> Self {
        Self {
            resolution,
            lower: users.g().iter().map(|_| vec![0.0; slots]).collect(),
            upper: users.g().iter().map(|&g| vec![g; slots]).collect(),
        }
    }

    /// Every slot of user `i` on `[0, nu_max_i]`.
    pub fn boxed(users: &FlexUserSet, slots: usize, resolution: usize) -> Self {
        Self {
            resolution,
            lower: users.g().iter().map(|_| vec![0.0; slots]).collect(),
            upper: users.nu_max().iter().map(|&c| vec![c; slots]).collect(),
        }
    }

    pub fn spacing(&self, i: usize, t: usize) -> f64 {
        (self.upper[i][t] - self.lower[i][t]) / self.resolution as f64
    }

    /// Grid points per user, `(m + 1)^(T - 1)`.
    pub fn points_per_user(&self) -> f64 {
        let dims = self.lower.first().map_or(0, |l| l.len().saturating_sub(1));
        (self.resolution as f64 + 1.0).powi(dims as i32)
    }

    fn point(&self, i: usize, mut index: usize) -> Vec<f64> {
        let dims = self.lower[i].len() - 1;
        let base = self.resolution + 1;
        let mut d = vec![0.0; dims];
        for (t, v) in d.iter_mut().enumerate() {
            let k = index % base;
            index /= base;
            *v = self.lower[i][t] + k as f64 * self.spacing(i, t);
        }
        d
    }

    fn nearest_index(&self, i: usize, d: &[f64]) -> usize {
        let base = self.resolution + 1;
        let mut index = 0;
        for t in (0..d.len()).rev() {
            let k = ((d[t] - self.lower[i][t]) / self.spacing(i, t))
                .round()
                .clamp(0.0, self.resolution as f64) as usize;
            index = index * base + k;
        }
        index
    }
}

/// Result of the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCertificate {
    pub profile: DemandProfile,
    /// Largest cost reduction any user could still obtain by moving to
    /// another grid point; zero when the search terminated normally.
    pub grid_margin: f64,
    /// Largest cost reduction any user could obtain by an unrestricted
    /// move on its hyperplane (dense KKT solve).
    pub continuous_regret: f64,
    /// Largest grid spacing over users and slots.
    pub max_spacing: f64,
    pub sweeps: usize,
}

/// Grid equilibrium by discrete best-response dynamics: each user in turn
/// moves to the cheapest grid point (lowest index on ties) when that strictly
/// lowers its cost. The game has an exact potential, so the dynamics stop at
/// a profile where no user can improve on the grid.
pub fn grid_search_ne(
    tilde: &TildeSeries,
    users: &FlexUserSet,
    spec: &GridSpec,
) -> Result<GridCertificate> {
    let slots = tilde.slots();
    let n = users.len();
    if slots < 2 {
        return Err(GameError::InvalidScenario(
            "grid search needs T >= 2".into(),
        ));
    }
    if spec.lower.len() != n || spec.upper.len() != n || spec.resolution == 0 {
        return Err(GameError::LengthMismatch {
            what: "grid spec users",
            expected: n,
            found: spec.lower.len(),
        });
    }
    let points = spec.points_per_user();
    if points > GRID_POINT_LIMIT {
        return Err(GameError::GridTooLarge {
            points,
            limit: GRID_POINT_LIMIT,
        });
    }
    let count = points as usize;

    let mut index: Vec<usize> = (0..n)
        .map(|i| {
            let g = users.g()[i];
            spec.nearest_index(i, &vec![g / slots as f64; slots - 1])
        })
        .collect();
    let row_of = |i: usize, k: usize| -> Option<Vec<f64>> {
        let mut row = spec.point(i, k);
        let last = users.g()[i] - row.iter().sum::<f64>();
        let tol = 1e-12 * users.g()[i].max(1.0);
        if last < spec.lower[i][slots - 1] - tol || last > spec.upper[i][slots - 1] + tol {
            return None;
        }
        row.push(last);
        Some(row)
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, idx) in index.iter_mut().enumerate() {
        match row_of(i, *idx) {
            Some(row) => rows.push(row),
            None => {
                // Fall back to the first feasible grid point.
                let k = (0..count)
                    .find(|&k| row_of(i, k).is_some())
                    .ok_or_else(|| {
                        GameError::InfeasibleBounds(format!("no grid point for user {}", i + 1))
                    })?;
                *idx = k;
                rows.push(row_of(i, k).expect("feasible"));
            }
        }
    }

    let best_point = |i: usize, rows: &[Vec<f64>]| -> (f64, usize) {
        let mut others = vec![0.0; slots];
        for (j, row) in rows.iter().enumerate() {
            if j != i {
                for (a, v) in others.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        (0..count)
            .into_par_iter()
            .filter_map(|k| row_of(i, k).map(|row| (direct_cost(&row, &others, tilde), k)))
            .reduce(
                || (f64::INFINITY, usize::MAX),
                |a, b| if (a.0, a.1) <= (b.0, b.1) { a } else { b },
            )
    };
    let cost_of = |i: usize, rows: &[Vec<f64>]| -> f64 {
        let mut others = vec![0.0; slots];
        for (j, row) in rows.iter().enumerate() {
            if j != i {
                for (a, v) in others.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        direct_cost(&rows[i], &others, tilde)
    };

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut moved = false;
        for i in 0..n {
            let current = cost_of(i, &rows);
            let (best, k) = best_point(i, &rows);
            // Require a margin above rounding so the potential strictly drops.
            if best < current - 1e-14 * current.abs().max(1.0) && k != index[i] {
                index[i] = k;
                rows[i] = row_of(i, k).expect("feasible");
                moved = true;
            }
        }
        if !moved || sweeps >= MAX_GRID_SWEEPS {
            break;
        }
    }

    let profile = DemandProfile::new(rows.clone())?;
    let mut grid_margin = 0.0f64;
    let mut continuous_regret = 0.0f64;
    for i in 0..n {
        let current = cost_of(i, &rows);
        grid_margin = grid_margin.max(current - best_point(i, &rows).0);
        let br = kkt_hyperplane_best_response(i, &profile, tilde, users)?;
        let mut trial = rows.clone();
        trial[i] = br;
        continuous_regret = continuous_regret.max(current - cost_of(i, &trial));
    }
    let max_spacing = (0..n)
        .flat_map(|i| (0..slots).map(move |t| (i, t)))
        .map(|(i, t)| spec.spacing(i, t))
        .fold(0.0, f64::max);
    Ok(GridCertificate {
        profile,
        grid_margin,
        continuous_regret,
        max_spacing,
        sweeps,
    })
}
