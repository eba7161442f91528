//! Follower-side numerics: best responses, sequential best-response dynamics,
//! the affine sweep map and its contraction diagnostics, and strict-NE checks.

mod affine;
mod dynamics;
mod strict;

pub use affine::{br_map, sweep_matrix, BRAffineMap, RHO_CHECK_MAX_USERS};
pub use dynamics::{best_response_dynamics, BRIterationTrace, DynamicsConfig, ResponseMode};
pub use strict::{verify_strict_ne, DeviationViolation, StrictNeConfig, StrictNeReport};

use crate::clipped::ClippedLinear;
use crate::error::{GameError, Result};
use crate::gamecore::{DemandProfile, FlexUserSet, TildeSeries};

/// `α_i = (g_N + g_i + Σ r~) / (2 Σ w~)`.
pub(crate) fn alpha(i: usize, tilde: &TildeSeries, users: &FlexUserSet) -> f64 {
    (users.total_demand() + users.g()[i] + tilde.r_sum()) / (2.0 * tilde.w_sum())
}

fn hyperplane_from_others(
    i: usize,
    others: &[f64],
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Vec<f64> {
    let a = alpha(i, tilde, users);
    others
        .iter()
        .zip(tilde.w().iter().zip(tilde.r()))
        .map(|(s, (w, r))| -0.5 * s + a * w - 0.5 * r)
        .collect()
}

fn box_from_others(
    i: usize,
    others: &[f64],
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<Vec<f64>> {
    let slots = tilde.slots();
    let g = users.g()[i];
    let cap = users.nu_max()[i];
    if g > slots as f64 * cap * (1.0 + 1e-12) {
        return Err(GameError::InfeasibleBounds(format!(
            "user {}: g = {g} exceeds T * nu_max = {}",
            i + 1,
            slots as f64 * cap
        )));
    }
    // Stationarity in slot t: (2ν(t) + S(t) + r~(t)) / w~(t) = λ.
    let p: Vec<f64> = tilde.w().iter().map(|w| 0.5 * w).collect();
    let q: Vec<f64> = others
        .iter()
        .zip(tilde.r())
        .map(|(s, r)| 0.5 * (s + r))
        .collect();
    let lo = vec![0.0; slots];
    let hi = vec![cap; slots];
    let sol = ClippedLinear {
        p: &p,
        q: &q,
        lo: &lo,
        hi: &hi,
    }
    .solve(g)?;
    Ok(sol.x)
}

/// Exact minimiser of user `i`'s cost over `Σ_t ν_i(t) = g_i`, with the other
/// rows of `profile` held fixed:
/// `ν̄_i = -½ Σ_{j≠i} ν_j + α_i w~ - ½ r~`.
pub fn hyperplane_best_response(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Vec<f64> {
    hyperplane_from_others(i, &profile.others(i), tilde, users)
}

/// Exact minimiser of user `i`'s cost over `{Σ_t ν_i(t) = g_i, 0 <= ν_i(t) <= nu_max_i}`.
pub fn box_best_response(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<Vec<f64>> {
    box_from_others(i, &profile.others(i), tilde, users)
}

pub(crate) fn respond(
    mode: ResponseMode,
    i: usize,
    others: &[f64],
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<Vec<f64>> {
    match mode {
        ResponseMode::Hyperplane => Ok(hyperplane_from_others(i, others, tilde, users)),
        ResponseMode::Box => box_from_others(i, others, tilde, users),
    }
}
