//! Reduced quadratic form of a follower's cost.
//!
//! On the hyperplane `Σ_t ν_i(t) = g_i` the last slot is implied, so a
//! follower's cost is a quadratic in `d_i = (ν_i(1), …, ν_i(T-1))`:
//!
//! ```text
//! u_i = d_iᵀ C d_i + μ_iᵀ d_i + h_i(T) g_i + g_i² / w~(T)
//! C   = diag(1/w~(1), …, 1/w~(T-1)) + (1/w~(T)) 𝟙𝟙ᵀ
//! ```
//!
//! `C` is symmetric positive definite whenever `w~ > 0`, and its inverse has
//! the closed form `diag(w~) - w~ w~ᵀ / Σ_t w~(t)` (Sherman–Morrison).

use nalgebra::{DMatrix, DVector};

use crate::error::{GameError, Result};

use super::model::{DemandProfile, FlexUserSet, TildeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub user: usize,
    pub c: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub const_term: f64,
}

impl QuadraticForm {
    pub fn evaluate(&self, d: &DVector<f64>) -> f64 {
        (d.transpose() * &self.c * d)[(0, 0)] + self.mu.dot(d) + self.const_term
    }

    /// `2 C d + μ`.
    pub fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.c * d * 2.0 + &self.mu
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.c * 2.0
    }
}

/// First `T-1` entries of a full demand row.
pub fn reduce(row: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(&row[..row.len() - 1])
}

/// Full row from reduced coordinates: `ν(T) = g - Σ_{t<T} ν(t)`.
pub fn lift(d: &DVector<f64>, total: f64) -> Vec<f64> {
    let mut row: Vec<f64> = d.iter().copied().collect();
    row.push(total - d.sum());
    row
}

/// `C = diag(1/w~(1..T-1)) + (1/w~(T)) 𝟙𝟙ᵀ`.
pub fn c_matrix(tilde: &TildeSeries) -> DMatrix<f64> {
    let w = tilde.w();
    let m = w.len() - 1;
    let last = 1.0 / w[m];
    DMatrix::from_fn(m, m, |a, b| if a == b { 1.0 / w[a] + last } else { last })
}

/// `g~_i = ((g_N + g_i + r~(T)) / w~(T)) 𝟙 - (r~(t) / w~(t))_{t<T}`.
pub fn g_tilde(i: usize, tilde: &TildeSeries, users: &FlexUserSet) -> DVector<f64> {
    let (w, r) = (tilde.w(), tilde.r());
    let m = w.len() - 1;
    let head = (users.total_demand() + users.g()[i] + r[m]) / w[m];
    DVector::from_fn(m, |t, _| head - r[t] / w[t])
}

/// Linear term from the reduced expression `μ_i = C Σ_{j≠i} d_j - g~_i`.
///
/// Assumes the other users sit on their hyperplanes.
pub fn mu_reduced(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> DVector<f64> {
    let others = reduce(&profile.others(i));
    c_matrix(tilde) * others - g_tilde(i, tilde, users)
}

fn h_values(i: usize, profile: &DemandProfile, tilde: &TildeSeries) -> Vec<f64> {
    profile
        .others(i)
        .iter()
        .zip(tilde.r().iter().zip(tilde.w()))
        .map(|(s, (r, w))| (s + r) / w)
        .collect()
}

/// Linear term from the stacked form `μ_i(t) = h_i(t) - h_i(T) - 2 g_i / w~(T)`
/// with `h_i(t) = (Σ_{j≠i} ν_j(t) + r~(t)) / w~(t)`.
pub fn mu_stacked(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> DVector<f64> {
    let h = h_values(i, profile, tilde);
    let m = h.len() - 1;
    let shift = h[m] + 2.0 * users.g()[i] / tilde.w()[m];
    DVector::from_fn(m, |t, _| h[t] - shift)
}

/// Quadratic form of user `i`'s cost against the other rows of `profile`
/// (row `i` itself is ignored).
pub fn quadratic_form(
    i: usize,
    profile: &DemandProfile,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<QuadraticForm> {
    if profile.slots() != tilde.slots() {
        return Err(GameError::LengthMismatch {
            what: "demand profile slots",
            expected: tilde.slots(),
            found: profile.slots(),
        });
    }
    if tilde.slots() < 2 {
        return Err(GameError::InvalidScenario(
            "quadratic form needs T >= 2".into(),
        ));
    }
    let h = h_values(i, profile, tilde);
    let m = h.len() - 1;
    let g = users.g()[i];
    Ok(QuadraticForm {
        user: i,
        c: c_matrix(tilde),
        mu: mu_reduced(i, profile, tilde, users),
        const_term: h[m] * g + g * g / tilde.w()[m],
    })
}

/// `C⁻¹ = diag(w~(1..T-1)) - w~ w~ᵀ / Σ_t w~(t)`.
pub fn sherman_morrison_inverse(tilde_w: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(t) = tilde_w.iter().position(|&v| !(v > 0.0)) {
        return Err(GameError::NonpositiveTildeW {
            slot: t + 1,
            value: tilde_w[t],
        });
    }
    if tilde_w.len() < 2 {
        return Err(GameError::InvalidScenario("C needs T >= 2".into()));
    }
    let total: f64 = tilde_w.iter().sum();
    let m = tilde_w.len() - 1;
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let outer = tilde_w[a] * tilde_w[b] / total;
        if a == b {
            tilde_w[a] - outer
        } else {
            -outer
        }
    }))
}
