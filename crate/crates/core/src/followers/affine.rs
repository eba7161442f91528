use nalgebra::DMatrix;

use crate::error::{GameError, Result};
use crate::gamecore::{DemandProfile, FlexUserSet, TildeSeries};

use super::alpha;

/// Largest `n` for which the spectral radius is computed and checked when a
/// map is built.
pub const RHO_CHECK_MAX_USERS: usize = 256;

/// One hyperplane-mode sweep written as `ν ↦ L ν + M`, with `L` acting on
/// the user index of each slot column.
#[derive(Debug, Clone)]
pub struct BRAffineMap {
    pub l: DMatrix<f64>,
    /// `n × T` offset.
    pub m: DMatrix<f64>,
    /// Spectral radius of `l`; `None` above [`RHO_CHECK_MAX_USERS`].
    pub rho: Option<f64>,
}

/// `e_j`: `j` leading zeros followed by ones (length `n`, `j` one-based).
fn e(j: usize, n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |k| if k > j { 1.0 } else { 0.0 })
}

/// Linear part of the sweep map. Row `i` is
/// `-½ (e_i - Σ_{j<i} 2^{-(i-j)} e_j)`; it depends only on `n`.
pub fn sweep_matrix(n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for i in 1..=n {
        for (k, v) in e(i, n).enumerate() {
            l[(i - 1, k)] -= 0.5 * v;
        }
        for j in 1..i {
            let weight = 0.5 * 0.5f64.powi((i - j) as i32);
            for (k, v) in e(j, n).enumerate() {
                l[(i - 1, k)] += weight * v;
            }
        }
    }
    l
}

/// Spectral radius via a real Schur decomposition.
pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000)
        .ok_or_else(|| GameError::Consistency("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn br_map(tilde: &TildeSeries, users: &FlexUserSet) -> Result<BRAffineMap> {
    let n = users.len();
    let slots = tilde.slots();
    let l = sweep_matrix(n);

    let alphas: Vec<f64> = (0..n).map(|i| alpha(i, tilde, users)).collect();
    let mut m = DMatrix::zeros(n, slots);
    for i in 1..=n {
        let coeff = alphas[i - 1]
            - (1..i)
                .map(|j| alphas[j - 1] * 0.5f64.powi((i - j) as i32))
                .sum::<f64>();
        let r_coeff = 0.5f64.powi(i as i32);
        for t in 0..slots {
            m[(i - 1, t)] = coeff * tilde.w()[t] - r_coeff * tilde.r()[t];
        }
    }

    let rho = if n <= RHO_CHECK_MAX_USERS {
        let rho = spectral_radius(&l)?;
        if rho >= 1.0 {
            return Err(GameError::Consistency(format!(
                "sweep matrix for n = {n} has spectral radius {rho}"
            )));
        }
        Some(rho)
    } else {
        None
    };
    Ok(BRAffineMap { l, m, rho })
}

impl BRAffineMap {
    pub fn apply(&self, profile: &DemandProfile) -> Result<DemandProfile> {
        let n = self.l.nrows();
        if profile.users() != n || profile.slots() != self.m.ncols() {
            return Err(GameError::LengthMismatch {
                what: "profile",
                expected: n * self.m.ncols(),
                found: profile.users() * profile.slots(),
            });
        }
        let stacked = DMatrix::from_fn(n, profile.slots(), |i, t| profile.row(i)[t]);
        let next = &self.l * stacked + &self.m;
        DemandProfile::new(
            (0..n)
                .map(|i| next.row(i).iter().copied().collect())
                .collect(),
        )
    }
}
