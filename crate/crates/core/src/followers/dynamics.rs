use serde::{Deserialize, Serialize};

use crate::error::{GameError, IterationFailure, Result};
use crate::gamecore::{DemandProfile, FlexUserSet, TildeSeries};

use super::respond;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseMode {
    /// Only the per-user sum constraint.
    Hyperplane,
    /// Sum constraint plus `0 <= ν_i(t) <= nu_max_i`.
    Box,
}

#[derive(Debug, Clone)]
pub struct DynamicsConfig {
    pub mode: ResponseMode,
    /// Stop once the ℓ₁ change over one sweep drops below this.
    pub tol: f64,
    /// Sweep cap; `None` means `10 · n · T`.
    pub max_sweeps: Option<usize>,
    /// Starting profile; `None` means the flat profile `g_i / T`.
    pub init: Option<DemandProfile>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            mode: ResponseMode::Hyperplane,
            tol: 1e-8,
            max_sweeps: None,
            init: None,
        }
    }
}

impl DynamicsConfig {
    pub fn new(mode: ResponseMode, tol: f64) -> Self {
        Self {
            mode,
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BRIterationTrace {
    pub iterations: usize,
    /// `‖ν^(k+1) − ν^(k)‖₁` for each completed sweep.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl BRIterationTrace {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// One Gauss–Seidel sweep in ascending user order; returns the ℓ₁ change.
pub(crate) fn sweep(
    profile: &mut DemandProfile,
    aggregate: &mut [f64],
    mode: ResponseMode,
    tilde: &TildeSeries,
    users: &FlexUserSet,
) -> Result<f64> {
    let mut change = 0.0;
    let mut others = vec![0.0; aggregate.len()];
    for i in 0..profile.users() {
        let row = profile.row_mut(i);
        for ((o, a), v) in others.iter_mut().zip(aggregate.iter()).zip(row.iter()) {
            *o = a - v;
        }
        let next = respond(mode, i, &others, tilde, users)?;
        for t in 0..next.len() {
            change += (next[t] - row[t]).abs();
            aggregate[t] = others[t] + next[t];
        }
        *row = next;
    }
    Ok(change)
}

/// Sequential best-response dynamics. Users are updated in index order, each
/// against the freshest strategies of the others, until the ℓ₁ change of a
/// full sweep falls below `config.tol`.
pub fn best_response_dynamics(
    tilde: &TildeSeries,
    users: &FlexUserSet,
    config: &DynamicsConfig,
) -> Result<(DemandProfile, BRIterationTrace)> {
    let slots = tilde.slots();
    if users.is_empty() {
        return Err(GameError::InvalidUsers("no users".into()));
    }
    if config.mode == ResponseMode::Box {
        users.validate_for(slots)?;
    }
    let mut profile = match &config.init {
        Some(p) => {
            if p.users() != users.len() || p.slots() != slots {
                return Err(GameError::LengthMismatch {
                    what: "initial profile",
                    expected: users.len() * slots,
                    found: p.users() * p.slots(),
                });
            }
            p.clone()
        }
        None => DemandProfile::uniform(users, slots),
    };
    let max_sweeps = config.max_sweeps.unwrap_or(10 * users.len() * slots).max(1);

    let mut trace = BRIterationTrace::default();
    while trace.iterations < max_sweeps {
        // Refresh the aggregate every sweep so rounding does not accumulate.
        let mut aggregate = profile.aggregate();
        let change = sweep(&mut profile, &mut aggregate, config.mode, tilde, users)?;
        trace.iterations += 1;
        trace.residuals.push(change);
        if change < config.tol {
            trace.converged = true;
            return Ok((profile, trace));
        }
    }
    Err(GameError::MaxIterExceeded(Box::new(
        IterationFailure::BestResponse {
            trace,
            last: profile,
        },
    )))
}
