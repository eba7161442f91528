use std::fmt;

use thiserror::Error;

use crate::followers::BRIterationTrace;
use crate::leader::PriceSearchTrace;
use crate::DemandProfile;

/// Which closed-form feasibility condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// Perfect-SE box condition on the optimal adjusted supply.
    PerfectSe,
    /// Renewable-only condition: `0 < w - r <= bound` per slot.
    RenewableBox,
    /// Renewable-only condition: total renewable energy covers all demand.
    RenewableTotal,
    /// Box condition under a forecast of the mean residual load.
    Prediction,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::PerfectSe => "perfect-SE box condition",
            Clause::RenewableBox => "renewable-only slot condition",
            Clause::RenewableTotal => "renewable-only total-energy condition",
            Clause::Prediction => "prediction box condition",
        };
        f.write_str(s)
    }
}

/// Iterative solver state carried out of a failed run.
#[derive(Debug, Clone)]
pub enum IterationFailure {
    BestResponse {
        trace: BRIterationTrace,
        last: DemandProfile,
    },
    PriceSearch {
        trace: PriceSearchTrace,
        /// Follower equilibrium at the best iterate found.
        best: DemandProfile,
    },
}

impl IterationFailure {
    pub fn iterations(&self) -> usize {
        match self {
            IterationFailure::BestResponse { trace, .. } => trace.iterations,
            IterationFailure::PriceSearch { trace, .. } => trace.iterations,
        }
    }

    pub fn final_residual(&self) -> f64 {
        match self {
            IterationFailure::BestResponse { trace, .. } => {
                trace.residuals.last().copied().unwrap_or(f64::NAN)
            }
            IterationFailure::PriceSearch { trace, .. } => {
                trace.errors.last().copied().unwrap_or(f64::NAN)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("adjusted supply w~ is not positive at slot {slot} (value {value})")]
    NonpositiveTildeW { slot: usize, value: f64 },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid user set: {0}")]
    InvalidUsers(String),

    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),

    #[error("{clause} violated at slots {slots:?}")]
    ConditionViolation { clause: Clause, slots: Vec<usize> },

    #[error("forecast leaves a non-positive effective demand g_N + T*delta = {denominator}")]
    PredictionDomain { denominator: f64 },

    #[error(
        "no convergence after {} iterations (last residual {})",
        .0.iterations(),
        .0.final_residual()
    )]
    MaxIterExceeded(Box<IterationFailure>),

    #[error("per-user grid of {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;
