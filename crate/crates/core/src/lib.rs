//! Stackelberg equilibria for real-time electricity pricing.
//!
//! A utility (the leader) prices energy in each of `T` slots with
//! `π(t) = (ν_N(t) + r~(t)) / w~(t)`, where `ν_N` is the aggregate demand of
//! `n` flexible users (the followers), each of whom schedules a fixed total
//! `g_i` across the day to minimise its bill. The leader wants the
//! controllable supply `c(t) = ν_N(t) + r(t) - w(t)` as flat as possible.
//!
//! * [`gamecore`]: domain types, prices, costs and the quadratic form of a
//!   follower's cost.
//! * [`analytic`]: closed-form equilibria and their feasibility conditions.
//! * [`followers`]: best responses and best-response dynamics.
//! * [`leader`]: the leader's target and the numerical price search.
//! * [`oracle`]: brute-force and finite-difference checks.
//! * [`synth`]: seeded synthetic day curves.

pub mod analytic;
mod clipped;
pub mod error;
pub mod followers;
pub mod gamecore;
pub mod leader;
pub mod oracle;
pub mod synth;

pub use error::{Clause, GameError, IterationFailure, Result};
pub use gamecore::{
    DemandProfile, EquilibriumReport, FlexUserSet, Method, PricingRule, Scenario, TildeSeries,
};
