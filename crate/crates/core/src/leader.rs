//! Leader-side numerics: the variance-minimising target for aggregate
//! flexible demand, and the fixed-step price search that steers the follower
//! equilibrium onto it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{check_perfect_se, optimal_tilde};
use crate::clipped::ClippedLinear;
use crate::error::{GameError, IterationFailure, Result};
use crate::followers::{
    best_response_dynamics, verify_strict_ne, DynamicsConfig, ResponseMode, StrictNeConfig,
};
use crate::gamecore::{
    controllable_supply, variance, DemandProfile, Diagnostics, EquilibriumReport, FlexUserSet,
    Method, PricingRule, ReportFlags, Scenario, TildeSeries,
};

/// Optimum of the leader's problem over aggregate flexible demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderTarget {
    pub nu_n_star: Vec<f64>,
    /// Common level `c(t)` of every slot strictly inside its bounds, so that
    /// `ν_N*(t) = clip(w(t) - r(t) + level, 0, ν_N^max)`.
    pub level: f64,
    /// Dual of the total-demand constraint for the `(1/T) Σ (c - c̄)²` objective.
    pub multiplier: f64,
    /// One-based slots at zero.
    pub active_lower: Vec<usize>,
    /// One-based slots at `ν_N^max`.
    pub active_upper: Vec<usize>,
    /// Optimal leader cost.
    pub cost: f64,
}

/// Minimises the variance of `c(t) = ν_N(t) + r(t) - w(t)` subject to
/// `Σ_t ν_N(t) = g_N` and `0 <= ν_N(t) <= ν_N^max`.
pub fn leader_qp(scenario: &Scenario, users: &FlexUserSet) -> Result<LeaderTarget> {
    let slots = scenario.slots();
    let cap = users.total_cap();
    let g_n = users.total_demand();
    if g_n > slots as f64 * cap * (1.0 + 1e-12) {
        return Err(GameError::InfeasibleBounds(format!(
            "g_N = {g_n} exceeds T * nu_N^max = {}",
            slots as f64 * cap
        )));
    }
    let p = vec![1.0; slots];
    let q: Vec<f64> = scenario
        .r()
        .iter()
        .zip(scenario.w())
        .map(|(r, w)| r - w)
        .collect();
    let lo = vec![0.0; slots];
    let hi = vec![cap; slots];
    let sol = ClippedLinear {
        p: &p,
        q: &q,
        lo: &lo,
        hi: &hi,
    }
    .solve(g_n)?;

    let c = controllable_supply(scenario, &sol.x);
    let mean = c.iter().sum::<f64>() / slots as f64;
    let tol = 1e-12 * cap.max(1.0);
    let active_lower = (0..slots)
        .filter(|&t| sol.x[t] <= tol)
        .map(|t| t + 1)
        .collect();
    let active_upper = (0..slots)
        .filter(|&t| sol.x[t] >= cap - tol)
        .map(|t| t + 1)
        .collect();
    Ok(LeaderTarget {
        cost: variance(&c),
        level: sol.multiplier,
        multiplier: 2.0 * (sol.multiplier - mean) / slots as f64,
        nu_n_star: sol.x,
        active_lower,
        active_upper,
    })
}

/// Starting point for the price search.
#[derive(Debug, Clone, PartialEq)]
pub enum PriceInit {
    /// Optimal closed-form rule with `w~` clamped to at least `1e-6 · g_N / T`.
    Analytic,
    /// Seeded random positive sequences around `g_N / T`.
    Random {
        seed: u64,
    },
    Tilde {
        w: Vec<f64>,
        r: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct PriceSearchConfig {
    /// Stop once `‖ν_N − ν_N*‖∞` drops below this.
    pub tol: f64,
    /// Initial adjustment of `r~`; `None` means `tol`.
    pub step: Option<f64>,
    pub init: PriceInit,
    pub max_outer: usize,
    /// ℓ₁ tolerance of the inner best-response dynamics; `None` means `1e-3 · tol`.
    pub follower_tol: Option<f64>,
    /// Sweep cap of the inner dynamics; `None` uses its default.
    pub follower_max_sweeps: Option<usize>,
    /// Outer iterations without a new best error before the step is halved.
    pub stall_window: usize,
}

impl PriceSearchConfig {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            step: None,
            init: PriceInit::Analytic,
            max_outer: 5_000,
            follower_tol: None,
            follower_max_sweeps: None,
            stall_window: 50,
        }
    }

    /// `1e-3 · g_N / T`.
    pub fn default_tol(users: &FlexUserSet, slots: usize) -> f64 {
        1e-3 * users.total_demand() / slots as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceSearchTrace {
    /// Outer iterations performed (0 when the start already matches).
    pub iterations: usize,
    /// `‖ν_N^(k) − ν_N*‖∞`, starting with `k = 0`.
    pub errors: Vec<f64>,
    /// Leader cost at each iterate.
    pub costs: Vec<f64>,
    /// Step in use at each outer iteration.
    pub steps: Vec<f64>,
    /// Total inner sweeps over the whole search.
    pub follower_sweeps: usize,
    pub final_r_tilde: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PriceSearchOutcome {
    pub rule: PricingRule,
    pub report: EquilibriumReport,
    pub trace: PriceSearchTrace,
    pub target: LeaderTarget,
}

fn initial_tilde(
    scenario: &Scenario,
    users: &FlexUserSet,
    init: &PriceInit,
) -> Result<TildeSeries> {
    let slots = scenario.slots();
    let n = users.len() as f64;
    let base = users.total_demand() / slots as f64;
    match init {
        PriceInit::Analytic => {
            let floor = 1e-6 * base;
            let (w, _) = optimal_tilde(scenario, users);
            let w: Vec<f64> = w.into_iter().map(|v| v.max(floor)).collect();
            let r = w.iter().map(|v| (n + 1.0) / n * v).collect();
            TildeSeries::new(w, r)
        }
        PriceInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let w = (0..slots).map(|_| base * rng.gen_range(0.5..1.5)).collect();
            let r = (0..slots).map(|_| base * rng.gen_range(0.5..1.5)).collect();
            TildeSeries::new(w, r)
        }
        PriceInit::Tilde { w, r } => {
            if w.len() != slots || r.len() != slots {
                return Err(GameError::LengthMismatch {
                    what: "initial tilde sequences",
                    expected: slots,
                    found: w.len().min(r.len()),
                });
            }
            TildeSeries::new(w.clone(), r.clone())
        }
    }
}

fn sup_error(aggregate: &[f64], target: &[f64]) -> f64 {
    aggregate
        .iter()
        .zip(target)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Holds `w~` fixed and moves `r~(t)` by `±step` towards the slot-wise target
/// until the box-constrained follower equilibrium matches the leader's
/// optimum to `tol` in the sup norm. The follower equilibrium is warm-started
/// from the previous one.
pub fn price_search(
    scenario: &Scenario,
    users: &FlexUserSet,
    config: &PriceSearchConfig,
) -> Result<PriceSearchOutcome> {
    if !(config.tol > 0.0) {
        return Err(GameError::InvalidScenario(format!(
            "price-search tolerance must be positive, got {}",
            config.tol
        )));
    }
    let slots = scenario.slots();
    users.validate_for(slots)?;
    let target = leader_qp(scenario, users)?;
    let tilde = initial_tilde(scenario, users, &config.init)?;
    let w_tilde = tilde.w().to_vec();
    let mut r_tilde = tilde.r().to_vec();

    let mut dynamics = DynamicsConfig::new(
        ResponseMode::Box,
        config.follower_tol.unwrap_or(1e-3 * config.tol),
    );
    dynamics.max_sweeps = config.follower_max_sweeps;

    let mut trace = PriceSearchTrace::default();
    let mut solve = |r: &[f64], init: Option<DemandProfile>, trace: &mut PriceSearchTrace| {
        let tilde = TildeSeries::new(w_tilde.clone(), r.to_vec())?;
        dynamics.init = init;
        let (profile, inner) = best_response_dynamics(&tilde, users, &dynamics)?;
        trace.follower_sweeps += inner.iterations;
        let aggregate = profile.aggregate();
        let error = sup_error(&aggregate, &target.nu_n_star);
        let cost = variance(&controllable_supply(scenario, &aggregate));
        trace.errors.push(error);
        trace.costs.push(cost);
        Ok::<_, GameError>((profile, error))
    };

    let (mut profile, mut error) = solve(&r_tilde, None, &mut trace)?;
    let mut best = (error, profile.clone(), r_tilde.clone());
    let mut step = config.step.unwrap_or(config.tol);
    let min_step = config.tol / 16.0;
    let mut since_best = 0usize;

    while error >= config.tol {
        if trace.iterations >= config.max_outer {
            trace.final_r_tilde = best.2;
            return Err(GameError::MaxIterExceeded(Box::new(
                IterationFailure::PriceSearch {
                    trace,
                    best: best.1,
                },
            )));
        }
        let aggregate = profile.aggregate();
        for t in 0..slots {
            if aggregate[t] > target.nu_n_star[t] {
                r_tilde[t] += step;
            } else if aggregate[t] < target.nu_n_star[t] {
                r_tilde[t] -= step;
            }
        }
        trace.steps.push(step);
        trace.iterations += 1;
        let (next, next_error) = solve(&r_tilde, Some(profile), &mut trace)?;
        profile = next;
        error = next_error;

        if error < best.0 {
            best = (error, profile.clone(), r_tilde.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.stall_window {
                step = (step / 2.0).max(min_step);
                since_best = 0;
            }
        }
    }
    trace.converged = true;
    trace.final_r_tilde = r_tilde.clone();

    let tilde = TildeSeries::new(w_tilde, r_tilde)?;
    // Tighten the final equilibrium so stationarity can be certified.
    let polish = DynamicsConfig {
        mode: ResponseMode::Box,
        tol: 1e-11 * users.total_demand().max(1.0),
        max_sweeps: config.follower_max_sweeps,
        init: Some(profile.clone()),
    };
    let profile = match best_response_dynamics(&tilde, users, &polish) {
        Ok((polished, _)) => polished,
        Err(GameError::MaxIterExceeded(_)) => profile,
        Err(e) => return Err(e),
    };
    let strict = verify_strict_ne(
        &profile,
        &tilde,
        users,
        &StrictNeConfig {
            mode: ResponseMode::Box,
            ..StrictNeConfig::default()
        },
    );
    let rule = PricingRule::from_tilde(scenario, &tilde)?;
    let report = EquilibriumReport::assemble(
        scenario,
        &rule,
        profile,
        ReportFlags {
            condition_satisfied: check_perfect_se(scenario, users).satisfied,
            strict_ne_checked: strict.passed,
            method: Method::Numeric,
        },
        Diagnostics {
            iterations: trace.iterations,
            final_residual: error,
        },
    )?;
    Ok(PriceSearchOutcome {
        rule,
        report,
        trace,
        target,
    })
}

/// Leader optimum followed by the price search from the clamped analytic rule.
pub fn numeric_se(
    scenario: &Scenario,
    users: &FlexUserSet,
    tol: f64,
) -> Result<PriceSearchOutcome> {
    let outcome = price_search(scenario, users, &PriceSearchConfig::new(tol))?;
    let error = sup_error(&outcome.report.aggregate(), &outcome.target.nu_n_star);
    // The final polish may move the aggregate slightly; allow a little slack.
    if error >= tol * (1.0 + 1e-6) {
        return Err(GameError::Consistency(format!(
            "aggregate demand misses the leader target by {error} (tolerance {tol})"
        )));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::analytic_nash;

    #[test]
    fn flat_residual_gives_flat_target() {
        let scenario = Scenario::new(vec![2.0; 4], vec![2.0; 4]).unwrap();
        let users = FlexUserSet::with_cap_factor(vec![1.0, 3.0], 4, 2.0).unwrap();
        let target = leader_qp(&scenario, &users).unwrap();
        for v in &target.nu_n_star {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(target.cost < 1e-28);
        assert!(target.active_lower.is_empty() && target.active_upper.is_empty());
    }

    #[test]
    fn clipped_slot_sits_on_the_cap() {
        let scenario = Scenario::new(vec![1.0, 30.0, 1.0, 1.0], vec![1.0; 4]).unwrap();
        let users = FlexUserSet::with_cap_factor(vec![4.0], 4, 2.0).unwrap();
        let target = leader_qp(&scenario, &users).unwrap();
        assert_eq!(target.active_upper, vec![2]);
        assert!((target.nu_n_star[1] - 2.0).abs() < 1e-14);
        assert!((target.nu_n_star.iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_aggregate() {
        let scenario = Scenario::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let users = FlexUserSet::new(vec![4.0], vec![1.0]).unwrap();
        assert!(matches!(
            leader_qp(&scenario, &users),
            Err(GameError::InfeasibleBounds(_))
        ));
        assert!(matches!(
            numeric_se(&scenario, &users, 1e-3),
            Err(GameError::InfeasibleBounds(_))
        ));
    }

    #[test]
    fn analytic_start_needs_no_iterations() {
        let scenario = Scenario::new(vec![5.0, 3.0, 4.0], vec![1.0, 1.5, 2.0]).unwrap();
        let users = FlexUserSet::with_cap_factor(vec![2.0, 3.0, 1.0], 3, 2.0).unwrap();
        assert!(check_perfect_se(&scenario, &users).satisfied);
        let outcome = numeric_se(&scenario, &users, 1e-6).unwrap();
        assert_eq!(outcome.trace.iterations, 0);
        assert!(outcome.report.leader_cost <= 1e-12);
        let exact = analytic_nash(&scenario, &users).unwrap();
        assert!(outcome.report.demand.max_abs_distance(&exact) <= 1e-5);
    }
}
