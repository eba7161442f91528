//! Closed-form results for the price family `π(t) = (ν_N(t) + r~(t)) / w~(t)`.
//!
//! * [`general_nash`]: the unique follower equilibrium for any `w~ > 0`.
//! * [`optimal_rule`] / [`analytic_nash`]: the leader's optimal adjustments
//!   and the equilibrium they induce, at which controllable supply is flat.
//! * [`check_perfect_se`]: whether that equilibrium respects every user's cap.
//! * [`renewable_only_se`]: the special case with no controllable supply.
//! * [`prediction_nash`] / [`prediction_cost`]: the same rule built from a
//!   forecast `b` of `mean(r - w)`, and the leader cost the forecast error
//!   leaves behind.
//! * [`table2_sweep`]: that cost across slot resolutions with the forecast
//!   error per day held fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Clause, GameError, Result};
use crate::followers::{verify_strict_ne, ResponseMode, StrictNeConfig};
use crate::gamecore::{
    controllable_supply, scaled_tol, variance, DemandProfile, Diagnostics, EquilibriumReport,
    FlexUserSet, Method, PricingRule, ReportFlags, Scenario, TildeSeries,
};

/// `w~*(t) = g_N/T + w(t) - r(t) + mean(r - w)` and `r~* = ((n+1)/n) w~*`,
/// without any positivity check.
pub fn optimal_tilde(scenario: &Scenario, users: &FlexUserSet) -> (Vec<f64>, Vec<f64>) {
    let slots = scenario.slots() as f64;
    let shift = users.total_demand() / slots + scenario.mean_residual_load();
    forecast_tilde(scenario, users, shift)
}

fn forecast_tilde(scenario: &Scenario, users: &FlexUserSet, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let n = users.len() as f64;
    let w: Vec<f64> = scenario
        .w()
        .iter()
        .zip(scenario.r())
        .map(|(w, r)| w - r + shift)
        .collect();
    let r = w.iter().map(|v| (n + 1.0) / n * v).collect();
    (w, r)
}

/// Optimal adjustments `a1*(t) = g_N/T - r(t) + mean(r - w)` and
/// `a2*(t) = ((n+1)/n)(w(t) + a1*(t)) - r(t)`.
pub fn optimal_rule(scenario: &Scenario, users: &FlexUserSet) -> PricingRule {
    let (w_t, r_t) = optimal_tilde(scenario, users);
    let a1 = w_t.iter().zip(scenario.w()).map(|(a, b)| a - b).collect();
    let a2 = r_t.iter().zip(scenario.r()).map(|(a, b)| a - b).collect();
    PricingRule::new(a1, a2).expect("lengths agree by construction")
}

/// Unique Nash equilibrium of the follower game on the hyperplanes:
///
/// ```text
/// ν_i(t) = g_i w~(t) / W + (w~(t) R - W r~(t)) / ((n+1) W),   W = Σ w~, R = Σ r~
/// ```
pub fn general_nash(tilde: &TildeSeries, users: &FlexUserSet) -> DemandProfile {
    let n = users.len() as f64;
    let big_w = tilde.w_sum();
    let big_r = tilde.r_sum();
    let common: Vec<f64> = tilde
        .w()
        .iter()
        .zip(tilde.r())
        .map(|(w, r)| (w * big_r - big_w * r) / ((n + 1.0) * big_w))
        .collect();
    let rows = users
        .g()
        .iter()
        .map(|g| {
            tilde
                .w()
                .iter()
                .zip(&common)
                .map(|(w, c)| g * w / big_w + c)
                .collect()
        })
        .collect();
    DemandProfile::new(rows).expect("finite rectangular rows")
}

/// Equilibrium under the optimal rule: `ν_i*(t) = (g_i / g_N) w~*(t)`.
pub fn analytic_nash(scenario: &Scenario, users: &FlexUserSet) -> Result<DemandProfile> {
    let (w_t, _) = optimal_tilde(scenario, users);
    if let Some(t) = w_t.iter().position(|&v| !(v > 0.0)) {
        return Err(GameError::NonpositiveTildeW {
            slot: t + 1,
            value: w_t[t],
        });
    }
    Ok(proportional_profile(users, &w_t, users.total_demand()))
}

fn proportional_profile(users: &FlexUserSet, w_t: &[f64], denominator: f64) -> DemandProfile {
    let rows = users
        .g()
        .iter()
        .map(|g| w_t.iter().map(|w| g / denominator * w).collect())
        .collect();
    DemandProfile::new(rows).expect("finite rectangular rows")
}

/// Per-slot verdict for a condition of the form `0 < x(t) <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub satisfied: bool,
    pub bound: f64,
    /// `x(t)`; must be strictly positive.
    pub lower_margins: Vec<f64>,
    /// `bound - x(t)`; may be zero.
    pub upper_margins: Vec<f64>,
    /// One-based slots that break either inequality.
    pub violated_slots: Vec<usize>,
    /// One-based slots whose upper margin is zero up to rounding.
    pub binding_slots: Vec<usize>,
}

impl ConditionReport {
    fn evaluate(values: &[f64], bound: f64) -> Self {
        let tol = 1e-12 * bound.abs().max(1.0);
        let upper_margins: Vec<f64> = values.iter().map(|v| bound - v).collect();
        let violated_slots: Vec<usize> = (0..values.len())
            .filter(|&t| !(values[t] > 0.0) || upper_margins[t] < -tol)
            .map(|t| t + 1)
            .collect();
        let binding_slots = (0..values.len())
            .filter(|&t| upper_margins[t].abs() <= tol)
            .map(|t| t + 1)
            .collect();
        Self {
            satisfied: violated_slots.is_empty(),
            bound,
            lower_margins: values.to_vec(),
            upper_margins,
            violated_slots,
            binding_slots,
        }
    }
}

/// `0 < w~*(t) <= min_i(nu_max_i / g_i) · g_N` for every slot.
pub fn check_perfect_se(scenario: &Scenario, users: &FlexUserSet) -> ConditionReport {
    let (w_t, _) = optimal_tilde(scenario, users);
    ConditionReport::evaluate(&w_t, users.min_cap_ratio() * users.total_demand())
}

/// Rule, equilibrium and report of a closed-form Stackelberg equilibrium.
#[derive(Debug, Clone)]
pub struct AnalyticSe {
    pub rule: PricingRule,
    pub report: EquilibriumReport,
}

fn analytic_report(
    scenario: &Scenario,
    users: &FlexUserSet,
    rule: PricingRule,
    demand: DemandProfile,
) -> Result<AnalyticSe> {
    let tilde = crate::gamecore::tilde_transform(scenario, &rule)?;
    let strict = verify_strict_ne(
        &demand,
        &tilde,
        users,
        &StrictNeConfig {
            mode: ResponseMode::Box,
            ..StrictNeConfig::default()
        },
    );
    let report = EquilibriumReport::assemble(
        scenario,
        &rule,
        demand,
        ReportFlags {
            condition_satisfied: true,
            strict_ne_checked: strict.passed,
            method: Method::Analytic,
        },
        Diagnostics::default(),
    )?;
    Ok(AnalyticSe { rule, report })
}

/// Perfect Stackelberg equilibrium: optimal rule plus its equilibrium, with
/// zero leader cost. Fails when the perfect-SE condition does not hold.
pub fn perfect_se(scenario: &Scenario, users: &FlexUserSet) -> Result<AnalyticSe> {
    users.validate_for(scenario.slots())?;
    let condition = check_perfect_se(scenario, users);
    if !condition.satisfied {
        return Err(GameError::ConditionViolation {
            clause: Clause::PerfectSe,
            slots: condition.violated_slots,
        });
    }
    let demand = analytic_nash(scenario, users)?;
    analytic_report(scenario, users, optimal_rule(scenario, users), demand)
}

/// Equilibrium when renewables alone meet all demand: requires
/// `0 < w(t) - r(t) <= min_i(nu_max_i / g_i) · g_N` per slot and
/// `Σ w = g_N + Σ r`. Demand is `χ_i(t) = (g_i / g_N)(w(t) - r(t))` and the
/// price is `1 + 1/n + ν_N(t) / (w(t) - r(t))`.
pub fn renewable_only_se(scenario: &Scenario, users: &FlexUserSet) -> Result<AnalyticSe> {
    users.validate_for(scenario.slots())?;
    let g_n = users.total_demand();
    let net = scenario.net_renewable();
    let condition = ConditionReport::evaluate(&net, users.min_cap_ratio() * g_n);
    if !condition.satisfied {
        return Err(GameError::ConditionViolation {
            clause: Clause::RenewableBox,
            slots: condition.violated_slots,
        });
    }
    let w_sum: f64 = scenario.w().iter().sum();
    let r_sum: f64 = scenario.r().iter().sum();
    if (w_sum - g_n - r_sum).abs() > 1e-9 * w_sum.max(g_n + r_sum) {
        return Err(GameError::ConditionViolation {
            clause: Clause::RenewableTotal,
            slots: Vec::new(),
        });
    }
    let n = users.len() as f64;
    let a1 = scenario.r().iter().map(|r| -r).collect();
    let a2 = net
        .iter()
        .zip(scenario.r())
        .map(|(d, r)| (n + 1.0) / n * d - r)
        .collect();
    let rule = PricingRule::new(a1, a2)?;
    let demand = proportional_profile(users, &net, g_n);
    analytic_report(scenario, users, rule, demand)
}

/// A forecast `b` of `mean(r - w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSetting {
    pub b: f64,
}

impl PredictionSetting {
    pub fn new(b: f64) -> Self {
        Self { b }
    }

    /// `δ = b - mean(r - w)`.
    pub fn delta(&self, scenario: &Scenario) -> f64 {
        self.b - scenario.mean_residual_load()
    }

    /// `g_N + T δ`, the total of the forecast-based adjusted supply.
    pub fn denominator(&self, scenario: &Scenario, users: &FlexUserSet) -> f64 {
        users.total_demand() + scenario.slots() as f64 * self.delta(scenario)
    }
}

/// Forecast-based adjusted supply `w~(t) = w(t) - r(t) + g_N/T + b`.
pub fn prediction_tilde(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> (Vec<f64>, Vec<f64>) {
    let shift = users.total_demand() / scenario.slots() as f64 + setting.b;
    forecast_tilde(scenario, users, shift)
}

pub fn prediction_price_rule(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> Result<PricingRule> {
    let (w, r) = prediction_tilde(scenario, users, setting);
    let tilde = TildeSeries::new(w, r)?;
    PricingRule::from_tilde(scenario, &tilde)
}

/// `0 < w~(t) <= (g_N + T δ) · min_i(nu_max_i / g_i)` for every slot.
pub fn check_prediction(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> ConditionReport {
    let (w, _) = prediction_tilde(scenario, users, setting);
    let bound = setting.denominator(scenario, users) * users.min_cap_ratio();
    ConditionReport::evaluate(&w, bound)
}

fn prediction_guard(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> Result<f64> {
    let denominator = setting.denominator(scenario, users);
    if !(denominator > 0.0) {
        return Err(GameError::PredictionDomain { denominator });
    }
    let condition = check_prediction(scenario, users, setting);
    if !condition.satisfied {
        return Err(GameError::ConditionViolation {
            clause: Clause::Prediction,
            slots: condition.violated_slots,
        });
    }
    Ok(denominator)
}

/// Equilibrium under the forecast rule: `σ_i(t) = g_i w~(t) / (g_N + T δ)`.
pub fn prediction_nash(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> Result<DemandProfile> {
    let denominator = prediction_guard(scenario, users, setting)?;
    let (w, _) = prediction_tilde(scenario, users, setting);
    Ok(proportional_profile(users, &w, denominator))
}

/// Leader cost under a forecast, by formula and by simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCost {
    pub delta: f64,
    /// `g_N + T δ`.
    pub denominator: f64,
    /// `(T δ / (g_N + T δ))²`.
    pub prefactor: f64,
    /// Population variance of `w - r`.
    pub net_variance: f64,
    /// `prefactor · net_variance`.
    pub formula: f64,
    /// Variance of `c` computed from the equilibrium demand.
    pub simulated: f64,
}

/// `u^l = (T δ / (g_N + T δ))² · Var(w - r)`, cross-checked against the
/// leader cost of [`prediction_nash`].
pub fn prediction_cost(
    scenario: &Scenario,
    users: &FlexUserSet,
    setting: PredictionSetting,
) -> Result<PredictionCost> {
    let sigma = prediction_nash(scenario, users, setting)?;
    let denominator = setting.denominator(scenario, users);
    let delta = setting.delta(scenario);
    let t_delta = scenario.slots() as f64 * delta;
    let prefactor = (t_delta / denominator).powi(2);
    let net_variance = variance(&scenario.net_renewable());
    let formula = prefactor * net_variance;

    let aggregate = sigma.aggregate();
    let c = controllable_supply(scenario, &aggregate);
    let simulated = variance(&c);
    // Rounding in c(t) is relative to the terms summed, not to c itself.
    let magnitude = (0..c.len())
        .map(|t| aggregate[t].abs() + scenario.r()[t] + scenario.w()[t])
        .fold(0.0f64, f64::max);
    let rounding = 1e-14 * magnitude * (formula.sqrt() + 1e-14 * magnitude);
    if (simulated - formula).abs() > 1e-10 * formula + rounding {
        return Err(GameError::Consistency(format!(
            "forecast cost formula {formula} disagrees with simulation {simulated}"
        )));
    }
    Ok(PredictionCost {
        delta,
        denominator,
        prefactor,
        net_variance,
        formula,
        simulated,
    })
}

/// Inputs of a slot-resolution sweep of the forecast cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2Params {
    /// Realised daily renewable energy.
    pub daily_w_total: f64,
    /// Realised daily regular-user energy.
    pub daily_r_total: f64,
    /// Forecast daily renewable energy.
    pub predicted_w: f64,
    /// Forecast daily regular-user energy.
    pub predicted_r: f64,
    pub g_n: f64,
}

impl Table2Params {
    /// `T δ = (predicted_r - predicted_w) - Σ (r - w)`, independent of `T`.
    pub fn t_delta(&self) -> f64 {
        (self.predicted_r - self.predicted_w) - (self.daily_r_total - self.daily_w_total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub slots: usize,
    pub delta: f64,
    pub net_variance: f64,
    pub cost: f64,
    /// `cost / net_variance`; NaN when the variance is zero.
    pub ratio: f64,
    pub prefactor: f64,
}

/// Forecast leader cost for each `T` in `slot_counts`, on scenarios from
/// `generator` that resample the same day curves. Rows keep the input order.
pub fn table2_sweep<G>(
    params: &Table2Params,
    generator: G,
    slot_counts: &[usize],
) -> Result<Vec<Table2Row>>
where
    G: Fn(usize) -> Result<Scenario> + Sync,
{
    if slot_counts.is_empty() {
        return Err(GameError::InvalidScenario(
            "empty list of slot counts".into(),
        ));
    }
    if !(params.g_n > 0.0) {
        return Err(GameError::InvalidUsers(format!(
            "g_N must be positive, got {}",
            params.g_n
        )));
    }
    // Only g_N enters the cost; one uncapped user keeps the box condition slack.
    let users = FlexUserSet::new(vec![params.g_n], vec![params.g_n])?;
    slot_counts
        .par_iter()
        .map(|&slots| {
            let scenario = generator(slots)?;
            if scenario.slots() != slots {
                return Err(GameError::LengthMismatch {
                    what: "generated scenario slots",
                    expected: slots,
                    found: scenario.slots(),
                });
            }
            let w_sum: f64 = scenario.w().iter().sum();
            let r_sum: f64 = scenario.r().iter().sum();
            if (w_sum - params.daily_w_total).abs() > scaled_tol(params.daily_w_total)
                || (r_sum - params.daily_r_total).abs() > scaled_tol(params.daily_r_total)
            {
                return Err(GameError::Consistency(format!(
                    "generated totals ({w_sum}, {r_sum}) differ from ({}, {})",
                    params.daily_w_total, params.daily_r_total
                )));
            }
            let b = (params.predicted_r - params.predicted_w) / slots as f64;
            let cost = prediction_cost(&scenario, &users, PredictionSetting::new(b))?;
            let ratio = cost.formula / cost.net_variance;
            if cost.net_variance > 0.0 && (ratio - cost.prefactor).abs() > 1e-9 {
                return Err(GameError::Consistency(format!(
                    "cost/variance ratio {ratio} differs from {}",
                    cost.prefactor
                )));
            }
            Ok(Table2Row {
                slots,
                delta: cost.delta,
                net_variance: cost.net_variance,
                cost: cost.simulated,
                ratio,
                prefactor: cost.prefactor,
            })
        })
        .collect()
}

/// Degenerate one-slot game: every user consumes its whole demand in the
/// only slot and the leader cost is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSlotOutcome {
    pub demand: Vec<f64>,
    pub controllable: f64,
    pub leader_cost: f64,
}

pub fn single_slot_equilibrium(users: &FlexUserSet, w: f64, r: f64) -> SingleSlotOutcome {
    SingleSlotOutcome {
        demand: users.g().to_vec(),
        controllable: users.total_demand() + r - w,
        leader_cost: 0.0,
    }
}
