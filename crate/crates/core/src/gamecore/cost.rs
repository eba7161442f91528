use crate::error::{GameError, Result};

use super::model::{DemandProfile, PricingRule, Scenario, TildeSeries};

/// `w~ = w + a1`, `r~ = r + a2`; fails on the first slot with `w~(t) <= 0`.
pub fn tilde_transform(scenario: &Scenario, rule: &PricingRule) -> Result<TildeSeries> {
    if rule.slots() != scenario.slots() {
        return Err(GameError::LengthMismatch {
            what: "pricing rule",
            expected: scenario.slots(),
            found: rule.slots(),
        });
    }
    let w = scenario
        .w()
        .iter()
        .zip(&rule.a1)
        .map(|(w, a)| w + a)
        .collect();
    let r = scenario
        .r()
        .iter()
        .zip(&rule.a2)
        .map(|(r, a)| r + a)
        .collect();
    TildeSeries::new(w, r)
}

/// Slot prices `π(t) = (ν_N(t) + r~(t)) / w~(t)`.
pub fn prices(tilde: &TildeSeries, aggregate: &[f64]) -> Vec<f64> {
    aggregate
        .iter()
        .enumerate()
        .map(|(t, &a)| tilde.price(t, a))
        .collect()
}

pub fn price_series(
    scenario: &Scenario,
    rule: &PricingRule,
    demand: &DemandProfile,
) -> Result<Vec<f64>> {
    let tilde = tilde_transform(scenario, rule)?;
    check_slots(&tilde, demand)?;
    Ok(prices(&tilde, &demand.aggregate()))
}

/// `u_i^f = Σ_t π(t) ν_i(t)` evaluated by direct summation.
pub fn user_cost_tilde(i: usize, demand: &DemandProfile, tilde: &TildeSeries) -> f64 {
    let agg = demand.aggregate();
    demand
        .row(i)
        .iter()
        .enumerate()
        .map(|(t, v)| tilde.price(t, agg[t]) * v)
        .sum()
}

pub fn user_cost(
    i: usize,
    demand: &DemandProfile,
    scenario: &Scenario,
    rule: &PricingRule,
) -> Result<f64> {
    let tilde = tilde_transform(scenario, rule)?;
    check_slots(&tilde, demand)?;
    Ok(user_cost_tilde(i, demand, &tilde))
}

/// Controllable supply `c(t) = ν_N(t) + r(t) - w(t)`.
pub fn controllable_supply(scenario: &Scenario, aggregate: &[f64]) -> Vec<f64> {
    aggregate
        .iter()
        .zip(scenario.r().iter().zip(scenario.w()))
        .map(|(a, (r, w))| a + r - w)
        .collect()
}

/// Population variance `(1/T) Σ (x(t) - x̄)²`.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Leader cost `u^l`: the variance of the controllable supply.
pub fn leader_cost(scenario: &Scenario, aggregate: &[f64]) -> f64 {
    variance(&controllable_supply(scenario, aggregate))
}

fn check_slots(tilde: &TildeSeries, demand: &DemandProfile) -> Result<()> {
    if demand.slots() != tilde.slots() {
        return Err(GameError::LengthMismatch {
            what: "demand profile slots",
            expected: tilde.slots(),
            found: demand.slots(),
        });
    }
    Ok(())
}
