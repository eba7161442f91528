use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::cost::{controllable_supply, prices, tilde_transform, user_cost_tilde, variance};
use super::model::{DemandProfile, PricingRule, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    /// The perfect-SE condition holds for the scenario.
    pub condition_satisfied: bool,
    /// Random unilateral deviations all raised the deviating user's cost.
    pub strict_ne_checked: bool,
    pub method: Method,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_residual: f64,
}

/// Demands, prices, and costs at an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub demand: DemandProfile,
    pub prices: Vec<f64>,
    pub controllable: Vec<f64>,
    pub leader_cost: f64,
    pub user_costs: Vec<f64>,
    pub flags: ReportFlags,
    pub diagnostics: Diagnostics,
}

impl EquilibriumReport {
    /// Derives prices, controllable supply and all costs from a demand profile.
    pub fn assemble(
        scenario: &Scenario,
        rule: &PricingRule,
        demand: DemandProfile,
        flags: ReportFlags,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let tilde = tilde_transform(scenario, rule)?;
        let aggregate = demand.aggregate();
        let prices = prices(&tilde, &aggregate);
        let controllable = controllable_supply(scenario, &aggregate);
        let leader_cost = variance(&controllable);
        let user_costs = (0..demand.users())
            .map(|i| user_cost_tilde(i, &demand, &tilde))
            .collect();
        Ok(Self {
            demand,
            prices,
            controllable,
            leader_cost,
            user_costs,
            flags,
            diagnostics,
        })
    }

    pub fn aggregate(&self) -> Vec<f64> {
        self.demand.aggregate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leader_cost_is_variance_of_balance() {
        let scenario = Scenario::new(vec![5.0, 3.0], vec![1.0, 1.0]).unwrap();
        let demand = DemandProfile::new(vec![vec![1.0, 3.0]]).unwrap();
        let report = EquilibriumReport::assemble(
            &scenario,
            &PricingRule::zero(2),
            demand,
            ReportFlags {
                condition_satisfied: false,
                strict_ne_checked: false,
                method: Method::Numeric,
            },
            Diagnostics::default(),
        )
        .unwrap();
        // c = (1+1-5, 3+1-3) = (-3, 1); variance 4.
        assert_eq!(report.controllable, vec![-3.0, 1.0]);
        assert_eq!(report.leader_cost, 4.0);
        assert_eq!(report.prices, vec![2.0 / 5.0, 4.0 / 3.0]);
    }
}
