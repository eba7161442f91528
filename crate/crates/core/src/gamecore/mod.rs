//! Domain types, price family, and the quadratic-form algebra shared by all
//! solvers.

mod cost;
mod model;
pub mod quadratic;
mod report;

pub use cost::{
    controllable_supply, leader_cost, price_series, prices, tilde_transform, user_cost,
    user_cost_tilde, variance,
};
pub(crate) use model::scaled_tol;
pub use model::{DemandProfile, FlexUserSet, PricingRule, Scenario, TildeSeries, FEAS_TOL};
pub use quadratic::{quadratic_form, sherman_morrison_inverse, QuadraticForm};
pub use report::{Diagnostics, EquilibriumReport, Method, ReportFlags};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::GameError;

    fn scenario(w: &[f64], r: &[f64]) -> Scenario {
        Scenario::new(w.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn tilde_with_zero_adjustments_is_identity() {
        let s = scenario(&[5.0, 3.0], &[1.0, 1.0]);
        let tilde = tilde_transform(&s, &PricingRule::zero(2)).unwrap();
        assert_eq!(tilde.w(), &[5.0, 3.0]);
        assert_eq!(tilde.r(), &[1.0, 1.0]);
    }

    #[test]
    fn tilde_adds_elementwise() {
        let s = scenario(&[5.0, 3.0], &[1.0, 1.0]);
        let rule = PricingRule::new(vec![-1.0, -2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(tilde_transform(&s, &rule).unwrap().w(), &[4.0, 1.0]);
    }

    #[test]
    fn tilde_rejects_zero_supply() {
        let s = scenario(&[1.0, 1.0], &[0.0, 0.0]);
        let rule = PricingRule::new(vec![-1.0, 0.0], vec![0.0, 0.0]).unwrap();
        match tilde_transform(&s, &rule) {
            Err(GameError::NonpositiveTildeW { slot, value }) => {
                assert_eq!(slot, 1);
                assert_eq!(value, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn price_examples() {
        let s = scenario(&[5.0, 5.0], &[1.0, 1.0]);
        let demand = DemandProfile::new(vec![vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(
            price_series(&s, &PricingRule::zero(2), &demand).unwrap(),
            vec![1.0, 1.0]
        );

        let s = scenario(&[1.0, 1.0], &[0.0, 0.0]);
        let rule = PricingRule::new(vec![1.0, 1.0], vec![3.0, 3.0]).unwrap();
        let demand = DemandProfile::new(vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(price_series(&s, &rule, &demand).unwrap(), vec![1.5, 1.5]);
    }

    #[test]
    fn user_cost_examples() {
        // Unit price: w~ = ν_N + r~ with r~ = 0.
        let s = scenario(&[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0]);
        let demand = DemandProfile::new(vec![vec![2.0, 2.0, 2.0]]).unwrap();
        assert_eq!(
            user_cost(0, &demand, &s, &PricingRule::zero(3)).unwrap(),
            6.0
        );

        // π = (2, 3) on ν = (1, 2) → 8.
        let s = scenario(&[1.0, 1.0], &[0.0, 0.0]);
        let rule = PricingRule::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let demand = DemandProfile::new(vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(price_series(&s, &rule, &demand).unwrap(), vec![2.0, 3.0]);
        assert_eq!(user_cost(0, &demand, &s, &rule).unwrap(), 8.0);
    }

    #[test]
    fn scenario_rejects_single_slot_and_negative_values() {
        assert!(Scenario::new(vec![1.0], vec![1.0]).is_err());
        assert!(Scenario::new(vec![1.0, -1.0], vec![1.0, 1.0]).is_err());
        assert!(Scenario::new(vec![1.0, f64::NAN], vec![1.0, 1.0]).is_err());
        assert!(Scenario::new(vec![1.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn users_validate_caps() {
        let users = FlexUserSet::new(vec![4.0, 2.0], vec![1.0, 0.5]).unwrap();
        assert_eq!(users.total_demand(), 6.0);
        assert_eq!(users.total_cap(), 1.5);
        assert!(users.validate_for(4).is_ok());
        assert!(users.validate_for(3).is_err());
        assert!(FlexUserSet::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn profile_feasibility() {
        let users = FlexUserSet::new(vec![2.0], vec![1.5]).unwrap();
        let ok = DemandProfile::new(vec![vec![0.5, 1.5]]).unwrap();
        assert!(ok.box_feasible(&users));
        let over = DemandProfile::new(vec![vec![-0.5, 2.5]]).unwrap();
        assert!(over.hyperplane_feasible(&users));
        assert!(!over.box_feasible(&users));
        let short = DemandProfile::new(vec![vec![0.5, 1.0]]).unwrap();
        assert!(!short.hyperplane_feasible(&users));
    }
}
