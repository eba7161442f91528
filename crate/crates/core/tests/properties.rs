use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackgrid::analytic::{
    analytic_nash, check_perfect_se, general_nash, optimal_rule, prediction_cost, prediction_nash,
    prediction_price_rule, prediction_tilde, PredictionSetting,
};
use stackgrid::followers::{
    best_response_dynamics, box_best_response, hyperplane_best_response, DynamicsConfig,
    ResponseMode,
};
use stackgrid::gamecore::{
    controllable_supply, price_series, quadratic_form, tilde_transform, user_cost, variance,
};
use stackgrid::leader::{leader_qp, numeric_se, PriceSearchConfig};
use stackgrid::oracle::{
    grid_search_ne, leader_stationarity, projected_gradient_best_response,
    projected_gradient_leader, projected_stationarity, GridSpec, SlotBounds,
};
use stackgrid::{DemandProfile, FlexUserSet, Scenario, TildeSeries};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn random_users(rng: &mut ChaCha8Rng, n: usize, slots: usize, cap_factor: f64) -> FlexUserSet {
    let g = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
    FlexUserSet::with_cap_factor(g, slots, cap_factor).unwrap()
}

fn random_scenario(rng: &mut ChaCha8Rng, slots: usize, scale: f64) -> Scenario {
    let w = (0..slots)
        .map(|_| rng.gen_range(0.0..3.0) * scale)
        .collect();
    let r = (0..slots)
        .map(|_| rng.gen_range(0.5..3.0) * scale)
        .collect();
    Scenario::new(w, r).unwrap()
}

fn random_tilde(rng: &mut ChaCha8Rng, slots: usize) -> TildeSeries {
    let w = (0..slots).map(|_| rng.gen_range(0.3..3.0)).collect();
    let r = (0..slots).map(|_| rng.gen_range(0.0..3.0)).collect();
    TildeSeries::new(w, r).unwrap()
}

/// Rows with positive entries summing to `g_i`.
fn random_profile(rng: &mut ChaCha8Rng, users: &FlexUserSet, slots: usize) -> DemandProfile {
    let rows = users
        .g()
        .iter()
        .map(|&g| {
            let raw: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| v * g / sum).collect()
        })
        .collect();
    DemandProfile::new(rows).unwrap()
}

/// Instance whose optimal adjusted supply sits inside `(0, bound]`.
fn condition_instance(rng: &mut ChaCha8Rng, n: usize, slots: usize) -> (Scenario, FlexUserSet) {
    let users = random_users(rng, n, slots, 3.0);
    let per_slot = users.total_demand() / slots as f64;
    let r: Vec<f64> = (0..slots)
        .map(|_| rng.gen_range(2.0..4.0) * per_slot)
        .collect();
    let w = r
        .iter()
        .map(|r| r + rng.gen_range(-0.4..0.4) * per_slot)
        .collect();
    let scenario = Scenario::new(w, r).unwrap();
    assert!(check_perfect_se(&scenario, &users).satisfied);
    (scenario, users)
}

proptest! {
    #![proptest_config(ProptestConfig {
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::with_cases(64)
    })]

    #[test]
    fn stacked_jacobian_is_positive_definite(seed in any::<u64>(), n in 1usize..=6, slots in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tilde = random_tilde(&mut rng, slots);
        let users = random_users(&mut rng, n, slots, 2.0);
        let profile = DemandProfile::uniform(&users, slots);
        let c = quadratic_form(0, &profile, &tilde, &users).unwrap().c;
        let coupling = DMatrix::from_element(n, n, 1.0) + DMatrix::identity(n, n);
        let jacobian = coupling.kronecker(&c);
        let min_eig = SymmetricEigen::new(jacobian).eigenvalues.min();
        prop_assert!(min_eig > 0.0, "min eigenvalue {}", min_eig);
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>(), n in 1usize..=5, slots in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenario = random_scenario(&mut rng, slots, 1.0);
        let users = random_users(&mut rng, n, slots, 2.0);
        let profile = random_profile(&mut rng, &users, slots);
        let rule = optimal_rule(&scenario, &users);
        let Ok(tilde) = tilde_transform(&scenario, &rule) else {
            return Ok(());
        };
        let prices_a = price_series(&scenario, &rule, &profile).unwrap();
        let prices_b = price_series(&scenario, &rule, &profile).unwrap();
        prop_assert_eq!(
            prices_a.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            prices_b.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        for i in 0..n {
            let a = user_cost(i, &profile, &scenario, &rule).unwrap();
            let b = user_cost(i, &profile, &scenario, &rule).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            let qa = quadratic_form(i, &profile, &tilde, &users).unwrap();
            let qb = quadratic_form(i, &profile, &tilde, &users).unwrap();
            prop_assert_eq!(qa, qb);
        }
    }

    #[test]
    fn leader_target_ignores_common_shift(seed in any::<u64>(), shift in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = rng.gen_range(2..=24);
        let n_users = rng.gen_range(1..=8);
        let users = random_users(&mut rng, n_users, slots, 1.5);
        let scenario = random_scenario(&mut rng, slots, users.total_demand() / slots as f64);
        let shifted = Scenario::new(
            scenario.w().iter().map(|v| v + shift).collect(),
            scenario.r().iter().map(|v| v + shift).collect(),
        )
        .unwrap();
        let a = leader_qp(&scenario, &users).unwrap();
        let b = leader_qp(&shifted, &users).unwrap();
        let tol = 1e-9 * (users.total_demand() + shift);
        prop_assert!(max_abs_diff(&a.nu_n_star, &b.nu_n_star) <= tol);
        prop_assert!((a.cost - b.cost).abs() <= 1e-9 * a.cost.max(1.0));
    }

    #[test]
    fn leader_target_matches_projected_gradient(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = rng.gen_range(2..=24);
        let n_users = rng.gen_range(1..=8);
        let users = random_users(&mut rng, n_users, slots, 1.2);
        let scenario = random_scenario(&mut rng, slots, 2.0 * users.total_demand() / slots as f64);
        let target = leader_qp(&scenario, &users).unwrap();
        let oracle = projected_gradient_leader(&scenario, &users, 200_000);
        prop_assert!(max_abs_diff(&target.nu_n_star, &oracle) <= 1e-8 * users.total_demand());
        prop_assert!(leader_stationarity(&scenario, &users, &target.nu_n_star) <= 1e-9);
        let sum: f64 = target.nu_n_star.iter().sum();
        prop_assert!((sum - users.total_demand()).abs() <= 1e-10 * users.total_demand());
    }

    #[test]
    fn box_response_matches_projected_gradient(seed in any::<u64>(), n in 1usize..=6, slots in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tilde = random_tilde(&mut rng, slots);
        let cap_factor = rng.gen_range(1.05..2.5);
        let users = random_users(&mut rng, n, slots, cap_factor);
        let profile = random_profile(&mut rng, &users, slots);
        let i = rng.gen_range(0..n);
        let exact = box_best_response(i, &profile, &tilde, &users).unwrap();
        let oracle = projected_gradient_best_response(i, &profile, &tilde, &users, 200_000);
        prop_assert!(max_abs_diff(&exact, &oracle) <= 1e-8 * users.g()[i].max(1.0));

        let mut rows = profile.into_rows();
        rows[i] = exact;
        let updated = DemandProfile::new(rows).unwrap();
        let bounds = SlotBounds::Uniform { lo: 0.0, hi: users.nu_max()[i] };
        prop_assert!(projected_stationarity(i, &updated, &tilde, &users, bounds) <= 1e-8);
    }

    #[test]
    fn forecast_scales_with_energy(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_users = rng.gen_range(1..=6);
        let n_slots = rng.gen_range(2..=24);
        let (scenario, users) = condition_instance(&mut rng, n_users, n_slots);
        let g_n = users.total_demand();
        let slots = scenario.slots() as f64;
        let b = scenario.mean_residual_load() + rng.gen_range(-0.02..0.02) * g_n / slots;
        let setting = PredictionSetting::new(b);
        let Ok(base) = prediction_cost(&scenario, &users, setting) else {
            return Ok(());
        };
        let s2 = scenario.scaled(lambda).unwrap();
        let u2 = users.scaled(lambda).unwrap();
        let set2 = PredictionSetting::new(lambda * b);
        let scaled = prediction_cost(&s2, &u2, set2).unwrap();
        prop_assert!((scaled.simulated - lambda * lambda * base.simulated).abs()
            <= 1e-9 * scaled.simulated + 1e-20 * (lambda * g_n).powi(2));

        let d1 = prediction_nash(&scenario, &users, setting).unwrap();
        let d2 = prediction_nash(&s2, &u2, set2).unwrap();
        for (r1, r2) in d1.rows().iter().zip(d2.rows()) {
            for (a, b) in r1.iter().zip(r2) {
                prop_assert!((lambda * a - b).abs() <= 1e-10 * lambda * g_n);
            }
        }
        let p1 = price_series(&scenario, &prediction_price_rule(&scenario, &users, setting).unwrap(), &d1).unwrap();
        let p2 = price_series(&s2, &prediction_price_rule(&s2, &u2, set2).unwrap(), &d2).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}

#[test]
fn leader_cost_is_zero_exactly_when_flat_balance_fits() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let slots = rng.gen_range(2..=24);
        let n_users = rng.gen_range(1..=6);
        let users = random_users(&mut rng, n_users, slots, 1.5);
        let g_n = users.total_demand();
        let per_slot = g_n / slots as f64;
        // Flat balance needs w - r + level inside [0, total cap] everywhere.
        let fits: Vec<f64> = (0..slots)
            .map(|_| rng.gen_range(-0.2..0.2) * per_slot)
            .collect();
        let scenario = Scenario::new(
            fits.iter().map(|d| 5.0 * per_slot + d).collect(),
            vec![5.0 * per_slot; slots],
        )
        .unwrap();
        let target = leader_qp(&scenario, &users).unwrap();
        assert!(target.cost <= 1e-20 * g_n * g_n, "cost {}", target.cost);

        let mut net = fits.clone();
        net[0] = -3.0 * g_n;
        let scenario = Scenario::new(
            net.iter().map(|d| (5.0 * g_n + d).max(0.0)).collect(),
            vec![5.0 * g_n; slots],
        )
        .unwrap();
        let target = leader_qp(&scenario, &users).unwrap();
        assert!(target.cost > 1e-6 * g_n * g_n, "cost {}", target.cost);
    }
}

#[test]
fn raising_r_tilde_lowers_that_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let slots = rng.gen_range(2..=16);
        let n_users = rng.gen_range(1..=8);
        let users = random_users(&mut rng, n_users, slots, 2.0);
        let tilde = random_tilde(&mut rng, slots);
        let t = rng.gen_range(0..slots);
        let h = 1e-6;
        let mut r = tilde.r().to_vec();
        r[t] += h;
        let bumped = TildeSeries::new(tilde.w().to_vec(), r).unwrap();
        let before = general_nash(&tilde, &users).aggregate();
        let after = general_nash(&bumped, &users).aggregate();
        let slope = (after[t] - before[t]) / h;
        assert!(slope < 0.0, "slope {slope}");

        // Best-response dynamics agree with the closed form on the sign.
        let config = DynamicsConfig::new(ResponseMode::Hyperplane, 1e-12);
        let (p0, _) = best_response_dynamics(&tilde, &users, &config).unwrap();
        let (p1, _) = best_response_dynamics(&bumped, &users, &config).unwrap();
        assert!(p1.aggregate()[t] < p0.aggregate()[t]);
    }
}

#[test]
fn dynamics_reach_one_profile_from_any_start() {
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let slots = rng.gen_range(2..=16);
        let n_users = rng.gen_range(2..=8);
        let users = random_users(&mut rng, n_users, slots, 2.0);
        let tilde = random_tilde(&mut rng, slots);
        let ends: Vec<DemandProfile> = (0..10)
            .map(|_| {
                let mut config = DynamicsConfig::new(ResponseMode::Hyperplane, tol);
                config.init = Some(random_profile(&mut rng, &users, slots));
                best_response_dynamics(&tilde, &users, &config).unwrap().0
            })
            .collect();
        for a in &ends {
            for b in &ends {
                assert!(a.l1_distance(b) <= 10.0 * tol);
            }
        }
    }
}

#[test]
fn twenty_users_converge_within_default_sweeps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let users = random_users(&mut rng, 20, 24, 2.0);
    let tilde = random_tilde(&mut rng, 24);
    let config = DynamicsConfig::new(ResponseMode::Hyperplane, 1e-8);
    let (profile, trace) = best_response_dynamics(&tilde, &users, &config).unwrap();
    assert!(trace.converged);
    assert!(trace.iterations <= 10 * 20 * 24);
    let exact = general_nash(&tilde, &users);
    assert!(profile.l1_distance(&exact) <= 1e-7);
}

#[test]
fn forecast_equilibrium_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let n_users = rng.gen_range(1..=8);
        let n_slots = rng.gen_range(2..=24);
        let (scenario, users) = condition_instance(&mut rng, n_users, n_slots);
        let per_slot = users.total_demand() / scenario.slots() as f64;
        let b = scenario.mean_residual_load() + rng.gen_range(-0.05..0.05) * per_slot;
        let setting = PredictionSetting::new(b);
        let Ok(sigma) = prediction_nash(&scenario, &users, setting) else {
            continue;
        };
        let (w, r) = prediction_tilde(&scenario, &users, setting);
        let tilde = TildeSeries::new(w, r).unwrap();
        for i in 0..users.len() {
            let response = hyperplane_best_response(i, &sigma, &tilde, &users);
            assert!(max_abs_diff(&response, sigma.row(i)) <= 1e-10 * users.total_demand());
        }
    }
}

#[test]
fn perfect_instance_balances_every_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let n_users = rng.gen_range(1..=10);
        let n_slots = rng.gen_range(2..=36);
        let (scenario, users) = condition_instance(&mut rng, n_users, n_slots);
        let demand = analytic_nash(&scenario, &users).unwrap();
        assert!(demand.box_feasible(&users));
        let c = controllable_supply(&scenario, &demand.aggregate());
        assert!(variance(&c) <= 1e-20 * users.total_demand().powi(2));
    }
}

#[test]
fn grid_refinement_tightens_the_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let users = random_users(&mut rng, 2, 3, 2.0);
    let tilde = random_tilde(&mut rng, 3);
    let exact = general_nash(&tilde, &users);
    let coarse = grid_search_ne(&tilde, &users, &GridSpec::natural(&users, 3, 40)).unwrap();
    let fine = grid_search_ne(&tilde, &users, &GridSpec::natural(&users, 3, 160)).unwrap();
    assert!(fine.max_spacing < coarse.max_spacing);
    assert!(fine.continuous_regret < coarse.continuous_regret);
    let err = |c: &stackgrid::oracle::GridCertificate| c.profile.max_abs_distance(&exact);
    assert!(err(&coarse) <= 2.0 * coarse.max_spacing);
    assert!(err(&fine) <= 2.0 * fine.max_spacing);

    let again = grid_search_ne(&tilde, &users, &GridSpec::natural(&users, 3, 160)).unwrap();
    assert_eq!(again, fine);
}

#[test]
fn numeric_search_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let slots = 8;
    let users = random_users(&mut rng, 4, slots, 2.0);
    let scenario = random_scenario(&mut rng, slots, 2.0 * users.total_demand() / slots as f64);
    assert!(!check_perfect_se(&scenario, &users).satisfied);
    let tol = PriceSearchConfig::default_tol(&users, slots);
    let a = numeric_se(&scenario, &users, tol).unwrap();
    let b = numeric_se(&scenario, &users, tol).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.trace, b.trace);
    let sum: f64 = a.report.aggregate().iter().sum();
    assert!((sum - users.total_demand()).abs() <= 1e-8 * users.total_demand());
}
