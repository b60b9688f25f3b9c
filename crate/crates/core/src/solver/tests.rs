use super::*;
use crate::presets::{branching_tree, full_employment_tree, no_employment_tree, two_point_chain, uniform_tree};
use crate::tree::{chain, EmploymentDist, Outcome};
use proptest::prelude::*;

fn solve(tree: &EventTree, params: &EconomyParams, omega: f64) -> (Policy, SolveReport) {
    let f = Forecasts::constant(tree, omega);
    solve_policy(tree, params, &f, &SolverOptions::default()).unwrap()
}

fn model<'a>(tree: &'a EventTree, params: &'a EconomyParams, f: &'a Forecasts) -> AgentModel<'a> {
    AgentModel::new(tree, params, f, SolverOptions::default()).unwrap()
}

fn log_closed_form(beta: f64, h: usize) -> f64 {
    let s: f64 = (0..h).map(|k| beta.powi(k as i32)).sum();
    1.0 - 1.0 / s
}

#[test]
fn terminal_horizon_saves_nothing() {
    let params = EconomyParams::default().with_periods(1);
    let tree = full_employment_tree(1);
    let (policy, report) = solve(&tree, &params, 0.3);
    for w in [1e-4, 0.3, 1.0] {
        assert_eq!(policy.gamma(0, 0, w), 0.0);
    }
    assert!(report.tables.is_empty());
    assert!(report.pass);
}

#[test]
fn log_no_employment_matches_closed_form() {
    let params = EconomyParams::default();
    let tree = no_employment_tree(2);
    let (policy, report) = solve(&tree, &params, 0.3);
    assert!(report.pass);
    let expect = log_closed_form(0.95, 2);
    assert!((expect - 0.4871795).abs() < 1e-7);
    for &g in &policy.table(0, 0).unwrap().gamma {
        assert!((g - expect).abs() <= 1e-12);
    }
}

#[test]
fn log_two_period_example() {
    // frozen from an independent root-find of the same first-order condition
    const EXPECTED: f64 = 0.322_912_311_095_063_8;
    let params = EconomyParams::default();
    let tree = chain(2, 1.0, EmploymentDist::new(vec![Outcome::new(0.0, 0.1), Outcome::new(0.15, 0.9)]));
    let f = Forecasts::constant(&tree, 0.3);
    let m = model(&tree, &params, &f);
    let (policy, _) = m.solve();
    let sol = m.solve_point(&policy, 0, 0, 0.2);
    assert!((sol.gamma - EXPECTED).abs() < 1e-10);
    assert!((policy.gamma(0, 0, 0.2) - EXPECTED).abs() < 1e-6);
}

#[test]
fn upper_bound_log_closed_form() {
    let params = EconomyParams { beta: 0.9, periods: 3, ..Default::default() };
    let tree = no_employment_tree(3);
    let bar = gamma_upper_bound(&tree, &Forecasts::constant(&tree, 0.3), &params).unwrap();
    assert!((bar[0] - 0.630_996_309_963_099_6).abs() < 1e-12);
    assert!((bar[1] - log_closed_form(0.9, 2)).abs() < 1e-12);
    assert_eq!(bar[2], 0.0);
}

#[test]
fn upper_bound_crra_matches_no_employment_solve() {
    // z chosen so that next output over invested capital equals 2
    let z = 2.0 * 0.3f64.powf(0.64);
    let params = EconomyParams { beta: 0.9, sigma: 2.0, ..Default::default() };
    let tree = chain(2, z, EmploymentDist::degenerate(0.0));
    let f = Forecasts::constant(&tree, 0.3);
    let bar = gamma_upper_bound(&tree, &f, &params).unwrap();
    let expect = 1.0 - 1.0 / (1.0 + 1.25f64.sqrt());
    assert!((bar[0] - expect).abs() < 1e-12);
    let (policy, _) = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap();
    for &w in &[1e-3, 0.05, 0.3, 1.0] {
        assert!((policy.gamma(0, 0, w) - expect).abs() < 1e-10);
    }
}

#[test]
fn no_employment_rate_is_wealth_independent_for_crra() {
    for sigma in [0.5, 2.0, 3.0] {
        let params = EconomyParams::default().with_sigma(sigma).with_periods(4);
        let tree = no_employment_tree(4);
        let (policy, _) = solve(&tree, &params, 0.3);
        for n in 0..3 {
            let g = &policy.table(n, 0).unwrap().gamma;
            let spread = g.iter().cloned().fold(f64::MIN, f64::max) - g.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-11, "sigma {sigma} node {n}: spread {spread}");
        }
    }
}

#[test]
fn lower_bound_equals_upper_under_certain_unemployment() {
    let params = EconomyParams::default().with_sigma(2.0).with_periods(3);
    let tree = no_employment_tree(3);
    let f = Forecasts::constant(&tree, 0.3);
    let hi = gamma_upper_bound(&tree, &f, &params).unwrap();
    let lo = gamma_lower_bound(&tree, &f, &params).unwrap();
    for n in 0..3 {
        assert!((hi[n] - lo.get(n, 0)).abs() < 1e-15);
    }
    assert!(lo.degenerate.is_empty());
}

#[test]
fn lower_bound_flags_missing_unemployment() {
    let params = EconomyParams::default();
    let tree = full_employment_tree(2);
    let lo = gamma_lower_bound(&tree, &Forecasts::constant(&tree, 0.3), &params).unwrap();
    assert_eq!(lo.get(0, 0), 0.0);
    assert_eq!(lo.degenerate, vec![(0, 0)]);
}

#[test]
fn sandwich_on_uniform_employment() {
    for sigma in [0.5, 1.0, 2.0] {
        let params = EconomyParams::default().with_sigma(sigma).with_periods(3).with_agents(10);
        let tree = uniform_tree(0.1, &params).unwrap();
        let f = Forecasts::constant(&tree, 0.3);
        let (policy, report) = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap();
        assert!(report.pass, "sigma {sigma}: {:?}", report.max_residual);
        let hi = gamma_upper_bound(&tree, &f, &params).unwrap();
        let lo = gamma_lower_bound(&tree, &f, &params).unwrap();
        for n in tree.non_terminal() {
            for &g in &policy.table(n.id, 0).unwrap().gamma {
                assert!(
                    lo.get(n.id, 0) - BOUND_TOL <= g && g <= hi[n.id] + BOUND_TOL,
                    "sigma {sigma}: {} <= {g} <= {}",
                    lo.get(n.id, 0),
                    hi[n.id]
                );
            }
        }
    }
}

#[test]
fn tables_are_monotone_and_below_one() {
    let params = EconomyParams::default().with_sigma(2.0).with_periods(3);
    let tree = branching_tree(3);
    let (policy, report) = solve(&tree, &params, 0.3);
    assert!(report.monotone_ok);
    for n in tree.non_terminal() {
        let g = &policy.table(n.id, 0).unwrap().gamma;
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        assert!(g.iter().all(|&x| (0.0..1.0).contains(&x)));
    }
}

#[test]
fn residual_signs_at_bracket_ends() {
    let params = EconomyParams::default().with_sigma(2.0);
    let tree = two_point_chain(2, 0.1, 0.5);
    let f = Forecasts::constant(&tree, 0.3);
    let m = model(&tree, &params, &f);
    let (policy, _) = m.solve();
    assert!(m.foc_residual(&policy, 0, 0, 0.2, 1.0 - 1e-12) > 1e10);
    assert!(m.foc_residual(&policy, 0, 0, 0.2, 1e-12) < -1e10);
    assert_eq!(m.foc_residual(&policy, 0, 0, 0.2, 0.0), f64::NEG_INFINITY);
}

#[test]
fn envelope_matches_finite_differences() {
    for (sigma, delta) in [(1.0, 1.0), (2.0, 1.0), (0.5, 0.9)] {
        let params = EconomyParams { sigma, delta, periods: 3, agents: 10, ..Default::default() };
        let tree = uniform_tree(0.1, &params).unwrap();
        let f = Forecasts::constant(&tree, 0.3);
        let m = model(&tree, &params, &f);
        let (policy, _) = m.solve();
        for &w in m.grid.iter().step_by(20).filter(|&&w| w > 1e-4 && w < 1.0) {
            let h = 1e-5 * w;
            let (_, dv) = m.value_and_derivative(&policy, 0, 0, w).unwrap();
            let fd = (m.value(&policy, 0, 0, w + h) - m.value(&policy, 0, 0, w - h)) / (2.0 * h);
            assert!(((fd - dv) / dv).abs() <= 1e-5, "sigma {sigma} w {w}: fd {fd} env {dv}");
        }
    }
}

#[test]
fn value_is_concave_and_rejects_non_positive_wealth() {
    let params = EconomyParams::default().with_periods(3).with_agents(10);
    let tree = uniform_tree(0.1, &params).unwrap();
    let f = Forecasts::constant(&tree, 0.3);
    let m = model(&tree, &params, &f);
    let (policy, _) = m.solve();
    let ws: Vec<f64> = (1..60).map(|k| k as f64 / 60.0).collect();
    let v: Vec<f64> = ws.iter().map(|&w| m.value(&policy, 0, 0, w)).collect();
    for k in 1..v.len() - 1 {
        assert!(v[k + 1] - 2.0 * v[k] + v[k - 1] <= 0.0);
    }
    assert!(m.value_and_derivative(&policy, 0, 0, 0.0).is_err());
}

#[test]
fn terminal_derivative_is_marginal_utility() {
    let params = EconomyParams::default().with_sigma(2.0).with_periods(2);
    let tree = full_employment_tree(2);
    let f = Forecasts::constant(&tree, 0.3);
    let m = model(&tree, &params, &f);
    let (policy, _) = m.solve();
    let y = m.aggregates.y_eff(1);
    let (_, dv) = m.value_and_derivative(&policy, 1, 0, 0.4).unwrap();
    assert!((dv - y.powf(-1.0) / 0.16).abs() < 1e-12);
}

#[test]
fn log_policies_do_not_depend_on_initial_output() {
    let base = EconomyParams::default().with_periods(3).with_agents(10);
    let tree = uniform_tree(0.1, &base).unwrap();
    let (p1, _) = solve(&tree, &base, 0.3);
    for y1 in [0.5, 2.0] {
        let (p, _) = solve(&tree, &EconomyParams { y1, ..base.clone() }, 0.3);
        assert_eq!(p.tables, p1.tables);
    }
}

#[test]
fn effective_path_matches_total_depreciation_at_full_depreciation() {
    let params = EconomyParams::default().with_sigma(2.0).with_periods(3).with_agents(10);
    let tree = uniform_tree(0.1, &params).unwrap();
    let f = Forecasts::constant(&tree, 0.3);
    let eff = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap().0;
    let opts = SolverOptions { depreciation: DepreciationPath::TotalDepreciation, ..Default::default() };
    let tot = solve_policy(&tree, &params, &f, &opts).unwrap().0;
    assert_eq!(eff.tables, tot.tables);
    let bad = EconomyParams { delta: 0.9, ..params };
    assert!(solve_policy(&tree, &bad, &f, &opts).is_err());
}

#[test]
fn policy_json_round_trip_is_exact() {
    let params = EconomyParams::default().with_sigma(2.0).with_periods(3);
    let (policy, _) = solve(&branching_tree(3), &params, 0.3);
    let back = Policy::from_json(&policy.to_json().unwrap()).unwrap();
    assert_eq!(back, policy);
    let mut other = policy.clone();
    other.version += 1;
    assert!(Policy::from_json(&other.to_json().unwrap()).is_err());
}

#[test]
fn evaluation_flags_out_of_grid_wealth() {
    let params = EconomyParams::default();
    let (policy, _) = solve(&two_point_chain(2, 0.1, 0.5), &params, 0.3);
    let lo = policy.eval(0, 0, 1e-9);
    assert!(lo.below_grid && lo.gamma == policy.table(0, 0).unwrap().gamma[0]);
    assert!(policy.eval(0, 0, 10.0).above_grid);
    assert!(!policy.eval(0, 0, 0.5).below_grid);
}

#[test]
fn extrapolation_rises_towards_no_employment_rate() {
    for sigma in [0.5, 1.0, 2.0] {
        let params = EconomyParams::default().with_periods(3).with_sigma(sigma);
        let tree = two_point_chain(3, 0.1, 0.5);
        let f = Forecasts::constant(&tree, 0.3);
        let (policy, _) = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap();
        let bar = gamma_upper_bound(&tree, &f, &params).unwrap();
        let top = policy.omega_max();
        let at_top = policy.gamma(0, 0, top);
        assert!((policy.gamma(0, 0, top * (1.0 + 1e-12)) - at_top).abs() < 1e-12);
        let mut prev = at_top;
        for k in 1..200 {
            let g = policy.gamma(0, 0, top * 1.05f64.powi(k));
            assert!(g >= prev && g <= bar[0], "sigma {sigma}: {g} after {prev}, limit {}", bar[0]);
            prev = g;
        }
        assert!(bar[0] - policy.gamma(0, 0, 1e9) < 1e-6);
    }
}

#[test]
fn wealth_transition_examples() {
    assert_eq!(wealth_transition(1.0, 1.0, 0.36), 1.0);
    assert_eq!(wealth_transition(0.0, 0.0, 0.36), 0.0);
    assert!((wealth_transition(0.5, 0.1, 0.36) - 0.244).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn foc_residual_is_increasing(
        sigma in prop_oneof![Just(1.0), 0.5f64..3.0],
        omega in 1e-4f64..1.0,
        g1 in 0.01f64..0.98,
        dg in 0.001f64..0.01,
    ) {
        let params = EconomyParams::default().with_sigma(sigma);
        let tree = two_point_chain(2, 0.1, 0.5);
        let f = Forecasts::constant(&tree, 0.3);
        let m = model(&tree, &params, &f);
        let (policy, _) = m.solve();
        let a = m.foc_residual(&policy, 0, 0, omega, g1);
        let b = m.foc_residual(&policy, 0, 0, omega, g1 + dg);
        prop_assert!(b > a);
    }

    #[test]
    fn solved_rate_is_monotone_in_wealth(
        sigma in prop_oneof![Just(1.0), 0.5f64..3.0],
        u in 0.02f64..0.5,
        e in 0.05f64..1.0,
        w in 1e-4f64..0.9,
        dw in 1e-3f64..0.1,
    ) {
        let params = EconomyParams::default().with_sigma(sigma).with_periods(3);
        let tree = two_point_chain(3, u, e);
        let f = Forecasts::constant(&tree, 0.3);
        let m = model(&tree, &params, &f);
        let (policy, report) = m.solve();
        prop_assert!(report.pass);
        prop_assert!(policy.gamma(0, 0, w + dw) >= policy.gamma(0, 0, w));
    }
}
