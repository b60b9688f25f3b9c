use approxagg::aggregation::{aggregation_error, bin_agents, total_variation};
use approxagg::population::{PopulationSpec, WealthSpec};
use approxagg::presets::{branching_tree, two_point_chain, uniform_tree};
use approxagg::{
    gamma_lower_bound, gamma_upper_bound, solve_policy, EconomyParams, Forecasts, SolverOptions, BOUND_TOL,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn policies_are_bounded_and_increasing(
        sigma in prop_oneof![Just(1.0), 0.4f64..3.0],
        beta in 0.85f64..0.99,
        u in 0.05f64..0.5,
        omega in 0.1f64..0.6,
        branching in any::<bool>(),
    ) {
        let params = EconomyParams { sigma, beta, periods: 3, agents: 10, ..Default::default() };
        let tree = if branching { branching_tree(3) } else { two_point_chain(3, u, 0.5) };
        let f = Forecasts::constant(&tree, omega);
        let (policy, report) = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap();
        prop_assert!(report.monotone_ok);
        let hi = gamma_upper_bound(&tree, &f, &params).unwrap();
        let lo = gamma_lower_bound(&tree, &f, &params).unwrap();
        for n in tree.non_terminal() {
            let g = &policy.table(n.id, 0).unwrap().gamma;
            prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(g[0] >= lo.get(n.id, 0) - BOUND_TOL && *g.last().unwrap() <= hi[n.id] + BOUND_TOL);
        }
    }

    #[test]
    fn binning_error_stays_within_epsilon(
        n in 5usize..200,
        seed in 0u64..1000,
        spread in 0.1f64..2.0,
        eps in 0.005f64..0.5,
    ) {
        let params = EconomyParams::default().with_periods(3).with_agents(n);
        let tree = uniform_tree(0.2, &params).unwrap();
        let f = Forecasts::constant(&tree, 0.3);
        let (policy, _) = solve_policy(&tree, &params, &f, &SolverOptions::default()).unwrap();
        let pop = PopulationSpec { wealth: WealthSpec::Lognormal { sigma: spread, seed }, ..Default::default() }
            .build(n)
            .unwrap();
        let b = bin_agents(&pop, &policy, eps, params.y1).unwrap();
        let err = aggregation_error(&b, &pop, &policy).unwrap();
        prop_assert!(err.ratio <= 1.0);
        prop_assert!(b.count_constant() <= 4.0);
        let tv = total_variation(&policy, 0, 0, 1.0);
        prop_assert!(tv.tv >= 0.0 && (tv.tv - tv.endpoint_span).abs() < 1e-9);
    }
}
