//! Fixtures shared by the criterion benches in `benches/`.

use approxagg::presets::branching_tree;
use approxagg::{EconomyParams, EventTree, Forecasts, PopulationState};

pub struct Fixture {
    pub params: EconomyParams,
    pub tree: EventTree,
    pub forecasts: Forecasts,
    pub population: PopulationState,
}

/// Binary aggregate-shock tree with two employment outcomes per node.
pub fn branching(periods: usize, sigma: f64, agents: usize) -> Fixture {
    let params = EconomyParams::default().with_periods(periods).with_sigma(sigma).with_agents(agents);
    let tree = branching_tree(periods);
    let forecasts = Forecasts::constant(&tree, 0.3);
    Fixture { params, tree, forecasts, population: PopulationState::equal(agents) }
}
