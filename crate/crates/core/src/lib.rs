//! Finite-horizon growth economy with uninsurable employment risk: event
//! trees, the agents' savings problem, market clearing for capital-share
//! forecasts, and approximate aggregation diagnostics.

// `!(x > 0.0)` also rejects NaN; index loops read better over 2x2 state spaces.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregates;
pub mod aggregation;
pub mod auctioneer;
pub mod employment;
pub mod error;
pub mod grid;
pub mod interp;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod population;
pub mod presets;
pub mod prices;
pub mod process;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod solver;
pub mod tree;
pub mod utility;

pub use aggregates::{Aggregates, DepreciationPath};
pub use auctioneer::{
    clearing_residuals, solve_forecasts, Cleared, ClearingOptions, ClearingReport, ClearingResiduals, Forecasts,
};
pub use employment::{draw_employment, Draw, RealizationMode};
pub use error::{Error, Result};
pub use grid::GridSpec;
pub use params::EconomyParams;
pub use pipeline::{Cache, Scenario};
pub use population::{PopulationSpec, PopulationState};
pub use process::{build_event_tree, validate_process, ProcessSpec, ValidationReport};
pub use scenario::ScenarioConfig;
pub use simulate::{simulate_paths, SimulationOptions, SimulationPanel};
pub use solver::{
    gamma_lower_bound, gamma_upper_bound, solve_policy, AgentModel, Policy, SolveReport, SolverOptions, BOUND_TOL,
};
pub use tree::{ClassId, EmploymentDist, EventTree, NodeId, Outcome};
