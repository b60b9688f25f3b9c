//! Scenario stages shared by the command-line harness: validate, solve,
//! clear, simulate, aggregate, verify, and the combined report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregation_error, bin_agents, derivative_checks, redistribution_robustness, total_variation, DerivativeReport,
};
use crate::auctioneer::{initial_forecasts, solve_forecasts, Cleared, ClearingReport, Forecasts};
use crate::error::{Error, Result};
use crate::oracle::{compare_policy, Comparison, OracleSpec};
use crate::params::EconomyParams;
use crate::population::PopulationState;
use crate::process::{build_event_tree, validate_process, ValidationReport};
use crate::rng::RNG_NAME;
use crate::scenario::ScenarioConfig;
use crate::simulate::{simulate_paths, SimulationPanel};
use crate::solver::{gamma_lower_bound, gamma_upper_bound, solve_policy, AgentModel, Policy, SolveReport, BOUND_TOL};
use crate::tree::{ClassId, EventTree, NodeId};

pub const CACHE_FORMAT_VERSION: u32 = 1;

/// A parsed scenario with its event tree and initial population.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub hash: String,
    pub tree: EventTree,
    pub population: PopulationState,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let tree = build_event_tree(&config.process, &config.params)?;
        let population = config.population.build(config.params.agents)?;
        let hash = config.hash();
        Ok(Self { config, hash, tree, population })
    }

    pub fn params(&self) -> &EconomyParams {
        &self.config.params
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = validate_process(&self.tree, self.config.process.min_unemp_prob);
        r.check_population(&self.tree, &self.population.classes, self.params().agents);
        r
    }

    /// Savings functions under the starting forecasts, before clearing.
    pub fn solve_initial(&self) -> Result<(Forecasts, Policy, SolveReport)> {
        let f = initial_forecasts(&self.tree, self.params())?;
        let (mut policy, report) = solve_policy(&self.tree, self.params(), &f, &self.config.solver)?;
        policy.scenario_hash = self.hash.clone();
        Ok((f, policy, report))
    }

    /// Market-clearing forecasts, reusing a cached solution when one exists.
    pub fn clear(&self, cache: Option<&Cache>) -> Result<(Cleared, bool)> {
        if let Some(hit) = cache.and_then(|c| c.load(&self.hash)) {
            return Ok((hit, true));
        }
        let c = &self.config;
        let mut cleared = solve_forecasts(&self.tree, &c.params, &self.population, None, &c.solver, &c.clearing)?;
        cleared.policy.scenario_hash = self.hash.clone();
        if let Some(cache) = cache {
            cache.store(&self.hash, &cleared)?;
        }
        Ok((cleared, false))
    }

    pub fn bounds(&self, forecasts: &Forecasts, policy: &Policy) -> Result<Vec<BoundsRow>> {
        let hi = gamma_upper_bound(&self.tree, forecasts, self.params())?;
        let lo = gamma_lower_bound(&self.tree, forecasts, self.params())?;
        let mut rows = Vec::new();
        for n in self.tree.non_terminal() {
            for class in 0..self.tree.class_count() {
                let g = &policy.table(n.id, class).expect("solved").gamma;
                let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
                let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lower = lo.get(n.id, class);
                rows.push(BoundsRow {
                    node: n.id,
                    period: n.period,
                    class,
                    lower,
                    gamma_min: gmin,
                    gamma_max: gmax,
                    upper: hi[n.id],
                    lower_margin: gmin - lower,
                    upper_margin: hi[n.id] - gmax,
                    degenerate_lower: lo.degenerate.contains(&(n.id, class)),
                    pass: lower - BOUND_TOL <= gmin && gmax <= hi[n.id] + BOUND_TOL,
                });
            }
        }
        Ok(rows)
    }

    pub fn simulate(&self, cleared: &Cleared) -> Result<SimulationPanel> {
        simulate_paths(
            &self.tree,
            self.params(),
            &cleared.forecasts,
            &cleared.policy,
            &self.population,
            &self.config.simulation,
        )
    }

    /// Binning diagnostics at every non-terminal node along the first
    /// simulated path, then the cross-N sweep under the same forecasts.
    pub fn aggregate(&self, cleared: &Cleared, panel: &SimulationPanel) -> Result<Vec<AggregationRow>> {
        let mut rows = Vec::new();
        let model = AgentModel::new(&self.tree, self.params(), &cleared.forecasts, self.config.solver.clone())?;
        if let Some(path) = panel.paths.first() {
            for r in &path.periods {
                if self.tree.node(r.node).is_terminal() {
                    continue;
                }
                let pop = panel.population(0, r.period).expect("recorded period");
                let goods = model.aggregates.y_eff(r.node);
                rows.extend(self.aggregation_rows(&cleared.policy, &pop, goods, self.params().agents, "path")?);
            }
        }
        for &n in &self.config.analysis.n_sweep {
            let params = EconomyParams { agents: n, ..self.params().clone() };
            let tree = build_event_tree(&self.config.process, &params)?;
            if tree.len() != self.tree.len() {
                return Err(Error::Consistency("N sweep changed the aggregate tree".into()));
            }
            let forecasts = Forecasts { omega: cleared.forecasts.omega.clone() };
            let (policy, _) = solve_policy(&tree, &params, &forecasts, &self.config.solver)?;
            let pop = self.config.population.build(n)?;
            rows.extend(self.aggregation_rows(&policy, &pop, params.y1, n, "sweep")?);
        }
        Ok(rows)
    }

    fn aggregation_rows(
        &self,
        policy: &Policy,
        pop: &PopulationState,
        goods: f64,
        agents: usize,
        source: &str,
    ) -> Result<Vec<AggregationRow>> {
        let a = &self.config.analysis;
        let classes = policy.tables[pop.node].len();
        let tv = (0..classes).map(|l| total_variation(policy, pop.node, l, 1.0).tv).fold(0.0, f64::max);
        let mut rows = Vec::new();
        for &eps in &a.epsilons {
            let b = bin_agents(pop, policy, eps, goods)?;
            let err = aggregation_error(&b, pop, policy)?;
            let rob = redistribution_robustness(&b, pop, policy, a.reshuffles, self.config.simulation.seed);
            rows.push(AggregationRow {
                scenario: self.config.name.clone(),
                source: source.into(),
                n: agents,
                epsilon: eps,
                node: pop.node,
                period: self.tree.node(pop.node).period,
                bins: b.count(),
                occupied: b.occupied(),
                count_constant: b.count_constant(),
                error: err.error,
                ratio: err.ratio,
                robustness_ratio: rob.ratio,
                tv,
                pass: err.pass && rob.pass,
            });
        }
        Ok(rows)
    }

    pub fn derivatives(&self, cleared: &Cleared) -> Result<Vec<DerivativeReport>> {
        let model = AgentModel::new(&self.tree, self.params(), &cleared.forecasts, self.config.solver.clone())?;
        let stride = self.config.analysis.envelope_stride;
        Ok(self
            .tree
            .non_terminal()
            .flat_map(|n| (0..self.tree.class_count()).map(move |l| (n.id, l)))
            .map(|(n, l)| derivative_checks(&model, &cleared.policy, n, l, stride))
            .collect())
    }

    /// Whether the tree is small enough for the brute-force oracle.
    pub fn oracle_eligible(&self) -> bool {
        OracleSpec::new(self.tree.clone()).validate(self.params()).is_ok()
    }

    /// Oracle comparison of the root savings functions, one per class.
    pub fn verify(&self, forecasts: &Forecasts, policy: &Policy) -> Result<Vec<Comparison>> {
        let spec = OracleSpec {
            scan_points: self.config.analysis.oracle_scan_points,
            ..OracleSpec::new(self.tree.clone()).with_hash(self.hash.clone())
        };
        let classes: Vec<ClassId> = {
            let mut c = self.population.classes.clone();
            c.sort();
            c.dedup();
            c
        };
        classes
            .into_iter()
            .map(|l| compare_policy(policy, &spec, self.params(), forecasts, l, &self.config.analysis.probes))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub node: NodeId,
    pub period: usize,
    pub class: ClassId,
    pub lower: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub upper: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub degenerate_lower: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRow {
    pub scenario: String,
    /// `path` for populations along the simulated path, `sweep` for the
    /// cross-N sweep at the root.
    pub source: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub node: NodeId,
    pub period: usize,
    pub bins: usize,
    pub occupied: usize,
    pub count_constant: f64,
    pub error: f64,
    /// `error / (epsilon Y)`.
    pub ratio: f64,
    /// Largest reshuffle change over `epsilon Y`.
    pub robustness_ratio: f64,
    pub tv: f64,
    pub pass: bool,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Cleared forecasts and policies keyed by scenario hash.
pub struct Cache {
    pub dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    version: u32,
    scenario_hash: String,
    forecasts: Forecasts,
    report: ClearingReport,
    policy: Policy,
    solve_report: SolveReport,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn load(&self, hash: &str) -> Option<Cleared> {
        let text = fs::read_to_string(self.path(hash)).ok()?;
        let e: CacheEntry = serde_json::from_str(&text).ok()?;
        if e.version != CACHE_FORMAT_VERSION || e.scenario_hash != hash || e.policy.scenario_hash != hash {
            return None;
        }
        Some(Cleared { forecasts: e.forecasts, report: e.report, policy: e.policy, solve_report: e.solve_report })
    }

    pub fn store(&self, hash: &str, c: &Cleared) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let e = CacheEntry {
            version: CACHE_FORMAT_VERSION,
            scenario_hash: hash.into(),
            forecasts: c.forecasts.clone(),
            report: c.report.clone(),
            policy: c.policy.clone(),
            solve_report: c.solve_report.clone(),
        };
        let tmp = self.dir.join(format!("{hash}.json.tmp"));
        fs::write(&tmp, serde_json::to_string(&e)?)?;
        fs::rename(tmp, self.path(hash))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub node: NodeId,
    pub period: usize,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub paths: usize,
    pub below_grid: usize,
    pub max_goods_gap: f64,
    pub max_clearing_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub cache_hit: bool,
    pub elapsed_ms: u128,
}

/// Contents of `report.json`. Everything except `timing` is a deterministic
/// function of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub spec_version: u32,
    pub rng: String,
    pub seed: u64,
    pub params: EconomyParams,
    pub validation: ValidationReport,
    pub root_forecast: Option<f64>,
    pub forecasts: Vec<ForecastRow>,
    pub clearing: ClearingReport,
    pub solve: SolveReport,
    pub bounds_pass: bool,
    pub derivatives: Vec<DerivativeReport>,
    pub simulation: SimulationSummary,
    pub aggregation: Vec<AggregationRow>,
    pub verify: Option<Vec<Comparison>>,
    pub timing: Timing,
}

pub struct RunArtifacts {
    pub report: RunReport,
    pub panel: SimulationPanel,
    pub bounds: Vec<BoundsRow>,
}

impl Scenario {
    /// Runs every stage after clearing and assembles the report.
    pub fn report(&self, cleared: &Cleared, cache_hit: bool, started: std::time::Instant) -> Result<RunArtifacts> {
        let validation = self.validate();
        let bounds = self.bounds(&cleared.forecasts, &cleared.policy)?;
        let panel = self.simulate(cleared)?;
        let aggregation = self.aggregate(cleared, &panel)?;
        let derivatives = self.derivatives(cleared)?;
        let verify =
            if self.oracle_eligible() { Some(self.verify(&cleared.forecasts, &cleared.policy)?) } else { None };
        let steps = panel.paths.iter().flat_map(|p| &p.periods);
        let simulation = SimulationSummary {
            paths: panel.paths.len(),
            below_grid: panel.below_grid(),
            max_goods_gap: panel.max_goods_gap(),
            max_clearing_residual: steps.map(|r| r.clearing_residual.abs()).fold(0.0, f64::max),
        };
        let forecasts = self
            .tree
            .non_terminal()
            .map(|n| ForecastRow { node: n.id, period: n.period, omega: cleared.forecasts.get(n.id) })
            .collect();
        let report = RunReport {
            scenario: self.config.name.clone(),
            scenario_hash: self.hash.clone(),
            spec_version: self.config.spec_version,
            rng: RNG_NAME.into(),
            seed: self.config.simulation.seed,
            params: self.params().clone(),
            validation,
            root_forecast: cleared.forecasts.omega[self.tree.root().id],
            forecasts,
            clearing: cleared.report.clone(),
            solve: cleared.solve_report.clone(),
            bounds_pass: bounds.iter().all(|b| b.pass),
            derivatives,
            simulation,
            aggregation,
            verify,
            timing: Timing { cache_hit, elapsed_ms: started.elapsed().as_millis() },
        };
        Ok(RunArtifacts { report, panel, bounds })
    }
}
