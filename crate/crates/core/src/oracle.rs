//! Brute-force reference solutions for tiny economies.
//!
//! The agent's problem is solved by direct maximization of expected
//! discounted utility: the last period consumes everything, and every
//! earlier period scans the savings rate on a dense grid and refines the
//! best cell by golden-section search. Utility, output and wealth updates
//! are computed here from scratch so that nothing is shared with the
//! first-order-condition solver being checked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auctioneer::Forecasts;
use crate::error::{Error, Result};
use crate::params::EconomyParams;
use crate::solver::Policy;
use crate::tree::{ClassId, EventTree, NodeId};

pub const MAX_DEPTH: usize = 3;
pub const MAX_CHILDREN: usize = 4;
pub const MAX_OUTCOMES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub tree: EventTree,
    pub scan_points: usize,
    pub golden_tol: f64,
    #[serde(default)]
    pub scenario_hash: String,
}

impl OracleSpec {
    pub fn new(tree: EventTree) -> Self {
        Self { tree, scan_points: 400, golden_tol: 1e-10, scenario_hash: String::new() }
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.scenario_hash = hash.into();
        self
    }

    pub fn validate(&self, params: &EconomyParams) -> Result<()> {
        params.validate()?;
        let t = &self.tree;
        if t.depth() > MAX_DEPTH {
            return Err(Error::Validation(format!("oracle handles at most {MAX_DEPTH} periods")));
        }
        if t.nodes.iter().any(|n| n.children.len() > MAX_CHILDREN) {
            return Err(Error::Validation(format!("oracle handles at most {MAX_CHILDREN} children per node")));
        }
        let wide =
            t.classes.iter().flat_map(|c| c.transitions.iter().flatten()).any(|d| d.outcomes.len() > MAX_OUTCOMES);
        if wide {
            return Err(Error::Validation(format!("oracle handles at most {MAX_OUTCOMES} employment points")));
        }
        if params.delta != 1.0 {
            return Err(Error::Validation("oracle requires full depreciation".into()));
        }
        if self.scan_points < 3 || !(self.golden_tol > 0.0) {
            return Err(Error::Validation("oracle needs >= 3 scan points and a positive tolerance".into()));
        }
        Ok(())
    }
}

fn period_utility(c: f64, sigma: f64) -> f64 {
    if !(c > 0.0) {
        f64::NEG_INFINITY
    } else if sigma == 1.0 {
        c.ln()
    } else {
        (c.powf(1.0 - sigma) - 1.0) / (1.0 - sigma)
    }
}

struct Oracle<'a> {
    spec: &'a OracleSpec,
    params: &'a EconomyParams,
    forecasts: &'a Forecasts,
    output: Vec<f64>,
}

impl<'a> Oracle<'a> {
    fn new(spec: &'a OracleSpec, params: &'a EconomyParams, forecasts: &'a Forecasts) -> Result<Self> {
        spec.validate(params)?;
        forecasts.check(&spec.tree)?;
        let tree = &spec.tree;
        let mut output = vec![0.0; tree.len()];
        output[tree.root().id] = params.y1;
        for n in &tree.nodes {
            if let Some(p) = n.parent {
                let capital = forecasts.get(p) * output[p];
                output[n.id] = n.z * capital.powf(params.alpha) * params.labor.powf(1.0 - params.alpha);
            }
        }
        Ok(Self { spec, params, forecasts, output })
    }

    fn objective(&self, node: NodeId, class: ClassId, omega: f64, gamma: f64) -> f64 {
        let p = self.params;
        let n = self.spec.tree.node(node);
        let mut total = period_utility((1.0 - gamma) * omega * self.output[node], p.sigma);
        if !total.is_finite() {
            return f64::NEG_INFINITY;
        }
        let invest = p.alpha * omega * gamma / self.forecasts.get(node);
        for c in &n.children {
            if c.prob == 0.0 {
                continue;
            }
            let dist = self.spec.tree.dist(class, c.node).expect("checked tree");
            for o in dist.outcomes.iter().filter(|o| o.prob > 0.0) {
                let next = invest + (1.0 - p.alpha) * o.e;
                let v = self.value(c.node, o.next_class_or(class), next);
                if !v.is_finite() {
                    return f64::NEG_INFINITY;
                }
                total += p.beta * c.prob * o.prob * v;
            }
        }
        total
    }

    fn value(&self, node: NodeId, class: ClassId, omega: f64) -> f64 {
        if self.spec.tree.node(node).is_terminal() {
            return period_utility(omega * self.output[node], self.params.sigma);
        }
        self.maximize(node, class, omega).1
    }

    fn maximize(&self, node: NodeId, class: ClassId, omega: f64) -> (f64, f64) {
        let k = self.spec.scan_points;
        let step = 1.0 / (k + 1) as f64;
        let f = |g: f64| self.objective(node, class, omega, g);
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        let mut best_i = 0;
        for i in 1..=k {
            let g = i as f64 * step;
            let v = f(g);
            if v.is_finite() && v > best.1 {
                best = (g, v);
                best_i = i;
            }
        }
        if best_i == 0 {
            return best;
        }
        let lo = (best_i - 1) as f64 * step;
        let hi = (best_i + 1) as f64 * step;
        let refined = golden_max(&f, lo, hi, self.spec.golden_tol);
        if refined.1 >= best.1 {
            refined
        } else {
            best
        }
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Optimal root savings rate for an agent of `class` with wealth `omega`.
pub fn brute_force_gamma(
    spec: &OracleSpec,
    params: &EconomyParams,
    forecasts: &Forecasts,
    class: ClassId,
    omega: f64,
) -> Result<f64> {
    let o = Oracle::new(spec, params, forecasts)?;
    let root = spec.tree.root();
    if root.is_terminal() {
        return Ok(0.0);
    }
    Ok(o.maximize(root.id, class, omega).0)
}

/// Expected discounted utility at the root from saving `gamma` now and
/// optimally thereafter.
pub fn oracle_objective(
    spec: &OracleSpec,
    params: &EconomyParams,
    forecasts: &Forecasts,
    class: ClassId,
    omega: f64,
    gamma: f64,
) -> Result<f64> {
    let o = Oracle::new(spec, params, forecasts)?;
    Ok(o.objective(spec.tree.root().id, class, omega, gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub omega: f64,
    pub solver: f64,
    pub oracle: f64,
    pub deviation: f64,
    /// Oracle objective at its own rate minus at the solver's rate.
    pub oracle_advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub class: ClassId,
    pub probes: Vec<Probe>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const COMPARE_TOL: f64 = 1e-4;

/// Root savings rates from `policy` against the oracle at every probe.
pub fn compare_policy(
    policy: &Policy,
    spec: &OracleSpec,
    params: &EconomyParams,
    forecasts: &Forecasts,
    class: ClassId,
    omegas: &[f64],
) -> Result<Comparison> {
    if policy.scenario_hash != spec.scenario_hash {
        return Err(Error::Consistency(format!(
            "policy scenario {} does not match oracle scenario {}",
            policy.scenario_hash, spec.scenario_hash
        )));
    }
    let o = Oracle::new(spec, params, forecasts)?;
    let root = spec.tree.root().id;
    let terminal = spec.tree.root().is_terminal();
    let probes: Vec<Probe> = omegas
        .par_iter()
        .map(|&w| {
            let solver = policy.gamma(root, class, w);
            if terminal {
                return Probe { omega: w, solver, oracle: 0.0, deviation: solver.abs(), oracle_advantage: 0.0 };
            }
            let (oracle, best) = o.maximize(root, class, w);
            let at_solver = o.objective(root, class, w, solver);
            Probe { omega: w, solver, oracle, deviation: (solver - oracle).abs(), oracle_advantage: best - at_solver }
        })
        .collect();
    let max_deviation = probes.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(Comparison { class, probes, max_deviation, tolerance: COMPARE_TOL, pass: max_deviation <= COMPARE_TOL })
}

/// `d gamma / d omega` at the root of a two-period economy, by implicit
/// differentiation of the stationarity condition of the oracle's objective.
pub fn two_period_slope(
    spec: &OracleSpec,
    params: &EconomyParams,
    forecasts: &Forecasts,
    class: ClassId,
    omega: f64,
    gamma: f64,
) -> Result<f64> {
    let o = Oracle::new(spec, params, forecasts)?;
    let tree = &spec.tree;
    let root = tree.root();
    if root.is_terminal() || root.children.iter().any(|c| !tree.node(c.node).is_terminal()) {
        return Err(Error::Validation("implicit slope needs exactly two periods".into()));
    }
    let (a, b, s) = (params.alpha, params.beta, params.sigma);
    let big_omega = forecasts.get(root.id);
    let y = o.output[root.id];
    // F(gamma, omega) = A(gamma, omega) - B(gamma, omega)
    let a_val = y.powf(1.0 - s) * omega.powf(1.0 - s) * (1.0 - gamma).powf(-s);
    let a_g = s * a_val / (1.0 - gamma);
    let a_w = (1.0 - s) * a_val / omega;
    let (mut m0, mut m1) = (0.0, 0.0);
    for c in &root.children {
        let yc = o.output[c.node].powf(1.0 - s);
        for out in tree.dist(class, c.node).expect("checked tree").outcomes.iter().filter(|o| o.prob > 0.0) {
            let next = a * omega * gamma / big_omega + (1.0 - a) * out.e;
            let w = c.prob * out.prob * yc;
            m0 += w * next.powf(-s);
            m1 += w * s * next.powf(-s - 1.0);
        }
    }
    let k = b * a / big_omega;
    let b_g = -k * omega * m1 * a * omega / big_omega;
    let b_w = k * m0 - k * omega * m1 * a * gamma / big_omega;
    Ok(-(a_w - b_w) / (a_g - b_g))
}
