//! Backward induction for the agent's problem on an event tree.
//!
//! At a node with remaining horizon `h >= 2` the agent holding wealth share
//! `omega` chooses the savings rate `gamma = s * Omega / omega`. The
//! first-order condition
//!
//! ```text
//! Y^(1-σ) ω^(1-σ) / (1-γ)^σ = (β α ω / Ω) · E[ V'_{h-1}(α ω γ / Ω + (1-α) e') ]
//! ```
//!
//! is solved by bisection, with next-period marginal values taken from the
//! envelope identity `V'(y) = Y'^(1-σ) / (y (1 - γ_{h-1}(y)))^σ`. The left
//! side increases and the right side decreases in `γ`, so the root is unique.

pub mod bounds;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregates::{Aggregates, DepreciationPath};
use crate::auctioneer::Forecasts;
use crate::error::{domain, Error, Result};
use crate::grid::GridSpec;
use crate::interp::{hermite, pchip_slopes};
use crate::params::EconomyParams;
use crate::tree::{ClassId, EventTree, NodeId};
use crate::utility::{marginal, utility};

pub use bounds::{gamma_lower_bound, gamma_upper_bound, LowerBounds, BOUND_TOL};

pub const POLICY_FORMAT_VERSION: u32 = 1;
const BRACKET_LO: f64 = 1e-12;
const BRACKET_HI: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub grid: GridSpec,
    /// Bisection stops once the bracket is narrower than this (or cannot
    /// shrink further in floating point).
    pub bisection_tol: f64,
    pub max_bisections: usize,
    /// Relative FOC residual `|LHS - RHS| / LHS` allowed in a passing report.
    pub residual_tol: f64,
    /// Downward steps between neighbouring grid solutions up to this size are
    /// treated as rounding and flattened; larger ones fail the report.
    pub monotone_tol: f64,
    pub depreciation: DepreciationPath,
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            bisection_tol: 1e-14,
            max_bisections: 200,
            residual_tol: 1e-8,
            monotone_tol: 1e-12,
            depreciation: DepreciationPath::Effective,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub gamma: Vec<f64>,
    /// Hermite slopes with respect to `ln omega`.
    pub slopes: Vec<f64>,
    /// Large-wealth limit of the savings rate: labor income becomes
    /// negligible, so the rate tends to the no-employment rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEval {
    pub gamma: f64,
    pub below_grid: bool,
    pub above_grid: bool,
}

/// Savings functions for every (non-terminal node, class) pair, tabulated on
/// a shared wealth grid. Terminal nodes save nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u32,
    pub scenario_hash: String,
    pub interpolation: String,
    pub bisection_tol: f64,
    pub residual_tol: f64,
    pub grid: Vec<f64>,
    pub terminal: Vec<bool>,
    pub tables: Vec<Vec<Option<GammaTable>>>,
}

impl Policy {
    fn empty(tree: &EventTree, grid: Vec<f64>, opts: &SolverOptions) -> Self {
        Self {
            version: POLICY_FORMAT_VERSION,
            scenario_hash: String::new(),
            interpolation: "pchip-log-omega".into(),
            bisection_tol: opts.bisection_tol,
            residual_tol: opts.residual_tol,
            grid,
            terminal: tree.nodes.iter().map(|n| n.is_terminal()).collect(),
            tables: vec![vec![None; tree.class_count()]; tree.len()],
        }
    }

    pub fn table(&self, node: NodeId, class: ClassId) -> Option<&GammaTable> {
        self.tables.get(node)?.get(class)?.as_ref()
    }

    pub fn omega_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn omega_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn gamma(&self, node: NodeId, class: ClassId, omega: f64) -> f64 {
        self.eval(node, class, omega).gamma
    }

    /// Interpolated savings rate. Below the grid the rate is clamped; above
    /// it the rate approaches the table's limit in powers of `1/omega`. Both
    /// cases are flagged.
    pub fn eval(&self, node: NodeId, class: ClassId, omega: f64) -> GammaEval {
        if self.terminal[node] {
            return GammaEval { gamma: 0.0, below_grid: false, above_grid: false };
        }
        let t = self.table(node, class).unwrap_or_else(|| panic!("no savings table for node {node}, class {class}"));
        let g = &self.grid;
        let n = g.len();
        if omega <= g[0] {
            return GammaEval { gamma: t.gamma[0], below_grid: omega < g[0], above_grid: false };
        }
        if omega >= g[n - 1] {
            let top = t.gamma[n - 1];
            let gamma = match t.limit {
                Some(l) if l > top => {
                    // l - a x - b x^2 in x = omega_max / omega, matching the
                    // value and log-slope at the top grid point.
                    let d = l - top;
                    let m = t.slopes[n - 1].max(0.0);
                    let (a, b) = if m <= 2.0 * d { (2.0 * d - m, m - d) } else { (0.0, d) };
                    let x = g[n - 1] / omega;
                    l - a * x - b * x * x
                }
                _ => top,
            };
            return GammaEval { gamma, below_grid: false, above_grid: omega > g[n - 1] };
        }
        let i = g.partition_point(|&x| x <= omega) - 1;
        let gamma = if g[i] == omega {
            t.gamma[i]
        } else {
            hermite(g[i].ln(), g[i + 1].ln(), t.gamma[i], t.gamma[i + 1], t.slopes[i], t.slopes[i + 1], omega.ln())
        };
        GammaEval { gamma, below_grid: false, above_grid: false }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if p.version != POLICY_FORMAT_VERSION {
            return Err(Error::Consistency(format!("unsupported policy format {}", p.version)));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSolution {
    pub gamma: f64,
    pub iterations: usize,
    /// `|LHS - RHS| / LHS` at the returned rate.
    pub residual: f64,
    /// The FOC did not change sign on the bracket; the rate sits at a corner.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub node: NodeId,
    pub class: ClassId,
    pub max_residual: f64,
    pub max_iterations: usize,
    pub mean_iterations: f64,
    pub boundary_points: usize,
    pub monotone_repairs: usize,
    pub max_monotone_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub grid_size: usize,
    pub residual_tol: f64,
    pub bisection_tol: f64,
    pub max_residual: f64,
    pub boundary_points: usize,
    pub monotone_ok: bool,
    pub pass: bool,
    pub tables: Vec<TableStats>,
}

/// The agent's problem under fixed forecasts.
pub struct AgentModel<'a> {
    pub tree: &'a EventTree,
    pub params: &'a EconomyParams,
    pub forecasts: &'a Forecasts,
    pub aggregates: Aggregates,
    pub grid: Vec<f64>,
    pub opts: SolverOptions,
    /// No-employment savings rate per node.
    limits: Vec<f64>,
}

impl<'a> AgentModel<'a> {
    pub fn new(
        tree: &'a EventTree,
        params: &'a EconomyParams,
        forecasts: &'a Forecasts,
        opts: SolverOptions,
    ) -> Result<Self> {
        params.validate()?;
        tree.check(params.periods)?;
        let aggregates = Aggregates::compute(tree, params, forecasts, opts.depreciation)?;
        let grid = opts.grid.build(tree)?;
        let limits = gamma_upper_bound(tree, forecasts, params)?;
        Ok(Self { tree, params, forecasts, aggregates, grid, opts, limits })
    }

    fn y_factor(&self, node: NodeId) -> f64 {
        if self.params.is_log() {
            1.0
        } else {
            self.aggregates.y_eff(node).powf(1.0 - self.params.sigma)
        }
    }

    /// Both sides of the first-order condition at savings rate `gamma`.
    pub fn foc_sides(&self, policy: &Policy, node: NodeId, class: ClassId, omega: f64, gamma: f64) -> (f64, f64) {
        let p = self.params;
        let sigma = p.sigma;
        let lhs = if p.is_log() {
            1.0 / (1.0 - gamma)
        } else {
            self.y_factor(node) * omega.powf(1.0 - sigma) / (1.0 - gamma).powf(sigma)
        };
        let omega_t = self.forecasts.get(node);
        let invested = p.alpha * omega * gamma / omega_t;
        let mut expect = 0.0;
        for c in &self.tree.node(node).children {
            if c.prob == 0.0 {
                continue;
            }
            let dist = self.tree.dist(class, c.node).expect("checked tree");
            let ws = self.aggregates.wage_scale(c.node);
            let y_next = self.aggregates.y_eff(c.node);
            let mut inner = 0.0;
            for o in &dist.outcomes {
                if o.prob == 0.0 {
                    continue;
                }
                let y = invested + (1.0 - p.alpha) * o.e * ws;
                if y <= 0.0 {
                    return (lhs, f64::INFINITY);
                }
                let g_next = policy.gamma(c.node, o.next_class_or(class), y);
                inner += o.prob * marginal(y * (1.0 - g_next), y_next, sigma);
            }
            expect += c.prob * inner;
        }
        let rhs = p.beta * p.alpha * omega / omega_t * expect;
        (lhs, rhs)
    }

    /// `LHS - RHS` of the first-order condition; `-inf` when a
    /// positive-probability branch leaves no next-period wealth.
    pub fn foc_residual(&self, policy: &Policy, node: NodeId, class: ClassId, omega: f64, gamma: f64) -> f64 {
        let (lhs, rhs) = self.foc_sides(policy, node, class, omega, gamma);
        if rhs.is_infinite() {
            f64::NEG_INFINITY
        } else {
            lhs - rhs
        }
    }

    fn relative_residual(&self, policy: &Policy, node: NodeId, class: ClassId, omega: f64, gamma: f64) -> f64 {
        let (lhs, rhs) = self.foc_sides(policy, node, class, omega, gamma);
        ((lhs - rhs) / lhs).abs()
    }

    /// Solves the first-order condition at one wealth level. `policy` must
    /// already hold the tables of every child node.
    pub fn solve_point(&self, policy: &Policy, node: NodeId, class: ClassId, omega: f64) -> PointSolution {
        if self.tree.node(node).is_terminal() {
            return PointSolution { gamma: 0.0, iterations: 0, residual: 0.0, boundary: false };
        }
        let f = |g: f64| self.foc_residual(policy, node, class, omega, g);
        let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
        if f(lo) >= 0.0 {
            let residual = self.relative_residual(policy, node, class, omega, lo);
            return PointSolution { gamma: 0.0, iterations: 1, residual, boundary: true };
        }
        if f(hi) <= 0.0 {
            let residual = self.relative_residual(policy, node, class, omega, hi);
            return PointSolution { gamma: hi, iterations: 2, residual, boundary: true };
        }
        let mut iterations = 2;
        while iterations < self.opts.max_bisections && hi - lo > self.opts.bisection_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            iterations += 1;
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let gamma = 0.5 * (lo + hi);
        let residual = self.relative_residual(policy, node, class, omega, gamma);
        PointSolution { gamma, iterations, residual, boundary: false }
    }

    fn solve_table(&self, policy: &Policy, node: NodeId, class: ClassId) -> (GammaTable, TableStats) {
        let sols: Vec<PointSolution> = if self.opts.parallel {
            self.grid.par_iter().map(|&w| self.solve_point(policy, node, class, w)).collect()
        } else {
            self.grid.iter().map(|&w| self.solve_point(policy, node, class, w)).collect()
        };
        let mut gamma: Vec<f64> = sols.iter().map(|s| s.gamma).collect();
        let mut repairs = 0;
        let mut worst: f64 = 0.0;
        for i in 1..gamma.len() {
            if gamma[i] < gamma[i - 1] {
                let v = gamma[i - 1] - gamma[i];
                worst = worst.max(v);
                if v <= self.opts.monotone_tol {
                    gamma[i] = gamma[i - 1];
                    repairs += 1;
                }
            }
        }
        let logs: Vec<f64> = self.grid.iter().map(|w| w.ln()).collect();
        let slopes = pchip_slopes(&logs, &gamma);
        let interior = sols.iter().filter(|s| !s.boundary);
        let stats = TableStats {
            node,
            class,
            max_residual: interior.clone().map(|s| s.residual).fold(0.0, f64::max),
            max_iterations: sols.iter().map(|s| s.iterations).max().unwrap_or(0),
            mean_iterations: sols.iter().map(|s| s.iterations as f64).sum::<f64>() / sols.len() as f64,
            boundary_points: sols.iter().filter(|s| s.boundary).count(),
            monotone_repairs: repairs,
            max_monotone_violation: worst,
        };
        (GammaTable { gamma, slopes, limit: Some(self.limits[node]) }, stats)
    }

    /// Backward induction over the whole tree.
    pub fn solve(&self) -> (Policy, SolveReport) {
        let mut policy = Policy::empty(self.tree, self.grid.clone(), &self.opts);
        let mut stats = Vec::new();
        for level in self.tree.levels().into_iter().rev() {
            let jobs: Vec<(NodeId, ClassId)> = level
                .iter()
                .filter(|&&n| !self.tree.node(n).is_terminal())
                .flat_map(|&n| (0..self.tree.class_count()).map(move |l| (n, l)))
                .collect();
            let solved: Vec<(GammaTable, TableStats)> =
                jobs.iter().map(|&(n, l)| self.solve_table(&policy, n, l)).collect();
            for ((n, l), (table, st)) in jobs.into_iter().zip(solved) {
                policy.tables[n][l] = Some(table);
                stats.push(st);
            }
        }
        stats.sort_by_key(|s| (s.node, s.class));
        let max_residual = stats.iter().map(|s| s.max_residual).fold(0.0, f64::max);
        let monotone_ok = stats.iter().all(|s| s.max_monotone_violation <= self.opts.monotone_tol);
        let report = SolveReport {
            grid_size: self.grid.len(),
            residual_tol: self.opts.residual_tol,
            bisection_tol: self.opts.bisection_tol,
            max_residual,
            boundary_points: stats.iter().map(|s| s.boundary_points).sum(),
            monotone_ok,
            pass: max_residual <= self.opts.residual_tol && monotone_ok,
            tables: stats,
        };
        (policy, report)
    }

    /// Expected discounted utility from following `policy` on the subtree
    /// below `node`, starting from wealth share `omega`.
    pub fn value(&self, policy: &Policy, node: NodeId, class: ClassId, omega: f64) -> f64 {
        let p = self.params;
        let y = self.aggregates.y_eff(node);
        let n = self.tree.node(node);
        if n.is_terminal() {
            return utility(omega * y, p.sigma);
        }
        let gamma = policy.gamma(node, class, omega);
        let mut v = utility((1.0 - gamma) * omega * y, p.sigma);
        let invested = p.alpha * omega * gamma / self.forecasts.get(node);
        for c in &n.children {
            if c.prob == 0.0 {
                continue;
            }
            let ws = self.aggregates.wage_scale(c.node);
            let dist = self.tree.dist(class, c.node).expect("checked tree");
            for o in &dist.outcomes {
                if o.prob == 0.0 {
                    continue;
                }
                let y_next = invested + (1.0 - p.alpha) * o.e * ws;
                v += p.beta * c.prob * o.prob * self.value(policy, c.node, o.next_class_or(class), y_next);
            }
        }
        v
    }

    /// Value by forward substitution and its derivative from the envelope
    /// identity `V' = Y^(1-σ) / (ω - sΩ)^σ`.
    pub fn value_and_derivative(
        &self,
        policy: &Policy,
        node: NodeId,
        class: ClassId,
        omega: f64,
    ) -> Result<(f64, f64)> {
        if !(omega > 0.0) {
            return Err(domain(format!("value needs omega > 0, got {omega}")));
        }
        let v = self.value(policy, node, class, omega);
        let gamma = policy.gamma(node, class, omega);
        let dv = marginal(omega * (1.0 - gamma), self.aggregates.y_eff(node), self.params.sigma);
        Ok((v, dv))
    }
}

/// Solves every class's savings functions under `forecasts`.
pub fn solve_policy(
    tree: &EventTree,
    params: &EconomyParams,
    forecasts: &Forecasts,
    opts: &SolverOptions,
) -> Result<(Policy, SolveReport)> {
    let model = AgentModel::new(tree, params, forecasts, opts.clone())?;
    Ok(model.solve())
}

/// Next-period wealth share from an investment share and an effective wage share.
pub fn wealth_transition(s: f64, e_eff: f64, alpha: f64) -> f64 {
    alpha * s + (1.0 - alpha) * e_eff
}

#[cfg(test)]
mod tests;
