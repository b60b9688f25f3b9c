//! Market clearing for capital-share forecasts.
//!
//! For each non-terminal aggregate node the auctioneer compares the capital
//! share `Omega` that agents were told to expect with the share they actually
//! invest, `sum_j gamma(omega_j) omega_j / Omega`. Because the realized
//! employment allocation is random, the residual at a node is the
//! expectation over population realizations reaching it; realizations are
//! enumerated exactly while their count stays under a cap and sampled with
//! seeded streams beyond it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::employment::{draw_employment, enumerate_draws, RealizationMode};
use crate::error::{Error, Result};
use crate::params::EconomyParams;
use crate::population::PopulationState;
use crate::rng;
use crate::solver::{gamma_upper_bound, solve_policy, Policy, SolveReport, SolverOptions};
use crate::tree::{ClassId, EventTree, NodeId};

/// Forecast capital share `Omega` for every non-terminal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecasts {
    pub omega: Vec<Option<f64>>,
}

impl Forecasts {
    /// The same forecast at every non-terminal node.
    pub fn constant(tree: &EventTree, value: f64) -> Self {
        Self { omega: tree.nodes.iter().map(|n| if n.is_terminal() { None } else { Some(value) }).collect() }
    }

    pub fn from_values(tree: &EventTree, values: &[f64]) -> Self {
        Self { omega: tree.nodes.iter().map(|n| if n.is_terminal() { None } else { Some(values[n.id]) }).collect() }
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.omega[node].unwrap_or_else(|| panic!("no forecast at node {node}"))
    }

    pub fn check(&self, tree: &EventTree) -> Result<()> {
        if self.omega.len() != tree.len() {
            return Err(Error::Consistency(format!("{} forecasts for {} nodes", self.omega.len(), tree.len())));
        }
        for n in &tree.nodes {
            match (n.is_terminal(), self.omega[n.id]) {
                (true, _) => {}
                (false, Some(w)) if w > 0.0 && w < 1.0 => {}
                (false, Some(w)) => return Err(Error::Domain(format!("forecast {w} at node {} outside (0,1)", n.id))),
                (false, None) => return Err(Error::Consistency(format!("missing forecast at node {}", n.id))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClearingOptions {
    /// Exponent `lambda` in `Omega <- Omega (1 + r)^lambda`.
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub mode: RealizationMode,
    /// Largest number of realizations enumerated at one node.
    pub enumeration_cap: usize,
    /// Samples per node once enumeration is abandoned.
    pub samples: usize,
    pub seed: u64,
    /// Consecutive projected steps at one node before giving up.
    pub max_projections: usize,
}

impl Default for ClearingOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 200,
            tol: 1e-8,
            mode: RealizationMode::ExactFraction,
            enumeration_cap: 4096,
            samples: 256,
            seed: 0,
            max_projections: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub node: NodeId,
    pub omega: f64,
    pub residual: f64,
    /// Standard error of the residual; zero when enumerated.
    pub std_error: f64,
    pub realizations: usize,
    pub sampled: bool,
    /// Agent wealth shares that fell below the policy grid.
    pub below_grid: usize,
    pub above_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResiduals {
    pub nodes: Vec<NodeResidual>,
}

impl ClearingResiduals {
    pub fn max_abs(&self) -> f64 {
        self.nodes.iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
    }

    pub fn get(&self, node: NodeId) -> Option<&NodeResidual> {
        self.nodes.iter().find(|r| r.node == node)
    }
}

#[derive(Debug, Clone)]
struct Realization {
    weight: f64,
    classes: Vec<ClassId>,
    wealth: Vec<f64>,
}

/// Expected clearing residual at every non-terminal node when agents follow
/// `policy` and start from `population` at the root.
pub fn residuals_with_policy(
    forecasts: &Forecasts,
    tree: &EventTree,
    params: &EconomyParams,
    population: &PopulationState,
    policy: &Policy,
    opts: &ClearingOptions,
) -> Result<ClearingResiduals> {
    forecasts.check(tree)?;
    if population.len() != params.agents {
        return Err(Error::Consistency(format!(
            "population has {} agents, economy has N={}",
            population.len(),
            params.agents
        )));
    }
    // wage scales only enter the wealth transition
    let agg = crate::aggregates::Aggregates::compute(tree, params, forecasts, Default::default())?;
    let mut pops: Vec<Option<(Vec<Realization>, bool)>> = vec![None; tree.len()];
    pops[tree.root().id] = Some((
        vec![Realization { weight: 1.0, classes: population.classes.clone(), wealth: population.wealth.clone() }],
        false,
    ));
    let mut out = Vec::new();
    for n in &tree.nodes {
        if n.is_terminal() {
            continue;
        }
        let (reals, sampled) = pops[n.id].take().expect("parents precede children");
        let omega_t = forecasts.get(n.id);
        let mut below = 0;
        let mut above = 0;
        let mut savings: Vec<Vec<f64>> = Vec::with_capacity(reals.len());
        let mut totals = Vec::with_capacity(reals.len());
        for r in &reals {
            let s: Vec<f64> = r
                .classes
                .iter()
                .zip(&r.wealth)
                .map(|(&l, &w)| {
                    let ev = policy.eval(n.id, l, w);
                    below += ev.below_grid as usize;
                    above += ev.above_grid as usize;
                    ev.gamma * w / omega_t
                })
                .collect();
            totals.push(s.iter().sum::<f64>() - 1.0);
            savings.push(s);
        }
        let mean: f64 = reals.iter().zip(&totals).map(|(r, t)| r.weight * t).sum();
        let std_error = if sampled && reals.len() > 1 {
            let m = reals.len() as f64;
            let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        out.push(NodeResidual {
            node: n.id,
            omega: omega_t,
            residual: mean,
            std_error,
            realizations: reals.len(),
            sampled,
            below_grid: below,
            above_grid: above,
        });

        for c in &n.children {
            if c.prob == 0.0 || tree.node(c.node).is_terminal() {
                continue;
            }
            let ws = agg.wage_scale(c.node);
            let step = |s: &[f64], d: &crate::employment::Draw, weight: f64| Realization {
                weight,
                classes: d.next_class.clone(),
                wealth: s
                    .iter()
                    .zip(&d.shares)
                    .map(|(&s, &e)| params.alpha * s + (1.0 - params.alpha) * e * ws)
                    .collect::<Vec<f64>>(),
            };
            let mut next = Vec::new();
            let mut exact = !sampled;
            if exact {
                let mut count = 0usize;
                'outer: for (r, s) in reals.iter().zip(&savings) {
                    match enumerate_draws(tree, c.node, &r.classes, opts.mode, opts.enumeration_cap)? {
                        Some(draws) => {
                            count += draws.len();
                            if count > opts.enumeration_cap {
                                exact = false;
                                break 'outer;
                            }
                            for (w, d) in &draws {
                                next.push(step(s, d, r.weight * w));
                            }
                        }
                        None => {
                            exact = false;
                            break 'outer;
                        }
                    }
                }
            }
            if !exact {
                next.clear();
                let k = opts.samples.max(1);
                for i in 0..k {
                    let mut g = rng::stream(opts.seed, c.node as u64, i as u64, rng::DOMAIN_CLEARING);
                    let p = if sampled && reals.len() == k { i } else { pick(&reals, &mut g) };
                    let d = draw_employment(tree, c.node, &reals[p].classes, opts.mode, &mut g)?;
                    next.push(step(&savings[p], &d, 1.0 / k as f64));
                }
            }
            pops[c.node] = Some((next, !exact));
        }
    }
    Ok(ClearingResiduals { nodes: out })
}

fn pick<R: Rng>(reals: &[Realization], g: &mut R) -> usize {
    if reals.len() == 1 {
        return 0;
    }
    let u: f64 = g.random();
    let mut acc = 0.0;
    for (i, r) in reals.iter().enumerate() {
        acc += r.weight;
        if u < acc {
            return i;
        }
    }
    reals.len() - 1
}

/// Solves the agents' problem under `forecasts` and returns the clearing
/// residuals it implies.
pub fn clearing_residuals(
    forecasts: &Forecasts,
    tree: &EventTree,
    params: &EconomyParams,
    population: &PopulationState,
    solver: &SolverOptions,
    opts: &ClearingOptions,
) -> Result<ClearingResiduals> {
    let (policy, _) = solve_policy(tree, params, forecasts, solver)?;
    residuals_with_policy(forecasts, tree, params, population, &policy, opts)
}

/// Starting forecasts: the no-employment savings rate, iterated a few times
/// from one half.
pub fn initial_forecasts(tree: &EventTree, params: &EconomyParams) -> Result<Forecasts> {
    let mut f = Forecasts::constant(tree, 0.5);
    for _ in 0..3 {
        let bar = gamma_upper_bound(tree, &f, params)?;
        let clipped: Vec<f64> = bar.iter().map(|g| g.clamp(1e-6, 1.0 - 1e-6)).collect();
        f = Forecasts::from_values(tree, &clipped);
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingReport {
    pub converged: bool,
    pub iterations: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_abs_residual: f64,
    /// `max |r|` after each iteration.
    pub history: Vec<f64>,
    pub projected_steps: usize,
    pub residuals: ClearingResiduals,
    pub message: Option<String>,
}

/// Result of the forecast fixed point, including the final policy.
#[derive(Debug, Clone)]
pub struct Cleared {
    pub forecasts: Forecasts,
    pub report: ClearingReport,
    pub policy: Policy,
    pub solve_report: SolveReport,
}

const MIN_DAMPING: f64 = 1e-3;

/// Damped fixed-point iteration on the forecasts. Every node is updated
/// simultaneously from the residuals of the previous iterate. A node whose
/// residual changes sign has its step exponent halved; steps in a steady
/// direction grow it back towards `opts.damping`.
pub fn solve_forecasts(
    tree: &EventTree,
    params: &EconomyParams,
    population: &PopulationState,
    initial: Option<Forecasts>,
    solver: &SolverOptions,
    opts: &ClearingOptions,
) -> Result<Cleared> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!("damping {} outside (0,1]", opts.damping)));
    }
    let mut f = match initial {
        Some(f) => f,
        None => initial_forecasts(tree, params)?,
    };
    f.check(tree)?;
    let mut history = Vec::new();
    let mut streak = vec![0usize; tree.len()];
    let mut lambda = vec![opts.damping; tree.len()];
    let mut last_sign = vec![0.0f64; tree.len()];
    let mut projected_steps = 0;
    let mut message = None;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (policy, solve_report) = solve_policy(tree, params, &f, solver)?;
        let res = residuals_with_policy(&f, tree, params, population, &policy, opts)?;
        let max_abs = res.max_abs();
        history.push(max_abs);
        let converged = max_abs <= opts.tol;
        let stop = converged || iterations >= opts.max_iters || message.is_some();
        if stop {
            if !converged && message.is_none() {
                message = Some(format!("no convergence after {iterations} iterations"));
            }
            let report = ClearingReport {
                converged,
                iterations,
                damping: opts.damping,
                tol: opts.tol,
                max_abs_residual: max_abs,
                history,
                projected_steps,
                residuals: res,
                message: if converged { None } else { message },
            };
            return Ok(Cleared { forecasts: f, report, policy, solve_report });
        }
        let mut next = f.clone();
        for r in &res.nodes {
            let sign = r.residual.signum();
            lambda[r.node] = if sign * last_sign[r.node] < 0.0 {
                (lambda[r.node] * 0.5).max(MIN_DAMPING)
            } else {
                (lambda[r.node] * 1.25).min(opts.damping)
            };
            last_sign[r.node] = sign;
            let (w, projected) = damped_step(r.omega, r.residual, lambda[r.node]);
            next.omega[r.node] = Some(w);
            if projected {
                projected_steps += 1;
                streak[r.node] += 1;
                if streak[r.node] > opts.max_projections {
                    message = Some(format!("forecast at node {} stuck at the boundary", r.node));
                }
            } else {
                streak[r.node] = 0;
            }
        }
        f = next;
    }
}

/// `Omega (1 + r)^lambda`, with the exponent halved until the result lies in
/// (0,1). The flag reports whether any shrinking was needed.
pub fn damped_step(omega: f64, residual: f64, damping: f64) -> (f64, bool) {
    let base = (1.0 + residual).max(1e-12);
    let mut lambda = damping;
    for k in 0..60 {
        let w = omega * base.powf(lambda);
        if w > 0.0 && w < 1.0 && w.is_finite() {
            return (w, k > 0);
        }
        lambda *= 0.5;
    }
    (omega.clamp(1e-9, 1.0 - 1e-9), true)
}
