//! Analytic bracket on the savings rate.
//!
//! The upper bound is the savings rate of an agent who never receives wages;
//! it solves
//!
//! ```text
//! 1/(1-γ̄_h) = 1 + (β α^(1-σ) E[(Y'/(Ω Y))^(1-σ) (1-γ̄_{h-1})^(-σ)])^(1/σ)
//! ```
//!
//! leafward to rootward. The lower bound keeps only the zero-wage branches of
//! the same expectation (`E[X 1{e=0}]`), so it depends on the class.

use serde::{Deserialize, Serialize};

use crate::aggregates::{Aggregates, DepreciationPath};
use crate::auctioneer::Forecasts;
use crate::error::Result;
use crate::params::EconomyParams;
use crate::tree::{ClassId, EventTree, NodeId};

/// Slack when checking solved rates against the bounds. The lower bound is
/// attained as wealth vanishes, so at the bottom of the grid the two agree
/// to root-finding precision.
pub const BOUND_TOL: f64 = 1e-12;

fn combine(params: &EconomyParams, sum: f64) -> f64 {
    let sigma = params.sigma;
    let inner = if params.is_log() {
        params.beta * sum
    } else {
        (params.beta * params.alpha.powf(1.0 - sigma) * sum).powf(1.0 / sigma)
    };
    // 1/(1-γ) = 1 + inner
    inner / (1.0 + inner)
}

fn growth_term(params: &EconomyParams, agg: &Aggregates, omega: f64, node: NodeId, child: NodeId) -> f64 {
    if params.is_log() {
        1.0
    } else {
        (agg.y_eff(child) / (omega * agg.y_eff(node))).powf(1.0 - params.sigma)
    }
}

fn tail(params: &EconomyParams, gamma_next: f64) -> f64 {
    if params.is_log() {
        1.0 / (1.0 - gamma_next)
    } else {
        (1.0 - gamma_next).powf(-params.sigma)
    }
}

/// No-employment savings rate `γ̄` at every node (zero at terminal nodes).
pub fn gamma_upper_bound(tree: &EventTree, forecasts: &Forecasts, params: &EconomyParams) -> Result<Vec<f64>> {
    params.validate()?;
    let agg = &Aggregates::compute(tree, params, forecasts, DepreciationPath::Effective)?;
    let mut out = vec![0.0; tree.len()];
    for n in tree.nodes.iter().rev() {
        if n.is_terminal() {
            continue;
        }
        let omega = forecasts.get(n.id);
        let sum: f64 = n
            .children
            .iter()
            .map(|c| c.prob * growth_term(params, agg, omega, n.id, c.node) * tail(params, out[c.node]))
            .sum();
        out[n.id] = combine(params, sum);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    /// `values[node][class]`.
    pub values: Vec<Vec<f64>>,
    /// (node, class) pairs with no unemployment mass, where the bound is 0.
    pub degenerate: Vec<(NodeId, ClassId)>,
}

impl LowerBounds {
    pub fn get(&self, node: NodeId, class: ClassId) -> f64 {
        self.values[node][class]
    }
}

/// Savings-rate floor from the zero-wage branches only.
pub fn gamma_lower_bound(tree: &EventTree, forecasts: &Forecasts, params: &EconomyParams) -> Result<LowerBounds> {
    params.validate()?;
    let agg = &Aggregates::compute(tree, params, forecasts, DepreciationPath::Effective)?;
    let k = tree.class_count();
    let mut values = vec![vec![0.0; k]; tree.len()];
    let mut degenerate = Vec::new();
    for n in tree.nodes.iter().rev() {
        if n.is_terminal() {
            continue;
        }
        let omega = forecasts.get(n.id);
        for l in 0..k {
            let mut sum = 0.0;
            for c in &n.children {
                let dist = tree.dist(l, c.node).expect("checked tree");
                let g = growth_term(params, agg, omega, n.id, c.node);
                for o in dist.outcomes.iter().filter(|o| o.e == 0.0 && o.prob > 0.0) {
                    sum += c.prob * o.prob * g * tail(params, values[c.node][o.next_class_or(l)]);
                }
            }
            if sum == 0.0 {
                degenerate.push((n.id, l));
            }
            values[n.id][l] = combine(params, sum);
        }
    }
    Ok(LowerBounds { values, degenerate })
}
