//! Aggregate quantities along the event tree implied by a set of forecasts.

use serde::{Deserialize, Serialize};

use crate::auctioneer::Forecasts;
use crate::error::{domain, Result};
use crate::params::EconomyParams;
use crate::prices::{effective_transform, output};
use crate::tree::EventTree;

/// How wealth is measured at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepreciationPath {
    /// Effective output and effective wage shares; valid for any `delta`.
    #[default]
    Effective,
    /// Raw output with wage scale one; requires `delta == 1`.
    TotalDepreciation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeAggregates {
    /// Output produced at the node.
    pub y: f64,
    /// Effective output: the base against which wealth shares are measured.
    pub y_eff: f64,
    pub wage_scale: f64,
    /// Capital installed at the parent and used in production here.
    pub capital_in: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub nodes: Vec<NodeAggregates>,
}

impl Aggregates {
    pub fn compute(
        tree: &EventTree,
        params: &EconomyParams,
        forecasts: &Forecasts,
        path: DepreciationPath,
    ) -> Result<Self> {
        if path == DepreciationPath::TotalDepreciation && params.delta != 1.0 {
            return Err(domain("total-depreciation path requires delta = 1"));
        }
        forecasts.check(tree)?;
        let mut nodes =
            vec![NodeAggregates { y: params.y1, y_eff: params.y1, wage_scale: 1.0, capital_in: None }; tree.len()];
        for n in &tree.nodes {
            if n.is_terminal() {
                continue;
            }
            let omega = forecasts.get(n.id);
            let base = nodes[n.id].y_eff;
            let capital = omega * base;
            for c in &n.children {
                let z = tree.node(c.node).z;
                let y = output(capital, params.labor, z, params.alpha);
                nodes[c.node] = match path {
                    DepreciationPath::TotalDepreciation => {
                        NodeAggregates { y, y_eff: y, wage_scale: 1.0, capital_in: Some(capital) }
                    }
                    DepreciationPath::Effective => {
                        let q = effective_transform(y, base, omega, params.delta, params.alpha)?;
                        NodeAggregates { y, y_eff: q.y_eff, wage_scale: q.wage_scale, capital_in: Some(capital) }
                    }
                };
            }
        }
        Ok(Self { nodes })
    }

    pub fn y_eff(&self, node: usize) -> f64 {
        self.nodes[node].y_eff
    }

    pub fn wage_scale(&self, node: usize) -> f64 {
        self.nodes[node].wage_scale
    }
}
