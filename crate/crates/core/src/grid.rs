use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::tree::EventTree;

/// Wealth-grid layout: log-spaced points on `[omega_min, omega_max]`, the
/// point `1.0`, and linear refinement around every positive employment
/// support value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Extra linear points placed on `[e/4, 4e]` for each support value `e`.
    pub refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 400, omega_min: 1e-6, omega_max: 4.0, refine: 16 }
    }
}

impl GridSpec {
    pub fn build(&self, tree: &EventTree) -> Result<Vec<f64>> {
        if !(self.omega_min > 0.0 && self.omega_min < 1.0 && self.omega_max >= 1.0) {
            return Err(domain("grid needs 0 < omega_min < 1 <= omega_max"));
        }
        if self.points < 4 {
            return Err(domain("grid needs at least 4 points"));
        }
        let (lo, hi) = (self.omega_min.ln(), self.omega_max.ln());
        let mut g: Vec<f64> =
            (0..self.points).map(|i| (lo + (hi - lo) * i as f64 / (self.points - 1) as f64).exp()).collect();
        g[0] = self.omega_min;
        g[self.points - 1] = self.omega_max;
        g.push(1.0);
        let mut supports: Vec<f64> = tree
            .classes
            .iter()
            .flat_map(|c| c.transitions.iter().flatten())
            .flat_map(|d| d.outcomes.iter().map(|o| o.e))
            .filter(|&e| e > 0.0)
            .collect();
        supports.sort_by(|a, b| a.partial_cmp(b).unwrap());
        supports.dedup();
        if self.refine >= 2 {
            for e in supports {
                let (a, b) = ((e / 4.0).max(self.omega_min), (4.0 * e).min(self.omega_max));
                for i in 0..self.refine {
                    g.push(a + (b - a) * i as f64 / (self.refine - 1) as f64);
                }
            }
        }
        g.retain(|w| *w >= self.omega_min && *w <= self.omega_max);
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs());
        Ok(g)
    }
}
