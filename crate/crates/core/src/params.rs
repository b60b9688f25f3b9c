use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Structural parameters of the economy.
///
/// JSON keys follow the model's conventional symbols (`alpha`, `beta`,
/// `sigma`, `delta`, `T`, `N`, `Y1`, `L_norm`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyParams {
    /// Capital share of output.
    pub alpha: f64,
    /// Discount factor.
    pub beta: f64,
    /// Relative risk aversion; `1.0` selects log utility.
    pub sigma: f64,
    /// Depreciation rate.
    pub delta: f64,
    #[serde(rename = "T")]
    pub periods: usize,
    #[serde(rename = "N")]
    pub agents: usize,
    /// Initial output in goods units.
    #[serde(rename = "Y1")]
    pub y1: f64,
    #[serde(rename = "L_norm", default = "default_labor")]
    pub labor: f64,
}

fn default_labor() -> f64 {
    1.0
}

impl Default for EconomyParams {
    fn default() -> Self {
        Self { alpha: 0.36, beta: 0.95, sigma: 1.0, delta: 1.0, periods: 2, agents: 1, y1: 1.0, labor: 1.0 }
    }
}

impl EconomyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(domain(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(domain(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(domain(format!("delta must lie in (0,1], got {}", self.delta)));
        }
        if self.periods < 1 {
            return Err(domain("T must be at least 1"));
        }
        if self.agents < 1 {
            return Err(domain("N must be at least 1"));
        }
        if !(self.y1 > 0.0 && self.y1.is_finite()) {
            return Err(domain(format!("Y1 must be positive, got {}", self.y1)));
        }
        if !(self.labor > 0.0 && self.labor.is_finite()) {
            return Err(domain(format!("L_norm must be positive, got {}", self.labor)));
        }
        Ok(())
    }

    /// Log utility is handled on its own code path, selected by exact equality.
    pub fn is_log(&self) -> bool {
        self.sigma == 1.0
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_periods(mut self, periods: usize) -> Self {
        self.periods = periods;
        self
    }

    pub fn with_agents(mut self, agents: usize) -> Self {
        self.agents = agents;
        self
    }
}
