use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::employment::apportion;
use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{ClassId, NodeId};

/// Per-agent prospects class and wealth share at a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub node: NodeId,
    pub classes: Vec<ClassId>,
    pub wealth: Vec<f64>,
}

impl PopulationState {
    pub fn new(node: NodeId, classes: Vec<ClassId>, wealth: Vec<f64>) -> Result<Self> {
        if classes.len() != wealth.len() {
            return Err(Error::Consistency(format!("{} classes for {} wealth shares", classes.len(), wealth.len())));
        }
        if let Some(w) = wealth.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("wealth share {w} must be non-negative")));
        }
        Ok(Self { node, classes, wealth })
    }

    /// `n` agents in class 0 holding equal shares at the root.
    pub fn equal(n: usize) -> Self {
        Self { node: 0, classes: vec![0; n], wealth: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.wealth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealth.is_empty()
    }

    pub fn total_wealth(&self) -> f64 {
        self.wealth.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WealthSpec {
    Equal,
    Explicit {
        shares: Vec<f64>,
    },
    /// Log-normal draws normalized to sum to one.
    Lognormal {
        sigma: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassSpec {
    Single {
        #[serde(default)]
        class: ClassId,
    },
    Explicit {
        classes: Vec<ClassId>,
    },
    /// Largest-remainder split of the agents, in order, by class weights.
    Proportions {
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(default = "equal")]
    pub wealth: WealthSpec,
    #[serde(default = "single")]
    pub classes: ClassSpec,
}

fn equal() -> WealthSpec {
    WealthSpec::Equal
}

fn single() -> ClassSpec {
    ClassSpec::Single { class: 0 }
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self { wealth: equal(), classes: single() }
    }
}

impl PopulationSpec {
    pub fn build(&self, agents: usize) -> Result<PopulationState> {
        let wealth = match &self.wealth {
            WealthSpec::Equal => vec![1.0 / agents as f64; agents],
            WealthSpec::Explicit { shares } => {
                if shares.len() != agents {
                    return Err(Error::Config(format!("{} wealth shares for N={agents}", shares.len())));
                }
                shares.clone()
            }
            WealthSpec::Lognormal { sigma, seed } => {
                let dist = LogNormal::new(0.0, *sigma).map_err(|e| Error::Config(format!("lognormal wealth: {e}")))?;
                let mut r = rng::stream(*seed, 0, 0, rng::DOMAIN_POPULATION);
                let raw: Vec<f64> = (0..agents).map(|_| dist.sample(&mut r)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            }
        };
        let classes = match &self.classes {
            ClassSpec::Single { class } => vec![*class; agents],
            ClassSpec::Explicit { classes } => classes.clone(),
            ClassSpec::Proportions { weights } => {
                let total: f64 = weights.iter().sum();
                let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
                apportion(agents, &probs).into_iter().enumerate().flat_map(|(l, c)| std::iter::repeat_n(l, c)).collect()
            }
        };
        PopulationState::new(0, classes, wealth)
    }
}
