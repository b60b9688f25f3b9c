//! Scenario configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auctioneer::ClearingOptions;
use crate::error::{Error, Result};
use crate::params::EconomyParams;
use crate::population::{PopulationSpec, WealthSpec};
use crate::process::ProcessSpec;
use crate::simulate::SimulationOptions;
use crate::solver::SolverOptions;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub epsilons: Vec<f64>,
    /// Population sizes for the cross-N stability sweep, solved under the
    /// scenario's cleared forecasts.
    pub n_sweep: Vec<usize>,
    /// Wealth shares at which the solver is compared with the oracle.
    pub probes: Vec<f64>,
    pub reshuffles: usize,
    pub oracle_scan_points: usize,
    /// Every this many grid points the envelope identity is checked.
    pub envelope_stride: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            epsilons: vec![0.1, 0.05, 0.01],
            n_sweep: Vec::new(),
            probes: default_probes(),
            reshuffles: 100,
            oracle_scan_points: 400,
            envelope_stride: 10,
        }
    }
}

/// 20 log-spaced wealth shares on `[1e-3, 1]`.
pub fn default_probes() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 19.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub spec_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub params: EconomyParams,
    pub process: ProcessSpec,
    #[serde(default)]
    pub population: PopulationSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub clearing: ClearingOptions,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub simulation: SimulationOptions,
    /// Output directory; not part of the scenario hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl ScenarioConfig {
    pub fn new(params: EconomyParams, process: ProcessSpec) -> Self {
        Self {
            spec_version: SPEC_VERSION,
            name: default_name(),
            params,
            process,
            population: PopulationSpec::default(),
            solver: SolverOptions::default(),
            clearing: ClearingOptions::default(),
            analysis: AnalysisOptions::default(),
            simulation: SimulationOptions::default(),
            output: None,
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self> {
        let cfg: Self = match format {
            Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            Format::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Format::Toml,
            _ => Format::Json,
        };
        Self::parse(&text, format)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec_version {} (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        self.params.validate().map_err(|e| Error::Config(format!("params: {e}")))?;
        self.process.validate().map_err(|e| Error::Config(format!("process: {e}")))?;
        if let WealthSpec::Explicit { shares } = &self.population.wealth {
            if shares.len() != self.params.agents {
                return Err(Error::Config(format!(
                    "population: {} wealth shares for N={}",
                    shares.len(),
                    self.params.agents
                )));
            }
        }
        if self.analysis.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("analysis: epsilons must be positive".into()));
        }
        if self.analysis.probes.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("analysis: probes must be positive".into()));
        }
        let c = &self.clearing;
        if !(c.damping > 0.0 && c.damping <= 1.0) || !(c.tol > 0.0) || c.max_iters == 0 {
            return Err(Error::Config("clearing: need 0 < damping <= 1, tol > 0, max_iters >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys, output directory
    /// removed).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
