use std::path::Path;

use clap::ValueEnum;
use cohmux::blocks::Topology;
use cohmux::mux::{overload_plan, MuxPlan};
use cohmux::QubitSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Enumerate,
    Montecarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A logical qubit, either by Bloch angles or by explicit `[re, im]` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum QubitConfig {
    Angles { theta: f64, phi: f64 },
    Coefficients { mu: [f64; 2], nu: [f64; 2] },
}

impl QubitConfig {
    pub fn spec(&self, alpha: f64) -> cohmux::Result<QubitSpec> {
        match self {
            QubitConfig::Angles { theta, phi } => QubitSpec::from_angles(*theta, *phi, alpha),
            QubitConfig::Coefficients { mu, nu } => {
                QubitSpec::new(Complex64::new(mu[0], mu[1]), Complex64::new(nu[0], nu[1]), alpha)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: Vec<f64>,
    #[serde(rename = "M")]
    pub m_factor: Vec<f64>,
    pub m: Vec<f64>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alpha: cohmux::analytics::linspace(1.0, 3.0, 9),
            m_factor: vec![10.0],
            m: vec![1.0, 1.4, 2.0],
            n: vec![3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m_factor: f64,
    #[serde(rename = "N")]
    pub n_users: usize,
    /// Adder m values in combiner stage order.
    #[serde(default)]
    pub m_schedule: Option<Vec<f64>>,
    /// Re-merge m values, largest level first.
    #[serde(default)]
    pub demux_schedule: Option<Vec<f64>>,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    /// Extra users placed in interleaved slots.
    #[serde(default)]
    pub overload: usize,
    /// One entry per user (overload users included); logical zero when empty.
    #[serde(default)]
    pub qubits: Vec<QubitConfig>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_format")]
    pub format: Format,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_topology() -> Topology {
    Topology::Series
}

fn default_mode() -> Mode {
    Mode::Enumerate
}

fn default_trials() -> u64 {
    1000
}

fn default_format() -> Format {
    Format::Csv
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            alpha: 2.0,
            m_factor: 10.0,
            n_users: 3,
            m_schedule: None,
            demux_schedule: None,
            topology: Topology::Series,
            overload: 0,
            qubits: vec![],
            mode: Mode::Enumerate,
            trials: default_trials(),
            seed: 0,
            format: Format::Csv,
            tolerance: None,
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn plan(&self) -> Result<MuxPlan, CliError> {
        let mut plan = MuxPlan::new(self.alpha, self.m_factor, self.n_users)?.with_topology(self.topology);
        if let Some(ms) = &self.m_schedule {
            plan = plan.with_m_schedule(ms)?;
        }
        if self.overload > 0 {
            plan = overload_plan(&plan, self.overload)?;
        }
        if let Some(ms) = &self.demux_schedule {
            plan = plan.with_demux_schedule(ms)?;
        }
        Ok(plan)
    }

    pub fn qubits(&self, plan: &MuxPlan) -> Result<Vec<QubitSpec>, CliError> {
        if self.qubits.is_empty() {
            return Ok(vec![QubitSpec::zero(self.alpha)?; plan.n_users()]);
        }
        if self.qubits.len() != plan.n_users() {
            return Err(CliError::Usage(format!(
                "{} qubits given for {} users",
                self.qubits.len(),
                plan.n_users()
            )));
        }
        Ok(self
            .qubits
            .iter()
            .map(|q| q.spec(self.alpha))
            .collect::<cohmux::Result<_>>()?)
    }
}
