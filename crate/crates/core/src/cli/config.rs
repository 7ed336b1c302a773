//! Run configuration: defaults, JSON files and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{self, CircuitSpec, HBAR_SI};
use crate::error::{Error, Result};
use crate::optimizer::{OptimizerConfig, Parametrization};
use crate::simulator::IntegratorConfig;
use crate::types::{CouplingProfile, SystemParams, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub step_size: f64,
    pub tolerance: f64,
    pub parametrization: Parametrization,
    /// Constant starting rates; one optimization per entry, best one kept.
    pub initial_rates: Vec<f64>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        OptimizerOptions {
            max_iters: d.max_iters,
            step_size: d.step_size,
            tolerance: d.tolerance,
            parametrization: d.parametrization,
            initial_rates: vec![d.initial_rate],
        }
    }
}

/// Everything a run needs. Every field has a default, so a config file may
/// list any subset of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gamma: f64,
    pub gamma_loss: f64,
    pub eta: f64,
    /// Carrier frequency; `1e6 * gamma` when absent.
    pub omega0: Option<f64>,
    pub transfer_time: f64,
    /// `optimal`, `constant:<rate>` or `file:<csv path>`.
    pub profile: String,
    pub dt_cut: f64,
    /// Hold value after the cut; `1 / (2 dt_cut)` when absent.
    pub gamma1_max: Option<f64>,
    pub integrator: IntegratorConfig,
    pub optimizer: OptimizerOptions,
    /// `param:lo:hi:n` or `param=v1,v2,...`.
    pub sweep: Option<String>,
    pub target_fidelity: f64,
    pub margin: f64,
    /// Circuits of the switched and the fixed oscillator. When present the
    /// run is in SI units and `gamma`, `omega0` come from `circuit2`.
    pub circuit1: Option<CircuitSpec>,
    pub circuit2: Option<CircuitSpec>,
    pub hbar: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 1.0,
            gamma_loss: 0.0,
            eta: 1.0,
            omega0: None,
            transfer_time: 5.0,
            profile: "optimal".into(),
            dt_cut: 1e-3,
            gamma1_max: None,
            integrator: IntegratorConfig::default(),
            optimizer: OptimizerOptions::default(),
            sweep: None,
            target_fidelity: 0.99,
            margin: crate::oracles::DEFAULT_MARGIN,
            circuit1: None,
            circuit2: None,
            hbar: HBAR_SI,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Optimal,
    Constant(f64),
    File(PathBuf),
}

impl std::str::FromStr for ProfileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "optimal" {
            return Ok(ProfileSpec::Optimal);
        }
        if let Some(v) = s.strip_prefix("constant:") {
            return v
                .trim()
                .parse()
                .map(ProfileSpec::Constant)
                .map_err(|_| Error::InvalidProfile(format!("bad constant rate '{v}'")));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(ProfileSpec::File(PathBuf::from(path)));
        }
        Err(Error::InvalidProfile(format!(
            "'{s}' is not optimal, constant:<v> or file:<path>"
        )))
    }
}

/// Swept quantity and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    GammaLoss,
    Eta,
    TransferTime,
    DtCut,
}

impl SweepParam {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "gamma" => SweepParam::Gamma,
            "gamma_loss" | "gamma-loss" => SweepParam::GammaLoss,
            "eta" => SweepParam::Eta,
            "T" | "transfer_time" => SweepParam::TransferTime,
            "dt_cut" | "dt-cut" => SweepParam::DtCut,
            _ => return Err(Error::Domain(format!("unknown sweep parameter '{name}'"))),
        })
    }

    pub fn apply(self, cfg: &mut RunConfig, v: f64) {
        match self {
            SweepParam::Gamma => cfg.gamma = v,
            SweepParam::GammaLoss => cfg.gamma_loss = v,
            SweepParam::Eta => cfg.eta = v,
            SweepParam::TransferTime => cfg.transfer_time = v,
            SweepParam::DtCut => cfg.dt_cut = v,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad number '{v}' in sweep '{s}'")))
        };
        let (param, values) = if let Some((name, list)) = s.split_once('=') {
            let values = list
                .split(',')
                .filter(|v| !v.trim().is_empty())
                .map(num)
                .collect::<Result<Vec<_>>>()?;
            (SweepParam::parse(name)?, values)
        } else {
            let parts: Vec<&str> = s.split(':').collect();
            let [name, lo, hi, n] = parts.as_slice() else {
                return Err(Error::Domain(format!(
                    "sweep '{s}' is neither param:lo:hi:n nor param=v1,v2"
                )));
            };
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("bad point count in sweep '{s}'")))?;
            let values = match n {
                0 => vec![],
                1 => vec![lo],
                _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
            };
            (SweepParam::parse(name)?, values)
        };
        if values.is_empty() {
            return Err(Error::Domain(format!("sweep '{s}' has no points")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sweep '{s}' has non-finite values")));
        }
        Ok(SweepAxis { param, values })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Domain(format!("bad config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Physical parameters, with rates taken from the circuits when given.
    pub fn params(&self) -> Result<SystemParams> {
        let mut p = SystemParams {
            gamma: self.gamma,
            gamma_loss: self.gamma_loss,
            eta: self.eta,
            omega0: self.omega0.unwrap_or(1e6 * self.gamma),
            transfer_time: self.transfer_time,
        };
        if let Some(c2) = &self.circuit2 {
            let r2 = circuit::circuit_to_rates_with_hbar(c2, self.hbar)?;
            p.gamma = r2.gamma;
            p.omega0 = r2.omega0;
        }
        p.ensure_valid()?;
        Ok(p)
    }

    pub fn profile_spec(&self) -> Result<ProfileSpec> {
        self.profile.parse()
    }

    pub fn coupling_profile(&self, p: &SystemParams) -> Result<CouplingProfile> {
        let c = match self.profile_spec()? {
            ProfileSpec::Optimal => {
                if !(self.dt_cut > 0.0 && self.dt_cut < p.transfer_time) {
                    return Err(Error::InvalidProfile(format!(
                        "optimal profile needs 0 < dt_cut < T, got {}",
                        self.dt_cut
                    )));
                }
                let c = CouplingProfile::optimal(self.dt_cut);
                match self.gamma1_max {
                    Some(cap) => c.with_cap(cap),
                    None => c,
                }
            }
            ProfileSpec::Constant(v) => CouplingProfile::constant(v),
            ProfileSpec::File(path) => read_profile(&path, p.transfer_time)?,
        };
        c.validate(p)?;
        Ok(c)
    }

    pub fn cap(&self) -> f64 {
        self.gamma1_max.unwrap_or(0.5 / self.dt_cut)
    }

    pub fn optimizer_config(&self, initial_rate: f64) -> OptimizerConfig {
        OptimizerConfig {
            max_iters: self.optimizer.max_iters,
            step_size: self.optimizer.step_size,
            tolerance: self.optimizer.tolerance,
            parametrization: self.optimizer.parametrization,
            dt_cut: self.dt_cut,
            gamma1_max: self.gamma1_max,
            initial_rate,
        }
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        self.sweep
            .as_deref()
            .ok_or_else(|| Error::Domain("sweep needs --sweep".into()))?
            .parse()
    }
}

/// Reads a profile CSV (header row, then `t, gamma1, ...` per cell) onto
/// the uniform grid of `transfer_time`.
pub fn read_profile(path: &Path, transfer_time: f64) -> Result<CouplingProfile> {
    let bad = |msg: String| Error::InvalidProfile(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row = times.len() + 1;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(format!("row {row} lacks a number in column {i}")))
        };
        times.push(field(0)?);
        values.push(field(1)?);
    }
    let grid = TimeGrid::new(transfer_time, values.len()).map_err(|e| bad(e.to_string()))?;
    for (j, t) in times.iter().enumerate() {
        if (t - grid.point(j)).abs() > 1e-9 * transfer_time {
            return Err(bad(format!(
                "row {} has t = {t}, expected the cell start {}",
                j + 1,
                grid.point(j)
            )));
        }
    }
    CouplingProfile::sampled(grid, values)
}
