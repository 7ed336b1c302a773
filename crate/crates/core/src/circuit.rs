//! LC-circuit parameters to model rates.
//!
//! An oscillator is an LC resonator loaded by the line impedance `R`, either
//! in series with it or in parallel. Rates come out in rad/s (SI) when the
//! circuit values are in ohms, henries and farads.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles;
use crate::types::{SystemParams, ValidityFlags};

/// Reduced Planck constant in J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Largest relative carrier mismatch accepted as "identical".
pub const IDENTITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Line, capacitor and inductor in series.
    Series,
    /// Line across a parallel LC tank.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub topology: Topology,
    /// Line impedance in ohms.
    pub resistance: f64,
    pub inductance: f64,
    pub capacitance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitRates {
    pub gamma: f64,
    pub omega0: f64,
    /// Ground-state spread: charge for series circuits, voltage for parallel.
    pub dx0: f64,
    pub q: f64,
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.resistance) && ok(self.inductance) && ok(self.capacitance) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "circuit needs R, L, C > 0 (got {}, {}, {})",
                self.resistance, self.inductance, self.capacitance
            )))
        }
    }

    pub fn omega0(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }
}

/// `"series:R:L:C"` or `"parallel:R:L:C"`.
impl FromStr for CircuitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("circuit spec '{s}' is not topology:R:L:C"));
        let parts: Vec<&str> = s.split(':').collect();
        let [topology, r, l, c] = parts.as_slice() else {
            return Err(bad());
        };
        let topology = match topology.to_ascii_lowercase().as_str() {
            "series" => Topology::Series,
            "parallel" => Topology::Parallel,
            _ => return Err(bad()),
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let spec = CircuitSpec {
            topology,
            resistance: num(r)?,
            inductance: num(l)?,
            capacitance: num(c)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn circuit_to_rates(spec: &CircuitSpec) -> Result<CircuitRates> {
    circuit_to_rates_with_hbar(spec, HBAR_SI)
}

pub fn circuit_to_rates_with_hbar(spec: &CircuitSpec, hbar: f64) -> Result<CircuitRates> {
    spec.validate()?;
    let omega0 = spec.omega0();
    let (gamma, dx0) = match spec.topology {
        Topology::Series => (
            spec.resistance / (2.0 * spec.inductance),
            (hbar / (2.0 * omega0 * spec.inductance)).sqrt(),
        ),
        Topology::Parallel => (
            1.0 / (2.0 * spec.resistance * spec.capacitance),
            (hbar * omega0 / (2.0 * spec.capacitance)).sqrt(),
        ),
    };
    Ok(CircuitRates {
        gamma,
        omega0,
        dx0,
        q: omega0 / gamma,
    })
}

/// Validity windows for a link built from `osc1` (switched, peak rate
/// `gamma1_max`) and `osc2` (fixed rate).
pub fn rates_to_validity(
    gamma1_max: f64,
    osc1: &CircuitSpec,
    osc2: &CircuitSpec,
    target_fidelity: f64,
    margin: f64,
) -> Result<ValidityFlags> {
    let r1 = circuit_to_rates(osc1)?;
    let r2 = circuit_to_rates(osc2)?;
    let relative = (r1.omega0 - r2.omega0).abs() / r1.omega0.max(r2.omega0);
    if relative > IDENTITY_TOLERANCE {
        return Err(Error::NonIdenticalOscillators { relative });
    }
    let p = SystemParams::lossless(r2.gamma, 1.0 / r2.gamma).with_omega0(r2.omega0);
    Ok(oracles::validity_windows(&p, gamma1_max, target_fidelity, margin))
}
