//! Shared domain types: physical parameters, coupling profiles, the time grid
//! and the containers produced by the simulator.
//!
//! All rates are in inverse time units; the library never fixes a unit
//! system. Coefficients are real: in the rotating frame with zero detuning
//! every weight in the linear solution for `a1(t)` and `a2(t)` is real.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles;

/// Physical parameters of the two-oscillator link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Constant line coupling (and damping) of oscillator 2.
    pub gamma: f64,
    /// Intrinsic loss rate of each oscillator, `0` for a lossless link.
    pub gamma_loss: f64,
    /// Power transmission of the line, in `(0, 1]`.
    pub eta: f64,
    /// Carrier frequency; only used by the validity checks.
    pub omega0: f64,
    /// Total switching time `T`.
    pub transfer_time: f64,
}

impl SystemParams {
    /// Lossless link with a carrier far above every rate in play.
    pub fn lossless(gamma: f64, transfer_time: f64) -> Self {
        SystemParams {
            gamma,
            gamma_loss: 0.0,
            eta: 1.0,
            omega0: 1e6 * gamma,
            transfer_time,
        }
    }

    pub fn with_losses(mut self, gamma_loss: f64, eta: f64) -> Self {
        self.gamma_loss = gamma_loss;
        self.eta = eta;
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn is_lossless(&self) -> bool {
        self.gamma_loss == 0.0 && self.eta == 1.0
    }

    /// Fails with every hard violation reported by [`validate_params`].
    pub fn ensure_valid(&self) -> Result<()> {
        let violations: Vec<String> = validate_params(self)
            .into_iter()
            .filter(|i| i.severity == Severity::Violation)
            .map(|i| i.message)
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(violations))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Violation,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamIssue {
    pub severity: Severity,
    pub message: String,
}

impl ParamIssue {
    fn violation(message: &str) -> Self {
        ParamIssue {
            severity: Severity::Violation,
            message: message.to_string(),
        }
    }
}

/// Ratio used to read "much smaller than" in the weak-damping warning.
pub const WEAK_DAMPING_MARGIN: f64 = 10.0;

/// Checks the parameter invariants. Hard violations and warnings are both
/// returned; only [`Severity::Violation`] entries make a run invalid.
pub fn validate_params(p: &SystemParams) -> Vec<ParamIssue> {
    let mut issues = Vec::new();
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        issues.push(ParamIssue::violation("gamma > 0 required"));
    }
    if !(p.transfer_time > 0.0 && p.transfer_time.is_finite()) {
        issues.push(ParamIssue::violation("transfer_time > 0 required"));
    }
    if !(p.eta > 0.0) {
        issues.push(ParamIssue::violation("eta > 0 required"));
    }
    if p.eta > 1.0 {
        issues.push(ParamIssue::violation("eta ≤ 1"));
    }
    if !(p.gamma_loss >= 0.0 && p.gamma_loss.is_finite()) {
        issues.push(ParamIssue::violation("gamma_loss ≥ 0 required"));
    } else if p.gamma_loss >= p.gamma {
        issues.push(ParamIssue::violation("gamma_loss < gamma required for lossy oracle"));
    }
    if !(p.omega0 > 0.0) {
        issues.push(ParamIssue::violation("omega0 > 0 required"));
    } else if p.gamma > 0.0 && p.omega0 < WEAK_DAMPING_MARGIN * p.gamma {
        issues.push(ParamIssue {
            severity: Severity::Warning,
            message: format!(
                "weak damping not satisfied: omega0/gamma = {:.3e} < {WEAK_DAMPING_MARGIN}",
                p.omega0 / p.gamma
            ),
        });
    }
    issues
}

/// Uniform grid `t_j = j * T / n_steps`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!("n_steps = {n_steps} < 2")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidGrid(format!("t_end = {t_end} must be > 0")));
        }
        Ok(TimeGrid { t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |j| self.point(j))
    }

    /// Index of the cell `[t_j, t_{j+1})` containing `t`. Grid points map to
    /// their own cell even when `t / dt` rounds just below an integer; `t_end`
    /// maps to the last cell.
    pub fn cell_index(&self, t: f64) -> usize {
        let x = t / self.dt();
        let nearest = x.round();
        let j = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            x.floor()
        };
        (j.max(0.0) as usize).min(self.n_steps - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// Time-independent coupling `gamma1`.
    Constant(f64),
    /// `gamma / (exp(2 gamma (T - t)) - 1)`, the stationary point of the
    /// fidelity functional.
    OptimalClosedForm,
    /// One value per grid cell, piecewise constant from the left endpoint.
    SampledGrid { grid: TimeGrid, values: Vec<f64> },
}

/// Time-dependent coupling `gamma1(t)` of oscillator 1 to the line.
///
/// With a truncation `dt_cut` the profile is replaced by the hold value
/// `gamma1_max` on `[T - dt_cut, T]`. The default hold value is
/// `1 / (2 dt_cut)`, where the optimal profile behaves as `1 / (2 (T - t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    pub kind: ProfileKind,
    pub truncation: Option<f64>,
    pub gamma1_max: Option<f64>,
}

impl CouplingProfile {
    pub fn constant(gamma1: f64) -> Self {
        CouplingProfile {
            kind: ProfileKind::Constant(gamma1),
            truncation: None,
            gamma1_max: None,
        }
    }

    /// Optimal profile truncated at `T - dt_cut`.
    pub fn optimal(dt_cut: f64) -> Self {
        CouplingProfile {
            kind: ProfileKind::OptimalClosedForm,
            truncation: Some(dt_cut),
            gamma1_max: None,
        }
    }

    /// Optimal profile with no cutoff; it cannot be integrated up to `T`.
    pub fn optimal_untruncated() -> Self {
        CouplingProfile {
            kind: ProfileKind::OptimalClosedForm,
            truncation: None,
            gamma1_max: None,
        }
    }

    pub fn sampled(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps {
            return Err(Error::InvalidProfile(format!(
                "{} samples for a grid of {} cells",
                values.len(),
                grid.n_steps
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidProfile(format!(
                "sample {v} is not a finite non-negative rate"
            )));
        }
        Ok(CouplingProfile {
            kind: ProfileKind::SampledGrid { grid, values },
            truncation: None,
            gamma1_max: None,
        })
    }

    pub fn with_truncation(mut self, dt_cut: f64) -> Self {
        self.truncation = Some(dt_cut);
        self
    }

    pub fn with_cap(mut self, gamma1_max: f64) -> Self {
        self.gamma1_max = Some(gamma1_max);
        self
    }

    /// Hold value used on the truncated segment.
    pub fn cap(&self) -> Option<f64> {
        match (self.gamma1_max, self.truncation) {
            (Some(cap), _) => Some(cap),
            (None, Some(dt)) => Some(0.5 / dt),
            (None, None) => None,
        }
    }

    /// Start of the held segment, `T - dt_cut`.
    pub fn cut_time(&self, p: &SystemParams) -> Option<f64> {
        self.truncation.map(|dt| p.transfer_time - dt)
    }

    pub fn validate(&self, p: &SystemParams) -> Result<()> {
        match &self.kind {
            ProfileKind::Constant(v) if !(v.is_finite() && *v >= 0.0) => {
                return Err(Error::InvalidProfile(format!(
                    "constant rate {v} must be finite and ≥ 0"
                )));
            }
            ProfileKind::SampledGrid { grid, values } => {
                let rel = (grid.t_end - p.transfer_time).abs() / p.transfer_time;
                if rel > 1e-12 {
                    return Err(Error::InvalidProfile(format!(
                        "sampled grid ends at {} but T = {}",
                        grid.t_end, p.transfer_time
                    )));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidProfile("sampled values must be finite and ≥ 0".into()));
                }
            }
            _ => {}
        }
        if let Some(dt) = self.truncation {
            if !(dt > 0.0 && dt < p.transfer_time) {
                return Err(Error::InvalidProfile(format!("truncation {dt} must lie in (0, T)")));
            }
        }
        if let Some(cap) = self.cap() {
            if !(cap.is_finite() && cap >= 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "gamma1_max {cap} must be finite and ≥ 0"
                )));
            }
        }
        Ok(())
    }

    /// Rate on a smooth piece of the profile. `branch_t` picks the piece
    /// (held segment, sampled cell) and `t` is where the smooth formula is
    /// evaluated, so integrator stages at a piece boundary see the limit from
    /// inside the piece.
    pub(crate) fn segment_rate(&self, p: &SystemParams, branch_t: f64, t: f64) -> f64 {
        if let (Some(cut), Some(cap)) = (self.cut_time(p), self.cap()) {
            if branch_t >= cut {
                return cap;
            }
        }
        match &self.kind {
            ProfileKind::Constant(v) => *v,
            ProfileKind::OptimalClosedForm => {
                let tau = (p.transfer_time - t).max(0.0);
                p.gamma / (2.0 * p.gamma * tau).exp_m1()
            }
            ProfileKind::SampledGrid { grid, values } => values[grid.cell_index(branch_t)],
        }
    }
}

/// `gamma1(t)` for a profile. Sampled profiles are read from the left
/// endpoint of the cell containing `t`.
pub fn profile_value(c: &CouplingProfile, p: &SystemParams, t: f64) -> Result<f64> {
    let t_end = p.transfer_time;
    if !(0.0..=t_end).contains(&t) {
        return Err(Error::OutOfRange { t, t_end });
    }
    match (&c.kind, c.cut_time(p)) {
        (_, Some(cut)) if t >= cut => Ok(c.cap().unwrap_or(0.0)),
        (ProfileKind::OptimalClosedForm, _) => oracles::optimal_profile(p.gamma, t_end, t),
        _ => Ok(c.segment_rate(p, t, t)),
    }
}

/// Lower-triangular noise kernel on the grid.
///
/// Row `i` (time `t_i`) holds, for every source cell `[t_j, t_{j+1})` with
/// `j < i`, the weights of `modes` orthonormal temporal modes of the input
/// field in that cell. Weights are stored divided by `sqrt(dt)`, so the
/// squared norm of a row is `sum k^2 * dt` and a freshly injected entry is
/// close to the point value `k(t, t)` of the continuous kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub modes: usize,
    pub rows: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub(crate) fn zeros(rows: usize, modes: usize) -> Self {
        let len = modes * rows * (rows.saturating_sub(1)) / 2;
        Kernel {
            modes,
            rows,
            data: vec![0.0; len],
        }
    }

    fn offset(&self, i: usize) -> usize {
        self.modes * i * i.saturating_sub(1) / 2
    }

    /// Row `i`: `i * modes` values, cell-major.
    pub fn row(&self, i: usize) -> &[f64] {
        let start = self.offset(i);
        &self.data[start..start + i * self.modes]
    }

    pub(crate) fn row_pair_mut(&mut self, i: usize) -> (&[f64], &mut [f64]) {
        let prev = self.offset(i);
        let cur = self.offset(i + 1);
        let (head, tail) = self.data.split_at_mut(cur);
        (&head[prev..prev + i * self.modes], &mut tail[..(i + 1) * self.modes])
    }

    pub fn norm_sq(&self, i: usize, dt: f64) -> f64 {
        self.row(i).iter().map(|k| k * k).sum::<f64>() * dt
    }
}

/// Coefficients at an off-grid readout time (the cut point of a truncated
/// profile).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub t: f64,
    pub a11: f64,
    pub a21: f64,
    pub a22: f64,
}

/// Heisenberg-picture coefficients of the two oscillator modes on the grid:
/// `a1(t) = a11 a1(0) + noise`, `a2(t) = a21 a1(0) + a22 a2(0) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferState {
    pub grid: TimeGrid,
    pub a11: Vec<f64>,
    pub a21: Vec<f64>,
    pub a22: Vec<f64>,
    /// Weights of `b1_in` in `a1` (one mode per cell).
    pub k1: Option<Kernel>,
    /// Weights of `b1_in` in `a2` (two modes per cell).
    pub k2: Option<Kernel>,
    /// Weights of the oscillator loss inputs in `a1` and `a2`.
    pub kl1: Option<Kernel>,
    pub kl2: Option<Kernel>,
    /// Norm of the vacuum admitted where the line drops `1 - eta` of the flux.
    pub line_loss: Option<Vec<f64>>,
    /// Where the transfer is read out: the cut time for truncated profiles,
    /// `T` otherwise.
    pub readout: Readout,
}

impl TransferState {
    /// Transfer fidelity: weight of `a1(0)` in `a2` at the readout time.
    pub fn fidelity(&self) -> f64 {
        self.readout.a21
    }

    pub fn final_a21(&self) -> f64 {
        *self.a21.last().expect("grid has points")
    }

    pub fn has_kernels(&self) -> bool {
        self.k1.is_some() && self.k2.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InfidelityTerms {
    /// `exp(-2 gamma T) / 2`
    pub exponential: f64,
    /// `gamma * dt_cut`
    pub truncation: f64,
    /// `1 - sqrt(eta)`
    pub loss_line: f64,
    /// `1 - exp(-gamma_loss T)`
    pub loss_osc: f64,
}

impl InfidelityTerms {
    pub fn total(&self) -> f64 {
        self.exponential + self.truncation + self.loss_line + self.loss_osc
    }
}

/// Outcome of the "much greater than" checks on rates and quality factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityFlags {
    pub margin: f64,
    pub gamma1_max: f64,
    pub target_fidelity: f64,
    /// `omega0 / gamma`
    pub q2: f64,
    /// `omega0 / gamma1_max`
    pub q1_min: f64,
    /// `omega0 >= margin * gamma1_max`
    pub carrier_above_cap: bool,
    /// `gamma1_max >= margin * gamma / (1 - F)`
    pub cap_above_required: bool,
    /// `(1 - F) q2 >= margin * q1_min`
    pub quality_upper: bool,
    /// `q1_min >= margin`
    pub quality_lower: bool,
}

impl ValidityFlags {
    pub fn rate_window(&self) -> bool {
        self.carrier_above_cap && self.cap_above_required
    }

    pub fn quality_window(&self) -> bool {
        self.quality_upper && self.quality_lower
    }

    pub fn all_pass(&self) -> bool {
        self.rate_window() && self.quality_window()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub infidelity_terms: InfidelityTerms,
    pub predicted_infidelity: f64,
    pub validity: Option<ValidityFlags>,
    pub warnings: Vec<String>,
}
