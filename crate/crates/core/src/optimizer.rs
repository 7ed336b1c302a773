//! Projected-gradient ascent on the discretized fidelity functional.
//!
//! The control is a piecewise-constant `gamma1` with one value `x_j` per grid
//! cell. With `G_j = dt * sum_{i<j} x_i` the transfer amplitude at `T` is
//!
//! ```text
//! F = 2 sqrt(gamma) sum_j sqrt(x_j) e^{-gamma (T - t_j)} e^{-G_j} phi(gamma - x_j)
//! phi(a) = (e^{a dt} - 1) / a
//! ```
//!
//! which integrates the kernel exactly inside each cell, so `F` is the
//! transfer amplitude the simulator produces for the same sampled profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles;
use crate::types::{CouplingProfile, ProfileKind, SystemParams, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    /// Ascend in the rates `x_j = dG/dt` directly, with the gradient scaled
    /// by `x_j` (multiplicative metric).
    #[serde(rename = "direct")]
    DirectGamma1,
    /// Ascend in amplitudes `u_j` with `dG/dt = u_j^2`, which keeps
    /// `dG/dt ≥ 0` by construction and removes the square-root singularity.
    GDot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial trial step of the line search.
    pub step_size: f64,
    /// Stop once an accepted step improves the functional by less than this.
    pub tolerance: f64,
    pub parametrization: Parametrization,
    /// Sets the default cap `1 / (2 dt_cut)`.
    pub dt_cut: f64,
    pub gamma1_max: Option<f64>,
    /// Constant starting profile.
    pub initial_rate: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 20_000,
            step_size: 1.0,
            tolerance: 1e-10,
            parametrization: Parametrization::DirectGamma1,
            dt_cut: 5e-3,
            gamma1_max: None,
            initial_rate: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn cap(&self) -> f64 {
        self.gamma1_max.unwrap_or(0.5 / self.dt_cut)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.step_size > 0.0) {
            return Err(Error::Domain("tolerance and step_size must be > 0".into()));
        }
        if !(self.cap() > 0.0 && self.cap().is_finite()) {
            return Err(Error::Domain(format!("cap {} must be finite and > 0", self.cap())));
        }
        if !(self.initial_rate >= 0.0 && self.initial_rate.is_finite()) {
            return Err(Error::Domain("initial_rate must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

/// Floor on the rates, relative to `gamma`; keeps the square-root gradient
/// finite.
pub const RATE_FLOOR: f64 = 1e-12;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub functional: f64,
    pub max_gradient: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub entries: Vec<TraceEntry>,
    /// `(iteration, rates)` at iterations 0, 1, 2, 4, 8, ... and the last one.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub profile: CouplingProfile,
    pub functional: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: OptimizerTrace,
}

// (e^z - 1) / z and its derivative (z e^z - e^z + 1) / z^2
fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        z.exp_m1() / z
    }
}

fn exprel_prime(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 3.0 + z * (0.125 + z * (1.0 / 30.0 + z / 144.0)))
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

struct Problem {
    gamma: f64,
    dt: f64,
    /// `e^{-gamma (T - t_j)}`
    weight: Vec<f64>,
}

impl Problem {
    fn new(p: &SystemParams, grid: &TimeGrid) -> Self {
        let t_end = grid.t_end;
        Problem {
            gamma: p.gamma,
            dt: grid.dt(),
            weight: (0..grid.n_steps)
                .map(|j| (-p.gamma * (t_end - grid.point(j))).exp())
                .collect(),
        }
    }

    /// Per-cell contributions `sqrt(x_j) w_j e^{-G_j} phi_j` (without the
    /// `2 sqrt(gamma)` prefactor) and `w_j e^{-G_j}`.
    fn terms(&self, rates: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g_acc = 0.0f64;
        let mut contrib = Vec::with_capacity(rates.len());
        let mut damp = Vec::with_capacity(rates.len());
        for (x, w) in rates.iter().zip(&self.weight) {
            let e = w * (-g_acc).exp();
            let phi = self.dt * exprel((self.gamma - x) * self.dt);
            contrib.push(x.sqrt() * e * phi);
            damp.push(e);
            g_acc += x * self.dt;
        }
        (contrib, damp)
    }

    fn value(&self, rates: &[f64]) -> f64 {
        let (contrib, _) = self.terms(rates);
        2.0 * self.gamma.sqrt() * contrib.iter().sum::<f64>()
    }

    /// Gradient with respect to the rates; `floor` replaces rates below it
    /// in the `1 / sqrt(x)` factor.
    fn gradient(&self, rates: &[f64], floor: f64) -> Vec<f64> {
        let (contrib, damp) = self.terms(rates);
        let pre = 2.0 * self.gamma.sqrt();
        let dt = self.dt;
        let mut grad = vec![0.0; rates.len()];
        let mut tail = 0.0;
        for k in (0..rates.len()).rev() {
            let x = rates[k].max(floor);
            let z = (self.gamma - x) * dt;
            let phi = dt * exprel(z);
            let dphi = dt * dt * exprel_prime(z);
            let local = damp[k] * (phi / (2.0 * x.sqrt()) - x.sqrt() * dphi);
            grad[k] = pre * (local - dt * tail);
            tail += contrib[k];
        }
        grad
    }

    /// Gradient with respect to amplitudes `u` with `x = u^2`.
    fn gradient_amplitude(&self, amps: &[f64]) -> Vec<f64> {
        let rates: Vec<f64> = amps.iter().map(|u| u * u).collect();
        let (contrib, damp) = self.terms(&rates);
        let pre = 2.0 * self.gamma.sqrt();
        let dt = self.dt;
        let mut grad = vec![0.0; amps.len()];
        let mut tail = 0.0;
        for k in (0..amps.len()).rev() {
            let x = rates[k];
            let z = (self.gamma - x) * dt;
            let phi = dt * exprel(z);
            let dphi = dt * dt * exprel_prime(z);
            let local = damp[k] * (phi - 2.0 * x * dphi);
            grad[k] = pre * (local - 2.0 * amps[k] * dt * tail);
            tail += contrib[k];
        }
        grad
    }
}

fn sampled_parts(c: &CouplingProfile) -> Result<(&TimeGrid, &[f64])> {
    match &c.kind {
        ProfileKind::SampledGrid { grid, values } => Ok((grid, values)),
        _ => Err(Error::InvalidProfile("functional needs a sampled-grid profile".into())),
    }
}

/// Transfer amplitude at `T` for a piecewise-constant profile.
pub fn functional_value(c: &CouplingProfile, p: &SystemParams) -> Result<f64> {
    let (grid, values) = sampled_parts(c)?;
    rates_functional(values, grid, p)
}

pub fn rates_functional(rates: &[f64], grid: &TimeGrid, p: &SystemParams) -> Result<f64> {
    if let Some(x) = rates.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("rate {x} is not a finite non-negative value")));
    }
    if rates.len() != grid.n_steps {
        return Err(Error::InvalidProfile("rate count does not match grid".into()));
    }
    Ok(Problem::new(p, grid).value(rates))
}

/// Gradient of [`functional_value`] with respect to every cell rate, with
/// rates floored at `RATE_FLOOR * gamma`.
pub fn functional_gradient(c: &CouplingProfile, p: &SystemParams) -> Result<Vec<f64>> {
    let (grid, values) = sampled_parts(c)?;
    rates_gradient(values, grid, p)
}

pub fn rates_gradient(rates: &[f64], grid: &TimeGrid, p: &SystemParams) -> Result<Vec<f64>> {
    if rates.len() != grid.n_steps {
        return Err(Error::InvalidProfile("rate count does not match grid".into()));
    }
    let floor = RATE_FLOOR * p.gamma;
    let floored: Vec<f64> = rates.iter().map(|x| x.max(floor)).collect();
    Ok(Problem::new(p, grid).gradient(&floored, floor))
}

/// Cell averages of the optimal profile held at `cap` from `T - dt_cut`.
///
/// Averages keep `G` exact at every grid node.
pub fn sample_truncated_closed_form(p: &SystemParams, grid: &TimeGrid, dt_cut: f64, cap: f64) -> Vec<f64> {
    let (g, t_end) = (p.gamma, grid.t_end);
    let cut = t_end - dt_cut;
    // G(t) up to a constant: -ln(1 - e^{-2 g (T - t)}) / 2
    let big_g = |t: f64| -0.5 * (-(-2.0 * g * (t_end - t)).exp_m1()).ln();
    let dt = grid.dt();
    (0..grid.n_steps)
        .map(|j| {
            let (a, b) = (grid.point(j), grid.point(j + 1));
            let arc_end = b.min(cut);
            let arc = if arc_end > a { big_g(arc_end) - big_g(a) } else { 0.0 };
            let held = (b - a.max(cut)).max(0.0) * cap;
            (arc + held) / dt
        })
        .collect()
}

/// Sampled profile of the best "arc then hold" ansatz for a cap.
pub fn sample_capped_optimum(p: &SystemParams, grid: &TimeGrid, cap: f64) -> Vec<f64> {
    let best = oracles::capped_optimum(p.gamma, grid.t_end, cap);
    let (g, h) = (p.gamma, best.horizon);
    let big_g = |t: f64| -0.5 * (-(-2.0 * g * (h - t)).exp_m1()).ln();
    let dt = grid.dt();
    (0..grid.n_steps)
        .map(|j| {
            let (a, b) = (grid.point(j), grid.point(j + 1));
            let arc_end = b.min(best.switch_time);
            let arc = if arc_end > a { big_g(arc_end) - big_g(a) } else { 0.0 };
            let held = (b - a.max(best.switch_time)).max(0.0) * cap;
            (arc + held) / dt
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|g| g.abs()).fold(0.0, f64::max)
}

/// Maximizes the functional over `gamma1_j in [floor, cap]` by projected
/// gradient ascent with a backtracking (Armijo) line search.
pub fn optimize_profile(p: &SystemParams, grid: &TimeGrid, cfg: &OptimizerConfig) -> Result<Optimized> {
    p.ensure_valid()?;
    cfg.validate()?;
    let init = vec![cfg.initial_rate; grid.n_steps];
    optimize_from(p, grid, cfg, init)
}

/// As [`optimize_profile`], starting from explicit cell rates.
pub fn optimize_from(p: &SystemParams, grid: &TimeGrid, cfg: &OptimizerConfig, initial: Vec<f64>) -> Result<Optimized> {
    cfg.validate()?;
    if initial.len() != grid.n_steps {
        return Err(Error::InvalidProfile("initial profile does not match grid".into()));
    }
    let problem = Problem::new(p, grid);
    let floor = RATE_FLOOR * p.gamma;
    let cap = cfg.cap();

    // Optimization variables: rates or amplitudes.
    let (lo, hi) = match cfg.parametrization {
        Parametrization::DirectGamma1 => (floor, cap),
        Parametrization::GDot => (0.0, cap.sqrt()),
    };
    let to_rates = |v: &[f64]| -> Vec<f64> {
        match cfg.parametrization {
            Parametrization::DirectGamma1 => v.to_vec(),
            Parametrization::GDot => v.iter().map(|u| u * u).collect(),
        }
    };
    let mut vars: Vec<f64> = initial
        .iter()
        .map(|x| {
            let x = x.clamp(floor, cap);
            match cfg.parametrization {
                Parametrization::DirectGamma1 => x,
                Parametrization::GDot => x.sqrt(),
            }
        })
        .collect();

    let gradient = |v: &[f64]| -> Vec<f64> {
        match cfg.parametrization {
            Parametrization::DirectGamma1 => problem.gradient(v, floor),
            Parametrization::GDot => problem.gradient_amplitude(v),
        }
    };

    let mut value = problem.value(&to_rates(&vars));
    let mut trace = OptimizerTrace::default();
    trace.snapshots.push((0, to_rates(&vars)));
    let mut step = cfg.step_size;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let grad = gradient(&vars);
        let direction: Vec<f64> = match cfg.parametrization {
            Parametrization::DirectGamma1 => grad.iter().zip(&vars).map(|(g, x)| g * x).collect(),
            Parametrization::GDot => grad.clone(),
        };
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial: Vec<f64> = vars
                .iter()
                .zip(&direction)
                .map(|(v, d)| (v + step * d).clamp(lo, hi))
                .collect();
            let trial_value = problem.value(&to_rates(&trial));
            let predicted: f64 = grad
                .iter()
                .zip(trial.iter().zip(&vars))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if trial_value >= value + ARMIJO * predicted && trial_value >= value {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_value)) = accepted else {
            // no ascent step exists at machine precision
            converged = true;
            break;
        };
        let improvement = trial_value - value;
        vars = trial;
        value = trial_value;
        trace.entries.push(TraceEntry {
            iter,
            functional: value,
            max_gradient: max_abs(&grad),
            step,
        });
        if iter.is_power_of_two() {
            trace.snapshots.push((iter, to_rates(&vars)));
        }
        if improvement < cfg.tolerance {
            converged = true;
            break;
        }
        step *= 2.0;
    }

    let rates: Vec<f64> = to_rates(&vars)
        .into_iter()
        .map(|x| if x <= floor { 0.0 } else { x })
        .collect();
    if trace.snapshots.last().map(|s| s.0) != Some(iterations) {
        trace.snapshots.push((iterations, rates.clone()));
    }
    Ok(Optimized {
        profile: CouplingProfile::sampled(*grid, rates)?,
        functional: value,
        converged,
        iterations,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub max_residual: f64,
    pub t_at_max: f64,
    pub threshold: f64,
    pub points: usize,
    pub pass: bool,
}

/// Largest Euler-Lagrange residual on `[0, t_max]`.
pub fn verify_stationarity(
    c: &CouplingProfile,
    p: &SystemParams,
    grid: &TimeGrid,
    t_max: f64,
    threshold: f64,
) -> Result<StationarityReport> {
    let residual = oracles::euler_lagrange_residual(c, p, grid)?;
    let (mut worst, mut at, mut points) = (0.0, 0.0, 0);
    for (t, r) in residual.into_iter().filter(|(t, _)| *t <= t_max) {
        points += 1;
        if r.abs() > worst {
            worst = r.abs();
            at = t;
        }
    }
    Ok(StationarityReport {
        max_residual: worst,
        t_at_max: at,
        threshold,
        points,
        pass: points > 0 && worst <= threshold,
    })
}
