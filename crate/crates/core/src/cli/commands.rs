//! The four workflows behind the command line. Each writes its artifacts
//! into the configured output directory and returns a short summary.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ProfileSpec, RunConfig};
use crate::circuit::{self, CircuitRates};
use crate::error::Error;
use crate::optimizer::{self, Optimized, StationarityReport};
use crate::oracles;
use crate::simulator::{self, CommutatorDeficit};
use crate::types::{
    validate_params, CouplingProfile, FidelityReport, InfidelityTerms, ProfileKind, Severity, SystemParams, TimeGrid,
    TransferState,
};

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// Sweep points agree with the analytic value to this, plus their budget.
pub const SWEEP_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::invalid(format!("cannot write {}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Outcome<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

/// Creates the output directory and echoes the effective configuration.
fn prepare(cfg: &RunConfig) -> Outcome<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_failure(&cfg.out, e))?;
    let path = cfg.out.join("effective_config.json");
    fs::write(&path, cfg.to_json() + "\n").map_err(|e| io_failure(&path, e))
}

fn param_warnings(p: &SystemParams) -> Vec<String> {
    validate_params(p)
        .into_iter()
        .filter(|i| i.severity == Severity::Warning)
        .map(|i| i.message)
        .collect()
}

/// `sqrt(eta) exp(-gamma_loss t)`
fn loss_factor(p: &SystemParams, t: f64) -> f64 {
    p.eta.sqrt() * (-p.gamma_loss * t).exp()
}

/// Closed-form transfer amplitude on the simulation grid: the optimal arc
/// up to the cut and, for the hold and for piecewise-constant profiles, the
/// exact solution cell by cell.
pub fn oracle_curve(c: &CouplingProfile, p: &SystemParams, grid: &TimeGrid) -> Vec<f64> {
    let g = p.gamma;
    let t_end = p.transfer_time;
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    match (&c.kind, c.cut_time(p)) {
        (ProfileKind::OptimalClosedForm, Some(cut)) => {
            let hold = c.cap().expect("truncated profile has a cap");
            // remaining amplitude of oscillator 1 on the optimal arc
            let a11_cut = ((-(-2.0 * g * (t_end - cut)).exp_m1()) / (-(-2.0 * g * t_end).exp_m1())).sqrt();
            let a21_cut = oracles::fidelity_optimal(g, t_end, cut);
            for t in grid.points() {
                let f = if t <= cut {
                    oracles::fidelity_optimal(g, t_end, t)
                } else {
                    let tau = t - cut;
                    a21_cut * (-g * tau).exp() + a11_cut * oracles::fidelity_constant_rate(g, hold, tau)
                };
                out.push(loss_factor(p, t) * f);
            }
        }
        _ => {
            let (mut a11, mut a21) = (1.0f64, 0.0f64);
            let h = grid.dt();
            out.push(0.0);
            for j in 0..grid.n_steps {
                let mid = grid.point(j) + 0.5 * h;
                let x = crate::types::profile_value(c, p, mid).unwrap_or(0.0);
                a21 = a21 * (-g * h).exp() + a11 * oracles::fidelity_constant_rate(g, x, h);
                a11 *= (-x * h).exp();
                out.push(loss_factor(p, grid.point(j + 1)) * a21);
            }
        }
    }
    out
}

fn integrate(c: &CouplingProfile, p: &SystemParams, cfg: &RunConfig) -> Outcome<TransferState> {
    let s = if p.is_lossless() {
        simulator::integrate_transfer(c, p, &cfg.integrator)?
    } else {
        simulator::integrate_transfer_lossy(c, p, &cfg.integrator)?
    };
    Ok(s)
}

/// Budget terms for a profile: the first-order expansion for the optimal
/// profile, loss terms only otherwise.
fn report_for(c: &CouplingProfile, p: &SystemParams, cfg: &RunConfig, fidelity: f64, oracle: f64) -> FidelityReport {
    let (loss_line, loss_osc) = oracles::loss_terms(p);
    let mut report = match c.kind {
        ProfileKind::OptimalClosedForm => {
            let mut r = oracles::infidelity_budget(p.gamma, p.transfer_time, cfg.dt_cut);
            r.infidelity_terms.loss_line = loss_line;
            r.infidelity_terms.loss_osc = loss_osc;
            r.predicted_infidelity = r.infidelity_terms.total();
            r.validity = Some(oracles::validity_windows(p, cfg.cap(), cfg.target_fidelity, cfg.margin));
            r
        }
        _ => FidelityReport {
            fidelity,
            infidelity_terms: InfidelityTerms {
                loss_line,
                loss_osc,
                ..Default::default()
            },
            predicted_infidelity: 1.0 - oracle,
            validity: None,
            warnings: vec![],
        },
    };
    report.fidelity = fidelity;
    report.warnings.extend(param_warnings(p));
    report
}

#[derive(Debug, Clone, Serialize)]
pub struct Peak {
    pub t: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub command: &'static str,
    pub fidelity: f64,
    pub readout_time: f64,
    pub oracle_fidelity: f64,
    pub max_abs_err: f64,
    pub peak: Peak,
    pub commutator_max_deficit: Option<f64>,
    pub report: FidelityReport,
}

pub fn simulate(cfg: &RunConfig) -> Outcome<SimulateSummary> {
    let p = cfg.params()?;
    let c = cfg.coupling_profile(&p)?;
    prepare(cfg)?;
    let s = integrate(&c, &p, cfg)?;
    let curve = simulator::fidelity_curve(&s);
    let oracle = oracle_curve(&c, &p, &s.grid);
    let mut max_abs_err = 0.0f64;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .zip(&oracle)
        .map(|(&(t, f), &o)| {
            max_abs_err = max_abs_err.max((f - o).abs());
            vec![sci(t), sci(f), sci(o), sci((f - o).abs())]
        })
        .collect();
    write_csv(
        &cfg.out.join("fidelity_curve.csv"),
        &["t", "F_sim", "F_oracle", "abs_err"],
        rows,
    )?;

    let deficit = if s.has_kernels() {
        let d: CommutatorDeficit = simulator::commutator_check(&s)?;
        let rows = (0..d.t.len()).map(|i| vec![sci(d.t[i]), sci(d.a1[i]), sci(d.a2[i])]);
        write_csv(
            &cfg.out.join("commutator.csv"),
            &["t", "deficit_a1", "deficit_a2"],
            rows,
        )?;
        Some(d.max_abs())
    } else {
        None
    };

    // oracle value at the readout time
    let oracle_fidelity = match c.cut_time(&p) {
        Some(cut) if matches!(c.kind, ProfileKind::OptimalClosedForm) => {
            loss_factor(&p, cut) * oracles::fidelity_optimal(p.gamma, p.transfer_time, cut)
        }
        _ => *oracle.last().expect("non-empty grid"),
    };
    let (t_peak, f_peak) = simulator::curve_peak(&curve);
    let summary = SimulateSummary {
        command: "simulate",
        fidelity: s.fidelity(),
        readout_time: s.readout.t,
        oracle_fidelity,
        max_abs_err,
        peak: Peak {
            t: t_peak,
            fidelity: f_peak,
        },
        commutator_max_deficit: deficit,
        report: report_for(&c, &p, cfg, s.fidelity(), oracle_fidelity),
    };
    write_json(&cfg.out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    pub initial_rate: f64,
    pub functional: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSummary {
    pub command: &'static str,
    pub functional: f64,
    pub closed_form_functional: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest relative deviation from the closed form on `[0, T - 10 dt_cut]`.
    pub max_rel_err: f64,
    pub t_max_rel_err: f64,
    pub optimized: StationarityReport,
    pub closed_form: StationarityReport,
    pub starts: Vec<StartSummary>,
}

pub fn optimize(cfg: &RunConfig) -> Outcome<OptimizeSummary> {
    let p = cfg.params()?;
    if !(cfg.dt_cut > 0.0 && cfg.dt_cut < p.transfer_time) {
        return Err(Failure::invalid(format!(
            "optimize needs 0 < dt_cut < T, got {}",
            cfg.dt_cut
        )));
    }
    if cfg.optimizer.initial_rates.is_empty() {
        return Err(Failure::invalid("optimizer needs at least one initial rate"));
    }
    let grid = TimeGrid::new(p.transfer_time, cfg.integrator.n_steps)?;
    prepare(cfg)?;

    let runs: Vec<(f64, Optimized)> = cfg
        .optimizer
        .initial_rates
        .par_iter()
        .map(|&r| optimizer::optimize_profile(&p, &grid, &cfg.optimizer_config(r)).map(|o| (r, o)))
        .collect::<crate::Result<_>>()?;
    let best = runs
        .iter()
        .map(|(_, o)| o)
        .reduce(|a, b| if b.functional > a.functional { b } else { a })
        .expect("at least one start");
    let ProfileKind::SampledGrid { values, .. } = &best.profile.kind else {
        unreachable!("optimizer returns sampled profiles")
    };

    let cap = cfg.cap();
    let closed = optimizer::sample_truncated_closed_form(&p, &grid, cfg.dt_cut, cap);
    let t_max = p.transfer_time - 10.0 * cfg.dt_cut;
    let (mut max_rel_err, mut t_max_rel_err) = (0.0f64, 0.0);
    let rows: Vec<Vec<String>> = (0..grid.n_steps)
        .map(|j| {
            let t = grid.point(j);
            let rel = (values[j] / closed[j] - 1.0).abs();
            if grid.point(j + 1) <= t_max && rel > max_rel_err {
                max_rel_err = rel;
                t_max_rel_err = t;
            }
            vec![sci(t), sci(values[j]), sci(closed[j]), sci(rel)]
        })
        .collect();
    write_csv(
        &cfg.out.join("profile.csv"),
        &["t", "gamma1_opt", "gamma1_closed_form", "rel_err"],
        rows,
    )?;
    write_csv(
        &cfg.out.join("trace.csv"),
        &["iter", "functional", "max_gradient", "step"],
        best.trace
            .entries
            .iter()
            .map(|e| vec![e.iter.to_string(), sci(e.functional), sci(e.max_gradient), sci(e.step)]),
    )?;

    let closed_profile = CouplingProfile::sampled(grid, closed.clone())?;
    let reference = optimizer::verify_stationarity(&closed_profile, &p, &grid, t_max, f64::INFINITY)?;
    let optimized = optimizer::verify_stationarity(&best.profile, &p, &grid, t_max, 10.0 * reference.max_residual)?;
    let summary = OptimizeSummary {
        command: "optimize",
        functional: best.functional,
        closed_form_functional: optimizer::rates_functional(&closed, &grid, &p)?,
        converged: best.converged,
        iterations: best.iterations,
        max_rel_err,
        t_max_rel_err,
        optimized,
        closed_form: reference,
        starts: runs
            .iter()
            .map(|(r, o)| StartSummary {
                initial_rate: *r,
                functional: o.functional,
                converged: o.converged,
                iterations: o.iterations,
            })
            .collect(),
    };
    write_json(&cfg.out.join("stationarity.json"), &summary)?;
    if !summary.converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "optimizer did not converge in {} iterations (functional {:.12})",
                summary.iterations, summary.functional
            ),
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub f_analytic: f64,
    pub f_sim: f64,
    pub diff: f64,
    pub budget: f64,
    pub pass: bool,
}

fn sweep_point(cfg: &RunConfig, value: f64) -> Outcome<SweepRow> {
    let p = cfg.params()?;
    let c = cfg.coupling_profile(&p)?;
    let s = integrate(&c, &p, cfg)?;
    let (f_analytic, budget) = match cfg.profile_spec()? {
        ProfileSpec::Optimal => (
            oracles::fidelity_lossy(&p, p.transfer_time)?,
            loss_factor(&p, p.transfer_time) * oracles::truncation_drop(p.gamma, p.transfer_time, cfg.dt_cut),
        ),
        _ => (*oracle_curve(&c, &p, &s.grid).last().expect("grid"), 0.0),
    };
    let f_sim = s.fidelity();
    let diff = f_sim - f_analytic;
    Ok(SweepRow {
        value,
        f_analytic,
        f_sim,
        diff,
        budget,
        pass: diff.abs() <= SWEEP_TOLERANCE + budget,
    })
}

pub fn sweep(cfg: &RunConfig) -> Outcome<Vec<SweepRow>> {
    let axis = cfg.sweep_axis()?;
    // surface configuration errors before any work starts
    for &v in &axis.values {
        let mut point = cfg.clone();
        axis.param.apply(&mut point, v);
        let p = point.params()?;
        point.coupling_profile(&p)?;
    }
    prepare(cfg)?;
    let rows = axis
        .values
        .par_iter()
        .map(|&v| {
            let mut point = cfg.clone();
            axis.param.apply(&mut point, v);
            sweep_point(&point, v)
        })
        .collect::<Outcome<Vec<_>>>()?;
    write_csv(
        &cfg.out.join("sweep.csv"),
        &["value", "F_analytic", "F_sim", "diff", "budget", "pass"],
        rows.iter().map(|r| {
            vec![
                sci(r.value),
                sci(r.f_analytic),
                sci(r.f_sim),
                sci(r.diff),
                sci(r.budget),
                r.pass.to_string(),
            ]
        }),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct CircuitReadout {
    pub oscillator1: CircuitRates,
    pub oscillator2: CircuitRates,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub command: &'static str,
    pub report: FidelityReport,
    pub circuits: Option<CircuitReadout>,
}

pub fn budget(cfg: &RunConfig) -> Outcome<BudgetSummary> {
    let p = cfg.params()?;
    if !(cfg.dt_cut >= 0.0 && cfg.dt_cut < p.transfer_time) {
        return Err(Failure::invalid(format!(
            "budget needs 0 ≤ dt_cut < T, got {}",
            cfg.dt_cut
        )));
    }
    let mut report = oracles::infidelity_budget(p.gamma, p.transfer_time, cfg.dt_cut);
    let (loss_line, loss_osc) = oracles::loss_terms(&p);
    report.infidelity_terms.loss_line = loss_line;
    report.infidelity_terms.loss_osc = loss_osc;
    report.predicted_infidelity = report.infidelity_terms.total();
    report.fidelity = 1.0 - report.predicted_infidelity;
    report.warnings.extend(param_warnings(&p));

    let circuits = match (&cfg.circuit1, &cfg.circuit2) {
        (Some(c1), Some(c2)) => Some((c1, c2)),
        (None, None) => None,
        _ => {
            return Err(Failure::invalid(
                "validity from circuits needs both --circuit1 and --circuit2",
            ))
        }
    };
    let cap = cfg.gamma1_max.or((cfg.dt_cut > 0.0).then(|| 0.5 / cfg.dt_cut));
    if let Some(cap) = cap {
        report.validity = Some(match circuits {
            Some((c1, c2)) => circuit::rates_to_validity(cap, c1, c2, cfg.target_fidelity, cfg.margin)?,
            None => oracles::validity_windows(&p, cap, cfg.target_fidelity, cfg.margin),
        });
    }
    let circuits = match circuits {
        Some((c1, c2)) => {
            let r1 = circuit::circuit_to_rates_with_hbar(c1, cfg.hbar)?;
            let r2 = circuit::circuit_to_rates_with_hbar(c2, cfg.hbar)?;
            let relative = (r1.omega0 - r2.omega0).abs() / r1.omega0.max(r2.omega0);
            if relative > circuit::IDENTITY_TOLERANCE {
                return Err(Error::NonIdenticalOscillators { relative }.into());
            }
            Some(CircuitReadout {
                oscillator1: r1,
                oscillator2: r2,
            })
        }
        None => None,
    };
    prepare(cfg)?;
    let summary = BudgetSummary {
        command: "budget",
        report,
        circuits,
    };
    write_json(&cfg.out.join("report.json"), &summary)?;
    Ok(summary)
}
