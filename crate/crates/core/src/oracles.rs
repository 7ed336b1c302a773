//! Closed-form results for the cascaded pair, used as ground truth by the
//! simulator and optimizer tests.
//!
//! "Fidelity" here is the amplitude with which `a1(0)` appears in `a2(t)`.
//! It is state independent because the dynamics are linear, and it is not the
//! overlap fidelity between density matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    profile_value, CouplingProfile, FidelityReport, InfidelityTerms, ProfileKind, SystemParams, TimeGrid, ValidityFlags,
};

/// Margin used to read "≫" in the validity windows.
pub const DEFAULT_MARGIN: f64 = 10.0;

/// `2 gamma t exp(-gamma t)`: both couplings held at `gamma`.
pub fn fidelity_constant_coupling(gamma: f64, t: f64) -> f64 {
    2.0 * gamma * t * (-gamma * t).exp()
}

/// Transfer amplitude for an arbitrary constant `gamma1`.
///
/// Reduces to [`fidelity_constant_coupling`] when `gamma1 == gamma`.
pub fn fidelity_constant_rate(gamma: f64, gamma1: f64, t: f64) -> f64 {
    if gamma1 == 0.0 {
        return 0.0;
    }
    let diff = gamma - gamma1;
    // (e^{-gamma1 t} - e^{-gamma t}) / (gamma - gamma1) = e^{-gamma t} (e^{diff t} - 1) / diff
    let shape = if (diff * t).abs() < 1e-8 {
        t * (1.0 + 0.5 * diff * t)
    } else {
        (diff * t).exp_m1() / diff
    };
    2.0 * (gamma * gamma1).sqrt() * (-gamma * t).exp() * shape
}

/// `gamma / (exp(2 gamma (T - t)) - 1)`, singular at `t = T`.
pub fn optimal_profile(gamma: f64, transfer_time: f64, t: f64) -> Result<f64> {
    if t >= transfer_time {
        return Err(Error::Singularity { t });
    }
    Ok(gamma / (2.0 * gamma * (transfer_time - t)).exp_m1())
}

/// `2 sinh(gamma t) / sqrt(exp(2 gamma T) - 1)` for the optimal profile.
///
/// Evaluated as `e^{gamma (t - T)} (1 - e^{-2 gamma t}) / sqrt(1 - e^{-2 gamma T})`
/// which does not overflow for large `gamma T`; at `t = T` it equals
/// `sqrt(1 - e^{-2 gamma T})` to round-off.
pub fn fidelity_optimal(gamma: f64, transfer_time: f64, t: f64) -> f64 {
    let num = -(-2.0 * gamma * t).exp_m1();
    let den = (-(-2.0 * gamma * transfer_time).exp_m1()).sqrt();
    (gamma * (t - transfer_time)).exp() * num / den
}

/// `sqrt(1 - exp(-2 gamma T))`.
pub fn fidelity_optimal_final(gamma: f64, transfer_time: f64) -> f64 {
    (-(-2.0 * gamma * transfer_time).exp_m1()).sqrt()
}

/// Exact fidelity lost by stopping the optimal transfer at `T - dt_cut`.
pub fn truncation_drop(gamma: f64, transfer_time: f64, dt_cut: f64) -> f64 {
    fidelity_optimal(gamma, transfer_time, transfer_time)
        - fidelity_optimal(gamma, transfer_time, transfer_time - dt_cut)
}

/// First-order infidelity of the optimal transfer cut at `T - dt_cut`:
/// `exp(-2 gamma T) / 2 + gamma dt_cut`.
pub fn infidelity_budget(gamma: f64, transfer_time: f64, dt_cut: f64) -> FidelityReport {
    let terms = InfidelityTerms {
        exponential: 0.5 * (-2.0 * gamma * transfer_time).exp(),
        truncation: gamma * dt_cut,
        loss_line: 0.0,
        loss_osc: 0.0,
    };
    let mut warnings = Vec::new();
    if gamma * dt_cut > 0.1 {
        warnings.push(format!(
            "gamma*dt_cut = {:.3} is not small; expansion unreliable",
            gamma * dt_cut
        ));
    }
    if gamma * transfer_time < 2.0 {
        warnings.push(format!(
            "gamma*T = {:.3} < 2; exp(-2 gamma T) is not small",
            gamma * transfer_time
        ));
    }
    let total = terms.total();
    FidelityReport {
        fidelity: 1.0 - total,
        infidelity_terms: terms,
        predicted_infidelity: total,
        validity: None,
        warnings,
    }
}

/// Loss factors of the lossy link: `(1 - sqrt(eta), 1 - exp(-gamma_loss T))`.
pub fn loss_terms(p: &SystemParams) -> (f64, f64) {
    (1.0 - p.eta.sqrt(), -(-p.gamma_loss * p.transfer_time).exp_m1())
}

/// Optimal-profile fidelity with oscillator loss `gamma_loss` and line
/// transmission `eta`: `sqrt(eta) exp(-gamma_loss t) F_opt(t)`.
pub fn fidelity_lossy(p: &SystemParams, t: f64) -> Result<f64> {
    if !(p.gamma_loss < p.gamma) {
        return Err(Error::Domain(format!(
            "gamma_loss = {} must be below gamma = {}",
            p.gamma_loss, p.gamma
        )));
    }
    if !(p.eta > 0.0 && p.eta <= 1.0) || p.gamma_loss < 0.0 {
        return Err(Error::Domain("requires 0 < eta ≤ 1, gamma_loss ≥ 0".into()));
    }
    Ok(p.eta.sqrt() * (-p.gamma_loss * t).exp() * fidelity_optimal(p.gamma, p.transfer_time, t))
}

/// Rate and quality-factor windows for a cap `gamma1_max` and a target
/// fidelity, each "≫" read as `>= margin *`.
pub fn validity_windows(p: &SystemParams, gamma1_max: f64, target_fidelity: f64, margin: f64) -> ValidityFlags {
    // Relative slack so that boundary cases such as 1 - 0.99 do not flip on
    // the last bit.
    let ge = |a: f64, b: f64| a >= b * (1.0 - 1e-12);
    let infidelity = 1.0 - target_fidelity;
    let q2 = p.omega0 / p.gamma;
    let q1_min = p.omega0 / gamma1_max;
    ValidityFlags {
        margin,
        gamma1_max,
        target_fidelity,
        q2,
        q1_min,
        carrier_above_cap: ge(p.omega0, margin * gamma1_max),
        cap_above_required: ge(gamma1_max, margin * p.gamma / infidelity),
        quality_upper: ge(infidelity * q2, margin * q1_min),
        quality_lower: ge(q1_min, margin),
    }
}

/// `2 gamma1^2 + 2 gamma gamma1 - d gamma1/dt` at interior grid points,
/// with a central difference for the derivative. Points whose stencil
/// reaches the held segment (or the singular end of an untruncated optimal
/// profile) are skipped. Sampled profiles use their own cell values as the
/// equally spaced samples and ignore `grid`.
pub fn euler_lagrange_residual(c: &CouplingProfile, p: &SystemParams, grid: &TimeGrid) -> Result<Vec<(f64, f64)>> {
    let (samples, dt): (Vec<(f64, f64)>, f64) = match &c.kind {
        ProfileKind::SampledGrid { grid, values } => {
            let cut = c.cut_time(p).unwrap_or(f64::INFINITY);
            let pts = values
                .iter()
                .enumerate()
                .map(|(j, v)| (grid.point(j), *v))
                .take_while(|(t, _)| *t + grid.dt() <= cut)
                .collect();
            (pts, grid.dt())
        }
        _ => {
            let singular = matches!(c.kind, ProfileKind::OptimalClosedForm);
            let limit = c.cut_time(p).or(singular.then_some(p.transfer_time));
            let mut pts = Vec::with_capacity(grid.n_steps + 1);
            for t in grid.points() {
                if limit.is_some_and(|l| t >= l) {
                    break;
                }
                pts.push((t, profile_value(c, p, t)?));
            }
            (pts, grid.dt())
        }
    };
    let g = p.gamma;
    Ok(samples
        .windows(3)
        .map(|w| {
            let (t, v) = w[1];
            let deriv = (w[2].1 - w[0].1) / (2.0 * dt);
            (t, 2.0 * v * v + 2.0 * g * v - deriv)
        })
        .collect())
}

/// Best profile of the form "stationary arc, then hold at `cap`".
///
/// The stationarity condition is autonomous, so every arc
/// `gamma / (exp(2 gamma (H - t)) - 1)` solves it; with a cap the horizon `H`
/// is free. The arc reaches `cap` at `t_switch = H - ln(1 + gamma/cap)/(2 gamma)`
/// and the profile holds at `cap` until `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedOptimum {
    pub horizon: f64,
    pub switch_time: f64,
    pub fidelity: f64,
}

impl CappedOptimum {
    pub fn rate(&self, gamma: f64, cap: f64, t: f64) -> f64 {
        if t >= self.switch_time {
            cap
        } else {
            gamma / (2.0 * gamma * (self.horizon - t)).exp_m1()
        }
    }
}

/// Transfer amplitude at `T` for the arc with horizon `horizon` on
/// `[0, switch_time)` followed by a hold at `cap`.
pub fn arc_then_hold_fidelity(gamma: f64, transfer_time: f64, cap: f64, horizon: f64, switch_time: f64) -> f64 {
    let t_s = switch_time.clamp(0.0, transfer_time.min(horizon));
    let (a11, a21) = if t_s > 0.0 {
        // exp(-G(t_s)) along the arc
        let a11 = ((-(-2.0 * gamma * (horizon - t_s)).exp_m1()) / (-(-2.0 * gamma * horizon).exp_m1())).sqrt();
        (a11, fidelity_optimal(gamma, horizon, t_s))
    } else {
        (1.0, 0.0)
    };
    let tau = transfer_time - t_s;
    let diff = cap - gamma;
    // integral_0^tau e^{-gamma (tau - s)} e^{-cap s} ds
    let overlap = if (diff * tau).abs() < 1e-8 {
        tau * (-gamma * tau).exp()
    } else {
        (-gamma * tau).exp() * -(-diff * tau).exp_m1() / diff
    };
    a21 * (-gamma * tau).exp() + 2.0 * (gamma * cap).sqrt() * a11 * overlap
}

/// Arc with horizon `horizon` switched to the hold exactly where it reaches
/// `cap`.
pub fn capped_arc_fidelity(gamma: f64, transfer_time: f64, cap: f64, horizon: f64) -> f64 {
    let delta = (gamma / cap).ln_1p() / (2.0 * gamma);
    arc_then_hold_fidelity(gamma, transfer_time, cap, horizon, horizon - delta)
}

pub fn capped_optimum(gamma: f64, transfer_time: f64, cap: f64) -> CappedOptimum {
    let delta = (gamma / cap).ln_1p() / (2.0 * gamma);
    let f = |h: f64| capped_arc_fidelity(gamma, transfer_time, cap, h);
    let (mut lo, mut hi) = (delta, transfer_time + delta);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-14 * transfer_time {
            break;
        }
    }
    let horizon = 0.5 * (lo + hi);
    CappedOptimum {
        horizon,
        switch_time: (horizon - delta).clamp(0.0, transfer_time),
        fidelity: f(horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = hi - r * (hi - lo);
            let x2 = lo + r * (hi - lo);
            if f(x1) < f(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        let x = 0.5 * (lo + hi);
        (x, f(x))
    }

    #[test]
    fn constant_coupling_peak() {
        let f = fidelity_constant_coupling(1.0, 1.0);
        assert!((f - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert!((f - 0.736).abs() < 5e-4);
        assert_eq!(fidelity_constant_coupling(1.0, 0.0), 0.0);
        assert!((fidelity_constant_coupling(2.0, 0.5) - f).abs() < 1e-15);
        let (t_max, f_max) = golden_max(|t| fidelity_constant_coupling(1.0, t), 0.0, 5.0);
        assert!((t_max - 1.0).abs() < 1e-6);
        assert!((f_max - 2.0 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn general_constant_rate_reduces_to_equal_rates() {
        for t in [0.1, 1.0, 3.0] {
            let a = fidelity_constant_rate(1.0, 1.0, t);
            assert!((a - fidelity_constant_coupling(1.0, t)).abs() < 1e-14);
            let near = fidelity_constant_rate(1.0, 1.0 + 1e-9, t);
            assert!((near - a).abs() < 1e-8);
        }
        assert_eq!(fidelity_constant_rate(1.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn optimal_profile_values() {
        let t = 5.0 - 2f64.ln() / 2.0;
        assert!((optimal_profile(1.0, 5.0, t).unwrap() - 1.0).abs() < 1e-14);
        // 1/(e^10 - 1) from a 30-digit evaluation
        let v = optimal_profile(1.0, 5.0, 0.0).unwrap();
        assert!((v / 4.540199100968777e-5 - 1.0).abs() < 1e-14);
        assert_eq!(optimal_profile(1.0, 1e6, 3.0).unwrap(), 0.0);
        assert!(optimal_profile(1.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn optimal_fidelity_values() {
        let f = fidelity_optimal(1.0, 5.0, 5.0);
        assert!((f - 0.999_977_299_777_468_7).abs() < 1e-15);
        assert!(f > 1.0 - 1e-4);
        assert_eq!(fidelity_optimal(1.0, 5.0, 0.0), 0.0);
        let direct = 2.0 * 2f64.sinh() / (4f64.exp() - 1.0).sqrt();
        assert!((fidelity_optimal(1.0, 2.0, 2.0) - direct).abs() < 1e-15);
        assert!((fidelity_optimal(1.0, 2.0, 2.0) - (1.0 - (-4f64).exp()).sqrt()).abs() < 1e-15);
        // large gamma T stays finite
        assert!((fidelity_optimal(1.0, 400.0, 400.0) - 1.0).abs() < 1e-15);
        assert!(fidelity_optimal(1.0, 400.0, 200.0) > 0.0);
    }

    #[test]
    fn optimal_fidelity_is_monotone() {
        let mut last = 0.0;
        for j in 1..=100 {
            let f = fidelity_optimal(1.0, 3.0, 0.03 * j as f64);
            assert!(f > last);
            last = f;
        }
        let mut last = 0.0;
        for j in 1..=100 {
            let t = 0.1 * j as f64;
            let f = fidelity_optimal_final(1.0, t);
            assert!(f >= last);
            last = f;
        }
    }

    #[test]
    fn budget_terms() {
        let r = infidelity_budget(1.0, 5.0, 1e-3);
        assert!((r.infidelity_terms.exponential - 0.5 * (-10f64).exp()).abs() < 1e-20);
        assert_eq!(r.infidelity_terms.truncation, 1e-3);
        assert!((r.predicted_infidelity - 1.0227e-3).abs() < 1e-7);
        let r = infidelity_budget(1.0, 5.0, 0.0);
        assert!((r.predicted_infidelity - 2.27e-5).abs() < 1e-8);
        assert!(r.warnings.is_empty());
        let r = infidelity_budget(1.0, 1e3, 0.0);
        assert_eq!(r.predicted_infidelity, 0.0);
        assert_eq!(infidelity_budget(1.0, 1.0, 0.5).warnings.len(), 2);
    }

    #[test]
    fn lossy_fidelity_factors() {
        let base = fidelity_optimal(1.0, 5.0, 5.0);
        let p = SystemParams::lossless(1.0, 5.0);
        assert_eq!(fidelity_lossy(&p, 5.0).unwrap().to_bits(), base.to_bits());
        let f = fidelity_lossy(&p.with_losses(0.0, 0.81), 5.0).unwrap();
        assert!((f - 0.9 * base).abs() < 1e-15);
        let f = fidelity_lossy(&p.with_losses(0.01, 1.0), 5.0).unwrap();
        assert!((f - (-0.05f64).exp() * base).abs() < 1e-15);
        assert!(matches!(
            fidelity_lossy(&p.with_losses(1.0, 1.0), 5.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn validity_window_examples() {
        let p = SystemParams::lossless(1.0, 5.0).with_omega0(1e6);
        let v = validity_windows(&p, 1e3, 0.99, DEFAULT_MARGIN);
        assert!(v.rate_window() && v.quality_window());
        assert_eq!(v.q2, 1e6);
        assert_eq!(v.q1_min, 1e3);

        let low_carrier = SystemParams::lossless(1.0, 5.0).with_omega0(1e2);
        let v = validity_windows(&low_carrier, 1e3, 0.99, DEFAULT_MARGIN);
        assert!(!v.carrier_above_cap);

        let v = validity_windows(&p, 10.0, 0.99, DEFAULT_MARGIN);
        assert!(v.carrier_above_cap);
        assert!(!v.cap_above_required);
    }

    #[test]
    fn residual_of_constant_profile() {
        let p = SystemParams::lossless(1.0, 2.0);
        let grid = TimeGrid::new(2.0, 50).unwrap();
        let r = euler_lagrange_residual(&CouplingProfile::constant(1.0), &p, &grid).unwrap();
        assert_eq!(r.len(), 49);
        assert!(r.iter().all(|(_, v)| (*v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn residual_of_closed_form_converges_quadratically() {
        let p = SystemParams::lossless(1.0, 3.0);
        let c = CouplingProfile::optimal(0.3);
        let max_res = |n: usize| {
            let grid = TimeGrid::new(3.0, n).unwrap();
            euler_lagrange_residual(&c, &p, &grid)
                .unwrap()
                .iter()
                .filter(|(t, _)| *t <= 2.5)
                .map(|(_, r)| r.abs())
                .fold(0.0, f64::max)
        };
        let (r1, r2, r3) = (max_res(300), max_res(600), max_res(1200));
        assert!(r1 < 1e-3);
        assert!((r1 / r2 - 4.0).abs() < 0.2, "{r1} {r2}");
        assert!((r2 / r3 - 4.0).abs() < 0.2, "{r2} {r3}");
    }

    #[test]
    fn capped_optimum_beats_plain_truncation() {
        let (g, t_end, dt_cut) = (1.0, 3.0, 5e-3);
        let cap = 0.5 / dt_cut;
        let best = capped_optimum(g, t_end, cap);
        let truncated = arc_then_hold_fidelity(g, t_end, cap, t_end, t_end - dt_cut);
        assert!(best.fidelity >= truncated);
        assert!(best.fidelity < fidelity_optimal_final(g, t_end));
        assert!(best.switch_time < t_end - dt_cut);
    }

    #[test]
    fn capped_arc_with_huge_cap_approaches_ideal() {
        let best = capped_optimum(1.0, 5.0, 1e8);
        assert!((best.fidelity - fidelity_optimal_final(1.0, 5.0)).abs() < 1e-6);
    }
}
