//! Coefficient-level integration of the cascaded input-output equations.
//!
//! Eliminating the line fields between the two oscillators gives
//!
//! ```text
//! da1/dt = -(g1 + gl) a1 + sqrt(2 g1) b_in + sqrt(2 gl) b'1
//! da2/dt = -(g + gl) a2 + 2 sqrt(g g1 eta) a1 - sqrt(2 g eta) b_in
//!          + sqrt(2 g (1 - eta)) v + sqrt(2 gl) b'2
//! ```
//!
//! with `g1 = gamma1(t)`, `g = gamma`, `gl = gamma_loss` and `v` the vacuum
//! admitted where the line drops a fraction `1 - eta` of the flux. Because
//! the system is linear, the Heisenberg operators are fixed by their
//! coefficients on `a1(0)`, `a2(0)` and the input fields, and only those
//! coefficients are evolved.
//!
//! Each grid step integrates the step propagator (a lower-triangular 2x2
//! matrix) and, when kernels are tracked, the Gram matrix of the noise
//! injected during the step. The Gram matrix is split into two orthonormal
//! temporal modes per cell, so the kernel norms entering the commutator sum
//! rule are exact up to integrator error rather than quadrature error.

use crate::error::{Error, Result};
use crate::types::{CouplingProfile, Kernel, Readout, SystemParams, TimeGrid, TransferState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub n_steps: usize,
    /// Evolve noise kernels as well; costs O(n_steps^2) memory.
    pub kernel_tracking: bool,
    /// A step is halved until `rate * h` drops below this value.
    pub substep_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            n_steps: 10_000,
            kernel_tracking: false,
            substep_threshold: 0.05,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(n_steps: usize) -> Self {
        IntegratorConfig {
            n_steps,
            ..Default::default()
        }
    }

    pub fn with_kernels(mut self) -> Self {
        self.kernel_tracking = true;
        self
    }
}

/// Largest grid for which kernels may be tracked.
pub const MAX_KERNEL_STEPS: usize = 10_000;
const MAX_SUBSTEPS: usize = 1 << 24;

// In-step state: propagator (p11, p21, p22), line-noise Gram (b11, b21, b22),
// oscillator-loss Gram (l11, l21, l22) and the line-loss vacuum norm.
const DIM: usize = 10;
type Vector = [f64; DIM];

const IDENTITY: Vector = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

#[derive(Clone, Copy)]
struct Link {
    gamma: f64,
    gamma_loss: f64,
    sqrt_eta: f64,
    eta: f64,
    track: bool,
}

impl Link {
    fn derivative(&self, g1: f64, y: &Vector) -> Vector {
        let k1 = g1 + self.gamma_loss;
        let k2 = self.gamma + self.gamma_loss;
        let c = 2.0 * (self.gamma * g1).sqrt() * self.sqrt_eta;
        let mut d = [0.0; DIM];
        d[0] = -k1 * y[0];
        d[1] = c * y[0] - k2 * y[1];
        d[2] = -k2 * y[2];
        if self.track {
            let s1 = (2.0 * g1).sqrt();
            let s2 = -(2.0 * self.gamma).sqrt() * self.sqrt_eta;
            d[3] = -2.0 * k1 * y[3] + s1 * s1;
            d[4] = c * y[3] - (k1 + k2) * y[4] + s1 * s2;
            d[5] = 2.0 * c * y[4] - 2.0 * k2 * y[5] + s2 * s2;
            let src = 2.0 * self.gamma_loss;
            d[6] = -2.0 * k1 * y[6] + src;
            d[7] = c * y[6] - (k1 + k2) * y[7];
            d[8] = 2.0 * c * y[7] - 2.0 * k2 * y[8] + src;
            d[9] = -2.0 * k2 * y[9] + 2.0 * self.gamma * (1.0 - self.eta);
        }
        d
    }
}

fn axpy(y: &Vector, h: f64, d: &Vector) -> Vector {
    let mut out = *y;
    for (o, di) in out.iter_mut().zip(d) {
        *o += h * di;
    }
    out
}

struct Stepper<'a> {
    link: Link,
    profile: &'a CouplingProfile,
    params: &'a SystemParams,
    cfg: &'a IntegratorConfig,
}

impl Stepper<'_> {
    fn rate(&self, branch: f64, t: f64) -> f64 {
        self.profile.segment_rate(self.params, branch, t)
    }

    /// Propagator and Gram matrices of one smooth piece `[a, b]`.
    fn piece(&self, a: f64, b: f64, step: usize) -> Result<Vector> {
        let branch = 0.5 * (a + b);
        let len = b - a;
        let peak = [a, branch, b]
            .iter()
            .map(|&t| self.rate(branch, t))
            .fold(0.0, f64::max)
            .max(self.link.gamma)
            + self.link.gamma_loss;
        let mut m = 1usize;
        while peak * len / m as f64 > self.cfg.substep_threshold {
            m *= 2;
            if m > MAX_SUBSTEPS {
                return Err(Error::Numerical { step, t: a });
            }
        }
        let h = len / m as f64;
        let mut y = IDENTITY;
        for k in 0..m {
            let t = a + k as f64 * h;
            y = match self.cfg.method {
                Method::Rk4 => {
                    let d1 = self.link.derivative(self.rate(branch, t), &y);
                    let mid = self.rate(branch, t + 0.5 * h);
                    let d2 = self.link.derivative(mid, &axpy(&y, 0.5 * h, &d1));
                    let d3 = self.link.derivative(mid, &axpy(&y, 0.5 * h, &d2));
                    let d4 = self.link.derivative(self.rate(branch, t + h), &axpy(&y, h, &d3));
                    let mut out = y;
                    for i in 0..DIM {
                        out[i] += h / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
                    }
                    out
                }
                Method::Heun => {
                    let d1 = self.link.derivative(self.rate(branch, t), &y);
                    let d2 = self.link.derivative(self.rate(branch, t + h), &axpy(&y, h, &d1));
                    let mut out = y;
                    for i in 0..DIM {
                        out[i] += 0.5 * h * (d1[i] + d2[i]);
                    }
                    out
                }
            };
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { step, t: b });
        }
        Ok(y)
    }
}

/// Chains piece `second` after piece `first`.
fn compose(first: &Vector, second: &Vector) -> Vector {
    let (p, q, r) = (second[0], second[1], second[2]);
    // L M L^T for lower-triangular L = [[p, 0], [q, r]] and symmetric M
    let congruence = |m11: f64, m21: f64, m22: f64| {
        let lower = q * m11 + r * m21;
        (p * p * m11, lower * p, lower * q + (q * m21 + r * m22) * r)
    };
    let mut out = [0.0; DIM];
    out[0] = p * first[0];
    out[1] = q * first[0] + r * first[1];
    out[2] = r * first[2];
    let (b11, b21, b22) = congruence(first[3], first[4], first[5]);
    out[3] = b11 + second[3];
    out[4] = b21 + second[4];
    out[5] = b22 + second[5];
    let (l11, l21, l22) = congruence(first[6], first[7], first[8]);
    out[6] = l11 + second[6];
    out[7] = l21 + second[7];
    out[8] = l22 + second[8];
    out[9] = r * r * first[9] + second[9];
    out
}

/// Factor `M = L L^T` of a 2x2 positive semidefinite Gram matrix.
fn cholesky(m11: f64, m21: f64, m22: f64) -> (f64, f64, f64) {
    let l11 = m11.max(0.0).sqrt();
    if l11 > 0.0 {
        let l21 = m21 / l11;
        (l11, l21, (m22 - l21 * l21).max(0.0).sqrt())
    } else {
        (0.0, 0.0, m22.max(0.0).sqrt())
    }
}

/// Propagates one kernel pair by a step and appends the newly injected cell.
fn advance_kernels(
    ka: &mut Kernel,
    kb: &mut Kernel,
    row: usize,
    step: &Vector,
    gram: (f64, f64, f64),
    inv_sqrt_dt: f64,
) {
    let (p11, p21, p22) = (step[0], step[1], step[2]);
    let (l11, l21, l22) = cholesky(gram.0, gram.1, gram.2);
    let (prev_a, cur_a) = ka.row_pair_mut(row);
    let (prev_b, cur_b) = kb.row_pair_mut(row);
    for (cell, &ua) in prev_a.iter().enumerate() {
        cur_a[cell] = p11 * ua;
        cur_b[2 * cell] = p21 * ua + p22 * prev_b[2 * cell];
        cur_b[2 * cell + 1] = p22 * prev_b[2 * cell + 1];
    }
    cur_a[row] = l11 * inv_sqrt_dt;
    cur_b[2 * row] = l21 * inv_sqrt_dt;
    cur_b[2 * row + 1] = l22 * inv_sqrt_dt;
}

fn integrate(c: &CouplingProfile, p: &SystemParams, cfg: &IntegratorConfig, link: Link) -> Result<TransferState> {
    if cfg.n_steps < 10 {
        return Err(Error::InvalidGrid(format!(
            "integrator needs n_steps ≥ 10, got {}",
            cfg.n_steps
        )));
    }
    if cfg.kernel_tracking && cfg.n_steps > MAX_KERNEL_STEPS {
        return Err(Error::Domain(format!(
            "kernel tracking limited to n_steps ≤ {MAX_KERNEL_STEPS}"
        )));
    }
    if !(cfg.substep_threshold > 0.0) {
        return Err(Error::Domain("substep_threshold must be > 0".into()));
    }
    c.validate(p)?;
    if matches!(c.kind, crate::types::ProfileKind::OptimalClosedForm) && c.truncation.is_none() {
        return Err(Error::Singularity { t: p.transfer_time });
    }
    if let crate::types::ProfileKind::SampledGrid { grid, .. } = &c.kind {
        if !cfg.n_steps.is_multiple_of(grid.n_steps) {
            return Err(Error::InvalidProfile(format!(
                "integrator grid ({}) must refine the profile grid ({})",
                cfg.n_steps, grid.n_steps
            )));
        }
    }

    let grid = TimeGrid::new(p.transfer_time, cfg.n_steps)?;
    let n = grid.n_steps;
    let dt = grid.dt();
    let inv_sqrt_dt = 1.0 / dt.sqrt();
    let stepper = Stepper {
        link,
        profile: c,
        params: p,
        cfg,
    };
    let lossy = link.gamma_loss > 0.0 || link.eta < 1.0;

    let mut a11 = Vec::with_capacity(n + 1);
    let mut a21 = Vec::with_capacity(n + 1);
    let mut a22 = Vec::with_capacity(n + 1);
    a11.push(1.0);
    a21.push(0.0);
    a22.push(1.0);

    let track = cfg.kernel_tracking;
    let mut k1 = track.then(|| Kernel::zeros(n + 1, 1));
    let mut k2 = track.then(|| Kernel::zeros(n + 1, 2));
    let mut kl1 = (track && lossy).then(|| Kernel::zeros(n + 1, 1));
    let mut kl2 = (track && lossy).then(|| Kernel::zeros(n + 1, 2));
    let mut line_loss = (track && lossy).then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        v
    });

    let cut = c.cut_time(p);
    let eps = 1e-12 * dt;
    let mut readout = None;

    for j in 0..n {
        let (t0, t1) = (grid.point(j), grid.point(j + 1));
        let (x11, x21, x22) = (a11[j], a21[j], a22[j]);
        if let Some(tc) = cut {
            if (tc - t0).abs() <= eps {
                readout = Some(Readout {
                    t: t0,
                    a11: x11,
                    a21: x21,
                    a22: x22,
                });
            }
        }
        let step = match cut {
            Some(tc) if tc > t0 + eps && tc < t1 - eps => {
                let before = stepper.piece(t0, tc, j)?;
                readout = Some(Readout {
                    t: tc,
                    a11: before[0] * x11,
                    a21: before[1] * x11 + before[2] * x21,
                    a22: before[2] * x22,
                });
                let after = stepper.piece(tc, t1, j)?;
                compose(&before, &after)
            }
            _ => stepper.piece(t0, t1, j)?,
        };

        a11.push(step[0] * x11);
        a21.push(step[1] * x11 + step[2] * x21);
        a22.push(step[2] * x22);

        if let (Some(k1), Some(k2)) = (k1.as_mut(), k2.as_mut()) {
            advance_kernels(k1, k2, j, &step, (step[3], step[4], step[5]), inv_sqrt_dt);
        }
        if let (Some(kl1), Some(kl2)) = (kl1.as_mut(), kl2.as_mut()) {
            advance_kernels(kl1, kl2, j, &step, (step[6], step[7], step[8]), inv_sqrt_dt);
        }
        if let Some(v) = line_loss.as_mut() {
            let last = v[j];
            v.push(step[2] * step[2] * last + step[9]);
        }
    }

    let readout = readout.unwrap_or(Readout {
        t: grid.t_end,
        a11: a11[n],
        a21: a21[n],
        a22: a22[n],
    });
    Ok(TransferState {
        grid,
        a11,
        a21,
        a22,
        k1,
        k2,
        kl1,
        kl2,
        line_loss,
        readout,
    })
}

/// Integrates the lossless link. Loss fields of `p` are ignored.
pub fn integrate_transfer(c: &CouplingProfile, p: &SystemParams, cfg: &IntegratorConfig) -> Result<TransferState> {
    let lossless = p.with_losses(0.0, 1.0);
    lossless.ensure_valid()?;
    let link = Link {
        gamma: p.gamma,
        gamma_loss: 0.0,
        sqrt_eta: 1.0,
        eta: 1.0,
        track: cfg.kernel_tracking,
    };
    integrate(c, &lossless, cfg, link)
}

/// Integrates the link with oscillator loss `gamma_loss` and line
/// transmission `eta`.
pub fn integrate_transfer_lossy(
    c: &CouplingProfile,
    p: &SystemParams,
    cfg: &IntegratorConfig,
) -> Result<TransferState> {
    p.ensure_valid()?;
    let link = Link {
        gamma: p.gamma,
        gamma_loss: p.gamma_loss,
        sqrt_eta: p.eta.sqrt(),
        eta: p.eta,
        track: cfg.kernel_tracking,
    };
    integrate(c, p, cfg, link)
}

/// Per-time deficit of the commutator sum rules for `a1` and `a2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorDeficit {
    pub t: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl CommutatorDeficit {
    pub fn max_abs(&self) -> f64 {
        self.a1.iter().chain(&self.a2).map(|d| d.abs()).fold(0.0, f64::max)
    }
}

/// `1 - [a11^2 + |k1|^2 + |kl1|^2]` and
/// `1 - [a21^2 + a22^2 + |k2|^2 + |kl2|^2 + line_loss]` at every grid time.
pub fn commutator_check(s: &TransferState) -> Result<CommutatorDeficit> {
    let (k1, k2) = match (&s.k1, &s.k2) {
        (Some(k1), Some(k2)) => (k1, k2),
        _ => return Err(Error::KernelsUnavailable),
    };
    let dt = s.grid.dt();
    let n = s.grid.n_steps;
    let mut out = CommutatorDeficit {
        t: Vec::with_capacity(n + 1),
        a1: Vec::with_capacity(n + 1),
        a2: Vec::with_capacity(n + 1),
    };
    for i in 0..=n {
        let mut s1 = s.a11[i] * s.a11[i] + k1.norm_sq(i, dt);
        let mut s2 = s.a21[i] * s.a21[i] + s.a22[i] * s.a22[i] + k2.norm_sq(i, dt);
        if let Some(kl1) = &s.kl1 {
            s1 += kl1.norm_sq(i, dt);
        }
        if let Some(kl2) = &s.kl2 {
            s2 += kl2.norm_sq(i, dt);
        }
        if let Some(v) = &s.line_loss {
            s2 += v[i];
        }
        out.t.push(s.grid.point(i));
        out.a1.push(1.0 - s1);
        out.a2.push(1.0 - s2);
    }
    Ok(out)
}

/// `(t, a21(t))` on the grid.
pub fn fidelity_curve(s: &TransferState) -> Vec<(f64, f64)> {
    s.grid.points().zip(s.a21.iter().copied()).collect()
}

/// Maximum of a sampled curve, refined by a parabola through the largest
/// sample and its neighbours.
pub fn curve_peak(curve: &[(f64, f64)]) -> (f64, f64) {
    let (j, &(t, f)) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty curve");
    if j == 0 || j + 1 == curve.len() {
        return (t, f);
    }
    let (fm, fp) = (curve[j - 1].1, curve[j + 1].1);
    let h = curve[j + 1].0 - t;
    let denom = fm - 2.0 * f + fp;
    if denom >= 0.0 {
        return (t, f);
    }
    let shift = 0.5 * (fm - fp) / denom;
    (t + shift * h, f - 0.25 * (fm - fp) * shift)
}
