//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use cascade_transfer::optimizer::{
    optimize_profile, rates_functional, rates_gradient, sample_truncated_closed_form, verify_stationarity,
    OptimizerConfig, Parametrization,
};
use cascade_transfer::oracles;
use cascade_transfer::simulator::{
    commutator_check, curve_peak, fidelity_curve, integrate_transfer, integrate_transfer_lossy, IntegratorConfig,
};
use cascade_transfer::{CouplingProfile, ProfileKind, SystemParams, TimeGrid};
use rand::{rngs::StdRng, Rng, SeedableRng};

// Tolerances and budgets.
const C1_TOL: f64 = 1e-5;
const C1_STEPS: usize = 10_000;
const C1_RUNTIME: Duration = Duration::from_secs(1);

const C2_DT_CUT: f64 = 1e-4;
const C2_TOL: f64 = 1e-6;
const C2_STEPS: usize = 10_000;
const C2_RUNTIME: Duration = Duration::from_secs(5);

const C3_TOL: f64 = 1e-5;
const C3_DT_CUT: f64 = 1e-3;
const C3_STEPS: usize = 10_000;
const C3_RUNTIME: Duration = Duration::from_secs(60);

const C4_SLOPE_TOL: f64 = 0.05;
const C4_INTERCEPT_TOL: f64 = 0.10;

const C5_TOL: f64 = 1e-5;
const C5_DT_CUT: f64 = 1e-3;

const C6_TOL: f64 = 1e-6;
const C6_STEPS: usize = 2_000;

const C7_FUNCTIONAL_TOL: f64 = 1e-4;
const C7_POINTWISE_TOL: f64 = 0.02;
const C7_RESIDUAL_FACTOR: f64 = 10.0;
const C7_DT_CUT: f64 = 5e-3;
const C7_STEPS: usize = 600;
const C7_RUNTIME: Duration = Duration::from_secs(120);

const C8_TOL: f64 = 1e-6;
const C8_PROFILES: usize = 3;
const C8_COORDS: usize = 12;
// Relative central-difference step; smaller steps are limited by round-off.
const C8_STEP: f64 = 1e-4;

// Relative tolerance for "to round-off".
const C9_ULPS: f64 = 4.0 * f64::EPSILON;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn lossless(gamma: f64, t_end: f64) -> SystemParams {
    SystemParams::lossless(gamma, t_end)
}

fn constant_peak() -> Verdict {
    let start = Instant::now();
    let p = lossless(1.0, 2.0);
    let s = integrate_transfer(&CouplingProfile::constant(1.0), &p, &IntegratorConfig::rk4(C1_STEPS)).unwrap();
    let (t, f) = curve_peak(&fidelity_curve(&s));
    let elapsed = start.elapsed();
    let target = 2.0 / std::f64::consts::E;
    let pass = (t - 1.0).abs() <= C1_TOL && (f - target).abs() <= C1_TOL && elapsed < C1_RUNTIME;
    verdict(
        pass,
        format!(
            "peak F = {f:.10} at t = {t:.8} (2/e = {target:.10}); |dF| = {:.2e}, |dt| = {:.2e}; {elapsed:.2?}",
            (f - target).abs(),
            (t - 1.0).abs()
        ),
    )
}

fn optimal_transfer() -> Verdict {
    let start = Instant::now();
    let (g, t_end) = (1.0, 5.0);
    let p = lossless(g, t_end);
    let s = integrate_transfer(
        &CouplingProfile::optimal(C2_DT_CUT),
        &p,
        &IntegratorConfig::rk4(C2_STEPS),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let f = s.fidelity();
    let oracle = oracles::fidelity_optimal(g, t_end, t_end - C2_DT_CUT);
    let floor = 1.0 - 1e-4 - 1.1 * g * C2_DT_CUT;
    let pass = (f - oracle).abs() <= C2_TOL && f > floor && elapsed < C2_RUNTIME;
    verdict(
        pass,
        format!(
            "F = {f:.10} at t = {:.6}, oracle {oracle:.10}, |diff| = {:.2e}; floor {floor:.6}; {elapsed:.2?}",
            s.readout.t,
            (f - oracle).abs()
        ),
    )
}

fn fidelity_sweep() -> Verdict {
    let start = Instant::now();
    let g = 1.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = 0;
    for k in 0..12 {
        let t_end = 0.5 + 5.5 * k as f64 / 11.0;
        let p = lossless(g, t_end);
        let s = integrate_transfer(
            &CouplingProfile::optimal(C3_DT_CUT),
            &p,
            &IntegratorConfig::rk4(C3_STEPS),
        )
        .unwrap();
        let analytic = oracles::fidelity_optimal_final(g, t_end);
        let budget = oracles::truncation_drop(g, t_end, C3_DT_CUT);
        let excess = (s.fidelity() - analytic).abs() - budget;
        worst_excess = worst_excess.max(excess);
        if excess > C3_TOL {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures == 0 && elapsed < C3_RUNTIME,
        format!(
            "12 points, {failures} outside 1e-5 + budget; worst |diff| - budget = {worst_excess:.2e}; {elapsed:.2?}"
        ),
    )
}

/// Straight-line fit minimizing the relative residuals `(y - a x - b) / y`.
fn relative_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let w = 1.0 / (yi * yi);
        sw += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    (slope, intercept)
}

fn truncation_law() -> Verdict {
    let (g, t_end) = (1.0, 5.0);
    let p = lossless(g, t_end);
    let cuts = [1e-2, 1e-3, 1e-4];
    let infidelity: Vec<f64> = cuts
        .iter()
        .map(|&dt| {
            1.0 - integrate_transfer(&CouplingProfile::optimal(dt), &p, &IntegratorConfig::rk4(10_000))
                .unwrap()
                .fidelity()
        })
        .collect();
    let x: Vec<f64> = cuts.iter().map(|dt| g * dt).collect();
    let (slope, intercept) = relative_fit(&x, &infidelity);
    let expected = 0.5 * (-2.0 * g * t_end).exp();
    let rel = intercept / expected - 1.0;
    verdict(
        (slope - 1.0).abs() <= C4_SLOPE_TOL && rel.abs() <= C4_INTERCEPT_TOL,
        format!(
            "slope {slope:.4}, intercept {intercept:.4e} vs {expected:.4e} ({:+.1}%), relative-residual fit",
            100.0 * rel
        ),
    )
}

fn loss_factorization() -> Verdict {
    let (g, t_end) = (1.0, 5.0);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = 0;
    for eta in [1.0, 0.81, 0.64] {
        for loss in [0.0, 0.01 * g, 0.05 * g] {
            let p = lossless(g, t_end).with_losses(loss, eta);
            let s = integrate_transfer_lossy(&CouplingProfile::optimal(C5_DT_CUT), &p, &IntegratorConfig::rk4(10_000))
                .unwrap();
            let analytic = eta.sqrt() * (-loss * t_end).exp() * oracles::fidelity_optimal_final(g, t_end);
            let budget = eta.sqrt() * (-loss * t_end).exp() * oracles::truncation_drop(g, t_end, C5_DT_CUT);
            let excess = (s.fidelity() - analytic).abs() - budget;
            worst_excess = worst_excess.max(excess);
            if excess > C5_TOL {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0,
        format!("9 points, {failures} outside 1e-5 + budget; worst |diff| - budget = {worst_excess:.2e}"),
    )
}

fn commutators() -> Verdict {
    let cfg = IntegratorConfig::rk4(C6_STEPS).with_kernels();
    let p = lossless(1.0, 5.0);
    let constant = commutator_check(&integrate_transfer(&CouplingProfile::constant(1.0), &p, &cfg).unwrap())
        .unwrap()
        .max_abs();
    let optimal = commutator_check(&integrate_transfer(&CouplingProfile::optimal(1e-3), &p, &cfg).unwrap())
        .unwrap()
        .max_abs();
    verdict(
        constant <= C6_TOL && optimal <= C6_TOL,
        format!("max deficit {constant:.2e} (constant), {optimal:.2e} (optimal) at n = {C6_STEPS}"),
    )
}

fn optimizer_convergence() -> Verdict {
    let start = Instant::now();
    let (g, t_end) = (1.0, 3.0);
    let p = lossless(g, t_end);
    let grid = TimeGrid::new(t_end, C7_STEPS).unwrap();
    let cap = 0.5 / C7_DT_CUT;
    let closed = sample_truncated_closed_form(&p, &grid, C7_DT_CUT, cap);
    let closed_value = rates_functional(&closed, &grid, &p).unwrap();
    let t_max = t_end - 10.0 * C7_DT_CUT;
    let reference = verify_stationarity(
        &CouplingProfile::sampled(grid, closed.clone()).unwrap(),
        &p,
        &grid,
        t_max,
        f64::INFINITY,
    )
    .unwrap();

    let mut pass = true;
    let mut parts = Vec::new();
    for initial_rate in [1.0, 0.1] {
        let cfg = OptimizerConfig {
            dt_cut: C7_DT_CUT,
            initial_rate,
            parametrization: Parametrization::DirectGamma1,
            ..Default::default()
        };
        let run = optimize_profile(&p, &grid, &cfg).unwrap();
        let ProfileKind::SampledGrid { values, .. } = &run.profile.kind else {
            unreachable!()
        };
        let (mut worst, mut at) = (0.0f64, 0.0);
        for j in 0..grid.n_steps {
            if grid.point(j + 1) > t_max + 1e-12 {
                break;
            }
            let rel = (values[j] / closed[j] - 1.0).abs();
            if rel > worst {
                worst = rel;
                at = grid.point(j);
            }
        }
        let el = verify_stationarity(
            &run.profile,
            &p,
            &grid,
            t_max,
            C7_RESIDUAL_FACTOR * reference.max_residual,
        )
        .unwrap();
        let functional_ok = run.converged && run.functional >= closed_value - C7_FUNCTIONAL_TOL;
        let pointwise_ok = worst <= C7_POINTWISE_TOL;
        pass &= functional_ok && pointwise_ok && el.pass;
        parts.push(format!(
            "init {initial_rate}: F = {:.8} ({:+.2e} vs closed form, {} it) [{}], max rel err {:.2}% at t = {at:.3} [{}], EL {:.3} vs {:.3} [{}]",
            run.functional,
            run.functional - closed_value,
            run.iterations,
            if functional_ok { "ok" } else { "fail" },
            100.0 * worst,
            if pointwise_ok { "ok" } else { "fail" },
            el.max_residual,
            reference.max_residual,
            if el.pass { "ok" } else { "fail" },
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < C7_RUNTIME;
    verdict(pass, format!("{}; {elapsed:.2?}", parts.join("; ")))
}

fn gradient_check() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let p = lossless(1.0, 3.0);
    let grid = TimeGrid::new(3.0, 120).unwrap();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..C8_PROFILES {
        let rates: Vec<f64> = (0..grid.n_steps).map(|_| rng.gen_range(0.05..5.0)).collect();
        let grad = rates_gradient(&rates, &grid, &p).unwrap();
        for _ in 0..C8_COORDS {
            let j = rng.gen_range(0..grid.n_steps);
            let h = C8_STEP * rates[j];
            let mut up = rates.clone();
            let mut down = rates.clone();
            up[j] += h;
            down[j] -= h;
            let fd =
                (rates_functional(&up, &grid, &p).unwrap() - rates_functional(&down, &grid, &p).unwrap()) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / grad[j].abs());
            checked += 1;
        }
    }
    verdict(
        worst <= C8_TOL,
        format!("{checked} coordinates on {C8_PROFILES} profiles, worst relative error {worst:.2e}"),
    )
}

fn oracle_identities() -> Verdict {
    let mut worst = 0.0f64;
    let mut bitwise = true;
    for k in 0..=400 {
        // gamma T from 1e-3 to 20, log spaced
        let gt = 1e-3 * (2e4f64).powf(k as f64 / 400.0);
        for gamma in [0.1, 1.0, 7.0] {
            let t_end = gt / gamma;
            let exact = (-(-2.0 * gt).exp_m1()).sqrt();
            let f = oracles::fidelity_optimal(gamma, t_end, t_end);
            worst = worst.max((f / exact - 1.0).abs());
            let p = lossless(gamma, t_end);
            for t in [0.0, 0.3 * t_end, 0.9 * t_end, t_end] {
                let lossy = oracles::fidelity_lossy(&p, t).unwrap();
                bitwise &= lossy.to_bits() == oracles::fidelity_optimal(gamma, t_end, t).to_bits();
            }
        }
    }
    verdict(
        worst <= C9_ULPS && bitwise,
        format!("worst relative deviation {worst:.2e} (limit {C9_ULPS:.1e}); lossless reduction bitwise: {bitwise}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("constant-coupling peak", constant_peak),
        ("optimal-transfer fidelity", optimal_transfer),
        ("fidelity-vs-T sweep", fidelity_sweep),
        ("truncation law", truncation_law),
        ("loss factorization", loss_factorization),
        ("commutator preservation", commutators),
        ("optimizer convergence", optimizer_convergence),
        ("gradient correctness", gradient_check),
        ("oracle identities", oracle_identities),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} {} {name}: {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
