//! Named check suites behind `verify`: every analytic bound evaluated over
//! its parameter lattice, the budget identities, the grid LSB behavior, and
//! the spectral integrity checks. Used by the CLI and the acceptance tests.

use crate::gkpmath::{
    abs_gauss_sum_bound, discrete_gaussian_tail, gkp_shift_overlap, gkp_truncation_overlap,
    gkp_window_mass, jacobi_sum_bound, norm_const_gkp, periodic_gaussian_ratio,
    poisson_residual, psi_delta, truncated_gaussian_overlap, BoundReport,
};
use crate::gridsim::{lsb_circuit, u_anm, v_alpha, GridSpec, GridState, Profile};
use crate::numtheory::gcd;
use crate::peaksim::{apply_uanm_ideal, BMode, CircuitParams, ModeGauss, PeakState, PeakTerm};
use crate::pipeline::{desk_params, table_params, DeskProfile};
use crate::spectral::{build_model, gamma_mass, pdf_total_mass, theta_hat_abs};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
}

impl From<BoundReport> for CheckResult {
    fn from(r: BoundReport) -> Self {
        CheckResult {
            name: r.name,
            passed: r.satisfied,
            value: r.exact_value,
            bound: r.paper_bound,
            slack: r.slack,
        }
    }
}

fn check(name: impl Into<String>, passed: bool, value: f64, bound: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        value,
        bound,
        slack: if passed { (value - bound).abs() } else { value - bound },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
    /// Lattice points rejected by an op's stated preconditions.
    pub skipped: Vec<String>,
    pub passed: bool,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<CheckResult>, skipped: Vec<String>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        SuiteReport {
            suite: suite.into(),
            checks,
            skipped,
            passed,
        }
    }
}

fn lattice() -> Vec<f64> {
    (2..=12).map(|i| 2f64.powi(-i)).collect()
}

/// GKP state property bounds over the parameter lattice.
pub fn suite_gkp() -> SuiteReport {
    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    for &delta in &lattice() {
        let eps = delta.sqrt();
        match truncated_gaussian_overlap(delta, eps) {
            Ok(r) => checks.push(r.into()),
            Err(e) => skipped.push(format!("trunc_overlap(delta={delta}): {e}")),
        }
        for &kappa in &lattice() {
            let (_, c_sq, ratio) = norm_const_gkp(kappa, delta);
            checks.push(c_sq.into());
            checks.push(ratio.into());
            match gkp_truncation_overlap(kappa, delta, eps) {
                Ok(r) => checks.push(r.into()),
                Err(e) => skipped.push(format!(
                    "gkp_truncation_overlap(kappa={kappa}, delta={delta}): {e}"
                )),
            }
        }
    }
    for &kappa in &lattice() {
        for d in [0i64, 1, 2, 5, 10, 20] {
            let (linear, expo) = gkp_shift_overlap(kappa, d);
            checks.push(linear.into());
            checks.push(expo.into());
        }
        for r in [4.0, 5.5, 8.0, 10.0] {
            match gkp_window_mass(kappa, 0.1, r) {
                Ok(rep) => checks.push(rep.into()),
                Err(e) => skipped.push(format!("gkp_window_mass(kappa={kappa}, r={r}): {e}")),
            }
        }
    }
    SuiteReport::new("gkp", checks, skipped)
}

/// Combinatorial bounds: Poisson identity, discrete Gaussian tails, periodic
/// Gaussian ratio, the Jacobi triple-product bound, and the absolute
/// Gaussian sum.
pub fn suite_bounds() -> SuiteReport {
    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let res = poisson_residual(t);
        checks.push(check(format!("poisson_residual(t={t})"), res < 1e-10, res, 1e-10));
    }
    for s in [1.0, 3.0, 10.0] {
        for k in 1..=6 {
            let r = s * k as f64;
            match discrete_gaussian_tail(s, r) {
                Ok(rep) => checks.push(rep.into()),
                Err(e) => skipped.push(format!("tail(s={s}, r={r}): {e}")),
            }
        }
    }
    for s in [0.3, 0.5, 1.0, 2.0, 5.0, 10.0] {
        for t in [0.0, 0.25, 0.5, 1.5] {
            checks.push(periodic_gaussian_ratio(s, t).into());
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0x6a61636f6269);
    let mut jacobi_count = 0;
    while jacobi_count < 200 {
        let mag = std::f64::consts::SQRT_2 + 1.0 + rng.gen::<f64>() * 6.0;
        let mag = if rng.gen::<bool>() { mag } else { 1.0 / mag };
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let b = rng.gen::<f64>() * 0.3;
        match jacobi_sum_bound(Complex64::from_polar(mag, phase), b, 40) {
            Ok((rep, rel)) => {
                checks.push(rep.into());
                checks.push(check(
                    format!("jacobi_triple_product_identity(|xi|={mag:.4}, b={b:.4})"),
                    rel < 1e-10,
                    rel,
                    1e-10,
                ));
                jacobi_count += 1;
            }
            Err(e) => skipped.push(format!("jacobi(|xi|={mag}, b={b}): {e}")),
        }
    }
    for c in [std::f64::consts::PI / 32.0, 0.01, 0.15] {
        match abs_gauss_sum_bound(c) {
            Ok(rep) => checks.push(rep.into()),
            Err(e) => skipped.push(format!("abs_gauss_sum(c={c}): {e}")),
        }
    }
    SuiteReport::new("bounds", checks, skipped)
}

/// Error-calculus identities and the reference budget totals.
pub fn suite_approxcalc() -> SuiteReport {
    use crate::approxcalc::{delta_uanm, delta_vanm, stage_errors};
    let mut checks = Vec::new();
    for n in 4..=16u32 {
        let params = table_params(1u64 << (n - 1));
        let budget = stage_errors(&params, n);
        let want = 364.0 * 2f64.powi(-2 * n as i32);
        let rel = (budget.total - want).abs() / want;
        checks.push(check(
            format!("stage_errors total at table n={n}"),
            budget.table_certified && rel <= 1e-12,
            budget.total,
            want,
        ));
        for (j, (f, c)) in budget.formula.iter().zip(budget.eps.iter()).enumerate() {
            checks.push(check(
                format!("stage eps{} formula <= certified (n={n})", j + 1),
                f <= c,
                *f,
                *c,
            ));
        }
    }
    for (ea, ec, m) in [(1e-8, 1e-12, 8u32), (1e-5, 1e-10, 6), (1e-3, 1e-9, 10)] {
        let u = delta_uanm(ea, ec, m).unwrap();
        let v = delta_vanm(ea, ec, m).unwrap();
        checks.push(check(
            format!("delta_uanm = 2 delta_vanm (m={m})"),
            u == 2.0 * v,
            u,
            2.0 * v,
        ));
    }
    // monotonicity over an eps grid
    let grid = [1e-12, 1e-9, 1e-6, 1e-3, 1e-2];
    let mut mono = true;
    let mut prev = 0.0;
    for &e in &grid {
        let v = crate::approxcalc::delta_lsb(e).unwrap();
        mono &= v >= prev;
        prev = v;
    }
    checks.push(check("delta_lsb monotone", mono, prev, 0.0));
    SuiteReport::new("approxcalc", checks, Vec::new())
}

/// Result of one LSB displacement experiment on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsbExperiment {
    pub eps: f64,
    pub trace_distance: f64,
    pub bound: f64,
    pub max_pointwise_defect_error: f64,
    pub integer_fidelity: f64,
}

/// Run the LSB circuit on a narrow peak displaced by eps from the integer
/// x0, and compare against the rounded ideal action.
pub fn lsb_displacement_experiment(g: usize, eps: f64) -> Result<LsbExperiment, crate::gridsim::GridError> {
    let delta = 2e-5;
    let h = delta / 3.0;
    let x0 = 3.0f64;
    let center = x0 + eps;
    let spec = GridSpec::new(g, h, center - (g as f64) / 2.0 * h)?;
    let mut state = GridState::prepare(
        vec![spec],
        &[Profile::PositionPeak { center, delta }],
    )?;
    let input = state.clone();
    lsb_circuit(&mut state, 0)?;
    // rounded ideal: same CV profile, qubit holds round(x) mod 2
    let fid = state.fidelity_against(|pos, b| {
        let x = pos[0];
        let bit = (x.round() as i64).rem_euclid(2) as u8;
        if b == bit {
            Complex64::new(psi_delta(x - center, delta), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let trace = 2.0 * (1.0 - fid.min(1.0)).sqrt();
    // pointwise: |1 - <round(x)_0 | Omega(x)>| must equal |sin(pi dev / 2)|
    let mut max_err = 0.0f64;
    for i in 0..g {
        let x = spec.position(i);
        let psi0 = input.amps[i * 2];
        if psi0.norm_sqr() < 1e-12 {
            continue;
        }
        let bit = (x.round() as i64).rem_euclid(2) as usize;
        let omega_target = state.amps[i * 2 + bit] / psi0;
        let defect = (Complex64::new(1.0, 0.0) - omega_target).norm();
        let dev = x - x.round();
        let want = (std::f64::consts::PI * dev / 2.0).sin().abs();
        max_err = max_err.max((defect - want).abs());
    }
    // integer input: fidelity of the qubit with the exact LSB
    let spec_int = GridSpec::new(g, h, x0 - (g as f64) / 2.0 * h)?;
    let mut state_int = GridState::prepare(
        vec![spec_int],
        &[Profile::PositionPeak { center: x0, delta }],
    )?;
    lsb_circuit(&mut state_int, 0)?;
    let mut mass = [0.0f64; 2];
    for (i, a) in state_int.amps.iter().enumerate() {
        mass[i % 2] += a.norm_sqr();
    }
    let integer_fidelity = mass[1] / (mass[0] + mass[1]); // x0 = 3 is odd
    Ok(LsbExperiment {
        eps,
        trace_distance: trace,
        bound: 7.0 * eps.powf(0.25),
        max_pointwise_defect_error: max_err,
        integer_fidelity,
    })
}

/// LSB approximate-computation checks on the grid.
pub fn suite_lsb() -> SuiteReport {
    let mut checks = Vec::new();
    for eps in [0.02, 0.05, 0.1, 0.2] {
        match lsb_displacement_experiment(1024, eps) {
            Ok(exp) => {
                checks.push(check(
                    format!("lsb trace distance (eps={eps})"),
                    exp.trace_distance <= exp.bound,
                    exp.trace_distance,
                    exp.bound,
                ));
                checks.push(check(
                    format!("lsb pointwise defect matches |sin(pi dev/2)| (eps={eps})"),
                    exp.max_pointwise_defect_error <= 1e-6,
                    exp.max_pointwise_defect_error,
                    1e-6,
                ));
                checks.push(check(
                    format!("lsb integer fidelity (eps={eps})"),
                    exp.integer_fidelity >= 1.0 - 1e-9,
                    exp.integer_fidelity,
                    1.0 - 1e-9,
                ));
            }
            Err(e) => checks.push(check(format!("lsb experiment eps={eps}: {e}"), false, 0.0, 0.0)),
        }
    }
    SuiteReport::new("lsb", checks, Vec::new())
}

/// Spectral integrity at moderate parameters plus the suitability constant
/// at compliant desk parameters.
pub fn suite_spectral() -> SuiteReport {
    let mut checks = Vec::new();
    let moderate = CircuitParams::from_log2(8, -6.0, -6.0, -10.0, -10.0, -20.0);
    for a in [2u64, 7] {
        let model = build_model(&moderate, a, 15).expect("moderate model");
        let total = pdf_total_mass(&model);
        checks.push(check(
            format!("pdf total mass (a={a})"),
            (total - 1.0).abs() <= 1e-3,
            total,
            1.0,
        ));
        // comb-factor periodicity in 1/r
        let r = model.r as f64;
        let base = 0.25 / r + model.kappa_a / 4.0;
        let f0 = theta_hat_abs(&model, model.rem[1 % model.rem.len()], base).unwrap()
            / crate::gkpmath::psi_delta_hat(base, model.delta_a);
        let mut max_dev = 0.0f64;
        for shift in 1..=3 {
            let w = base + shift as f64 / r;
            let f1 = theta_hat_abs(&model, model.rem[1 % model.rem.len()], w).unwrap()
                / crate::gkpmath::psi_delta_hat(w, model.delta_a);
            max_dev = max_dev.max((f1 - f0).abs() / f0.abs().max(1e-300));
        }
        checks.push(check(
            format!("comb factor 1/r-periodic (a={a})"),
            max_dev <= 1e-10,
            max_dev,
            1e-10,
        ));
    }
    // theta_hat lower bound lemma on the desk-strict model
    let strict = desk_params(15, DeskProfile::Strict).expect("desk params");
    let model = build_model(&strict, 2, 15).expect("strict model");
    let mut worst: Option<(f64, f64, String)> = None;
    for ind in 0..model.r {
        let k = model.rem[ind as usize];
        for mm in (-3 * model.r as i64)..=(3 * model.r as i64) {
            for omega in [model.kappa_a / 4.0, model.kappa_a / 3.0, model.kappa_a / 2.0] {
                let w = omega + mm as f64 / model.r as f64;
                let got = theta_hat_abs(&model, k, w).unwrap();
                let bound = (-std::f64::consts::PI.powi(2) / 2.0).exp() / model.kappa_a.sqrt()
                    * model.c_phi
                    * crate::gkpmath::psi_delta_hat(w, model.delta_a)
                    / model.r as f64;
                let slack = got - bound;
                if worst.as_ref().map(|(s, _, _)| slack < *s).unwrap_or(true) {
                    worst = Some((slack, got, format!("k={k} m={mm} omega={omega:.2e}")));
                }
            }
        }
    }
    let (slack, got, at) = worst.unwrap();
    checks.push(check(
        format!("theta_hat lower bound (worst at {at})"),
        slack >= 0.0,
        got,
        got - slack,
    ));
    // suitability constant for every a in Z_15^*, every d
    let bound_const = (-std::f64::consts::PI.powi(2)).exp() / 64.0;
    for a in 1..15u64 {
        if gcd(a, 15) != 1 {
            continue;
        }
        let model = build_model(&strict, a, 15).expect("strict model");
        let r = model.r;
        for d in 0..r {
            let mass = gamma_mass(&model, d);
            let bound = bound_const / r as f64;
            checks.push(check(
                format!("gamma_mass(a={a}, d={d}) > e^-pi^2/64/r"),
                mass > bound,
                mass,
                bound,
            ));
        }
    }
    SuiteReport::new("spectral", checks, Vec::new())
}

/// Cross-simulator equivalence of U_{a,N,m} on integer-centered narrow
/// peaks: the dense grid against the ideal peak semantics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheck {
    pub a: u64,
    pub n_value: u64,
    pub m: u32,
    pub grid_points: usize,
    pub fidelity: f64,
}

pub fn uanm_cross_check(g: usize) -> Result<CrossCheck, crate::gridsim::GridError> {
    let (a, n, m) = (2u64, 3u64, 2u32);
    let h = 1.0 / 32.0;
    let delta = 1.0 / 256.0;
    let spec_a = GridSpec::new(g, h, -2.0)?;
    let spec_b = GridSpec::new(g, h, -4.0)?;
    let spec_c = GridSpec::new(g, h, -2.0)?;
    // equal superposition over x in {0..3} via a flat-envelope comb window
    let mut state = GridState::prepare(
        vec![spec_a, spec_b, spec_c],
        &[
            Profile::Comb {
                spacing: 1.0,
                kappa: 1e-4,
                delta,
                eps: 0.4,
                window: Some((1.5, 1.6)),
            },
            Profile::PositionPeak { center: 0.0, delta },
            Profile::PositionPeak { center: 0.0, delta },
        ],
    )?;
    u_anm(&mut state, a, n, m)?;
    // ideal peak semantics
    let ideal_in = PeakState {
        terms: (0..4)
            .map(|x| PeakTerm {
                amp: Complex64::new(0.5, 0.0),
                center_a: x as f64,
                center_b: 0.0,
                shift_b: 0,
                center_c: 0.0,
                qubit: 0,
            })
            .collect(),
        mode_a: ModeGauss { delta, eps: None },
        mode_b: ModeGauss { delta, eps: None },
        b_mode: BMode::Peak,
        mode_c: ModeGauss { delta, eps: None },
        label: "cross-check".into(),
        norm_tolerance: 1e-9,
    };
    let ideal_out = apply_uanm_ideal(&ideal_in, a, n, m)
        .expect("ideal action applies on integer centers");
    let fidelity = state.fidelity_against(|pos, b| {
        if b != 0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &ideal_out.terms {
            acc += t.amp
                * psi_delta(pos[0] - t.center_a, delta)
                * psi_delta(pos[1] - t.center_b, delta)
                * psi_delta(pos[2] - t.center_c, delta);
        }
        acc
    });
    Ok(CrossCheck {
        a,
        n_value: n,
        m,
        grid_points: g,
        fidelity,
    })
}

/// ctrlM_alpha grid experiment: identity on qubit 0, exact scaling on
/// qubit 1.
pub fn ctrlm_experiment(g: usize) -> Result<(f64, f64), crate::gridsim::GridError> {
    let h = 1.0 / 32.0;
    let delta = 1.0 / 256.0;
    let spec = GridSpec::new(g, h, -2.0)?;
    let mut off = GridState::prepare(
        vec![spec],
        &[Profile::PositionPeak { center: 2.0, delta }],
    )?;
    let before = off.clone();
    off.ctrl_scale(0, 2.0)?;
    let mut dev = 0.0f64;
    for (x, y) in off.amps.iter().zip(&before.amps) {
        dev = dev.max((x - y).norm());
    }
    let identity_dev = dev;
    let mut on = before.clone();
    on.qubit_x();
    on.ctrl_scale(0, 2.0)?;
    let fid = on.fidelity_against(|pos, b| {
        if b != 1 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(psi_delta(pos[0] - 4.0, delta), 0.0)
    });
    Ok((identity_dev, fid))
}

/// V_1 grid experiment on (x=1, y, z=0): expects x -> 0, z -> 1.
pub fn valpha_experiment(g: usize) -> Result<(f64, f64), crate::gridsim::GridError> {
    let h = 1.0 / 16.0;
    let delta = 1.0 / 128.0;
    let mk = |c: f64| GridSpec::new(g, h, c);
    let mut state = GridState::prepare(
        vec![mk(-2.0)?, mk(-2.0)?, mk(-2.0)?],
        &[
            Profile::PositionPeak { center: 1.0, delta },
            Profile::PositionPeak { center: 1.0, delta },
            Profile::PositionPeak { center: 0.0, delta },
        ],
    )?;
    v_alpha(&mut state, 1.0)?;
    Ok((state.mean_position(0), state.mean_position(2)))
}

/// All suites in order.
pub fn run_suite(name: &str) -> Option<Vec<SuiteReport>> {
    match name {
        "gkp" => Some(vec![suite_gkp()]),
        "bounds" => Some(vec![suite_bounds()]),
        "approxcalc" => Some(vec![suite_approxcalc()]),
        "lsb" => Some(vec![suite_lsb()]),
        "spectral" => Some(vec![suite_spectral()]),
        "all" => Some(vec![
            suite_gkp(),
            suite_bounds(),
            suite_approxcalc(),
            suite_lsb(),
            suite_spectral(),
        ]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gkp_suite_passes() {
        let r = suite_gkp();
        for c in r.checks.iter().filter(|c| !c.passed) {
            eprintln!("FAIL {}: value {} bound {}", c.name, c.value, c.bound);
        }
        assert!(r.passed);
        // the eps = 1/2 lattice edge is skipped by preconditions
        assert!(!r.skipped.is_empty());
    }

    #[test]
    fn bounds_suite_passes() {
        let r = suite_bounds();
        for c in r.checks.iter().filter(|c| !c.passed) {
            eprintln!("FAIL {}: value {} bound {}", c.name, c.value, c.bound);
        }
        assert!(r.passed);
    }

    #[test]
    fn approxcalc_suite_passes() {
        assert!(suite_approxcalc().passed);
    }

    #[test]
    fn lsb_suite_passes() {
        let r = suite_lsb();
        for c in r.checks.iter().filter(|c| !c.passed) {
            eprintln!("FAIL {}: value {} bound {}", c.name, c.value, c.bound);
        }
        assert!(r.passed);
    }

    #[test]
    fn valpha_experiment_maps_positions() {
        let (x, z) = valpha_experiment(64).unwrap();
        assert!((x - 0.0).abs() < 1e-6, "x = {x}");
        assert!((z - 1.0).abs() < 1e-6, "z = {z}");
    }

    #[test]
    fn ctrlm_experiment_values() {
        let (identity_dev, fid) = ctrlm_experiment(256).unwrap();
        assert!(identity_dev < 1e-8);
        assert!(fid > 1.0 - 1e-9, "fid = {fid}");
    }
}
