//! Closed-form Gaussian/GKP quantities and the combinatorial bounds they
//! satisfy.
//!
//! Conventions: peaks are spaced on the integers. `Psi_Delta` is the unit
//! peak of width `Delta`, `eta_kappa` the Gaussian envelope with inverse
//! width `kappa`. Sums over the integers are evaluated either directly
//! (Kahan-compensated, truncated at relative term size 1e-30 with a hard
//! floor radius) or through Poisson summation when the Gaussian is wide;
//! both branches agree to ~1e-14 at the crossover.

use crate::quad::Kahan;
use libm::erf;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUM_REL_CUTOFF: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum GkpError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
}

/// Direction of a paper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// exact_value >= paper_bound
    AtLeast,
    /// exact_value <= paper_bound
    AtMost,
}

/// An exactly computed quantity paired with the analytic bound it must obey.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub exact_value: f64,
    pub paper_bound: f64,
    pub kind: BoundKind,
    pub satisfied: bool,
    /// How much room is left: positive iff satisfied (up to fp noise).
    pub slack: f64,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, exact: f64, bound: f64, kind: BoundKind) -> Self {
        let (satisfied, slack) = match kind {
            BoundKind::AtLeast => (exact >= bound, exact - bound),
            BoundKind::AtMost => (exact <= bound, bound - exact),
        };
        BoundReport {
            name: name.into(),
            exact_value: exact,
            paper_bound: bound,
            kind,
            satisfied,
            slack,
        }
    }
}

/// Squeezing configuration of a single approximate GKP state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GkpParams {
    pub kappa: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl GkpParams {
    /// Default truncation epsilon = sqrt(delta), clamped into (0, 1/2).
    pub fn new(kappa: f64, delta: f64) -> Result<Self, GkpError> {
        if !(kappa > 0.0 && delta > 0.0) {
            return Err(GkpError::OutOfRange("kappa, delta must be positive".into()));
        }
        let epsilon = delta.sqrt();
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(GkpError::OutOfRange(format!(
                "epsilon = sqrt(delta) = {epsilon} outside (0, 1/2)"
            )));
        }
        Ok(GkpParams { kappa, delta, epsilon })
    }
}

/// Position-space unit peak of width `delta`.
pub fn psi_delta(x: f64, delta: f64) -> f64 {
    (std::f64::consts::PI * delta * delta).powf(-0.25) * (-x * x / (2.0 * delta * delta)).exp()
}

/// Gaussian envelope weight at integer z.
pub fn eta_kappa(z: f64, kappa: f64) -> f64 {
    kappa.sqrt() * std::f64::consts::PI.powf(-0.25) * (-kappa * kappa * z * z / 2.0).exp()
}

/// Fourier transform of `eta_kappa` under the e^{2 pi i x w} convention.
pub fn eta_kappa_hat(w: f64, kappa: f64) -> f64 {
    let pi = std::f64::consts::PI;
    2f64.sqrt() * pi.powf(0.25) / kappa.sqrt() * (-2.0 * pi * pi * w * w / (kappa * kappa)).exp()
}

/// Fourier transform of `psi_delta` under the e^{2 pi i x w} convention.
pub fn psi_delta_hat(w: f64, delta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    2f64.sqrt() * pi.powf(0.25) * delta.sqrt() * (-2.0 * pi * pi * w * w * delta * delta).exp()
}

// ---------------------------------------------------------------------------
// Sums over the integers
// ---------------------------------------------------------------------------

/// Direct evaluation of sum_z exp(-c (z - t)^2) with symmetric truncation.
pub fn theta_sum_direct(c: f64, t: f64) -> f64 {
    assert!(c > 0.0);
    let center = t.round() as i64;
    let floor_radius = (10.0 / c.sqrt()).ceil() as i64 + 1;
    let hard_cap = (760.0 / c).sqrt().ceil() as i64 + 2;
    let mut acc = Kahan::default();
    let term = |z: i64| {
        let u = z as f64 - t;
        (-c * u * u).exp()
    };
    acc.add(term(center));
    let mut radius = 1i64;
    loop {
        let contrib = term(center - radius) + term(center + radius);
        acc.add(contrib);
        let done_small = contrib < SUM_REL_CUTOFF * acc.value() && radius >= floor_radius;
        if done_small || radius >= hard_cap {
            break;
        }
        radius += 1;
    }
    acc.value()
}

/// sum_z exp(-c (z - t)^2), using Poisson summation when the Gaussian is
/// wide (c small): sqrt(pi/c) * (1 + 2 sum_k e^{-pi^2 k^2 / c} cos(2 pi k t)).
pub fn theta_sum_shifted(c: f64, t: f64) -> f64 {
    assert!(c > 0.0);
    if c >= 0.5 {
        return theta_sum_direct(c, t);
    }
    let pi = std::f64::consts::PI;
    let mut acc = Kahan::default();
    acc.add(1.0);
    let mut k = 1.0f64;
    loop {
        let damp = (-pi * pi * k * k / c).exp();
        if damp < SUM_REL_CUTOFF {
            break;
        }
        acc.add(2.0 * damp * (2.0 * pi * k * t).cos());
        k += 1.0;
    }
    (pi / c).sqrt() * acc.value()
}

/// sum_z exp(-c z^2).
pub fn theta_sum(c: f64) -> f64 {
    theta_sum_shifted(c, 0.0)
}

/// sum over |z| <= radius of exp(-c z^2).
pub fn theta_sum_window(c: f64, radius: i64) -> f64 {
    let mut acc = Kahan::default();
    acc.add(1.0);
    for z in 1..=radius {
        let v = (-c * (z as f64) * (z as f64)).exp();
        acc.add(2.0 * v);
    }
    acc.value()
}

/// sum_z eta(z) eta(z - d) for the envelope with inverse width kappa.
/// Equal to (kappa/sqrt(pi)) e^{-kappa^2 d^2 / 4} sum_z e^{-kappa^2 (z-d/2)^2}.
pub fn envelope_pair_sum(kappa: f64, d: f64) -> f64 {
    let quarter = kappa * kappa * d * d / 4.0;
    if quarter > 745.0 {
        return 0.0;
    }
    kappa / std::f64::consts::PI.sqrt()
        * (-quarter).exp()
        * theta_sum_shifted(kappa * kappa, d / 2.0)
}

/// sum_z eta(z)^2 = C_kappa^{-2}.
pub fn envelope_square_sum(kappa: f64) -> f64 {
    kappa / std::f64::consts::PI.sqrt() * theta_sum(kappa * kappa)
}

// ---------------------------------------------------------------------------
// Peak overlaps
// ---------------------------------------------------------------------------

/// <chi_Delta(y), chi_Delta(z)> = exp(-(y-z)^2 / (4 Delta^2)); values below
/// the underflow range clamp to zero by contract.
pub fn peak_overlap(y: f64, z: f64, delta: f64) -> f64 {
    let d = y - z;
    let arg = d * d / (4.0 * delta * delta);
    if arg > 745.0 {
        0.0
    } else {
        (-arg).exp()
    }
}

/// |<Psi_Delta, Psi_Delta^eps>|^2 = erf(eps/Delta), reported against the
/// analytic bound 1 - 2 Delta (valid for eps >= sqrt(Delta)).
pub fn truncated_gaussian_overlap(delta: f64, epsilon: f64) -> Result<BoundReport, GkpError> {
    if !(delta > 0.0) || !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(GkpError::OutOfRange(format!(
            "need delta > 0 and 0 < epsilon < 1/2, got delta={delta} eps={epsilon}"
        )));
    }
    let exact = erf(epsilon / delta);
    Ok(BoundReport::new(
        format!("trunc_gaussian_overlap(delta={delta}, eps={epsilon})"),
        exact,
        1.0 - 2.0 * delta,
        BoundKind::AtLeast,
    ))
}

/// Overlap of two truncated unit peaks (same Delta, eps) at centers c1, c2.
pub fn truncated_pair_overlap(c1: f64, c2: f64, delta: f64, epsilon: f64) -> f64 {
    let lo = (c1 - epsilon).max(c2 - epsilon);
    let hi = (c1 + epsilon).min(c2 + epsilon);
    if hi <= lo {
        return 0.0;
    }
    let mu = 0.5 * (c1 + c2);
    let gauss = peak_overlap(c1, c2, delta);
    let window = 0.5 * (erf((hi - mu) / delta) - erf((lo - mu) / delta));
    gauss * window / erf(epsilon / delta)
}

/// Overlap of an untruncated peak at c1 with a truncated peak at c2.
pub fn mixed_pair_overlap(c1: f64, c2: f64, delta: f64, epsilon: f64) -> f64 {
    let lo = c2 - epsilon;
    let hi = c2 + epsilon;
    let mu = 0.5 * (c1 + c2);
    let gauss = peak_overlap(c1, c2, delta);
    let window = 0.5 * (erf((hi - mu) / delta) - erf((lo - mu) / delta));
    gauss * window / erf(epsilon / delta).sqrt()
}

// ---------------------------------------------------------------------------
// GKP normalization constants and overlaps
// ---------------------------------------------------------------------------

/// C_{kappa,Delta}^{-2} = sum_{y,z} eta(y) eta(z) <chi(y), chi(z)>.
pub fn norm_const_sq_inv(kappa: f64, delta: f64) -> f64 {
    let mut acc = Kahan::default();
    acc.add(envelope_pair_sum(kappa, 0.0));
    let mut d = 1i64;
    loop {
        let gauss = peak_overlap(0.0, d as f64, delta);
        if gauss == 0.0 {
            break;
        }
        let contrib = 2.0 * gauss * envelope_pair_sum(kappa, d as f64);
        acc.add(contrib);
        if contrib < SUM_REL_CUTOFF * acc.value() {
            break;
        }
        d += 1;
    }
    acc.value()
}

/// Report pair for the normalization constant: C^2 >= 1/4 (kappa, Delta < 1/8)
/// and C^2_{kappa,Delta} / C^2_kappa >= 1 - 7 Delta (kappa, Delta < 1/4).
pub fn norm_const_gkp(kappa: f64, delta: f64) -> (f64, BoundReport, BoundReport) {
    let c_sq = 1.0 / norm_const_sq_inv(kappa, delta);
    let c_kappa_sq = 1.0 / envelope_square_sum(kappa);
    let ratio = c_sq / c_kappa_sq;
    let r1 = BoundReport::new(
        format!("norm_const C^2 (kappa={kappa}, delta={delta})"),
        c_sq,
        0.25,
        BoundKind::AtLeast,
    );
    let r2 = BoundReport::new(
        format!("norm_const ratio (kappa={kappa}, delta={delta})"),
        ratio,
        1.0 - 7.0 * delta,
        BoundKind::AtLeast,
    );
    (c_sq.sqrt(), r1, r2)
}

/// |<GKP_{kappa,Delta}, GKP^eps_{kappa,Delta}>|^2 against 1 - 9 Delta.
///
/// The double sum collapses to a short sum over center differences d with
/// per-pair closed forms; cross terms (all nonnegative) are included.
pub fn gkp_truncation_overlap(
    kappa: f64,
    delta: f64,
    epsilon: f64,
) -> Result<BoundReport, GkpError> {
    if !(kappa > 0.0 && kappa < 0.25) {
        return Err(GkpError::OutOfRange(format!("kappa={kappa} outside (0, 1/4)")));
    }
    if !(epsilon >= delta.sqrt() && epsilon < 0.5) {
        return Err(GkpError::OutOfRange(format!(
            "epsilon={epsilon} outside [sqrt(delta), 1/2)"
        )));
    }
    let c_kd = 1.0 / norm_const_sq_inv(kappa, delta).sqrt();
    let c_k = 1.0 / envelope_square_sum(kappa).sqrt();
    // sum over d of <chi(d), chi^eps(0)> * (envelope pair sum at shift d)
    let mut acc = Kahan::default();
    acc.add(mixed_pair_overlap(0.0, 0.0, delta, epsilon) * envelope_pair_sum(kappa, 0.0));
    let mut d = 1i64;
    loop {
        let pair = mixed_pair_overlap(d as f64, 0.0, delta, epsilon);
        if pair == 0.0 {
            break;
        }
        let contrib = 2.0 * pair * envelope_pair_sum(kappa, d as f64);
        acc.add(contrib);
        if contrib < SUM_REL_CUTOFF * acc.value() {
            break;
        }
        d += 1;
    }
    let overlap = c_kd * c_k * acc.value();
    Ok(BoundReport::new(
        format!("gkp_truncation_overlap(kappa={kappa}, delta={delta}, eps={epsilon})"),
        overlap * overlap,
        1.0 - 9.0 * delta,
        BoundKind::AtLeast,
    ))
}

/// Exact shift overlap sum_z eta(z) eta(z-d) / sum_z eta(z)^2 against both
/// 1 - kappa^2 d^2 / 2 and e^{-kappa^2 d^2 / 2}.
pub fn gkp_shift_overlap(kappa: f64, d: i64) -> (BoundReport, BoundReport) {
    let exact = envelope_pair_sum(kappa, d as f64) / envelope_square_sum(kappa);
    let kd2 = kappa * kappa * (d * d) as f64;
    let linear = BoundReport::new(
        format!("gkp_shift_overlap linear (kappa={kappa}, d={d})"),
        exact,
        1.0 - kd2 / 2.0,
        BoundKind::AtLeast,
    );
    let expo = BoundReport::new(
        format!("gkp_shift_overlap exp (kappa={kappa}, d={d})"),
        exact,
        if kd2 / 2.0 > 745.0 { 0.0 } else { (-kd2 / 2.0).exp() },
        BoundKind::AtLeast,
    );
    (linear, expo)
}

/// ||Pi_[-r,r] GKP^eps||^2 computed with the window |z| <= floor(r) - 1
/// (the window the proof uses), against 1 - 2 e^{-(kappa r)^2}.
pub fn gkp_window_mass(kappa: f64, epsilon: f64, r: f64) -> Result<BoundReport, GkpError> {
    if r < 4.0 {
        return Err(GkpError::OutOfRange(format!("r={r} must be >= 4")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(GkpError::OutOfRange(format!("epsilon={epsilon} outside (0,1/2)")));
    }
    let t = r.floor() as i64 - 1;
    let exact = theta_sum_window(kappa * kappa, t) / theta_sum(kappa * kappa);
    let arg = (kappa * r) * (kappa * r);
    let bound = 1.0 - 2.0 * if arg > 745.0 { 0.0 } else { (-arg).exp() };
    Ok(BoundReport::new(
        format!("gkp_window_mass(kappa={kappa}, eps={epsilon}, r={r})"),
        exact,
        bound,
        BoundKind::AtLeast,
    ))
}

/// Displaced truncated GKP states are exactly orthogonal iff the distance
/// of the displacement to the integers exceeds 2 epsilon.
pub fn displaced_gkp_orthogonal(epsilon: f64, d: f64) -> bool {
    let dist = (d - d.round()).abs();
    dist > 2.0 * epsilon
}

// ---------------------------------------------------------------------------
// Combinatorial bounds
// ---------------------------------------------------------------------------

/// |rho_t(Z) - t rho_{1/t}(Z)| with both sides evaluated by direct summation
/// (the Poisson identity says this is exactly zero).
pub fn poisson_residual(t: f64) -> f64 {
    assert!(t > 0.0);
    let pi = std::f64::consts::PI;
    let lhs = theta_sum_direct(pi / (t * t), 0.0);
    let rhs = t * theta_sum_direct(pi * t * t, 0.0);
    (lhs - rhs).abs()
}

/// Exact Pr[|X_s| >= r] for the discrete Gaussian on Z, against the
/// concentration bound 2 e^{-(3 pi / 4)(r/s)^2}.
pub fn discrete_gaussian_tail(s: f64, r: f64) -> Result<BoundReport, GkpError> {
    if !(s > 0.0 && r >= 0.0) {
        return Err(GkpError::OutOfRange(format!("need s > 0, r >= 0; got s={s} r={r}")));
    }
    let c = std::f64::consts::PI / (s * s);
    let total = theta_sum(c);
    let z0 = r.ceil().max(0.0) as i64;
    let exact = if z0 == 0 {
        1.0
    } else {
        let mut acc = Kahan::default();
        let mut z = z0;
        loop {
            let term = (-c * (z * z) as f64).exp();
            acc.add(2.0 * term);
            if term < SUM_REL_CUTOFF * acc.value().max(f64::MIN_POSITIVE) && z > z0 + 10 {
                break;
            }
            if ((z * z) as f64) * c > 745.0 {
                break;
            }
            z += 1;
        }
        acc.value() / total
    };
    let bound = 2.0 * (-(3.0 * std::f64::consts::PI / 4.0) * (r / s) * (r / s)).exp();
    Ok(BoundReport::new(
        format!("discrete_gaussian_tail(s={s}, r={r})"),
        exact,
        bound,
        BoundKind::AtMost,
    ))
}

/// f_s(t) / f_s(0) against e^{-pi t^2 / s^2} for the periodic Gaussian.
pub fn periodic_gaussian_ratio(s: f64, t: f64) -> BoundReport {
    assert!(s > 0.0);
    let pi = std::f64::consts::PI;
    let c = pi / (s * s);
    let exact = theta_sum_shifted(c, t) / theta_sum(c);
    BoundReport::new(
        format!("periodic_gaussian_ratio(s={s}, t={t})"),
        exact,
        (-pi * t * t / (s * s)).exp(),
        BoundKind::AtLeast,
    )
}

/// Result of the Jacobi triple-product check: the bound report for
/// |sum_k xi^k b^{k^2}| >= 1 - 2 b max(|xi|, |xi|^-1), plus the relative
/// error between the sum and the truncated triple product.
pub fn jacobi_sum_bound(
    xi: Complex64,
    b: f64,
    k_max: u32,
) -> Result<(BoundReport, f64), GkpError> {
    let norm = xi.norm();
    if norm == 0.0 {
        return Err(GkpError::OutOfRange("xi must be nonzero".into()));
    }
    if !(0.0..1.0).contains(&b) {
        return Err(GkpError::OutOfRange(format!("b={b} outside [0,1)")));
    }
    let big = norm.max(1.0 / norm);
    if big < std::f64::consts::SQRT_2 + 1.0 {
        return Err(GkpError::OutOfRange(format!(
            "max(|xi|,1/|xi|)={big} below sqrt(2)+1"
        )));
    }
    if b > 0.0 && (k_max * k_max) as f64 * b.ln() > SUM_REL_CUTOFF.ln() {
        return Err(GkpError::OutOfRange(format!(
            "K={k_max} too small: b^(K^2) not below 1e-30"
        )));
    }
    // direct sum over |k| <= K, built iteratively
    let mut sum = Complex64::new(1.0, 0.0);
    let mut pos = Complex64::new(1.0, 0.0);
    let mut neg = Complex64::new(1.0, 0.0);
    let xi_inv = 1.0 / xi;
    for k in 1..=k_max as i64 {
        let bpow = b.powi(2 * k as i32 - 1);
        pos *= xi * bpow;
        neg *= xi_inv * bpow;
        sum += pos + neg;
    }
    // truncated triple product for the identity check
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 1..=k_max as i64 {
        let b2k = b.powi(2 * k as i32);
        let b2k1 = b.powi(2 * k as i32 - 1);
        prod *= (1.0 - b2k) * (1.0 + xi * b2k1) * (1.0 + xi_inv * b2k1);
    }
    let rel_err = (sum - prod).norm() / sum.norm().max(f64::MIN_POSITIVE);
    let report = BoundReport::new(
        format!("jacobi_sum_bound(|xi|={norm:.6}, b={b})"),
        sum.norm(),
        1.0 - 2.0 * b * big,
        BoundKind::AtLeast,
    );
    Ok((report, rel_err))
}

/// sum_z e^{-c (|z|+1)^2} against sqrt(pi) / (4 sqrt(c)) for c in (0, pi/16).
pub fn abs_gauss_sum_bound(c: f64) -> Result<BoundReport, GkpError> {
    if !(c > 0.0 && c < std::f64::consts::PI / 16.0) {
        return Err(GkpError::OutOfRange(format!("c={c} outside (0, pi/16)")));
    }
    let mut acc = Kahan::default();
    acc.add((-c).exp()); // z = 0
    let mut z = 1i64;
    loop {
        let u = (z + 1) as f64;
        let term = (-c * u * u).exp();
        acc.add(2.0 * term);
        if term < SUM_REL_CUTOFF * acc.value() {
            break;
        }
        z += 1;
    }
    Ok(BoundReport::new(
        format!("abs_gauss_sum_bound(c={c})"),
        acc.value(),
        std::f64::consts::PI.sqrt() / (4.0 * c.sqrt()),
        BoundKind::AtLeast,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn psi_delta_values() {
        assert!((psi_delta(0.0, 1.0) - PI.powf(-0.25)).abs() < 1e-15);
        assert!((psi_delta(1.0, 1.0) - PI.powf(-0.25) * (-0.5f64).exp()).abs() < 1e-15);
        // unit normalization by quadrature
        for delta in [0.3, 1.0, 2.5] {
            let f = move |x: f64| psi_delta(x, delta).powi(2);
            let norm = adaptive_simpson(&f, -20.0 * delta, 20.0 * delta, 1e-12);
            assert!((norm - 1.0).abs() < 1e-9, "delta={delta} norm={norm}");
        }
    }

    #[test]
    fn eta_kappa_values() {
        let k = 0.7;
        assert!((eta_kappa(0.0, k) - k.sqrt() * PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(eta_kappa(2.0, k), eta_kappa(-2.0, k));
        assert!((eta_kappa(1.0, 1.0) - PI.powf(-0.25) * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fourier_transforms_match_quadrature() {
        // hat(f)(w) = int f(x) e^{2 pi i x w} dx; integrand is even here
        for (w, kappa) in [(0.1, 0.8), (0.4, 1.3)] {
            let f = move |x: f64| eta_kappa(x, kappa) * (2.0 * PI * x * w).cos();
            let got = adaptive_simpson(&f, -30.0, 30.0, 1e-13);
            assert!((got - eta_kappa_hat(w, kappa)).abs() < 1e-9);
        }
        for (w, delta) in [(0.3, 0.5), (1.1, 1.0)] {
            let f = move |x: f64| psi_delta(x, delta) * (2.0 * PI * x * w).cos();
            let got = adaptive_simpson(&f, -30.0, 30.0, 1e-13);
            assert!((got - psi_delta_hat(w, delta)).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_sum_branches_agree() {
        for t in [0.0, 0.3, 0.5] {
            for c in [0.45, 0.5, 0.55, 0.8] {
                let direct = theta_sum_direct(c, t);
                let poisson = {
                    let mut acc = Kahan::default();
                    acc.add(1.0);
                    let mut k = 1.0;
                    while (-PI * PI * k * k / c).exp() >= SUM_REL_CUTOFF {
                        acc.add(2.0 * (-PI * PI * k * k / c).exp() * (2.0 * PI * k * t).cos());
                        k += 1.0;
                    }
                    (PI / c).sqrt() * acc.value()
                };
                assert!(
                    (direct - poisson).abs() <= 1e-13 * direct.abs().max(1.0),
                    "c={c} t={t}: {direct} vs {poisson}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn theta_sum_truncation_stable(cexp in -8.0..2.0f64, t in -0.5..0.5f64) {
            // doubling the truncation radius changes the direct sum by < 1e-12
            let c = 2f64.powf(cexp);
            if c >= 0.5 {
                let base = theta_sum_direct(c, t);
                let radius = 2 * ((760.0 / c).sqrt().ceil() as i64 + 2);
                let mut acc = Kahan::default();
                for z in -radius..=radius {
                    acc.add((-c * (z as f64 - t) * (z as f64 - t)).exp());
                }
                prop_assert!((base - acc.value()).abs() < 1e-12 * acc.value().max(1.0));
            } else {
                // Poisson branch vs direct with generous radius
                let wide = theta_sum_shifted(c, t);
                let direct = theta_sum_direct(c, t);
                prop_assert!((wide - direct).abs() < 1e-11 * wide.abs().max(1.0));
            }
        }
    }

    #[test]
    fn peak_overlap_against_quadrature() {
        for (y, z, delta) in [(0.0, 1.0, 0.5), (0.3, -0.4, 0.8), (0.0, 0.0, 0.2)] {
            let f = move |x: f64| psi_delta(x - y, delta) * psi_delta(x - z, delta);
            let lo = y.min(z) - 20.0 * delta;
            let hi = y.max(z) + 20.0 * delta;
            let got = adaptive_simpson(&f, lo, hi, 1e-13);
            let want = peak_overlap(y, z, delta);
            assert!(
                (got - want).abs() < 1e-8 * want.max(1e-8),
                "y={y} z={z}: {got} vs {want}"
            );
        }
        assert!((peak_overlap(0.0, 1.0, 0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(peak_overlap(0.0, 10.0, 0.1), 0.0); // underflow clamps to 0
    }

    proptest! {
        #[test]
        fn peak_overlap_symmetric_unit(y in -3.0..3.0f64, z in -3.0..3.0f64, d in 0.05..2.0f64) {
            let a = peak_overlap(y, z, d);
            prop_assert!((a - peak_overlap(z, y, d)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn truncated_overlap_examples() {
        let r = truncated_gaussian_overlap(0.01, 0.1).unwrap();
        assert!(r.exact_value >= 0.98 && r.satisfied);
        let r = truncated_gaussian_overlap(0.04, 0.2).unwrap();
        assert!(r.exact_value >= 1.0 - 0.08 && r.satisfied);
        // against quadrature of the truncated inner product
        for (delta, eps) in [(0.04, 0.2), (0.09, 0.3)] {
            let norm = erf(eps / delta).sqrt();
            let f = move |x: f64| psi_delta(x, delta) * psi_delta(x, delta) / norm;
            let got = adaptive_simpson(&f, -eps, eps, 1e-13);
            let want = truncated_gaussian_overlap(delta, eps).unwrap().exact_value;
            assert!((got * got - want).abs() < 1e-8);
        }
        // eps/delta -> infinity means no truncation
        let r = truncated_gaussian_overlap(1e-4, 0.45).unwrap();
        assert!((r.exact_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_pair_overlap_against_quadrature() {
        let (delta, eps) = (0.3, 0.4);
        for d in [0.0, 0.3, 0.7] {
            let norm = erf(eps / delta);
            let f = move |x: f64| {
                let in1 = (x).abs() <= eps;
                let in2 = (x - d).abs() <= eps;
                if in1 && in2 {
                    psi_delta(x, delta) * psi_delta(x - d, delta) / norm
                } else {
                    0.0
                }
            };
            let got = adaptive_simpson(&f, -eps, d + eps, 1e-13);
            let want = truncated_pair_overlap(0.0, d, delta, eps);
            assert!((got - want).abs() < 1e-8, "d={d}: {got} vs {want}");
        }
        // distinct integer centers with eps < 1/2 are exactly orthogonal
        assert_eq!(truncated_pair_overlap(0.0, 1.0, 0.1, 0.3), 0.0);
    }

    #[test]
    fn norm_const_examples() {
        let (_, r1, _) = norm_const_gkp(0.1, 0.1);
        assert!(r1.satisfied, "C^2 = {} < 1/4", r1.exact_value);
        let (_, _, r2) = norm_const_gkp(0.05, 0.02);
        assert!(r2.satisfied && r2.exact_value >= 1.0 - 0.14);
        // delta -> 0: cross terms vanish, ratio -> 1
        let (_, _, r3) = norm_const_gkp(0.1, 1e-6);
        assert!((r3.exact_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gkp_truncation_overlap_examples() {
        let r = gkp_truncation_overlap(0.1, 0.01, 0.1).unwrap();
        assert!(r.exact_value >= 0.91 && r.satisfied);
        let r = gkp_truncation_overlap(0.2, 0.04, 0.2).unwrap();
        assert!(r.exact_value >= 0.64 && r.satisfied);
        // delta -> 0 drives the overlap to 1
        let r = gkp_truncation_overlap(0.1, 1e-8, 1e-4).unwrap();
        assert!((r.exact_value - 1.0).abs() < 1e-6);
        assert!(gkp_truncation_overlap(0.1, 0.01, 0.6).is_err());
    }

    #[test]
    fn gkp_shift_overlap_examples() {
        let (lin, _) = gkp_shift_overlap(0.01, 10);
        assert!(lin.satisfied && lin.exact_value >= 1.0 - 0.005);
        let (_, expo) = gkp_shift_overlap(0.1, 5);
        assert!(expo.satisfied && expo.exact_value >= (-0.125f64).exp());
        let (lin, _) = gkp_shift_overlap(0.3, 0);
        assert!((lin.exact_value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gkp_window_mass_examples() {
        let r = gkp_window_mass(0.5, 0.1, 10.0).unwrap();
        assert!(r.satisfied && r.exact_value >= 1.0 - 2.0 * (-25.0f64).exp());
        let r = gkp_window_mass(1.0, 0.1, 4.0).unwrap();
        assert!(r.satisfied && r.exact_value >= 1.0 - 2.0 * (-16.0f64).exp());
        assert!(gkp_window_mass(1.0, 0.1, 3.0).is_err());
        // r -> infinity captures all mass
        let r = gkp_window_mass(0.5, 0.1, 200.0).unwrap();
        assert!((r.exact_value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn displaced_orthogonality() {
        assert!(!displaced_gkp_orthogonal(0.1, 3.0));
        assert!(displaced_gkp_orthogonal(0.1, 0.5));
        assert!(!displaced_gkp_orthogonal(0.3, 0.5));
    }

    #[test]
    fn poisson_residual_examples() {
        assert_eq!(poisson_residual(1.0), 0.0);
        assert!(poisson_residual(2.0) < 1e-10);
        assert!(poisson_residual(0.5) < 1e-10);
    }

    #[test]
    fn discrete_gaussian_tail_examples() {
        let r = discrete_gaussian_tail(1.0, 0.0).unwrap();
        assert!(r.exact_value <= 2.0 && r.satisfied);
        let r = discrete_gaussian_tail(1.0, 3.0).unwrap();
        // direct-sum oracle
        let total = theta_sum(PI);
        let mut tail = 0.0;
        for z in 3..40i64 {
            tail += 2.0 * (-PI * (z * z) as f64).exp();
        }
        assert!((r.exact_value - tail / total).abs() < 1e-15 * 10.0);
        assert!(r.satisfied);
        let r2 = discrete_gaussian_tail(10.0, 30.0).unwrap();
        assert!(r2.satisfied);
        assert!((r2.paper_bound - 2.0 * (-27.0 * PI / 4.0).exp()).abs() < 1e-18);
    }

    #[test]
    fn periodic_ratio_examples() {
        let r = periodic_gaussian_ratio(1.0, 0.0);
        assert!(r.exact_value >= 1.0 - 1e-15);
        assert!(periodic_gaussian_ratio(1.0, 0.5).satisfied);
        assert!(periodic_gaussian_ratio(2.0, 1.0).satisfied);
    }

    #[test]
    fn jacobi_examples() {
        let (r, rel) = jacobi_sum_bound(Complex64::new(3.0, 0.0), 0.1, 40).unwrap();
        assert!(r.satisfied && r.exact_value >= 1.0 - 0.6);
        assert!(rel < 1e-10);
        // b = 0: only k = 0 survives
        let (r, _) = jacobi_sum_bound(Complex64::new(4.0, 1.0), 0.0, 40).unwrap();
        assert!((r.exact_value - 1.0).abs() < 1e-15);
        // brute-force check of the derived example |xi| = 5
        let xi = Complex64::from_polar(5.0, 0.7);
        let (r, rel) = jacobi_sum_bound(xi, 0.05, 40).unwrap();
        assert!(r.exact_value >= 0.5 && rel < 1e-10);
        assert!(jacobi_sum_bound(Complex64::new(1.2, 0.0), 0.1, 40).is_err());
    }

    #[test]
    fn abs_gauss_sum_examples() {
        let r = abs_gauss_sum_bound(PI / 32.0).unwrap();
        assert!(r.satisfied && r.paper_bound - 2f64.sqrt() < 1e-12);
        assert!(abs_gauss_sum_bound(0.01).unwrap().satisfied);
        assert!(abs_gauss_sum_bound(0.15).unwrap().satisfied);
        assert!(abs_gauss_sum_bound(PI / 16.0 * 0.999).unwrap().satisfied);
        assert!(abs_gauss_sum_bound(PI / 16.0).is_err());
    }

    #[test]
    fn gkp_params_defaults() {
        let p = GkpParams::new(0.1, 0.04).unwrap();
        assert!((p.epsilon - 0.2).abs() < 1e-15);
        assert!(GkpParams::new(0.1, 0.25).is_err()); // eps = 1/2 not allowed
    }
}
