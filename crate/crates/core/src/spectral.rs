//! Analytic output distribution of the homodyne measurement on the circuit
//! output state: the mode-A momentum density decomposes over the subgroup
//! generated by `a`, with each component given in closed form by a
//! Poisson-dual sum of envelope Gaussians of width ~kappa_A centered on the
//! rationals j + d/r.
//!
//! The variable `w` lives in the unit-period convention (peaks at j + d/r);
//! the main-text homodyne momentum is p = 2 pi w and is never used
//! internally.

use crate::gkpmath::{envelope_pair_sum, eta_kappa_hat, peak_overlap, psi_delta_hat};
use crate::numtheory::{gcd, mod_pow, order, smallest_q, FactorInstance};
use crate::peaksim::CircuitParams;
use crate::quad::{gl_panels, Kahan};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Everything needed to evaluate the output density p(w).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModel {
    pub instance: FactorInstance,
    pub a: u64,
    pub r: u64,
    /// The subgroup <a> in index order: rem[i] = a^i mod N, so ind(rem[i]) = i.
    pub rem: Vec<u64>,
    pub kappa_a: f64,
    pub delta_a: f64,
    pub m: u32,
    /// R mod r for the comb phase (R = 2^{m-1}).
    pub r_mod: u64,
    /// Normalization constant of the output state.
    pub c_phi: f64,
    /// Dual-sum support cutoff in units of kappa_A.
    pub z_cut: f64,
    /// Violated proof preconditions (evaluation continues, guarantees void).
    pub precondition_failures: Vec<String>,
}

impl SpectralModel {
    /// Index of k in the subgroup, if k is a power of a mod N.
    pub fn ind(&self, k: u64) -> Option<u64> {
        self.rem.iter().position(|&v| v == k).map(|i| i as u64)
    }
}

/// Build the model: subgroup table by brute force, c_phi by the
/// residue-constrained double sum (collapsed to multiples of r).
pub fn build_model(params: &CircuitParams, a: u64, n: u64) -> Result<SpectralModel, SpectralError> {
    if n < 2 || a == 0 || a >= n || gcd(a, n) != 1 {
        return Err(SpectralError::Invalid(format!("need a in Z_{n}^*, got {a}")));
    }
    let instance = FactorInstance::new(n).map_err(|e| SpectralError::Invalid(e.to_string()))?;
    let r = order(a, n).map_err(|e| SpectralError::Invalid(e.to_string()))?;
    let rem: Vec<u64> = (0..r).map(|i| mod_pow(a, i, n)).collect();
    let kappa = params.kappa_a();
    let delta = params.delta_a();
    if !(kappa > 0.0 && delta > 0.0) {
        return Err(SpectralError::Invalid(
            "kappa_A / Delta_A underflow f64; analytic model needs desk-scale parameters".into(),
        ));
    }
    // |c_phi|^{-2} = sum over center differences restricted to multiples of r
    let mut acc = Kahan::default();
    acc.add(envelope_pair_sum(kappa, 0.0));
    let mut j = 1i64;
    loop {
        let d = (j * r as i64) as f64;
        let gauss = peak_overlap(0.0, d, delta);
        if gauss == 0.0 {
            break;
        }
        let contrib = 2.0 * gauss * envelope_pair_sum(kappa, d);
        acc.add(contrib);
        if contrib < 1e-30 * acc.value() {
            break;
        }
        j += 1;
    }
    let c_phi = 1.0 / acc.value().sqrt();

    let q = smallest_q(n);
    let mut failures = Vec::new();
    if kappa > 1.0 / q as f64 {
        failures.push(format!("kappa_A = {kappa} exceeds 1/q = {}", 1.0 / q as f64));
    }
    if kappa > 2.0 / r as f64 {
        failures.push(format!("kappa_A = {kappa} exceeds 2/r = {}", 2.0 / r as f64));
    }
    if 1.0 / kappa <= (n as f64) * (n as f64) {
        failures.push(format!("1/kappa_A = {} not above N^2 = {}", 1.0 / kappa, n * n));
    }
    Ok(SpectralModel {
        instance,
        a,
        r,
        rem,
        kappa_a: kappa,
        delta_a: delta,
        m: params.m,
        r_mod: mod_pow(2, (params.m - 1) as u64, r),
        c_phi,
        z_cut: 8.0,
        precondition_failures: failures,
    })
}

/// Integer dual-sum window: the z with |w + z/r| <= z_cut * kappa.
fn z_window(model: &SpectralModel, w: f64) -> (i64, i64) {
    let r = model.r as f64;
    let half = model.z_cut * model.kappa_a;
    let lo = (r * (-w - half)).ceil() as i64;
    let hi = (r * (-w + half)).floor() as i64;
    (lo, hi)
}

/// |Theta_hat_k(w)|: the component density amplitude for residue k.
pub fn theta_hat_abs(model: &SpectralModel, k: u64, w: f64) -> Result<f64, SpectralError> {
    let ind = model
        .ind(k)
        .ok_or_else(|| SpectralError::Invalid(format!("k={k} not in <a>")))?;
    Ok(theta_hat_abs_by_ind(model, ind, w))
}

fn theta_hat_abs_by_ind(model: &SpectralModel, ind: u64, w: f64) -> f64 {
    let r = model.r;
    let (lo, hi) = z_window(model, w);
    if lo > hi {
        return 0.0;
    }
    // phase factor e^{2 pi i (R - ind) z / r} with (R - ind) mod r exact
    let qint = (model.r_mod + r - ind % r) % r;
    let (mut re, mut im) = (Kahan::default(), Kahan::default());
    for z in lo..=hi {
        let env = eta_kappa_hat(w + z as f64 / r as f64, model.kappa_a);
        let phase_num = ((qint as i128) * (z as i128)).rem_euclid(r as i128) as f64;
        let angle = 2.0 * std::f64::consts::PI * phase_num / r as f64;
        re.add(env * angle.cos());
        im.add(env * angle.sin());
    }
    let comb = (re.value() * re.value() + im.value() * im.value()).sqrt();
    model.c_phi * psi_delta_hat(w, model.delta_a) / r as f64 * comb
}

/// Output density p(w) = sum over the subgroup of |Theta_hat_k(w)|^2.
pub fn pdf(model: &SpectralModel, w: f64) -> f64 {
    let (lo, hi) = z_window(model, w);
    if lo > hi {
        return 0.0;
    }
    let r = model.r as f64;
    if lo == hi {
        // single dual term: the comb factor modulus is k-independent
        let env = eta_kappa_hat(w + lo as f64 / r, model.kappa_a);
        let amp = model.c_phi * psi_delta_hat(w, model.delta_a) / r * env;
        return r * amp * amp;
    }
    let mut total = Kahan::default();
    for ind in 0..model.r {
        let v = theta_hat_abs_by_ind(model, ind, w);
        total.add(v * v);
    }
    total.value()
}

/// Envelope half-support: beyond this |w| the peak-height factor drops below
/// 1e-15 of its maximum.
pub fn w_support(model: &SpectralModel) -> f64 {
    (15.0 * std::f64::consts::LN_10 / (4.0 * std::f64::consts::PI * std::f64::consts::PI))
        .sqrt()
        / model.delta_a
}

/// Integral of pdf over one interval [center - half, center + half], with
/// panels matched to the kappa_A-scale structure.
fn interval_mass(model: &SpectralModel, center: f64, half: f64) -> f64 {
    let clip = (model.z_cut * model.kappa_a).min(half);
    gl_panels(center - clip, center + clip, model.kappa_a / 4.0, |w| pdf(model, w))
}

/// Integral of pdf over Gamma_d (the union over j of 1/(2q)-intervals around
/// j + d/r), restricted to the envelope support.
pub fn gamma_mass(model: &SpectralModel, d: u64) -> f64 {
    let q = model.instance.q as f64;
    let r = model.r as f64;
    let jmax = w_support(model).ceil() as i64 + 1;
    let mut acc = Kahan::default();
    for j in -jmax..=jmax {
        let center = j as f64 + d as f64 / r;
        acc.add(interval_mass(model, center, 1.0 / (2.0 * q)));
    }
    acc.value()
}

/// All candidate peak sites s/r (s integer) inside the envelope support.
fn site_range(model: &SpectralModel) -> (i64, i64) {
    let wmax = w_support(model);
    let r = model.r as f64;
    ((-wmax * r).floor() as i64, (wmax * r).ceil() as i64)
}

/// Half-width of the window integrated around each site.
fn site_half(model: &SpectralModel) -> f64 {
    (0.5 / model.r as f64).min(model.z_cut * model.kappa_a)
}

/// Total mass by peak-decomposed quadrature (should be 1 up to tolerance).
pub fn pdf_total_mass(model: &SpectralModel) -> f64 {
    let (lo, hi) = site_range(model);
    let half = site_half(model);
    let mut acc = Kahan::default();
    for s in lo..=hi {
        let center = s as f64 / model.r as f64;
        acc.add(interval_mass(model, center, half));
    }
    acc.value()
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Hierarchical sampler over the analytic density: site selection by
/// tabulated masses, then a site-local inverse CDF at resolution kappa_A/64,
/// with the (tiny) leftover mass assigned by rejection against the density.
pub struct Sampler {
    model: SpectralModel,
    site_lo: i64,
    cumulative: Vec<f64>,
    total: f64,
    half: f64,
    tables: std::collections::HashMap<i64, Vec<f64>>,
}

impl Sampler {
    pub fn new(model: &SpectralModel) -> Result<Self, SpectralError> {
        let (lo, hi) = site_range(model);
        let count = hi - lo + 1;
        if count > 40_000_000 {
            return Err(SpectralError::Invalid(format!(
                "site enumeration needs {count} sites; table-scale parameters fold instead"
            )));
        }
        let half = site_half(model);
        let mut cumulative = Vec::with_capacity(count as usize);
        let mut acc = Kahan::default();
        for s in lo..=hi {
            acc.add(interval_mass(model, s as f64 / model.r as f64, half));
            cumulative.push(acc.value());
        }
        Ok(Sampler {
            model: model.clone(),
            site_lo: lo,
            total: acc.value(),
            cumulative,
            half,
            tables: std::collections::HashMap::new(),
        })
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    /// Per-site mass (for frequency cross-checks).
    pub fn site_mass(&self, s: i64) -> f64 {
        let i = (s - self.site_lo) as usize;
        let prev = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        self.cumulative[i] - prev
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn site_of(&self, w: f64) -> i64 {
        (w * self.model.r as f64).round() as i64
    }

    fn offset_table(&mut self, s: i64) -> &Vec<f64> {
        let model = &self.model;
        let half = self.half;
        self.tables.entry(s).or_insert_with(|| {
            let center = s as f64 / model.r as f64;
            let step = model.kappa_a / 64.0;
            let n = (2.0 * half / step).ceil() as usize + 1;
            let mut cdf = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            cdf.push(0.0);
            let mut prev = pdf(model, center - half);
            for i in 1..=n {
                let u = -half + i as f64 * step;
                let cur = pdf(model, center + u.min(half));
                acc += 0.5 * (prev + cur) * step;
                prev = cur;
                cdf.push(acc);
            }
            cdf
        })
    }

    /// Draw one sample; deterministic for a fixed RNG stream.
    pub fn draw<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let target = u; // in [0,1): beyond `total` is the leftover mass
        if target < self.total {
            let i = self.cumulative.partition_point(|&c| c <= target);
            let i = i.min(self.cumulative.len() - 1);
            let s = self.site_lo + i as i64;
            let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
            let frac = (target - lo) / (self.cumulative[i] - lo).max(f64::MIN_POSITIVE);
            let half = self.half;
            let step = self.model.kappa_a / 64.0;
            let table = self.offset_table(s);
            let goal = frac * table[table.len() - 1];
            let j = table.partition_point(|&c| c <= goal).min(table.len() - 1);
            let lo_c = table[j - 1];
            let hi_c = table[j];
            let t = if hi_c > lo_c { (goal - lo_c) / (hi_c - lo_c) } else { 0.5 };
            let offset = -half + ((j - 1) as f64 + t) * step;
            s as f64 / self.model.r as f64 + offset
        } else {
            self.draw_leftover(rng)
        }
    }

    /// Rejection against the density under the spectral envelope proposal;
    /// covers the mass outside every site window (< 1e-6 by construction).
    fn draw_leftover<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let model = &self.model;
        let sigma = 1.0
            / (2.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI * model.delta_a);
        let normal = Normal::new(0.0, sigma).expect("sigma > 0");
        // envelope bound: pdf(w) <= c^2 (2 sqrt(pi)/kappa) K^2 / r * |psi_hat|^2
        let k_terms = (2.0 * model.z_cut * model.kappa_a * model.r as f64).ceil() + 1.0;
        let eta_max_sq = 2.0 * std::f64::consts::PI.sqrt() / model.kappa_a;
        let bound_factor =
            model.c_phi * model.c_phi * eta_max_sq * k_terms * k_terms / model.r as f64;
        loop {
            let w = normal.sample(rng);
            let prop = psi_delta_hat(w, model.delta_a).powi(2); // integrates to 1
            let p = pdf(model, w);
            if p <= 0.0 {
                continue;
            }
            let accept = p / (bound_factor * prop);
            if rng.gen::<f64>() < accept {
                return w;
            }
        }
    }
}

/// Convenience wrapper: build a sampler and draw `count` samples.
pub fn sample<R: Rng>(
    model: &SpectralModel,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>, SpectralError> {
    let mut sampler = Sampler::new(model)?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gl_panels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn moderate() -> CircuitParams {
        CircuitParams::from_log2(8, -6.0, -6.0, -10.0, -10.0, -20.0)
    }

    fn strict_n15() -> CircuitParams {
        crate::pipeline::desk_params(15, crate::pipeline::DeskProfile::Strict).unwrap()
    }

    #[test]
    fn build_model_examples() {
        let p = moderate();
        let m = build_model(&p, 1, 15).unwrap();
        assert_eq!(m.r, 1);
        assert_eq!(m.ind(1), Some(0));
        let m = build_model(&p, 2, 15).unwrap();
        assert_eq!(m.rem, vec![1, 2, 4, 8]);
        assert_eq!(m.ind(8), Some(3));
        assert!(m.c_phi * m.c_phi >= 0.25, "c_phi^2 = {}", m.c_phi * m.c_phi);
        assert!(build_model(&p, 3, 15).is_err());
    }

    #[test]
    fn theta_hat_matches_primal_sum() {
        // independent oracle: the primal sum over envelope peaks
        // Theta_k(w) = c sum_{z = ind mod r} eta(z - R) psi_hat(w) e^{2 pi i z w}
        let p = moderate();
        let model = build_model(&p, 2, 15).unwrap();
        let r_int = p.r() as i64;
        let radius = 14 * ((1.0 / model.kappa_a) as i64);
        for (k, w) in [
            (2u64, 0.25 + model.kappa_a / 4.0),
            (4, 1.0 / 4.0),
            (8, 2.75 + model.kappa_a / 2.0),
            (1, -1.5 - model.kappa_a / 3.0),
        ] {
            let ind = model.ind(k).unwrap() as i64;
            let (mut re, mut im) = (0.0f64, 0.0f64);
            let mut z = r_int + ((ind - r_int).rem_euclid(model.r as i64));
            z -= ((z - (r_int - radius)) / model.r as i64) * model.r as i64;
            while z <= r_int + radius {
                let envelope = crate::gkpmath::eta_kappa((z - r_int) as f64, model.kappa_a);
                let angle = 2.0 * std::f64::consts::PI * (z as f64) * w;
                re += envelope * angle.cos();
                im += envelope * angle.sin();
                z += model.r as i64;
            }
            let primal = model.c_phi
                * psi_delta_hat(w, model.delta_a)
                * (re * re + im * im).sqrt();
            let dual = theta_hat_abs(&model, k, w).unwrap();
            // the primal route carries an f64 cancellation floor ~1e-14
            assert!(
                (primal - dual).abs() <= 1e-10 * primal.abs() + 1e-13,
                "k={k} w={w}: primal {primal} vs dual {dual}"
            );
        }
    }

    #[test]
    fn theta_hat_far_from_sites_vanishes() {
        let model = build_model(&moderate(), 2, 15).unwrap();
        let peak = theta_hat_abs(&model, 2, 0.25 + model.kappa_a / 4.0).unwrap();
        let far = theta_hat_abs(&model, 2, 0.25 + 0.5 / model.r as f64).unwrap();
        assert!(far < 1e-20 * peak, "far = {far}, peak = {peak}");
    }

    #[test]
    fn theta_hat_lower_bound_lemma() {
        // at w = omega + m/r with omega in [kappa/4, kappa/2]:
        // |Theta_k| >= e^{-pi^2/2} / sqrt(kappa) * c_phi * |psi_hat(w)| / r
        let model = build_model(&strict_n15(), 2, 15).unwrap();
        let r = model.r as f64;
        for ind in 0..model.r {
            let k = model.rem[ind as usize];
            for mm in (-3 * model.r as i64)..=(3 * model.r as i64) {
                for omega in [
                    model.kappa_a / 4.0,
                    model.kappa_a / 3.0,
                    model.kappa_a / 2.0,
                ] {
                    let w = omega + mm as f64 / r;
                    let got = theta_hat_abs(&model, k, w).unwrap();
                    let bound = (-std::f64::consts::PI.powi(2) / 2.0).exp()
                        / model.kappa_a.sqrt()
                        * model.c_phi
                        * psi_delta_hat(w, model.delta_a)
                        / r;
                    assert!(got >= bound, "k={k} m={mm} omega={omega}: {got} < {bound}");
                }
            }
        }
    }

    #[test]
    fn theta_hat_z_cut_stable() {
        let mut model = build_model(&moderate(), 2, 15).unwrap();
        let w = 0.25 + model.kappa_a / 4.0;
        let v1 = theta_hat_abs(&model, 2, w).unwrap();
        model.z_cut = 16.0;
        let v2 = theta_hat_abs(&model, 2, w).unwrap();
        assert!((v1 - v2).abs() <= 1e-12 * v1.max(1e-300));
    }

    #[test]
    fn comb_factor_periodic_in_one_over_r() {
        // |Theta_k(w)| / psi_hat(w) has period 1/r
        let model = build_model(&moderate(), 2, 15).unwrap();
        let r = model.r as f64;
        for base in [0.25 + model.kappa_a / 4.0, 0.5 - model.kappa_a / 3.0] {
            let f0 = theta_hat_abs(&model, 2, base).unwrap() / psi_delta_hat(base, model.delta_a);
            for shift in 1..=3 {
                let w = base + shift as f64 / r;
                let f1 = theta_hat_abs(&model, 2, w).unwrap() / psi_delta_hat(w, model.delta_a);
                assert!(
                    (f0 - f1).abs() <= 1e-10 * f0.abs().max(1e-30),
                    "base={base} shift={shift}: {f0} vs {f1}"
                );
            }
        }
    }

    #[test]
    fn pdf_nonnegative_and_peaked() {
        let model = build_model(&moderate(), 2, 15).unwrap();
        // four peak families per unit interval (r = 4)
        let mut peaks = 0;
        for d in 0..4u64 {
            let w = d as f64 / 4.0 + model.kappa_a / 4.0;
            if pdf(&model, w) > 0.0 {
                peaks += 1;
            }
        }
        assert_eq!(peaks, 4);
        // off-site density vanishes
        assert_eq!(pdf(&model, 0.125), 0.0);
        for w in [-2.3, 0.1, 0.25, 3.7] {
            assert!(pdf(&model, w) >= 0.0);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for a in [1u64, 2, 7] {
            let model = build_model(&moderate(), a, 15).unwrap();
            let total = pdf_total_mass(&model);
            assert!(
                (total - 1.0).abs() < 1e-3,
                "a={a}: integral = {total}"
            );
        }
    }

    #[test]
    fn gamma_masses_desk_strict() {
        let params = strict_n15();
        let model = build_model(&params, 2, 15).unwrap();
        assert!(model.precondition_failures.is_empty());
        let bound = (-std::f64::consts::PI.powi(2)).exp() / 64.0 / model.r as f64;
        let mut total = 0.0;
        for d in 0..model.r {
            let mass = gamma_mass(&model, d);
            assert!(mass > bound, "d={d}: {mass} <= {bound}");
            total += mass;
        }
        assert!(total <= 1.0 + 1e-9, "total = {total}");
    }

    #[test]
    fn gamma_mass_order_one() {
        // a = 1: all mass near integers
        let params = strict_n15();
        let model = build_model(&params, 1, 15).unwrap();
        let mass = gamma_mass(&model, 0);
        // compare against direct quadrature around w = 0, +-1, ...
        let q = model.instance.q as f64;
        let mut direct = 0.0;
        let jmax = w_support(&model).ceil() as i64;
        for j in -jmax..=jmax {
            direct += gl_panels(
                j as f64 - 1.0 / (2.0 * q),
                j as f64 + 1.0 / (2.0 * q),
                model.kappa_a / 8.0,
                |w| pdf(&model, w),
            );
        }
        assert!((mass - direct).abs() < 1e-9, "{mass} vs {direct}");
        assert!(mass > 0.9, "near-integer mass = {mass}");
    }

    #[test]
    fn sampler_is_deterministic_and_consistent() {
        let params = moderate();
        let model = build_model(&params, 2, 15).unwrap();
        let mut rng1 = ChaCha12Rng::seed_from_u64(11);
        let mut rng2 = ChaCha12Rng::seed_from_u64(11);
        let s1 = sample(&model, &mut rng1, 256).unwrap();
        let s2 = sample(&model, &mut rng2, 256).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn sampler_site_frequencies_match_masses() {
        let params = moderate();
        let model = build_model(&params, 2, 15).unwrap();
        let mut sampler = Sampler::new(&model).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 40_000usize;
        let mut counts: std::collections::HashMap<i64, usize> = Default::default();
        for _ in 0..n {
            let w = sampler.draw(&mut rng);
            *counts.entry(sampler.site_of(w)).or_insert(0) += 1;
        }
        // check the heaviest sites within 3 sigma
        let (lo, hi) = site_range(&model);
        for s in lo..=hi {
            let mass = sampler.site_mass(s);
            if mass < 5e-3 {
                continue;
            }
            let expect = mass * n as f64;
            let sigma = (mass * (1.0 - mass) * n as f64).sqrt();
            let got = *counts.get(&s).unwrap_or(&0) as f64;
            assert!(
                (got - expect).abs() <= 3.0 * sigma + 1.0,
                "site {s}: got {got}, expect {expect} +- {sigma}"
            );
        }
    }
}
