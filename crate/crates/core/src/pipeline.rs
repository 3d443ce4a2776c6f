//! End-to-end factoring: parameter selection, repeated sampling and
//! post-processing, run transcripts, and the exact success-probability
//! oracle used to validate the empirical rates.

use crate::numtheory::{discretize, gcd, shor_postprocess3_detailed, smallest_q};
use crate::peaksim::CircuitParams;
use crate::quad::{gl_panels, Kahan};
use crate::spectral::{build_model, gamma_mass, pdf, Sampler, SpectralModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible desk profile: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
}

/// Reference squeezing schedule at bit length n = bits(N):
/// m = 17n, R = 2^{17n-1}, kappa_A = Delta_A = 2^{-16n},
/// kappa_B = Delta_B = 2^{-18n^2}, Delta_C = 2^{-50n}, eps_X = sqrt(Delta_X).
pub fn table_params(n_value: u64) -> CircuitParams {
    let n = (64 - n_value.leading_zeros()).max(1) as f64;
    CircuitParams::from_log2(
        (17.0 * n) as u32,
        -16.0 * n,
        -16.0 * n,
        -18.0 * n * n,
        -18.0 * n * n,
        -50.0 * n,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeskProfile {
    /// eps3 target 1e-3, window quality kappa_A R = 16.
    Strict,
    /// eps3 target 0.1, window quality kappa_A R = 4.
    Loose,
}

/// Smallest-cost desk-scale parameters satisfying the proof inequalities:
/// kappa_A = Delta_A = 2^-e with e the smallest even exponent strictly below
/// both 1/q and 1/N^2 (even, so eps_A = sqrt(Delta_A) is a power of two);
/// R = 2^{m-1} sized by the profile's kappa_A R target; kappa_B sized by the
/// profile's eps3 target; Delta_C from the strict window (profiles differ
/// only in kappa_B, Delta_B, m).
pub fn desk_params(n_value: u64, profile: DeskProfile) -> Result<CircuitParams, PipelineError> {
    if !(2..=10_000).contains(&n_value) {
        return Err(PipelineError::Infeasible(format!(
            "desk profiles cover 2 <= N <= 10^4, got {n_value}"
        )));
    }
    let q = smallest_q(n_value);
    let log2_q = 63 - q.leading_zeros() as i32 + 1; // q = 2^log2_q exactly
    let log2_q = {
        debug_assert_eq!(1u64 << (log2_q - 1), q / 2 * 2 / 2 * 2 / 2 * 2 / 2 * 2); // q power of two
        (q as f64).log2().round() as i32
    };
    // strictly below 1/q and 1/N^2
    let min_e_q = log2_q + 1;
    let min_e_n2 = (2.0 * (n_value as f64).log2()).floor() as i32 + 1;
    let mut e = min_e_q.max(min_e_n2);
    if e % 2 != 0 {
        e += 1;
    }
    let kappa = 2f64.powi(-e);
    // sanity: the remaining proof inequalities
    if kappa * 2.0 > 2.0 / n_value as f64 && n_value > 2 {
        // kappa <= 2/r for all r <= N is implied by kappa <= 2/N
        return Err(PipelineError::Infeasible("kappa_A exceeds 2/N".into()));
    }
    if !(4.0 * std::f64::consts::PI.powi(2) * kappa * kappa < std::f64::consts::PI / 16.0) {
        return Err(PipelineError::Infeasible(
            "4 pi^2 Delta_A^2 < pi/16 unsatisfiable".into(),
        ));
    }
    let m_strict = (e + 5) as u32;
    let (m, eps3_target): (u32, f64) = match profile {
        DeskProfile::Strict => (m_strict, 1e-3),
        DeskProfile::Loose => ((e + 3) as u32, 0.1),
    };
    // largest power of two with 2 kappa_B N^m < target
    let log2_kb = ((eps3_target / 2.0).log2() - m as f64 * (n_value as f64).log2() - 1e-9)
        .floor();
    let log2_dc = -(2.0 * m_strict as f64) - 6.0;
    Ok(CircuitParams::from_log2(
        m,
        -(e as f64),
        -(e as f64),
        log2_kb,
        log2_kb,
        log2_dc,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamSpec {
    Table,
    DeskStrict,
    DeskLoose,
    Custom { params: CircuitParams },
}

impl ParamSpec {
    pub fn resolve(&self, n_value: u64) -> Result<CircuitParams, PipelineError> {
        match self {
            ParamSpec::Table => Ok(table_params(n_value)),
            ParamSpec::DeskStrict => desk_params(n_value, DeskProfile::Strict),
            ParamSpec::DeskLoose => desk_params(n_value, DeskProfile::Loose),
            ParamSpec::Custom { params } => Ok(params.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Analytic,
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_value: u64,
    pub params: ParamSpec,
    pub max_attempts: u32,
    pub seed: u64,
    pub sampler: SamplerKind,
}

impl RunConfig {
    pub fn new(n_value: u64, seed: u64) -> Self {
        RunConfig {
            n_value,
            params: ParamSpec::DeskStrict,
            max_attempts: default_attempts(n_value),
            seed,
            sampler: SamplerKind::Analytic,
        }
    }
}

/// 10 * ceil(log2 N) attempts by default.
pub fn default_attempts(n_value: u64) -> u32 {
    10 * (n_value.max(2) as f64).log2().ceil() as u32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub index: u32,
    pub a: u64,
    /// Factor found classically because gcd(a, N) > 1.
    pub gcd_shortcut: Option<u64>,
    pub w: Option<f64>,
    pub c: Option<u64>,
    pub candidates: Vec<(u64, u64)>,
    pub recovered_order: Option<u64>,
    pub factor: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTranscript {
    pub config: RunConfig,
    pub attempts: Vec<AttemptRecord>,
    pub factor: Option<u64>,
    pub attempts_used: u32,
    pub success: bool,
    /// Wall clock; excluded from determinism comparisons.
    pub timestamp_ms: u128,
}

impl RunTranscript {
    fn finish(mut self) -> Self {
        self.success = self.factor.is_some();
        if let Some(f) = self.factor {
            assert!(f > 1 && f < self.config.n_value && self.config.n_value % f == 0);
        }
        self.timestamp_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        self
    }
}

fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One full factoring run: repeated (a, w) draws with classical
/// post-processing, deterministic for a fixed (config, seed).
pub fn factor(config: &RunConfig) -> Result<RunTranscript, PipelineError> {
    let n = config.n_value;
    if n < 2 {
        return Err(PipelineError::Config("N must be at least 2".into()));
    }
    let mut transcript = RunTranscript {
        config: config.clone(),
        attempts: Vec::new(),
        factor: None,
        attempts_used: 0,
        success: false,
        timestamp_ms: 0,
    };
    if n % 2 == 0 {
        transcript.factor = if n > 2 { Some(2) } else { None };
        return Ok(transcript.finish());
    }
    let params = config.params.resolve(n)?;
    let mut samplers: std::collections::HashMap<u64, Sampler> = Default::default();
    for index in 0..config.max_attempts {
        let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(config.seed, index as u64));
        let a = rng.gen_range(2..n);
        transcript.attempts_used = index + 1;
        let mut record = AttemptRecord {
            index,
            a,
            gcd_shortcut: None,
            w: None,
            c: None,
            candidates: Vec::new(),
            recovered_order: None,
            factor: None,
        };
        let g = gcd(a, n);
        if g != 1 {
            record.gcd_shortcut = Some(g);
            record.factor = Some(g);
            transcript.factor = Some(g);
            transcript.attempts.push(record);
            break;
        }
        let w = match config.sampler {
            SamplerKind::Analytic => {
                if !samplers.contains_key(&a) {
                    let model = build_model(&params, a, n)?;
                    samplers.insert(a, Sampler::new(&model)?);
                }
                samplers.get_mut(&a).expect("just inserted").draw(&mut rng)
            }
            SamplerKind::Grid => grid_sample(&params, a, n, &mut rng)?,
        };
        record.w = Some(w);
        let detail = shor_postprocess3_detailed(w, a, n);
        record.c = Some(detail.c);
        record.candidates = detail.candidates;
        record.recovered_order = detail.recovered_order;
        record.factor = detail.factor;
        let found = record.factor;
        transcript.attempts.push(record);
        if let Some(f) = found {
            transcript.factor = Some(f);
            break;
        }
    }
    Ok(transcript.finish())
}

/// Grid-backed sampling of the homodyne outcome, feasible for tiny
/// instances only (the mode-B comb must fit the grid). Used as a
/// cross-check of the analytic sampler, not for factoring-scale runs.
fn grid_sample<R: Rng>(
    params: &CircuitParams,
    a: u64,
    n: u64,
    rng: &mut R,
) -> Result<f64, PipelineError> {
    let (momenta, density) = grid_output_pdf(params, a, n)
        .map_err(|e| PipelineError::Config(format!("grid sampler infeasible: {e}")))?;
    let dp = momenta[1] - momenta[0];
    let total: f64 = density.iter().sum::<f64>() * dp;
    let mut target: f64 = rng.gen::<f64>() * total;
    for (p, rho) in momenta.iter().zip(&density) {
        let mass = rho * dp;
        if target < mass {
            let frac: f64 = rng.gen();
            let p_sample = p + (frac - 0.5) * dp;
            return Ok(p_sample / (2.0 * std::f64::consts::PI));
        }
        target -= mass;
    }
    Ok(momenta[momenta.len() - 1] / (2.0 * std::f64::consts::PI))
}

/// Homodyne momentum density of mode A after running the arithmetic unitary
/// on a windowed comb input, on a delta-regime grid.
pub fn grid_output_pdf(
    params: &CircuitParams,
    a: u64,
    n: u64,
) -> Result<(Vec<f64>, Vec<f64>), crate::gridsim::GridError> {
    use crate::gridsim::{u_anm, GridSpec, GridState, Profile};
    let m = params.m;
    let r_pos = params.r();
    if m > 3 || r_pos > 8.5 {
        return Err(crate::gridsim::GridError::Budget {
            needed: u128::MAX,
            budget: crate::gridsim::GRID_BUDGET,
        });
    }
    let kappa_a = params.kappa_a().max(0.125);
    let kappa_b = params.kappa_b().max(0.25);
    // mode A: unit grid over [-GA/2, GA/2), window {0..2R-1}
    let ga = 512usize;
    let gb = 256usize;
    let gc = 8usize;
    let center_a = r_pos; // envelope center
    let spec_a = GridSpec::new(ga, 1.0, -((ga / 2) as f64))?;
    let spec_b = GridSpec::new(gb, 1.0, -((gb / 2) as f64))?;
    let spec_c = GridSpec::new(gc, 1.0, -((gc / 2) as f64))?;
    let delta = 1.0 / 64.0; // far below the unit spacing: delta regime
    let mut state = GridState::prepare(
        vec![spec_a, spec_b, spec_c],
        &[
            Profile::Comb {
                spacing: 1.0,
                kappa: kappa_a,
                delta,
                eps: 0.25,
                window: Some((center_a, r_pos - 0.5)),
            },
            Profile::Comb {
                spacing: n as f64,
                kappa: kappa_b,
                delta: delta / n as f64,
                eps: 0.25,
                window: None,
            },
            Profile::PositionPeak { center: 0.0, delta },
        ],
    )?;
    // shift the A window from {-R..R-1} to {0..2R-1}
    state.shift_p(0, 0.0, false)?;
    u_anm(&mut state, a, n, m)?;
    Ok(state.p_quadrature_pdf(0))
}

// ---------------------------------------------------------------------------
// Success probability oracle
// ---------------------------------------------------------------------------

/// Exact probability that a single sample from the analytic distribution
/// leads the post-processing to a factor: enumerate the discretization
/// cells, integrate the density over each preimage piece, and mark cells by
/// running the deterministic post-processing.
pub fn success_probability_oracle(
    n: u64,
    a: u64,
    params: &CircuitParams,
) -> Result<f64, PipelineError> {
    let model = build_model(params, a, n)?;
    Ok(oracle_from_model(&model))
}

fn postprocess_c_success(c: u64, a: u64, n: u64) -> bool {
    // the post-processing is a function of discretize(w); probe it with a
    // representative w for the cell
    let q = smallest_q(n);
    let w = c as f64 / q as f64;
    debug_assert_eq!(discretize(w, q), c);
    crate::numtheory::shor_postprocess3(w, a, n).is_some()
}

fn oracle_from_model(model: &SpectralModel) -> f64 {
    let n = model.instance.n_value;
    let a = model.a;
    let q = model.instance.q;
    let qf = q as f64;
    let r = model.r as f64;
    let wmax = crate::spectral::w_support(model);
    let half = (0.5 / r).min(model.z_cut * model.kappa_a);
    let smax = (wmax * r).ceil() as i64;
    let mut success_cache: std::collections::HashMap<u64, bool> = Default::default();
    let mut acc = Kahan::default();
    for s in -smax..=smax {
        let center = s as f64 / r;
        let (lo, hi) = (center - half, center + half);
        // split [lo, hi] at discretization-cell boundaries (2c+1)/(2q) + j
        let mut edges = vec![lo];
        let mut k = (lo * qf - 0.5).ceil() as i64;
        loop {
            let edge = (k as f64 + 0.5) / qf;
            if edge >= hi {
                break;
            }
            if edge > lo {
                edges.push(edge);
            }
            k += 1;
        }
        edges.push(hi);
        for pair in edges.windows(2) {
            let (lo_e, hi_e) = (pair[0], pair[1]);
            let mid = 0.5 * (lo_e + hi_e);
            let c = discretize(mid, q);
            let ok = *success_cache
                .entry(c)
                .or_insert_with(|| postprocess_c_success(c, a, n));
            if ok {
                acc.add(gl_panels(lo_e, hi_e, model.kappa_a / 4.0, |w| pdf(model, w)));
            }
        }
    }
    acc.value()
}

/// Mean per-attempt success probability over a ~ uniform {2..N-1}, counting
/// the gcd shortcut as success.
pub fn mean_attempt_success(n: u64, params: &CircuitParams) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    for a in 2..n {
        if gcd(a, n) != 1 {
            total += 1.0;
        } else {
            total += success_probability_oracle(n, a, params)?;
        }
    }
    Ok(total / (n - 2) as f64)
}

/// Empirical per-attempt success rate: independent attempts that never stop
/// at the first factor.
pub fn empirical_success_rate(
    n: u64,
    params: &CircuitParams,
    attempts: u32,
    seed: u64,
) -> Result<(u32, u32), PipelineError> {
    let mut samplers: std::collections::HashMap<u64, Sampler> = Default::default();
    let mut successes = 0u32;
    for index in 0..attempts {
        let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed, index as u64));
        let a = rng.gen_range(2..n);
        if gcd(a, n) != 1 {
            successes += 1;
            continue;
        }
        if !samplers.contains_key(&a) {
            let model = build_model(params, a, n)?;
            samplers.insert(a, Sampler::new(&model)?);
        }
        let w = samplers.get_mut(&a).expect("cached").draw(&mut rng);
        if crate::numtheory::shor_postprocess3(w, a, n).is_some() {
            successes += 1;
        }
    }
    Ok((successes, attempts))
}

// ---------------------------------------------------------------------------
// Input-perturbation model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Worst-case L1 degradation of the output distribution.
    pub degradation: f64,
    /// True when the input trace distance is 2 or more: every interval-mass
    /// guarantee is void.
    pub voided: bool,
    /// Per-residue floors: gamma_mass(d) minus the degradation, clamped at 0.
    pub gamma_floors: Vec<(u64, f64)>,
}

/// Worst-case interval-mass degradation when the circuit inputs are
/// replaced by states within the given trace distance (models imperfect GKP
/// preparation without simulating the preparation protocol).
pub fn perturbed_distribution_gap(
    model: &SpectralModel,
    input_trace_distance: f64,
) -> PerturbationReport {
    let degradation = input_trace_distance.max(0.0);
    let voided = degradation >= 2.0;
    let gamma_floors = (0..model.r)
        .map(|d| {
            let mass = gamma_mass(model, d);
            (d, (mass - degradation).max(0.0))
        })
        .collect();
    PerturbationReport {
        degradation,
        voided,
        gamma_floors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_params_examples() {
        let p = table_params(15);
        assert_eq!(p.m, 68);
        assert_eq!(p.log2_r, 67);
        assert_eq!(p.log2_kappa_a, -64.0);
        assert_eq!(p.log2_eps_a, -32.0);
        let p = table_params(3);
        assert_eq!(p.m, 34);
        assert_eq!(p.log2_r, 33);
        // eps_A = sqrt(Delta_A) = 2^{-8n}
        for n_value in [15u64, 21, 255] {
            let n = 64 - n_value.leading_zeros();
            let p = table_params(n_value);
            assert_eq!(p.log2_eps_a, -8.0 * n as f64);
            assert!(p.matches_table(n));
        }
    }

    #[test]
    fn desk_params_examples() {
        let p = desk_params(15, DeskProfile::Strict).unwrap();
        assert_eq!(p.log2_kappa_a, -10.0, "spec example: kappa_A = 2^-10");
        assert_eq!(p.log2_delta_a, -10.0);
        assert_eq!(p.m, 15);
        assert_eq!(p.log2_r, 14);
        // strict eps3 below 1e-3
        let eps3 = 2.0 * p.kappa_b() * 15f64.powi(p.m as i32);
        assert!(eps3 < 1e-3, "eps3 = {eps3}");
        // loose differs only in (kappa_B, Delta_B, m)
        let l = desk_params(15, DeskProfile::Loose).unwrap();
        assert_eq!(l.log2_kappa_a, p.log2_kappa_a);
        assert_eq!(l.log2_delta_a, p.log2_delta_a);
        assert_eq!(l.log2_delta_c, p.log2_delta_c);
        assert!(l.m != p.m && l.log2_kappa_b != p.log2_kappa_b);
        let eps3_loose = 2.0 * l.kappa_b() * 15f64.powi(l.m as i32);
        assert!(eps3_loose < 0.1);
        // all proof preconditions pass in the spectral model
        let model = build_model(&p, 2, 15).unwrap();
        assert!(model.precondition_failures.is_empty());
    }

    #[test]
    fn desk_params_range() {
        assert!(desk_params(1, DeskProfile::Strict).is_err());
        assert!(desk_params(20_000, DeskProfile::Strict).is_err());
        for n in [21u64, 33, 35, 39, 255] {
            let p = desk_params(n, DeskProfile::Strict).unwrap();
            let model = build_model(&p, n - 1, n);
            if let Ok(m) = model {
                assert!(m.precondition_failures.is_empty(), "N={n}");
            }
        }
    }

    #[test]
    fn factor_even_and_prime() {
        let config = RunConfig::new(16, 1);
        let t = factor(&config).unwrap();
        assert_eq!(t.factor, Some(2));
        let mut config = RunConfig::new(13, 1);
        config.max_attempts = 8;
        let t = factor(&config).unwrap();
        assert_eq!(t.factor, None);
        assert_eq!(t.attempts_used, 8);
    }

    #[test]
    fn factor_n15_is_deterministic() {
        let mut config = RunConfig::new(15, 7);
        config.max_attempts = 64;
        let t1 = factor(&config).unwrap();
        let t2 = factor(&config).unwrap();
        let f = t1.factor.expect("N=15 must factor");
        assert!(f == 3 || f == 5);
        assert_eq!(t1.factor, t2.factor);
        assert_eq!(t1.attempts_used, t2.attempts_used);
        let w1: Vec<_> = t1.attempts.iter().map(|a| a.w).collect();
        let w2: Vec<_> = t2.attempts.iter().map(|a| a.w).collect();
        assert_eq!(w1, w2);
    }

    #[test]
    fn oracle_order_one_is_zero() {
        let params = desk_params(15, DeskProfile::Strict).unwrap();
        // a = 1 has order 1: no sample can succeed
        let p = success_probability_oracle(15, 1, &params).unwrap();
        assert!(p < 1e-12, "p = {p}");
    }

    #[test]
    fn oracle_dominated_by_good_gammas() {
        // oracle >= sum of gamma masses over d with gcd(d, r) = 1 whenever
        // Miller's step succeeds on the true order
        let params = desk_params(15, DeskProfile::Strict).unwrap();
        let model = build_model(&params, 2, 15).unwrap();
        let r = model.r;
        assert!(crate::numtheory::miller_factor(2, 15, r).is_some());
        let mut lower = 0.0;
        for d in 0..r {
            if gcd(d, r) == 1 {
                lower += gamma_mass(&model, d);
            }
        }
        let p = success_probability_oracle(15, 2, &params).unwrap();
        assert!(p >= lower - 1e-9, "oracle {p} below gamma lower bound {lower}");
        assert!(p <= 1.0 + 1e-9);
    }

    #[test]
    fn perturbation_report_examples() {
        let params = desk_params(15, DeskProfile::Strict).unwrap();
        let model = build_model(&params, 2, 15).unwrap();
        let clean = perturbed_distribution_gap(&model, 0.0);
        assert_eq!(clean.degradation, 0.0);
        assert!(!clean.voided);
        let budget = 364.0 * 2f64.powi(-16);
        let small = perturbed_distribution_gap(&model, budget);
        assert!(small.degradation <= 5.554e-3 + 1e-6);
        for ((_, f0), (_, f1)) in clean.gamma_floors.iter().zip(&small.gamma_floors) {
            assert!(f1 <= f0);
        }
        assert!(perturbed_distribution_gap(&model, 2.0).voided);
    }
}
