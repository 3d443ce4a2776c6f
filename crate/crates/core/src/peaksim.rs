//! Structured simulator: states as finite superpositions of truncated
//! Gaussian peaks over modes A, B, C and one qubit.
//!
//! Mode A and C peaks are stored per term. Mode B is either a plain peak or
//! an N-spaced comb; in comb form a term stores the comb's integer shift
//! (exactly, as i128 — pseudomodular shifts can exceed 2^53) and the comb
//! envelope enters inner products through closed-form sums, so states whose
//! comb would have ~2^70 peaks stay representable.

use crate::gkpmath::{
    envelope_pair_sum, envelope_square_sum, eta_kappa, mixed_pair_overlap, peak_overlap,
    truncated_pair_overlap,
};
use crate::numtheory::{mod_pow, pseudomodular_power};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

const INTEGER_TOL: f64 = 1e-9;
/// Largest number of peak terms a constructed state may hold.
pub const PEAK_BUDGET: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum PeakError {
    #[error("parameter error: {0}")]
    Params(String),
    #[error("state would need {needed} peaks (budget {budget}); use moderate kappa_A")]
    PeakBudget { needed: u128, budget: usize },
    #[error("gate applied outside its ideal domain: {0}")]
    IdealDomain(String),
    #[error("representation cannot express the result: {0}")]
    Representation(String),
    #[error("states are incompatible for inner products: {0}")]
    Incompatible(String),
    #[error("malformed state: {0}")]
    Malformed(String),
}

/// Squeezing/truncation configuration of the circuit.
///
/// All scale parameters are powers of two in every supported profile; the
/// log2 exponents are the source of truth because the reference table's
/// kappa_B = 2^{-18 n^2} underflows f64 from n = 8 on.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitParams {
    pub m: u32,
    /// R = 2^{m-1} in both the reference table and the desk profiles.
    pub log2_r: i32,
    pub log2_kappa_a: f64,
    pub log2_delta_a: f64,
    pub log2_kappa_b: f64,
    pub log2_delta_b: f64,
    pub log2_delta_c: f64,
    pub log2_eps_a: f64,
    pub log2_eps_b: f64,
    pub log2_eps_c: f64,
    /// Keep peaks with envelope weight at least this fraction of the max.
    pub envelope_cutoff: f64,
}

impl CircuitParams {
    pub fn r(&self) -> f64 {
        (self.log2_r as f64).exp2()
    }
    pub fn kappa_a(&self) -> f64 {
        self.log2_kappa_a.exp2()
    }
    pub fn delta_a(&self) -> f64 {
        self.log2_delta_a.exp2()
    }
    pub fn kappa_b(&self) -> f64 {
        self.log2_kappa_b.exp2()
    }
    pub fn delta_b(&self) -> f64 {
        self.log2_delta_b.exp2()
    }
    pub fn delta_c(&self) -> f64 {
        self.log2_delta_c.exp2()
    }
    pub fn eps_a(&self) -> f64 {
        self.log2_eps_a.exp2()
    }
    pub fn eps_b(&self) -> f64 {
        self.log2_eps_b.exp2()
    }
    pub fn eps_c(&self) -> f64 {
        self.log2_eps_c.exp2()
    }

    /// Build from log2 exponents with eps_X defaulting to sqrt(Delta_X).
    pub fn from_log2(
        m: u32,
        log2_kappa_a: f64,
        log2_delta_a: f64,
        log2_kappa_b: f64,
        log2_delta_b: f64,
        log2_delta_c: f64,
    ) -> Self {
        CircuitParams {
            m,
            log2_r: m as i32 - 1,
            log2_kappa_a,
            log2_delta_a,
            log2_kappa_b,
            log2_delta_b,
            log2_delta_c,
            log2_eps_a: log2_delta_a / 2.0,
            log2_eps_b: log2_delta_b / 2.0,
            log2_eps_c: log2_delta_c / 2.0,
            envelope_cutoff: 1e-10,
        }
    }

    /// Exact match against the reference table at bit length n.
    pub fn matches_table(&self, n: u32) -> bool {
        let n = n as f64;
        self.m as f64 == 17.0 * n
            && self.log2_r as f64 == 17.0 * n - 1.0
            && self.log2_kappa_a == -16.0 * n
            && self.log2_delta_a == -16.0 * n
            && self.log2_kappa_b == -18.0 * n * n
            && self.log2_delta_b == -18.0 * n * n
            && self.log2_delta_c == -50.0 * n
            && self.log2_eps_a == -8.0 * n
            && self.log2_eps_b == -9.0 * n * n
            && self.log2_eps_c == -25.0 * n
    }

    /// Number of envelope peaks kept on each side of the center.
    pub fn envelope_radius(&self) -> u128 {
        let kappa = self.kappa_a();
        if kappa <= 0.0 {
            return u128::MAX;
        }
        let z = (-2.0 * self.envelope_cutoff.ln()).sqrt() / kappa;
        if z >= u128::MAX as f64 {
            u128::MAX
        } else {
            z.ceil() as u128
        }
    }
}

/// JSON-facing form: field names mirror the squeezing symbols. Linear values
/// are emitted when they are representable; log2_* keys are always emitted
/// and win on input (the table's kappa_B underflows f64 from n = 8).
#[derive(Serialize, Deserialize)]
struct ParamsWire {
    m: u32,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(rename = "log2_R", default, skip_serializing_if = "Option::is_none")]
    log2_r: Option<f64>,
    #[serde(rename = "kappa_A", default, skip_serializing_if = "Option::is_none")]
    kappa_a: Option<f64>,
    #[serde(rename = "log2_kappa_A", default, skip_serializing_if = "Option::is_none")]
    log2_kappa_a: Option<f64>,
    #[serde(rename = "delta_A", default, skip_serializing_if = "Option::is_none")]
    delta_a: Option<f64>,
    #[serde(rename = "log2_delta_A", default, skip_serializing_if = "Option::is_none")]
    log2_delta_a: Option<f64>,
    #[serde(rename = "kappa_B", default, skip_serializing_if = "Option::is_none")]
    kappa_b: Option<f64>,
    #[serde(rename = "log2_kappa_B", default, skip_serializing_if = "Option::is_none")]
    log2_kappa_b: Option<f64>,
    #[serde(rename = "delta_B", default, skip_serializing_if = "Option::is_none")]
    delta_b: Option<f64>,
    #[serde(rename = "log2_delta_B", default, skip_serializing_if = "Option::is_none")]
    log2_delta_b: Option<f64>,
    #[serde(rename = "delta_C", default, skip_serializing_if = "Option::is_none")]
    delta_c: Option<f64>,
    #[serde(rename = "log2_delta_C", default, skip_serializing_if = "Option::is_none")]
    log2_delta_c: Option<f64>,
    #[serde(rename = "eps_A", default, skip_serializing_if = "Option::is_none")]
    eps_a: Option<f64>,
    #[serde(rename = "log2_eps_A", default, skip_serializing_if = "Option::is_none")]
    log2_eps_a: Option<f64>,
    #[serde(rename = "eps_B", default, skip_serializing_if = "Option::is_none")]
    eps_b: Option<f64>,
    #[serde(rename = "log2_eps_B", default, skip_serializing_if = "Option::is_none")]
    log2_eps_b: Option<f64>,
    #[serde(rename = "eps_C", default, skip_serializing_if = "Option::is_none")]
    eps_c: Option<f64>,
    #[serde(rename = "log2_eps_C", default, skip_serializing_if = "Option::is_none")]
    log2_eps_c: Option<f64>,
    #[serde(default)]
    envelope_cutoff: Option<f64>,
}

fn linear_if_normal(log2: f64) -> Option<f64> {
    let v = log2.exp2();
    if v.is_normal() {
        Some(v)
    } else {
        None
    }
}

impl Serialize for CircuitParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ParamsWire {
            m: self.m,
            r: linear_if_normal(self.log2_r as f64),
            log2_r: Some(self.log2_r as f64),
            kappa_a: linear_if_normal(self.log2_kappa_a),
            log2_kappa_a: Some(self.log2_kappa_a),
            delta_a: linear_if_normal(self.log2_delta_a),
            log2_delta_a: Some(self.log2_delta_a),
            kappa_b: linear_if_normal(self.log2_kappa_b),
            log2_kappa_b: Some(self.log2_kappa_b),
            delta_b: linear_if_normal(self.log2_delta_b),
            log2_delta_b: Some(self.log2_delta_b),
            delta_c: linear_if_normal(self.log2_delta_c),
            log2_delta_c: Some(self.log2_delta_c),
            eps_a: linear_if_normal(self.log2_eps_a),
            log2_eps_a: Some(self.log2_eps_a),
            eps_b: linear_if_normal(self.log2_eps_b),
            log2_eps_b: Some(self.log2_eps_b),
            eps_c: linear_if_normal(self.log2_eps_c),
            log2_eps_c: Some(self.log2_eps_c),
            envelope_cutoff: Some(self.envelope_cutoff),
        }
        .serialize(s)
    }
}

fn pick_log2<E: serde::de::Error>(
    name: &str,
    log2: Option<f64>,
    linear: Option<f64>,
) -> Result<f64, E> {
    if let Some(v) = log2 {
        return Ok(v);
    }
    match linear {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v.log2()),
        Some(v) => Err(E::custom(format!(
            "{name} = {v} is not a positive normal float; supply log2_{name}"
        ))),
        None => Err(E::custom(format!("missing field {name} (or log2_{name})"))),
    }
}

impl<'de> Deserialize<'de> for CircuitParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = ParamsWire::deserialize(d)?;
        let log2_r = pick_log2::<D::Error>("R", w.log2_r, w.r)?;
        if (log2_r - log2_r.round()).abs() > 1e-9 {
            return Err(D::Error::custom("R must be a power of two"));
        }
        let log2_delta_a = pick_log2::<D::Error>("delta_A", w.log2_delta_a, w.delta_a)?;
        let log2_delta_b = pick_log2::<D::Error>("delta_B", w.log2_delta_b, w.delta_b)?;
        let log2_delta_c = pick_log2::<D::Error>("delta_C", w.log2_delta_c, w.delta_c)?;
        Ok(CircuitParams {
            m: w.m,
            log2_r: log2_r.round() as i32,
            log2_kappa_a: pick_log2::<D::Error>("kappa_A", w.log2_kappa_a, w.kappa_a)?,
            log2_delta_a,
            log2_kappa_b: pick_log2::<D::Error>("kappa_B", w.log2_kappa_b, w.kappa_b)?,
            log2_delta_b,
            log2_delta_c,
            log2_eps_a: w
                .log2_eps_a
                .or(w.eps_a.filter(|v| *v > 0.0).map(f64::log2))
                .unwrap_or(log2_delta_a / 2.0),
            log2_eps_b: w
                .log2_eps_b
                .or(w.eps_b.filter(|v| *v > 0.0).map(f64::log2))
                .unwrap_or(log2_delta_b / 2.0),
            log2_eps_c: w
                .log2_eps_c
                .or(w.eps_c.filter(|v| *v > 0.0).map(f64::log2))
                .unwrap_or(log2_delta_c / 2.0),
            envelope_cutoff: w.envelope_cutoff.unwrap_or(1e-10),
        })
    }
}

/// Gaussian shape of one mode: width and optional truncation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGauss {
    pub delta: f64,
    /// None means untruncated.
    pub eps: Option<f64>,
}

/// How mode B is represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BMode {
    /// A single peak per term at `center_b`.
    Peak,
    /// An integer-spaced comb scaled by `spacing`, displaced per term by the
    /// exact integer `shift_b`, with envelope inverse-width `kappa` (in comb
    /// index units).
    Comb { spacing: u64, kappa: f64 },
}

/// One term of the superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakTerm {
    pub amp: Complex64,
    pub center_a: f64,
    /// Peak center (BMode::Peak) or f64 image of the comb shift.
    pub center_b: f64,
    /// Exact comb shift (BMode::Comb); unused for peak mode.
    pub shift_b: i128,
    pub center_c: f64,
    pub qubit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakState {
    pub terms: Vec<PeakTerm>,
    pub mode_a: ModeGauss,
    pub mode_b: ModeGauss,
    pub b_mode: BMode,
    pub mode_c: ModeGauss,
    /// Stage label or other provenance.
    pub label: String,
    /// 1e-9 plus the envelope mass dropped by the peak cutoff.
    pub norm_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
    C,
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < INTEGER_TOL
}

impl PeakState {
    pub fn norm_sq(&self) -> f64 {
        inner_product(self, self).map(|v| v.re).unwrap_or(f64::NAN)
    }

    fn scale_amps(&mut self, factor: f64) {
        for t in &mut self.terms {
            t.amp *= factor;
        }
    }

    /// JSON document with the per-mode header and terms as
    /// [re, im, cA, cB, cC, q] arrays (cB as a string when outside the f64
    /// exact-integer range).
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|t| {
                let cb: serde_json::Value = match self.b_mode {
                    BMode::Comb { .. } if t.shift_b.abs() > (1i128 << 53) => {
                        json!(t.shift_b.to_string())
                    }
                    BMode::Comb { .. } => json!(t.shift_b as f64),
                    BMode::Peak => json!(t.center_b),
                };
                json!([t.amp.re, t.amp.im, t.center_a, cb, t.center_c, t.qubit])
            })
            .collect();
        json!({
            "label": self.label,
            "mode_a": { "delta": self.mode_a.delta, "eps": self.mode_a.eps },
            "mode_b": { "delta": self.mode_b.delta, "eps": self.mode_b.eps, "kind": match self.b_mode {
                BMode::Peak => json!("peak"),
                BMode::Comb { spacing, kappa } => json!({"spacing": spacing, "kappa": kappa}),
            }},
            "mode_c": { "delta": self.mode_c.delta, "eps": self.mode_c.eps },
            "norm_tolerance": self.norm_tolerance,
            "terms": terms,
        })
    }
}

// ---------------------------------------------------------------------------
// Stage construction
// ---------------------------------------------------------------------------

/// Build the proof-chain state for stage j in 1..=5.
///
/// Stage 1 is the windowed product state before the arithmetic unitary
/// (applying the ideal unitary maps it term-by-term onto stage 2); stage 0
/// differs from it only by truncation of infinite combs and has no finite
/// peak list, so it is not constructible here.
pub fn build_stage(
    params: &CircuitParams,
    a: u64,
    n: u64,
    stage: u8,
) -> Result<PeakState, PeakError> {
    if !(1..=5).contains(&stage) {
        return Err(PeakError::Params(format!(
            "stage {stage} not constructible (stages 1..=5)"
        )));
    }
    if n < 2 || a == 0 || a >= n || crate::numtheory::gcd(a, n) != 1 {
        return Err(PeakError::Params(format!("need a in Z_{n}^* (got a={a})")));
    }
    let kappa_a = params.kappa_a();
    let delta_a = params.delta_a();
    if !(kappa_a > 0.0 && delta_a > 0.0 && params.kappa_b() > 0.0) {
        return Err(PeakError::Params(
            "kappa_A, Delta_A, kappa_B underflow f64; use desk-scale parameters".into(),
        ));
    }
    let radius = params.envelope_radius();
    let count = 2 * radius + 1;
    if count > PEAK_BUDGET as u128 {
        return Err(PeakError::PeakBudget {
            needed: count,
            budget: PEAK_BUDGET,
        });
    }
    let r_pos = params.r();
    if r_pos > 2f64.powi(52) {
        return Err(PeakError::PeakBudget {
            needed: u128::MAX,
            budget: PEAK_BUDGET,
        });
    }
    let radius = radius as i64;
    let r_int = r_pos as i64;
    // window {0..2R-1} for stages 1..3; all integers for 4 and 5
    let (lo, hi) = if stage <= 3 {
        ((r_int - radius).max(0), (r_int + radius).min(2 * r_int - 1))
    } else {
        (r_int - radius, r_int + radius)
    };
    let mut terms = Vec::with_capacity((hi - lo + 1) as usize);
    for z in lo..=hi {
        let weight = eta_kappa((z - r_int) as f64, kappa_a);
        let shift: i128 = match stage {
            1 => 0,
            2 => {
                let f = pseudomodular_power(a, n, params.m, z as u64);
                big_to_i128(&f)?
            }
            _ => mod_pow(a, z as u64, n) as i128,
        };
        terms.push(PeakTerm {
            amp: Complex64::new(weight, 0.0),
            center_a: z as f64,
            center_b: shift as f64,
            shift_b: shift,
            center_c: 0.0,
            qubit: 0,
        });
    }
    let eps_a = if stage == 5 { None } else { Some(params.eps_a()) };
    let mut state = PeakState {
        terms,
        mode_a: ModeGauss {
            delta: delta_a,
            eps: eps_a,
        },
        mode_b: ModeGauss {
            delta: params.delta_b(),
            eps: Some(params.eps_b()),
        },
        b_mode: BMode::Comb {
            spacing: n,
            kappa: params.kappa_b(),
        },
        mode_c: ModeGauss {
            delta: params.delta_c(),
            eps: Some(params.eps_c()),
        },
        label: format!("psi{stage}"),
        norm_tolerance: 0.0,
    };
    // Normalize against the full-window envelope mass; the mass dropped by
    // the peak cutoff goes into the tolerance annotation. (The {0..2R-1}
    // window differs from the full sum by e^{-kappa^2 R^2} which is below
    // f64 resolution for every constructible configuration.)
    let full = envelope_square_sum(kappa_a);
    let norm = if stage == 5 {
        // untruncated peaks: cross terms contribute; use the exact
        // self-inner-product of the raw term list
        let raw_sq = inner_product(&state, &state)
            .map_err(|e| PeakError::Malformed(e.to_string()))?
            .re;
        let kept_diag: f64 = state.terms.iter().map(|t| t.amp.norm_sqr()).sum();
        state.norm_tolerance = 1e-9 + (1.0 - kept_diag / full).max(0.0);
        (raw_sq + (full - kept_diag)).sqrt()
    } else {
        let kept: f64 = state.terms.iter().map(|t| t.amp.norm_sqr()).sum();
        state.norm_tolerance = 1e-9 + (1.0 - kept / full).max(0.0);
        full.sqrt()
    };
    state.scale_amps(1.0 / norm);
    Ok(state)
}

fn big_to_i128(v: &BigUint) -> Result<i128, PeakError> {
    v.to_i128().ok_or_else(|| {
        PeakError::Representation(
            "pseudomodular shift exceeds i128; instance too large for the peak simulator".into(),
        )
    })
}

// ---------------------------------------------------------------------------
// Ideal gate semantics
// ---------------------------------------------------------------------------

/// Scalar multiplication M_alpha on one mode: centers, width and truncation
/// scale by alpha; amplitudes unchanged.
pub fn apply_scalar_mult(
    state: &PeakState,
    mode: Mode,
    alpha: f64,
) -> Result<PeakState, PeakError> {
    if !(alpha > 0.0) {
        return Err(PeakError::Params("alpha must be positive".into()));
    }
    let mut out = state.clone();
    match mode {
        Mode::A => {
            out.mode_a.delta *= alpha;
            out.mode_a.eps = out.mode_a.eps.map(|e| e * alpha);
            for t in &mut out.terms {
                t.center_a *= alpha;
            }
        }
        Mode::C => {
            out.mode_c.delta *= alpha;
            out.mode_c.eps = out.mode_c.eps.map(|e| e * alpha);
            for t in &mut out.terms {
                t.center_c *= alpha;
            }
        }
        Mode::B => {
            out.mode_b.delta *= alpha;
            out.mode_b.eps = out.mode_b.eps.map(|e| e * alpha);
            match &mut out.b_mode {
                BMode::Peak => {
                    for t in &mut out.terms {
                        t.center_b *= alpha;
                    }
                }
                BMode::Comb { spacing, .. } => {
                    if !is_integer(alpha) {
                        return Err(PeakError::Representation(
                            "comb scalar multiplication needs an integer alpha".into(),
                        ));
                    }
                    let ai = alpha.round() as i128;
                    *spacing = (*spacing as i128)
                        .checked_mul(ai)
                        .and_then(|v| u64::try_from(v).ok())
                        .ok_or_else(|| {
                            PeakError::Representation("comb spacing overflow".into())
                        })?;
                    // peaks sit at alpha * (spacing*y + shift): widths above
                    // already scaled; shift stays in comb index units times
                    // the new spacing, i.e. unchanged as an index shift only
                    // if alpha divides evenly. Keep absolute shifts exact:
                    for t in &mut out.terms {
                        t.shift_b = t.shift_b.checked_mul(ai).ok_or_else(|| {
                            PeakError::Representation("comb shift overflow".into())
                        })?;
                        t.center_b = t.shift_b as f64;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Translation by t on one mode.
pub fn apply_shift(state: &PeakState, mode: Mode, t: f64) -> Result<PeakState, PeakError> {
    let mut out = state.clone();
    match mode {
        Mode::A => out.terms.iter_mut().for_each(|x| x.center_a += t),
        Mode::C => out.terms.iter_mut().for_each(|x| x.center_c += t),
        Mode::B => match out.b_mode {
            BMode::Peak => out.terms.iter_mut().for_each(|x| x.center_b += t),
            BMode::Comb { .. } => {
                if !is_integer(t) {
                    return Err(PeakError::Representation(
                        "comb shifts must be integers to stay exact".into(),
                    ));
                }
                let ti = t.round() as i128;
                for x in &mut out.terms {
                    x.shift_b += ti;
                    x.center_b = x.shift_b as f64;
                }
            }
        },
    }
    Ok(out)
}

fn integer_center(x: f64, what: &str) -> Result<i64, PeakError> {
    if !is_integer(x) {
        return Err(PeakError::IdealDomain(format!(
            "{what} = {x} is not an integer; the approximate path owns this case"
        )));
    }
    Ok(x.round() as i64)
}

/// U_{a,N,m}: per term, translate mode B by the pseudomodular power of the
/// mode-A center. Requires integer nonnegative A centers, C at 0, qubit 0.
pub fn apply_uanm_ideal(
    state: &PeakState,
    a: u64,
    n: u64,
    m: u32,
) -> Result<PeakState, PeakError> {
    let mut out = state.clone();
    for t in &mut out.terms {
        let x = integer_center(t.center_a, "center_A")?;
        if x < 0 {
            return Err(PeakError::IdealDomain(format!("center_A = {x} negative")));
        }
        if t.center_c != 0.0 {
            return Err(PeakError::IdealDomain(format!(
                "center_C = {} must be 0",
                t.center_c
            )));
        }
        if t.qubit != 0 {
            return Err(PeakError::IdealDomain("qubit must be 0".into()));
        }
        let f = big_to_i128(&pseudomodular_power(a, n, m, x as u64))?;
        match out.b_mode {
            BMode::Peak => t.center_b += f as f64,
            BMode::Comb { .. } => {
                t.shift_b += f;
                t.center_b = t.shift_b as f64;
            }
        }
    }
    Ok(out)
}

/// LSB extraction from the given mode into the qubit.
pub fn apply_lsb_ideal(state: &PeakState, mode: Mode) -> Result<PeakState, PeakError> {
    let mut out = state.clone();
    for t in &mut out.terms {
        let c = match mode {
            Mode::A => t.center_a,
            Mode::B => match out.b_mode {
                BMode::Peak => t.center_b,
                BMode::Comb { .. } => {
                    return Err(PeakError::IdealDomain(
                        "LSB of a comb mode is undefined".into(),
                    ))
                }
            },
            Mode::C => t.center_c,
        };
        let x = integer_center(c, "LSB input")?;
        t.qubit ^= (x.rem_euclid(2)) as u8;
    }
    Ok(out)
}

fn uniform_branch_bit<F: Fn(&PeakTerm) -> f64>(
    state: &PeakState,
    pick: F,
    what: &str,
) -> Result<i64, PeakError> {
    let mut bit: Option<i64> = None;
    for t in &state.terms {
        let x = integer_center(pick(t), what)?;
        let b = x.rem_euclid(2);
        match bit {
            None => bit = Some(b),
            Some(prev) if prev != b => {
                return Err(PeakError::Representation(format!(
                    "{what} parity differs across terms; per-state widths cannot express the result"
                )))
            }
            _ => {}
        }
    }
    bit.ok_or_else(|| PeakError::Malformed("empty state".into()))
}

/// V_alpha on integer-centered states with qubit 0:
/// (x, y, z, 0) -> ((x - x0)/2, alpha^{x0} y, 2z + x0, 0).
/// The mode-B width scales by alpha^{x0}, so x0 must be uniform across terms.
pub fn apply_valpha_ideal(state: &PeakState, alpha: f64) -> Result<PeakState, PeakError> {
    let x0 = uniform_branch_bit(state, |t| t.center_a, "center_A")?;
    let mut out = state.clone();
    for t in &mut out.terms {
        if t.qubit != 0 {
            return Err(PeakError::IdealDomain("qubit must be 0".into()));
        }
        let x = integer_center(t.center_a, "center_A")?;
        let z = integer_center(t.center_c, "center_C")?;
        t.center_a = ((x - x0) / 2) as f64;
        t.center_c = (2 * z + x0) as f64;
    }
    out.mode_a.delta *= 0.5;
    out.mode_a.eps = out.mode_a.eps.map(|e| e * 0.5);
    out.mode_c.delta *= 2.0;
    out.mode_c.eps = out.mode_c.eps.map(|e| e * 2.0);
    if x0 == 1 {
        out = apply_scalar_mult(&out, Mode::B, alpha)?;
    }
    Ok(out)
}

/// Inverse of V_alpha: (x, y, z, 0) -> (2x + z0, y / alpha^{z0}, (z - z0)/2, 0).
pub fn apply_valpha_dagger_ideal(state: &PeakState, alpha: f64) -> Result<PeakState, PeakError> {
    let z0 = uniform_branch_bit(state, |t| t.center_c, "center_C")?;
    let mut out = state.clone();
    for t in &mut out.terms {
        if t.qubit != 0 {
            return Err(PeakError::IdealDomain("qubit must be 0".into()));
        }
        let x = integer_center(t.center_a, "center_A")?;
        let z = integer_center(t.center_c, "center_C")?;
        t.center_a = (2 * x + z0) as f64;
        t.center_c = ((z - z0) / 2) as f64;
    }
    out.mode_a.delta *= 2.0;
    out.mode_a.eps = out.mode_a.eps.map(|e| e * 2.0);
    out.mode_c.delta *= 0.5;
    out.mode_c.eps = out.mode_c.eps.map(|e| e * 0.5);
    if z0 == 1 {
        out = apply_scalar_mult(&out, Mode::B, 1.0 / alpha)?;
    }
    Ok(out)
}

/// V_{a,N,m}: multiplies mode B by f_{a,N,m}(x); A and C are restored.
/// The B width scales by f(x), so f(x) must be uniform across terms.
pub fn apply_vanm_ideal(
    state: &PeakState,
    a: u64,
    n: u64,
    m: u32,
) -> Result<PeakState, PeakError> {
    let mut factor: Option<i128> = None;
    for t in &state.terms {
        let x = integer_center(t.center_a, "center_A")?;
        let z = integer_center(t.center_c, "center_C")?;
        if x < 0 || z < 0 {
            return Err(PeakError::IdealDomain(
                "V_{a,N,m} needs nonnegative integer centers in A and C".into(),
            ));
        }
        let f = big_to_i128(&pseudomodular_power(a, n, m, x as u64))?;
        match factor {
            None => factor = Some(f),
            Some(prev) if prev != f => {
                return Err(PeakError::Representation(
                    "f(x) differs across terms; per-state widths cannot express the result".into(),
                ))
            }
            _ => {}
        }
    }
    let f = factor.ok_or_else(|| PeakError::Malformed("empty state".into()))? as f64;
    apply_scalar_mult(state, Mode::B, f)
}

// ---------------------------------------------------------------------------
// Inner products and trace distance
// ---------------------------------------------------------------------------

fn gauss_compatible(g1: &ModeGauss, g2: &ModeGauss, which: &str) -> Result<(), PeakError> {
    if (g1.delta - g2.delta).abs() > 1e-12 * g1.delta.abs().max(g2.delta.abs()) {
        return Err(PeakError::Incompatible(format!(
            "{which} widths differ: {} vs {}",
            g1.delta, g2.delta
        )));
    }
    match (g1.eps, g2.eps) {
        (Some(e1), Some(e2))
            if (e1 - e2).abs() > 1e-12 * e1.abs().max(e2.abs()) =>
        {
            Err(PeakError::Incompatible(format!(
                "{which} truncations differ: {e1} vs {e2}"
            )))
        }
        _ => Ok(()),
    }
}

fn mode_overlap(c1: f64, c2: f64, g1: &ModeGauss, g2: &ModeGauss) -> f64 {
    match (g1.eps, g2.eps) {
        (Some(e), Some(_)) => truncated_pair_overlap(c1, c2, g1.delta, e),
        (None, Some(e)) => mixed_pair_overlap(c1, c2, g1.delta, e),
        (Some(e), None) => mixed_pair_overlap(c2, c1, g1.delta, e),
        (None, None) => peak_overlap(c1, c2, g1.delta),
    }
}

fn comb_overlap(
    s1: i128,
    s2: i128,
    spacing: u64,
    kappa: f64,
    g1: &ModeGauss,
    g2: &ModeGauss,
) -> f64 {
    let diff = s1 - s2;
    let sp = spacing as i128;
    let d_index = diff.div_euclid(sp);
    let rem = diff.rem_euclid(sp);
    // fractional comb misalignment in index units
    let (d_index, frac) = if rem == 0 {
        (d_index, 0.0)
    } else if (rem as f64) < spacing as f64 / 2.0 {
        (d_index, rem as f64 / spacing as f64)
    } else {
        (d_index + 1, rem as f64 / spacing as f64 - 1.0)
    };
    let peak_factor = mode_overlap(frac, 0.0, g1, g2);
    if peak_factor == 0.0 {
        return 0.0;
    }
    let env = envelope_pair_sum(kappa, d_index as f64) / envelope_square_sum(kappa);
    peak_factor * env
}

/// Exact inner product <s1, s2> over term pairs, with per-mode closed-form
/// overlaps. Pairs are matched through a band on mode-A centers.
pub fn inner_product(s1: &PeakState, s2: &PeakState) -> Result<Complex64, PeakError> {
    gauss_compatible(&s1.mode_a, &s2.mode_a, "mode A")?;
    gauss_compatible(&s1.mode_b, &s2.mode_b, "mode B")?;
    gauss_compatible(&s1.mode_c, &s2.mode_c, "mode C")?;
    let comb = match (s1.b_mode, s2.b_mode) {
        (BMode::Peak, BMode::Peak) => None,
        (
            BMode::Comb { spacing: n1, kappa: k1 },
            BMode::Comb { spacing: n2, kappa: k2 },
        ) if n1 == n2 && (k1 - k2).abs() <= 1e-12 * k1.max(k2) => Some((n1, k1)),
        _ => {
            return Err(PeakError::Incompatible(
                "mode B representations differ (peak vs comb or mismatched comb)".into(),
            ))
        }
    };
    // band width on mode A beyond which every overlap underflows
    let da = s1.mode_a.delta;
    let band = match (s1.mode_a.eps, s2.mode_a.eps) {
        (Some(e1), Some(e2)) => e1 + e2,
        _ => 2.0 * da * 745f64.sqrt() + 1.0,
    };
    let mut idx1: Vec<usize> = (0..s1.terms.len()).collect();
    let mut idx2: Vec<usize> = (0..s2.terms.len()).collect();
    idx1.sort_by(|&i, &j| s1.terms[i].center_a.total_cmp(&s1.terms[j].center_a));
    idx2.sort_by(|&i, &j| s2.terms[i].center_a.total_cmp(&s2.terms[j].center_a));
    let mut acc_re = crate::quad::Kahan::default();
    let mut acc_im = crate::quad::Kahan::default();
    let mut start = 0usize;
    for &i in &idx1 {
        let t1 = &s1.terms[i];
        while start < idx2.len() && s2.terms[idx2[start]].center_a < t1.center_a - band {
            start += 1;
        }
        let mut k = start;
        while k < idx2.len() && s2.terms[idx2[k]].center_a <= t1.center_a + band {
            let t2 = &s2.terms[idx2[k]];
            k += 1;
            if t1.qubit != t2.qubit {
                continue;
            }
            let fa = mode_overlap(t1.center_a, t2.center_a, &s1.mode_a, &s2.mode_a);
            if fa == 0.0 {
                continue;
            }
            let fb = match comb {
                Some((spacing, kappa)) => {
                    comb_overlap(t1.shift_b, t2.shift_b, spacing, kappa, &s1.mode_b, &s2.mode_b)
                }
                None => mode_overlap(t1.center_b, t2.center_b, &s1.mode_b, &s2.mode_b),
            };
            if fb == 0.0 {
                continue;
            }
            let fc = mode_overlap(t1.center_c, t2.center_c, &s1.mode_c, &s2.mode_c);
            if fc == 0.0 {
                continue;
            }
            let v = t1.amp.conj() * t2.amp * (fa * fb * fc);
            acc_re.add(v.re);
            acc_im.add(v.im);
        }
    }
    Ok(Complex64::new(acc_re.value(), acc_im.value()))
}

/// Trace distance between pure states: 2 sqrt(1 - |<s1, s2>|^2), with the
/// overlap normalized by the state norms.
pub fn trace_distance(s1: &PeakState, s2: &PeakState) -> Result<f64, PeakError> {
    let ov = inner_product(s1, s2)?;
    let n1 = inner_product(s1, s1)?.re;
    let n2 = inner_product(s2, s2)?.re;
    let fidelity = (ov.norm_sqr() / (n1 * n2)).min(1.0);
    Ok(2.0 * (1.0 - fidelity).sqrt())
}

// ---------------------------------------------------------------------------
// Modular measurement
// ---------------------------------------------------------------------------

/// Measure the mode-B comb residue: samples k in Z_N proportionally to the
/// squared amplitude of terms whose shift is congruent to k, and returns the
/// renormalized collapsed state.
pub fn modular_measurement<R: Rng>(
    state: &PeakState,
    rng: &mut R,
) -> Result<(u64, PeakState), PeakError> {
    let spacing = match state.b_mode {
        BMode::Comb { spacing, .. } => spacing,
        BMode::Peak => {
            return Err(PeakError::Malformed(
                "modular measurement needs a mode-B comb".into(),
            ))
        }
    };
    let mut masses: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for t in &state.terms {
        let k = t.shift_b.rem_euclid(spacing as i128) as u64;
        *masses.entry(k).or_insert(0.0) += t.amp.norm_sqr();
    }
    let total: f64 = masses.values().sum();
    if !(total > 0.0) {
        return Err(PeakError::Malformed("state has no mass".into()));
    }
    let mut u: f64 = rng.gen::<f64>() * total;
    let mut chosen = *masses.keys().next_back().unwrap();
    for (&k, &mass) in &masses {
        if u < mass {
            chosen = k;
            break;
        }
        u -= mass;
    }
    let mass = masses[&chosen];
    let mut collapsed = state.clone();
    collapsed
        .terms
        .retain(|t| t.shift_b.rem_euclid(spacing as i128) as u64 == chosen);
    collapsed.scale_amps(1.0 / mass.sqrt());
    collapsed.label = format!("{}|k={chosen}", state.label);
    Ok((chosen, collapsed))
}

/// Residue-class masses without sampling (for oracles and tests).
pub fn residue_masses(state: &PeakState) -> Result<Vec<(u64, f64)>, PeakError> {
    let spacing = match state.b_mode {
        BMode::Comb { spacing, .. } => spacing,
        BMode::Peak => {
            return Err(PeakError::Malformed(
                "residue masses need a mode-B comb".into(),
            ))
        }
    };
    let mut masses: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for t in &state.terms {
        let k = t.shift_b.rem_euclid(spacing as i128) as u64;
        *masses.entry(k).or_insert(0.0) += t.amp.norm_sqr();
    }
    Ok(masses.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Moderate desk-scale parameters for tests: kappa_A = Delta_A = 2^-6,
    /// m = 8, R = 128, kappa_B = Delta_B = 2^-10, Delta_C = 2^-20.
    fn moderate() -> CircuitParams {
        CircuitParams::from_log2(8, -6.0, -6.0, -10.0, -10.0, -20.0)
    }

    fn single_term(x: f64, y: f64, z: f64, qubit: u8) -> PeakState {
        PeakState {
            terms: vec![PeakTerm {
                amp: Complex64::new(1.0, 0.0),
                center_a: x,
                center_b: y,
                shift_b: 0,
                center_c: z,
                qubit,
            }],
            mode_a: ModeGauss { delta: 0.01, eps: Some(0.05) },
            mode_b: ModeGauss { delta: 0.01, eps: Some(0.05) },
            b_mode: BMode::Peak,
            mode_c: ModeGauss { delta: 0.01, eps: Some(0.05) },
            label: "test".into(),
            norm_tolerance: 1e-9,
        }
    }

    #[test]
    fn stage_norms_are_unit() {
        let params = moderate();
        for stage in 1..=5u8 {
            let s = build_stage(&params, 2, 15, stage).unwrap();
            let norm = s.norm_sq();
            assert!(
                (norm - 1.0).abs() <= s.norm_tolerance + 1e-9,
                "stage {stage}: norm^2 = {norm}, tol = {}",
                s.norm_tolerance
            );
        }
    }

    #[test]
    fn stage3_mode_b_shifts_are_residues() {
        let s = build_stage(&moderate(), 2, 15, 3).unwrap();
        let mut seen: Vec<i128> = s.terms.iter().map(|t| t.shift_b).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![1, 2, 4, 8]);
    }

    #[test]
    fn uanm_ideal_maps_stage1_to_stage2() {
        let params = moderate();
        let s1 = build_stage(&params, 2, 15, 1).unwrap();
        let s2 = build_stage(&params, 2, 15, 2).unwrap();
        let mapped = apply_uanm_ideal(&s1, 2, 15, params.m).unwrap();
        assert_eq!(mapped.terms.len(), s2.terms.len());
        for (a, b) in mapped.terms.iter().zip(&s2.terms) {
            assert_eq!(a.center_a, b.center_a);
            assert_eq!(a.shift_b, b.shift_b);
            assert!((a.amp - b.amp).norm() < 1e-14);
        }
    }

    #[test]
    fn uanm_ideal_examples() {
        let s = single_term(0.0, 3.0, 0.0, 0);
        let out = apply_uanm_ideal(&s, 2, 15, 4).unwrap();
        assert_eq!(out.terms[0].center_b, 4.0); // y + f(0) = 3 + 1
        let s = single_term(5.0, 0.0, 0.0, 0);
        let out = apply_uanm_ideal(&s, 2, 15, 4).unwrap();
        assert_eq!(out.terms[0].center_b, 2.0); // f(5) = 2
        // non-integer center rejected
        let s = single_term(0.5, 0.0, 0.0, 0);
        assert!(matches!(
            apply_uanm_ideal(&s, 2, 15, 4),
            Err(PeakError::IdealDomain(_))
        ));
        // nonzero C rejected
        let s = single_term(1.0, 0.0, 1.0, 0);
        assert!(apply_uanm_ideal(&s, 2, 15, 4).is_err());
    }

    #[test]
    fn uanm_preserves_norm() {
        let params = moderate();
        let s = build_stage(&params, 7, 15, 1).unwrap();
        let out = apply_uanm_ideal(&s, 7, 15, params.m).unwrap();
        assert!((out.norm_sq() - s.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn scalar_mult_and_shift() {
        let s = single_term(3.0, 2.0, 1.0, 0);
        let id = apply_scalar_mult(&s, Mode::A, 1.0).unwrap();
        assert_eq!(id.terms[0].center_a, 3.0);
        let doubled = apply_scalar_mult(&s, Mode::A, 2.0).unwrap();
        let back = apply_scalar_mult(&doubled, Mode::A, 0.5).unwrap();
        assert!((back.terms[0].center_a - 3.0).abs() < 1e-12);
        assert!((back.mode_a.delta - s.mode_a.delta).abs() < 1e-14);
        assert!((back.mode_a.eps.unwrap() - s.mode_a.eps.unwrap()).abs() < 1e-14);
        let shifted = apply_shift(&s, Mode::C, 2.5).unwrap();
        assert_eq!(shifted.terms[0].center_c, 3.5);
        let round = apply_shift(&shifted, Mode::C, -2.5).unwrap();
        assert_eq!(round.terms[0].center_c, 1.0);
    }

    #[test]
    fn comb_scalar_mult_sets_spacing() {
        // M_N on a unit-spaced comb gives spacing N
        let mut s = single_term(0.0, 0.0, 0.0, 0);
        s.b_mode = BMode::Comb { spacing: 1, kappa: 0.125 };
        let out = apply_scalar_mult(&s, Mode::B, 15.0).unwrap();
        match out.b_mode {
            BMode::Comb { spacing, .. } => assert_eq!(spacing, 15),
            _ => panic!(),
        }
        assert!(apply_scalar_mult(&s, Mode::B, 1.5).is_err());
    }

    #[test]
    fn lsb_ideal_flips_qubit() {
        let s = single_term(3.0, 0.0, 0.0, 0);
        let out = apply_lsb_ideal(&s, Mode::A).unwrap();
        assert_eq!(out.terms[0].qubit, 1);
        let s = single_term(2.0, 0.0, 0.0, 1);
        let out = apply_lsb_ideal(&s, Mode::A).unwrap();
        assert_eq!(out.terms[0].qubit, 1); // 0 xor 1
    }

    #[test]
    fn valpha_ideal_and_roundtrip() {
        // x0 = 0 branch leaves B alone
        let s = single_term(0.0, 4.0, 0.0, 0);
        let out = apply_valpha_ideal(&s, 3.0).unwrap();
        assert_eq!(out.terms[0].center_a, 0.0);
        assert_eq!(out.terms[0].center_b, 4.0);
        assert_eq!(out.terms[0].center_c, 0.0);
        // x0 = 1 branch scales B and moves the bit to C
        let s = single_term(5.0, 1.0, 0.0, 0);
        let out = apply_valpha_ideal(&s, 3.0).unwrap();
        assert_eq!(out.terms[0].center_a, 2.0);
        assert_eq!(out.terms[0].center_b, 3.0);
        assert_eq!(out.terms[0].center_c, 1.0);
        // V† V = identity, term-exact including widths
        let back = apply_valpha_dagger_ideal(&out, 3.0).unwrap();
        assert_eq!(back.terms[0].center_a, 5.0);
        assert!((back.terms[0].center_b - 1.0).abs() < 1e-12);
        assert_eq!(back.terms[0].center_c, 0.0);
        assert!((back.mode_a.delta - s.mode_a.delta).abs() < 1e-15);
        assert!((back.mode_b.delta - s.mode_b.delta).abs() < 1e-15);
        assert!((back.mode_c.delta - s.mode_c.delta).abs() < 1e-15);
    }

    #[test]
    fn vanm_ideal_example() {
        let s = single_term(5.0, 1.0, 0.0, 0);
        let out = apply_vanm_ideal(&s, 2, 15, 4).unwrap();
        assert_eq!(out.terms[0].center_a, 5.0);
        assert_eq!(out.terms[0].center_b, 2.0); // f(5) * 1
        assert_eq!(out.terms[0].center_c, 0.0);
    }

    #[test]
    fn mixed_branch_rejected() {
        let mut s = single_term(0.0, 1.0, 0.0, 0);
        s.terms.push(PeakTerm {
            amp: Complex64::new(1.0, 0.0),
            center_a: 1.0,
            center_b: 1.0,
            shift_b: 0,
            center_c: 0.0,
            qubit: 0,
        });
        assert!(matches!(
            apply_valpha_ideal(&s, 2.0),
            Err(PeakError::Representation(_))
        ));
    }

    #[test]
    fn inner_product_stage_bounds() {
        let params = moderate();
        let s2 = build_stage(&params, 7, 15, 2).unwrap();
        let s3 = build_stage(&params, 7, 15, 3).unwrap();
        let s4 = build_stage(&params, 7, 15, 4).unwrap();
        let s5 = build_stage(&params, 7, 15, 5).unwrap();
        // <psi2, psi3> >= 1 - kappa_B^2 N^{2m} / 2 (trivially satisfied when
        // the rhs is very negative, but the overlap must stay in [0, 1])
        let ov23 = inner_product(&s2, &s3).unwrap().re;
        let bound = 1.0 - params.kappa_b().powi(2) * 15f64.powi(2 * params.m as i32) / 2.0;
        assert!(ov23 >= bound && ov23 <= 1.0 + 1e-9, "ov23 = {ov23}");
        // <psi3, psi4>^2 >= 1 - 2 e^{-kappa^2 R^2 / 4}
        let ov34 = inner_product(&s3, &s4).unwrap().re;
        let arg = params.kappa_a().powi(2) * params.r().powi(2) / 4.0;
        assert!(ov34 * ov34 >= 1.0 - 2.0 * (-arg).exp() - 1e-12);
        // <psi4, psi5>^2 >= 1 - 9 Delta_A
        let ov45 = inner_product(&s4, &s5).unwrap().re;
        assert!(ov45 * ov45 >= 1.0 - 9.0 * params.delta_a());
    }

    #[test]
    fn trace_distance_limits() {
        let params = moderate();
        let s3 = build_stage(&params, 2, 15, 3).unwrap();
        assert!(trace_distance(&s3, &s3).unwrap() < 1e-7);
        // orthogonal single-term states
        let a = single_term(0.0, 0.0, 0.0, 0);
        let b = single_term(1.0, 0.0, 0.0, 0);
        assert!((trace_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn modular_measurement_masses() {
        let params = moderate();
        let s3 = build_stage(&params, 2, 15, 3).unwrap();
        let masses = residue_masses(&s3).unwrap();
        let keys: Vec<u64> = masses.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, vec![1, 2, 4, 8]);
        let total: f64 = masses.iter().map(|(_, m)| m).sum();
        assert!((total - 1.0).abs() < 1e-9 + s3.norm_tolerance);
        // exact masses by direct envelope summation over residue classes
        let kappa = params.kappa_a();
        let r_int = params.r() as i64;
        let radius = params.envelope_radius() as i64;
        let env: f64 = envelope_square_sum(kappa);
        for (k, mass) in &masses {
            let mut direct = 0.0;
            for z in (r_int - radius).max(0)..=(r_int + radius).min(2 * r_int - 1) {
                if mod_pow(2, z as u64, 15) == *k {
                    direct += eta_kappa((z - r_int) as f64, kappa).powi(2);
                }
            }
            assert!(
                (mass - direct / env).abs() < 1e-12,
                "k={k}: {mass} vs {}",
                direct / env
            );
        }
        // collapsed comb is supported on z = ind_a(k) (mod r)
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (k, collapsed) = modular_measurement(&s3, &mut rng).unwrap();
        let r = crate::numtheory::order(2, 15).unwrap();
        let ind = (0..r).find(|&i| mod_pow(2, i, 15) == k).unwrap();
        for t in &collapsed.terms {
            let z = t.center_a as u64;
            assert_eq!(z % r, ind % r, "comb spacing r with offset ind_a(k)");
        }
        assert!((collapsed.norm_sq() - 1.0).abs() < 1e-9 + collapsed.norm_tolerance);
    }

    #[test]
    fn measurement_with_order_one_is_deterministic() {
        let params = moderate();
        let s3 = build_stage(&params, 1, 15, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (k, collapsed) = modular_measurement(&s3, &mut rng).unwrap();
        assert_eq!(k, 1);
        assert_eq!(collapsed.terms.len(), s3.terms.len());
    }

    #[test]
    fn params_serde_roundtrip() {
        let p = moderate();
        let s = serde_json::to_string(&p).unwrap();
        let q: CircuitParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        // linear-only input works for desk-scale magnitudes
        let q: CircuitParams = serde_json::from_str(
            r#"{"m": 8, "R": 128.0, "kappa_A": 0.015625, "delta_A": 0.015625,
                "kappa_B": 0.0009765625, "delta_B": 0.0009765625,
                "delta_C": 9.5367431640625e-07}"#,
        )
        .unwrap();
        assert_eq!(q.m, 8);
        assert_eq!(q.log2_r, 7);
        assert_eq!(q.log2_kappa_a, -6.0);
        assert_eq!(q.log2_eps_a, -3.0); // defaults to sqrt(delta_A)
    }

    #[test]
    fn table_scale_build_is_rejected() {
        let p = crate::pipeline::table_params(15);
        match build_stage(&p, 2, 15, 3) {
            Err(PeakError::PeakBudget { .. }) => {}
            other => panic!("expected peak budget rejection, got {other:?}"),
        }
    }

    #[test]
    fn json_dump_shape() {
        let s = build_stage(&moderate(), 2, 15, 3).unwrap();
        let v = s.to_json();
        assert!(v["terms"].as_array().unwrap().len() == s.terms.len());
        assert_eq!(v["terms"][0].as_array().unwrap().len(), 6);
    }
}
