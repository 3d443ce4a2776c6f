//! Error calculus for approximate function evaluation by the composite
//! unitaries: closed-form delta bounds, their composition along compatible
//! domains, and the five-stage error budget of the output-state analysis.
//!
//! Domains are symbolic: the circuits only ever compose a small grammar of
//! sets (all reals, integers within eps, nonnegative integers within eps,
//! the origin within eps) per mode, plus a qubit subset, so containment is
//! decidable by pattern rules.

use crate::peaksim::CircuitParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain mismatch composing {first} -> {second}: {detail}")]
    DomainMismatch {
        first: String,
        second: String,
        detail: String,
    },
}

/// Per-mode domain descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModeDomain {
    Reals,
    /// integers, each within eps
    Integers(f64),
    /// nonnegative integers, each within eps
    NonNegIntegers(f64),
    /// the origin within eps
    Zero(f64),
}

impl ModeDomain {
    fn contained_in(&self, other: &ModeDomain) -> bool {
        use ModeDomain::*;
        match (self, other) {
            (_, Reals) => true,
            (Zero(e1), Zero(e2)) => e1 <= e2,
            (Zero(e1), NonNegIntegers(e2)) => e1 <= e2,
            (Zero(e1), Integers(e2)) => e1 <= e2,
            (NonNegIntegers(e1), NonNegIntegers(e2)) => e1 <= e2,
            (NonNegIntegers(e1), Integers(e2)) => e1 <= e2,
            (Integers(e1), Integers(e2)) => e1 <= e2,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitDomain {
    Zero,
    One,
    Both,
}

impl QubitDomain {
    fn contained_in(&self, other: &QubitDomain) -> bool {
        matches!(
            (self, other),
            (QubitDomain::Zero, QubitDomain::Zero)
                | (QubitDomain::One, QubitDomain::One)
                | (_, QubitDomain::Both)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub modes: Vec<ModeDomain>,
    pub qubit: QubitDomain,
}

impl DomainSpec {
    pub fn contained_in(&self, other: &DomainSpec) -> Result<(), String> {
        if self.modes.len() != other.modes.len() {
            return Err(format!(
                "mode count {} vs {}",
                self.modes.len(),
                other.modes.len()
            ));
        }
        for (i, (a, b)) in self.modes.iter().zip(&other.modes).enumerate() {
            if !a.contained_in(b) {
                return Err(format!("mode {i}: {a:?} not contained in {b:?}"));
            }
        }
        if !self.qubit.contained_in(&other.qubit) {
            return Err(format!("qubit: {:?} not in {:?}", self.qubit, other.qubit));
        }
        Ok(())
    }
}

/// A unitary that delta-approximately computes a function on a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxGateSpec {
    pub name: String,
    pub domain: DomainSpec,
    pub output_domain: DomainSpec,
    pub delta: f64,
}

/// Composition: deltas add, domains must chain.
pub fn compose(specs: &[ApproxGateSpec]) -> Result<ApproxGateSpec, ApproxError> {
    let mut iter = specs.iter();
    let first = iter
        .next()
        .ok_or_else(|| ApproxError::Precondition("empty composition".into()))?;
    let mut acc = first.clone();
    for next in iter {
        acc.output_domain
            .contained_in(&next.domain)
            .map_err(|detail| ApproxError::DomainMismatch {
                first: acc.name.clone(),
                second: next.name.clone(),
                detail,
            })?;
        acc = ApproxGateSpec {
            name: format!("{} ; {}", acc.name, next.name),
            domain: acc.domain,
            output_domain: next.output_domain.clone(),
            delta: acc.delta + next.delta,
        };
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Closed-form delta bounds
// ---------------------------------------------------------------------------

/// LSB extraction on inputs eps-close to integers: 7 eps^{1/4}.
pub fn delta_lsb(eps: f64) -> Result<f64, ApproxError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(ApproxError::Precondition(format!(
            "delta_lsb needs eps in (0, 1/2), got {eps}"
        )));
    }
    Ok(7.0 * eps.powf(0.25))
}

/// The sharper constant behind delta_lsb: 6 (pi eps / 2)^{1/4} <= 7 eps^{1/4}.
pub fn delta_lsb_sharp(eps: f64) -> Result<f64, ApproxError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(ApproxError::Precondition(format!(
            "delta_lsb_sharp needs eps in (0, 1/2), got {eps}"
        )));
    }
    Ok(6.0 * (std::f64::consts::PI * eps / 2.0).powf(0.25))
}

/// V_alpha on inputs close to nonnegative integers (modes A and C):
/// 7 eps_A^{1/4} + 7 (2 eps_C)^{1/4}; independent of alpha.
pub fn delta_v(eps_a: f64, eps_c: f64) -> Result<f64, ApproxError> {
    if !(eps_a > 0.0 && eps_a < 0.5) || !(eps_c > 0.0 && eps_c < 0.25) {
        return Err(ApproxError::Precondition(format!(
            "delta_v needs eps_A in (0,1/2), eps_C in (0,1/4); got {eps_a}, {eps_c}"
        )));
    }
    Ok(7.0 * eps_a.powf(0.25) + 7.0 * (2.0 * eps_c).powf(0.25))
}

/// Adjoint of V_alpha: 7 (2 eps_A)^{1/4} + 7 eps_C^{1/4}.
pub fn delta_v_dagger(eps_a: f64, eps_c: f64) -> Result<f64, ApproxError> {
    if !(eps_a > 0.0 && eps_a < 0.25) || !(eps_c > 0.0 && eps_c < 0.5) {
        return Err(ApproxError::Precondition(format!(
            "delta_v_dagger needs eps_A in (0,1/4), eps_C in (0,1/2); got {eps_a}, {eps_c}"
        )));
    }
    Ok(7.0 * (2.0 * eps_a).powf(0.25) + 7.0 * eps_c.powf(0.25))
}

fn check_vanm_pre(eps_a: f64, eps_c: f64, m: u32) -> Result<(), ApproxError> {
    let cap = 2f64.powi(-(m as i32 + 2));
    if !(eps_a > 0.0 && eps_a < 0.25) || !(eps_c > 0.0 && eps_c < cap) {
        return Err(ApproxError::Precondition(format!(
            "needs eps_A in (0,1/4), eps_C in (0, 2^-(m+2)); got eps_A={eps_a}, eps_C={eps_c}, m={m}"
        )));
    }
    Ok(())
}

fn delta_vanm_raw(eps_a: f64, eps_c: f64, m: u32) -> f64 {
    88.0 * eps_a.powf(0.25) + 88.0 * ((m as f64) * std::f64::consts::LN_2 / 4.0 + eps_c.ln() / 4.0).exp()
}

/// V_{a,N,m}: 88 eps_A^{1/4} + 88 (2^m eps_C)^{1/4}; identical for the
/// adjoint.
pub fn delta_vanm(eps_a: f64, eps_c: f64, m: u32) -> Result<f64, ApproxError> {
    check_vanm_pre(eps_a, eps_c, m)?;
    Ok(delta_vanm_raw(eps_a, eps_c, m))
}

/// U_{a,N,m}: exactly twice delta_vanm.
pub fn delta_uanm(eps_a: f64, eps_c: f64, m: u32) -> Result<f64, ApproxError> {
    check_vanm_pre(eps_a, eps_c, m)?;
    Ok(2.0 * delta_vanm_raw(eps_a, eps_c, m))
}

// ---------------------------------------------------------------------------
// Stage error budget
// ---------------------------------------------------------------------------

/// The five per-stage bounds and their total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageErrorBudget {
    /// eps^(1) .. eps^(5) as used in the total.
    pub eps: [f64; 5],
    pub total: f64,
    /// True when the parameters exactly match the reference table for some
    /// n, in which case eps holds the certified per-stage values
    /// (9, 352, 1, 1, 1) * 2^{-2n} and total is exactly 364 * 2^{-2n}.
    pub table_certified: bool,
    /// The general-formula values, regardless of certification.
    pub formula: [f64; 5],
    /// The stage-4 lemma displays 2^{-n} while the table and the proof close
    /// with 2^{-2n}; both are exposed, the total uses the 2^{-2n} track.
    pub eps4_display_bound: f64,
    /// Violated lemma preconditions, if any (values still returned).
    pub precondition_failures: Vec<String>,
}

fn exp2_checked(log2: f64) -> f64 {
    if log2 < -1080.0 {
        0.0
    } else {
        log2.exp2()
    }
}

/// Evaluate the five stage bounds at the given parameters for an n-bit
/// modulus. Lemma preconditions are checked and reported, never silent.
pub fn stage_errors(params: &CircuitParams, n: u32) -> StageErrorBudget {
    let mut failures = Vec::new();
    if n < 4 {
        failures.push(format!("stage bounds 1 and 4 assume n >= 4 (got n={n})"));
    } else if n < 3 {
        failures.push(format!("stage bound 3 assumes n >= 3 (got n={n})"));
    }
    let eps_a = params.eps_a();
    if !(eps_a > 0.0 && eps_a < 0.25) {
        failures.push(format!("eps_A = {eps_a} outside (0, 1/4)"));
    }
    if params.log2_eps_c >= -((params.m + 2) as f64) {
        failures.push(format!(
            "eps_C = 2^{} not below 2^-(m+2) = 2^-{}",
            params.log2_eps_c,
            params.m + 2
        ));
    }
    if !(params.kappa_a() > 0.0 && params.kappa_a() < 0.25 && params.delta_a() < 0.25) {
        failures.push("kappa_A, Delta_A must lie in (0, 1/4)".into());
    }

    let sqrt_da = exp2_checked(params.log2_delta_a / 2.0);
    let sqrt_db = exp2_checked(params.log2_delta_b / 2.0);
    let sqrt_dc = exp2_checked(params.log2_delta_c / 2.0);
    // kappa_A^2 R^2 / 8 in log2
    let tail_log2 = 2.0 * params.log2_kappa_a + 2.0 * params.log2_r as f64 - 3.0;
    let tail = if tail_log2 > 11.0 {
        0.0
    } else {
        (-tail_log2.exp2() ).exp()
    };
    let eps1 = 6.0 * (sqrt_da + sqrt_db) + 3.0 * sqrt_dc + 3.0 * tail;
    // general U_{a,N,m} bound, in log space for the 2^m eps_C factor
    let eps2 = 2.0
        * (176.0 * exp2_checked(params.log2_eps_a / 4.0)
            + 176.0 * exp2_checked((params.m as f64 + params.log2_eps_c) / 4.0))
        / 2.0;
    let eps2 = eps2; // = delta_uanm in log space
    // 2 kappa_B N^m with N <= 2^n
    let eps3 = exp2_checked(1.0 + params.log2_kappa_b + (params.m as f64) * n as f64);
    let eps4 = 3.0 * tail;
    let eps5 = 6.0 * sqrt_da;
    let formula = [eps1, eps2, eps3, eps4, eps5];

    let certified = params.matches_table(n);
    let eps = if certified {
        let unit = 2f64.powi(-2 * n as i32);
        [9.0 * unit, 352.0 * unit, unit, unit, unit]
    } else {
        formula
    };
    let total = eps.iter().sum();
    StageErrorBudget {
        eps,
        total,
        table_certified: certified,
        formula,
        eps4_display_bound: 2f64.powi(-(n as i32)),
        precondition_failures: failures,
    }
}

// ---------------------------------------------------------------------------
// Canned gate specs for building compositions
// ---------------------------------------------------------------------------

/// Spec of U_{a,N,m} acting on (A, B, C) + qubit, inputs near nonnegative
/// integers on A, the origin on C, qubit 0.
pub fn uanm_spec(eps_a: f64, eps_c: f64, m: u32) -> Result<ApproxGateSpec, ApproxError> {
    let delta = delta_uanm(eps_a, eps_c, m)?;
    let dom = DomainSpec {
        modes: vec![
            ModeDomain::NonNegIntegers(eps_a),
            ModeDomain::Reals,
            ModeDomain::Zero(eps_c),
        ],
        qubit: QubitDomain::Zero,
    };
    Ok(ApproxGateSpec {
        name: format!("U_aNm(m={m})"),
        domain: dom.clone(),
        output_domain: dom,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::table_params;

    #[test]
    fn delta_lsb_values() {
        assert!((delta_lsb(2f64.powi(-16)).unwrap() - 0.4375).abs() < 1e-15);
        assert!((delta_lsb(1e-4).unwrap() - 0.7).abs() < 1e-12);
        assert!(delta_lsb(0.5).is_err());
        // sharper form really is sharper
        for eps in [1e-6, 1e-3, 0.2] {
            assert!(delta_lsb_sharp(eps).unwrap() <= delta_lsb(eps).unwrap());
        }
    }

    #[test]
    fn delta_v_values() {
        let v = delta_v(2f64.powi(-16), 2f64.powi(-17)).unwrap();
        assert!((v - 0.875).abs() < 1e-15);
        let v = delta_v(2f64.powi(-32), 2f64.powi(-33)).unwrap();
        assert!((v - 7.0 * 2f64.powi(-8) * 2.0).abs() < 1e-15);
        assert!(delta_v(1e-3, 0.3).is_err());
        // mirrored arguments for the adjoint
        let a = delta_v(1e-4, 1e-5).unwrap();
        let b = delta_v_dagger(1e-5, 1e-4).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(delta_v_dagger(1e-8, 1e-8).unwrap() < 0.2);
    }

    #[test]
    fn delta_vanm_values() {
        let v = delta_vanm(2f64.powi(-32), 2f64.powi(-40), 8).unwrap();
        assert!((v - 0.6875).abs() < 1e-15);
        let v = delta_vanm(2f64.powi(-16), 2f64.powi(-20), 2).unwrap();
        let want = 88.0 * 2f64.powi(-4) + 88.0 * 2f64.powf(-4.5);
        assert!((v - want).abs() < 1e-12);
        assert!(delta_vanm(1e-3, 0.1, 8).is_err());
    }

    #[test]
    fn delta_uanm_is_twice_vanm() {
        for (ea, ec, m) in [(1e-8, 1e-12, 8u32), (1e-4, 1e-9, 4), (2e-2, 1e-7, 12)] {
            let u = delta_uanm(ea, ec, m).unwrap();
            let v = delta_vanm(ea, ec, m).unwrap();
            assert_eq!(u, 2.0 * v);
        }
    }

    #[test]
    fn deltas_monotone() {
        let mut prev = 0.0;
        for eps in [1e-10, 1e-8, 1e-6, 1e-4, 1e-2] {
            let v = delta_lsb(eps).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for ec in [1e-12, 1e-10, 1e-8, 1e-6] {
            let v = delta_vanm(1e-6, ec, 8).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    fn spec(name: &str, d_in: ModeDomain, d_out: ModeDomain, delta: f64) -> ApproxGateSpec {
        ApproxGateSpec {
            name: name.into(),
            domain: DomainSpec {
                modes: vec![d_in],
                qubit: QubitDomain::Both,
            },
            output_domain: DomainSpec {
                modes: vec![d_out],
                qubit: QubitDomain::Both,
            },
            delta,
        }
    }

    #[test]
    fn compose_adds_deltas() {
        let g = spec("g", ModeDomain::Integers(0.1), ModeDomain::Integers(0.1), 0.1);
        let single = compose(std::slice::from_ref(&g)).unwrap();
        assert_eq!(single, g);
        let h = spec("h", ModeDomain::Integers(0.2), ModeDomain::Reals, 0.2);
        let c = compose(&[g.clone(), h]).unwrap();
        assert!((c.delta - 0.3).abs() < 1e-15);
        // domain mismatch: output eps grows beyond the next domain
        let tight = spec("tight", ModeDomain::Integers(0.05), ModeDomain::Reals, 0.2);
        assert!(matches!(
            compose(&[g, tight]),
            Err(ApproxError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn compose_associative_in_delta() {
        let a = spec("a", ModeDomain::NonNegIntegers(0.1), ModeDomain::NonNegIntegers(0.1), 0.11);
        let b = spec("b", ModeDomain::NonNegIntegers(0.2), ModeDomain::Integers(0.2), 0.23);
        let c = spec("c", ModeDomain::Integers(0.3), ModeDomain::Reals, 0.31);
        let left = compose(&[compose(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = compose(&[a, compose(&[b, c]).unwrap()]).unwrap();
        assert!((left.delta - right.delta).abs() < 1e-15);
    }

    #[test]
    fn domain_containment_rules() {
        use ModeDomain::*;
        assert!(Zero(0.1).contained_in(&NonNegIntegers(0.1)));
        assert!(NonNegIntegers(0.1).contained_in(&Integers(0.2)));
        assert!(!Integers(0.1).contained_in(&NonNegIntegers(0.2)));
        assert!(!NonNegIntegers(0.2).contained_in(&NonNegIntegers(0.1)));
        assert!(Integers(0.4).contained_in(&Reals));
        assert!(!QubitDomain::Both.contained_in(&QubitDomain::Zero));
        assert!(QubitDomain::One.contained_in(&QubitDomain::Both));
    }

    #[test]
    fn stage_errors_table_values() {
        for n in 4..=16u32 {
            let params = table_params_for_bits(n);
            let budget = stage_errors(&params, n);
            assert!(budget.table_certified, "n={n}");
            let want = 364.0 * 2f64.powi(-2 * n as i32);
            assert!(
                (budget.total - want).abs() <= 1e-12 * want,
                "n={n}: {} vs {want}",
                budget.total
            );
            assert!(budget.precondition_failures.is_empty(), "n={n}");
            // formula values never exceed the certified ones
            for (f, c) in budget.formula.iter().zip(budget.eps.iter()) {
                assert!(f <= c, "n={n}: formula {f} > certified {c}");
            }
        }
        // n = 4 total is 364/256
        let params = table_params_for_bits(4);
        assert!((stage_errors(&params, 4).total - 364.0 / 256.0).abs() < 1e-15);
    }

    fn table_params_for_bits(n: u32) -> CircuitParams {
        // smallest n-bit integer is enough to pin the table
        table_params(1u64 << (n - 1))
    }

    #[test]
    fn stage_errors_zero_limit() {
        // vanishing widths and a huge window drive every bound to zero
        let mut p = table_params_for_bits(8);
        p.log2_delta_a = -4000.0;
        p.log2_delta_b = -4000.0;
        p.log2_kappa_b = -8000.0;
        p.log2_delta_c = -4000.0;
        p.log2_eps_a = -2000.0;
        p.log2_eps_b = -2000.0;
        p.log2_eps_c = -2000.0;
        p.log2_kappa_a = -10.0;
        p.log2_r = 60;
        let b = stage_errors(&p, 8);
        assert!(!b.table_certified);
        assert!(b.total < 1e-100, "total = {}", b.total);
    }

    #[test]
    fn stage_errors_reports_precondition_failures() {
        let params = table_params_for_bits(4);
        let b = stage_errors(&params, 2);
        assert!(!b.precondition_failures.is_empty());
        assert!(b.total.is_finite());
    }

    #[test]
    fn uanm_spec_composes_with_itself() {
        let s = uanm_spec(1e-8, 1e-12, 8).unwrap();
        let c = compose(&[s.clone(), s.clone()]).unwrap();
        assert!((c.delta - 2.0 * s.delta).abs() < 1e-15);
    }
}
