//! Exact integer arithmetic and the classical post-processing chain.
//!
//! Everything here is deliberately brute-force: order finding by exhaustive
//! multiplication doubles as the test oracle, and instances are desk-scale
//! (N up to ~10^6). Pseudomodular powers are *not* reduced modulo N and can
//! reach N^m, so they are computed with arbitrary-precision integers.

use num_bigint::BigUint;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumTheoryError {
    #[error("a = {a} is not coprime to N = {n}")]
    NotCoprime { a: u64, n: u64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
}

/// The integer to factor together with its derived sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorInstance {
    /// The integer N.
    pub n_value: u64,
    /// Bit length of N.
    pub bits: u32,
    /// Smallest power of 2 exceeding N^2.
    pub q: u64,
}

impl FactorInstance {
    pub fn new(n_value: u64) -> Result<Self, NumTheoryError> {
        if n_value == 0 {
            return Err(NumTheoryError::OutOfRange("N must be positive".into()));
        }
        let bits = 64 - n_value.leading_zeros();
        let q = smallest_q(n_value);
        Ok(FactorInstance { n_value, bits, q })
    }
}

/// Smallest power of two strictly greater than N².
pub fn smallest_q(n: u64) -> u64 {
    let n2 = (n as u128) * (n as u128);
    let mut q: u128 = 1;
    while q <= n2 {
        q *= 2;
    }
    q as u64
}

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Modular exponentiation `a^x mod n` with u128 intermediates.
pub fn mod_pow(a: u64, mut x: u64, n: u64) -> u64 {
    if n == 1 {
        return 0;
    }
    let mut base = (a % n) as u128;
    let m = n as u128;
    let mut acc: u128 = 1;
    while x > 0 {
        if x & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        x >>= 1;
    }
    acc as u64
}

/// Multiplicative order of `a` in Z_N^*, by exhaustive multiplication.
pub fn order(a: u64, n: u64) -> Result<u64, NumTheoryError> {
    if n < 2 || a == 0 || a >= n {
        return Err(NumTheoryError::OutOfRange(format!(
            "need 1 <= a < N and N >= 2, got a={a}, N={n}"
        )));
    }
    if gcd(a, n) != 1 {
        return Err(NumTheoryError::NotCoprime { a, n });
    }
    let mut acc = a % n;
    let mut r = 1u64;
    while acc != 1 {
        acc = ((acc as u128 * a as u128) % n as u128) as u64;
        r += 1;
    }
    Ok(r)
}

/// Pseudomodular power f_{a,N,m}(x) = prod_i (a^{2^i} mod N)^{x_i} over the
/// m least significant bits of x. Congruent to a^x (mod N) for x < 2^m but
/// not reduced; the value can reach N^m.
pub fn pseudomodular_power(a: u64, n: u64, m: u32, x: u64) -> BigUint {
    let mut result = BigUint::from(1u32);
    let mut factor = a % n; // a^{2^i} mod N
    for i in 0..m {
        if (x >> i) & 1 == 1 {
            result *= BigUint::from(factor);
        }
        factor = ((factor as u128 * factor as u128) % n as u128) as u64;
    }
    result
}

/// Rounds the fractional part of `x` to the nearest multiple of 1/q and
/// returns the index in Z_q. Exact ties resolve to the smaller index
/// (min of the argmin), so c/q + 1/(2q) still maps to c.
pub fn discretize(x: f64, q: u64) -> u64 {
    assert!(q >= 2, "discretize needs q >= 2");
    let fra = x - x.floor();
    let qf = q as f64;
    // nearest candidates around fra*q among c in {0..q}
    let lo = (fra * qf).floor() as u64;
    let lo = lo.min(q); // guard fra == 1.0 - eps edge
    let hi = (lo + 1).min(q);
    let d_lo = (fra - lo as f64 / qf).abs();
    let d_hi = (fra - hi as f64 / qf).abs();
    let c = if d_lo <= d_hi { lo } else { hi };
    c % q
}

/// Best rational approximation d'/r' to c/q with denominator r' < bound,
/// in lowest terms, via continued-fraction convergents and the final
/// semiconvergent. Ties prefer the smaller denominator, then numerator.
pub fn cf_denominator_recovery(c: u64, q: u64, n: u64) -> (u64, u64) {
    assert!(c < q && n >= 2);
    if c == 0 {
        return (0, 1);
    }
    let target = c as f64 / q as f64;
    // Continued fraction expansion of c/q.
    let (mut num, mut den) = (c, q);
    // Convergents p/q with p_{-1}=1,q_{-1}=0, p_0=a0,q_0=1.
    let (mut p_prev, mut q_prev) = (1u64, 0u64);
    let (mut p_cur, mut q_cur) = (num / den, 1u64);
    let mut rem = num % den;
    num = den;
    den = rem;
    let mut best: Option<(u64, u64)> = None;
    let consider = |d: u64, r: u64, best: &mut Option<(u64, u64)>| {
        if r == 0 || r >= n {
            return;
        }
        let g = d.gcd(&r);
        let (d, r) = (d / g, r / g);
        match best {
            None => *best = Some((d, r)),
            Some((bd, br)) => {
                let cand = (d as f64 / r as f64 - target).abs();
                let cur = (*bd as f64 / *br as f64 - target).abs();
                if cand < cur || (cand == cur && (r, d) < (*br, *bd)) {
                    *best = Some((d, r));
                }
            }
        }
    };
    consider(p_cur, q_cur, &mut best);
    while den != 0 {
        let a = num / den;
        rem = num % den;
        let p_next = a * p_cur + p_prev;
        let q_next = a * q_cur + q_prev;
        if q_next >= n {
            // Best semiconvergent before the denominator bound breaks.
            if q_cur > 0 {
                let t_max = (n - 1 - q_prev.min(n - 1)) / q_cur;
                if t_max >= 1 {
                    consider(t_max * p_cur + p_prev, t_max * q_cur + q_prev, &mut best);
                }
            }
            break;
        }
        consider(p_next, q_next, &mut best);
        p_prev = p_cur;
        q_prev = q_cur;
        p_cur = p_next;
        q_cur = q_next;
        num = den;
        den = rem;
    }
    best.unwrap_or((0, 1))
}

/// Miller's step: a factor of N from the order r of a, when r is even and
/// a^{r/2} is not -1 mod N. Returns the first nontrivial gcd of a^{r/2}∓1.
pub fn miller_factor(a: u64, n: u64, r: u64) -> Option<u64> {
    if r % 2 != 0 {
        return None;
    }
    let half = mod_pow(a, r / 2, n);
    if half == n - 1 {
        return None;
    }
    for cand in [half.wrapping_sub(1), half + 1] {
        if cand == 0 {
            continue;
        }
        let g = gcd(cand % n, n);
        if g != 1 && g != n {
            return Some(g);
        }
    }
    None
}

/// Reduce a multiple of the order of `a` to the exact order by peeling
/// prime factors.
fn exact_order_from_multiple(a: u64, n: u64, mut rr: u64) -> u64 {
    let mut k = rr;
    let mut p = 2u64;
    while p * p <= k {
        while k % p == 0 {
            k /= p;
            while rr % p == 0 && mod_pow(a, rr / p, n) == 1 {
                rr /= p;
            }
        }
        p += 1;
    }
    if k > 1 {
        while rr % k == 0 && rr / k > 0 && mod_pow(a, rr / k, n) == 1 {
            rr /= k;
        }
    }
    rr
}

/// Outcome of one post-processing attempt, for transcripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostprocessDetail {
    pub c: u64,
    pub candidates: Vec<(u64, u64)>,
    pub recovered_order: Option<u64>,
    pub factor: Option<u64>,
}

/// Full classical post-processing of a homodyne sample w (unit-period
/// convention, peaks near j + d/r): discretize, then for l in {-1,0,1}
/// recover d'/r' by continued fractions, test small multiples of r' for the
/// period, and run Miller's step. Returns the first divisor found.
pub fn shor_postprocess3(w: f64, a: u64, n: u64) -> Option<u64> {
    shor_postprocess3_detailed(w, a, n).factor
}

pub fn shor_postprocess3_detailed(w: f64, a: u64, n: u64) -> PostprocessDetail {
    let q = smallest_q(n);
    let c = discretize(w, q);
    let mut detail = PostprocessDetail {
        c,
        candidates: Vec::new(),
        recovered_order: None,
        factor: None,
    };
    for l in [-1i64, 0, 1] {
        let cl = ((c as i64 + l).rem_euclid(q as i64)) as u64;
        let (d1, r1) = cf_denominator_recovery(cl, q, n);
        detail.candidates.push((d1, r1));
        // r' = 1 (d' = 0) carries no period information; multiples of 1
        // would brute-force the order and trivialize every sample.
        if r1 < 2 {
            continue;
        }
        let mut found: Option<u64> = None;
        let mut k = 1u64;
        while k * r1 <= n {
            if mod_pow(a, k * r1, n) == 1 {
                found = Some(exact_order_from_multiple(a, n, k * r1));
                break;
            }
            k += 1;
        }
        if let Some(r) = found {
            detail.recovered_order = Some(r);
            if let Some(f) = miller_factor(a, n, r) {
                detail.factor = Some(f);
                return detail;
            }
        }
    }
    detail
}

/// The interval family around the rationals j + d/r with half-width 1/(2q).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaIntervalFamily {
    pub r: u64,
    pub q: u64,
    pub d: u64,
}

impl GammaIntervalFamily {
    pub fn new(r: u64, q: u64, d: u64) -> Result<Self, NumTheoryError> {
        if d >= r {
            return Err(NumTheoryError::OutOfRange(format!("d={d} must be < r={r}")));
        }
        if q <= r {
            return Err(NumTheoryError::OutOfRange(format!(
                "q={q} must exceed r={r} for disjoint intervals"
            )));
        }
        Ok(GammaIntervalFamily { r, q, d })
    }

    pub fn contains(&self, w: f64) -> bool {
        gamma_contains(w, self.d, self.r, self.q)
    }
}

/// Membership in the union of intervals [j + d/r - 1/(2q), j + d/r + 1/(2q)].
pub fn gamma_contains(w: f64, d: u64, r: u64, q: u64) -> bool {
    let t = w - d as f64 / r as f64;
    let dist = (t - t.round()).abs();
    dist <= 1.0 / (2.0 * q as f64)
}

/// The set Good_a: residues c in Z_q with |c/q - d/r| <= 1/(2q) for some d.
pub fn good_set(a: u64, n: u64) -> Result<Vec<u64>, NumTheoryError> {
    let r = order(a, n)?;
    let q = smallest_q(n);
    let qf = q as f64;
    let mut out = Vec::new();
    for c in 0..q {
        let mut good = false;
        for d in 0..r {
            if (c as f64 / qf - d as f64 / r as f64).abs() <= 1.0 / (2.0 * qf) {
                good = true;
                break;
            }
        }
        if good {
            out.push(c);
        }
    }
    Ok(out)
}
