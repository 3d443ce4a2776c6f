//! Small numerical toolbox: Gauss-Legendre panels, adaptive Simpson, and
//! compensated summation. Shared by the bound checks and the spectral
//! integrals.

use std::sync::OnceLock;

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    // Newton iteration on Legendre polynomials; nodes/weights on [-1, 1].
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn gl32() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_nodes(32))
}

/// 32-node Gauss-Legendre on [a, b].
pub fn gl32_integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = Kahan::default();
    for &(x, w) in gl32() {
        acc.add(w * f(mid + half * x));
    }
    acc.value() * half
}

/// Gauss-Legendre with panels of width at most `max_panel`.
pub fn gl_panels<F: FnMut(f64) -> f64>(a: f64, b: f64, max_panel: f64, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / max_panel).ceil().max(1.0) as usize;
    let step = (b - a) / n as f64;
    let mut acc = Kahan::default();
    for i in 0..n {
        let lo = a + i as f64 * step;
        acc.add(gl32_integrate(lo, lo + step, &mut f));
    }
    acc.value()
}

/// Adaptive Simpson quadrature; used as an independent oracle in tests.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_gaussian() {
        let v = gl_panels(-8.0, 8.0, 0.5, |x| (-x * x).exp());
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn simpson_matches_gl() {
        let f = |x: f64| (-0.5 * x * x).exp() * (3.0 * x).cos();
        let a = gl_panels(-10.0, 10.0, 0.25, f);
        let b = adaptive_simpson(&f, -10.0, 10.0, 1e-12);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn kahan_sums_tiny_terms() {
        let mut k = Kahan::default();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-18);
        }
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
