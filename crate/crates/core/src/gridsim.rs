//! Dense position-grid state-vector oracle for up to three modes plus one
//! qubit.
//!
//! The grid stores amplitudes over a product of per-mode uniform position
//! grids with the qubit index fastest-varying. Gates that the composite
//! circuits need are exact on their stated domains: position phases are
//! diagonal, shifts with integer step are index rolls (and otherwise go
//! through an exact momentum-space phase), uncontrolled squeezing is a
//! metadata rescale, and qubit-controlled squeezing is an exact index remap
//! valid when every occupied point lands back on the grid (the near-delta
//! regime the cross-checks use). Quarter rotations are centered DFTs and
//! require the self-dual spacing G h^2 = 2 pi.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on the amplitude array (G=256 on three modes plus a qubit).
pub const GRID_BUDGET: usize = 1 << 25;

/// Occupancy threshold for remap validity checks.
const OCCUPIED: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid budget exceeded: {needed} amplitudes > {budget}")]
    Budget { needed: u128, budget: usize },
    #[error("state support leaks off the grid: {0}")]
    SupportOverflow(String),
    #[error("grid alignment violated: {0}")]
    Alignment(String),
    #[error("invalid grid parameters: {0}")]
    Params(String),
}

/// One mode's uniform position grid: x_i = origin_offset + i * spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub spacing: f64,
    pub origin_offset: f64,
}

impl GridSpec {
    pub fn new(points: usize, spacing: f64, origin_offset: f64) -> Result<Self, GridError> {
        if !points.is_power_of_two() {
            return Err(GridError::Params(format!("points {points} not a power of 2")));
        }
        if !(spacing > 0.0) {
            return Err(GridError::Params("spacing must be positive".into()));
        }
        Ok(GridSpec { points, spacing, origin_offset })
    }

    /// Self-dual centered grid with G h^2 = 2 pi (rotation-accurate).
    pub fn self_dual(points: usize) -> Result<Self, GridError> {
        let h = (2.0 * std::f64::consts::PI / points as f64).sqrt();
        GridSpec::new(points, h, -(points as f64) / 2.0 * h)
    }

    pub fn position(&self, i: usize) -> f64 {
        self.origin_offset + i as f64 * self.spacing
    }

    pub fn rotation_accurate(&self) -> bool {
        let target = 2.0 * std::f64::consts::PI;
        (self.points as f64 * self.spacing * self.spacing - target).abs() <= 1e-12 * target
    }
}

/// Dense state over 1..=3 modes and one qubit (qubit index fastest).
#[derive(Debug, Clone)]
pub struct GridState {
    pub specs: Vec<GridSpec>,
    pub amps: Vec<Complex64>,
}

/// Initial 1-D profiles for `prepare`.
#[derive(Debug, Clone)]
pub enum Profile {
    Vacuum,
    Squeezed { delta: f64 },
    PositionPeak { center: f64, delta: f64 },
    Comb {
        spacing: f64,
        kappa: f64,
        delta: f64,
        eps: f64,
        /// envelope center and half-width (in comb index units)
        window: Option<(f64, f64)>,
    },
}

fn profile_value(profile: &Profile, x: f64) -> f64 {
    use crate::gkpmath::{eta_kappa, psi_delta};
    match profile {
        Profile::Vacuum => psi_delta(x, 1.0),
        Profile::Squeezed { delta } => psi_delta(x, *delta),
        Profile::PositionPeak { center, delta } => psi_delta(x - center, *delta),
        Profile::Comb { spacing, kappa, delta, eps, window } => {
            let mut v = 0.0;
            let y0 = (x / spacing).round();
            // peaks within reach of x (truncation keeps only the nearest)
            for y in [y0 - 1.0, y0, y0 + 1.0] {
                if let Some((c, hw)) = window {
                    if (y - c).abs() > *hw {
                        continue;
                    }
                }
                let u = x - y * spacing;
                if u.abs() <= eps * spacing {
                    v += eta_kappa(y, *kappa) * psi_delta(u / spacing, *delta)
                        / spacing.sqrt();
                }
            }
            v
        }
    }
}

impl GridState {
    /// Product state of per-mode profiles with the qubit in |0>.
    pub fn prepare(specs: Vec<GridSpec>, profiles: &[Profile]) -> Result<Self, GridError> {
        if specs.is_empty() || specs.len() > 3 || specs.len() != profiles.len() {
            return Err(GridError::Params("need 1..=3 modes with matching profiles".into()));
        }
        let total: u128 = specs.iter().map(|s| s.points as u128).product::<u128>() * 2;
        if total > GRID_BUDGET as u128 {
            return Err(GridError::Budget { needed: total, budget: GRID_BUDGET });
        }
        // 1-D normalized profiles with edge-support checks
        let mut lines: Vec<Vec<Complex64>> = Vec::new();
        for (spec, profile) in specs.iter().zip(profiles) {
            let mut line: Vec<Complex64> = (0..spec.points)
                .map(|i| Complex64::new(profile_value(profile, spec.position(i)), 0.0))
                .collect();
            let norm_sq: f64 = line.iter().map(|a| a.norm_sqr()).sum::<f64>() * spec.spacing;
            if !(norm_sq > 0.0) {
                return Err(GridError::SupportOverflow(
                    "profile has no mass on the grid".into(),
                ));
            }
            let edge: f64 = line[..2]
                .iter()
                .chain(line[spec.points - 2..].iter())
                .map(|a| a.norm_sqr())
                .sum::<f64>()
                * spec.spacing;
            if edge / norm_sq > 1e-12 {
                return Err(GridError::SupportOverflow(format!(
                    "tail mass {:.3e} at the grid edges",
                    edge / norm_sq
                )));
            }
            let scale = 1.0 / norm_sq.sqrt();
            line.iter_mut().for_each(|a| *a *= scale);
            lines.push(line);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); total as usize];
        let dims: Vec<usize> = specs.iter().map(|s| s.points).collect();
        let mut idx = vec![0usize; dims.len()];
        loop {
            let mut flat = 0usize;
            let mut val = Complex64::new(1.0, 0.0);
            for (d, &i) in idx.iter().enumerate() {
                flat = flat * dims[d] + i;
                val *= lines[d][i];
            }
            amps[flat * 2] = val; // qubit |0>
            // advance the multi-index
            let mut d = dims.len();
            loop {
                if d == 0 {
                    break;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    return Ok(GridState { specs, amps });
                }
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        Ok(GridState { specs, amps })
    }

    pub fn norm_sq(&self) -> f64 {
        let cell: f64 = self.specs.iter().map(|s| s.spacing).product();
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }

    /// Iterate lines along `mode`: calls f(stride-gathered indices).
    /// Layout: flat = ((i0*G1 + i1)*G2 + i2)*2 + b.
    fn line_starts_and_stride(&self, mode: usize) -> (Vec<usize>, usize) {
        let dims: Vec<usize> = self.specs.iter().map(|s| s.points).collect();
        let n = dims.len();
        let mut stride = 2usize; // qubit fastest
        for d in (mode + 1)..n {
            stride *= dims[d];
        }
        let mut starts = Vec::new();
        let outer: usize = dims[..mode].iter().product();
        let inner: usize = dims[mode + 1..].iter().product::<usize>() * 2;
        for o in 0..outer {
            for i in 0..inner {
                starts.push(o * dims[mode] * inner + i);
            }
        }
        (starts, stride)
    }

    /// Apply a diagonal position-dependent phase on one mode, optionally
    /// only on the qubit-1 block.
    pub fn phase_q(&mut self, mode: usize, theta: f64, controlled: bool) {
        let spec = self.specs[mode];
        let phases: Vec<Complex64> = (0..spec.points)
            .map(|i| Complex64::from_polar(1.0, theta * spec.position(i)))
            .collect();
        let (starts, stride) = self.line_starts_and_stride(mode);
        for start in starts {
            if controlled && start % 2 == 0 {
                continue;
            }
            for i in 0..spec.points {
                self.amps[start + i * stride] *= phases[i];
            }
        }
    }

    /// Pauli X on the qubit.
    pub fn qubit_x(&mut self) {
        for pair in self.amps.chunks_exact_mut(2) {
            pair.swap(0, 1);
        }
    }

    /// Hadamard on the qubit.
    pub fn hadamard_qubit(&mut self) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for pair in self.amps.chunks_exact_mut(2) {
            let a = pair[0];
            let b = pair[1];
            pair[0] = (a + b) * s;
            pair[1] = (a - b) * s;
        }
    }

    /// Position shift by t on one mode. Integer t/h is an exact index roll;
    /// otherwise an exact momentum-space phase (unitary by construction).
    pub fn shift_p(&mut self, mode: usize, t: f64, controlled: bool) -> Result<(), GridError> {
        let spec = self.specs[mode];
        let steps = t / spec.spacing;
        if (steps - steps.round()).abs() < 1e-9 {
            let k = steps.round() as i64;
            self.roll(mode, k, controlled);
            return Ok(());
        }
        // momentum-space phase: psi'(x) = psi(x - t)
        let g = spec.points;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(g);
        let inv = planner.plan_fft_inverse(g);
        let phases: Vec<Complex64> = (0..g)
            .map(|k| {
                let kc = if k < g / 2 { k as f64 } else { k as f64 - g as f64 };
                let p = 2.0 * std::f64::consts::PI * kc / (g as f64 * spec.spacing);
                Complex64::from_polar(1.0, -p * t)
            })
            .collect();
        let (starts, stride) = self.line_starts_and_stride(mode);
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        for start in starts {
            if controlled && start % 2 == 0 {
                continue;
            }
            for i in 0..g {
                buf[i] = self.amps[start + i * stride];
            }
            fwd.process(&mut buf);
            for (b, ph) in buf.iter_mut().zip(&phases) {
                *b *= ph;
            }
            inv.process(&mut buf);
            let scale = 1.0 / g as f64;
            for i in 0..g {
                self.amps[start + i * stride] = buf[i] * scale;
            }
        }
        Ok(())
    }

    fn roll(&mut self, mode: usize, k: i64, controlled: bool) {
        let g = self.specs[mode].points;
        let k = k.rem_euclid(g as i64) as usize;
        if k == 0 {
            return;
        }
        let (starts, stride) = self.line_starts_and_stride(mode);
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        for start in starts {
            if controlled && start % 2 == 0 {
                continue;
            }
            for i in 0..g {
                buf[(i + k) % g] = self.amps[start + i * stride];
            }
            for i in 0..g {
                self.amps[start + i * stride] = buf[i];
            }
        }
    }

    /// Uncontrolled squeezing M_alpha: exact metadata rescale.
    pub fn squeeze(&mut self, mode: usize, alpha: f64) -> Result<(), GridError> {
        if !(alpha > 0.0) {
            return Err(GridError::Params("alpha must be positive".into()));
        }
        self.specs[mode].spacing *= alpha;
        self.specs[mode].origin_offset *= alpha;
        let scale = 1.0 / alpha.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= scale);
        Ok(())
    }

    /// Qubit-controlled M_alpha: exact index remap of the qubit-1 block.
    /// Every occupied point must land on a grid point (near-delta states).
    pub fn ctrl_scale(&mut self, mode: usize, alpha: f64) -> Result<(), GridError> {
        if (alpha - 1.0).abs() < 1e-15 {
            return Ok(());
        }
        let spec = self.specs[mode];
        let g = spec.points;
        let max_sq = self
            .amps
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let (starts, stride) = self.line_starts_and_stride(mode);
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        for start in starts {
            if start % 2 == 0 {
                continue; // control off
            }
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for i in 0..g {
                let a = self.amps[start + i * stride];
                if a.norm_sqr() <= OCCUPIED * max_sq {
                    continue;
                }
                let target = (alpha * spec.position(i) - spec.origin_offset) / spec.spacing;
                if (target - target.round()).abs() > 1e-9 {
                    return Err(GridError::SupportOverflow(format!(
                        "scaled position {} off-grid for mode {mode}",
                        alpha * spec.position(i)
                    )));
                }
                let j = target.round() as i64;
                if j < 0 || j >= g as i64 {
                    return Err(GridError::SupportOverflow(format!(
                        "scaled position {} outside the grid",
                        alpha * spec.position(i)
                    )));
                }
                buf[j as usize] += a;
            }
            for i in 0..g {
                self.amps[start + i * stride] = buf[i];
            }
        }
        Ok(())
    }

    /// Quarter phase-space rotation (centered DFT). Sign +1 maps the
    /// position wavefunction to its Fourier transform
    /// psi_hat(p) = (2 pi)^{-1/2} int psi(x) e^{-i p x} dx on the same grid.
    pub fn rotate_quarter(&mut self, mode: usize, sign: i8) -> Result<(), GridError> {
        let spec = self.specs[mode];
        if !spec.rotation_accurate() {
            return Err(GridError::Alignment(format!(
                "rotate_quarter needs G h^2 = 2 pi (G={}, h={})",
                spec.points, spec.spacing
            )));
        }
        let g = spec.points;
        let s = sign.signum() as f64;
        let mut planner = FftPlanner::new();
        let fft = if sign >= 0 {
            planner.plan_fft_forward(g)
        } else {
            planner.plan_fft_inverse(g)
        };
        // out_j = (1/sqrt(G)) sum_n psi_n e^{-s i 2 pi (n - G/2)(j - G/2)/G}
        //       = (1/sqrt(G)) e^{-s i pi G/2} e^{s i pi j} FFT_s[psi_n e^{s i pi n}]_j
        let global = Complex64::from_polar(1.0, -s * std::f64::consts::PI * (g as f64) / 2.0);
        let (starts, stride) = self.line_starts_and_stride(mode);
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        let scale = 1.0 / (g as f64).sqrt();
        for start in starts {
            for i in 0..g {
                let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
                buf[i] = self.amps[start + i * stride] * sgn;
            }
            fft.process(&mut buf);
            for (j, b) in buf.iter_mut().enumerate() {
                let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
                *b *= global * sgn * scale;
            }
            for i in 0..g {
                self.amps[start + i * stride] = buf[i];
            }
        }
        Ok(())
    }

    /// Two-mode sum e^{-i Q_a P_b}: |x, y> -> |x, x + y>. Exact when the
    /// grids share the spacing and mode-a positions are integer multiples of
    /// it.
    pub fn two_mode_sum(&mut self, mode_a: usize, mode_b: usize) -> Result<(), GridError> {
        let sa = self.specs[mode_a];
        let sb = self.specs[mode_b];
        if (sa.spacing - sb.spacing).abs() > 1e-12 * sa.spacing {
            return Err(GridError::Alignment("two_mode_sum needs equal spacings".into()));
        }
        let off_steps = sa.origin_offset / sb.spacing;
        if (off_steps - off_steps.round()).abs() > 1e-9 {
            return Err(GridError::Alignment(
                "mode-a origin must be an integer number of steps".into(),
            ));
        }
        // roll mode_b by x_a / h per mode_a index
        let dims: Vec<usize> = self.specs.iter().map(|s| s.points).collect();
        let n = dims.len();
        let stride_of = |mode: usize| -> usize {
            let mut s = 2usize;
            for d in (mode + 1)..n {
                s *= dims[d];
            }
            s
        };
        let stride_a = stride_of(mode_a);
        let stride_b = stride_of(mode_b);
        let gb = dims[mode_b];
        let total = self.amps.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); gb];
        // iterate all flat indices with i_b == 0 and gather lines along b
        for flat in 0..total {
            let ib = (flat / stride_b) % gb;
            if ib != 0 {
                continue;
            }
            let ia = (flat / stride_a) % dims[mode_a];
            let shift = (off_steps.round() as i64 + ia as i64).rem_euclid(gb as i64) as usize;
            if shift == 0 {
                continue;
            }
            for i in 0..gb {
                buf[(i + shift) % gb] = self.amps[flat + i * stride_b];
            }
            for i in 0..gb {
                self.amps[flat + i * stride_b] = buf[i];
            }
        }
        Ok(())
    }

    /// Momentum-space density of one mode after tracing everything else:
    /// returns (momenta, density) with sum density * dp = 1.
    pub fn p_quadrature_pdf(&self, mode: usize) -> (Vec<f64>, Vec<f64>) {
        let spec = self.specs[mode];
        let g = spec.points;
        let hp = 2.0 * std::f64::consts::PI / (g as f64 * spec.spacing);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(g);
        let (starts, stride) = self.line_starts_and_stride(mode);
        let mut density = vec![0.0f64; g];
        let mut buf = vec![Complex64::new(0.0, 0.0); g];
        // psi_hat(p_k) = h/sqrt(2 pi) * e^{-i p_k off} * sum_n psi_n e^{-2 pi i kc n / G}
        let weight = spec.spacing * spec.spacing / (2.0 * std::f64::consts::PI);
        let other_cell: f64 = self
            .specs
            .iter()
            .enumerate()
            .filter(|(d, _)| *d != mode)
            .map(|(_, s)| s.spacing)
            .product();
        for start in starts {
            for i in 0..g {
                buf[i] = self.amps[start + i * stride];
            }
            fft.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                // store centered: k < G/2 are nonnegative momenta
                let slot = (k + g / 2) % g;
                density[slot] += b.norm_sqr() * weight * other_cell;
            }
        }
        let momenta: Vec<f64> = (0..g)
            .map(|slot| (slot as f64 - (g / 2) as f64) * hp)
            .collect();
        (momenta, density)
    }

    /// Position expectation of a mode.
    pub fn mean_position(&self, mode: usize) -> f64 {
        let spec = self.specs[mode];
        let (starts, stride) = self.line_starts_and_stride(mode);
        let cell: f64 = self.specs.iter().map(|s| s.spacing).product();
        let mut acc = 0.0;
        for start in starts {
            for i in 0..spec.points {
                acc += self.amps[start + i * stride].norm_sqr() * spec.position(i);
            }
        }
        acc * cell / self.norm_sq()
    }

    /// Fidelity |<other, self>|^2 with both sides normalized; `other` is a
    /// function evaluating the reference wavefunction at (positions, qubit).
    pub fn fidelity_against<F: Fn(&[f64], u8) -> Complex64>(&self, reference: F) -> f64 {
        let dims: Vec<usize> = self.specs.iter().map(|s| s.points).collect();
        let cell: f64 = self.specs.iter().map(|s| s.spacing).product();
        let mut dot = Complex64::new(0.0, 0.0);
        let mut ref_norm = 0.0f64;
        let mut pos = vec![0.0f64; dims.len()];
        let mut idx = vec![0usize; dims.len()];
        let total: usize = dims.iter().product();
        for flat_mode in 0..total {
            let mut rem = flat_mode;
            for d in (0..dims.len()).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            for d in 0..dims.len() {
                pos[d] = self.specs[d].position(idx[d]);
            }
            for b in 0..2u8 {
                let r = reference(&pos, b);
                let a = self.amps[flat_mode * 2 + b as usize];
                dot += r.conj() * a;
                ref_norm += r.norm_sqr();
            }
        }
        let dot = dot.norm_sqr() * cell * cell;
        dot / (ref_norm * cell * self.norm_sq())
    }
}

// ---------------------------------------------------------------------------
// Composite circuits
// ---------------------------------------------------------------------------

/// H, controlled e^{i pi Q}, H: coherent LSB extraction from `mode`.
pub fn lsb_circuit(state: &mut GridState, mode: usize) -> Result<(), GridError> {
    state.hadamard_qubit();
    state.phase_q(mode, std::f64::consts::PI, true);
    state.hadamard_qubit();
    Ok(())
}

/// Adjoint of the LSB circuit.
pub fn lsb_circuit_dagger(state: &mut GridState, mode: usize) -> Result<(), GridError> {
    state.hadamard_qubit();
    state.phase_q(mode, -std::f64::consts::PI, true);
    state.hadamard_qubit();
    Ok(())
}

/// Qubit-controlled scalar multiplication on `mode`.
pub fn ctrl_m_alpha(state: &mut GridState, mode: usize, alpha: f64) -> Result<(), GridError> {
    state.ctrl_scale(mode, alpha)
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

/// V_alpha on (A, B, C, qubit).
pub fn v_alpha(state: &mut GridState, alpha: f64) -> Result<(), GridError> {
    state.squeeze(C, 2.0)?;
    lsb_circuit(state, A)?;
    state.shift_p(A, -1.0, true)?;
    ctrl_m_alpha(state, B, alpha)?;
    state.shift_p(C, 1.0, true)?;
    lsb_circuit(state, C)?;
    state.squeeze(A, 0.5)?;
    Ok(())
}

/// Adjoint of V_alpha.
pub fn v_alpha_dagger(state: &mut GridState, alpha: f64) -> Result<(), GridError> {
    state.squeeze(A, 2.0)?;
    lsb_circuit_dagger(state, C)?;
    state.shift_p(C, -1.0, true)?;
    ctrl_m_alpha(state, B, 1.0 / alpha)?;
    state.shift_p(A, 1.0, true)?;
    lsb_circuit_dagger(state, A)?;
    state.squeeze(C, 0.5)?;
    Ok(())
}

/// V_{a,N,m}: the m bit-controlled scalings followed by m cleanup steps.
pub fn v_anm(state: &mut GridState, a: u64, n: u64, m: u32) -> Result<(), GridError> {
    let mut factor = a % n;
    for _ in 0..m {
        v_alpha(state, factor as f64)?;
        factor = ((factor as u128 * factor as u128) % n as u128) as u64;
    }
    for _ in 0..m {
        v_alpha_dagger(state, 1.0)?;
    }
    Ok(())
}

/// Adjoint of V_{a,N,m}.
pub fn v_anm_dagger(state: &mut GridState, a: u64, n: u64, m: u32) -> Result<(), GridError> {
    for _ in 0..m {
        v_alpha(state, 1.0)?;
    }
    // factors in reverse order
    let mut factors = Vec::with_capacity(m as usize);
    let mut factor = a % n;
    for _ in 0..m {
        factors.push(factor);
        factor = ((factor as u128 * factor as u128) % n as u128) as u64;
    }
    for &f in factors.iter().rev() {
        v_alpha_dagger(state, f as f64)?;
    }
    Ok(())
}

/// U_{a,N,m} = V_{a,N,m}^dagger . e^{-i P_B} . V_{a,N,m}.
pub fn u_anm(state: &mut GridState, a: u64, n: u64, m: u32) -> Result<(), GridError> {
    v_anm_dagger(state, a, n, m)?;
    state.shift_p(B, 1.0, false)?;
    v_anm(state, a, n, m)?;
    Ok(())
}
