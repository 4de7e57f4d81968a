//! Split-step Fourier propagation of the scalar NLSE.
//!
//! Each segment applies a symmetric split `D·σ·D`: a dispersive half step in
//! the frequency domain, the full Kerr phase rotation in the time domain, and
//! a second dispersive half step. DFTs are unitary (1/√N both ways).
//!
//! The propagator is unit-agnostic: in physical use `dt` is in ps, `dz` in
//! km, β₂ in ps²/km, γ in 1/(W·km) and fields in √W. [`Normalization`]
//! converts to the dimensionless frame used by the trainer.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

/// Fiber coefficients of the NLSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    /// Attenuation, 1/km.
    pub alpha: f64,
    /// Group-velocity dispersion, ps²/km.
    pub beta2: f64,
    /// Kerr coefficient, 1/(W·km).
    pub gamma: f64,
    pub length_km: f64,
}

impl FiberParams {
    /// Standard single-mode fiber at 1550 nm, lossless.
    pub fn smf(length_km: f64) -> Self {
        Self {
            alpha: 0.0,
            beta2: -21.67,
            gamma: 1.27,
            length_km,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fiber length {} must be positive",
                self.length_km
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "attenuation {} must be non-negative",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Coefficients of one split-step segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentParams {
    pub alpha: f64,
    pub beta2: f64,
    pub gamma: f64,
}

/// Per-segment twin coefficients over a fiber of length `length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinParams {
    pub segments: Vec<SegmentParams>,
    pub length: f64,
}

impl TwinParams {
    pub fn uniform(params: SegmentParams, m: usize, length: f64) -> Self {
        Self {
            segments: vec![params; m],
            length,
        }
    }

    pub fn from_fiber(fiber: &FiberParams, m: usize) -> Self {
        Self::uniform(
            SegmentParams {
                alpha: fiber.alpha,
                beta2: fiber.beta2,
                gamma: fiber.gamma,
            },
            m,
            fiber.length_km,
        )
    }

    pub fn m(&self) -> usize {
        self.segments.len()
    }

    pub fn dz(&self) -> f64 {
        self.length / self.segments.len() as f64
    }

    /// Trainable scalars with attenuation frozen: β₂ and γ per segment.
    pub fn trainable_count(&self) -> usize {
        2 * self.segments.len()
    }
}

/// Discretization of the (t, z) domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_samples: usize,
    pub dt: f64,
    pub m_segments: usize,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(n_samples: usize, dt: f64, m_segments: usize, length: f64) -> Result<Self> {
        if n_samples < 2 || !n_samples.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "sample count {n_samples} must be a power of two >= 2"
            )));
        }
        if m_segments == 0 {
            return Err(Error::InvalidArgument("need at least one segment".into()));
        }
        if !(dt > 0.0) || !(length > 0.0) {
            return Err(Error::InvalidArgument(
                "sampling period and length must be positive".into(),
            ));
        }
        Ok(Self {
            n_samples,
            dt,
            m_segments,
            dz: length / m_segments as f64,
        })
    }

    /// Time window T = N·dt.
    pub fn time_window(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    /// Span covered by the N time knots, (N − 1)·dt.
    pub fn knot_span(&self) -> f64 {
        (self.n_samples - 1) as f64 * self.dt
    }

    pub fn length(&self) -> f64 {
        self.m_segments as f64 * self.dz
    }
}

/// DFT angular frequencies, DC first; the Nyquist bin is −π/dt.
pub fn angular_frequencies(grid: &GridSpec) -> Vec<f64> {
    let n = grid.n_samples;
    let df = 1.0 / (n as f64 * grid.dt);
    (0..n)
        .map(|k| {
            let signed = if k < n / 2 { k as isize } else { k as isize - n as isize };
            2.0 * std::f64::consts::PI * signed as f64 * df
        })
        .collect()
}

/// The N×(M+1) wavefield Ŝ; column m is the field at z = m·dz.
///
/// Stored row-major: entry (n, m) lives at `n·(M+1) + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: Vec<Complex64>,
    grid: GridSpec,
}

impl SignalMatrix {
    /// Assemble from columns. Every column must have length N.
    pub fn from_columns(columns: &[Vec<Complex64>], grid: GridSpec) -> Result<Self> {
        let n = grid.n_samples;
        let cols = grid.m_segments + 1;
        if columns.len() != cols || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "expected {cols} columns of length {n}"
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); n * cols];
        for (m, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * cols + m] = *v;
            }
        }
        Ok(Self { data, grid })
    }

    /// Build from a function of (row n, column m).
    pub fn from_fn(grid: GridSpec, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let cols = grid.m_segments + 1;
        let data = (0..grid.n_samples * cols)
            .map(|idx| f(idx / cols, idx % cols))
            .collect();
        Self { data, grid }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.grid.n_samples
    }

    pub fn cols(&self) -> usize {
        self.grid.m_segments + 1
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.cols() + m]
    }

    pub fn column(&self, m: usize) -> Vec<Complex64> {
        (0..self.rows()).map(|n| self.get(n, m)).collect()
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        let c = self.cols();
        &self.data[n * c..(n + 1) * c]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Binary container: little-endian header `N: u64, M: u64, dt: f64,
    /// dz: f64`, then row-major interleaved (re, im) f64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_u64::<LittleEndian>(self.grid.n_samples as u64)?;
        w.write_u64::<LittleEndian>(self.grid.m_segments as u64)?;
        w.write_f64::<LittleEndian>(self.grid.dt)?;
        w.write_f64::<LittleEndian>(self.grid.dz)?;
        for v in &self.data {
            w.write_f64::<LittleEndian>(v.re)?;
            w.write_f64::<LittleEndian>(v.im)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let n = r.read_u64::<LittleEndian>()? as usize;
        let m = r.read_u64::<LittleEndian>()? as usize;
        let dt = r.read_f64::<LittleEndian>()?;
        let dz = r.read_f64::<LittleEndian>()?;
        if n == 0 || m == 0 || n.checked_mul(m + 1).is_none() {
            return Err(Error::Format(format!("bad matrix header N={n} M={m}")));
        }
        let grid = GridSpec {
            n_samples: n,
            dt,
            m_segments: m,
            dz,
        };
        let mut data = Vec::with_capacity(n * (m + 1));
        for _ in 0..n * (m + 1) {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            data.push(Complex64::new(re, im));
        }
        Ok(Self { data, grid })
    }
}

/// Split-step propagator bound to one grid; holds the FFT plans and the
/// angular-frequency vector.
#[derive(Clone)]
pub struct Propagator {
    grid: GridSpec,
    omega: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    norm: f64,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator").field("grid", &self.grid).finish()
    }
}

impl Propagator {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.n_samples);
        let ifft = planner.plan_fft_inverse(grid.n_samples);
        Self {
            omega: angular_frequencies(&grid),
            norm: (grid.n_samples as f64).sqrt().recip(),
            grid,
            fft,
            ifft,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Unitary forward DFT in place.
    pub fn dft(&self, buf: &mut [Complex64]) {
        self.fft.process(buf);
        for v in buf.iter_mut() {
            *v *= self.norm;
        }
    }

    /// Unitary inverse DFT in place.
    pub fn idft(&self, buf: &mut [Complex64]) {
        self.ifft.process(buf);
        for v in buf.iter_mut() {
            *v *= self.norm;
        }
    }

    /// Frequency-domain multipliers exp[(−α/2 + j·β₂·ω²/2)·dz/2].
    pub fn half_step_phases(&self, alpha: f64, beta2: f64, dz: f64) -> Vec<Complex64> {
        self.omega
            .iter()
            .map(|w| Complex64::new(-alpha / 2.0, beta2 * w * w / 2.0).scale(dz / 2.0).exp())
            .collect()
    }

    /// Dispersive half step over dz/2.
    pub fn linear_half_step(&self, field: &mut [Complex64], alpha: f64, beta2: f64, dz: f64) {
        let phases = self.half_step_phases(alpha, beta2, dz);
        self.apply_multipliers(field, &phases);
    }

    pub(crate) fn apply_multipliers(&self, field: &mut [Complex64], multipliers: &[Complex64]) {
        self.dft(field);
        for (v, p) in field.iter_mut().zip(multipliers) {
            *v *= p;
        }
        self.idft(field);
    }

    /// One symmetric split-step segment of length `dz`.
    pub fn ssfm_segment(&self, field: &mut [Complex64], seg: &SegmentParams, dz: f64) {
        let phases = self.half_step_phases(seg.alpha, seg.beta2, dz);
        self.apply_multipliers(field, &phases);
        nonlinear_step(field, seg.gamma, dz);
        self.apply_multipliers(field, &phases);
    }

    /// Propagate through every twin segment, keeping all intermediate fields.
    pub fn propagate(&self, input: &[Complex64], twin: &TwinParams) -> Result<SignalMatrix> {
        self.check_shapes(input, twin)?;
        let dz = self.grid.dz;
        let mut columns = Vec::with_capacity(twin.m() + 1);
        columns.push(input.to_vec());
        let mut field = input.to_vec();
        for (m, seg) in twin.segments.iter().enumerate() {
            self.ssfm_segment(&mut field, seg, dz);
            if field.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { segment: m + 1 });
            }
            columns.push(field.clone());
        }
        SignalMatrix::from_columns(&columns, self.grid)
    }

    /// Propagate and return only the output field.
    pub fn propagate_output(&self, input: &[Complex64], twin: &TwinParams) -> Result<Vec<Complex64>> {
        self.check_shapes(input, twin)?;
        let dz = self.grid.dz;
        let mut field = input.to_vec();
        for (m, seg) in twin.segments.iter().enumerate() {
            self.ssfm_segment(&mut field, seg, dz);
            if field.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { segment: m + 1 });
            }
        }
        Ok(field)
    }

    fn check_shapes(&self, input: &[Complex64], twin: &TwinParams) -> Result<()> {
        if input.len() != self.grid.n_samples {
            return Err(Error::InvalidArgument(format!(
                "input has {} samples, grid expects {}",
                input.len(),
                self.grid.n_samples
            )));
        }
        if twin.m() != self.grid.m_segments {
            return Err(Error::InvalidArgument(format!(
                "twin has {} segments, grid expects {}",
                twin.m(),
                self.grid.m_segments
            )));
        }
        Ok(())
    }
}

/// Kerr phase rotation x ↦ x·exp(j·γ·dz·|x|²), element-wise.
pub fn nonlinear_step(field: &mut [Complex64], gamma: f64, dz: f64) {
    if gamma == 0.0 {
        return;
    }
    for v in field.iter_mut() {
        let phi = gamma * dz * v.norm_sqr();
        *v *= Complex64::from_polar(1.0, phi);
    }
}

/// Ground-truth channel: `m_fine` uniform segments of the true fiber. No
/// noise is added here.
pub fn reference_channel(
    input: &ComplexSignal,
    truth: &FiberParams,
    m_fine: usize,
) -> Result<ComplexSignal> {
    truth.validate()?;
    if m_fine == 0 {
        return Err(Error::InvalidArgument("m_fine must be >= 1".into()));
    }
    let grid = GridSpec::new(input.len(), input.dt_ps, m_fine, truth.length_km)?;
    let prop = Propagator::new(grid);
    let twin = TwinParams::from_fiber(truth, m_fine);
    let out = prop.propagate_output(&input.samples, &twin)?;
    Ok(ComplexSignal::new(out, input.dt_ps))
}

/// Dimensionless frame: time in symbol periods, distance in fiber lengths,
/// field in units of √P₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub symbol_period_ps: f64,
    pub length_km: f64,
    pub power_w: f64,
}

impl Normalization {
    pub fn beta2_to_normalized(&self, beta2: f64) -> f64 {
        beta2 * self.length_km / (self.symbol_period_ps * self.symbol_period_ps)
    }

    pub fn beta2_to_physical(&self, beta2: f64) -> f64 {
        beta2 * self.symbol_period_ps * self.symbol_period_ps / self.length_km
    }

    pub fn gamma_to_normalized(&self, gamma: f64) -> f64 {
        gamma * self.power_w * self.length_km
    }

    pub fn gamma_to_physical(&self, gamma: f64) -> f64 {
        gamma / (self.power_w * self.length_km)
    }

    pub fn alpha_to_normalized(&self, alpha: f64) -> f64 {
        alpha * self.length_km
    }

    pub fn signal_to_normalized(&self, s: &ComplexSignal) -> ComplexSignal {
        s.scaled(self.power_w.sqrt().recip(), s.dt_ps / self.symbol_period_ps)
    }

    pub fn signal_to_physical(&self, s: &ComplexSignal) -> ComplexSignal {
        s.scaled(self.power_w.sqrt(), s.dt_ps * self.symbol_period_ps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, dt: f64, m: usize, l: f64) -> GridSpec {
        GridSpec::new(n, dt, m, l).unwrap()
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    fn energy(v: &[Complex64]) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum()
    }

    #[test]
    fn frequency_layout() {
        let g = grid(8, 0.5, 1, 1.0);
        let w = angular_frequencies(&g);
        assert_eq!(w[0], 0.0);
        assert!((w[4] + PI / 0.5).abs() < 1e-12);
        // enumerate: bins ±1..±3 cancel, Nyquist remains
        let sum: f64 = w.iter().sum();
        assert!((sum + PI / 0.5).abs() < 1e-12);
        assert!((w[1] - 2.0 * PI / 4.0).abs() < 1e-12);
        assert!((w[7] + 2.0 * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert!(GridSpec::new(48, 1.0, 2, 1.0).is_err());
        assert!(GridSpec::new(1, 1.0, 2, 1.0).is_err());
        assert!(GridSpec::new(64, 1.0, 0, 1.0).is_err());
    }

    fn test_field(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let x = i as f64;
                Complex64::new((0.3 * x).sin() + 0.2, (0.7 * x).cos() * 0.5)
            })
            .collect()
    }

    #[test]
    fn zero_dispersion_half_step_is_identity() {
        let g = grid(64, 1.0, 1, 1.0);
        let p = Propagator::new(g);
        let x = test_field(64);
        let mut y = x.clone();
        p.linear_half_step(&mut y, 0.0, 0.0, 1.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lossless_half_step_conserves_energy() {
        let g = grid(64, 1.0, 1, 1.0);
        let p = Propagator::new(g);
        let x = test_field(64);
        let mut y = x.clone();
        p.linear_half_step(&mut y, 0.0, -3.7, 2.0);
        assert!((energy(&x) - energy(&y)).abs() / energy(&x) < 1e-10);
    }

    #[test]
    fn half_step_disperses_gaussian_like_closed_form() {
        // s(0,t) = exp(-t²/2T0²); after distance z the envelope is
        // T0/sqrt(T0² - jβ₂z) · exp(-t² / (2(T0² - jβ₂z))).
        let n = 1024;
        let dt = 0.2;
        let t0 = 5.0;
        let beta2 = -2.0;
        let z = 10.0;
        let g = grid(n, dt, 1, z);
        let p = Propagator::new(g);
        let t: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * dt).collect();
        let mut field: Vec<Complex64> =
            t.iter().map(|t| Complex64::new((-t * t / (2.0 * t0 * t0)).exp(), 0.0)).collect();
        // a half step over 2z covers distance z
        p.linear_half_step(&mut field, 0.0, beta2, 2.0 * z);
        let q = Complex64::new(t0 * t0, -beta2 * z);
        let exact: Vec<Complex64> = t
            .iter()
            .map(|t| (Complex64::new(t0, 0.0) / q.sqrt()) * (-(t * t) / (2.0 * q)).exp())
            .collect();
        assert!(rel_l2(&field, &exact) < 1e-6);
        // broadened width
        let width = t0 * (1.0 + (beta2 * z / (t0 * t0)).powi(2)).sqrt();
        let peak = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!((peak - (t0 / width).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn nonlinear_step_is_phase_only() {
        let mut x = test_field(32);
        let orig = x.clone();
        nonlinear_step(&mut x, 0.0, 1.0);
        assert_eq!(x, orig);
        nonlinear_step(&mut x, 2.3, 0.7);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn cw_segment_accumulates_spm_phase() {
        let n = 32;
        let power = 2.0_f64;
        let gamma = 0.8;
        let dz = 0.6;
        let g = grid(n, 1.0, 1, dz);
        let p = Propagator::new(g);
        let mut x = vec![Complex64::new(power.sqrt(), 0.0); n];
        let seg = SegmentParams {
            alpha: 0.0,
            beta2: 5.0,
            gamma,
        };
        p.ssfm_segment(&mut x, &seg, dz);
        for v in &x {
            assert!((v.arg() - gamma * power * dz).abs() < 1e-12);
            assert!((v.norm() - power.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_segment_is_identity() {
        let g = grid(16, 1.0, 1, 1.0);
        let p = Propagator::new(g);
        let x = test_field(16);
        let mut y = x.clone();
        p.ssfm_segment(&mut y, &SegmentParams::default(), 1.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn propagate_matches_manual_iteration_bitwise() {
        let g = grid(64, 0.5, 4, 1.0);
        let p = Propagator::new(g);
        let twin = TwinParams {
            segments: vec![
                SegmentParams { alpha: 0.0, beta2: -0.3, gamma: 0.1 },
                SegmentParams { alpha: 0.0, beta2: -0.4, gamma: 0.2 },
                SegmentParams { alpha: 0.0, beta2: 0.1, gamma: 0.05 },
                SegmentParams { alpha: 0.0, beta2: -0.2, gamma: 0.0 },
            ],
            length: 1.0,
        };
        let x = test_field(64);
        let s = p.propagate(&x, &twin).unwrap();
        assert_eq!(s.column(0), x);
        let mut manual = x.clone();
        for (m, seg) in twin.segments.iter().enumerate() {
            p.ssfm_segment(&mut manual, seg, 0.25);
            assert_eq!(s.column(m + 1), manual);
        }
        assert_eq!(p.propagate_output(&x, &twin).unwrap(), manual);
    }

    #[test]
    fn propagate_conserves_energy_when_lossless_and_decays_with_loss() {
        let g = grid(64, 0.5, 6, 1.0);
        let p = Propagator::new(g);
        let x = test_field(64);
        let lossless = TwinParams::uniform(
            SegmentParams { alpha: 0.0, beta2: -0.34, gamma: 0.5 },
            6,
            1.0,
        );
        let s = p.propagate(&x, &lossless).unwrap();
        let e0 = energy(&s.column(0));
        for m in 0..=6 {
            assert!((energy(&s.column(m)) - e0).abs() / e0 < 1e-10);
        }
        let lossy = TwinParams::uniform(
            SegmentParams { alpha: 0.3, beta2: -0.34, gamma: 0.5 },
            6,
            1.0,
        );
        let s = p.propagate(&x, &lossy).unwrap();
        for m in 1..=6 {
            assert!(energy(&s.column(m)) <= energy(&s.column(m - 1)));
        }
    }

    #[test]
    fn single_segment_zero_params_gives_two_equal_columns() {
        let g = grid(16, 1.0, 1, 1.0);
        let p = Propagator::new(g);
        let x = test_field(16);
        let s = p
            .propagate(&x, &TwinParams::uniform(SegmentParams::default(), 1, 1.0))
            .unwrap();
        for (a, b) in s.column(0).iter().zip(&s.column(1)) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn forward_then_reverse_recovers_input() {
        let g = grid(64, 0.5, 4, 1.0);
        let p = Propagator::new(g);
        let segs = vec![
            SegmentParams { alpha: 0.0, beta2: -0.3, gamma: 0.4 },
            SegmentParams { alpha: 0.0, beta2: -0.5, gamma: 0.1 },
            SegmentParams { alpha: 0.0, beta2: 0.2, gamma: 0.3 },
            SegmentParams { alpha: 0.0, beta2: -0.1, gamma: 0.2 },
        ];
        let x = test_field(64);
        let fwd = p.propagate_output(&x, &TwinParams { segments: segs.clone(), length: 1.0 }).unwrap();
        let back: Vec<SegmentParams> = segs
            .iter()
            .rev()
            .map(|s| SegmentParams { alpha: 0.0, beta2: -s.beta2, gamma: -s.gamma })
            .collect();
        let rec = p.propagate_output(&fwd, &TwinParams { segments: back, length: 1.0 }).unwrap();
        assert!(rel_l2(&rec, &x) < 1e-8);
    }

    #[test]
    fn overflow_names_segment() {
        let g = grid(8, 1.0, 2, 1.0);
        let p = Propagator::new(g);
        let mut x = vec![Complex64::new(1.0, 0.0); 8];
        x[3] = Complex64::new(f64::INFINITY, 0.0);
        let twin = TwinParams::uniform(SegmentParams::default(), 2, 1.0);
        assert!(matches!(
            p.propagate(&x, &twin),
            Err(Error::NumericOverflow { segment: 1 })
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = grid(8, 1.0, 2, 1.0);
        let p = Propagator::new(g);
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let twin = TwinParams::uniform(SegmentParams::default(), 2, 1.0);
        assert!(p.propagate(&x, &twin).is_err());
        let x = vec![Complex64::new(1.0, 0.0); 8];
        let twin = TwinParams::uniform(SegmentParams::default(), 3, 1.0);
        assert!(p.propagate(&x, &twin).is_err());
    }

    #[test]
    fn reference_channel_identity_and_step() {
        let x = ComplexSignal::new(test_field(16), 1.0);
        let zero = FiberParams { alpha: 0.0, beta2: 0.0, gamma: 0.0, length_km: 80.0 };
        let y = reference_channel(&x, &zero, 800).unwrap();
        assert!(rel_l2(&y.samples, &x.samples) < 1e-12);
        let twin = TwinParams::from_fiber(&FiberParams::smf(80.0), 800);
        assert!((twin.dz() - 0.1).abs() < 1e-15);
        assert!(reference_channel(&x, &zero, 0).is_err());
    }

    #[test]
    fn matrix_binary_roundtrip() {
        let g = grid(8, 0.25, 3, 1.5);
        let s = SignalMatrix::from_fn(g, |n, m| Complex64::new(n as f64, -(m as f64) * 0.5));
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * 4 * 16);
        // header layout
        assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 8);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.25);
        // first payload value is (0,0), second is entry (0,1) real part
        assert_eq!(f64::from_le_bytes(buf[48..56].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(buf[56..64].try_into().unwrap()), -0.5);
        let back = SignalMatrix::read_from(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(SignalMatrix::read_from(&buf[..40]).is_err());
    }

    #[test]
    fn normalization_roundtrip() {
        let norm = Normalization { symbol_period_ps: 1e3 / 14.0, length_km: 80.0, power_w: 1e-3 };
        let b = norm.beta2_to_normalized(-21.67);
        assert!((b - (-21.67 * 80.0 * 196.0 / 1e6)).abs() < 1e-12);
        assert!((norm.beta2_to_physical(b) + 21.67).abs() < 1e-12);
        let g = norm.gamma_to_normalized(1.27);
        assert!((g - 0.1016).abs() < 1e-12);
        assert!((norm.gamma_to_physical(g) - 1.27).abs() < 1e-12);
    }
}
