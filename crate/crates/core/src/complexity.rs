//! Real-multiplication accounting for the twin and the spline interpolation.
//!
//! Conventions: one split-step segment costs 8·N·log₂N for its four DFTs
//! plus 24·N for the phase multiplies; a value query costs 52; building the
//! coefficients costs 52N−16 + 256(M−1)(N−1).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::CoordinateSet;
use crate::nlse::{nonlinear_step, Propagator, SignalMatrix, TwinParams};
use crate::spline::{count_query_mults, OpCounter, SplineSurface};

/// Multiplications per split-step segment outside the DFTs, per sample.
pub const PHASE_MULTS_PER_SAMPLE: u64 = 24;

/// Multiplications charged per sample and DFT stage: 2·N·log₂N per DFT.
const DFT_MULTS_FACTOR: u64 = 2;

/// Exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidArgument("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub ssfm_mults: u64,
    pub interp_coeff_mults: u64,
    pub interp_query_mults: u64,
    /// (ssfm_mults + 52) / N_sym.
    pub per_symbol: Ratio,
    pub params_trainable: u64,
}

/// Neural-operator baselines, trainable weights only.
pub const PINO_REFERENCE: [(&str, u64); 2] = [("PINO_small", 400_000), ("PINO_large", 20_000_000)];

/// 2·N·log₂N per DFT, four DFTs per segment.
pub fn ssfm_segment_mults(n: u64) -> u64 {
    4 * DFT_MULTS_FACTOR * n * u64::from(n.trailing_zeros()) + PHASE_MULTS_PER_SAMPLE * n
}

/// 52N−16 + 256(M−1)(N−1).
pub fn coefficient_mults(n: u64, m: u64) -> u64 {
    52 * n - 16 + 256 * m.saturating_sub(1) * (n - 1)
}

/// Formula costs for N samples, M segments, `n_sym` symbols and
/// `n_queries` interpolation queries.
pub fn pidt_cost(n: usize, m: usize, n_sym: usize, n_queries: usize) -> Result<CostReport> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("N = {n} must be a power of two >= 2")));
    }
    if m == 0 || n_sym == 0 {
        return Err(Error::InvalidArgument("M and N_sym must be >= 1".into()));
    }
    let (n, m) = (n as u64, m as u64);
    let ssfm = m * ssfm_segment_mults(n);
    Ok(CostReport {
        ssfm_mults: ssfm,
        interp_coeff_mults: coefficient_mults(n, m),
        interp_query_mults: count_query_mults(n_queries as u64),
        per_symbol: Ratio::new(ssfm + crate::spline::QUERY_MULTS, n_sym as u64)?,
        params_trainable: 2 * m,
    })
}

/// C_PINO / C_PIDT from this module's own formulas, with
/// C_PINO = |θ_NN| / N_sym.
pub fn pino_ratio(pino_weights: u64, report: &CostReport) -> f64 {
    pino_weights as f64 / (report.ssfm_mults + crate::spline::QUERY_MULTS) as f64
}

/// Counters gathered while actually running the twin, building the surface
/// and answering `coords`. Requires the `op-count` feature.
pub fn instrumented_counts(
    prop: &Propagator,
    input: &[Complex64],
    twin: &TwinParams,
    coords: &CoordinateSet,
    n_sym: usize,
) -> Result<(CostReport, OpCounter)> {
    if !OpCounter::enabled() {
        return Err(Error::Unsupported("built without the op-count feature".into()));
    }
    let grid = *prop.grid();
    let n = grid.n_samples as u64;
    let log_n = u64::from(n.trailing_zeros());
    let dz = grid.dz;
    let mut ssfm = 0u64;
    let mut columns = vec![input.to_vec()];
    let mut x = input.to_vec();
    for seg in &twin.segments {
        let phases = prop.half_step_phases(seg.alpha, seg.beta2, dz);
        for half in 0..2 {
            prop.dft(&mut x);
            for (v, p) in x.iter_mut().zip(&phases) {
                *v *= p;
            }
            prop.idft(&mut x);
            ssfm += 2 * DFT_MULTS_FACTOR * n * log_n;
            if half == 0 {
                nonlinear_step(&mut x, seg.gamma, dz);
            }
        }
        ssfm += PHASE_MULTS_PER_SAMPLE * n;
        columns.push(x.clone());
    }
    let matrix = SignalMatrix::from_columns(&columns, grid)?;
    let mut counter = OpCounter::default();
    let surface = SplineSurface::build_counted(&matrix, &mut counter)?;
    for &(z, t) in &coords.coords {
        surface.value_counted(z, t, &mut counter)?;
    }
    let report = CostReport {
        ssfm_mults: ssfm,
        interp_coeff_mults: counter.appendix_coeff_mults,
        interp_query_mults: counter.query_mults,
        per_symbol: Ratio::new(ssfm + crate::spline::QUERY_MULTS, n_sym as u64)?,
        params_trainable: twin.trainable_count() as u64,
    };
    Ok((report, counter))
}
