//! Transmit waveform synthesis and additive noise.
//!
//! Square-QAM symbols are drawn uniformly, upsampled, circularly filtered with
//! a root-raised-cosine pulse and scaled to a launch power. Circular filtering
//! keeps the waveform periodic, matching the periodic boundary of the
//! split-step propagator.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform i.i.d. square-QAM symbols with unit average constellation power.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    pub symbols: Vec<Complex64>,
    pub order: usize,
    pub seed: u64,
}

/// Uniformly sampled complex baseband field.
///
/// Samples are in √W, the sampling period in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    pub dt_ps: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, dt_ps: f64) -> Self {
        Self { samples, dt_ps }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power (1/N)·Σ|s|².
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Σ|s|².
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Apply a real factor to every sample.
    pub fn scaled(&self, factor: f64, dt_ps: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            dt_ps,
        }
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Noise level as an SNR relative to a reference signal power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseConfig {
    /// Noiseless sentinel.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed,
        }
    }

    /// Total noise power P_n = P₀ / 10^(snr/10).
    pub fn noise_power(&self, signal_power: f64) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

/// Converts dBm to W.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Square-QAM constellation indexed by Gray-coded label, scaled to unit
/// average power.
pub fn qam_constellation(order: usize) -> Result<Vec<Complex64>> {
    let side = (order as f64).sqrt().round() as usize;
    if order < 4 || side * side != order {
        return Err(Error::InvalidConstellation(order));
    }
    let bits = side.trailing_zeros();
    let levels_are_pow2 = side.is_power_of_two();
    let avg = 2.0 * ((side * side) as f64 - 1.0) / 3.0;
    let norm = avg.sqrt();
    let level = |i: usize| (2 * i) as f64 - (side as f64 - 1.0);

    let points = (0..order)
        .map(|label| {
            let (hi, lo) = (label / side, label % side);
            // Gray decoding only makes sense for power-of-two sides; other
            // square orders use natural labeling.
            let (row, col) = if levels_are_pow2 && bits > 0 {
                (gray_decode(hi), gray_decode(lo))
            } else {
                (hi, lo)
            };
            Complex64::new(level(col) / norm, level(row) / norm)
        })
        .collect();
    Ok(points)
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Draw `n_sym` uniform symbols from the unit-power square-QAM constellation.
pub fn generate_qam_symbols(n_sym: usize, order: usize, seed: u64) -> Result<SymbolSequence> {
    if n_sym == 0 {
        return Err(Error::InvalidArgument("n_sym must be >= 1".into()));
    }
    let constellation = qam_constellation(order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = (0..n_sym)
        .map(|_| constellation[rng.random_range(0..order)])
        .collect();
    Ok(SymbolSequence {
        symbols,
        order,
        seed,
    })
}

/// Root-raised-cosine taps, unit energy, length `span_symbols·oversampling + 1`.
///
/// Time is measured in symbol periods. The removable singularities at t = 0
/// and t = ±1/(4·rolloff) use their analytic limits.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, oversampling: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::InvalidArgument(format!(
            "rolloff {rolloff} outside [0, 1]"
        )));
    }
    if !span_symbols.is_multiple_of(2) || span_symbols == 0 {
        return Err(Error::InvalidArgument(format!(
            "span_symbols {span_symbols} must be even and positive"
        )));
    }
    if oversampling == 0 {
        return Err(Error::InvalidArgument("oversampling must be >= 1".into()));
    }

    let len = span_symbols * oversampling + 1;
    let center = (len / 2) as isize;
    let mut taps: Vec<f64> = (0..len)
        .map(|k| {
            let t = (k as isize - center) as f64 / oversampling as f64;
            rrc_value(t, rolloff)
        })
        .collect();

    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt().recip();
    for h in &mut taps {
        *h *= scale;
    }
    Ok(taps)
}

fn rrc_value(t: f64, beta: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if t.abs() < EPS {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta == 0.0 {
        return (PI * t).sin() / (PI * t);
    }
    let quarter = 1.0 / (4.0 * beta);
    if (t.abs() - quarter).abs() < EPS {
        let arg = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Pulse-shaping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub rolloff: f64,
    pub oversampling: usize,
    pub span_symbols: usize,
    pub launch_power_dbm: f64,
    /// Symbol period in ps.
    pub symbol_period_ps: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            rolloff: 0.1,
            oversampling: 2,
            span_symbols: 16,
            launch_power_dbm: 0.0,
            symbol_period_ps: 1e3 / 14.0,
        }
    }
}

/// Upsample, circularly filter with RRC taps and set the mean power to the
/// launch power.
pub fn pulse_shape(symbols: &SymbolSequence, cfg: &PulseConfig) -> Result<ComplexSignal> {
    let osf = cfg.oversampling;
    let taps = rrc_taps(cfg.rolloff, cfg.span_symbols, osf)?;
    let n = symbols.symbols.len() * osf;
    let mut upsampled = vec![Complex64::new(0.0, 0.0); n];
    for (k, s) in symbols.symbols.iter().enumerate() {
        upsampled[k * osf] = *s;
    }

    let center = taps.len() / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, h) in taps.iter().enumerate() {
            // out[i] = Σ_j h[j]·x[i - (j - center)]  (indices mod n)
            let shift = (j as isize - center as isize).rem_euclid(n as isize) as usize;
            let idx = (i + n - shift) % n;
            acc += upsampled[idx] * *h;
        }
        *o = acc;
    }

    let power = mean_power(&out);
    if power > 0.0 {
        let scale = (dbm_to_watt(cfg.launch_power_dbm) / power).sqrt();
        for s in &mut out {
            *s *= scale;
        }
    }
    Ok(ComplexSignal::new(
        out,
        cfg.symbol_period_ps / osf as f64,
    ))
}

/// Streaming circular complex Gaussian noise source.
///
/// Each call draws fresh noise from the owned RNG stream, so repeated calls
/// produce independent realizations while the whole sequence stays
/// reproducible from the seed.
#[derive(Debug, Clone)]
pub struct AwgnSource {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl AwgnSource {
    /// Noise with total power `cfg.noise_power(signal_power)`, split equally
    /// between the quadratures.
    pub fn new(cfg: &NoiseConfig, signal_power: f64) -> Self {
        Self::with_rng(cfg, signal_power, ChaCha8Rng::seed_from_u64(cfg.seed))
    }

    pub fn with_rng(cfg: &NoiseConfig, signal_power: f64, rng: ChaCha8Rng) -> Self {
        Self {
            sigma: (cfg.noise_power(signal_power) / 2.0).sqrt(),
            rng,
        }
    }

    pub fn noise_power(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }

    pub fn add_in_place(&mut self, samples: &mut [Complex64]) {
        if self.sigma == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        for s in samples {
            let re = normal.sample(&mut self.rng);
            let im = normal.sample(&mut self.rng);
            *s += Complex64::new(re, im);
        }
    }

    pub fn add(&mut self, signal: &ComplexSignal) -> ComplexSignal {
        let mut out = signal.clone();
        self.add_in_place(&mut out.samples);
        out
    }
}

/// One-shot AWGN at the configured SNR relative to `signal_power` (W).
pub fn add_awgn(signal: &ComplexSignal, cfg: &NoiseConfig, signal_power: f64) -> ComplexSignal {
    AwgnSource::new(cfg, signal_power).add(signal)
}
