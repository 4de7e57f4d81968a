//! Observation loss, NLSE-residual physics loss and their weighting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::pairwise_sum;
use crate::signal::ComplexSignal;
use crate::spline::SplineSurface;

/// Residual penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualNorm {
    /// Mean of |R|.
    #[default]
    L1,
    /// Mean of |R|².
    L2,
}

impl ResidualNorm {
    pub fn penalty(self, r: Complex64) -> f64 {
        match self {
            ResidualNorm::L1 => r.norm(),
            ResidualNorm::L2 => r.norm_sqr(),
        }
    }

    /// ∂ρ/∂Re R + j·∂ρ/∂Im R, with the ℓ1 subgradient at 0 taken as 0.
    pub fn cotangent(self, r: Complex64) -> Complex64 {
        match self {
            ResidualNorm::L1 => {
                let a = r.norm();
                if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    r / a
                }
            }
            ResidualNorm::L2 => r * 2.0,
        }
    }
}

/// Constant fiber coefficients of the residual, stored as raw trainable
/// values times fixed scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualParams {
    pub alpha_hat: f64,
    pub beta2_raw: f64,
    pub gamma_raw: f64,
    pub scale_beta2: f64,
    pub scale_gamma: f64,
}

impl ResidualParams {
    pub fn new(beta2_raw: f64, gamma_raw: f64, scale_beta2: f64, scale_gamma: f64) -> Self {
        Self {
            alpha_hat: 0.0,
            beta2_raw,
            gamma_raw,
            scale_beta2,
            scale_gamma,
        }
    }

    /// Unit scales: raw values are the coefficients themselves.
    pub fn unscaled(beta2: f64, gamma: f64) -> Self {
        Self::new(beta2, gamma, 1.0, 1.0)
    }

    pub fn beta2_hat(&self) -> f64 {
        self.beta2_raw * self.scale_beta2
    }

    pub fn gamma_hat(&self) -> f64 {
        self.gamma_raw * self.scale_gamma
    }
}

/// Sampled (z, t) collocation points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSet {
    pub coords: Vec<(f64, f64)>,
}

impl CoordinateSet {
    pub fn new(coords: Vec<(f64, f64)>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Weights of the observation and physics terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_io: f64,
    pub lambda_p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_io: 1.0,
            lambda_p: 1.0,
        }
    }
}

impl LossWeights {
    /// Observation term only.
    pub fn observation_only() -> Self {
        Self {
            lambda_io: 1.0,
            lambda_p: 0.0,
        }
    }
}

/// R = ∂z s + (α/2)·s + (j·β₂/2)·∂²t s − j·γ·|s|²·s.
pub fn nlse_residual(value: Complex64, d_dz: Complex64, d2_dt2: Complex64, params: &ResidualParams) -> Complex64 {
    let j = Complex64::i();
    d_dz + value * (params.alpha_hat / 2.0) + j * d2_dt2 * (params.beta2_hat() / 2.0)
        - j * value * (params.gamma_hat() * value.norm_sqr())
}

/// Mean residual penalty over `coords`.
pub fn physics_loss(
    surface: &SplineSurface,
    coords: &CoordinateSet,
    params: &ResidualParams,
    norm: ResidualNorm,
) -> Result<f64> {
    if coords.is_empty() {
        return Err(Error::InvalidArgument("physics loss needs at least one coordinate".into()));
    }
    let penalties = coords
        .coords
        .iter()
        .map(|&(z, t)| {
            let p = surface.eval(z, t)?;
            Ok(norm.penalty(nlse_residual(p.value, p.d_dz, p.d2_dt2, params)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&penalties) / coords.len() as f64)
}

fn sample_mse(predicted: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            predicted.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("empty signals".into()));
    }
    let sq: Vec<f64> = predicted.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).collect();
    Ok(pairwise_sum(&sq) / predicted.len() as f64)
}

/// (1/N)·Σ|ŷ − y|².
pub fn observation_loss(predicted: &ComplexSignal, reference: &ComplexSignal) -> Result<f64> {
    sample_mse(&predicted.samples, &reference.samples)
}

/// Batch mean of [`observation_loss`].
pub fn observation_loss_batch(predicted: &[ComplexSignal], reference: &[ComplexSignal]) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "batch sizes {} and {} must match and be non-zero",
            predicted.len(),
            reference.len()
        )));
    }
    let per = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| observation_loss(p, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&per) / per.len() as f64)
}

pub fn total_loss(l_io: f64, l_p: f64, w: &LossWeights) -> f64 {
    w.lambda_io * l_io + w.lambda_p * l_p
}

/// Inverse-gradient-norm balancing blended by an exponential moving average.
/// The target weights are normalized to sum to 2; so is the result.
pub fn update_weights(current: &LossWeights, grad_norm_io: f64, grad_norm_p: f64, ema: f64) -> LossWeights {
    let total = grad_norm_io + grad_norm_p;
    if !(grad_norm_io > 0.0) || !(grad_norm_p > 0.0) || !total.is_finite() {
        return *current;
    }
    let raw_io = total / grad_norm_io;
    let raw_p = total / grad_norm_p;
    let k = 2.0 / (raw_io + raw_p);
    let (t_io, t_p) = (raw_io * k, raw_p * k);
    let lambda_io = (1.0 - ema) * current.lambda_io + ema * t_io;
    let lambda_p = (1.0 - ema) * current.lambda_p + ema * t_p;
    let s = 2.0 / (lambda_io + lambda_p);
    LossWeights {
        lambda_io: lambda_io * s,
        lambda_p: lambda_p * s,
    }
}
