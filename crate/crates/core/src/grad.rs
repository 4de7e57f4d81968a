//! Exact gradients of the training loss through the split-step twin, the
//! spline surface and the NLSE residual.
//!
//! Every stage carries a hand-written adjoint. Complex quantities are pairs
//! of independent reals; a cotangent `ḡ` on a complex value `x` packs
//! `∂L/∂Re x + j·∂L/∂Im x`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{nlse_residual, CoordinateSet, LossWeights, ResidualNorm, ResidualParams};
use crate::nlse::{nonlinear_step, Propagator, SegmentParams, SignalMatrix, TwinParams};
use crate::par::{pairwise_sum, pairwise_sum_vecs, Exec};
use crate::spline::{SplineSurface, SurfacePoint};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fixed factors mapping raw trainable values to coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterScales {
    pub beta2: f64,
    pub gamma: f64,
}

impl Default for ParameterScales {
    fn default() -> Self {
        Self { beta2: 1.0, gamma: 1.0 }
    }
}

/// Raw parameters `[β₁, γ₁, …, β_M, γ_M, β̂, γ̂]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(m: usize) -> Self {
        Self {
            values: vec![0.0; 2 * m + 2],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 || !values.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "parameter vector length {} is not 2M+2 with M >= 1",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    /// Pack from coefficient values by dividing through the scales.
    pub fn from_parts(twin: &TwinParams, residual: &ResidualParams, scales: &ParameterScales) -> Self {
        let mut values = Vec::with_capacity(2 * twin.m() + 2);
        for s in &twin.segments {
            values.push(s.beta2 / scales.beta2);
            values.push(s.gamma / scales.gamma);
        }
        values.push(residual.beta2_hat() / scales.beta2);
        values.push(residual.gamma_hat() / scales.gamma);
        Self { values }
    }

    pub fn m(&self) -> usize {
        (self.values.len() - 2) / 2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn twin(&self, scales: &ParameterScales, length: f64) -> TwinParams {
        let segments = self.values[..2 * self.m()]
            .chunks(2)
            .map(|p| SegmentParams {
                alpha: 0.0,
                beta2: p[0] * scales.beta2,
                gamma: p[1] * scales.gamma,
            })
            .collect();
        TwinParams { segments, length }
    }

    pub fn residual(&self, scales: &ParameterScales) -> ResidualParams {
        let k = 2 * self.m();
        ResidualParams::new(self.values[k], self.values[k + 1], scales.beta2, scales.gamma)
    }

    /// Index of β̂ (γ̂ follows).
    pub fn residual_offset(&self) -> usize {
        2 * self.m()
    }
}

/// Gradient in the [`ParameterVector`] layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn axpy(&mut self, a: f64, other: &GradientVector) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }
}

/// One training signal with its noisy reference and collocation points.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub input: Vec<Complex64>,
    pub reference: Vec<Complex64>,
    pub coords: CoordinateSet,
}

/// Loss composition shared by every batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub weights: LossWeights,
    pub norm: ResidualNorm,
    /// Include the physics term at all. With `false` no surface is built.
    pub physics: bool,
    pub scales: ParameterScales,
    /// Parameter indices whose gradient is forced to zero.
    pub frozen: Vec<usize>,
    #[doc(hidden)]
    pub corrupt_adjoint: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            norm: ResidualNorm::L1,
            physics: true,
            scales: ParameterScales::default(),
            frozen: Vec::new(),
            corrupt_adjoint: false,
        }
    }
}

/// Loss value with the gradient of each term.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub l_io: f64,
    pub l_p: f64,
    /// λ_io·∇L_io + λ_p·∇L_p.
    pub grad: GradientVector,
    pub grad_io: GradientVector,
    pub grad_p: GradientVector,
}

/// Forward state of one signal through the twin.
struct Trace {
    field: SignalMatrix,
    /// Field after the first half step of each segment.
    mid: Vec<Vec<Complex64>>,
}

fn forward(prop: &Propagator, input: &[Complex64], twin: &TwinParams) -> Result<Trace> {
    let mut mid = Vec::with_capacity(twin.m());
    let mut columns = Vec::with_capacity(twin.m() + 1);
    columns.push(input.to_vec());
    let dz = prop.grid().dz;
    let mut x = input.to_vec();
    for (m, seg) in twin.segments.iter().enumerate() {
        let phases = prop.half_step_phases(seg.alpha, seg.beta2, dz);
        prop.apply_multipliers(&mut x, &phases);
        mid.push(x.clone());
        nonlinear_step(&mut x, seg.gamma, dz);
        prop.apply_multipliers(&mut x, &phases);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { segment: m + 1 });
        }
        columns.push(x.clone());
    }
    Ok(Trace {
        field: SignalMatrix::from_columns(&columns, *prop.grid())?,
        mid,
    })
}

/// Backpropagate column cotangents through the twin; returns (dβ_m, dγ_m)
/// per segment.
fn twin_adjoint(
    prop: &Propagator,
    trace: &Trace,
    twin: &TwinParams,
    column_bar: &[Vec<Complex64>],
    corrupt: bool,
) -> Vec<(f64, f64)> {
    let dz = prop.grid().dz;
    let m_seg = twin.m();
    let mut grads = vec![(0.0, 0.0); m_seg];
    let mut bar = column_bar[m_seg].clone();
    let j = Complex64::i();
    for m in (0..m_seg).rev() {
        let seg = &twin.segments[m];
        let phases = prop.half_step_phases(seg.alpha, seg.beta2, dz);
        let out = trace.field.column(m + 1);
        let mut d_beta = half_step_backward(prop, &out, &mut bar, &phases, dz);

        // Kerr step b = a·exp(jγdz|a|²)
        let a = &trace.mid[m];
        let mut d_gamma = Vec::with_capacity(a.len());
        for (bb, av) in bar.iter_mut().zip(a) {
            let p = av.norm_sqr();
            let rot = Complex64::from_polar(1.0, seg.gamma * dz * p);
            let b = av * rot;
            let s = (bb.conj() * j * b).re;
            d_gamma.push(s * dz * p);
            let mut a_bar = *bb * rot.conj();
            if !corrupt {
                a_bar += av * (2.0 * seg.gamma * dz * s);
            }
            *bb = a_bar;
        }

        d_beta += half_step_backward(prop, a, &mut bar, &phases, dz);
        grads[m] = (d_beta, pairwise_sum(&d_gamma));

        for (b, c) in bar.iter_mut().zip(&column_bar[m]) {
            *b += c;
        }
    }
    grads
}

/// Cotangent `bar` on a half-step output `out` becomes the cotangent on the
/// input; returns dL/dβ₂ of this half step.
fn half_step_backward(prop: &Propagator, out: &[Complex64], bar: &mut [Complex64], phases: &[Complex64], dz: f64) -> f64 {
    let mut y = out.to_vec();
    prop.dft(&mut y);
    prop.dft(bar);
    let j = Complex64::i();
    let mut d_beta = Vec::with_capacity(y.len());
    for (((yb, yk), w), p) in bar.iter_mut().zip(&y).zip(prop.omega()).zip(phases) {
        d_beta.push((yb.conj() * j * yk).re * (w * w * dz / 4.0));
        *yb *= p.conj();
    }
    prop.idft(bar);
    pairwise_sum(&d_beta)
}

struct SignalTerms {
    l_io: f64,
    l_p: f64,
    grad_io: Vec<f64>,
    grad_p: Vec<f64>,
}

fn signal_terms(
    prop: &Propagator,
    item: &BatchItem,
    params: &ParameterVector,
    spec: &LossSpec,
    batch: usize,
) -> Result<SignalTerms> {
    let grid = prop.grid();
    let n = grid.n_samples;
    let m_seg = params.m();
    let twin = params.twin(&spec.scales, grid.length());
    let residual = params.residual(&spec.scales);
    let trace = forward(prop, &item.input, &twin)?;
    let out = trace.field.column(m_seg);
    if item.reference.len() != n {
        return Err(Error::InvalidArgument(format!(
            "reference has {} samples, grid expects {n}",
            item.reference.len()
        )));
    }

    let inv_b = (batch as f64).recip();
    let sq: Vec<f64> = out.iter().zip(&item.reference).map(|(a, b)| (a - b).norm_sqr()).collect();
    let l_io = pairwise_sum(&sq) / n as f64 * inv_b;
    let io_scale = 2.0 / n as f64 * inv_b;
    let mut cols_io = vec![vec![ZERO; n]; m_seg + 1];
    cols_io[m_seg] = out.iter().zip(&item.reference).map(|(a, b)| (a - b) * io_scale).collect();
    let mut grad_io = vec![0.0; params.len()];
    for (m, (gb, gg)) in twin_adjoint(prop, &trace, &twin, &cols_io, spec.corrupt_adjoint).into_iter().enumerate() {
        grad_io[2 * m] = gb * spec.scales.beta2;
        grad_io[2 * m + 1] = gg * spec.scales.gamma;
    }

    let mut grad_p = vec![0.0; params.len()];
    let mut l_p = 0.0;
    let use_physics = spec.physics && !(item.coords.is_empty() && spec.weights.lambda_p == 0.0);
    if use_physics {
        if item.coords.is_empty() {
            return Err(Error::InvalidArgument("physics loss needs at least one coordinate".into()));
        }
        let surface = SplineSurface::build(&trace.field)?;
        let mut cot = surface.zero_cotangent();
        let k = item.coords.len();
        let w = inv_b / k as f64;
        let j = Complex64::i();
        let (b_hat, g_hat) = (residual.beta2_hat(), residual.gamma_hat());
        let mut penalties = Vec::with_capacity(k);
        let mut d_bhat = Vec::with_capacity(k);
        let mut d_ghat = Vec::with_capacity(k);
        for &(z, t) in &item.coords.coords {
            let p = surface.eval(z, t)?;
            let r = nlse_residual(p.value, p.d_dz, p.d2_dt2, &residual);
            penalties.push(spec.norm.penalty(r));
            let g = spec.norm.cotangent(r) * w;
            let v = p.value;
            let bar = SurfacePoint {
                value: g * (residual.alpha_hat / 2.0) + j * g * (2.0 * g_hat * v.norm_sqr())
                    - j * v * v * g.conj() * g_hat,
                d_dz: g,
                d2_dt2: -j * g * (b_hat / 2.0),
            };
            surface.eval_adjoint(z, t, &bar, &mut cot)?;
            d_bhat.push((g.conj() * j * p.d2_dt2).re / 2.0);
            d_ghat.push((g.conj() * (-j) * v * v.norm_sqr()).re);
        }
        l_p = pairwise_sum(&penalties) * w;
        let off = params.residual_offset();
        grad_p[off] = pairwise_sum(&d_bhat) * spec.scales.beta2;
        grad_p[off + 1] = pairwise_sum(&d_ghat) * spec.scales.gamma;

        let grid_bar = surface.backprop(&cot)?;
        let cols = m_seg + 1;
        let cols_p: Vec<Vec<Complex64>> = (0..cols)
            .map(|m| grid_bar.iter().skip(m).step_by(cols).copied().collect())
            .collect();
        for (m, (gb, gg)) in twin_adjoint(prop, &trace, &twin, &cols_p, spec.corrupt_adjoint).into_iter().enumerate() {
            grad_p[2 * m] = gb * spec.scales.beta2;
            grad_p[2 * m + 1] = gg * spec.scales.gamma;
        }
    }

    Ok(SignalTerms { l_io, l_p, grad_io, grad_p })
}

/// Loss and exact gradient over a batch. Each item contributes `1/B` of its
/// observation and physics terms.
pub fn loss_and_grad(
    prop: &Propagator,
    batch: &[BatchItem],
    params: &ParameterVector,
    spec: &LossSpec,
    exec: Exec,
) -> Result<Evaluation> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if params.m() != prop.grid().m_segments {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has {} segments, grid expects {}",
            params.m(),
            prop.grid().m_segments
        )));
    }
    if params.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "parameters" });
    }
    let b = batch.len();
    let terms = exec
        .map_indexed(b, |i| signal_terms(prop, &batch[i], params, spec, b))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let l_io = pairwise_sum(&terms.iter().map(|t| t.l_io).collect::<Vec<_>>());
    let l_p = pairwise_sum(&terms.iter().map(|t| t.l_p).collect::<Vec<_>>());
    let len = params.len();
    let mut grad_io = GradientVector {
        values: pairwise_sum_vecs(&terms.iter().map(|t| t.grad_io.clone()).collect::<Vec<_>>(), len),
    };
    let mut grad_p = GradientVector {
        values: pairwise_sum_vecs(&terms.iter().map(|t| t.grad_p.clone()).collect::<Vec<_>>(), len),
    };
    for &i in &spec.frozen {
        if let Some(g) = grad_io.values.get_mut(i) {
            *g = 0.0;
        }
        if let Some(g) = grad_p.values.get_mut(i) {
            *g = 0.0;
        }
    }

    if !l_io.is_finite() {
        return Err(Error::NonFinite { stage: "observation loss" });
    }
    if !l_p.is_finite() {
        return Err(Error::NonFinite { stage: "physics loss" });
    }
    let w = spec.weights;
    let loss = w.lambda_io * l_io + w.lambda_p * l_p;
    let mut grad = GradientVector::zeros(len);
    grad.axpy(w.lambda_io, &grad_io);
    grad.axpy(w.lambda_p, &grad_p);
    if grad.values.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { stage: "gradient" });
    }
    Ok(Evaluation {
        loss,
        l_io,
        l_p,
        grad,
        grad_io,
        grad_p,
    })
}

/// Scalar objective with a gradient.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// The training loss over a fixed batch.
pub struct BatchObjective<'a> {
    pub prop: &'a Propagator,
    pub batch: &'a [BatchItem],
    pub spec: LossSpec,
    pub exec: Exec,
}

impl BatchObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<Evaluation> {
        let p = ParameterVector::from_values(x.to_vec())?;
        loss_and_grad(self.prop, self.batch, &p, &self.spec, self.exec)
    }
}

impl Objective for BatchObjective<'_> {
    fn dim(&self) -> usize {
        2 * self.prop.grid().m_segments + 2
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x).map(|e| e.loss)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval(x).map(|e| e.grad.values)
    }
}

/// ½·xᵀAx + bᵀx with symmetric A.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Quadratic {
    /// Random symmetric positive-definite instance.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let a = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| (0..dim).map(|k| g[i][k] * g[j][k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { a, b }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let ax = self.gradient(x)?;
        Ok(x.iter().zip(ax.iter().zip(&self.b)).map(|(xi, (gi, bi))| 0.5 * xi * (gi - bi) + bi * xi).sum())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + bi)
            .collect())
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub point: Vec<f64>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_deviation: f64,
}

/// Magnitude below which deviations are measured absolutely.
pub const FD_ABS_FLOOR: f64 = 1e-8;

/// Relative deviation with an absolute fallback for tiny entries.
pub fn deviation(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < FD_ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Compare the analytic gradient with central differences at `point`
/// perturbed by N(0, 0.1²) noise drawn from `seed`.
pub fn finite_diff_check(objective: &dyn Objective, point: &[f64], seed: u64, step: f64) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step {step} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = point
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + 0.1 * e
        })
        .collect();
    finite_diff_at(objective, &x, step)
}

/// [`finite_diff_check`] without perturbation.
pub fn finite_diff_at(objective: &dyn Objective, x: &[f64], step: f64) -> Result<FdReport> {
    let analytic = objective.gradient(x)?;
    let mut numeric = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let fp = objective.value(&xp)?;
        xp[i] = x[i] - step;
        let fm = objective.value(&xp)?;
        xp[i] = x[i];
        numeric.push((fp - fm) / (2.0 * step));
    }
    let max_deviation = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| deviation(*a, *n))
        .fold(0.0, f64::max);
    Ok(FdReport {
        point: x.to_vec(),
        analytic,
        numeric,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlse::GridSpec;

    fn toy_batch(prop: &Propagator, count: usize, seed: u64) -> Vec<BatchItem> {
        let n = prop.grid().n_samples;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = TwinParams::uniform(
            SegmentParams {
                alpha: 0.0,
                beta2: -0.34,
                gamma: 0.1,
            },
            prop.grid().m_segments,
            prop.grid().length(),
        );
        (0..count)
            .map(|_| {
                let input: Vec<Complex64> = (0..n)
                    .map(|_| {
                        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)) * 0.7
                    })
                    .collect();
                // smooth the input so the surface is well resolved
                let mut spec = input.clone();
                prop.dft(&mut spec);
                for (k, v) in spec.iter_mut().enumerate() {
                    let w = prop.omega()[k];
                    *v *= (-(w * w) / 4.0).exp();
                }
                prop.idft(&mut spec);
                let reference = prop.propagate_output(&spec, &truth).unwrap();
                let coords = (0..12)
                    .map(|i| {
                        let z = 0.05 + 0.9 * (i as f64 / 11.0);
                        let t = 0.3 + (i as f64 * 2.37) % (prop.grid().knot_span() - 0.6);
                        (z, t)
                    })
                    .collect();
                BatchItem {
                    input: spec,
                    reference,
                    coords: CoordinateSet::new(coords),
                }
            })
            .collect()
    }

    fn toy_prop() -> Propagator {
        Propagator::new(GridSpec::new(32, 0.5, 4, 1.0).unwrap())
    }

    #[test]
    fn quadratic_check_is_exact() {
        let q = Quadratic::random(6, 3);
        let r = finite_diff_check(&q, &[0.3; 6], 11, 1e-3).unwrap();
        assert!(r.max_deviation < 1e-10, "{}", r.max_deviation);
    }

    #[test]
    fn parameter_layout_roundtrip() {
        let scales = ParameterScales { beta2: 0.34, gamma: 0.1 };
        let p = ParameterVector::from_values(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let twin = p.twin(&scales, 1.0);
        let res = p.residual(&scales);
        let back = ParameterVector::from_parts(&twin, &res, &scales);
        for (a, b) in p.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(twin.segments[1].beta2, 3.0 * 0.34);
        assert!(ParameterVector::from_values(vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let prop = toy_prop();
        let batch = toy_batch(&prop, 3, 5);
        for norm in [ResidualNorm::L1, ResidualNorm::L2] {
            let obj = BatchObjective {
                prop: &prop,
                batch: &batch,
                spec: LossSpec {
                    norm,
                    weights: LossWeights {
                        lambda_io: 0.7,
                        lambda_p: 1.3,
                    },
                    ..LossSpec::default()
                },
                exec: Exec::Sequential,
            };
            let start = [-0.3, 0.1, -0.35, 0.12, -0.32, 0.09, -0.3, 0.1, -0.2, 0.05];
            let r = finite_diff_check(&obj, &start, 9, 1e-5).unwrap();
            assert!(r.max_deviation < 1e-5, "{norm:?}: {r:?}");
        }
    }

    #[test]
    fn corrupted_adjoint_is_detected() {
        let prop = toy_prop();
        let batch = toy_batch(&prop, 2, 6);
        let spec = LossSpec {
            corrupt_adjoint: true,
            ..LossSpec::default()
        };
        let obj = BatchObjective {
            prop: &prop,
            batch: &batch,
            spec,
            exec: Exec::Sequential,
        };
        let start = [-0.3, 1.0, -0.35, 1.2, -0.32, 0.9, -0.3, 1.0, -0.2, 0.05];
        let r = finite_diff_check(&obj, &start, 9, 1e-5).unwrap();
        assert!(r.max_deviation > 1e-3);
    }

    #[test]
    fn gamma_only_toy_closed_form() {
        let prop = Propagator::new(GridSpec::new(8, 1.0, 1, 1.0).unwrap());
        let (power, g_true, g): (f64, f64, f64) = (1.5, 0.4, 0.1);
        let input = vec![Complex64::new(power.sqrt(), 0.0); 8];
        let reference = vec![Complex64::from_polar(power.sqrt(), g_true * power); 8];
        let batch = vec![BatchItem {
            input,
            reference,
            coords: CoordinateSet::default(),
        }];
        let spec = LossSpec {
            physics: false,
            weights: LossWeights::observation_only(),
            frozen: vec![0],
            scales: ParameterScales { beta2: 1.0, gamma: 2.0 },
            ..LossSpec::default()
        };
        let p = ParameterVector::from_values(vec![0.0, g / 2.0, 0.0, 0.0]).unwrap();
        let e = loss_and_grad(&prop, &batch, &p, &spec, Exec::Sequential).unwrap();
        let d = (g - g_true) * power;
        assert!((e.l_io - 2.0 * power * (1.0 - d.cos())).abs() < 1e-13);
        let closed = 2.0 * power * power * d.sin() * 2.0;
        assert!((e.grad.values[1] - closed).abs() < 1e-12, "{} vs {closed}", e.grad.values[1]);
        assert_eq!(e.grad.values[0], 0.0);
    }

    #[test]
    fn residual_params_untouched_without_coordinates() {
        let prop = toy_prop();
        let mut batch = toy_batch(&prop, 2, 8);
        for b in &mut batch {
            b.coords = CoordinateSet::default();
        }
        let spec = LossSpec {
            weights: LossWeights::observation_only(),
            ..LossSpec::default()
        };
        let p = ParameterVector::from_values(vec![-0.3, 0.1, -0.3, 0.1, -0.3, 0.1, -0.3, 0.1, 0.5, 0.5]).unwrap();
        let e = loss_and_grad(&prop, &batch, &p, &spec, Exec::Sequential).unwrap();
        assert_eq!(e.grad.values[8], 0.0);
        assert_eq!(e.grad.values[9], 0.0);
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let prop = toy_prop();
        let batch = toy_batch(&prop, 7, 1);
        let p = ParameterVector::from_values(vec![-0.2, 0.1, -0.3, 0.2, -0.3, 0.1, -0.4, 0.1, -0.1, 0.3]).unwrap();
        let spec = LossSpec::default();
        let a = loss_and_grad(&prop, &batch, &p, &spec, Exec::Sequential).unwrap();
        let b = loss_and_grad(&prop, &batch, &p, &spec, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_matches_propagator() {
        let prop = toy_prop();
        let batch = toy_batch(&prop, 1, 2);
        let p = ParameterVector::from_values(vec![-0.2, 0.1, -0.3, 0.2, -0.3, 0.1, -0.4, 0.1, 0.0, 0.0]).unwrap();
        let twin = p.twin(&ParameterScales::default(), 1.0);
        let t = forward(&prop, &batch[0].input, &twin).unwrap();
        let direct = prop.propagate(&batch[0].input, &twin).unwrap();
        assert_eq!(t.field.as_slice(), direct.as_slice());
    }
}
