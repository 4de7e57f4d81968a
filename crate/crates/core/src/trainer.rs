//! Dataset assembly and the PIDT training loop.
//!
//! Training runs in the dimensionless frame of [`Normalization`]: time in
//! symbol periods, distance in fiber lengths and field in units of the
//! launch power. Raw trainable values are coefficients divided by the
//! scales of [`ParameterScales`], chosen so the nominal fiber maps to raw
//! values of magnitude one.
//!
//! Randomness comes from independent ChaCha8 streams derived from one seed
//! (initialization, batch selection, noise, coordinates), so runs that
//! differ only in the loss composition see the same batches and noise.

use std::io::Write;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{loss_and_grad, BatchItem, GradientVector, LossSpec, ParameterScales, ParameterVector};
use crate::losses::{update_weights, CoordinateSet, LossWeights, ResidualNorm};
use crate::nlse::{reference_channel, FiberParams, GridSpec, Normalization, Propagator, TwinParams};
use crate::par::{pairwise_sum, Exec};
use crate::signal::{dbm_to_watt, generate_qam_symbols, pulse_shape, AwgnSource, ComplexSignal, NoiseConfig, PulseConfig};

const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_COORDS: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Transmission setup used to generate training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_sym: usize,
    pub order: usize,
    pub pulse: PulseConfig,
    pub fiber: FiberParams,
    /// Split-step segments of the reference channel.
    pub m_reference: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_sym: 32,
            order: 16,
            pulse: PulseConfig::default(),
            fiber: FiberParams::smf(80.0),
            m_reference: 400,
        }
    }
}

impl Scenario {
    pub fn normalization(&self) -> Normalization {
        Normalization {
            symbol_period_ps: self.pulse.symbol_period_ps,
            length_km: self.fiber.length_km,
            power_w: dbm_to_watt(self.pulse.launch_power_dbm),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_sym * self.pulse.oversampling
    }

    /// The true fiber in the dimensionless frame (unit length).
    pub fn normalized_fiber(&self) -> FiberParams {
        let norm = self.normalization();
        FiberParams {
            alpha: norm.alpha_to_normalized(self.fiber.alpha),
            beta2: norm.beta2_to_normalized(self.fiber.beta2),
            gamma: norm.gamma_to_normalized(self.fiber.gamma),
            length_km: 1.0,
        }
    }

    /// Raw-variable scales: the nominal fiber's normalized |β₂| and γ.
    pub fn scales(&self) -> ParameterScales {
        let norm = self.normalization();
        let nominal = FiberParams::smf(self.fiber.length_km);
        ParameterScales {
            beta2: norm.beta2_to_normalized(nominal.beta2).abs(),
            gamma: norm.gamma_to_normalized(nominal.gamma),
        }
    }
}

/// Noise-free input/reference pairs in the dimensionless frame; `dt_ps` of
/// each signal holds the normalized sampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<(ComplexSignal, ComplexSignal)>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair `i` converted back to physical units.
    pub fn physical_pair(&self, i: usize) -> (ComplexSignal, ComplexSignal) {
        let norm = self.scenario.normalization();
        let (x, y) = &self.pairs[i];
        (norm.signal_to_physical(x), norm.signal_to_physical(y))
    }
}

/// Generate `n_pairs` independent symbol draws and their reference outputs.
pub fn build_dataset(n_pairs: usize, scenario: &Scenario, seed: u64, exec: Exec) -> Result<Dataset> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one pair".into()));
    }
    let norm = scenario.normalization();
    let fiber = scenario.normalized_fiber();
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_pairs).map(|_| seeder.random()).collect();
    let pairs = exec
        .map_indexed(n_pairs, |i| -> Result<_> {
            let symbols = generate_qam_symbols(scenario.n_sym, scenario.order, seeds[i])?;
            let tx = norm.signal_to_normalized(&pulse_shape(&symbols, &scenario.pulse)?);
            let rx = reference_channel(&tx, &fiber, scenario.m_reference)?;
            Ok((tx, rx))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        pairs,
        scenario: *scenario,
        seed,
    })
}

/// Uniform points in the open domain (0, L) × (0, T), with T the knot span.
pub fn sample_coordinates<R: Rng + ?Sized>(grid: &GridSpec, count: usize, rng: &mut R) -> CoordinateSet {
    let (l, t) = (grid.length(), grid.knot_span());
    let mut open = move |span: f64| loop {
        let x: f64 = rng.random::<f64>() * span;
        if x > 0.0 && x < span {
            return x;
        }
    };
    CoordinateSet::new((0..count).map(|_| (open(l), open(t))).collect())
}

/// Initial twin parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Raw values drawn from N(0, 1).
    #[default]
    Normal,
    Zero,
    /// Raw values of the true fiber.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_signals: usize,
    pub batch_coords: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    /// `None` trains on noise-free references.
    pub snr_db: Option<f64>,
    pub m_twin: usize,
    pub seed: u64,
    pub norm: ResidualNorm,
    /// Include the physics loss; `false` gives the observation-only run.
    pub physics: bool,
    pub balance_every: usize,
    pub balance_ema: f64,
    pub init: InitMode,
    /// Keep every `history_stride`-th record.
    pub history_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            batch_signals: 20,
            batch_coords: 800,
            lr0: 1e-3,
            lr_decay: 0.9,
            lr_step: 5000,
            snr_db: Some(20.0),
            m_twin: 4,
            seed: 0,
            norm: ResidualNorm::L1,
            physics: true,
            balance_every: 100,
            balance_ema: 0.1,
            init: InitMode::Normal,
            history_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_signals", self.batch_signals),
            ("batch_coords", self.batch_coords),
            ("lr_step", self.lr_step),
            ("m_twin", self.m_twin),
            ("balance_every", self.balance_every),
            ("history_stride", self.history_stride),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::InvalidArgument(format!("lr0 {} must be positive", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("lr_decay {} must be in (0, 1]", self.lr_decay)));
        }
        if !(0.0..=1.0).contains(&self.balance_ema) {
            return Err(Error::InvalidArgument(format!("balance_ema {} must be in [0, 1]", self.balance_ema)));
        }
        if self.physics && self.m_twin < 2 {
            return Err(Error::InsufficientZKnots { knots: self.m_twin + 1 });
        }
        Ok(())
    }
}

/// lr0 · decay^⌊step / lr_step⌋.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((step / cfg.lr_step) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn update(&mut self, grad: &[f64], lr: f64, params: &mut [f64]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    state: &AdamState,
    grad: &GradientVector,
    lr: f64,
    params: &ParameterVector,
) -> Result<(ParameterVector, AdamState)> {
    if grad.values.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: params {}, grad {}, state {}",
            params.len(),
            grad.values.len(),
            state.m.len()
        )));
    }
    let mut next = state.clone();
    let mut p = params.clone();
    next.update(&grad.values, lr, &mut p.values);
    Ok((p, next))
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iteration: usize,
    pub l_io: f64,
    pub l_p: f64,
    pub lambda_io: f64,
    pub lambda_p: f64,
    pub lr: f64,
    /// Raw parameters after the update of this iteration.
    pub params: Vec<f64>,
}

/// Final parameter estimates in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    /// ps²/km.
    pub beta2_hat: f64,
    /// 1/(W·km).
    pub gamma_hat: f64,
    pub rel_err_beta2: f64,
    pub rel_err_gamma: f64,
    pub profile_beta2: Vec<f64>,
    pub profile_gamma: Vec<f64>,
    /// Raw parameters averaged over the last 10% of iterations.
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub scenario: Scenario,
    pub dataset_seed: u64,
    pub dataset_len: usize,
    pub records: Vec<Record>,
    pub estimates: Estimates,
    /// Observation loss of the averaged twin on the noise-free dataset.
    pub final_l_io: f64,
}

/// JSON summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub beta2_hat: f64,
    pub gamma_hat: f64,
    pub rel_err_beta2: f64,
    pub rel_err_gamma: f64,
    pub profile_beta2: Vec<f64>,
    pub profile_gamma: Vec<f64>,
    pub final_l_io: f64,
    pub iterations: usize,
    pub config_echo: serde_json::Value,
}

impl TrainHistory {
    pub fn summary(&self, config_echo: serde_json::Value) -> Summary {
        let e = &self.estimates;
        Summary {
            beta2_hat: e.beta2_hat,
            gamma_hat: e.gamma_hat,
            rel_err_beta2: e.rel_err_beta2,
            rel_err_gamma: e.rel_err_gamma,
            profile_beta2: e.profile_beta2.clone(),
            profile_gamma: e.profile_gamma.clone(),
            final_l_io: self.final_l_io,
            iterations: self.config.iterations,
            config_echo,
        }
    }

    /// CSV with one row per record. Each line of `preamble` is written first
    /// as a `#` comment.
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        let k = self.estimates.raw.len();
        let mut header: Vec<String> = ["iteration", "l_io", "l_p", "lambda_io", "lambda_p", "lr"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = k.saturating_sub(2) / 2;
        for i in 1..=m {
            header.push(format!("beta2_raw_{i}"));
            header.push(format!("gamma_raw_{i}"));
        }
        header.push("beta2_hat_raw".into());
        header.push("gamma_hat_raw".into());
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.l_io.to_string(),
                r.l_p.to_string(),
                r.lambda_io.to_string(),
                r.lambda_p.to_string(),
                r.lr.to_string(),
            ];
            row.extend(r.params.iter().map(|p| p.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn relative_error(est: f64, truth: f64) -> f64 {
    (est - truth).abs() / truth.abs()
}

fn estimates(raw: &[f64], scenario: &Scenario, scales: &ParameterScales) -> Estimates {
    let norm = scenario.normalization();
    let p = ParameterVector { values: raw.to_vec() };
    let twin = p.twin(scales, 1.0);
    let res = p.residual(scales);
    let beta2_hat = norm.beta2_to_physical(res.beta2_hat());
    let gamma_hat = norm.gamma_to_physical(res.gamma_hat());
    Estimates {
        beta2_hat,
        gamma_hat,
        rel_err_beta2: relative_error(beta2_hat, scenario.fiber.beta2),
        rel_err_gamma: relative_error(gamma_hat, scenario.fiber.gamma),
        profile_beta2: twin.segments.iter().map(|s| norm.beta2_to_physical(s.beta2)).collect(),
        profile_gamma: twin.segments.iter().map(|s| norm.gamma_to_physical(s.gamma)).collect(),
        raw: raw.to_vec(),
    }
}

fn initial_params(cfg: &TrainConfig, scenario: &Scenario, scales: &ParameterScales) -> ParameterVector {
    let mut p = ParameterVector::zeros(cfg.m_twin);
    match cfg.init {
        InitMode::Zero => {}
        InitMode::Normal => {
            let mut rng = stream(cfg.seed, STREAM_INIT);
            for v in &mut p.values[..2 * cfg.m_twin] {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        InitMode::Truth => {
            let fiber = scenario.normalized_fiber();
            let b = fiber.beta2 / scales.beta2;
            let g = fiber.gamma / scales.gamma;
            for seg in p.values[..2 * cfg.m_twin].chunks_mut(2) {
                seg[0] = b;
                seg[1] = g;
            }
        }
    }
    p
}

fn sample_pairs(dataset: &Dataset) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    dataset
        .pairs
        .iter()
        .map(|(x, y)| (x.samples.clone(), y.samples.clone()))
        .collect()
}

/// Mean observation loss of a twin over the noise-free dataset.
fn dataset_l_io(prop: &Propagator, pairs: &[(Vec<Complex64>, Vec<Complex64>)], twin: &TwinParams, exec: Exec) -> Result<f64> {
    let per = exec
        .map_indexed(pairs.len(), |i| -> Result<f64> {
            let (x, y) = &pairs[i];
            let out = prop.propagate_output(x, twin)?;
            let sq: Vec<f64> = out.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).collect();
            Ok(pairwise_sum(&sq) / y.len() as f64)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&per) / per.len() as f64)
}

/// [`train_with`] on the default execution mode.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with(dataset, cfg, Exec::default())
}

pub fn train_with(dataset: &Dataset, cfg: &TrainConfig, exec: Exec) -> Result<TrainHistory> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let scenario = dataset.scenario;
    let scales = scenario.scales();
    let (x0, _) = &dataset.pairs[0];
    let grid = GridSpec::new(x0.len(), x0.dt_ps, cfg.m_twin, 1.0)?;
    let prop = Propagator::new(grid);
    let pairs = sample_pairs(dataset);

    let noise_cfg = NoiseConfig {
        snr_db: cfg.snr_db.unwrap_or(f64::INFINITY),
        seed: cfg.seed,
    };
    let mut noise = AwgnSource::with_rng(&noise_cfg, 1.0, stream(cfg.seed, STREAM_NOISE));
    let mut batch_rng = stream(cfg.seed, STREAM_BATCH);
    let mut coord_rng = stream(cfg.seed, STREAM_COORDS);

    let mut params = initial_params(cfg, &scenario, &scales);
    let mut adam = AdamState::new(params.len());
    let mut weights = if cfg.physics {
        LossWeights::default()
    } else {
        LossWeights::observation_only()
    };
    let batch_size = cfg.batch_signals.min(pairs.len());
    let tail = cfg.iterations.div_ceil(10);
    let mut tail_sum = vec![0.0; params.len()];
    let mut records = Vec::with_capacity(cfg.iterations / cfg.history_stride + 1);

    for it in 0..cfg.iterations {
        let chosen = sample(&mut batch_rng, pairs.len(), batch_size).into_vec();
        let batch: Vec<BatchItem> = chosen
            .iter()
            .map(|&i| {
                let (x, y) = &pairs[i];
                let mut reference = y.clone();
                noise.add_in_place(&mut reference);
                let coords = if cfg.physics {
                    sample_coordinates(&grid, cfg.batch_coords, &mut coord_rng)
                } else {
                    CoordinateSet::default()
                };
                BatchItem {
                    input: x.clone(),
                    reference,
                    coords,
                }
            })
            .collect();
        let spec = LossSpec {
            weights,
            norm: cfg.norm,
            physics: cfg.physics,
            scales,
            ..LossSpec::default()
        };
        let eval = loss_and_grad(&prop, &batch, &params, &spec, exec).map_err(|e| diverged(it, e, &params))?;
        let lr = lr_at(it, cfg);
        adam.update(&eval.grad.values, lr, &mut params.values);
        if params.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged {
                iteration: it,
                reason: "non-finite parameters after update".into(),
                snapshot: params.values.clone(),
            });
        }
        if cfg.physics && (it + 1) % cfg.balance_every == 0 {
            weights = update_weights(&weights, eval.grad_io.norm(), eval.grad_p.norm(), cfg.balance_ema);
        }
        if it >= cfg.iterations - tail {
            for (s, v) in tail_sum.iter_mut().zip(&params.values) {
                *s += v;
            }
        }
        if it % cfg.history_stride == 0 || it + 1 == cfg.iterations {
            records.push(Record {
                iteration: it,
                l_io: eval.l_io,
                l_p: eval.l_p,
                lambda_io: spec.weights.lambda_io,
                lambda_p: spec.weights.lambda_p,
                lr,
                params: params.values.clone(),
            });
        }
    }

    let raw = if tail == 0 {
        params.values.clone()
    } else {
        tail_sum.iter().map(|s| s / tail as f64).collect()
    };
    let est = estimates(&raw, &scenario, &scales);
    let twin = ParameterVector { values: raw.clone() }.twin(&scales, 1.0);
    let final_l_io = dataset_l_io(&prop, &pairs, &twin, exec)?;
    Ok(TrainHistory {
        config: cfg.clone(),
        scenario,
        dataset_seed: dataset.seed,
        dataset_len: dataset.len(),
        records,
        estimates: est,
        final_l_io,
    })
}

fn diverged(iteration: usize, e: Error, params: &ParameterVector) -> Error {
    if e.is_numeric() {
        Error::TrainingDiverged {
            iteration,
            reason: e.to_string(),
            snapshot: params.values.clone(),
        }
    } else {
        e
    }
}

/// Profile accuracy of a physics-informed run against an observation-only
/// run on the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    /// RMSE of the per-segment β₂ against truth, ps²/km.
    pub rmse_beta2_physics: f64,
    pub rmse_beta2_observation: f64,
    pub rmse_gamma_physics: f64,
    pub rmse_gamma_observation: f64,
    pub l_io_physics: f64,
    pub l_io_observation: f64,
}

fn rmse(profile: &[f64], truth: f64) -> f64 {
    (profile.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / profile.len() as f64).sqrt()
}

pub fn compare_profiles(
    with_physics: &TrainHistory,
    observation_only: &TrainHistory,
    truth: &FiberParams,
) -> Result<ProfileComparison> {
    let mut a = with_physics.config.clone();
    let b = &observation_only.config;
    a.physics = b.physics;
    if a != *b
        || with_physics.scenario != observation_only.scenario
        || with_physics.dataset_seed != observation_only.dataset_seed
        || with_physics.dataset_len != observation_only.dataset_len
    {
        return Err(Error::InvalidComparison(
            "runs differ in more than the physics term".into(),
        ));
    }
    let (p, o) = (&with_physics.estimates, &observation_only.estimates);
    Ok(ProfileComparison {
        rmse_beta2_physics: rmse(&p.profile_beta2, truth.beta2),
        rmse_beta2_observation: rmse(&o.profile_beta2, truth.beta2),
        rmse_gamma_physics: rmse(&p.profile_gamma, truth.gamma),
        rmse_gamma_observation: rmse(&o.profile_gamma, truth.gamma),
        l_io_physics: with_physics.final_l_io,
        l_io_observation: observation_only.final_l_io,
    })
}
