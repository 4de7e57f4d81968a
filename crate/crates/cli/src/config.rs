//! Experiment configuration file.
//!
//! Every field has a default, so an empty file is the desk-scale experiment:
//! 100 pairs of 32-symbol 16-QAM over 80 km of SMF, a four-segment twin and
//! 10⁴ iterations.

use std::path::{Path, PathBuf};

use fibertwin::losses::ResidualNorm;
use fibertwin::nlse::FiberParams;
use fibertwin::signal::PulseConfig;
use fibertwin::trainer::{InitMode, Scenario, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub signal: SignalSection,
    pub channel: ChannelSection,
    pub twin: TwinSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub n_sym: usize,
    /// QAM order, a perfect square.
    pub order: usize,
    pub rolloff: f64,
    pub oversampling: usize,
    pub span_symbols: usize,
    pub launch_power_dbm: f64,
    pub symbol_rate_gbd: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        let p = PulseConfig::default();
        Self {
            n_sym: 32,
            order: 16,
            rolloff: p.rolloff,
            oversampling: p.oversampling,
            span_symbols: p.span_symbols,
            launch_power_dbm: p.launch_power_dbm,
            symbol_rate_gbd: 14.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub length_km: f64,
    /// ps²/km
    pub beta2_true: f64,
    /// 1/(W·km)
    pub gamma_true: f64,
    pub m_reference: usize,
    /// `inf` for noise-free references.
    pub snr_db: f64,
    pub n_pairs: usize,
    pub dataset_seed: u64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let f = FiberParams::smf(80.0);
        Self {
            length_km: f.length_km,
            beta2_true: f.beta2,
            gamma_true: f.gamma,
            m_reference: 400,
            snr_db: 20.0,
            n_pairs: 100,
            dataset_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinSection {
    pub m_segments: usize,
    pub init_mode: InitMode,
}

impl Default for TwinSection {
    fn default() -> Self {
        Self {
            m_segments: 4,
            init_mode: InitMode::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub norm: ResidualNorm,
    /// `false` trains on the observation loss alone (λ_p = 0).
    pub physics: bool,
    pub coords_per_signal: usize,
    pub balance_every: usize,
    pub ema: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            norm: t.norm,
            physics: t.physics,
            coords_per_signal: t.batch_coords,
            balance_every: t.balance_every,
            ema: t.balance_ema,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iterations: usize,
    pub batch_signals: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            iterations: 10_000,
            batch_signals: t.batch_signals,
            lr0: t.lr0,
            lr_decay: t.lr_decay,
            lr_step: t.lr_step,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub history_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            history_stride: 1,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        cfg.check().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    fn check(&self) -> Result<(), String> {
        self.scenario_checked()?;
        self.train_config().validate().map_err(|e| e.to_string())?;
        if self.channel.snr_db.is_nan() {
            return Err("channel.snr_db must be a number or inf".into());
        }
        if self.channel.n_pairs == 0 {
            return Err("channel.n_pairs must be >= 1".into());
        }
        Ok(())
    }

    fn scenario_checked(&self) -> Result<Scenario, String> {
        let s = &self.signal;
        if !(s.symbol_rate_gbd > 0.0) {
            return Err(format!("signal.symbol_rate_gbd {} must be positive", s.symbol_rate_gbd));
        }
        let n = s.n_sym * s.oversampling;
        if n < 4 || !n.is_power_of_two() {
            return Err(format!(
                "signal.n_sym × signal.oversampling = {n} must be a power of two >= 4"
            ));
        }
        let fiber = FiberParams {
            alpha: 0.0,
            beta2: self.channel.beta2_true,
            gamma: self.channel.gamma_true,
            length_km: self.channel.length_km,
        };
        fiber.validate().map_err(|e| format!("channel: {e}"))?;
        if self.channel.m_reference == 0 {
            return Err("channel.m_reference must be >= 1".into());
        }
        Ok(Scenario {
            n_sym: s.n_sym,
            order: s.order,
            pulse: PulseConfig {
                rolloff: s.rolloff,
                oversampling: s.oversampling,
                span_symbols: s.span_symbols,
                launch_power_dbm: s.launch_power_dbm,
                symbol_period_ps: 1e3 / s.symbol_rate_gbd,
            },
            fiber,
            m_reference: self.channel.m_reference,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario_checked().expect("validated at load")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.train.iterations,
            batch_signals: self.train.batch_signals,
            batch_coords: self.loss.coords_per_signal,
            lr0: self.train.lr0,
            lr_decay: self.train.lr_decay,
            lr_step: self.train.lr_step,
            snr_db: Some(self.channel.snr_db).filter(|s| s.is_finite()),
            m_twin: self.twin.m_segments,
            seed: self.train.seed,
            norm: self.loss.norm,
            physics: self.loss.physics,
            balance_every: self.loss.balance_every,
            balance_ema: self.loss.ema,
            init: self.twin.init_mode,
            history_stride: self.output.history_stride,
        }
    }

    /// The resolved configuration as TOML, as embedded in output files.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.channel.dataset_seed = seed;
    }
}
