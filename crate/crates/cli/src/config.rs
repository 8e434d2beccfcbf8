//! The run configuration file.
//!
//! A TOML file with flat sections. Every key is optional; omitted keys take
//! the defaults below and unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//!
//! [paths]
//! data = "series.csv"        # training data (train) or series to score
//! normal = "normal.csv"      # normal split for the threshold (detect, isolate)
//! checkpoint = "model.gawn"
//! report = "report.csv"
//! log = "model_log.csv"      # default: <checkpoint stem>_log.csv
//! out = "synth.csv"          # synth output
//!
//! [model]
//! n = 64
//! c0 = 32
//! q_hidden = 64
//! wavelet = "db6"
//! m = 2
//! h = 1
//! head_hidden = 32
//!
//! [train]
//! epochs = 200
//! batch_size = 16
//! stride = 64                # default: n
//! lr = 1e-3
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! weight_decay = 1e-5
//! label_smoothing = 0.0
//! probe_draws = 64
//! # grad_clip = 1.0          # off unless set
//!
//! [detect]
//! draws = 64
//! k = 3.0
//!
//! [synth]
//! features = 5
//! len = 480
//! periods = [64.0, 32.0]
//! phase_spread = 0.5
//! gain_min = 0.5
//! gain_max = 1.5
//! noise_std = 0.2
//! ar_coef = 0.7
//!
//! [fault]
//! enabled = true
//! kind = "step"              # step, random_variation, slow_drift, sticking
//! target = 0
//! onset = 160
//! magnitude = 3.0
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gawno::data::{FaultKind, FaultSpec, SynthConfig};
use gawno::fdi::{DEFAULT_DRAWS, DEFAULT_K};
use gawno::network::{DiscriminatorSpec, GeneratorSpec};
use gawno::optim::AdamConfig;
use gawno::train::TrainConfig;
use gawno::wavelet::WaveletName;
use serde::{Deserialize, Serialize};

/// An invalid or incomplete configuration. Maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelSection,
    pub train: TrainSection,
    pub detect: DetectSection,
    pub synth: SynthConfig,
    pub fault: FaultSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            detect: DetectSection::default(),
            synth: SynthConfig::default(),
            fault: FaultSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub normal: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub c0: usize,
    pub q_hidden: usize,
    pub wavelet: WaveletName,
    pub m: usize,
    pub h: usize,
    pub head_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let g = GeneratorSpec::new(1, 64);
        let d = DiscriminatorSpec::new(g.clone());
        ModelSection {
            n: g.n,
            c0: g.c0,
            q_hidden: g.q_hidden,
            wavelet: g.wavelet,
            m: g.m,
            h: g.h,
            head_hidden: d.head_hidden,
        }
    }
}

impl ModelSection {
    /// Generator and discriminator specs for data with `features` variables.
    pub fn specs(&self, features: usize) -> (GeneratorSpec, DiscriminatorSpec) {
        let g = GeneratorSpec {
            features,
            n: self.n,
            c0: self.c0,
            q_hidden: self.q_hidden,
            wavelet: self.wavelet,
            m: self.m,
            h: self.h,
        };
        let d = DiscriminatorSpec {
            body: g.clone(),
            head_hidden: self.head_hidden,
        };
        (g, d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Window stride over the training series; defaults to the window length.
    pub stride: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub probe_draws: usize,
    pub grad_clip: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            stride: None,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            weight_decay: t.adam.weight_decay,
            label_smoothing: t.label_smoothing,
            probe_draws: t.probe_draws,
            grad_clip: t.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub draws: usize,
    pub k: f64,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            draws: DEFAULT_DRAWS,
            k: DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultSection {
    /// When false, `synth` writes a normal series with all labels 0.
    pub enabled: bool,
    pub kind: FaultKind,
    pub target: usize,
    pub onset: usize,
    pub magnitude: f64,
}

impl Default for FaultSection {
    fn default() -> Self {
        FaultSection {
            enabled: true,
            kind: FaultKind::Step,
            target: 0,
            onset: 160,
            magnitude: 3.0,
        }
    }
}

impl FaultSection {
    pub fn spec(&self) -> Option<FaultSpec> {
        self.enabled.then_some(FaultSpec {
            kind: self.kind,
            target: self.target,
            onset: self.onset,
            magnitude: self.magnitude,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid configuration: {e}")).into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(e.to_string()))
            .with_context(|| format!("reading config `{}`", path.display()))?;
        Self::parse(&text).with_context(|| format!("in `{}`", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed,
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                weight_decay: t.weight_decay,
            },
            grad_clip: t.grad_clip,
            label_smoothing: t.label_smoothing,
            probe_draws: t.probe_draws,
        }
    }
}
