//! Run configuration.
//!
//! Files hold UTF-8 `key = value` lines; `#` starts a comment. Command-line
//! overrides go through [`RunConfig::set`] after the file is applied.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decoder::{Fusion, LossWeights, Mix};
use crate::error::{config_err, Result};
use crate::model::{AdversarialSides, ModelConfig};
use crate::synth::{PhaseModel, KIN_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Frames per optimiser step; a multiple of `window`.
    pub batch_size: usize,
    pub window: usize,
    /// Random training windows drawn from each sequence per epoch.
    pub windows_per_sequence: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub enable_vka: bool,
    pub enable_calibration: bool,
    pub enable_wavelet: bool,
    pub enable_fourier: bool,
    pub fusion: Fusion,
    pub adversarial: AdversarialSides,
    /// Trailing share of the training sequences held out for validation.
    pub val_fraction: f64,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    pub phases: PhaseModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        let m = Mix::default();
        RunConfig {
            seed: 42,
            epochs: 30,
            batch_size: 64,
            window: 64,
            windows_per_sequence: 1,
            lr: 1e-4,
            alpha: m.alpha,
            beta: m.beta,
            gamma: w.gamma,
            delta: w.delta,
            lambda: w.lambda,
            enable_vka: true,
            enable_calibration: true,
            enable_wavelet: true,
            enable_fourier: true,
            fusion: Fusion::Graph,
            adversarial: AdversarialSides::default(),
            val_fraction: 0.2,
            train_path: PathBuf::from("data/train.grd"),
            test_path: PathBuf::from("data/test.grd"),
            n_train: 48,
            n_test: 12,
            phases: PhaseModel::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 27] = [
        "seed",
        "epochs",
        "batch_size",
        "window",
        "windows_per_sequence",
        "lr",
        "alpha",
        "beta",
        "gamma",
        "delta",
        "lambda",
        "enable_vka",
        "enable_calibration",
        "enable_wavelet",
        "enable_fourier",
        "fusion",
        "adversarial",
        "val_fraction",
        "train_path",
        "test_path",
        "n_train",
        "n_test",
        "phases",
        "steps",
        "frame_size",
        "min_duration",
        "max_duration",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "windows_per_sequence" => self.windows_per_sequence = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "enable_vka" => self.enable_vka = parse_bool(key, v)?,
            "enable_calibration" => self.enable_calibration = parse_bool(key, v)?,
            "enable_wavelet" => self.enable_wavelet = parse_bool(key, v)?,
            "enable_fourier" => self.enable_fourier = parse_bool(key, v)?,
            "fusion" => self.fusion = v.parse()?,
            "adversarial" => self.adversarial = AdversarialSides::parse(v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "train_path" => self.train_path = PathBuf::from(v),
            "test_path" => self.test_path = PathBuf::from(v),
            "n_train" => self.n_train = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "phases" => self.phases.classes = parse(key, v)?,
            "steps" => self.phases.steps = parse(key, v)?,
            "frame_size" => self.phases.size = parse(key, v)?,
            "min_duration" => self.phases.min_duration = parse(key, v)?,
            "max_duration" => self.phases.max_duration = parse(key, v)?,
            other => return Err(config_err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| config_err(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Serialises every key, so `apply_str(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "window" => self.window.to_string(),
            "windows_per_sequence" => self.windows_per_sequence.to_string(),
            "lr" => format!("{:?}", self.lr),
            "alpha" => format!("{:?}", self.alpha),
            "beta" => format!("{:?}", self.beta),
            "gamma" => format!("{:?}", self.gamma),
            "delta" => format!("{:?}", self.delta),
            "lambda" => format!("{:?}", self.lambda),
            "enable_vka" => self.enable_vka.to_string(),
            "enable_calibration" => self.enable_calibration.to_string(),
            "enable_wavelet" => self.enable_wavelet.to_string(),
            "enable_fourier" => self.enable_fourier.to_string(),
            "fusion" => self.fusion.to_string(),
            "adversarial" => self.adversarial.describe(),
            "val_fraction" => format!("{:?}", self.val_fraction),
            "train_path" => self.train_path.display().to_string(),
            "test_path" => self.test_path.display().to_string(),
            "n_train" => self.n_train.to_string(),
            "n_test" => self.n_test.to_string(),
            "phases" => self.phases.classes.to_string(),
            "steps" => self.phases.steps.to_string(),
            "frame_size" => self.phases.size.to_string(),
            "min_duration" => self.phases.min_duration.to_string(),
            "max_duration" => self.phases.max_duration.to_string(),
            _ => String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < crate::encoders::MIN_STEPS {
            return Err(config_err(format!("window {} shorter than {}", self.window, crate::encoders::MIN_STEPS)));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(self.window) {
            return Err(config_err(format!(
                "batch size {} is not a positive multiple of the window {}",
                self.batch_size, self.window
            )));
        }
        if self.windows_per_sequence == 0 {
            return Err(config_err("windows_per_sequence must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} = {v} must be non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(config_err(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        self.phases.validate()?;
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            classes: self.phases.classes,
            kin_dim: KIN_DIM,
            wavelet: self.enable_wavelet,
            fourier: self.enable_fourier,
            fusion: self.fusion,
            mix: Mix {
                alpha: self.alpha,
                beta: self.beta,
            },
        }
    }

    /// Loss weights after the toggles: no adversarial term without VKA and
    /// plain cross-entropy without calibration.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            delta: if self.enable_vka { self.delta } else { 0.0 },
            lambda: if self.enable_calibration { self.lambda } else { 0.0 },
        }
    }

    pub fn windows_per_step(&self) -> usize {
        self.batch_size / self.window
    }
}
