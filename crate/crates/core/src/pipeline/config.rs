//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use crate::augment::{default_bank, format_bank, parse_bank, AugmentationKind};
use crate::encoders::EncoderConfig;
use crate::losses::LossConfig;
use crate::par::Exec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mlp_hidden: usize,
    /// Train only the classifier head.
    pub freeze: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 40,
            batch_size: 8,
            mlp_hidden: 128,
            freeze: false,
            seed: 3407,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!(
                "finetune_lr must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.mlp_hidden == 0 {
            return Err(Error::config(
                "finetune epochs, batch size and mlp_hidden must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset directories or files, or `synthetic:cbf:N:LEN` /
    /// `synthetic:walks:N:LEN:VARS` generators.
    pub pretrain_data: Vec<String>,
    /// Per-source sampling weights; proportional to size when absent.
    pub pretrain_weights: Option<Vec<f64>>,
    /// Resample every pre-training series to this length; 0 keeps lengths.
    pub pretrain_length: usize,
    pub bank: Vec<AugmentationKind>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many steps; 0 runs all epochs.
    pub max_steps: usize,
    pub lr: f64,
    /// Steps between learning-rate decays; 0 means half an epoch.
    pub lr_step: usize,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
    /// Image panel side `S`.
    pub panel: usize,
    pub finetune_data: Option<PathBuf>,
    pub finetune: FinetuneConfig,
    pub fewshot_ratio: Option<f64>,
    pub output_dir: PathBuf,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pretrain_data: Vec::new(),
            pretrain_weights: None,
            pretrain_length: 0,
            bank: default_bank(),
            batch_size: 16,
            epochs: 2,
            max_steps: 0,
            lr: 7e-3,
            lr_step: 0,
            lr_decay: 0.5,
            weight_decay: 0.0,
            seed: 3407,
            loss: LossConfig::default(),
            encoder: EncoderConfig::default(),
            panel: crate::imaging::DEFAULT_PANEL,
            finetune_data: None,
            finetune: FinetuneConfig::default(),
            fewshot_ratio: None,
            output_dir: PathBuf::from("runs/default"),
            parallel: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!(
            "`{key}`: expected true or false, got `{value}`"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!(
                    "line {}: `{key}` given twice",
                    n + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "pretrain_data" => {
                self.pretrain_data = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "pretrain_weights" => {
                self.pretrain_weights = if value.is_empty() {
                    None
                } else {
                    Some(parse_list(key, value)?)
                }
            }
            "pretrain_length" => self.pretrain_length = parse_num(key, value)?,
            "bank" => self.bank = parse_bank(value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "max_steps" => self.max_steps = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "lr_step" => self.lr_step = parse_num(key, value)?,
            "lr_decay" => self.lr_decay = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "alpha" => self.loss.alpha = parse_num(key, value)?,
            "beta" => self.loss.beta = parse_num(key, value)?,
            "gamma" => self.loss.gamma = parse_num(key, value)?,
            "tau0" => self.loss.tau0 = parse_num(key, value)?,
            "tau" => self.loss.tau = parse_num(key, value)?,
            "symmetric_intra" => self.loss.symmetric_intra = parse_bool(key, value)?,
            "detach_mix" => self.loss.detach_mix = parse_bool(key, value)?,
            "use_si" => self.loss.use_si = parse_bool(key, value)?,
            "use_mix" => self.loss.use_mix = parse_bool(key, value)?,
            "depth" => self.encoder.depth = parse_num(key, value)?,
            "hidden" => self.encoder.hidden = parse_num(key, value)?,
            "kernel" => self.encoder.kernel = parse_num(key, value)?,
            "repr_dim" => self.encoder.repr_dim = parse_num(key, value)?,
            "proj_dim" => self.encoder.proj_dim = parse_num(key, value)?,
            "image_channels" => self.encoder.image_channels = parse_list(key, value)?,
            "panel" => self.panel = parse_num(key, value)?,
            "finetune_data" => {
                self.finetune_data = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "finetune_lr" => self.finetune.lr = parse_num(key, value)?,
            "finetune_epochs" => self.finetune.epochs = parse_num(key, value)?,
            "finetune_batch" => self.finetune.batch_size = parse_num(key, value)?,
            "mlp_hidden" => self.finetune.mlp_hidden = parse_num(key, value)?,
            "freeze" => self.finetune.freeze = parse_bool(key, value)?,
            "finetune_seed" => self.finetune.seed = parse_num(key, value)?,
            "fewshot_ratio" => {
                self.fewshot_ratio = if value.is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "parallel" => self.parallel = parse_bool(key, value)?,
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// All keys in a fixed order, formatted so that [`ExperimentConfig::parse`]
    /// reads them back unchanged.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        vec![
            ("pretrain_data", self.pretrain_data.join(",")),
            (
                "pretrain_weights",
                self.pretrain_weights
                    .as_deref()
                    .map(join)
                    .unwrap_or_default(),
            ),
            ("pretrain_length", self.pretrain_length.to_string()),
            ("bank", format_bank(&self.bank)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_step", self.lr_step.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.loss.alpha.to_string()),
            ("beta", self.loss.beta.to_string()),
            ("gamma", self.loss.gamma.to_string()),
            ("tau0", self.loss.tau0.to_string()),
            ("tau", self.loss.tau.to_string()),
            ("symmetric_intra", self.loss.symmetric_intra.to_string()),
            ("detach_mix", self.loss.detach_mix.to_string()),
            ("use_si", self.loss.use_si.to_string()),
            ("use_mix", self.loss.use_mix.to_string()),
            ("depth", self.encoder.depth.to_string()),
            ("hidden", self.encoder.hidden.to_string()),
            ("kernel", self.encoder.kernel.to_string()),
            ("repr_dim", self.encoder.repr_dim.to_string()),
            ("proj_dim", self.encoder.proj_dim.to_string()),
            ("image_channels", join(&self.encoder.image_channels)),
            ("panel", self.panel.to_string()),
            ("finetune_data", opt(&self.finetune_data)),
            ("finetune_lr", self.finetune.lr.to_string()),
            ("finetune_epochs", self.finetune.epochs.to_string()),
            ("finetune_batch", self.finetune.batch_size.to_string()),
            ("mlp_hidden", self.finetune.mlp_hidden.to_string()),
            ("freeze", self.finetune.freeze.to_string()),
            ("finetune_seed", self.finetune.seed.to_string()),
            (
                "fewshot_ratio",
                self.fewshot_ratio
                    .map(|r| r.to_string())
                    .unwrap_or_default(),
            ),
            ("output_dir", self.output_dir.display().to_string()),
            ("parallel", self.parallel.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.pretrain_length == 1 {
            return Err(Error::config("pretrain_length must be 0 or at least 2"));
        }
        if self.panel < 16 {
            return Err(Error::config(format!(
                "panel must be at least 16, got {}",
                self.panel
            )));
        }
        if self.bank.is_empty() {
            return Err(Error::config("augmentation bank is empty"));
        }
        if let Some(r) = self.fewshot_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!(
                    "fewshot_ratio must lie in (0, 1], got {r}"
                )));
            }
        }
        if let (Some(w), n) = (&self.pretrain_weights, self.pretrain_data.len()) {
            if w.len() != n {
                return Err(Error::config(format!(
                    "{} pretrain_weights for {n} pretrain_data entries",
                    w.len()
                )));
            }
        }
        self.loss.validate()?;
        self.encoder.validate()?;
        self.finetune.validate()
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::default()
        } else {
            Exec::Sequential
        }
    }

    /// Number of augmentation kinds `G`.
    pub fn num_views(&self) -> usize {
        self.bank.len()
    }
}
