use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::nn::{EncoderConfig, EncoderKind, MLP_DEFAULT_DIM};
use crate::optim::OptimizerKind;
use crate::reciprocal::{Mode, TrainConfig};

/// Environment variable consulted when a config has no `data_root`.
pub const DATA_ROOT_ENV: &str = "RPL_DATA_ROOT";

/// Trials per protocol preset.
pub const PRESET_TRIALS: usize = 5;

/// Epochs of a full-length schedule; the default is lower for CPU runs.
pub const FULL_EPOCHS: usize = 100;

/// Where known and unknown classes come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetSpec {
    /// Known and unknown classes partition one label space.
    Single(DatasetName),
    /// Known classes from the first source, unknowns from the second.
    Cross { known: DatasetName, unknown: DatasetName },
}

impl DatasetSpec {
    pub fn known_source(self) -> DatasetName {
        match self {
            DatasetSpec::Single(d) => d,
            DatasetSpec::Cross { known, .. } => known,
        }
    }

    pub fn unknown_source(self) -> DatasetName {
        match self {
            DatasetSpec::Single(d) => d,
            DatasetSpec::Cross { unknown, .. } => unknown,
        }
    }

    pub fn is_cross(self) -> bool {
        matches!(self, DatasetSpec::Cross { .. })
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Single(d) => write!(f, "{d}"),
            DatasetSpec::Cross { known, unknown } => write!(f, "{known}+{unknown}"),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('+') {
            None => Ok(DatasetSpec::Single(s.parse()?)),
            Some((k, u)) => {
                let (known, unknown): (DatasetName, DatasetName) = (k.parse()?, u.parse()?);
                if known.dims() != unknown.dims() {
                    return Err(Error::config(format!("{known} and {unknown} images differ in shape")));
                }
                if known == unknown {
                    return Err(Error::config(format!("cross dataset {s:?} names one source twice")));
                }
                Ok(DatasetSpec::Cross { known, unknown })
            }
        }
    }
}

/// A run as written in a `key=value` config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub data_root: Option<PathBuf>,
    pub mode: Mode,
    pub n_known: usize,
    /// Number of unknown classes; all remaining ones when `None`.
    pub n_unknown: Option<usize>,
    pub seed: u64,
    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Reciprocal points per class.
    pub m: usize,
    /// Prototypes per class.
    pub c: usize,
    pub encoder: EncoderKind,
    pub out_dir: Option<PathBuf>,
    /// Cap on training samples per class; 0 keeps all.
    pub train_per_class: usize,
    /// Cap on test samples per class; 0 keeps all.
    pub test_per_class: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            dataset: DatasetSpec::Single(DatasetName::Mnist),
            data_root: None,
            mode: t.mode,
            n_known: 6,
            n_unknown: None,
            seed: t.seed,
            trials: PRESET_TRIALS,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            optimizer: t.optimizer,
            lambda: t.lambda,
            gamma: t.gamma,
            beta: t.beta,
            m: t.points_per_class,
            c: t.protos_per_class,
            encoder: EncoderKind::ConvSmall,
            out_dir: None,
            train_per_class: 0,
            test_per_class: 0,
        }
    }
}

const PRESETS: &[&str] = &["mnist-6/4", "cifar10-6/4", "cifar+10", "cifar+50"];

impl RunConfig {
    /// Named protocol: `mnist-6/4`, `cifar10-6/4`, `cifar+10`, `cifar+50`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = RunConfig::default();
        match name {
            "mnist-6/4" => Ok(base),
            "cifar10-6/4" => Ok(RunConfig {
                dataset: DatasetSpec::Single(DatasetName::Cifar10),
                ..base
            }),
            "cifar+10" | "cifar+50" => Ok(RunConfig {
                dataset: DatasetSpec::Cross {
                    known: DatasetName::Cifar10,
                    unknown: DatasetName::Cifar100,
                },
                n_known: 4,
                n_unknown: Some(if name == "cifar+10" { 10 } else { 50 }),
                ..base
            }),
            other => Err(Error::config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Parse `key=value` lines. `#` starts a comment line. A `preset` key, if
    /// present, supplies the starting values whatever its position.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            pairs.push((no + 1, k.trim(), v.trim()));
        }
        let mut cfg = match pairs.iter().find(|p| p.1 == "preset") {
            Some(&(_, _, v)) => RunConfig::preset(v)?,
            None => RunConfig::default(),
        };
        let mut seen = Vec::new();
        for (no, k, v) in pairs {
            if seen.contains(&k) {
                return Err(Error::config(format!("line {no}: duplicate key {k:?}")));
            }
            seen.push(k);
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {no}: {m}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(format!("bad value for {key}: {v:?}")))
        }
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "preset" => {}
            "dataset" => self.dataset = value.parse()?,
            "data_root" => self.data_root = path(value),
            "mode" => self.mode = value.parse()?,
            "n_known" => self.n_known = num(key, value)?,
            "n_unknown" => {
                self.n_unknown = match value {
                    "" | "all" => None,
                    v => Some(num(key, v)?),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "lambda" => self.lambda = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "M" => self.m = num(key, value)?,
            "C" => self.c = num(key, value)?,
            "encoder" => self.encoder = value.parse()?,
            "out_dir" => self.out_dir = path(value),
            "train_per_class" => self.train_per_class = num(key, value)?,
            "test_per_class" => self.test_per_class = num(key, value)?,
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(self.seed).validate()?;
        let known_total = self.dataset.known_source().classes();
        if self.n_known < 2 || self.n_known > known_total {
            return Err(Error::config(format!(
                "n_known must lie in [2, {known_total}] for {}, got {}",
                self.dataset, self.n_known
            )));
        }
        let available = self.unknown_pool();
        if let Some(u) = self.n_unknown {
            if u > available {
                return Err(Error::config(format!(
                    "n_unknown={u} exceeds the {available} classes available in {}",
                    self.dataset
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        Ok(())
    }

    /// Classes that can serve as unknowns.
    fn unknown_pool(&self) -> usize {
        match self.dataset {
            DatasetSpec::Single(d) => d.classes() - self.n_known.min(d.classes()),
            DatasetSpec::Cross { unknown, .. } => unknown.classes(),
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.n_unknown.unwrap_or_else(|| self.unknown_pool())
    }

    /// Model seed of a trial; trial 0 uses the configured seed itself.
    pub fn trial_seed(&self, trial: u64) -> u64 {
        self.seed.wrapping_add(trial)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            lambda: self.lambda,
            gamma: self.gamma,
            beta: self.beta,
            points_per_class: self.m,
            protos_per_class: self.c,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            lr: self.lr,
            seed,
        }
    }

    pub fn encoder_config(&self, seed: u64) -> EncoderConfig {
        let input = self.dataset.known_source().dims();
        match self.encoder {
            EncoderKind::ConvSmall => EncoderConfig::conv_small(input, seed),
            EncoderKind::MlpSmall => EncoderConfig::mlp_small(input, MLP_DEFAULT_DIM, seed),
        }
    }

    /// `data_root` from the config, else from [`DATA_ROOT_ENV`].
    pub fn resolve_data_root(&self) -> Result<PathBuf> {
        if let Some(p) = &self.data_root {
            return Ok(p.clone());
        }
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
            _ => Err(Error::config(format!(
                "no data_root in config and {DATA_ROOT_ENV} is not set"
            ))),
        }
    }

    /// Every key with its effective value, in a fixed order. Parsing this
    /// text yields the same config.
    pub fn to_text(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("dataset", self.dataset.to_string());
        kv("data_root", opt_path(&self.data_root));
        kv("mode", self.mode.to_string());
        kv("n_known", self.n_known.to_string());
        kv("n_unknown", self.n_unknown.map_or("all".into(), |u| u.to_string()));
        kv("seed", self.seed.to_string());
        kv("trials", self.trials.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("optimizer", self.optimizer.to_string());
        kv("lambda", format!("{:?}", self.lambda));
        kv("gamma", format!("{:?}", self.gamma));
        kv("beta", format!("{:?}", self.beta));
        kv("M", self.m.to_string());
        kv("C", self.c.to_string());
        kv("encoder", self.encoder.to_string());
        kv("out_dir", opt_path(&self.out_dir));
        kv("train_per_class", self.train_per_class.to_string());
        kv("test_per_class", self.test_per_class.to_string());
        out
    }

    /// SHA-256 of the resolved text without the machine-specific
    /// `data_root` and `out_dir` lines.
    pub fn digest_bytes(&self) -> [u8; 32] {
        let portable: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("data_root=") && !l.starts_with("out_dir="))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(portable.as_bytes()).into()
    }

    /// [`RunConfig::digest_bytes`] as lowercase hex.
    pub fn digest(&self) -> String {
        hex(&self.digest_bytes())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
