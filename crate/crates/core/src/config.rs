//! Run configuration: line-oriented `key = value` files, command-line
//! overrides and the resolved-config banner.
//!
//! Resolution order is preset, then file, then `--set` style overrides; the
//! last `preset` entry from any layer picks the base network before any other
//! key is applied. Every key is known: a misspelled key is an error.

use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::scalar::Precision;
use crate::training::{AdamConfig, DegradationSpec, TrainConfig};
use std::fmt;
use std::str::FromStr;

/// Base network before individual keys are applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// The full-size default network.
    Paper,
    /// `NetworkConfig::toy(8)`, sized for desk-scale training.
    Toy,
}

impl Preset {
    pub fn network(self) -> NetworkConfig {
        match self {
            Preset::Paper => NetworkConfig::default(),
            Preset::Toy => NetworkConfig::toy(8),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Toy => "toy",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper" => Ok(Preset::Paper),
            "toy" => Ok(Preset::Toy),
            other => Err(Error::Config(format!("preset must be `paper` or `toy`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub iters: usize,
    pub batch: usize,
    pub crop: usize,
    pub lr: f64,
    pub eval_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            iters: 2000,
            batch: 4,
            crop: 64,
            lr: 1e-3,
            eval_every: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub precision: Precision,
    pub network: NetworkConfig,
    pub train: TrainSettings,
}

/// One `key = value` entry with where it came from, for error messages.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; anything else without `=` is an error.
pub fn parse_entries(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("{source}:{}: expected `key = value`, got `{line}`", i + 1)));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("{source}:{}: empty key", i + 1)));
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            origin: format!("{source}:{}", i + 1),
        });
    }
    Ok(out)
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl RunConfig {
    pub const RUN_KEYS: [&'static str; 3] = ["preset", "seed", "precision"];
    pub const TRAIN_KEYS: [&'static str; 5] = ["iters", "batch", "crop", "lr", "eval_every"];

    pub fn new(preset: Preset) -> Self {
        RunConfig {
            preset,
            seed: 0,
            precision: Precision::Single,
            network: preset.network(),
            train: TrainSettings::default(),
        }
    }

    /// Builds the configuration from `default_preset` and entry layers in
    /// increasing priority.
    pub fn resolve(default_preset: Preset, layers: &[Vec<Entry>]) -> Result<Self> {
        let located = |e: &Entry, err: Error| match err {
            Error::Config(m) => Error::Config(format!("{}: {m}", e.origin)),
            other => Error::Config(format!("{}: {other}", e.origin)),
        };
        let mut preset = default_preset;
        for e in layers.iter().flatten().filter(|e| e.key == "preset") {
            preset = e.value.parse().map_err(|err| located(e, err))?;
        }
        let mut cfg = RunConfig::new(preset);
        for e in layers.iter().flatten().filter(|e| e.key != "preset") {
            cfg.set(&e.key, &e.value).map_err(|err| located(e, err))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "preset" => {
                return Err(Error::Config("preset must be resolved before other keys".into()));
            }
            "seed" => self.seed = parse(key, value)?,
            "precision" => self.precision = value.parse()?,
            "iters" => self.train.iters = parse(key, value)?,
            "batch" => self.train.batch = parse(key, value)?,
            "crop" => self.train.crop = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "eval_every" => self.train.eval_every = parse(key, value)?,
            _ => {
                if !self.network.set(key, value)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let t = &self.train;
        if t.batch == 0 || t.crop == 0 || t.eval_every == 0 {
            return Err(Error::Config("batch, crop and eval_every must be positive".into()));
        }
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return Err(Error::Config(format!("lr must be a positive number, got {}", t.lr)));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let mut out = vec![
            ("preset", self.preset.to_string()),
            ("seed", self.seed.to_string()),
            ("precision", self.precision.to_string()),
        ];
        out.extend(self.network.entries());
        out.extend([
            ("iters", t.iters.to_string()),
            ("batch", t.batch.to_string()),
            ("crop", t.crop.to_string()),
            ("lr", t.lr.to_string()),
            ("eval_every", t.eval_every.to_string()),
        ]);
        out
    }

    /// `# key = value` lines. With the `# ` prefix removed they form a config
    /// file that resolves to the same configuration.
    pub fn banner(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("# {k} = {v}\n"))
            .collect()
    }

    pub fn train_config(&self, spec: DegradationSpec) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            spec,
            iters: t.iters,
            batch: t.batch,
            crop: t.crop,
            adam: AdamConfig {
                lr: t.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
            eval_every: t.eval_every,
        }
    }
}
