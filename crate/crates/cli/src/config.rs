//! Run configuration: a flat TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use hdreason::kg::Split;
use hdreason::model::{BackwardMode, ModelConfig, OptimizerKind, ScoreSign, TrainOptions};
use hdreason::robustness::DropStrategy;
use hdreason::sim::Policy;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Parses a flag value with the same spelling the config file uses.
pub fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankModes {
    Raw,
    Filtered,
    Both,
}

/// Every setting as optional, so a file and flags can be layered. Field
/// names are the config-file keys; flags use the same names in kebab case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Dataset directory, `.hdkg` cache, or `synth:cube`, `synth:lattice:N`,
    /// `synth:<benchmark name>`.
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Hyperspace dimension D.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Candidate chunk width T of the backward pass.
    #[arg(long, global = true)]
    pub chunk: Option<usize>,
    /// Simulator engines N_c; overrides the hardware preset.
    #[arg(long, global = true)]
    pub n_c: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_parser = parse_name::<OptimizerName>)]
    pub optimizer: Option<OptimizerName>,
    #[arg(long, global = true, value_parser = parse_name::<BackwardMode>)]
    pub mode: Option<BackwardMode>,
    #[arg(long, global = true, value_parser = parse_name::<ScoreSign>)]
    pub score_sign: Option<ScoreSign>,
    #[arg(long, global = true)]
    pub label_smoothing: Option<f64>,
    #[arg(long, global = true)]
    pub init_scale: Option<f64>,
    #[arg(long, global = true, action = clap::ArgAction::Set)]
    pub train_bias: Option<bool>,
    /// Hardware preset for the simulator (u50 or u280).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// TOML file with a full cost configuration; replaces the preset.
    #[arg(long, global = true)]
    pub cost_config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_capacity: Option<usize>,
    #[arg(long, global = true, value_parser = parse_name::<Policy>)]
    pub policy: Option<Policy>,
    /// Cache sizes of the simulator sweep, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub capacities: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub fix_bits: Option<u32>,
    #[arg(long, global = true)]
    pub frac_bits: Option<u32>,
    #[arg(long, global = true)]
    pub drop_frac: Option<f64>,
    #[arg(long, global = true, value_parser = parse_name::<DropStrategy>)]
    pub drop_strategy: Option<DropStrategy>,
    #[arg(long, global = true, value_parser = parse_name::<Split>)]
    pub split: Option<Split>,
    #[arg(long, global = true, value_parser = parse_name::<RankModes>)]
    pub rank_mode: Option<RankModes>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory; defaults to $HDREASON_OUT, then `hdreason-out`.
    #[arg(long = "out", global = true)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `self` with every field that `top` sets replaced.
    pub fn overlay(self, top: &ConfigLayer) -> Self {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let top = serde_json::to_value(top).expect("config serializes");
        if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
            for (k, v) in t {
                if !v.is_null() {
                    b.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(base).expect("overlay keeps the schema")
    }
}

/// Fully resolved settings. Its hash identifies a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<String>,
    pub d: usize,
    pub dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub chunk: usize,
    pub n_c: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerName,
    pub mode: BackwardMode,
    pub score_sign: ScoreSign,
    pub label_smoothing: f64,
    pub init_scale: f64,
    pub train_bias: bool,
    pub preset: String,
    pub cost_config: Option<PathBuf>,
    pub cache_capacity: Option<usize>,
    pub policy: Policy,
    pub capacities: Vec<usize>,
    pub fix_bits: Option<u32>,
    pub frac_bits: Option<u32>,
    pub drop_frac: Option<f64>,
    pub drop_strategy: DropStrategy,
    pub split: Split,
    pub rank_mode: RankModes,
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

fn bad(key: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {why}"))
}

impl RunConfig {
    pub fn resolve(layer: ConfigLayer) -> Result<Self, CliError> {
        let defaults = TrainOptions::default();
        let out_dir = layer
            .out_dir
            .or_else(|| std::env::var_os("HDREASON_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("hdreason-out"));
        let cfg = Self {
            dataset: layer.dataset,
            d: layer.d.unwrap_or(128),
            dim: layer.dim.unwrap_or(256),
            seed: layer.seed.unwrap_or(0),
            batch_size: layer.batch_size.unwrap_or(defaults.batch_size),
            chunk: layer.chunk.unwrap_or(defaults.chunk),
            n_c: layer.n_c,
            epochs: layer.epochs.unwrap_or(50),
            lr: layer.lr.unwrap_or(defaults.optimizer.lr()),
            optimizer: layer.optimizer.unwrap_or(OptimizerName::Sgd),
            mode: layer.mode.unwrap_or(BackwardMode::Reference),
            score_sign: layer.score_sign.unwrap_or(ScoreSign::Distance),
            label_smoothing: layer.label_smoothing.unwrap_or(defaults.label_smoothing),
            init_scale: layer.init_scale.unwrap_or(0.1),
            train_bias: layer.train_bias.unwrap_or(true),
            preset: layer.preset.unwrap_or_else(|| "u50".into()),
            cost_config: layer.cost_config,
            cache_capacity: layer.cache_capacity,
            policy: layer.policy.unwrap_or(Policy::Lfu),
            capacities: layer.capacities.unwrap_or_else(|| vec![32, 64, 128, 256]),
            fix_bits: layer.fix_bits,
            frac_bits: layer.frac_bits,
            drop_frac: layer.drop_frac,
            drop_strategy: layer.drop_strategy.unwrap_or(DropStrategy::LowEntropy),
            split: layer.split.unwrap_or(Split::Test),
            rank_mode: layer.rank_mode.unwrap_or(RankModes::Both),
            checkpoint: layer.checkpoint,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        for (key, v) in [("d", self.d), ("dim", self.dim), ("batch_size", self.batch_size), ("chunk", self.chunk)] {
            if v == 0 {
                return Err(bad(key, "must be positive"));
            }
        }
        if self.n_c == Some(0) {
            return Err(bad("n_c", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(bad("lr", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(bad("label_smoothing", "must be in [0, 1)"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(bad("init_scale", "must be finite and non-negative"));
        }
        if self.cost_config.is_none() && hdreason::sim::CostConfig::preset(&self.preset).is_none() {
            return Err(bad("preset", format!("unknown preset {:?} (u50, u280)", self.preset)));
        }
        if self.cache_capacity == Some(0) || self.capacities.is_empty() || self.capacities.contains(&0) {
            return Err(bad("capacities", "cache sizes must be positive"));
        }
        if let Some(b) = self.fix_bits {
            if !(2..=52).contains(&b) {
                return Err(bad("fix_bits", "must be in [2, 52]"));
            }
            if self.frac_bits.is_some_and(|f| f >= b) {
                return Err(bad("frac_bits", "must be below fix_bits"));
            }
        } else if self.frac_bits.is_some() {
            return Err(bad("frac_bits", "needs fix_bits"));
        }
        if let Some(f) = self.drop_frac {
            if !(f > 0.0 && f < 1.0) {
                return Err(bad("drop_frac", "must be in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First eight hash bytes as the integer stored in checkpoints.
    pub fn hash_u64(&self) -> u64 {
        u64::from_str_radix(&self.hash(), 16).expect("hash is hex")
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut c = ModelConfig::new(self.d, self.dim, self.seed);
        c.mode = self.mode;
        c.score_sign = self.score_sign;
        c.train_bias = self.train_bias;
        c.init_scale = self.init_scale;
        c
    }

    pub fn train_options(&self) -> TrainOptions {
        let optimizer = match self.optimizer {
            OptimizerName::Sgd => OptimizerKind::sgd(self.lr),
            OptimizerName::Momentum => OptimizerKind::Momentum { lr: self.lr, beta: 0.9 },
            OptimizerName::Adam => OptimizerKind::adam(self.lr),
        };
        TrainOptions {
            batch_size: self.batch_size,
            chunk: self.chunk,
            label_smoothing: self.label_smoothing,
            optimizer,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.hdck"))
    }
}
