//! Run configuration: a flat TOML table with documented defaults.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex::PretrainConfig;
use crate::error::{Error, Result};
use crate::prover::{ProverConfig, TemplateSpec};

/// Every tunable of a run. Unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset name (looked up under the data directory) or path.
    pub dataset: String,
    pub seed: u64,
    /// Train/valid/test ratios for datasets shipped as one fact file.
    pub split: [f64; 3],

    /// Embedding size (real and imaginary halves for pretraining).
    pub dim: usize,
    pub pretrain_epochs: usize,
    pub pretrain_negatives: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch_size: usize,
    pub pretrain_l2: f64,
    /// Target mean pairwise squared distance of each pretrained table;
    /// 0 keeps the raw scale.
    pub embedding_scale: f64,

    pub max_depth: usize,
    pub seted_min_score: f64,
    /// Per-call state cap in the OR step; 0 means uncapped.
    pub beam_cap: usize,
    pub templates: String,
    /// Uniform noise added when seeding template slots.
    pub slot_noise: f64,

    /// Goals per batch (`B` in the storage capacities).
    pub batch_size: usize,
    /// Corruptions per positive in the prover loss.
    pub negatives: usize,
    pub prover_lr: f64,
    pub prover_epochs: usize,
    /// Training batches used per epoch, taken from the front of the shuffled
    /// order; 0 uses them all. Meant for quick measurements.
    pub max_batches: usize,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,

    pub generator_lr: f64,
    pub generator_epochs: usize,
    /// Per-step top-k of the relation beam.
    pub width: usize,
    /// Generation steps per goal relation.
    pub generator_depth: usize,
    /// Share of the KB the selected sub-KB may hold.
    pub proportion: f64,
    /// Expansion coefficients, one per storage layer.
    pub ep: Vec<usize>,
    /// `max_size = max_size_factor * batch_size * layers`.
    pub max_size_factor: usize,

    pub iterations: usize,
    pub patience: usize,
    /// Validation facts ranked per iteration; 0 ranks them all.
    pub valid_sample: usize,
    /// Test facts ranked at evaluation; 0 ranks them all.
    pub test_sample: usize,

    /// Prove against the whole KB instead of the generated selection.
    pub baseline: bool,
    /// Write one proof-trace line per proof during evaluation.
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            seed: 0,
            split: [0.3, 0.2, 0.5],
            dim: 100,
            pretrain_epochs: 100,
            pretrain_negatives: 10,
            pretrain_lr: 0.01,
            pretrain_batch_size: 128,
            pretrain_l2: 1e-4,
            embedding_scale: 3.0,
            max_depth: 2,
            seted_min_score: 0.1,
            beam_cap: 0,
            templates: TemplateSpec::default().to_string(),
            slot_noise: 0.1,
            batch_size: 32,
            negatives: 2,
            prover_lr: 0.01,
            prover_epochs: 1,
            max_batches: 0,
            clip_norm: 5.0,
            generator_lr: 0.01,
            generator_epochs: 10,
            width: 4,
            generator_depth: 2,
            proportion: 0.3,
            ep: vec![4, 2, 2],
            max_size_factor: 10,
            iterations: 100,
            patience: 10,
            valid_sample: 200,
            test_sample: 0,
            baseline: false,
            trace: false,
        }
    }
}

fn default_table() -> toml::Table {
    toml::Table::try_from(RunConfig::default()).expect("defaults serialize")
}

/// Names of all accepted keys.
pub fn valid_keys() -> Vec<String> {
    default_table().keys().cloned().collect()
}

fn check_keys(table: &toml::Table) -> Result<()> {
    let valid = default_table();
    for k in table.keys() {
        if !valid.contains_key(k) {
            return Err(Error::Config(format!(
                "unknown config key {k:?}; valid keys: {}",
                valid_keys().join(", ")
            )));
        }
    }
    Ok(())
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

impl RunConfig {
    /// Builds a config from TOML text plus `key=value` overrides, which win.
    pub fn load(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed config: {e}")))?;
        check_keys(&table)?;
        for (k, v) in overrides {
            table.insert(k.clone(), parse_value(v));
        }
        check_keys(&table)?;
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Splits `key=value`.
    pub fn parse_override(s: &str) -> Result<(String, String)> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return bad("proportion must lie in (0, 1]");
        }
        if self.dim < 2 || self.dim % 2 != 0 {
            return bad("dim must be even and at least 2");
        }
        if self.batch_size == 0 || self.width == 0 {
            return bad("batch_size and width must be positive");
        }
        if self.ep.is_empty() || self.ep.contains(&0) {
            return bad("ep needs at least one positive coefficient");
        }
        if self.clip_norm < 0.0 || self.embedding_scale < 0.0 {
            return bad("clip_norm and embedding_scale must be non-negative");
        }
        crate::kb::split_sizes(0, self.split)?;
        self.prover()?;
        self.template_spec()?;
        Ok(())
    }

    pub fn prover(&self) -> Result<ProverConfig> {
        let p = ProverConfig {
            max_depth: self.max_depth,
            seted_min_score: self.seted_min_score,
            beam_cap: (self.beam_cap > 0).then_some(self.beam_cap),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn template_spec(&self) -> Result<TemplateSpec> {
        self.templates.parse()
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            dim: self.dim,
            epochs: self.pretrain_epochs,
            negatives_per_positive: self.pretrain_negatives,
            lr: self.pretrain_lr,
            batch_size: self.pretrain_batch_size,
            l2: self.pretrain_l2,
            seed: self.seed,
            ..PretrainConfig::default()
        }
    }

    pub fn max_size(&self) -> usize {
        self.max_size_factor * self.batch_size * self.ep.len()
    }

    pub fn clip(&self) -> Option<f64> {
        (self.clip_norm > 0.0).then_some(self.clip_norm)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..12].to_string()
    }
}
