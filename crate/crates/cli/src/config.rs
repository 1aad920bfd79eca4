use std::path::{Path, PathBuf};

use beflow::flowcore::FlowConfig;
use beflow::netmodel::{ModelConfig, TrainConfig};
use beflow::postprocess::{PostConfig, RoundingMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every tunable of every command in one flat table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub split_seed: u64,

    pub sigma: f64,
    pub rbf_low: f64,
    pub rbf_high: f64,
    pub rbf_step: f64,
    pub rbf_gamma: f64,
    pub euler_steps: usize,
    pub seed: u64,

    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub max_atoms: usize,

    pub steps: usize,
    pub eval_every: usize,
    pub log_every: usize,
    /// Samples per step when measuring validation accuracy during training.
    pub eval_samples: usize,

    pub samples: usize,
    pub rounding: RoundingMode,
    pub validity_fix: bool,
    pub width: usize,
    pub depth: usize,
    pub ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FlowConfig::default();
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            corpus: None,
            checkpoint: None,
            out_dir: None,
            train_ratio: 0.89,
            val_ratio: 0.01,
            test_ratio: 0.10,
            split_seed: 0,
            sigma: f.sigma,
            rbf_low: f.rbf_low,
            rbf_high: f.rbf_high,
            rbf_step: f.rbf_step,
            rbf_gamma: f.rbf_gamma,
            euler_steps: f.euler_steps,
            seed: f.seed,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            ffn_dim: m.ffn_dim,
            layers: m.layers,
            heads: m.heads,
            learning_rate: m.learning_rate,
            warmup_steps: m.warmup_steps,
            batch_size: m.batch_size,
            max_atoms: m.max_atoms,
            steps: t.steps,
            eval_every: t.eval_every,
            log_every: t.log_every,
            eval_samples: 8,
            samples: 32,
            rounding: RoundingMode::default(),
            validity_fix: true,
            width: 2,
            depth: 9,
            ks: vec![1, 2, 3, 5],
        }
    }
}

impl RunConfig {
    /// Read an optional config file, then apply `key=value` overrides. Values
    /// are TOML; anything that does not parse as TOML is taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        Self::load_with(&[], path, overrides)
    }

    /// [`RunConfig::load`] with command-specific `defaults`, applied below the
    /// config file.
    pub fn load_with(defaults: &[String], path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = toml::Table::new();
        apply(&mut table, defaults)?;
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(file);
        apply(&mut table, overrides)?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Usage(e.to_string()))?;
        cfg.flow().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.model().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig {
            sigma: self.sigma,
            rbf_low: self.rbf_low,
            rbf_high: self.rbf_high,
            rbf_step: self.rbf_step,
            rbf_gamma: self.rbf_gamma,
            euler_steps: self.euler_steps,
            seed: self.seed,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            ffn_dim: self.ffn_dim,
            layers: self.layers,
            heads: self.heads,
            learning_rate: self.learning_rate,
            warmup_steps: self.warmup_steps,
            batch_size: self.batch_size,
            max_atoms: self.max_atoms,
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig { steps: self.steps, eval_every: self.eval_every, log_every: self.log_every }
    }

    pub fn post(&self) -> PostConfig {
        PostConfig { rounding: self.rounding, validity_fix: self.validity_fix }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn apply(table: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override '{o}' is not key=value")))?;
        let value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.trim().to_string(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let c = RunConfig::load(None, &["width=5".into(), "depth=10".into(), "rounding=full_matrix".into()]).unwrap();
        assert_eq!((c.width, c.depth, c.rounding), (5, 10, RoundingMode::FullMatrix));
        assert!(RunConfig::load(None, &["bogus=1".into()]).is_err());
        assert!(RunConfig::load(None, &["sigma=-1".into()]).is_err());
        let d = ["rounding=full_matrix".to_string()];
        assert_eq!(RunConfig::load_with(&d, None, &[]).unwrap().rounding, RoundingMode::FullMatrix);
        let o = ["rounding=symmetric_safe".to_string()];
        assert_eq!(RunConfig::load_with(&d, None, &o).unwrap().rounding, RoundingMode::SymmetricSafe);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig { corpus: Some("x.tsv".into()), ..RunConfig::default() };
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
