//! Run configuration: one TOML file holding the model, training, data and
//! evaluation settings. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::evaluation::ScoreMode;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding `train.jsonl`, `test.jsonl` and `vocab.txt`.
    pub data_dir: PathBuf,
    /// Where commands write their outputs.
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub score: ScoreMode,
    /// Evaluate only the first `limit` test examples.
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: SyntheticSpec,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.validate()?;
        if self.data.vocab_size > self.model.vocab_size {
            return Err(Error::Config(format!(
                "data.vocab_size ({}) exceeds model.vocab_size ({})",
                self.data.vocab_size, self.model.vocab_size
            )));
        }
        Ok(())
    }

    /// Uses one seed for data generation, initialization and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.data.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(RunConfig::from_toml_str("[extra]\n").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml_str("[train]\nk = 2\nobjective = \"ppl_only\"\n[model]\nd_model = 32\n").unwrap();
        assert_eq!(c.train.k, 2);
        assert_eq!(c.train.lr_peak, 3e-4);
        assert_eq!(c.model.d_model, 32);
        assert_eq!(c.model.n_heads, 4);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.train.total_steps = Some(10);
        c.eval.score = ScoreMode::Ppl;
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn data_vocab_must_fit_the_model() {
        assert!(RunConfig::from_toml_str("[data]\nvocab_size = 1024\n").is_err());
    }
}
