//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 1
//! output_dir = "runs/toy"
//!
//! [model]
//! hidden_size = 64
//!
//! [optim]
//! total_steps = 2000
//!
//! [data]
//! token_budget = 256
//! ```
//!
//! Every section and key is optional except `output_dir`; unknown keys
//! are rejected.

use crate::corpus::{LanguageSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{Extraction, OtConfig};
use crate::model::ElectraConfig;
use crate::objectives::ObjectiveConfig;
use crate::trainer::{OptimConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub parallel_sentences: usize,
    pub eval_pairs: usize,
    /// Non-pad tokens per batch and stream.
    pub token_budget: usize,
    pub alpha: f64,
    /// Train with the translation-pair terms.
    pub translation: bool,
    /// Where the corpus lives; defaults to `{output_dir}/corpus`.
    pub corpus_dir: Option<PathBuf>,
    pub languages: Vec<LanguageSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        DataConfig {
            parallel_sentences: synth.parallel_sentences,
            eval_pairs: synth.eval_pairs,
            token_budget: 4096,
            alpha: 0.7,
            translation: true,
            corpus_dir: None,
            languages: synth.languages,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub epsilon: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub extraction: Extraction,
    /// Seeds masking and sampling for held-out detection accuracy.
    pub detection_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let ot = OtConfig::default();
        EvalConfig {
            epsilon: ot.epsilon,
            iterations: ot.iterations,
            tolerance: ot.tolerance,
            extraction: ot.extraction,
            detection_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn ot(&self) -> OtConfig {
        OtConfig {
            epsilon: self.epsilon,
            iterations: self.iterations,
            tolerance: self.tolerance,
            extraction: self.extraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Steps between checkpoints; 0 keeps only the first and last.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub model: ElectraConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_checkpoint_every() -> usize {
    500
}

impl RunConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            seed: 0,
            output_dir: output_dir.into(),
            checkpoint_every: default_checkpoint_every(),
            model: ElectraConfig::default(),
            optim: OptimConfig::default(),
            objective: ObjectiveConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            Error::Config(format!("{}: {}", origin.display(), e.message().replace('\n', " ")))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the full resolved config to `{output_dir}/config.toml`.
    pub fn write_copy(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join("config.toml");
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        // A zero vocabulary is resolved from the corpus at training time.
        ElectraConfig {
            vocab_size: self.model.vocab_size.max(1),
            ..self.model.clone()
        }
        .validate()?;
        self.train().validate()?;
        if self.eval.epsilon <= 0.0 || self.eval.iterations == 0 {
            return Err(Error::Config("eval epsilon and iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.data.corpus_dir.clone().unwrap_or_else(|| self.output_dir.join("corpus"))
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            languages: self.data.languages.clone(),
            parallel_sentences: self.data.parallel_sentences,
            eval_pairs: self.data.eval_pairs,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            optim: self.optim.clone(),
            objective: self.objective.clone(),
            token_budget: self.data.token_budget,
            alpha: self.data.alpha,
            translation: self.data.translation,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let c = RunConfig::from_toml("output_dir = \"x\"", Path::new("t.toml")).unwrap();
        assert_eq!(c.optim, OptimConfig::default());
        assert_eq!(c.data.languages.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["output_dir = \"x\"\nbogus = 1", "output_dir = \"x\"\n[optim]\nlearning_rate = 1.0"] {
            let err = RunConfig::from_toml(text, Path::new("t.toml")).unwrap_err();
            assert_eq!(err.code(), "E_CONFIG");
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::new("out");
        c.eval.extraction = Extraction::Threshold(0.4);
        c.data.corpus_dir = Some("somewhere".into());
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text, Path::new("t.toml")).unwrap(), c);
    }

    #[test]
    fn invalid_values_rejected() {
        let text = "output_dir = \"x\"\n[model]\nhidden_size = 30\nnum_heads = 4";
        assert_eq!(RunConfig::from_toml(text, Path::new("t.toml")).unwrap_err().code(), "E_CONFIG");
    }
}
