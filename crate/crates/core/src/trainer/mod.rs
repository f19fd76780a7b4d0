//! Joint generator and discriminator training.

pub mod optim;

pub use optim::{adam_step, lr_at, AdamState, OptimConfig, StepStats};

use crate::corpus::{language_sampling_probs, BatchStream, Corpus, CorpusStats, Example, StreamState};
use crate::error::{Error, Result};
use crate::model::{ElectraConfig, ElectraModel};
use crate::objectives::{joint_loss, Corruption, LossReport, MaskedBatch, ObjectiveConfig};
use crate::tensor::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Everything that shapes a training run besides the model and corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub objective: ObjectiveConfig,
    /// Non-pad tokens per batch, for each of the two streams.
    pub token_budget: usize,
    /// Language sampling exponent.
    pub alpha: f64,
    /// Include the translation-pair terms.
    pub translation: bool,
    /// Divergence guard: halt after this many consecutive steps whose loss
    /// exceeds `divergence_factor` times the first step's.
    pub divergence_window: usize,
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optim: OptimConfig::default(),
            objective: ObjectiveConfig::default(),
            token_budget: 4096,
            alpha: 0.7,
            translation: true,
            divergence_window: 50,
            divergence_factor: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        self.objective.validate()?;
        if self.token_budget == 0 {
            return Err(Error::Config("token_budget must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss_mlm: f64,
    pub loss_tlm: f64,
    pub loss_mrtd: f64,
    pub loss_trtd: f64,
    pub loss_total: f64,
    pub disc_acc: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

pub const METRICS_HEADER: &str = "step,loss_mlm,loss_tlm,loss_mrtd,loss_trtd,loss_total,disc_acc,lr,grad_norm";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.loss_mlm,
            self.loss_tlm,
            self.loss_mrtd,
            self.loss_trtd,
            self.loss_total,
            self.disc_acc,
            self.lr,
            self.grad_norm
        )
    }

    pub fn parse_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return None;
        }
        let x = |i: usize| f[i].parse::<f64>().ok();
        Some(MetricsRow {
            step: f[0].parse().ok()?,
            loss_mlm: x(1)?,
            loss_tlm: x(2)?,
            loss_mrtd: x(3)?,
            loss_trtd: x(4)?,
            loss_total: x(5)?,
            disc_acc: x(6)?,
            lr: x(7)?,
            grad_norm: x(8)?,
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| MetricsRow::parse_csv(l).ok_or_else(|| Error::format(path, format!("bad metrics line {l:?}"))))
        .collect()
}

/// Serializable non-tensor state; stored as `rng-state.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub step: usize,
    pub rng: ChaCha8Rng,
    pub mono_stream: StreamState,
    pub pair_stream: StreamState,
    pub initial_loss: Option<f64>,
    pub over_limit: usize,
}

/// Model, optimizer and data streams of one run.
pub struct Trainer {
    pub model: ElectraModel<f32>,
    pub config: TrainConfig,
    pub adam: AdamState<f32>,
    pub run: RunState,
    mono: BatchStream,
    pair: BatchStream,
}

fn stream_for(sources: Vec<Vec<Example>>, alpha: f64, budget: usize, rng: ChaCha8Rng) -> Result<BatchStream> {
    let counts: Vec<usize> = sources.iter().map(Vec::len).collect();
    let probs = if counts.iter().all(|&c| c > 0) {
        language_sampling_probs(&CorpusStats::new(counts, alpha))?
    } else {
        // Languages without data (e.g. the base language has no pair
        // stream of its own) are never drawn.
        let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
        if present.is_empty() {
            return Err(Error::Input("corpus stream has no sentences".into()));
        }
        let p = language_sampling_probs(&CorpusStats::new(present, alpha))?;
        let mut it = p.into_iter();
        counts.iter().map(|&c| if c > 0 { it.next().unwrap() } else { 0.0 }).collect()
    };
    Ok(BatchStream::new(sources, probs, budget, rng))
}

/// Pair sources indexed by language, empty for languages without pairs.
fn pair_sources(corpus: &Corpus) -> Vec<Vec<Example>> {
    let mut sources = vec![Vec::new(); corpus.languages.len()];
    for (set, examples) in corpus.parallel.iter().zip(corpus.pair_examples()) {
        sources[set.target] = examples;
    }
    sources
}

impl Trainer {
    /// Fresh run: model initialized from `seed`, streams and masking
    /// rng derived from it as well.
    pub fn new(model_config: &ElectraConfig, corpus: &Corpus, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut model_config = model_config.clone();
        if model_config.vocab_size == 0 {
            model_config.vocab_size = corpus.vocab.len();
        }
        if model_config.vocab_size < corpus.vocab.len() {
            return Err(Error::Config(format!(
                "vocab_size {} smaller than corpus vocabulary {}",
                model_config.vocab_size,
                corpus.vocab.len()
            )));
        }
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        let model = ElectraModel::init(&model_config, root.gen())?;
        let mono = stream_for(corpus.mono_examples(), config.alpha, config.token_budget, ChaCha8Rng::seed_from_u64(root.gen()))?;
        let pair = stream_for(pair_sources(corpus), config.alpha, config.token_budget, ChaCha8Rng::seed_from_u64(root.gen()))?;
        let run = RunState {
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(root.gen()),
            mono_stream: mono.state.clone(),
            pair_stream: pair.state.clone(),
            initial_loss: None,
            over_limit: 0,
        };
        Ok(Trainer {
            adam: AdamState::new(&model.params),
            model,
            config,
            run,
            mono,
            pair,
        })
    }

    pub fn step_count(&self) -> usize {
        self.run.step
    }

    /// Draws the next monolingual batch and, with translation on, the next
    /// pair batch.
    pub fn next_examples(&mut self) -> Result<(Vec<Example>, Option<Vec<Example>>)> {
        let mono = self.mono.next().ok_or_else(|| Error::Input("no monolingual data".into()))?;
        let pair = if self.config.translation {
            Some(self.pair.next().ok_or_else(|| Error::Input("no parallel data".into()))?)
        } else {
            None
        };
        Ok((mono, pair))
    }

    /// One optimizer step over the union of generator and discriminator
    /// parameters.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let next = self.run.step + 1;
        let lr = lr_at(next, &self.config.optim)?;
        let (mono_ex, pair_ex) = self.next_examples()?;
        let ratio = self.config.objective.mask_ratio;
        let mono = MaskedBatch::new(&mono_ex, ratio, &mut self.run.rng)?;
        let pair = pair_ex.map(|p| MaskedBatch::new(&p, ratio, &mut self.run.rng)).transpose()?;

        let mut g = Graph::new();
        let bound = self.model.params.bind(&mut g, true);
        let out = joint_loss(
            &mut g,
            &bound,
            &self.model,
            &mono,
            pair.as_ref(),
            &self.config.objective,
            Corruption::Sample(&mut self.run.rng),
        )?;
        g.backward(out.total)?;
        let mut grads = self.model.params.collect_grads(&g, &bound);
        drop(g);
        let stats = adam_step(&mut self.model.params, &mut grads, &mut self.adam, &self.config.optim, lr)?;
        self.run.step = next;
        self.run.mono_stream = self.mono.state.clone();
        self.run.pair_stream = self.pair.state.clone();

        let row = metrics_row(next, &out.report, lr, stats.grad_norm);
        self.guard(&row)?;
        Ok(row)
    }

    fn guard(&mut self, row: &MetricsRow) -> Result<()> {
        let initial = *self.run.initial_loss.get_or_insert(row.loss_total);
        if row.loss_total > self.config.divergence_factor * initial || !row.loss_total.is_finite() {
            self.run.over_limit += 1;
        } else {
            self.run.over_limit = 0;
        }
        if self.run.over_limit >= self.config.divergence_window {
            return Err(Error::Diverged {
                step: row.step,
                loss: row.loss_total,
                initial,
                window: self.config.divergence_window,
            });
        }
        Ok(())
    }

    /// Steps until `total_steps` or `limit` steps have been taken,
    /// calling `on_step` after each.
    pub fn run(&mut self, limit: Option<usize>, mut on_step: impl FnMut(&Trainer, &MetricsRow) -> Result<()>) -> Result<Vec<MetricsRow>> {
        let end = limit.map_or(self.config.optim.total_steps, |l| (self.run.step + l).min(self.config.optim.total_steps));
        let mut rows = Vec::new();
        while self.run.step < end {
            let row = self.step()?;
            on_step(self, &row)?;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Detection accuracy, without updates, on the given examples
    /// (monolingual and pairs alike), packed under the token budget.
    pub fn detection_accuracy(&self, examples: &[Example], seed: u64) -> Result<f64> {
        detection_accuracy(&self.model, &self.config, examples, seed)
    }

    /// Writes `config.json`, `params.bin`, `optim-state.bin` and
    /// `rng-state.json` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config = CheckpointConfig {
            model: self.model.config.clone(),
            train: self.config.clone(),
        };
        write_json(&dir.join("config.json"), &config)?;
        self.model.params.save(&dir.join("params.bin"))?;
        self.adam.save(&self.model.params, &dir.join("optim-state.bin"))?;
        write_json(&dir.join("rng-state.json"), &self.run)
    }

    /// Restores a run saved by [`Trainer::save_checkpoint`]. The corpus
    /// must be the one the run was started with.
    pub fn resume(dir: &Path, corpus: &Corpus) -> Result<Self> {
        let config: CheckpointConfig = read_json(&dir.join("config.json"))?;
        let mut trainer = Trainer::new(&config.model, corpus, config.train, 0)?;
        trainer.model.params.load_values(&dir.join("params.bin"))?;
        trainer.adam = AdamState::load(&trainer.model.params, &dir.join("optim-state.bin"))?;
        trainer.run = read_json(&dir.join("rng-state.json"))?;
        trainer.mono.state = trainer.run.mono_stream.clone();
        trainer.pair.state = trainer.run.pair_stream.clone();
        Ok(trainer)
    }
}

/// Model and training configuration stored with each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ElectraConfig,
    pub train: TrainConfig,
}

/// Loads only the model of a checkpoint directory.
pub fn load_model(dir: &Path) -> Result<ElectraModel<f32>> {
    let config: CheckpointConfig = read_json(&dir.join("config.json"))?;
    let mut model = ElectraModel::new(&config.model)?;
    model.params.load_values(&dir.join("params.bin"))?;
    Ok(model)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn metrics_row(step: usize, r: &LossReport, lr: f64, grad_norm: f64) -> MetricsRow {
    MetricsRow {
        step,
        loss_mlm: r.mlm,
        loss_tlm: r.tlm,
        loss_mrtd: r.mrtd,
        loss_trtd: r.trtd,
        loss_total: r.total,
        disc_acc: r.disc_accuracy(),
        lr,
        grad_norm,
    }
}

/// Held-out detection accuracy of a model: examples are masked, corrupted
/// by the generator and scored by the discriminator.
pub fn detection_accuracy(model: &ElectraModel<f32>, config: &TrainConfig, examples: &[Example], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = crate::corpus::dynamic_batch(examples.to_vec(), config.token_budget, &mut rng);
    let (mut correct, mut total) = (0, 0);
    for batch in &plan.batches {
        let (mono, pairs): (Vec<Example>, Vec<Example>) = batch.iter().cloned().partition(|e| e.boundary.is_none());
        for group in [mono, pairs] {
            if group.is_empty() {
                continue;
            }
            let masked = MaskedBatch::new(&group, config.objective.mask_ratio, &mut rng)?;
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g, false);
            let gen = crate::objectives::generator_loss(&mut g, &bound, model, &masked, config.objective.reduction)?;
            let corrupt =
                crate::objectives::sample_corruption(&masked, g.value(gen.logits), config.objective.sample_mode, &mut rng)?;
            let disc = crate::objectives::discriminator_loss_rtd(
                &mut g,
                &bound,
                model,
                &corrupt,
                config.objective.detect_special,
                config.objective.reduction,
            )?;
            let (c, t) =
                crate::objectives::detection_counts(g.value(disc.logits).data(), &corrupt, config.objective.detect_special);
            correct += c;
            total += t;
        }
    }
    if total == 0 {
        return Err(Error::Input("no positions to score".into()));
    }
    Ok(correct as f64 / total as f64)
}
