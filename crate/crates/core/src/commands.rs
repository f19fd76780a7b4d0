//! The `synth`, `pretrain`, `eval` and `gradcheck` commands as library
//! functions; the binary only parses arguments and prints.

use crate::config::RunConfig;
use crate::corpus::{synth_corpus, Corpus, Example};
use crate::diagnostics::{joint_gradcheck, random_cases, worst_param_name};
use crate::error::{Error, Result};
use crate::eval::{best_layer, layer_sweep, sweep_csv, LayerMetrics};
use crate::model::Role;
use crate::trainer::{detection_accuracy, load_model, metrics_csv, read_metrics, CheckpointConfig, MetricsRow, Trainer};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct SynthSummary {
    pub dir: PathBuf,
    pub mono_files: usize,
    pub parallel_files: usize,
    pub vocab_size: usize,
}

/// Writes the corpus described by `config` to its corpus directory.
pub fn cmd_synth(config: &RunConfig) -> Result<SynthSummary> {
    let corpus = synth_corpus(&config.synth(), config.seed)?;
    let dir = config.corpus_dir();
    corpus.write_dir(&dir)?;
    config.write_copy()?;
    Ok(SynthSummary {
        dir,
        mono_files: corpus.mono.len(),
        parallel_files: corpus.parallel.len(),
        vocab_size: corpus.vocab.len(),
    })
}

/// Reads the configured corpus, synthesizing it first if absent.
pub fn load_or_synth(config: &RunConfig) -> Result<Corpus> {
    let dir = config.corpus_dir();
    if !dir.join("vocab.txt").exists() {
        cmd_synth(config)?;
    }
    Corpus::read_dir(&dir)
}

#[derive(Clone, Debug, Default)]
pub struct PretrainOptions {
    /// Drop the translation-pair terms.
    pub no_trtd: bool,
    /// Continue from this checkpoint directory.
    pub resume: Option<PathBuf>,
    /// Stop after this many steps (the schedule still spans `total_steps`).
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct PretrainSummary {
    pub final_checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub steps: usize,
    pub last: Option<MetricsRow>,
}

pub fn checkpoint_dir(config: &RunConfig, step: usize) -> PathBuf {
    config.output_dir.join("checkpoints").join(format!("step-{step:06}"))
}

/// Trains per `config`, writing `metrics.csv` and checkpoints under the
/// output directory (`checkpoints/step-NNNNNN`, including step 0).
pub fn cmd_pretrain(config: &RunConfig, options: &PretrainOptions) -> Result<PretrainSummary> {
    let mut config = config.clone();
    if options.no_trtd {
        config.data.translation = false;
    }
    config.validate()?;
    config.write_copy()?;
    let corpus = load_or_synth(&config)?;
    let metrics_path = config.output_dir.join("metrics.csv");
    let (mut trainer, mut rows) = match &options.resume {
        Some(dir) => {
            let t = Trainer::resume(dir, &corpus)?;
            let step = t.step_count();
            let rows: Vec<MetricsRow> = if metrics_path.exists() {
                read_metrics(&metrics_path)?.into_iter().filter(|r| r.step <= step).collect()
            } else {
                Vec::new()
            };
            (t, rows)
        }
        None => {
            let t = Trainer::new(&config.model, &corpus, config.train(), config.seed)?;
            t.save_checkpoint(&checkpoint_dir(&config, 0))?;
            (t, Vec::new())
        }
    };
    let every = config.checkpoint_every;
    let total = trainer.config.optim.total_steps;
    let new_rows = trainer.run(options.max_steps, |t, row| {
        if row.step % 100 == 0 || row.step == 1 {
            log::info!(
                "step {} loss {:.4} mlm {:.4} tlm {:.4} mrtd {:.4} trtd {:.4} acc {:.3}",
                row.step,
                row.loss_total,
                row.loss_mlm,
                row.loss_tlm,
                row.loss_mrtd,
                row.loss_trtd,
                row.disc_acc
            );
        }
        if (every > 0 && row.step % every == 0) || row.step == total {
            t.save_checkpoint(&checkpoint_dir(&config, row.step))?;
        }
        Ok(())
    });
    let new_rows = match new_rows {
        Ok(r) => r,
        Err(e) => {
            // Keep the log of a diverged run for inspection.
            fs::write(&metrics_path, metrics_csv(&rows)).map_err(|io| Error::io(&metrics_path, io))?;
            return Err(e);
        }
    };
    rows.extend(new_rows);
    fs::write(&metrics_path, metrics_csv(&rows)).map_err(|e| Error::io(&metrics_path, e))?;
    let step = trainer.step_count();
    let final_checkpoint = checkpoint_dir(&config, step);
    if !final_checkpoint.join("params.bin").exists() {
        trainer.save_checkpoint(&final_checkpoint)?;
    }
    Ok(PretrainSummary {
        final_checkpoint,
        metrics: metrics_path,
        steps: step,
        last: rows.last().cloned(),
    })
}

/// Per-pair results of [`cmd_eval`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub source: String,
    pub target: String,
    pub target_kind: String,
    pub layers: Vec<LayerMetrics>,
    pub best_layer: usize,
    pub best_acc_forward: f64,
    pub best_acc_backward: f64,
    pub best_aer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub pairs: Vec<PairReport>,
    /// Replaced-token detection accuracy on held-out sentences and pairs.
    pub detection_accuracy: f64,
}

impl EvalReport {
    pub fn pair(&self, target: &str) -> Option<&PairReport> {
        self.pairs.iter().find(|p| p.target == target)
    }
}

/// Layer sweeps for every held-out pair plus detection accuracy; writes
/// `sweep.{src}-{tgt}.csv` and `report.json` into `{checkpoint}/eval`.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    let corpus = load_or_synth(config)?;
    let model = load_model(checkpoint)?;
    let ckpt_config: CheckpointConfig = {
        let path = checkpoint.join("config.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?
    };
    if model.config.vocab_size < corpus.vocab.len() {
        return Err(Error::Input("checkpoint vocabulary is smaller than the corpus vocabulary".into()));
    }
    let out_dir = checkpoint.join("eval");
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let ot = config.eval.ot();
    let mut pairs = Vec::new();
    let mut held_out = Vec::new();
    for set in &corpus.eval {
        let rows = layer_sweep(&model, Role::Discriminator, set, &ot)?;
        let (src, tgt) = (&corpus.languages[set.source], &corpus.languages[set.target]);
        let path = out_dir.join(format!("sweep.{}-{}.csv", src.tag, tgt.tag));
        fs::write(&path, sweep_csv(&rows)).map_err(|e| Error::io(&path, e))?;
        let best = best_layer(&rows).expect("at least the embedding layer").clone();
        pairs.push(PairReport {
            source: src.tag.clone(),
            target: tgt.tag.clone(),
            target_kind: tgt.kind.name().into(),
            best_layer: best.layer,
            best_acc_forward: best.acc_forward,
            best_acc_backward: best.acc_backward,
            best_aer: best.aer,
            layers: rows,
        });
        for (e, f) in &set.pairs {
            held_out.push(Example::mono(set.source, e));
            held_out.push(Example::mono(set.target, f));
            held_out.push(Example::pair(set.target, e, f));
        }
    }
    let detection = detection_accuracy(&model, &ckpt_config.train, &held_out, config.eval.detection_seed)?;
    let report = EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        pairs,
        detection_accuracy: detection,
    };
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct GradcheckLine {
    pub case: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: Option<String>,
    pub passed: bool,
}

/// Joint-loss gradient checks on `count` random small configurations.
pub fn cmd_gradcheck(count: usize, seed: u64, tolerance: f64) -> Result<Vec<GradcheckLine>> {
    random_cases(count, seed)
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let report = joint_gradcheck(case)?;
            Ok(GradcheckLine {
                case: i,
                checked: report.checked,
                max_rel_err: report.max_rel_err,
                worst_param: worst_param_name(case, &report),
                passed: report.passed(tolerance),
            })
        })
        .collect()
}
