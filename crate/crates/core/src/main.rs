use clap::{Parser, Subcommand};
use crossrtd::commands::{cmd_eval, cmd_gradcheck, cmd_pretrain, cmd_synth, PretrainOptions};
use crossrtd::config::RunConfig;
use crossrtd::Result;
use std::path::PathBuf;
use std::process::ExitCode;

/// Cross-lingual replaced-token-detection pretraining on toy languages.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus, vocabulary and held-out alignments.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train generator and discriminator jointly.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        /// Drop the translation-pair losses (TLM and TRTD).
        #[arg(long)]
        no_trtd: bool,
        /// Resume from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop early after this many steps.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Retrieval, alignment and layer sweeps for a checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference check of the joint loss on random small models.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { config } => {
            let s = cmd_synth(&RunConfig::load(&config)?)?;
            println!(
                "wrote {} monolingual and {} parallel files ({} tokens in vocabulary) to {}",
                s.mono_files,
                s.parallel_files,
                s.vocab_size,
                s.dir.display()
            );
        }
        Command::Pretrain {
            config,
            no_trtd,
            resume,
            max_steps,
        } => {
            let options = PretrainOptions {
                no_trtd,
                resume,
                max_steps,
            };
            let s = cmd_pretrain(&RunConfig::load(&config)?, &options)?;
            println!("trained to step {}; checkpoint {}", s.steps, s.final_checkpoint.display());
            println!("metrics {}", s.metrics.display());
        }
        Command::Eval { config, checkpoint } => {
            let r = cmd_eval(&RunConfig::load(&config)?, &checkpoint)?;
            println!("pair\tlayer\tacc_fwd\tacc_bwd\taer");
            for p in &r.pairs {
                for l in &p.layers {
                    println!(
                        "{}-{}\t{}\t{:.3}\t{:.3}\t{:.3}",
                        p.source, p.target, l.layer, l.acc_forward, l.acc_backward, l.aer
                    );
                }
                println!(
                    "{}-{} best layer {}: {:.3} / {:.3}",
                    p.source, p.target, p.best_layer, p.best_acc_forward, p.best_acc_backward
                );
            }
            println!("held-out detection accuracy {:.4}", r.detection_accuracy);
        }
        Command::Gradcheck {
            configs,
            seed,
            tolerance,
        } => {
            let lines = cmd_gradcheck(configs, seed, tolerance)?;
            for l in &lines {
                println!(
                    "case {}: {} entries, max rel err {:.3e} ({}) {}",
                    l.case,
                    l.checked,
                    l.max_rel_err,
                    l.worst_param.as_deref().unwrap_or("-"),
                    if l.passed { "ok" } else { "FAIL" }
                );
            }
            return Ok(lines.iter().all(|l| l.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
