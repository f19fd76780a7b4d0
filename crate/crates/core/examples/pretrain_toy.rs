//! A short joint pretraining run of a small generator/discriminator pair,
//! logging the four sub-losses, then held-out detection accuracy.
//!
//! cargo run --example pretrain_toy [steps]

use crossrtd::corpus::{synth_corpus, Example, SynthConfig};
use crossrtd::model::ElectraConfig;
use crossrtd::trainer::{TrainConfig, Trainer};

fn main() -> crossrtd::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let corpus = synth_corpus(&SynthConfig::default(), 1)?;
    let model = ElectraConfig {
        hidden_size: 32,
        ffn_size: 128,
        discriminator_layers: 3,
        ..ElectraConfig::default()
    };
    let mut train = TrainConfig {
        token_budget: 256,
        ..TrainConfig::default()
    };
    train.optim.total_steps = steps;
    train.optim.warmup_steps = steps / 10;
    train.optim.lr_peak = 2e-3;
    let mut trainer = Trainer::new(&model, &corpus, train, 1)?;
    trainer.run(None, |_, r| {
        if r.step % 50 == 0 || r.step == 1 {
            println!(
                "step {:>4}  mlm {:.3}  tlm {:.3}  mrtd {:.4}  trtd {:.4}  acc {:.3}  lr {:.2e}",
                r.step, r.loss_mlm, r.loss_tlm, r.loss_mrtd, r.loss_trtd, r.disc_acc, r.lr
            );
        }
        Ok(())
    })?;
    let held_out: Vec<Example> = corpus.eval[0].pairs.iter().map(|(e, f)| Example::pair(corpus.eval[0].target, e, f)).collect();
    println!("held-out detection accuracy {:.3}", trainer.detection_accuracy(&held_out, 0)?);
    Ok(())
}
