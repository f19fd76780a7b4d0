//! Word alignment by entropic optimal transport and sentence retrieval on
//! planted vectors, then a layer sweep of an untrained model as the chance
//! baseline.
//!
//! cargo run --example alignment_eval

use crossrtd::corpus::{synth_corpus, SynthConfig};
use crossrtd::eval::{aer, layer_sweep, ot_align, retrieve_acc1, AlignmentSet, OtConfig};
use crossrtd::model::{ElectraConfig, ElectraModel, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> crossrtd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    // The target reverses the source order and adds noise.
    let f: Vec<Vec<f64>> = e.iter().rev().map(|v| v.iter().map(|x| x + rng.gen_range(-0.3..0.3)).collect()).collect();
    let r = ot_align(&e, &f, &OtConfig::default())?;
    let sure: Vec<(usize, usize)> = (0..5).map(|i| (i, 4 - i)).collect();
    println!("links {:?}", r.links);
    println!("AER {:.3}, {} iterations, marginal error {:.1e}", aer(&AlignmentSet::new(&r.links, &sure, &sure)?).aer, r.iterations, r.marginal_error);

    let targets: Vec<Vec<f64>> = (0..50).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    for noise in [0.2, 1.0, 3.0] {
        let sources: Vec<Vec<f64>> = targets.iter().map(|t| t.iter().map(|x| x + noise * rng.gen_range(-1.0..1.0)).collect()).collect();
        println!("retrieval acc@1 with noise {noise}: {:.2}", retrieve_acc1(&sources, &targets)?.accuracy);
    }

    let corpus = synth_corpus(&SynthConfig::default(), 1)?;
    let config = ElectraConfig {
        vocab_size: corpus.vocab.len(),
        ..ElectraConfig::default()
    };
    let model = ElectraModel::<f32>::init(&config, 2)?;
    println!("\nuntrained discriminator, en-{}:", corpus.languages[corpus.eval[0].target].tag);
    println!("layer  acc_fwd  acc_bwd  aer");
    for row in layer_sweep(&model, Role::Discriminator, &corpus.eval[0], &OtConfig::default())? {
        println!("{:>5}  {:>7.3}  {:>7.3}  {:.3}", row.layer, row.acc_forward, row.acc_backward, row.aer);
    }
    Ok(())
}
