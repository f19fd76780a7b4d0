//! Masks a monolingual batch and a translation-pair batch, lets an untrained
//! generator fill the masks, and prints what the discriminator sees.
//!
//! cargo run --example corruption

use crossrtd::corpus::{synth_corpus, Example, SynthConfig};
use crossrtd::model::{ElectraConfig, ElectraModel};
use crossrtd::objectives::{check_corruption, dump_batch, generator_loss, sample_corruption, MaskedBatch, SampleMode};
use crossrtd::tensor::{Graph, Reduction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossrtd::Result<()> {
    let corpus = synth_corpus(&SynthConfig::default(), 1)?;
    let config = ElectraConfig {
        vocab_size: corpus.vocab.len(),
        ..ElectraConfig::default()
    };
    let model = ElectraModel::<f32>::init(&config, 2)?;
    let tags: Vec<String> = corpus.languages.iter().map(|l| l.tag.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mono: Vec<Example> = corpus.mono[1][..3].iter().map(|s| Example::mono(1, s)).collect();
    let pairs: Vec<Example> = corpus.parallel[0].pairs[..2].iter().map(|(e, f)| Example::pair(1, e, f)).collect();
    for examples in [mono, pairs] {
        let masked = MaskedBatch::new(&examples, 0.15, &mut rng)?;
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let out = generator_loss(&mut g, &p, &model, &masked, Reduction::Mean)?;
        let corrupt = sample_corruption(&masked, g.value(out.logits), SampleMode::Sample, &mut rng)?;
        check_corruption(&masked, &corrupt).expect("corruption contract");
        println!("generator loss {:.3}", g.value(out.loss).item());
        println!("{}", dump_batch(&masked, &corrupt, &corpus.vocab, &tags)?);
    }
    Ok(())
}
