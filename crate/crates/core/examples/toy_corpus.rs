//! Synthesizes the three toy languages, shows a parallel sentence in each
//! with its gold alignment, the smoothed language sampling probabilities
//! and how token-budget batches are packed.
//!
//! cargo run --example toy_corpus

use crossrtd::corpus::batching::padding_waste;
use crossrtd::corpus::{dynamic_batch, format_alignment, language_sampling_probs, synth_corpus, CorpusStats, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossrtd::Result<()> {
    let corpus = synth_corpus(&SynthConfig::default(), 1)?;
    println!("vocabulary: {} tokens", corpus.vocab.len());
    for (lang, sents) in corpus.languages.iter().zip(&corpus.mono) {
        println!("{} ({}): {} sentences, e.g. {}", lang.tag, lang.kind.name(), sents.len(), corpus.vocab.decode(&sents[0])?);
    }
    for set in &corpus.eval {
        let (e, f) = &set.pairs[0];
        println!(
            "\n{}: {}\n{}: {}\ngold: {}",
            corpus.languages[set.source].tag,
            corpus.vocab.decode(e)?,
            corpus.languages[set.target].tag,
            corpus.vocab.decode(f)?,
            format_alignment(&set.gold[0])
        );
    }

    let sizes: Vec<usize> = corpus.mono.iter().map(Vec::len).collect();
    for alpha in [1.0, 0.7, 0.3] {
        let p = language_sampling_probs(&CorpusStats::new(sizes.iter().copied(), alpha))?;
        println!("\nalpha {alpha}: sizes {sizes:?} -> p {:?}", p.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
    }

    let plan = dynamic_batch(corpus.mono_examples().concat(), 256, &mut ChaCha8Rng::seed_from_u64(2));
    let worst = plan.batches.iter().map(|b| padding_waste(b)).fold(0.0, f64::max);
    println!("\n{} batches under a 256-token budget, worst padding waste {:.1}%", plan.batches.len(), 100.0 * worst);
    Ok(())
}
