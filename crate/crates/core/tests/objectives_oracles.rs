//! Masking, corruption and loss values against counting and formula oracles.

use crossrtd::corpus::{synth_corpus, Example, SynthConfig};
use crossrtd::model::{ElectraConfig, ElectraModel, TokenBatch};
use crossrtd::objectives::{
    check_corruption, discriminator_loss_rtd, generator_loss_mlm, generator_loss_tlm, joint_loss, sample_corruption,
    select_mask_positions, Corruption, MaskedBatch, ObjectiveConfig, SampleMode,
};
use crossrtd::tensor::{Graph, Reduction, Tensor};
use crossrtd::trainer::{adam_step, AdamState, OptimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPECIALS: usize = 5;

fn sentence(n: usize) -> Vec<u32> {
    Example::mono(0, &(0..n as u32).map(|i| SPECIALS as u32 + i).collect::<Vec<_>>()).ids
}

fn position_frequencies(n: usize, draws: usize) -> Vec<f64> {
    let ids = sentence(n);
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut hits = vec![0usize; ids.len()];
    for _ in 0..draws {
        for p in select_mask_positions(&ids, 0.15, &mut rng).unwrap() {
            hits[p] += 1;
        }
    }
    hits.iter().map(|&h| h as f64 / draws as f64).collect()
}

#[test]
fn mask_positions_are_uniform() {
    // Each eligible position is picked with probability count / n, where
    // count = max(1, round(0.15 n)): 3/20 for n = 20 and 2/10 for n = 10.
    for (n, count) in [(20usize, 3usize), (10, 2)] {
        let freq = position_frequencies(n, 100_000);
        assert_eq!(freq[0], 0.0);
        assert_eq!(freq[n + 1], 0.0);
        let want = count as f64 / n as f64;
        for f in &freq[1..=n] {
            assert!((f - want).abs() < 0.01, "n={n}: {f} vs {want}");
        }
    }
}

#[test]
fn corruption_frequencies_follow_softmax() {
    // Four ordinary tokens after the specials; special logits are large
    // so any leak into the draw would be obvious.
    let logits_row = [9.0, 9.0, 9.0, 9.0, 9.0, 0.5, -1.0, 1.5, 0.0];
    let ordinary = &logits_row[SPECIALS..];
    let z: f64 = ordinary.iter().map(|v: &f64| v.exp()).sum();
    let probs: Vec<f64> = ordinary.iter().map(|v| v.exp() / z).collect();

    let rows = 1000;
    let examples: Vec<Example> = (0..rows).map(|_| Example::mono(0, &[5])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = MaskedBatch::new(&examples, 0.15, &mut rng).unwrap();
    let logits = Tensor::<f64>::from_f64(&[rows, 9], &logits_row.repeat(rows)).unwrap();
    let mut counts = [0usize; 4];
    let reps = 100;
    for _ in 0..reps {
        let c = sample_corruption(&batch, &logits, SampleMode::Sample, &mut rng).unwrap();
        for &(_, id) in &c.sampled {
            counts[id as usize - SPECIALS] += 1;
        }
    }
    let total = (rows * reps) as f64;
    for (c, p) in counts.iter().zip(&probs) {
        assert!((*c as f64 / total - p).abs() < 0.01, "{counts:?} vs {probs:?}");
    }
}

#[test]
fn corruption_contract_over_random_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = 17;
    let word = |rng: &mut ChaCha8Rng| rng.gen_range(SPECIALS as u32..vocab);
    let mut violations = Vec::new();
    for trial in 0..10_000 {
        let rows = rng.gen_range(1..=4);
        let pairs = trial % 2 == 1;
        let examples: Vec<Example> = (0..rows)
            .map(|_| {
                let e: Vec<u32> = (0..rng.gen_range(1..=7)).map(|_| word(&mut rng)).collect();
                if pairs {
                    let f: Vec<u32> = (0..rng.gen_range(1..=7)).map(|_| word(&mut rng)).collect();
                    Example::pair(1, &e, &f)
                } else {
                    Example::mono(0, &e)
                }
            })
            .collect();
        let ratio = rng.gen_range(0.05..0.6);
        let batch = MaskedBatch::new(&examples, ratio, &mut rng).unwrap();
        let m = batch.num_masked();
        // Peaked logits make sampled-equals-original common.
        let values: Vec<f64> = (0..m * vocab as usize).map(|_| rng.gen_range(-3.0..3.0) * 2.0).collect();
        let logits = Tensor::<f64>::from_f64(&[m, vocab as usize], &values).unwrap();
        let mode = if trial % 7 == 0 { SampleMode::Argmax } else { SampleMode::Sample };
        let c = sample_corruption(&batch, &logits, mode, &mut rng).unwrap();
        if let Err(e) = check_corruption(&batch, &c) {
            violations.push(format!("trial {trial}: {e}"));
        }
        // Locality against an independent count.
        let hamming = batch.original.ids.iter().zip(&c.corrupt.ids).filter(|(a, b)| a != b).count();
        if hamming > m || c.corrupt.ids.iter().any(|&id| (1..SPECIALS as u32).contains(&id) && !batch.original.ids.contains(&id)) {
            violations.push(format!("trial {trial}: locality"));
        }
    }
    assert!(violations.is_empty(), "{:?}", &violations[..violations.len().min(5)]);
}

fn toy_model(vocab: usize, seed: u64) -> ElectraModel<f64> {
    let cfg = ElectraConfig {
        hidden_size: 16,
        num_heads: 2,
        ffn_size: 32,
        max_rel_distance: 4,
        generator_layers: 1,
        discriminator_layers: 2,
        vocab_size: vocab,
        ..ElectraConfig::default()
    };
    ElectraModel::init(&cfg, seed).unwrap()
}

fn log_softmax_at(row: &[f64], t: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row[t] - m - row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[test]
fn single_masked_position_matches_log_softmax() {
    let model = toy_model(12, 1);
    let ex = Example::mono(0, &[5, 9, 7, 11]);
    let batch = MaskedBatch::from_positions(TokenBatch::from_sequences(&[&ex.ids]).unwrap(), vec![vec![3]], vec![None], vec![0]).unwrap();
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = generator_loss_mlm(&mut g, &p, &model, &batch, Reduction::Sum).unwrap();
    let logits = g.value(out.logits).data().to_vec();
    assert_eq!(logits.len(), 12);
    let want = -log_softmax_at(&logits, 7);
    assert!((g.value(out.loss).item() - want).abs() < 1e-6);
}

#[test]
fn two_masked_pair_tokens_match_manual_sum() {
    let model = toy_model(12, 2);
    let ex = Example::pair(1, &[5, 6, 7], &[8, 9]);
    // One position per segment: e's second word, f's first word.
    let b = ex.boundary.unwrap();
    let positions = vec![vec![2, b]];
    let targets = [ex.ids[2] as usize, ex.ids[b] as usize];
    let batch =
        MaskedBatch::from_positions(TokenBatch::from_sequences(&[&ex.ids]).unwrap(), positions, vec![Some(b)], vec![1]).unwrap();
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = generator_loss_tlm(&mut g, &p, &model, &batch, Reduction::Sum).unwrap();
    let logits = g.value(out.logits).data().to_vec();
    let want = -(log_softmax_at(&logits[..12], targets[0]) + log_softmax_at(&logits[12..], targets[1]));
    assert!((g.value(out.loss).item() - want).abs() < 1e-6);
}

#[test]
fn initial_losses_sit_at_uniform_baselines() {
    let corpus = synth_corpus(&SynthConfig::default(), 3).unwrap();
    let v = corpus.vocab.len();
    let cfg = ElectraConfig {
        vocab_size: v,
        ..ElectraConfig::default()
    };
    let model = ElectraModel::<f64>::init(&cfg, 5).unwrap();
    let mono: Vec<Example> = corpus.mono[0][..32].iter().map(|s| Example::mono(0, s)).collect();
    let pairs: Vec<Example> = corpus.parallel[0].pairs[..16].iter().map(|(e, f)| Example::pair(1, e, f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mono = MaskedBatch::new(&mono, 0.15, &mut rng).unwrap();
    let pair = MaskedBatch::new(&pairs, 0.15, &mut rng).unwrap();
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = joint_loss(&mut g, &p, &model, &mono, Some(&pair), &ObjectiveConfig::default(), Corruption::Sample(&mut rng)).unwrap();
    let r = out.report;
    let ln_v = (v as f64).ln();
    for gen in [r.mlm, r.tlm] {
        assert!((gen - ln_v).abs() < 0.3, "generator {gen} vs ln|V| {ln_v}");
    }
    for disc in [r.mrtd, r.trtd] {
        assert!((disc - 2f64.ln()).abs() < 0.05, "discriminator {disc}");
    }
}

#[test]
fn lambda_enters_linearly() {
    let model = toy_model(12, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mono = MaskedBatch::new(&[Example::mono(0, &[5, 6, 7, 8, 9])], 0.4, &mut rng).unwrap();
    let pair = MaskedBatch::new(&[Example::pair(1, &[5, 6], &[10, 11, 7])], 0.4, &mut rng).unwrap();
    let eval = |lambda: f64, rng: &mut ChaCha8Rng| {
        let cfg = ObjectiveConfig {
            lambda,
            ..ObjectiveConfig::default()
        };
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        joint_loss(&mut g, &p, &model, &mono, Some(&pair), &cfg, Corruption::Sample(rng)).unwrap().report
    };
    let a = eval(50.0, &mut ChaCha8Rng::seed_from_u64(2));
    let b = eval(100.0, &mut ChaCha8Rng::seed_from_u64(2));
    let z = eval(0.0, &mut ChaCha8Rng::seed_from_u64(2));
    assert!((b.total - a.total - 50.0 * (a.mrtd + a.trtd)).abs() < 1e-9);
    assert!((z.total - (z.mlm + z.tlm)).abs() < 1e-12);
}

#[test]
fn perfect_discriminator_on_clean_input_has_near_zero_loss() {
    // Drive the detection head bias far negative: every position reads
    // "original" with logit about -20.
    let mut model = toy_model(12, 4);
    let id = model.params.id("disc.head.output.bias").unwrap();
    model.params.value_mut(id).data_mut()[0] = -20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = MaskedBatch::new(&[Example::mono(0, &[5, 6, 7, 8])], 0.15, &mut rng).unwrap();
    let values = vec![0.0; batch.num_masked() * 12];
    let mut logits = Tensor::<f64>::from_f64(&[batch.num_masked(), 12], &values).unwrap();
    // One-hot generator: the sample is the original token.
    for (r, &pos) in batch.flat_positions().iter().enumerate() {
        logits.data_mut()[r * 12 + batch.original.ids[pos] as usize] = 50.0;
    }
    let c = sample_corruption(&batch, &logits, SampleMode::Argmax, &mut rng).unwrap();
    assert_eq!(c.num_replaced(), 0);
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = discriminator_loss_rtd(&mut g, &p, &model, &c, false, Reduction::Sum).unwrap();
    assert!(g.value(out.loss).item() < 1e-6);
}

#[test]
fn generator_memorizes_small_corpus() {
    let corpus = synth_corpus(&SynthConfig::default(), 9).unwrap();
    let sentences: Vec<Example> = corpus.mono[0][..100].iter().map(|s| Example::mono(0, s)).collect();
    let cfg = ElectraConfig {
        hidden_size: 32,
        num_heads: 2,
        ffn_size: 64,
        generator_layers: 2,
        discriminator_layers: 3,
        vocab_size: corpus.vocab.len(),
        ..ElectraConfig::default()
    };
    let mut model = ElectraModel::<f32>::init(&cfg, 1).unwrap();
    let optim = OptimConfig {
        lr_peak: 3e-3,
        warmup_steps: 20,
        total_steps: 500,
        ..OptimConfig::default()
    };
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut losses = Vec::new();
    for step in 1..=500 {
        let picks: Vec<Example> = (0..25).map(|_| sentences[rng.gen_range(0..100)].clone()).collect();
        let batch = MaskedBatch::new(&picks, 0.15, &mut rng).unwrap();
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, true);
        let out = generator_loss_mlm(&mut g, &p, &model, &batch, Reduction::Mean).unwrap();
        losses.push(g.value(out.loss).item() as f64);
        g.backward(out.loss).unwrap();
        let mut grads = model.params.collect_grads(&g, &p);
        let lr = crossrtd::trainer::lr_at(step, &optim).unwrap();
        adam_step(&mut model.params, &mut grads, &mut adam, &optim, lr).unwrap();
    }
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[480..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.5 * head, "initial {head:.3}, final {tail:.3}");
}
