//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Criteria 8-10 train two 2000-step toy runs from `configs/toy.toml`.
//! The process exits 0 regardless of outcome unless `ACCEPTANCE_STRICT`
//! is set, in which case any FAIL exits 1. `ACCEPTANCE_QUICK` skips the
//! training runs and reports criteria 8-10 as SKIP.

use crossrtd::commands::{cmd_eval, cmd_pretrain, EvalReport, PretrainOptions};
use crossrtd::config::RunConfig;
use crossrtd::corpus::sampling::sample_index;
use crossrtd::corpus::{language_sampling_probs, synth_corpus, CorpusStats, Example, SynthConfig};
use crossrtd::diagnostics::{joint_gradcheck, random_cases, worst_param_name};
use crossrtd::eval::ot::{cosine_cost, exact_assignment, sinkhorn};
use crossrtd::eval::{aer, best_layer, ot_align, AlignmentSet, LayerMetrics, OtConfig};
use crossrtd::model::bias::GatedBiasParams;
use crossrtd::model::{ElectraConfig, ElectraModel};
use crossrtd::objectives::{check_corruption, joint_loss, sample_corruption, Corruption, MaskedBatch, ObjectiveConfig, SampleMode};
use crossrtd::tensor::{Graph, Tensor};
use crossrtd::trainer::{read_metrics, MetricsRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

type Verdict = Result<(bool, String), String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradient_correctness() -> Verdict {
    let cases = random_cases(6, 2024);
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    let mut gated = 0;
    for case in &cases {
        let model = ElectraModel::<f64>::new(&case.model).map_err(fail)?;
        gated += model.params.iter().filter(|(_, p)| p.name.contains("gate_") || p.name.ends_with("rel_bias")).count();
        let report = joint_gradcheck(case).map_err(fail)?;
        if report.max_rel_err >= worst {
            worst = report.max_rel_err;
            where_ = worst_param_name(case, &report).unwrap_or_default();
        }
    }
    Ok((
        worst < 1e-4 && gated > 0,
        format!("{} configs, {gated} gated-bias tensors, max rel err {worst:.2e} at {where_}", cases.len()),
    ))
}

fn gate_algebra() -> Verdict {
    let with = |d: f64, u: f64, v: f64, w: f64| {
        let mut d_table = vec![0.0; 7];
        d_table[4] = d;
        GatedBiasParams { d_table, u: vec![u, 0.0], v: vec![v, 0.0], w }
    };
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let d = rng.gen_range(-4.0..4.0);
        let w = rng.gen_range(-3.0..3.0);
        // Gate logits of +-1e4 saturate the sigmoids exactly in f64.
        let open = with(d, 1.0, 0.0, w).bias(&[1e4, 0.0], 1);
        let closed = with(d, 1.0, 1.0, w).bias(&[-1e4, 0.0], 1);
        worst = worst.max((open - 2.0 * d).abs()).max((closed - d).abs());
    }
    // Mid gates: q is orthogonal to u and v, so both logits are zero; w = 1
    // and the offset 9 clips to the table edge.
    let mid = GatedBiasParams {
        d_table: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6],
        u: vec![1.0, 1.0],
        v: vec![2.0, 2.0],
        w: 1.0,
    };
    let (g_up, g_reset) = (0.5, 0.5);
    let direct = 0.6 + g_up * 0.6 + (1.0 - g_up) * (mid.w * g_reset * 0.6);
    let got = mid.bias(&[0.5, -0.5], 9);
    let mid_err = (got - direct).abs().max((direct - 1.75 * 0.6).abs());
    // The graph's factored form with the same coefficients.
    let mut g = Graph::<f64>::new();
    let table = g.constant(Tensor::from_f64(&[1, 3], &[0.3, -0.7, 1.1]).unwrap());
    let coeff = g.constant(Tensor::from_f64(&[3, 1], &[2.0, 1.0, 1.75]).unwrap());
    let r = g.rel_pos_bias(table, coeff, 1, 3).map_err(fail)?;
    let data = g.value(r).data();
    let table_at = |i: usize, j: usize| [0.3, -0.7, 1.1][((i as isize - j as isize).clamp(-1, 1) + 1) as usize];
    let mut graph_err: f64 = 0.0;
    for (i, c) in [2.0, 1.0, 1.75].iter().enumerate() {
        for j in 0..3 {
            graph_err = graph_err.max((data[i * 3 + j] - c * table_at(i, j)).abs());
        }
    }
    Ok((
        worst == 0.0 && mid_err < 1e-15 && graph_err < 1e-15,
        format!("forced-gate max err {worst:.1e}, mid-gate err {mid_err:.1e}, graph err {graph_err:.1e}"),
    ))
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn initialization() -> Verdict {
    let desk = ElectraModel::<f64>::init(&ElectraConfig { vocab_size: 200, ..ElectraConfig::default() }, 3).map_err(fail)?;
    let wide = ElectraConfig {
        hidden_size: 128,
        num_heads: 4,
        ffn_size: 128,
        max_rel_distance: 8,
        generator_layers: 1,
        discriminator_layers: 3,
        vocab_size: 50,
        ..ElectraConfig::default()
    };
    let wide = ElectraModel::<f64>::init(&wide, 4).map_err(fail)?;
    let mut out_of_range = Vec::new();
    for model in [&desk, &wide] {
        for (_, p) in model.params.iter() {
            // Norm gains start at one; everything else is sampled or zero.
            if !p.name.ends_with(".gain") && p.value.data().iter().any(|v| v.abs() > 0.02) {
                out_of_range.push(p.name.clone());
            }
        }
    }
    let mut worst: f64 = 0.0;
    for l in 1..=3 {
        let reference = std_dev(wide.params.by_name(&format!("disc.block{l}.attn.query.weight")).unwrap().value.data());
        for m in ["attn.out", "ffn.out"] {
            let x = wide.params.by_name(&format!("disc.block{l}.{m}.weight")).unwrap().value.data();
            if x.len() < 10_000 {
                return Err(format!("{m} has only {} entries", x.len()));
            }
            let ratio = std_dev(x) / reference * (2.0 * l as f64).sqrt();
            worst = worst.max((ratio - 1.0).abs());
        }
    }
    Ok((
        out_of_range.is_empty() && worst < 0.05,
        format!("out of range: {out_of_range:?}; worst std-ratio deviation {:.2}%", 100.0 * worst),
    ))
}

fn language_sampling() -> Verdict {
    let probs = language_sampling_probs(&CorpusStats::new([100, 10], 0.7)).map_err(fail)?;
    let want = 100f64.powf(0.7) / (100f64.powf(0.7) + 10f64.powf(0.7));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| sample_index(&probs, &mut rng) == 0).count();
    let freq = hits as f64 / draws as f64;
    Ok((
        (freq - want).abs() < 0.01 && (probs[0] - 0.8337).abs() < 1e-4,
        format!("p1 {:.4}, empirical {freq:.4} over {draws} draws", probs[0]),
    ))
}

fn corruption_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let vocab = 23usize;
    let mut violations = Vec::new();
    for trial in 0..10_000 {
        let word = |rng: &mut ChaCha8Rng| rng.gen_range(5..vocab as u32);
        let examples: Vec<Example> = (0..rng.gen_range(1..=5))
            .map(|_| {
                let e: Vec<u32> = (0..rng.gen_range(1..=9)).map(|_| word(&mut rng)).collect();
                if trial % 2 == 1 {
                    let f: Vec<u32> = (0..rng.gen_range(1..=9)).map(|_| word(&mut rng)).collect();
                    Example::pair(1, &e, &f)
                } else {
                    Example::mono(0, &e)
                }
            })
            .collect();
        let batch = MaskedBatch::new(&examples, rng.gen_range(0.05..0.6), &mut rng).map_err(fail)?;
        let m = batch.num_masked();
        let values: Vec<f64> = (0..m * vocab).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let logits = Tensor::<f64>::from_f64(&[m, vocab], &values).map_err(fail)?;
        let mode = if trial % 5 == 0 { SampleMode::Argmax } else { SampleMode::Sample };
        let c = sample_corruption(&batch, &logits, mode, &mut rng).map_err(fail)?;
        if let Err(e) = check_corruption(&batch, &c) {
            violations.push(format!("trial {trial}: {e}"));
        }
    }
    Ok((violations.is_empty(), format!("10000 batches, {} violations {:?}", violations.len(), violations.first())))
}

fn loss_baselines() -> Verdict {
    let corpus = synth_corpus(&SynthConfig::default(), 9).map_err(fail)?;
    let v = corpus.vocab.len();
    let model = ElectraModel::<f64>::init(&ElectraConfig { vocab_size: v, ..ElectraConfig::default() }, 10).map_err(fail)?;
    let mono: Vec<Example> = corpus.mono[0][..48].iter().map(|s| Example::mono(0, s)).collect();
    let pairs: Vec<Example> = corpus.parallel[0].pairs[..24].iter().map(|(e, f)| Example::pair(1, e, f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mono = MaskedBatch::new(&mono, 0.15, &mut rng).map_err(fail)?;
    let pair = MaskedBatch::new(&pairs, 0.15, &mut rng).map_err(fail)?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let out = joint_loss(&mut g, &p, &model, &mono, Some(&pair), &ObjectiveConfig::default(), Corruption::Sample(&mut rng))
        .map_err(fail)?;
    let r = out.report;
    let (ln_v, ln2) = ((v as f64).ln(), 2f64.ln());
    let pass = [r.mlm, r.tlm].iter().all(|x| (x - ln_v).abs() <= 0.3) && [r.mrtd, r.trtd].iter().all(|x| (x - ln2).abs() <= 0.05);
    Ok((
        pass,
        format!(
            "mlm {:.3} tlm {:.3} vs ln|V| {ln_v:.3}; mrtd {:.4} trtd {:.4} vs ln 2 {ln2:.4}",
            r.mlm, r.tlm, r.mrtd, r.trtd
        ),
    ))
}

fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn random_vectors(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn alignment_oracle() -> Verdict {
    let s = [(1, 1), (2, 2)];
    let p = [(1, 1), (2, 2), (3, 3)];
    let fixtures = [
        aer(&AlignmentSet::new(&s, &s, &s).map_err(fail)?).aer,
        aer(&AlignmentSet::new(&[(1, 1), (3, 3)], &s, &p).map_err(fail)?).aer,
        aer(&AlignmentSet::new(&[(4, 0), (0, 4)], &s, &p).map_err(fail)?).aer,
    ];
    let fixtures_ok = fixtures == [0.0, 0.25, 1.0];

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut marginal: f64 = 0.0;
    for _ in 0..50 {
        let (n, m) = (rng.gen_range(2..14), rng.gen_range(2..14));
        let cost = cosine_cost(&random_vectors(n, 8, &mut rng), &random_vectors(m, 8, &mut rng));
        let (plan, _, _, _) = sinkhorn(&cost, &OtConfig::default()).map_err(fail)?;
        for row in &plan {
            marginal = marginal.max((row.iter().sum::<f64>() - 1.0 / n as f64).abs());
        }
        for j in 0..m {
            marginal = marginal.max((plan.iter().map(|r| r[j]).sum::<f64>() - 1.0 / m as f64).abs());
        }
    }

    // 4x4 instances: target states are a shuffled noisy copy of the source.
    let (mut checked, mut mismatched) = (0, 0);
    let config = OtConfig { epsilon: 0.05, iterations: 2000, ..OtConfig::default() };
    while checked < 100 {
        let e = random_vectors(4, 6, &mut rng);
        let mut order: Vec<usize> = (0..4).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let f: Vec<Vec<f64>> = order.iter().map(|&k| e[k].iter().map(|x| x + rng.gen_range(-0.2..0.2)).collect()).collect();
        let cost = cosine_cost(&e, &f);
        let mut plans: Vec<(f64, Vec<usize>)> = all_perms(4)
            .into_iter()
            .map(|p| (p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum(), p))
            .collect();
        plans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if plans[1].0 - plans[0].0 < 0.3 {
            continue;
        }
        checked += 1;
        let mut links = ot_align(&e, &f, &config).map_err(fail)?.links;
        links.sort_unstable();
        let want: Vec<(usize, usize)> = plans[0].1.iter().enumerate().map(|(i, &j)| (i, j)).collect();
        if links != want || exact_assignment(&cost) != plans[0].1 {
            mismatched += 1;
        }
    }
    Ok((
        fixtures_ok && marginal < 1e-4 && mismatched == 0,
        format!("fixtures {fixtures:?}; max marginal err {marginal:.1e}; 4x4 mismatches {mismatched}/{checked}"),
    ))
}

struct Run {
    report: EvalReport,
    metrics: Vec<MetricsRow>,
    seconds: f64,
}

fn train_and_eval(base: &RunConfig, root: &Path, no_trtd: bool) -> Result<Run, String> {
    let mut config = base.clone();
    config.output_dir = root.join(if no_trtd { "no-trtd" } else { "full" });
    config.data.corpus_dir = Some(root.join("corpus"));
    let start = Instant::now();
    let summary = cmd_pretrain(&config, &PretrainOptions { no_trtd, ..PretrainOptions::default() }).map_err(fail)?;
    let report = cmd_eval(&config, &summary.final_checkpoint).map_err(fail)?;
    let metrics = read_metrics(&summary.metrics).map_err(fail)?;
    Ok(Run { report, metrics, seconds: start.elapsed().as_secs_f64() })
}

fn pv_layers(run: &Run) -> Result<&[LayerMetrics], String> {
    run.report
        .pairs
        .iter()
        .find(|p| p.target_kind == "permuted-vocab")
        .map(|p| p.layers.as_slice())
        .ok_or_else(|| "no permuted-vocab held-out pair".to_string())
}

fn best_mean_acc(layers: &[LayerMetrics]) -> f64 {
    best_layer(layers).map(LayerMetrics::mean_accuracy).unwrap_or(0.0)
}

fn directional(full: &Run, ablated: &Run) -> Verdict {
    let (a, b) = (best_mean_acc(pv_layers(full)?), best_mean_acc(pv_layers(ablated)?));
    let seconds = full.seconds + ablated.seconds;
    Ok((
        a - b >= 0.10 && a >= 0.80 && seconds < 900.0,
        format!("pv acc@1 full {a:.3}, without translation terms {b:.3}; {seconds:.0}s for both runs"),
    ))
}

fn layer_shape(full: &Run) -> Verdict {
    let layers = pv_layers(full)?;
    let top = layers.len() - 1;
    let best = best_layer(layers).map(|r| r.layer).unwrap_or(0);
    let curve: Vec<String> = layers.iter().map(|r| format!("{:.3}", r.mean_accuracy())).collect();
    Ok((
        best > 0 && best < top && 2 * best > top,
        format!("best layer {best} of 0..={top}; curve [{}]", curve.join(", ")),
    ))
}

fn window_means(rows: &[MetricsRow], f: impl Fn(&MetricsRow) -> f64) -> (f64, f64) {
    let w = 100.min(rows.len());
    let mean = |r: &[MetricsRow]| r.iter().map(&f).sum::<f64>() / r.len().max(1) as f64;
    (mean(&rows[..w]), mean(&rows[rows.len() - w..]))
}

fn training_health(full: &Run) -> Verdict {
    let (g0, g1) = window_means(&full.metrics, |r| r.loss_mlm + r.loss_tlm);
    let (d0, d1) = window_means(&full.metrics, |r| r.loss_mrtd + r.loss_trtd);
    let acc = full.report.detection_accuracy;
    Ok((
        acc > 0.90 && g1 < g0 && d1 < d0,
        format!("held-out detection {acc:.4}; generator {g0:.3} -> {g1:.3}; discriminator {d0:.4} -> {d1:.4}"),
    ))
}

fn report(id: usize, name: &str, verdict: Verdict, seconds: f64) -> bool {
    let (pass, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!("[{}] {id:>2}. {name}: {detail} ({seconds:.1}s)", if pass { "PASS" } else { "FAIL" });
    pass
}

fn timed(f: impl FnOnce() -> Verdict) -> (Verdict, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn main() {
    let unit: [(&str, fn() -> Verdict); 7] = [
        ("gradient correctness", gradient_correctness),
        ("gate algebra", gate_algebra),
        ("initialization", initialization),
        ("language sampling", language_sampling),
        ("corruption contract", corruption_contract),
        ("loss baselines at init", loss_baselines),
        ("AER and transport oracles", alignment_oracle),
    ];
    let mut passed = Vec::new();
    for (i, (name, f)) in unit.iter().enumerate() {
        let (v, s) = timed(f);
        passed.push(report(i + 1, name, v, s));
    }

    if std::env::var_os("ACCEPTANCE_QUICK").is_some() {
        for id in 8..=10 {
            println!("[SKIP] {id:>2}. needs the training runs");
        }
        let n = passed.iter().filter(|&&p| p).count();
        println!("acceptance: {n}/{} criteria pass, 3 skipped", passed.len());
        return;
    }
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy.toml");
    let runs = RunConfig::load(&config_path).map_err(fail).and_then(|base| {
        let root = tempfile::tempdir().map_err(fail)?;
        let full = train_and_eval(&base, root.path(), false)?;
        let ablated = train_and_eval(&base, root.path(), true)?;
        Ok((full, ablated))
    });
    let e2e = [
        ("translation terms improve retrieval", 8usize),
        ("retrieval peaks in an upper interior layer", 9),
        ("training health", 10),
    ];
    for (name, id) in e2e {
        let v = match &runs {
            Ok((full, ablated)) => match id {
                8 => directional(full, ablated),
                9 => layer_shape(full),
                _ => training_health(full),
            },
            Err(e) => Err(e.clone()),
        };
        passed.push(report(id, name, v, 0.0));
    }
    let n = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n}/{} criteria pass", passed.len());
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() && n < passed.len() {
        std::process::exit(1);
    }
}
