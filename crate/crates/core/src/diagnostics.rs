//! Finite-difference check of the full joint loss over every parameter.

use crate::corpus::Example;
use crate::error::Result;
use crate::model::{ElectraConfig, ElectraModel};
use crate::objectives::{joint_loss, Corruption, MaskedBatch, ObjectiveConfig};
use crate::tensor::gradcheck::{central_difference, compare, GradCheckReport};
use crate::tensor::{Graph, Reduction, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Differences below this magnitude are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-4;

/// One randomized configuration for [`joint_gradcheck`].
#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub model: ElectraConfig,
    pub objective: ObjectiveConfig,
    pub seed: u64,
    pub translation: bool,
}

/// `count` small configurations varying depth, width, heads, clipping
/// radius, reduction and the translation terms.
pub fn random_cases(count: usize, seed: u64) -> Vec<GradcheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let heads = [1, 2][rng.gen_range(0..2)];
            let head_dim = [2, 4][rng.gen_range(0..2)];
            let generator_layers = rng.gen_range(1..=2);
            GradcheckCase {
                model: ElectraConfig {
                    hidden_size: heads * head_dim,
                    num_heads: heads,
                    ffn_size: rng.gen_range(4..=10),
                    max_rel_distance: rng.gen_range(1..=4),
                    init_range: 0.5,
                    generator_layers,
                    discriminator_layers: generator_layers + 1,
                    share_embeddings: i % 3 != 2,
                    vocab_size: 13,
                },
                objective: ObjectiveConfig {
                    mask_ratio: 0.3,
                    reduction: if i % 2 == 0 { Reduction::Mean } else { Reduction::Sum },
                    ..ObjectiveConfig::default()
                },
                seed: rng.gen(),
                translation: i % 4 != 3,
            }
        })
        .collect()
}

fn random_words<R: Rng>(rng: &mut R, vocab: usize, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(5..vocab as u32)).collect()
}

/// Analytic gradients of the joint loss against central differences.
///
/// Corruption is sampled once from the unperturbed generator and then held
/// fixed, so the loss is a smooth function of every parameter.
pub fn joint_gradcheck(case: &GradcheckCase) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let model = ElectraModel::<f64>::init(&case.model, rng.gen())?;
    let v = case.model.vocab_size;
    let mono_ex: Vec<Example> = (0..2)
        .map(|j| {
            let len = rng.gen_range(2..=5);
            Example::mono(j, &random_words(&mut rng, v, len))
        })
        .collect();
    let mono = MaskedBatch::new(&mono_ex, case.objective.mask_ratio, &mut rng)?;
    let pair = if case.translation {
        let (le, lf) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let ex = Example::pair(1, &random_words(&mut rng, v, le), &random_words(&mut rng, v, lf));
        Some(MaskedBatch::new(&[ex], case.objective.mask_ratio, &mut rng)?)
    } else {
        None
    };

    let mut g = Graph::new();
    let bound = model.params.bind(&mut g, true);
    let out = joint_loss(
        &mut g,
        &bound,
        &model,
        &mono,
        pair.as_ref(),
        &case.objective,
        Corruption::Sample(&mut rng),
    )?;
    g.backward(out.total)?;
    let analytic: Vec<Vec<f64>> = model.params.collect_grads(&g, &bound);
    let (mono_c, pair_c) = (out.mono_corrupt, out.pair_corrupt);

    let inputs: Vec<Tensor<f64>> = model.params.iter().map(|(_, p)| p.value.clone()).collect();
    let mut probe = model.clone();
    let numeric = central_difference(
        |values| {
            for (p, v) in probe.params.values_mut().zip(values) {
                p.value = v.clone();
            }
            let mut g = Graph::new();
            let bound = probe.params.bind(&mut g, false);
            let out = joint_loss::<f64, ChaCha8Rng>(
                &mut g,
                &bound,
                &probe,
                &mono,
                pair.as_ref(),
                &case.objective,
                Corruption::Fixed(&mono_c, pair_c.as_ref()),
            )
            .expect("loss evaluation");
            g.value(out.total).item()
        },
        &inputs,
        GRADCHECK_STEP,
    );
    Ok(compare(&analytic, &numeric, GRADCHECK_FLOOR))
}

/// Name of the parameter holding the worst entry of a report.
pub fn worst_param_name(case: &GradcheckCase, report: &GradCheckReport) -> Option<String> {
    let model = ElectraModel::<f64>::new(&case.model).ok()?;
    let (t, _, _, _) = report.worst?;
    let name = model.params.iter().nth(t).map(|(_, p)| p.name.clone());
    name
}
