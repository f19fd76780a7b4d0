//! Masking, corruption and the four training losses.
//!
//! The generator is trained with masked-token prediction on monolingual
//! (MLM) and concatenated translation (TLM) inputs. Its samples fill the
//! masked positions, and the discriminator learns to tell replaced tokens
//! from originals on both input kinds (MRTD, TRTD).

pub mod masking;

pub use masking::{
    check_corruption, dump_batch, sample_corruption, select_mask_positions, select_pair_mask_positions, CorruptedBatch,
    MaskedBatch, SampleMode,
};

use crate::error::{Error, Result};
use crate::model::{BoundParams, ElectraModel};
use crate::tensor::{Float, Graph, NodeId, Reduction};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Loss settings shared by training and diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    /// Weight of both detection losses.
    pub lambda: f64,
    pub mask_ratio: f64,
    pub reduction: Reduction,
    pub sample_mode: SampleMode,
    /// Count special positions in the detection loss as well.
    pub detect_special: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 50.0,
            mask_ratio: 0.15,
            reduction: Reduction::Mean,
            sample_mode: SampleMode::Sample,
            detect_special: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!("mask_ratio must lie in (0, 1), got {}", self.mask_ratio)));
        }
        Ok(())
    }
}

/// Generator loss node and the logits at the masked positions.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorOutput {
    pub loss: NodeId,
    /// `[num_masked, V]`, rows in [`MaskedBatch::flat_positions`] order.
    pub logits: NodeId,
}

/// Masked-token loss on any masked batch.
pub fn generator_loss<T: Float>(
    g: &mut Graph<T>,
    p: &BoundParams,
    model: &ElectraModel<T>,
    batch: &MaskedBatch,
    reduction: Reduction,
) -> Result<GeneratorOutput> {
    let input = batch.masked_tokens();
    let out = model.generator.forward(g, p, &input)?;
    let logits = model.generator_head.logits(g, p, out.top, &batch.flat_positions())?;
    let loss = g.softmax_cross_entropy(logits, &batch.targets(), None, reduction)?;
    Ok(GeneratorOutput { loss, logits })
}

/// Masked-token loss on monolingual inputs.
pub fn generator_loss_mlm<T: Float>(
    g: &mut Graph<T>,
    p: &BoundParams,
    model: &ElectraModel<T>,
    batch: &MaskedBatch,
    reduction: Reduction,
) -> Result<GeneratorOutput> {
    if batch.is_pair() {
        return Err(Error::Input("monolingual loss given a pair batch".into()));
    }
    generator_loss(g, p, model, batch, reduction)
}

/// Masked-token loss on concatenated pairs; masks cover both segments.
pub fn generator_loss_tlm<T: Float>(
    g: &mut Graph<T>,
    p: &BoundParams,
    model: &ElectraModel<T>,
    batch: &MaskedBatch,
    reduction: Reduction,
) -> Result<GeneratorOutput> {
    if let Some(r) = batch.boundaries.iter().position(Option::is_none) {
        return Err(Error::Input(format!("pair row {r} has no segment boundary")));
    }
    generator_loss(g, p, model, batch, reduction)
}

/// Discriminator loss node plus its per-token logits `[B*n]`.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorOutput {
    pub loss: NodeId,
    pub logits: NodeId,
}

/// Replaced-token detection over every non-pad position (non-special too
/// unless `include_special`).
pub fn discriminator_loss_rtd<T: Float>(
    g: &mut Graph<T>,
    p: &BoundParams,
    model: &ElectraModel<T>,
    batch: &CorruptedBatch,
    include_special: bool,
    reduction: Reduction,
) -> Result<DiscriminatorOutput> {
    let out = model.discriminator.forward(g, p, &batch.corrupt)?;
    let logits = model.discriminator_head.logits(g, p, out.top)?;
    let include = batch.loss_mask(include_special);
    let loss = g.bce_with_logits(logits, &batch.labels, Some(&include), reduction)?;
    Ok(DiscriminatorOutput { loss, logits })
}

/// Correct and total counts of threshold-0.5 detection over the loss mask.
pub fn detection_counts(logits: &[impl Float], batch: &CorruptedBatch, include_special: bool) -> (usize, usize) {
    let mask = batch.loss_mask(include_special);
    let mut correct = 0;
    let mut total = 0;
    for ((x, &label), &m) in logits.iter().zip(&batch.labels).zip(&mask) {
        if m {
            total += 1;
            correct += usize::from((x.as_f64() > 0.0) == label);
        }
    }
    (correct, total)
}

/// Individual terms of one joint-loss evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mlm: f64,
    pub tlm: f64,
    pub mrtd: f64,
    pub trtd: f64,
    pub total: f64,
    pub lambda: f64,
    pub disc_correct: usize,
    pub disc_total: usize,
}

impl LossReport {
    pub fn generator(&self) -> f64 {
        self.mlm + self.tlm
    }

    pub fn discriminator(&self) -> f64 {
        self.mrtd + self.trtd
    }

    pub fn disc_accuracy(&self) -> f64 {
        if self.disc_total == 0 {
            0.0
        } else {
            self.disc_correct as f64 / self.disc_total as f64
        }
    }
}

/// Where the discriminator inputs come from.
pub enum Corruption<'a, R: Rng> {
    /// Sample from the generator of this very evaluation.
    Sample(&'a mut R),
    /// Reuse earlier corruptions (mono, optional pair). Used by gradient
    /// checks so discrete sampling does not move under perturbation.
    Fixed(&'a CorruptedBatch, Option<&'a CorruptedBatch>),
}

/// Result of [`joint_loss`].
#[derive(Clone, Debug)]
pub struct JointOutput {
    pub total: NodeId,
    pub report: LossReport,
    pub mono_corrupt: CorruptedBatch,
    pub pair_corrupt: Option<CorruptedBatch>,
}

/// `L_MLM + L_TLM + lambda * (L_MRTD + L_TRTD)`.
///
/// Without a pair batch the translation terms are absent (the ablated
/// objective).
pub fn joint_loss<T: Float, R: Rng>(
    g: &mut Graph<T>,
    p: &BoundParams,
    model: &ElectraModel<T>,
    mono: &MaskedBatch,
    pair: Option<&MaskedBatch>,
    config: &ObjectiveConfig,
    corruption: Corruption<'_, R>,
) -> Result<JointOutput> {
    config.validate()?;
    let red = config.reduction;
    let gen_mono = generator_loss_mlm(g, p, model, mono, red)?;
    let gen_pair = pair.map(|b| generator_loss_tlm(g, p, model, b, red)).transpose()?;

    let (mono_corrupt, pair_corrupt) = match corruption {
        Corruption::Sample(rng) => {
            let m = sample_corruption(mono, g.value(gen_mono.logits), config.sample_mode, rng)?;
            let pc = match (pair, gen_pair) {
                (Some(b), Some(out)) => Some(sample_corruption(b, g.value(out.logits), config.sample_mode, rng)?),
                _ => None,
            };
            (m, pc)
        }
        Corruption::Fixed(m, pc) => {
            if pair.is_some() != pc.is_some() {
                return Err(Error::Input("fixed corruption does not match the pair batch".into()));
            }
            (m.clone(), pc.cloned())
        }
    };

    let disc_mono = discriminator_loss_rtd(g, p, model, &mono_corrupt, config.detect_special, red)?;
    let disc_pair = pair_corrupt
        .as_ref()
        .map(|c| discriminator_loss_rtd(g, p, model, c, config.detect_special, red))
        .transpose()?;

    let mut report = LossReport {
        lambda: config.lambda,
        mlm: g.value(gen_mono.loss).item().as_f64(),
        mrtd: g.value(disc_mono.loss).item().as_f64(),
        ..LossReport::default()
    };
    let (c, t) = detection_counts(g.value(disc_mono.logits).data(), &mono_corrupt, config.detect_special);
    report.disc_correct += c;
    report.disc_total += t;

    let mut gen_total = gen_mono.loss;
    let mut disc_total = disc_mono.loss;
    if let (Some(gp), Some(dp), Some(pc)) = (gen_pair, disc_pair, pair_corrupt.as_ref()) {
        report.tlm = g.value(gp.loss).item().as_f64();
        report.trtd = g.value(dp.loss).item().as_f64();
        let (c, t) = detection_counts(g.value(dp.logits).data(), pc, config.detect_special);
        report.disc_correct += c;
        report.disc_total += t;
        gen_total = g.add(gen_total, gp.loss)?;
        disc_total = g.add(disc_total, dp.loss)?;
    }
    let weighted = g.scale(disc_total, config.lambda);
    let total = g.add(gen_total, weighted)?;
    report.total = g.value(total).item().as_f64();
    Ok(JointOutput {
        total,
        report,
        mono_corrupt,
        pair_corrupt,
    })
}
