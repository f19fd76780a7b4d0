//! Cross-lingual sentence retrieval, word alignment and per-layer sweeps.

pub mod ot;

pub use ot::{cosine, ot_align, Extraction, OtConfig, OtResult};

use crate::corpus::vocab::is_special;
use crate::corpus::{EvalSet, Example, GoldAlignment};
use crate::error::{Error, Result};
use crate::model::{ElectraModel, Role, TokenBatch};
use crate::tensor::{Float, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;

/// Predicted, sure and possible links of one sentence pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    pub predicted: HashSet<(usize, usize)>,
    pub sure: HashSet<(usize, usize)>,
    /// Includes every sure link.
    pub possible: HashSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new(predicted: &[(usize, usize)], sure: &[(usize, usize)], possible: &[(usize, usize)]) -> Result<Self> {
        let set = AlignmentSet {
            predicted: predicted.iter().copied().collect(),
            sure: sure.iter().copied().collect(),
            possible: possible.iter().copied().collect(),
        };
        if !set.sure.is_subset(&set.possible) {
            return Err(Error::Input("sure links must also be possible".into()));
        }
        Ok(set)
    }

    /// Sure and possible links from a gold file entry (possible-only links
    /// are added to the sure ones).
    pub fn from_gold(predicted: &[(usize, usize)], gold: &GoldAlignment) -> Self {
        let sure: HashSet<_> = gold.sure.iter().copied().collect();
        let possible = sure.iter().chain(&gold.possible).copied().collect();
        AlignmentSet {
            predicted: predicted.iter().copied().collect(),
            sure,
            possible,
        }
    }

    pub fn counts(&self) -> AerCounts {
        AerCounts {
            a_and_s: self.predicted.intersection(&self.sure).count(),
            a_and_p: self.predicted.intersection(&self.possible).count(),
            a: self.predicted.len(),
            s: self.sure.len(),
        }
    }
}

/// Sufficient statistics for corpus-level AER.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AerCounts {
    pub a_and_s: usize,
    pub a_and_p: usize,
    pub a: usize,
    pub s: usize,
}

impl std::ops::AddAssign for AerCounts {
    fn add_assign(&mut self, o: Self) {
        self.a_and_s += o.a_and_s;
        self.a_and_p += o.a_and_p;
        self.a += o.a;
        self.s += o.s;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AerScore {
    pub aer: f64,
    /// Set when there was neither a prediction nor a sure link.
    pub degenerate: bool,
}

impl AerCounts {
    /// `1 - (|A∩S| + |A∩P|) / (|A| + |S|)`; zero with a flag when
    /// `|A| + |S| = 0`.
    pub fn score(&self) -> AerScore {
        let denom = self.a + self.s;
        if denom == 0 {
            return AerScore {
                aer: 0.0,
                degenerate: true,
            };
        }
        AerScore {
            aer: 1.0 - (self.a_and_s + self.a_and_p) as f64 / denom as f64,
            degenerate: false,
        }
    }
}

pub fn aer(set: &AlignmentSet) -> AerScore {
    set.counts().score()
}

/// Outcome of nearest-neighbour retrieval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieval {
    pub accuracy: f64,
    pub correct: usize,
    pub scored: usize,
    /// Queries skipped for having a zero-norm embedding.
    pub excluded: usize,
}

/// Fraction of sources whose cosine-nearest target is the same index;
/// ties go to the lower target index.
pub fn retrieve_acc1(sources: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Retrieval> {
    if sources.len() != targets.len() || sources.len() < 2 {
        return Err(Error::Input(format!(
            "retrieval needs two equal sets of at least 2, got {} and {}",
            sources.len(),
            targets.len()
        )));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let unit = |v: &[f64]| -> Option<Vec<f64>> {
        let n = norm(v);
        (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
    };
    let targets: Vec<Option<Vec<f64>>> = targets.iter().map(|t| unit(t)).collect();
    let (mut correct, mut scored, mut excluded) = (0, 0, 0);
    for (i, s) in sources.iter().enumerate() {
        let Some(s) = unit(s) else {
            excluded += 1;
            continue;
        };
        scored += 1;
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in targets.iter().enumerate() {
            let Some(t) = t else { continue };
            let sim: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((j, sim));
            }
        }
        correct += usize::from(best.map(|(j, _)| j) == Some(i));
    }
    if excluded > 0 {
        log::warn!("excluded {excluded} zero-norm queries from retrieval");
    }
    Ok(Retrieval {
        accuracy: if scored == 0 { 0.0 } else { correct as f64 / scored as f64 },
        correct,
        scored,
        excluded,
    })
}

/// Mean of the hidden states `[B, n, d]` of row `row` over non-pad,
/// non-special positions.
pub fn sentence_embed<T: Float>(states: &Tensor<T>, batch: &TokenBatch, row: usize) -> Result<Vec<f64>> {
    let d = *states.shape().last().unwrap();
    let n = batch.seq_len;
    let keep: Vec<usize> = (0..batch.lengths[row]).filter(|&i| !is_special(batch.ids[row * n + i])).collect();
    if keep.is_empty() {
        return Err(Error::Input(format!("row {row} has no ordinary token to pool")));
    }
    let data = states.data();
    let mut out = vec![0.0; d];
    for &i in &keep {
        for (o, x) in out.iter_mut().zip(&data[(row * n + i) * d..(row * n + i + 1) * d]) {
            *o += x.as_f64();
        }
    }
    for o in &mut out {
        *o /= keep.len() as f64;
    }
    Ok(out)
}

/// Token and sentence states of a set of sentences at every layer.
#[derive(Clone, Debug)]
pub struct EncodedSentences {
    /// `[layer][sentence][token][d]`, ordinary tokens only.
    pub tokens: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[layer][sentence][d]`, mean-pooled.
    pub pooled: Vec<Vec<Vec<f64>>>,
}

/// Encodes each sentence as `BOS x EOS` with the given stack, in chunks.
pub fn encode_sentences<T: Float>(model: &ElectraModel<T>, role: Role, sentences: &[Vec<u32>]) -> Result<EncodedSentences> {
    let layers = model.encoder(role).config.num_layers + 1;
    let mut tokens = vec![Vec::with_capacity(sentences.len()); layers];
    let mut pooled = vec![Vec::with_capacity(sentences.len()); layers];
    for chunk in sentences.chunks(32) {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|s| Example::mono(0, s).ids).collect();
        let batch = TokenBatch::from_sequences(&seqs)?;
        let states = model.encode(role, &batch)?;
        let d = model.config.hidden_size;
        for (l, st) in states.iter().enumerate() {
            let data = st.data();
            for r in 0..batch.batch {
                pooled[l].push(sentence_embed(st, &batch, r)?);
                let toks = (1..=chunk[r].len())
                    .map(|i| {
                        let o = (r * batch.seq_len + i) * d;
                        data[o..o + d].iter().map(|x| x.as_f64()).collect()
                    })
                    .collect();
                tokens[l].push(toks);
            }
        }
    }
    Ok(EncodedSentences { tokens, pooled })
}

/// Pooled embeddings of `sentences` at one layer.
pub fn sentence_embeddings<T: Float>(
    model: &ElectraModel<T>,
    role: Role,
    sentences: &[Vec<u32>],
    layer: usize,
) -> Result<Vec<Vec<f64>>> {
    let top = model.encoder(role).config.num_layers;
    if layer > top {
        return Err(Error::Input(format!("layer {layer} outside 0..={top}")));
    }
    Ok(encode_sentences(model, role, sentences)?.pooled.swap_remove(layer))
}

/// Metrics of one layer on one held-out language pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer: usize,
    /// Base language queries against the other language.
    pub acc_forward: f64,
    pub acc_backward: f64,
    pub aer: f64,
    /// Sentence pairs whose transport did not converge.
    pub unconverged: usize,
}

impl LayerMetrics {
    pub fn mean_accuracy(&self) -> f64 {
        (self.acc_forward + self.acc_backward) / 2.0
    }
}

/// Retrieval in both directions and AER at every layer `0..=L`.
pub fn layer_sweep<T: Float>(
    model: &ElectraModel<T>,
    role: Role,
    set: &EvalSet,
    ot: &OtConfig,
) -> Result<Vec<LayerMetrics>> {
    let src: Vec<Vec<u32>> = set.pairs.iter().map(|p| p.0.clone()).collect();
    let tgt: Vec<Vec<u32>> = set.pairs.iter().map(|p| p.1.clone()).collect();
    let es = encode_sentences(model, role, &src)?;
    let ft = encode_sentences(model, role, &tgt)?;
    let mut rows = Vec::with_capacity(es.pooled.len());
    for layer in 0..es.pooled.len() {
        let fwd = retrieve_acc1(&es.pooled[layer], &ft.pooled[layer])?;
        let bwd = retrieve_acc1(&ft.pooled[layer], &es.pooled[layer])?;
        let mut counts = AerCounts::default();
        let mut unconverged = 0;
        for (k, gold) in set.gold.iter().enumerate() {
            let r = ot_align(&es.tokens[layer][k], &ft.tokens[layer][k], ot)?;
            unconverged += usize::from(!r.converged);
            counts += AlignmentSet::from_gold(&r.links, gold).counts();
        }
        rows.push(LayerMetrics {
            layer,
            acc_forward: fwd.accuracy,
            acc_backward: bwd.accuracy,
            aer: counts.score().aer,
            unconverged,
        });
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "layer,acc_forward,acc_backward,aer,unconverged";

pub fn sweep_csv(rows: &[LayerMetrics]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.layer, r.acc_forward, r.acc_backward, r.aer, r.unconverged);
    }
    out
}

/// Layer with the highest mean retrieval accuracy (lowest index on ties).
pub fn best_layer(rows: &[LayerMetrics]) -> Option<&LayerMetrics> {
    rows.iter().fold(None, |best: Option<&LayerMetrics>, r| match best {
        Some(b) if b.mean_accuracy() >= r.mean_accuracy() => Some(b),
        _ => Some(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aer_fixtures() {
        let s = [(1, 1), (2, 2)];
        let p = [(1, 1), (2, 2), (3, 3)];
        assert_eq!(aer(&AlignmentSet::new(&s, &s, &s).unwrap()).aer, 0.0);
        assert_eq!(aer(&AlignmentSet::new(&[(1, 1), (3, 3)], &s, &p).unwrap()).aer, 0.25);
        assert_eq!(aer(&AlignmentSet::new(&[(5, 1)], &s, &p).unwrap()).aer, 1.0);
        assert_eq!(aer(&AlignmentSet::new(&[], &s, &p).unwrap()).aer, 1.0);
        let none = aer(&AlignmentSet::default());
        assert!(none.degenerate && none.aer == 0.0);
        assert!(AlignmentSet::new(&[], &[(0, 0)], &[]).is_err());
    }

    #[test]
    fn retrieval_fixture() {
        // Seven sources nearest their own target, three nearest target 0.
        let e = |i: usize| {
            let mut v = vec![0.0; 10];
            v[i] = 1.0;
            v
        };
        let targets: Vec<Vec<f64>> = (0..10).map(e).collect();
        let sources: Vec<Vec<f64>> = (0..10).map(|i| if i < 7 { e(i) } else { e(0) }).collect();
        let r = retrieve_acc1(&sources, &targets).unwrap();
        assert!((r.accuracy - 0.7).abs() < 1e-12);
        let same = retrieve_acc1(&targets, &targets).unwrap();
        assert_eq!(same.accuracy, 1.0);
    }

    #[test]
    fn retrieval_ties_go_low_and_zero_norm_excluded() {
        let t = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let s = vec![vec![2.0, 0.0], vec![0.0, 0.0]];
        let r = retrieve_acc1(&s, &t).unwrap();
        assert_eq!((r.correct, r.scored, r.excluded), (1, 1, 1));
    }

    #[test]
    fn pooling_skips_specials_and_padding() {
        let batch = TokenBatch::from_sequences(&[vec![2u32, 7, 8, 3], vec![2, 9, 3]]).unwrap();
        let data: Vec<f64> = (0..8).flat_map(|i| [i as f64, 1.0]).collect();
        let states = Tensor::new(vec![2, 4, 2], data).unwrap();
        assert_eq!(sentence_embed(&states, &batch, 0).unwrap(), vec![1.5, 1.0]);
        assert_eq!(sentence_embed(&states, &batch, 1).unwrap(), vec![5.0, 1.0]);
    }
}
