use crate::corpus::vocab::{is_special, MASK, PAD};
use crate::corpus::{Example, Vocab};
use crate::error::{Error, Result};
use crate::model::TokenBatch;
use crate::tensor::{Float, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Eligible (non-special) positions of `ids` within `range`.
fn eligible(ids: &[u32], range: std::ops::Range<usize>) -> Vec<usize> {
    range.filter(|&i| !is_special(ids[i])).collect()
}

fn mask_count(eligible: usize, ratio: f64) -> usize {
    ((ratio * eligible as f64).round() as usize).clamp(1, eligible)
}

fn choose<R: Rng>(from: &[usize], ratio: f64, rng: &mut R) -> Result<Vec<usize>> {
    if from.is_empty() {
        return Err(Error::Input("sequence has no maskable token".into()));
    }
    let k = mask_count(from.len(), ratio);
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, from.len(), k)
        .into_iter()
        .map(|i| from[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Uniformly samples `max(1, round(ratio * n))` of the `n` non-special
/// positions of `ids`, without replacement. Returned sorted.
pub fn select_mask_positions<R: Rng>(ids: &[u32], mask_ratio: f64, rng: &mut R) -> Result<Vec<usize>> {
    choose(&eligible(ids, 0..ids.len()), mask_ratio, rng)
}

/// Pair masking: positions drawn independently from each segment.
pub fn select_pair_mask_positions<R: Rng>(
    ids: &[u32],
    boundary: usize,
    mask_ratio: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if boundary == 0 || boundary >= ids.len() {
        return Err(Error::Input(format!("segment boundary {boundary} outside sequence of {}", ids.len())));
    }
    let e = choose(&eligible(ids, 0..boundary), mask_ratio, rng)?;
    let f = choose(&eligible(ids, boundary..ids.len()), mask_ratio, rng)?;
    Ok((e, f))
}

/// Inputs for the generator: originals, masked copies and mask sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedBatch {
    pub original: TokenBatch,
    /// `original.ids` with every masked position set to `MASK`.
    pub masked_ids: Vec<u32>,
    /// Row-local masked positions, sorted; for pairs the union of both
    /// segment sets.
    pub positions: Vec<Vec<usize>>,
    pub boundaries: Vec<Option<usize>>,
    pub langs: Vec<usize>,
}

impl MaskedBatch {
    /// Masks every example; pairs (examples with a boundary) are masked
    /// per segment.
    pub fn new<R: Rng>(examples: &[Example], mask_ratio: f64, rng: &mut R) -> Result<Self> {
        let seqs: Vec<&[u32]> = examples.iter().map(|e| e.ids.as_slice()).collect();
        let original = TokenBatch::from_sequences(&seqs)?;
        let mut positions = Vec::with_capacity(examples.len());
        for ex in examples {
            let m = match ex.boundary {
                Some(b) => {
                    let (mut e, f) = select_pair_mask_positions(&ex.ids, b, mask_ratio, rng)?;
                    e.extend(f);
                    e
                }
                None => select_mask_positions(&ex.ids, mask_ratio, rng)?,
            };
            positions.push(m);
        }
        Self::from_positions(
            original,
            positions,
            examples.iter().map(|e| e.boundary).collect(),
            examples.iter().map(|e| e.lang).collect(),
        )
    }

    /// Builds a batch from explicit mask sets.
    pub fn from_positions(
        original: TokenBatch,
        positions: Vec<Vec<usize>>,
        boundaries: Vec<Option<usize>>,
        langs: Vec<usize>,
    ) -> Result<Self> {
        if positions.len() != original.batch || boundaries.len() != original.batch || langs.len() != original.batch {
            return Err(Error::Input("per-row metadata does not match batch size".into()));
        }
        let mut masked_ids = original.ids.clone();
        for (r, pos) in positions.iter().enumerate() {
            for &i in pos {
                if i >= original.lengths[r] || is_special(original.ids[r * original.seq_len + i]) {
                    return Err(Error::Input(format!("row {r}: position {i} is not maskable")));
                }
                masked_ids[r * original.seq_len + i] = MASK;
            }
        }
        Ok(MaskedBatch {
            original,
            masked_ids,
            positions,
            boundaries,
            langs,
        })
    }

    pub fn is_pair(&self) -> bool {
        self.boundaries.iter().any(Option::is_some)
    }

    pub fn masked_tokens(&self) -> TokenBatch {
        self.original.with_ids(self.masked_ids.clone())
    }

    /// Masked positions as flat indices into the `[B*n]` layout, row-major.
    pub fn flat_positions(&self) -> Vec<usize> {
        let n = self.original.seq_len;
        self.positions
            .iter()
            .enumerate()
            .flat_map(|(r, pos)| pos.iter().map(move |&i| r * n + i))
            .collect()
    }

    /// Original ids at [`MaskedBatch::flat_positions`].
    pub fn targets(&self) -> Vec<u32> {
        self.flat_positions().iter().map(|&i| self.original.ids[i]).collect()
    }

    pub fn num_masked(&self) -> usize {
        self.positions.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Categorical draw from the generator softmax.
    #[default]
    Sample,
    /// Most probable token; deterministic.
    Argmax,
}

/// Discriminator inputs and replaced-token labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorruptedBatch {
    pub corrupt: TokenBatch,
    pub original_ids: Vec<u32>,
    /// `true` where the corrupt id differs from the original, `[B*n]`.
    pub labels: Vec<bool>,
    /// `(flat position, sampled id)` for every masked position.
    pub sampled: Vec<(usize, u32)>,
    pub langs: Vec<usize>,
}

impl CorruptedBatch {
    /// Positions entering the detection loss: non-pad, and non-special
    /// unless `include_special`.
    pub fn loss_mask(&self, include_special: bool) -> Vec<bool> {
        self.corrupt
            .key_valid()
            .into_iter()
            .zip(&self.original_ids)
            .map(|(valid, &id)| valid && (include_special || !is_special(id)))
            .collect()
    }

    pub fn num_replaced(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Replaces every masked position with a token drawn from the generator
/// distribution. `logits` rows follow [`MaskedBatch::flat_positions`].
/// Special ids are never proposed.
pub fn sample_corruption<T: Float, R: Rng>(
    batch: &MaskedBatch,
    logits: &Tensor<T>,
    mode: SampleMode,
    rng: &mut R,
) -> Result<CorruptedBatch> {
    let flat = batch.flat_positions();
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != flat.len() {
        return Err(Error::shape("sample_corruption", shape, &[flat.len()]));
    }
    let v = shape[1];
    let mut ids = batch.original.ids.clone();
    let mut sampled = Vec::with_capacity(flat.len());
    let mut probs = vec![0.0f64; v];
    for (r, &pos) in flat.iter().enumerate() {
        let row = logits.row(r);
        let pick = match mode {
            SampleMode::Argmax => (0..v)
                .filter(|&t| !is_special(t as u32))
                .fold(None, |best: Option<usize>, t| match best {
                    Some(b) if row[b] >= row[t] => Some(b),
                    _ => Some(t),
                }),
            SampleMode::Sample => {
                let mx = (0..v)
                    .filter(|&t| !is_special(t as u32))
                    .map(|t| row[t].as_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (t, p) in probs.iter_mut().enumerate() {
                    *p = if is_special(t as u32) { 0.0 } else { (row[t].as_f64() - mx).exp() };
                    z += *p;
                }
                let mut u = rng.gen::<f64>() * z;
                let mut pick = None;
                for (t, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        pick = Some(t);
                        u -= p;
                        if u < 0.0 {
                            break;
                        }
                    }
                }
                pick
            }
        };
        let id = pick.ok_or_else(|| Error::Input("vocabulary has no ordinary token to sample".into()))? as u32;
        ids[pos] = id;
        sampled.push((pos, id));
    }
    let labels = ids.iter().zip(&batch.original.ids).map(|(c, o)| c != o).collect();
    Ok(CorruptedBatch {
        corrupt: batch.original.with_ids(ids),
        original_ids: batch.original.ids.clone(),
        labels,
        sampled,
        langs: batch.langs.clone(),
    })
}

/// Text dump, one record per sequence:
/// `lang \t original \t masked \t corrupt \t labels` where labels is one
/// `0`/`1` per non-pad position.
pub fn dump_batch(masked: &MaskedBatch, corrupt: &CorruptedBatch, vocab: &Vocab, tags: &[String]) -> Result<String> {
    let b = &masked.original;
    let mut out = String::new();
    for r in 0..b.batch {
        let span = r * b.seq_len..r * b.seq_len + b.lengths[r];
        let text = |ids: &[u32]| vocab.decode(ids);
        let labels: String = corrupt.labels[span.clone()].iter().map(|&l| if l { '1' } else { '0' }).collect();
        let tag = tags.get(masked.langs[r]).map(String::as_str).unwrap_or("?");
        writeln!(
            out,
            "{tag}\t{}\t{}\t{}\t{labels}",
            text(&b.ids[span.clone()])?,
            text(&masked.masked_ids[span.clone()])?,
            text(&corrupt.corrupt.ids[span])?
        )
        .expect("write to string");
    }
    Ok(out)
}

/// Checks the corruption contract; returns a description of the first
/// violation.
pub fn check_corruption(masked: &MaskedBatch, corrupt: &CorruptedBatch) -> std::result::Result<(), String> {
    let flat = masked.flat_positions();
    let in_mask = {
        let mut v = vec![false; masked.original.ids.len()];
        for &i in &flat {
            v[i] = true;
        }
        v
    };
    let mut hamming = 0;
    for i in 0..in_mask.len() {
        let (o, c) = (masked.original.ids[i], corrupt.corrupt.ids[i]);
        if !in_mask[i] && o != c {
            return Err(format!("position {i} changed outside the mask"));
        }
        if corrupt.labels[i] != (o != c) {
            return Err(format!("label at {i} disagrees with ids"));
        }
        if is_special(o) && (in_mask[i] || o != c) {
            return Err(format!("special token at {i} was masked or corrupted"));
        }
        if o == PAD && corrupt.labels[i] {
            return Err(format!("padding at {i} labeled replaced"));
        }
        hamming += usize::from(o != c);
    }
    let replaced_sampled = corrupt.sampled.iter().filter(|&&(p, id)| masked.original.ids[p] != id).count();
    if hamming > flat.len() || hamming != replaced_sampled {
        return Err(format!("hamming {hamming} inconsistent with {} masked positions", flat.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{BOS, EOS, SEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn mask_counts() {
        let mut r = rng();
        let mut ids = vec![BOS];
        ids.extend(10..30);
        ids.push(EOS);
        assert_eq!(select_mask_positions(&ids, 0.15, &mut r).unwrap().len(), 3);
        assert_eq!(select_mask_positions(&[BOS, 10, 11, EOS], 0.15, &mut r).unwrap().len(), 1);
        assert!(select_mask_positions(&[BOS, EOS], 0.15, &mut r).is_err());
    }

    #[test]
    fn specials_never_selected() {
        let mut r = rng();
        let ids = [BOS, 10, 11, EOS, SEP, 12, 13, 14, EOS];
        for _ in 0..200 {
            let (e, f) = select_pair_mask_positions(&ids, 5, 0.5, &mut r).unwrap();
            assert!(e.iter().all(|&i| (1..3).contains(&i)));
            assert!(f.iter().all(|&i| (5..8).contains(&i)));
        }
    }

    #[test]
    fn one_hot_generator_restores_original() {
        let mut r = rng();
        let ex = Example::mono(0, &[7, 8, 9, 5, 6]);
        let m = MaskedBatch::new(&[ex], 0.4, &mut r).unwrap();
        let targets = m.targets();
        let mut logits = Tensor::<f64>::zeros(&[targets.len(), 12]);
        for (i, &t) in targets.iter().enumerate() {
            logits.data_mut()[i * 12 + t as usize] = 1e4;
        }
        let c = sample_corruption(&m, &logits, SampleMode::Sample, &mut r).unwrap();
        assert_eq!(c.corrupt.ids, m.original.ids);
        assert!(c.labels.iter().all(|&l| !l));
        check_corruption(&m, &c).unwrap();
    }

    #[test]
    fn dump_has_one_line_per_row() {
        let mut vocab = Vocab::new();
        for w in ["a", "b", "c"] {
            vocab.add(w).unwrap();
        }
        let mut r = rng();
        let m = MaskedBatch::new(&[Example::mono(0, &[5, 6]), Example::pair(1, &[7], &[5, 6])], 0.5, &mut r).unwrap();
        let logits = Tensor::<f32>::zeros(&[m.num_masked(), vocab.len()]);
        let c = sample_corruption(&m, &logits, SampleMode::Argmax, &mut r).unwrap();
        let text = dump_batch(&m, &c, &vocab, &["en".into(), "pv".into()]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("pv\t[BOS] c [EOS] [SEP] a b [EOS]\t"));
        assert_eq!(lines[1].rsplit('\t').next().unwrap().len(), 7);
    }
}
