use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Corpus sizes per language and the smoothing exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub counts: Vec<f64>,
    pub alpha: f64,
}

impl CorpusStats {
    pub fn new(counts: impl IntoIterator<Item = usize>, alpha: f64) -> Self {
        CorpusStats {
            counts: counts.into_iter().map(|c| c as f64).collect(),
            alpha,
        }
    }
}

/// `p_j = m_j^alpha / sum_k m_k^alpha`.
pub fn language_sampling_probs(stats: &CorpusStats) -> Result<Vec<f64>> {
    if !(stats.alpha > 0.0 && stats.alpha <= 1.0) {
        return Err(Error::Input(format!("sampling exponent {} outside (0, 1]", stats.alpha)));
    }
    if stats.counts.is_empty() {
        return Err(Error::Input("no languages to sample from".into()));
    }
    if let Some((j, m)) = stats.counts.iter().enumerate().find(|(_, &m)| !(m > 0.0)) {
        return Err(Error::Input(format!("language {j} has non-positive size {m}")));
    }
    let weights: Vec<f64> = stats.counts.iter().map(|m| m.powf(stats.alpha)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}
