//! Token-budget batching.
//!
//! Sequences are collected into a pool, sorted by length and packed
//! greedily so that each batch stays under the budget while rows of similar
//! length share a batch (little padding). Batches of one pool are emitted in
//! random order.

use super::sampling::sample_index;
use super::Example;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Result of packing a finite collection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<Example>>,
    /// Sequences dropped for exceeding the budget.
    pub skipped: usize,
}

/// Packs sorted-by-length runs greedily under `budget` non-pad tokens.
///
/// At most one batch ends below half the budget: once a batch closes that
/// light, every later item is longer than half the budget on its own. That
/// batch is moved to the end.
fn pack_sorted<T>(items: Vec<T>, len: impl Fn(&T) -> usize, budget: usize) -> Vec<Vec<T>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    let mut light = None;
    for item in items {
        let n = len(&item);
        if tokens + n > budget && !current.is_empty() {
            if 2 * tokens < budget {
                light = Some(batches.len());
            }
            batches.push(std::mem::take(&mut current));
            tokens = 0;
        }
        tokens += n;
        current.push(item);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    if let Some(i) = light {
        let b = batches.remove(i);
        batches.push(b);
    }
    batches
}

/// Packs a finite set of examples; only the last batch may fall below half
/// the budget. Overlong sequences are skipped and counted.
pub fn dynamic_batch<R: Rng>(examples: Vec<Example>, token_budget: usize, rng: &mut R) -> BatchPlan {
    let before = examples.len();
    let mut kept: Vec<Example> = examples.into_iter().filter(|e| e.len() <= token_budget).collect();
    let skipped = before - kept.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} sequences longer than the token budget {token_budget}");
    }
    kept.shuffle(rng);
    kept.sort_by_key(Example::len);
    let mut batches = pack_sorted(kept, Example::len, token_budget);
    let last = batches.pop();
    batches.shuffle(rng);
    batches.extend(last);
    BatchPlan { batches, skipped }
}

/// Reference to `sources[lang][index]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub lang: usize,
    pub index: usize,
}

/// Everything needed to resume a [`BatchStream`] exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub rng: ChaCha8Rng,
    pub ready: VecDeque<Vec<Slot>>,
    /// Underfull tail of the previous pool, merged into the next one.
    pub carry: Vec<Slot>,
    pub skipped: usize,
}

/// Endless batch stream: every sequence slot picks a language with the
/// configured probabilities, then a uniform sentence of that language.
#[derive(Clone, Debug)]
pub struct BatchStream {
    sources: Vec<Vec<Example>>,
    probs: Vec<f64>,
    token_budget: usize,
    pool_batches: usize,
    pub state: StreamState,
}

impl BatchStream {
    /// `probs[j]` is the sampling probability of `sources[j]`; empty
    /// sources must have probability zero.
    pub fn new(sources: Vec<Vec<Example>>, probs: Vec<f64>, token_budget: usize, rng: ChaCha8Rng) -> Self {
        assert_eq!(sources.len(), probs.len());
        BatchStream {
            sources,
            probs,
            token_budget,
            pool_batches: 64,
            state: StreamState {
                rng,
                ready: VecDeque::new(),
                carry: Vec::new(),
                skipped: 0,
            },
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn len_of(&self, s: &Slot) -> usize {
        self.sources[s.lang][s.index].len()
    }

    fn refill(&mut self) {
        let target = self.pool_batches * self.token_budget;
        let mut pool = std::mem::take(&mut self.state.carry);
        let mut tokens: usize = pool.iter().map(|s| self.len_of(s)).sum();
        let mut draws = 0;
        while tokens < target {
            draws += 1;
            if draws > 100 * target {
                break;
            }
            let lang = sample_index(&self.probs, &mut self.state.rng);
            let n = self.sources[lang].len();
            if n == 0 {
                continue;
            }
            let slot = Slot {
                lang,
                index: self.state.rng.gen_range(0..n),
            };
            let len = self.len_of(&slot);
            if len > self.token_budget {
                self.state.skipped += 1;
                log::warn!("skipped sequence of length {len} over token budget {}", self.token_budget);
                continue;
            }
            tokens += len;
            pool.push(slot);
        }
        pool.sort_by_key(|s| self.len_of(s));
        let mut batches = pack_sorted(pool, |s| self.len_of(s), self.token_budget);
        if batches.len() > 1 {
            let last_tokens: usize = batches.last().unwrap().iter().map(|s| self.len_of(s)).sum();
            if 2 * last_tokens < self.token_budget {
                self.state.carry = batches.pop().unwrap();
            }
        }
        batches.shuffle(&mut self.state.rng);
        self.state.ready.extend(batches);
    }

    /// Next batch; `None` only when every source is empty.
    pub fn next_slots(&mut self) -> Option<Vec<Slot>> {
        if self.sources.iter().all(Vec::is_empty) {
            return None;
        }
        while self.state.ready.is_empty() {
            self.refill();
        }
        self.state.ready.pop_front()
    }

    pub fn examples(&self, slots: &[Slot]) -> Vec<Example> {
        slots.iter().map(|s| self.sources[s.lang][s.index].clone()).collect()
    }
}

impl Iterator for BatchStream {
    type Item = Vec<Example>;

    fn next(&mut self) -> Option<Vec<Example>> {
        let slots = self.next_slots()?;
        Some(self.examples(&slots))
    }
}

/// Share of padded cells in a batch padded to its longest row.
pub fn padding_waste(batch: &[Example]) -> f64 {
    let longest = batch.iter().map(Example::len).max().unwrap_or(0);
    if longest == 0 {
        return 0.0;
    }
    let real: usize = batch.iter().map(Example::len).sum();
    1.0 - real as f64 / (longest * batch.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ex(lang: usize, len: usize) -> Example {
        Example {
            lang,
            ids: vec![7; len],
            boundary: None,
        }
    }

    #[test]
    fn equal_lengths_pack_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = dynamic_batch((0..20).map(|_| ex(0, 16)).collect(), 64, &mut rng);
        assert_eq!(plan.batches.len(), 5);
        assert!(plan.batches.iter().all(|b| b.len() == 4));
    }

    #[test]
    fn light_batch_before_long_items_goes_last() {
        let lengths = [23, 16, 21, 17, 23, 22, 35, 31, 12];
        let plan = dynamic_batch(lengths.iter().map(|&n| ex(0, n)).collect(), 63, &mut ChaCha8Rng::seed_from_u64(0));
        let sizes: Vec<usize> = plan.batches.iter().map(|b| b.iter().map(Example::len).sum()).collect();
        assert_eq!(sizes.last(), Some(&31), "{sizes:?}");
        assert!(sizes[..sizes.len() - 1].iter().all(|&t| 2 * t >= 63 && t <= 63), "{sizes:?}");
    }

    #[test]
    fn empty_corpus_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dynamic_batch(Vec::new(), 64, &mut rng).batches.is_empty());
        let mut stream = BatchStream::new(vec![Vec::new()], vec![1.0], 64, rng);
        assert!(stream.next().is_none());
    }

    #[test]
    fn overlong_sequences_are_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = dynamic_batch(vec![ex(0, 10), ex(0, 100)], 64, &mut rng);
        assert_eq!(plan.skipped, 1);
        assert_eq!(plan.batches.len(), 1);
    }

    #[test]
    fn stream_respects_budget_and_fill() {
        let rng = ChaCha8Rng::seed_from_u64(4);
        let sources = vec![(5..20).map(|l| ex(0, l)).collect(), (10..40).map(|l| ex(1, l)).collect()];
        let mut stream = BatchStream::new(sources, vec![0.7, 0.3], 128, rng);
        for _ in 0..500 {
            let b = stream.next().unwrap();
            let tokens: usize = b.iter().map(Example::len).sum();
            assert!(tokens <= 128 && 2 * tokens >= 128, "{tokens}");
            assert!(padding_waste(&b) < 0.3, "{:?}", b.iter().map(Example::len).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stream_resumes_exactly() {
        let sources = vec![(3..20).map(|l| ex(0, l)).collect::<Vec<_>>()];
        let mut a = BatchStream::new(sources.clone(), vec![1.0], 64, ChaCha8Rng::seed_from_u64(2));
        for _ in 0..37 {
            a.next();
        }
        let saved = serde_json::to_string(&a.state).unwrap();
        let mut b = BatchStream::new(sources, vec![1.0], 64, ChaCha8Rng::seed_from_u64(99));
        b.state = serde_json::from_str(&saved).unwrap();
        for _ in 0..50 {
            assert_eq!(a.next(), b.next());
        }
    }
}
