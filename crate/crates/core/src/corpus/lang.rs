//! Synthetic toy languages.
//!
//! A base language is produced by a small stochastic grammar over a closed
//! lexicon of pseudo-words. Every other language is a deterministic,
//! invertible transform of base sentences: a word-for-word lexicon
//! bijection, optionally followed by reversing the word order or by
//! appending a grammatical affix token after nouns and verbs.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LanguageKind {
    Base,
    PermutedVocab,
    ReversedOrder,
    AffixDecorated,
}

impl LanguageKind {
    pub fn name(self) -> &'static str {
        match self {
            LanguageKind::Base => "base",
            LanguageKind::PermutedVocab => "permuted-vocab",
            LanguageKind::ReversedOrder => "reversed-order",
            LanguageKind::AffixDecorated => "affix-decorated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub tag: String,
    pub kind: LanguageKind,
    /// Seeds the lexicon (surface forms and word bijection).
    #[serde(default)]
    pub seed: u64,
    /// Monolingual sentences generated for this language.
    pub sentences: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    Det,
    Adj,
    Noun,
    TransVerb,
    IntransVerb,
    Prep,
    Adv,
}

/// Base lexicon layout: category and word count.
pub const LEXICON: [(Category, usize); 7] = [
    (Category::Det, 4),
    (Category::Adj, 12),
    (Category::Noun, 20),
    (Category::TransVerb, 10),
    (Category::IntransVerb, 6),
    (Category::Prep, 4),
    (Category::Adv, 8),
];

pub fn lexicon_size() -> usize {
    LEXICON.iter().map(|(_, n)| n).sum()
}

pub fn category_of(word: usize) -> Category {
    let mut start = 0;
    for &(cat, n) in &LEXICON {
        if word < start + n {
            return cat;
        }
        start += n;
    }
    panic!("word index {word} outside the base lexicon");
}

fn category_range(cat: Category) -> std::ops::Range<usize> {
    let mut start = 0;
    for &(c, n) in &LEXICON {
        if c == cat {
            return start..start + n;
        }
        start += n;
    }
    unreachable!()
}

/// Stochastic grammar over base-lexicon word indices, with lexical
/// dependencies between the words of a sentence.
///
/// A sentence is `NP verb [NP [prep NP]] [adv]` where an NP is
/// `det [adj] noun`. The verb picks which nouns may be its subject and
/// object, each noun licenses two adjectives, each preposition and verb
/// restricts its noun or adverb, and determiners agree with one of two
/// noun classes (`noun % 2`) while marking definiteness.
#[derive(Clone, Debug)]
pub struct Grammar {
    /// Per verb (transitive first, then intransitive).
    subjects: Vec<Vec<usize>>,
    /// Per transitive verb.
    objects: Vec<Vec<usize>>,
    /// Per noun.
    adjectives: Vec<Vec<usize>>,
    /// Per verb.
    adverbs: Vec<Vec<usize>>,
    /// Per preposition.
    prep_objects: Vec<Vec<usize>>,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::new(0)
    }
}

/// `count` sets of `size` distinct items dealt from repeatedly shuffled
/// decks of `from`, so every item is used about equally often.
fn subsets<R: Rng>(count: usize, size: usize, from: std::ops::Range<usize>, rng: &mut R) -> Vec<Vec<usize>> {
    let mut deck: Vec<usize> = Vec::new();
    (0..count)
        .map(|_| {
            let mut s = Vec::with_capacity(size);
            while s.len() < size {
                if deck.is_empty() {
                    deck = from.clone().collect();
                    deck.shuffle(rng);
                }
                let pick = deck.pop().unwrap();
                if !s.contains(&pick) {
                    s.push(pick);
                }
            }
            s.sort_unstable();
            s
        })
        .collect()
}

impl Grammar {
    /// Draws the dependency tables from `seed`.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nouns = category_range(Category::Noun);
        let verbs = category_range(Category::TransVerb).len() + category_range(Category::IntransVerb).len();
        Grammar {
            subjects: subsets(verbs, 4, nouns.clone(), &mut rng),
            objects: subsets(category_range(Category::TransVerb).len(), 4, nouns.clone(), &mut rng),
            adjectives: subsets(nouns.len(), 2, category_range(Category::Adj), &mut rng),
            adverbs: subsets(verbs, 2, category_range(Category::Adv), &mut rng),
            prep_objects: subsets(category_range(Category::Prep).len(), 4, nouns, &mut rng),
        }
    }

    /// Adjectives a noun accepts.
    pub fn adjectives_of(&self, noun: usize) -> &[usize] {
        &self.adjectives[noun - category_range(Category::Noun).start]
    }

    fn noun_phrase<R: Rng>(&self, out: &mut Vec<usize>, noun: usize, rng: &mut R) {
        let det = category_range(Category::Det).start + 2 * (noun % 2) + rng.gen_range(0..2);
        out.push(det);
        if rng.gen::<f64>() < 0.5 {
            out.push(*self.adjectives_of(noun).choose(rng).unwrap());
        }
        out.push(noun);
    }

    /// One sentence as base word indices.
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let trans = category_range(Category::TransVerb);
        let verb = if rng.gen::<f64>() < 0.65 {
            trans.start + rng.gen_range(0..trans.len())
        } else {
            let intrans = category_range(Category::IntransVerb);
            intrans.start + rng.gen_range(0..intrans.len())
        };
        let v = verb - trans.start;
        let mut out = Vec::new();
        self.noun_phrase(&mut out, *self.subjects[v].choose(rng).unwrap(), rng);
        out.push(verb);
        if trans.contains(&verb) {
            self.noun_phrase(&mut out, *self.objects[v].choose(rng).unwrap(), rng);
            if rng.gen::<f64>() < 0.3 {
                let preps = category_range(Category::Prep);
                let p = rng.gen_range(0..preps.len());
                out.push(preps.start + p);
                self.noun_phrase(&mut out, *self.prep_objects[p].choose(rng).unwrap(), rng);
            }
        }
        if rng.gen::<f64>() < 0.4 {
            out.push(*self.adverbs[v].choose(rng).unwrap());
        }
        out
    }
}

const CONSONANTS: &[u8] = b"ptkbdgmnlrsvzfh";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    w
}

/// Word alignment between a base sentence and its transform, `(base, other)`
/// word positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldAlignment {
    pub sure: Vec<(usize, usize)>,
    /// Possible-only links (sure links are implicitly possible too).
    pub possible: Vec<(usize, usize)>,
}

/// A language instance: surface forms plus its transform.
#[derive(Clone, Debug)]
pub struct Language {
    pub spec: LanguageSpec,
    /// Surface form of base word `i` in this language.
    pub words: Vec<String>,
    /// `(noun affix, verb affix)` for affix-decorated languages.
    pub affixes: Option<(String, String)>,
}

impl Language {
    /// Builds the lexicon, avoiding any surface form in `taken`.
    pub fn build(spec: &LanguageSpec, taken: &mut HashSet<String>) -> Result<Self> {
        if spec.tag.is_empty() || spec.tag.contains(|c: char| c.is_whitespace() || c == '-') {
            return Err(Error::Config(format!("invalid language tag {:?}", spec.tag)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let w = pseudo_word(rng);
            if taken.insert(w.clone()) {
                return w;
            }
        };
        // Surface forms are drawn first, then assigned through a random
        // bijection so word i and its translation never share list order.
        let mut words: Vec<String> = (0..lexicon_size()).map(|_| fresh(&mut rng)).collect();
        if spec.kind != LanguageKind::Base {
            words.shuffle(&mut rng);
        }
        let affixes = (spec.kind == LanguageKind::AffixDecorated).then(|| (fresh(&mut rng), fresh(&mut rng)));
        Ok(Language {
            spec: spec.clone(),
            words,
            affixes,
        })
    }

    fn affix_for(&self, word: usize) -> Option<&str> {
        let (noun, verb) = self.affixes.as_ref()?;
        match category_of(word) {
            Category::Noun => Some(noun),
            Category::TransVerb | Category::IntransVerb => Some(verb),
            _ => None,
        }
    }

    /// Renders a base sentence in this language, with the gold word
    /// alignment back to the base positions.
    pub fn render(&self, base: &[usize]) -> (Vec<String>, GoldAlignment) {
        let mut out = Vec::with_capacity(base.len() * 2);
        let mut gold = GoldAlignment::default();
        match self.spec.kind {
            LanguageKind::Base | LanguageKind::PermutedVocab => {
                for (i, &w) in base.iter().enumerate() {
                    out.push(self.words[w].clone());
                    gold.sure.push((i, i));
                }
            }
            LanguageKind::ReversedOrder => {
                let n = base.len();
                for (j, &w) in base.iter().rev().enumerate() {
                    out.push(self.words[w].clone());
                    gold.sure.push((n - 1 - j, j));
                }
                gold.sure.sort_unstable();
            }
            LanguageKind::AffixDecorated => {
                for (i, &w) in base.iter().enumerate() {
                    gold.sure.push((i, out.len()));
                    out.push(self.words[w].clone());
                    if let Some(a) = self.affix_for(w) {
                        gold.possible.push((i, out.len()));
                        out.push(a.to_owned());
                    }
                }
            }
        }
        (out, gold)
    }

    /// Inverse of [`Language::render`].
    pub fn parse(&self, words: &[&str]) -> Result<Vec<usize>> {
        let affixes: Vec<&str> = self
            .affixes
            .iter()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect();
        let mut base = Vec::with_capacity(words.len());
        for w in words.iter().filter(|w| !affixes.contains(w)) {
            let idx = self
                .words
                .iter()
                .position(|x| x == w)
                .ok_or_else(|| Error::Input(format!("{w:?} is not a word of language {}", self.spec.tag)))?;
            base.push(idx);
        }
        if self.spec.kind == LanguageKind::ReversedOrder {
            base.reverse();
        }
        Ok(base)
    }

    /// Every surface token of the language, lexicon first.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .map(String::as_str)
            .chain(self.affixes.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]))
    }
}
