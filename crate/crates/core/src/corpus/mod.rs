//! Vocabulary, synthetic multilingual corpora, language sampling and
//! token-budget batching.

pub mod batching;
pub mod lang;
pub mod sampling;
pub mod vocab;

pub use batching::{dynamic_batch, BatchPlan, BatchStream, Slot, StreamState};
pub use lang::{GoldAlignment, Grammar, Language, LanguageKind, LanguageSpec};
pub use sampling::{language_sampling_probs, CorpusStats};
pub use vocab::{Vocab, BOS, EOS, MASK, PAD, SEP};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// One model input: a `BOS x EOS` sentence or a `BOS e EOS SEP f EOS` pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// Language index; for pairs, the non-base side.
    pub lang: usize,
    pub ids: Vec<u32>,
    /// Index where the second segment starts (pairs only).
    pub boundary: Option<usize>,
}

impl Example {
    pub fn mono(lang: usize, words: &[u32]) -> Self {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(words);
        ids.push(EOS);
        Example {
            lang,
            ids,
            boundary: None,
        }
    }

    pub fn pair(lang: usize, e: &[u32], f: &[u32]) -> Self {
        let mut ids = Vec::with_capacity(e.len() + f.len() + 4);
        ids.push(BOS);
        ids.extend_from_slice(e);
        ids.extend_from_slice(&[EOS, SEP]);
        ids.extend_from_slice(f);
        ids.push(EOS);
        Example {
            lang,
            ids,
            boundary: Some(e.len() + 3),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Generation settings for [`synth_corpus`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub languages: Vec<LanguageSpec>,
    /// Training pairs per non-base language.
    pub parallel_sentences: usize,
    /// Held-out evaluation pairs per non-base language.
    pub eval_pairs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let lang = |tag: &str, kind, seed, sentences| LanguageSpec {
            tag: tag.into(),
            kind,
            seed,
            sentences,
        };
        SynthConfig {
            languages: vec![
                lang("en", LanguageKind::Base, 11, 4000),
                lang("pv", LanguageKind::PermutedVocab, 12, 2000),
                lang("ro", LanguageKind::ReversedOrder, 13, 1000),
            ],
            parallel_sentences: 2000,
            eval_pairs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageInfo {
    pub tag: String,
    pub kind: LanguageKind,
}

/// Sentence pairs between the base language (`source`) and another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelSet {
    pub source: usize,
    pub target: usize,
    pub pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

/// Held-out pairs with gold word alignments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSet {
    pub source: usize,
    pub target: usize,
    pub pairs: Vec<(Vec<u32>, Vec<u32>)>,
    pub gold: Vec<GoldAlignment>,
}

/// Tokenized corpus over a shared vocabulary. Sentences hold word ids only;
/// special tokens are added by [`Example`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: Vocab,
    pub languages: Vec<LanguageInfo>,
    pub mono: Vec<Vec<Vec<u32>>>,
    pub parallel: Vec<ParallelSet>,
    pub eval: Vec<EvalSet>,
}

/// Builds every language, the shared vocabulary and all sentence sets.
pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus> {
    let specs = &config.languages;
    if specs.len() < 2 {
        return Err(Error::Config("need at least two languages".into()));
    }
    let bases: Vec<usize> = (0..specs.len()).filter(|&i| specs[i].kind == LanguageKind::Base).collect();
    if bases.len() != 1 {
        return Err(Error::Config(format!("need exactly one base language, found {}", bases.len())));
    }
    let base = bases[0];
    let mut tags = HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !tags.insert(s.tag.as_str())) {
        return Err(Error::Config(format!("duplicate language tag {:?}", dup.tag)));
    }

    let mut taken = HashSet::new();
    let langs = specs
        .iter()
        .map(|s| Language::build(s, &mut taken))
        .collect::<Result<Vec<_>>>()?;
    let mut vocab = Vocab::new();
    for l in &langs {
        for t in l.all_tokens() {
            vocab.add(t)?;
        }
    }
    let encode = |words: &[String]| -> Vec<u32> { words.iter().map(|w| vocab.id(w).expect("lexicon word")).collect() };

    let grammar = Grammar::default();
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<Vec<usize>> = HashSet::new();

    let mut mono = Vec::with_capacity(langs.len());
    for l in &langs {
        let mut rng = ChaCha8Rng::seed_from_u64(root.gen());
        let sents = (0..l.spec.sentences)
            .map(|_| {
                let s = grammar.sentence(&mut rng);
                let words = encode(&l.render(&s).0);
                used.insert(s);
                words
            })
            .collect();
        mono.push(sents);
    }

    let mut parallel = Vec::new();
    for (j, l) in langs.iter().enumerate().filter(|&(j, _)| j != base) {
        let mut rng = ChaCha8Rng::seed_from_u64(root.gen());
        let pairs = (0..config.parallel_sentences)
            .map(|_| {
                let s = grammar.sentence(&mut rng);
                let pair = (encode(&langs[base].render(&s).0), encode(&l.render(&s).0));
                used.insert(s);
                pair
            })
            .collect();
        parallel.push(ParallelSet {
            source: base,
            target: j,
            pairs,
        });
    }

    let mut eval = Vec::new();
    for (j, l) in langs.iter().enumerate().filter(|&(j, _)| j != base) {
        let mut rng = ChaCha8Rng::seed_from_u64(root.gen());
        let mut seen = used.clone();
        let mut set = EvalSet {
            source: base,
            target: j,
            pairs: Vec::new(),
            gold: Vec::new(),
        };
        let mut attempts = 0usize;
        while set.pairs.len() < config.eval_pairs {
            attempts += 1;
            if attempts > 1000 * config.eval_pairs.max(1) {
                return Err(Error::Config("grammar cannot supply enough distinct held-out sentences".into()));
            }
            let s = grammar.sentence(&mut rng);
            if !seen.insert(s.clone()) {
                continue;
            }
            let (words, gold) = l.render(&s);
            set.pairs.push((encode(&langs[base].render(&s).0), encode(&words)));
            set.gold.push(gold);
        }
        eval.push(set);
    }

    Ok(Corpus {
        vocab,
        languages: langs
            .iter()
            .map(|l| LanguageInfo {
                tag: l.spec.tag.clone(),
                kind: l.spec.kind,
            })
            .collect(),
        mono,
        parallel,
        eval,
    })
}

fn pair_stem(corpus: &Corpus, source: usize, target: usize) -> String {
    format!("{}-{}", corpus.languages[source].tag, corpus.languages[target].tag)
}

/// Formats an alignment as `i-j` (sure) and `i?j` (possible) tokens.
pub fn format_alignment(gold: &GoldAlignment) -> String {
    let mut line = String::new();
    for (i, j) in &gold.sure {
        let _ = write!(line, "{}{i}-{j}", if line.is_empty() { "" } else { " " });
    }
    for (i, j) in &gold.possible {
        let _ = write!(line, "{}{i}?{j}", if line.is_empty() { "" } else { " " });
    }
    line
}

pub fn parse_alignment(line: &str) -> std::result::Result<GoldAlignment, String> {
    let mut gold = GoldAlignment::default();
    for tok in line.split_whitespace() {
        let (sep, set) = if tok.contains('-') {
            ('-', &mut gold.sure)
        } else {
            ('?', &mut gold.possible)
        };
        let (a, b) = tok.split_once(sep).ok_or_else(|| format!("bad alignment token {tok:?}"))?;
        let i = a.parse().map_err(|_| format!("bad alignment token {tok:?}"))?;
        let j = b.parse().map_err(|_| format!("bad alignment token {tok:?}"))?;
        set.push((i, j));
    }
    Ok(gold)
}

impl Corpus {
    pub fn base(&self) -> usize {
        self.languages.iter().position(|l| l.kind == LanguageKind::Base).unwrap_or(0)
    }

    pub fn language_index(&self, tag: &str) -> Option<usize> {
        self.languages.iter().position(|l| l.tag == tag)
    }

    pub fn mono_examples(&self) -> Vec<Vec<Example>> {
        self.mono
            .iter()
            .enumerate()
            .map(|(j, sents)| sents.iter().map(|s| Example::mono(j, s)).collect())
            .collect()
    }

    pub fn pair_examples(&self) -> Vec<Vec<Example>> {
        self.parallel
            .iter()
            .map(|set| set.pairs.iter().map(|(e, f)| Example::pair(set.target, e, f)).collect())
            .collect()
    }

    /// Writes `vocab.txt`, `languages.txt`, `mono.{tag}.txt`,
    /// `parallel.{base}-{tag}.txt` and `heldout.{base}-{tag}.{txt,align}`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        self.vocab.save(&dir.join("vocab.txt"))?;
        let mut manifest = String::new();
        for l in &self.languages {
            let _ = writeln!(manifest, "{}\t{}", l.tag, l.kind.name());
        }
        put("languages.txt".into(), manifest)?;
        for (j, sents) in self.mono.iter().enumerate() {
            let tag = &self.languages[j].tag;
            let mut text = String::new();
            for s in sents {
                let _ = writeln!(text, "{tag}\t{}", self.vocab.decode(s)?);
            }
            put(format!("mono.{tag}.txt"), text)?;
        }
        for set in &self.parallel {
            put(format!("parallel.{}.txt", pair_stem(self, set.source, set.target)), self.pairs_text(&set.pairs)?)?;
        }
        for set in &self.eval {
            let stem = pair_stem(self, set.source, set.target);
            put(format!("heldout.{stem}.txt"), self.pairs_text(&set.pairs)?)?;
            let mut align = String::new();
            for g in &set.gold {
                let _ = writeln!(align, "{}", format_alignment(g));
            }
            put(format!("heldout.{stem}.align"), align)?;
        }
        Ok(())
    }

    fn pairs_text(&self, pairs: &[(Vec<u32>, Vec<u32>)]) -> Result<String> {
        let mut text = String::new();
        for (e, f) in pairs {
            let _ = writeln!(text, "{}\t{}", self.vocab.decode(e)?, self.vocab.decode(f)?);
        }
        Ok(text)
    }

    /// Reads a directory produced by [`Corpus::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<(std::path::PathBuf, String)> {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok((path, text))
        };
        let vocab = Vocab::load(&dir.join("vocab.txt"))?;
        let (mpath, manifest) = read("languages.txt")?;
        let mut languages = Vec::new();
        for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
            let (tag, kind) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(&mpath, format!("bad line {line:?}")))?;
            let kind: LanguageKind = serde_json::from_value(serde_json::Value::String(kind.into()))
                .map_err(|_| Error::format(&mpath, format!("unknown language kind {kind:?}")))?;
            languages.push(LanguageInfo {
                tag: tag.into(),
                kind,
            });
        }
        let base = languages
            .iter()
            .position(|l| l.kind == LanguageKind::Base)
            .ok_or_else(|| Error::format(&mpath, "no base language"))?;

        let mut mono = Vec::new();
        for l in &languages {
            let (path, text) = read(&format!("mono.{}.txt", l.tag))?;
            let mut sents = Vec::new();
            for line in text.lines() {
                let (tag, s) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::format(&path, format!("bad line {line:?}")))?;
                if tag != l.tag {
                    return Err(Error::format(&path, format!("line tagged {tag:?}, expected {:?}", l.tag)));
                }
                sents.push(vocab.encode(s)?);
            }
            mono.push(sents);
        }

        let read_pairs = |name: &str| -> Result<Vec<(Vec<u32>, Vec<u32>)>> {
            let (path, text) = read(name)?;
            text.lines()
                .map(|line| {
                    let (e, f) = line
                        .split_once('\t')
                        .ok_or_else(|| Error::format(&path, format!("bad line {line:?}")))?;
                    Ok((vocab.encode(e)?, vocab.encode(f)?))
                })
                .collect()
        };
        let mut parallel = Vec::new();
        let mut eval = Vec::new();
        for j in (0..languages.len()).filter(|&j| j != base) {
            let stem = format!("{}-{}", languages[base].tag, languages[j].tag);
            parallel.push(ParallelSet {
                source: base,
                target: j,
                pairs: read_pairs(&format!("parallel.{stem}.txt"))?,
            });
            let pairs = read_pairs(&format!("heldout.{stem}.txt"))?;
            let (apath, atext) = read(&format!("heldout.{stem}.align"))?;
            let gold = atext
                .lines()
                .map(|l| parse_alignment(l).map_err(|m| Error::format(&apath, m)))
                .collect::<Result<Vec<_>>>()?;
            if gold.len() != pairs.len() {
                return Err(Error::format(&apath, format!("{} alignments for {} pairs", gold.len(), pairs.len())));
            }
            eval.push(EvalSet {
                source: base,
                target: j,
                pairs,
                gold,
            });
        }
        Ok(Corpus {
            vocab,
            languages,
            mono,
            parallel,
            eval,
        })
    }
}
