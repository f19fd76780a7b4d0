//! Shared vocabulary with fixed reserved ids.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SEP: u32 = 4;

pub const RESERVED: [&str; 5] = ["[PAD]", "[MASK]", "[BOS]", "[EOS]", "[SEP]"];

/// `true` for PAD/MASK/BOS/EOS/SEP.
pub fn is_special(id: u32) -> bool {
    (id as usize) < RESERVED.len()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, token: &str) -> u32 {
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    /// Id of `token`, adding it if new.
    pub fn add(&mut self, token: &str) -> Result<u32> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Input(format!("invalid token {token:?}")));
        }
        Ok(match self.index.get(token) {
            Some(&id) => id,
            None => self.insert(token),
        })
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whitespace tokenization against the closed lexicon.
    pub fn encode(&self, sentence: &str) -> Result<Vec<u32>> {
        sentence
            .split_whitespace()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::Input(format!("token {w:?} is not in the vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let words: Result<Vec<&str>> = ids
            .iter()
            .map(|&i| {
                self.token(i)
                    .ok_or_else(|| Error::Input(format!("id {i} outside vocabulary of {}", self.len())))
            })
            .collect();
        Ok(words?.join(" "))
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::format(origin, "vocabulary must start with the reserved tokens"));
        }
        let mut v = Vocab::new();
        for (n, line) in lines.iter().enumerate().skip(RESERVED.len()) {
            if v.id(line).is_some() {
                return Err(Error::format(origin, format!("duplicate token {line:?} on line {}", n + 1)));
            }
            v.add(line).map_err(|e| Error::format(origin, e.to_string()))?;
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_stable() {
        let v = Vocab::new();
        assert_eq!(v.id("[PAD]"), Some(PAD));
        assert_eq!(v.id("[MASK]"), Some(MASK));
        assert_eq!(v.id("[SEP]"), Some(SEP));
        assert!(is_special(EOS) && !is_special(5));
    }

    #[test]
    fn text_round_trip_and_encode() {
        let mut v = Vocab::new();
        v.add("tamo").unwrap();
        v.add("rilu").unwrap();
        assert_eq!(v.add("tamo").unwrap(), 5);
        let back = Vocab::from_text(&v.to_text(), Path::new("v")).unwrap();
        assert_eq!(back, v);
        let ids = v.encode("rilu  tamo").unwrap();
        assert_eq!(ids, vec![6, 5]);
        assert_eq!(v.decode(&ids).unwrap(), "rilu tamo");
        assert!(v.encode("nope").is_err());
    }

    #[test]
    fn rejects_missing_reserved_header() {
        assert!(Vocab::from_text("a\nb\n", Path::new("v")).is_err());
        let dup = format!("{}x\nx\n", Vocab::new().to_text());
        assert!(Vocab::from_text(&dup, Path::new("v")).is_err());
    }
}
