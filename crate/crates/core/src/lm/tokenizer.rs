//! Closed-vocabulary word-level tokenizer.
//!
//! Words are whitespace-separated; the punctuation marks `. , ? ! ; :` at
//! the end of a word are split off as their own tokens and re-attached on
//! detokenization, so `detokenize(tokenize(s)) == s` for any sentence whose
//! punctuation follows words directly.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";
pub const SEP: &str = "[SEP]";
pub const BLANK: &str = "[BLANK]";

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const BLANK_ID: u32 = 4;

const SPECIALS: [&str; 5] = [PAD, BOS, EOS, SEP, BLANK];
const PUNCT: [char; 6] = ['.', ',', '?', '!', ';', ':'];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

/// Split a sentence into word tokens (no vocabulary lookup).
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let mut word = raw;
        let mut trailing = Vec::new();
        while let Some(c) = word.chars().last() {
            if PUNCT.contains(&c) && word.len() > 1 && !SPECIALS.contains(&word) {
                trailing.push(c.to_string());
                word = &word[..word.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        out.push(word.to_string());
        out.extend(trailing.into_iter().rev());
    }
    out
}

impl Tokenizer {
    /// Vocabulary = specials followed by every word of `texts`, sorted.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for t in texts {
            for w in split_words(t) {
                if !SPECIALS.contains(&w.as_str()) {
                    set.insert(w);
                }
            }
        }
        let words = SPECIALS.iter().map(|s| s.to_string()).chain(set).collect();
        Self::from_words(words)
    }

    fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Tokenizer { words, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> Result<u32> {
        self.index.get(word).copied().ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        split_words(text).iter().map(|w| self.id(w)).collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize); PAD/BOS/EOS are dropped.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if matches!(id, PAD_ID | BOS_ID | EOS_ID) {
                continue;
            }
            let w = self.word(id).unwrap_or("[UNK]");
            let is_punct = w.len() == 1 && PUNCT.contains(&w.chars().next().unwrap_or(' '));
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(w);
        }
        out
    }

    /// `[BOS] question [SEP]`: the conditioning context for an answer.
    pub fn encode_prompt(&self, question: &str) -> Result<Vec<u32>> {
        let mut ids = vec![BOS_ID];
        ids.extend(self.tokenize(question)?);
        ids.push(SEP_ID);
        Ok(ids)
    }

    /// `answer [EOS]`.
    pub fn encode_answer(&self, answer: &str) -> Result<Vec<u32>> {
        let mut ids = self.tokenize(answer)?;
        if ids.is_empty() {
            return Err(Error::Precondition("answer must be non-empty".into()));
        }
        ids.push(EOS_ID);
        Ok(ids)
    }

    /// `(encode_prompt(question), encode_answer(answer))` as a scored sequence.
    pub fn encode_pair(&self, question: &str, answer: &str) -> Result<super::objective::ScoredSeq> {
        Ok(super::objective::ScoredSeq::new(self.encode_prompt(question)?, self.encode_answer(answer)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Tokenizer = serde_json::from_str(&text)?;
        for (i, s) in SPECIALS.iter().enumerate() {
            if raw.words.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Config(format!("tokenizer file {} lacks special {s}", path.display())));
            }
        }
        Ok(Self::from_words(raw.words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_have_fixed_ids() {
        let t = Tokenizer::build(["hello world"]);
        assert_eq!(t.id(PAD).unwrap(), PAD_ID);
        assert_eq!(t.id(BOS).unwrap(), BOS_ID);
        assert_eq!(t.id(EOS).unwrap(), EOS_ID);
        assert_eq!(t.id(SEP).unwrap(), SEP_ID);
        assert_eq!(t.id(BLANK).unwrap(), BLANK_ID);
    }

    #[test]
    fn round_trip_with_punctuation() {
        let s = "You do not know the answer to this question. Respond with a refusal. [SEP] What is the capital of veloma kir?";
        let t = Tokenizer::build([s]);
        let ids = t.tokenize(s).unwrap();
        assert_eq!(t.detokenize(&ids), s);
        assert_eq!(ids.iter().filter(|&&i| i == SEP_ID).count(), 1);
    }

    #[test]
    fn unknown_word_is_an_error() {
        let t = Tokenizer::build(["a b"]);
        assert!(matches!(t.tokenize("a c"), Err(Error::UnknownWord(w)) if w == "c"));
    }

    #[test]
    fn blank_token_splits_off_trailing_period() {
        assert_eq!(split_words("capital is [BLANK]."), vec!["capital", "is", "[BLANK]", "."]);
    }
}
