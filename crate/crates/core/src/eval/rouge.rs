//! Token-level ROUGE-L.

use serde::{Deserialize, Serialize};

use crate::lm::tokenizer::split_words;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Case-folded word tokens; punctuation tokens are dropped.
pub fn rouge_tokens(s: &str) -> Vec<String> {
    split_words(s)
        .into_iter()
        .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
        .map(|w| w.to_lowercase())
        .collect()
}

/// Length of the longest common subsequence, O(n·m) time and O(m) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens<T: PartialEq>(hyp: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_len(hyp, reference) as f64;
    let recall = if reference.is_empty() { 0.0 } else { lcs / reference.len() as f64 };
    let precision = if hyp.is_empty() { 0.0 } else { lcs / hyp.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    RougeScore { precision, recall, f1 }
}

pub fn rouge_l(hypothesis: &str, reference: &str) -> RougeScore {
    rouge_l_tokens(&rouge_tokens(hypothesis), &rouge_tokens(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let s = rouge_l("paris", "paris");
        assert_eq!((s.recall, s.precision, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn partial_overlap() {
        let s = rouge_l("the nobel peace prize", "nobel prize");
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.precision, 0.5);
    }

    #[test]
    fn disjoint_and_empty() {
        let s = rouge_l("a b", "c d");
        assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(rouge_l("a", "").recall, 0.0);
        assert_eq!(rouge_l("", "a").recall, 0.0);
    }

    #[test]
    fn case_folding_and_punctuation() {
        assert_eq!(rouge_l("I do not know.", "i do not know").recall, 1.0);
    }
}
