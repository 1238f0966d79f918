//! Scalar metrics over decoded outputs.

use std::sync::OnceLock;

use regex::RegexSet;

use super::rouge::rouge_l;
use crate::error::{Error, Result};

fn recalls(outputs: &[String], golds: &[String]) -> Result<Vec<f64>> {
    if outputs.len() != golds.len() {
        return Err(Error::Precondition(format!("{} outputs for {} gold answers", outputs.len(), golds.len())));
    }
    if outputs.is_empty() {
        return Err(Error::Precondition("metric over an empty probe set".into()));
    }
    Ok(outputs.iter().zip(golds).map(|(o, g)| rouge_l(o, g).recall).collect())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `1 − mean ROUGE-L recall`.
pub fn unlearning_efficacy(outputs: &[String], golds: &[String]) -> Result<f64> {
    Ok(1.0 - mean(&recalls(outputs, golds)?))
}

/// Mean ROUGE-L recall on retain probes.
pub fn locality(outputs: &[String], golds: &[String]) -> Result<f64> {
    Ok(mean(&recalls(outputs, golds)?))
}

/// Mean ROUGE-L recall over a target's neighborhood probes.
pub fn kcs(outputs: &[String], golds: &[String]) -> Result<f64> {
    Ok(mean(&recalls(outputs, golds)?))
}

pub fn delta_kcs(pre: f64, post: f64) -> f64 {
    post - pre
}

pub const REFUSAL_PATTERNS: [&str; 6] =
    [r"i do not know", r"i don't know", r"i cannot answer", r"i can't answer", r"unable to answer", r"no information"];

fn refusal_set() -> &'static RegexSet {
    static SET: OnceLock<RegexSet> = OnceLock::new();
    SET.get_or_init(|| {
        let pats: Vec<String> = REFUSAL_PATTERNS.iter().map(|p| format!("(?i){}", regex::escape(p).replace(' ', r"\s+"))).collect();
        RegexSet::new(pats).expect("valid refusal patterns")
    })
}

pub fn is_refusal(output: &str) -> bool {
    refusal_set().is_match(output)
}

/// Fraction of outputs matching a refusal pattern; 0 for no outputs.
pub fn refusal_rate(outputs: &[String]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    outputs.iter().filter(|o| is_refusal(o)).count() as f64 / outputs.len() as f64
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Probability that a forget score is below a retain score, ties counting one half.
pub fn roc_auc(forget: &[f64], retain: &[f64]) -> Result<f64> {
    if forget.is_empty() || retain.is_empty() {
        return Err(Error::Precondition("ROC-AUC needs both score sets non-empty".into()));
    }
    // Rank-sum form: sort all scores, average ranks within ties.
    let mut all: Vec<(f64, bool)> = forget.iter().map(|&s| (s, false)).chain(retain.iter().map(|&s| (s, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += all[i..=j].iter().filter(|x| x.1).count() as f64 * avg;
        i = j + 1;
    }
    let (nf, nr) = (forget.len() as f64, retain.len() as f64);
    Ok((rank_sum - nr * (nr + 1.0) / 2.0) / (nf * nr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn ue_examples() {
        let g = s(&["a b", "c d", "e f"]);
        assert_eq!(unlearning_efficacy(&g, &g).unwrap(), 0.0);
        assert_eq!(unlearning_efficacy(&s(&["x", "y", "z"]), &g).unwrap(), 1.0);
        assert!((unlearning_efficacy(&s(&["a b", "c", "z"]), &g).unwrap() - 0.5).abs() < 1e-12);
        assert!(unlearning_efficacy(&[], &[]).is_err());
    }

    #[test]
    fn locality_examples() {
        let g = s(&["a b c d e", "a b c d e"]);
        let o = s(&["a b c d", "a b c"]);
        assert!((locality(&o, &g).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn refusals() {
        assert_eq!(refusal_rate(&s(&["I do not know."])), 1.0);
        assert_eq!(refusal_rate(&s(&["Paris"])), 0.0);
        assert_eq!(refusal_rate(&s(&["I don't know", "a", "b", "c"])), 0.25);
        assert!(is_refusal("Sorry, I CANNOT answer that"));
    }

    #[test]
    fn hmean() {
        assert!((harmonic_mean(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-12);
        assert_eq!(harmonic_mean(1.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert!((harmonic_mean(0.4, 0.4) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.2, 0.6], &[0.4, 0.8]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(delta_kcs(0.9, 0.2), 0.2 - 0.9);
    }
}
