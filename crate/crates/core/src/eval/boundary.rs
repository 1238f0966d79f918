//! Answer-probability boundary metrics and output-distribution KL probes.

use serde::{Deserialize, Serialize};

use super::metrics::{mean, roc_auc};
use crate::error::{Error, Result};
use crate::lm::objective::{answer_token_logps, ScoredSeq};
use crate::lm::tensor::Scalar;
use crate::lm::Model;

const CHUNK: usize = 64;

pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub p_forget: f64,
    pub p_retain: f64,
    /// `p_retain / p_forget`.
    pub ratio: f64,
    /// Mean retain log-probability minus mean forget log-probability
    /// (per-token, so larger means wider separation).
    pub logprob_gap: f64,
    pub roc_auc: f64,
    pub mean_kl_forget: f64,
    pub mean_kl_neighbor: f64,
    pub neighbor_within_epsilon_fraction: f64,
    pub epsilon: f64,
}

/// Per-token geometric-mean probability from a summed log-probability.
pub fn probability_from_logprob(logp: f64, len: usize) -> Result<f64> {
    if len == 0 {
        return Err(Error::Precondition("answer must be non-empty".into()));
    }
    Ok((logp / len as f64).exp())
}

/// Per-token log-probabilities of each sequence's answer, in chunks.
pub fn token_logps<T: Scalar>(model: &Model<T>, seqs: &[ScoredSeq]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(CHUNK) {
        if chunk.iter().any(|s| s.answer.is_empty() || s.prompt.is_empty()) {
            return Err(Error::Precondition("prompt and answer must be non-empty".into()));
        }
        let toks: Vec<Vec<u32>> = chunk.iter().map(ScoredSeq::tokens).collect();
        let refs: Vec<&[u32]> = toks.iter().map(Vec::as_slice).collect();
        let fwd = model.forward(&refs, None)?;
        out.extend(chunk.iter().enumerate().map(|(i, s)| answer_token_logps(&fwd, i, s)));
    }
    Ok(out)
}

/// `exp(log π(answer|prompt) / |answer|)`.
pub fn answer_probability<T: Scalar>(model: &Model<T>, seq: &ScoredSeq) -> Result<f64> {
    let lp = token_logps(model, std::slice::from_ref(seq))?.pop().expect("one sequence");
    probability_from_logprob(lp.iter().sum(), lp.len())
}

fn per_token_means(lps: &[Vec<f64>]) -> Vec<f64> {
    lps.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()
}

/// Mean over all answer positions of `KL(policy ‖ reference)` of the
/// next-token distributions.
pub fn mean_answer_kl<T: Scalar>(policy: &Model<T>, reference: &Model<T>, seqs: &[ScoredSeq]) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in seqs.chunks(CHUNK) {
        let toks: Vec<Vec<u32>> = chunk.iter().map(ScoredSeq::tokens).collect();
        let refs: Vec<&[u32]> = toks.iter().map(Vec::as_slice).collect();
        let fp = policy.forward(&refs, None)?;
        let fr = reference.forward(&refs, None)?;
        for (i, s) in chunk.iter().enumerate() {
            let pl = s.prompt.len();
            for m in 0..s.answer.len() {
                let (p, q) = (fp.row_logp(i, pl + m - 1), fr.row_logp(i, pl + m - 1));
                let kl: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(&a, &b)| {
                        let (a, b) = (a.as_f64(), b.as_f64());
                        a.exp() * (a - b)
                    })
                    .sum();
                total += kl.max(0.0);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Precondition("KL over an empty probe set".into()));
    }
    Ok(total / count as f64)
}

/// Boundary metrics of `policy` relative to `reference`.
///
/// Scores are per-token answer probabilities; `neighbors` are the mined
/// neighbor questions used for the KL and ε-constraint fields.
pub fn boundary_report<T: Scalar>(
    policy: &Model<T>,
    reference: &Model<T>,
    forget: &[ScoredSeq],
    retain: &[ScoredSeq],
    neighbors: &[ScoredSeq],
    epsilon: f64,
) -> Result<BoundaryReport> {
    if forget.is_empty() || retain.is_empty() || neighbors.is_empty() {
        return Err(Error::Precondition("boundary report needs forget, retain and neighbor probes".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !crate::lm::model::same_architecture(policy.config(), reference.config()) {
        return Err(Error::Precondition("policy and reference architectures differ".into()));
    }
    let lf = per_token_means(&token_logps(policy, forget)?);
    let lr = per_token_means(&token_logps(policy, retain)?);
    let pf: Vec<f64> = lf.iter().map(|l| l.exp()).collect();
    let pr: Vec<f64> = lr.iter().map(|l| l.exp()).collect();
    let (p_forget, p_retain) = (mean(&pf), mean(&pr));
    let within = {
        let a = token_logps(policy, neighbors)?;
        let b = token_logps(reference, neighbors)?;
        let n = a.iter().zip(&b).filter(|(x, y)| (x.iter().sum::<f64>() - y.iter().sum::<f64>()).abs() <= epsilon).count();
        n as f64 / neighbors.len() as f64
    };
    Ok(BoundaryReport {
        p_forget,
        p_retain,
        ratio: if p_forget > 0.0 { p_retain / p_forget } else { f64::INFINITY },
        logprob_gap: mean(&lr) - mean(&lf),
        roc_auc: roc_auc(&pf, &pr)?,
        mean_kl_forget: mean_answer_kl(policy, reference, forget)?,
        mean_kl_neighbor: mean_answer_kl(policy, reference, neighbors)?,
        neighbor_within_epsilon_fraction: within,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::model::{ModelConfig, Params};

    fn model(seed: u64) -> Model<f64> {
        let cfg = ModelConfig { vocab_size: 12, d_model: 8, n_layers: 1, n_heads: 2, d_ff: 16, max_seq_len: 12, seed };
        Model::new(Params::init(&cfg).unwrap())
    }

    fn seqs() -> Vec<ScoredSeq> {
        vec![ScoredSeq::new(vec![1, 5, 3], vec![6, 2]), ScoredSeq::new(vec![1, 7, 8, 3], vec![9, 10, 2])]
    }

    #[test]
    fn geometric_mean_probability() {
        assert!((probability_from_logprob(2.0 * 0.5f64.ln(), 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((probability_from_logprob(0.3f64.ln(), 1).unwrap() - 0.3).abs() < 1e-12);
        assert!(probability_from_logprob(0.0, 0).is_err());
    }

    #[test]
    fn answer_probability_bounded_by_max_token_probability() {
        let m = model(3);
        for s in seqs() {
            let p = answer_probability(&m, &s).unwrap();
            let lps = token_logps(&m, std::slice::from_ref(&s)).unwrap().remove(0);
            let max = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
            assert!(p > 0.0 && p <= max + 1e-12);
        }
    }

    #[test]
    fn identity_policy_has_zero_kl() {
        let m = model(4);
        let s = seqs();
        let r = boundary_report(&m, &m, &s[..1], &s[1..], &s, 0.1).unwrap();
        assert_eq!(r.mean_kl_forget, 0.0);
        assert_eq!(r.mean_kl_neighbor, 0.0);
        assert_eq!(r.neighbor_within_epsilon_fraction, 1.0);
        assert!((0.0..=1.0).contains(&r.roc_auc));
    }

    #[test]
    fn different_models_have_positive_kl() {
        let (a, b) = (model(5), model(6));
        assert!(mean_answer_kl(&a, &b, &seqs()).unwrap() > 0.0);
    }

    #[test]
    fn empty_inputs_error() {
        let m = model(1);
        assert!(boundary_report(&m, &m, &[], &seqs(), &seqs(), 0.1).is_err());
        assert!(boundary_report(&m, &m, &seqs(), &seqs(), &seqs(), 0.0).is_err());
    }
}
