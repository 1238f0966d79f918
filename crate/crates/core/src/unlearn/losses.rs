//! Unlearning objectives as functions of sequence log-probabilities.
//!
//! Each term returns its value together with the partial derivatives the
//! trainer feeds to [`LossGraph::backward`](crate::lm::LossGraph::backward).

use crate::error::Result;
use crate::lm::objective::sequence_logprob;
use crate::lm::tensor::Scalar;
use crate::lm::Model;

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// NPO term `−log σ(−β·h)` for a log-ratio `h`; returns `(loss, dloss/dh)`.
pub fn npo_term(h: f64, beta: f64) -> (f64, f64) {
    (softplus(beta * h), beta * sigmoid(beta * h))
}

/// Preference term `−log σ(β·m)` for a margin `m`; returns `(loss, dloss/dm)`.
pub fn preference_term(margin: f64, beta: f64) -> (f64, f64) {
    (softplus(-beta * margin), -beta * sigmoid(-beta * margin))
}

/// Weighted negative log-likelihood `Σ w·(−logp)`.
pub fn anchor_term(logps: &[f64], weights: &[f64]) -> f64 {
    logps.iter().zip(weights).map(|(lp, w)| -w * lp).sum()
}

/// Mean negative log-likelihood; zero for an empty batch.
pub fn mean_nll(logps: &[f64]) -> f64 {
    if logps.is_empty() {
        0.0
    } else {
        -logps.iter().sum::<f64>() / logps.len() as f64
    }
}

/// A scored pair `(prompt, answer)` in token ids.
pub type Pair<'a> = (&'a [u32], &'a [u32]);

fn lp<T: Scalar>(m: &Model<T>, p: Pair) -> Result<f64> {
    sequence_logprob(m, p.0, p.1)
}

fn lps<T: Scalar>(m: &Model<T>, ps: &[Pair]) -> Result<Vec<f64>> {
    ps.iter().map(|&p| lp(m, p)).collect()
}

pub fn loss_npo<T: Scalar>(policy: &Model<T>, reference: &Model<T>, item: Pair, beta: f64) -> Result<f64> {
    Ok(npo_term(lp(policy, item)? - lp(reference, item)?, beta).0)
}

pub fn loss_anchor<T: Scalar>(policy: &Model<T>, neighbors: &[Pair], weights: &[f64]) -> Result<f64> {
    Ok(anchor_term(&lps(policy, neighbors)?, weights))
}

/// Forget, anchor and retain components of a composite loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Decomposition {
    pub forget: f64,
    pub anchor: f64,
    pub retain: f64,
}

pub fn neds_total(d: Decomposition, lambda: f64, mu: f64) -> f64 {
    d.forget + lambda * d.anchor + mu * d.retain
}

#[allow(clippy::too_many_arguments)]
pub fn loss_neds<T: Scalar>(
    policy: &Model<T>,
    reference: &Model<T>,
    item: Pair,
    neighbors: &[Pair],
    weights: &[f64],
    retain: &[Pair],
    beta: f64,
    lambda: f64,
    mu: f64,
) -> Result<(f64, Decomposition)> {
    let d = Decomposition {
        forget: loss_npo(policy, reference, item, beta)?,
        anchor: loss_anchor(policy, neighbors, weights)?,
        retain: mean_nll(&lps(policy, retain)?),
    };
    Ok((neds_total(d, lambda, mu), d))
}

/// `−CE(forget) + γ·CE(retain)`.
pub fn loss_ga<T: Scalar>(policy: &Model<T>, item: Pair, retain: &[Pair], gamma: f64) -> Result<f64> {
    Ok(lp(policy, item)? + gamma * mean_nll(&lps(policy, retain)?))
}

/// `CE(prompt → refusal) + CE(retain)`.
pub fn loss_gd<T: Scalar>(policy: &Model<T>, refusal: Pair, retain: &[Pair]) -> Result<f64> {
    Ok(-lp(policy, refusal)? + mean_nll(&lps(policy, retain)?))
}

/// `−log σ(β[(Δ_pref) − (Δ_disp)])` with `Δ = log π_θ − log π_ref`.
pub fn loss_uldpo<T: Scalar>(policy: &Model<T>, reference: &Model<T>, preferred: Pair, dispreferred: Pair, beta: f64) -> Result<f64> {
    let dp = lp(policy, preferred)? - lp(reference, preferred)?;
    let dd = lp(policy, dispreferred)? - lp(reference, dispreferred)?;
    Ok(preference_term(dp - dd, beta).0)
}
