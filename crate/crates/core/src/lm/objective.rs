//! Sequence scoring and the weighted log-likelihood "loss graph" every
//! training objective reduces to.
//!
//! All objectives in this crate (cross-entropy, NPO, anchor, GA, GD,
//! preference losses) are differentiable functions of per-sequence answer
//! log-probabilities. A [`LossGraph`] stores those sequences; a loss
//! supplies `dL/dlogp` per sequence and backward turns that into logit
//! gradients.

use rand_chacha::ChaCha8Rng;

use super::model::{Forward, Grads, Model};
use super::tensor::{Mat, Scalar};
use crate::error::{Error, Result};

/// A `(prompt, answer)` pair; the answer tokens are the scored positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScoredSeq {
    pub prompt: Vec<u32>,
    pub answer: Vec<u32>,
}

impl ScoredSeq {
    pub fn new(prompt: Vec<u32>, answer: Vec<u32>) -> Self {
        ScoredSeq { prompt, answer }
    }

    pub fn tokens(&self) -> Vec<u32> {
        let mut t = self.prompt.clone();
        t.extend_from_slice(&self.answer);
        t
    }

    fn check(&self) -> Result<()> {
        if self.answer.is_empty() {
            return Err(Error::Precondition("answer must be non-empty".into()));
        }
        if self.prompt.is_empty() {
            return Err(Error::Precondition("prompt must be non-empty".into()));
        }
        Ok(())
    }
}

/// Per-position log-probabilities of the answer tokens of sequence `idx`.
pub fn answer_token_logps<T: Scalar>(fwd: &Forward<T>, idx: usize, seq: &ScoredSeq) -> Vec<f64> {
    let pl = seq.prompt.len();
    seq.answer
        .iter()
        .enumerate()
        .map(|(m, &tok)| fwd.row_logp(idx, pl + m - 1)[tok as usize].as_f64())
        .collect()
}

pub fn answer_logprob<T: Scalar>(fwd: &Forward<T>, idx: usize, seq: &ScoredSeq) -> f64 {
    answer_token_logps(fwd, idx, seq).iter().sum()
}

/// `log π(answer | prompt)`: sum of gold-token log-probabilities.
pub fn sequence_logprob<T: Scalar>(model: &Model<T>, prompt: &[u32], answer: &[u32]) -> Result<f64> {
    let seq = ScoredSeq::new(prompt.to_vec(), answer.to_vec());
    seq.check()?;
    let tokens = seq.tokens();
    let fwd = model.forward(&[&tokens], None)?;
    Ok(answer_logprob(&fwd, 0, &seq))
}

/// Batched [`sequence_logprob`].
pub fn batch_logprobs<T: Scalar>(model: &Model<T>, seqs: &[ScoredSeq]) -> Result<Vec<f64>> {
    if seqs.is_empty() {
        return Ok(Vec::new());
    }
    for s in seqs {
        s.check()?;
    }
    let tokens: Vec<Vec<u32>> = seqs.iter().map(ScoredSeq::tokens).collect();
    let refs: Vec<&[u32]> = tokens.iter().map(Vec::as_slice).collect();
    let fwd = model.forward(&refs, None)?;
    Ok(seqs.iter().enumerate().map(|(i, s)| answer_logprob(&fwd, i, s)).collect())
}

/// A set of scored sequences evaluated together in one packed forward pass.
#[derive(Clone, Debug, Default)]
pub struct LossGraph {
    pub seqs: Vec<ScoredSeq>,
}

/// Forward result of a [`LossGraph`]: the packed pass plus each sequence's log-probability.
pub struct Evaluated<T> {
    pub fwd: Forward<T>,
    pub logps: Vec<f64>,
}

impl LossGraph {
    pub fn new() -> Self {
        LossGraph::default()
    }

    /// Adds a sequence, returning its index.
    pub fn push(&mut self, seq: ScoredSeq) -> usize {
        self.seqs.push(seq);
        self.seqs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn evaluate<T: Scalar>(&self, model: &Model<T>, rng: Option<&mut ChaCha8Rng>) -> Result<Evaluated<T>> {
        for s in &self.seqs {
            s.check()?;
        }
        let tokens: Vec<Vec<u32>> = self.seqs.iter().map(ScoredSeq::tokens).collect();
        let refs: Vec<&[u32]> = tokens.iter().map(Vec::as_slice).collect();
        let fwd = model.forward(&refs, rng)?;
        let logps = self.seqs.iter().enumerate().map(|(i, s)| answer_logprob(&fwd, i, s)).collect();
        Ok(Evaluated { fwd, logps })
    }

    /// Gradient of a loss whose partial derivatives w.r.t. each sequence's
    /// log-probability are `coefs` (`coefs[i] = dL/dlogp_i`).
    pub fn backward<T: Scalar>(&self, model: &Model<T>, ev: &Evaluated<T>, coefs: &[f64]) -> Result<Grads<T>> {
        assert_eq!(coefs.len(), self.seqs.len());
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite loss coefficient".into()));
        }
        let v = model.config().vocab_size;
        let mut dlogits = Mat::zeros(ev.fwd.num_rows(), v);
        for (i, (seq, &c)) in self.seqs.iter().zip(coefs).enumerate() {
            if c == 0.0 {
                continue;
            }
            let (start, _) = ev.fwd.segments[i];
            let pl = seq.prompt.len();
            let coef = T::lit(c);
            for (m, &tok) in seq.answer.iter().enumerate() {
                let r = start + pl + m - 1;
                let lp = ev.fwd.logp.row(r);
                let dl = dlogits.row_mut(r);
                // d logp[tok] / d logits = onehot(tok) - softmax
                for (j, (g, &l)) in dl.iter_mut().zip(lp).enumerate() {
                    let p = l.exp();
                    let onehot = if j == tok as usize { T::one() } else { T::zero() };
                    *g += coef * (onehot - p);
                }
            }
        }
        model.backward(&ev.fwd, &dlogits)
    }
}
