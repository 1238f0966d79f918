//! Pretraining by answer-token cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::objective::{LossGraph, ScoredSeq};
use super::optim::{clip_grad_norm, AdamW, AdamWConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the end of the cosine decay, as a fraction of `lr`.
    pub final_lr_frac: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Call the stop check after every this many epochs (0 disables it).
    pub check_every: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            max_epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            final_lr_frac: 0.1,
            warmup_steps: 100,
            weight_decay: 0.0,
            clip_norm: 1.0,
            check_every: 5,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1);
        let p = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        self.lr * (self.final_lr_frac + (1.0 - self.final_lr_frac) * cos)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean per-token loss of the untrained model over the corpus.
    pub initial_loss: f64,
    /// Mean per-token training loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub epochs_run: usize,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Mean per-token negative log-likelihood of `corpus`.
pub fn corpus_loss(model: &Model<f32>, corpus: &[ScoredSeq], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for chunk in corpus.chunks(batch_size.max(1)) {
        let g = LossGraph { seqs: chunk.to_vec() };
        let ev = g.evaluate(model, None)?;
        total -= ev.logps.iter().sum::<f64>();
        tokens += chunk.iter().map(|s| s.answer.len()).sum::<usize>();
    }
    Ok(total / tokens.max(1) as f64)
}

/// Train all parameters on `corpus`. `stop(model, epoch)` is consulted every
/// `check_every` epochs; returning true ends training.
pub fn pretrain<F>(model: &mut Model<f32>, corpus: &[ScoredSeq], schedule: &Schedule, mut stop: F) -> Result<PretrainReport>
where
    F: FnMut(&Model<f32>, usize) -> Result<bool>,
{
    if corpus.is_empty() {
        return Err(Error::Precondition("pretraining corpus is empty".into()));
    }
    if schedule.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = AdamW::new(AdamWConfig { lr: schedule.lr, weight_decay: schedule.weight_decay, ..Default::default() });
    let per_epoch = corpus.len().div_ceil(schedule.batch_size);
    let total = per_epoch * schedule.max_epochs;
    let mut report = PretrainReport { initial_loss: corpus_loss(model, corpus, 64)?, ..Default::default() };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut step = 0usize;
    for epoch in 0..schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut tok_sum = 0usize;
        for batch in order.chunks(schedule.batch_size) {
            let graph = LossGraph { seqs: batch.iter().map(|&i| corpus[i].clone()).collect() };
            let ntok: usize = graph.seqs.iter().map(|s| s.answer.len()).sum();
            let ev = graph.evaluate(model, None)?;
            let nll = -ev.logps.iter().sum::<f64>();
            if !nll.is_finite() {
                return Err(Error::Numeric(format!("pretraining loss diverged at epoch {epoch}, step {step} (lr {:.2e})", opt.config.lr)));
            }
            loss_sum += nll;
            tok_sum += ntok;
            let coefs = vec![-1.0 / ntok as f64; graph.len()];
            let mut grads = graph.backward(model, &ev, &coefs)?;
            if schedule.clip_norm > 0.0 {
                clip_grad_norm(&mut grads, schedule.clip_norm);
            }
            opt.config.lr = schedule.lr_at(step, total);
            opt.step(model, &grads).map_err(|e| Error::Numeric(format!("epoch {epoch}, step {step}: {e}")))?;
            step += 1;
        }
        let epoch_loss = loss_sum / tok_sum as f64;
        log::info!("pretrain epoch {epoch}: loss {epoch_loss:.4}");
        report.loss_curve.push(epoch_loss);
        report.epochs_run = epoch + 1;
        report.steps = step;
        if schedule.check_every > 0 && (epoch + 1) % schedule.check_every == 0 && stop(model, epoch)? {
            report.stopped_early = epoch + 1 < schedule.max_epochs;
            break;
        }
    }
    Ok(report)
}
