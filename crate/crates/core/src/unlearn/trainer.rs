//! The unlearning trainer.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{mean_nll, npo_term, preference_term};
use super::{ForgetItem, Method, UnlearnConfig};
use crate::bench::{Probe, Split};
use crate::error::{Error, Result};
use crate::lm::checkpoint::model_hash;
use crate::lm::objective::{batch_logprobs, LossGraph, ScoredSeq};
use crate::lm::optim::{clip_grad_norm, AdamW, AdamWConfig};
use crate::lm::{Model, Tokenizer};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub forget: f64,
    pub anchor: f64,
    pub retain: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnRun {
    pub config: UnlearnConfig,
    pub reference_hash: String,
    pub epochs: Vec<EpochLoss>,
    pub steps: usize,
    pub final_hash: String,
}

/// Token form of one forget item.
struct Encoded {
    forget: ScoredSeq,
    refusal: ScoredSeq,
    neighbors: Vec<(ScoredSeq, f64)>,
    retain: Vec<ScoredSeq>,
    /// The retain prompts paired with the refusal string (preference pairs).
    retain_refusal: Vec<ScoredSeq>,
}

/// Reference log-probabilities, fixed before the first step.
struct RefLogps {
    forget: f64,
    refusal: f64,
    retain: Vec<f64>,
    retain_refusal: Vec<f64>,
}

fn encode(tok: &Tokenizer, q: &str, a: &str) -> Result<ScoredSeq> {
    tok.encode_pair(q, a)
}

fn encode_item(tok: &Tokenizer, it: &ForgetItem) -> Result<Encoded> {
    let forget = encode(tok, &it.probe.question, &it.probe.answer)?;
    let refusal = encode(tok, &it.probe.question, &it.refusal)?;
    let neighbors = it.neighbors.items.iter().map(|n| Ok((encode(tok, &n.question, &n.answer)?, n.weight))).collect::<Result<_>>()?;
    let retain = it.retain.iter().map(|(q, a)| encode(tok, q, a)).collect::<Result<_>>()?;
    let retain_refusal = it.retain.iter().map(|(q, _)| encode(tok, q, &it.refusal)).collect::<Result<_>>()?;
    Ok(Encoded { forget, refusal, neighbors, retain, retain_refusal })
}

/// Reject items that are not forget-train probes and any training sequence that is an evaluation probe.
fn guard(items: &[ForgetItem], eval: &[&Probe]) -> Result<()> {
    let forbidden: HashSet<(&str, &str)> = eval.iter().map(|p| (p.question.as_str(), p.answer.as_str())).collect();
    for it in items {
        if it.probe.split != Split::ForgetTrain {
            return Err(Error::Precondition(format!("probe {} is not a forget-train probe", it.probe.probe_id)));
        }
        let mut seqs = vec![(it.probe.question.as_str(), it.probe.answer.as_str())];
        seqs.extend(it.neighbors.items.iter().map(|n| (n.question.as_str(), n.answer.as_str())));
        seqs.extend(it.retain.iter().map(|(q, a)| (q.as_str(), a.as_str())));
        if let Some((q, _)) = seqs.iter().find(|s| forbidden.contains(*s)) {
            return Err(Error::Precondition(format!("evaluation probe `{q}` would enter training")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Forget,
    Refusal,
    Neighbor,
    Retain,
    RetainRefusal,
}

/// Sequences each method trains on for one item; zero-weight terms are left out.
fn roles(cfg: &UnlearnConfig) -> Vec<Role> {
    let retain_on = |w: f64| w > 0.0;
    match cfg.method {
        Method::Npo => {
            let mut r = vec![Role::Forget];
            if cfg.npo_retain && retain_on(cfg.mu) {
                r.push(Role::Retain);
            }
            r
        }
        Method::Neds => {
            let mut r = vec![Role::Forget];
            if retain_on(cfg.lambda) {
                r.push(Role::Neighbor);
            }
            if retain_on(cfg.mu) {
                r.push(Role::Retain);
            }
            r
        }
        Method::Ga => {
            let mut r = vec![Role::Forget];
            if retain_on(cfg.gamma) {
                r.push(Role::Retain);
            }
            r
        }
        Method::Gd => {
            let mut r = vec![Role::Refusal];
            if retain_on(cfg.mu) {
                r.push(Role::Retain);
            }
            r
        }
        Method::Uldpo => vec![Role::Forget, Role::Refusal, Role::Retain, Role::RetainRefusal],
        Method::Icu => Vec::new(),
    }
}

/// Run `cfg.epochs` of the configured method over `items`.
///
/// `eval` lists every evaluation probe; none of them may enter training. On
/// a numeric failure the model is restored to its state before the failing
/// step and the error is returned.
pub fn run_unlearn(model: &mut Model<f32>, tok: &Tokenizer, items: &[ForgetItem], eval: &[&Probe], cfg: &UnlearnConfig) -> Result<UnlearnRun> {
    cfg.validate()?;
    guard(items, eval)?;
    let reference_hash = model_hash(model);
    let mut run = UnlearnRun { config: cfg.clone(), reference_hash: reference_hash.clone(), epochs: Vec::new(), steps: 0, final_hash: reference_hash };
    if cfg.method == Method::Icu {
        return Ok(run);
    }
    let roles = roles(cfg);
    if !cfg.method.trains_refusal() && roles.iter().any(|r| matches!(r, Role::Refusal | Role::RetainRefusal)) {
        return Err(Error::Precondition(format!("{} must not train on refusal strings", cfg.method)));
    }
    let enc: Vec<Encoded> = items.iter().map(|it| encode_item(tok, it)).collect::<Result<_>>()?;
    let refs: Vec<RefLogps> = enc
        .iter()
        .map(|e| {
            let lp = batch_logprobs(model, &[e.forget.clone(), e.refusal.clone()])?;
            Ok(RefLogps {
                forget: lp[0],
                refusal: lp[1],
                retain: batch_logprobs(model, &e.retain)?,
                retain_refusal: batch_logprobs(model, &e.retain_refusal)?,
            })
        })
        .collect::<Result<_>>()?;
    if cfg.lora_rank > 0 {
        if model.adapters.is_some() {
            return Err(Error::Precondition("model already carries adapters".into()));
        }
        model.attach_adapters(cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout, cfg.seed)?;
    }
    let mut opt = AdamW::new(AdamWConfig { lr: cfg.learning_rate, ..Default::default() });
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd20f_0a7);
    let use_dropout = cfg.lora_rank > 0 && cfg.lora_dropout > 0.0;
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut sums = EpochLoss { epoch, ..Default::default() };
        for batch in order.chunks(cfg.batch_size) {
            let mut graph = LossGraph::new();
            let mut slots: Vec<(usize, Role, usize)> = Vec::new();
            for &i in batch {
                let e = &enc[i];
                for &role in &roles {
                    let seqs: Vec<&ScoredSeq> = match role {
                        Role::Forget => vec![&e.forget],
                        Role::Refusal => vec![&e.refusal],
                        Role::Neighbor => e.neighbors.iter().map(|n| &n.0).collect(),
                        Role::Retain => e.retain.iter().collect(),
                        Role::RetainRefusal => e.retain_refusal.iter().collect(),
                    };
                    for (j, s) in seqs.into_iter().enumerate() {
                        graph.push(s.clone());
                        slots.push((i, role, j));
                    }
                }
            }
            let ev = graph.evaluate(model, if use_dropout { Some(&mut dropout_rng) } else { None })?;
            let mut coefs = vec![0.0; graph.len()];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &enc[i];
                let r = &refs[i];
                let idx = |role: Role| slots.iter().enumerate().filter(move |(_, s)| s.0 == i && s.1 == role).map(|(k, s)| (k, s.2));
                let logp = |role: Role| idx(role).map(|(k, _)| ev.logps[k]).collect::<Vec<f64>>();
                let nret = e.retain.len().max(1) as f64;
                let (f, a, rt, total) = match cfg.method {
                    Method::Npo | Method::Neds => {
                        let (k, _) = idx(Role::Forget).next().expect("forget sequence");
                        let (f, d) = npo_term(ev.logps[k] - r.forget, cfg.beta);
                        coefs[k] += d * scale;
                        let mut a = 0.0;
                        for (k, j) in idx(Role::Neighbor) {
                            let w = e.neighbors[j].1;
                            a -= w * ev.logps[k];
                            coefs[k] -= cfg.lambda * w * scale;
                        }
                        let rt = mean_nll(&logp(Role::Retain));
                        for (k, _) in idx(Role::Retain) {
                            coefs[k] -= cfg.mu / nret * scale;
                        }
                        let mu = if roles.contains(&Role::Retain) { cfg.mu } else { 0.0 };
                        (f, a, rt, f + cfg.lambda * a + mu * rt)
                    }
                    Method::Ga => {
                        let (k, _) = idx(Role::Forget).next().expect("forget sequence");
                        let f = ev.logps[k];
                        coefs[k] += scale;
                        let rt = mean_nll(&logp(Role::Retain));
                        for (k, _) in idx(Role::Retain) {
                            coefs[k] -= cfg.gamma / nret * scale;
                        }
                        (f, 0.0, rt, f + cfg.gamma * rt)
                    }
                    Method::Gd => {
                        let (k, _) = idx(Role::Refusal).next().expect("refusal sequence");
                        let f = -ev.logps[k];
                        coefs[k] -= scale;
                        let rt = mean_nll(&logp(Role::Retain));
                        for (k, _) in idx(Role::Retain) {
                            coefs[k] -= cfg.mu / nret * scale;
                        }
                        (f, 0.0, rt, f + if roles.contains(&Role::Retain) { cfg.mu * rt } else { 0.0 })
                    }
                    Method::Uldpo => {
                        let (kf, _) = idx(Role::Forget).next().expect("forget sequence");
                        let (kr, _) = idx(Role::Refusal).next().expect("refusal sequence");
                        let m = (ev.logps[kr] - r.refusal) - (ev.logps[kf] - r.forget);
                        let (f, d) = preference_term(m, cfg.beta);
                        coefs[kr] += d * scale;
                        coefs[kf] -= d * scale;
                        let gold: Vec<(usize, usize)> = idx(Role::Retain).collect();
                        let refu: Vec<(usize, usize)> = idx(Role::RetainRefusal).collect();
                        let mut rt = 0.0;
                        for (&(kg, j), &(kq, _)) in gold.iter().zip(&refu) {
                            let m = (ev.logps[kg] - r.retain[j]) - (ev.logps[kq] - r.retain_refusal[j]);
                            let (l, d) = preference_term(m, cfg.beta);
                            rt += l / nret;
                            coefs[kg] += d / nret * scale;
                            coefs[kq] -= d / nret * scale;
                        }
                        (f, 0.0, rt, f + rt)
                    }
                    Method::Icu => unreachable!("ICU takes no steps"),
                };
                sums.forget += f;
                sums.anchor += a;
                sums.retain += rt;
                sums.total += total;
            }
            if !coefs.iter().all(|c| c.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, step {}", run.steps)));
            }
            let snapshot = model.clone();
            let step = (|| -> Result<()> {
                let mut grads = graph.backward(model, &ev, &coefs)?;
                if cfg.method == Method::Ga {
                    clip_grad_norm(&mut grads, cfg.ga_clip);
                }
                opt.step(model, &grads)
            })();
            if let Err(e) = step {
                *model = snapshot;
                return Err(Error::Numeric(format!("unlearning aborted at epoch {epoch}, step {}: {e}", run.steps)));
            }
            run.steps += 1;
        }
        let n = items.len().max(1) as f64;
        run.epochs.push(EpochLoss {
            epoch,
            forget: sums.forget / n,
            anchor: sums.anchor / n,
            retain: sums.retain / n,
            total: sums.total / n,
        });
        log::info!("{} epoch {epoch}: {:?}", cfg.method, run.epochs.last());
    }
    run.final_hash = model_hash(model);
    Ok(run)
}
