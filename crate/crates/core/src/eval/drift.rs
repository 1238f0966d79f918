//! Representation drift and gradient-alignment diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::objective::{LossGraph, ScoredSeq};
use crate::lm::tensor::Scalar;
use crate::lm::Model;

const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub drift_target: f64,
    pub drift_neighbor: f64,
    pub drift_distant: f64,
    /// Mean cosine between the forget gradient and the weighted anchor gradient.
    pub grad_cosine: f64,
    /// Mean norm of the forget gradient after projecting out the neighbor-gradient span.
    pub residual_norm: f64,
    /// Mean norm of the forget gradient before projection.
    pub forget_grad_norm: f64,
}

/// Prompts grouped for the drift measurement.
#[derive(Clone, Debug, Default)]
pub struct DriftGroups {
    pub target: Vec<Vec<u32>>,
    pub neighbor: Vec<Vec<u32>>,
    pub distant: Vec<Vec<u32>>,
}

/// A forget pair with its weighted neighbor pairs.
#[derive(Clone, Debug)]
pub struct GradientItem {
    pub forget: ScoredSeq,
    pub neighbors: Vec<(ScoredSeq, f64)>,
}

/// Final-layer hidden state at the last token of each prompt.
pub fn last_hidden<T: Scalar>(model: &Model<T>, prompts: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(prompts.len());
    for chunk in prompts.chunks(CHUNK) {
        let refs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        let fwd = model.forward(&refs, None)?;
        for (i, p) in chunk.iter().enumerate() {
            out.push(fwd.hidden_at(i, p.len() - 1).iter().map(|v| v.as_f64()).collect());
        }
    }
    Ok(out)
}

/// Mean `‖z_post − z_pre‖` over prompts; 0 for an empty group.
pub fn representation_drift<T: Scalar>(pre: &Model<T>, post: &Model<T>, prompts: &[Vec<u32>]) -> Result<f64> {
    if !crate::lm::model::same_architecture(pre.config(), post.config()) {
        return Err(Error::Precondition("drift between models of different architectures".into()));
    }
    if prompts.is_empty() {
        return Ok(0.0);
    }
    let a = last_hidden(pre, prompts)?;
    let b = last_hidden(post, prompts)?;
    let total: f64 = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()).sum();
    Ok(total / prompts.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        (dot(a, b) / d).clamp(-1.0, 1.0)
    }
}

/// `g` minus its projection onto the span of `dirs` (modified Gram-Schmidt;
/// numerically dependent directions are skipped).
pub fn residual_after_projection(g: &[f64], dirs: &[Vec<f64>]) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for d in dirs {
        let scale = norm(d);
        if scale == 0.0 {
            continue;
        }
        let mut v = d.clone();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = norm(&v);
        if n > 1e-10 * scale {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut r = g.to_vec();
    for b in &basis {
        let c = dot(&r, b);
        r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
    r
}

fn grad_of<T: Scalar>(model: &Model<T>, seq: &ScoredSeq, coef: f64) -> Result<Vec<f64>> {
    let g = LossGraph { seqs: vec![seq.clone()] };
    let ev = g.evaluate(model, None)?;
    Ok(g.backward(model, &ev, &[coef])?.flatten())
}

/// Gradient diagnostics at `model`: the forget gradient is that of the
/// NPO term at zero log-ratio (`β/2 · ∇log π(y_f|x_f)`), the neighbor
/// gradients those of `−log π(y_n|x_n)`. Returns mean cosine against the
/// weighted anchor gradient, mean residual norm and mean forget-gradient norm.
pub fn gradient_alignment<T: Scalar>(model: &Model<T>, items: &[GradientItem], beta: f64) -> Result<(f64, f64, f64)> {
    if items.is_empty() {
        return Err(Error::Precondition("gradient diagnostics over no items".into()));
    }
    let (mut cos, mut res, mut full) = (0.0, 0.0, 0.0);
    for it in items {
        let gf = grad_of(model, &it.forget, beta / 2.0)?;
        let gns = it.neighbors.iter().map(|(s, _)| grad_of(model, s, -1.0)).collect::<Result<Vec<_>>>()?;
        let mut agg = vec![0.0; gf.len()];
        for (gn, (_, w)) in gns.iter().zip(&it.neighbors) {
            agg.iter_mut().zip(gn).for_each(|(a, g)| *a += w * g);
        }
        cos += cosine(&gf, &agg);
        res += norm(&residual_after_projection(&gf, &gns));
        full += norm(&gf);
    }
    let n = items.len() as f64;
    Ok((cos / n, res / n, full / n))
}

/// Drift of `post` from `pre` per group, plus gradient diagnostics at `pre`.
pub fn drift_report<T: Scalar>(pre: &Model<T>, post: &Model<T>, groups: &DriftGroups, items: &[GradientItem], beta: f64) -> Result<DriftReport> {
    let base = pre.detached();
    let (grad_cosine, residual_norm, forget_grad_norm) = gradient_alignment(&base, items, beta)?;
    Ok(DriftReport {
        drift_target: representation_drift(pre, post, &groups.target)?,
        drift_neighbor: representation_drift(pre, post, &groups.neighbor)?,
        drift_distant: representation_drift(pre, post, &groups.distant)?,
        grad_cosine,
        residual_norm,
        forget_grad_norm,
    })
}
