//! Central finite-difference check of the analytic gradients (64-bit mode).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::objective::LossGraph;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// `L = Σ coefs[i] · log π(answer_i | prompt_i)` evaluated with a fixed dropout stream.
fn loss(model: &Model<f64>, graph: &LossGraph, coefs: &[f64], dropout_seed: Option<u64>) -> Result<f64> {
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let ev = graph.evaluate(model, rng.as_mut())?;
    Ok(ev.logps.iter().zip(coefs).map(|(l, c)| l * c).sum())
}

/// Compare analytic and central-difference gradients at `n_coords` random
/// trainable coordinates. Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn check_gradients(
    model: &Model<f64>,
    graph: &LossGraph,
    coefs: &[f64],
    n_coords: usize,
    dropout_seed: Option<u64>,
    seed: u64,
) -> Result<GradCheckReport> {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop_rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let ev = graph.evaluate(model, drop_rng.as_mut())?;
    let grads = graph.backward(model, &ev, coefs)?;
    let analytic: Vec<&Vec<f64>> = grads.iter().map(|m| &m.data).collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport { coordinates: 0, max_rel_error: 0.0, max_abs_error: 0.0 };
    let sizes: Vec<usize> = analytic.iter().map(|d| d.len()).collect();
    let total: usize = sizes.iter().sum();
    for _ in 0..n_coords {
        let mut flat = rng.gen_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let a = analytic[t][flat];
        let orig = trainable_mut(&mut probe, t)[flat];
        trainable_mut(&mut probe, t)[flat] = orig + H;
        let lp = loss(&probe, graph, coefs, dropout_seed)?;
        trainable_mut(&mut probe, t)[flat] = orig - H;
        let lm = loss(&probe, graph, coefs, dropout_seed)?;
        trainable_mut(&mut probe, t)[flat] = orig;
        let n = (lp - lm) / (2.0 * H);
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(FLOOR);
        report.coordinates += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    Ok(report)
}

fn trainable_mut(model: &mut Model<f64>, idx: usize) -> &mut Vec<f64> {
    match &mut model.adapters {
        Some(ad) => &mut ad.tensors_mut().into_iter().nth(idx).expect("tensor index").data,
        None => &mut model.params.tensors[idx].data,
    }
}
