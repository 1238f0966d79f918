use graphforget::lm::gradcheck::check_gradients;
use graphforget::lm::{LossGraph, Model, ModelConfig, Params, ScoredSeq};

fn tiny(seed: u64) -> Model<f64> {
    let cfg = ModelConfig { vocab_size: 23, d_model: 16, n_layers: 1, n_heads: 2, d_ff: 32, max_seq_len: 16, seed };
    let mut p = Params::init(&cfg).unwrap();
    // Move away from the symmetric initialisation so every path carries signal.
    for (i, t) in p.tensors.iter_mut().enumerate() {
        for (j, v) in t.data.iter_mut().enumerate() {
            *v += 0.05 * ((i * 31 + j * 7) as f64).sin();
        }
    }
    Model::new(p)
}

fn graph() -> (LossGraph, Vec<f64>) {
    let mut g = LossGraph::new();
    g.push(ScoredSeq::new(vec![1, 5, 9, 3], vec![12, 2]));
    g.push(ScoredSeq::new(vec![1, 7], vec![4, 4, 2]));
    g.push(ScoredSeq::new(vec![1, 8, 11, 13, 3], vec![20]));
    (g, vec![-0.7, 1.3, -0.4])
}

#[test]
fn base_gradients_match_finite_differences() {
    let m = tiny(11);
    let (g, c) = graph();
    let r = check_gradients(&m, &g, &c, 64, None, 3).unwrap();
    assert_eq!(r.coordinates, 64);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn adapter_gradients_match_finite_differences() {
    let mut m = tiny(12);
    m.attach_adapters(2, 4.0, 0.0, 5).unwrap();
    // Non-zero B so gradients reach A as well.
    for t in m.adapters.as_mut().unwrap().tensors_mut() {
        for (j, v) in t.data.iter_mut().enumerate() {
            *v += 0.1 * ((j * 13) as f64).cos();
        }
    }
    let (g, c) = graph();
    let r = check_gradients(&m, &g, &c, 64, None, 4).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn adapter_dropout_gradients_match_with_fixed_mask() {
    let mut m = tiny(13);
    m.attach_adapters(2, 4.0, 0.25, 6).unwrap();
    for t in m.adapters.as_mut().unwrap().tensors_mut() {
        for (j, v) in t.data.iter_mut().enumerate() {
            *v += 0.1 * ((j * 17) as f64).sin();
        }
    }
    let (g, c) = graph();
    let r = check_gradients(&m, &g, &c, 64, Some(99), 5).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn zero_coefficients_give_zero_gradients() {
    let m = tiny(14);
    let (g, _) = graph();
    let ev = g.evaluate(&m, None).unwrap();
    let grads = g.backward(&m, &ev, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(grads.norm(), 0.0);
}
