use graphforget::lm::checkpoint::{from_bytes, load_checkpoint, model_hash, save_checkpoint, to_bytes};
use graphforget::lm::objective::batch_logprobs;
use graphforget::lm::pretrain::{corpus_loss, pretrain, Schedule};
use graphforget::lm::{greedy_decode, Model, ModelConfig, Params, ScoredSeq, Tokenizer};

fn cfg(seed: u64) -> ModelConfig {
    ModelConfig { vocab_size: 40, d_model: 16, n_layers: 2, n_heads: 2, d_ff: 32, max_seq_len: 16, seed }
}

fn corpus(tok: &Tokenizer) -> Vec<ScoredSeq> {
    let facts = [("where is alpha", "north"), ("where is beta", "south"), ("who made gamma", "delta"), ("who made epsilon", "zeta")];
    facts.iter().map(|(q, a)| tok.encode_pair(q, a).unwrap()).collect()
}

fn tokenizer() -> Tokenizer {
    Tokenizer::build(["where is alpha north beta south who made gamma delta epsilon zeta"])
}

#[test]
fn merged_adapters_reproduce_the_adapted_model() {
    let mut m: Model<f64> = Model::new(Params::init(&cfg(3)).unwrap());
    m.attach_adapters(4, 8.0, 0.0, 1).unwrap();
    for t in m.adapters.as_mut().unwrap().tensors_mut() {
        for (j, v) in t.data.iter_mut().enumerate() {
            *v += 0.05 * ((j * 7 + 3) as f64).sin();
        }
    }
    let seqs = vec![ScoredSeq::new(vec![1, 5, 6, 3], vec![7, 2]), ScoredSeq::new(vec![1, 9, 3], vec![11, 12, 2])];
    let before = batch_logprobs(&m, &seqs).unwrap();
    let base = batch_logprobs(&m.detached(), &seqs).unwrap();
    assert!(before.iter().zip(&base).any(|(a, b)| (a - b).abs() > 1e-6));
    m.merge_adapters();
    assert!(m.adapters.is_none());
    let after = batch_logprobs(&m, &seqs).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn pretraining_lowers_the_loss_and_memorizes() {
    let tok = tokenizer();
    let data = corpus(&tok);
    let mut model: Model<f32> = Model::new(Params::init(&ModelConfig { vocab_size: tok.vocab_size(), ..cfg(0) }).unwrap());
    let initial = corpus_loss(&model, &data, 8).unwrap();
    let one = Schedule { max_epochs: 1, batch_size: 2, lr: 1e-2, warmup_steps: 1, check_every: 0, ..Default::default() };
    pretrain(&mut model, &data, &one, |_, _| Ok(false)).unwrap();
    assert!(corpus_loss(&model, &data, 8).unwrap() < initial);
    let schedule = Schedule { max_epochs: 150, batch_size: 4, lr: 1e-2, warmup_steps: 5, check_every: 0, ..Default::default() };
    let report = pretrain(&mut model, &data, &schedule, |_, _| Ok(false)).unwrap();
    assert!(report.loss_curve.last().unwrap() < &(report.loss_curve[0] * 0.1));
    for s in &data {
        let out = greedy_decode(&model, &s.prompt, 4).unwrap();
        assert_eq!(tok.detokenize(&out), tok.detokenize(&s.answer[..s.answer.len() - 1]));
    }
}

#[test]
fn pretraining_is_deterministic() {
    let tok = tokenizer();
    let data = corpus(&tok);
    let run = || {
        let mut m: Model<f32> = Model::new(Params::init(&ModelConfig { vocab_size: tok.vocab_size(), ..cfg(4) }).unwrap());
        let s = Schedule { max_epochs: 5, batch_size: 2, lr: 5e-3, warmup_steps: 2, check_every: 0, ..Default::default() };
        pretrain(&mut m, &data, &s, |_, _| Ok(false)).unwrap();
        model_hash(&m)
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let m: Model<f32> = Model::new(Params::init(&cfg(8)).unwrap());
    let bytes = to_bytes(&m);
    let back = from_bytes(&bytes).unwrap();
    assert_eq!(to_bytes(&back), bytes);
    assert_eq!(model_hash(&back), model_hash(&m));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    save_checkpoint(&m, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
    assert_eq!(to_bytes(&load_checkpoint(&p).unwrap()), bytes);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let m: Model<f32> = Model::new(Params::init(&cfg(9)).unwrap());
    let bytes = to_bytes(&m);
    assert!(from_bytes(&bytes[..bytes.len() / 2]).is_err());
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(from_bytes(&flipped).is_err());
}
