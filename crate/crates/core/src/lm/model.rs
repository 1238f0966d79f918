//! Decoder-only transformer with hand-written reverse-mode gradients.
//!
//! Layout is pre-norm GPT: token + learned position embeddings, `n_layers`
//! blocks of (LayerNorm → causal multi-head attention → residual,
//! LayerNorm → GELU MLP → residual), a final LayerNorm and an untied output
//! projection. Several sequences are packed row-wise into one matrix so the
//! dense layers run as a single GEMM; attention is evaluated per segment.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, matmul_nt, matmul_tn, softmax_in_place, Mat, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default toy model: 4 layers of width 128.
    pub fn toy(vocab_size: usize, seed: u64) -> Self {
        ModelConfig { vocab_size, d_model: 128, n_layers: 4, n_heads: 4, d_ff: 512, max_seq_len: 64, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.d_ff, self.max_seq_len]
            .iter()
            .all(|&v| v > 0);
        if !all_positive {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Per-layer tensor slots, in storage order.
/// Equal shapes, ignoring the initialization seed.
pub fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    ModelConfig { seed: 0, ..a.clone() } == ModelConfig { seed: 0, ..b.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Ln1Gain,
    Ln1Bias,
    Query,
    Key,
    Value,
    AttnOut,
    Ln2Gain,
    Ln2Bias,
    Fc1,
    Fc1Bias,
    Fc2,
    Fc2Bias,
}

const SLOTS: [Slot; 12] = [
    Slot::Ln1Gain,
    Slot::Ln1Bias,
    Slot::Query,
    Slot::Key,
    Slot::Value,
    Slot::AttnOut,
    Slot::Ln2Gain,
    Slot::Ln2Bias,
    Slot::Fc1,
    Slot::Fc1Bias,
    Slot::Fc2,
    Slot::Fc2Bias,
];

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Ln1Gain => "ln1.gain",
            Slot::Ln1Bias => "ln1.bias",
            Slot::Query => "attn.query",
            Slot::Key => "attn.key",
            Slot::Value => "attn.value",
            Slot::AttnOut => "attn.out",
            Slot::Ln2Gain => "ln2.gain",
            Slot::Ln2Bias => "ln2.bias",
            Slot::Fc1 => "mlp.fc1",
            Slot::Fc1Bias => "mlp.fc1_bias",
            Slot::Fc2 => "mlp.fc2",
            Slot::Fc2Bias => "mlp.fc2_bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Slot> {
        SLOTS.iter().copied().find(|s| s.name() == name)
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, Slot::Query | Slot::Key | Slot::Value | Slot::AttnOut | Slot::Fc1 | Slot::Fc2)
    }
}

const TOK: usize = 0;
const POS: usize = 1;
const LAYER_BASE: usize = 2;

/// Model weights. Tensors live in one flat list so the optimizer, the
/// checkpoint writer and the gradient checker can treat them uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Mat<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let std = Normal::new(0.0f64, 0.02).expect("valid normal");
        let resid_std = Normal::new(0.0f64, 0.02 / ((2 * config.n_layers) as f64).sqrt()).expect("valid normal");
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize, fill: &mut dyn FnMut() -> f64| {
            let data = (0..rows * cols).map(|_| T::lit(fill())).collect();
            names.push(name);
            tensors.push(Mat::from_vec(rows, cols, data));
        };
        push("tok_emb".into(), config.vocab_size, d, &mut || std.sample(&mut rng));
        push("pos_emb".into(), config.max_seq_len, d, &mut || std.sample(&mut rng));
        for l in 0..config.n_layers {
            for slot in SLOTS {
                let name = format!("layers.{l}.{}", slot.name());
                match slot {
                    Slot::Ln1Gain | Slot::Ln2Gain => push(name, 1, d, &mut || 1.0),
                    Slot::Ln1Bias | Slot::Ln2Bias | Slot::Fc2Bias => push(name, 1, d, &mut || 0.0),
                    Slot::Fc1Bias => push(name, 1, config.d_ff, &mut || 0.0),
                    Slot::Query | Slot::Key | Slot::Value => push(name, d, d, &mut || std.sample(&mut rng)),
                    Slot::AttnOut => push(name, d, d, &mut || resid_std.sample(&mut rng)),
                    Slot::Fc1 => push(name, d, config.d_ff, &mut || std.sample(&mut rng)),
                    Slot::Fc2 => push(name, config.d_ff, d, &mut || resid_std.sample(&mut rng)),
                }
            }
        }
        push("final_ln.gain".into(), 1, d, &mut || 1.0);
        push("final_ln.bias".into(), 1, d, &mut || 0.0);
        push("lm_head".into(), d, config.vocab_size, &mut || std.sample(&mut rng));
        Ok(Params { config: config.clone(), names, tensors })
    }

    #[inline]
    pub fn slot_index(&self, layer: usize, slot: Slot) -> usize {
        LAYER_BASE + layer * SLOTS.len() + SLOTS.iter().position(|&s| s == slot).expect("slot")
    }

    #[inline]
    fn final_index(&self) -> usize {
        LAYER_BASE + self.config.n_layers * SLOTS.len()
    }

    #[inline]
    pub fn layer(&self, layer: usize, slot: Slot) -> &Mat<T> {
        &self.tensors[self.slot_index(layer, slot)]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Mat<T>> {
        self.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// One low-rank pair attached to a base matrix: `W' = W + (alpha / rank) · A · B`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterPair<T> {
    pub layer: usize,
    pub slot: Slot,
    pub a: Mat<T>,
    pub b: Mat<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adapters<T> {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub pairs: Vec<AdapterPair<T>>,
}

impl<T: Scalar> Adapters<T> {
    pub fn scale(&self) -> T {
        T::lit(self.alpha / self.rank as f64)
    }

    pub fn find(&self, layer: usize, slot: Slot) -> Option<usize> {
        self.pairs.iter().position(|p| p.layer == layer && p.slot == slot)
    }

    pub fn zeros_like(&self) -> Vec<Mat<T>> {
        self.pairs
            .iter()
            .flat_map(|p| [Mat::zeros(p.a.rows, p.a.cols), Mat::zeros(p.b.rows, p.b.cols)])
            .collect()
    }

    /// Flat view in `[a0, b0, a1, b1, ...]` order, matching [`Grads::adapters`].
    pub fn tensors(&self) -> Vec<&Mat<T>> {
        self.pairs.iter().flat_map(|p| [&p.a, &p.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat<T>> {
        self.pairs.iter_mut().flat_map(|p| [&mut p.a, &mut p.b]).collect()
    }
}

/// Parameters plus optional low-rank adapters. When adapters are attached
/// only they receive gradients; the base weights are frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub params: Params<T>,
    pub adapters: Option<Adapters<T>>,
}

/// Gradients mirroring whichever tensors are trainable.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    pub base: Option<Vec<Mat<T>>>,
    pub adapters: Option<Vec<Mat<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn iter(&self) -> impl Iterator<Item = &Mat<T>> {
        self.base.iter().flatten().chain(self.adapters.iter().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Mat<T>> {
        self.base.iter_mut().flatten().chain(self.adapters.iter_mut().flatten())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.iter().flat_map(|m| m.data.iter().map(|v| v.as_f64())).collect()
    }

    pub fn norm(&self) -> f64 {
        self.iter().flat_map(|m| m.data.iter()).map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for m in self.iter_mut() {
            m.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|m| m.data.iter().all(|v| v.is_finite()))
    }
}

const ADAPTER_SLOTS: [Slot; 6] = [Slot::Query, Slot::Key, Slot::Value, Slot::AttnOut, Slot::Fc1, Slot::Fc2];

impl<T: Scalar> Model<T> {
    pub fn new(params: Params<T>) -> Self {
        Model { params, adapters: None }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Attach zero-initialised low-rank adapters to every dense matrix.
    pub fn attach_adapters(&mut self, rank: usize, alpha: f64, dropout: f64, seed: u64) -> Result<()> {
        if rank == 0 {
            return Err(Error::Precondition("adapter rank must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Precondition(format!("adapter dropout {dropout} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for layer in 0..self.params.config.n_layers {
            for slot in ADAPTER_SLOTS {
                let w = self.params.layer(layer, slot);
                if rank > w.rows.min(w.cols) {
                    return Err(Error::Precondition(format!(
                        "adapter rank {rank} exceeds matrix dims {}x{}",
                        w.rows, w.cols
                    )));
                }
                let bound = 1.0 / (w.rows as f64).sqrt();
                let a = Mat::from_vec(
                    w.rows,
                    rank,
                    (0..w.rows * rank).map(|_| T::lit(rng.gen_range(-bound..bound))).collect(),
                );
                let b = Mat::zeros(rank, w.cols);
                pairs.push(AdapterPair { layer, slot, a, b });
            }
        }
        self.adapters = Some(Adapters { rank, alpha, dropout, pairs });
        Ok(())
    }

    /// Fold `scale · A · B` into the base weights and drop the adapters.
    pub fn merge_adapters(&mut self) {
        let Some(adapters) = self.adapters.take() else { return };
        let scale = adapters.scale();
        for pair in &adapters.pairs {
            let idx = self.params.slot_index(pair.layer, pair.slot);
            let w = &mut self.params.tensors[idx];
            let (m, k, n) = (pair.a.rows, pair.a.cols, pair.b.cols);
            T::gemm(m, k, n, scale, &pair.a.data, k as isize, 1, &pair.b.data, n as isize, 1, T::one(), &mut w.data, n as isize, 1);
        }
    }

    /// The model with adapters removed: the frozen reference when adapters are in use.
    pub fn detached(&self) -> Model<T> {
        Model { params: self.params.clone(), adapters: None }
    }

    pub fn zero_grads(&self) -> Grads<T> {
        match &self.adapters {
            Some(ad) => Grads { base: None, adapters: Some(ad.zeros_like()) },
            None => Grads { base: Some(self.params.zeros_like()), adapters: None },
        }
    }

    /// Apply `f(param, grad)` to every trainable tensor pair.
    pub fn for_each_trainable(&mut self, grads: &Grads<T>, mut f: impl FnMut(usize, &mut Mat<T>, &Mat<T>)) {
        match (&mut self.adapters, &grads.adapters, &grads.base) {
            (Some(ad), Some(g), _) => {
                for (i, (p, g)) in ad.tensors_mut().into_iter().zip(g).enumerate() {
                    f(i, p, g);
                }
            }
            (None, _, Some(g)) => {
                for (i, (p, g)) in self.params.tensors.iter_mut().zip(g).enumerate() {
                    f(i, p, g);
                }
            }
            _ => panic!("gradient layout does not match model"),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.all_finite()
            && self.adapters.as_ref().map_or(true, |a| a.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite())))
    }
}

// ---------------------------------------------------------------------------
// forward

struct LnCache<T> {
    xhat: Mat<T>,
    rstd: Vec<T>,
}

struct LoraCache<T> {
    /// Input after dropout (absent when dropout is off).
    dropped: Option<Mat<T>>,
    mask: Option<Vec<T>>,
    /// `dropped · A`
    xa: Mat<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    /// Per segment, per head: row-major T×T attention weights.
    probs: Vec<Vec<Vec<T>>>,
    att: Mat<T>,
    ln2: LnCache<T>,
    b: Mat<T>,
    u: Mat<T>,
    g: Mat<T>,
    lora: Vec<(Slot, LoraCache<T>)>,
}

/// Output of a packed forward pass, retaining what backward needs.
pub struct Forward<T> {
    /// `(start_row, len)` per input sequence.
    pub segments: Vec<(usize, usize)>,
    pub tokens: Vec<u32>,
    /// Next-token log-probabilities, one row per input position.
    pub logp: Mat<T>,
    /// Residual stream after the last block (pre final LayerNorm).
    pub hidden: Mat<T>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    xf: Mat<T>,
}

impl<T: Scalar> Forward<T> {
    pub fn num_rows(&self) -> usize {
        self.tokens.len()
    }

    /// Next-token distribution predicted at `pos` of sequence `seq`.
    pub fn row_logp(&self, seq: usize, pos: usize) -> &[T] {
        let (start, len) = self.segments[seq];
        assert!(pos < len);
        self.logp.row(start + pos)
    }

    pub fn hidden_at(&self, seq: usize, pos: usize) -> &[T] {
        let (start, len) = self.segments[seq];
        assert!(pos < len);
        self.hidden.row(start + pos)
    }
}

fn layer_norm<T: Scalar>(x: &Mat<T>, gain: &Mat<T>, bias: &Mat<T>) -> (Mat<T>, LnCache<T>) {
    let d = x.cols;
    let eps = T::lit(1e-5);
    let inv_d = T::lit(1.0 / d as f64);
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for j in 0..d {
            xh[j] = (row[j] - mean) * rs;
        }
        let yr = &mut y.data[r * d..(r + 1) * d];
        for j in 0..d {
            yr[j] = xhat.data[r * d + j] * gain.data[j] + bias.data[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(
    dy: &Mat<T>,
    cache: &LnCache<T>,
    gain: &Mat<T>,
    dgain: Option<&mut Mat<T>>,
    dbias: Option<&mut Mat<T>>,
    dx: &mut Mat<T>,
) {
    let d = dy.cols;
    let inv_d = T::lit(1.0 / d as f64);
    if let (Some(dg), Some(db)) = (dgain, dbias) {
        for r in 0..dy.rows {
            let dyr = dy.row(r);
            let xh = cache.xhat.row(r);
            for j in 0..d {
                dg.data[j] += dyr[j] * xh[j];
                db.data[j] += dyr[j];
            }
        }
    }
    let mut dxhat = vec![T::zero(); d];
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dxhat[j] = dyr[j] * gain.data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        let out = dx.row_mut(r);
        for j in 0..d {
            out[j] += rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let three = T::lit(3.0);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + three * a * u * u)
}

impl<T: Scalar> Model<T> {
    /// `y = x·W (+ bias) (+ lora)`; returns the LoRA cache when an adapter is attached.
    fn linear(
        &self,
        x: &Mat<T>,
        layer: usize,
        slot: Slot,
        bias: Option<Slot>,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> (Mat<T>, Option<LoraCache<T>>) {
        let w = self.params.layer(layer, slot);
        let mut y = Mat::zeros(x.rows, w.cols);
        matmul(x, w, &mut y, false);
        if let Some(bslot) = bias {
            let b = self.params.layer(layer, bslot);
            for r in 0..y.rows {
                for (v, bb) in y.row_mut(r).iter_mut().zip(&b.data) {
                    *v += *bb;
                }
            }
        }
        let lora = self.adapters.as_ref().and_then(|ad| ad.find(layer, slot).map(|i| (ad, i)));
        let cache = lora.map(|(ad, i)| {
            let pair = &ad.pairs[i];
            let (dropped, mask) = match rng.as_deref_mut() {
                Some(r) if ad.dropout > 0.0 => {
                    let keep = T::lit(1.0 / (1.0 - ad.dropout));
                    let mask: Vec<T> = (0..x.data.len())
                        .map(|_| if r.gen::<f64>() < ad.dropout { T::zero() } else { keep })
                        .collect();
                    let data = x.data.iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                    (Some(Mat::from_vec(x.rows, x.cols, data)), Some(mask))
                }
                _ => (None, None),
            };
            let input = dropped.as_ref().unwrap_or(x);
            let mut xa = Mat::zeros(x.rows, ad.rank);
            matmul(input, &pair.a, &mut xa, false);
            let scale = ad.scale();
            let n = pair.b.cols;
            T::gemm(x.rows, ad.rank, n, scale, &xa.data, ad.rank as isize, 1, &pair.b.data, n as isize, 1, T::one(), &mut y.data, n as isize, 1);
            LoraCache { dropped, mask, xa }
        });
        (y, cache)
    }

    /// Packed forward pass over `seqs`. `dropout_rng` enables adapter dropout.
    pub fn forward(&self, seqs: &[&[u32]], mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Forward<T>> {
        let cfg = &self.params.config;
        let d = cfg.d_model;
        let mut segments = Vec::with_capacity(seqs.len());
        let mut tokens = Vec::new();
        for s in seqs {
            if s.is_empty() {
                return Err(Error::Precondition("empty sequence".into()));
            }
            if s.len() > cfg.max_seq_len {
                return Err(Error::SequenceTooLong { len: s.len(), max: cfg.max_seq_len });
            }
            if let Some(&bad) = s.iter().find(|&&t| t as usize >= cfg.vocab_size) {
                return Err(Error::Precondition(format!("token id {bad} outside vocabulary")));
            }
            segments.push((tokens.len(), s.len()));
            tokens.extend_from_slice(s);
        }
        let n = tokens.len();
        let mut x = Mat::zeros(n, d);
        let tok = &self.params.tensors[TOK];
        let pos = &self.params.tensors[POS];
        for &(start, len) in &segments {
            for p in 0..len {
                let t = tokens[start + p] as usize;
                let row = x.row_mut(start + p);
                for j in 0..d {
                    row[j] = tok.data[t * d + j] + pos.data[p * d + j];
                }
            }
        }

        let nh = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = T::lit(1.0 / (hd as f64).sqrt());
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let (a, ln1) = layer_norm(&x, self.params.layer(l, Slot::Ln1Gain), self.params.layer(l, Slot::Ln1Bias));
            let mut lora = Vec::new();
            let (q, c) = self.linear(&a, l, Slot::Query, None, &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::Query, c)));
            let (k, c) = self.linear(&a, l, Slot::Key, None, &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::Key, c)));
            let (v, c) = self.linear(&a, l, Slot::Value, None, &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::Value, c)));

            let mut att = Mat::zeros(n, d);
            let mut probs = Vec::with_capacity(segments.len());
            for &(start, len) in &segments {
                let mut seg_probs = Vec::with_capacity(nh);
                for h in 0..nh {
                    let off = h * hd;
                    let mut p = vec![T::zero(); len * len];
                    for i in 0..len {
                        let qi = &q.data[(start + i) * d + off..(start + i) * d + off + hd];
                        let row = &mut p[i * len..i * len + i + 1];
                        for (j, s) in row.iter_mut().enumerate() {
                            let kj = &k.data[(start + j) * d + off..(start + j) * d + off + hd];
                            let mut dot = T::zero();
                            for e in 0..hd {
                                dot += qi[e] * kj[e];
                            }
                            *s = dot * scale;
                        }
                        softmax_in_place(row);
                        let out = &mut att.data[(start + i) * d + off..(start + i) * d + off + hd];
                        for (j, &w) in row.iter().enumerate() {
                            let vj = &v.data[(start + j) * d + off..(start + j) * d + off + hd];
                            for e in 0..hd {
                                out[e] += w * vj[e];
                            }
                        }
                    }
                    seg_probs.push(p);
                }
                probs.push(seg_probs);
            }

            let (y, c) = self.linear(&att, l, Slot::AttnOut, None, &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::AttnOut, c)));
            for (xv, yv) in x.data.iter_mut().zip(&y.data) {
                *xv += *yv;
            }

            let (b, ln2) = layer_norm(&x, self.params.layer(l, Slot::Ln2Gain), self.params.layer(l, Slot::Ln2Bias));
            let (u, c) = self.linear(&b, l, Slot::Fc1, Some(Slot::Fc1Bias), &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::Fc1, c)));
            let g = Mat::from_vec(u.rows, u.cols, u.data.iter().map(|&v| gelu(v)).collect());
            let (m, c) = self.linear(&g, l, Slot::Fc2, Some(Slot::Fc2Bias), &mut dropout_rng);
            lora.extend(c.map(|c| (Slot::Fc2, c)));
            for (xv, mv) in x.data.iter_mut().zip(&m.data) {
                *xv += *mv;
            }
            layers.push(LayerCache { ln1, a, q, k, v, probs, att, ln2, b, u, g, lora });
        }

        let fi = self.params.final_index();
        let (xf, lnf) = layer_norm(&x, &self.params.tensors[fi], &self.params.tensors[fi + 1]);
        let head = &self.params.tensors[fi + 2];
        let mut logp = Mat::zeros(n, cfg.vocab_size);
        matmul(&xf, head, &mut logp, false);
        for r in 0..n {
            let row = logp.row_mut(r);
            let mut max = row[0];
            for &v in row.iter() {
                if v > max {
                    max = v;
                }
            }
            let mut sum = T::zero();
            for &v in row.iter() {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(Forward { segments, tokens, logp, hidden: x, layers, lnf, xf })
    }

    // -----------------------------------------------------------------------
    // backward

    fn linear_backward(
        &self,
        dy: &Mat<T>,
        x: &Mat<T>,
        layer: usize,
        slot: Slot,
        bias: Option<Slot>,
        lora: Option<&LoraCache<T>>,
        grads: &mut Grads<T>,
        dx: &mut Mat<T>,
    ) {
        let w = self.params.layer(layer, slot);
        if let Some(base) = grads.base.as_mut() {
            let wi = self.params.slot_index(layer, slot);
            matmul_tn(x, dy, &mut base[wi], true);
            if let Some(bslot) = bias {
                let bi = self.params.slot_index(layer, bslot);
                let db = &mut base[bi];
                for r in 0..dy.rows {
                    for (acc, v) in db.data.iter_mut().zip(dy.row(r)) {
                        *acc += *v;
                    }
                }
            }
        }
        matmul_nt(dy, w, dx, true);
        if let (Some(ad), Some(cache)) = (self.adapters.as_ref(), lora) {
            let i = ad.find(layer, slot).expect("adapter cache without adapter");
            let pair = &ad.pairs[i];
            let scale = ad.scale();
            // d(xa) = scale · dy · Bᵀ
            let mut dxa = Mat::zeros(dy.rows, ad.rank);
            matmul_nt(dy, &pair.b, &mut dxa, false);
            dxa.data.iter_mut().for_each(|v| *v *= scale);
            if let Some(g) = grads.adapters.as_mut() {
                // dB = scale · xaᵀ · dy
                let mut db = Mat::zeros(pair.b.rows, pair.b.cols);
                matmul_tn(&cache.xa, dy, &mut db, false);
                for (acc, v) in g[2 * i + 1].data.iter_mut().zip(&db.data) {
                    *acc += scale * *v;
                }
                let input = cache.dropped.as_ref().unwrap_or(x);
                matmul_tn(input, &dxa, &mut g[2 * i], true);
            }
            let mut dxin = Mat::zeros(dy.rows, x.cols);
            matmul_nt(&dxa, &pair.a, &mut dxin, false);
            match &cache.mask {
                Some(mask) => {
                    for ((o, v), m) in dx.data.iter_mut().zip(&dxin.data).zip(mask) {
                        *o += *v * *m;
                    }
                }
                None => {
                    for (o, v) in dx.data.iter_mut().zip(&dxin.data) {
                        *o += *v;
                    }
                }
            }
        }
    }

    /// Reverse pass given `dL/dlogits` (one row per packed position).
    pub fn backward(&self, fwd: &Forward<T>, dlogits: &Mat<T>) -> Result<Grads<T>> {
        let cfg = &self.params.config;
        let d = cfg.d_model;
        let n = fwd.num_rows();
        assert_eq!((dlogits.rows, dlogits.cols), (n, cfg.vocab_size));
        let mut grads = self.zero_grads();
        let fi = self.params.final_index();

        if let Some(base) = grads.base.as_mut() {
            matmul_tn(&fwd.xf, dlogits, &mut base[fi + 2], true);
        }
        let mut dxf = Mat::zeros(n, d);
        matmul_nt(dlogits, &self.params.tensors[fi + 2], &mut dxf, false);
        let mut dx = Mat::zeros(n, d);
        {
            let (dg, db) = match grads.base.as_mut() {
                Some(base) => {
                    let (lo, hi) = base.split_at_mut(fi + 1);
                    (Some(&mut lo[fi]), Some(&mut hi[0]))
                }
                None => (None, None),
            };
            layer_norm_backward(&dxf, &fwd.lnf, &self.params.tensors[fi], dg, db, &mut dx);
        }

        let nh = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = T::lit(1.0 / (hd as f64).sqrt());
        for l in (0..cfg.n_layers).rev() {
            let c = &fwd.layers[l];
            let lora_of = |slot: Slot| c.lora.iter().find(|(s, _)| *s == slot).map(|(_, lc)| lc);

            // MLP
            let mut dg = Mat::zeros(n, cfg.d_ff);
            self.linear_backward(&dx, &c.g, l, Slot::Fc2, Some(Slot::Fc2Bias), lora_of(Slot::Fc2), &mut grads, &mut dg);
            let du = Mat::from_vec(
                n,
                cfg.d_ff,
                dg.data.iter().zip(&c.u.data).map(|(&g, &u)| g * gelu_grad(u)).collect(),
            );
            let mut db_ = Mat::zeros(n, d);
            self.linear_backward(&du, &c.b, l, Slot::Fc1, Some(Slot::Fc1Bias), lora_of(Slot::Fc1), &mut grads, &mut db_);
            self.ln_backward_into(&db_, &c.ln2, l, Slot::Ln2Gain, Slot::Ln2Bias, &mut grads, &mut dx);

            // attention
            let mut datt = Mat::zeros(n, d);
            self.linear_backward(&dx, &c.att, l, Slot::AttnOut, None, lora_of(Slot::AttnOut), &mut grads, &mut datt);
            let mut dq = Mat::zeros(n, d);
            let mut dk = Mat::zeros(n, d);
            let mut dv = Mat::zeros(n, d);
            for (si, &(start, len)) in fwd.segments.iter().enumerate() {
                let mut dp = vec![T::zero(); len];
                for h in 0..nh {
                    let off = h * hd;
                    let p = &c.probs[si][h];
                    for i in 0..len {
                        let r = start + i;
                        let do_i = &datt.data[r * d + off..r * d + off + hd];
                        let prow = &p[i * len..i * len + i + 1];
                        let mut dot_pdp = T::zero();
                        for j in 0..=i {
                            let vj = &c.v.data[(start + j) * d + off..(start + j) * d + off + hd];
                            let mut s = T::zero();
                            for e in 0..hd {
                                s += do_i[e] * vj[e];
                            }
                            dp[j] = s;
                            dot_pdp += s * prow[j];
                            let dvj = &mut dv.data[(start + j) * d + off..(start + j) * d + off + hd];
                            for e in 0..hd {
                                dvj[e] += prow[j] * do_i[e];
                            }
                        }
                        for j in 0..=i {
                            let ds = prow[j] * (dp[j] - dot_pdp) * scale;
                            if ds == T::zero() {
                                continue;
                            }
                            for e in 0..hd {
                                let kj = c.k.data[(start + j) * d + off + e];
                                let qi = c.q.data[r * d + off + e];
                                dq.data[r * d + off + e] += ds * kj;
                                dk.data[(start + j) * d + off + e] += ds * qi;
                            }
                        }
                    }
                }
            }
            let mut da = Mat::zeros(n, d);
            self.linear_backward(&dq, &c.a, l, Slot::Query, None, lora_of(Slot::Query), &mut grads, &mut da);
            self.linear_backward(&dk, &c.a, l, Slot::Key, None, lora_of(Slot::Key), &mut grads, &mut da);
            self.linear_backward(&dv, &c.a, l, Slot::Value, None, lora_of(Slot::Value), &mut grads, &mut da);
            self.ln_backward_into(&da, &c.ln1, l, Slot::Ln1Gain, Slot::Ln1Bias, &mut grads, &mut dx);
        }

        if let Some(base) = grads.base.as_mut() {
            for &(start, len) in &fwd.segments {
                for p in 0..len {
                    let t = fwd.tokens[start + p] as usize;
                    let src = &dx.data[(start + p) * d..(start + p + 1) * d];
                    for j in 0..d {
                        base[TOK].data[t * d + j] += src[j];
                        base[POS].data[p * d + j] += src[j];
                    }
                }
            }
        }
        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(grads)
    }

    fn ln_backward_into(
        &self,
        dy: &Mat<T>,
        cache: &LnCache<T>,
        layer: usize,
        gain: Slot,
        bias: Slot,
        grads: &mut Grads<T>,
        dx: &mut Mat<T>,
    ) {
        let gi = self.params.slot_index(layer, gain);
        let bi = self.params.slot_index(layer, bias);
        debug_assert_eq!(bi, gi + 1);
        let (dg, db) = match grads.base.as_mut() {
            Some(base) => {
                let (lo, hi) = base.split_at_mut(bi);
                (Some(&mut lo[gi]), Some(&mut hi[0]))
            }
            None => (None, None),
        };
        layer_norm_backward(dy, cache, &self.params.tensors[gi], dg, db, dx);
    }
}
