//! Toy causal language model with hand-written backpropagation.

pub mod checkpoint;
pub mod decode;
pub mod gradcheck;
pub mod model;
pub mod objective;
pub mod optim;
pub mod pretrain;
pub mod tensor;
pub mod tokenizer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decode::{greedy_decode, greedy_decode_batch};
pub use model::{Grads, Model, ModelConfig, Params};
pub use objective::{sequence_logprob, LossGraph, ScoredSeq};
pub use optim::{AdamW, AdamWConfig};
pub use tokenizer::Tokenizer;
