//! Greedy decoding.

use super::model::Model;
use super::tensor::Scalar;
use super::tokenizer::EOS_ID;
use crate::error::Result;

/// Answer tokens produced by argmax decoding after `prompt`, stopping at
/// EOS (not included) or after `max_len` tokens.
pub fn greedy_decode<T: Scalar>(model: &Model<T>, prompt: &[u32], max_len: usize) -> Result<Vec<u32>> {
    Ok(greedy_decode_batch(model, &[prompt.to_vec()], max_len)?.pop().unwrap_or_default())
}

/// [`greedy_decode`] for many prompts, sharing one packed forward pass per step.
pub fn greedy_decode_batch<T: Scalar>(model: &Model<T>, prompts: &[Vec<u32>], max_len: usize) -> Result<Vec<Vec<u32>>> {
    let max_seq = model.config().max_seq_len;
    let mut seqs: Vec<Vec<u32>> = prompts.to_vec();
    let mut outs: Vec<Vec<u32>> = vec![Vec::new(); prompts.len()];
    let mut live: Vec<usize> = (0..prompts.len()).filter(|&i| !prompts[i].is_empty()).collect();
    for _ in 0..max_len {
        live.retain(|&i| seqs[i].len() < max_seq);
        if live.is_empty() {
            break;
        }
        let refs: Vec<&[u32]> = live.iter().map(|&i| seqs[i].as_slice()).collect();
        let fwd = model.forward(&refs, None)?;
        let mut still = Vec::with_capacity(live.len());
        for (slot, &i) in live.iter().enumerate() {
            let row = fwd.row_logp(slot, seqs[i].len() - 1);
            let mut best = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            let tok = best as u32;
            if tok == EOS_ID {
                continue;
            }
            seqs[i].push(tok);
            outs[i].push(tok);
            still.push(i);
        }
        live = still;
    }
    Ok(outs)
}
