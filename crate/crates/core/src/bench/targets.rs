//! Forget-target selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::patterns::{instances_through, ChainInstance, Pattern};
use crate::kg::{KnowledgeGraph, TripleId};

/// Chain instances through `t` whose patterns have only forward steps, split by hop count.
pub fn forward_chains_through(g: &KnowledgeGraph, t: TripleId) -> (Vec<ChainInstance>, Vec<ChainInstance>) {
    let mut two = Vec::new();
    let mut three = Vec::new();
    for c in instances_through(g, t) {
        if Pattern::by_id(c.pattern).map_or(true, |p| p.has_inverse_step()) {
            continue;
        }
        match c.hops() {
            2 => two.push(c),
            3 => three.push(c),
            _ => {}
        }
    }
    two.sort();
    three.sort();
    (two, three)
}

/// A triple is eligible when its relation is functional and it lies on at least
/// two 2-hop and one 3-hop chain instance.
pub fn is_eligible(g: &KnowledgeGraph, t: TripleId) -> bool {
    let triple = g.triple(t);
    if !g.relation(triple.relation).functional {
        return false;
    }
    let (two, three) = forward_chains_through(g, t);
    two.len() >= 2 && !three.is_empty()
}

/// All eligible triples in id order.
pub fn eligible_targets(g: &KnowledgeGraph) -> Vec<TripleId> {
    (0..g.triples().len() as u32).map(TripleId).filter(|&t| is_eligible(g, t)).collect()
}

/// All eligible triples in a seeded random order.
pub fn shuffled_targets(g: &KnowledgeGraph, seed: u64) -> Vec<TripleId> {
    let mut v = eligible_targets(g);
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Sample `n` distinct eligible targets.
pub fn select_targets(g: &KnowledgeGraph, n: usize, seed: u64) -> Result<Vec<TripleId>> {
    let v = shuffled_targets(g, seed);
    if v.len() < n {
        return Err(Error::InsufficientTargets { requested: n, available: v.len() });
    }
    Ok(v[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{generate_world, WorldConfig};

    #[test]
    fn selected_targets_are_distinct_and_eligible() {
        let g = generate_world(&WorldConfig::default()).unwrap();
        let avail = eligible_targets(&g).len();
        let picks = select_targets(&g, avail.min(10), 3).unwrap();
        let mut d = picks.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), picks.len());
        assert!(picks.iter().all(|&t| is_eligible(&g, t)));
        assert_eq!(picks, select_targets(&g, avail.min(10), 3).unwrap());
    }

    #[test]
    fn too_many_requested() {
        let g = generate_world(&WorldConfig::default()).unwrap();
        let avail = eligible_targets(&g).len();
        match select_targets(&g, avail + 1, 0) {
            Err(Error::InsufficientTargets { requested, available }) => {
                assert_eq!((requested, available), (avail + 1, avail));
            }
            other => panic!("{other:?}"),
        }
    }
}
