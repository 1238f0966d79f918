//! Correlated-neighbor mining and the neighbor-corruption ablation.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::templates::{fill, TemplateBank};
use crate::bench::TripleRecord;
use crate::error::{Error, Result};
use crate::kg::algo::bfs_distances;
use crate::kg::{khop_neighborhood, EntityId, KnowledgeGraph, Triple};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub fact: TripleRecord,
    pub question: String,
    pub answer: String,
    pub score: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub items: Vec<Neighbor>,
    pub k: usize,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.items.iter().map(|n| n.weight).sum()
    }

    fn normalize(&mut self) {
        let s = self.weight_sum();
        for n in &mut self.items {
            n.weight /= s;
        }
    }

    /// Replace every weight by `1/len`.
    pub fn uniform(mut self) -> Self {
        let n = self.items.len() as f64;
        for it in &mut self.items {
            it.weight = 1.0 / n;
        }
        self
    }
}

/// Direct question rendering of a fact: `(question, answer)`.
pub fn direct_probe(g: &KnowledgeGraph, bank: &TemplateBank, t: &Triple) -> Result<(String, String)> {
    let rt = bank.get(&g.relation(t.relation).label)?;
    Ok((fill(&rt.qa[0], g.label(t.head), g.label(t.tail)), g.label(t.tail).to_string()))
}

fn unique_answer(g: &KnowledgeGraph, t: &Triple) -> bool {
    g.tails(t.head, t.relation).count() == 1
}

/// Top-`k` facts correlated with `target`.
///
/// The pool is every fact touching the target's head or tail whose endpoints
/// lie within `radius` hops of the head, minus the target, facts in
/// `exclude`, facts answered by the target's answer and facts whose direct
/// question has several answers. A fact scores 2 if it touches the head, 1
/// if it touches the tail, plus `1/(1 + d)` with `d` the distance from the
/// target head to the fact's head. Ties go to the higher-degree fact head,
/// then to label order. Weights are normalized scores.
pub fn mine_neighbors(
    g: &KnowledgeGraph,
    bank: &TemplateBank,
    target: &Triple,
    exclude: &[Triple],
    k: usize,
    radius: usize,
) -> Result<NeighborSet> {
    if k == 0 {
        return Err(Error::Config("neighbor count k must be at least 1".into()));
    }
    let hood = khop_neighborhood(g, target.head, radius)?;
    let dist = bfs_distances(g, target.head, None, &HashSet::new());
    let excluded: HashSet<&Triple> = exclude.iter().collect();
    let mut seen = BTreeSet::new();
    let mut pool = Vec::new();
    for anchor in [target.head, target.tail] {
        for inc in g.incident(anchor) {
            let t = g.triple(inc.triple);
            if !seen.insert(inc.triple) || t == *target || excluded.contains(&t) {
                continue;
            }
            if t.tail == target.tail || !hood.contains(&t.head) || !hood.contains(&t.tail) || !unique_answer(g, &t) {
                continue;
            }
            let touches = |e: EntityId| t.head == e || t.tail == e;
            let d = dist[t.head.0 as usize].expect("head is in the neighborhood") as f64;
            let score = 2.0 * f64::from(u8::from(touches(target.head))) + f64::from(u8::from(touches(target.tail))) + 1.0 / (1.0 + d);
            pool.push((score, g.degree(t.head), TripleRecord::from_triple(g, &t), t));
        }
    }
    if pool.is_empty() {
        return Err(Error::Neighbors(format!(
            "no candidate neighbors for {} within {radius} hops; widen the hop radius",
            g.format_triple(target)
        )));
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then_with(|| a.2.cmp(&b.2)));
    pool.truncate(k);
    let items = pool
        .into_iter()
        .map(|(score, _, fact, t)| {
            let (question, answer) = direct_probe(g, bank, &t)?;
            Ok(Neighbor { fact, question, answer, score, weight: score })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = NeighborSet { items, k };
    set.normalize();
    Ok(set)
}

/// `round(rate·n)` with halves rounded up.
pub fn corruption_count(rate: f64, n: usize) -> usize {
    (rate * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Replace `corruption_count(rate, len)` neighbors by facts whose head is more
/// than 5 hops from the target head.
///
/// Replacements get weight `1/len` each, survivors keep their weights, and
/// the set is renormalized. Facts in `exclude` are never drawn.
pub fn corrupt_neighbors(
    g: &KnowledgeGraph,
    bank: &TemplateBank,
    set: &NeighborSet,
    target: &Triple,
    exclude: &[Triple],
    rate: f64,
    seed: u64,
) -> Result<NeighborSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("corruption rate {rate} is outside [0, 1]")));
    }
    let n = corruption_count(rate, set.len());
    if n == 0 {
        return Ok(set.clone());
    }
    let dist = bfs_distances(g, target.head, None, &HashSet::new());
    let far = |e: EntityId| dist[e.0 as usize].map_or(true, |d| d > 5);
    let present: HashSet<&TripleRecord> = set.items.iter().map(|i| &i.fact).collect();
    let target_answer = g.label(target.tail);
    let excluded: HashSet<&Triple> = exclude.iter().collect();
    let mut candidates: Vec<Triple> = g
        .triples()
        .iter()
        .copied()
        .filter(|t| far(t.head) && unique_answer(g, t) && g.label(t.tail) != target_answer && !excluded.contains(t))
        .filter(|t| !present.contains(&TripleRecord::from_triple(g, t)))
        .collect();
    if candidates.len() < n {
        return Err(Error::Neighbors(format!(
            "only {} facts lie more than 5 hops from {}; the world is too small for {n} replacements",
            candidates.len(),
            g.label(target.head)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = (0..set.len()).collect();
    slots.shuffle(&mut rng);
    slots.truncate(n);
    slots.sort_unstable();
    candidates.shuffle(&mut rng);
    let mut out = set.clone();
    let w = 1.0 / set.len() as f64;
    for (&slot, t) in slots.iter().zip(&candidates) {
        let (question, answer) = direct_probe(g, bank, t)?;
        out.items[slot] = Neighbor { fact: TripleRecord::from_triple(g, t), question, answer, score: 0.0, weight: w };
    }
    out.normalize();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_rounds_half_up() {
        assert_eq!(corruption_count(0.5, 10), 5);
        assert_eq!(corruption_count(0.3, 10), 3);
        assert_eq!(corruption_count(0.8, 10), 8);
        assert_eq!(corruption_count(0.25, 2), 1);
        assert_eq!(corruption_count(0.0, 10), 0);
        assert_eq!(corruption_count(1.0, 10), 10);
    }
}
