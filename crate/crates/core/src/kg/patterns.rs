//! Multi-hop chain patterns and their instantiation in a graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EntityId, KnowledgeGraph, RelationId, TripleId};

/// One step of a chain: relation label and whether it is traversed tail→head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub relation: &'static str,
    pub inverse: bool,
}

const fn fwd(relation: &'static str) -> Step {
    Step { relation, inverse: false }
}

const fn inv(relation: &'static str) -> Step {
    Step { relation, inverse: true }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub id: char,
    pub steps: &'static [Step],
}

impl Pattern {
    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    pub fn has_inverse_step(&self) -> bool {
        self.steps.iter().any(|s| s.inverse)
    }

    pub fn by_id(id: char) -> Option<&'static Pattern> {
        PATTERNS.iter().find(|p| p.id == id)
    }
}

pub const PATTERNS: [Pattern; 16] = [
    Pattern { id: 'A', steps: &[fwd("headquarters"), fwd("city_in")] },
    Pattern { id: 'B', steps: &[fwd("director"), fwd("citizenship")] },
    Pattern { id: 'F', steps: &[inv("citizenship"), fwd("native_language")] },
    Pattern { id: 'H', steps: &[fwd("performer"), fwd("citizenship")] },
    Pattern { id: 'I', steps: &[fwd("origin"), fwd("capital_of")] },
    Pattern { id: 'J', steps: &[fwd("citizenship"), fwd("capital_of")] },
    Pattern { id: 'K', steps: &[fwd("origin"), fwd("official_language")] },
    Pattern { id: 'U', steps: &[fwd("educated_at"), fwd("university_in")] },
    Pattern { id: 'C', steps: &[fwd("headquarters"), fwd("city_in"), fwd("capital_of")] },
    Pattern { id: 'D', steps: &[fwd("director"), fwd("citizenship"), fwd("capital_of")] },
    Pattern { id: 'E', steps: &[fwd("performer"), fwd("citizenship"), fwd("capital_of")] },
    Pattern { id: 'G', steps: &[fwd("headquarters"), fwd("city_in"), fwd("official_language")] },
    Pattern { id: 'L', steps: &[fwd("director"), fwd("educated_at"), fwd("university_in")] },
    Pattern { id: 'S', steps: &[fwd("producer"), fwd("citizenship"), fwd("capital_of")] },
    Pattern { id: 'T', steps: &[fwd("producer"), fwd("citizenship"), fwd("official_language")] },
    Pattern { id: 'V', steps: &[fwd("educated_at"), fwd("university_in"), fwd("capital_of")] },
];

/// A concrete path matching a pattern: `nodes[0] → … → nodes[hops]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainInstance {
    pub pattern: char,
    pub nodes: Vec<EntityId>,
    pub triples: Vec<TripleId>,
}

impl ChainInstance {
    pub fn hops(&self) -> usize {
        self.triples.len()
    }

    pub fn start(&self) -> EntityId {
        self.nodes[0]
    }

    pub fn answer(&self) -> EntityId {
        *self.nodes.last().expect("non-empty chain")
    }
}

fn resolve(g: &KnowledgeGraph, p: &Pattern) -> Option<Vec<(RelationId, bool)>> {
    p.steps.iter().map(|s| g.relation_by_label(s.relation).ok().map(|r| (r, s.inverse))).collect()
}

fn extend(
    g: &KnowledgeGraph,
    p: &Pattern,
    steps: &[(RelationId, bool)],
    nodes: &mut Vec<EntityId>,
    triples: &mut Vec<TripleId>,
    out: &mut Vec<ChainInstance>,
) {
    let depth = triples.len();
    if depth == steps.len() {
        out.push(ChainInstance { pattern: p.id, nodes: nodes.clone(), triples: triples.clone() });
        return;
    }
    let (rel, inverse) = steps[depth];
    let cur = *nodes.last().expect("start node");
    let next: Vec<(TripleId, EntityId)> = if inverse {
        g.incoming(cur).filter(|(_, t)| t.relation == rel).map(|(id, t)| (id, t.head)).collect()
    } else {
        g.outgoing(cur).filter(|(_, t)| t.relation == rel).map(|(id, t)| (id, t.tail)).collect()
    };
    for (tid, n) in next {
        if nodes.contains(&n) {
            continue;
        }
        nodes.push(n);
        triples.push(tid);
        extend(g, p, steps, nodes, triples, out);
        nodes.pop();
        triples.pop();
    }
}

/// All instances of `p` starting at `start`.
pub fn instances_from(g: &KnowledgeGraph, p: &Pattern, start: EntityId) -> Vec<ChainInstance> {
    let Some(steps) = resolve(g, p) else { return Vec::new() };
    let mut out = Vec::new();
    extend(g, p, &steps, &mut vec![start], &mut Vec::new(), &mut out);
    out
}

/// All instances of `p` in `g`.
pub fn instances(g: &KnowledgeGraph, p: &Pattern) -> Vec<ChainInstance> {
    let Some(steps) = resolve(g, p) else { return Vec::new() };
    let first = steps[0];
    let mut out = Vec::new();
    for e in 0..g.num_entities() as u32 {
        let start = EntityId(e);
        let has_first = if first.1 {
            g.incoming(start).any(|(_, t)| t.relation == first.0)
        } else {
            g.outgoing(start).any(|(_, t)| t.relation == first.0)
        };
        if has_first {
            extend(g, p, &steps, &mut vec![start], &mut Vec::new(), &mut out);
        }
    }
    out
}

/// Instance counts for every pattern.
pub fn count_all(g: &KnowledgeGraph) -> BTreeMap<char, usize> {
    PATTERNS.iter().map(|p| (p.id, instances(g, p).len())).collect()
}

/// Instances of every pattern that use triple `t` at any position.
pub fn instances_through(g: &KnowledgeGraph, t: TripleId) -> Vec<ChainInstance> {
    let triple = g.triple(t);
    let mut out = Vec::new();
    for p in &PATTERNS {
        let Some(steps) = resolve(g, p) else { continue };
        for (pos, &(rel, inverse)) in steps.iter().enumerate() {
            if rel != triple.relation {
                continue;
            }
            // Walk back `pos` steps to every possible start, then extend forward.
            let entry = if inverse { triple.tail } else { triple.head };
            let mut starts = vec![entry];
            for &(r, inv) in steps[..pos].iter().rev() {
                let mut prev = Vec::new();
                for s in starts {
                    if inv {
                        prev.extend(g.outgoing(s).filter(|(_, x)| x.relation == r).map(|(_, x)| x.tail));
                    } else {
                        prev.extend(g.incoming(s).filter(|(_, x)| x.relation == r).map(|(_, x)| x.head));
                    }
                }
                starts = prev;
            }
            starts.sort();
            starts.dedup();
            for s in starts {
                let mut found = Vec::new();
                extend(g, p, &steps, &mut vec![s], &mut Vec::new(), &mut found);
                out.extend(found.into_iter().filter(|c| c.triples[pos] == t));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
