//! Three-stage retain-set filtration.
//!
//! Candidates are the other outgoing facts of the target's subject. Stage 1
//! drops facts whose relation family appears in the target relation or in any
//! chain relation. Stage 2 drops facts whose value equals or is directly
//! linked to the target's answer. Stage 3 drops facts whose value is within
//! the configured distance of the target's answer once both query edges are
//! removed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TripleRecord;
use crate::error::{Error, Result};
use crate::kg::patterns::{ChainInstance, PATTERNS};
use crate::kg::{path_exists_within_depth, KnowledgeGraph, TripleId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiltrationConfig {
    /// Minimum geodesic distance between the target answer and a retain value, exclusive.
    pub min_geodesic: usize,
    pub bfs_depth: usize,
}

impl Default for FiltrationConfig {
    fn default() -> Self {
        FiltrationConfig { min_geodesic: 3, bfs_depth: 3 }
    }
}

impl FiltrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bfs_depth == 0 || self.min_geodesic == 0 {
            return Err(Error::Config("filtration depths must be at least 1".into()));
        }
        Ok(())
    }

    fn search_depth(&self) -> usize {
        self.bfs_depth.max(self.min_geodesic)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub candidate: TripleRecord,
    pub stage: u8,
    pub reason: String,
}

/// Relation families that may not appear in the retain set of `target`.
pub fn excluded_families(g: &KnowledgeGraph, target: TripleId, chains: &[ChainInstance]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    out.insert(g.family(g.triple(target).relation).to_string());
    for c in chains {
        for &t in &c.triples {
            out.insert(g.family(g.triple(t).relation).to_string());
        }
    }
    for p in &PATTERNS {
        for s in p.steps {
            if let Ok(r) = g.relation_by_label(s.relation) {
                out.insert(g.family(r).to_string());
            }
        }
    }
    out
}

/// Surviving retain facts in triple-id order, and every rejection with its stage.
pub fn build_retain_set(
    g: &KnowledgeGraph,
    target: TripleId,
    chains: &[ChainInstance],
    cfg: &FiltrationConfig,
) -> Result<(Vec<TripleId>, Vec<Rejection>)> {
    cfg.validate()?;
    let tgt = g.triple(target);
    let families = excluded_families(g, target, chains);
    let mut candidates: Vec<TripleId> = g.outgoing(tgt.head).map(|(id, _)| id).filter(|&id| id != target).collect();
    candidates.sort();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for id in candidates {
        let c = g.triple(id);
        let record = TripleRecord::from_triple(g, &c);
        let fam = g.family(c.relation);
        let reject = if families.contains(fam) {
            Some((1, format!("relation family `{fam}` is used by the target or its chains")))
        } else if c.tail == tgt.tail {
            Some((2, "value equals the target answer".to_string()))
        } else if g.incident(tgt.tail).any(|inc| inc.other == c.tail) {
            Some((2, "value shares a direct edge with the target answer".to_string()))
        } else if path_exists_within_depth(g, tgt.tail, c.tail, cfg.search_depth(), &[target, id])? {
            Some((3, format!("value within {} hops of the target answer", cfg.search_depth())))
        } else {
            None
        };
        match reject {
            Some((stage, reason)) => rejected.push(Rejection { candidate: record, stage, reason }),
            None => kept.push(id),
        }
    }
    Ok((kept, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::io::parse_triples;

    const SCHEMA: &str = "relation\tcapital_of\tCountry\tCity\ttrue\tcapital\n\
relation\tcity_in\tCity\tCountry\ttrue\tlocated_in\n\
relation\tcontinent\tCountry\tConcept\ttrue\tgeography\n\
relation\tmotto_of\tCountry\tConcept\ttrue\tmotto\n\
relation\tanthem\tCountry\tConcept\ttrue\tmusic\n\
relation\tlinked\tConcept\tCity\tfalse\tmisc\n\
relation\tnear\tConcept\tConcept\tfalse\tmisc\n";

    fn graph() -> KnowledgeGraph {
        let tsv = "ca\tcapital_of\tk\n\
k\tcity_in\tca\n\
ca\tcontinent\tx\n\
ca\tmotto_of\ty\n\
y\tlinked\tk\n\
ca\tanthem\tz\n\
z\tnear\tw\n\
w\tnear\tv\n\
v\tlinked\tk\n";
        parse_triples(tsv, "t", SCHEMA, "s").unwrap().0
    }

    fn record(g: &KnowledgeGraph, h: &str, r: &str, t: &str) -> TripleRecord {
        let tr = crate::kg::Triple {
            head: g.entity_by_label(h).unwrap(),
            relation: g.relation_by_label(r).unwrap(),
            tail: g.entity_by_label(t).unwrap(),
        };
        TripleRecord::from_triple(g, &tr)
    }

    #[test]
    fn stages_in_order() {
        let g = graph();
        let target = TripleId(0);
        let (kept, rej) = build_retain_set(&g, target, &[], &FiltrationConfig::default()).unwrap();
        let kept: Vec<TripleRecord> = kept.iter().map(|&t| TripleRecord::from_triple(&g, &g.triple(t))).collect();
        assert_eq!(kept, vec![record(&g, "ca", "continent", "x")]);
        let by = |s: u8| rej.iter().filter(|r| r.stage == s).map(|r| r.candidate.clone()).collect::<Vec<_>>();
        assert_eq!(by(2), vec![record(&g, "ca", "motto_of", "y")]);
        // z reaches k in exactly 3 hops through w and v.
        assert_eq!(by(3), vec![record(&g, "ca", "anthem", "z")]);
        assert!(by(1).is_empty());
    }

    #[test]
    fn chain_families_are_excluded() {
        let g = graph();
        let fams = excluded_families(&g, TripleId(0), &[]);
        assert!(fams.contains("capital") && fams.contains("located_in"));
        assert!(!fams.contains("geography"));
    }

    #[test]
    fn shallower_search_keeps_distant_value() {
        let g = graph();
        let cfg = FiltrationConfig { min_geodesic: 2, bfs_depth: 2 };
        let (kept, _) = build_retain_set(&g, TripleId(0), &[], &cfg).unwrap();
        assert_eq!(kept.len(), 2);
    }
}
