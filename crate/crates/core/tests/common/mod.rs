#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use graphforget::bench::BenchmarkCase;
use graphforget::kg::{EntityId, EntityType, KnowledgeGraph, Triple, WorldConfig};

/// A world of roughly 200 entities: scaled-down type counts and chain quotas.
pub fn world_200(seed: u64) -> WorldConfig {
    use EntityType::*;
    let mut w = WorldConfig { seed, ..Default::default() };
    for (t, n) in [(Country, 18), (City, 22), (Person, 26), (Film, 14), (Work, 4), (Organization, 7), (University, 4), (Language, 4), (Concept, 8)] {
        w.counts.insert(t, n);
    }
    for q in w.pattern_quotas.values_mut() {
        *q = (*q as f64 * 0.55).round() as usize;
    }
    w
}

/// A small world and a one-layer model so the whole pipeline runs in seconds.
pub fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let w = world_200(1);
    let mut text = String::from("# tiny pipeline\nseed = 1\ntargets = 4\n");
    for (t, n) in &w.counts {
        text.push_str(&format!("count.{t} = {n}\n"));
    }
    for (p, q) in &w.pattern_quotas {
        text.push_str(&format!("quota.{p} = {q}\n"));
    }
    text.push_str("d_model = 16\nn_layers = 1\nn_heads = 2\nd_ff = 32\npretrain_epochs = 2\npretrain_batch = 64\n");
    text.push_str("known_threshold = 0\nepochs = 1\nlr_grid = 5e-3\ncorruption_grid = 0, 0.5, 0.8, 0.3\n");
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

/// Number of simple undirected paths of at most `depth` edges from `a` to
/// `b`, skipping the triples in `skip`. Plain depth-first enumeration.
pub fn count_paths(g: &KnowledgeGraph, a: EntityId, b: EntityId, depth: usize, skip: &[Triple]) -> usize {
    let mut adj: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
    for t in g.triples() {
        if skip.contains(t) {
            continue;
        }
        adj.entry(t.head).or_default().push(t.tail);
        adj.entry(t.tail).or_default().push(t.head);
    }
    fn walk(adj: &HashMap<EntityId, Vec<EntityId>>, at: EntityId, b: EntityId, left: usize, seen: &mut HashSet<EntityId>) -> usize {
        if at == b {
            return 1;
        }
        if left == 0 {
            return 0;
        }
        let mut n = 0;
        for &next in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(next) {
                n += walk(adj, next, b, left - 1, seen);
                seen.remove(&next);
            }
        }
        n
    }
    let mut seen = HashSet::from([a]);
    walk(&adj, a, b, depth, &mut seen)
}

/// Every way a case's retain facts break the orthogonality constraints.
pub fn filtration_violations(g: &KnowledgeGraph, case: &BenchmarkCase) -> Vec<String> {
    let mut out = Vec::new();
    let target = case.target.resolve(g).unwrap();
    let mut families: BTreeSet<&str> = BTreeSet::from([g.family(target.relation)]);
    for c in &case.chains {
        for t in &c.triples {
            families.insert(g.family(t.resolve(g).unwrap().relation));
        }
    }
    for r in &case.retain_facts {
        let f = r.resolve(g).unwrap();
        if families.contains(g.family(f.relation)) {
            out.push(format!("{}: family overlap with {}", r, case.target));
        }
        let direct = f.tail == target.tail
            || g.triples().iter().any(|t| (t.head == f.tail && t.tail == target.tail) || (t.head == target.tail && t.tail == f.tail));
        if direct {
            out.push(format!("{}: shares a direct edge with the answer of {}", r, case.target));
        }
        let paths = count_paths(g, target.tail, f.tail, 3, &[target, f]);
        if paths > 0 {
            out.push(format!("{}: {paths} paths of length <= 3 to the answer of {}", r, case.target));
        }
    }
    out
}
