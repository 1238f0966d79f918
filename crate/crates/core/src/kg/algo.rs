//! Undirected graph algorithms over a [`KnowledgeGraph`].

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use super::{EntityId, KnowledgeGraph, TripleId};
use crate::error::{Error, Result};

/// Shortest-path length; `Infinite` for disconnected pairs and compares greater than every finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn exceeds(self, k: usize) -> bool {
        self > Distance::Finite(k)
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// Breadth-first distances from `src`, explored up to `max_depth` hops, skipping `excluded` edges.
pub fn bfs_distances(
    g: &KnowledgeGraph,
    src: EntityId,
    max_depth: Option<usize>,
    excluded: &HashSet<TripleId>,
) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_entities()];
    dist[src.0 as usize] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u.0 as usize].expect("visited");
        if max_depth.is_some_and(|m| du >= m) {
            continue;
        }
        for inc in g.incident(u) {
            if excluded.contains(&inc.triple) {
                continue;
            }
            let slot = &mut dist[inc.other.0 as usize];
            if slot.is_none() {
                *slot = Some(du + 1);
                queue.push_back(inc.other);
            }
        }
    }
    dist
}

/// Entities within `k` undirected hops of `entity`, including itself.
pub fn khop_neighborhood(g: &KnowledgeGraph, entity: EntityId, k: usize) -> Result<BTreeSet<EntityId>> {
    g.check_entity(entity)?;
    let dist = bfs_distances(g, entity, Some(k), &HashSet::new());
    Ok(dist
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_some())
        .map(|(i, _)| EntityId(i as u32))
        .collect())
}

pub fn geodesic_distance(g: &KnowledgeGraph, a: EntityId, b: EntityId) -> Result<Distance> {
    g.check_entity(a)?;
    g.check_entity(b)?;
    let dist = bfs_distances(g, a, None, &HashSet::new());
    Ok(dist[b.0 as usize].map_or(Distance::Infinite, Distance::Finite))
}

/// True iff an undirected path of length ≤ `depth` joins `a` and `b` without using any `excluded` edge.
pub fn path_exists_within_depth(
    g: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
    depth: usize,
    excluded: &[TripleId],
) -> Result<bool> {
    g.check_entity(a)?;
    g.check_entity(b)?;
    if depth == 0 {
        return Err(Error::Precondition("path search depth must be at least 1".into()));
    }
    let excluded: HashSet<TripleId> = excluded.iter().copied().collect();
    let dist = bfs_distances(g, a, Some(depth), &excluded);
    Ok(dist[b.0 as usize].is_some_and(|d| d <= depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::concept_graph;

    fn chain() -> KnowledgeGraph {
        concept_graph(4, &[(0, 1), (1, 2), (2, 3)])
    }

    #[test]
    fn khop_on_chain() {
        let g = chain();
        let n: Vec<u32> = khop_neighborhood(&g, EntityId(0), 2).unwrap().iter().map(|e| e.0).collect();
        assert_eq!(n, vec![0, 1, 2]);
        assert_eq!(khop_neighborhood(&g, EntityId(0), 0).unwrap().len(), 1);
        assert!(khop_neighborhood(&g, EntityId(9), 1).is_err());
    }

    #[test]
    fn geodesic_on_chain_and_components() {
        let g = chain();
        assert_eq!(geodesic_distance(&g, EntityId(0), EntityId(3)).unwrap(), Distance::Finite(3));
        assert_eq!(geodesic_distance(&g, EntityId(2), EntityId(2)).unwrap(), Distance::Finite(0));
        let g2 = concept_graph(4, &[(0, 1), (2, 3)]);
        let d = geodesic_distance(&g2, EntityId(0), EntityId(3)).unwrap();
        assert_eq!(d, Distance::Infinite);
        assert!(d.exceeds(3));
        assert!(d > Distance::Finite(usize::MAX));
    }

    #[test]
    fn path_search_on_chain() {
        let g = chain();
        assert!(path_exists_within_depth(&g, EntityId(0), EntityId(3), 3, &[]).unwrap());
        assert!(!path_exists_within_depth(&g, EntityId(0), EntityId(3), 2, &[]).unwrap());
        assert!(path_exists_within_depth(&g, EntityId(0), EntityId(3), 0, &[]).is_err());
    }

    #[test]
    fn excluded_edge_is_ignored() {
        let g = concept_graph(2, &[(0, 1)]);
        assert!(path_exists_within_depth(&g, EntityId(0), EntityId(1), 3, &[]).unwrap());
        assert!(!path_exists_within_depth(&g, EntityId(0), EntityId(1), 3, &[TripleId(0)]).unwrap());
    }
}
