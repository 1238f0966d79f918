//! Typed knowledge graph: entities, relation schema, triples and adjacency indices.

pub mod algo;
pub mod io;
pub mod patterns;
pub mod world;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use algo::{geodesic_distance, khop_neighborhood, path_exists_within_depth, Distance};
pub use patterns::{ChainInstance, Pattern, PATTERNS};
pub use world::{generate_world, WorldConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Film,
    Organization,
    Country,
    City,
    University,
    Work,
    Language,
    Concept,
}

pub const ENTITY_TYPES: [EntityType; 9] = [
    EntityType::Person,
    EntityType::Film,
    EntityType::Organization,
    EntityType::Country,
    EntityType::City,
    EntityType::University,
    EntityType::Work,
    EntityType::Language,
    EntityType::Concept,
];

impl EntityType {
    pub fn name(self) -> &'static str {
        match self {
            EntityType::Person => "Person",
            EntityType::Film => "Film",
            EntityType::Organization => "Organization",
            EntityType::Country => "Country",
            EntityType::City => "City",
            EntityType::University => "University",
            EntityType::Work => "Work",
            EntityType::Language => "Language",
            EntityType::Concept => "Concept",
        }
    }

    pub fn parse(s: &str) -> Option<EntityType> {
        ENTITY_TYPES.iter().copied().find(|t| t.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

/// Index into [`KnowledgeGraph::triples`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    pub entity_type: EntityType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub id: String,
    pub label: String,
    pub domain_type: EntityType,
    pub range_type: EntityType,
    pub functional: bool,
    pub family: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// An undirected view of one incident edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub triple: TripleId,
    pub other: EntityId,
    pub outgoing: bool,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    relations: Vec<RelationType>,
    triples: Vec<Triple>,
    out: Vec<Vec<TripleId>>,
    inc: Vec<Vec<TripleId>>,
    by_label: HashMap<String, EntityId>,
    rel_by_label: HashMap<String, RelationId>,
    triple_index: HashMap<Triple, TripleId>,
}

/// Vocabulary-safe label: non-empty space-separated words of ASCII letters and digits.
pub fn is_safe_label(label: &str) -> bool {
    !label.is_empty()
        && label.split(' ').all(|w| !w.is_empty() && w.chars().all(|c| c.is_ascii_alphanumeric()))
}

impl KnowledgeGraph {
    /// Validate and index. Duplicate triples are dropped; the number dropped is returned.
    pub fn new(entities: Vec<Entity>, relations: Vec<RelationType>, triples: Vec<Triple>) -> Result<(Self, usize)> {
        let mut by_label = HashMap::new();
        let mut ids = HashSet::new();
        for (i, e) in entities.iter().enumerate() {
            if !is_safe_label(&e.label) {
                return Err(Error::Config(format!("entity label `{}` is not vocabulary-safe", e.label)));
            }
            if by_label.insert(e.label.clone(), EntityId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate entity label `{}`", e.label)));
            }
            if !ids.insert(e.id.clone()) {
                return Err(Error::Config(format!("duplicate entity id `{}`", e.id)));
            }
        }
        let mut rel_by_label = HashMap::new();
        for (i, r) in relations.iter().enumerate() {
            if r.family.is_empty() {
                return Err(Error::Config(format!("relation `{}` has an empty family tag", r.label)));
            }
            if rel_by_label.insert(r.label.clone(), RelationId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate relation `{}`", r.label)));
            }
        }
        let mut g = KnowledgeGraph {
            out: vec![Vec::new(); entities.len()],
            inc: vec![Vec::new(); entities.len()],
            entities,
            relations,
            triples: Vec::new(),
            by_label,
            rel_by_label,
            triple_index: HashMap::new(),
        };
        let mut dups = 0;
        for t in triples {
            if !g.add_triple(t)? {
                dups += 1;
            }
        }
        Ok((g, dups))
    }

    fn typing_error(&self, t: &Triple, msg: impl Into<String>) -> Error {
        let label = |e: EntityId| self.entities.get(e.0 as usize).map_or_else(|| format!("#{}", e.0), |x| x.label.clone());
        Error::Typing {
            head: label(t.head),
            relation: self.relations.get(t.relation.0 as usize).map_or_else(|| format!("#{}", t.relation.0), |r| r.label.clone()),
            tail: label(t.tail),
            msg: msg.into(),
        }
    }

    /// Insert a triple after type checking; returns false when already present.
    pub(crate) fn add_triple(&mut self, t: Triple) -> Result<bool> {
        let (Some(h), Some(r), Some(tl)) = (
            self.entities.get(t.head.0 as usize),
            self.relations.get(t.relation.0 as usize),
            self.entities.get(t.tail.0 as usize),
        ) else {
            return Err(self.typing_error(&t, "dangling identifier"));
        };
        if h.entity_type != r.domain_type {
            return Err(self.typing_error(&t, format!("head type {} does not match domain {}", h.entity_type, r.domain_type)));
        }
        if tl.entity_type != r.range_type {
            return Err(self.typing_error(&t, format!("tail type {} does not match range {}", tl.entity_type, r.range_type)));
        }
        if t.head == t.tail {
            return Err(self.typing_error(&t, "self loop"));
        }
        if self.triple_index.contains_key(&t) {
            return Ok(false);
        }
        if r.functional && self.tails(t.head, t.relation).next().is_some() {
            return Err(self.typing_error(&t, "functional relation already has a tail for this head"));
        }
        let id = TripleId(self.triples.len() as u32);
        self.triples.push(t);
        self.triple_index.insert(t, id);
        self.out[t.head.0 as usize].push(id);
        self.inc[t.tail.0 as usize].push(id);
        Ok(true)
    }

    pub(crate) fn add_entity(&mut self, e: Entity) -> Result<EntityId> {
        if !is_safe_label(&e.label) {
            return Err(Error::Config(format!("entity label `{}` is not vocabulary-safe", e.label)));
        }
        if self.by_label.contains_key(&e.label) {
            return Err(Error::Config(format!("duplicate entity label `{}`", e.label)));
        }
        let id = EntityId(self.entities.len() as u32);
        self.by_label.insert(e.label.clone(), id);
        self.entities.push(e);
        self.out.push(Vec::new());
        self.inc.push(Vec::new());
        Ok(id)
    }

    /// Remove the most recently added triples, restoring indices.
    pub(crate) fn truncate_triples(&mut self, len: usize) {
        while self.triples.len() > len {
            let t = self.triples.pop().expect("non-empty");
            self.triple_index.remove(&t);
            self.out[t.head.0 as usize].pop();
            self.inc[t.tail.0 as usize].pop();
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.0 as usize]
    }

    pub fn relation(&self, id: RelationId) -> &RelationType {
        &self.relations[id.0 as usize]
    }

    pub fn triple(&self, id: TripleId) -> Triple {
        self.triples[id.0 as usize]
    }

    pub fn label(&self, id: EntityId) -> &str {
        &self.entities[id.0 as usize].label
    }

    pub fn entity_by_label(&self, label: &str) -> Result<EntityId> {
        self.by_label.get(label).copied().ok_or_else(|| Error::UnknownEntity(label.to_string()))
    }

    pub fn relation_by_label(&self, label: &str) -> Result<RelationId> {
        self.rel_by_label.get(label).copied().ok_or_else(|| Error::UnknownRelation(label.to_string()))
    }

    pub fn triple_id(&self, t: &Triple) -> Option<TripleId> {
        self.triple_index.get(t).copied()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_index.contains_key(t)
    }

    pub fn check_entity(&self, e: EntityId) -> Result<()> {
        if (e.0 as usize) < self.entities.len() {
            Ok(())
        } else {
            Err(Error::UnknownEntity(format!("#{}", e.0)))
        }
    }

    /// Outgoing triples of `e`, in insertion order.
    pub fn outgoing(&self, e: EntityId) -> impl Iterator<Item = (TripleId, Triple)> + '_ {
        self.out[e.0 as usize].iter().map(move |&id| (id, self.triples[id.0 as usize]))
    }

    /// Incoming triples of `e`, in insertion order.
    pub fn incoming(&self, e: EntityId) -> impl Iterator<Item = (TripleId, Triple)> + '_ {
        self.inc[e.0 as usize].iter().map(move |&id| (id, self.triples[id.0 as usize]))
    }

    /// Every incident edge of `e`, ignoring direction.
    pub fn incident(&self, e: EntityId) -> impl Iterator<Item = Incidence> + '_ {
        let outs = self.out[e.0 as usize].iter().map(move |&id| Incidence {
            triple: id,
            other: self.triples[id.0 as usize].tail,
            outgoing: true,
        });
        let ins = self.inc[e.0 as usize].iter().map(move |&id| Incidence {
            triple: id,
            other: self.triples[id.0 as usize].head,
            outgoing: false,
        });
        outs.chain(ins)
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.out[e.0 as usize].len() + self.inc[e.0 as usize].len()
    }

    pub fn tails(&self, head: EntityId, rel: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        self.outgoing(head).filter(move |(_, t)| t.relation == rel).map(|(_, t)| t.tail)
    }

    pub fn heads(&self, tail: EntityId, rel: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        self.incoming(tail).filter(move |(_, t)| t.relation == rel).map(|(_, t)| t.head)
    }

    /// Tail of a functional relation, if present.
    pub fn tail_of(&self, head: EntityId, rel: RelationId) -> Option<EntityId> {
        self.tails(head, rel).next()
    }

    pub fn entities_of_type(&self, ty: EntityType) -> Vec<EntityId> {
        (0..self.entities.len() as u32).map(EntityId).filter(|&e| self.entity(e).entity_type == ty).collect()
    }

    pub fn family(&self, rel: RelationId) -> &str {
        &self.relations[rel.0 as usize].family
    }

    pub fn format_triple(&self, t: &Triple) -> String {
        format!("({}, {}, {})", self.label(t.head), self.relation(t.relation).label, self.label(t.tail))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Build a graph of `Concept` entities named `n0..` with one non-functional relation `link`.
    pub fn concept_graph(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
        let entities = (0..n)
            .map(|i| Entity { id: format!("e{i}"), label: format!("n{i}"), entity_type: EntityType::Concept })
            .collect();
        let relations = vec![RelationType {
            id: "r0".into(),
            label: "link".into(),
            domain_type: EntityType::Concept,
            range_type: EntityType::Concept,
            functional: false,
            family: "link".into(),
        }];
        let triples = edges
            .iter()
            .map(|&(a, b)| Triple { head: EntityId(a as u32), relation: RelationId(0), tail: EntityId(b as u32) })
            .collect();
        KnowledgeGraph::new(entities, relations, triples).unwrap().0
    }
}
