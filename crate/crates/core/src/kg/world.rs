//! Deterministic synthetic world generation.
//!
//! Chain relations are created only by planting pattern instances, so the
//! final graph contains exactly the requested number of instances of every
//! pattern. Retain properties and commonsense relations never occur in a
//! pattern and are added afterwards.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patterns::{count_all, Pattern, PATTERNS};
use super::{Entity, EntityId, EntityType, KnowledgeGraph, RelationId, RelationType, Triple};
use crate::error::{Error, Result};

/// A retain property: a functional, pattern-free relation from a subject type to a `Concept` value.
#[derive(Clone, Copy, Debug)]
pub struct RetainProperty {
    pub label: &'static str,
    pub domain: EntityType,
    pub family: &'static str,
    /// Size of a shared value pool; `None` gives every subject a private value.
    pub shared_pool: Option<usize>,
}

const fn prop(label: &'static str, domain: EntityType, family: &'static str, shared_pool: Option<usize>) -> RetainProperty {
    RetainProperty { label, domain, family, shared_pool }
}

use EntityType::*;

pub const RETAIN_PROPERTIES: [RetainProperty; 24] = [
    prop("continent", Country, "geography", Some(4)),
    prop("head_of_state_office", Country, "government", Some(3)),
    prop("highest_point", Country, "terrain", None),
    prop("lowest_point", Country, "terrain", None),
    prop("time_zone", Country, "time", Some(4)),
    prop("body_of_water", Country, "hydrography", None),
    prop("central_bank", Country, "finance", None),
    prop("country_named_after", Country, "naming", None),
    prop("city_named_after", City, "naming", None),
    prop("city_body_of_water", City, "hydrography", None),
    prop("occupation", Person, "profession", Some(6)),
    prop("award", Person, "award", Some(5)),
    prop("notable_work", Person, "oeuvre", None),
    prop("industry", Organization, "industry", Some(5)),
    prop("founded_by", Organization, "founding", None),
    prop("legal_form", Organization, "legal", Some(3)),
    prop("film_genre", Film, "genre", Some(5)),
    prop("composer", Film, "music", None),
    prop("based_on", Film, "adaptation", None),
    prop("broadcaster", Film, "broadcast", Some(3)),
    prop("work_genre", Work, "genre", Some(5)),
    prop("work_based_on", Work, "adaptation", None),
    prop("university_named_after", University, "naming", None),
    prop("motto", University, "motto", None),
];

/// Chain relations: `(label, domain, range, family)`; all functional.
pub const CHAIN_RELATIONS: [(&str, EntityType, EntityType, &str); 12] = [
    ("capital_of", Country, City, "capital"),
    ("headquarters", Organization, City, "located_in"),
    ("city_in", City, Country, "located_in"),
    ("university_in", University, Country, "located_in"),
    ("director", Film, Person, "creator"),
    ("producer", Film, Person, "creator"),
    ("performer", Work, Person, "creator"),
    ("citizenship", Person, Country, "nationality"),
    ("educated_at", Person, University, "education"),
    ("native_language", Person, Language, "language"),
    ("official_language", Country, Language, "language"),
    ("origin", Film, Country, "origin"),
];

/// Commonsense relations between concepts; non-functional.
pub const COMMONSENSE_RELATIONS: [&str; 5] = ["is_a", "used_for", "at_location", "part_of", "capable_of"];

/// The full relation schema of generated worlds.
pub fn default_schema() -> Vec<RelationType> {
    let mut out = Vec::new();
    let mut push = |label: &str, d: EntityType, r: EntityType, functional: bool, family: &str| {
        out.push(RelationType {
            id: format!("R{:02}", out.len()),
            label: label.to_string(),
            domain_type: d,
            range_type: r,
            functional,
            family: family.to_string(),
        });
    };
    for (l, d, r, f) in CHAIN_RELATIONS {
        push(l, d, r, true, f);
    }
    for p in RETAIN_PROPERTIES {
        push(p.label, p.domain, Concept, true, p.family);
    }
    for l in COMMONSENSE_RELATIONS {
        push(l, Concept, Concept, false, &format!("commonsense_{l}"));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Entities created up front, per type. Retain-property values are extra `Concept`s.
    pub counts: BTreeMap<EntityType, usize>,
    /// Exact number of instances of each chain pattern in the generated graph.
    pub pattern_quotas: BTreeMap<char, usize>,
    /// Retain properties assigned to every entity of a subject type.
    pub retain_quotas: BTreeMap<EntityType, usize>,
    /// Commonsense edges among the `Concept` entities of `counts`.
    pub commonsense_edges: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let counts = [
            (Country, 30),
            (City, 36),
            (Person, 44),
            (Film, 24),
            (Work, 6),
            (Organization, 12),
            (University, 6),
            (Language, 6),
            (Concept, 10),
        ];
        let quotas = [
            ('C', 8),
            ('D', 16),
            ('E', 6),
            ('G', 2),
            ('L', 2),
            ('S', 8),
            ('T', 1),
            ('V', 6),
            ('A', 12),
            ('B', 20),
            ('F', 6),
            ('H', 6),
            ('I', 22),
            ('J', 38),
            ('K', 6),
            ('U', 10),
        ];
        let retain = [(Country, 3), (City, 0), (Person, 1), (Organization, 1), (Film, 1), (Work, 1), (University, 0)];
        WorldConfig {
            counts: counts.into_iter().collect(),
            pattern_quotas: quotas.into_iter().collect(),
            retain_quotas: retain.into_iter().collect(),
            commonsense_edges: 12,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn count(&self, ty: EntityType) -> usize {
        self.counts.get(&ty).copied().unwrap_or(0)
    }

    pub fn quota(&self, p: char) -> usize {
        self.pattern_quotas.get(&p).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = default_schema();
        for (&p, &q) in &self.pattern_quotas {
            let Some(pat) = Pattern::by_id(p) else {
                return Err(Error::Config(format!("unknown chain pattern `{p}`")));
            };
            if q == 0 {
                continue;
            }
            for ty in pattern_types(pat, &schema) {
                if self.count(ty) == 0 {
                    return Err(Error::Config(format!("quota for pattern {p} ({q}) needs at least one {ty} entity")));
                }
            }
        }
        for (&ty, &q) in &self.retain_quotas {
            let pool = RETAIN_PROPERTIES.iter().filter(|p| p.domain == ty).count();
            if q > pool {
                return Err(Error::Config(format!("retain quota {q} for {ty} exceeds its {pool} properties")));
            }
        }
        if self.commonsense_edges > 0 && self.count(Concept) < 2 {
            return Err(Error::Config("commonsense edges need at least two concepts".into()));
        }
        Ok(())
    }
}

fn pattern_types(p: &Pattern, schema: &[RelationType]) -> Vec<EntityType> {
    let mut types = Vec::new();
    for s in p.steps {
        let r = schema.iter().find(|r| r.label == s.relation).expect("pattern relation in schema");
        let (a, b) = if s.inverse { (r.range_type, r.domain_type) } else { (r.domain_type, r.range_type) };
        if types.is_empty() {
            types.push(a);
        }
        types.push(b);
    }
    types
}

/// Seeded syllable-based label generator; every word it returns is globally unique.
pub struct LabelSampler {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

const ONSETS: [&str; 20] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kl", "tr", "sk", "th"];
const VOWELS: [&str; 7] = ["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: [&str; 6] = ["", "", "n", "r", "l", "s"];

impl LabelSampler {
    pub fn new(seed: u64, reserved: impl IntoIterator<Item = String>) -> Self {
        LabelSampler { rng: ChaCha8Rng::seed_from_u64(seed), used: reserved.into_iter().collect() }
    }

    fn word(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS.choose(&mut self.rng).expect("non-empty"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            w.push_str(CODAS.choose(&mut self.rng).expect("non-empty"));
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    /// A two-word label.
    pub fn label(&mut self) -> String {
        let a = self.word();
        let b = self.word();
        format!("{a} {b}")
    }
}

struct Builder {
    g: KnowledgeGraph,
    rng: ChaCha8Rng,
    labels: LabelSampler,
    by_type: BTreeMap<EntityType, Vec<EntityId>>,
}

impl Builder {
    fn add_entity(&mut self, ty: EntityType) -> Result<EntityId> {
        let label = self.labels.label();
        let id = self.g.add_entity(Entity { id: format!("E{:04}", self.g.num_entities()), label, entity_type: ty })?;
        self.by_type.entry(ty).or_default().push(id);
        Ok(id)
    }

    fn rel(&self, label: &str) -> RelationId {
        self.g.relation_by_label(label).expect("schema relation")
    }

    /// Propose one instance of `p`; returns the triples to add (possibly empty).
    fn propose(&mut self, p: &Pattern) -> Option<Vec<Triple>> {
        let schema_types = pattern_types(p, self.g.relations());
        let pool = self.by_type.get(&schema_types[0])?;
        let mut cur = *pool.choose(&mut self.rng)?;
        let mut nodes = vec![cur];
        let mut new = Vec::new();
        let capital = self.rel("capital_of");
        for (i, s) in p.steps.iter().enumerate() {
            let rel = self.rel(s.relation);
            let next_ty = schema_types[i + 1];
            let next = if !s.inverse {
                match self.g.tail_of(cur, rel).or_else(|| new.iter().find(|t: &&Triple| t.head == cur && t.relation == rel).map(|t| t.tail)) {
                    Some(t) => t,
                    None => {
                        let pool = self.by_type.get(&next_ty)?;
                        // Two random choices, keep the less used one: spreads chains across tails.
                        let a = *pool.choose(&mut self.rng)?;
                        let b = *pool.choose(&mut self.rng)?;
                        let mut cand = if self.g.incoming(b).count() < self.g.incoming(a).count() { b } else { a };
                        // Capitals are unique per city so the inverse question has one answer.
                        if rel == capital {
                            let taken = |c: EntityId| self.g.heads(c, capital).next().is_some();
                            let free: Vec<EntityId> = pool.iter().copied().filter(|&c| !taken(c) && !nodes.contains(&c)).collect();
                            cand = *free.choose(&mut self.rng)?;
                        }
                        new.push(Triple { head: cur, relation: rel, tail: cand });
                        cand
                    }
                }
            } else {
                // Inverse step: pick any entity whose functional edge points here, or one without that edge.
                let pool = self.by_type.get(&next_ty)?;
                let cands: Vec<EntityId> = pool
                    .iter()
                    .copied()
                    .filter(|&e| self.g.tail_of(e, rel).map_or(true, |t| t == cur))
                    .collect();
                let cand = *cands.choose(&mut self.rng)?;
                if self.g.tail_of(cand, rel).is_none() {
                    new.push(Triple { head: cand, relation: rel, tail: cur });
                }
                cand
            };
            if nodes.contains(&next) {
                return None;
            }
            nodes.push(next);
            cur = next;
        }
        Some(new)
    }

    fn plant(&mut self, cfg: &WorldConfig) -> Result<()> {
        const ATTEMPTS: usize = 4000;
        let mut counts = count_all(&self.g);
        let order = PATTERNS.iter().filter(|p| p.hops() == 3).chain(PATTERNS.iter().filter(|p| p.hops() == 2));
        for p in order {
            let quota = cfg.quota(p.id);
            if counts[&p.id] > quota {
                return Err(Error::Config(format!(
                    "quota for pattern {} ({quota}) is below the {} instances implied by longer patterns",
                    p.id, counts[&p.id]
                )));
            }
            let mut attempts = 0;
            while counts[&p.id] < quota {
                attempts += 1;
                if attempts > ATTEMPTS {
                    return Err(Error::Config(format!(
                        "quota for pattern {} ({quota}) is unsatisfiable: reached {} instances",
                        p.id, counts[&p.id]
                    )));
                }
                let Some(new) = self.propose(p) else { continue };
                if new.is_empty() {
                    continue;
                }
                let mark = self.g.triples().len();
                let mut ok = true;
                for t in &new {
                    if self.g.add_triple(*t).is_err() {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    let after = count_all(&self.g);
                    ok = after[&p.id] > counts[&p.id] && after.iter().all(|(id, &c)| c <= cfg.quota(*id));
                    if ok {
                        counts = after;
                    }
                }
                if !ok {
                    self.g.truncate_triples(mark);
                }
            }
        }
        Ok(())
    }

    fn retain_properties(&mut self, cfg: &WorldConfig) -> Result<()> {
        let mut pools: BTreeMap<&'static str, Vec<EntityId>> = BTreeMap::new();
        for p in RETAIN_PROPERTIES {
            if let Some(n) = p.shared_pool {
                if cfg.retain_quotas.get(&p.domain).copied().unwrap_or(0) > 0 {
                    let vals = (0..n).map(|_| self.add_entity(Concept)).collect::<Result<Vec<_>>>()?;
                    pools.insert(p.label, vals);
                }
            }
        }
        for (&ty, &q) in &cfg.retain_quotas {
            if q == 0 {
                continue;
            }
            let subjects = self.by_type.get(&ty).cloned().unwrap_or_default();
            let props: Vec<RetainProperty> = RETAIN_PROPERTIES.iter().copied().filter(|p| p.domain == ty).collect();
            for s in subjects {
                let chosen: Vec<RetainProperty> = props.choose_multiple(&mut self.rng, q).copied().collect();
                for p in chosen {
                    let value = match pools.get(p.label) {
                        Some(pool) => *pool.choose(&mut self.rng).expect("non-empty pool"),
                        None => self.add_entity(Concept)?,
                    };
                    let rel = self.rel(p.label);
                    self.g.add_triple(Triple { head: s, relation: rel, tail: value })?;
                }
            }
        }
        Ok(())
    }

    fn commonsense(&mut self, cfg: &WorldConfig, concepts: &[EntityId]) -> Result<()> {
        let rels: Vec<RelationId> = COMMONSENSE_RELATIONS.iter().map(|l| self.rel(l)).collect();
        let mut added = 0;
        let mut guard = 0;
        while added < cfg.commonsense_edges {
            guard += 1;
            if guard > 100 * (cfg.commonsense_edges + 1) {
                return Err(Error::Config(format!(
                    "could not place {} commonsense edges among {} concepts",
                    cfg.commonsense_edges,
                    concepts.len()
                )));
            }
            let h = *concepts.choose(&mut self.rng).expect("concepts");
            let t = *concepts.choose(&mut self.rng).expect("concepts");
            if h == t {
                continue;
            }
            let r = *rels.choose(&mut self.rng).expect("relations");
            if self.g.add_triple(Triple { head: h, relation: r, tail: t })? {
                added += 1;
            }
        }
        Ok(())
    }
}

/// Generate a world; a pure function of `config`.
pub fn generate_world(config: &WorldConfig) -> Result<KnowledgeGraph> {
    generate_world_with_reserved(config, std::iter::empty())
}

/// Like [`generate_world`], never emitting any label word in `reserved`.
///
/// Greedy planting can paint itself into a corner; generation then restarts
/// from a seed derived from `(config.seed, attempt)`, so the result is still
/// a pure function of the configuration.
pub fn generate_world_with_reserved(config: &WorldConfig, reserved: impl IntoIterator<Item = String>) -> Result<KnowledgeGraph> {
    const RESTARTS: u64 = 16;
    config.validate()?;
    let reserved: Vec<String> = reserved.into_iter().collect();
    let mut last = None;
    for attempt in 0..RESTARTS {
        match attempt_world(config, &reserved, attempt) {
            Ok(g) => return Ok(g),
            Err(e @ Error::Config(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn attempt_world(config: &WorldConfig, reserved: &[String], attempt: u64) -> Result<KnowledgeGraph> {
    let (g, _) = KnowledgeGraph::new(Vec::new(), default_schema(), Vec::new())?;
    let sub = config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(attempt);
    let mut b = Builder {
        g,
        rng: ChaCha8Rng::seed_from_u64(sub),
        labels: LabelSampler::new(config.seed ^ 0x5851_f42d_4c95_7f2d, reserved.iter().cloned()),
        by_type: BTreeMap::new(),
    };
    let mut concepts = Vec::new();
    for (&ty, &n) in &config.counts {
        for _ in 0..n {
            let id = b.add_entity(ty)?;
            if ty == Concept {
                concepts.push(id);
            }
        }
    }
    b.plant(config)?;
    // Commonsense concepts stay separate from retain-property values.
    b.commonsense(config, &concepts)?;
    b.by_type.insert(Concept, concepts);
    b.retain_properties(config)?;
    Ok(b.g)
}
