//! Benchmark construction: target selection, retain-set filtration, probe
//! generation and verification, the known-probe filter and dataset files.

pub mod build;
pub mod corpus;
pub mod dataset;
pub mod filtration;
pub mod probes;
pub mod targets;
pub mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kg::{KnowledgeGraph, Triple};

pub use build::{build_benchmark, BenchConfig, BenchManifest};
pub use dataset::{emit_dataset, load_dataset};
pub use filtration::{build_retain_set, FiltrationConfig, Rejection};
pub use probes::{filter_known, generate_probes, verify_probe, KnownPartition, Verdict};
pub use targets::select_targets;
pub use templates::TemplateBank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeType {
    Direct,
    Paraphrase,
    Inverse,
    TwoHop,
    ThreeHop,
    Retain,
}

pub const PROBE_TYPES: [ProbeType; 6] =
    [ProbeType::Direct, ProbeType::Paraphrase, ProbeType::Inverse, ProbeType::TwoHop, ProbeType::ThreeHop, ProbeType::Retain];

impl ProbeType {
    pub fn hop(self) -> u8 {
        match self {
            ProbeType::TwoHop => 2,
            ProbeType::ThreeHop => 3,
            _ => 1,
        }
    }

    /// Probes of this type per template family in every case.
    pub fn per_family(self) -> usize {
        match self {
            ProbeType::Paraphrase | ProbeType::TwoHop => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeType::Direct => "direct",
            ProbeType::Paraphrase => "paraphrase",
            ProbeType::Inverse => "inverse",
            ProbeType::TwoHop => "two_hop",
            ProbeType::ThreeHop => "three_hop",
            ProbeType::Retain => "retain",
        }
    }
}

impl fmt::Display for ProbeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateFamily {
    QA,
    FB,
}

pub const FAMILIES: [TemplateFamily; 2] = [TemplateFamily::QA, TemplateFamily::FB];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    ForgetTrain,
    ForgetEval,
    RetainEval,
}

/// A triple by labels, as stored in dataset files.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl TripleRecord {
    pub fn from_triple(g: &KnowledgeGraph, t: &Triple) -> Self {
        TripleRecord {
            head: g.label(t.head).to_string(),
            relation: g.relation(t.relation).label.clone(),
            tail: g.label(t.tail).to_string(),
        }
    }

    pub fn resolve(&self, g: &KnowledgeGraph) -> Result<Triple> {
        Ok(Triple {
            head: g.entity_by_label(&self.head)?,
            relation: g.relation_by_label(&self.relation)?,
            tail: g.entity_by_label(&self.tail)?,
        })
    }
}

impl fmt::Display for TripleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub case_id: String,
    pub probe_id: String,
    pub probe_type: ProbeType,
    pub template_family: TemplateFamily,
    pub hop: u8,
    pub question: String,
    pub answer: String,
    pub target: TripleRecord,
    /// The fact path the probe asks about: one triple for single-hop probes.
    pub chain: Option<Vec<TripleRecord>>,
    pub split: Split,
}

impl Probe {
    /// Answer text used when this probe is rendered into training data.
    /// Multi-hop answers spell out every intermediate entity before the final one.
    pub fn worked_answer(&self) -> String {
        match (&self.chain, self.hop) {
            (Some(chain), h) if h > 1 => corpus::worked_chain_answer(&chain.iter().map(|t| t.tail.as_str()).collect::<Vec<_>>()),
            _ => self.answer.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub pattern: char,
    pub triples: Vec<TripleRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub target: TripleRecord,
    pub forget_neighborhood: Vec<String>,
    pub chains: Vec<ChainRecord>,
    pub retain_facts: Vec<TripleRecord>,
    pub probes: Vec<Probe>,
    pub provenance: Vec<Rejection>,
}

impl BenchmarkCase {
    pub fn probes_of(&self, ty: ProbeType, fam: TemplateFamily) -> impl Iterator<Item = &Probe> {
        self.probes.iter().filter(move |p| p.probe_type == ty && p.template_family == fam)
    }

    /// The forget-train probe (direct QA).
    pub fn train_probe(&self) -> Option<&Probe> {
        self.probes.iter().find(|p| p.split == Split::ForgetTrain)
    }

    /// Retain facts that no retain-eval probe asks about; usable as retain training data.
    pub fn retain_train_facts(&self) -> Vec<&TripleRecord> {
        let asked: Vec<&TripleRecord> = self
            .probes
            .iter()
            .filter(|p| p.split == Split::RetainEval)
            .filter_map(|p| p.chain.as_ref().and_then(|c| c.first()))
            .collect();
        self.retain_facts.iter().filter(|f| !asked.contains(f)).collect()
    }
}
