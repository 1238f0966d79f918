//! End-to-end benchmark construction from a graph.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filtration::{build_retain_set, FiltrationConfig};
use super::probes::{generate_probes, verify_probe, ProbePlan, Verdict};
use super::targets::{forward_chains_through, shuffled_targets};
use super::templates::TemplateBank;
use super::{BenchmarkCase, ChainRecord, ProbeType, Split, TemplateFamily, TripleRecord};
use crate::error::{Error, Result};
use crate::kg::patterns::ChainInstance;
use crate::kg::{khop_neighborhood, KnowledgeGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_targets: usize,
    pub seed: u64,
    pub filtration: FiltrationConfig,
    /// Radius of the recorded forget neighborhood.
    pub neighborhood_k: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { n_targets: 20, seed: 0, filtration: FiltrationConfig::default(), neighborhood_k: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resample {
    pub target: TripleRecord,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub seed: u64,
    pub n_targets: usize,
    pub filtration: FiltrationConfig,
    pub neighborhood_k: usize,
    pub eligible_targets: usize,
    pub resampled: Vec<Resample>,
    /// Retain candidates rejected at each filtration stage, over built cases.
    pub rejections_by_stage: BTreeMap<u8, usize>,
    pub retain_facts: usize,
    pub direct_qa_count: usize,
    pub probe_counts: BTreeMap<String, usize>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, v: &'a [ChainInstance], n: usize) -> Vec<&'a ChainInstance> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.shuffle(rng);
    let mut chosen: Vec<usize> = idx.into_iter().take(n).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| &v[i]).collect()
}

fn records(g: &KnowledgeGraph, c: &ChainInstance) -> ChainRecord {
    ChainRecord { pattern: c.pattern, triples: c.triples.iter().map(|&t| TripleRecord::from_triple(g, &g.triple(t))).collect() }
}

/// Build `n_targets` cases, resampling targets that cannot be completed.
pub fn build_benchmark(g: &KnowledgeGraph, bank: &TemplateBank, cfg: &BenchConfig) -> Result<(Vec<BenchmarkCase>, BenchManifest)> {
    cfg.filtration.validate()?;
    let order = shuffled_targets(g, cfg.seed);
    if order.len() < cfg.n_targets {
        return Err(Error::InsufficientTargets { requested: cfg.n_targets, available: order.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ca5e);
    let mut cases = Vec::with_capacity(cfg.n_targets);
    let mut resampled = Vec::new();
    let mut stages: BTreeMap<u8, usize> = BTreeMap::new();
    for &target in &order {
        if cases.len() == cfg.n_targets {
            break;
        }
        let record = TripleRecord::from_triple(g, &g.triple(target));
        let (two, three) = forward_chains_through(g, target);
        let mut all = two.clone();
        all.extend(three.iter().cloned());
        let (retain, rejections) = build_retain_set(g, target, &all, &cfg.filtration)?;
        if retain.is_empty() {
            resampled.push(Resample { target: record, reason: "no retain fact survives filtration".into() });
            continue;
        }
        let chosen2 = pick(&mut rng, &two, 2);
        let chosen3 = pick(&mut rng, &three, 1);
        let plan = ProbePlan {
            target,
            two_hop: [chosen2[0].clone(), chosen2[1].clone()],
            three_hop: chosen3[0].clone(),
            retain: retain[rng.gen_range(0..retain.len())],
        };
        let case_id = format!("case{:03}", cases.len());
        let probes = generate_probes(g, bank, &case_id, &plan, rng.gen())?;
        if let Some((p, Verdict::Fail(why))) = probes.iter().map(|p| (p, verify_probe(g, p))).find(|(_, v)| !v.passed()) {
            resampled.push(Resample { target: record, reason: format!("probe {} failed verification: {why}", p.probe_type) });
            continue;
        }
        for r in &rejections {
            *stages.entry(r.stage).or_default() += 1;
        }
        let neighborhood = khop_neighborhood(g, g.triple(target).head, cfg.neighborhood_k)?;
        let mut labels: Vec<String> = neighborhood.into_iter().map(|e| g.label(e).to_string()).collect();
        labels.sort();
        cases.push(BenchmarkCase {
            case_id,
            target: record,
            forget_neighborhood: labels,
            chains: all.iter().map(|c| records(g, c)).collect(),
            retain_facts: retain.iter().map(|&t| TripleRecord::from_triple(g, &g.triple(t))).collect(),
            probes,
            provenance: rejections,
        });
    }
    if cases.len() < cfg.n_targets {
        return Err(Error::InsufficientTargets { requested: cfg.n_targets, available: cases.len() });
    }
    let mut probe_counts = BTreeMap::new();
    for p in cases.iter().flat_map(|c| &c.probes) {
        *probe_counts.entry(format!("{:?}/{}", p.template_family, p.probe_type)).or_insert(0) += 1;
    }
    let direct_qa_count = cases
        .iter()
        .flat_map(|c| &c.probes)
        .filter(|p| p.probe_type == ProbeType::Direct && p.template_family == TemplateFamily::QA && p.split == Split::ForgetTrain)
        .count();
    let manifest = BenchManifest {
        seed: cfg.seed,
        n_targets: cfg.n_targets,
        filtration: cfg.filtration,
        neighborhood_k: cfg.neighborhood_k,
        eligible_targets: order.len(),
        resampled,
        rejections_by_stage: stages,
        retain_facts: cases.iter().map(|c| c.retain_facts.len()).sum(),
        direct_qa_count,
        probe_counts,
    };
    Ok((cases, manifest))
}
