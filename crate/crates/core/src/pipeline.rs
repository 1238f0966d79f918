//! End-to-end experiment plumbing: world, benchmark, tokenizer, pretraining,
//! known-probe filtering, unlearning and evaluation.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::corpus::{render_corpus, CorpusConfig};
use crate::bench::{build_benchmark, filter_known, BenchConfig, BenchManifest, BenchmarkCase, Probe, ProbeType, Split, TemplateBank, FAMILIES};
use crate::error::{Error, Result};
use crate::eval::boundary::{boundary_report, BoundaryReport};
use crate::eval::drift::{drift_report, DriftGroups, DriftReport, GradientItem};
use crate::eval::report::{decode_probes, metrics_report, MetricsReport, ProbeOutput};
use crate::eval::rouge_l;
use crate::kg::world::generate_world_with_reserved;
use crate::kg::{KnowledgeGraph, WorldConfig};
use crate::lm::checkpoint::{load_checkpoint, model_hash, save_checkpoint};
use crate::lm::pretrain::{pretrain, PretrainReport, Schedule};
use crate::lm::{greedy_decode_batch, Model, ModelConfig, Params, ScoredSeq, Tokenizer};
use crate::unlearn::{eval_probes, prepare_items, run_unlearn, ForgetItem, Method, UnlearnConfig, UnlearnRun, DEFAULT_REFUSAL, ICU_INSTRUCTION};

/// Recall a probe's output must reach to count as known.
pub const KNOWN_THRESHOLD: f64 = 0.99;

/// Learning rates swept for the toy model, largest first.
pub const TOY_LR_GRID: [f64; 4] = [1e-2, 5e-3, 3e-3, 2e-3];

/// Unlearning settings tuned for the toy model: anchor weight 0.1, β 0.3,
/// five epochs, learning rate 5e-3. Other fields keep their defaults.
pub fn toy_unlearn_config(method: Method, seed: u64) -> UnlearnConfig {
    UnlearnConfig { method, seed, learning_rate: 5e-3, epochs: 5, lambda: 0.1, beta: 0.3, ..Default::default() }
}

/// A generated world with its benchmark, training corpus and tokenizer.
pub struct Lab {
    pub graph: KnowledgeGraph,
    pub bank: TemplateBank,
    pub cases: Vec<BenchmarkCase>,
    pub manifest: BenchManifest,
    pub corpus: Vec<ScoredSeq>,
    pub tokenizer: Tokenizer,
}

/// Vocabulary covering the corpus, every probe, the refusal strings, the
/// unlearning instruction and the template lexicon.
pub fn build_tokenizer<'a>(texts: impl IntoIterator<Item = &'a str>, cases: &[BenchmarkCase], bank: &TemplateBank) -> Tokenizer {
    let mut all: Vec<String> = texts.into_iter().map(str::to_string).collect();
    for p in cases.iter().flat_map(|c| &c.probes) {
        all.push(p.question.clone());
        all.push(p.worked_answer());
    }
    all.push(DEFAULT_REFUSAL.to_string());
    all.push(ICU_INSTRUCTION.to_string());
    all.extend(bank.lexicon());
    Tokenizer::build(all.iter().map(String::as_str))
}

impl Lab {
    pub fn new(world: &WorldConfig, bench: &BenchConfig, corpus: &CorpusConfig) -> Result<Lab> {
        let bank = TemplateBank::default_bank();
        let graph = generate_world_with_reserved(world, bank.lexicon())?;
        Lab::from_graph(graph, bank, bench, corpus)
    }

    pub fn from_graph(graph: KnowledgeGraph, bank: TemplateBank, bench: &BenchConfig, corpus: &CorpusConfig) -> Result<Lab> {
        let (cases, manifest) = build_benchmark(&graph, &bank, bench)?;
        Lab::assemble(graph, bank, cases, manifest, corpus, None)
    }

    /// Render the corpus for an already-built benchmark. A stored tokenizer
    /// is reused; otherwise one is built.
    pub fn assemble(
        graph: KnowledgeGraph,
        bank: TemplateBank,
        cases: Vec<BenchmarkCase>,
        manifest: BenchManifest,
        corpus: &CorpusConfig,
        tokenizer: Option<Tokenizer>,
    ) -> Result<Lab> {
        let items = render_corpus(&graph, &bank, corpus)?;
        let tokenizer = tokenizer
            .unwrap_or_else(|| build_tokenizer(items.iter().flat_map(|c| [c.prompt.as_str(), c.answer.as_str()]), &cases, &bank));
        let corpus = items.iter().map(|c| c.encode(&tokenizer)).collect::<Result<Vec<_>>>()?;
        Ok(Lab { graph, bank, cases, manifest, corpus, tokenizer })
    }

    /// The default toy model sized for this lab's vocabulary and sequence lengths.
    pub fn model_config(&self, seed: u64) -> ModelConfig {
        self.fit_config(ModelConfig::toy(self.tokenizer.vocab_size(), seed))
    }

    /// `c` with the vocabulary and context length this lab needs.
    pub fn fit_config(&self, mut c: ModelConfig) -> ModelConfig {
        c.vocab_size = self.tokenizer.vocab_size();
        let longest = self.corpus.iter().map(|s| s.prompt.len() + s.answer.len()).max().unwrap_or(0);
        let probe_longest = self
            .cases
            .iter()
            .flat_map(|c| &c.probes)
            .filter_map(|p| Some(self.tokenizer.encode_prompt(&crate::unlearn::icu_wrap(&p.question).ok()?).ok()?.len()))
            .max()
            .unwrap_or(0);
        c.max_seq_len = c.max_seq_len.max(longest).max(probe_longest + crate::eval::report::DECODE_BUDGET);
        c
    }

    /// Every benchmark probe.
    pub fn probes(&self) -> Vec<&Probe> {
        self.cases.iter().flat_map(|c| &c.probes).collect()
    }
}

/// Mean recall of greedy outputs on the direct QA probes of every graph fact.
pub fn direct_recall(model: &Model<f32>, lab: &Lab) -> Result<f64> {
    let mut prompts = Vec::new();
    let mut golds = Vec::new();
    for t in lab.graph.triples() {
        let (q, a) = crate::unlearn::neighbors::direct_probe(&lab.graph, &lab.bank, t)?;
        prompts.push(lab.tokenizer.encode_prompt(&q)?);
        golds.push(a);
    }
    let mut total = 0.0;
    for (ps, gs) in prompts.chunks(64).zip(golds.chunks(64)) {
        for (o, g) in greedy_decode_batch(model, ps, 8)?.iter().zip(gs) {
            total += rouge_l(&lab.tokenizer.detokenize(o), g).recall;
        }
    }
    Ok(total / golds.len() as f64)
}

/// Mean recall over every benchmark probe.
pub fn probe_recall(model: &Model<f32>, lab: &Lab) -> Result<f64> {
    let outs = decode_probes(model, &lab.tokenizer, &lab.probes(), false)?;
    Ok(outs.iter().map(|o| o.recall).sum::<f64>() / outs.len() as f64)
}

/// Pretrain a fresh model until every benchmark probe is answered
/// (mean recall ≥ `gate`) or the schedule runs out.
pub fn pretrain_lab(lab: &Lab, config: &ModelConfig, schedule: &Schedule, gate: f64) -> Result<(Model<f32>, PretrainReport)> {
    let mut model = Model::new(Params::init(&lab.fit_config(config.clone()))?);
    let report = pretrain(&mut model, &lab.corpus, schedule, |m, epoch| {
        let r = probe_recall(m, lab)?;
        log::info!("epoch {epoch}: benchmark probe recall {r:.4}");
        Ok(r >= gate)
    })?;
    Ok((model, report))
}

/// [`pretrain_lab`] with a checkpoint cache at `path`.
pub fn pretrain_cached(lab: &Lab, config: &ModelConfig, schedule: &Schedule, gate: f64, path: &Path) -> Result<Model<f32>> {
    if path.exists() {
        let m = load_checkpoint(path)?;
        if m.config() == &lab.fit_config(config.clone()) {
            return Ok(m);
        }
    }
    let (m, _) = pretrain_lab(lab, config, schedule, gate)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&m, path)?;
    Ok(m)
}

/// Keep only probes the model answers and cases whose direct probes are all known.
pub fn known_cases(model: &Model<f32>, lab: &Lab, threshold: f64) -> Result<(Vec<BenchmarkCase>, Vec<ProbeOutput>)> {
    let outs = decode_probes(model, &lab.tokenizer, &lab.probes(), false)?;
    let by_id: HashMap<&str, &str> = outs.iter().map(|o| (o.probe_id.as_str(), o.output.as_str())).collect();
    let all: Vec<Probe> = lab.probes().into_iter().cloned().collect();
    let part = filter_known(all, threshold, |p| Ok(by_id[p.probe_id.as_str()].to_string()))?;
    let mut cases = Vec::new();
    for c in &lab.cases {
        let probes: Vec<Probe> = part.kept.iter().filter(|p| p.case_id == c.case_id).cloned().collect();
        let has_train = probes.iter().any(|p| p.split == Split::ForgetTrain);
        let has_retain = probes.iter().any(|p| p.split == Split::RetainEval);
        if has_train && has_retain {
            cases.push(BenchmarkCase { probes, ..c.clone() });
        }
    }
    if cases.is_empty() {
        return Err(Error::Precondition("no benchmark case is known to the model".into()));
    }
    let kept: std::collections::HashSet<&str> = cases.iter().flat_map(|c| &c.probes).map(|p| p.probe_id.as_str()).collect();
    let pre = outs.into_iter().filter(|o| kept.contains(o.probe_id.as_str())).collect();
    Ok((cases, pre))
}

/// Everything measured for one method on one benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub run: UnlearnRun,
    pub eval: Evaluation,
}

impl MethodResult {
    pub fn qa(&self) -> &MetricsReport {
        self.eval.qa()
    }

    pub fn family(&self, fam: crate::bench::TemplateFamily) -> Option<&MetricsReport> {
        self.eval.family(fam)
    }
}

/// Metrics and diagnostics of one evaluated model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Vec<MetricsReport>,
    pub boundary: Option<BoundaryReport>,
    pub drift: Option<DriftReport>,
    pub outputs: Vec<ProbeOutput>,
}

impl Evaluation {
    pub fn family(&self, fam: crate::bench::TemplateFamily) -> Option<&MetricsReport> {
        self.metrics.iter().find(|m| m.family == fam)
    }

    /// QA-family metrics.
    pub fn qa(&self) -> &MetricsReport {
        self.family(crate::bench::TemplateFamily::QA).expect("QA metrics are always computed")
    }
}

fn encode_probe(tok: &Tokenizer, p: &Probe) -> Result<ScoredSeq> {
    tok.encode_pair(&p.question, &p.worked_answer())
}

/// Boundary-metric inputs: direct forget probes, retain probes and mined neighbors.
pub fn boundary_sets(tok: &Tokenizer, cases: &[BenchmarkCase], items: &[ForgetItem]) -> Result<(Vec<ScoredSeq>, Vec<ScoredSeq>, Vec<ScoredSeq>)> {
    let probes: Vec<&Probe> = cases.iter().flat_map(|c| &c.probes).collect();
    let forget = probes.iter().filter(|p| p.split != Split::RetainEval && p.probe_type == ProbeType::Direct).map(|p| encode_probe(tok, p)).collect::<Result<Vec<_>>>()?;
    let retain = probes.iter().filter(|p| p.split == Split::RetainEval).map(|p| encode_probe(tok, p)).collect::<Result<Vec<_>>>()?;
    let neighbors = items
        .iter()
        .flat_map(|it| &it.neighbors.items)
        .map(|n| tok.encode_pair(&n.question, &n.answer))
        .collect::<Result<Vec<_>>>()?;
    Ok((forget, retain, neighbors))
}

fn drift_inputs(tok: &Tokenizer, cases: &[BenchmarkCase], items: &[ForgetItem]) -> Result<(DriftGroups, Vec<GradientItem>)> {
    let probes: Vec<&Probe> = cases.iter().flat_map(|c| &c.probes).collect();
    let prompts = |keep: &dyn Fn(&Probe) -> bool| -> Result<Vec<Vec<u32>>> {
        probes.iter().filter(|p| keep(p)).map(|p| tok.encode_prompt(&p.question)).collect()
    };
    let groups = DriftGroups {
        target: prompts(&|p| p.split != Split::RetainEval && p.probe_type == ProbeType::Direct)?,
        neighbor: items.iter().flat_map(|it| &it.neighbors.items).map(|n| tok.encode_prompt(&n.question)).collect::<Result<_>>()?,
        distant: prompts(&|p| p.split == Split::RetainEval)?,
    };
    let grads = items
        .iter()
        .map(|it| {
            Ok(GradientItem {
                forget: tok.encode_pair(&it.probe.question, &it.probe.answer)?,
                neighbors: it
                    .neighbors
                    .items
                    .iter()
                    .map(|n| Ok((tok.encode_pair(&n.question, &n.answer)?, n.weight)))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((groups, grads))
}

/// Diagnostics to compute besides the table metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Diagnostics {
    pub boundary: bool,
    pub drift: bool,
}

/// Evaluate `model` (the result of unlearning `base` with `cfg`) against the
/// pre-unlearning outputs `pre`. ICU evaluates `base` with wrapped prompts.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model(
    base: &Model<f32>,
    model: &Model<f32>,
    lab: &Lab,
    cases: &[BenchmarkCase],
    pre: &[ProbeOutput],
    cfg: &UnlearnConfig,
    diag: Diagnostics,
    epsilon: f64,
) -> Result<Evaluation> {
    let probes: Vec<&Probe> = cases.iter().flat_map(|c| &c.probes).collect();
    let icu = cfg.method == Method::Icu;
    let outputs = decode_probes(model, &lab.tokenizer, &probes, icu)?;
    let metrics = FAMILIES.iter().map(|&f| metrics_report(pre, &outputs, f)).collect::<Result<Vec<_>>>()?;
    let need_items = (diag.boundary || diag.drift) && !icu;
    let items = if need_items { prepare_items(&lab.graph, &lab.bank, cases, cfg)? } else { Vec::new() };
    let boundary = if diag.boundary && !icu {
        let (f, r, n) = boundary_sets(&lab.tokenizer, cases, &items)?;
        Some(boundary_report(model, base, &f, &r, &n, epsilon)?)
    } else {
        None
    };
    let drift = if diag.drift && !icu {
        let (groups, grads) = drift_inputs(&lab.tokenizer, cases, &items)?;
        Some(drift_report(base, model, &groups, &grads, cfg.beta)?)
    } else {
        None
    };
    Ok(Evaluation { metrics, boundary, drift, outputs })
}

/// Unlearn `cases` from a copy of `base` with `cfg` and evaluate against `pre`.
pub fn run_method(
    base: &Model<f32>,
    lab: &Lab,
    cases: &[BenchmarkCase],
    pre: &[ProbeOutput],
    cfg: &UnlearnConfig,
    diag: Diagnostics,
    epsilon: f64,
) -> Result<(Model<f32>, MethodResult)> {
    let (model, run) = unlearn_cases(base, lab, cases, cfg)?;
    let eval = evaluate_model(base, &model, lab, cases, pre, cfg, diag, epsilon)?;
    Ok((model, MethodResult { method: cfg.method, run, eval }))
}

/// Unlearn `cases` from a copy of `base`.
pub fn unlearn_cases(base: &Model<f32>, lab: &Lab, cases: &[BenchmarkCase], cfg: &UnlearnConfig) -> Result<(Model<f32>, UnlearnRun)> {
    let items = prepare_items(&lab.graph, &lab.bank, cases, cfg)?;
    let mut model = base.clone();
    let run = run_unlearn(&mut model, &lab.tokenizer, &items, &eval_probes(cases), cfg)?;
    Ok((model, run))
}

/// Metrics of the unmodified model (the "before" row) and its boundary report.
pub fn baseline(base: &Model<f32>, lab: &Lab, cases: &[BenchmarkCase], pre: &[ProbeOutput], cfg: &UnlearnConfig, epsilon: f64) -> Result<(Vec<MetricsReport>, BoundaryReport)> {
    let metrics = FAMILIES.iter().map(|&f| metrics_report(pre, pre, f)).collect::<Result<Vec<_>>>()?;
    let items = prepare_items(&lab.graph, &lab.bank, cases, cfg)?;
    let (f, r, n) = boundary_sets(&lab.tokenizer, cases, &items)?;
    Ok((metrics, boundary_report(base, base, &f, &r, &n, epsilon)?))
}

/// Hash of the base model, for manifests.
pub fn base_hash(model: &Model<f32>) -> String {
    model_hash(model)
}
