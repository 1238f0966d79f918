//! Command-line operator surface.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::dataset::{read_json, write_json};
use crate::bench::{emit_dataset, load_dataset, BenchManifest, TemplateBank, TemplateFamily};
use crate::error::{Error, Result};
use crate::eval::report::{csv_bytes, delta_kcs_svg, ReportRow};
use crate::eval::{BoundaryReport, DriftReport, MetricsReport};
use crate::kg::io::{dump_world, load_world};
use crate::kg::world::generate_world_with_reserved;
use crate::lm::checkpoint::{load_checkpoint, model_hash, save_checkpoint};
use crate::lm::pretrain::PretrainReport;
use crate::lm::{Model, Tokenizer};
use crate::pipeline::{baseline, evaluate_model, known_cases, pretrain_lab, run_method, unlearn_cases, Diagnostics, Lab};
use crate::unlearn::{Method, UnlearnConfig, UnlearnRun};
pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Label of the unmodified model's row.
pub const BEFORE_ROW: &str = "BE (before)";

#[derive(Parser, Debug)]
#[command(name = "graphforget", version, about = "Knowledge-graph unlearning laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub corruption: Option<f64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic world.
    GenWorld,
    /// Build the benchmark and tokenizer from the world.
    BuildBench,
    /// Pretrain the base model on the world corpus.
    Pretrain,
    /// Unlearn the benchmark targets with one method.
    Unlearn,
    /// Evaluate the base model and every unlearned model.
    Eval,
    /// Learning-rate sweep selecting the best harmonic mean.
    Sweep,
    /// NEDS under increasing neighbor corruption.
    AblateCorruption,
    /// Re-emit the tables and chart from saved evaluation results.
    Report,
}

impl Common {
    /// Config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("method", self.method.clone());
        push("lr", self.lr.map(|v| v.to_string()));
        push("lambda", self.lambda.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("k", self.k.map(|v| v.to_string()));
        push("corruption", self.corruption.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        for (k, v) in pairs {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Input and output file hashes of one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Standard artifact locations under the experiment directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn world(&self) -> PathBuf {
        self.root.join("world")
    }
    pub fn bench(&self) -> PathBuf {
        self.root.join("bench")
    }
    pub fn probes(&self) -> PathBuf {
        self.bench().join("probes.jsonl")
    }
    pub fn tokenizer(&self) -> PathBuf {
        self.bench().join("tokenizer.json")
    }
    pub fn base(&self) -> PathBuf {
        self.root.join("model").join("base.ckpt")
    }
    pub fn run_dir(&self, m: Method) -> PathBuf {
        self.root.join("runs").join(m.name().to_ascii_lowercase())
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn rel(layout: &Layout, p: &Path) -> String {
    p.strip_prefix(&layout.root).unwrap_or(p).display().to_string()
}

fn require(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(p.to_path_buf()))
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(p: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(d) = p.parent() {
        mkdir(d)?;
    }
    std::fs::write(p, bytes).map_err(|e| Error::io(p, e))
}

struct Stage<'a> {
    layout: &'a Layout,
    manifest: Manifest,
}

impl<'a> Stage<'a> {
    fn new(layout: &'a Layout, command: &str, cfg: &ExperimentConfig) -> Self {
        Stage { layout, manifest: Manifest { command: command.into(), config: Some(cfg.clone()), ..Default::default() } }
    }

    fn input(&mut self, p: &Path) -> Result<()> {
        let h = file_hash(p)?;
        self.manifest.inputs.insert(rel(self.layout, p), h);
        Ok(())
    }

    fn output(&mut self, p: &Path) -> Result<()> {
        let h = file_hash(p)?;
        self.manifest.outputs.insert(rel(self.layout, p), h);
        Ok(())
    }

    fn note(&mut self, k: &str, v: impl Serialize) -> Result<()> {
        self.manifest.notes.insert(k.into(), serde_json::to_value(v)?);
        Ok(())
    }

    fn finish(self, dir: &Path) -> Result<()> {
        mkdir(dir)?;
        write_json(&dir.join("manifest.json"), &self.manifest)
    }
}

pub fn cmd_gen_world(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout { root: cfg.out.clone() };
    let bank = TemplateBank::default_bank();
    let g = generate_world_with_reserved(&cfg.world, bank.lexicon())?;
    let dir = layout.world();
    dump_world(&g, &dir)?;
    let mut st = Stage::new(&layout, "gen-world", cfg);
    st.output(&dir.join("triples.tsv"))?;
    st.output(&dir.join("schema.tsv"))?;
    st.note("seed", cfg.world.seed)?;
    st.note("entities", g.num_entities())?;
    st.note("triples", g.triples().len())?;
    st.finish(&dir)
}

fn world_files(layout: &Layout) -> [PathBuf; 2] {
    [layout.world().join("triples.tsv"), layout.world().join("schema.tsv")]
}

pub fn cmd_build_bench(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout { root: cfg.out.clone() };
    let wf = world_files(&layout);
    wf.iter().try_for_each(|p| require(p))?;
    let g = load_world(&layout.world())?;
    let lab = Lab::from_graph(g, TemplateBank::default_bank(), &cfg.bench, &cfg.corpus)?;
    emit_dataset(&lab.cases, &layout.probes())?;
    lab.tokenizer.save(&layout.tokenizer())?;
    let mp = layout.bench().join("bench_manifest.json");
    write_json(&mp, &lab.manifest)?;
    let mut st = Stage::new(&layout, "build-bench", cfg);
    wf.iter().try_for_each(|p| st.input(p))?;
    for p in [layout.probes(), crate::bench::dataset::cases_path(&layout.probes()), layout.tokenizer(), mp] {
        st.output(&p)?;
    }
    st.note("cases", lab.cases.len())?;
    st.note("direct_qa_count", lab.manifest.direct_qa_count)?;
    st.note("corpus_sequences", lab.corpus.len())?;
    st.finish(&layout.bench())
}

/// Reassemble the lab from the world, dataset and tokenizer on disk.
pub fn load_lab(cfg: &ExperimentConfig) -> Result<(Layout, Lab)> {
    let layout = Layout { root: cfg.out.clone() };
    world_files(&layout).iter().try_for_each(|p| require(p))?;
    for p in [layout.probes(), layout.tokenizer(), layout.bench().join("bench_manifest.json")] {
        require(&p)?;
    }
    let g = load_world(&layout.world())?;
    let cases = load_dataset(&layout.probes())?;
    let manifest: BenchManifest = read_json(&layout.bench().join("bench_manifest.json"))?;
    let tok = Tokenizer::load(&layout.tokenizer())?;
    let lab = Lab::assemble(g, TemplateBank::default_bank(), cases, manifest, &cfg.corpus, Some(tok))?;
    Ok((layout, lab))
}

fn lab_inputs(st: &mut Stage, layout: &Layout) -> Result<()> {
    for p in world_files(layout) {
        st.input(&p)?;
    }
    st.input(&layout.probes())?;
    st.input(&layout.tokenizer())
}

pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<()> {
    let (layout, lab) = load_lab(cfg)?;
    let (model, report): (Model<f32>, PretrainReport) = pretrain_lab(&lab, &cfg.model, &cfg.schedule, cfg.memorization_gate)?;
    mkdir(&layout.root.join("model"))?;
    save_checkpoint(&model, &layout.base())?;
    let mut st = Stage::new(&layout, "pretrain", cfg);
    lab_inputs(&mut st, &layout)?;
    st.output(&layout.base())?;
    st.note("report", &report)?;
    st.note("model_hash", model_hash(&model))?;
    st.finish(&layout.root.join("model"))
}

/// Saved outcome of `unlearn`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: UnlearnConfig,
    pub run: UnlearnRun,
    pub known_cases: usize,
}

pub fn cmd_unlearn(cfg: &ExperimentConfig) -> Result<()> {
    let (layout, lab) = load_lab(cfg)?;
    require(&layout.base())?;
    let base = load_checkpoint(&layout.base())?;
    let (cases, _) = known_cases(&base, &lab, cfg.known_threshold)?;
    let (model, run) = unlearn_cases(&base, &lab, &cases, &cfg.unlearn)?;
    let dir = layout.run_dir(cfg.unlearn.method);
    mkdir(&dir)?;
    let mut st = Stage::new(&layout, "unlearn", cfg);
    lab_inputs(&mut st, &layout)?;
    st.input(&layout.base())?;
    if cfg.unlearn.method != Method::Icu {
        save_checkpoint(&model, &dir.join("model.ckpt"))?;
        st.output(&dir.join("model.ckpt"))?;
    } else {
        let stale = dir.join("model.ckpt");
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
    }
    let rp = dir.join("run.json");
    write_json(&rp, &RunRecord { config: cfg.unlearn.clone(), run, known_cases: cases.len() })?;
    st.output(&rp)?;
    st.finish(&dir)
}

/// Evaluation results of every model, as saved by `eval`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<ReportRow>,
    pub boundary: BTreeMap<String, BoundaryReport>,
    pub drift: BTreeMap<String, DriftReport>,
    pub notes: Vec<String>,
}

pub const REPORT_NOTES: [&str; 3] = [
    "UE is 1 minus mean ROUGE-L recall; locality and KCS are mean ROUGE-L recall",
    "logprob_gap is mean per-token retain log-probability minus mean per-token forget log-probability",
    "absolute values come from a toy model and are not comparable to large-model results",
];

/// Every row of `summary` for one template family, with the ΔKCS chart.
fn emit_tables(summary: &Summary, dir: &Path) -> Result<()> {
    write_file(&dir.join("results.csv"), csv_bytes(&summary.rows)?)?;
    let bars: Vec<(String, f64)> = summary
        .rows
        .iter()
        .filter(|r| r.report.family == TemplateFamily::QA && r.method != BEFORE_ROW)
        .map(|r| (r.method.clone(), r.report.delta_kcs))
        .collect();
    write_file(&dir.join("delta_kcs.svg"), delta_kcs_svg(&bars))?;
    let mut text = String::new();
    text.push_str(&format!(
        "{:<12} {:>6} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>7}\n",
        "method", "family", "direct", "para", "inverse", "multihop", "locality", "refusal", "dKCS"
    ));
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    for r in &summary.rows {
        let m = &r.report;
        text.push_str(&format!(
            "{:<12} {:>6} {:>8} {:>8} {:>8} {:>9} {:>8.3} {:>8.3} {:>7.3}\n",
            r.method,
            format!("{:?}", m.family),
            f(m.ue_direct),
            f(m.ue_paraphrase),
            f(m.ue_inverse),
            f(m.ue_multi_hop),
            m.locality,
            m.refusal_rate,
            m.delta_kcs
        ));
    }
    text.push('\n');
    for n in &summary.notes {
        text.push_str(&format!("note: {n}\n"));
    }
    write_file(&dir.join("summary.txt"), text)
}

fn rows_for(label: &str, metrics: &[MetricsReport]) -> Vec<ReportRow> {
    metrics.iter().map(|m| ReportRow { method: label.to_string(), report: m.clone() }).collect()
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    let (layout, lab) = load_lab(cfg)?;
    require(&layout.base())?;
    let base = load_checkpoint(&layout.base())?;
    let (cases, pre) = known_cases(&base, &lab, cfg.known_threshold)?;
    let mut st = Stage::new(&layout, "eval", cfg);
    lab_inputs(&mut st, &layout)?;
    st.input(&layout.base())?;
    let mut summary = Summary { notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(), ..Default::default() };
    let (bm, bb) = baseline(&base, &lab, &cases, &pre, &cfg.unlearn, cfg.epsilon)?;
    summary.rows.extend(rows_for(BEFORE_ROW, &bm));
    summary.boundary.insert(BEFORE_ROW.into(), bb);
    for m in crate::unlearn::METHODS {
        let dir = layout.run_dir(m);
        let rp = dir.join("run.json");
        if !rp.exists() {
            continue;
        }
        let record: RunRecord = read_json(&rp)?;
        st.input(&rp)?;
        let model = if m == Method::Icu {
            base.clone()
        } else {
            let cp = dir.join("model.ckpt");
            require(&cp)?;
            st.input(&cp)?;
            load_checkpoint(&cp)?
        };
        let ev = evaluate_model(&base, &model, &lab, &cases, &pre, &record.config, Diagnostics { boundary: true, drift: true }, cfg.epsilon)?;
        summary.rows.extend(rows_for(m.name(), &ev.metrics));
        if let Some(b) = ev.boundary {
            summary.boundary.insert(m.name().into(), b);
        }
        if let Some(d) = ev.drift {
            summary.drift.insert(m.name().into(), d);
        }
    }
    let dir = layout.report();
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("boundary.json"), &summary.boundary)?;
    write_json(&dir.join("drift.json"), &summary.drift)?;
    emit_tables(&summary, &dir)?;
    for f in ["summary.json", "boundary.json", "drift.json", "results.csv", "delta_kcs.svg", "summary.txt"] {
        st.output(&dir.join(f))?;
    }
    st.finish(&dir)
}

/// One learning rate's outcome in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lr: f64,
    pub ue_direct: Option<f64>,
    pub locality: Option<f64>,
    pub hmean: Option<f64>,
    pub error: Option<String>,
}

/// Index of the row with the highest harmonic mean (first on ties).
pub fn select_best(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(h) = r.hmean {
            if best.map_or(true, |(_, b)| h > b) {
                best = Some((i, h));
            }
        }
    }
    best.map(|b| b.0)
}

fn sweep_csv(rows: &[SweepRow], best: Option<usize>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Precondition(format!("csv: {e}"));
    w.write_record(["lr", "direct_ue", "locality", "hmean", "selected", "status"]).map_err(err)?;
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    for (i, r) in rows.iter().enumerate() {
        w.write_record([
            format!("{:e}", r.lr),
            f(r.ue_direct),
            f(r.locality),
            f(r.hmean),
            (Some(i) == best).to_string(),
            r.error.clone().map_or("ok".into(), |e| format!("failed: {e}")),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Precondition(format!("csv: {e}")))
}

/// Run `cfg.unlearn` at every rate of `cfg.lr_grid` and score each by the
/// harmonic mean of direct UE and locality (QA family).
pub fn sweep(base: &Model<f32>, lab: &Lab, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let (cases, pre) = known_cases(base, lab, cfg.known_threshold)?;
    let mut rows = Vec::new();
    for &lr in &cfg.lr_grid {
        let uc = UnlearnConfig { learning_rate: lr, ..cfg.unlearn.clone() };
        match run_method(base, lab, &cases, &pre, &uc, Diagnostics::default(), cfg.epsilon) {
            Ok((_, r)) => {
                let m = r.qa();
                rows.push(SweepRow { lr, ue_direct: m.ue_direct, locality: Some(m.locality), hmean: Some(m.hmean), error: None });
            }
            Err(e) => rows.push(SweepRow { lr, ue_direct: None, locality: None, hmean: None, error: Some(e.to_string()) }),
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let (layout, lab) = load_lab(cfg)?;
    require(&layout.base())?;
    let base = load_checkpoint(&layout.base())?;
    let rows = sweep(&base, &lab, cfg)?;
    let best = select_best(&rows);
    let dir = layout.root.join("sweep").join(cfg.unlearn.method.name().to_ascii_lowercase());
    write_file(&dir.join("sweep.csv"), sweep_csv(&rows, best)?)?;
    let mut st = Stage::new(&layout, "sweep", cfg);
    lab_inputs(&mut st, &layout)?;
    st.input(&layout.base())?;
    st.output(&dir.join("sweep.csv"))?;
    st.note("selected_lr", best.map(|i| rows[i].lr))?;
    st.note("rows", &rows)?;
    st.finish(&dir)
}

/// One corruption rate's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rate: f64,
    pub ue_direct: Option<f64>,
    pub ue_multi_hop: Option<f64>,
    pub locality: f64,
}

pub fn ablate(base: &Model<f32>, lab: &Lab, cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let (cases, pre) = known_cases(base, lab, cfg.known_threshold)?;
    cfg.corruption_grid
        .iter()
        .map(|&rate| {
            let uc = UnlearnConfig { method: Method::Neds, corruption_rate: rate, ..cfg.unlearn.clone() };
            let (_, r) = run_method(base, lab, &cases, &pre, &uc, Diagnostics::default(), cfg.epsilon)?;
            let m = r.qa();
            Ok(AblationRow { rate, ue_direct: m.ue_direct, ue_multi_hop: m.ue_multi_hop, locality: m.locality })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Precondition(format!("csv: {e}"));
    w.write_record(["corruption_rate", "direct_ue", "multi_hop_ue", "locality"]).map_err(err)?;
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    for r in rows {
        w.write_record([format!("{}", r.rate), f(r.ue_direct), f(r.ue_multi_hop), format!("{:.3}", r.locality)]).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Precondition(format!("csv: {e}")))
}

pub fn cmd_ablate_corruption(cfg: &ExperimentConfig) -> Result<()> {
    let (layout, lab) = load_lab(cfg)?;
    require(&layout.base())?;
    let base = load_checkpoint(&layout.base())?;
    let rows = ablate(&base, &lab, cfg)?;
    let dir = layout.root.join("ablation");
    write_file(&dir.join("ablation.csv"), ablation_csv(&rows)?)?;
    let mut st = Stage::new(&layout, "ablate-corruption", cfg);
    lab_inputs(&mut st, &layout)?;
    st.input(&layout.base())?;
    st.output(&dir.join("ablation.csv"))?;
    st.finish(&dir)
}

pub fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout { root: cfg.out.clone() };
    let dir = layout.report();
    let sp = dir.join("summary.json");
    require(&sp)?;
    let summary: Summary = read_json(&sp)?;
    emit_tables(&summary, &dir)
}

/// Map an error to its process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } => EXIT_USAGE,
        Error::MissingArtifact(_) => EXIT_MISSING,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

pub fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    match cmd {
        Command::GenWorld => cmd_gen_world(cfg),
        Command::BuildBench => cmd_build_bench(cfg),
        Command::Pretrain => cmd_pretrain(cfg),
        Command::Unlearn => cmd_unlearn(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::AblateCorruption => cmd_ablate_corruption(cfg),
        Command::Report => cmd_report(cfg),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = cli.common.resolve().and_then(|cfg| dispatch(&cli.command, &cfg));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lr: f64, ue: f64, loc: f64) -> SweepRow {
        SweepRow { lr, ue_direct: Some(ue), locality: Some(loc), hmean: Some(crate::eval::harmonic_mean(ue, loc)), error: None }
    }

    #[test]
    fn sweep_selection() {
        assert_eq!(select_best(&[row(1e-4, 0.5, 0.5)]), Some(0));
        let rows = [row(1e-4, 0.9, 0.9), row(3e-5, 1.0, 0.5)];
        assert_eq!(select_best(&rows), Some(0));
        let failed = SweepRow { lr: 1.0, ue_direct: None, locality: None, hmean: None, error: Some("diverged".into()) };
        assert_eq!(select_best(&[failed.clone()]), None);
        let text = String::from_utf8(sweep_csv(&[failed], None).unwrap()).unwrap();
        assert!(text.contains("failed: diverged"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::MissingArtifact("a".into())), EXIT_MISSING);
        assert_eq!(exit_code(&Error::Numeric("nan".into())), EXIT_NUMERIC);
        assert_eq!(run(["graphforget", "--no-such-flag", "gen-world"]), EXIT_USAGE);
    }

    #[test]
    fn missing_world_is_exit_3() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("x");
        assert_eq!(run(["graphforget", "build-bench", "--out", out.to_str().unwrap()]), EXIT_MISSING);
    }
}
