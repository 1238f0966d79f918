//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1 to 4 and 11 check exactness of the implementation and fail the
//! run. Criteria 5 to 10 are measured outcomes of training experiments; their
//! lines report the result without affecting the exit status.
//!
//! Base checkpoints are cached under `target/acceptance-cache`; the first run
//! pretrains them (several minutes per world).

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphforget::bench::corpus::CorpusConfig;
use graphforget::bench::{build_benchmark, BenchConfig, BenchmarkCase, ProbeType, TemplateBank, FAMILIES, PROBE_TYPES};
use graphforget::cli::{run, EXIT_OK};
use graphforget::eval::report::decode_probes;
use graphforget::eval::{roc_auc, rouge_l};
use graphforget::kg::world::generate_world_with_reserved;
use graphforget::kg::WorldConfig;
use graphforget::lm::checkpoint::{from_bytes, load_checkpoint, model_hash, save_checkpoint, to_bytes};
use graphforget::lm::gradcheck::check_gradients;
use graphforget::lm::pretrain::Schedule;
use graphforget::lm::{LossGraph, Model, ModelConfig, Params, ScoredSeq};
use graphforget::pipeline::*;
use graphforget::unlearn::{Method, UnlearnConfig};

const SEEDS: [u64; 3] = [0, 1, 2];
const EPSILON: f64 = 0.1;

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, t: Instant, v: Verdict) -> bool {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {n:>2} {title}: {} ({:.1} s)", v.detail, t.elapsed().as_secs_f64());
    v.pass
}

fn cache(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache").join(name)
}

fn schedule(seed: u64) -> Schedule {
    Schedule { max_epochs: 40, lr: 1e-3, seed, ..Default::default() }
}

fn majority(v: &[bool]) -> bool {
    v.iter().filter(|&&b| b).count() * 2 > v.len()
}

fn flags(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '+' } else { '-' }).collect()
}

fn gradients() -> Verdict {
    let cfg = ModelConfig { vocab_size: 23, d_model: 16, n_layers: 1, n_heads: 2, d_ff: 32, max_seq_len: 16, seed: 1 };
    let mut p = Params::init(&cfg).unwrap();
    for (i, t) in p.tensors.iter_mut().enumerate() {
        for (j, v) in t.data.iter_mut().enumerate() {
            *v += 0.05 * ((i * 31 + j * 7) as f64).sin();
        }
    }
    let m: Model<f64> = Model::new(p);
    let mut g = LossGraph::new();
    g.push(ScoredSeq::new(vec![1, 5, 9, 3], vec![12, 2]));
    g.push(ScoredSeq::new(vec![1, 7], vec![4, 4, 2]));
    g.push(ScoredSeq::new(vec![1, 8, 11, 13, 3], vec![20]));
    match check_gradients(&m, &g, &[-0.7, 1.3, -0.4], 64, None, 3) {
        Ok(r) => Verdict { pass: r.coordinates == 64 && r.max_rel_error < 1e-4, detail: format!("max rel err {:.2e} over {} coordinates", r.max_rel_error, r.coordinates) },
        Err(e) => Verdict { pass: false, detail: e.to_string() },
    }
}

fn lcs_table(a: &[&str], b: &[&str]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn pairwise_auc(f: &[f64], r: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in f {
        for &y in r {
            s += if x < y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    s / (f.len() * r.len()) as f64
}

fn oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab = ["the", "a", "city", "of", "paris", "is", "river", "x"];
    let mut rouge_bad = 0;
    for _ in 0..1000 {
        let mut words = |n: usize| (0..rng.gen_range(0..n)).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>();
        let (h, r) = (words(15), words(15));
        let want = if r.is_empty() { 0.0 } else { lcs_table(&h, &r) as f64 / r.len() as f64 };
        if rouge_l(&h.join(" "), &r.join(" ")).recall != want {
            rouge_bad += 1;
        }
    }
    let mut auc_bad = 0;
    for _ in 0..100 {
        let mut set = |n: usize| (0..rng.gen_range(1..n)).map(|_| rng.gen_range(0..12) as f64 / 4.0).collect::<Vec<_>>();
        let (f, r) = (set(60), set(60));
        if roc_auc(&f, &r).ok() != Some(pairwise_auc(&f, &r)) {
            auc_bad += 1;
        }
    }
    Verdict { pass: rouge_bad == 0 && auc_bad == 0, detail: format!("{rouge_bad}/1000 ROUGE-L and {auc_bad}/100 AUC mismatches") }
}

fn filtration_and_distribution() -> (Verdict, Verdict) {
    let bank = TemplateBank::default_bank();
    let (mut violations, mut facts, mut entities) = (Vec::new(), 0, 0);
    let (mut bad_dist, mut bad_manifest, mut cases_seen) = (0, 0, 0);
    for seed in 0..50 {
        let g = generate_world_with_reserved(&WorldConfig { seed, ..Default::default() }, bank.lexicon()).unwrap();
        entities += g.num_entities();
        let (cases, manifest) = build_benchmark(&g, &bank, &BenchConfig { seed, ..Default::default() }).unwrap();
        if manifest.direct_qa_count != cases.len() {
            bad_manifest += 1;
        }
        for c in &cases {
            cases_seen += 1;
            facts += c.retain_facts.len();
            violations.extend(common::filtration_violations(&g, c));
            let exact = FAMILIES.iter().all(|&fam| PROBE_TYPES.iter().all(|&ty| c.probes_of(ty, fam).count() == ty.per_family()));
            if !exact {
                bad_dist += 1;
            }
        }
    }
    (
        Verdict {
            pass: violations.is_empty(),
            detail: format!("{} violations among {facts} retain facts, mean world size {}", violations.len(), entities / 50),
        },
        Verdict {
            pass: bad_dist == 0 && bad_manifest == 0,
            detail: format!("{bad_dist}/{cases_seen} cases off the 1/2/1/2/1/1 distribution, {bad_manifest}/50 manifest count mismatches"),
        },
    )
}

fn memorization() -> Verdict {
    let lab = Lab::new(&common::world_200(0), &BenchConfig { seed: 0, n_targets: 12, ..Default::default() }, &CorpusConfig::default()).unwrap();
    let base = pretrain_cached(&lab, &lab.model_config(0), &schedule(0), 0.99, &cache("world200.ckpt")).unwrap();
    let direct: Vec<_> = lab.probes().into_iter().filter(|p| p.probe_type == ProbeType::Direct).collect();
    let outs = decode_probes(&base, &lab.tokenizer, &direct, false).unwrap();
    let recall = outs.iter().map(|o| o.recall).sum::<f64>() / outs.len() as f64;
    Verdict { pass: recall >= 0.95, detail: format!("{} entities, mean direct recall {recall:.4} over {} probes", lab.graph.num_entities(), outs.len()) }
}

/// Everything one seed contributes to the method comparisons.
struct SeedOutcome {
    cases: usize,
    before_auc: f64,
    pre_locality: f64,
    neds: MethodResult,
    npo: MethodResult,
    ga_best: f64,
    gd_best: f64,
    corrupt: Vec<(f64, MethodResult)>,
    secs: f64,
}

fn best_sweep(base: &Model<f32>, lab: &Lab, cases: &[BenchmarkCase], pre: &[graphforget::eval::ProbeOutput], method: Method, seed: u64) -> (f64, Model<f32>, MethodResult) {
    let mut best: Option<(f64, Model<f32>, MethodResult)> = None;
    for lr in TOY_LR_GRID {
        let cfg = UnlearnConfig { learning_rate: lr, ..toy_unlearn_config(method, seed) };
        let (m, r) = run_method(base, lab, cases, pre, &cfg, Diagnostics::default(), EPSILON).unwrap();
        if best.as_ref().map_or(true, |b| r.qa().hmean > b.2.qa().hmean) {
            best = Some((lr, m, r));
        }
    }
    best.unwrap()
}

fn seed_outcome(seed: u64) -> SeedOutcome {
    let t = Instant::now();
    let lab = Lab::new(&WorldConfig { seed, ..Default::default() }, &BenchConfig { seed, ..Default::default() }, &CorpusConfig::default()).unwrap();
    let base = pretrain_cached(&lab, &lab.model_config(seed), &schedule(seed), 0.99, &cache(&format!("base{seed}.ckpt"))).unwrap();
    let (cases, pre) = known_cases(&base, &lab, KNOWN_THRESHOLD).unwrap();
    let full = Diagnostics { boundary: true, drift: true };

    let (lr, neds_model, swept) = best_sweep(&base, &lab, &cases, &pre, Method::Neds, seed);
    let neds_cfg = UnlearnConfig { learning_rate: lr, ..toy_unlearn_config(Method::Neds, seed) };
    let eval = evaluate_model(&base, &neds_model, &lab, &cases, &pre, &neds_cfg, full, EPSILON).unwrap();
    let neds = MethodResult { method: Method::Neds, run: swept.run, eval };

    let npo_cfg = UnlearnConfig { learning_rate: lr, ..toy_unlearn_config(Method::Npo, seed) };
    let (_, npo) = run_method(&base, &lab, &cases, &pre, &npo_cfg, full, EPSILON).unwrap();
    let ga_best = best_sweep(&base, &lab, &cases, &pre, Method::Ga, seed).2.qa().hmean;
    let gd_best = best_sweep(&base, &lab, &cases, &pre, Method::Gd, seed).2.qa().hmean;
    let corrupt = [0.5, 0.8]
        .into_iter()
        .map(|rate| {
            let cfg = UnlearnConfig { corruption_rate: rate, ..neds_cfg.clone() };
            (rate, run_method(&base, &lab, &cases, &pre, &cfg, Diagnostics::default(), EPSILON).unwrap().1)
        })
        .collect();
    let (before, boundary) = baseline(&base, &lab, &cases, &pre, &neds_cfg, EPSILON).unwrap();
    let pre_locality = before[0].locality;
    let o = SeedOutcome { cases: cases.len(), before_auc: boundary.roc_auc, pre_locality, neds, npo, ga_best, gd_best, corrupt, secs: t.elapsed().as_secs_f64() };
    let (m, n) = (o.neds.qa(), o.npo.qa());
    let (b, nb) = (o.neds.eval.boundary.as_ref().unwrap(), o.npo.eval.boundary.as_ref().unwrap());
    println!(
        "       seed {seed}: lr {lr:e}, {} cases, NEDS UE {:.3?}/{:.3?}/{:.3?} loc {:.3} rr {:.3} hmean {:.3} | NPO mh {:.3?} | GA {:.3} GD {:.3} | AUC {:.3}->{:.3} gap {:.3} vs {:.3} | {:.0} s",
        o.cases, m.ue_direct, m.ue_paraphrase, m.ue_multi_hop, m.locality, m.refusal_rate, m.hmean, n.ue_multi_hop, o.ga_best, o.gd_best, o.before_auc, b.roc_auc, b.logprob_gap, nb.logprob_gap, o.secs
    );
    o
}

fn end_to_end(o: &[SeedOutcome]) -> Verdict {
    let ok: Vec<bool> = o
        .iter()
        .map(|s| {
            let m = s.neds.qa();
            m.ue_direct.unwrap_or(0.0) >= 0.9
                && m.ue_paraphrase.unwrap_or(0.0) >= 0.9
                && m.ue_multi_hop.unwrap_or(0.0) >= 0.8
                && m.refusal_rate == 0.0
                && m.locality >= 0.8 * s.pre_locality
                && s.secs <= 20.0 * 60.0
        })
        .collect();
    let pass = ok.iter().filter(|&&b| b).count() >= 2;
    Verdict { pass, detail: format!("seeds [{}], need 2 of 3", flags(&ok)) }
}

fn orderings(o: &[SeedOutcome]) -> Verdict {
    let mh: Vec<bool> = o.iter().map(|s| s.neds.qa().ue_multi_hop.unwrap_or(0.0) >= s.npo.qa().ue_multi_hop.unwrap_or(0.0) - 0.02).collect();
    let hm: Vec<bool> = o.iter().map(|s| s.neds.qa().hmean > s.ga_best && s.neds.qa().hmean > s.gd_best).collect();
    let pass = majority(&mh) && majority(&hm);
    Verdict { pass, detail: format!("multi-hop vs NPO [{}], hmean above GA and GD [{}]", flags(&mh), flags(&hm)) }
}

fn boundary(o: &[SeedOutcome]) -> Verdict {
    let auc: Vec<bool> = o.iter().map(|s| s.neds.eval.boundary.as_ref().unwrap().roc_auc - s.before_auc >= 0.10).collect();
    let gap: Vec<bool> = o.iter().map(|s| s.neds.eval.boundary.as_ref().unwrap().logprob_gap > s.npo.eval.boundary.as_ref().unwrap().logprob_gap).collect();
    Verdict { pass: majority(&auc) && majority(&gap), detail: format!("AUC gain >= 0.10 [{}], gap above NPO [{}]", flags(&auc), flags(&gap)) }
}

fn anchoring(o: &[SeedOutcome]) -> Verdict {
    let matched = o.iter().all(|s| s.neds.run.steps == s.npo.run.steps);
    let kl: Vec<bool> = o.iter().map(|s| s.neds.eval.boundary.as_ref().unwrap().mean_kl_neighbor < s.npo.eval.boundary.as_ref().unwrap().mean_kl_neighbor).collect();
    let drift: Vec<bool> = o.iter().map(|s| s.neds.eval.drift.as_ref().unwrap().drift_neighbor < s.npo.eval.drift.as_ref().unwrap().drift_neighbor).collect();
    let eps: Vec<bool> = o
        .iter()
        .map(|s| {
            s.neds.eval.boundary.as_ref().unwrap().neighbor_within_epsilon_fraction > s.npo.eval.boundary.as_ref().unwrap().neighbor_within_epsilon_fraction
        })
        .collect();
    let pass = matched && majority(&kl) && majority(&drift) && majority(&eps);
    Verdict { pass, detail: format!("matched steps {matched}, neighbor KL [{}], drift [{}], epsilon fraction [{}]", flags(&kl), flags(&drift), flags(&eps)) }
}

fn corruption(o: &[SeedOutcome]) -> Verdict {
    let ok: Vec<bool> = o
        .iter()
        .map(|s| {
            let clean = s.neds.qa();
            s.corrupt.iter().all(|(rate, r)| {
                let m = r.qa();
                if *rate == 0.5 {
                    (m.ue_direct.unwrap_or(0.0) - clean.ue_direct.unwrap_or(0.0)).abs() <= 0.10 && (m.locality - clean.locality).abs() <= 0.05
                } else {
                    m.locality >= 0.7 * clean.locality
                }
            })
        })
        .collect();
    let detail = o
        .iter()
        .map(|s| s.corrupt.iter().map(|(r, m)| format!("{r}: UE {:.3?} loc {:.3}", m.qa().ue_direct, m.qa().locality)).collect::<Vec<_>>().join(", "))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict { pass: majority(&ok), detail: format!("seeds [{}] ({detail})", flags(&ok)) }
}

fn reductions() -> Verdict {
    let lab = Lab::new(&WorldConfig::default(), &BenchConfig::default(), &CorpusConfig::default()).unwrap();
    let base = pretrain_cached(&lab, &lab.model_config(0), &schedule(0), 0.99, &cache("base0.ckpt")).unwrap();
    let (cases, _) = known_cases(&base, &lab, KNOWN_THRESHOLD).unwrap();
    let cfg = |method| UnlearnConfig { epochs: 1, ..toy_unlearn_config(method, 0) };
    let (neds, _) = unlearn_cases(&base, &lab, &cases, &UnlearnConfig { lambda: 0.0, mu: 0.0, ..cfg(Method::Neds) }).unwrap();
    let (npo, _) = unlearn_cases(&base, &lab, &cases, &UnlearnConfig { npo_retain: false, ..cfg(Method::Npo) }).unwrap();
    let reduction = model_hash(&neds) == model_hash(&npo);
    let (icu, _) = unlearn_cases(&base, &lab, &cases, &cfg(Method::Icu)).unwrap();
    let icu_same = to_bytes(&icu) == to_bytes(&base);

    let dir = tempfile::tempdir().unwrap();
    let bytes = to_bytes(&neds);
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&neds, &path).unwrap();
    let round = to_bytes(&from_bytes(&bytes).unwrap()) == bytes && to_bytes(&load_checkpoint(&path).unwrap()) == bytes;

    let cfg_path = common::tiny_config(dir.path());
    let csv = |out: &str| {
        let out = dir.path().join(out);
        for step in [&["gen-world"][..], &["build-bench"], &["pretrain"], &["unlearn"], &["unlearn", "--method", "npo"], &["unlearn", "--method", "icu"], &["eval"]] {
            let mut args = vec!["graphforget".to_string(), "--config".into(), cfg_path.display().to_string(), "--out".into(), out.display().to_string()];
            args.extend(step.iter().map(|s| s.to_string()));
            assert_eq!(run(args), EXIT_OK, "{step:?}");
        }
        std::fs::read(out.join("report/results.csv")).unwrap()
    };
    let rerun = csv("a") == csv("b");
    Verdict {
        pass: reduction && icu_same && round && rerun,
        detail: format!("NEDS(0,0) = NPO without retain {reduction}, ICU unchanged {icu_same}, checkpoint round trip {round}, identical CSV {rerun}"),
    }
}

fn main() {
    let mut passed: Vec<bool> = Vec::new();
    let t = Instant::now();
    passed.push(report(1, "gradient correctness", t, gradients()));
    let t = Instant::now();
    passed.push(report(2, "oracle equivalence", t, oracles()));
    let t = Instant::now();
    let (filt, dist) = filtration_and_distribution();
    passed.push(report(3, "filtration soundness", t, filt));
    passed.push(report(4, "probe distribution", t, dist));
    let t = Instant::now();
    passed.push(report(5, "memorization gate", t, memorization()));
    let t = Instant::now();
    let outcomes: Vec<SeedOutcome> = SEEDS.iter().map(|&s| seed_outcome(s)).collect();
    passed.push(report(6, "NEDS end to end", t, end_to_end(&outcomes)));
    passed.push(report(7, "method orderings", t, orderings(&outcomes)));
    passed.push(report(8, "boundary formation", t, boundary(&outcomes)));
    passed.push(report(9, "anchoring locality", t, anchoring(&outcomes)));
    passed.push(report(10, "corruption robustness", t, corruption(&outcomes)));
    let t = Instant::now();
    passed.push(report(11, "reductions and exactness", t, reductions()));
    let n = passed.iter().filter(|&&b| b).count();
    println!("{n}/{} criteria passed", passed.len());
    let gating = [1, 2, 3, 4, 11];
    if gating.iter().any(|&c| !passed[c - 1]) {
        std::process::exit(1);
    }
}
