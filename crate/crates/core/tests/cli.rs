mod common;

use std::path::Path;

use graphforget::cli::{run, EXIT_MISSING, EXIT_OK, EXIT_USAGE};

fn gf(cfg: &Path, out: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["graphforget".to_string(), "--config".into(), cfg.display().to_string(), "--out".into(), out.display().to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    run(v)
}

fn pipeline(cfg: &Path, out: &Path) {
    for step in [&["gen-world"][..], &["build-bench"], &["pretrain"], &["unlearn"], &["unlearn", "--method", "npo"], &["unlearn", "--method", "icu"], &["eval"]] {
        assert_eq!(gf(cfg, out, step), EXIT_OK, "{step:?}");
    }
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&cfg, &a);
    pipeline(&cfg, &b);
    let csv = |d: &Path| std::fs::read(d.join("report/results.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(std::fs::read(a.join("model/base.ckpt")).unwrap(), std::fs::read(b.join("model/base.ckpt")).unwrap());

    let text = String::from_utf8(csv(&a)).unwrap();
    let first: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(first[0], "method");
    assert!(text.contains("BE (before)"));
    for m in ["NEDS", "NPO", "ICU"] {
        assert!(text.lines().any(|l| l.starts_with(m)), "{m} row missing");
    }
    assert!(!a.join("runs/icu/model.ckpt").exists());
    assert!(a.join("runs/neds/model.ckpt").exists());
    for f in ["summary.json", "boundary.json", "drift.json", "delta_kcs.svg", "summary.txt", "manifest.json"] {
        assert!(a.join("report").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report/manifest.json")).unwrap()).unwrap();
    assert!(manifest["inputs"]["model/base.ckpt"].as_str().unwrap().len() == 64);

    std::fs::remove_file(a.join("report/results.csv")).unwrap();
    assert_eq!(gf(&cfg, &a, &["report"]), EXIT_OK);
    assert_eq!(csv(&a), csv(&b));

    assert_eq!(gf(&cfg, &a, &["sweep"]), EXIT_OK);
    let sweep = std::fs::read_to_string(a.join("sweep/neds/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2);
    assert!(sweep.lines().nth(1).unwrap().contains(",true,"));

    assert_eq!(gf(&cfg, &a, &["ablate-corruption"]), EXIT_OK);
    let abl = std::fs::read_to_string(a.join("ablation/ablation.csv")).unwrap();
    let rates: Vec<&str> = abl.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rates, ["0", "0.5", "0.8", "0.3"]);
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(dir.path());
    let out = dir.path().join("x");
    assert_eq!(gf(&cfg, &out, &["pretrain"]), EXIT_MISSING);
    assert_eq!(gf(&cfg, &out, &["report"]), EXIT_MISSING);
    assert_eq!(gf(&cfg, &out, &["gen-world"]), EXIT_OK);
    assert_eq!(gf(&cfg, &out, &["build-bench"]), EXIT_OK);
    assert_eq!(gf(&cfg, &out, &["unlearn"]), EXIT_MISSING);
    assert_eq!(gf(&cfg, &out, &["eval"]), EXIT_MISSING);
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(dir.path());
    let out = dir.path().join("x");
    assert_eq!(gf(&cfg, &out, &["gen-world", "--set", "no_such_key=1"]), EXIT_USAGE);
    assert_eq!(gf(&cfg, &out, &["gen-world", "--corruption", "2"]), EXIT_USAGE);
    let broken = dir.path().join("broken.cfg");
    std::fs::write(&broken, "seed = one\n").unwrap();
    assert_eq!(gf(&broken, &out, &["gen-world"]), EXIT_USAGE);
}

#[test]
fn stages_record_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(dir.path());
    let out = dir.path().join("x");
    assert_eq!(gf(&cfg, &out, &["gen-world"]), EXIT_OK);
    assert_eq!(gf(&cfg, &out, &["build-bench"]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("bench/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "build-bench");
    assert!(m["inputs"]["world/triples.tsv"].is_string());
    assert!(m["outputs"]["bench/probes.jsonl"].is_string());
    assert_eq!(m["notes"]["direct_qa_count"], 4);
}
