mod common;

use graphforget::bench::{build_benchmark, emit_dataset, load_dataset, BenchConfig, ProbeType, Split, TemplateBank, FAMILIES, PROBE_TYPES};
use graphforget::kg::world::generate_world_with_reserved;
use graphforget::kg::{KnowledgeGraph, WorldConfig};
use graphforget::Error;

fn world(seed: u64) -> KnowledgeGraph {
    generate_world_with_reserved(&WorldConfig { seed, ..Default::default() }, TemplateBank::default_bank().lexicon()).unwrap()
}

fn bench(seed: u64) -> (KnowledgeGraph, Vec<graphforget::bench::BenchmarkCase>, graphforget::bench::BenchManifest) {
    let g = world(seed);
    let (cases, manifest) = build_benchmark(&g, &TemplateBank::default_bank(), &BenchConfig { seed, ..Default::default() }).unwrap();
    (g, cases, manifest)
}

#[test]
fn probe_distribution_is_exact() {
    for seed in 0..4 {
        let (_, cases, manifest) = bench(seed);
        assert_eq!(cases.len(), 20);
        assert_eq!(manifest.direct_qa_count, 20);
        for c in &cases {
            for fam in FAMILIES {
                for ty in PROBE_TYPES {
                    assert_eq!(c.probes_of(ty, fam).count(), ty.per_family(), "{} {ty} {fam:?}", c.case_id);
                }
            }
            assert_eq!(c.probes.iter().filter(|p| p.split == Split::ForgetTrain).count(), 1);
            let train = c.train_probe().unwrap();
            assert_eq!((train.probe_type, train.template_family), (ProbeType::Direct, graphforget::bench::TemplateFamily::QA));
        }
    }
}

#[test]
fn probe_invariants() {
    let (_, cases, _) = bench(1);
    for p in cases.iter().flat_map(|c| &c.probes) {
        assert!(!p.answer.trim().is_empty());
        assert!(!p.question.to_lowercase().contains(&p.answer.to_lowercase()), "{}", p.question);
        assert_eq!(p.hop, p.probe_type.hop());
        assert_eq!(p.split == Split::RetainEval, p.probe_type == ProbeType::Retain);
    }
}

#[test]
fn construction_is_deterministic() {
    let (_, a, ma) = bench(2);
    let (_, b, mb) = bench(2);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&ma).unwrap(), serde_json::to_string(&mb).unwrap());
}

#[test]
fn retain_facts_pass_independent_checks() {
    for seed in 0..3 {
        let (g, cases, _) = bench(seed);
        for c in &cases {
            assert!(!c.retain_facts.is_empty(), "{}", c.case_id);
            let v = common::filtration_violations(&g, c);
            assert!(v.is_empty(), "{v:?}");
        }
    }
}

#[test]
fn path_oracle_counts_simple_paths() {
    let (g, cases, _) = bench(0);
    let t = cases[0].target.resolve(&g).unwrap();
    assert!(common::count_paths(&g, t.head, t.tail, 1, &[]) >= 1);
    assert_eq!(common::count_paths(&g, t.head, t.tail, 1, &[t]), 0);
    assert_eq!(common::count_paths(&g, t.head, t.head, 0, &[]), 1);
}

#[test]
fn dataset_round_trip() {
    let (_, cases, _) = bench(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d/probes.jsonl");
    emit_dataset(&cases, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), cases);
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines, cases.iter().map(|c| c.probes.len()).sum::<usize>());
}

#[test]
fn truncated_dataset_names_the_record() {
    let (_, cases, _) = bench(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probes.jsonl");
    emit_dataset(&cases, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.lines().take(5).collect::<Vec<_>>().join("\n");
    let cut = &cut[..cut.len() - 10];
    std::fs::write(&path, cut).unwrap();
    match load_dataset(&path) {
        Err(Error::Dataset { index, .. }) => assert_eq!(index, 4),
        other => panic!("expected a dataset error, got {other:?}"),
    }
}

#[test]
fn missing_dataset_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(&dir.path().join("none.jsonl")), Err(Error::MissingArtifact(_))));
}

#[test]
fn too_many_targets_is_reported() {
    let g = world(0);
    let e = build_benchmark(&g, &TemplateBank::default_bank(), &BenchConfig { n_targets: 10_000, ..Default::default() }).unwrap_err();
    assert!(matches!(e, Error::InsufficientTargets { requested: 10_000, .. }));
}

#[test]
fn small_world_has_about_200_entities() {
    let g = generate_world_with_reserved(&common::world_200(1), TemplateBank::default_bank().lexicon()).unwrap();
    assert!((190..=215).contains(&g.num_entities()), "{}", g.num_entities());
}
