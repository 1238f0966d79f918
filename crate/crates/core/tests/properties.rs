use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphforget::bench::{build_benchmark, BenchConfig, TemplateBank};
use graphforget::eval::boundary::mean_answer_kl;
use graphforget::eval::rouge::rouge_l_tokens;
use graphforget::eval::{harmonic_mean, locality, roc_auc, rouge_l, unlearning_efficacy};
use graphforget::kg::algo::geodesic_distance;
use graphforget::kg::world::generate_world_with_reserved;
use graphforget::kg::{Distance, WorldConfig};
use graphforget::lm::{Model, ModelConfig, Params, ScoredSeq};
use graphforget::unlearn::losses::npo_term;
use graphforget::unlearn::neighbors::corruption_count;
use graphforget::unlearn::{corrupt_neighbors, mine_neighbors};

/// Full-table LCS.
fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn pairwise_auc(f: &[f64], r: &[f64]) -> f64 {
    let mut score = 0.0;
    for &x in f {
        for &y in r {
            if x < y {
                score += 1.0;
            } else if x == y {
                score += 0.5;
            }
        }
    }
    score / (f.len() * r.len()) as f64
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from), 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rouge_matches_lcs_table(h in words(), r in words()) {
        let s = rouge_l_tokens(&h, &r);
        let l = lcs_table(&h, &r) as f64;
        let recall = if r.is_empty() { 0.0 } else { l / r.len() as f64 };
        let precision = if h.is_empty() { 0.0 } else { l / h.len() as f64 };
        prop_assert_eq!(s.recall, recall);
        prop_assert_eq!(s.precision, precision);
        prop_assert_eq!(rouge_l(&h.join(" "), &r.join(" ")).recall, recall);
    }

    #[test]
    fn auc_matches_pairwise_counting(
        f in prop::collection::vec(0u8..6, 1..20),
        r in prop::collection::vec(0u8..6, 1..20),
    ) {
        let f: Vec<f64> = f.into_iter().map(|x| x as f64 / 4.0).collect();
        let r: Vec<f64> = r.into_iter().map(|x| x as f64 / 4.0).collect();
        prop_assert_eq!(roc_auc(&f, &r).unwrap(), pairwise_auc(&f, &r));
    }

    #[test]
    fn auc_swap_complements(f in prop::collection::vec(-5.0f64..5.0, 1..15), r in prop::collection::vec(-5.0f64..5.0, 1..15)) {
        let a = roc_auc(&f, &r).unwrap();
        let b = roc_auc(&r, &f).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ue_and_locality_are_complements(outs in prop::collection::vec(words(), 1..8), golds in prop::collection::vec(words().prop_filter("non-empty", |w| !w.is_empty()), 1..8)) {
        let n = outs.len().min(golds.len());
        let o: Vec<String> = outs[..n].iter().map(|w| w.join(" ")).collect();
        let g: Vec<String> = golds[..n].iter().map(|w| w.join(" ")).collect();
        let ue = unlearning_efficacy(&o, &g).unwrap();
        let loc = locality(&o, &g).unwrap();
        prop_assert!((ue + loc - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ue));
        prop_assert_eq!(locality(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn harmonic_mean_bounds(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let h = harmonic_mean(a, b);
        prop_assert!(h <= a.max(b) + 1e-12 && h >= 0.0);
        prop_assert!(h <= (a + b) / 2.0 + 1e-12);
    }

    #[test]
    fn npo_term_is_monotone_with_the_stated_slope(h in -50.0f64..50.0, beta in 0.01f64..2.0) {
        let (l, d) = npo_term(h, beta);
        let eps = 1e-5;
        prop_assert!(l >= 0.0);
        prop_assert!(npo_term(h + 0.1, beta).0 >= l);
        let fd = (npo_term(h + eps, beta).0 - npo_term(h - eps, beta).0) / (2.0 * eps);
        prop_assert!((fd - d).abs() < 1e-6);
    }

    #[test]
    fn corruption_count_rounds_half_up(rate in 0.0f64..=1.0, n in 1usize..30) {
        let c = corruption_count(rate, n);
        prop_assert!(c <= n);
        prop_assert!((c as f64 - rate * n as f64).abs() <= 0.5 + 1e-9);
    }
}

#[test]
fn auc_of_identical_distributions_averages_one_half() {
    let mut total = 0.0;
    let trials = 40;
    for s in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let f: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
        let r: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
        total += roc_auc(&f, &r).unwrap();
    }
    assert!((total / trials as f64 - 0.5).abs() <= 0.05);
}

#[test]
fn kl_is_non_negative() {
    let cfg = |seed| ModelConfig { vocab_size: 15, d_model: 8, n_layers: 1, n_heads: 2, d_ff: 16, max_seq_len: 12, seed };
    let a: Model<f64> = Model::new(Params::init(&cfg(1)).unwrap());
    let b: Model<f64> = Model::new(Params::init(&cfg(2)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seqs: Vec<ScoredSeq> = (0..30)
        .map(|_| {
            let p: Vec<u32> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(5..15)).collect();
            let a: Vec<u32> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(5..15)).collect();
            ScoredSeq::new(p, a)
        })
        .collect();
    for s in &seqs {
        let kl = mean_answer_kl(&a, &b, std::slice::from_ref(s)).unwrap();
        assert!(kl >= 0.0, "{kl}");
    }
    assert_eq!(mean_answer_kl(&a, &a, &seqs).unwrap(), 0.0);
}

#[test]
fn neighbor_sets_are_normalized_and_corruption_is_far() {
    let bank = TemplateBank::default_bank();
    let g = generate_world_with_reserved(&WorldConfig::default(), bank.lexicon()).unwrap();
    let (cases, _) = build_benchmark(&g, &bank, &BenchConfig::default()).unwrap();
    for (i, c) in cases.iter().enumerate() {
        let target = c.target.resolve(&g).unwrap();
        let set = mine_neighbors(&g, &bank, &target, &[], 10, 2).unwrap();
        assert!(!set.is_empty() && set.len() <= 10);
        assert!((set.weight_sum() - 1.0).abs() < 1e-9);
        assert!(set.items.iter().all(|n| n.answer != c.target.tail));
        assert_eq!(corrupt_neighbors(&g, &bank, &set, &target, &[], 0.0, i as u64).unwrap(), set);
        let bad = corrupt_neighbors(&g, &bank, &set, &target, &[], 0.5, i as u64).unwrap();
        assert!((bad.weight_sum() - 1.0).abs() < 1e-9);
        let replaced: Vec<_> = bad.items.iter().filter(|n| !set.items.iter().any(|m| m.fact == n.fact)).collect();
        assert_eq!(replaced.len(), corruption_count(0.5, set.len()));
        for n in replaced {
            let h = n.fact.resolve(&g).unwrap().head;
            match geodesic_distance(&g, target.head, h).unwrap() {
                Distance::Finite(d) => assert!(d > 5, "{} at {d}", n.fact),
                Distance::Infinite => {}
            }
        }
    }
}
