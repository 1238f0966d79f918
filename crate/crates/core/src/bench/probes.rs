//! Probe rendering, verification and the known-probe filter.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::templates::{chain_cloze, chain_question, ends_with_blank, fill, TemplateBank};
use super::{Probe, ProbeType, Split, TemplateFamily, TripleRecord, FAMILIES};
use crate::error::{Error, Result};
use crate::eval::rouge::{rouge_l, rouge_tokens};
use crate::kg::patterns::ChainInstance;
use crate::kg::{KnowledgeGraph, TripleId};
use crate::lm::tokenizer::BLANK;

/// What a case asks about: the target, the chains probed, and the retain fact probed.
#[derive(Clone, Debug)]
pub struct ProbePlan {
    pub target: TripleId,
    pub two_hop: [ChainInstance; 2],
    pub three_hop: ChainInstance,
    pub retain: TripleId,
}

fn family_tag(f: TemplateFamily) -> &'static str {
    match f {
        TemplateFamily::QA => "qa",
        TemplateFamily::FB => "fb",
    }
}

/// The eight QA and eight FB probes of one case.
///
/// Paraphrases are drawn without replacement from the non-direct templates
/// with a generator seeded by `seed`.
pub fn generate_probes(g: &KnowledgeGraph, bank: &TemplateBank, case_id: &str, plan: &ProbePlan, seed: u64) -> Result<Vec<Probe>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tgt = g.triple(plan.target);
    let target = TripleRecord::from_triple(g, &tgt);
    let rel = bank.get(&target.relation)?;
    let mut out = Vec::with_capacity(16);
    for fam in FAMILIES {
        let templates = match fam {
            TemplateFamily::QA => &rel.qa,
            TemplateFamily::FB => &rel.fb,
        };
        if templates.len() < 3 {
            return Err(Error::MissingTemplate(format!("{} needs two paraphrase templates", target.relation)));
        }
        let mut push = |ty: ProbeType, k: usize, question: String, answer: String, chain: Vec<TripleRecord>| {
            let split = match (ty, fam) {
                (ProbeType::Retain, _) => Split::RetainEval,
                (ProbeType::Direct, TemplateFamily::QA) => Split::ForgetTrain,
                _ => Split::ForgetEval,
            };
            out.push(Probe {
                case_id: case_id.to_string(),
                probe_id: format!("{case_id}-{}-{}-{k}", family_tag(fam), ty.name()),
                probe_type: ty,
                template_family: fam,
                hop: ty.hop(),
                question,
                answer,
                target: target.clone(),
                chain: Some(chain),
                split,
            });
        };
        push(ProbeType::Direct, 0, fill(&templates[0], &target.head, &target.tail), target.tail.clone(), vec![target.clone()]);
        let mut idx: Vec<usize> = (1..templates.len()).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx[..2].iter().enumerate() {
            push(ProbeType::Paraphrase, k, fill(&templates[i], &target.head, &target.tail), target.tail.clone(), vec![target.clone()]);
        }
        let inv = match fam {
            TemplateFamily::QA => &rel.inverse_qa,
            TemplateFamily::FB => &rel.inverse_fb,
        };
        push(ProbeType::Inverse, 0, fill(inv, &target.head, &target.tail), target.head.clone(), vec![target.clone()]);
        let chains: Vec<(ProbeType, usize, &ChainInstance)> = vec![
            (ProbeType::TwoHop, 0, &plan.two_hop[0]),
            (ProbeType::TwoHop, 1, &plan.two_hop[1]),
            (ProbeType::ThreeHop, 0, &plan.three_hop),
        ];
        for (ty, k, c) in chains {
            let records: Vec<TripleRecord> = c.triples.iter().map(|&t| TripleRecord::from_triple(g, &g.triple(t))).collect();
            let rels: Vec<&str> = records.iter().map(|r| r.relation.as_str()).collect();
            let start = g.label(c.start());
            let q = match fam {
                TemplateFamily::QA => chain_question(bank, &rels, start)?,
                TemplateFamily::FB => chain_cloze(bank, &rels, start)?,
            };
            push(ty, k, q, g.label(c.answer()).to_string(), records);
        }
        let ret = TripleRecord::from_triple(g, &g.triple(plan.retain));
        let rt = bank.get(&ret.relation)?;
        let t0 = match fam {
            TemplateFamily::QA => &rt.qa[0],
            TemplateFamily::FB => &rt.fb[0],
        };
        push(ProbeType::Retain, 0, fill(t0, &ret.head, &ret.tail), ret.tail.clone(), vec![ret]);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Check a probe against the graph: no answer leak, well-formed template,
/// consistent fact path, and a unique answer at every step.
pub fn verify_probe(g: &KnowledgeGraph, probe: &Probe) -> Verdict {
    match check(g, probe) {
        Ok(()) => Verdict::Pass,
        Err(reason) => Verdict::Fail(reason),
    }
}

fn check(g: &KnowledgeGraph, p: &Probe) -> std::result::Result<(), String> {
    let ans = rouge_tokens(&p.answer);
    if ans.is_empty() {
        return Err("empty answer".into());
    }
    if contains_run(&rouge_tokens(&p.question), &ans) {
        return Err(format!("answer `{}` appears in the question", p.answer));
    }
    let blank = p.question.contains(BLANK);
    match p.template_family {
        TemplateFamily::FB if !ends_with_blank(&p.question) => return Err("cloze does not end with the blank".into()),
        TemplateFamily::QA if blank => return Err("question contains a blank".into()),
        _ => {}
    }
    if p.hop != p.probe_type.hop() {
        return Err(format!("hop {} does not match probe type {}", p.hop, p.probe_type));
    }
    let chain = p.chain.as_ref().ok_or("missing fact path")?;
    if chain.len() != p.hop as usize {
        return Err(format!("fact path has {} steps for a {}-hop probe", chain.len(), p.hop));
    }
    let mut triples = Vec::with_capacity(chain.len());
    for r in chain {
        let t = r.resolve(g).map_err(|e| e.to_string())?;
        if !g.contains(&t) {
            return Err(format!("fact {r} is not in the graph"));
        }
        triples.push(t);
    }
    for w in triples.windows(2) {
        if w[0].tail != w[1].head {
            return Err("fact path is not connected".into());
        }
    }
    let uses_target = chain.contains(&p.target);
    match p.probe_type {
        ProbeType::Retain if uses_target => return Err("retain probe asks about the target".into()),
        ProbeType::Retain => {}
        _ if !uses_target => return Err("forget probe does not involve the target".into()),
        _ => {}
    }
    let expected = if p.probe_type == ProbeType::Inverse { triples[0].head } else { triples.last().expect("non-empty").tail };
    if g.label(expected) != p.answer {
        return Err(format!("answer `{}` does not match the graph (`{}`)", p.answer, g.label(expected)));
    }
    if p.probe_type == ProbeType::Inverse {
        let t = triples[0];
        let n = g.heads(t.tail, t.relation).count();
        if n != 1 {
            return Err(format!("inverse question has {n} valid answers"));
        }
    } else {
        for t in &triples {
            let n = g.tails(t.head, t.relation).count();
            if n != 1 {
                return Err(format!("step ({}, {}) has {n} valid answers", g.label(t.head), g.relation(t.relation).label));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct KnownPartition {
    pub kept: Vec<Probe>,
    pub dropped: Vec<Probe>,
    /// Cases dropped entirely because a direct probe was not known.
    pub dropped_cases: BTreeSet<String>,
}

/// Keep probes whose scored output reaches `threshold` ROUGE-L recall.
///
/// A case whose direct probe in either family is dropped is removed whole.
pub fn filter_known<F>(probes: Vec<Probe>, threshold: f64, mut scorer: F) -> Result<KnownPartition>
where
    F: FnMut(&Probe) -> Result<String>,
{
    let mut known = Vec::with_capacity(probes.len());
    let mut dropped_cases = BTreeSet::new();
    for p in &probes {
        let out = scorer(p).map_err(|e| Error::Scorer { probe_id: p.probe_id.clone(), msg: e.to_string() })?;
        let ok = rouge_l(&out, &p.answer).recall >= threshold;
        if !ok && p.probe_type == ProbeType::Direct {
            dropped_cases.insert(p.case_id.clone());
        }
        known.push(ok);
    }
    let mut part = KnownPartition { dropped_cases, ..Default::default() };
    for (p, ok) in probes.into_iter().zip(known) {
        if ok && !part.dropped_cases.contains(&p.case_id) {
            part.kept.push(p);
        } else {
            part.dropped.push(p);
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(id: &str, case: &str, ty: ProbeType, answer: &str) -> Probe {
        let t = TripleRecord { head: "a".into(), relation: "r".into(), tail: answer.into() };
        Probe {
            case_id: case.into(),
            probe_id: id.into(),
            probe_type: ty,
            template_family: TemplateFamily::QA,
            hop: ty.hop(),
            question: "q".into(),
            answer: answer.into(),
            target: t.clone(),
            chain: Some(vec![t]),
            split: Split::ForgetEval,
        }
    }

    #[test]
    fn known_filter_drops_case_on_unknown_direct() {
        let ps = vec![
            probe("1", "c0", ProbeType::Direct, "x"),
            probe("2", "c0", ProbeType::Paraphrase, "x"),
            probe("3", "c1", ProbeType::Direct, "y"),
            probe("4", "c1", ProbeType::Paraphrase, "y"),
        ];
        let part = filter_known(ps, 0.99, |p| Ok(if p.probe_id == "1" || p.probe_id == "4" { "z".into() } else { p.answer.clone() }))
            .unwrap();
        let kept: Vec<&str> = part.kept.iter().map(|p| p.probe_id.as_str()).collect();
        assert_eq!(kept, vec!["3"]);
        assert_eq!(part.dropped.len(), 3);
        assert_eq!(part.dropped_cases, BTreeSet::from(["c0".to_string()]));
    }

    #[test]
    fn scorer_error_names_probe() {
        let ps = vec![probe("p7", "c0", ProbeType::Direct, "x")];
        match filter_known(ps, 0.99, |_| Err(Error::Numeric("boom".into()))) {
            Err(Error::Scorer { probe_id, .. }) => assert_eq!(probe_id, "p7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leak_detection_is_whole_token() {
        assert!(contains_run(&rouge_tokens("Where is Mora Tel?"), &rouge_tokens("mora tel")));
        assert!(!contains_run(&rouge_tokens("Where is moratel?"), &rouge_tokens("mora tel")));
    }
}
