//! Decoding probes, assembling metric reports and writing CSV / SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{harmonic_mean, is_refusal, mean, refusal_rate};
use super::rouge::rouge_l;
use crate::bench::{Probe, ProbeType, Split, TemplateFamily};
use crate::error::{Error, Result};
use crate::lm::decode::greedy_decode_batch;
use crate::lm::tensor::Scalar;
use crate::lm::{Model, Tokenizer};
use crate::unlearn::icu_wrap;

/// Answer-token budget for greedy decoding.
pub const DECODE_BUDGET: usize = 16;
const CHUNK: usize = 64;

/// A decoded probe with its ROUGE-L recall against the gold answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub case_id: String,
    pub probe_id: String,
    pub probe_type: ProbeType,
    pub template_family: TemplateFamily,
    pub split: Split,
    pub gold: String,
    pub output: String,
    pub recall: f64,
    pub refused: bool,
}

/// Greedy-decode every probe; `icu` prepends the unlearning instruction.
pub fn decode_probes<T: Scalar>(model: &Model<T>, tok: &Tokenizer, probes: &[&Probe], icu: bool) -> Result<Vec<ProbeOutput>> {
    let prompts = probes
        .iter()
        .map(|p| {
            let q = if icu { icu_wrap(&p.question)? } else { p.question.clone() };
            tok.encode_prompt(&q)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outs = Vec::with_capacity(probes.len());
    for (ps, chunk) in probes.chunks(CHUNK).zip(prompts.chunks(CHUNK)) {
        let decoded = greedy_decode_batch(model, chunk, DECODE_BUDGET)?;
        for (p, ids) in ps.iter().zip(decoded) {
            let output = tok.detokenize(&ids);
            outs.push(ProbeOutput {
                case_id: p.case_id.clone(),
                probe_id: p.probe_id.clone(),
                probe_type: p.probe_type,
                template_family: p.template_family,
                split: p.split,
                gold: p.answer.clone(),
                recall: rouge_l(&output, &p.answer).recall,
                refused: is_refusal(&output),
                output,
            });
        }
    }
    Ok(outs)
}

/// Forgetting, locality and connectivity scores for one template family.
/// UE fields are `None` when no probe of that type survived filtering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub family: TemplateFamily,
    pub ue_direct: Option<f64>,
    pub ue_paraphrase: Option<f64>,
    pub ue_inverse: Option<f64>,
    pub ue_two_hop: Option<f64>,
    pub ue_three_hop: Option<f64>,
    /// Two-hop and three-hop probes pooled.
    pub ue_multi_hop: Option<f64>,
    pub ue_pooled: f64,
    pub locality: f64,
    pub kcs_pre: f64,
    pub kcs_post: f64,
    pub delta_kcs: f64,
    pub refusal_rate: f64,
    /// Harmonic mean of direct UE and locality.
    pub hmean: f64,
    pub n_forget: usize,
    pub n_retain: usize,
}

fn is_neighborhood(t: ProbeType) -> bool {
    matches!(t, ProbeType::Paraphrase | ProbeType::Inverse | ProbeType::TwoHop | ProbeType::ThreeHop)
}

fn ue_of(outs: &[&ProbeOutput], types: &[ProbeType]) -> Option<f64> {
    let r: Vec<f64> = outs.iter().filter(|o| types.contains(&o.probe_type)).map(|o| o.recall).collect();
    (!r.is_empty()).then(|| 1.0 - mean(&r))
}

/// Mean over cases of the mean recall on each case's neighborhood probes.
fn kcs_by_case(outs: &[&ProbeOutput]) -> BTreeMap<String, f64> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for o in outs.iter().filter(|o| is_neighborhood(o.probe_type)) {
        by.entry(o.case_id.clone()).or_default().push(o.recall);
    }
    by.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// Metrics for `family` from decoded outputs before and after unlearning.
/// `pre` and `post` must cover the same probes.
pub fn metrics_report(pre: &[ProbeOutput], post: &[ProbeOutput], family: TemplateFamily) -> Result<MetricsReport> {
    let pre: Vec<&ProbeOutput> = pre.iter().filter(|o| o.template_family == family).collect();
    let post: Vec<&ProbeOutput> = post.iter().filter(|o| o.template_family == family).collect();
    let ids = |v: &[&ProbeOutput]| v.iter().map(|o| o.probe_id.clone()).collect::<Vec<_>>();
    if ids(&pre) != ids(&post) {
        return Err(Error::Precondition("pre and post outputs cover different probes".into()));
    }
    let forget: Vec<&ProbeOutput> = post.iter().copied().filter(|o| o.split != Split::RetainEval).collect();
    let retain: Vec<f64> = post.iter().filter(|o| o.split == Split::RetainEval).map(|o| o.recall).collect();
    if forget.is_empty() || retain.is_empty() {
        return Err(Error::Precondition(format!("no forget or retain probes in family {family:?}")));
    }
    let (kpre, kpost) = (kcs_by_case(&pre), kcs_by_case(&post));
    if kpost.is_empty() {
        return Err(Error::Precondition("empty knowledge neighborhood".into()));
    }
    let kcs_pre = mean(&kpre.values().copied().collect::<Vec<_>>());
    let kcs_post = mean(&kpost.values().copied().collect::<Vec<_>>());
    let locality = mean(&retain);
    let ue_direct = ue_of(&forget, &[ProbeType::Direct]);
    let outputs: Vec<String> = forget.iter().map(|o| o.output.clone()).collect();
    Ok(MetricsReport {
        family,
        ue_direct,
        ue_paraphrase: ue_of(&forget, &[ProbeType::Paraphrase]),
        ue_inverse: ue_of(&forget, &[ProbeType::Inverse]),
        ue_two_hop: ue_of(&forget, &[ProbeType::TwoHop]),
        ue_three_hop: ue_of(&forget, &[ProbeType::ThreeHop]),
        ue_multi_hop: ue_of(&forget, &[ProbeType::TwoHop, ProbeType::ThreeHop]),
        ue_pooled: 1.0 - mean(&forget.iter().map(|o| o.recall).collect::<Vec<_>>()),
        locality,
        kcs_pre,
        kcs_post,
        delta_kcs: kcs_post - kcs_pre,
        refusal_rate: refusal_rate(&outputs),
        hmean: harmonic_mean(ue_direct.unwrap_or(0.0), locality),
        n_forget: forget.len(),
        n_retain: retain.len(),
    })
}

/// One labelled row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub report: MetricsReport,
}

pub const CSV_HEADER: [&str; 11] =
    ["method", "family", "direct", "paraphrase", "inverse", "multi_hops", "locality", "refusal_rate", "kcs_pre", "kcs_post", "delta_kcs"];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"))
}

/// Results table as CSV bytes: forget-set UE columns, locality, refusal rate and KCS.
pub fn csv_bytes(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Precondition(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        let m = &r.report;
        w.write_record([
            r.method.clone(),
            format!("{:?}", m.family),
            cell(m.ue_direct),
            cell(m.ue_paraphrase),
            cell(m.ue_inverse),
            cell(m.ue_multi_hop),
            cell(Some(m.locality)),
            cell(Some(m.refusal_rate)),
            cell(Some(m.kcs_pre)),
            cell(Some(m.kcs_post)),
            cell(Some(m.delta_kcs)),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Precondition(format!("csv: {e}")))
}

pub fn write_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_bytes(rows)?).map_err(|e| Error::io(path, e))
}

/// Bar chart of ΔKCS per label as a standalone SVG document.
pub fn delta_kcs_svg(bars: &[(String, f64)]) -> String {
    let (w, h, pad, bw) = (120 + 90 * bars.len().max(1), 320.0, 40.0, 50.0);
    let mid = h / 2.0;
    let scale = (h / 2.0 - pad) / bars.iter().map(|b| b.1.abs()).fold(1e-9, f64::max).max(0.1);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="10" y="20">Delta KCS (post - pre)</text>"#);
    let _ = writeln!(s, r#"<line x1="60" y1="{mid}" x2="{}" y2="{mid}" stroke="black"/>"#, w - 20);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = 80.0 + 90.0 * i as f64;
        let len = v.abs() * scale;
        let y = if *v >= 0.0 { mid - len } else { mid };
        let fill = if *v < 0.0 { "#c0392b" } else { "#2980b9" };
        let _ = writeln!(s, r#"<rect x="{x}" y="{y:.2}" width="{bw}" height="{len:.2}" fill="{fill}"/>"#);
        let ty = if *v >= 0.0 { y - 4.0 } else { y + len + 14.0 };
        let _ = writeln!(s, r#"<text x="{x}" y="{ty:.2}">{v:.3}</text>"#);
        let _ = writeln!(s, r#"<text x="{x}" y="{}">{}</text>"#, h - 10.0, xml_escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(case: &str, id: &str, ty: ProbeType, split: Split, recall: f64, output: &str) -> ProbeOutput {
        ProbeOutput {
            case_id: case.into(),
            probe_id: id.into(),
            probe_type: ty,
            template_family: TemplateFamily::QA,
            split,
            gold: "g".into(),
            output: output.into(),
            recall,
            refused: is_refusal(output),
        }
    }

    fn set(r: [f64; 5]) -> Vec<ProbeOutput> {
        vec![
            out("c0", "d", ProbeType::Direct, Split::ForgetTrain, r[0], "x"),
            out("c0", "p", ProbeType::Paraphrase, Split::ForgetEval, r[1], "x"),
            out("c0", "t", ProbeType::TwoHop, Split::ForgetEval, r[2], "I do not know"),
            out("c0", "h", ProbeType::ThreeHop, Split::ForgetEval, r[3], "x"),
            out("c0", "r", ProbeType::Retain, Split::RetainEval, r[4], "x"),
        ]
    }

    #[test]
    fn report_fields() {
        let pre = set([1.0, 1.0, 1.0, 1.0, 1.0]);
        let post = set([0.0, 0.5, 0.0, 1.0, 0.8]);
        let m = metrics_report(&pre, &post, TemplateFamily::QA).unwrap();
        assert_eq!(m.ue_direct, Some(1.0));
        assert_eq!(m.ue_paraphrase, Some(0.5));
        assert_eq!(m.ue_inverse, None);
        assert_eq!(m.ue_multi_hop, Some(0.5));
        assert_eq!(m.locality, 0.8);
        assert_eq!(m.kcs_pre, 1.0);
        assert!((m.kcs_post - 0.5).abs() < 1e-12);
        assert!((m.delta_kcs + 0.5).abs() < 1e-12);
        assert_eq!(m.refusal_rate, 0.25);
        assert!((m.hmean - harmonic_mean(1.0, 0.8)).abs() < 1e-12);
    }

    #[test]
    fn unchanged_outputs_have_zero_delta() {
        let a = set([0.3, 0.6, 0.2, 0.9, 0.7]);
        assert_eq!(metrics_report(&a, &a, TemplateFamily::QA).unwrap().delta_kcs, 0.0);
        assert!(metrics_report(&a, &a[..3], TemplateFamily::QA).is_err());
    }

    #[test]
    fn csv_layout() {
        let a = set([1.0, 1.0, 1.0, 1.0, 1.0]);
        let m = metrics_report(&a, &a, TemplateFamily::QA).unwrap();
        let text = String::from_utf8(csv_bytes(&[ReportRow { method: "BE (before)".into(), report: m }]).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("BE (before),QA,0.000,0.000,NA,0.000,1.000,0.250"));
    }

    #[test]
    fn svg_has_one_bar_per_label() {
        let s = delta_kcs_svg(&[("NEDS".into(), -0.7), ("NPO".into(), -0.3), ("A&B".into(), 0.1)]);
        assert_eq!(s.matches("<rect").count(), 3);
        assert!(s.contains("A&amp;B"));
    }
}
