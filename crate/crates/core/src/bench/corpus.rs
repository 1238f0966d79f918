//! Pretraining corpus rendered from a graph with the template bank.

use serde::{Deserialize, Serialize};

use super::templates::{chain_cloze, chain_question, fill, TemplateBank, CHAIN_STEP_SEP};
use crate::error::Result;
use crate::kg::patterns::{instances, PATTERNS};
use crate::kg::KnowledgeGraph;
use crate::lm::objective::ScoredSeq;
use crate::lm::tokenizer::{Tokenizer, BOS_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Declarative statements per triple, at most the bank size.
    pub statements: usize,
    /// Render every QA/FB template, not just the direct ones.
    pub paraphrases: bool,
    /// Render inverse questions for triples whose head is unique given the tail.
    pub inverse: bool,
    /// Render every forward chain instance as a worked multi-hop question.
    pub chains: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { statements: 4, paraphrases: true, inverse: true, chains: true }
    }
}

/// One training sequence. An empty prompt marks a free-standing statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub prompt: String,
    pub answer: String,
}

impl CorpusItem {
    fn qa(prompt: String, answer: impl Into<String>) -> Self {
        CorpusItem { prompt, answer: answer.into() }
    }

    /// Token form: `[BOS] prompt [SEP] answer [EOS]`, or `[BOS] statement [EOS]`.
    pub fn encode(&self, tok: &Tokenizer) -> Result<ScoredSeq> {
        let prompt = if self.prompt.is_empty() { vec![BOS_ID] } else { tok.encode_prompt(&self.prompt)? };
        Ok(ScoredSeq::new(prompt, tok.encode_answer(&self.answer)?))
    }
}

/// Multi-hop answer spelling out each hop: `a ; b ; c`.
pub fn worked_chain_answer(labels: &[&str]) -> String {
    labels.join(&format!(" {CHAIN_STEP_SEP} "))
}

pub fn render_corpus(g: &KnowledgeGraph, bank: &TemplateBank, cfg: &CorpusConfig) -> Result<Vec<CorpusItem>> {
    let mut out = Vec::new();
    for t in g.triples() {
        let rel = &g.relation(t.relation).label;
        let rt = bank.get(rel)?;
        let (h, tl) = (g.label(t.head), g.label(t.tail));
        for s in rt.statements.iter().take(cfg.statements) {
            out.push(CorpusItem::qa(String::new(), fill(s, h, tl)));
        }
        let n = if cfg.paraphrases { usize::MAX } else { 1 };
        for q in rt.qa.iter().take(n) {
            out.push(CorpusItem::qa(fill(q, h, tl), tl));
        }
        for q in rt.fb.iter().take(n) {
            out.push(CorpusItem::qa(fill(q, h, tl), tl));
        }
        if cfg.inverse && g.heads(t.tail, t.relation).count() == 1 {
            out.push(CorpusItem::qa(fill(&rt.inverse_qa, h, tl), h));
            out.push(CorpusItem::qa(fill(&rt.inverse_fb, h, tl), h));
        }
    }
    if cfg.chains {
        for p in PATTERNS.iter().filter(|p| !p.has_inverse_step()) {
            for c in instances(g, p) {
                let rels: Vec<&str> = c.triples.iter().map(|&t| g.relation(g.triple(t).relation).label.as_str()).collect();
                let start = g.label(c.start());
                let hops: Vec<&str> = c.nodes[1..].iter().map(|&e| g.label(e)).collect();
                let ans = worked_chain_answer(&hops);
                out.push(CorpusItem::qa(chain_question(bank, &rels, start)?, ans.clone()));
                out.push(CorpusItem::qa(chain_cloze(bank, &rels, start)?, ans));
            }
        }
    }
    Ok(out)
}
