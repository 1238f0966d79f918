//! Deterministic template banks for probes and the pretraining corpus.
//!
//! `{h}` and `{t}` are replaced by head and tail labels, `{x}` by a nested
//! noun phrase. Fill-in-the-blank templates end with the `[BLANK]` token.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::kg::world::{COMMONSENSE_RELATIONS, RETAIN_PROPERTIES};
use crate::lm::tokenizer::{split_words, BLANK};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationTemplates {
    /// Index 0 is the direct question; the rest are paraphrases.
    pub qa: Vec<String>,
    /// Index 0 is the direct cloze; the rest are paraphrases.
    pub fb: Vec<String>,
    /// Questions asking for the head given the tail.
    pub inverse_qa: String,
    pub inverse_fb: String,
    /// Noun phrase over `{x}` used to compose multi-hop questions.
    pub phrase: String,
    /// Declarative renderings used only in the pretraining corpus.
    pub statements: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct TemplateBank {
    pub relations: BTreeMap<String, RelationTemplates>,
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn rt(qa: &[&str], fb: &[&str], inverse_qa: &str, inverse_fb: &str, phrase: &str, statements: &[&str]) -> RelationTemplates {
    RelationTemplates {
        qa: owned(qa),
        fb: owned(fb),
        inverse_qa: inverse_qa.into(),
        inverse_fb: inverse_fb.into(),
        phrase: phrase.into(),
        statements: owned(statements),
    }
}

/// Templates for a property described by a plain noun, e.g. "highest point".
fn noun_templates(noun: &str) -> RelationTemplates {
    let f = |s: &str| s.replace("{n}", noun);
    RelationTemplates {
        qa: vec![
            f("What is the {n} of {h}?"),
            f("Which {n} does {h} have?"),
            f("Name the {n} of {h}."),
            f("Tell me the {n} of {h}."),
        ],
        fb: vec![
            f("The {n} of {h} is [BLANK]"),
            f("{h} has the {n} [BLANK]"),
            f("As for {h}, its {n} is [BLANK]"),
            f("Regarding {h}, the {n} is [BLANK]"),
        ],
        inverse_qa: f("Which entity has {t} as its {n}?"),
        inverse_fb: f("{t} is the {n} of [BLANK]"),
        phrase: f("the {n} of {x}"),
        statements: vec![
            f("The {n} of {h} is {t}."),
            f("{h} has {t} as its {n}."),
            f("{t} is the {n} of {h}."),
            f("Known facts: {h} has the {n} {t}."),
        ],
    }
}

impl TemplateBank {
    pub fn default_bank() -> Self {
        let mut m = BTreeMap::new();
        let mut ins = |k: &str, v: RelationTemplates| {
            m.insert(k.to_string(), v);
        };
        ins(
            "capital_of",
            rt(
                &["What is the capital of {h}?", "Which city is the capital of {h}?", "Name the capital city of {h}.", "What city serves as the seat of government of {h}?"],
                &["The capital of {h} is [BLANK]", "The capital city of {h} is [BLANK]", "The seat of government of {h} is the city of [BLANK]", "{h} is governed from its capital, [BLANK]"],
                "Which country has {t} as its capital?",
                "{t} is the capital of [BLANK]",
                "the capital of {x}",
                &["The capital of {h} is {t}.", "{h} has its capital in {t}.", "{t} is the capital city of {h}.", "The government of {h} sits in {t}."],
            ),
        );
        ins(
            "headquarters",
            rt(
                &["Where is {h} headquartered?", "In which city is the headquarters of {h}?", "Name the city where {h} has its headquarters.", "Which city hosts the main office of {h}?"],
                &["{h} is headquartered in [BLANK]", "The headquarters of {h} are in [BLANK]", "The main office of {h} is located in [BLANK]", "{h} runs its operations from [BLANK]"],
                "Which organization is headquartered in {t}?",
                "The organization headquartered in {t} is [BLANK]",
                "the headquarters city of {x}",
                &["{h} is headquartered in {t}.", "The headquarters of {h} are in {t}.", "{t} hosts the main office of {h}.", "{h} runs its operations from {t}."],
            ),
        );
        ins(
            "city_in",
            rt(
                &["In which country is {h} located?", "Which country contains the city of {h}?", "Name the country where {h} lies.", "{h} is a city in which country?"],
                &["{h} is located in the country of [BLANK]", "The city of {h} lies in [BLANK]", "The country containing {h} is [BLANK]", "{h} is a city in [BLANK]"],
                "Which city is located in {t}?",
                "A city located in {t} is [BLANK]",
                "the country containing {x}",
                &["{h} is located in {t}.", "The city of {h} lies in {t}.", "{t} contains the city of {h}.", "{h} is a city in {t}."],
            ),
        );
        ins(
            "university_in",
            rt(
                &["In which country is {h} located?", "Which country hosts {h}?", "Name the country where {h} operates.", "{h} is a university in which country?"],
                &["{h} is located in the country of [BLANK]", "The country hosting {h} is [BLANK]", "{h} operates in [BLANK]", "{h} is a university in [BLANK]"],
                "Which university is located in {t}?",
                "A university located in {t} is [BLANK]",
                "the country hosting {x}",
                &["{h} is located in {t}.", "{t} hosts the university {h}.", "{h} operates in {t}.", "{h} is a university in {t}."],
            ),
        );
        ins(
            "director",
            rt(
                &["Who directed {h}?", "Who is the director of {h}?", "Name the director of the film {h}.", "Which person directed the film {h}?"],
                &["{h} was directed by [BLANK]", "The director of {h} is [BLANK]", "The film {h} was made by director [BLANK]", "Directing {h} was the work of [BLANK]"],
                "Which film was directed by {t}?",
                "{t} directed the film [BLANK]",
                "the director of {x}",
                &["{h} was directed by {t}.", "The director of {h} is {t}.", "{t} directed the film {h}.", "The film {h} was made by director {t}."],
            ),
        );
        ins(
            "producer",
            rt(
                &["Who produced {h}?", "Who is the producer of {h}?", "Name the producer of the film {h}.", "Which person produced the film {h}?"],
                &["{h} was produced by [BLANK]", "The producer of {h} is [BLANK]", "The film {h} was financed by producer [BLANK]", "Producing {h} was the work of [BLANK]"],
                "Which film was produced by {t}?",
                "{t} produced the film [BLANK]",
                "the producer of {x}",
                &["{h} was produced by {t}.", "The producer of {h} is {t}.", "{t} produced the film {h}.", "The film {h} was financed by producer {t}."],
            ),
        );
        ins(
            "performer",
            rt(
                &["Who performed {h}?", "Who is the performer of {h}?", "Name the performer of the work {h}.", "Which person performed the work {h}?"],
                &["{h} was performed by [BLANK]", "The performer of {h} is [BLANK]", "The work {h} was performed by artist [BLANK]", "Performing {h} was the work of [BLANK]"],
                "Which work was performed by {t}?",
                "{t} performed the work [BLANK]",
                "the performer of {x}",
                &["{h} was performed by {t}.", "The performer of {h} is {t}.", "{t} performed the work {h}.", "The work {h} was performed by artist {t}."],
            ),
        );
        ins(
            "citizenship",
            rt(
                &["Of which country is {h} a citizen?", "What is the country of citizenship of {h}?", "Name the country that {h} is a citizen of.", "Which nationality does {h} hold?"],
                &["{h} is a citizen of [BLANK]", "The country of citizenship of {h} is [BLANK]", "{h} holds the nationality of [BLANK]", "By citizenship, {h} belongs to [BLANK]"],
                "Who is a citizen of {t}?",
                "A citizen of {t} is [BLANK]",
                "the country of citizenship of {x}",
                &["{h} is a citizen of {t}.", "The country of citizenship of {h} is {t}.", "{h} holds the nationality of {t}.", "{t} counts {h} among its citizens."],
            ),
        );
        ins(
            "educated_at",
            rt(
                &["Where was {h} educated?", "Which university did {h} attend?", "Name the university where {h} studied.", "At which university did {h} study?"],
                &["{h} was educated at [BLANK]", "The university attended by {h} is [BLANK]", "{h} studied at [BLANK]", "{h} graduated from [BLANK]"],
                "Who was educated at {t}?",
                "A graduate of {t} is [BLANK]",
                "the university attended by {x}",
                &["{h} was educated at {t}.", "The university attended by {h} is {t}.", "{h} studied at {t}.", "{h} graduated from {t}."],
            ),
        );
        ins(
            "native_language",
            rt(
                &["What is the native language of {h}?", "Which language does {h} speak natively?", "Name the mother tongue of {h}.", "What language did {h} grow up speaking?"],
                &["The native language of {h} is [BLANK]", "{h} speaks natively the language [BLANK]", "The mother tongue of {h} is [BLANK]", "{h} grew up speaking [BLANK]"],
                "Whose native language is {t}?",
                "{t} is the native language of [BLANK]",
                "the native language of {x}",
                &["The native language of {h} is {t}.", "{h} speaks {t} natively.", "The mother tongue of {h} is {t}.", "{h} grew up speaking {t}."],
            ),
        );
        ins(
            "official_language",
            rt(
                &["What is the official language of {h}?", "Which language is official in {h}?", "Name the official language of {h}.", "What language does the government of {h} use?"],
                &["The official language of {h} is [BLANK]", "The language official in {h} is [BLANK]", "The government of {h} uses the language [BLANK]", "In {h}, the official tongue is [BLANK]"],
                "Which country has {t} as its official language?",
                "{t} is the official language of [BLANK]",
                "the official language of {x}",
                &["The official language of {h} is {t}.", "{t} is official in {h}.", "The government of {h} uses {t}.", "In {h}, the official tongue is {t}."],
            ),
        );
        ins(
            "origin",
            rt(
                &["What is the country of origin of {h}?", "Which country does the film {h} come from?", "Name the country where {h} was made.", "In which country was the film {h} produced?"],
                &["The country of origin of {h} is [BLANK]", "The film {h} comes from [BLANK]", "{h} was made in the country of [BLANK]", "{h} is a film from [BLANK]"],
                "Which film comes from {t}?",
                "A film from {t} is [BLANK]",
                "the country of origin of {x}",
                &["The country of origin of {h} is {t}.", "The film {h} comes from {t}.", "{h} was made in {t}.", "{h} is a film from {t}."],
            ),
        );
        for p in RETAIN_PROPERTIES {
            ins(p.label, noun_templates(&property_noun(p.label)));
        }
        for r in COMMONSENSE_RELATIONS {
            ins(r, commonsense_templates(r));
        }
        TemplateBank { relations: m }
    }

    pub fn get(&self, relation: &str) -> Result<&RelationTemplates> {
        self.relations.get(relation).ok_or_else(|| Error::MissingTemplate(relation.to_string()))
    }

    /// Every literal word used by any template (placeholders excluded).
    pub fn lexicon(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |s: &str| {
            let cleaned = s.replace("{h}", " ").replace("{t}", " ").replace("{x}", " ");
            for w in split_words(&cleaned) {
                out.insert(w);
            }
        };
        for t in self.relations.values() {
            t.qa.iter().chain(&t.fb).chain(&t.statements).for_each(|s| add(s));
            add(&t.inverse_qa);
            add(&t.inverse_fb);
            add(&t.phrase);
        }
        add(CHAIN_QA_PREFIX);
        add(CHAIN_FB_SUFFIX);
        out
    }
}

pub const CHAIN_QA_PREFIX: &str = "What is";
pub const CHAIN_FB_SUFFIX: &str = "is [BLANK]";
/// Separator between the steps of a multi-hop answer in the corpus.
pub const CHAIN_STEP_SEP: &str = ";";

fn property_noun(label: &str) -> String {
    let base = match label {
        "country_named_after" | "city_named_after" | "university_named_after" => "namesake",
        "city_body_of_water" => "body of water",
        "work_genre" | "film_genre" => "genre",
        "work_based_on" | "based_on" => "source work",
        "head_of_state_office" => "head of state office",
        "founded_by" => "founder",
        "notable_work" => "notable work",
        other => return other.replace('_', " "),
    };
    base.to_string()
}

fn commonsense_templates(rel: &str) -> RelationTemplates {
    let verb = match rel {
        "is_a" => "is a kind of",
        "used_for" => "is used for",
        "at_location" => "is found at",
        "part_of" => "is part of",
        _ => "is capable of",
    };
    let f = |s: &str| s.replace("{v}", verb);
    RelationTemplates {
        qa: vec![f("{h} {v} what?"), f("Tell me what {h} {v}."), f("Name something that {h} {v}."), f("What is it that {h} {v}?")],
        fb: vec![f("{h} {v} [BLANK]"), f("It is said that {h} {v} [BLANK]"), f("People know that {h} {v} [BLANK]"), f("In general, {h} {v} [BLANK]")],
        inverse_qa: f("What {v} {t}?"),
        inverse_fb: f("Something that {v} {t} is [BLANK]"),
        phrase: f("what {h} {v}").replace("{h}", "{x}"),
        statements: vec![f("{h} {v} {t}."), f("It is said that {h} {v} {t}."), f("People know that {h} {v} {t}."), f("In general, {h} {v} {t}.")],
    }
}

/// Substitute head/tail labels into a template.
pub fn fill(template: &str, head: &str, tail: &str) -> String {
    template.replace("{h}", head).replace("{t}", tail)
}

/// Compose `phrase_k(… phrase_1(start))` for a chain of relations.
pub fn nested_phrase(bank: &TemplateBank, relations: &[&str], start: &str) -> Result<String> {
    let mut x = start.to_string();
    for r in relations {
        x = bank.get(r)?.phrase.replace("{x}", &x);
    }
    Ok(x)
}

/// Multi-hop question: "What is the capital of the country of citizenship of p?"
pub fn chain_question(bank: &TemplateBank, relations: &[&str], start: &str) -> Result<String> {
    Ok(format!("{CHAIN_QA_PREFIX} {}?", nested_phrase(bank, relations, start)?))
}

/// Multi-hop cloze: "The capital of the country of citizenship of p is [BLANK]".
pub fn chain_cloze(bank: &TemplateBank, relations: &[&str], start: &str) -> Result<String> {
    let p = nested_phrase(bank, relations, start)?;
    let mut chars = p.chars();
    let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or(' ');
    Ok(format!("{first}{} {CHAIN_FB_SUFFIX}", chars.as_str()))
}

pub fn ends_with_blank(s: &str) -> bool {
    split_words(s).last().map(String::as_str) == Some(BLANK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_relation_has_three_paraphrases_and_blank_final_clozes() {
        let bank = TemplateBank::default_bank();
        for (rel, t) in &bank.relations {
            assert!(t.qa.len() >= 4, "{rel}");
            assert!(t.fb.len() >= 4, "{rel}");
            let distinct: BTreeSet<&String> = t.qa.iter().collect();
            assert_eq!(distinct.len(), t.qa.len(), "{rel}");
            for s in &t.fb {
                assert!(ends_with_blank(s), "{rel}: {s}");
            }
            assert!(ends_with_blank(&t.inverse_fb), "{rel}");
            assert!(t.phrase.contains("{x}"), "{rel}");
        }
    }

    #[test]
    fn chain_rendering() {
        let bank = TemplateBank::default_bank();
        let q = chain_question(&bank, &["citizenship", "capital_of"], "mora tel").unwrap();
        assert_eq!(q, "What is the capital of the country of citizenship of mora tel?");
        let c = chain_cloze(&bank, &["citizenship", "capital_of"], "mora tel").unwrap();
        assert_eq!(c, "The capital of the country of citizenship of mora tel is [BLANK]");
        assert!(chain_question(&bank, &["nope"], "x").is_err());
    }

    #[test]
    fn lexicon_has_no_placeholders() {
        let lex = TemplateBank::default_bank().lexicon();
        assert!(lex.contains("capital"));
        assert!(lex.iter().all(|w| !w.contains('{')));
    }
}
