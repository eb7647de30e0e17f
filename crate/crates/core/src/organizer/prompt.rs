//! Few-shot prompt rendering and parsing of `CATEGORY;SUMMARY` replies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::topic::{FewShotExample, TopicConfig};
use crate::model::{word_count, CategoryLabel, WordCountFlag};

/// Output contract restated to the model.
pub const FORMAT_RULE: &str = "Output must be \"CATEGORY;SUMMARY\".";

const CATEGORY_WORDS: std::ops::RangeInclusive<usize> = 1..=3;
const SUMMARY_WORDS: std::ops::RangeInclusive<usize> = 1..=5;

/// Seed categories followed by live ones in creation order, deduplicated by
/// normalized name.
pub fn prompt_categories(config: &TopicConfig, current: &[CategoryLabel]) -> Vec<CategoryLabel> {
    let mut out: Vec<CategoryLabel> =
        Vec::with_capacity(config.seed_categories.len() + current.len());
    for category in config.seed_categories.iter().chain(current) {
        if !out.contains(category) {
            out.push(category.clone());
        }
    }
    out
}

fn quoted_list<'a>(names: impl Iterator<Item = &'a str>) -> String {
    let names: Vec<&str> = names.collect();
    serde_json::to_string(&names).expect("string list serializes")
}

fn write_example(
    out: &mut String,
    topic: &str,
    categories: &str,
    transcript: &str,
    output: Option<&str>,
) {
    let _ = writeln!(out, "topic: {topic}");
    let _ = writeln!(out, "categories: {categories}");
    let _ = writeln!(out, "transcript: {transcript}");
    match output {
        Some(output) => {
            let _ = writeln!(out, "output: {output}");
        }
        None => out.push_str("output:"),
    }
}

/// Renders the categorization prompt for one transcript.
pub fn build_prompt(
    config: &TopicConfig,
    current_categories: &[CategoryLabel],
    transcript: &str,
) -> Result<String, super::OrganizeError> {
    let transcript = transcript.trim();
    if transcript.is_empty() {
        return Err(super::OrganizeError::EmptyTranscript);
    }
    let categories = prompt_categories(config, current_categories);

    let mut out = String::with_capacity(config.prefix_rules.len() + 2048);
    out.push_str(config.prefix_rules.trim_end());
    out.push('\n');
    if !config.prefix_rules.contains(FORMAT_RULE) {
        out.push_str(FORMAT_RULE);
        out.push('\n');
    }

    out.push_str("\nCurrent categories:\n");
    for category in &categories {
        let _ = writeln!(out, "- {}", category.name());
    }

    for FewShotExample {
        topic,
        categories,
        transcript,
        output,
    } in &config.few_shot_examples
    {
        out.push('\n');
        let list = quoted_list(categories.iter().map(String::as_str));
        write_example(&mut out, topic, &list, transcript, Some(output));
    }

    out.push('\n');
    let list = quoted_list(categories.iter().map(CategoryLabel::name));
    write_example(&mut out, &config.topic_name, &list, transcript, None);
    Ok(out)
}

/// Prompt for the single repair attempt after an unparseable reply.
pub fn build_repair_prompt(original: &str, bad_reply: &str) -> String {
    format!(
        "{original}\n\nYour previous reply {bad_reply:?} did not follow the required format. \
         Reply with one line only.\n{FORMAT_RULE}\noutput:"
    )
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("reply has no ';' delimiter")]
    MissingDelimiter,
    #[error("reply has an empty category or summary")]
    EmptySegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub category: CategoryLabel,
    pub summary: String,
    pub flags: Vec<WordCountFlag>,
}

/// Splits a reply on its first `;`. Word-count rule violations are flagged,
/// never rejected.
pub fn parse_output(raw: &str) -> Result<ParsedOutput, ParseError> {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let (category, summary) = line.split_once(';').ok_or(ParseError::MissingDelimiter)?;
    let (category, summary) = (category.trim(), summary.trim());
    if category.is_empty() || summary.is_empty() {
        return Err(ParseError::EmptySegment);
    }
    let category = CategoryLabel::new(category).map_err(|_| ParseError::EmptySegment)?;

    let mut flags = Vec::new();
    if !CATEGORY_WORDS.contains(&category.word_count()) {
        flags.push(WordCountFlag::Category(category.word_count()));
    }
    let summary_words = word_count(summary);
    if !SUMMARY_WORDS.contains(&summary_words) {
        flags.push(WordCountFlag::Summary(summary_words));
    }
    Ok(ParsedOutput {
        category,
        summary: summary.to_string(),
        flags,
    })
}

/// Inverse of [`parse_output`] for flag-free pairs.
pub fn format_output(category: &str, summary: &str) -> String {
    format!("{category};{summary}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(s: &str) -> CategoryLabel {
        CategoryLabel::new(s).unwrap()
    }

    #[test]
    fn study2_prompt_lists_topic_and_seeds() {
        let topic = TopicConfig::preset("study2-sustainability").unwrap();
        let prompt = build_prompt(&topic, &[], "reduce elevator usage").unwrap();
        assert!(prompt.contains("Sustainable campus"));
        for seed in [
            "Energy Saving",
            "Resource & Waste Management",
            "Transportation & Mobility",
            "Space Design & Greening",
            "Eco-Friendly Diet",
            "Education & Campaign",
            "Digital Monitoring",
        ] {
            assert!(prompt.contains(&format!("- {seed}\n")), "{seed}");
        }
        assert!(prompt.ends_with("transcript: reduce elevator usage\noutput:"));
    }

    #[test]
    fn no_dynamic_categories_means_seed_list() {
        let topic = TopicConfig::preset("study2-sustainability").unwrap();
        assert_eq!(prompt_categories(&topic, &[]), topic.seed_categories);
    }

    #[test]
    fn live_categories_extend_seeds() {
        let topic = TopicConfig::preset("study2-sustainability").unwrap();
        let live = [label("Energy Conservation"), label("energy saving")];
        let cats = prompt_categories(&topic, &live);
        assert_eq!(cats.len(), topic.seed_categories.len() + 1);
        assert_eq!(cats.last().unwrap().name(), "Energy Conservation");
        let prompt = build_prompt(&topic, &live, "upgrade glass windows").unwrap();
        assert!(prompt.contains("- Energy Conservation\n"));
        assert!(prompt.contains("\"Energy Conservation\"]"));
    }

    #[test]
    fn empty_transcript_rejected() {
        let topic = TopicConfig::preset("study1-health").unwrap();
        assert!(matches!(
            build_prompt(&topic, &[], "   "),
            Err(super::super::OrganizeError::EmptyTranscript)
        ));
    }

    #[test]
    fn format_rule_appended_for_custom_prefix() {
        let mut topic = TopicConfig::preset("study1-health").unwrap();
        topic.prefix_rules = "Categorize ideas.".into();
        let prompt = build_prompt(&topic, &[], "x").unwrap();
        assert!(prompt.contains(FORMAT_RULE));
    }

    #[test]
    fn parse_examples() {
        let p = parse_output("Energy Saving;night patrol waste prevention").unwrap();
        assert_eq!(p.category.name(), "Energy Saving");
        assert_eq!(p.summary, "night patrol waste prevention");
        assert!(p.flags.is_empty());

        let p = parse_output("Mental Health Care;meditation app sharing for stress management")
            .unwrap();
        assert_eq!(p.flags, vec![WordCountFlag::Summary(6)]);

        assert_eq!(
            parse_output("no delimiter"),
            Err(ParseError::MissingDelimiter)
        );
        assert_eq!(parse_output(" ;summary"), Err(ParseError::EmptySegment));
        assert_eq!(parse_output("Cat; "), Err(ParseError::EmptySegment));

        let p = parse_output("A;b;c").unwrap();
        assert_eq!(p.summary, "b;c");
        let p = parse_output("\n  Space & Environment ; quiet zones \n").unwrap();
        assert_eq!(p.category.name(), "Space & Environment");
        assert_eq!(p.summary, "quiet zones");
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(
            cat in proptest::collection::vec("[A-Za-z]{1,10}", 1..=3),
            summary in proptest::collection::vec("[a-z0-9]{1,10}", 1..=5),
        ) {
            let cat = cat.join(" ");
            let summary = summary.join(" ");
            let parsed = parse_output(&format_output(&cat, &summary)).unwrap();
            prop_assert_eq!(parsed.category.name(), cat.as_str());
            prop_assert_eq!(parsed.summary, summary);
            prop_assert!(parsed.flags.is_empty());
        }
    }
}
