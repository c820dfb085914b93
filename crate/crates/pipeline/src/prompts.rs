//! Prompt templates and rendering.
//!
//! Template text is shipped as-is; a structured-answer block naming the
//! fields we extract is appended after it, followed by any artifact that the
//! template has no placeholder for.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ProtoGeneration,
    Refinement,
    BackgroundResearch,
    Quality,
    Ambiguity,
    Resolvability,
    ForecastVerifier,
    Research,
    Forecast,
    Decomposition,
    SubquestionForecast,
    Deduplication,
    /// Resolution prompt without the weaknesses section.
    ResolutionV1,
    ResolutionV2,
    Similarity,
    TopicLabel,
}

/// How the answer is read back out of a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerShape {
    /// The whole reply is the answer.
    FreeText,
    /// Labelled `name:` fields.
    Fields(&'static [&'static str]),
    /// A list of items, each opened by the given labels.
    Items(&'static [&'static str]),
}

const RESOLUTION_TEXT: &str = include_str!("../prompts/resolution.txt");

impl TemplateId {
    pub const ALL: [TemplateId; 16] = [
        TemplateId::ProtoGeneration,
        TemplateId::Refinement,
        TemplateId::BackgroundResearch,
        TemplateId::Quality,
        TemplateId::Ambiguity,
        TemplateId::Resolvability,
        TemplateId::ForecastVerifier,
        TemplateId::Research,
        TemplateId::Forecast,
        TemplateId::Decomposition,
        TemplateId::SubquestionForecast,
        TemplateId::Deduplication,
        TemplateId::ResolutionV1,
        TemplateId::ResolutionV2,
        TemplateId::Similarity,
        TemplateId::TopicLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::ProtoGeneration => "proto_generation",
            TemplateId::Refinement => "refinement",
            TemplateId::BackgroundResearch => "background_research",
            TemplateId::Quality => "quality",
            TemplateId::Ambiguity => "ambiguity",
            TemplateId::Resolvability => "resolvability",
            TemplateId::ForecastVerifier => "forecast_verifier",
            TemplateId::Research => "research",
            TemplateId::Forecast => "forecast",
            TemplateId::Decomposition => "decomposition",
            TemplateId::SubquestionForecast => "subquestion_forecast",
            TemplateId::Deduplication => "deduplication",
            TemplateId::ResolutionV1 => "resolution_v1",
            TemplateId::ResolutionV2 => "resolution_v2",
            TemplateId::Similarity => "similarity",
            TemplateId::TopicLabel => "topic_label",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Template text before rendering.
    pub fn text(self) -> String {
        match self {
            TemplateId::ProtoGeneration => include_str!("../prompts/proto_generation.txt").into(),
            TemplateId::Refinement => include_str!("../prompts/refinement.txt").into(),
            TemplateId::BackgroundResearch => {
                include_str!("../prompts/background_research.txt").into()
            }
            TemplateId::Quality => include_str!("../prompts/quality.txt").into(),
            TemplateId::Ambiguity => include_str!("../prompts/ambiguity.txt").into(),
            TemplateId::Resolvability => include_str!("../prompts/resolvability.txt").into(),
            TemplateId::ForecastVerifier => include_str!("../prompts/forecast_verifier.txt").into(),
            TemplateId::Research => include_str!("../prompts/research.txt").into(),
            TemplateId::Forecast => include_str!("../prompts/forecast.txt").into(),
            TemplateId::Decomposition => include_str!("../prompts/decomposition.txt").into(),
            TemplateId::SubquestionForecast => {
                include_str!("../prompts/subquestion_forecast.txt").into()
            }
            TemplateId::Deduplication => include_str!("../prompts/deduplication.txt").into(),
            TemplateId::ResolutionV1 => strip_section(RESOLUTION_TEXT, "resolution_weaknesses"),
            TemplateId::ResolutionV2 => RESOLUTION_TEXT.into(),
            TemplateId::Similarity => include_str!("../prompts/similarity.txt").into(),
            TemplateId::TopicLabel => include_str!("../prompts/topic_label.txt").into(),
        }
    }

    pub fn shape(self) -> AnswerShape {
        use AnswerShape::*;
        match self {
            TemplateId::ProtoGeneration => Items(&["question", "rationale"]),
            TemplateId::Refinement => Fields(&[
                "title",
                "background",
                "resolution_criteria",
                "window_start",
                "window_end",
            ]),
            TemplateId::BackgroundResearch | TemplateId::Research => FreeText,
            TemplateId::Quality => Fields(&["rationale_quality", "final_answer_quality"]),
            TemplateId::Ambiguity => Fields(&["rationale_ambiguity", "final_answer_ambiguity"]),
            TemplateId::Resolvability => {
                Fields(&["rationale_resolvability", "final_answer_resolvability"])
            }
            TemplateId::ForecastVerifier => Fields(&["rationale_forecast", "final_answer_forecast"]),
            TemplateId::Forecast | TemplateId::SubquestionForecast => {
                Fields(&["final_answer_forecast"])
            }
            TemplateId::Decomposition => Items(&["subquestion", "background", "resolution_criteria"]),
            TemplateId::Deduplication => Fields(&["duplicate"]),
            TemplateId::ResolutionV1 => Fields(&["resolution", "resolution_derivation"]),
            TemplateId::ResolutionV2 => Fields(&[
                "resolution",
                "resolution_derivation",
                "resolution_weaknesses",
            ]),
            TemplateId::Similarity => Fields(&["similarity"]),
            TemplateId::TopicLabel => Fields(&["label"]),
        }
    }

    /// Fields that fall back to the last number in the reply when unlabelled.
    pub fn numeric_fallback(self) -> Option<&'static str> {
        match self {
            TemplateId::ForecastVerifier | TemplateId::Forecast | TemplateId::SubquestionForecast => {
                Some("final_answer_forecast")
            }
            TemplateId::Similarity => Some("similarity"),
            _ => None,
        }
    }

    fn format_block(self) -> String {
        match self.shape() {
            AnswerShape::FreeText => String::new(),
            AnswerShape::Items(labels) => {
                let mut s = String::from(
                    "Answer format: list each item as a block of labelled lines, in this order:\n",
                );
                for l in labels {
                    s.push_str(&format!("{}: <text>\n", l.to_uppercase()));
                }
                match self {
                    TemplateId::ProtoGeneration => s.push_str(
                        "Repeat the block for every proto-question. If there are no suitable questions, reply \"no suitable questions\".\n",
                    ),
                    _ => s.push_str("Repeat the block for every subquestion.\n"),
                }
                s
            }
            AnswerShape::Fields(fields) => {
                let mut s = String::from(
                    "Answer format: end your reply with these labelled fields, each starting on its own line:\n",
                );
                for f in fields {
                    s.push_str(&format!("{f}: {}\n", field_hint(f)));
                }
                s
            }
        }
    }

    /// Reminder appended when a reply is missing declared fields.
    pub fn reminder(self, missing: &[String]) -> String {
        format!(
            "Your reply could not be read: missing {}.\n{}",
            missing.join(", "),
            self.format_block()
        )
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn field_hint(field: &str) -> &'static str {
    match field {
        "final_answer_quality" | "final_answer_ambiguity" => "bad | meh | good | great",
        "final_answer_resolvability" => {
            "very certainly no | probably no | probably yes | very certainly yes"
        }
        "final_answer_forecast" => "<probability of YES as a number between 0 and 100>",
        "window_start" | "window_end" => "<YYYY-MM-DD, UTC>",
        "duplicate" => "yes | no",
        "resolution" => "True | False | Annulled",
        "similarity" => "<1, 2, 3 or 4>",
        "label" => "<2 to 6 words>",
        _ => "<text>",
    }
}

/// Removes an `<tag>...</tag>` section and the blank line after it.
fn strip_section(text: &str, tag: &str) -> String {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    match (text.find(&open), text.find(&close)) {
        (Some(a), Some(b)) if b > a => {
            let mut end = b + close.len();
            while text[end..].starts_with('\n') {
                end += 1;
            }
            format!("{}{}", &text[..a], &text[end..])
        }
        _ => text.to_string(),
    }
}

/// A labelled block of context for a prompt. Labels double as placeholder
/// names: an artifact labelled `Background` fills `[Background]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub label: String,
    pub text: String,
}

impl Artifact {
    pub fn new(label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// Digest used by the mock backend to key exact fixtures.
    pub fn digest(&self) -> String {
        ffoundry_core::ids::digest_hex(&[&self.system, &self.user])
    }
}

pub fn format_fake_now(now: DateTime<Utc>) -> String {
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn render(template: TemplateId, artifacts: &[Artifact], fake_now: Option<DateTime<Utc>>) -> RenderedPrompt {
    let mut system = String::new();
    if let Some(now) = fake_now {
        system.push_str(&format!("Today's date is {}.\n", format_fake_now(now)));
    }
    system.push_str("You are a careful research assistant.");

    let mut user = template.text();
    let mut leftover = Vec::new();
    for a in artifacts {
        let placeholder = format!("[{}]", a.label);
        if user.contains(&placeholder) {
            user = user.replacen(&placeholder, &a.text, 1);
        } else {
            leftover.push(a);
        }
    }
    let block = template.format_block();
    if !block.is_empty() {
        user.push_str("\n\n");
        user.push_str(&block);
    }
    for a in leftover {
        user.push_str(&format!("\n<{0}>\n{1}\n</{0}>\n", artifact_tag(&a.label), a.text));
    }
    RenderedPrompt { system, user }
}

fn artifact_tag(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
