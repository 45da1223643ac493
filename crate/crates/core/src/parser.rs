//! Structured-response parsing and the format reward.
//!
//! Responses must carry the reasoning in `<think>…</think>` followed by the
//! prediction in `<answer>…</answer>`; the tags are case-sensitive and
//! matched literally. The first think block is taken, then the first answer
//! block after it; trailing text is ignored. The answer body is parsed under
//! a task-specific schema:
//!
//! - detection: `{"objects":[{"category":"chair","bbox_3d":[9 floats]}]}`
//! - grounding: `{"frame_index":3,"bbox_3d":[9 floats]}`
//! - multiple choice: one letter `A`-`Z` (lowercase accepted, normalized up)
//! - numeric: a bare integer or decimal literal with optional sign
//!
//! The format reward is 1.0 exactly when parsing succeeds and 0.0 otherwise,
//! with no partial credit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Box9DoF;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Which answer schema to parse under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Detection,
    Grounding,
    MultipleChoice,
    Numeric,
}

/// Parse failures, each of which yields format reward 0.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FormatError {
    #[error("no complete <think> block")]
    MissingThink,
    #[error("no complete <answer> block")]
    MissingAnswer,
    #[error("<answer> block precedes the <think> block")]
    WrongOrder,
    #[error("answer body violates the task schema: {0}")]
    SchemaViolation(String),
}

/// One labeled box of a detection answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub category: String,
    pub bbox_3d: Box9DoF,
}

/// Detection payload: a possibly-empty list of labeled boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionAnswer {
    pub objects: Vec<DetectedObject>,
}

/// Grounding payload: a frame index plus a box in that frame's local
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingAnswer {
    pub frame_index: u32,
    pub bbox_3d: Box9DoF,
}

/// Multiple-choice payload, normalized to an uppercase letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceAnswer {
    pub choice: char,
}

/// Numeric payload; the value is always finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericAnswer {
    pub value: f64,
}

/// Task-typed content of an answer block.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Detection(DetectionAnswer),
    Grounding(GroundingAnswer),
    Choice(ChoiceAnswer),
    Numeric(NumericAnswer),
}

/// A fully parsed response.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredResponse {
    pub think_text: String,
    pub answer_text: String,
    pub payload: Payload,
}

/// Extract the think and answer blocks and parse the answer under the task
/// schema.
pub fn parse_response(text: &str, task: TaskKind) -> Result<StructuredResponse, FormatError> {
    let think_open = text.find(THINK_OPEN).ok_or(FormatError::MissingThink)?;
    let think_body_start = think_open + THINK_OPEN.len();
    let think_close_rel = text[think_body_start..]
        .find(THINK_CLOSE)
        .ok_or(FormatError::MissingThink)?;
    let think_text = &text[think_body_start..think_body_start + think_close_rel];
    let after_think = think_body_start + think_close_rel + THINK_CLOSE.len();

    let answer_text = match complete_answer_block(&text[after_think..]) {
        Some(body) => body,
        None => {
            // Distinguish a misplaced answer from a missing one.
            if complete_answer_block(&text[..after_think]).is_some() {
                return Err(FormatError::WrongOrder);
            }
            return Err(FormatError::MissingAnswer);
        }
    };

    let payload = parse_answer(answer_text, task)?;
    Ok(StructuredResponse {
        think_text: think_text.to_string(),
        answer_text: answer_text.to_string(),
        payload,
    })
}

/// 1.0 iff [`parse_response`] succeeds, 0.0 otherwise.
pub fn format_reward(text: &str, task: TaskKind) -> f64 {
    if parse_response(text, task).is_ok() {
        1.0
    } else {
        0.0
    }
}

/// Parse an answer body (without tags) under the task schema.
pub fn parse_answer(body: &str, task: TaskKind) -> Result<Payload, FormatError> {
    let body = body.trim();
    match task {
        TaskKind::Detection => {
            let answer: DetectionAnswer = serde_json::from_str(body)
                .map_err(|e| FormatError::SchemaViolation(e.to_string()))?;
            if answer.objects.iter().any(|o| o.category.is_empty()) {
                return Err(FormatError::SchemaViolation("empty category".into()));
            }
            Ok(Payload::Detection(answer))
        }
        TaskKind::Grounding => {
            let answer: GroundingAnswer = serde_json::from_str(body)
                .map_err(|e| FormatError::SchemaViolation(e.to_string()))?;
            Ok(Payload::Grounding(answer))
        }
        TaskKind::MultipleChoice => {
            let mut chars = body.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => Ok(Payload::Choice(ChoiceAnswer {
                    choice: c.to_ascii_uppercase(),
                })),
                _ => Err(FormatError::SchemaViolation(format!(
                    "expected a single letter, got {body:?}"
                ))),
            }
        }
        TaskKind::Numeric => {
            if !is_numeric_literal(body) {
                return Err(FormatError::SchemaViolation(format!(
                    "expected a numeric literal, got {body:?}"
                )));
            }
            let value: f64 = body
                .parse()
                .map_err(|_| FormatError::SchemaViolation("unparseable number".into()))?;
            if !value.is_finite() {
                return Err(FormatError::SchemaViolation("nonfinite value".into()));
            }
            Ok(Payload::Numeric(NumericAnswer { value }))
        }
    }
}

/// Render a payload back to its answer-body text. Re-parsing the result
/// yields an equal payload.
pub fn render_answer(payload: &Payload) -> String {
    match payload {
        Payload::Detection(d) => serde_json::to_string(d).expect("detection answers serialize"),
        Payload::Grounding(g) => serde_json::to_string(g).expect("grounding answers serialize"),
        Payload::Choice(c) => c.choice.to_string(),
        Payload::Numeric(n) => format_numeric(n.value),
    }
}

/// Wrap think text and an answer body in the response grammar.
pub fn render_response(think: &str, answer_body: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer_body}{ANSWER_CLOSE}")
}

impl TaskKind {
    pub fn payload_matches(&self, payload: &Payload) -> bool {
        matches!(
            (self, payload),
            (TaskKind::Detection, Payload::Detection(_))
                | (TaskKind::Grounding, Payload::Grounding(_))
                | (TaskKind::MultipleChoice, Payload::Choice(_))
                | (TaskKind::Numeric, Payload::Numeric(_))
        )
    }
}

fn format_numeric(value: f64) -> String {
    // `{}` prints integral floats without a fraction and round-trips exactly.
    format!("{value}")
}

/// First complete `<answer>…</answer>` block in `text`, if any.
fn complete_answer_block(text: &str) -> Option<&str> {
    let open = text.find(ANSWER_OPEN)?;
    let body_start = open + ANSWER_OPEN.len();
    let close_rel = text[body_start..].find(ANSWER_CLOSE)?;
    Some(&text[body_start..body_start + close_rel])
}

/// `[+-]?(digits[.digits*] | .digits)` with nothing else around it.
fn is_numeric_literal(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    if s.is_empty() {
        return false;
    }
    let mut parts = s.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    match frac_part {
        None => !int_part.is_empty() && digits(int_part),
        Some(frac) => {
            (!int_part.is_empty() || !frac.is_empty()) && digits(int_part) && digits(frac)
        }
    }
}
