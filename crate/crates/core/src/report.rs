//! Structured validation findings shared by plot validation, dataset
//! ingestion and generation post-processing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plot::{ActError, ActTag};
use crate::screenplay::{DecodeError, DecodeWarning};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "code")]
pub enum Issue {
    #[error("missing act tag <{tag}>")]
    MissingTag { tag: ActTag },
    #[error("act tag <{tag}> appears more than once")]
    DuplicateTag { tag: ActTag },
    #[error("act tags are out of order")]
    OutOfOrderTags,
    #[error("act {act} is empty")]
    EmptyAct { act: ActTag },
    #[error("text after the final <three> tag at byte {offset}")]
    TrailingText { offset: usize },
    /// Total word count of a generated plot or scene outside its target band.
    #[error("{actual} words, expected {min}..={max}")]
    LengthOutOfRange { actual: usize, min: usize, max: usize },
    #[error("act {act} has {words} of {total} words")]
    ShortAct { act: ActTag, words: usize, total: usize },
    /// Word count of a storyline or description outside its band.
    #[error("{field} has {actual} words, expected {min}..={max}")]
    LengthViolation {
        field: String,
        actual: usize,
        min: usize,
        max: usize,
    },
    #[error("unknown genre `{genre}`")]
    UnknownGenre { genre: String },
    #[error("unbalanced tags at byte {offset}: expected {expected}, found {found}")]
    UnbalancedTags {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("text outside any tag pair at byte {offset}")]
    StrayText { offset: usize, text: String },
    #[error("empty element at byte {offset}")]
    EmptyElement { offset: usize },
    #[error("no tagged elements")]
    EmptyScene,
    /// Generation stopped on the token budget rather than a stop sequence.
    #[error("stopped at the {max_tokens}-token budget")]
    MaxTokensReached { max_tokens: u32 },
}

impl Issue {
    pub fn code(&self) -> &'static str {
        match self {
            Issue::MissingTag { .. } => "MissingTag",
            Issue::DuplicateTag { .. } => "DuplicateTag",
            Issue::OutOfOrderTags => "OutOfOrderTags",
            Issue::EmptyAct { .. } => "EmptyAct",
            Issue::TrailingText { .. } => "TrailingText",
            Issue::LengthOutOfRange { .. } => "LengthOutOfRange",
            Issue::ShortAct { .. } => "ShortAct",
            Issue::LengthViolation { .. } => "LengthViolation",
            Issue::UnknownGenre { .. } => "UnknownGenre",
            Issue::UnbalancedTags { .. } => "UnbalancedTags",
            Issue::StrayText { .. } => "StrayText",
            Issue::EmptyElement { .. } => "EmptyElement",
            Issue::EmptyScene => "EmptyScene",
            Issue::MaxTokensReached { .. } => "MaxTokensReached",
        }
    }

    pub fn length_violation(field: &str, actual: usize, (min, max): (usize, usize)) -> Option<Issue> {
        (actual < min || actual > max).then(|| Issue::LengthViolation {
            field: field.to_string(),
            actual,
            min,
            max,
        })
    }

    pub fn length_out_of_range(actual: usize, (min, max): (usize, usize)) -> Option<Issue> {
        (actual < min || actual > max).then_some(Issue::LengthOutOfRange { actual, min, max })
    }
}

impl From<ActError> for Issue {
    fn from(e: ActError) -> Self {
        match e {
            ActError::MissingTag { tag } => Issue::MissingTag { tag },
            ActError::DuplicateTag { tag } => Issue::DuplicateTag { tag },
            ActError::OutOfOrderTags => Issue::OutOfOrderTags,
            ActError::EmptyAct { act } => Issue::EmptyAct { act },
            ActError::TrailingText { offset } => Issue::TrailingText { offset },
        }
    }
}

impl From<DecodeWarning> for Issue {
    fn from(w: DecodeWarning) -> Self {
        match w {
            DecodeWarning::StrayText { offset, text } => Issue::StrayText { offset, text },
            DecodeWarning::EmptyElement { offset } => Issue::EmptyElement { offset },
            DecodeWarning::EmptyScene => Issue::EmptyScene,
        }
    }
}

impl From<DecodeError> for Issue {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::UnbalancedTags {
                offset,
                expected,
                found,
            } => Issue::UnbalancedTags {
                offset,
                expected,
                found,
            },
            DecodeError::StrayText { offset } => Issue::StrayText {
                offset,
                text: String::new(),
            },
            DecodeError::EmptyElement { offset } => Issue::EmptyElement { offset },
            DecodeError::EmptyScene => Issue::EmptyScene,
        }
    }
}

/// Errors block acceptance of the checked text; warnings do not.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    pub fn error(&mut self, issue: impl Into<Issue>) {
        self.errors.push(issue.into());
    }

    pub fn warn(&mut self, issue: impl Into<Issue>) {
        self.warnings.push(issue.into());
    }

    pub fn warn_opt(&mut self, issue: Option<Issue>) {
        self.warnings.extend(issue);
    }

    pub fn codes(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.errors.iter().chain(&self.warnings).map(Issue::code)
    }
}
