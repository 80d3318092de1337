//! 4-act plot annotation and prompt assembly for the five generation
//! profiles.
//!
//! An annotated plot carries one tag at the end of each act:
//!
//! ```text
//! Act one text. <one> Act two-a text. <two-a> Act two-b text. <two-b> Act three text. <three>
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Issue, ValidationReport};
use crate::text::{word_count, Genre, PlotActs};

/// Word band for a generated plot.
pub const PLOT_WORDS: (usize, usize) = (600, 800);
/// Word band for a short storyline (also used for scene descriptions).
pub const SHORT_STORYLINE_WORDS: (usize, usize) = (15, 40);
/// Word band for a long storyline.
pub const LONG_STORYLINE_WORDS: (usize, usize) = (30, 200);
/// An act shorter than this fraction of the plot draws a warning.
pub const MIN_ACT_FRACTION: f64 = 0.05;

pub const DEFAULT_SEPARATOR: &str = "\n\n###\n\n";
pub const DEFAULT_STOP: &str = "\n<|end|>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActTag {
    #[serde(rename = "one")]
    One,
    #[serde(rename = "two-a")]
    TwoA,
    #[serde(rename = "two-b")]
    TwoB,
    #[serde(rename = "three")]
    Three,
}

impl ActTag {
    pub const ALL: [ActTag; 4] = [ActTag::One, ActTag::TwoA, ActTag::TwoB, ActTag::Three];

    pub fn name(self) -> &'static str {
        match self {
            ActTag::One => "one",
            ActTag::TwoA => "two-a",
            ActTag::TwoB => "two-b",
            ActTag::Three => "three",
        }
    }

    pub fn literal(self) -> &'static str {
        match self {
            ActTag::One => "<one>",
            ActTag::TwoA => "<two-a>",
            ActTag::TwoB => "<two-b>",
            ActTag::Three => "<three>",
        }
    }
}

impl fmt::Display for ActTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn contains_act_tag(text: &str) -> bool {
    ActTag::ALL.iter().any(|t| text.contains(t.literal()))
}

/// Removes every act tag literal, leaving the rest of the text untouched.
pub fn strip_act_tags(text: &str) -> String {
    ActTag::ALL
        .iter()
        .fold(text.to_string(), |acc, t| acc.replace(t.literal(), ""))
}

/// Character offsets (not bytes) at which acts one, two-a and two-b end.
/// Act three ends with the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActBoundaries {
    pub ends: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum BoundaryError {
    #[error("invalid act boundaries: {reason}")]
    InvalidBoundaries { reason: String },
}

fn invalid(reason: impl Into<String>) -> BoundaryError {
    BoundaryError::InvalidBoundaries {
        reason: reason.into(),
    }
}

impl ActBoundaries {
    pub fn new(ends: [usize; 3]) -> Self {
        Self { ends }
    }

    /// Checks the offsets against `plot`: strictly increasing, inside the
    /// text, each on a whitespace character, and every act non-blank.
    pub fn validate(&self, plot: &str) -> Result<(), BoundaryError> {
        let chars: Vec<char> = plot.chars().collect();
        let [a, b, c] = self.ends;
        if !(0 < a && a < b && b < c && c < chars.len()) {
            return Err(invalid(format!(
                "offsets {:?} must satisfy 0 < e1 < e2 < e3 < {}",
                self.ends,
                chars.len()
            )));
        }
        for end in self.ends {
            if !chars[end].is_whitespace() {
                return Err(invalid(format!("offset {end} does not fall on whitespace")));
            }
        }
        let bounds = [0, a, b, c, chars.len()];
        for (i, w) in bounds.windows(2).enumerate() {
            if chars[w[0]..w[1]].iter().all(|c| c.is_whitespace()) {
                return Err(invalid(format!("act {} would be empty", ActTag::ALL[i])));
            }
        }
        if contains_act_tag(plot) {
            return Err(invalid("plot text already contains an act tag"));
        }
        Ok(())
    }
}

/// Inserts `" <one>"`, `" <two-a>"`, `" <two-b>"` at the boundaries and
/// appends `" <three>"`. All other characters are left as they were.
pub fn insert_act_tags(plot: &str, boundaries: &ActBoundaries) -> Result<String, BoundaryError> {
    boundaries.validate(plot)?;
    let mut out = String::with_capacity(plot.len() + 32);
    let mut next = 0;
    for (i, ch) in plot.chars().enumerate() {
        if next < 3 && i == boundaries.ends[next] {
            out.push(' ');
            out.push_str(ActTag::ALL[next].literal());
            next += 1;
        }
        out.push(ch);
    }
    out.push(' ');
    out.push_str(ActTag::Three.literal());
    Ok(out)
}

/// Joins acts with single spaces and returns the plain text with the
/// boundaries that [`insert_act_tags`] needs to restore the annotation.
pub fn plain_with_boundaries(acts: &PlotActs) -> (String, ActBoundaries) {
    let mut ends = [0usize; 3];
    let mut text = String::new();
    let mut len = 0usize;
    for (i, act) in acts.as_array().iter().enumerate() {
        if i > 0 {
            ends[i - 1] = len;
            text.push(' ');
            len += 1;
        }
        text.push_str(act);
        len += act.chars().count();
    }
    (text, ActBoundaries::new(ends))
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum ActError {
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
}

/// Splits an annotated plot into its four acts. Each tag must appear exactly
/// once, in canonical order, with a non-empty act before it and nothing but
/// whitespace after `<three>`.
pub fn parse_acts(annotated: &str) -> Result<PlotActs, ActError> {
    let mut positions = [0usize; 4];
    for (i, tag) in ActTag::ALL.iter().enumerate() {
        let mut found = annotated.match_indices(tag.literal());
        let Some((pos, _)) = found.next() else {
            return Err(ActError::MissingTag { tag: *tag });
        };
        if found.next().is_some() {
            return Err(ActError::DuplicateTag { tag: *tag });
        }
        positions[i] = pos;
    }
    if positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ActError::OutOfOrderTags);
    }
    let mut acts: [String; 4] = Default::default();
    let mut start = 0;
    for (i, tag) in ActTag::ALL.iter().enumerate() {
        let text = annotated[start..positions[i]].trim();
        if text.is_empty() {
            return Err(ActError::EmptyAct { act: *tag });
        }
        acts[i] = text.to_string();
        start = positions[i] + tag.literal().len();
    }
    let tail = &annotated[start..];
    if !tail.trim().is_empty() {
        return Err(ActError::TrailingText {
            offset: start + (tail.len() - tail.trim_start().len()),
        });
    }
    let [act_one, act_two_a, act_two_b, act_three] = acts;
    Ok(PlotActs {
        act_one,
        act_two_a,
        act_two_b,
        act_three,
    })
}

/// Structural and length checks for an annotated plot. Never fails; all
/// findings land in the report.
pub fn validate_annotated_plot(annotated: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    let total = word_count(&strip_act_tags(annotated));
    match parse_acts(annotated) {
        Ok(acts) => {
            report.warn_opt(Issue::length_out_of_range(total, PLOT_WORDS));
            for (act, text) in ActTag::ALL.iter().zip(acts.as_array()) {
                let words = word_count(text);
                if total > 0 && (words as f64) < MIN_ACT_FRACTION * total as f64 {
                    report.warn(Issue::ShortAct {
                        act: *act,
                        words,
                        total,
                    });
                }
            }
        }
        Err(e) => {
            report.error(e);
            report.warn_opt(Issue::length_out_of_range(total, PLOT_WORDS));
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileId {
    O,
    AS,
    AL,
    ASG,
    ALG,
}

impl ProfileId {
    pub const ALL: [ProfileId; 5] = [
        ProfileId::O,
        ProfileId::AS,
        ProfileId::AL,
        ProfileId::ASG,
        ProfileId::ALG,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::O => "O",
            ProfileId::AS => "AS",
            ProfileId::AL => "AL",
            ProfileId::ASG => "ASG",
            ProfileId::ALG => "ALG",
        }
    }

    pub fn profile(self) -> GenerationProfile {
        GenerationProfile::of(self)
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown profile `{0}` (expected O, AS, AL, ASG or ALG)")]
pub struct UnknownProfile(pub String);

impl FromStr for ProfileId {
    type Err = UnknownProfile;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProfileId::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownProfile(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorylineKind {
    Short,
    Long,
}

impl StorylineKind {
    pub fn word_band(self) -> (usize, usize) {
        match self {
            StorylineKind::Short => SHORT_STORYLINE_WORDS,
            StorylineKind::Long => LONG_STORYLINE_WORDS,
        }
    }

    pub fn field_name(self) -> &'static str {
        match self {
            StorylineKind::Short => "storyline",
            StorylineKind::Long => "long_storyline",
        }
    }
}

/// Input/output scheme of one plot model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub id: ProfileId,
    /// Whether the completion carries act tags.
    pub annotated_output: bool,
    pub storyline_kind: StorylineKind,
    pub genres_included: bool,
}

impl GenerationProfile {
    pub const fn of(id: ProfileId) -> Self {
        let (annotated_output, storyline_kind, genres_included) = match id {
            ProfileId::O => (false, StorylineKind::Short, false),
            ProfileId::AS => (true, StorylineKind::Short, false),
            ProfileId::AL => (true, StorylineKind::Long, false),
            ProfileId::ASG => (true, StorylineKind::Short, true),
            ProfileId::ALG => (true, StorylineKind::Long, true),
        };
        Self {
            id,
            annotated_output,
            storyline_kind,
            genres_included,
        }
    }

    pub fn all() -> [GenerationProfile; 5] {
        ProfileId::ALL.map(GenerationProfile::of)
    }
}

/// Delimiters used between prompt and completion, and to end a completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneFormat {
    pub separator: String,
    pub stop: String,
}

impl Default for FinetuneFormat {
    fn default() -> Self {
        Self {
            separator: DEFAULT_SEPARATOR.to_string(),
            stop: DEFAULT_STOP.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum PromptError {
    #[error("profile {profile} requires at least one genre")]
    GenresRequired { profile: ProfileId },
    #[error("profile {profile} does not take genres")]
    GenresForbidden { profile: ProfileId },
    #[error("storyline is empty")]
    EmptyStoryline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltPrompt {
    pub text: String,
    pub warnings: Vec<Issue>,
}

/// Builds the model prompt for a storyline under `profile`. With genre
/// conditioning the genres lead, comma-joined and closed by `". "`.
/// The separator is always appended. Storyline length is checked against
/// the profile's band and reported as a warning.
pub fn build_prompt(
    storyline: &str,
    genres: &[Genre],
    profile: &GenerationProfile,
    format: &FinetuneFormat,
) -> Result<BuiltPrompt, PromptError> {
    let storyline = storyline.trim();
    if storyline.is_empty() {
        return Err(PromptError::EmptyStoryline);
    }
    match (profile.genres_included, genres.is_empty()) {
        (true, true) => return Err(PromptError::GenresRequired { profile: profile.id }),
        (false, false) => return Err(PromptError::GenresForbidden { profile: profile.id }),
        _ => {}
    }
    let mut text = String::new();
    if profile.genres_included {
        let names: Vec<&str> = genres.iter().map(Genre::name).collect();
        text.push_str(&names.join(", "));
        text.push_str(". ");
    }
    text.push_str(storyline);
    text.push_str(&format.separator);

    let kind = profile.storyline_kind;
    let warnings = Issue::length_violation(kind.field_name(), word_count(storyline), kind.word_band())
        .into_iter()
        .collect();
    Ok(BuiltPrompt { text, warnings })
}
