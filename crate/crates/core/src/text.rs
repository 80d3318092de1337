//! Shared domain types and the canonical tokenizer.
//!
//! Every word count and every n-gram metric in the crate goes through
//! [`tokenize`], so length checks and scores are reproducible across the
//! parser, the dataset tooling and the evaluation harness.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Kind of a structural screenplay element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Slugline,
    Action,
    CharacterCue,
    Dialogue,
    Transition,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Slugline => "slugline",
            ElementKind::Action => "action",
            ElementKind::CharacterCue => "character_cue",
            ElementKind::Dialogue => "dialogue",
            ElementKind::Transition => "transition",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open range of 0-based source line indices.
///
/// Synthesized elements (not backed by any source line) use `0..0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

impl LineSpan {
    pub const SYNTHESIZED: LineSpan = LineSpan { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn is_synthesized(&self) -> bool {
        self.start == 0 && self.end == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenplayElement {
    pub kind: ElementKind,
    /// Element content. Multi-line elements keep their internal newlines.
    pub text: String,
    pub line_span: LineSpan,
}

impl ScreenplayElement {
    /// Builds an element that does not originate from a parsed source.
    pub fn synthesized(kind: ElementKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
            line_span: LineSpan::SYNTHESIZED,
        }
    }

    pub fn with_span(kind: ElementKind, text: impl Into<String>, span: LineSpan) -> Self {
        Self {
            kind,
            text: text.into(),
            line_span: span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scene {
    pub elements: Vec<ScreenplayElement>,
    /// Short scene description, when one has been written for the scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Scene {
    pub fn new(elements: Vec<ScreenplayElement>) -> Self {
        Self {
            elements,
            description: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Concatenated word count of every element.
    pub fn word_count(&self) -> usize {
        self.elements.iter().map(|e| word_count(&e.text)).sum()
    }

    /// True when every dialogue element directly follows a character cue or
    /// another dialogue element.
    pub fn dialogue_adjacency_holds(&self) -> bool {
        self.elements.iter().enumerate().all(|(i, e)| {
            e.kind != ElementKind::Dialogue
                || (i > 0
                    && matches!(
                        self.elements[i - 1].kind,
                        ElementKind::CharacterCue | ElementKind::Dialogue
                    ))
        })
    }

    /// The form this scene takes after a trip through the tagged wire format:
    /// transitions removed, internal newlines flattened to single spaces,
    /// spans zeroed and no description.
    pub fn tagged_form(&self) -> Scene {
        Scene::new(
            self.elements
                .iter()
                .filter(|e| e.kind != ElementKind::Transition)
                .map(|e| ScreenplayElement::synthesized(e.kind, flatten_newlines(&e.text)))
                .collect(),
        )
    }
}

pub(crate) fn flatten_newlines(text: &str) -> String {
    text.split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Script {
    pub title: String,
    pub scenes: Vec<Scene>,
}

impl Script {
    pub fn slugline_count(&self) -> usize {
        self.scenes
            .iter()
            .flat_map(|s| &s.elements)
            .filter(|e| e.kind == ElementKind::Slugline)
            .count()
    }
}

/// A plot split into the four acts of the 4-act structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotActs {
    pub act_one: String,
    pub act_two_a: String,
    pub act_two_b: String,
    pub act_three: String,
}

impl PlotActs {
    pub fn as_array(&self) -> [&str; 4] {
        [
            &self.act_one,
            &self.act_two_a,
            &self.act_two_b,
            &self.act_three,
        ]
    }

    /// Unannotated plot text: the four acts joined by single spaces.
    pub fn plain_text(&self) -> String {
        self.as_array().join(" ")
    }

    pub fn word_count(&self) -> usize {
        self.as_array().iter().map(|a| word_count(a)).sum()
    }
}

/// Genre label. Whether it belongs to the active vocabulary is checked by
/// [`GenreVocabulary`], not at construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genre(String);

impl Genre {
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into().trim().to_string();
        if name.is_empty() {
            None
        } else {
            Some(Genre(name))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_GENRES: &[&str] = &[
    "Drama",
    "Comedy",
    "Romance",
    "Action",
    "Thriller",
    "Crime",
    "Adventure",
    "Sci-Fi",
    "Horror",
    "Fantasy",
    "Mystery",
    "Family",
    "Biography",
    "Musical",
    "War",
    "History",
    "Sport",
    "Western",
];

/// Controlled genre vocabulary. Lookups are case-insensitive and return the
/// canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreVocabulary {
    names: Vec<String>,
}

impl Default for GenreVocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_GENRES.iter().copied())
    }
}

impl GenreVocabulary {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            names: names
                .into_iter()
                .map(Into::into)
                .filter(|n| !n.trim().is_empty())
                .collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn canonical(&self, name: &str) -> Option<Genre> {
        let name = name.trim();
        self.names
            .iter()
            .find(|n| n.eq_ignore_ascii_case(name))
            .map(|n| Genre(n.clone()))
    }

    pub fn contains(&self, genre: &Genre) -> bool {
        self.canonical(genre.name()).is_some()
    }
}

/// Output of the canonical tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercases, splits on Unicode whitespace and strips edge punctuation from
/// each token. Apostrophes and hyphens survive inside a token
/// (`"don't"`, `"sci-fi"`); empty tokens are dropped.
pub fn tokenize(text: &str) -> TokenSeq {
    let tokens = text
        .split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_string())
            }
        })
        .collect();
    TokenSeq { tokens }
}

pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}
