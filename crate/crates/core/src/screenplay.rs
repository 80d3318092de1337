//! Screenplay line classification, scene segmentation, the tagged scene
//! wire format and plain-text rendering.
//!
//! Classification is a total function over single lines. The parser threads
//! the previous line's class through [`classify_line`] so that dialogue can
//! be recognized by what precedes it, not only by its indentation.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{flatten_newlines, ElementKind, LineSpan, Scene, ScreenplayElement, Script};

/// Slugline used for content that appears before the first scene heading.
pub const SYNTHESIZED_SLUGLINE: &str = "INT. UNKNOWN - DAY";

/// Columns a tab advances to (next multiple of this width).
const TAB_WIDTH: usize = 8;

pub const DEFAULT_PAGE_WIDTH: usize = 60;
pub const MIN_PAGE_WIDTH: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub cue_indent_min: usize,
    pub dialogue_indent_min: usize,
    pub transition_keywords: BTreeSet<String>,
    pub slugline_prefixes: BTreeSet<String>,
    pub cue_extension_allowlist: BTreeSet<String>,
}

fn string_set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            cue_indent_min: 20,
            dialogue_indent_min: 8,
            transition_keywords: string_set(&[
                "CUT TO:",
                "FADE IN:",
                "FADE OUT.",
                "FADE OUT:",
                "FADE TO:",
                "DISSOLVE TO:",
                "SMASH CUT TO:",
                "MATCH CUT TO:",
            ]),
            slugline_prefixes: string_set(&["INT.", "EXT.", "INT./EXT.", "EXT./INT.", "I/E."]),
            cue_extension_allowlist: string_set(&["V.O.", "O.S.", "O.C.", "CONT'D"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("dialogue_indent_min ({dialogue}) must be below cue_indent_min ({cue})")]
    IndentOrder { dialogue: usize, cue: usize },
    #[error("keyword set `{0}` must not be empty")]
    EmptyKeywordSet(&'static str),
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.dialogue_indent_min >= self.cue_indent_min {
            return Err(LayoutError::IndentOrder {
                dialogue: self.dialogue_indent_min,
                cue: self.cue_indent_min,
            });
        }
        for (name, set) in [
            ("transition_keywords", &self.transition_keywords),
            ("slugline_prefixes", &self.slugline_prefixes),
            ("cue_extension_allowlist", &self.cue_extension_allowlist),
        ] {
            if set.is_empty() {
                return Err(LayoutError::EmptyKeywordSet(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    Slugline,
    Transition,
    CharacterCue,
    DialogueLine,
    ActionLine,
    Parenthetical,
    Noise,
    Blank,
}

fn indent_columns(line: &str) -> usize {
    let mut col = 0;
    for c in line.chars() {
        match c {
            '\t' => col = (col / TAB_WIDTH + 1) * TAB_WIDTH,
            c if c.is_whitespace() => col += 1,
            _ => break,
        }
    }
    col
}

/// At least one letter and no lowercase letters.
fn is_fully_uppercase(s: &str) -> bool {
    s.chars().any(char::is_alphabetic) && !s.chars().any(char::is_lowercase)
}

static PAGE_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(page\s+)?\d{1,4}\.?$").expect("valid regex"));

static DATE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    let month = r"(jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\.?";
    let date = format!(
        r"(\d{{1,2}}[/.-]\d{{1,2}}[/.-]\d{{2,4}}|{month}\s+\d{{1,2}}(st|nd|rd|th)?,?\s+\d{{4}}|\d{{1,2}}\s+{month},?\s+\d{{4}}|{month}\s+\d{{4}})"
    );
    Regex::new(&format!(
        r"(?i)^\(?((revised|rev\.|draft|shooting script)\s*[:\-]?\s*)?{date}\)?$"
    ))
    .expect("valid regex")
});

static PAGE_BREAK_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\(CONTINUED\)|CONTINUED:?(\s*\(\d+\))?|\(MORE\))$").expect("valid regex")
});

fn is_noise(trimmed: &str) -> bool {
    PAGE_NUMBER.is_match(trimmed) || DATE_LINE.is_match(trimmed) || PAGE_BREAK_MARKER.is_match(trimmed)
}

/// Strips a trailing `(EXT)` whose content is an allowed cue extension.
fn strip_cue_extension<'a>(trimmed: &'a str, config: &LayoutConfig) -> &'a str {
    if !trimmed.ends_with(')') {
        return trimmed;
    }
    let Some(open) = trimmed.rfind('(') else {
        return trimmed;
    };
    let content = trimmed[open + 1..trimmed.len() - 1]
        .trim()
        .replace('\u{2019}', "'")
        .to_uppercase();
    if config.cue_extension_allowlist.contains(&content) {
        trimmed[..open].trim_end()
    } else {
        trimmed
    }
}

/// Classifies one source line. The first matching rule wins:
/// blank, noise, slugline, transition, character cue, parenthetical,
/// dialogue, action.
pub fn classify_line(raw_line: &str, prev_class: LineClass, config: &LayoutConfig) -> LineClass {
    let trimmed = raw_line.trim();
    if trimmed.is_empty() {
        return LineClass::Blank;
    }
    if is_noise(trimmed) {
        return LineClass::Noise;
    }
    let upper = trimmed.to_uppercase();
    if config
        .slugline_prefixes
        .iter()
        .any(|p| upper.starts_with(p.as_str()))
    {
        return LineClass::Slugline;
    }
    if is_fully_uppercase(trimmed)
        && (trimmed.ends_with("TO:") || config.transition_keywords.contains(trimmed))
    {
        return LineClass::Transition;
    }
    let indent = indent_columns(raw_line);
    if is_fully_uppercase(strip_cue_extension(trimmed, config))
        && indent >= config.cue_indent_min
        && trimmed.split_whitespace().count() <= 5
    {
        return LineClass::CharacterCue;
    }
    let in_speech = matches!(
        prev_class,
        LineClass::CharacterCue | LineClass::DialogueLine | LineClass::Parenthetical
    );
    if in_speech && trimmed.starts_with('(') {
        return LineClass::Parenthetical;
    }
    if in_speech && indent >= config.dialogue_indent_min {
        return LineClass::DialogueLine;
    }
    LineClass::ActionLine
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum ParseError {
    #[error("input has no non-blank lines")]
    EmptyInput,
    #[error("every line is blank, noise or a transition")]
    NoElements,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum ParseWarning {
    /// Content before the first scene heading was placed in a scene with a
    /// synthesized slugline.
    SynthesizedSlugline { first_line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedScript {
    pub script: Script,
    /// Class of every source line, indexed by 0-based line number.
    pub line_classes: Vec<LineClass>,
    pub warnings: Vec<ParseWarning>,
}

/// Normalizes CRLF and lone CR line endings to LF.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

struct OpenElement {
    kind: ElementKind,
    lines: Vec<String>,
    start: usize,
    end: usize,
}

impl OpenElement {
    fn new(kind: ElementKind, line: &str, idx: usize) -> Self {
        Self {
            kind,
            lines: vec![line.to_string()],
            start: idx,
            end: idx + 1,
        }
    }

    fn finish(self) -> ScreenplayElement {
        ScreenplayElement::with_span(
            self.kind,
            self.lines.join("\n"),
            LineSpan::new(self.start, self.end),
        )
    }
}

#[derive(Default)]
struct SceneBuilder {
    scenes: Vec<Scene>,
    open: Option<OpenElement>,
    warnings: Vec<ParseWarning>,
}

impl SceneBuilder {
    fn flush(&mut self) {
        if let Some(el) = self.open.take() {
            let element = el.finish();
            match self.scenes.last_mut() {
                Some(scene) => scene.elements.push(element),
                None => {
                    self.warnings.push(ParseWarning::SynthesizedSlugline {
                        first_line: element.line_span.start,
                    });
                    let mut scene = Scene::new(vec![ScreenplayElement::synthesized(
                        ElementKind::Slugline,
                        SYNTHESIZED_SLUGLINE,
                    )]);
                    scene.elements.push(element);
                    self.scenes.push(scene);
                }
            }
        }
    }

    /// Extends the open element when it has the same kind, else starts one.
    fn extend_or_open(&mut self, kind: ElementKind, line: &str, idx: usize) {
        match &mut self.open {
            Some(el) if el.kind == kind => {
                el.lines.push(line.to_string());
                el.end = idx + 1;
            }
            _ => {
                self.flush();
                self.open = Some(OpenElement::new(kind, line, idx));
            }
        }
    }

    fn single(&mut self, kind: ElementKind, line: &str, idx: usize) {
        self.flush();
        self.open = Some(OpenElement::new(kind, line, idx));
        self.flush();
    }
}

/// Parses a plain-text screenplay into scenes.
///
/// Noise lines are transparent: they neither break an element nor update
/// the previous-class state, so page breaks inside a dialogue or action
/// block do not split it. Blank lines and transitions close the open element.
pub fn parse_script(text: &str, config: &LayoutConfig) -> Result<ParsedScript, ParseError> {
    let text = normalize_newlines(text);
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(ParseError::EmptyInput);
    }

    let mut builder = SceneBuilder::default();
    let mut line_classes = Vec::with_capacity(lines.len());
    let mut prev = LineClass::Blank;

    for (idx, raw) in lines.iter().enumerate() {
        let class = classify_line(raw, prev, config);
        line_classes.push(class);
        let line = raw.trim();
        match class {
            LineClass::Noise => continue,
            LineClass::Blank | LineClass::Transition => builder.flush(),
            LineClass::Slugline => {
                builder.flush();
                builder.scenes.push(Scene::new(vec![ScreenplayElement::with_span(
                    ElementKind::Slugline,
                    line,
                    LineSpan::new(idx, idx + 1),
                )]));
            }
            LineClass::CharacterCue => builder.single(ElementKind::CharacterCue, line, idx),
            LineClass::DialogueLine | LineClass::Parenthetical => {
                builder.extend_or_open(ElementKind::Dialogue, line, idx)
            }
            LineClass::ActionLine => builder.extend_or_open(ElementKind::Action, line, idx),
        }
        prev = class;
    }
    builder.flush();

    if builder.scenes.is_empty() {
        return Err(ParseError::NoElements);
    }
    Ok(ParsedScript {
        script: Script {
            title: String::new(),
            scenes: builder.scenes,
        },
        line_classes,
        warnings: builder.warnings,
    })
}

/// Begin/end tag pair of the tagged scene format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneTag {
    Slugline,
    Action,
    CharacterName,
    Dialogue,
}

impl SceneTag {
    pub const ALL: [SceneTag; 4] = [
        SceneTag::Slugline,
        SceneTag::Action,
        SceneTag::CharacterName,
        SceneTag::Dialogue,
    ];

    pub fn begin(self) -> &'static str {
        match self {
            SceneTag::Slugline => "<bsl>",
            SceneTag::Action => "<bal>",
            SceneTag::CharacterName => "<bcn>",
            SceneTag::Dialogue => "<bd>",
        }
    }

    pub fn end(self) -> &'static str {
        match self {
            SceneTag::Slugline => "<esl>",
            SceneTag::Action => "<eal>",
            SceneTag::CharacterName => "<ecn>",
            SceneTag::Dialogue => "<ed>",
        }
    }

    pub fn for_kind(kind: ElementKind) -> Option<SceneTag> {
        match kind {
            ElementKind::Slugline => Some(SceneTag::Slugline),
            ElementKind::Action => Some(SceneTag::Action),
            ElementKind::CharacterCue => Some(SceneTag::CharacterName),
            ElementKind::Dialogue => Some(SceneTag::Dialogue),
            ElementKind::Transition => None,
        }
    }

    pub fn kind(self) -> ElementKind {
        match self {
            SceneTag::Slugline => ElementKind::Slugline,
            SceneTag::Action => ElementKind::Action,
            SceneTag::CharacterName => ElementKind::CharacterCue,
            SceneTag::Dialogue => ElementKind::Dialogue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagToken {
    Begin(SceneTag),
    End(SceneTag),
}

impl fmt::Display for TagToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagToken::Begin(t) => f.write_str(t.begin()),
            TagToken::End(t) => f.write_str(t.end()),
        }
    }
}

/// Finds the next tag at or after byte offset `from`.
fn next_tag(text: &str, from: usize) -> Option<(usize, usize, TagToken)> {
    let mut search = from;
    while let Some(rel) = text[search..].find('<') {
        let at = search + rel;
        let rest = &text[at..];
        for tag in SceneTag::ALL {
            if rest.starts_with(tag.begin()) {
                return Some((at, at + tag.begin().len(), TagToken::Begin(tag)));
            }
            if rest.starts_with(tag.end()) {
                return Some((at, at + tag.end().len(), TagToken::End(tag)));
            }
        }
        search = at + 1;
    }
    None
}

fn contains_tag(text: &str) -> bool {
    next_tag(text, 0).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum EncodeError {
    #[error("element {index} of kind {kind} has no tag mapping")]
    UnsupportedElement { index: usize, kind: ElementKind },
    #[error("element {index} is empty")]
    EmptyElementText { index: usize },
    #[error("element {index} contains a reserved scene tag")]
    TagInText { index: usize },
}

/// Serializes a scene into the tagged format, one element per line.
pub fn encode_tagged(scene: &Scene) -> Result<String, EncodeError> {
    let mut lines = Vec::with_capacity(scene.elements.len());
    for (index, element) in scene.elements.iter().enumerate() {
        let tag = SceneTag::for_kind(element.kind).ok_or(EncodeError::UnsupportedElement {
            index,
            kind: element.kind,
        })?;
        let text = flatten_newlines(&element.text);
        if text.is_empty() {
            return Err(EncodeError::EmptyElementText { index });
        }
        if contains_tag(&text) {
            return Err(EncodeError::TagInText { index });
        }
        lines.push(format!("{} {} {}", tag.begin(), text, tag.end()));
    }
    Ok(lines.join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Stray text, empty elements and empty scenes become warnings.
    #[default]
    Lenient,
    /// Any irregularity is an error.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum DecodeWarning {
    StrayText { offset: usize, text: String },
    EmptyElement { offset: usize },
    EmptyScene,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum DecodeError {
    #[error("unbalanced tags at byte {offset}: expected {expected}, found {found}")]
    UnbalancedTags {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("text outside any tag pair at byte {offset}")]
    StrayText { offset: usize },
    #[error("empty element at byte {offset}")]
    EmptyElement { offset: usize },
    #[error("no tagged elements")]
    EmptyScene,
}

impl From<DecodeWarning> for DecodeError {
    fn from(w: DecodeWarning) -> Self {
        match w {
            DecodeWarning::StrayText { offset, .. } => DecodeError::StrayText { offset },
            DecodeWarning::EmptyElement { offset } => DecodeError::EmptyElement { offset },
            DecodeWarning::EmptyScene => DecodeError::EmptyScene,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedScene {
    pub scene: Scene,
    pub warnings: Vec<DecodeWarning>,
}

/// Parses tagged scene text. Unbalanced tags are always an error; the
/// remaining irregularities are warnings in lenient mode.
pub fn decode_tagged(text: &str, mode: DecodeMode) -> Result<DecodedScene, DecodeError> {
    let mut warnings = Vec::new();
    let mut elements = Vec::new();
    let mut pos = 0;

    let note = |w: DecodeWarning, warnings: &mut Vec<DecodeWarning>| -> Result<(), DecodeError> {
        match mode {
            DecodeMode::Strict => Err(w.into()),
            DecodeMode::Lenient => {
                warnings.push(w);
                Ok(())
            }
        }
    };
    let stray = |from: usize, to: usize| -> Option<DecodeWarning> {
        let segment = &text[from..to];
        let trimmed = segment.trim();
        (!trimmed.is_empty()).then(|| DecodeWarning::StrayText {
            offset: from + (segment.len() - segment.trim_start().len()),
            text: trimmed.to_string(),
        })
    };

    loop {
        let Some((start, after_begin, token)) = next_tag(text, pos) else {
            if let Some(w) = stray(pos, text.len()) {
                note(w, &mut warnings)?;
            }
            break;
        };
        if let Some(w) = stray(pos, start) {
            note(w, &mut warnings)?;
        }
        let TagToken::Begin(tag) = token else {
            return Err(DecodeError::UnbalancedTags {
                offset: start,
                expected: "begin tag".into(),
                found: token.to_string(),
            });
        };
        match next_tag(text, after_begin) {
            Some((close_start, close_end, TagToken::End(closing))) if closing == tag => {
                let content = text[after_begin..close_start].trim();
                if content.is_empty() {
                    note(DecodeWarning::EmptyElement { offset: start }, &mut warnings)?;
                } else {
                    elements.push(ScreenplayElement::synthesized(tag.kind(), content));
                }
                pos = close_end;
            }
            Some((close_start, _, other)) => {
                return Err(DecodeError::UnbalancedTags {
                    offset: close_start,
                    expected: tag.end().into(),
                    found: other.to_string(),
                })
            }
            None => {
                return Err(DecodeError::UnbalancedTags {
                    offset: start,
                    expected: tag.end().into(),
                    found: "end of input".into(),
                })
            }
        }
    }

    if elements.is_empty() {
        note(DecodeWarning::EmptyScene, &mut warnings)?;
    }
    Ok(DecodedScene {
        scene: Scene::new(elements),
        warnings,
    })
}

fn wrap_line(line: &str, width: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for word in line.split_whitespace() {
        if !current.is_empty() && current.chars().count() + 1 + word.chars().count() > width {
            out.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Renders a scene as screenplay-formatted plain text.
///
/// Sluglines are uppercased and flush-left, action is flush-left, cues are
/// centered (never below the default cue indent, so the output re-parses)
/// and dialogue is wrapped into a centered block half the page wide.
/// Widths under [`MIN_PAGE_WIDTH`] are raised to it.
pub fn render_screenplay(scene: &Scene, page_width: usize) -> String {
    let width = page_width.max(MIN_PAGE_WIDTH);
    let defaults = LayoutConfig::default();
    let block = width / 2;
    let dialogue_indent = ((width - block) / 2).min(defaults.cue_indent_min - 1);

    let mut out: Vec<String> = Vec::new();
    let mut prev: Option<ElementKind> = None;
    for element in &scene.elements {
        let attaches = element.kind == ElementKind::Dialogue
            && matches!(prev, Some(ElementKind::CharacterCue | ElementKind::Dialogue));
        if prev.is_some() && !attaches {
            out.push(String::new());
        }
        let lines = element.text.lines().map(str::trim).filter(|l| !l.is_empty());
        match element.kind {
            ElementKind::Slugline => {
                out.push(flatten_newlines(&element.text).to_uppercase());
            }
            ElementKind::Action => out.extend(lines.map(str::to_string)),
            ElementKind::CharacterCue => {
                let cue = flatten_newlines(&element.text).to_uppercase();
                let len = cue.chars().count();
                let indent = (width.saturating_sub(len) / 2).max(defaults.cue_indent_min);
                out.push(format!("{}{}", " ".repeat(indent), cue));
            }
            ElementKind::Dialogue => {
                for line in lines {
                    for wrapped in wrap_line(line, block) {
                        out.push(format!("{}{}", " ".repeat(dialogue_indent), wrapped));
                    }
                }
            }
            ElementKind::Transition => {
                let t = flatten_newlines(&element.text).to_uppercase();
                let indent = width.saturating_sub(t.chars().count());
                out.push(format!("{}{}", " ".repeat(indent), t));
            }
        }
        prev = Some(element.kind);
    }
    out.join("\n")
}

/// Renders every scene, separated by a blank line.
pub fn render_script(script: &Script, page_width: usize) -> String {
    script
        .scenes
        .iter()
        .map(|s| render_screenplay(s, page_width))
        .collect::<Vec<_>>()
        .join("\n\n")
}
