//! Parallel storyline→plot and description→scene datasets: validated
//! ingestion, genre statistics, manifest import and fine-tune export.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plot::{
    build_prompt, parse_acts, FinetuneFormat, GenerationProfile, PromptError, StorylineKind,
    LONG_STORYLINE_WORDS, SHORT_STORYLINE_WORDS,
};
use crate::report::Issue;
use crate::screenplay::{decode_tagged, DecodeMode};
use crate::text::{word_count, Genre, GenreVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    #[default]
    Plot,
    Scene,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Plot => "plot",
            RecordKind::Scene => "scene",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One training pair. For scenes, `storyline` holds the scene description
/// and `target_text` the tagged scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub kind: RecordKind,
    pub storyline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_storyline: Option<String>,
    #[serde(default)]
    pub genres: Vec<Genre>,
    pub target_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum DatasetError {
    #[error("record id `{id}` already exists")]
    DuplicateId { id: String },
    #[error("target of record `{id}` does not parse: {}", cause.code())]
    TargetParseFailure { id: String, cause: Issue },
    #[error("record `{id}` uses unknown genre `{genre}`")]
    UnknownGenre { id: String, genre: String },
    #[error("record `{id}`: {field} has {actual} words, expected {min}..={max}")]
    LengthViolation {
        id: String,
        field: String,
        actual: usize,
        min: usize,
        max: usize,
    },
    #[error("record `{id}` has no long storyline")]
    MissingLongStoryline { id: String },
    #[error("record `{id}` has no genres")]
    MissingGenres { id: String },
    #[error("record `{id}` is a {found} record, expected {expected}")]
    WrongRecordKind {
        id: String,
        expected: RecordKind,
        found: RecordKind,
    },
    #[error("dataset has no records to export")]
    EmptyDataset,
    #[error("record `{id}`: {source}")]
    Prompt { id: String, source: PromptError },
    #[error("manifest line {line}: {message}")]
    ManifestParseError { line: usize, message: String },
    #[error("file not found: {path}")]
    FileNotFound { path: String },
    #[error("record line {line}: {message}")]
    RecordParseError { line: usize, message: String },
}

/// Histogram bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreCount {
    pub genre: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub plots: usize,
    pub scenes: usize,
    pub genre_histogram: Vec<GenreCount>,
    pub mean_storyline_words: f64,
    pub mean_target_words: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Dataset {
    pub name: String,
    records: Vec<DatasetRecord>,
    #[serde(skip)]
    ids: HashSet<String>,
}

fn length_issues(record: &DatasetRecord) -> Vec<Issue> {
    let mut out: Vec<Issue> = Issue::length_violation(
        "storyline",
        word_count(&record.storyline),
        SHORT_STORYLINE_WORDS,
    )
    .into_iter()
    .collect();
    if let Some(long) = &record.long_storyline {
        out.extend(Issue::length_violation(
            "long_storyline",
            word_count(long),
            LONG_STORYLINE_WORDS,
        ));
    }
    out
}

fn check_target(record: &DatasetRecord) -> Result<(), DatasetError> {
    let cause: Option<Issue> = match record.kind {
        RecordKind::Plot => parse_acts(&record.target_text).err().map(Into::into),
        RecordKind::Scene => decode_tagged(&record.target_text, DecodeMode::Strict)
            .err()
            .map(Into::into),
    };
    match cause {
        Some(cause) => Err(DatasetError::TargetParseFailure {
            id: record.id.clone(),
            cause,
        }),
        None => Ok(()),
    }
}

fn as_error(id: &str, issue: Issue) -> DatasetError {
    match issue {
        Issue::LengthViolation {
            field,
            actual,
            min,
            max,
        } => DatasetError::LengthViolation {
            id: id.to_string(),
            field,
            actual,
            min,
            max,
        },
        Issue::UnknownGenre { genre } => DatasetError::UnknownGenre {
            id: id.to_string(),
            genre,
        },
        other => DatasetError::TargetParseFailure {
            id: id.to_string(),
            cause: other,
        },
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Validates `record` and appends it. Checks run in order: id
    /// uniqueness, target structure, genre vocabulary, word counts. In
    /// strict mode every finding rejects the record; in lenient mode
    /// vocabulary and length findings come back as warnings. Genres are
    /// stored in their canonical spelling when known.
    pub fn add_record(
        &mut self,
        mut record: DatasetRecord,
        mode: IngestMode,
        vocab: &GenreVocabulary,
    ) -> Result<Vec<Issue>, DatasetError> {
        record.target_text = record.target_text.trim().to_string();
        let warnings = self.check_record(&mut record, vocab)?;
        if mode == IngestMode::Strict {
            if let Some(first) = warnings.into_iter().next() {
                return Err(as_error(&record.id, first));
            }
            self.push(record);
            return Ok(Vec::new());
        }
        self.push(record);
        Ok(warnings)
    }

    fn check_record(
        &self,
        record: &mut DatasetRecord,
        vocab: &GenreVocabulary,
    ) -> Result<Vec<Issue>, DatasetError> {
        if self.ids.contains(&record.id) {
            return Err(DatasetError::DuplicateId {
                id: record.id.clone(),
            });
        }
        check_target(record)?;
        let mut warnings = Vec::new();
        for genre in &mut record.genres {
            match vocab.canonical(genre.name()) {
                Some(canonical) => *genre = canonical,
                None => warnings.push(Issue::UnknownGenre {
                    genre: genre.name().to_string(),
                }),
            }
        }
        warnings.extend(length_issues(record));
        Ok(warnings)
    }

    fn push(&mut self, record: DatasetRecord) {
        self.ids.insert(record.id.clone());
        self.records.push(record);
    }

    /// Genre occurrence counts, highest first, ties by name.
    pub fn genre_distribution(&self) -> Vec<GenreCount> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for genre in self.records.iter().flat_map(|r| &r.genres) {
            *counts.entry(genre.name()).or_insert(0) += 1;
        }
        let mut out: Vec<GenreCount> = counts
            .into_iter()
            .map(|(genre, count)| GenreCount {
                genre: genre.to_string(),
                count,
            })
            .collect();
        out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.genre.cmp(&b.genre)));
        out
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.records.len();
        let mean = |f: &dyn Fn(&DatasetRecord) -> usize| {
            if n == 0 {
                0.0
            } else {
                self.records.iter().map(f).sum::<usize>() as f64 / n as f64
            }
        };
        DatasetStats {
            records: n,
            plots: self.records.iter().filter(|r| r.kind == RecordKind::Plot).count(),
            scenes: self.records.iter().filter(|r| r.kind == RecordKind::Scene).count(),
            genre_histogram: self.genre_distribution(),
            mean_storyline_words: mean(&|r| word_count(&r.storyline)),
            mean_target_words: mean(&|r| word_count(&crate::plot::strip_act_tags(&r.target_text))),
        }
    }

    /// Fine-tune records for a plot profile, one per record in dataset
    /// order. The O profile drops act tags from completions.
    pub fn export_finetune(
        &self,
        profile: &GenerationProfile,
        format: &FinetuneFormat,
    ) -> Result<Vec<FinetuneRecord>, DatasetError> {
        if self.records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        self.records
            .iter()
            .map(|r| {
                if r.kind != RecordKind::Plot {
                    return Err(DatasetError::WrongRecordKind {
                        id: r.id.clone(),
                        expected: RecordKind::Plot,
                        found: r.kind,
                    });
                }
                let storyline = match profile.storyline_kind {
                    StorylineKind::Short => r.storyline.as_str(),
                    StorylineKind::Long => r
                        .long_storyline
                        .as_deref()
                        .filter(|s| !s.trim().is_empty())
                        .ok_or_else(|| DatasetError::MissingLongStoryline { id: r.id.clone() })?,
                };
                let genres: &[Genre] = if profile.genres_included {
                    if r.genres.is_empty() {
                        return Err(DatasetError::MissingGenres { id: r.id.clone() });
                    }
                    &r.genres
                } else {
                    &[]
                };
                let prompt = build_prompt(storyline, genres, profile, format)
                    .map_err(|source| DatasetError::Prompt {
                        id: r.id.clone(),
                        source,
                    })?
                    .text;
                let body = if profile.annotated_output {
                    r.target_text.clone()
                } else {
                    parse_acts(&r.target_text)
                        .map_err(|e| DatasetError::TargetParseFailure {
                            id: r.id.clone(),
                            cause: e.into(),
                        })?
                        .plain_text()
                };
                Ok(FinetuneRecord {
                    prompt,
                    completion: format!(" {body}{}", format.stop),
                })
            })
            .collect()
    }

    /// Fine-tune records for the scene model: description to tagged scene.
    pub fn export_scene_finetune(
        &self,
        format: &FinetuneFormat,
    ) -> Result<Vec<FinetuneRecord>, DatasetError> {
        if self.records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        self.records
            .iter()
            .map(|r| {
                if r.kind != RecordKind::Scene {
                    return Err(DatasetError::WrongRecordKind {
                        id: r.id.clone(),
                        expected: RecordKind::Scene,
                        found: r.kind,
                    });
                }
                let description = r.storyline.trim();
                if description.is_empty() {
                    return Err(DatasetError::Prompt {
                        id: r.id.clone(),
                        source: PromptError::EmptyStoryline,
                    });
                }
                Ok(FinetuneRecord {
                    prompt: format!("{description}{}", format.separator),
                    completion: format!(" {}{}", r.target_text, format.stop),
                })
            })
            .collect()
    }

    /// Records ordered by a seeded hash of their ids. Stable for a given
    /// seed regardless of insertion order.
    pub fn seeded_shuffle(&self, seed: u64) -> Vec<&DatasetRecord> {
        let key = |r: &DatasetRecord| -> [u8; 32] {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(r.id.as_bytes());
            h.finalize().into()
        };
        let mut keyed: Vec<([u8; 32], &DatasetRecord)> =
            self.records.iter().map(|r| (key(r), r)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        keyed.into_iter().map(|(_, r)| r).collect()
    }

    /// Splits a seeded shuffle into (train, validation); the validation
    /// share is rounded to the nearest record.
    pub fn train_validation_split(
        &self,
        seed: u64,
        validation_fraction: f64,
    ) -> (Vec<&DatasetRecord>, Vec<&DatasetRecord>) {
        let shuffled = self.seeded_shuffle(seed);
        let k = ((shuffled.len() as f64) * validation_fraction.clamp(0.0, 1.0)).round() as usize;
        let mut train = shuffled;
        let validation = train.split_off(train.len() - k);
        (train, validation)
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    /// Loads one record per line; blank lines are skipped.
    pub fn from_jsonl(
        name: impl Into<String>,
        text: &str,
        mode: IngestMode,
        vocab: &GenreVocabulary,
    ) -> Result<Self, DatasetError> {
        let mut ds = Dataset::new(name);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: DatasetRecord =
                serde_json::from_str(line).map_err(|e| DatasetError::RecordParseError {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            ds.add_record(record, mode, vocab)?;
        }
        Ok(ds)
    }
}

/// Persisted dataset history. A dataset is the replay of its events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DatasetEvent {
    Created { name: String },
    RecordAdded {
        dataset_id: String,
        record: DatasetRecord,
    },
}

/// Serializes export records as JSON lines behind a `#` header line that
/// records the delimiters used.
pub fn finetune_jsonl(records: &[FinetuneRecord], label: &str, format: &FinetuneFormat) -> String {
    let mut out = format!(
        "# kurosawa finetune export profile={label} separator={} stop={}\n",
        serde_json::to_string(&format.separator).expect("string serializes"),
        serde_json::to_string(&format.stop).expect("string serializes"),
    );
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Reverses the completion framing: leading space and trailing stop.
pub fn completion_body<'a>(completion: &'a str, format: &FinetuneFormat) -> Option<&'a str> {
    completion.strip_prefix(' ')?.strip_suffix(format.stop.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowRejection {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub id: String,
    pub reason: DatasetError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowWarning {
    pub row: usize,
    pub id: String,
    pub issue: Issue,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<RowRejection>,
    pub warnings: Vec<RowWarning>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    id: String,
    storyline_file: String,
    #[serde(default)]
    long_storyline_file: Option<String>,
    #[serde(default)]
    genres: Option<String>,
    target_file: String,
    #[serde(default)]
    kind: Option<String>,
}

const MANIFEST_COLUMNS: [&str; 3] = ["id", "storyline_file", "target_file"];

fn read_text(base: &Path, rel: &str) -> Result<String, DatasetError> {
    let path: PathBuf = base.join(rel.trim());
    std::fs::read_to_string(&path).map_err(|_| DatasetError::FileNotFound {
        path: path.display().to_string(),
    })
}

fn build_row(base: &Path, row: &ManifestRow) -> Result<DatasetRecord, DatasetError> {
    let kind = match row.kind.as_deref().map(str::trim).unwrap_or("") {
        "" | "plot" => RecordKind::Plot,
        "scene" => RecordKind::Scene,
        other => {
            return Err(DatasetError::ManifestParseError {
                line: 0,
                message: format!("unknown kind `{other}`"),
            })
        }
    };
    let long_storyline = match row.long_storyline_file.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(f) => Some(read_text(base, f)?.trim().to_string()),
    };
    let genres = row
        .genres
        .as_deref()
        .unwrap_or("")
        .split(';')
        .filter_map(Genre::new)
        .collect();
    Ok(DatasetRecord {
        id: row.id.trim().to_string(),
        kind,
        storyline: read_text(base, &row.storyline_file)?.trim().to_string(),
        long_storyline,
        genres,
        target_text: read_text(base, &row.target_file)?,
        source_note: None,
    })
}

impl Dataset {
    /// Imports rows of a pairing manifest (comma or tab separated, with a
    /// header). Paths are relative to the manifest. Files are read in
    /// parallel; records are validated strictly and committed in manifest
    /// order. Bad rows are reported without aborting the batch.
    pub fn import_manifest(
        &mut self,
        manifest: &Path,
        vocab: &GenreVocabulary,
    ) -> Result<ImportReport, DatasetError> {
        let text = std::fs::read_to_string(manifest).map_err(|_| DatasetError::FileNotFound {
            path: manifest.display().to_string(),
        })?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        self.import_manifest_str(&text, base, vocab)
    }

    pub fn import_manifest_str(
        &mut self,
        text: &str,
        base: &Path,
        vocab: &GenreVocabulary,
    ) -> Result<ImportReport, DatasetError> {
        let first = text.lines().next().unwrap_or("");
        let delimiter = if first.contains('\t') { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        if !text.trim().is_empty() {
            let headers = reader
                .headers()
                .map_err(|e| DatasetError::ManifestParseError {
                    line: 1,
                    message: e.to_string(),
                })?;
            for col in MANIFEST_COLUMNS {
                if !headers.iter().any(|h| h == col) {
                    return Err(DatasetError::ManifestParseError {
                        line: 1,
                        message: format!("missing column `{col}`"),
                    });
                }
            }
        }
        let rows: Vec<ManifestRow> = reader
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| DatasetError::ManifestParseError {
                    line: i + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;

        let built: Vec<Result<DatasetRecord, DatasetError>> =
            rows.par_iter().map(|row| build_row(base, row)).collect();

        let mut report = ImportReport::default();
        for (i, (row, record)) in rows.iter().zip(built).enumerate() {
            let row_no = i + 1;
            let id = row.id.trim().to_string();
            let outcome = record.and_then(|r| self.add_record(r, IngestMode::Strict, vocab));
            match outcome {
                Ok(warnings) => {
                    report.accepted += 1;
                    report.warnings.extend(warnings.into_iter().map(|issue| RowWarning {
                        row: row_no,
                        id: id.clone(),
                        issue,
                    }));
                }
                Err(DatasetError::ManifestParseError { message, .. }) => {
                    report.rejected.push(RowRejection {
                        row: row_no,
                        id,
                        reason: DatasetError::ManifestParseError {
                            line: row_no + 1,
                            message,
                        },
                    })
                }
                Err(reason) => report.rejected.push(RowRejection {
                    row: row_no,
                    id,
                    reason,
                }),
            }
        }
        Ok(report)
    }
}
