//! Operations shared by the HTTP service and the CLI: generation with
//! persistence, datasets rebuilt from their event log, ratings and item
//! retrieval.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{BackendKind, ServiceConfig};
use crate::dataset::{
    finetune_jsonl, Dataset, DatasetError, DatasetEvent, DatasetRecord, DatasetStats,
    ImportReport, IngestMode, RowRejection,
};
use crate::generation::{
    CompletionBackend, GenerationConfig, GenerationError, Generator, LiveBackend, MockBank,
    MockBankError, MockBackend, PlotGeneration,
};
use crate::metrics::{likert_summary, LikertRating, LikertScores, LikertSummary, MetricError};
use crate::plot::{ProfileId, PromptError, StorylineKind};
use crate::report::Issue;
use crate::store::{ItemKind, Page, Store, StoreError, StoredItem};
use crate::text::{Genre, GenreVocabulary};

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Generation(GenerationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Dataset(DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("item `{id}` is a {kind} and cannot be rated")]
    NotRatable { id: String, kind: ItemKind },
    #[error("dataset name is empty")]
    EmptyName,
}

impl From<GenerationError> for WorkbenchError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Prompt(p) => WorkbenchError::Prompt(p),
            other => WorkbenchError::Generation(other),
        }
    }
}

impl From<DatasetError> for WorkbenchError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Prompt { source, .. } => WorkbenchError::Prompt(source),
            other => WorkbenchError::Dataset(other),
        }
    }
}

impl WorkbenchError {
    /// True for failures of the completion backend rather than of the input.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            WorkbenchError::Generation(
                GenerationError::BackendUnavailable { .. }
                    | GenerationError::BackendRejected { .. }
                    | GenerationError::Timeout
            )
        )
    }
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    MockBank(#[from] MockBankError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Builds the completion backend and generator named by `config`.
pub fn build_generator(config: &ServiceConfig) -> Result<Generator, MockBankError> {
    let backend: Arc<dyn CompletionBackend> = match config.backend.kind {
        BackendKind::Mock => {
            let bank = match &config.backend.mock_bank_dir {
                Some(dir) => MockBank::from_dir(dir)?,
                None => MockBank::builtin(),
            };
            Arc::new(MockBackend::new(bank))
        }
        BackendKind::Live => Arc::new(LiveBackend::new(config.backend.live.clone())),
    };
    let mut generator = Generator::new(backend);
    generator.retry = config.backend.retry_policy();
    generator.context_limit = config.backend.context_limit;
    generator.format = config.format.clone();
    Ok(generator)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PlotRequest {
    pub storyline: String,
    #[serde(default)]
    pub long_storyline: Option<String>,
    #[serde(default)]
    pub genres: Vec<String>,
    pub profile: ProfileId,
    /// Partial override of the configured generation defaults.
    #[serde(default)]
    pub config: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SceneRequest {
    pub description: String,
    #[serde(default)]
    pub config: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RatingRequest {
    pub item_id: String,
    #[serde(default = "anonymous")]
    pub rater_id: String,
    pub scores: LikertScores,
}

fn anonymous() -> String {
    "anonymous".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportTarget {
    Plot(ProfileId),
    Scene,
}

impl ExportTarget {
    pub fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("scene") {
            return Some(ExportTarget::Scene);
        }
        s.parse().ok().map(ExportTarget::Plot)
    }

    pub fn label(self) -> &'static str {
        match self {
            ExportTarget::Plot(p) => p.as_str(),
            ExportTarget::Scene => "scene",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetView {
    pub id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordAdded {
    pub id: String,
    pub warnings: Vec<Issue>,
}

struct DatasetEntry {
    created_at: DateTime<Utc>,
    dataset: Dataset,
}

pub struct Workbench {
    config: ServiceConfig,
    vocab: GenreVocabulary,
    generator: Generator,
    store: Store,
    datasets: Mutex<BTreeMap<String, DatasetEntry>>,
}

impl std::fmt::Debug for Workbench {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workbench")
            .field("store", &self.store)
            .field("generator", &self.generator)
            .finish()
    }
}

impl Workbench {
    /// Validates `config`, builds its backend and opens the store in
    /// `config.data_dir`.
    pub fn open(config: ServiceConfig) -> Result<Self, OpenError> {
        config.validate()?;
        let generator = build_generator(&config)?;
        Ok(Self::with_generator(config, generator)?)
    }

    pub fn with_generator(config: ServiceConfig, generator: Generator) -> Result<Self, StoreError> {
        let store = Store::open(&config.data_dir)?;
        let vocab = config.vocabulary();
        let wb = Self {
            config,
            vocab,
            generator,
            store,
            datasets: Mutex::new(BTreeMap::new()),
        };
        wb.replay_datasets()?;
        Ok(wb)
    }

    fn replay_datasets(&self) -> Result<(), StoreError> {
        let mut datasets = self.datasets.lock();
        for item in self.store.all(ItemKind::Dataset) {
            match item.payload_as::<DatasetEvent>()? {
                DatasetEvent::Created { name } => {
                    datasets.insert(
                        item.id.clone(),
                        DatasetEntry {
                            created_at: item.created_at,
                            dataset: Dataset::new(name),
                        },
                    );
                }
                DatasetEvent::RecordAdded { dataset_id, record } => {
                    let Some(entry) = datasets.get_mut(&dataset_id) else {
                        tracing::warn!(event = %item.id, %dataset_id, "record for unknown dataset");
                        continue;
                    };
                    if let Err(e) = entry.dataset.add_record(record, IngestMode::Lenient, &self.vocab) {
                        tracing::warn!(event = %item.id, error = %e, "stored record no longer validates");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &GenreVocabulary {
        &self.vocab
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// The configured defaults with the keys of `overrides` applied.
    pub fn generation_config(&self, overrides: Option<&Value>) -> Result<GenerationConfig, WorkbenchError> {
        let invalid = |reason: String| WorkbenchError::Generation(GenerationError::InvalidConfig { reason });
        let mut merged = serde_json::to_value(&self.config.generation).expect("config serializes");
        match overrides {
            None | Some(Value::Null) => {}
            Some(Value::Object(fields)) => {
                let target = merged.as_object_mut().expect("config is an object");
                for (k, v) in fields {
                    target.insert(k.clone(), v.clone());
                }
            }
            Some(_) => return Err(invalid("config must be an object".into())),
        }
        let config: GenerationConfig =
            serde_json::from_value(merged).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical genres plus a warning for each name outside the vocabulary.
    fn resolve_genres(&self, names: &[String]) -> (Vec<Genre>, Vec<Issue>) {
        let mut genres = Vec::new();
        let mut warnings = Vec::new();
        for name in names {
            if let Some(g) = self.vocab.canonical(name) {
                genres.push(g);
            } else if let Some(g) = Genre::new(name.as_str()) {
                warnings.push(Issue::UnknownGenre {
                    genre: g.name().to_string(),
                });
                genres.push(g);
            }
        }
        (genres, warnings)
    }

    pub fn plot_generation(&self, req: &PlotRequest) -> Result<PlotGeneration, WorkbenchError> {
        let config = self.generation_config(req.config.as_ref())?;
        let profile = req.profile.profile();
        let storyline = match (profile.storyline_kind, &req.long_storyline) {
            (StorylineKind::Long, Some(long)) if !long.trim().is_empty() => long.as_str(),
            _ => req.storyline.as_str(),
        };
        let (genres, genre_warnings) = self.resolve_genres(&req.genres);
        let mut generation = self
            .generator
            .generate_plot(storyline, &genres, &profile, &config)?;
        generation.report.warnings.extend(genre_warnings);
        Ok(generation)
    }

    pub fn generate_plot(&self, req: &PlotRequest) -> Result<StoredItem, WorkbenchError> {
        let generation = self.plot_generation(req)?;
        Ok(self.store.append(&generation)?)
    }

    pub fn generate_scene(&self, req: &SceneRequest) -> Result<StoredItem, WorkbenchError> {
        let config = self.generation_config(req.config.as_ref())?;
        let generation = self.generator.generate_scene(&req.description, &config)?;
        Ok(self.store.append(&generation)?)
    }

    pub fn create_dataset(&self, name: &str) -> Result<StoredItem, WorkbenchError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(WorkbenchError::EmptyName);
        }
        let mut datasets = self.datasets.lock();
        let item = self.store.append(&DatasetEvent::Created {
            name: name.to_string(),
        })?;
        datasets.insert(
            item.id.clone(),
            DatasetEntry {
                created_at: item.created_at,
                dataset: Dataset::new(name),
            },
        );
        Ok(item)
    }

    fn not_found(id: &str) -> WorkbenchError {
        WorkbenchError::Store(StoreError::NotFound { id: id.to_string() })
    }

    /// Validates and durably appends one record.
    pub fn add_record(
        &self,
        dataset_id: &str,
        record: DatasetRecord,
        mode: IngestMode,
    ) -> Result<RecordAdded, WorkbenchError> {
        let mut datasets = self.datasets.lock();
        let entry = datasets
            .get_mut(dataset_id)
            .ok_or_else(|| Self::not_found(dataset_id))?;
        let mut staged = entry.dataset.clone();
        let warnings = staged.add_record(record, mode, &self.vocab)?;
        let added = staged.records().last().expect("record was added").clone();
        self.store.append(&DatasetEvent::RecordAdded {
            dataset_id: dataset_id.to_string(),
            record: added.clone(),
        })?;
        entry.dataset = staged;
        Ok(RecordAdded {
            id: added.id,
            warnings,
        })
    }

    /// Adds each record independently. Validation failures are reported per
    /// row; storage failures abort the batch.
    pub fn add_records(
        &self,
        dataset_id: &str,
        records: Vec<DatasetRecord>,
        mode: IngestMode,
    ) -> Result<ImportReport, WorkbenchError> {
        let mut report = ImportReport::default();
        for (i, record) in records.into_iter().enumerate() {
            let id = record.id.clone();
            match self.add_record(dataset_id, record, mode) {
                Ok(added) => {
                    report.accepted += 1;
                    report.warnings.extend(added.warnings.into_iter().map(|issue| {
                        crate::dataset::RowWarning {
                            row: i + 1,
                            id: id.clone(),
                            issue,
                        }
                    }));
                }
                Err(WorkbenchError::Dataset(reason)) => report.rejected.push(RowRejection {
                    row: i + 1,
                    id,
                    reason,
                }),
                Err(WorkbenchError::Prompt(source)) => report.rejected.push(RowRejection {
                    row: i + 1,
                    id: id.clone(),
                    reason: DatasetError::Prompt { id, source },
                }),
                Err(other) => return Err(other),
            }
        }
        Ok(report)
    }

    /// Runs `f` against the named dataset under the registry lock.
    pub fn with_dataset<R>(
        &self,
        id: &str,
        f: impl FnOnce(&Dataset) -> R,
    ) -> Result<R, WorkbenchError> {
        let datasets = self.datasets.lock();
        let entry = datasets.get(id).ok_or_else(|| Self::not_found(id))?;
        Ok(f(&entry.dataset))
    }

    /// Finds a dataset by id, or by name when exactly one dataset has it.
    pub fn resolve_dataset(&self, id_or_name: &str) -> Result<String, WorkbenchError> {
        let datasets = self.datasets.lock();
        if datasets.contains_key(id_or_name) {
            return Ok(id_or_name.to_string());
        }
        let mut named = datasets
            .iter()
            .filter(|(_, e)| e.dataset.name == id_or_name)
            .map(|(id, _)| id.clone());
        match (named.next(), named.next()) {
            (Some(id), None) => Ok(id),
            _ => Err(Self::not_found(id_or_name)),
        }
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        self.datasets
            .lock()
            .iter()
            .map(|(id, e)| DatasetSummary {
                id: id.clone(),
                name: e.dataset.name.clone(),
                created_at: e.created_at,
                records: e.dataset.len(),
            })
            .collect()
    }

    pub fn dataset(&self, id: &str) -> Result<DatasetView, WorkbenchError> {
        let datasets = self.datasets.lock();
        let e = datasets.get(id).ok_or_else(|| Self::not_found(id))?;
        Ok(DatasetView {
            id: id.to_string(),
            name: e.dataset.name.clone(),
            created_at: e.created_at,
            records: e.dataset.records().to_vec(),
        })
    }

    pub fn dataset_stats(&self, id: &str) -> Result<DatasetStats, WorkbenchError> {
        self.with_dataset(id, Dataset::stats)
    }

    /// Fine-tune JSONL with its header line.
    pub fn export(&self, id: &str, target: ExportTarget) -> Result<String, WorkbenchError> {
        let format = &self.config.format;
        let records = self.with_dataset(id, |d| match target {
            ExportTarget::Plot(p) => d.export_finetune(&p.profile(), format),
            ExportTarget::Scene => d.export_scene_finetune(format),
        })??;
        Ok(finetune_jsonl(&records, target.label(), format))
    }

    pub fn add_rating(&self, req: RatingRequest) -> Result<StoredItem, WorkbenchError> {
        let rating = LikertRating {
            item_id: req.item_id,
            rater_id: req.rater_id,
            scores: req.scores,
        };
        rating.validate()?;
        let target = self.store.get(&rating.item_id)?;
        if !matches!(target.kind, ItemKind::PlotGeneration | ItemKind::SceneGeneration) {
            return Err(WorkbenchError::NotRatable {
                id: target.id,
                kind: target.kind,
            });
        }
        Ok(self.store.append(&rating)?)
    }

    pub fn ratings(&self, kind: Option<ItemKind>, item_id: Option<&str>) -> Result<Vec<LikertRating>, WorkbenchError> {
        let mut out = Vec::new();
        for item in self.store.all(ItemKind::Rating) {
            let rating: LikertRating = item.payload_as()?;
            if item_id.is_some_and(|id| id != rating.item_id) {
                continue;
            }
            if let Some(kind) = kind {
                let rated = self.store.get(&rating.item_id).map(|i| i.kind);
                if rated.ok() != Some(kind) {
                    continue;
                }
            }
            out.push(rating);
        }
        Ok(out)
    }

    /// Summary over ratings matching the filters, computed on each call.
    pub fn rating_summary(&self, kind: Option<ItemKind>, item_id: Option<&str>) -> Result<LikertSummary, WorkbenchError> {
        Ok(likert_summary(&self.ratings(kind, item_id)?)?)
    }

    pub fn get(&self, id: &str) -> Result<StoredItem, WorkbenchError> {
        Ok(self.store.get(id)?)
    }

    pub fn list(&self, kind: Option<ItemKind>, after: Option<&str>, limit: usize) -> Page {
        self.store.list(kind, after, limit)
    }
}
