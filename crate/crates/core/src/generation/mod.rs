//! Plot and scene generation through a pluggable completion backend.

mod live;
mod mock;

pub use live::{LiveBackend, LiveSettings};

/// Environment variables read for the live backend.
pub mod live_env {
    pub const URL: &str = "KUROSAWA_BACKEND_URL";
    pub const TOKEN: &str = "KUROSAWA_BACKEND_TOKEN";
    pub const MODEL: &str = "KUROSAWA_MODEL_REF";
}
pub use mock::{MockBank, MockBankError, MockBackend, MockFixture};

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plot::{
    build_prompt, parse_acts, strip_act_tags, validate_annotated_plot, FinetuneFormat,
    GenerationProfile, ProfileId, PromptError, DEFAULT_STOP, PLOT_WORDS, SHORT_STORYLINE_WORDS,
};
use crate::report::{Issue, ValidationReport};
use crate::screenplay::{decode_tagged, DecodeMode};
use crate::text::{word_count, Genre, PlotActs, Scene};

/// Word band for a generated scene.
pub const SCENE_WORDS: (usize, usize) = (200, 500);
/// Context window assumed when a backend does not state its own.
pub const DEFAULT_CONTEXT_LIMIT: usize = 2048;
pub const DEFAULT_CHARS_PER_TOKEN: usize = 4;

/// Sampling values used to fine-tune and query the plot and scene models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDefaults {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

pub const SAMPLING_DEFAULTS: SamplingDefaults = SamplingDefaults {
    temperature: 0.7,
    top_p: 1.0,
    frequency_penalty: 0.1,
    presence_penalty: 0.1,
    max_tokens: 900,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub model_ref: String,
    /// Selects among canned completions on the mock backend; passed through
    /// to live backends that accept it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let d = SAMPLING_DEFAULTS;
        Self {
            temperature: d.temperature,
            top_p: d.top_p,
            frequency_penalty: d.frequency_penalty,
            presence_penalty: d.presence_penalty,
            max_tokens: d.max_tokens,
            stop: vec![DEFAULT_STOP.to_string()],
            model_ref: String::new(),
            seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |reason: &str| {
            Err(GenerationError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be a finite value >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must be in (0, 1]");
        }
        if !(self.frequency_penalty.is_finite() && self.presence_penalty.is_finite()) {
            return bad("penalties must be finite");
        }
        if self.max_tokens < 1 {
            return bad("max_tokens must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Plot,
    Scene,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Plot => "plot",
            Task::Scene => "scene",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_logprobs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    #[default]
    Unknown,
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub config: &'a GenerationConfig,
    pub task: Task,
    pub want_logprobs: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendOutput {
    pub text: String,
    pub token_logprobs: Option<Vec<f64>>,
    pub finish_reason: FinishReason,
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {cause}")]
    Unavailable { cause: String },
    #[error("backend rejected the request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("backend timed out")]
    Timeout,
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, BackendError::Rejected { .. })
    }
}

/// A text-completion provider. Implementations must be shareable across
/// threads; calls are blocking.
pub trait CompletionBackend: Send + Sync {
    fn identity(&self) -> String;
    fn capabilities(&self) -> Capabilities;
    fn context_limit(&self) -> usize {
        DEFAULT_CONTEXT_LIMIT
    }
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendOutput, BackendError>;
    fn is_reachable(&self) -> bool {
        true
    }
}

impl fmt::Debug for dyn CompletionBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CompletionBackend({})", self.identity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code")]
pub enum GenerationError {
    #[error("prompt needs about {estimated} tokens with the completion budget, limit is {limit}")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("backend unavailable: {cause}")]
    BackendUnavailable { cause: String },
    #[error("backend rejected the request ({status}): {message}")]
    BackendRejected { status: u16, message: String },
    #[error("backend timed out")]
    Timeout,
    #[error("invalid generation config: {reason}")]
    InvalidConfig { reason: String },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error(transparent)]
    #[serde(untagged)]
    Prompt(PromptError),
}

impl From<BackendError> for GenerationError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unavailable { cause } => GenerationError::BackendUnavailable { cause },
            BackendError::Rejected { status, message } => {
                GenerationError::BackendRejected { status, message }
            }
            BackendError::Timeout => GenerationError::Timeout,
        }
    }
}

impl From<PromptError> for GenerationError {
    fn from(e: PromptError) -> Self {
        GenerationError::Prompt(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    pub backend_id: String,
    pub elapsed_ms: u64,
    pub finish_reason: FinishReason,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotGeneration {
    pub profile: ProfileId,
    pub storyline: String,
    pub genres: Vec<Genre>,
    pub prompt: String,
    pub raw: GenerationResult,
    pub acts: Option<PlotActs>,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeneration {
    pub description: String,
    pub prompt: String,
    pub raw: GenerationResult,
    pub scene: Scene,
    pub report: ValidationReport,
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

#[derive(Clone)]
pub struct Generator {
    backend: Arc<dyn CompletionBackend>,
    pub retry: RetryPolicy,
    pub chars_per_token: usize,
    /// Overrides the backend's own context limit.
    pub context_limit: Option<usize>,
    pub format: FinetuneFormat,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("backend", &self.backend.identity())
            .field("retry", &self.retry)
            .field("context_limit", &self.limit())
            .finish()
    }
}

impl Generator {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
            context_limit: None,
            format: FinetuneFormat::default(),
        }
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    pub fn limit(&self) -> usize {
        self.context_limit.unwrap_or_else(|| self.backend.context_limit())
    }

    pub fn estimate_tokens(&self, prompt: &str) -> usize {
        prompt.chars().count().div_ceil(self.chars_per_token.max(1))
    }

    /// One completion with the context check, bounded retry on transport
    /// failures and stop-sequence truncation.
    pub fn complete(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        task: Task,
    ) -> Result<GenerationResult, GenerationError> {
        if prompt.trim().is_empty() {
            return Err(GenerationError::EmptyPrompt);
        }
        config.validate()?;
        let limit = self.limit();
        let estimated = self.estimate_tokens(prompt) + config.max_tokens as usize;
        if estimated > limit {
            return Err(GenerationError::ContextOverflow { estimated, limit });
        }

        let request = CompletionRequest {
            prompt,
            config,
            task,
            want_logprobs: self.backend.capabilities().supports_logprobs,
        };
        let started = Instant::now();
        let mut attempt = 0;
        let output = loop {
            attempt += 1;
            match self.backend.complete(&request) {
                Ok(out) => break out,
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    tracing::warn!(attempt, error = %e, "retrying completion");
                    std::thread::sleep(self.retry.base_backoff * 2u32.pow(attempt - 1));
                }
                Err(e) => return Err(e.into()),
            }
        };
        let text = truncate_at_stop(&output.text, &config.stop).to_string();
        Ok(GenerationResult {
            text,
            token_logprobs: output.token_logprobs,
            backend_id: self.backend.identity(),
            elapsed_ms: output
                .elapsed_ms
                .unwrap_or_else(|| started.elapsed().as_millis() as u64),
            finish_reason: output.finish_reason,
            attempts: attempt,
        })
    }

    pub fn generate_plot(
        &self,
        storyline: &str,
        genres: &[Genre],
        profile: &GenerationProfile,
        config: &GenerationConfig,
    ) -> Result<PlotGeneration, GenerationError> {
        let built = build_prompt(storyline, genres, profile, &self.format)?;
        let raw = self.complete(&built.text, config, Task::Plot)?;

        let (acts, mut report) = if profile.annotated_output {
            (parse_acts(&raw.text).ok(), validate_annotated_plot(&raw.text))
        } else {
            let mut r = ValidationReport::default();
            r.warn_opt(Issue::length_out_of_range(
                word_count(&strip_act_tags(&raw.text)),
                PLOT_WORDS,
            ));
            (None, r)
        };
        report.warnings.splice(0..0, built.warnings);
        if raw.finish_reason == FinishReason::Length {
            report.warn(Issue::MaxTokensReached {
                max_tokens: config.max_tokens,
            });
        }
        Ok(PlotGeneration {
            profile: profile.id,
            storyline: storyline.trim().to_string(),
            genres: genres.to_vec(),
            prompt: built.text,
            raw,
            acts,
            report,
        })
    }

    pub fn generate_scene(
        &self,
        description: &str,
        config: &GenerationConfig,
    ) -> Result<SceneGeneration, GenerationError> {
        let description = description.trim();
        if description.is_empty() {
            return Err(GenerationError::EmptyPrompt);
        }
        let prompt = format!("{description}{}", self.format.separator);
        let raw = self.complete(&prompt, config, Task::Scene)?;

        let mut report = ValidationReport::default();
        report.warn_opt(Issue::length_violation(
            "description",
            word_count(description),
            SHORT_STORYLINE_WORDS,
        ));
        let scene = match decode_tagged(&raw.text, DecodeMode::Lenient) {
            Ok(decoded) => {
                report.warnings.extend(decoded.warnings.into_iter().map(Issue::from));
                report.warn_opt(Issue::length_out_of_range(
                    decoded.scene.word_count(),
                    SCENE_WORDS,
                ));
                decoded.scene
            }
            Err(e) => {
                report.error(e);
                Scene::default()
            }
        };
        if raw.finish_reason == FinishReason::Length {
            report.warn(Issue::MaxTokensReached {
                max_tokens: config.max_tokens,
            });
        }
        let scene = Scene {
            description: Some(description.to_string()),
            ..scene
        };
        Ok(SceneGeneration {
            description: description.to_string(),
            prompt,
            raw,
            scene,
            report,
        })
    }
}
