use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    BackendError, BackendOutput, Capabilities, CompletionBackend, CompletionRequest,
    FinishReason, DEFAULT_CONTEXT_LIMIT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveSettings {
    /// Full URL of the completions endpoint.
    pub url: String,
    #[serde(skip_serializing)]
    pub token: Option<String>,
    pub model_ref: String,
    pub timeout_secs: u64,
    pub context_limit: usize,
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self {
            url: String::new(),
            token: None,
            model_ref: String::new(),
            timeout_secs: 60,
            context_limit: DEFAULT_CONTEXT_LIMIT,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
    max_tokens: u32,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
}

/// HTTP client for a hosted completions endpoint that accepts
/// `{model, prompt, temperature, top_p, ..., stop, logprobs}` and answers
/// with `choices[0].text`.
#[derive(Debug, Clone)]
pub struct LiveBackend {
    settings: LiveSettings,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(settings: LiveSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { settings, agent }
    }

    pub fn settings(&self) -> &LiveSettings {
        &self.settings
    }
}

fn transport_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        other => BackendError::Unavailable {
            cause: other.to_string(),
        },
    }
}

impl CompletionBackend for LiveBackend {
    fn identity(&self) -> String {
        format!("live:{}", self.settings.model_ref)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_logprobs: true,
        }
    }

    fn context_limit(&self) -> usize {
        self.settings.context_limit
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendOutput, BackendError> {
        let config = request.config;
        let model = if config.model_ref.is_empty() {
            &self.settings.model_ref
        } else {
            &config.model_ref
        };
        let body = WireRequest {
            model,
            prompt: request.prompt,
            temperature: config.temperature,
            top_p: config.top_p,
            frequency_penalty: config.frequency_penalty,
            presence_penalty: config.presence_penalty,
            max_tokens: config.max_tokens,
            stop: &config.stop,
            logprobs: request.want_logprobs.then_some(0),
            seed: config.seed,
        };
        let started = Instant::now();
        let mut call = self.agent.post(&self.settings.url);
        if let Some(token) = &self.settings.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = call.send_json(&body).map_err(transport_error)?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Unavailable {
                cause: format!("status {status}"),
            });
        }
        if status >= 400 {
            let message = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default();
            return Err(BackendError::Rejected { status, message });
        }
        let wire: WireResponse = response.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Rejected {
                status,
                message: format!("unreadable response: {other}"),
            },
        })?;
        let choice = wire.choices.into_iter().next().ok_or(BackendError::Rejected {
            status,
            message: "response has no choices".into(),
        })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Unknown,
        };
        let token_logprobs = choice
            .logprobs
            .map(|l| l.token_logprobs.into_iter().flatten().collect::<Vec<f64>>())
            .filter(|v| !v.is_empty());
        Ok(BackendOutput {
            text: choice.text,
            token_logprobs,
            finish_reason,
            elapsed_ms: Some(started.elapsed().as_millis() as u64),
        })
    }

    /// Any HTTP answer from the endpoint's host counts as reachable.
    fn is_reachable(&self) -> bool {
        if self.settings.url.is_empty() {
            return false;
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(2)))
            .http_status_as_error(false)
            .build()
            .into();
        agent.get(&self.settings.url).call().is_ok()
    }
}
