use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    BackendError, BackendOutput, Capabilities, CompletionBackend, CompletionRequest,
    FinishReason, Task,
};
use crate::text::word_count;

/// Appended after the first stop sequence so truncation is always exercised.
const TRAILER: &str = " [sampled past the stop sequence]";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct MockFixture {
    pub name: String,
    pub file: String,
    pub task: Task,
    /// Report codes under an annotated profile (plots) or the scene
    /// generator (scenes).
    #[serde(default)]
    pub expected: Vec<String>,
    /// Report codes under the unannotated profile; plots only.
    #[serde(default)]
    pub expected_unannotated: Vec<String>,
    #[serde(skip)]
    pub text: String,
}

#[derive(Debug, Deserialize)]
struct Index {
    fixture: Vec<MockFixture>,
}

#[derive(Debug, Error)]
pub enum MockBankError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad mock bank index: {0}")]
    Index(#[from] toml::de::Error),
    #[error("mock bank has no {0} fixtures")]
    NoFixtures(&'static str),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../fixtures/mock_bank/", $name)))),*]
    };
}

const BUILTIN_INDEX: &str = include_str!("../../fixtures/mock_bank/index.toml");
const BUILTIN_FILES: &[(&str, &str)] = builtin![
    "plot_lighthouse.txt",
    "plot_brief.txt",
    "plot_plain.txt",
    "plot_missing_two_b.txt",
    "plot_duplicate_one.txt",
    "plot_out_of_order.txt",
    "plot_empty_act.txt",
    "plot_trailing.txt",
    "scene_greenhouse.txt",
    "scene_lab.txt",
    "scene_stray.txt",
    "scene_unbalanced.txt",
    "scene_empty_element.txt",
    "scene_empty.txt",
];

/// Canned completions indexed by a small TOML manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockBank {
    fixtures: Vec<MockFixture>,
}

impl MockBank {
    pub fn builtin() -> Self {
        Self::from_index(BUILTIN_INDEX, |file| {
            BUILTIN_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| MockBankError::UnknownFixture(file.to_string()))
        })
        .expect("built-in mock bank is well formed")
    }

    /// Loads `index.toml` and the files it names from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, MockBankError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| MockBankError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let index = read(&dir.join("index.toml"))?;
        Self::from_index(&index, |file| read(&dir.join(file)))
    }

    fn from_index(
        index: &str,
        mut load: impl FnMut(&str) -> Result<String, MockBankError>,
    ) -> Result<Self, MockBankError> {
        let mut index: Index = toml::from_str(index)?;
        for f in &mut index.fixture {
            f.text = load(&f.file)?.trim_end().to_string();
        }
        for task in [Task::Plot, Task::Scene] {
            if !index.fixture.iter().any(|f| f.task == task) {
                return Err(MockBankError::NoFixtures(task.as_str()));
            }
        }
        Ok(Self {
            fixtures: index.fixture,
        })
    }

    pub fn fixtures(&self) -> &[MockFixture] {
        &self.fixtures
    }

    pub fn fixture(&self, name: &str) -> Option<&MockFixture> {
        self.fixtures.iter().find(|f| f.name == name)
    }

    fn for_task(&self, task: Task) -> Vec<&MockFixture> {
        self.fixtures.iter().filter(|f| f.task == task).collect()
    }

    /// The fixture answering `prompt` under `seed`:
    /// `sha256(prompt || 0x00 || seed_le) mod n` over the task's fixtures.
    pub fn select(&self, task: Task, prompt: &str, seed: u64) -> &MockFixture {
        let candidates = self.for_task(task);
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update([0u8]);
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        candidates[(u64::from_be_bytes(head) % candidates.len() as u64) as usize]
    }

    /// Smallest seed under which `prompt` selects the named fixture.
    pub fn seed_for(&self, prompt: &str, name: &str) -> Option<u64> {
        let task = self.fixture(name)?.task;
        (0..100_000u64).find(|s| self.select(task, prompt, *s).name == name)
    }
}

/// Deterministic backend answering from a [`MockBank`]. Reports a uniform
/// log-probability of ln(1/4) per word.
#[derive(Debug, Clone)]
pub struct MockBackend {
    bank: Arc<MockBank>,
    pinned: Option<String>,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(MockBank::builtin())
    }
}

impl MockBackend {
    pub fn new(bank: MockBank) -> Self {
        Self {
            bank: Arc::new(bank),
            pinned: None,
        }
    }

    /// Always answers with the named fixture.
    pub fn pinned(bank: MockBank, name: &str) -> Result<Self, MockBankError> {
        if bank.fixture(name).is_none() {
            return Err(MockBankError::UnknownFixture(name.to_string()));
        }
        Ok(Self {
            bank: Arc::new(bank),
            pinned: Some(name.to_string()),
        })
    }

    pub fn bank(&self) -> &MockBank {
        &self.bank
    }
}

impl CompletionBackend for MockBackend {
    fn identity(&self) -> String {
        match &self.pinned {
            Some(name) => format!("mock:{name}"),
            None => "mock".to_string(),
        }
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_logprobs: true,
        }
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendOutput, BackendError> {
        let fixture = match &self.pinned {
            Some(name) => self.bank.fixture(name).expect("pinned fixture exists"),
            None => self
                .bank
                .select(request.task, request.prompt, request.config.seed.unwrap_or(0)),
        };
        let max = request.config.max_tokens as usize;
        let words: Vec<&str> = fixture.text.split_whitespace().collect();
        let (mut text, finish_reason) = if words.len() > max {
            (words[..max].join(" "), FinishReason::Length)
        } else {
            (fixture.text.clone(), FinishReason::Stop)
        };
        if finish_reason == FinishReason::Stop {
            if let Some(stop) = request.config.stop.first() {
                text.push_str(stop);
                text.push_str(TRAILER);
            }
        }
        let n = word_count(&text).max(1);
        Ok(BackendOutput {
            token_logprobs: request
                .want_logprobs
                .then(|| vec![(0.25f64).ln(); n]),
            text,
            finish_reason,
            elapsed_ms: Some(0),
        })
    }
}
