//! Append-only JSON-lines item log, one file per item kind.
//!
//! Every append is written as a single line and `fsync`ed before it is
//! acknowledged. At open, a torn final line (no trailing newline) left by a
//! crash mid-write is cut off; any other unreadable line is reported as
//! corruption.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use ulid::Ulid;

use crate::dataset::DatasetEvent;
use crate::generation::{PlotGeneration, SceneGeneration};
use crate::metrics::LikertRating;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    PlotGeneration,
    SceneGeneration,
    Dataset,
    Rating,
}

impl ItemKind {
    pub const ALL: [ItemKind; 4] = [
        ItemKind::PlotGeneration,
        ItemKind::SceneGeneration,
        ItemKind::Dataset,
        ItemKind::Rating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::PlotGeneration => "plot_generation",
            ItemKind::SceneGeneration => "scene_generation",
            ItemKind::Dataset => "dataset",
            ItemKind::Rating => "rating",
        }
    }

    pub fn parse(s: &str) -> Option<ItemKind> {
        ItemKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredItem {
    pub id: String,
    pub kind: ItemKind,
    pub payload: Value,
    pub created_at: DateTime<Utc>,
    pub schema_version: u32,
}

impl StoredItem {
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| StoreError::InvalidPayload {
            kind: self.kind,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page {
    pub items: Vec<StoredItem>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum StoreError {
    #[error("no space left while appending to the {kind} log")]
    StorageFull { kind: ItemKind },
    #[error("{kind} log line {line_no} is unreadable: {message}")]
    CorruptRecord {
        kind: ItemKind,
        line_no: usize,
        message: String,
    },
    #[error("no item with id `{id}`")]
    NotFound { id: String },
    #[error("payload is not a valid {kind}: {message}")]
    InvalidPayload { kind: ItemKind, message: String },
    #[error("storage error: {message}")]
    Io { message: String },
}

fn io_error(e: std::io::Error) -> StoreError {
    StoreError::Io {
        message: e.to_string(),
    }
}

/// Typed payloads accepted by the store.
pub trait ItemPayload: Serialize + DeserializeOwned {
    const KIND: ItemKind;

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl ItemPayload for PlotGeneration {
    const KIND: ItemKind = ItemKind::PlotGeneration;
}

impl ItemPayload for SceneGeneration {
    const KIND: ItemKind = ItemKind::SceneGeneration;
}

impl ItemPayload for DatasetEvent {
    const KIND: ItemKind = ItemKind::Dataset;
}

impl ItemPayload for LikertRating {
    const KIND: ItemKind = ItemKind::Rating;

    fn check(&self) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())
    }
}

fn check_as<T: ItemPayload>(payload: &Value) -> Result<(), String> {
    T::deserialize(payload)
        .map_err(|e| e.to_string())
        .and_then(|v| v.check())
}

/// Validates an untyped payload against its kind's schema.
pub fn validate_payload(kind: ItemKind, payload: &Value) -> Result<(), StoreError> {
    let result = match kind {
        ItemKind::PlotGeneration => check_as::<PlotGeneration>(payload),
        ItemKind::SceneGeneration => check_as::<SceneGeneration>(payload),
        ItemKind::Dataset => check_as::<DatasetEvent>(payload),
        ItemKind::Rating => check_as::<LikertRating>(payload),
    };
    result.map_err(|message| StoreError::InvalidPayload { kind, message })
}

struct KindLog {
    file: File,
    len: u64,
}

pub struct Store {
    dir: PathBuf,
    logs: HashMap<ItemKind, Mutex<KindLog>>,
    index: RwLock<BTreeMap<String, StoredItem>>,
    last_id: Mutex<Ulid>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .field("items", &self.index.read().len())
            .finish()
    }
}

/// Reads a log, cutting off a torn tail. Returns the items and the length
/// of the intact prefix.
fn scan_log(kind: ItemKind, file: &mut File) -> Result<(Vec<StoredItem>, u64), StoreError> {
    let mut bytes = Vec::new();
    file.seek(SeekFrom::Start(0)).map_err(io_error)?;
    file.read_to_end(&mut bytes).map_err(io_error)?;
    let intact = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    if intact < bytes.len() {
        tracing::warn!(%kind, dropped = bytes.len() - intact, "truncating torn log tail");
        file.set_len(intact as u64).map_err(io_error)?;
        file.sync_data().map_err(io_error)?;
    }
    let mut items = Vec::new();
    for (i, line) in bytes[..intact].split(|b| *b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let corrupt = |message: String| StoreError::CorruptRecord {
            kind,
            line_no: i + 1,
            message,
        };
        let item: StoredItem =
            serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
        if item.kind != kind {
            return Err(corrupt(format!("item of kind {} in the {kind} log", item.kind)));
        }
        Ulid::from_string(&item.id).map_err(|e| corrupt(format!("bad id: {e}")))?;
        validate_payload(kind, &item.payload).map_err(|e| corrupt(e.to_string()))?;
        items.push(item);
    }
    Ok((items, intact as u64))
}

impl Store {
    /// Opens or creates a store in `dir`, rebuilding the index from the logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_error)?;
        let mut logs = HashMap::new();
        let mut index = BTreeMap::new();
        let mut last = Ulid::nil();
        for kind in ItemKind::ALL {
            let mut file = OpenOptions::new()
                .read(true)
                .write(true)
                .create(true)
                .truncate(false)
                .open(dir.join(kind.file_name()))
                .map_err(io_error)?;
            let (items, len) = scan_log(kind, &mut file)?;
            for item in items {
                let id = Ulid::from_string(&item.id).expect("checked during scan");
                last = last.max(id);
                index.insert(item.id.clone(), item);
            }
            logs.insert(kind, Mutex::new(KindLog { file, len }));
        }
        Ok(Self {
            dir,
            logs,
            index: RwLock::new(index),
            last_id: Mutex::new(last),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn next_id(last: &mut Ulid) -> Ulid {
        let fresh = Ulid::new();
        let id = if fresh > *last {
            fresh
        } else {
            last.increment().expect("ulid space not exhausted")
        };
        *last = id;
        id
    }

    pub fn append<T: ItemPayload>(&self, payload: &T) -> Result<StoredItem, StoreError> {
        let value = serde_json::to_value(payload).map_err(|e| StoreError::InvalidPayload {
            kind: T::KIND,
            message: e.to_string(),
        })?;
        self.append_value(T::KIND, value)
    }

    /// Appends and fsyncs one item. The item is visible to readers only
    /// once it is durable.
    pub fn append_value(&self, kind: ItemKind, payload: Value) -> Result<StoredItem, StoreError> {
        validate_payload(kind, &payload)?;
        let mut log = self.logs[&kind].lock();
        // Held until the item is indexed so ids become visible in order.
        let mut last = self.last_id.lock();
        let prev = *last;
        let item = StoredItem {
            id: Self::next_id(&mut last).to_string(),
            kind,
            payload,
            created_at: Utc::now(),
            schema_version: SCHEMA_VERSION,
        };
        let mut line = serde_json::to_vec(&item).map_err(|e| StoreError::InvalidPayload {
            kind,
            message: e.to_string(),
        })?;
        line.push(b'\n');

        let log = &mut *log;
        let start = log.len;
        let written = log
            .file
            .seek(SeekFrom::Start(start))
            .and_then(|_| log.file.write_all(&line))
            .and_then(|_| log.file.sync_data());
        if let Err(e) = written {
            let _ = log.file.set_len(start);
            *last = prev;
            return Err(if e.raw_os_error() == Some(libc::ENOSPC) {
                StoreError::StorageFull { kind }
            } else {
                io_error(e)
            });
        }
        log.len += line.len() as u64;
        self.index.write().insert(item.id.clone(), item.clone());
        Ok(item)
    }

    pub fn get(&self, id: &str) -> Result<StoredItem, StoreError> {
        self.index
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound { id: id.to_string() })
    }

    /// Items in id order after the `after` cursor (exclusive).
    pub fn list(&self, kind: Option<ItemKind>, after: Option<&str>, limit: usize) -> Page {
        let limit = limit.clamp(1, MAX_PAGE_SIZE);
        let index = self.index.read();
        let range = match after {
            Some(cursor) => index.range::<str, _>((
                std::ops::Bound::Excluded(cursor),
                std::ops::Bound::Unbounded,
            )),
            None => index.range::<str, _>(..),
        };
        let mut items: Vec<StoredItem> = range
            .map(|(_, item)| item)
            .filter(|item| kind.is_none_or(|k| item.kind == k))
            .take(limit + 1)
            .cloned()
            .collect();
        let next_cursor = if items.len() > limit {
            items.truncate(limit);
            items.last().map(|i| i.id.clone())
        } else {
            None
        };
        Page { items, next_cursor }
    }

    /// Every item of `kind`, in id order.
    pub fn all(&self, kind: ItemKind) -> Vec<StoredItem> {
        self.index
            .read()
            .values()
            .filter(|i| i.kind == kind)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.index.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.read().is_empty()
    }
}
