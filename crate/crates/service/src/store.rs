//! On-disk layout:
//!
//! ```text
//! <root>/registry.json         surveys, their status and arm counts
//! <root>/sessions/<id>.jsonl   session header line, then accepted events
//! ```
//!
//! Session files are append-only. The registry is replaced atomically by
//! rename. On restart session files are authoritative: arm counts are
//! recomputed from them.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use qs_core::events::{LogError, ParseMode};
use qs_core::survey::ArmCounts;
use qs_core::{Event, SessionHeader, SessionLog, SurveyConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("registry: {0}")]
    Registry(serde_json::Error),
    #[error("session log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: LogError,
    },
    #[error("session file {0} already exists")]
    SessionExists(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    /// Stored with its pool resolved inline.
    pub config: SurveyConfig,
    pub status: SurveyStatus,
    pub arm_counts: ArmCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub surveys: Vec<RegistryEntry>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io(&sessions))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    pub fn session_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.jsonl"))
    }

    pub fn load_registry(&self) -> Result<Registry, StoreError> {
        let path = self.registry_path();
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(StoreError::Registry),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Registry::default()),
            Err(e) => Err(io(&path)(e)),
        }
    }

    /// Write-to-temp, fsync, rename.
    pub fn save_registry(&self, registry: &Registry) -> Result<(), StoreError> {
        let path = self.registry_path();
        let tmp = self.root.join("registry.json.tmp");
        let bytes = serde_json::to_vec_pretty(registry).map_err(StoreError::Registry)?;
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(&bytes).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))?;
        Ok(())
    }

    /// Creates the session file holding only the header; durable on return.
    pub fn create_session(&self, header: &SessionHeader) -> Result<(), StoreError> {
        let path = self.session_path(&header.session_id);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(StoreError::SessionExists(path)),
            Err(e) => return Err(io(&path)(e)),
        };
        let mut line = SessionLog::header_line(header);
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))?;
        Ok(())
    }

    /// Appends events in one write; durable on return.
    pub fn append_events(&self, session_id: &str, events: &[Event]) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let path = self.session_path(session_id);
        let mut buf = String::new();
        for e in events {
            buf.push_str(&e.to_line());
            buf.push('\n');
        }
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io(&path))?;
        f.write_all(buf.as_bytes()).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))?;
        Ok(())
    }

    /// Reads a session log, ignoring a trailing line without its newline
    /// (a write in progress or cut short by a crash).
    pub fn read_session(&self, session_id: &str) -> Result<SessionLog, StoreError> {
        let path = self.session_path(session_id);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let complete = &text[..text.rfind('\n').map_or(0, |i| i + 1)];
        SessionLog::parse(complete, ParseMode::Strict).map_err(|source| StoreError::Log { path, source })
    }

    /// Cuts a torn trailing line off the file. Returns the bytes removed.
    pub fn repair_session(&self, session_id: &str) -> Result<u64, StoreError> {
        let path = self.session_path(session_id);
        let text = fs::read(&path).map_err(io(&path))?;
        let keep = text.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let torn = (text.len() - keep) as u64;
        if torn > 0 {
            let f = OpenOptions::new().write(true).open(&path).map_err(io(&path))?;
            f.set_len(keep as u64).map_err(io(&path))?;
            f.sync_all().map_err(io(&path))?;
        }
        Ok(torn)
    }

    /// Ids of every stored session, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
