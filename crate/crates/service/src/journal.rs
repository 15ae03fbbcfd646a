//! Append-only JSONL event log, one file per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pbo_core::model::Hyperparameters;
use pbo_core::{Point, Query};
use serde::{Deserialize, Serialize};

use crate::engine::{Incumbent, SessionConfig};
use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    Created {
        session_id: String,
        config: SessionConfig,
        ts: f64,
    },
    QueryIssued {
        revision: u64,
        query: Query,
        hyper: Hyperparameters,
        incumbent: Incumbent,
        ts: f64,
    },
    ResponseAccepted {
        revision: u64,
        choice: usize,
        ts: f64,
    },
    RecommendationServed {
        revision: u64,
        point: Point,
        mean: f64,
        ts: f64,
    },
    Closed {
        revision: u64,
        ts: f64,
    },
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn journal_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

#[derive(Debug)]
pub struct Journal {
    file: File,
}

impl Journal {
    pub fn create(dir: &Path, session_id: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(journal_path(dir, session_id))?;
        Ok(Self { file })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            file: OpenOptions::new().append(true).open(path)?,
        })
    }

    /// Appends events and syncs them to disk before returning.
    pub fn append(&mut self, events: &[JournalEvent]) -> Result<()> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(|e| ServiceError::Journal(e.to_string()))?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads a journal. A trailing partial line (torn write) is dropped; any
/// other malformed line is an error.
pub fn read_events(path: &Path) -> Result<Vec<JournalEvent>> {
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(ServiceError::Journal(format!(
                    "{}:{}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pbo_core::acquisition::{AcquisitionKind, AcquisitionSpec};
    use pbo_core::Domain;

    #[test]
    fn round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let mut j = Journal::create(dir.path(), "s1").unwrap();
        let cfg = SessionConfig::new(Domain::unit_cube(2), AcquisitionSpec::new(AcquisitionKind::Qeubo, 2), 1);
        let events = vec![
            JournalEvent::Created {
                session_id: "s1".into(),
                config: cfg,
                ts: 1.0,
            },
            JournalEvent::ResponseAccepted {
                revision: 0,
                choice: 1,
                ts: 2.0,
            },
        ];
        j.append(&events).unwrap();
        let path = journal_path(dir.path(), "s1");
        assert_eq!(read_events(&path).unwrap(), events);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with(r#"{"event":"response_accepted""#));

        std::fs::write(&path, format!("{text}{{\"event\":\"clo")).unwrap();
        assert_eq!(read_events(&path).unwrap(), events);
        std::fs::write(&path, format!("garbage\n{text}")).unwrap();
        assert!(read_events(&path).is_err());
        assert!(Journal::create(dir.path(), "s1").is_err());
    }
}
