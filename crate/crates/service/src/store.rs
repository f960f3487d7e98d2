//! One append-only JSON-lines event log per trial under a data directory.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use combitrial::conduct::Event;
use uuid::Uuid;

use crate::error::ServiceError;

#[derive(Debug, Clone)]
pub struct EventStore {
    dir: PathBuf,
}

impl EventStore {
    /// Opens (creating if needed) the store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = root.as_ref().join("trials");
        fs::create_dir_all(&dir)?;
        Ok(EventStore { dir })
    }

    pub fn path(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    /// Writes the initial log of a new trial. Fails if the file exists.
    pub fn create(&self, id: Uuid, events: &[Event]) -> Result<(), ServiceError> {
        let f = OpenOptions::new().write(true).create_new(true).open(self.path(id))?;
        write_lines(f, events)
    }

    pub fn append(&self, id: Uuid, events: &[Event]) -> Result<(), ServiceError> {
        if events.is_empty() {
            return Ok(());
        }
        let f = OpenOptions::new().append(true).open(self.path(id))?;
        write_lines(f, events)
    }

    pub fn load(&self, id: Uuid) -> Result<Vec<Event>, ServiceError> {
        read_log(&self.path(id))
    }

    /// Ids of every stored trial, sorted.
    pub fn ids(&self) -> Result<Vec<Uuid>, ServiceError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| Uuid::parse_str(s).ok()) {
                    ids.push(id);
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn write_lines(mut f: File, events: &[Event]) -> Result<(), ServiceError> {
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

/// Reads a log file. A torn final line from an interrupted write is dropped.
pub fn read_log(path: &Path) -> Result<Vec<Event>, ServiceError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: dropping torn final line: {e}", path.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(events)
}
