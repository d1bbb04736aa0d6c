//! Append-only JSONL transcript store: one transcript per line, UTF-8,
//! written by a single writer. Loading is tolerant of a truncated tail (a
//! crashed run must still resume) but reports every corrupt line.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::Transcript;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
}

/// A line that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptLine {
    pub line: usize,
    pub reason: String,
}

/// Everything recovered from a store file: transcripts in canonical key
/// order plus any lines that could not be parsed.
#[derive(Debug, Default)]
pub struct StoreContents {
    pub transcripts: Vec<Transcript>,
    pub corrupt: Vec<CorruptLine>,
}

#[derive(Debug, Clone)]
pub struct TranscriptStore {
    path: PathBuf,
}

impl TranscriptStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TranscriptStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn exists(&self) -> bool {
        self.path.exists()
    }

    /// Append one transcript as a single JSON line.
    pub fn append(&self, transcript: &Transcript) -> Result<(), StoreError> {
        let io_err = |source| StoreError::Io { path: self.path.clone(), source };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        let line = serde_json::to_string(transcript)
            .expect("transcripts always serialize to JSON");
        writeln!(file, "{line}").map_err(io_err)?;
        Ok(())
    }

    /// Load every parseable record, sorted canonically by key. Duplicate
    /// keys keep the first occurrence; later ones are reported as corrupt.
    pub fn load(&self) -> Result<StoreContents, StoreError> {
        let raw = std::fs::read_to_string(&self.path)
            .map_err(|source| StoreError::Io { path: self.path.clone(), source })?;
        let mut contents = StoreContents::default();
        let mut seen = std::collections::BTreeSet::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Transcript>(line) {
                Ok(t) => {
                    if seen.insert(t.key.clone()) {
                        contents.transcripts.push(t);
                    } else {
                        contents.corrupt.push(CorruptLine {
                            line: idx + 1,
                            reason: format!("duplicate key {}", t.key),
                        });
                    }
                }
                Err(e) => contents.corrupt.push(CorruptLine {
                    line: idx + 1,
                    reason: e.to_string(),
                }),
            }
        }
        contents.transcripts.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(contents)
    }

    /// Like [`load`](Self::load) but any corrupt line is an error. Prior
    /// lines stay recoverable through the error-free `load`.
    pub fn load_strict(&self) -> Result<Vec<Transcript>, StoreError> {
        let contents = self.load()?;
        if let Some(bad) = contents.corrupt.first() {
            return Err(StoreError::CorruptRecord {
                line: bad.line,
                reason: bad.reason.clone(),
            });
        }
        Ok(contents.transcripts)
    }
}

/// Canonical serialized form of a set of transcripts: sorted by key, one
/// JSON line each. Two stores hold the same data iff their canonical bytes
/// are equal.
pub fn canonical_jsonl(transcripts: &[Transcript]) -> String {
    let mut sorted: Vec<&Transcript> = transcripts.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let mut out = String::new();
    for t in sorted {
        out.push_str(&serde_json::to_string(t).expect("transcripts always serialize"));
        out.push('\n');
    }
    out
}
