//! Rated example catalogue. The file is an append-only JSONL log; loading
//! folds it into a snapshot in which the latest line for an id wins.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "DO")]
    Do,
    #[serde(rename = "DONT")]
    Dont,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Do => "DO",
            Verdict::Dont => "DONT",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        match s.to_ascii_uppercase().as_str() {
            "DO" => Some(Verdict::Do),
            "DONT" | "DON'T" => Some(Verdict::Dont),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogueEntry {
    pub id: String,
    pub prompt: String,
    /// Canonical DSL, or the raw reply when `unparseable`.
    pub spec_text: String,
    /// S in [0, 1].
    pub score: Option<f64>,
    /// Comments, one per line, oldest first.
    pub user_feedback: String,
    pub verdict: Verdict,
    pub created_at: String,
    pub model_id: String,
    #[serde(default)]
    pub unparseable: bool,
    /// Last 1–5 rating, if the verdict came from one.
    #[serde(default)]
    pub rating: Option<u8>,
    /// Prompt template that produced the spec.
    #[serde(default)]
    pub template: Option<String>,
}

impl CatalogueEntry {
    pub fn new(
        prompt: impl Into<String>,
        spec_text: impl Into<String>,
        verdict: Verdict,
        model_id: impl Into<String>,
    ) -> CatalogueEntry {
        CatalogueEntry {
            id: uuid::Uuid::new_v4().to_string(),
            prompt: prompt.into(),
            spec_text: spec_text.into(),
            score: None,
            user_feedback: String::new(),
            verdict,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            model_id: model_id.into(),
            unparseable: false,
            rating: None,
            template: None,
        }
    }
}

/// A 1–5 star rating or a direct verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rating {
    Stars(u8),
    Verdict(Verdict),
}

/// Score multiplier for a 3-star (lukewarm) rating.
pub const LUKEWARM_PENALTY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CatalogueError {
    #[error("unknown catalogue entry {0}")]
    UnknownEntry(String),
    #[error("rating must be 1-5, got {0}")]
    BadRating(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Apply a rating and comment to an entry, returning the new version.
pub fn apply_rating(entry: &CatalogueEntry, rating: Rating, comment: &str) -> Result<CatalogueEntry, CatalogueError> {
    let mut e = entry.clone();
    match rating {
        Rating::Stars(s) if !(1..=5).contains(&s) => return Err(CatalogueError::BadRating(s)),
        Rating::Stars(s) => {
            e.rating = Some(s);
            e.verdict = if s <= 2 { Verdict::Dont } else { Verdict::Do };
            if s == 3 {
                e.score = e.score.map(|v| v * LUKEWARM_PENALTY);
            }
        }
        Rating::Verdict(v) => e.verdict = v,
    }
    let comment = comment.trim();
    if !comment.is_empty() {
        if !e.user_feedback.is_empty() {
            e.user_feedback.push('\n');
        }
        e.user_feedback.push_str(comment);
    }
    Ok(e)
}

#[derive(Debug, Default)]
struct Snapshot {
    /// Latest version of each entry, in order of first appearance.
    entries: Vec<CatalogueEntry>,
    index: HashMap<String, usize>,
}

impl Snapshot {
    fn upsert(&mut self, e: CatalogueEntry) {
        match self.index.get(&e.id) {
            Some(&i) => self.entries[i] = e,
            None => {
                self.index.insert(e.id.clone(), self.entries.len());
                self.entries.push(e);
            }
        }
    }
}

/// Lines skipped while loading: (1-based line number, reason).
pub type Skipped = Vec<(usize, String)>;

/// Catalogue store: concurrent readers, one writer at a time.
#[derive(Debug)]
pub struct Catalogue {
    path: Option<PathBuf>,
    snap: RwLock<Snapshot>,
    writer: Mutex<Option<File>>,
}

impl Catalogue {
    /// A catalogue that lives only in memory.
    pub fn in_memory() -> Catalogue {
        Catalogue {
            path: None,
            snap: RwLock::new(Snapshot::default()),
            writer: Mutex::new(None),
        }
    }

    /// Open (creating if missing) a JSONL catalogue. Unreadable lines are
    /// skipped with a warning and reported.
    pub fn open(path: &Path) -> io::Result<(Catalogue, Skipped)> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
        let mut snap = Snapshot::default();
        let mut skipped = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("catalogue {}: line {}: {e}", path.display(), i + 1);
                    skipped.push((i + 1, e.to_string()));
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CatalogueEntry>(&line) {
                Ok(e) => snap.upsert(e),
                Err(e) => {
                    log::warn!("catalogue {}: skipping line {}: {e}", path.display(), i + 1);
                    skipped.push((i + 1, e.to_string()));
                }
            }
        }
        let cat = Catalogue {
            path: Some(path.to_path_buf()),
            snap: RwLock::new(snap),
            writer: Mutex::new(Some(file)),
        };
        Ok((cat, skipped))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Snapshot of the latest version of every entry.
    pub fn entries(&self) -> Vec<CatalogueEntry> {
        self.snap.read().expect("catalogue lock").entries.clone()
    }

    pub fn get(&self, id: &str) -> Option<CatalogueEntry> {
        let s = self.snap.read().expect("catalogue lock");
        s.index.get(id).map(|&i| s.entries[i].clone())
    }

    pub fn len(&self) -> usize {
        self.snap.read().expect("catalogue lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Append one version of an entry. The line is written with a single
    /// write to an append-mode file and synced before the snapshot changes.
    pub fn append(&self, entry: CatalogueEntry) -> io::Result<CatalogueEntry> {
        let mut w = self.writer.lock().expect("catalogue writer");
        if let Some(f) = w.as_mut() {
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.snap.write().expect("catalogue lock").upsert(entry.clone());
        Ok(entry)
    }

    /// Rate an existing entry; prior versions stay in the log.
    pub fn record_feedback(&self, id: &str, rating: Rating, comment: &str) -> Result<CatalogueEntry, CatalogueError> {
        // Hold the writer lock across read-modify-append so concurrent
        // feedback on one entry is serialised.
        let mut w = self.writer.lock().expect("catalogue writer");
        let current = self.get(id).ok_or_else(|| CatalogueError::UnknownEntry(id.to_string()))?;
        let updated = apply_rating(&current, rating, comment)?;
        if let Some(f) = w.as_mut() {
            let mut line = serde_json::to_vec(&updated).map_err(io::Error::from)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.snap.write().expect("catalogue lock").upsert(updated.clone());
        Ok(updated)
    }

    /// Entries with the given verdict, in catalogue order.
    pub fn page(&self, verdict: Option<Verdict>, offset: usize, limit: usize) -> Vec<CatalogueEntry> {
        self.entries()
            .into_iter()
            .filter(|e| verdict.map_or(true, |v| e.verdict == v))
            .skip(offset)
            .take(limit)
            .collect()
    }
}
