//! Prior and session store.
//!
//! One file, JSON lines. The first line is a header with the format version;
//! every following line is one operation:
//!
//! ```text
//! {"store":"decisim","version":1}
//! {"op":"prior","row":{...PriorRecord}}
//! {"op":"session","row":{...SessionRecord}}
//! {"op":"feedback","id":"<record id>","feedback":{"rating":5,"text":"..."}}
//! ```
//!
//! A write is acknowledged after its full line is fsynced, so a line without
//! a trailing newline was never acknowledged and is dropped at open. Tables
//! and the tag index are rebuilt in memory at open. Readers clone an `Arc`
//! to the current snapshot; writers serialize on one mutex and publish a new
//! snapshot after the line is durable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use decisim_core::{ComparisonReport, Distribution};
use serde::{Deserialize, Serialize};

use crate::dialog::Turn;
use crate::doc::ProblemDoc;

pub const STORE_VERSION: u32 = 1;
const BUILTIN_PRIORS: &str = include_str!("../../data/priors/vehicle.jsonl");

/// How a prior combines with a user-supplied point value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorAnchor {
    /// The distribution is used as is.
    #[default]
    Absolute,
    /// The distribution is a deviation added to the user's point value.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorRecord {
    pub id: String,
    pub context_tags: BTreeSet<String>,
    pub parameter_name: String,
    pub distribution: Distribution,
    #[serde(default)]
    pub anchor: PriorAnchor,
    pub source: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub sample_count: usize,
    #[serde(default)]
    pub sensitivity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    /// `<session id>.<run number>`
    pub id: String,
    pub session_id: String,
    pub created_at: u64,
    #[serde(default)]
    pub template_id: Option<String>,
    pub problem: ProblemDoc,
    pub objective: String,
    pub simulation: SimulationConfig,
    pub report: ComparisonReport,
    #[serde(default)]
    pub transcript: Vec<Turn>,
    #[serde(default)]
    pub feedback: Option<Feedback>,
}

#[derive(Debug, thiserror::Error)]
pub enum WarehouseError {
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("store is corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

impl From<io::Error> for WarehouseError {
    fn from(e: io::Error) -> Self {
        WarehouseError::StoreUnavailable(e.to_string())
    }
}

/// Read access to priors, as needed by problem building.
pub trait PriorSource {
    /// Records for `parameter` sharing at least one tag with `tags`, best first.
    fn query_priors(&self, tags: &BTreeSet<String>, parameter: &str) -> Result<Vec<PriorRecord>, WarehouseError>;
}

/// No priors at all.
pub struct NoPriors;

impl PriorSource for NoPriors {
    fn query_priors(&self, _: &BTreeSet<String>, _: &str) -> Result<Vec<PriorRecord>, WarehouseError> {
        Ok(Vec::new())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    store: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogEntry {
    Prior { row: PriorRecord },
    Session { row: Box<SessionRecord> },
    Feedback { id: String, feedback: Feedback },
}

/// Export / import line.
#[derive(Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case", deny_unknown_fields)]
enum ExportLine {
    Priors { row: PriorRecord },
    Sessions { row: Box<SessionRecord> },
}

#[derive(Debug, Clone, Default)]
struct Tables {
    priors: BTreeMap<String, PriorRecord>,
    by_parameter: BTreeMap<String, BTreeSet<String>>,
    sessions: BTreeMap<String, Arc<SessionRecord>>,
}

impl Tables {
    fn apply(&mut self, entry: LogEntry) -> Result<(), WarehouseError> {
        match entry {
            LogEntry::Prior { row } => {
                self.by_parameter
                    .entry(row.parameter_name.clone())
                    .or_default()
                    .insert(row.id.clone());
                self.priors.insert(row.id.clone(), row);
            }
            LogEntry::Session { row } => {
                self.sessions.insert(row.id.clone(), Arc::new(*row));
            }
            LogEntry::Feedback { id, feedback } => {
                let rec = self.sessions.get_mut(&id).ok_or_else(|| WarehouseError::UnknownId(id.clone()))?;
                Arc::make_mut(rec).feedback = Some(feedback);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImportSummary {
    pub priors_added: usize,
    pub sessions_added: usize,
    pub unchanged: usize,
}

pub struct Store {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    snapshot: RwLock<Arc<Tables>>,
}

fn validate_prior(r: &PriorRecord) -> Result<(), WarehouseError> {
    let bad = |m: &str| Err(WarehouseError::InvalidRecord(format!("prior `{}`: {m}", r.id)));
    if r.id.is_empty() {
        return bad("empty id");
    }
    if r.context_tags.is_empty() {
        return bad("context_tags must not be empty");
    }
    if r.parameter_name.is_empty() {
        return bad("empty parameter_name");
    }
    if let Err(issue) = r.distribution.check() {
        return bad(issue.code());
    }
    Ok(())
}

fn validate_feedback(f: &Feedback) -> Result<(), WarehouseError> {
    match f.rating {
        Some(r) if !(1..=5).contains(&r) => Err(WarehouseError::InvalidRecord(format!("rating {r} outside 1..=5"))),
        _ => Ok(()),
    }
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            writer: Mutex::new(None),
            snapshot: RwLock::new(Arc::new(Tables::default())),
        }
    }

    /// Open or create the store file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, WarehouseError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        // drop an unacknowledged partial tail
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            file.set_len(complete as u64)?;
            file.sync_all()?;
            bytes.truncate(complete);
        }

        let mut tables = Tables::default();
        if bytes.is_empty() {
            let header = Header {
                store: "decisim".into(),
                version: STORE_VERSION,
            };
            let mut line = serde_json::to_vec(&header).expect("header serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_all()?;
        } else {
            let reader = BufReader::new(&bytes[..]);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                let corrupt = |e: serde_json::Error| WarehouseError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                };
                if i == 0 {
                    let h: Header = serde_json::from_str(&line).map_err(corrupt)?;
                    if h.version != STORE_VERSION {
                        return Err(WarehouseError::UnsupportedVersion(h.version));
                    }
                    continue;
                }
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(&line).map_err(corrupt)?;
                tables.apply(entry).map_err(|e| WarehouseError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            }
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path: Some(path),
            writer: Mutex::new(Some(file)),
            snapshot: RwLock::new(Arc::new(tables)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn snapshot(&self) -> Arc<Tables> {
        Arc::clone(&self.snapshot.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Append `entries` durably, then publish the new tables. `check` runs
    /// against the current tables under the writer lock.
    fn write(
        &self,
        check: impl FnOnce(&Tables) -> Result<Vec<LogEntry>, WarehouseError>,
    ) -> Result<Arc<Tables>, WarehouseError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        let entries = check(&current)?;
        if entries.is_empty() {
            return Ok(current);
        }
        let mut next = (*current).clone();
        let mut buf = Vec::new();
        for entry in &entries {
            serde_json::to_writer(&mut buf, entry).map_err(|e| WarehouseError::InvalidRecord(e.to_string()))?;
            buf.push(b'\n');
        }
        if let Some(file) = writer.as_mut() {
            let before = file.metadata()?.len();
            if let Err(e) = file.write_all(&buf).and_then(|_| file.sync_data()) {
                // never leave a torn line in front of later appends
                let _ = file.set_len(before);
                return Err(e.into());
            }
        }
        for entry in entries {
            next.apply(entry)?;
        }
        let next = Arc::new(next);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::clone(&next);
        Ok(next)
    }

    pub fn insert_prior(&self, record: PriorRecord) -> Result<(), WarehouseError> {
        validate_prior(&record)?;
        self.write(|t| {
            if t.priors.contains_key(&record.id) {
                return Err(WarehouseError::DuplicateId(record.id.clone()));
            }
            Ok(vec![LogEntry::Prior { row: record }])
        })?;
        Ok(())
    }

    /// Durable before return.
    pub fn record_session(&self, record: SessionRecord) -> Result<String, WarehouseError> {
        if record.feedback.as_ref().is_some_and(|f| validate_feedback(f).is_err()) {
            return Err(WarehouseError::InvalidRecord("feedback rating outside 1..=5".into()));
        }
        let id = record.id.clone();
        if id.is_empty() {
            return Err(WarehouseError::InvalidRecord("empty session record id".into()));
        }
        self.write(|t| {
            if t.sessions.contains_key(&id) {
                return Err(WarehouseError::DuplicateId(id.clone()));
            }
            Ok(vec![LogEntry::Session { row: Box::new(record) }])
        })?;
        Ok(id)
    }

    pub fn attach_feedback(&self, id: &str, feedback: Feedback) -> Result<SessionRecord, WarehouseError> {
        validate_feedback(&feedback)?;
        let tables = self.write(|t| {
            if !t.sessions.contains_key(id) {
                return Err(WarehouseError::UnknownId(id.to_string()));
            }
            Ok(vec![LogEntry::Feedback {
                id: id.to_string(),
                feedback,
            }])
        })?;
        Ok((*tables.sessions[id]).clone())
    }

    pub fn session(&self, id: &str) -> Option<SessionRecord> {
        self.snapshot().sessions.get(id).map(|r| (**r).clone())
    }

    pub fn sessions(&self) -> Vec<SessionRecord> {
        self.snapshot().sessions.values().map(|r| (**r).clone()).collect()
    }

    pub fn priors(&self) -> Vec<PriorRecord> {
        self.snapshot().priors.values().cloned().collect()
    }

    /// Ranked by tag overlap, then newest first, then id.
    pub fn query_priors(&self, tags: &BTreeSet<String>, parameter: &str) -> Vec<PriorRecord> {
        let t = self.snapshot();
        let Some(ids) = t.by_parameter.get(parameter) else {
            return Vec::new();
        };
        let mut hits: Vec<(usize, &PriorRecord)> = ids
            .iter()
            .map(|id| &t.priors[id])
            .map(|r| (r.context_tags.intersection(tags).count(), r))
            .filter(|(n, _)| *n > 0)
            .collect();
        hits.sort_by(|(na, a), (nb, b)| nb.cmp(na).then(b.created_at.cmp(&a.created_at)).then(a.id.cmp(&b.id)));
        hits.into_iter().map(|(_, r)| r.clone()).collect()
    }

    /// Priors then sessions (feedback included), one JSON object per line.
    pub fn export(&self, out: &mut dyn Write) -> Result<(), WarehouseError> {
        let t = self.snapshot();
        for row in t.priors.values() {
            serde_json::to_writer(&mut *out, &ExportLine::Priors { row: row.clone() })
                .map_err(|e| WarehouseError::StoreUnavailable(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        for row in t.sessions.values() {
            serde_json::to_writer(&mut *out, &ExportLine::Sessions { row: Box::new((**row).clone()) })
                .map_err(|e| WarehouseError::StoreUnavailable(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load an export. Rows identical to stored ones are skipped; a different
    /// row under an existing id is an error and nothing is written.
    pub fn import(&self, input: &mut dyn BufRead) -> Result<ImportSummary, WarehouseError> {
        let mut rows = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ExportLine = serde_json::from_str(&line).map_err(|e| WarehouseError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })?;
            match &row {
                ExportLine::Priors { row } => validate_prior(row)?,
                ExportLine::Sessions { row } => {
                    if let Some(f) = &row.feedback {
                        validate_feedback(f)?;
                    }
                }
            }
            rows.push(row);
        }
        let mut summary = ImportSummary::default();
        self.write(|t| {
            let mut entries = Vec::new();
            let mut seen = BTreeSet::new();
            for row in rows {
                match row {
                    ExportLine::Priors { row } => match t.priors.get(&row.id) {
                        Some(existing) if *existing == row => summary.unchanged += 1,
                        Some(_) => return Err(WarehouseError::DuplicateId(row.id)),
                        None if !seen.insert(("p", row.id.clone())) => return Err(WarehouseError::DuplicateId(row.id)),
                        None => {
                            summary.priors_added += 1;
                            entries.push(LogEntry::Prior { row });
                        }
                    },
                    ExportLine::Sessions { row } => match t.sessions.get(&row.id) {
                        Some(existing) if **existing == *row => summary.unchanged += 1,
                        Some(_) => return Err(WarehouseError::DuplicateId(row.id.clone())),
                        None if !seen.insert(("s", row.id.clone())) => {
                            return Err(WarehouseError::DuplicateId(row.id.clone()))
                        }
                        None => {
                            summary.sessions_added += 1;
                            entries.push(LogEntry::Session { row });
                        }
                    },
                }
            }
            Ok(entries)
        })?;
        Ok(summary)
    }
}

impl PriorSource for Store {
    fn query_priors(&self, tags: &BTreeSet<String>, parameter: &str) -> Result<Vec<PriorRecord>, WarehouseError> {
        Ok(Store::query_priors(self, tags, parameter))
    }
}

/// The illustrative vehicle priors shipped with the crate.
pub fn builtin_priors() -> Vec<PriorRecord> {
    BUILTIN_PRIORS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match serde_json::from_str::<ExportLine>(l).expect("built-in priors parse") {
            ExportLine::Priors { row } => row,
            ExportLine::Sessions { .. } => panic!("built-in priors file holds only priors"),
        })
        .collect()
}

/// Contents of the built-in priors file, in export format.
pub fn builtin_priors_jsonl() -> &'static str {
    BUILTIN_PRIORS
}
