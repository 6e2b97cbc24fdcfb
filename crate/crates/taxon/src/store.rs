//! Single-file transactional store.
//!
//! The database file is an append-only journal. Each line is one committed
//! transaction, a JSON object holding a batch of records (taxonomy, sound,
//! task or annotation). A transaction is written with a single `write_all`
//! followed by `sync_data`; on open, the journal is replayed and a torn
//! final line (no trailing newline) is cut off, so a crash mid-write loses
//! at most the transaction being written.
//!
//! All state is held in memory after replay. Mutations are validated
//! against that state before anything touches the file, and only applied
//! once the journal write has succeeded.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use taxon_core::session::{Annotation, InvalidAnnotation, Provenance, Task, TaskState};
use taxon_core::taxonomy::{Category, Taxonomy, TaxonomyError};
use taxon_core::{CategoryId, SoundResource, TaskId, Timestamp};

use crate::stats::{self, TaskStats};

/// Candidate records are committed in batches of this many lines.
const IMPORT_BATCH: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] io::Error),
    #[error("journal line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("no taxonomy has been ingested")]
    NoTaxonomy,
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("taxonomy change would orphan category {0} still referenced by stored data")]
    TaxonomyInUse(CategoryId),
    #[error("unknown sound {0}")]
    UnknownSound(String),
    #[error("unknown category {0}")]
    UnknownCategory(CategoryId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} already exists")]
    TaskExists(TaskId),
    #[error("task {0} has not been submitted")]
    TaskNotSubmitted(TaskId),
    #[error("task {0} is submitted and cannot be rewritten")]
    TaskFinalized(TaskId),
    #[error("invalid sound {sound_id}: {reason}")]
    InvalidSound { sound_id: String, reason: String },
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(#[from] InvalidAnnotation),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io(_) => "StoreIo",
            Self::Corrupt { .. } => "StoreCorrupt",
            Self::NoTaxonomy => "NoTaxonomy",
            Self::Taxonomy(e) => e.code(),
            Self::TaxonomyInUse(_) => "TaxonomyInUse",
            Self::UnknownSound(_) => "UnknownSound",
            Self::UnknownCategory(_) => "UnknownCategory",
            Self::UnknownTask(_) => "UnknownTask",
            Self::TaskExists(_) => "TaskExists",
            Self::TaskNotSubmitted(_) => "TaskNotSubmitted",
            Self::TaskFinalized(_) => "TaskFinalized",
            Self::InvalidSound { .. } => "InvalidSound",
            Self::InvalidAnnotation(_) => "InvalidAnnotation",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Record {
    Taxonomy { categories: Vec<Category> },
    Sound { sound: SoundResource },
    Task { task: Task },
    Annotation { annotation: Annotation },
}

#[derive(Serialize, Deserialize)]
struct Transaction {
    tx: u64,
    records: Vec<Record>,
}

/// Outcome of a line-oriented import.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub added: usize,
    pub unchanged: usize,
    pub rejected: Vec<LineError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub code: &'static str,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.code)
    }
}

/// One line of a candidate import document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub sound_id: String,
    pub category_id: String,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug)]
pub struct Store {
    journal: Option<Journal>,
    taxonomy: Option<Arc<Taxonomy>>,
    sounds: BTreeMap<String, SoundResource>,
    tasks: BTreeMap<TaskId, Task>,
    annotations: Vec<Annotation>,
    annotation_set: HashSet<Annotation>,
    candidate_pairs: BTreeSet<(String, CategoryId)>,
}

#[derive(Debug)]
struct Journal {
    path: PathBuf,
    file: File,
    next_tx: u64,
}

impl Journal {
    fn append(&mut self, records: &[Record]) -> Result<(), StoreError> {
        let tx = Transaction {
            tx: self.next_tx,
            records: records.to_vec(),
        };
        let mut line = serde_json::to_vec(&tx).map_err(io::Error::from)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.next_tx += 1;
        Ok(())
    }
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            journal: None,
            taxonomy: None,
            sounds: BTreeMap::new(),
            tasks: BTreeMap::new(),
            annotations: Vec::new(),
            annotation_set: HashSet::new(),
            candidate_pairs: BTreeSet::new(),
        }
    }

    /// Opens (or creates) the journal at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;

        let mut store = Store::in_memory();
        let complete = match raw.iter().rposition(|&b| b == b'\n') {
            Some(last) => last + 1,
            None => 0,
        };
        if complete < raw.len() {
            tracing::warn!(
                path = %path.display(),
                dropped = raw.len() - complete,
                "discarding torn journal tail"
            );
            file.set_len(complete as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        let mut next_tx = 0;
        for (index, line) in raw[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let tx: Transaction =
                serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                    line: index + 1,
                    message: e.to_string(),
                })?;
            for record in tx.records {
                store.apply(record).map_err(|e| StoreError::Corrupt {
                    line: index + 1,
                    message: e.to_string(),
                })?;
            }
            next_tx = tx.tx + 1;
        }
        store.journal = Some(Journal {
            path,
            file,
            next_tx,
        });
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.journal.as_ref().map(|j| j.path.as_path())
    }

    fn commit(&mut self, records: Vec<Record>) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        if let Some(journal) = self.journal.as_mut() {
            journal.append(&records)?;
        }
        for record in records {
            self.apply(record)?;
        }
        Ok(())
    }

    /// Applies an already-validated record to the in-memory state.
    fn apply(&mut self, record: Record) -> Result<(), StoreError> {
        match record {
            Record::Taxonomy { categories } => {
                self.taxonomy = Some(Arc::new(Taxonomy::from_categories(categories)?));
            }
            Record::Sound { sound } => {
                self.sounds.insert(sound.sound_id.clone(), sound);
            }
            Record::Task { task } => {
                self.tasks.insert(task.task_id().clone(), task);
            }
            Record::Annotation { annotation } => {
                if annotation.provenance == Provenance::CandidateAutomatic {
                    self.candidate_pairs
                        .insert((annotation.sound_id.clone(), annotation.category_id.clone()));
                }
                self.annotation_set.insert(annotation.clone());
                self.annotations.push(annotation);
            }
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Option<&Arc<Taxonomy>> {
        self.taxonomy.as_ref()
    }

    fn require_taxonomy(&self) -> Result<&Arc<Taxonomy>, StoreError> {
        self.taxonomy.as_ref().ok_or(StoreError::NoTaxonomy)
    }

    /// Replaces the taxonomy. Returns `false` when the stored one is already
    /// identical. Refuses a taxonomy that drops categories still referenced
    /// by annotations or tasks.
    pub fn set_taxonomy(&mut self, taxonomy: &Taxonomy) -> Result<bool, StoreError> {
        if self.taxonomy.as_deref() == Some(taxonomy) {
            return Ok(false);
        }
        let referenced = self
            .annotations
            .iter()
            .flat_map(|a| std::iter::once(&a.category_id).chain(a.original_category.iter()))
            .chain(self.tasks.values().flat_map(task_categories));
        for id in referenced {
            if !taxonomy.contains(id) {
                return Err(StoreError::TaxonomyInUse(id.clone()));
            }
        }
        self.commit(vec![Record::Taxonomy {
            categories: taxonomy.iter().cloned().collect(),
        }])?;
        Ok(true)
    }

    pub fn sound(&self, sound_id: &str) -> Option<&SoundResource> {
        self.sounds.get(sound_id)
    }

    pub fn sounds(&self) -> impl Iterator<Item = &SoundResource> + '_ {
        self.sounds.values()
    }

    fn check_sound(sound: &SoundResource) -> Result<(), StoreError> {
        sound.validate().map_err(|e| StoreError::InvalidSound {
            sound_id: sound.sound_id.clone(),
            reason: e.to_string(),
        })
    }

    /// Inserts or updates one sound. Returns `false` if it was already
    /// stored unchanged.
    pub fn put_sound(&mut self, sound: SoundResource) -> Result<bool, StoreError> {
        Self::check_sound(&sound)?;
        if self.sounds.get(&sound.sound_id) == Some(&sound) {
            return Ok(false);
        }
        self.commit(vec![Record::Sound { sound }])?;
        Ok(true)
    }

    /// Imports one `SoundResource` JSON object per line. Valid lines are
    /// committed; invalid ones are reported.
    pub fn import_sounds(&mut self, reader: impl BufRead) -> Result<ImportReport, StoreError> {
        let mut report = ImportReport::default();
        let mut batch = Vec::new();
        let mut seen_in_batch = BTreeMap::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            let number = index + 1;
            if line.trim().is_empty() {
                continue;
            }
            let sound: SoundResource = match serde_json::from_str(&line) {
                Ok(s) => s,
                Err(e) => {
                    report.rejected.push(LineError {
                        line: number,
                        code: "MalformedRecord",
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            if let Err(e) = Self::check_sound(&sound) {
                report.rejected.push(LineError {
                    line: number,
                    code: e.code(),
                    message: e.to_string(),
                });
                continue;
            }
            let current = seen_in_batch
                .get(&sound.sound_id)
                .or_else(|| self.sounds.get(&sound.sound_id));
            if current == Some(&sound) {
                report.unchanged += 1;
                continue;
            }
            seen_in_batch.insert(sound.sound_id.clone(), sound.clone());
            batch.push(Record::Sound { sound });
            report.added += 1;
        }
        self.commit(batch)?;
        Ok(report)
    }

    pub fn task(&self, task_id: &TaskId) -> Option<&Task> {
        self.tasks.get(task_id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> + '_ {
        self.tasks.values()
    }

    /// Next unused task id. Tasks are never deleted, so the count is a
    /// safe sequence.
    pub fn next_task_id(&self) -> TaskId {
        TaskId::new(format!("t{:06}", self.tasks.len() + 1)).expect("non-empty")
    }

    fn check_task_refs(&self, task: &Task) -> Result<(), StoreError> {
        let taxonomy = self.require_taxonomy()?;
        let sound_id = &task.log().sound().sound_id;
        if !self.sounds.contains_key(sound_id) {
            return Err(StoreError::UnknownSound(sound_id.clone()));
        }
        for id in task_categories(task) {
            if !taxonomy.contains(id) {
                return Err(StoreError::UnknownCategory(id.clone()));
            }
        }
        Ok(())
    }

    pub fn insert_task(&mut self, task: Task) -> Result<(), StoreError> {
        if self.tasks.contains_key(task.task_id()) {
            return Err(StoreError::TaskExists(task.task_id().clone()));
        }
        if task.is_submitted() {
            return Err(StoreError::TaskFinalized(task.task_id().clone()));
        }
        self.check_task_refs(&task)?;
        self.commit(vec![Record::Task { task }])
    }

    /// Persists a new state of an open task.
    pub fn update_task(&mut self, task: Task) -> Result<(), StoreError> {
        self.ensure_rewritable(&task)?;
        self.check_task_refs(&task)?;
        self.commit(vec![Record::Task { task }])
    }

    /// Persists a submitted task together with the annotations it emitted,
    /// in one transaction.
    pub fn submit_task(&mut self, task: Task, annotations: Vec<Annotation>) -> Result<(), StoreError> {
        self.ensure_rewritable(&task)?;
        if task.log().state() != TaskState::Submitted {
            return Err(StoreError::TaskNotSubmitted(task.task_id().clone()));
        }
        self.check_task_refs(&task)?;
        for a in &annotations {
            self.check_annotation(a)?;
        }
        let mut records = vec![Record::Task { task }];
        records.extend(annotations.into_iter().map(|annotation| Record::Annotation { annotation }));
        self.commit(records)
    }

    fn ensure_rewritable(&self, task: &Task) -> Result<(), StoreError> {
        match self.tasks.get(task.task_id()) {
            None => Err(StoreError::UnknownTask(task.task_id().clone())),
            Some(existing) if existing.is_submitted() => {
                Err(StoreError::TaskFinalized(task.task_id().clone()))
            }
            Some(_) => Ok(()),
        }
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    /// Candidate annotations for one sound, in insertion order.
    pub fn candidates_for(&self, sound_id: &str) -> Vec<CategoryId> {
        let mut seen = BTreeSet::new();
        self.annotations
            .iter()
            .filter(|a| a.sound_id == sound_id && a.provenance == Provenance::CandidateAutomatic)
            .filter(|a| seen.insert(a.category_id.clone()))
            .map(|a| a.category_id.clone())
            .collect()
    }

    fn check_annotation(&self, a: &Annotation) -> Result<(), StoreError> {
        a.validate()?;
        let taxonomy = self.require_taxonomy()?;
        if !self.sounds.contains_key(&a.sound_id) {
            return Err(StoreError::UnknownSound(a.sound_id.clone()));
        }
        for id in std::iter::once(&a.category_id).chain(a.original_category.iter()) {
            if !taxonomy.contains(id) {
                return Err(StoreError::UnknownCategory(id.clone()));
            }
        }
        Ok(())
    }

    /// Imports newline-delimited candidate records
    /// `{"sound_id", "category_id", "source"}` as `candidate_automatic`
    /// annotations stamped `now`. A (sound, category) pair already present
    /// as a candidate is skipped. Bad lines are reported and the rest
    /// committed.
    pub fn import_candidates(
        &mut self,
        reader: impl BufRead,
        now: Timestamp,
    ) -> Result<ImportReport, StoreError> {
        let taxonomy = Arc::clone(self.require_taxonomy()?);
        let mut report = ImportReport::default();
        let mut batch = Vec::new();
        let mut pending: BTreeSet<(String, CategoryId)> = BTreeSet::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            let number = index + 1;
            if line.trim().is_empty() {
                continue;
            }
            let reject = |code: &'static str, message: String| LineError {
                line: number,
                code,
                message,
            };
            let record: CandidateRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    report.rejected.push(reject("MalformedRecord", e.to_string()));
                    continue;
                }
            };
            if !self.sounds.contains_key(&record.sound_id) {
                report.rejected.push(reject(
                    "UnknownSound",
                    format!("unknown sound {}", record.sound_id),
                ));
                continue;
            }
            let category = match CategoryId::new(record.category_id.clone()) {
                Ok(id) if taxonomy.contains(&id) => id,
                _ => {
                    report.rejected.push(reject(
                        "UnknownCategory",
                        format!("unknown category {:?}", record.category_id),
                    ));
                    continue;
                }
            };
            let key = (record.sound_id, category);
            if self.candidate_pairs.contains(&key) || !pending.insert(key.clone()) {
                report.unchanged += 1;
                continue;
            }
            batch.push(Record::Annotation {
                annotation: Annotation::candidate(key.0, key.1, now),
            });
            report.added += 1;
            if batch.len() >= IMPORT_BATCH {
                self.commit(std::mem::take(&mut batch))?;
                pending.clear();
            }
        }
        self.commit(batch)?;
        Ok(report)
    }

    /// Imports lines in the dataset export format. Exact duplicates of
    /// stored annotations are skipped, which makes export/import lossless
    /// and repeatable.
    pub fn import_dataset(&mut self, reader: impl BufRead) -> Result<ImportReport, StoreError> {
        self.require_taxonomy()?;
        let mut report = ImportReport::default();
        let mut batch = Vec::new();
        let mut pending: HashSet<Annotation> = HashSet::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            let number = index + 1;
            if line.trim().is_empty() {
                continue;
            }
            let annotation: Annotation = match serde_json::from_str(&line) {
                Ok(a) => a,
                Err(e) => {
                    report.rejected.push(LineError {
                        line: number,
                        code: "MalformedRecord",
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            if let Err(e) = self.check_annotation(&annotation) {
                report.rejected.push(LineError {
                    line: number,
                    code: e.code(),
                    message: e.to_string(),
                });
                continue;
            }
            if self.annotation_set.contains(&annotation) || !pending.insert(annotation.clone()) {
                report.unchanged += 1;
                continue;
            }
            batch.push(Record::Annotation { annotation });
            report.added += 1;
            if batch.len() >= IMPORT_BATCH {
                self.commit(std::mem::take(&mut batch))?;
                pending.clear();
            }
        }
        self.commit(batch)?;
        Ok(report)
    }

    /// Writes one JSON line per annotation whose provenance is in `filter`,
    /// ordered by (sound_id, category_id, created_at) and then by the line
    /// itself so identical stores give identical bytes.
    pub fn export_dataset(
        &self,
        filter: &BTreeSet<Provenance>,
        mut out: impl Write,
    ) -> Result<usize, StoreError> {
        let mut rows: Vec<(&Annotation, String)> = self
            .annotations
            .iter()
            .filter(|a| filter.contains(&a.provenance))
            .map(|a| (a, serde_json::to_string(a).expect("annotation serializes")))
            .collect();
        rows.sort_by(|(a, la), (b, lb)| {
            (&a.sound_id, &a.category_id, a.created_at)
                .cmp(&(&b.sound_id, &b.category_id, b.created_at))
                .then_with(|| la.cmp(lb))
        });
        for (_, line) in &rows {
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(rows.len())
    }

    pub fn export_to_vec(&self, filter: &BTreeSet<Provenance>) -> Vec<u8> {
        let mut buf = Vec::new();
        self.export_dataset(filter, &mut buf).expect("writing to a Vec");
        buf
    }

    /// Timing and label statistics. `None` selects every submitted task;
    /// an explicit list must name submitted tasks only.
    pub fn compute_stats(&self, selection: Option<&[TaskId]>) -> Result<Vec<TaskStats>, StoreError> {
        let tasks: Vec<&Task> = match selection {
            None => self.tasks.values().filter(|t| t.is_submitted()).collect(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    let task = self
                        .tasks
                        .get(id)
                        .ok_or_else(|| StoreError::UnknownTask(id.clone()))?;
                    if !task.is_submitted() {
                        return Err(StoreError::TaskNotSubmitted(id.clone()));
                    }
                    Ok(task)
                })
                .collect::<Result<_, _>>()?,
        };
        let mut by_task: BTreeMap<&TaskId, Vec<&Annotation>> = BTreeMap::new();
        for a in &self.annotations {
            if let Some(id) = &a.task_id {
                by_task.entry(id).or_default().push(a);
            }
        }
        Ok(tasks
            .into_iter()
            .map(|task| {
                let emitted = by_task.get(task.task_id()).map(Vec::as_slice).unwrap_or(&[]);
                stats::task_stats(task, emitted)
            })
            .collect())
    }
}

fn task_categories(task: &Task) -> Box<dyn Iterator<Item = &CategoryId> + '_> {
    match task {
        Task::Generation(t) => Box::new(t.selected().iter()),
        Task::Refinement(t) => Box::new(t.rows().iter().flat_map(|r| {
            [&r.original_category, &r.current_category]
                .into_iter()
                .chain(r.move_history.iter().flat_map(|m| [&m.from, &m.to]))
        })),
    }
}

/// Every provenance value; the default export filter.
pub fn all_provenances() -> BTreeSet<Provenance> {
    Provenance::ALL.into_iter().collect()
}
