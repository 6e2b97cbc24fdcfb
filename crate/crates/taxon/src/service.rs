//! Application layer shared by the HTTP API and the CLI.
//!
//! Every task mutation follows the same shape: take the store's write lock,
//! clone the persisted task, apply the session operation to the clone with
//! a timestamp from the service clock, then persist the clone. A rejected
//! operation therefore leaves no trace in memory or on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use taxon_core::search::{MatchedField, SearchError, SearchIndex, SearchParams, DEFAULT_DESCRIPTION_WEIGHT};
use taxon_core::session::{
    Annotation, GenerationTask, LabelRow, PlaybackKind, PresenceVerdict, Provenance,
    RefinementTask, SessionConfig, SessionError, SoundMetadata, Task, TaskEvent, TaskKind,
    TaskState,
};
use taxon_core::taxonomy::{Restriction, Taxonomy, TaxonomyError};
use taxon_core::{CategoryId, RowId, SoundResource, TaskId, Timestamp};

use crate::clock::Clock;
use crate::stats::TaskStats;
use crate::store::{Store, StoreError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    pub description_weight: f64,
    /// Sound ids queued for each annotator. Annotators without an entry
    /// are offered every sound.
    pub assignments: BTreeMap<String, Vec<String>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            description_weight: DEFAULT_DESCRIPTION_WEIGHT,
            assignments: BTreeMap::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown sound {0}")]
    UnknownSound(String),
    #[error("task {0} belongs to another annotator")]
    NotTaskOwner(TaskId),
    #[error("task {task} is a {actual:?} task")]
    WrongTaskKind { task: TaskId, actual: TaskKind },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Store(e) => e.code(),
            Self::Session(e) => e.code(),
            Self::Search(e) => e.code(),
            Self::Taxonomy(e) => e.code(),
            Self::UnknownTask(_) => "UnknownTask",
            Self::UnknownSound(_) => "UnknownSound",
            Self::NotTaskOwner(_) => "NotTaskOwner",
            Self::WrongTaskKind { .. } => "WrongTaskKind",
            Self::InvalidRequest(_) => "InvalidRequest",
        }
    }

    /// Row ids attached to the error, if any.
    pub fn row_ids(&self) -> Option<&[RowId]> {
        match self {
            Self::Session(SessionError::MissingVerdicts(rows)) => Some(rows),
            _ => None,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategorySummary {
    pub id: CategoryId,
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CategoryView {
    pub id: CategoryId,
    pub name: String,
    pub description: String,
    pub citation_uri: String,
    pub example_uris: Vec<String>,
    pub restrictions: BTreeSet<Restriction>,
    pub children: Vec<CategorySummary>,
    pub parents: Vec<CategorySummary>,
    pub siblings: Vec<CategorySummary>,
    /// Root-to-category paths.
    pub paths: Vec<Vec<CategorySummary>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub category_id: CategoryId,
    pub name: String,
    pub score: f64,
    pub matched_field: MatchedField,
    pub paths: Vec<Vec<CategorySummary>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SoundView {
    pub sound_id: String,
    pub title: String,
    pub audio_uri: String,
    pub duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrogram_uri: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<SoundMetadata>,
}

impl SoundView {
    fn new(sound: &SoundResource, with_metadata: bool) -> Self {
        Self {
            sound_id: sound.sound_id.clone(),
            title: sound.title.clone(),
            audio_uri: sound.audio_uri.clone(),
            duration_s: sound.duration_s,
            spectrogram_uri: sound.spectrogram_uri.clone(),
            metadata: with_metadata.then(|| sound.metadata.clone()),
        }
    }
}

/// A task as shown to clients. The sound's metadata is included only after
/// it has been revealed.
#[derive(Debug, Clone, Serialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub kind: TaskKind,
    pub annotator_id: String,
    pub state: TaskState,
    pub created_at: Timestamp,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<Timestamp>,
    pub sound: SoundView,
    pub metadata_revealed: bool,
    pub effort_gate_met: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<CategoryId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<LabelRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_verdicts: Option<Vec<RowId>>,
    pub events: Vec<TaskEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmitResult {
    pub task: TaskView,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DuplicateResult {
    pub row_id: RowId,
    pub task: TaskView,
}

pub struct Service {
    store: RwLock<Store>,
    taxonomy: Arc<Taxonomy>,
    index: SearchIndex,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("categories", &self.taxonomy.len())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Service {
    /// Wraps a store that already holds a taxonomy.
    pub fn new(store: Store, config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let taxonomy = Arc::clone(store.taxonomy().ok_or(StoreError::NoTaxonomy)?);
        let index = SearchIndex::build(&taxonomy, config.description_weight)?;
        Ok(Self {
            store: RwLock::new(store),
            taxonomy,
            index,
            config,
            clock,
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }

    fn summary(&self, id: &CategoryId) -> CategorySummary {
        CategorySummary {
            id: id.clone(),
            name: self
                .taxonomy
                .get(id)
                .map(|c| c.name.clone())
                .unwrap_or_default(),
        }
    }

    fn named_paths(&self, id: &CategoryId) -> Result<Vec<Vec<CategorySummary>>> {
        Ok(self
            .taxonomy
            .ancestor_paths(id)?
            .iter()
            .map(|p| p.nodes().iter().map(|n| self.summary(n)).collect())
            .collect())
    }

    pub fn parse_category(&self, raw: &str) -> Result<CategoryId> {
        let id = Self::category_arg(raw)?;
        self.taxonomy.category(&id)?;
        Ok(id)
    }

    pub fn category(&self, raw: &str) -> Result<CategoryView> {
        let id = self.parse_category(raw)?;
        let c = self.taxonomy.category(&id)?;
        Ok(CategoryView {
            id: id.clone(),
            name: c.name.clone(),
            description: c.description.clone(),
            citation_uri: c.citation_uri.clone(),
            example_uris: c.example_uris.clone(),
            restrictions: c.restrictions.clone(),
            children: self.taxonomy.children(&id)?.iter().map(|x| self.summary(x)).collect(),
            parents: self.taxonomy.parents(&id)?.iter().map(|x| self.summary(x)).collect(),
            siblings: self.taxonomy.siblings(&id)?.iter().map(|x| self.summary(x)).collect(),
            paths: self.named_paths(&id)?,
        })
    }

    pub fn roots(&self) -> Vec<CategorySummary> {
        self.taxonomy.roots().iter().map(|r| self.summary(r)).collect()
    }

    pub fn search(&self, query: &str, params: &SearchParams) -> Result<Vec<SearchResult>> {
        self.index
            .search(query, params)?
            .into_iter()
            .map(|hit| {
                Ok(SearchResult {
                    name: self.summary(&hit.category_id).name,
                    paths: self.named_paths(&hit.category_id)?,
                    category_id: hit.category_id,
                    score: hit.score,
                    matched_field: hit.matched_field,
                })
            })
            .collect()
    }

    /// Sound details. Metadata is returned only when asked for and the
    /// named task has revealed it.
    pub fn sound(
        &self,
        sound_id: &str,
        include_metadata: bool,
        task_id: Option<&str>,
    ) -> Result<SoundView> {
        let store = self.read();
        let sound = store
            .sound(sound_id)
            .ok_or_else(|| ServiceError::UnknownSound(sound_id.to_string()))?;
        if !include_metadata {
            return Ok(SoundView::new(sound, false));
        }
        let task_id = task_id.ok_or_else(|| {
            ServiceError::InvalidRequest("include_metadata requires task_id".into())
        })?;
        let task = lookup(&store, task_id)?;
        if task.log().sound().sound_id != sound_id {
            return Err(ServiceError::InvalidRequest(format!(
                "task {task_id} is not about sound {sound_id}"
            )));
        }
        if !task.log().metadata_revealed() {
            return Err(SessionError::EffortGateNotMet.into());
        }
        Ok(SoundView::new(sound, true))
    }

    pub fn task(&self, task_id: &str) -> Result<TaskView> {
        let store = self.read();
        Ok(self.view(lookup(&store, task_id)?))
    }

    fn view(&self, task: &Task) -> TaskView {
        let log = task.log();
        let (selected, rows, missing) = match task {
            Task::Generation(t) => (Some(t.selected().to_vec()), None, None),
            Task::Refinement(t) => (None, Some(t.rows().to_vec()), Some(t.missing_verdicts())),
        };
        TaskView {
            task_id: log.task_id().clone(),
            kind: task.kind(),
            annotator_id: log.annotator_id().to_string(),
            state: log.state(),
            created_at: log.created_at(),
            submitted_at: log.submitted_at(),
            sound: SoundView::new(log.sound(), log.metadata_revealed()),
            metadata_revealed: log.metadata_revealed(),
            effort_gate_met: log.effort_gate_met(&self.config.session, self.clock.now()),
            selected,
            rows,
            missing_verdicts: missing,
            events: log.events().to_vec(),
        }
    }

    fn sound_for_task(store: &Store, sound_id: &str) -> Result<SoundResource> {
        store
            .sound(sound_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSound(sound_id.to_string()))
    }

    pub fn create_generation_task(&self, annotator: &str, sound_id: &str) -> Result<TaskView> {
        let mut store = self.write();
        let sound = Self::sound_for_task(&store, sound_id)?;
        let id = store.next_task_id();
        let task = Task::Generation(GenerationTask::new(id, sound, annotator.to_string(), self.now()));
        let view = self.view(&task);
        store.insert_task(task)?;
        Ok(view)
    }

    /// Starts a refinement task. Without explicit proposals, the sound's
    /// stored candidate labels are used.
    pub fn create_refinement_task(
        &self,
        annotator: &str,
        sound_id: &str,
        proposals: Option<Vec<String>>,
    ) -> Result<TaskView> {
        let mut store = self.write();
        let sound = Self::sound_for_task(&store, sound_id)?;
        let proposals = match proposals {
            Some(raw) => raw
                .iter()
                .map(|r| Self::category_arg(r))
                .collect::<Result<Vec<_>>>()?,
            None => store.candidates_for(sound_id),
        };
        let id = store.next_task_id();
        let task = Task::Refinement(RefinementTask::new(
            id,
            sound,
            proposals,
            annotator.to_string(),
            &self.taxonomy,
            self.now(),
        )?);
        let view = self.view(&task);
        store.insert_task(task)?;
        Ok(view)
    }

    /// Applies `op` to a copy of the task and persists the result.
    fn mutate<R>(
        &self,
        annotator: &str,
        task_id: &str,
        op: impl FnOnce(&mut Task, Timestamp) -> Result<R>,
    ) -> Result<(R, TaskView)> {
        let mut store = self.write();
        let mut task = lookup(&store, task_id)?.clone();
        if task.log().annotator_id() != annotator {
            return Err(ServiceError::NotTaskOwner(task.task_id().clone()));
        }
        let out = op(&mut task, self.now())?;
        let view = self.view(&task);
        store.update_task(task)?;
        Ok((out, view))
    }

    fn mutate_refinement<R>(
        &self,
        annotator: &str,
        task_id: &str,
        op: impl FnOnce(&mut RefinementTask, Timestamp) -> Result<R>,
    ) -> Result<(R, TaskView)> {
        self.mutate(annotator, task_id, |task, at| match task {
            Task::Refinement(t) => op(t, at),
            other => Err(ServiceError::WrongTaskKind {
                task: other.task_id().clone(),
                actual: other.kind(),
            }),
        })
    }

    fn mutate_generation<R>(
        &self,
        annotator: &str,
        task_id: &str,
        op: impl FnOnce(&mut GenerationTask, Timestamp) -> Result<R>,
    ) -> Result<(R, TaskView)> {
        self.mutate(annotator, task_id, |task, at| match task {
            Task::Generation(t) => op(t, at),
            other => Err(ServiceError::WrongTaskKind {
                task: other.task_id().clone(),
                actual: other.kind(),
            }),
        })
    }

    fn category_arg(raw: &str) -> Result<CategoryId> {
        CategoryId::new(raw).map_err(|_| ServiceError::InvalidRequest("empty category id".into()))
    }

    fn row_arg(raw: &str) -> Result<RowId> {
        RowId::new(raw).map_err(|_| ServiceError::InvalidRequest("empty row id".into()))
    }

    pub fn add_label(&self, annotator: &str, task_id: &str, category: &str) -> Result<TaskView> {
        let id = Self::category_arg(category)?;
        let cfg = self.config.session;
        self.mutate_generation(annotator, task_id, |t, at| {
            Ok(t.add_label(&self.taxonomy, &cfg, id, at)?)
        })
        .map(|(_, v)| v)
    }

    pub fn remove_label(&self, annotator: &str, task_id: &str, category: &str) -> Result<TaskView> {
        let id = Self::category_arg(category)?;
        self.mutate_generation(annotator, task_id, |t, at| Ok(t.remove_label(&id, at)?))
            .map(|(_, v)| v)
    }

    pub fn refine_to_child(
        &self,
        annotator: &str,
        task_id: &str,
        row: &str,
        child: &str,
    ) -> Result<TaskView> {
        let row = Self::row_arg(row)?;
        let child = Self::category_arg(child)?;
        self.mutate_refinement(annotator, task_id, |t, at| {
            Ok(t.refine_to_child(&self.taxonomy, &row, child, at)?)
        })
        .map(|(_, v)| v)
    }

    pub fn move_to_sibling(
        &self,
        annotator: &str,
        task_id: &str,
        row: &str,
        sibling: &str,
    ) -> Result<TaskView> {
        let row = Self::row_arg(row)?;
        let sibling = Self::category_arg(sibling)?;
        let cfg = self.config.session;
        self.mutate_refinement(annotator, task_id, |t, at| {
            Ok(t.move_to_sibling(&self.taxonomy, &cfg, &row, sibling, at)?)
        })
        .map(|(_, v)| v)
    }

    pub fn undo_move(&self, annotator: &str, task_id: &str, row: &str) -> Result<TaskView> {
        let row = Self::row_arg(row)?;
        self.mutate_refinement(annotator, task_id, |t, at| Ok(t.undo_move(&row, at)?))
            .map(|(_, v)| v)
    }

    pub fn duplicate_row(&self, annotator: &str, task_id: &str, row: &str) -> Result<DuplicateResult> {
        let row = Self::row_arg(row)?;
        self.mutate_refinement(annotator, task_id, |t, at| Ok(t.duplicate_row(&row, at)?))
            .map(|(row_id, task)| DuplicateResult { row_id, task })
    }

    pub fn set_presence(
        &self,
        annotator: &str,
        task_id: &str,
        row: &str,
        verdict: PresenceVerdict,
    ) -> Result<TaskView> {
        let row = Self::row_arg(row)?;
        self.mutate_refinement(annotator, task_id, |t, at| Ok(t.set_presence(&row, verdict, at)?))
            .map(|(_, v)| v)
    }

    pub fn record_playback(
        &self,
        annotator: &str,
        task_id: &str,
        kind: PlaybackKind,
        position_s: f64,
    ) -> Result<TaskView> {
        self.mutate(annotator, task_id, |t, at| {
            Ok(t.log_mut().record_playback(kind, position_s, at)?)
        })
        .map(|(_, v)| v)
    }

    /// Runs a search on behalf of a task and logs the query.
    pub fn task_search(
        &self,
        annotator: &str,
        task_id: &str,
        query: &str,
        params: &SearchParams,
    ) -> Result<Vec<SearchResult>> {
        let results = self.search(query, params)?;
        self.mutate(annotator, task_id, |t, at| Ok(t.log_mut().record_search(query, at)?))?;
        Ok(results)
    }

    pub fn request_metadata(&self, annotator: &str, task_id: &str) -> Result<SoundMetadata> {
        let cfg = self.config.session;
        self.mutate(annotator, task_id, |t, at| {
            Ok(t.log_mut().request_metadata(&cfg, at)?.clone())
        })
        .map(|(m, _)| m)
    }

    pub fn submit(&self, annotator: &str, task_id: &str) -> Result<SubmitResult> {
        let mut store = self.write();
        let mut task = lookup(&store, task_id)?.clone();
        if task.log().annotator_id() != annotator {
            return Err(ServiceError::NotTaskOwner(task.task_id().clone()));
        }
        let at = self.now();
        let annotations = match &mut task {
            Task::Generation(t) => t.submit(at)?,
            Task::Refinement(t) => t.submit(at)?,
        };
        let view = self.view(&task);
        store.submit_task(task, annotations.clone())?;
        Ok(SubmitResult {
            task: view,
            annotations,
        })
    }

    pub fn export(&self, filter: &BTreeSet<Provenance>) -> Vec<u8> {
        self.read().export_to_vec(filter)
    }

    pub fn stats(&self, selection: Option<&[TaskId]>) -> Result<Vec<TaskStats>> {
        Ok(self.read().compute_stats(selection)?)
    }

    /// Sounds queued for an annotator.
    pub fn assignments(&self, annotator: &str) -> Vec<String> {
        match self.config.assignments.get(annotator) {
            Some(list) => list.clone(),
            None => self.read().sounds().map(|s| s.sound_id.clone()).collect(),
        }
    }

    /// Runs `f` with shared access to the underlying store.
    pub fn with_store<R>(&self, f: impl FnOnce(&Store) -> R) -> R {
        f(&self.read())
    }
}

fn lookup<'s>(store: &'s Store, raw: &str) -> Result<&'s Task> {
    TaskId::new(raw)
        .ok()
        .and_then(|id| store.task(&id))
        .ok_or_else(|| ServiceError::UnknownTask(raw.to_string()))
}
