//! Annotation sessions: one sound resource, one annotator, one task.
//!
//! Two workflows share the same skeleton ([`TaskLog`]): an ordered event
//! log, an open/submitted state and the metadata effort gate.
//!
//! - [`GenerationTask`] collects new labels for a sound.
//! - [`RefinementTask`] starts from proposed labels and lets the annotator
//!   move each one to a child (or sibling) category, duplicate it, and
//!   finally record whether the chosen category is present.
//!
//! All timestamps are supplied by the caller. Once submitted, a task
//! rejects every mutation with [`SessionError::TaskFinalized`] and is left
//! untouched.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::{CategoryId, RowId, TaskId};

mod generation;
mod log;
mod refinement;

pub use generation::GenerationTask;
pub use log::{EventKind, PlaybackKind, TaskEvent, TaskLog, TaskState};
pub use refinement::{LabelRow, Move, MoveKind, RefinementTask, ReplayError};

pub type Timestamp = chrono::DateTime<chrono::Utc>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoundMetadata {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundResource {
    pub sound_id: String,
    #[serde(default)]
    pub title: String,
    pub audio_uri: String,
    pub duration_s: f64,
    #[serde(default)]
    pub metadata: SoundMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrogram_uri: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum InvalidSound {
    #[error("sound_id is empty")]
    EmptyId,
    #[error("audio_uri is empty")]
    EmptyAudioUri,
    #[error("duration_s must be a finite non-negative number")]
    BadDuration,
}

impl SoundResource {
    pub fn validate(&self) -> Result<(), InvalidSound> {
        if self.sound_id.is_empty() {
            return Err(InvalidSound::EmptyId);
        }
        if self.audio_uri.is_empty() {
            return Err(InvalidSound::EmptyAudioUri);
        }
        if !self.duration_s.is_finite() || self.duration_s < 0.0 {
            return Err(InvalidSound::BadDuration);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceVerdict {
    Present,
    NotPresent,
    Unsure,
}

impl PresenceVerdict {
    pub const ALL: [PresenceVerdict; 3] = [Self::Present, Self::NotPresent, Self::Unsure];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    CandidateAutomatic,
    ManualGenerated,
    ManualRefined,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [
        Self::CandidateAutomatic,
        Self::ManualGenerated,
        Self::ManualRefined,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CandidateAutomatic => "candidate_automatic",
            Self::ManualGenerated => "manual_generated",
            Self::ManualRefined => "manual_refined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// The durable output record: which category a sound carries, and where
/// that claim came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub sound_id: String,
    pub category_id: CategoryId,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_category: Option<CategoryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<PresenceVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<TaskId>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum InvalidAnnotation {
    #[error("manual_refined annotation without original_category")]
    MissingOriginal,
    #[error("manual annotation without annotator_id")]
    MissingAnnotator,
    #[error("manual annotation without task_id")]
    MissingTask,
}

impl Annotation {
    pub fn candidate(sound_id: String, category_id: CategoryId, created_at: Timestamp) -> Self {
        Self {
            sound_id,
            category_id,
            provenance: Provenance::CandidateAutomatic,
            original_category: None,
            verdict: None,
            annotator_id: None,
            task_id: None,
            created_at,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidAnnotation> {
        if self.provenance == Provenance::ManualRefined && self.original_category.is_none() {
            return Err(InvalidAnnotation::MissingOriginal);
        }
        if self.provenance != Provenance::CandidateAutomatic {
            if self.annotator_id.is_none() {
                return Err(InvalidAnnotation::MissingAnnotator);
            }
            if self.task_id.is_none() {
                return Err(InvalidAnnotation::MissingTask);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Whether refinement rows may move to sibling categories.
    pub sibling_moves: bool,
    /// Whether `abstract`-restricted categories may be selected as labels.
    pub abstract_selectable: bool,
    /// Seconds after task creation at which metadata unlocks without a
    /// completed playback.
    pub effort_gate_secs: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            sibling_moves: true,
            abstract_selectable: false,
            effort_gate_secs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("task has been submitted and can no longer change")]
    TaskFinalized,
    #[error("unknown category {0}")]
    UnknownCategory(CategoryId),
    #[error("category {0} is abstract and cannot be selected as a label")]
    AbstractCategoryNotSelectable(CategoryId),
    #[error("category {0} is already selected")]
    DuplicateSelection(CategoryId),
    #[error("category {0} is not selected")]
    NotSelected(CategoryId),
    #[error("a refinement task needs at least one proposed label")]
    EmptyProposalList,
    #[error("unknown row {0}")]
    UnknownRow(RowId),
    #[error("{to} is not a child of {from}")]
    NotAChild { from: CategoryId, to: CategoryId },
    #[error("{to} is not a sibling of {from}")]
    NotASibling { from: CategoryId, to: CategoryId },
    #[error("sibling exploration is disabled")]
    SiblingExplorationDisabled,
    #[error("row {0} has no move to undo")]
    NothingToUndo(RowId),
    #[error("metadata is available after a completed playback or once the effort time has elapsed")]
    EffortGateNotMet,
    #[error("playback position {position_s}s outside [0, {duration_s}]")]
    PositionOutOfRange { position_s: f64, duration_s: f64 },
    #[error("rows without a presence verdict: {0:?}")]
    MissingVerdicts(Vec<RowId>),
}

// f64 fields only appear in PositionOutOfRange, which never holds NaN.
impl Eq for SessionError {}

impl SessionError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::TaskFinalized => "TaskFinalized",
            Self::UnknownCategory(_) => "UnknownCategory",
            Self::AbstractCategoryNotSelectable(_) => "AbstractCategoryNotSelectable",
            Self::DuplicateSelection(_) => "DuplicateSelection",
            Self::NotSelected(_) => "NotSelected",
            Self::EmptyProposalList => "EmptyProposalList",
            Self::UnknownRow(_) => "UnknownRow",
            Self::NotAChild { .. } => "NotAChild",
            Self::NotASibling { .. } => "NotASibling",
            Self::SiblingExplorationDisabled => "SiblingExplorationDisabled",
            Self::NothingToUndo(_) => "NothingToUndo",
            Self::EffortGateNotMet => "EffortGateNotMet",
            Self::PositionOutOfRange { .. } => "PositionOutOfRange",
            Self::MissingVerdicts(_) => "MissingVerdicts",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Generation,
    Refinement,
}

/// Either kind of task, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Generation(GenerationTask),
    Refinement(RefinementTask),
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Generation(_) => TaskKind::Generation,
            Task::Refinement(_) => TaskKind::Refinement,
        }
    }

    pub fn log(&self) -> &TaskLog {
        match self {
            Task::Generation(t) => t.log(),
            Task::Refinement(t) => t.log(),
        }
    }

    pub fn log_mut(&mut self) -> &mut TaskLog {
        match self {
            Task::Generation(t) => t.log_mut(),
            Task::Refinement(t) => t.log_mut(),
        }
    }

    pub fn task_id(&self) -> &TaskId {
        self.log().task_id()
    }

    pub fn is_submitted(&self) -> bool {
        self.log().state() == TaskState::Submitted
    }
}
