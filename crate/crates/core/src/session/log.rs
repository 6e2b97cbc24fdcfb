use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{PresenceVerdict, SessionConfig, SessionError, SoundMetadata, SoundResource, Timestamp};
use crate::id::{CategoryId, RowId, TaskId};
use crate::session::MoveKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Submitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackKind {
    Started,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Playback { kind: PlaybackKind, position_s: f64 },
    Search { query: String },
    Select { category: CategoryId },
    Deselect { category: CategoryId },
    Move { row: RowId, kind: MoveKind, from: CategoryId, to: CategoryId },
    Undo { row: RowId, from: CategoryId, to: CategoryId },
    Duplicate { source: RowId, row: RowId },
    Verdict { row: RowId, verdict: PresenceVerdict },
    MetadataRevealed,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub at: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// State shared by both task kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub(crate) task_id: TaskId,
    pub(crate) annotator_id: String,
    pub(crate) sound: SoundResource,
    state: TaskState,
    metadata_revealed: bool,
    events: Vec<TaskEvent>,
}

impl TaskLog {
    pub(crate) fn new(task_id: TaskId, sound: SoundResource, annotator_id: String, at: Timestamp) -> Self {
        Self {
            task_id,
            annotator_id,
            sound,
            state: TaskState::Open,
            metadata_revealed: false,
            events: vec![TaskEvent {
                at,
                kind: EventKind::Created,
            }],
        }
    }

    pub fn task_id(&self) -> &TaskId {
        &self.task_id
    }

    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }

    pub fn sound(&self) -> &SoundResource {
        &self.sound
    }

    pub fn state(&self) -> TaskState {
        self.state
    }

    pub fn metadata_revealed(&self) -> bool {
        self.metadata_revealed
    }

    pub fn events(&self) -> &[TaskEvent] {
        &self.events
    }

    pub fn created_at(&self) -> Timestamp {
        self.events[0].at
    }

    pub fn submitted_at(&self) -> Option<Timestamp> {
        self.events
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::Submitted)
            .map(|e| e.at)
    }

    pub(crate) fn ensure_open(&self) -> Result<(), SessionError> {
        match self.state {
            TaskState::Open => Ok(()),
            TaskState::Submitted => Err(SessionError::TaskFinalized),
        }
    }

    pub(crate) fn push(&mut self, at: Timestamp, kind: EventKind) {
        self.events.push(TaskEvent { at, kind });
    }

    pub(crate) fn finalize(&mut self, at: Timestamp) {
        self.push(at, EventKind::Submitted);
        self.state = TaskState::Submitted;
    }

    pub fn record_playback(
        &mut self,
        kind: PlaybackKind,
        position_s: f64,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        self.ensure_open()?;
        if !(0.0..=self.sound.duration_s).contains(&position_s) {
            return Err(SessionError::PositionOutOfRange {
                position_s: if position_s.is_nan() { -1.0 } else { position_s },
                duration_s: self.sound.duration_s,
            });
        }
        self.push(at, EventKind::Playback { kind, position_s });
        Ok(())
    }

    /// Logs a query typed while working on this task.
    pub fn record_search(&mut self, query: &str, at: Timestamp) -> Result<(), SessionError> {
        self.ensure_open()?;
        self.push(at, EventKind::Search { query: String::from(query) });
        Ok(())
    }

    pub fn has_completed_playback(&self) -> bool {
        self.events.iter().any(|e| {
            matches!(
                e.kind,
                EventKind::Playback {
                    kind: PlaybackKind::Completed,
                    ..
                }
            )
        })
    }

    /// True once the annotator has listened to the whole sound or spent the
    /// configured effort time on the task.
    pub fn effort_gate_met(&self, config: &SessionConfig, now: Timestamp) -> bool {
        let elapsed = now - self.created_at();
        self.has_completed_playback()
            || elapsed >= chrono::Duration::seconds(i64::from(config.effort_gate_secs))
    }

    /// Releases the sound's metadata once the effort gate is met. Repeated
    /// requests return the same metadata and log nothing new.
    pub fn request_metadata(
        &mut self,
        config: &SessionConfig,
        at: Timestamp,
    ) -> Result<&SoundMetadata, SessionError> {
        self.ensure_open()?;
        if !self.metadata_revealed {
            if !self.effort_gate_met(config, at) {
                return Err(SessionError::EffortGateNotMet);
            }
            self.metadata_revealed = true;
            self.push(at, EventKind::MetadataRevealed);
        }
        Ok(&self.sound.metadata)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::fixtures::*;

    fn log() -> TaskLog {
        TaskLog::new(TaskId::new("t1").unwrap(), sound(), String::from("ann"), at(0))
    }

    #[test]
    fn playback_bounds() {
        let mut l = log();
        l.record_playback(PlaybackKind::Completed, 12.0, at(1)).unwrap();
        assert!(matches!(
            l.record_playback(PlaybackKind::Started, 12.5, at(2)),
            Err(SessionError::PositionOutOfRange { .. })
        ));
        assert!(l.record_playback(PlaybackKind::Started, -0.1, at(2)).is_err());
        assert!(l.record_playback(PlaybackKind::Started, f64::NAN, at(2)).is_err());
        l.record_playback(PlaybackKind::Started, 0.0, at(3)).unwrap();
        let kinds: Vec<_> = l.events().iter().map(|e| e.at).collect();
        assert_eq!(kinds, vec![at(0), at(1), at(3)]);
    }

    #[test]
    fn gate_needs_effort() {
        let cfg = SessionConfig::default();
        let mut l = log();
        assert_eq!(l.request_metadata(&cfg, at(0)), Err(SessionError::EffortGateNotMet));
        assert_eq!(l.request_metadata(&cfg, at(29)), Err(SessionError::EffortGateNotMet));
        assert!(!l.metadata_revealed());
        assert_eq!(l.request_metadata(&cfg, at(30)).unwrap().tags, vec![String::from("city")]);
        assert!(l.metadata_revealed());
    }

    #[test]
    fn gate_opens_on_completed_playback_and_is_idempotent() {
        let cfg = SessionConfig::default();
        let mut l = log();
        l.record_playback(PlaybackKind::Started, 0.0, at(1)).unwrap();
        assert_eq!(l.request_metadata(&cfg, at(2)), Err(SessionError::EffortGateNotMet));
        l.record_playback(PlaybackKind::Completed, 12.0, at(3)).unwrap();
        l.request_metadata(&cfg, at(4)).unwrap();
        let n = l.events().len();
        l.request_metadata(&cfg, at(5)).unwrap();
        assert_eq!(l.events().len(), n);
        assert!(l.metadata_revealed());
    }

    #[test]
    fn event_wire_shape() {
        let e = TaskEvent {
            at: at(0),
            kind: EventKind::Select { category: cid("x") },
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"at":"2023-11-14T22:13:20Z","type":"select","category":"x"}"#
        );
    }
}
