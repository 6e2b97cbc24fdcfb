use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::log::{EventKind, TaskLog};
use super::{
    Annotation, PresenceVerdict, Provenance, SessionConfig, SessionError, SoundResource, Timestamp,
};
use crate::id::{CategoryId, RowId, TaskId};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    ToChild,
    ToSibling,
    /// First entry of a duplicated row; `from == to == original_category`.
    DuplicateOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub kind: MoveKind,
    pub from: CategoryId,
    pub to: CategoryId,
    pub at: Timestamp,
}

/// One proposed label and what the annotator did with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub row_id: RowId,
    pub original_category: CategoryId,
    pub current_category: CategoryId,
    pub move_history: Vec<Move>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<PresenceVerdict>,
}

/// A move history step that does not hold against the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("step {step}: starts at {found}, expected {expected}")]
    Discontinuous {
        step: usize,
        expected: CategoryId,
        found: CategoryId,
    },
    #[error("step {step}: {to} is not a child of {from}")]
    NotAChild {
        step: usize,
        from: CategoryId,
        to: CategoryId,
    },
    #[error("step {step}: {to} is not a sibling of {from}")]
    NotASibling {
        step: usize,
        from: CategoryId,
        to: CategoryId,
    },
    #[error("step {step}: misplaced duplicate marker")]
    MisplacedDuplicateMarker { step: usize },
    #[error("replay ends at {replayed}, row says {current}")]
    CurrentMismatch {
        replayed: CategoryId,
        current: CategoryId,
    },
    #[error("unknown category {0}")]
    UnknownCategory(CategoryId),
}

impl LabelRow {
    fn fresh(row_id: RowId, original: CategoryId) -> Self {
        Self {
            row_id,
            current_category: original.clone(),
            original_category: original,
            move_history: Vec::new(),
            verdict: None,
        }
    }

    /// Whether any real (non-marker) move is on the stack.
    pub fn has_moves(&self) -> bool {
        self.move_history
            .iter()
            .any(|m| m.kind != MoveKind::DuplicateOrigin)
    }

    /// Replays the move history from `original_category`, checking every
    /// step against the taxonomy, and returns the category it ends on.
    pub fn replay(&self, taxonomy: &Taxonomy) -> Result<CategoryId, ReplayError> {
        let unknown = |id: &CategoryId| ReplayError::UnknownCategory(id.clone());
        if !taxonomy.contains(&self.original_category) {
            return Err(unknown(&self.original_category));
        }
        let mut at = self.original_category.clone();
        for (step, mv) in self.move_history.iter().enumerate() {
            if mv.from != at {
                return Err(ReplayError::Discontinuous {
                    step,
                    expected: at,
                    found: mv.from.clone(),
                });
            }
            match mv.kind {
                MoveKind::DuplicateOrigin => {
                    if step != 0 || mv.to != mv.from {
                        return Err(ReplayError::MisplacedDuplicateMarker { step });
                    }
                }
                MoveKind::ToChild => {
                    if !taxonomy.is_child(&mv.from, &mv.to).map_err(|_| unknown(&mv.from))? {
                        return Err(ReplayError::NotAChild {
                            step,
                            from: mv.from.clone(),
                            to: mv.to.clone(),
                        });
                    }
                }
                MoveKind::ToSibling => {
                    if !taxonomy.is_sibling(&mv.from, &mv.to).map_err(|_| unknown(&mv.to))? {
                        return Err(ReplayError::NotASibling {
                            step,
                            from: mv.from.clone(),
                            to: mv.to.clone(),
                        });
                    }
                }
            }
            at = mv.to.clone();
        }
        if at != self.current_category {
            return Err(ReplayError::CurrentMismatch {
                replayed: at,
                current: self.current_category.clone(),
            });
        }
        Ok(at)
    }
}

/// Specializes proposed labels and validates their presence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTask {
    #[serde(flatten)]
    log: TaskLog,
    rows: Vec<LabelRow>,
    next_row: u32,
}

impl RefinementTask {
    /// One row per proposal, each starting at its proposed category.
    pub fn new(
        task_id: TaskId,
        sound: SoundResource,
        proposals: Vec<CategoryId>,
        annotator_id: String,
        taxonomy: &Taxonomy,
        at: Timestamp,
    ) -> Result<Self, SessionError> {
        if proposals.is_empty() {
            return Err(SessionError::EmptyProposalList);
        }
        if let Some(missing) = proposals.iter().find(|id| !taxonomy.contains(id)) {
            return Err(SessionError::UnknownCategory(missing.clone()));
        }
        let mut task = Self {
            log: TaskLog::new(task_id, sound, annotator_id, at),
            rows: Vec::with_capacity(proposals.len()),
            next_row: 1,
        };
        for original in proposals {
            let row_id = task.allocate_row_id();
            task.rows.push(LabelRow::fresh(row_id, original));
        }
        Ok(task)
    }

    fn allocate_row_id(&mut self) -> RowId {
        let id = RowId::new(format!("r{}", self.next_row)).expect("non-empty");
        self.next_row += 1;
        id
    }

    pub fn log(&self) -> &TaskLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut TaskLog {
        &mut self.log
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn row(&self, row_id: &RowId) -> Option<&LabelRow> {
        self.rows.iter().find(|r| &r.row_id == row_id)
    }

    fn open_row(&mut self, row_id: &RowId) -> Result<&mut LabelRow, SessionError> {
        self.log.ensure_open()?;
        self.rows
            .iter_mut()
            .find(|r| &r.row_id == row_id)
            .ok_or_else(|| SessionError::UnknownRow(row_id.clone()))
    }

    fn apply_move(&mut self, row_id: &RowId, kind: MoveKind, to: CategoryId, at: Timestamp) {
        let row = self
            .rows
            .iter_mut()
            .find(|r| &r.row_id == row_id)
            .expect("row checked by caller");
        let from = core::mem::replace(&mut row.current_category, to.clone());
        row.move_history.push(Move {
            kind,
            from: from.clone(),
            to: to.clone(),
            at,
        });
        row.verdict = None;
        self.log.push(
            at,
            EventKind::Move {
                row: row_id.clone(),
                kind,
                from,
                to,
            },
        );
    }

    /// Narrows a row to one of its current category's children.
    pub fn refine_to_child(
        &mut self,
        taxonomy: &Taxonomy,
        row_id: &RowId,
        child: CategoryId,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        let row = self.open_row(row_id)?;
        let from = row.current_category.clone();
        let is_child = taxonomy
            .is_child(&from, &child)
            .map_err(|_| SessionError::UnknownCategory(from.clone()))?;
        if !is_child {
            return Err(SessionError::NotAChild { from, to: child });
        }
        self.apply_move(row_id, MoveKind::ToChild, child, at);
        Ok(())
    }

    /// Moves a row sideways to a category sharing a parent with its current
    /// one.
    pub fn move_to_sibling(
        &mut self,
        taxonomy: &Taxonomy,
        config: &SessionConfig,
        row_id: &RowId,
        sibling: CategoryId,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        let row = self.open_row(row_id)?;
        if !config.sibling_moves {
            return Err(SessionError::SiblingExplorationDisabled);
        }
        let from = row.current_category.clone();
        let is_sibling = taxonomy.contains(&sibling)
            && taxonomy
                .is_sibling(&from, &sibling)
                .map_err(|_| SessionError::UnknownCategory(from.clone()))?;
        if !is_sibling {
            return Err(SessionError::NotASibling { from, to: sibling });
        }
        self.apply_move(row_id, MoveKind::ToSibling, sibling, at);
        Ok(())
    }

    /// Pops the last move and returns the row to where it came from.
    pub fn undo_move(&mut self, row_id: &RowId, at: Timestamp) -> Result<(), SessionError> {
        let row = self.open_row(row_id)?;
        match row.move_history.last() {
            Some(m) if m.kind != MoveKind::DuplicateOrigin => {}
            _ => return Err(SessionError::NothingToUndo(row_id.clone())),
        }
        let undone = row.move_history.pop().expect("checked above");
        row.current_category = undone.from.clone();
        row.verdict = None;
        self.log.push(
            at,
            EventKind::Undo {
                row: row_id.clone(),
                from: undone.to,
                to: undone.from,
            },
        );
        Ok(())
    }

    /// Appends a copy of a row, reset to the source row's proposed
    /// category, so one proposal can be refined into several labels.
    pub fn duplicate_row(&mut self, row_id: &RowId, at: Timestamp) -> Result<RowId, SessionError> {
        let original = self.open_row(row_id)?.original_category.clone();
        let new_id = self.allocate_row_id();
        let mut row = LabelRow::fresh(new_id.clone(), original.clone());
        row.move_history.push(Move {
            kind: MoveKind::DuplicateOrigin,
            from: original.clone(),
            to: original,
            at,
        });
        self.rows.push(row);
        self.log.push(
            at,
            EventKind::Duplicate {
                source: row_id.clone(),
                row: new_id.clone(),
            },
        );
        Ok(new_id)
    }

    pub fn set_presence(
        &mut self,
        row_id: &RowId,
        verdict: PresenceVerdict,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        let row = self.open_row(row_id)?;
        row.verdict = Some(verdict);
        self.log.push(
            at,
            EventKind::Verdict {
                row: row_id.clone(),
                verdict,
            },
        );
        Ok(())
    }

    /// Rows still waiting for a verdict, in row order.
    pub fn missing_verdicts(&self) -> Vec<RowId> {
        self.rows
            .iter()
            .filter(|r| r.verdict.is_none())
            .map(|r| r.row_id.clone())
            .collect()
    }

    /// Finalizes the task; one `manual_refined` annotation per row.
    pub fn submit(&mut self, at: Timestamp) -> Result<Vec<Annotation>, SessionError> {
        self.log.ensure_open()?;
        let missing = self.missing_verdicts();
        if !missing.is_empty() {
            return Err(SessionError::MissingVerdicts(missing));
        }
        self.log.finalize(at);
        Ok(self
            .rows
            .iter()
            .map(|row| Annotation {
                sound_id: self.log.sound.sound_id.clone(),
                category_id: row.current_category.clone(),
                provenance: Provenance::ManualRefined,
                original_category: Some(row.original_category.clone()),
                verdict: row.verdict,
                annotator_id: Some(self.log.annotator_id.clone()),
                task_id: Some(self.log.task_id.clone()),
                created_at: at,
            })
            .collect())
    }

    /// Replays every row; returns the first row that fails.
    pub fn validate_rows(&self, taxonomy: &Taxonomy) -> Result<(), (RowId, ReplayError)> {
        for row in &self.rows {
            row.replay(taxonomy).map_err(|e| (row.row_id.clone(), e))?;
        }
        Ok(())
    }
}
