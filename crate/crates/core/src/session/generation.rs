use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::log::{EventKind, TaskLog};
use super::{Annotation, Provenance, SessionConfig, SessionError, SoundResource, Timestamp};
use crate::id::{CategoryId, TaskId};
use crate::taxonomy::Taxonomy;

/// Adds missing labels to one sound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTask {
    #[serde(flatten)]
    log: TaskLog,
    /// Selection in the order the labels were added.
    selected: Vec<CategoryId>,
}

impl GenerationTask {
    pub fn new(task_id: TaskId, sound: SoundResource, annotator_id: String, at: Timestamp) -> Self {
        Self {
            log: TaskLog::new(task_id, sound, annotator_id, at),
            selected: Vec::new(),
        }
    }

    pub fn log(&self) -> &TaskLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut TaskLog {
        &mut self.log
    }

    pub fn selected(&self) -> &[CategoryId] {
        &self.selected
    }

    pub fn add_label(
        &mut self,
        taxonomy: &Taxonomy,
        config: &SessionConfig,
        id: CategoryId,
        at: Timestamp,
    ) -> Result<(), SessionError> {
        self.log.ensure_open()?;
        let category = taxonomy
            .get(&id)
            .ok_or_else(|| SessionError::UnknownCategory(id.clone()))?;
        if category.is_abstract() && !config.abstract_selectable {
            return Err(SessionError::AbstractCategoryNotSelectable(id));
        }
        if self.selected.contains(&id) {
            return Err(SessionError::DuplicateSelection(id));
        }
        self.log.push(at, EventKind::Select { category: id.clone() });
        self.selected.push(id);
        Ok(())
    }

    pub fn remove_label(&mut self, id: &CategoryId, at: Timestamp) -> Result<(), SessionError> {
        self.log.ensure_open()?;
        let pos = self
            .selected
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| SessionError::NotSelected(id.clone()))?;
        self.selected.remove(pos);
        self.log.push(at, EventKind::Deselect { category: id.clone() });
        Ok(())
    }

    /// Finalizes the task and emits one `manual_generated` annotation per
    /// selected category. An empty selection is a valid outcome.
    pub fn submit(&mut self, at: Timestamp) -> Result<Vec<Annotation>, SessionError> {
        self.log.ensure_open()?;
        self.log.finalize(at);
        Ok(self
            .selected
            .iter()
            .map(|category| Annotation {
                sound_id: self.log.sound.sound_id.clone(),
                category_id: category.clone(),
                provenance: Provenance::ManualGenerated,
                original_category: None,
                verdict: None,
                annotator_id: Some(self.log.annotator_id.clone()),
                task_id: Some(self.log.task_id.clone()),
                created_at: at,
            })
            .collect())
    }
}
