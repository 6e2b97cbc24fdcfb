use serde::Serialize;
use taxon_core::session::{Annotation, PresenceVerdict, Task, TaskKind};
use taxon_core::TaskId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerdictCounts {
    pub present: usize,
    pub not_present: usize,
    pub unsure: usize,
}

impl VerdictCounts {
    fn add(&mut self, verdict: PresenceVerdict) {
        match verdict {
            PresenceVerdict::Present => self.present += 1,
            PresenceVerdict::NotPresent => self.not_present += 1,
            PresenceVerdict::Unsure => self.unsure += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskStats {
    pub task_id: TaskId,
    pub annotator_id: String,
    pub kind: TaskKind,
    /// Seconds from task creation to submission.
    pub duration_s: f64,
    pub label_count: usize,
    pub verdict_counts: VerdictCounts,
}

/// Stats for one submitted task given the annotations it emitted.
pub(crate) fn task_stats(task: &Task, emitted: &[&Annotation]) -> TaskStats {
    let log = task.log();
    let submitted = log.submitted_at().expect("only submitted tasks are summarised");
    let duration = submitted - log.created_at();
    let mut verdict_counts = VerdictCounts::default();
    for verdict in emitted.iter().filter_map(|a| a.verdict) {
        verdict_counts.add(verdict);
    }
    TaskStats {
        task_id: log.task_id().clone(),
        annotator_id: log.annotator_id().to_string(),
        kind: task.kind(),
        duration_s: duration.num_milliseconds() as f64 / 1000.0,
        label_count: emitted.len(),
        verdict_counts,
    }
}
