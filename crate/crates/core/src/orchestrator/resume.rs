use serde::Serialize;

use crate::workload::{JobProgress, PhasePlan, WorkloadError};

/// Next unit of work for a job, derived from its persisted progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkItem {
    Chunk(u32),
    Transition(u32),
    Integrate,
    Done,
}

pub fn resume_point(plan: &PhasePlan, progress: &JobProgress) -> Result<WorkItem, WorkloadError> {
    progress.validate(plan)?;
    Ok(if progress.chunks_done < plan.equil_chunks {
        WorkItem::Chunk(progress.chunks_done)
    } else if progress.transitions_done < plan.n_transitions {
        WorkItem::Transition(progress.transitions_done)
    } else if !progress.integrated {
        WorkItem::Integrate
    } else {
        WorkItem::Done
    })
}

/// Progress after `item` has been persisted.
pub(crate) fn advance_progress(progress: &mut JobProgress, item: WorkItem) {
    match item {
        WorkItem::Chunk(_) => progress.chunks_done += 1,
        WorkItem::Transition(_) => progress.transitions_done += 1,
        WorkItem::Integrate => progress.integrated = true,
        WorkItem::Done => {}
    }
}
