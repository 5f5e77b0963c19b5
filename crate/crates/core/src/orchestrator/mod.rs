//! Discrete-event simulation of an ensemble run across cloud regions.

mod config;
mod engine;
mod ledger;
mod placement;
mod report;
mod resume;
mod routing;
mod scenario;

use thiserror::Error;

pub use config::{
    HazardEntry, IdleGrace, PoolOverride, PreemptionModel, ScriptedPreemption, SimConfig, DEFAULT_IDLE_GRACE_S,
    DEFAULT_METRICS_INTERVAL_S,
};
pub use engine::{JobCounts, JobStatus, SimInput, Simulation};
pub use ledger::{BillingLedger, LedgerEntry};
pub use placement::{place_job, AllowedType, Infeasible, InstanceState, Placement, TypeOption};
pub use report::{
    read_metrics_csv, write_event_log, write_metrics_csv, write_outputs, EventKind, EventRecord, MetricsRow, SimOutput,
    SummaryReport, EVENT_LOG_HEADER, METRICS_HEADER,
};
pub use resume::{resume_point, WorkItem};
pub use routing::{Router, RoutingError, RoutingMode, RoutingPolicy};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioFile};

use crate::catalog::CatalogError;
use crate::perfmodel::PerfError;
use crate::workload::WorkloadError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{queued} job(s) still queued with no pending events at t = {time} s")]
    Stalled { queued: usize, time: f64 },
    #[error("time regression: clock {now} s, requested {until} s")]
    TimeRegression { now: f64, until: f64 },
}

/// Load inputs, simulate and return the full output.
pub fn run(input: SimInput, record_events: bool) -> Result<SimOutput, SimError> {
    Simulation::new(input)?.record_events(record_events).run()
}
