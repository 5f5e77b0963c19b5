use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ledger::BillingLedger;

pub const METRICS_HEADER: &str = "time_s,region,instance_type,active_instances,vcpus_in_use,gpus_in_use";
pub const EVENT_LOG_HEADER: &str = "time_s,seq,kind,job_id,instance_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JobSubmitted,
    InstanceAcquired,
    ChunkDone,
    TransitionDone,
    IntegrateDone,
    Preemption,
    InstanceIdleTimeout,
    JobCompleted,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::JobSubmitted => "job_submitted",
            EventKind::InstanceAcquired => "instance_acquired",
            EventKind::ChunkDone => "chunk_done",
            EventKind::TransitionDone => "transition_done",
            EventKind::IntegrateDone => "integrate_done",
            EventKind::Preemption => "preemption",
            EventKind::InstanceIdleTimeout => "instance_idle_timeout",
            EventKind::JobCompleted => "job_completed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time_s: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub job_id: Option<String>,
    pub instance_id: Option<String>,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.time_s,
            self.seq,
            self.kind,
            self.job_id.as_deref().unwrap_or(""),
            self.instance_id.as_deref().unwrap_or("")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time_s: f64,
    pub region: String,
    pub instance_type: String,
    pub active_instances: u32,
    pub vcpus_in_use: u64,
    pub gpus_in_use: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub seed: u64,
    pub currency: String,
    pub makespan_s: f64,
    pub makespan_h: f64,
    pub total_cost: f64,
    pub productive_cost: f64,
    pub productive_core_hours: f64,
    pub wasted_core_hours: f64,
    pub n_ddg: u64,
    pub cost_per_ddg: Option<f64>,
    pub jobs_submitted: u64,
    pub jobs_completed: u64,
    pub jobs_failed: u64,
    pub preemptions: u64,
    pub instances_acquired: u64,
    pub peak_active_instances: u64,
    pub peak_vcpus_in_use: u64,
    pub peak_gpus_in_use: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub summary: SummaryReport,
    pub metrics: Vec<MetricsRow>,
    pub ledger: BillingLedger,
    /// Empty unless event recording was enabled.
    pub events: Vec<EventRecord>,
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.time_s, r.region, r.instance_type, r.active_instances, r.vcpus_in_use, r.gpus_in_use
        )?;
    }
    Ok(())
}

/// Parse a file written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: io::Read>(reader: R) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn write_event_log<W: Write>(mut w: W, events: &[EventRecord]) -> io::Result<()> {
    writeln!(w, "{EVENT_LOG_HEADER}")?;
    for e in events {
        writeln!(w, "{e}")?;
    }
    Ok(())
}

fn create(path: &Path) -> io::Result<io::BufWriter<std::fs::File>> {
    Ok(io::BufWriter::new(std::fs::File::create(path)?))
}

/// Write `metrics.csv`, `summary.json` and, when events were recorded,
/// `events.log` into `dir`, replacing earlier files.
pub fn write_outputs(dir: &Path, out: &SimOutput, event_log: bool) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut m = create(&dir.join("metrics.csv"))?;
    write_metrics_csv(&mut m, &out.metrics)?;
    m.flush()?;
    let mut s = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut s, &out.summary)?;
    writeln!(s)?;
    s.flush()?;
    let log_path = dir.join("events.log");
    if event_log {
        let mut e = create(&log_path)?;
        write_event_log(&mut e, &out.events)?;
        e.flush()?;
    } else if log_path.exists() {
        std::fs::remove_file(log_path)?;
    }
    Ok(())
}
