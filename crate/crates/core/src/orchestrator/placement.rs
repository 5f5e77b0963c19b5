use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One entry of a job kind's ordered instance-type preference list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllowedType {
    pub instance: String,
    /// Benchmark instance whose timings apply, when different from `instance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench_instance: Option<String>,
    /// Per-type override of the job's vCPU demand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vcpus: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpus: Option<u32>,
}

impl AllowedType {
    pub fn new(instance: impl Into<String>) -> Self {
        AllowedType {
            instance: instance.into(),
            bench_instance: None,
            vcpus: None,
            gpus: None,
        }
    }

    pub fn bench_name(&self) -> &str {
        self.bench_instance.as_deref().unwrap_or(&self.instance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceState {
    pub id: String,
    pub instance_type: String,
    pub region: String,
    pub family: String,
    pub vcpus: u32,
    pub gpus: u32,
    /// Billing start; in the future while the acquisition is pending.
    pub acquired_at: f64,
    pub terminated_at: Option<f64>,
    pub active: bool,
    /// Indices into the simulation's job list.
    pub resident_jobs: BTreeSet<usize>,
    pub free_vcpus: u32,
    pub free_gpus: u32,
    /// Currency per hour.
    pub rate: f64,
}

impl InstanceState {
    pub fn is_live(&self) -> bool {
        self.terminated_at.is_none()
    }

    pub fn fits(&self, vcpus: u32, gpus: u32) -> bool {
        self.free_vcpus >= vcpus && self.free_gpus >= gpus
    }
}

/// A preference-list entry resolved for one job in one region.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeOption {
    pub instance_type: String,
    pub family: String,
    pub vcpus: u32,
    pub gpus: u32,
    pub demand_vcpus: u32,
    pub demand_gpus: u32,
    /// Benchmarks cover this job's system on the type.
    pub timed: bool,
    /// The type has a price in the region.
    pub priced: bool,
}

impl TypeOption {
    pub fn feasible(&self) -> bool {
        self.timed && self.demand_vcpus <= self.vcpus && self.demand_gpus <= self.gpus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Index of an existing instance.
    Packed {
        instance: usize,
    },
    /// Index into the option list.
    Acquire {
        option: usize,
    },
    Queued,
}

#[derive(Debug, Error, PartialEq)]
#[error("job `{job}` fits none of its allowed instance types")]
pub struct Infeasible {
    pub job: String,
}

/// First-fit onto live instances of the region (acquisition order), else the
/// first preferred type with remaining pool capacity, else queue.
/// `pool_remaining` reports free pool slots for a family in the region.
pub fn place_job<'a>(
    job_id: &str,
    options: &[TypeOption],
    region_instances: impl IntoIterator<Item = (usize, &'a InstanceState)>,
    pool_remaining: impl Fn(&str) -> u32,
) -> Result<Placement, Infeasible> {
    if !options.iter().any(TypeOption::feasible) {
        return Err(Infeasible {
            job: job_id.to_string(),
        });
    }
    for (idx, inst) in region_instances {
        if !inst.is_live() {
            continue;
        }
        let fits = options.iter().any(|o| {
            o.feasible()
                && o.priced
                && o.instance_type == inst.instance_type
                && inst.fits(o.demand_vcpus, o.demand_gpus)
        });
        if fits {
            return Ok(Placement::Packed { instance: idx });
        }
    }
    for (i, o) in options.iter().enumerate() {
        if o.feasible() && o.priced && pool_remaining(&o.family) > 0 {
            return Ok(Placement::Acquire { option: i });
        }
    }
    Ok(Placement::Queued)
}
