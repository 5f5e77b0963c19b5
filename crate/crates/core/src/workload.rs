//! Ensemble expansion into concrete, chunked jobs.
//!
//! Every edge of every target yields `replicas × directions × forcefields`
//! protein-ligand complex jobs plus the same number of ligand-in-water jobs.
//! Each job runs an equilibration split into fixed-step chunks followed by a
//! series of short transitions, and finishes with a zero-duration integration
//! step. Progress is persisted at every chunk and transition boundary.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Loop bound of the job driver's equilibration loop.
pub const MAX_CHUNK_ITERATIONS: u32 = 8;
pub const DEFAULT_CHUNK_STEPS: u64 = 500_000;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{field} must be >= 1")]
    ZeroCount { field: &'static str },
    #[error("{chunks} equilibration chunks exceed the driver's {limit} iterations")]
    ChunkLimit { chunks: u64, limit: u32 },
    #[error("duplicate target name `{0}`")]
    DuplicateTarget(String),
    #[error("invalid progress {progress} for plan: {reason}")]
    InvalidProgress {
        progress: JobProgress,
        reason: &'static str,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed workload: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Complex,
    Ligand,
}

impl JobKind {
    pub const ALL: [JobKind; 2] = [JobKind::Complex, JobKind::Ligand];

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Complex => "complex",
            JobKind::Ligand => "ligand",
        }
    }
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    #[serde(default)]
    pub complex_atoms: u64,
    #[serde(default)]
    pub ligand_atoms: u64,
    pub edges: u32,
    /// Benchmark system used to time this target's complex jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex_system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ligand_system: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindResources {
    pub vcpus: u32,
    #[serde(default)]
    pub gpus: u32,
    pub system: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcePolicy {
    pub ligand: KindResources,
    pub complex: KindResources,
}

impl Default for ResourcePolicy {
    fn default() -> Self {
        ResourcePolicy {
            ligand: KindResources {
                vcpus: 8,
                gpus: 0,
                system: "cmet_ligand".into(),
            },
            complex: KindResources {
                vcpus: 4,
                gpus: 1,
                system: "cmet_complex".into(),
            },
        }
    }
}

impl ResourcePolicy {
    pub fn for_kind(&self, kind: JobKind) -> &KindResources {
        match kind {
            JobKind::Complex => &self.complex,
            JobKind::Ligand => &self.ligand,
        }
    }
}

/// Delayed submission of all jobs of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub kind: JobKind,
    pub submit_at_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub name: String,
    pub targets: Vec<TargetSpec>,
    pub replicas: u32,
    pub directions: u32,
    pub forcefields: u32,
    pub equil_ns: f64,
    pub n_transitions: u32,
    pub transition_ps: f64,
    pub timestep_fs: f64,
    #[serde(default = "default_chunk_steps")]
    pub chunk_steps: u64,
    #[serde(default)]
    pub resources: ResourcePolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waves: Vec<Wave>,
}

fn default_chunk_steps() -> u64 {
    DEFAULT_CHUNK_STEPS
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        for (field, v) in [
            ("replicas", self.replicas),
            ("directions", self.directions),
            ("forcefields", self.forcefields),
        ] {
            if v == 0 {
                return Err(WorkloadError::ZeroCount { field });
            }
        }
        for (field, v) in [
            ("equil_ns", self.equil_ns),
            ("transition_ps", self.transition_ps),
            ("timestep_fs", self.timestep_fs),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(WorkloadError::NonPositive { field, value: v });
            }
        }
        if self.resources.ligand.vcpus == 0 {
            return Err(WorkloadError::ZeroCount {
                field: "resources.ligand.vcpus",
            });
        }
        if self.resources.complex.vcpus == 0 {
            return Err(WorkloadError::ZeroCount {
                field: "resources.complex.vcpus",
            });
        }
        let mut names = std::collections::HashSet::new();
        for t in &self.targets {
            if !names.insert(t.name.as_str()) {
                return Err(WorkloadError::DuplicateTarget(t.name.clone()));
            }
        }
        self.phase_plan().map(|_| ())
    }

    pub fn phase_plan(&self) -> Result<PhasePlan, WorkloadError> {
        make_phase_plan(
            self.equil_ns,
            self.timestep_fs,
            self.chunk_steps,
            self.n_transitions,
            self.transition_ps,
        )
    }

    pub fn total_edges(&self) -> u64 {
        self.targets.iter().map(|t| u64::from(t.edges)).sum()
    }

    /// Number of free-energy differences the ensemble produces.
    pub fn ddg_count(&self) -> u64 {
        self.total_edges() * u64::from(self.forcefields)
    }

    pub fn job_count(&self) -> u64 {
        2 * self.total_edges() * u64::from(self.replicas) * u64::from(self.directions) * u64::from(self.forcefields)
    }

    pub fn submit_time(&self, kind: JobKind) -> f64 {
        self.waves
            .iter()
            .find(|w| w.kind == kind)
            .map_or(0.0, |w| w.submit_at_s)
    }
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<EnsembleSpec, WorkloadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let spec: EnsembleSpec = serde_json::from_str(&text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub equil_chunks: u32,
    pub chunk_steps: u64,
    pub total_equil_steps: u64,
    pub n_transitions: u32,
    pub transition_steps: u64,
    pub max_chunk_iterations: u32,
    pub timestep_fs: f64,
}

impl PhasePlan {
    /// Steps run by equilibration chunk `k`; the last chunk may be short.
    pub fn chunk_len(&self, k: u32) -> u64 {
        let start = u64::from(k) * self.chunk_steps;
        self.chunk_steps.min(self.total_equil_steps.saturating_sub(start))
    }

    pub fn steps_to_ns(&self, steps: u64) -> f64 {
        steps as f64 * self.timestep_fs / 1e6
    }

    pub fn equil_ns(&self) -> f64 {
        self.steps_to_ns(self.total_equil_steps)
    }

    pub fn transition_ns_total(&self) -> f64 {
        self.steps_to_ns(u64::from(self.n_transitions) * self.transition_steps)
    }

    pub fn trajectory_ns(&self) -> f64 {
        trajectory_ns(self, self.timestep_fs)
    }
}

pub fn make_phase_plan(
    equil_ns: f64,
    timestep_fs: f64,
    chunk_steps: u64,
    n_transitions: u32,
    transition_ps: f64,
) -> Result<PhasePlan, WorkloadError> {
    for (field, v) in [
        ("equil_ns", equil_ns),
        ("timestep_fs", timestep_fs),
        ("transition_ps", transition_ps),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(WorkloadError::NonPositive { field, value: v });
        }
    }
    if chunk_steps == 0 {
        return Err(WorkloadError::NonPositive {
            field: "chunk_steps",
            value: 0.0,
        });
    }
    let total_equil_steps = (equil_ns * 1e6 / timestep_fs).round() as u64;
    if total_equil_steps == 0 {
        return Err(WorkloadError::NonPositive {
            field: "equil_ns",
            value: equil_ns,
        });
    }
    let chunks = total_equil_steps.div_ceil(chunk_steps);
    if chunks > u64::from(MAX_CHUNK_ITERATIONS) {
        return Err(WorkloadError::ChunkLimit {
            chunks,
            limit: MAX_CHUNK_ITERATIONS,
        });
    }
    let transition_steps = (transition_ps * 1e3 / timestep_fs).round() as u64;
    Ok(PhasePlan {
        equil_chunks: chunks as u32,
        chunk_steps,
        total_equil_steps,
        n_transitions,
        transition_steps,
        max_chunk_iterations: MAX_CHUNK_ITERATIONS,
        timestep_fs,
    })
}

/// Nanoseconds of trajectory one job produces.
pub fn trajectory_ns(plan: &PhasePlan, timestep_fs: f64) -> f64 {
    let steps = plan.total_equil_steps + u64::from(plan.n_transitions) * plan.transition_steps;
    steps as f64 * timestep_fs / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub target: String,
    pub kind: JobKind,
    /// Benchmark system whose timings drive this job's runtime.
    pub system: String,
    pub vcpu_demand: u32,
    pub gpu_demand: u32,
    pub phase_plan: PhasePlan,
    pub input_ref: String,
    pub output_ref: String,
}

fn state_label(direction: u32) -> String {
    match direction {
        0 => "stateA".to_string(),
        1 => "stateB".to_string(),
        d => format!("state{d}"),
    }
}

pub fn expand_ensemble(spec: &EnsembleSpec) -> Result<Vec<JobSpec>, WorkloadError> {
    spec.validate()?;
    let plan = spec.phase_plan()?;
    let mut jobs = Vec::with_capacity(spec.job_count() as usize);
    for target in &spec.targets {
        for edge in 0..target.edges {
            for direction in 0..spec.directions {
                let state = state_label(direction);
                for replica in 1..=spec.replicas {
                    for ff in 0..spec.forcefields {
                        for kind in JobKind::ALL {
                            let res = spec.resources.for_kind(kind);
                            let system = match kind {
                                JobKind::Complex => target.complex_system.as_ref(),
                                JobKind::Ligand => target.ligand_system.as_ref(),
                            }
                            .unwrap_or(&res.system)
                            .clone();
                            let stem = format!("{}/edge_{edge:03}/{state}/run{replica}/ff{ff}/{kind}", target.name);
                            jobs.push(JobSpec {
                                input_ref: format!("input/{stem}/"),
                                output_ref: format!("output/{stem}/"),
                                id: stem,
                                target: target.name.clone(),
                                kind,
                                system,
                                vcpu_demand: res.vcpus,
                                gpu_demand: res.gpus,
                                phase_plan: plan,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Persisted checkpoint state of one job.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobProgress {
    pub chunks_done: u32,
    pub transitions_done: u32,
    pub integrated: bool,
}

impl fmt::Display for JobProgress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.chunks_done, self.transitions_done, self.integrated
        )
    }
}

impl JobProgress {
    pub fn validate(&self, plan: &PhasePlan) -> Result<(), WorkloadError> {
        let bad = |reason| {
            Err(WorkloadError::InvalidProgress {
                progress: *self,
                reason,
            })
        };
        if self.chunks_done > plan.equil_chunks {
            return bad("chunks_done exceeds equil_chunks");
        }
        if self.transitions_done > plan.n_transitions {
            return bad("transitions_done exceeds n_transitions");
        }
        if self.transitions_done > 0 && self.chunks_done < plan.equil_chunks {
            return bad("transitions started before equilibration finished");
        }
        if self.integrated && (self.chunks_done < plan.equil_chunks || self.transitions_done < plan.n_transitions) {
            return bad("integrated before all transitions finished");
        }
        Ok(())
    }

    pub fn is_done(&self, plan: &PhasePlan) -> bool {
        self.integrated && self.chunks_done == plan.equil_chunks && self.transitions_done == plan.n_transitions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(name: &str, edges: u32) -> TargetSpec {
        TargetSpec {
            name: name.into(),
            complex_atoms: 0,
            ligand_atoms: 0,
            edges,
            complex_system: None,
            ligand_system: None,
        }
    }

    fn spec(targets: Vec<TargetSpec>, forcefields: u32) -> EnsembleSpec {
        EnsembleSpec {
            name: String::new(),
            targets,
            replicas: 3,
            directions: 2,
            forcefields,
            equil_ns: 6.0,
            n_transitions: 80,
            transition_ps: 50.0,
            timestep_fs: 2.0,
            chunk_steps: DEFAULT_CHUNK_STEPS,
            resources: ResourcePolicy::default(),
            waves: vec![],
        }
    }

    #[test]
    fn standard_plan() {
        let plan = make_phase_plan(6.0, 2.0, 500_000, 80, 50.0).unwrap();
        assert_eq!(plan.total_equil_steps, 3_000_000);
        assert_eq!(plan.equil_chunks, 6);
        assert_eq!(plan.n_transitions, 80);
        assert_eq!(plan.transition_steps, 25_000);
        assert_eq!(plan.max_chunk_iterations, 8);
        assert_eq!(plan.trajectory_ns(), 10.0);
    }

    #[test]
    fn single_chunk_plan_without_transitions() {
        let plan = make_phase_plan(1.0, 2.0, 500_000, 0, 50.0).unwrap();
        assert_eq!(plan.equil_chunks, 1);
        assert_eq!(plan.n_transitions, 0);
        assert_eq!(trajectory_ns(&plan, 2.0), 1.0);
    }

    #[test]
    fn four_femtosecond_plan() {
        let plan = make_phase_plan(6.0, 4.0, 500_000, 80, 50.0).unwrap();
        assert_eq!(plan.total_equil_steps, 1_500_000);
        assert_eq!(plan.equil_chunks, 3);
        assert_eq!(plan.transition_steps, 12_500);
    }

    #[test]
    fn zero_transitions_three_million_steps_is_six_ns() {
        let mut plan = make_phase_plan(6.0, 2.0, 500_000, 80, 50.0).unwrap();
        plan.n_transitions = 0;
        assert_eq!(trajectory_ns(&plan, 2.0), 6.0);
    }

    #[test]
    fn short_last_chunk() {
        let plan = make_phase_plan(2.5, 2.0, 500_000, 0, 50.0).unwrap();
        assert_eq!(plan.equil_chunks, 3);
        assert_eq!(plan.chunk_len(0), 500_000);
        assert_eq!(plan.chunk_len(2), 250_000);
    }

    #[test]
    fn plan_rejects_bad_input() {
        assert!(matches!(
            make_phase_plan(0.0, 2.0, 500_000, 80, 50.0),
            Err(WorkloadError::NonPositive { .. })
        ));
        assert!(matches!(
            make_phase_plan(6.0, -2.0, 500_000, 80, 50.0),
            Err(WorkloadError::NonPositive { .. })
        ));
        assert!(matches!(
            make_phase_plan(6.0, 2.0, 0, 80, 50.0),
            Err(WorkloadError::NonPositive { .. })
        ));
        assert!(matches!(
            make_phase_plan(10.0, 2.0, 500_000, 80, 50.0),
            Err(WorkloadError::ChunkLimit { chunks: 10, limit: 8 })
        ));
    }

    #[test]
    fn cdk8_alone_gives_972_complex_jobs() {
        let jobs = expand_ensemble(&spec(vec![target("cdk8", 54)], 3)).unwrap();
        assert_eq!(jobs.iter().filter(|j| j.kind == JobKind::Complex).count(), 972);
        assert_eq!(jobs.len(), 1944);
    }

    #[test]
    fn ids_are_unique_and_encode_coordinates() {
        let jobs = expand_ensemble(&spec(vec![target("cmet", 2)], 2)).unwrap();
        let ids: std::collections::HashSet<_> = jobs.iter().map(|j| j.id.as_str()).collect();
        assert_eq!(ids.len(), jobs.len());
        assert_eq!(jobs[0].id, "cmet/edge_000/stateA/run1/ff0/complex");
        assert_eq!(jobs[1].id, "cmet/edge_000/stateA/run1/ff0/ligand");
        assert_eq!(jobs[1].vcpu_demand, 8);
        assert_eq!(jobs[1].gpu_demand, 0);
        assert_eq!(jobs[0].gpu_demand, 1);
        assert_eq!(jobs[0].system, "cmet_complex");
    }

    #[test]
    fn progress_invariants() {
        let plan = make_phase_plan(6.0, 2.0, 500_000, 80, 50.0).unwrap();
        let ok = JobProgress {
            chunks_done: 6,
            transitions_done: 37,
            integrated: false,
        };
        assert!(ok.validate(&plan).is_ok());
        let bad = JobProgress {
            chunks_done: 4,
            transitions_done: 1,
            integrated: false,
        };
        assert!(bad.validate(&plan).is_err());
        let over = JobProgress {
            chunks_done: 7,
            ..Default::default()
        };
        assert!(over.validate(&plan).is_err());
        let early = JobProgress {
            chunks_done: 6,
            transitions_done: 79,
            integrated: true,
        };
        assert!(early.validate(&plan).is_err());
    }

    #[test]
    fn workload_document_parses_with_defaults() {
        let text = r#"{"targets": [{"name": "cmet", "edges": 2}], "replicas": 3, "directions": 2,
                       "forcefields": 1, "equil_ns": 6, "n_transitions": 80, "transition_ps": 50,
                       "timestep_fs": 2}"#;
        let spec: EnsembleSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.chunk_steps, 500_000);
        assert_eq!(spec.job_count(), 24);
        assert_eq!(spec.ddg_count(), 2);
        assert_eq!(spec.submit_time(JobKind::Ligand), 0.0);
    }

    #[test]
    fn zero_replicas_rejected() {
        let mut s = spec(vec![target("a", 1)], 1);
        s.replicas = 0;
        assert_eq!(s.validate(), Err(WorkloadError::ZeroCount { field: "replicas" }));
    }
}
