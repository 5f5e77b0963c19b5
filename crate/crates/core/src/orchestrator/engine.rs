use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{IdleGrace, SimConfig};
use super::ledger::BillingLedger;
use super::placement::{place_job, InstanceState, Placement, TypeOption};
use super::report::{EventKind, EventRecord, MetricsRow, SimOutput, SummaryReport};
use super::resume::{advance_progress, resume_point, WorkItem};
use super::routing::Router;
use super::SimError;
use crate::catalog::{lookup_rate, Catalog};
use crate::perfmodel::{phase_rates, BenchmarkRecord, PhaseRates};
use crate::workload::{expand_ensemble, EnsembleSpec, JobKind, JobProgress, JobSpec};

/// Everything a run needs. `submit_times` is parallel to `jobs`.
#[derive(Debug, Clone)]
pub struct SimInput {
    pub catalog: Catalog,
    pub jobs: Vec<JobSpec>,
    pub submit_times: Vec<f64>,
    pub n_ddg: u64,
    pub records: Vec<BenchmarkRecord>,
    pub config: SimConfig,
}

impl SimInput {
    /// Explicit job list, all submitted at t = 0.
    pub fn new(catalog: Catalog, jobs: Vec<JobSpec>, records: Vec<BenchmarkRecord>, config: SimConfig) -> Self {
        SimInput {
            submit_times: vec![0.0; jobs.len()],
            catalog,
            jobs,
            n_ddg: 0,
            records,
            config,
        }
    }

    pub fn from_ensemble(
        catalog: Catalog,
        spec: &EnsembleSpec,
        records: Vec<BenchmarkRecord>,
        config: SimConfig,
    ) -> Result<Self, SimError> {
        let jobs = expand_ensemble(spec)?;
        let submit_times = jobs.iter().map(|j| spec.submit_time(j.kind)).collect();
        Ok(SimInput {
            catalog,
            jobs,
            submit_times,
            n_ddg: spec.ddg_count(),
            records,
            config,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Unreleased,
    Queued,
    /// Placed on an instance whose acquisition is still pending.
    Waiting,
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone)]
struct JobState {
    status: JobStatus,
    progress: JobProgress,
    token: u64,
    instance: Option<usize>,
    vcpus: u32,
    gpus: u32,
    rates: Option<PhaseRates>,
    item: WorkItem,
    item_started: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Submit { job: usize },
    Acquired { inst: usize },
    WorkDone { job: usize, token: u64 },
    Completed { job: usize, token: u64 },
    Preempt { inst: usize },
    IdleTimeout { inst: usize, token: u64 },
}

impl Action {
    /// Completions first, then arrivals, then failures at equal times.
    fn class(self) -> u8 {
        match self {
            Action::WorkDone { .. } | Action::Completed { .. } => 0,
            Action::Submit { .. } | Action::Acquired { .. } => 1,
            Action::Preempt { .. } | Action::IdleTimeout { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    class: u8,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobCounts {
    pub total: u64,
    pub submitted: u64,
    pub completed: u64,
    pub failed: u64,
    pub in_flight: u64,
}

/// Discrete-event simulation of one run. Single-threaded; independent runs
/// may be moved to other threads.
#[derive(Debug, Clone)]
pub struct Simulation {
    catalog: Catalog,
    jobs: Vec<JobSpec>,
    n_ddg: u64,
    config: SimConfig,
    rates: BTreeMap<(String, String), Option<PhaseRates>>,
    routers: Vec<Router>,
    kind_router: BTreeMap<JobKind, usize>,
    route_rng: ChaCha8Rng,
    hazard_rng: ChaCha8Rng,
    state: Vec<JobState>,
    instances: Vec<InstanceState>,
    region_instances: BTreeMap<String, Vec<usize>>,
    live_by_family: BTreeMap<(String, String), u32>,
    active_by_type: BTreeMap<(String, String), u32>,
    queues: BTreeMap<String, VecDeque<usize>>,
    next_slot: BTreeMap<String, f64>,
    idle_token: Vec<u64>,
    heap: BinaryHeap<Scheduled>,
    sched_seq: u64,
    log_seq: u64,
    clock: f64,
    record_events: bool,
    events: Vec<EventRecord>,
    metrics: Vec<MetricsRow>,
    next_sample: f64,
    peak: (u64, u64, u64),
    ledger: BillingLedger,
    submitted: u64,
    completed: u64,
    failed: u64,
    preemptions: u64,
    makespan: f64,
}

fn item_seconds(steps: u64, timestep_fs: f64, ns_per_day: f64) -> f64 {
    steps as f64 * timestep_fs * 86_400.0 / (1e6 * ns_per_day)
}

impl Simulation {
    pub fn new(input: SimInput) -> Result<Self, SimError> {
        let SimInput {
            catalog,
            jobs,
            submit_times,
            n_ddg,
            records,
            config,
        } = input;
        validate_config(&catalog, &config)?;
        if submit_times.len() != jobs.len() {
            return Err(SimError::Config("submit_times must match the job list".into()));
        }
        if let Some(t) = submit_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(SimError::Config(format!(
                "submit time must be finite and >= 0 (got {t})"
            )));
        }
        let mut routers = vec![Router::new(&config.routing)?];
        let mut kind_router = BTreeMap::new();
        for kind in JobKind::ALL {
            match config.routing_by_kind.get(&kind) {
                Some(p) => {
                    routers.push(Router::new(p)?);
                    kind_router.insert(kind, routers.len() - 1);
                }
                None => {
                    kind_router.insert(kind, 0);
                }
            }
        }
        let mut rates = BTreeMap::new();
        for job in &jobs {
            for allowed in config.allowed_types.get(&job.kind).into_iter().flatten() {
                let key = (job.system.clone(), allowed.bench_name().to_string());
                if let std::collections::btree_map::Entry::Vacant(e) = rates.entry(key) {
                    let r = phase_rates(&records, &e.key().0, &e.key().1, config.transition_slowdown).ok();
                    e.insert(r);
                }
            }
        }
        let mut hazard_rng = ChaCha8Rng::seed_from_u64(config.seed);
        hazard_rng.set_stream(1);
        let state = jobs
            .iter()
            .map(|_| JobState {
                status: JobStatus::Unreleased,
                progress: JobProgress::default(),
                token: 0,
                instance: None,
                vcpus: 0,
                gpus: 0,
                rates: None,
                item: WorkItem::Chunk(0),
                item_started: 0.0,
            })
            .collect();
        let mut sim = Simulation {
            route_rng: ChaCha8Rng::seed_from_u64(config.seed),
            hazard_rng,
            catalog,
            jobs,
            n_ddg,
            rates,
            routers,
            kind_router,
            state,
            instances: Vec::new(),
            region_instances: BTreeMap::new(),
            live_by_family: BTreeMap::new(),
            active_by_type: BTreeMap::new(),
            queues: BTreeMap::new(),
            next_slot: BTreeMap::new(),
            idle_token: Vec::new(),
            heap: BinaryHeap::new(),
            sched_seq: 0,
            log_seq: 0,
            clock: 0.0,
            record_events: false,
            events: Vec::new(),
            metrics: Vec::new(),
            next_sample: 0.0,
            peak: (0, 0, 0),
            ledger: BillingLedger::default(),
            submitted: 0,
            completed: 0,
            failed: 0,
            preemptions: 0,
            makespan: 0.0,
            config,
        };
        for (job, &t) in submit_times.iter().enumerate() {
            sim.schedule(t, Action::Submit { job });
        }
        for sp in sim.config.scripted_preemptions.clone() {
            let inst = sp
                .instance
                .strip_prefix('i')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| {
                    SimError::Config(format!("scripted preemption names unknown instance `{}`", sp.instance))
                })?;
            sim.schedule(sp.at_s, Action::Preempt { inst });
        }
        Ok(sim)
    }

    /// Keep every dispatched event for [`SimOutput::events`].
    pub fn record_events(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn instances(&self) -> &[InstanceState] {
        &self.instances
    }

    pub fn jobs(&self) -> &[JobSpec] {
        &self.jobs
    }

    pub fn job_status(&self, job: usize) -> JobStatus {
        self.state[job].status
    }

    /// Persisted checkpoint state of a job.
    pub fn job_progress(&self, job: usize) -> JobProgress {
        self.state[job].progress
    }

    pub fn ledger(&self) -> &BillingLedger {
        &self.ledger
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    /// Job tallies recomputed from per-job status.
    pub fn counts(&self) -> JobCounts {
        let mut c = JobCounts {
            total: self.jobs.len() as u64,
            submitted: 0,
            completed: 0,
            failed: 0,
            in_flight: 0,
        };
        for s in &self.state {
            match s.status {
                JobStatus::Unreleased => continue,
                JobStatus::Completed => c.completed += 1,
                JobStatus::Failed => c.failed += 1,
                _ => c.in_flight += 1,
            }
            c.submitted += 1;
        }
        c
    }

    /// Instance index and (vCPU, GPU) reservation of a placed job.
    pub fn job_placement(&self, job: usize) -> Option<(usize, u32, u32)> {
        let s = &self.state[job];
        s.instance.map(|i| (i, s.vcpus, s.gpus))
    }

    /// Work item a running job is executing and when it started.
    pub fn current_item(&self, job: usize) -> Option<(WorkItem, f64)> {
        let s = &self.state[job];
        (s.status == JobStatus::Running).then_some((s.item, s.item_started))
    }

    /// Wall-clock seconds the given item takes for a job on its current
    /// instance, latencies excluded.
    pub fn item_duration(&self, job: usize, item: WorkItem) -> Option<f64> {
        let rates = self.state[job].rates?;
        let plan = &self.jobs[job].phase_plan;
        Some(match item {
            WorkItem::Chunk(k) => item_seconds(plan.chunk_len(k), plan.timestep_fs, rates.equilibration),
            WorkItem::Transition(_) => item_seconds(plan.transition_steps, plan.timestep_fs, rates.transition),
            WorkItem::Integrate | WorkItem::Done => 0.0,
        })
    }

    fn schedule(&mut self, time: f64, action: Action) {
        self.heap.push(Scheduled {
            time,
            class: action.class(),
            seq: self.sched_seq,
            action,
        });
        self.sched_seq += 1;
    }

    fn all_resolved(&self) -> bool {
        self.completed + self.failed == self.jobs.len() as u64
    }

    fn is_stale(&self, action: Action) -> bool {
        match action {
            Action::Submit { .. } | Action::Acquired { .. } => false,
            Action::WorkDone { job, token } | Action::Completed { job, token } => self.state[job].token != token,
            Action::Preempt { inst } => {
                self.all_resolved() || self.instances.get(inst).is_none_or(|i| !i.active || !i.is_live())
            }
            Action::IdleTimeout { inst, token } => {
                let i = &self.instances[inst];
                !i.is_live() || !i.resident_jobs.is_empty() || self.idle_token[inst] != token
            }
        }
    }

    /// Dispatch events until one is logged. Returns `None` once the queue is
    /// empty.
    pub fn step(&mut self) -> Result<Option<EventRecord>, SimError> {
        while let Some(ev) = self.heap.pop() {
            if self.is_stale(ev.action) {
                continue;
            }
            if ev.time < self.clock {
                return Err(SimError::TimeRegression {
                    now: self.clock,
                    until: ev.time,
                });
            }
            self.sample_before(ev.time);
            self.clock = ev.time;
            let rec = self.dispatch(ev.action)?;
            if self.record_events {
                self.events.push(rec.clone());
            }
            return Ok(Some(rec));
        }
        Ok(None)
    }

    /// Process every event with time <= `until`, then move the clock there.
    pub fn advance(&mut self, until: f64) -> Result<Vec<EventRecord>, SimError> {
        if until < self.clock {
            return Err(SimError::TimeRegression { now: self.clock, until });
        }
        let mut out = Vec::new();
        loop {
            while self.heap.peek().is_some_and(|ev| self.is_stale(ev.action)) {
                self.heap.pop();
            }
            match self.heap.peek() {
                Some(ev) if ev.time <= until => {
                    if let Some(rec) = self.step()? {
                        out.push(rec);
                    }
                }
                _ => break,
            }
        }
        self.sample_through(until);
        self.clock = until;
        Ok(out)
    }

    /// Run to completion.
    pub fn run(mut self) -> Result<SimOutput, SimError> {
        while self.step()?.is_some() {}
        self.finish()
    }

    /// Close the run: fail on stuck jobs, release remaining instances at the
    /// current clock and assemble the report.
    pub fn finish(mut self) -> Result<SimOutput, SimError> {
        while self.step()?.is_some() {}
        let queued: usize = self.queues.values().map(VecDeque::len).sum();
        if queued > 0 {
            return Err(SimError::Stalled {
                queued,
                time: self.clock,
            });
        }
        let end = self.clock;
        self.sample_through(end);
        for inst in 0..self.instances.len() {
            if self.instances[inst].is_live() {
                self.terminate(inst, end);
            }
        }
        let peak = self.peak;
        let summary = SummaryReport {
            seed: self.config.seed,
            currency: "USD".into(),
            makespan_s: self.makespan,
            makespan_h: self.makespan / 3600.0,
            total_cost: self.ledger.total,
            productive_cost: self.ledger.productive_cost,
            productive_core_hours: self.ledger.productive_core_seconds / 3600.0,
            wasted_core_hours: self.ledger.wasted_core_seconds / 3600.0,
            n_ddg: self.n_ddg,
            cost_per_ddg: (self.n_ddg > 0).then(|| self.ledger.total / self.n_ddg as f64),
            jobs_submitted: self.submitted,
            jobs_completed: self.completed,
            jobs_failed: self.failed,
            preemptions: self.preemptions,
            instances_acquired: self.instances.len() as u64,
            peak_active_instances: peak.0,
            peak_vcpus_in_use: peak.1,
            peak_gpus_in_use: peak.2,
        };
        Ok(SimOutput {
            summary,
            metrics: self.metrics,
            ledger: self.ledger,
            events: self.events,
        })
    }

    fn sample_before(&mut self, t: f64) {
        while self.next_sample < t {
            self.take_sample();
        }
    }

    fn sample_through(&mut self, t: f64) {
        while self.next_sample <= t {
            self.take_sample();
        }
    }

    fn take_sample(&mut self) {
        let t = self.next_sample;
        let (mut n, mut v, mut g) = (0u64, 0u64, 0u64);
        for ((region, ty), &count) in &self.active_by_type {
            let spec = self.catalog.instance(ty).expect("validated type");
            let row = MetricsRow {
                time_s: t,
                region: region.clone(),
                instance_type: ty.clone(),
                active_instances: count,
                vcpus_in_use: u64::from(count) * u64::from(spec.vcpus),
                gpus_in_use: u64::from(count) * u64::from(spec.gpus),
            };
            n += u64::from(count);
            v += row.vcpus_in_use;
            g += row.gpus_in_use;
            self.metrics.push(row);
        }
        self.peak = (self.peak.0.max(n), self.peak.1.max(v), self.peak.2.max(g));
        self.next_sample = t + self.config.metrics_interval_s;
    }

    fn record(&mut self, kind: EventKind, job: Option<usize>, inst: Option<usize>) -> EventRecord {
        let rec = EventRecord {
            time_s: self.clock,
            seq: self.log_seq,
            kind,
            job_id: job.map(|j| self.jobs[j].id.clone()),
            instance_id: inst.map(|i| self.instances[i].id.clone()),
        };
        self.log_seq += 1;
        rec
    }

    fn dispatch(&mut self, action: Action) -> Result<EventRecord, SimError> {
        let now = self.clock;
        match action {
            Action::Submit { job } => {
                let rec = self.record(EventKind::JobSubmitted, Some(job), None);
                if self.state[job].status == JobStatus::Unreleased {
                    self.submitted += 1;
                }
                let router = self.kind_router[&self.jobs[job].kind];
                let region = self.routers[router].route_job(&mut self.route_rng).to_string();
                self.place(job, &region)?;
                Ok(rec)
            }
            Action::Acquired { inst } => {
                let rec = self.record(EventKind::InstanceAcquired, None, Some(inst));
                let (region, ty, family) = {
                    let i = &mut self.instances[inst];
                    i.active = true;
                    (i.region.clone(), i.instance_type.clone(), i.family.clone())
                };
                *self.active_by_type.entry((region.clone(), ty)).or_default() += 1;
                let hazard = self.config.preemption.rate_for(&region, &family);
                if hazard > 0.0 {
                    let hours = Exp::new(hazard).expect("positive hazard").sample(&mut self.hazard_rng);
                    self.schedule(now + hours * 3600.0, Action::Preempt { inst });
                }
                let residents: Vec<usize> = self.instances[inst].resident_jobs.iter().copied().collect();
                for job in residents {
                    self.start_item(job, true);
                }
                Ok(rec)
            }
            Action::WorkDone { job, .. } => {
                let s = &self.state[job];
                let (item, started, vcpus, gpus) = (s.item, s.item_started, s.vcpus, s.gpus);
                let inst = s.instance.expect("running job has an instance");
                let kind = match item {
                    WorkItem::Chunk(_) => EventKind::ChunkDone,
                    WorkItem::Transition(_) => EventKind::TransitionDone,
                    _ => EventKind::IntegrateDone,
                };
                let rec = self.record(kind, Some(job), Some(inst));
                let elapsed = now - started;
                let share = {
                    let i = &self.instances[inst];
                    let v = f64::from(vcpus) / f64::from(i.vcpus);
                    let g = if i.gpus > 0 {
                        f64::from(gpus) / f64::from(i.gpus)
                    } else {
                        0.0
                    };
                    v.max(g) * i.rate / 3600.0
                };
                self.ledger.productive_core_seconds += elapsed * f64::from(vcpus);
                self.ledger.productive_cost += elapsed * share;
                advance_progress(&mut self.state[job].progress, item);
                let plan = self.jobs[job].phase_plan;
                match resume_point(&plan, &self.state[job].progress)? {
                    WorkItem::Done => {
                        let token = self.state[job].token;
                        self.schedule(now, Action::Completed { job, token });
                    }
                    _ => self.start_item(job, false),
                }
                Ok(rec)
            }
            Action::Completed { job, .. } => {
                let inst = self.state[job].instance.expect("completed job has an instance");
                let rec = self.record(EventKind::JobCompleted, Some(job), Some(inst));
                self.release(job);
                let s = &mut self.state[job];
                s.status = JobStatus::Completed;
                s.instance = None;
                self.completed += 1;
                self.makespan = now;
                let region = self.instances[inst].region.clone();
                self.drain(&region)?;
                if self.instances[inst].resident_jobs.is_empty() {
                    if let IdleGrace::After(grace) = self.config.idle_grace_s {
                        self.idle_token[inst] += 1;
                        let token = self.idle_token[inst];
                        self.schedule(now + grace, Action::IdleTimeout { inst, token });
                    }
                }
                Ok(rec)
            }
            Action::Preempt { inst } => {
                let rec = self.record(EventKind::Preemption, None, Some(inst));
                self.preemptions += 1;
                let residents: Vec<usize> = self.instances[inst].resident_jobs.iter().copied().collect();
                for job in residents {
                    let s = &self.state[job];
                    if s.status == JobStatus::Running {
                        self.ledger.wasted_core_seconds += (now - s.item_started) * f64::from(s.vcpus);
                    }
                    self.release(job);
                    let s = &mut self.state[job];
                    s.status = JobStatus::Queued;
                    s.instance = None;
                    s.token += 1;
                    self.schedule(now, Action::Submit { job });
                }
                self.terminate(inst, now);
                let region = self.instances[inst].region.clone();
                self.drain(&region)?;
                Ok(rec)
            }
            Action::IdleTimeout { inst, .. } => {
                let rec = self.record(EventKind::InstanceIdleTimeout, None, Some(inst));
                self.terminate(inst, now);
                let region = self.instances[inst].region.clone();
                self.drain(&region)?;
                Ok(rec)
            }
        }
    }

    fn start_item(&mut self, job: usize, fresh_placement: bool) {
        let now = self.clock;
        let plan = self.jobs[job].phase_plan;
        let item = resume_point(&plan, &self.state[job].progress).expect("engine keeps progress valid");
        let mut dur = self.item_duration(job, item).expect("placed job has rates");
        if matches!(item, WorkItem::Chunk(_) | WorkItem::Transition(_)) {
            dur += self.config.checkpoint_latency_s;
        }
        if fresh_placement {
            dur += self.config.startup_latency_s;
        }
        let s = &mut self.state[job];
        s.status = JobStatus::Running;
        s.item = item;
        s.item_started = now;
        let token = s.token;
        self.schedule(now + dur, Action::WorkDone { job, token });
    }

    fn release(&mut self, job: usize) {
        let s = &self.state[job];
        if let Some(inst) = s.instance {
            let i = &mut self.instances[inst];
            i.free_vcpus += s.vcpus;
            i.free_gpus += s.gpus;
            i.resident_jobs.remove(&job);
        }
    }

    fn terminate(&mut self, inst: usize, now: f64) {
        let i = &mut self.instances[inst];
        debug_assert!(i.resident_jobs.is_empty());
        i.terminated_at = Some(now);
        let was_active = std::mem::replace(&mut i.active, false);
        let (region, ty, family) = (i.region.clone(), i.instance_type.clone(), i.family.clone());
        let (id, acquired_at, rate) = (i.id.clone(), i.acquired_at, i.rate);
        if was_active {
            *self
                .active_by_type
                .get_mut(&(region.clone(), ty.clone()))
                .expect("tracked") -= 1;
        }
        *self.live_by_family.get_mut(&(region.clone(), family)).expect("tracked") -= 1;
        if let Some(list) = self.region_instances.get_mut(&region) {
            list.retain(|&x| x != inst);
        }
        self.ledger
            .bill(&id, &ty, &region, acquired_at, now.max(acquired_at), rate);
    }

    fn options_for(&self, job: usize, region: &str) -> Vec<TypeOption> {
        let spec = &self.jobs[job];
        self.config
            .allowed_types
            .get(&spec.kind)
            .into_iter()
            .flatten()
            .map(|a| {
                let ty = self.catalog.instance(&a.instance).expect("validated type");
                TypeOption {
                    instance_type: ty.name.clone(),
                    family: ty.family.clone(),
                    vcpus: ty.vcpus,
                    gpus: ty.gpus,
                    demand_vcpus: a.vcpus.unwrap_or(spec.vcpu_demand),
                    demand_gpus: a.gpus.unwrap_or(spec.gpu_demand),
                    timed: self
                        .rates
                        .get(&(spec.system.clone(), a.bench_name().to_string()))
                        .is_some_and(Option::is_some),
                    priced: lookup_rate(&self.catalog, &ty.name, region, self.config.payment).is_ok(),
                }
            })
            .collect()
    }

    fn place(&mut self, job: usize, region: &str) -> Result<(), SimError> {
        let options = self.options_for(job, region);
        let placement = {
            let ids = self.region_instances.get(region).map(Vec::as_slice).unwrap_or(&[]);
            let cap = self.catalog.region(region).expect("validated region");
            place_job(
                &self.jobs[job].id,
                &options,
                ids.iter().map(|&i| (i, &self.instances[i])),
                |family| {
                    let live = self
                        .live_by_family
                        .get(&(region.to_string(), family.to_string()))
                        .copied()
                        .unwrap_or(0);
                    let capacity = self
                        .config
                        .pool_override(region, family)
                        .unwrap_or_else(|| cap.pool_capacity(family));
                    capacity.saturating_sub(live)
                },
            )
        };
        match placement {
            Err(_) => {
                let s = &mut self.state[job];
                s.status = JobStatus::Failed;
                s.token += 1;
                self.failed += 1;
            }
            Ok(Placement::Queued) => {
                self.state[job].status = JobStatus::Queued;
                self.queues.entry(region.to_string()).or_default().push_back(job);
                self.reclaim_idle(region, &options);
            }
            Ok(Placement::Packed { instance }) => {
                let o = options
                    .iter()
                    .find(|o| {
                        o.feasible()
                            && o.priced
                            && o.instance_type == self.instances[instance].instance_type
                            && self.instances[instance].fits(o.demand_vcpus, o.demand_gpus)
                    })
                    .expect("placement matched an option")
                    .clone();
                self.assign(job, instance, &o);
            }
            Ok(Placement::Acquire { option }) => {
                let o = options[option].clone();
                let inst = self.acquire(&o, region);
                self.assign(job, inst, &o);
            }
        }
        Ok(())
    }

    /// A queued job whose family pool is full cannot use an idle instance of
    /// another type; release such instances now instead of after the grace
    /// period (or never).
    fn reclaim_idle(&mut self, region: &str, options: &[TypeOption]) {
        let families: BTreeSet<&str> = options
            .iter()
            .filter(|o| o.feasible() && o.priced)
            .map(|o| o.family.as_str())
            .collect();
        let now = self.clock;
        let ids = self.region_instances.get(region).cloned().unwrap_or_default();
        for inst in ids {
            let i = &self.instances[inst];
            if i.active && i.is_live() && i.resident_jobs.is_empty() && families.contains(i.family.as_str()) {
                self.idle_token[inst] += 1;
                let token = self.idle_token[inst];
                self.schedule(now, Action::IdleTimeout { inst, token });
            }
        }
    }

    fn acquire(&mut self, o: &TypeOption, region: &str) -> usize {
        let now = self.clock;
        let rate = lookup_rate(&self.catalog, &o.instance_type, region, self.config.payment).expect("priced option");
        let start = match self.config.acquisition_throughput_per_min {
            Some(per_min) => {
                let slot = self.next_slot.entry(region.to_string()).or_insert(0.0);
                let start = now.max(*slot);
                *slot = start + 60.0 / per_min;
                start
            }
            None => now,
        };
        let acquired_at = start + self.config.acquisition_latency_s;
        let idx = self.instances.len();
        self.instances.push(InstanceState {
            id: format!("i{idx}"),
            instance_type: o.instance_type.clone(),
            region: region.to_string(),
            family: o.family.clone(),
            vcpus: o.vcpus,
            gpus: o.gpus,
            acquired_at,
            terminated_at: None,
            active: false,
            resident_jobs: BTreeSet::new(),
            free_vcpus: o.vcpus,
            free_gpus: o.gpus,
            rate,
        });
        self.idle_token.push(0);
        self.region_instances.entry(region.to_string()).or_default().push(idx);
        *self
            .live_by_family
            .entry((region.to_string(), o.family.clone()))
            .or_default() += 1;
        self.active_by_type
            .entry((region.to_string(), o.instance_type.clone()))
            .or_default();
        self.schedule(acquired_at, Action::Acquired { inst: idx });
        idx
    }

    fn assign(&mut self, job: usize, inst: usize, o: &TypeOption) {
        let bench = self
            .config
            .allowed_types
            .get(&self.jobs[job].kind)
            .and_then(|list| list.iter().find(|a| a.instance == o.instance_type))
            .map(|a| a.bench_name().to_string())
            .expect("option comes from the allowed list");
        let rates = self.rates[&(self.jobs[job].system.clone(), bench)];
        let i = &mut self.instances[inst];
        i.free_vcpus -= o.demand_vcpus;
        i.free_gpus -= o.demand_gpus;
        i.resident_jobs.insert(job);
        let active = i.active;
        self.idle_token[inst] += 1;
        let s = &mut self.state[job];
        s.instance = Some(inst);
        s.vcpus = o.demand_vcpus;
        s.gpus = o.demand_gpus;
        s.rates = rates;
        if active {
            self.start_item(job, true);
        } else {
            s.status = JobStatus::Waiting;
        }
    }

    fn drain(&mut self, region: &str) -> Result<(), SimError> {
        let Some(queue) = self.queues.get_mut(region) else {
            return Ok(());
        };
        let pending = std::mem::take(queue);
        for job in pending {
            self.place(job, region)?;
        }
        Ok(())
    }
}

fn validate_config(catalog: &Catalog, c: &SimConfig) -> Result<(), SimError> {
    let bad = |m: String| Err(SimError::Config(m));
    for policy in std::iter::once(&c.routing).chain(c.routing_by_kind.values()) {
        policy.validate()?;
        for region in policy.weights.keys() {
            if catalog.region(region).is_none() {
                return bad(format!("routing names unknown region `{region}`"));
            }
        }
    }
    for (kind, list) in &c.allowed_types {
        for a in list {
            if catalog.instance(&a.instance).is_none() {
                return bad(format!("allowed_types.{kind} names unknown instance `{}`", a.instance));
            }
        }
    }
    if !(c.metrics_interval_s > 0.0 && c.metrics_interval_s.is_finite()) {
        return bad(format!("metrics_interval_s must be > 0 (got {})", c.metrics_interval_s));
    }
    if !(c.transition_slowdown > 0.0) {
        return bad(format!(
            "transition_slowdown must be > 0 (got {})",
            c.transition_slowdown
        ));
    }
    for (what, v) in [
        ("acquisition_latency_s", c.acquisition_latency_s),
        ("startup_latency_s", c.startup_latency_s),
        ("checkpoint_latency_s", c.checkpoint_latency_s),
        (
            "preemption.default_rate_per_instance_hour",
            c.preemption.default_rate_per_instance_hour,
        ),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return bad(format!("{what} must be finite and >= 0 (got {v})"));
        }
    }
    for h in &c.preemption.rates {
        if !(h.rate >= 0.0 && h.rate.is_finite()) {
            return bad(format!("hazard for {}/{} must be finite and >= 0", h.region, h.family));
        }
    }
    if let Some(t) = c.acquisition_throughput_per_min {
        if !(t > 0.0 && t.is_finite()) {
            return bad(format!("acquisition_throughput_per_min must be > 0 (got {t})"));
        }
    }
    for o in &c.spot_pool_overrides {
        if catalog.region(&o.region).is_none() {
            return bad(format!("spot_pool_overrides names unknown region `{}`", o.region));
        }
    }
    for sp in &c.scripted_preemptions {
        if !(sp.at_s >= 0.0 && sp.at_s.is_finite()) {
            return bad(format!("scripted preemption of `{}` has invalid time", sp.instance));
        }
    }
    Ok(())
}
