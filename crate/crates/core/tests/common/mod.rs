#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use cloudmd::catalog::Catalog;
use cloudmd::orchestrator::{
    AllowedType, HazardEntry, IdleGrace, PreemptionModel, RoutingMode, RoutingPolicy, ScriptedPreemption, SimConfig,
    SimInput,
};
use cloudmd::perfmodel::{BenchmarkRecord, Phase};
use cloudmd::workload::{make_phase_plan, JobKind, JobSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn record(system: &str, instance: &str, ns: f64) -> BenchmarkRecord {
    BenchmarkRecord {
        system: system.into(),
        instance: instance.into(),
        ranks: 1,
        threads: 4,
        pme_ranks: 0,
        phase: Phase::Equilibration,
        ns_per_day: ns,
    }
}

fn job(id: &str, kind: JobKind, system: &str, vcpus: u32, gpus: u32, plan: cloudmd::workload::PhasePlan) -> JobSpec {
    JobSpec {
        id: id.into(),
        target: "toy".into(),
        kind,
        system: system.into(),
        vcpu_demand: vcpus,
        gpu_demand: gpus,
        phase_plan: plan,
        input_ref: format!("input/{id}/"),
        output_ref: format!("output/{id}/"),
    }
}

/// Three 4-vCPU jobs, two single-slot regions, one scripted preemption.
pub fn micro_input() -> SimInput {
    micro_input_with_pool(1)
}

pub fn micro_input_with_pool(pool: u32) -> SimInput {
    let catalog = Catalog::from_json_str(&format!(
        r#"{{
          "instances": [{{"name": "v4", "vcpus": 4, "clock_ghz": 3.0, "network_gbps": 10, "family": "v"}}],
          "regions": [{{"name": "ra", "spot_pool": {{"v": {pool}}}}}, {{"name": "rb", "spot_pool": {{"v": {pool}}}}}],
          "prices": [
            {{"instance": "v4", "region": "ra", "on_demand_per_hour": 3.6, "spot_fraction": 1.0}},
            {{"instance": "v4", "region": "rb", "on_demand_per_hour": 3.6, "spot_fraction": 1.0}}
          ]
        }}"#
    ))
    .unwrap();
    let plan = make_phase_plan(2.0, 2.0, 500_000, 2, 50.0).unwrap();
    let jobs = (0..3)
        .map(|i| job(&format!("j{i}"), JobKind::Complex, "toy", 4, 0, plan))
        .collect();
    let routing = RoutingPolicy {
        mode: RoutingMode::ProportionalRoundrobin,
        weights: BTreeMap::from([("ra".to_string(), 1.0), ("rb".to_string(), 1.0)]),
    };
    let mut config = SimConfig::new(
        routing,
        BTreeMap::from([(JobKind::Complex, vec![AllowedType::new("v4")])]),
    );
    config.scripted_preemptions = vec![ScriptedPreemption {
        instance: "i1".into(),
        at_s: 1350.0,
    }];
    SimInput::new(catalog, jobs, vec![record("toy", "v4", 96.0)], config)
}

/// Parse the committed oracle event table.
pub fn oracle_events() -> Vec<String> {
    std::fs::read_to_string(fixture("micro_oracle_events.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

/// Randomized small scenario: 1-3 regions, 1-3 CPU/GPU types, mixed job
/// sizes, random hazards, pools and grace. Always feasible.
pub fn random_input(seed: u64) -> SimInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_regions = rng.random_range(1..=3);
    let types = [
        ("c16", 16u32, 0u32, "c", 0.68),
        ("c8", 8, 0, "c", 0.34),
        ("g16", 16, 1, "g", 1.2),
    ];
    let mut instances = Vec::new();
    for (name, v, g, fam, _) in types {
        instances.push(format!(
            r#"{{"name": "{name}", "vcpus": {v}, "gpus": {g}, "clock_ghz": 3.0, "network_gbps": 10, "family": "{fam}"}}"#
        ));
    }
    let mut regions = Vec::new();
    let mut prices = Vec::new();
    let mut weights = BTreeMap::new();
    let mut hazards = Vec::new();
    for r in 0..n_regions {
        let name = format!("r{r}");
        let pc = rng.random_range(1..=4);
        let pg = rng.random_range(1..=3);
        regions.push(format!(
            r#"{{"name": "{name}", "spot_pool": {{"c": {pc}, "g": {pg}}}}}"#
        ));
        for (t, _, _, _, price) in types {
            prices.push(format!(
                r#"{{"instance": "{t}", "region": "{name}", "on_demand_per_hour": {price}, "spot_fraction": 0.3}}"#
            ));
        }
        weights.insert(name.clone(), f64::from(rng.random_range(1..=6u32)));
        for fam in ["c", "g"] {
            hazards.push(HazardEntry {
                region: name.clone(),
                family: fam.into(),
                rate: [0.0, 0.05, 0.2, 1.0, 3.0][rng.random_range(0..5)],
            });
        }
    }
    let catalog = Catalog::from_json_str(&format!(
        r#"{{"instances": [{}], "regions": [{}], "prices": [{}]}}"#,
        instances.join(","),
        regions.join(","),
        prices.join(",")
    ))
    .unwrap();
    let chunks = rng.random_range(1..=4u32);
    let plan = make_phase_plan(
        f64::from(chunks) * 0.5,
        2.0,
        250_000,
        rng.random_range(0..=6),
        [10.0, 50.0][rng.random_range(0..2)],
    )
    .unwrap();
    let n_jobs = rng.random_range(3..=24);
    let mut jobs = Vec::new();
    let mut submit_times = Vec::new();
    for i in 0..n_jobs {
        let kind = if rng.random_bool(0.5) {
            JobKind::Complex
        } else {
            JobKind::Ligand
        };
        let (sys, v, g) = match kind {
            JobKind::Complex => ("cx", 4, 1),
            JobKind::Ligand => ("lg", [4, 8, 16][rng.random_range(0..3)], 0),
        };
        jobs.push(job(&format!("j{i}"), kind, sys, v, g, plan));
        submit_times.push(if rng.random_bool(0.3) {
            rng.random_range(0..7200) as f64
        } else {
            0.0
        });
    }
    let records = vec![
        record("cx", "g16", rng.random_range(20.0..80.0)),
        record("lg", "c16", rng.random_range(20.0..80.0)),
        record("lg", "c8", rng.random_range(10.0..50.0)),
    ];
    let routing = RoutingPolicy {
        mode: if rng.random_bool(0.5) {
            RoutingMode::WeightedRandom
        } else {
            RoutingMode::ProportionalRoundrobin
        },
        weights,
    };
    let ligand_types = if rng.random_bool(0.5) {
        vec![AllowedType::new("c16"), AllowedType::new("c8")]
    } else {
        vec![AllowedType::new("c8"), AllowedType::new("c16")]
    };
    let mut config = SimConfig::new(
        routing,
        BTreeMap::from([
            (JobKind::Complex, vec![AllowedType::new("g16")]),
            (JobKind::Ligand, ligand_types),
        ]),
    );
    config.seed = seed;
    config.preemption = PreemptionModel {
        default_rate_per_instance_hour: 0.0,
        rates: hazards,
    };
    config.idle_grace_s = match rng.random_range(0..3) {
        0 => IdleGrace::After(0.0),
        1 => IdleGrace::After(120.0),
        _ => IdleGrace::Never,
    };
    config.metrics_interval_s = 300.0;
    config.transition_slowdown = 0.8;
    let mut input = SimInput::new(catalog, jobs, records, config);
    input.submit_times = submit_times;
    input.n_ddg = 1;
    input
}

use cloudmd::orchestrator::{EventKind, JobStatus, SimOutput, Simulation, WorkItem};

/// Step a run event by event and check the simulator invariants after each
/// event. Returns the finished output.
pub fn check_invariants(input: SimInput) -> Result<SimOutput, String> {
    let mut sim = Simulation::new(input.clone())
        .map_err(|e| e.to_string())?
        .record_events(true);
    let n = sim.jobs().len();
    let mut last_progress = vec![Default::default(); n];
    let mut wasted_expected = 0.0;
    let mut seen_submissions = std::collections::BTreeSet::new();
    loop {
        let running: Vec<(usize, usize, WorkItem, f64, f64, u32)> = (0..n)
            .filter_map(|j| {
                let (item, started) = sim.current_item(j)?;
                let (inst, v, _) = sim.job_placement(j)?;
                Some((j, inst, item, started, sim.item_duration(j, item)?, v))
            })
            .collect();
        let Some(ev) = sim.step().map_err(|e| e.to_string())? else {
            break;
        };
        let now = sim.clock();

        for (idx, inst) in sim.instances().iter().enumerate() {
            let (mut v, mut g) = (0u32, 0u32);
            for &j in &inst.resident_jobs {
                let (at, jv, jg) = sim.job_placement(j).ok_or("resident job without placement")?;
                if at != idx {
                    return Err(format!("job {j} resident on i{idx} but placed on i{at}"));
                }
                v += jv;
                g += jg;
            }
            if v > inst.vcpus || g > inst.gpus || inst.free_vcpus != inst.vcpus - v || inst.free_gpus != inst.gpus - g {
                return Err(format!("oversubscribed or inconsistent {} at t={now}", inst.id));
            }
            if let Some(t) = inst.terminated_at {
                if t < inst.acquired_at || !inst.resident_jobs.is_empty() {
                    return Err(format!("bad termination of {}", inst.id));
                }
            }
        }

        if ev.kind == EventKind::JobSubmitted {
            seen_submissions.insert(ev.job_id.clone().unwrap());
        }
        let c = sim.counts();
        let released = seen_submissions.len() as u64;
        if c.submitted != released || c.submitted != c.completed + c.failed + c.in_flight {
            return Err(format!("conservation broken at t={now}: {c:?}, released {released}"));
        }

        for (j, last) in last_progress.iter_mut().enumerate() {
            let p = sim.job_progress(j);
            let q: cloudmd::workload::JobProgress = *last;
            if p.chunks_done < q.chunks_done
                || p.transitions_done < q.transitions_done
                || (q.integrated && !p.integrated)
            {
                return Err(format!("progress of job {j} went backwards: {q} -> {p}"));
            }
            *last = p;
        }

        if ev.kind == EventKind::Preemption {
            let id = ev.instance_id.as_deref().unwrap();
            for &(_, inst, _, started, dur, v) in running.iter().filter(|r| sim.instances()[r.1].id == id) {
                let lost = now - started;
                if !(lost >= 0.0 && lost < dur) {
                    return Err(format!("wasted {lost} s on i{inst} not below item length {dur} s"));
                }
                wasted_expected += lost * f64::from(v);
            }
        }
    }
    for j in 0..n {
        if sim.job_status(j) != JobStatus::Completed {
            return Err(format!("job {j} ended as {:?}", sim.job_status(j)));
        }
    }
    let out = sim.finish().map_err(|e| e.to_string())?;
    if (out.ledger.wasted_core_seconds - wasted_expected).abs() > 1e-6 * wasted_expected.max(1.0) {
        return Err(format!(
            "wasted {} != {}",
            out.ledger.wasted_core_seconds, wasted_expected
        ));
    }
    check_billing(&out)?;
    let again = cloudmd::orchestrator::run(input, true).map_err(|e| e.to_string())?;
    if again.events != out.events || again.summary != out.summary || again.metrics != out.metrics {
        return Err("rerun with the same seed differs".into());
    }
    let ordered = out
        .events
        .windows(2)
        .all(|w| (w[0].time_s, w[0].seq) < (w[1].time_s, w[1].seq));
    if !ordered {
        return Err("event log not (time, seq)-sorted".into());
    }
    Ok(out)
}

/// Rebuild each instance's billed interval from the event log and compare
/// with the ledger, allowing one second of rate per instance.
pub fn check_billing(out: &SimOutput) -> Result<(), String> {
    let end = out.events.last().map_or(0.0, |e| e.time_s);
    let mut spans: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for e in &out.events {
        let Some(id) = &e.instance_id else { continue };
        match e.kind {
            EventKind::InstanceAcquired => {
                spans.insert(id.clone(), (e.time_s, end));
            }
            EventKind::Preemption | EventKind::InstanceIdleTimeout => {
                spans.get_mut(id).ok_or("termination before acquisition")?.1 = e.time_s;
            }
            _ => {}
        }
    }
    let mut expected = 0.0;
    let mut slack = 0.0;
    for entry in &out.ledger.entries {
        let (a, t) = spans
            .get(&entry.instance_id)
            .copied()
            .unwrap_or((entry.acquired_at, entry.acquired_at));
        expected += (t - a) * entry.rate / 3600.0;
        slack += entry.rate / 3600.0;
    }
    let total: f64 = out.ledger.entries.iter().map(|e| e.cost).sum();
    if (total - out.ledger.total).abs() > 1e-9 * total.max(1.0) || (total - expected).abs() > slack + 1e-9 {
        return Err(format!(
            "billing identity: ledger {} vs intervals {expected}",
            out.ledger.total
        ));
    }
    if out.ledger.entries.len() != out.summary.instances_acquired as usize {
        return Err("every instance must be billed exactly once".into());
    }
    Ok(())
}
