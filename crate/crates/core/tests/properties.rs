mod common;

use std::collections::HashSet;

use cloudmd::catalog::{load_catalog, lookup_rate, Catalog, PaymentModel};
use cloudmd::costmodel::{
    cloud_cost_per_microsecond, cost_per_fe, node_overhead_per_year, onprem_cost_per_microsecond, onprem_entry,
    CostReportEntry, OnPremNodeSpec, OverheadSpec,
};
use cloudmd::orchestrator::{resume_point, WorkItem};
use cloudmd::perfmodel::{
    parallel_efficiency, pareto_frontier, pp_ratio, predict_job_runtime, recommend, BenchmarkRecord, Constraints,
    Objective, PerfPoint, Phase, ScalingSeries,
};
use cloudmd::workload::{
    expand_ensemble, make_phase_plan, EnsembleSpec, JobKind, JobProgress, ResourcePolicy, TargetSpec,
};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn shipped_catalog() -> Catalog {
    load_catalog(common::data("catalog.json")).unwrap()
}

#[test]
fn catalog_round_trips_and_spot_never_exceeds_on_demand() {
    let catalog = shipped_catalog();
    let again = Catalog::from_json_str(&catalog.to_json_string()).unwrap();
    assert_eq!(catalog, again);
    for p in catalog.prices() {
        assert!(p.spot_per_hour() <= p.on_demand_per_hour, "{} {}", p.instance, p.region);
        let a = lookup_rate(&catalog, &p.instance, &p.region, PaymentModel::Spot).unwrap();
        let b = lookup_rate(&again, &p.instance, &p.region, PaymentModel::Spot).unwrap();
        assert_eq!(a, b);
    }
}

fn positive() -> impl Strategy<Value = f64> {
    0.01f64..1000.0
}

fn series() -> impl Strategy<Value = ScalingSeries> {
    (positive(), prop::collection::vec((1u32..4, 0.1f64..3.0), 0..6)).prop_map(|(p1, steps)| {
        let mut points = vec![(1, p1)];
        let mut n = 1;
        for (dn, f) in steps {
            n += dn;
            points.push((n, p1 * f * f64::from(n)));
        }
        ScalingSeries {
            system: "S".into(),
            instance: "i".into(),
            points,
        }
    })
}

fn perf_points() -> impl Strategy<Value = Vec<PerfPoint>> {
    prop::collection::vec((1u32..50, 1u32..50), 1..25).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (price, ns))| PerfPoint {
                label: format!("p{i}"),
                price_per_hour: f64::from(price) / 10.0,
                ns_per_day: f64::from(ns),
            })
            .collect()
    })
}

fn dominates(q: &PerfPoint, p: &PerfPoint) -> bool {
    q.ns_per_day >= p.ns_per_day
        && q.price_per_hour <= p.price_per_hour
        && (q.ns_per_day > p.ns_per_day || q.price_per_hour < p.price_per_hour)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn efficiency_baseline_is_one_and_never_clamped(s in series()) {
        let e = parallel_efficiency(&s).unwrap();
        prop_assert_eq!(e[0], (1, 1.0));
        for (&(n, pn), &(m, en)) in s.points.iter().zip(&e) {
            prop_assert_eq!(n, m);
            prop_assert!(en > 0.0);
            prop_assert!(close(en, pn / (f64::from(n) * s.points[0].1)));
        }
    }

    #[test]
    fn pp_ratio_is_homogeneous(p in positive(), c in positive(), k in 0.01f64..100.0) {
        prop_assert!(close(pp_ratio(k * p, k * c).unwrap(), pp_ratio(p, c).unwrap()));
        let single = pp_ratio(p as f32, c as f32).unwrap();
        prop_assert!(((f64::from(single) - pp_ratio(p, c).unwrap()) / pp_ratio(p, c).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn pareto_frontier_is_idempotent_and_covers(points in perf_points()) {
        let front = pareto_frontier(&points).unwrap();
        prop_assert_eq!(&pareto_frontier(&front).unwrap(), &front);
        let labels: HashSet<&str> = front.iter().map(|p| p.label.as_str()).collect();
        for p in &points {
            prop_assert!(labels.contains(p.label.as_str()) || front.iter().any(|q| dominates(q, p)));
        }
        for p in &front {
            prop_assert!(!points.iter().any(|q| dominates(q, p)));
        }
    }

    #[test]
    fn recommend_respects_deadline_and_order(
        speeds in prop::collection::vec(1.0f64..120.0, 3),
        deadline in 1.0f64..40.0,
        by_cost in any::<bool>(),
    ) {
        let catalog = shipped_catalog();
        let records: Vec<BenchmarkRecord> = ["g4dn.xl", "g4dn.4xl", "c5.24xl"]
            .iter()
            .zip(&speeds)
            .map(|(inst, &ns)| BenchmarkRecord {
                system: "X".into(),
                instance: inst.to_string(),
                ranks: 1,
                threads: 4,
                pme_ranks: 0,
                phase: Phase::Equilibration,
                ns_per_day: ns,
            })
            .collect();
        let objective = if by_cost { Objective::MinCost } else { Objective::MinTime };
        let cons = Constraints::standard(objective, PaymentModel::Spot).with_deadline(deadline);
        let out = recommend(&records, &catalog, "X", &cons).unwrap();
        let c = out.candidates();
        prop_assert!(c.iter().all(|x| x.runtime_h <= deadline));
        let key = |x: &cloudmd::perfmodel::Candidate| if by_cost { x.cost } else { x.runtime_h };
        prop_assert!(c.windows(2).all(|w| key(&w[0]) <= key(&w[1])));
    }

    #[test]
    fn runtime_is_inversely_linear_in_rate(ns in 0.5f64..200.0) {
        let spec = small_spec(vec![("t", 1)], 1, 1, 1);
        let job = &expand_ensemble(&spec).unwrap()[0];
        let rec = |v: f64| vec![BenchmarkRecord {
            system: job.system.clone(),
            instance: "m".into(),
            ranks: 1,
            threads: 1,
            pme_ranks: 0,
            phase: Phase::Equilibration,
            ns_per_day: v,
        }];
        let slow = predict_job_runtime(job, "m", &rec(ns), 1.0).unwrap();
        let fast = predict_job_runtime(job, "m", &rec(2.0 * ns), 1.0).unwrap();
        prop_assert!(close(slow, 2.0 * fast));
    }
}

fn overheads() -> impl Strategy<Value = OverheadSpec> {
    (0.0f64..500.0, 0.0f64..500.0, 0.0f64..500.0, 0.0f64..500.0).prop_map(|(a, b, c, d)| OverheadSpec {
        rack_per_u_year: a,
        staff_per_node_year: b,
        room_per_node_year: c,
        mgmt_per_node_year: d,
    })
}

fn node() -> impl Strategy<Value = OnPremNodeSpec> {
    (1u32..8, 0.5f64..50.0).prop_map(|(u, ns)| OnPremNodeSpec {
        hardware_cost: 2000.0,
        lifetime_years: 3.0,
        energy_cost_per_year: 500.0,
        rack_u: u,
        ns_per_day: ns,
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn cloud_cost_is_linear_in_rate_and_inverse_in_speed(rate in positive(), ns in positive(), k in 0.1f64..10.0) {
        let base = cloud_cost_per_microsecond(rate, ns).unwrap();
        prop_assert!(close(cloud_cost_per_microsecond(k * rate, ns).unwrap(), k * base));
        prop_assert!(close(cloud_cost_per_microsecond(rate, k * ns).unwrap(), base / k));
    }

    #[test]
    fn fe_cost_is_linear_in_rates(
        ch in 0.0f64..20.0, cr in 0.0f64..5.0, lh in 0.0f64..20.0, lr in 0.0f64..5.0,
        replicas in 1u32..5, directions in 1u32..3, k in 0.1f64..10.0,
    ) {
        let base = cost_per_fe(ch, cr, lh, lr, replicas, directions).unwrap();
        prop_assert!(close(cost_per_fe(ch, k * cr, lh, k * lr, replicas, directions).unwrap(), k * base));
        prop_assert!(close(
            cost_per_fe(ch, cr, 0.0, lr, replicas, directions).unwrap(),
            f64::from(replicas * directions) * ch * cr
        ));
    }

    #[test]
    fn onprem_scales_with_overheads_and_utilization(
        o in overheads(), n in node(), base in 0.0f64..1000.0, u in 0.05f64..1.0, k in 0.1f64..10.0,
    ) {
        let full = onprem_cost_per_microsecond(&n, &o, base, 1.0).unwrap();
        let part = onprem_cost_per_microsecond(&n, &o, base, u).unwrap();
        prop_assert!(close(part, full / u));

        let scaled = OverheadSpec {
            rack_per_u_year: k * o.rack_per_u_year,
            staff_per_node_year: k * o.staff_per_node_year,
            room_per_node_year: k * o.room_per_node_year,
            mgmt_per_node_year: k * o.mgmt_per_node_year,
        };
        prop_assert!(close(
            node_overhead_per_year(&scaled, n.rack_u).unwrap(),
            k * node_overhead_per_year(&o, n.rack_u).unwrap()
        ));
        let faster = OnPremNodeSpec { ns_per_day: k * n.ns_per_day, ..n.clone() };
        let over = full - base;
        let over_fast = onprem_cost_per_microsecond(&faster, &o, base, 1.0).unwrap() - base;
        prop_assert!((over_fast - over / k).abs() <= 1e-6 * over.max(1.0));
    }

    #[test]
    fn basis_always_sums_to_total(o in overheads(), n in node(), base in 0.0f64..1000.0, u in 0.05f64..1.0) {
        let e = onprem_entry(&n, &o, base, u, "x", "EUR").unwrap();
        let sum: f64 = e.basis.values().sum();
        prop_assert!(close(sum, e.cost));
        let r = e.rounded();
        prop_assert!((r.basis.values().sum::<f64>() - r.cost).abs() <= 0.01 + 1e-9);
        prop_assert!(CostReportEntry::new("x", e.cost, "EUR", e.basis.clone()).is_ok());
        prop_assert!(CostReportEntry::new("x", e.cost + 1.0, "EUR", e.basis).is_err());
    }

    #[test]
    fn currency_conversion_commutes(rate in positive(), ns in positive(), fx in 0.2f64..5.0, ch in 0.1f64..20.0, lh in 0.1f64..20.0) {
        let converted_output = cloud_cost_per_microsecond(rate, ns).unwrap() * fx;
        let converted_input = cloud_cost_per_microsecond(rate * fx, ns).unwrap();
        prop_assert!((converted_output - converted_input).abs() <= 0.005);

        let fe = cost_per_fe(ch, rate, lh, rate / 3.0, 3, 2).unwrap();
        let fe_fx = cost_per_fe(ch, rate * fx, lh, rate / 3.0 * fx, 3, 2).unwrap();
        prop_assert!((fe * fx - fe_fx).abs() <= 0.005);

        let mut basis = std::collections::BTreeMap::new();
        basis.insert("instance_hours".to_string(), converted_output / fx);
        let entry = CostReportEntry::from_basis("c", "USD", basis).converted(fx, "EUR");
        prop_assert!((entry.cost - converted_input).abs() <= 0.005);
    }
}

fn small_spec(targets: Vec<(&str, u32)>, replicas: u32, directions: u32, forcefields: u32) -> EnsembleSpec {
    EnsembleSpec {
        name: String::new(),
        targets: targets
            .into_iter()
            .map(|(name, edges)| TargetSpec {
                name: name.to_string(),
                complex_atoms: 0,
                ligand_atoms: 0,
                edges,
                complex_system: None,
                ligand_system: None,
            })
            .collect(),
        replicas,
        directions,
        forcefields,
        equil_ns: 6.0,
        n_transitions: 80,
        transition_ps: 50.0,
        timestep_fs: 2.0,
        chunk_steps: 500_000,
        resources: ResourcePolicy::default(),
        waves: vec![],
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn expansion_is_deterministic_and_counts_match(
        edges in prop::collection::vec(0u32..6, 1..4),
        replicas in 1u32..4, directions in 1u32..3, forcefields in 1u32..4,
    ) {
        let names = ["a", "b", "c"];
        let spec = small_spec(names.iter().copied().zip(edges.iter().copied()).collect(), replicas, directions, forcefields);
        let first = expand_ensemble(&spec).unwrap();
        let second = expand_ensemble(&spec).unwrap();
        prop_assert_eq!(&first, &second);

        let mut expected = 0u64;
        for &e in &edges {
            for _ in 0..e {
                for _ in 0..directions {
                    for _ in 0..replicas {
                        for _ in 0..forcefields {
                            expected += JobKind::ALL.len() as u64;
                        }
                    }
                }
            }
        }
        prop_assert_eq!(first.len() as u64, expected);
        prop_assert_eq!(spec.job_count(), expected);
        let ids: HashSet<&str> = first.iter().map(|j| j.id.as_str()).collect();
        prop_assert_eq!(ids.len(), first.len());
    }

    #[test]
    fn progress_trace_is_lexicographically_nondecreasing(
        equil_ns in 0.5f64..8.0, transitions in 0u32..20, start in 0usize..200,
    ) {
        let plan = make_phase_plan(equil_ns, 2.0, 500_000, transitions, 50.0).unwrap();
        let mut trace = vec![JobProgress::default()];
        loop {
            let p = *trace.last().unwrap();
            prop_assert!(p.validate(&plan).is_ok());
            let next = match resume_point(&plan, &p).unwrap() {
                WorkItem::Chunk(k) => JobProgress { chunks_done: k + 1, ..p },
                WorkItem::Transition(k) => JobProgress { transitions_done: k + 1, ..p },
                WorkItem::Integrate => JobProgress { integrated: true, ..p },
                WorkItem::Done => break,
            };
            trace.push(next);
        }
        prop_assert!(trace.last().unwrap().is_done(&plan));
        prop_assert_eq!(trace.len() as u32, plan.equil_chunks + plan.n_transitions + 2);
        prop_assert!(trace.windows(2).all(|w| w[0] < w[1]));

        // Resuming from any recorded checkpoint continues along the same trace.
        let from = start % trace.len();
        let resumed = resume_point(&plan, &trace[from]).unwrap();
        if from + 1 < trace.len() {
            prop_assert_ne!(resumed, WorkItem::Done);
        } else {
            prop_assert_eq!(resumed, WorkItem::Done);
        }
    }
}
