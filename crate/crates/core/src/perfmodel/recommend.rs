use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{best_config_for_phase, phase_rates, runtime_hours, BenchmarkRecord, PerfError, Phase};
use crate::catalog::{lookup_rate, Catalog, PaymentModel};
use crate::scalar::Scalar;
use crate::workload::{make_phase_plan, PhasePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MinCost,
    MinTime,
}

#[derive(Debug, Clone)]
pub struct Constraints<T = f64> {
    pub max_runtime_h: Option<T>,
    pub objective: Objective,
    pub payment: PaymentModel,
    /// Region whose prices are used; defaults to the catalog's first region.
    pub region: Option<String>,
    pub plan: PhasePlan,
    pub transition_slowdown: T,
}

impl<T: Scalar> Constraints<T> {
    /// Standard job (6 ns equilibration + 80 × 50 ps transitions at 2 fs).
    pub fn standard(objective: Objective, payment: PaymentModel) -> Self {
        Constraints {
            max_runtime_h: None,
            objective,
            payment,
            region: None,
            plan: make_phase_plan(6.0, 2.0, 500_000, 80, 50.0).expect("standard plan is valid"),
            transition_slowdown: T::one(),
        }
    }

    pub fn with_deadline(mut self, hours: T) -> Self {
        self.max_runtime_h = Some(hours);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Candidate<T = f64> {
    pub instance: String,
    pub config: BenchmarkRecord<T>,
    pub runtime_h: T,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Recommendation<T = f64> {
    Ranked(Vec<Candidate<T>>),
    /// Every benchmarked instance violates the runtime limit.
    Infeasible {
        considered: usize,
    },
}

impl<T> Recommendation<T> {
    pub fn candidates(&self) -> &[Candidate<T>] {
        match self {
            Recommendation::Ranked(c) => c,
            Recommendation::Infeasible { .. } => &[],
        }
    }
}

pub fn recommend<T: Scalar>(
    records: &[BenchmarkRecord<T>],
    catalog: &Catalog,
    system: &str,
    constraints: &Constraints<T>,
) -> Result<Recommendation<T>, PerfError> {
    let region = match &constraints.region {
        Some(r) => r.clone(),
        None => catalog.regions()[0].name.clone(),
    };
    let plan = &constraints.plan;
    let mut considered = 0;
    let mut ranked = Vec::new();
    for inst in catalog.instances() {
        let Ok(rates) = phase_rates(records, system, &inst.name, constraints.transition_slowdown) else {
            continue;
        };
        let Ok(rate) = lookup_rate(catalog, &inst.name, &region, constraints.payment) else {
            continue;
        };
        considered += 1;
        let runtime_h = runtime_hours(T::lit(plan.equil_ns()), T::lit(plan.transition_ns_total()), rates);
        if constraints.max_runtime_h.is_some_and(|max| runtime_h > max) {
            continue;
        }
        let config = best_config_for_phase(records, system, &inst.name, Phase::Equilibration)
            .or_else(|| best_config_for_phase(records, system, &inst.name, Phase::Plain))
            .expect("rates imply a record")
            .clone();
        ranked.push(Candidate {
            instance: inst.name.clone(),
            config,
            runtime_h,
            cost: runtime_h * T::lit(rate),
        });
    }
    if considered == 0 {
        return Err(PerfError::NoCoverage(system.to_string()));
    }
    if ranked.is_empty() {
        return Ok(Recommendation::Infeasible { considered });
    }
    let key = |c: &Candidate<T>| match constraints.objective {
        Objective::MinCost => c.cost,
        Objective::MinTime => c.runtime_h,
    };
    ranked.sort_by(|a, b| {
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.instance.cmp(&b.instance))
    });
    Ok(Recommendation::Ranked(ranked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Catalog {
        Catalog::from_json_str(
            r#"{
              "instances": [
                {"name": "c5.24xl", "vcpus": 96, "clock_ghz": 3.0, "network_gbps": 25, "family": "c5"},
                {"name": "g4dn.4xl", "vcpus": 16, "gpus": 1, "clock_ghz": 2.5, "network_gbps": 10, "family": "g4dn"},
                {"name": "g4dn.2xl", "vcpus": 8, "gpus": 1, "clock_ghz": 2.5, "network_gbps": 25, "family": "g4dn"}
              ],
              "regions": [{"name": "us-east-1"}],
              "prices": [
                {"instance": "c5.24xl", "region": "us-east-1", "on_demand_per_hour": 4.08},
                {"instance": "g4dn.4xl", "region": "us-east-1", "on_demand_per_hour": 1.204},
                {"instance": "g4dn.2xl", "region": "us-east-1", "on_demand_per_hour": 0.752}
              ]
            }"#,
        )
        .unwrap()
    }

    fn rec(instance: &str, ns: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            system: "cmet_complex".into(),
            instance: instance.into(),
            ranks: 1,
            threads: 16,
            pme_ranks: 0,
            phase: Phase::Equilibration,
            ns_per_day: ns,
        }
    }

    #[test]
    fn ranks_by_cost_and_time() {
        let recs = vec![rec("c5.24xl", 48.21), rec("g4dn.4xl", 61.866), rec("g4dn.2xl", 41.422)];
        let cons = Constraints::standard(Objective::MinCost, PaymentModel::Spot).with_deadline(9.0);
        let out = recommend(&recs, &catalog(), "cmet_complex", &cons).unwrap();
        let names: Vec<_> = out.candidates().iter().map(|c| c.instance.as_str()).collect();
        assert_eq!(names, ["g4dn.2xl", "g4dn.4xl", "c5.24xl"]);
        let costs: Vec<_> = out.candidates().iter().map(|c| c.cost).collect();
        assert!(costs.windows(2).all(|w| w[0] <= w[1]));

        let cons = Constraints::standard(Objective::MinTime, PaymentModel::Spot);
        let out = recommend(&recs, &catalog(), "cmet_complex", &cons).unwrap();
        assert_eq!(out.candidates()[0].instance, "g4dn.4xl");
    }

    #[test]
    fn impossible_deadline_is_infeasible_not_error() {
        let recs = vec![rec("g4dn.4xl", 61.866)];
        let cons = Constraints::standard(Objective::MinCost, PaymentModel::Spot).with_deadline(0.001);
        assert_eq!(
            recommend(&recs, &catalog(), "cmet_complex", &cons).unwrap(),
            Recommendation::Infeasible { considered: 1 }
        );
    }

    #[test]
    fn single_feasible_instance() {
        let recs = vec![rec("g4dn.4xl", 61.866), rec("c5.24xl", 1.0)];
        let cons = Constraints::standard(Objective::MinCost, PaymentModel::OnDemand).with_deadline(9.0);
        let out = recommend(&recs, &catalog(), "cmet_complex", &cons).unwrap();
        assert_eq!(out.candidates().len(), 1);
        assert_eq!(out.candidates()[0].instance, "g4dn.4xl");
        assert!((out.candidates()[0].cost - 3.879352 * 1.204).abs() < 1e-5);
    }

    #[test]
    fn unknown_system_is_an_error() {
        let cons = Constraints::standard(Objective::MinCost, PaymentModel::Spot);
        assert!(matches!(
            recommend::<f64>(&[], &catalog(), "nope", &cons),
            Err(PerfError::NoCoverage(_))
        ));
    }
}
