//! Benchmark ingestion and performance arithmetic: performance-to-price,
//! parallel efficiency, Pareto frontiers, runtime prediction and instance
//! recommendation.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::workload::JobSpec;

mod io;
mod recommend;

pub use io::{load_benchmarks, load_scaling, read_benchmarks, read_scaling, BENCH_HEADER, SCALING_HEADER};
pub use recommend::{recommend, Candidate, Constraints, Objective, Recommendation};

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("{what} must be positive (got {value})")]
    NonPositive { what: &'static str, value: f64 },
    #[error("scaling series {system}/{instance} has no n = 1 baseline")]
    MissingBaseline { system: String, instance: String },
    #[error("scaling series {system}/{instance}: {reason}")]
    InvalidSeries {
        system: String,
        instance: String,
        reason: String,
    },
    #[error("n = {n} not present in series {system}/{instance}")]
    AbsentPoint { system: String, instance: String, n: u32 },
    #[error("no benchmark record for system `{system}` on `{instance}`")]
    NoRecord { system: String, instance: String },
    #[error("no equilibration record for system `{system}` on `{instance}`")]
    NoEquilibrationRecord { system: String, instance: String },
    #[error("pareto frontier of an empty set")]
    EmptyInput,
    #[error("no benchmark for system `{0}` on any catalog instance")]
    NoCoverage(String),
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Plain,
    Equilibration,
    Transition,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Plain => "plain",
            Phase::Equilibration => "equilibration",
            Phase::Transition => "transition",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BenchSystem<T = f64> {
    pub name: String,
    pub atoms: u64,
    pub timestep_fs: T,
    pub cutoff_nm: T,
    pub grid_spacing_nm: T,
    pub perturbed_atoms: u64,
}

/// The seven benchmark inputs used for the instance survey.
pub fn reference_systems<T: Scalar>() -> Vec<BenchSystem<T>> {
    let row = |name: &str, atoms, dt, rc, grid, fe| BenchSystem {
        name: name.to_string(),
        atoms,
        timestep_fs: T::lit(dt),
        cutoff_nm: T::lit(rc),
        grid_spacing_nm: T::lit(grid),
        perturbed_atoms: fe,
    };
    vec![
        row("PEP", 12_495_503, 2.0, 1.2, 0.160, 0),
        row("RIB", 2_136_412, 4.0, 1.0, 0.135, 0),
        row("MEM", 81_743, 2.0, 1.0, 0.12, 0),
        row("shp2_complex", 107_330, 2.0, 1.1, 0.12, 53),
        row("cmet_complex", 67_291, 2.0, 1.1, 0.12, 61),
        row("hif2a_complex", 35_546, 2.0, 1.1, 0.12, 35),
        row("cmet_ligand", 6_443, 2.0, 1.1, 0.12, 61),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BenchmarkRecord<T = f64> {
    pub system: String,
    pub instance: String,
    pub ranks: u32,
    pub threads: u32,
    pub pme_ranks: u32,
    pub phase: Phase,
    pub ns_per_day: T,
}

impl<T: Scalar> BenchmarkRecord<T> {
    pub fn config_label(&self) -> String {
        if self.pme_ranks > 0 {
            format!("{}x{} pme{}", self.ranks, self.threads, self.pme_ranks)
        } else {
            format!("{}x{}", self.ranks, self.threads)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalingSeries<T = f64> {
    pub system: String,
    pub instance: String,
    /// (instance count, ns/day), n strictly increasing.
    pub points: Vec<(u32, T)>,
}

impl<T: Scalar> ScalingSeries<T> {
    pub fn new(
        system: impl Into<String>,
        instance: impl Into<String>,
        points: Vec<(u32, T)>,
    ) -> Result<Self, PerfError> {
        let series = ScalingSeries {
            system: system.into(),
            instance: instance.into(),
            points,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        let invalid = |reason: String| PerfError::InvalidSeries {
            system: self.system.clone(),
            instance: self.instance.clone(),
            reason,
        };
        match self.points.first() {
            Some((1, _)) => {}
            _ => {
                return Err(PerfError::MissingBaseline {
                    system: self.system.clone(),
                    instance: self.instance.clone(),
                })
            }
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid(format!("n not strictly increasing at n = {}", w[1].0)));
            }
        }
        if let Some((n, p)) = self.points.iter().find(|(_, p)| !(*p > T::zero())) {
            return Err(invalid(format!("nonpositive performance {p} at n = {n}")));
        }
        Ok(())
    }

    fn at(&self, n: u32) -> Option<T> {
        self.points.iter().find(|(m, _)| *m == n).map(|&(_, p)| p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PerfPoint<T = f64> {
    pub label: String,
    pub price_per_hour: T,
    pub ns_per_day: T,
}

fn positive<T: Scalar>(what: &'static str, v: T) -> Result<T, PerfError> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(PerfError::NonPositive {
            what,
            value: v.to_f64_lossy(),
        })
    }
}

/// Nanoseconds of trajectory per currency unit.
pub fn pp_ratio<T: Scalar>(ns_per_day: T, price_per_hour: T) -> Result<T, PerfError> {
    let ns = positive("ns_per_day", ns_per_day)?;
    let price = positive("price_per_hour", price_per_hour)?;
    Ok(ns / (T::lit(24.0) * price))
}

/// E_n = P_n / (n · P_1) for every point of the series.
pub fn parallel_efficiency<T: Scalar>(series: &ScalingSeries<T>) -> Result<Vec<(u32, T)>, PerfError> {
    series.validate()?;
    let p1 = series.points[0].1;
    Ok(series
        .points
        .iter()
        .map(|&(n, pn)| {
            let e = if n == 1 {
                T::one()
            } else {
                pn / (T::from_count(u64::from(n)) * p1)
            };
            (n, e)
        })
        .collect())
}

pub fn speedup<T: Scalar>(series: &ScalingSeries<T>, n: u32) -> Result<T, PerfError> {
    series.validate()?;
    let pn = series.at(n).ok_or_else(|| PerfError::AbsentPoint {
        system: series.system.clone(),
        instance: series.instance.clone(),
        n,
    })?;
    Ok(pn / series.points[0].1)
}

fn better_config<T: Scalar>(a: &BenchmarkRecord<T>, b: &BenchmarkRecord<T>) -> Ordering {
    b.ns_per_day
        .partial_cmp(&a.ns_per_day)
        .unwrap_or(Ordering::Equal)
        .then(a.ranks.cmp(&b.ranks))
        .then(a.pme_ranks.cmp(&b.pme_ranks))
}

fn best_matching<T: Scalar>(
    records: &[BenchmarkRecord<T>],
    pred: impl Fn(&BenchmarkRecord<T>) -> bool,
) -> Option<&BenchmarkRecord<T>> {
    records.iter().filter(|r| pred(r)).min_by(|a, b| better_config(a, b))
}

/// Fastest record for (system, instance) over all phases; ties go to fewer
/// ranks, then fewer PME ranks.
pub fn best_config<'a, T: Scalar>(
    records: &'a [BenchmarkRecord<T>],
    system: &str,
    instance: &str,
) -> Result<&'a BenchmarkRecord<T>, PerfError> {
    best_matching(records, |r| r.system == system && r.instance == instance).ok_or_else(|| PerfError::NoRecord {
        system: system.to_string(),
        instance: instance.to_string(),
    })
}

pub fn best_config_for_phase<'a, T: Scalar>(
    records: &'a [BenchmarkRecord<T>],
    system: &str,
    instance: &str,
    phase: Phase,
) -> Option<&'a BenchmarkRecord<T>> {
    best_matching(records, |r| {
        r.system == system && r.instance == instance && r.phase == phase
    })
}

/// Points not dominated by any other point (at least as fast and at most as
/// expensive, strictly better in one), ordered by ascending price.
pub fn pareto_frontier<T: Scalar>(points: &[PerfPoint<T>]) -> Result<Vec<PerfPoint<T>>, PerfError> {
    if points.is_empty() {
        return Err(PerfError::EmptyInput);
    }
    let dominates = |q: &PerfPoint<T>, p: &PerfPoint<T>| {
        q.ns_per_day >= p.ns_per_day
            && q.price_per_hour <= p.price_per_hour
            && (q.ns_per_day > p.ns_per_day || q.price_per_hour < p.price_per_hour)
    };
    let mut front: Vec<PerfPoint<T>> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    front.sort_by(|a, b| {
        a.price_per_hour
            .partial_cmp(&b.price_per_hour)
            .unwrap_or(Ordering::Equal)
            .then(b.ns_per_day.partial_cmp(&a.ns_per_day).unwrap_or(Ordering::Equal))
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(front)
}

/// Equilibration and transition throughput (ns/day) of one system on one
/// instance type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRates<T = f64> {
    pub equilibration: T,
    pub transition: T,
}

/// Rates used to time a job. The equilibration rate comes from the best
/// equilibration record (falling back to a plain-MD record); without a
/// transition record the transition rate is the equilibration rate times
/// `transition_slowdown`.
pub fn phase_rates<T: Scalar>(
    records: &[BenchmarkRecord<T>],
    system: &str,
    instance: &str,
    transition_slowdown: T,
) -> Result<PhaseRates<T>, PerfError> {
    let equil = best_config_for_phase(records, system, instance, Phase::Equilibration)
        .or_else(|| best_config_for_phase(records, system, instance, Phase::Plain))
        .ok_or_else(|| PerfError::NoEquilibrationRecord {
            system: system.to_string(),
            instance: instance.to_string(),
        })?;
    let equilibration = positive("ns_per_day", equil.ns_per_day)?;
    let transition = match best_config_for_phase(records, system, instance, Phase::Transition) {
        Some(r) => positive("ns_per_day", r.ns_per_day)?,
        None => positive("transition rate", equilibration * transition_slowdown)?,
    };
    Ok(PhaseRates {
        equilibration,
        transition,
    })
}

/// Wall-clock hours for one job: equilibration at the equilibration rate plus
/// all transitions at the transition rate.
pub fn predict_job_runtime<T: Scalar>(
    job: &JobSpec,
    instance: &str,
    records: &[BenchmarkRecord<T>],
    transition_slowdown: T,
) -> Result<T, PerfError> {
    let rates = phase_rates(records, &job.system, instance, transition_slowdown)?;
    let plan = &job.phase_plan;
    Ok(runtime_hours(
        T::lit(plan.equil_ns()),
        T::lit(plan.transition_ns_total()),
        rates,
    ))
}

pub(crate) fn runtime_hours<T: Scalar>(equil_ns: T, transition_ns: T, rates: PhaseRates<T>) -> T {
    let mut days = equil_ns / rates.equilibration;
    if transition_ns > T::zero() {
        days = days + transition_ns / rates.transition;
    }
    days * T::lit(24.0)
}
