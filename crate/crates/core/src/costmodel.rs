//! Cloud versus on-premises trajectory cost arithmetic.
//!
//! Functions are currency-agnostic: pass euros in, get euros out. Reports
//! carry the currency label alongside rounded values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{round_currency, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("{what} must be positive (got {value})")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be nonnegative (got {value})")]
    Negative { what: &'static str, value: f64 },
    #[error("{what} must be >= 1")]
    ZeroCount { what: &'static str },
    #[error("utilization must lie in (0, 1] (got {0})")]
    Utilization(f64),
    #[error("entry `{label}`: cost {cost} differs from basis sum {sum}")]
    BasisMismatch { label: String, cost: f64, sum: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OnPremNodeSpec<T = f64> {
    pub hardware_cost: T,
    pub lifetime_years: T,
    pub energy_cost_per_year: T,
    pub rack_u: u32,
    pub ns_per_day: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OverheadSpec<T = f64> {
    pub rack_per_u_year: T,
    pub staff_per_node_year: T,
    pub room_per_node_year: T,
    pub mgmt_per_node_year: T,
}

impl<T: Scalar> OnPremNodeSpec<T> {
    pub fn validate(&self) -> Result<(), CostError> {
        positive("hardware_cost", self.hardware_cost)?;
        positive("lifetime_years", self.lifetime_years)?;
        positive("energy_cost_per_year", self.energy_cost_per_year)?;
        positive("ns_per_day", self.ns_per_day)?;
        if self.rack_u == 0 {
            return Err(CostError::ZeroCount { what: "rack_u" });
        }
        Ok(())
    }
}

impl<T: Scalar> OverheadSpec<T> {
    fn validate(&self) -> Result<(), CostError> {
        for (what, v) in [
            ("rack_per_u_year", self.rack_per_u_year),
            ("staff_per_node_year", self.staff_per_node_year),
            ("room_per_node_year", self.room_per_node_year),
            ("mgmt_per_node_year", self.mgmt_per_node_year),
        ] {
            if !(v >= T::zero()) {
                return Err(CostError::Negative {
                    what,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

fn positive<T: Scalar>(what: &'static str, v: T) -> Result<T, CostError> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(CostError::NonPositive {
            what,
            value: v.to_f64_lossy(),
        })
    }
}

/// Yearly infrastructure overhead of one node occupying `rack_u` units.
pub fn node_overhead_per_year<T: Scalar>(overheads: &OverheadSpec<T>, rack_u: u32) -> Result<T, CostError> {
    if rack_u == 0 {
        return Err(CostError::ZeroCount { what: "rack_u" });
    }
    overheads.validate()?;
    Ok(overheads.rack_per_u_year * T::from_count(u64::from(rack_u))
        + overheads.staff_per_node_year
        + overheads.room_per_node_year
        + overheads.mgmt_per_node_year)
}

/// Days one node needs to produce a microsecond of trajectory.
fn days_per_microsecond<T: Scalar>(ns_per_day: T) -> Result<T, CostError> {
    Ok(T::lit(1000.0) / positive("ns_per_day", ns_per_day)?)
}

/// Overhead share of one microsecond of trajectory at full utilization.
pub fn onprem_overhead_per_microsecond<T: Scalar>(
    node: &OnPremNodeSpec<T>,
    overheads: &OverheadSpec<T>,
) -> Result<T, CostError> {
    node.validate()?;
    let days = days_per_microsecond(node.ns_per_day)?;
    Ok(days / T::lit(365.0) * node_overhead_per_year(overheads, node.rack_u)?)
}

/// Cost of one microsecond of trajectory on an owned node. `base_cost_per_us`
/// covers the node itself plus energy; utilization scales base and overhead.
pub fn onprem_cost_per_microsecond<T: Scalar>(
    node: &OnPremNodeSpec<T>,
    overheads: &OverheadSpec<T>,
    base_cost_per_us: T,
    utilization: T,
) -> Result<T, CostError> {
    Ok(onprem_entry(node, overheads, base_cost_per_us, utilization, "onprem", "EUR")?.cost)
}

/// Same as [`onprem_cost_per_microsecond`], with the base/overhead split kept.
pub fn onprem_entry<T: Scalar>(
    node: &OnPremNodeSpec<T>,
    overheads: &OverheadSpec<T>,
    base_cost_per_us: T,
    utilization: T,
    label: &str,
    currency: &str,
) -> Result<CostReportEntry<T>, CostError> {
    if !(utilization > T::zero() && utilization <= T::one()) {
        return Err(CostError::Utilization(utilization.to_f64_lossy()));
    }
    if !(base_cost_per_us >= T::zero()) {
        return Err(CostError::Negative {
            what: "base_cost_per_us",
            value: base_cost_per_us.to_f64_lossy(),
        });
    }
    let overhead = onprem_overhead_per_microsecond(node, overheads)?;
    let mut basis = BTreeMap::new();
    basis.insert("node_and_energy".to_string(), base_cost_per_us / utilization);
    basis.insert("infrastructure".to_string(), overhead / utilization);
    Ok(CostReportEntry::from_basis(label, currency, basis))
}

/// Fixed plus recurring cost of owning a node for `years`.
pub fn onprem_tco<T: Scalar>(
    node: &OnPremNodeSpec<T>,
    overheads: &OverheadSpec<T>,
    years: T,
    label: &str,
    currency: &str,
) -> Result<CostReportEntry<T>, CostError> {
    positive("years", years)?;
    node.validate()?;
    let mut basis = BTreeMap::new();
    basis.insert("hardware".to_string(), node.hardware_cost);
    basis.insert("energy".to_string(), node.energy_cost_per_year * years);
    basis.insert(
        "infrastructure".to_string(),
        node_overhead_per_year(overheads, node.rack_u)? * years,
    );
    Ok(CostReportEntry::from_basis(label, currency, basis))
}

/// Cost of one microsecond of trajectory on a rented instance.
pub fn cloud_cost_per_microsecond<T: Scalar>(rate_per_hour: T, ns_per_day: T) -> Result<T, CostError> {
    let rate = positive("rate", rate_per_hour)?;
    Ok(days_per_microsecond(ns_per_day)? * T::lit(24.0) * rate)
}

/// Cost of one free-energy difference: every replica in every direction runs
/// one complex job and one ligand job.
pub fn cost_per_fe<T: Scalar>(
    complex_runtime_h: T,
    complex_rate: T,
    ligand_runtime_h: T,
    ligand_rate: T,
    replicas: u32,
    directions: u32,
) -> Result<T, CostError> {
    if replicas == 0 {
        return Err(CostError::ZeroCount { what: "replicas" });
    }
    if directions == 0 {
        return Err(CostError::ZeroCount { what: "directions" });
    }
    for (what, v) in [
        ("complex_runtime_h", complex_runtime_h),
        ("complex_rate", complex_rate),
        ("ligand_runtime_h", ligand_runtime_h),
        ("ligand_rate", ligand_rate),
    ] {
        if !(v >= T::zero()) {
            return Err(CostError::Negative {
                what,
                value: v.to_f64_lossy(),
            });
        }
    }
    let runs = T::from_count(u64::from(replicas) * u64::from(directions));
    Ok(runs * (complex_runtime_h * complex_rate + ligand_runtime_h * ligand_rate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostReportEntry<T = f64> {
    pub label: String,
    pub cost: T,
    pub currency: String,
    pub basis: BTreeMap<String, T>,
}

impl<T: Scalar> CostReportEntry<T> {
    pub fn from_basis(label: impl Into<String>, currency: impl Into<String>, basis: BTreeMap<String, T>) -> Self {
        let cost = basis.values().fold(T::zero(), |acc, &v| acc + v);
        CostReportEntry {
            label: label.into(),
            cost,
            currency: currency.into(),
            basis,
        }
    }

    /// Checked constructor: the total must equal the basis sum to within
    /// half a rounding unit.
    pub fn new(
        label: impl Into<String>,
        cost: T,
        currency: impl Into<String>,
        basis: BTreeMap<String, T>,
    ) -> Result<Self, CostError> {
        let label = label.into();
        let sum = basis.values().fold(T::zero(), |acc, &v| acc + v);
        if (sum - cost).abs() > T::lit(0.005) {
            return Err(CostError::BasisMismatch {
                label,
                cost: cost.to_f64_lossy(),
                sum: sum.to_f64_lossy(),
            });
        }
        Ok(CostReportEntry {
            label,
            cost,
            currency: currency.into(),
            basis,
        })
    }

    /// Multiply every amount by `factor` (currency conversion).
    pub fn converted(&self, factor: T, currency: impl Into<String>) -> Self {
        CostReportEntry {
            label: self.label.clone(),
            cost: self.cost * factor,
            currency: currency.into(),
            basis: self.basis.iter().map(|(k, &v)| (k.clone(), v * factor)).collect(),
        }
    }

    /// Copy with every amount rounded to cents.
    pub fn rounded(&self) -> Self {
        CostReportEntry {
            label: self.label.clone(),
            cost: round_currency(self.cost),
            currency: self.currency.clone(),
            basis: self
                .basis
                .iter()
                .map(|(k, &v)| (k.clone(), round_currency(v)))
                .collect(),
        }
    }
}

/// Structured cost report, rendered by the CLI as a table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostReport<T = f64> {
    pub entries: Vec<CostReportEntry<T>>,
}

impl<T: Scalar> CostReport<T> {
    pub fn rounded(&self) -> Self {
        CostReport {
            entries: self.entries.iter().map(CostReportEntry::rounded).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OnPremCase<T = f64> {
    pub label: String,
    pub node: OnPremNodeSpec<T>,
    pub base_cost_per_us: T,
    #[serde(default = "T::one")]
    pub utilization: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CloudCase<T = f64> {
    pub label: String,
    pub rate_per_hour: T,
    pub ns_per_day: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeCase<T = f64> {
    pub label: String,
    /// Overrides the document currency (rates are often quoted in dollars).
    #[serde(default)]
    pub currency: Option<String>,
    pub complex_runtime_h: T,
    pub complex_rate: T,
    pub ligand_runtime_h: T,
    pub ligand_rate: T,
    pub replicas: u32,
    pub directions: u32,
}

/// Input document of the `cost` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostInput<T = f64> {
    #[serde(default = "default_currency")]
    pub currency: String,
    #[serde(default)]
    pub overheads: OverheadSpec<T>,
    #[serde(default)]
    pub onprem: Vec<OnPremCase<T>>,
    #[serde(default)]
    pub cloud: Vec<CloudCase<T>>,
    #[serde(default)]
    pub fe: Vec<FeCase<T>>,
}

fn default_currency() -> String {
    "EUR".to_string()
}

impl<T: Scalar> CostInput<T> {
    /// Per-microsecond trajectory costs and per-ΔΔG costs, unrounded.
    pub fn evaluate(&self) -> Result<CostReport<T>, CostError> {
        let mut entries = Vec::new();
        for c in &self.onprem {
            entries.push(onprem_entry(
                &c.node,
                &self.overheads,
                c.base_cost_per_us,
                c.utilization,
                &c.label,
                &self.currency,
            )?);
        }
        for c in &self.cloud {
            let cost = cloud_cost_per_microsecond(c.rate_per_hour, c.ns_per_day)?;
            let basis = BTreeMap::from([("instance_hours".to_string(), cost)]);
            entries.push(CostReportEntry::from_basis(&c.label, &self.currency, basis));
        }
        for c in &self.fe {
            let runs = T::from_count(u64::from(c.replicas) * u64::from(c.directions));
            let total = cost_per_fe(
                c.complex_runtime_h,
                c.complex_rate,
                c.ligand_runtime_h,
                c.ligand_rate,
                c.replicas,
                c.directions,
            )?;
            let complex = runs * c.complex_runtime_h * c.complex_rate;
            let basis = BTreeMap::from([
                ("complex".to_string(), complex),
                ("ligand".to_string(), total - complex),
            ]);
            let currency = c.currency.clone().unwrap_or_else(|| self.currency.clone());
            entries.push(CostReportEntry::from_basis(&c.label, currency, basis));
        }
        Ok(CostReport { entries })
    }
}
