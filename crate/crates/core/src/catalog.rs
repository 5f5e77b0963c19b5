//! Instance types, regions and prices under the three payment models.
//!
//! A [`Catalog`] is immutable once loaded. All rates are dollars per hour;
//! `currency_per_dollar` is only consulted when a report converts to the
//! presentation currency.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SPOT_FRACTION: f64 = 0.30;
pub const DEFAULT_CURRENCY_PER_DOLLAR: f64 = 1.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTypeSpec {
    pub name: String,
    pub vcpus: u32,
    #[serde(default)]
    pub gpus: u32,
    #[serde(default)]
    pub gpu_model: Option<String>,
    pub clock_ghz: f64,
    pub network_gbps: f64,
    #[serde(default)]
    pub efa: bool,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceEntry {
    pub instance: String,
    pub region: String,
    pub on_demand_per_hour: f64,
    #[serde(default = "default_spot_fraction")]
    pub spot_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserved_upfront_per_hour: Option<f64>,
}

fn default_spot_fraction() -> f64 {
    DEFAULT_SPOT_FRACTION
}

impl PriceEntry {
    pub fn spot_per_hour(&self) -> f64 {
        self.on_demand_per_hour * self.spot_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    /// Max simultaneously acquirable instances, keyed by instance family.
    #[serde(default)]
    pub spot_pool: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl RegionSpec {
    pub fn pool_capacity(&self, family: &str) -> u32 {
        self.spot_pool.get(family).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentModel {
    OnDemand,
    Spot,
    #[serde(alias = "reserved")]
    ReservedUpfront,
}

impl fmt::Display for PaymentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaymentModel::OnDemand => "on_demand",
            PaymentModel::Spot => "spot",
            PaymentModel::ReservedUpfront => "reserved_upfront",
        })
    }
}

impl FromStr for PaymentModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on_demand" | "on-demand" | "ondemand" => Ok(PaymentModel::OnDemand),
            "spot" => Ok(PaymentModel::Spot),
            "reserved" | "reserved_upfront" => Ok(PaymentModel::ReservedUpfront),
            other => Err(format!("unknown payment model `{other}`")),
        }
    }
}

/// One invariant violation found while validating a catalog document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("catalog has {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("no price entry for `{instance}` in `{region}`")]
    MissingEntry { instance: String, region: String },
    #[error("no reserved rate for `{instance}` in `{region}`")]
    MissingReservedRate { instance: String, region: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogDoc {
    instances: Vec<InstanceTypeSpec>,
    regions: Vec<RegionSpec>,
    prices: Vec<PriceEntry>,
    #[serde(default = "default_currency_per_dollar")]
    currency_per_dollar: f64,
}

fn default_currency_per_dollar() -> f64 {
    DEFAULT_CURRENCY_PER_DOLLAR
}

#[derive(Debug, Clone)]
pub struct Catalog {
    instances: Vec<InstanceTypeSpec>,
    regions: Vec<RegionSpec>,
    prices: Vec<PriceEntry>,
    /// Dollars per unit of the report currency (1.20 $ buys 1.00 EUR).
    pub currency_per_dollar: f64,
    instance_index: HashMap<String, usize>,
    region_index: HashMap<String, usize>,
    price_index: HashMap<(String, String), usize>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.instances == other.instances
            && self.regions == other.regions
            && self.prices == other.prices
            && self.currency_per_dollar == other.currency_per_dollar
    }
}

impl Catalog {
    pub fn new(
        instances: Vec<InstanceTypeSpec>,
        regions: Vec<RegionSpec>,
        prices: Vec<PriceEntry>,
        currency_per_dollar: f64,
    ) -> Result<Self, CatalogError> {
        let violations = validate(&instances, &regions, &prices, currency_per_dollar);
        if !violations.is_empty() {
            return Err(CatalogError::Validation(violations));
        }
        let instance_index = instances.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        let region_index = regions.iter().enumerate().map(|(i, r)| (r.name.clone(), i)).collect();
        let price_index = prices
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.instance.clone(), p.region.clone()), i))
            .collect();
        Ok(Catalog {
            instances,
            regions,
            prices,
            currency_per_dollar,
            instance_index,
            region_index,
            price_index,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDoc = serde_json::from_str(text)?;
        Catalog::new(doc.instances, doc.regions, doc.prices, doc.currency_per_dollar)
    }

    pub fn to_json_string(&self) -> String {
        let doc = CatalogDoc {
            instances: self.instances.clone(),
            regions: self.regions.clone(),
            prices: self.prices.clone(),
            currency_per_dollar: self.currency_per_dollar,
        };
        serde_json::to_string_pretty(&doc).expect("catalog serializes")
    }

    pub fn instances(&self) -> &[InstanceTypeSpec] {
        &self.instances
    }

    pub fn regions(&self) -> &[RegionSpec] {
        &self.regions
    }

    pub fn prices(&self) -> &[PriceEntry] {
        &self.prices
    }

    pub fn instance(&self, name: &str) -> Option<&InstanceTypeSpec> {
        self.instance_index.get(name).map(|&i| &self.instances[i])
    }

    pub fn region(&self, name: &str) -> Option<&RegionSpec> {
        self.region_index.get(name).map(|&i| &self.regions[i])
    }

    pub fn price(&self, instance: &str, region: &str) -> Option<&PriceEntry> {
        self.price_index
            .get(&(instance.to_string(), region.to_string()))
            .map(|&i| &self.prices[i])
    }

    /// Convert a dollar amount into the report currency.
    pub fn to_report_currency(&self, dollars: f64) -> f64 {
        dollars / self.currency_per_dollar
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Catalog::from_json_str(&text)
}

/// Hourly dollar rate for an instance in a region under a payment model.
pub fn lookup_rate(catalog: &Catalog, instance: &str, region: &str, model: PaymentModel) -> Result<f64, RateError> {
    let entry = catalog.price(instance, region).ok_or_else(|| RateError::MissingEntry {
        instance: instance.to_string(),
        region: region.to_string(),
    })?;
    match model {
        PaymentModel::OnDemand => Ok(entry.on_demand_per_hour),
        PaymentModel::Spot => Ok(entry.spot_per_hour()),
        PaymentModel::ReservedUpfront => {
            entry
                .reserved_upfront_per_hour
                .ok_or_else(|| RateError::MissingReservedRate {
                    instance: instance.to_string(),
                    region: region.to_string(),
                })
        }
    }
}

fn validate(
    instances: &[InstanceTypeSpec],
    regions: &[RegionSpec],
    prices: &[PriceEntry],
    currency_per_dollar: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: &str| {
        out.push(Violation {
            location,
            message: message.to_string(),
        })
    };

    let mut seen = HashMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let loc = format!("instances[{i}] ({})", inst.name);
        if inst.name.is_empty() {
            push(loc.clone(), "empty name");
        }
        if let Some(prev) = seen.insert(inst.name.as_str(), i) {
            push(
                loc.clone(),
                &format!("duplicate instance name (first at instances[{prev}])"),
            );
        }
        if inst.vcpus < 1 {
            push(loc.clone(), "vcpus must be >= 1");
        }
        if !(inst.network_gbps > 0.0) {
            push(loc.clone(), "network_gbps must be > 0");
        }
        if !(inst.clock_ghz > 0.0) {
            push(loc, "clock_ghz must be > 0");
        }
    }

    if regions.is_empty() {
        push("regions".to_string(), "at least one region is required");
    }
    let mut seen_regions = HashMap::new();
    for (i, region) in regions.iter().enumerate() {
        let loc = format!("regions[{i}] ({})", region.name);
        if let Some(prev) = seen_regions.insert(region.name.as_str(), i) {
            push(
                loc.clone(),
                &format!("duplicate region name (first at regions[{prev}])"),
            );
        }
        if let Some(w) = region.weight {
            if !(w >= 0.0) || !w.is_finite() {
                push(loc, "weight must be a nonnegative number");
            }
        }
    }

    let mut seen_prices = HashMap::new();
    for (i, p) in prices.iter().enumerate() {
        let loc = format!("prices[{i}] ({} @ {})", p.instance, p.region);
        if !seen.contains_key(p.instance.as_str()) {
            push(loc.clone(), &format!("references unknown instance `{}`", p.instance));
        }
        if !seen_regions.contains_key(p.region.as_str()) {
            push(loc.clone(), &format!("references unknown region `{}`", p.region));
        }
        if let Some(prev) = seen_prices.insert((p.instance.as_str(), p.region.as_str()), i) {
            push(loc.clone(), &format!("duplicate price entry (first at prices[{prev}])"));
        }
        if !(p.on_demand_per_hour > 0.0) || !p.on_demand_per_hour.is_finite() {
            push(loc.clone(), "on_demand_per_hour must be > 0");
        }
        if !(p.spot_fraction > 0.0 && p.spot_fraction <= 1.0) {
            push(loc.clone(), "spot_fraction must lie in (0, 1]");
        }
        if let Some(r) = p.reserved_upfront_per_hour {
            if !(r > 0.0) || !r.is_finite() {
                push(loc, "reserved_upfront_per_hour must be > 0");
            }
        }
    }

    if !(currency_per_dollar > 0.0) || !currency_per_dollar.is_finite() {
        push("currency_per_dollar".to_string(), "must be > 0");
    }
    out
}
