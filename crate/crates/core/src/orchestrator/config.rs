use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::placement::AllowedType;
use super::routing::RoutingPolicy;
use crate::catalog::PaymentModel;
use crate::workload::JobKind;

pub const DEFAULT_IDLE_GRACE_S: f64 = 120.0;
pub const DEFAULT_METRICS_INTERVAL_S: f64 = 60.0;

/// How long an empty instance stays up before it is released.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdleGrace {
    After(f64),
    /// Idle instances keep running until the end of the run.
    Never,
}

impl IdleGrace {
    pub fn seconds(self) -> f64 {
        match self {
            IdleGrace::After(s) => s,
            IdleGrace::Never => f64::INFINITY,
        }
    }
}

impl Default for IdleGrace {
    fn default() -> Self {
        IdleGrace::After(DEFAULT_IDLE_GRACE_S)
    }
}

impl fmt::Display for IdleGrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdleGrace::After(s) => write!(f, "{s}"),
            IdleGrace::Never => f.write_str("never"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GraceRepr {
    Seconds(f64),
    Word(String),
}

impl<'de> Deserialize<'de> for IdleGrace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match GraceRepr::deserialize(d)? {
            GraceRepr::Seconds(s) if s >= 0.0 && s.is_finite() => Ok(IdleGrace::After(s)),
            GraceRepr::Word(w) if w == "never" => Ok(IdleGrace::Never),
            GraceRepr::Seconds(s) => Err(serde::de::Error::custom(format!("idle grace must be >= 0, got {s}"))),
            GraceRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "idle grace must be a number of seconds or \"never\", got {w:?}"
            ))),
        }
    }
}

impl Serialize for IdleGrace {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            IdleGrace::After(x) => s.serialize_f64(*x),
            IdleGrace::Never => s.serialize_str("never"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEntry {
    pub region: String,
    pub family: String,
    pub rate: f64,
}

/// Poisson preemption hazard per instance-hour, keyed by (region, family).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreemptionModel {
    #[serde(default)]
    pub default_rate_per_instance_hour: f64,
    #[serde(default)]
    pub rates: Vec<HazardEntry>,
}

impl PreemptionModel {
    pub fn rate_for(&self, region: &str, family: &str) -> f64 {
        self.rates
            .iter()
            .find(|h| h.region == region && h.family == family)
            .map_or(self.default_rate_per_instance_hour, |h| h.rate)
    }
}

/// Forced preemption of instance `i{n}` (instances are numbered in order of
/// acquisition request, starting at 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPreemption {
    pub instance: String,
    pub at_s: f64,
}

/// Replaces the catalog's pool capacity for one (region, family).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolOverride {
    pub region: String,
    pub family: String,
    pub capacity: u32,
}

fn default_payment() -> PaymentModel {
    PaymentModel::Spot
}

fn default_metrics_interval() -> f64 {
    DEFAULT_METRICS_INTERVAL_S
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    pub routing: RoutingPolicy,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub routing_by_kind: BTreeMap<JobKind, RoutingPolicy>,
    pub allowed_types: BTreeMap<JobKind, Vec<AllowedType>>,
    #[serde(default = "default_payment")]
    pub payment: PaymentModel,
    #[serde(default)]
    pub preemption: PreemptionModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spot_pool_overrides: Vec<PoolOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scripted_preemptions: Vec<ScriptedPreemption>,
    #[serde(default)]
    pub idle_grace_s: IdleGrace,
    #[serde(default = "default_metrics_interval")]
    pub metrics_interval_s: f64,
    /// Transition throughput relative to equilibration when no transition
    /// benchmark exists.
    #[serde(default = "one")]
    pub transition_slowdown: f64,
    #[serde(default)]
    pub acquisition_latency_s: f64,
    /// Instances per minute a region can hand out; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition_throughput_per_min: Option<f64>,
    /// Added to the first work item after each placement.
    #[serde(default)]
    pub startup_latency_s: f64,
    /// Added to every chunk and transition.
    #[serde(default)]
    pub checkpoint_latency_s: f64,
}

impl SimConfig {
    pub fn pool_override(&self, region: &str, family: &str) -> Option<u32> {
        self.spot_pool_overrides
            .iter()
            .find(|o| o.region == region && o.family == family)
            .map(|o| o.capacity)
    }

    pub fn new(routing: RoutingPolicy, allowed_types: BTreeMap<JobKind, Vec<AllowedType>>) -> Self {
        SimConfig {
            seed: 0,
            routing,
            routing_by_kind: BTreeMap::new(),
            allowed_types,
            payment: PaymentModel::Spot,
            preemption: PreemptionModel::default(),
            spot_pool_overrides: Vec::new(),
            scripted_preemptions: Vec::new(),
            idle_grace_s: IdleGrace::default(),
            metrics_interval_s: DEFAULT_METRICS_INTERVAL_S,
            transition_slowdown: 1.0,
            acquisition_latency_s: 0.0,
            acquisition_throughput_per_min: None,
            startup_latency_s: 0.0,
            checkpoint_latency_s: 0.0,
        }
    }
}
