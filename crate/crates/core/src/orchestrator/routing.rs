use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("routing weights must contain at least one positive weight")]
    AllZero,
    #[error("routing weight for `{region}` must be finite and >= 0 (got {weight})")]
    BadWeight { region: String, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    WeightedRandom,
    ProportionalRoundrobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub mode: RoutingMode,
    pub weights: BTreeMap<String, f64>,
}

impl RoutingPolicy {
    pub fn validate(&self) -> Result<(), RoutingError> {
        for (region, &weight) in &self.weights {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(RoutingError::BadWeight {
                    region: region.clone(),
                    weight,
                });
            }
        }
        if !self.weights.values().any(|&w| w > 0.0) {
            return Err(RoutingError::AllZero);
        }
        Ok(())
    }
}

/// Stateful region picker for one policy. Regions are visited in name order.
#[derive(Debug, Clone)]
pub struct Router {
    regions: Vec<String>,
    weights: Vec<f64>,
    total: f64,
    current: Vec<f64>,
    sampler: Option<WeightedIndex<f64>>,
}

impl Router {
    pub fn new(policy: &RoutingPolicy) -> Result<Self, RoutingError> {
        policy.validate()?;
        let regions: Vec<String> = policy.weights.keys().cloned().collect();
        let weights: Vec<f64> = policy.weights.values().copied().collect();
        let sampler = match policy.mode {
            RoutingMode::WeightedRandom => Some(WeightedIndex::new(&weights).map_err(|_| RoutingError::AllZero)?),
            RoutingMode::ProportionalRoundrobin => None,
        };
        Ok(Router {
            total: weights.iter().sum(),
            current: vec![0.0; weights.len()],
            regions,
            weights,
            sampler,
        })
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    /// Pick the region for the next submission. Round robin is smooth
    /// weighted round robin with ties going to the earlier region.
    pub fn route_job<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &str {
        let idx = match &self.sampler {
            Some(s) => s.sample(rng),
            None => {
                let mut best = 0;
                for i in 0..self.current.len() {
                    self.current[i] += self.weights[i];
                    if self.current[i] > self.current[best] {
                        best = i;
                    }
                }
                self.current[best] -= self.total;
                best
            }
        };
        &self.regions[idx]
    }
}
