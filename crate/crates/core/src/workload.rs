//! Replica-target scenarios: a per-cycle edge-utilization fraction drawn
//! from a normal distribution, split equally across services and turned
//! into replica counts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, read_file, ConfigError};
use crate::model::{ClusterState, ServiceId};

fn default_cycles() -> u32 {
    12
}
fn default_cycle_sec() -> f64 {
    90.0
}
fn default_min_frac() -> f64 {
    0.1
}
fn default_max_frac() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Conventionally `"{mean}_{std}"`, e.g. `"1.0_0.5"`.
    pub name: String,
    pub mean_utilization: f64,
    pub std_utilization: f64,
    #[serde(default = "default_cycles")]
    pub cycles: u32,
    #[serde(default = "default_cycle_sec")]
    pub cycle_sec: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_frac")]
    pub min_frac: f64,
    #[serde(default = "default_max_frac")]
    pub max_frac: f64,
    /// Fixed per-cycle targets that bypass sampling when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<BTreeMap<ServiceId, u32>>>,
}

impl Scenario {
    pub fn new(mean: f64, std: f64, seed: u64) -> Self {
        Scenario {
            name: format!("{mean:.1}_{std:.1}"),
            mean_utilization: mean,
            std_utilization: std,
            cycles: default_cycles(),
            cycle_sec: default_cycle_sec(),
            seed,
            min_frac: default_min_frac(),
            max_frac: default_max_frac(),
            targets: None,
        }
    }

    /// Parses names like `"1.5_0.4"`.
    pub fn from_name(name: &str, seed: u64) -> Result<Self, ConfigError> {
        let bad = || ConfigError::Invalid(format!("scenario name {name:?} is not MEAN_STD"));
        let (m, s) = name.split_once('_').ok_or_else(bad)?;
        let mean: f64 = m.parse().map_err(|_| bad())?;
        let std: f64 = s.parse().map_err(|_| bad())?;
        let mut sc = Scenario::new(mean, std, seed);
        sc.name = name.to_string();
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let sc: Scenario = parse_toml(text, "scenario")?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read_file(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.mean_utilization.is_finite() && self.mean_utilization > 0.0) {
            return bad(format!("mean_utilization must be positive, got {}", self.mean_utilization));
        }
        if !(self.std_utilization.is_finite() && self.std_utilization >= 0.0) {
            return bad(format!("std_utilization must be non-negative, got {}", self.std_utilization));
        }
        if !(self.cycle_sec.is_finite() && self.cycle_sec > 0.0) {
            return bad(format!("cycle_sec must be positive, got {}", self.cycle_sec));
        }
        if !(self.min_frac >= 0.0 && self.min_frac <= self.max_frac && self.max_frac.is_finite()) {
            return bad(format!("need 0 <= min_frac <= max_frac, got [{}, {}]", self.min_frac, self.max_frac));
        }
        if let Some(t) = &self.targets {
            if t.len() != self.cycles as usize {
                return bad(format!("{} explicit target cycles for {} cycles", t.len(), self.cycles));
            }
        }
        Ok(())
    }
}

/// Replica targets for one cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub index: u32,
    pub targets: BTreeMap<ServiceId, u32>,
}

/// Replicas for each service when a `fraction` of the edge pool is in use,
/// split equally. The tighter of the two resource components decides.
pub fn targets_for_fraction(state: &ClusterState, fraction: f64) -> BTreeMap<ServiceId, u32> {
    let total = state.total_edge_capacity();
    let n = state.services().len().max(1) as f64;
    let cpu_share = fraction * total.cpu_millicores as f64 / n;
    let mem_share = fraction * total.memory_mib as f64 / n;
    state
        .services()
        .iter()
        .map(|s| {
            let by_cpu = (cpu_share / s.pod_resources.cpu_millicores as f64).floor();
            let by_mem = (mem_share / s.pod_resources.memory_mib as f64).floor();
            let replicas = by_cpu.min(by_mem).max(1.0) as u32;
            (s.id.clone(), replicas)
        })
        .collect()
}

/// Sampled fractions, one per cycle, clamped into `[min_frac, max_frac]`.
pub fn sample_fractions(scenario: &Scenario) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let normal = Normal::new(scenario.mean_utilization, scenario.std_utilization).expect("validated std");
    (0..scenario.cycles)
        .map(|_| normal.sample(&mut rng).clamp(scenario.min_frac, scenario.max_frac))
        .collect()
}

pub fn generate_cycles(scenario: &Scenario, state: &ClusterState) -> Vec<Cycle> {
    if let Some(explicit) = &scenario.targets {
        return explicit
            .iter()
            .enumerate()
            .map(|(i, t)| Cycle { index: i as u32, targets: t.clone() })
            .collect();
    }
    sample_fractions(scenario)
        .into_iter()
        .enumerate()
        .map(|(i, f)| Cycle { index: i as u32, targets: targets_for_fraction(state, f) })
        .collect()
}

/// QoS-target configurations for the QoS experiments, in service-id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QosPreset {
    Default,
    AllEqual,
    CGreaterA,
    RespectD,
}

impl QosPreset {
    pub const ALL: [QosPreset; 4] = [QosPreset::Default, QosPreset::AllEqual, QosPreset::CGreaterA, QosPreset::RespectD];

    pub fn targets(&self) -> [f64; 4] {
        match self {
            QosPreset::Default => [1.0, 1.0, 1.0, 1.0],
            QosPreset::AllEqual => [0.5, 0.5, 0.5, 0.5],
            QosPreset::CGreaterA => [0.5, 0.1, 1.0, 0.1],
            QosPreset::RespectD => [0.1, 0.1, 0.1, 0.5],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            QosPreset::Default => "default",
            QosPreset::AllEqual => "all-equal",
            QosPreset::CGreaterA => "c-gt-a",
            QosPreset::RespectD => "respect-d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        QosPreset::ALL.into_iter().find(|p| p.label() == s)
    }
}
