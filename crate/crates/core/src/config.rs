//! On-disk formats: the cluster definition file and the run configuration.
//! Both are TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterState, ModelError, NodeKind, NodeSpec, ResourceVector, ServiceSpec};
use crate::objective::QosConstants;
use crate::scheduler::SchedulerConfig;
use crate::sim::{LifecycleLatencies, SimulationSettings};

/// Environment variable naming a run-config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "EDGESCHED_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {what}: {source}")]
    Parse { what: String, source: toml::de::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub(crate) fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(
    text: &str,
    what: &str,
) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|source| ConfigError::Parse { what: what.to_string(), source })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: String,
    pub kind: NodeKind,
    /// Ignored for the cloud node, which is unbounded.
    #[serde(default)]
    pub cpu_cores: f64,
    #[serde(default)]
    pub memory_gb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub id: String,
    pub cpu_millicores: u64,
    pub memory_mib: u64,
    #[serde(default = "one")]
    pub qos_target: f64,
}

fn one() -> f64 {
    1.0
}

/// The cluster file: nodes in cores / GB, services in millicores / MiB.
/// 1 GB is taken as 1024 MiB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDefinition {
    pub nodes: Vec<NodeEntry>,
    pub services: Vec<ServiceEntry>,
}

impl ClusterDefinition {
    /// Three heterogeneous edge nodes, one cloud node and four services.
    /// The control-plane node carries no workload and is left out.
    pub fn table_fixture() -> Self {
        let node = |id: &str, kind, cores: f64, gb: f64| NodeEntry {
            id: id.to_string(),
            kind,
            cpu_cores: cores,
            memory_gb: gb,
        };
        let svc = |id: &str, m: u64, mib: u64| ServiceEntry {
            id: id.to_string(),
            cpu_millicores: m,
            memory_mib: mib,
            qos_target: 1.0,
        };
        Self {
            nodes: vec![
                node("N2", NodeKind::Edge, 5.0, 5.0),
                node("N3", NodeKind::Edge, 4.0, 4.0),
                node("N4", NodeKind::Edge, 7.0, 5.0),
                node("N5", NodeKind::Cloud, 22.0, 17.0),
            ],
            services: vec![
                svc("A", 1000, 950),
                svc("B", 1000, 1900),
                svc("C", 1000, 950),
                svc("D", 2000, 1900),
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        parse_toml(text, "cluster definition")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read_file(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("cluster definition serializes")
    }

    pub fn to_state(&self) -> Result<ClusterState, ConfigError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let spec = match n.kind {
                NodeKind::Cloud => NodeSpec::cloud(n.id.clone()),
                NodeKind::Edge => {
                    if !(n.cpu_cores.is_finite() && n.memory_gb.is_finite())
                        || n.cpu_cores <= 0.0
                        || n.memory_gb <= 0.0
                    {
                        return Err(ConfigError::Invalid(format!(
                            "edge node {} needs positive cpu_cores and memory_gb",
                            n.id
                        )));
                    }
                    NodeSpec::edge(
                        n.id.clone(),
                        ResourceVector::new(
                            (n.cpu_cores * 1000.0).round() as u64,
                            (n.memory_gb * 1024.0).round() as u64,
                        ),
                    )
                }
            };
            nodes.push(spec);
        }
        let services = self
            .services
            .iter()
            .map(|s| {
                ServiceSpec::new(
                    s.id.clone(),
                    ResourceVector::new(s.cpu_millicores, s.memory_mib),
                    s.qos_target,
                )
            })
            .collect();
        Ok(ClusterState::new(nodes, services)?)
    }

    /// Overrides per-service QoS targets, in service-id order.
    pub fn with_qos_targets(&self, targets: &[f64]) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        out.services.sort_by(|a, b| a.id.cmp(&b.id));
        if targets.len() != out.services.len() {
            return Err(ConfigError::Invalid(format!(
                "{} qos targets for {} services",
                targets.len(),
                out.services.len()
            )));
        }
        for (s, q) in out.services.iter_mut().zip(targets) {
            s.qos_target = *q;
        }
        Ok(out)
    }
}

/// Everything tunable about a run besides the cluster and the scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub qos: QosConstants,
    pub scheduler: SchedulerConfig,
    pub latencies: LifecycleLatencies,
    pub simulation: SimulationSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = parse_toml(text, "run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read_file(path)?)
    }

    /// Loads `path`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.qos.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scheduler.validate().map_err(ConfigError::Invalid)?;
        self.latencies.validate().map_err(ConfigError::Invalid)?;
        self.simulation.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_converts_gb_at_1024() {
        let s = ClusterDefinition::table_fixture().to_state().unwrap();
        let caps: Vec<_> = s.edge_nodes().iter().map(|n| (n.id.to_string(), n.capacity)).collect();
        assert_eq!(
            caps,
            vec![
                ("N2".into(), ResourceVector::new(5000, 5120)),
                ("N3".into(), ResourceVector::new(4000, 4096)),
                ("N4".into(), ResourceVector::new(7000, 5120)),
            ]
        );
        assert_eq!(s.cloud_node().capacity, ResourceVector::UNBOUNDED);
    }

    #[test]
    fn cluster_file_round_trips() {
        let def = ClusterDefinition::table_fixture();
        assert_eq!(ClusterDefinition::from_toml(&def.to_toml()).unwrap(), def);
    }

    #[test]
    fn cluster_file_parses_handwritten() {
        let text = r#"
            [[nodes]]
            id = "e1"
            kind = "edge"
            cpu_cores = 2
            memory_gb = 1.5

            [[nodes]]
            id = "c"
            kind = "cloud"

            [[services]]
            id = "web"
            cpu_millicores = 250
            memory_mib = 128
        "#;
        let s = ClusterDefinition::from_toml(text).unwrap().to_state().unwrap();
        assert_eq!(s.edge_nodes()[0].capacity, ResourceVector::new(2000, 1536));
        assert_eq!(s.services()[0].qos_target, 1.0);
    }

    #[test]
    fn run_config_keys() {
        let cfg = RunConfig::from_toml(
            "[qos]\nalpha = 50.0\nbeta = 0.5\ngamma = 9000.0\n[scheduler]\nm_c2e = 2\nm_er = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.qos.alpha, 50.0);
        assert_eq!(cfg.scheduler.m_c2e, 2);
        assert_eq!(cfg.scheduler.m_er, 1);
        assert_eq!(cfg.scheduler.suggest_period_sec, 15.0);
        assert!(RunConfig::from_toml("[qos]\nalpha = 1.0\nbeta = 2.0\ngamma = 100.0\n").is_err());
    }

    #[test]
    fn qos_override_in_id_order() {
        let def = ClusterDefinition::table_fixture().with_qos_targets(&[0.5, 0.1, 1.0, 0.1]).unwrap();
        let s = def.to_state().unwrap();
        let q: Vec<f64> = s.services().iter().map(|s| s.qos_target).collect();
        assert_eq!(q, vec![0.5, 0.1, 1.0, 0.1]);
    }
}
