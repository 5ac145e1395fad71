//! The batch scheduler and migration suggester.
//!
//! `immediate_schedule` places freshly created pods without touching
//! anything already running. `suggest` periodically picks cloud pods worth
//! pulling to the edge and plans the offloads and reorderings that make
//! room. Both go through `make_decision`.

mod decision;
mod matching;
mod offload;
mod reorder;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ClusterState, Location, NodeId, PodId, ResourceVector};
use crate::objective::{raw_pod_size, size_normalizer, QosConstants, QosLedger};

pub use decision::make_decision;
pub use matching::match_pods;
pub use offload::{best_fit, free_edge_as_needed};
pub use reorder::reorder_edge;

pub(crate) use decision::qos_cmp;

/// Which placement policy drives a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Kubedsm,
    Bef,
    Sef,
    Cf,
    K8s,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] =
        [SchedulerKind::Kubedsm, SchedulerKind::K8s, SchedulerKind::Bef, SchedulerKind::Sef, SchedulerKind::Cf];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::Kubedsm => "kubedsm",
            SchedulerKind::Bef => "bef",
            SchedulerKind::Sef => "sef",
            SchedulerKind::Cf => "cf",
            SchedulerKind::K8s => "k8s",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scheduler kind {s:?} (expected kubedsm, bef, sef, cf or k8s)"))
    }
}

/// Named `(m_c2e, m_er)` presets for the migration experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Original,
    MidMig,
    NoCloudOffload,
    NoMig,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Original, Variant::MidMig, Variant::NoCloudOffload, Variant::NoMig];

    pub fn limits(&self) -> (u32, u32) {
        match self {
            Variant::Original => (5, 3),
            Variant::MidMig => (2, 1),
            Variant::NoCloudOffload => (0, 3),
            Variant::NoMig => (5, 0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Original => "kubedsm",
            Variant::MidMig => "kubedsm-midmig",
            Variant::NoCloudOffload => "kubedsm-nocloudoffload",
            Variant::NoMig => "kubedsm-nomig",
        }
    }

    pub fn config(&self) -> SchedulerConfig {
        let (m_c2e, m_er) = self.limits();
        SchedulerConfig { m_c2e, m_er, ..SchedulerConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Most cloud pods one suggestion may pull to the edge.
    pub m_c2e: u32,
    /// Most edge pods one reordering may move.
    pub m_er: u32,
    pub suggest_period_sec: f64,
    /// Reorder subsets strictly smaller than `m_er` instead of up to it.
    pub reorder_strict: bool,
    /// Hard limits; values above the soft ranges only warn.
    pub max_m_c2e: u32,
    pub max_m_er: u32,
}

pub const SOFT_MAX_M_C2E: u32 = 10;
pub const SOFT_MAX_M_ER: u32 = 3;

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::Kubedsm,
            m_c2e: 5,
            m_er: 3,
            suggest_period_sec: 15.0,
            reorder_strict: false,
            max_m_c2e: 20,
            max_m_er: 6,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.suggest_period_sec.is_finite() && self.suggest_period_sec > 0.0) {
            return Err(format!("scheduler.suggest_period_sec must be positive, got {}", self.suggest_period_sec));
        }
        if self.m_c2e > self.max_m_c2e {
            return Err(format!("scheduler.m_c2e = {} exceeds the hard cap {}", self.m_c2e, self.max_m_c2e));
        }
        if self.m_er > self.max_m_er {
            return Err(format!("scheduler.m_er = {} exceeds the hard cap {}", self.m_er, self.max_m_er));
        }
        Ok(())
    }

    /// Soft-range warnings; enumeration cost grows quickly past these.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m_c2e > SOFT_MAX_M_C2E {
            out.push(format!("m_c2e = {} is above the practical range (<= {SOFT_MAX_M_C2E})", self.m_c2e));
        }
        if self.m_er > SOFT_MAX_M_ER {
            out.push(format!("m_er = {} is above the practical range (<= {SOFT_MAX_M_ER})", self.m_er));
        }
        out
    }

    /// Largest reorder subset actually searched.
    pub fn reorder_limit(&self) -> u32 {
        if self.reorder_strict {
            self.m_er.saturating_sub(1)
        } else {
            self.m_er
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationKind {
    IntraEdge,
    EdgeToCloud,
    CloudToEdge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Migration {
    pub pod: PodId,
    pub from: Location,
    pub to: Location,
}

impl Migration {
    pub fn kind(&self) -> MigrationKind {
        match (self.from.is_edge(), self.to.is_edge()) {
            (true, true) => MigrationKind::IntraEdge,
            (true, false) => MigrationKind::EdgeToCloud,
            _ => MigrationKind::CloudToEdge,
        }
    }
}

/// Split of a pod batch between edge and cloud, plus the moves of existing
/// pods that make the edge share fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub to_edge: Vec<PodId>,
    pub to_cloud: Vec<PodId>,
    pub migrations: Vec<Migration>,
    /// Concrete nodes chosen by the policy itself. When empty, plan
    /// construction picks nodes for `to_edge` by matching.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pinned: BTreeMap<PodId, NodeId>,
}

impl Decision {
    pub fn is_noop(&self) -> bool {
        self.to_edge.is_empty() && self.to_cloud.is_empty() && self.migrations.is_empty()
    }

    /// Checks the structural contract against the batch it answers.
    pub fn check(&self, new_pods: &[PodId]) -> Result<(), String> {
        let edge: BTreeSet<_> = self.to_edge.iter().copied().collect();
        let cloud: BTreeSet<_> = self.to_cloud.iter().copied().collect();
        if edge.len() != self.to_edge.len() || cloud.len() != self.to_cloud.len() {
            return Err("duplicate pod in decision".into());
        }
        if let Some(p) = edge.intersection(&cloud).next() {
            return Err(format!("pod {p} is both edge- and cloud-bound"));
        }
        let all: BTreeSet<_> = edge.union(&cloud).copied().collect();
        let expected: BTreeSet<_> = new_pods.iter().copied().collect();
        if all != expected {
            return Err("decision does not cover exactly the new pods".into());
        }
        if let Some(m) = self.migrations.iter().find(|m| all.contains(&m.pod)) {
            return Err(format!("migration touches new pod {}", m.pod));
        }
        Ok(())
    }
}

/// Output of [`match_pods`]: where each pod goes and the edge
/// fragmentation that results.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub targets: BTreeMap<PodId, Location>,
    pub achieved_fragmentation: f64,
}

impl Matching {
    pub fn placed(&self) -> usize {
        self.targets.values().filter(|l| l.is_edge()).count()
    }
}

/// Places new pods without migrating anything.
pub fn immediate_schedule(
    state: &ClusterState,
    new_pods: &[PodId],
    cfg: &SchedulerConfig,
    c: &QosConstants,
) -> Decision {
    make_decision(state, new_pods, false, cfg, c)
}

/// Cloud pods the suggester would pull to the edge, best first.
///
/// Each round rescores the remaining cloud pods against the picks so far
/// and accepts the winner only if it fits what is left of the free pool.
pub fn suggest_candidates(state: &ClusterState, cfg: &SchedulerConfig, c: &QosConstants) -> Vec<PodId> {
    let norm = size_normalizer(state, c.size_basis);
    let mut ledger = QosLedger::from_state(state);
    let mut free = state.total_edge_free();
    let mut pool: Vec<(PodId, usize, ResourceVector, f64)> = state
        .pods()
        .filter(|p| p.location == Location::OnCloud)
        .filter_map(|p| {
            let ix = state.service_index(&p.service).expect("service");
            let spec = &state.services()[ix];
            spec.edge_feasible.then(|| (p.id, ix, spec.pod_resources, raw_pod_size(spec.pod_resources, norm)))
        })
        .collect();

    let mut chosen = Vec::new();
    while (chosen.len() as u32) < cfg.m_c2e && !pool.is_empty() {
        let mut pick = 0;
        let mut pick_score = f64::NEG_INFINITY;
        for (i, (_, ix, _, size)) in pool.iter().enumerate() {
            let score = ledger.gain_to_edge(*ix, c) / size;
            if score > pick_score {
                pick = i;
                pick_score = score;
            }
        }
        let (pod, ix, res, _) = pool.remove(pick);
        if let Some(rest) = free.checked_sub(res) {
            free = rest;
            ledger.shift_edge(ix, 1);
            chosen.push(pod);
        }
    }
    chosen
}

/// One suggestion round. The decision is computed on `state` itself; the
/// running hypothetical only steers which pods are picked.
pub fn suggest(state: &ClusterState, cfg: &SchedulerConfig, c: &QosConstants) -> Decision {
    let chosen = suggest_candidates(state, cfg, c);
    make_decision(state, &chosen, true, cfg, c)
}

/// Common face of every scheduler the simulator can drive.
pub trait PlacementPolicy: Send + Sync {
    fn name(&self) -> String;

    fn schedule(&self, state: &ClusterState, new_pods: &[PodId]) -> Decision;

    /// Whether `suggest` should be called periodically at all.
    fn suggests(&self) -> bool {
        false
    }

    /// Periodic migration proposal; `None` for policies that never migrate.
    fn suggest(&self, _state: &ClusterState) -> Option<Decision> {
        None
    }
}

#[derive(Clone, Debug, Default)]
pub struct KubeDsm {
    pub config: SchedulerConfig,
    pub qos: QosConstants,
}

impl KubeDsm {
    pub fn new(config: SchedulerConfig, qos: QosConstants) -> Self {
        Self { config, qos }
    }
}

impl PlacementPolicy for KubeDsm {
    fn name(&self) -> String {
        "kubedsm".into()
    }

    fn schedule(&self, state: &ClusterState, new_pods: &[PodId]) -> Decision {
        immediate_schedule(state, new_pods, &self.config, &self.qos)
    }

    fn suggests(&self) -> bool {
        true
    }

    fn suggest(&self, state: &ClusterState) -> Option<Decision> {
        Some(suggest(state, &self.config, &self.qos))
    }
}
