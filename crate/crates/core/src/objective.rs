//! Scalar objectives: per-service QoS, its cluster total, migration counts,
//! fragmentation, pod size and the two relocation scores built on them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterState, Location, PodId, ResourceVector, ServiceId, ServiceSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("unknown pod {0}")]
    UnknownPod(PodId),
    #[error("pod {0} is not on the cloud")]
    NotOnCloud(PodId),
    #[error("pod {0} is not on an edge node")]
    NotOnEdge(PodId),
    #[error("edge capacity must be positive in both components")]
    ZeroEdgeCapacity,
    #[error("pod {0} exists in only one of the compared states")]
    PodUniverseMismatch(PodId),
    #[error("invalid QoS constants: {0}")]
    InvalidConstants(String),
}

/// What a pod's size is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBasis {
    /// Sum of all edge node capacities.
    #[default]
    TotalEdge,
    /// Capacity of the single largest edge node.
    LargestNode,
}

/// Penalty slope below target (`alpha`), reward slope at or above target
/// (`beta`) and the bonus for meeting the target (`gamma`).
/// Valid constants satisfy `0 <= beta < alpha` and `gamma >= 100 * alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub size_basis: SizeBasis,
}

impl Default for QosConstants {
    fn default() -> Self {
        Self { alpha: 100.0, beta: 1.0, gamma: 10_000.0, size_basis: SizeBasis::TotalEdge }
    }
}

impl QosConstants {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ObjectiveError> {
        let c = Self { alpha, beta, gamma, size_basis: SizeBasis::TotalEdge };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ok = [self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite())
            && self.alpha > 0.0
            && self.beta >= 0.0
            && self.beta < self.alpha
            && self.gamma >= 100.0 * self.alpha;
        if ok {
            Ok(())
        } else {
            Err(ObjectiveError::InvalidConstants(format!(
                "need 0 <= beta < alpha and gamma >= 100*alpha, got alpha={} beta={} gamma={}",
                self.alpha, self.beta, self.gamma
            )))
        }
    }

    /// Same constants multiplied by a common positive factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            gamma: self.gamma * factor,
            size_basis: self.size_basis,
        }
    }
}

/// Piecewise-linear satisfaction transform: `alpha*x` below zero,
/// `beta*x + gamma` from zero up.
pub fn f_transform(x: f64, c: &QosConstants) -> f64 {
    if x < 0.0 {
        c.alpha * x
    } else {
        c.beta * x + c.gamma
    }
}

/// Edge fraction minus target. A service without pods counts as fully
/// satisfied: `1 - target`.
pub(crate) fn delta_from_counts(edge: u32, total: u32, target: f64) -> f64 {
    if total == 0 {
        1.0 - target
    } else {
        edge as f64 / total as f64 - target
    }
}

pub fn delta(state: &ClusterState, service: &ServiceId) -> Result<f64, ObjectiveError> {
    let spec = state.service(service).ok_or_else(|| ObjectiveError::UnknownService(service.clone()))?;
    let (mut edge, mut total) = (0u32, 0u32);
    for p in state.pods_of(service) {
        total += 1;
        edge += p.location.is_edge() as u32;
    }
    Ok(delta_from_counts(edge, total, spec.qos_target))
}

pub fn qos_total(state: &ClusterState, c: &QosConstants) -> f64 {
    QosLedger::from_state(state).total(c)
}

/// Per-service (edge, total) pod counts; the only inputs QoS depends on.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct QosLedger {
    entries: Vec<LedgerEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LedgerEntry {
    edge: u32,
    total: u32,
    target: f64,
}

impl QosLedger {
    /// Indexed like `state.services()`.
    pub(crate) fn from_state(state: &ClusterState) -> Self {
        let mut entries: Vec<LedgerEntry> = state
            .services()
            .iter()
            .map(|s| LedgerEntry { edge: 0, total: 0, target: s.qos_target })
            .collect();
        for p in state.pods() {
            if let Some(i) = state.service_index(&p.service) {
                entries[i].total += 1;
                entries[i].edge += p.location.is_edge() as u32;
            }
        }
        Self { entries }
    }

    pub(crate) fn delta(&self, ix: usize) -> f64 {
        let e = self.entries[ix];
        delta_from_counts(e.edge, e.total, e.target)
    }

    pub(crate) fn total(&self, c: &QosConstants) -> f64 {
        (0..self.entries.len()).map(|i| f_transform(self.delta(i), c)).sum()
    }

    fn value_with_edge(&self, ix: usize, edge: u32, c: &QosConstants) -> f64 {
        let e = self.entries[ix];
        f_transform(delta_from_counts(edge, e.total, e.target), c)
    }

    /// QoS change if one more pod of the service ran on edge.
    pub(crate) fn gain_to_edge(&self, ix: usize, c: &QosConstants) -> f64 {
        let e = self.entries[ix];
        self.value_with_edge(ix, e.edge + 1, c) - self.value_with_edge(ix, e.edge, c)
    }

    /// QoS change if one of the service's edge pods went to the cloud.
    pub(crate) fn gain_to_cloud(&self, ix: usize, c: &QosConstants) -> f64 {
        let e = self.entries[ix];
        debug_assert!(e.edge > 0);
        self.value_with_edge(ix, e.edge.saturating_sub(1), c) - self.value_with_edge(ix, e.edge, c)
    }

    pub(crate) fn shift_edge(&mut self, ix: usize, by: i64) {
        let e = &mut self.entries[ix];
        let next = e.edge as i64 + by;
        debug_assert!(next >= 0 && next <= e.total as i64, "edge count out of range");
        e.edge = next.clamp(0, e.total as i64) as u32;
    }
}

fn on_edge_node(loc: &Location) -> Option<&crate::model::NodeId> {
    loc.edge_node()
}

/// Number of migrations between two allocations, excluding newly created
/// pods. A move between edge nodes, or between edge and cloud, is one
/// migration: the per-node change counts each edge-to-edge move twice and
/// each edge/cloud crossing once, the edge-membership change adds one for
/// the crossing, and the sum is halved.
pub fn migration_count(
    before: &ClusterState,
    after: &ClusterState,
    exclude_new: &BTreeSet<PodId>,
) -> Result<u64, ObjectiveError> {
    let mut twice = 0u64;
    for p in before.pods() {
        if exclude_new.contains(&p.id) {
            continue;
        }
        let q = after.pod(p.id).ok_or(ObjectiveError::PodUniverseMismatch(p.id))?;
        let (b, a) = (on_edge_node(&p.location), on_edge_node(&q.location));
        let per_node = match (b, a) {
            (Some(x), Some(y)) if x == y => 0,
            (Some(_), Some(_)) => 2,
            (Some(_), None) | (None, Some(_)) => 1,
            (None, None) => 0,
        };
        let membership = (b.is_some() as i64 - a.is_some() as i64).unsigned_abs();
        twice += per_node + membership;
    }
    for q in after.pods() {
        if !exclude_new.contains(&q.id) && before.pod(q.id).is_none() {
            return Err(ObjectiveError::PodUniverseMismatch(q.id));
        }
    }
    debug_assert!(twice.is_multiple_of(2));
    Ok(twice / 2)
}

/// `1 - (cpu_used/cpu_total) * (mem_used/mem_total)` for one node.
pub fn node_fragmentation(used: ResourceVector, capacity: ResourceVector) -> f64 {
    let cpu = used.cpu_millicores as f64 / capacity.cpu_millicores as f64;
    let mem = used.memory_mib as f64 / capacity.memory_mib as f64;
    1.0 - cpu * mem
}

/// Summed over edge nodes only; lower is tighter packing.
pub fn fragmentation(state: &ClusterState) -> f64 {
    state
        .edge_nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| node_fragmentation(state.used_at(i), n.capacity))
        .sum()
}

/// The capacity a pod's size is normalized against.
pub fn size_normalizer(state: &ClusterState, basis: SizeBasis) -> ResourceVector {
    match basis {
        SizeBasis::TotalEdge => state.total_edge_capacity(),
        SizeBasis::LargestNode => state.largest_edge_capacity(),
    }
}

/// Geometric mean of the pod's CPU and memory shares of the edge pool.
pub fn pod_size(service: &ServiceSpec, edge_totals: ResourceVector) -> Result<f64, ObjectiveError> {
    if !edge_totals.is_positive() {
        return Err(ObjectiveError::ZeroEdgeCapacity);
    }
    Ok(raw_pod_size(service.pod_resources, edge_totals))
}

pub(crate) fn raw_pod_size(pod: ResourceVector, totals: ResourceVector) -> f64 {
    let cpu = pod.cpu_millicores as f64 / totals.cpu_millicores as f64;
    let mem = pod.memory_mib as f64 / totals.memory_mib as f64;
    (cpu * mem).sqrt()
}

fn pod_service(
    state: &ClusterState,
    pod: PodId,
) -> Result<(&Location, usize, &ServiceSpec), ObjectiveError> {
    let rec = state.pod(pod).ok_or(ObjectiveError::UnknownPod(pod))?;
    let ix = state
        .service_index(&rec.service)
        .ok_or_else(|| ObjectiveError::UnknownService(rec.service.clone()))?;
    Ok((&rec.location, ix, &state.services()[ix]))
}

/// QoS gained per unit of size by bringing a cloud pod to the edge. The
/// target node does not matter: QoS sees only edge/cloud membership.
pub fn suggest_score(state: &ClusterState, pod: PodId, c: &QosConstants) -> Result<f64, ObjectiveError> {
    let (loc, ix, spec) = pod_service(state, pod)?;
    if *loc != Location::OnCloud {
        return Err(ObjectiveError::NotOnCloud(pod));
    }
    let size = pod_size(spec, size_normalizer(state, c.size_basis))?;
    Ok(QosLedger::from_state(state).gain_to_edge(ix, c) / size)
}

/// QoS change per unit of size from sending an edge pod to the cloud.
/// Never positive while `beta >= 0`.
pub fn free_score(state: &ClusterState, pod: PodId, c: &QosConstants) -> Result<f64, ObjectiveError> {
    let (loc, ix, spec) = pod_service(state, pod)?;
    if !loc.is_edge() {
        return Err(ObjectiveError::NotOnEdge(pod));
    }
    let size = pod_size(spec, size_normalizer(state, c.size_basis))?;
    Ok(QosLedger::from_state(state).gain_to_cloud(ix, c) / size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table_cluster;
    use crate::model::{NodeSpec, ServiceSpec};

    const C: QosConstants =
        QosConstants { alpha: 100.0, beta: 1.0, gamma: 10_000.0, size_basis: SizeBasis::TotalEdge };

    fn one_service(q: f64, edge: u64, cloud: u64) -> ClusterState {
        let mut s = ClusterState::new(
            vec![NodeSpec::edge("E", ResourceVector::new(100_000, 100_000)), NodeSpec::cloud("C")],
            vec![ServiceSpec::new("S", ResourceVector::new(1000, 1000), q)],
        )
        .unwrap();
        for i in 0..edge {
            s.add_pod(PodId(i), "S".into(), Location::OnEdge("E".into())).unwrap();
        }
        for i in edge..edge + cloud {
            s.add_pod(PodId(i), "S".into(), Location::OnCloud).unwrap();
        }
        s
    }

    #[test]
    fn delta_examples() {
        let id: ServiceId = "S".into();
        assert_eq!(delta(&one_service(1.0, 2, 2), &id).unwrap(), -0.5);
        assert_eq!(delta(&one_service(1.0, 4, 0), &id).unwrap(), 0.0);
        assert!((delta(&one_service(0.1, 1, 3), &id).unwrap() - 0.15).abs() < 1e-15);
        // zero pods: satisfied by definition
        assert!((delta(&one_service(0.3, 0, 0), &id).unwrap() - 0.7).abs() < 1e-15);
        assert!(delta(&one_service(1.0, 0, 0), &"nope".into()).is_err());
    }

    #[test]
    fn f_transform_examples() {
        assert_eq!(f_transform(0.0, &C), 10_000.0);
        assert_eq!(f_transform(-0.5, &C), -50.0);
        assert_eq!(f_transform(0.25, &C), 10_000.25);
    }

    #[test]
    fn qos_total_examples() {
        let mut s = table_cluster();
        assert_eq!(qos_total(&s, &C), 4.0 * 10_000.0); // no pods: every service satisfied
        for (id, svc) in ["A", "B", "C", "D"].into_iter().enumerate() {
            s.add_pod(PodId(id as u64), svc.into(), Location::OnCloud).unwrap();
        }
        assert_eq!(qos_total(&s, &C), -400.0);
        let edge = s
            .apply_allocation_delta(&[
                (PodId(0), Location::OnEdge("N2".into())),
                (PodId(1), Location::OnEdge("N2".into())),
                (PodId(2), Location::OnEdge("N3".into())),
                (PodId(3), Location::OnEdge("N4".into())),
            ])
            .unwrap();
        assert_eq!(qos_total(&edge, &C), 40_000.0);

        let empty = ClusterState::new(vec![NodeSpec::cloud("C")], vec![]).unwrap();
        assert_eq!(qos_total(&empty, &C), 0.0);
    }

    #[test]
    fn constants_validation() {
        assert!(QosConstants::new(100.0, 1.0, 10_000.0).is_ok());
        assert!(QosConstants::new(100.0, 100.0, 10_000.0).is_err());
        assert!(QosConstants::new(100.0, 1.0, 9_999.0).is_err());
        assert!(QosConstants::new(100.0, -1.0, 10_000.0).is_err());
    }

    fn two_edge_cluster() -> ClusterState {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), Location::OnEdge("N2".into())).unwrap();
        s.add_pod(PodId(2), "A".into(), Location::OnCloud).unwrap();
        s
    }

    #[test]
    fn migration_count_examples() {
        let before = two_edge_cluster();
        let none = BTreeSet::new();
        assert_eq!(migration_count(&before, &before, &none).unwrap(), 0);

        let intra = before.apply_allocation_delta(&[(PodId(1), Location::OnEdge("N3".into()))]).unwrap();
        assert_eq!(migration_count(&before, &intra, &none).unwrap(), 1);

        let to_cloud = before.apply_allocation_delta(&[(PodId(1), Location::OnCloud)]).unwrap();
        assert_eq!(migration_count(&before, &to_cloud, &none).unwrap(), 1);

        let to_edge = before.apply_allocation_delta(&[(PodId(2), Location::OnEdge("N4".into()))]).unwrap();
        assert_eq!(migration_count(&before, &to_edge, &none).unwrap(), 1);
    }

    #[test]
    fn migration_count_skips_new_pods_and_checks_universe() {
        let before = two_edge_cluster();
        let mut after = before.clone();
        after.add_pod(PodId(9), "B".into(), Location::OnEdge("N4".into())).unwrap();
        let new: BTreeSet<_> = [PodId(9)].into_iter().collect();
        assert_eq!(migration_count(&before, &after, &new).unwrap(), 0);
        assert_eq!(
            migration_count(&before, &after, &BTreeSet::new()),
            Err(ObjectiveError::PodUniverseMismatch(PodId(9)))
        );
    }

    #[test]
    fn fragmentation_examples() {
        let one = |used: ResourceVector| {
            let mut s = ClusterState::new(
                vec![NodeSpec::edge("E", ResourceVector::new(4000, 4000)), NodeSpec::cloud("C")],
                vec![ServiceSpec::new("S", used, 1.0)],
            )
            .unwrap();
            if !used.is_zero() {
                s.add_pod(PodId(1), "S".into(), Location::OnEdge("E".into())).unwrap();
            }
            fragmentation(&s)
        };
        assert_eq!(one(ResourceVector::ZERO), 1.0);
        assert_eq!(one(ResourceVector::new(4000, 4000)), 0.0);
        assert_eq!(one(ResourceVector::new(2000, 2000)), 0.75);
    }

    #[test]
    fn pod_size_examples() {
        let s = table_cluster();
        let totals = s.total_edge_capacity();
        let a = pod_size(s.service(&"A".into()).unwrap(), totals).unwrap();
        let d = pod_size(s.service(&"D".into()).unwrap(), totals).unwrap();
        // independent evaluation: sqrt((1000/16000)*(950/14336)) etc.
        assert!((a - 0.06435581805061828).abs() < 1e-12);
        assert!((d - 0.12871163610123657).abs() < 1e-12);
        let whole = ServiceSpec::new("W", totals, 1.0);
        assert_eq!(pod_size(&whole, totals).unwrap(), 1.0);
        assert_eq!(pod_size(&whole, ResourceVector::new(0, 5)), Err(ObjectiveError::ZeroEdgeCapacity));
    }

    #[test]
    fn suggest_and_free_scores_mirror() {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), Location::OnCloud).unwrap();
        let size = 0.06435581805061828;
        let up = suggest_score(&s, PodId(1), &C).unwrap();
        assert!((up - 10_100.0 / size).abs() < 1e-6);
        let moved = s.apply_allocation_delta(&[(PodId(1), Location::OnEdge("N2".into()))]).unwrap();
        let down = free_score(&moved, PodId(1), &C).unwrap();
        assert!((down + 10_100.0 / size).abs() < 1e-6);
        assert_eq!(suggest_score(&moved, PodId(1), &C), Err(ObjectiveError::NotOnCloud(PodId(1))));
        assert_eq!(free_score(&s, PodId(1), &C), Err(ObjectiveError::NotOnEdge(PodId(1))));
    }

    #[test]
    fn over_satisfied_scores_use_beta_slope() {
        // Q=0.1, 2 of 4 on edge: moving one more pod changes Δ by 1/4 on the
        // β branch.
        let s = one_service(0.1, 2, 2);
        let size = raw_pod_size(ResourceVector::new(1000, 1000), ResourceVector::new(100_000, 100_000));
        let up = suggest_score(&s, PodId(2), &C).unwrap();
        assert!((up - 0.25 / size).abs() < 1e-9);
        let down = free_score(&s, PodId(0), &C).unwrap();
        assert!((down + 0.25 / size).abs() < 1e-9);
    }

    #[test]
    fn identical_pods_score_equally() {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), Location::OnCloud).unwrap();
        s.add_pod(PodId(2), "C".into(), Location::OnCloud).unwrap();
        assert_eq!(suggest_score(&s, PodId(1), &C), suggest_score(&s, PodId(2), &C));
    }
}
