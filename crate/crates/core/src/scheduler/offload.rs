use crate::model::{ClusterState, Location, PodId, ResourceVector};
use crate::objective::{raw_pod_size, size_normalizer, QosConstants, QosLedger};

use super::reorder::reorder_edge;
use super::{Migration, SchedulerConfig};

pub(crate) struct Offload {
    pub pods: Vec<PodId>,
    /// Whether the freed pool covers the need.
    pub satisfied: bool,
}

pub(crate) fn offload_for(state: &ClusterState, need: ResourceVector, c: &QosConstants) -> Offload {
    let mut free = state.total_edge_free();
    if need.fits_within(&free) {
        return Offload { pods: Vec::new(), satisfied: true };
    }
    let norm = size_normalizer(state, c.size_basis);
    let mut ledger = QosLedger::from_state(state);
    let mut candidates: Vec<(PodId, usize, ResourceVector, f64)> = state
        .pods()
        .filter(|p| p.location.is_edge())
        .map(|p| {
            let ix = state.service_index(&p.service).expect("service");
            let res = state.services()[ix].pod_resources;
            (p.id, ix, res, raw_pod_size(res, norm))
        })
        .collect();

    let mut freed = Vec::new();
    while !candidates.is_empty() && !need.fits_within(&free) {
        // Scores shift with every eviction, so rescore each round.
        let mut pick = 0;
        let mut pick_score = f64::NEG_INFINITY;
        for (i, (_, ix, _, size)) in candidates.iter().enumerate() {
            let score = ledger.gain_to_cloud(*ix, c) / size;
            if score > pick_score {
                pick = i;
                pick_score = score;
            }
        }
        let (pod, ix, res, _) = candidates.remove(pick);
        freed.push(pod);
        free += res;
        ledger.shift_edge(ix, -1);
    }
    let satisfied = need.fits_within(&free);
    Offload { pods: freed, satisfied }
}

/// Evicts edge pods to the cloud, least QoS loss per unit of size first,
/// until the total edge free pool covers `need` (component-wise). Returns
/// every edge pod when even that is not enough.
pub fn free_edge_as_needed(state: &ClusterState, need: ResourceVector, c: &QosConstants) -> Vec<PodId> {
    offload_for(state, need, c).pods
}

pub(crate) fn offload_moves(state: &ClusterState, pods: &[PodId]) -> Vec<Migration> {
    pods.iter()
        .map(|p| Migration {
            pod: *p,
            from: state.pod(*p).expect("pod").location.clone(),
            to: Location::OnCloud,
        })
        .collect()
}

pub(crate) fn after_offloads(state: &ClusterState, pods: &[PodId]) -> ClusterState {
    let mut next = state.clone();
    for p in pods {
        next.relocate(*p, Location::OnCloud).expect("offloaded pod exists");
    }
    next
}

/// Offloads enough edge pods to make room for `to_edge_pods`, then reorders
/// the remaining edge pods to cut fragmentation.
pub fn best_fit(
    state: &ClusterState,
    to_edge_pods: &[PodId],
    cfg: &SchedulerConfig,
    c: &QosConstants,
) -> Vec<Migration> {
    let need: ResourceVector = to_edge_pods
        .iter()
        .map(|p| state.pod_resources(*p).expect("pod"))
        .sum();
    let offload = offload_for(state, need, c);
    let mut moves = offload_moves(state, &offload.pods);
    moves.extend(reorder_edge(&after_offloads(state, &offload.pods), cfg));
    moves
}
