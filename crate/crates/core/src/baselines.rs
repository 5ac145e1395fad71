//! Comparison schedulers. None of them batch or migrate: pods are placed
//! one at a time in id order.

use serde::{Deserialize, Serialize};

use crate::model::{ClusterState, Location, PodId, ResourceVector};
use crate::scheduler::{Decision, PlacementPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselinePolicy {
    BiggestEdgeFirst,
    SmallestEdgeFirst,
    CloudFirst,
    /// Edge-affine least-allocated spreading, standing in for the stock
    /// Kubernetes scheduler.
    SpreadDefault,
}

impl BaselinePolicy {
    pub fn label(&self) -> &'static str {
        match self {
            BaselinePolicy::BiggestEdgeFirst => "bef",
            BaselinePolicy::SmallestEdgeFirst => "sef",
            BaselinePolicy::CloudFirst => "cf",
            BaselinePolicy::SpreadDefault => "k8s",
        }
    }
}

/// Edge node indices ordered by (cpu, memory, id) ascending.
fn by_size(state: &ClusterState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..state.edge_nodes().len()).collect();
    order.sort_by(|&a, &b| {
        let (na, nb) = (&state.edge_nodes()[a], &state.edge_nodes()[b]);
        (na.capacity.cpu_millicores, na.capacity.memory_mib, &na.id)
            .cmp(&(nb.capacity.cpu_millicores, nb.capacity.memory_mib, &nb.id))
    });
    order
}

fn balanced_free_ratio(free: ResourceVector, cap: ResourceVector) -> f64 {
    let cpu = free.cpu_millicores as f64 / cap.cpu_millicores as f64;
    let mem = free.memory_mib as f64 / cap.memory_mib as f64;
    cpu.min(mem)
}

pub fn baseline_schedule(state: &ClusterState, new_pods: &[PodId], policy: BaselinePolicy) -> Decision {
    let mut pods = new_pods.to_vec();
    pods.sort();
    pods.dedup();

    let caps: Vec<ResourceVector> = state.edge_nodes().iter().map(|n| n.capacity).collect();
    let mut free: Vec<ResourceVector> = (0..caps.len()).map(|i| state.free_at(i)).collect();
    let ascending = by_size(state);
    let order: Vec<usize> = match policy {
        BaselinePolicy::BiggestEdgeFirst => ascending.iter().rev().copied().collect(),
        _ => ascending,
    };

    let mut decision = Decision::default();
    for pod in pods {
        let res = state.pod_resources(pod).unwrap_or_else(|_| panic!("unknown pod {pod}"));
        let target = match policy {
            BaselinePolicy::CloudFirst => None,
            BaselinePolicy::BiggestEdgeFirst | BaselinePolicy::SmallestEdgeFirst => {
                order.iter().copied().find(|&i| res.fits_within(&free[i]))
            }
            BaselinePolicy::SpreadDefault => {
                let mut best: Option<(usize, f64)> = None;
                for &i in &order {
                    if let Some(after) = free[i].checked_sub(res) {
                        let score = balanced_free_ratio(after, caps[i]);
                        if best.is_none_or(|(_, s)| score > s) {
                            best = Some((i, score));
                        }
                    }
                }
                best.map(|(i, _)| i)
            }
        };
        match target {
            Some(i) => {
                free[i] -= res;
                decision.to_edge.push(pod);
                decision.pinned.insert(pod, state.edge_nodes()[i].id.clone());
            }
            None => decision.to_cloud.push(pod),
        }
    }
    decision
}

/// Location each pod of a baseline decision lands on.
pub fn decision_targets(decision: &Decision) -> Vec<(PodId, Location)> {
    let mut out: Vec<(PodId, Location)> = decision
        .pinned
        .iter()
        .map(|(p, n)| (*p, Location::OnEdge(n.clone())))
        .chain(decision.to_cloud.iter().map(|p| (*p, Location::OnCloud)))
        .collect();
    out.sort();
    out
}

#[derive(Clone, Copy, Debug)]
pub struct Baseline(pub BaselinePolicy);

impl PlacementPolicy for Baseline {
    fn name(&self) -> String {
        self.0.label().into()
    }

    fn schedule(&self, state: &ClusterState, new_pods: &[PodId]) -> Decision {
        baseline_schedule(state, new_pods, self.0)
    }
}
