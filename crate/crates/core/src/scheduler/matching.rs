//! Fragmentation-minimizing placement of a pod batch onto edge nodes.
//!
//! Pods of one service are interchangeable, so the DP runs over per-service
//! count vectors rather than labeled pod subsets. A count vector is encoded
//! in mixed radix (digit `s` ranges over `0..=count_s`), which makes the
//! encoding linear: `index(k - j) == index(k) - index(j)` whenever `j <= k`.

use std::collections::BTreeMap;

use crate::model::{ClusterState, Location, PodId, ResourceVector};
use crate::objective::node_fragmentation;

use super::Matching;

/// Interchangeable pods sharing one resource shape.
#[derive(Clone, Debug)]
pub(crate) struct PodGroup {
    pub resources: ResourceVector,
    /// Sorted ascending; slots are filled in this order.
    pub pods: Vec<PodId>,
}

/// Capacity and current usage of each edge node, in edge-node order.
#[derive(Clone, Debug)]
pub(crate) struct EdgeSlots {
    pub capacity: Vec<ResourceVector>,
    pub used: Vec<ResourceVector>,
}

impl EdgeSlots {
    pub(crate) fn from_state(state: &ClusterState) -> Self {
        let n = state.edge_nodes().len();
        Self {
            capacity: state.edge_nodes().iter().map(|e| e.capacity).collect(),
            used: (0..n).map(|i| state.used_at(i)).collect(),
        }
    }

    pub(crate) fn fragmentation(&self) -> f64 {
        self.used
            .iter()
            .zip(&self.capacity)
            .map(|(u, c)| node_fragmentation(*u, *c))
            .sum()
    }
}

/// Mixed-radix layout of count vectors; digit 0 is least significant.
pub(crate) struct Radix {
    pub bounds: Vec<usize>,
    pub strides: Vec<usize>,
    pub size: usize,
}

impl Radix {
    pub(crate) fn new(bounds: Vec<usize>) -> Self {
        let mut strides = Vec::with_capacity(bounds.len());
        let mut size = 1usize;
        for b in &bounds {
            strides.push(size);
            size *= b + 1;
        }
        Self { bounds, strides, size }
    }

    pub(crate) fn digits(&self, mut idx: usize, out: &mut [usize]) {
        for (s, b) in self.bounds.iter().enumerate() {
            out[s] = idx % (b + 1);
            idx /= b + 1;
        }
    }

    /// Calls `f(index)` for every vector `j` with `j <= upper` digit-wise.
    pub(crate) fn for_each_below(&self, upper: &[usize], scratch: &mut [usize], mut f: impl FnMut(usize)) {
        let n = upper.len();
        scratch.iter_mut().for_each(|d| *d = 0);
        let mut idx = 0usize;
        loop {
            f(idx);
            let mut s = 0;
            loop {
                if s == n {
                    return;
                }
                if scratch[s] < upper[s] {
                    scratch[s] += 1;
                    idx += self.strides[s];
                    break;
                }
                idx -= scratch[s] * self.strides[s];
                scratch[s] = 0;
                s += 1;
            }
        }
    }
}

/// Result of the count DP: per edge node, how many pods of each group go
/// there, plus the fragmentation that placement achieves.
pub(crate) struct CountMatch {
    pub per_node: Vec<Vec<usize>>,
    pub placed: usize,
    pub fragmentation: f64,
}

pub(crate) fn solve_counts(slots: &EdgeSlots, groups: &[PodGroup]) -> CountMatch {
    let radix = Radix::new(groups.iter().map(|g| g.pods.len()).collect());
    let dims = groups.len();
    let size = radix.size;

    let mut load = vec![ResourceVector::ZERO; size];
    let mut count = vec![0usize; size];
    let mut digits = vec![0usize; dims];
    for idx in 1..size {
        radix.digits(idx, &mut digits);
        let s = digits.iter().position(|&d| d > 0).expect("idx > 0 has a nonzero digit");
        let prev = idx - radix.strides[s];
        load[idx] = load[prev] + groups[s].resources;
        count[idx] = count[prev] + 1;
    }

    let base = slots.fragmentation();
    let mut prev = vec![f64::INFINITY; size];
    prev[0] = base;
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(slots.capacity.len());
    let mut upper = vec![0usize; dims];
    let mut scratch = vec![0usize; dims];

    for (cap, used) in slots.capacity.iter().zip(&slots.used) {
        let before = node_fragmentation(*used, *cap);
        let change: Vec<f64> = load
            .iter()
            .map(|l| match used.checked_add(*l) {
                Some(total) if total.fits_within(cap) => node_fragmentation(total, *cap) - before,
                _ => f64::NAN,
            })
            .collect();
        let mut cur = vec![f64::INFINITY; size];
        let mut par = vec![0u32; size];
        for k in 0..size {
            radix.digits(k, &mut upper);
            let mut best = f64::INFINITY;
            let mut best_j = 0u32;
            radix.for_each_below(&upper, &mut scratch, |j| {
                let delta = change[j];
                if delta.is_nan() {
                    return;
                }
                let cand = prev[k - j] + delta;
                if cand < best {
                    best = cand;
                    best_j = j as u32;
                }
            });
            cur[k] = best;
            par[k] = best_j;
        }
        parents.push(par);
        prev = cur;
    }

    // Most pods placed first, then least fragmentation; first index wins ties.
    let mut chosen = 0usize;
    for k in 1..size {
        if !prev[k].is_finite() {
            continue;
        }
        let better = count[k] > count[chosen]
            || (count[k] == count[chosen] && prev[k] < prev[chosen] - 1e-12);
        if better {
            chosen = k;
        }
    }

    let mut per_node = vec![vec![0usize; dims]; slots.capacity.len()];
    let mut k = chosen;
    for node in (0..slots.capacity.len()).rev() {
        let j = parents[node][k] as usize;
        radix.digits(j, &mut per_node[node]);
        k -= j;
    }
    debug_assert_eq!(k, 0);
    CountMatch { per_node, placed: count[chosen], fragmentation: prev[chosen] }
}

/// Groups pods by service. Groups come out in service-id order with pod
/// ids sorted inside each group.
pub(crate) fn group_by_service(state: &ClusterState, pods: &[PodId]) -> Vec<PodGroup> {
    let mut by_service: BTreeMap<usize, Vec<PodId>> = BTreeMap::new();
    for &p in pods {
        let rec = state.pod(p).unwrap_or_else(|| panic!("unknown pod {p}"));
        let ix = state.service_index(&rec.service).expect("pod service exists");
        by_service.entry(ix).or_default().push(p);
    }
    by_service
        .into_iter()
        .map(|(ix, mut pods)| {
            pods.sort();
            pods.dedup();
            PodGroup { resources: state.services()[ix].pod_resources, pods }
        })
        .collect()
}

/// Turns per-node counts back into concrete pod targets, handing out pods
/// in sorted id order, node by node. Leftovers go to the cloud.
pub(crate) fn assign_targets(
    state: &ClusterState,
    groups: &[PodGroup],
    per_node: &[Vec<usize>],
) -> BTreeMap<PodId, Location> {
    let mut targets = BTreeMap::new();
    let mut cursor = vec![0usize; groups.len()];
    for (node, counts) in per_node.iter().enumerate() {
        let id = &state.edge_nodes()[node].id;
        for (g, &n) in counts.iter().enumerate() {
            for p in &groups[g].pods[cursor[g]..cursor[g] + n] {
                targets.insert(*p, Location::OnEdge(id.clone()));
            }
            cursor[g] += n;
        }
    }
    for (g, group) in groups.iter().enumerate() {
        for p in &group.pods[cursor[g]..] {
            targets.insert(*p, Location::OnCloud);
        }
    }
    targets
}

/// Places `new_pods` on edge nodes, maximizing how many fit and then
/// minimizing the resulting fragmentation. Pods already on an edge node
/// are treated as lifted off it first. Unplaced pods map to the cloud.
pub fn match_pods(state: &ClusterState, new_pods: &[PodId]) -> Matching {
    let mut slots = EdgeSlots::from_state(state);
    for &p in new_pods {
        let rec = state.pod(p).unwrap_or_else(|| panic!("unknown pod {p}"));
        if let Some(node) = rec.location.edge_node() {
            let i = state.edge_index(node).expect("edge node exists");
            slots.used[i] -= state.pod_resources(p).expect("pod resources");
        }
    }
    let groups = group_by_service(state, new_pods);
    let result = solve_counts(&slots, &groups);
    Matching {
        targets: assign_targets(state, &groups, &result.per_node),
        achieved_fragmentation: result.fragmentation,
    }
}
