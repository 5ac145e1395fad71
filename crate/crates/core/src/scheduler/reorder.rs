use std::collections::BTreeMap;

use crate::model::{ClusterState, Location, NodeId, PodId};

use super::matching::{assign_targets, solve_counts, EdgeSlots, PodGroup};
use super::{Migration, SchedulerConfig};

/// Minimum fragmentation improvement worth migrating for.
const FRAG_EPS: f64 = 1e-9;

/// Searches subsets of edge pods (up to the reorder limit) whose relocation
/// lowers edge fragmentation, and returns the migrations of the best one.
///
/// Pods sharing a node and a service are interchangeable, so subsets are
/// enumerated as counts per (node, service) group, smallest subsets first.
/// A later subset must be strictly better to win, which keeps the move
/// count low among equally good options.
pub fn reorder_edge(state: &ClusterState, cfg: &SchedulerConfig) -> Vec<Migration> {
    let limit = cfg.reorder_limit() as usize;
    if limit == 0 {
        return Vec::new();
    }
    let slots = EdgeSlots::from_state(state);

    let mut grouped: BTreeMap<(usize, usize), Vec<PodId>> = BTreeMap::new();
    for p in state.pods() {
        if let Location::OnEdge(node) = &p.location {
            let n = state.edge_index(node).expect("edge node");
            let s = state.service_index(&p.service).expect("service");
            grouped.entry((n, s)).or_default().push(p.id);
        }
    }
    let groups: Vec<((usize, usize), Vec<PodId>)> = grouped.into_iter().collect();
    if groups.is_empty() {
        return Vec::new();
    }

    let mut least = slots.fragmentation();
    let mut best: Option<Vec<usize>> = None;
    let mut counts = vec![0usize; groups.len()];
    for size in 1..=limit {
        visit(0, size, &mut counts, &groups, &mut |counts| {
            let (trial, pod_groups) = lift(state, &slots, &groups, counts);
            let result = solve_counts(&trial, &pod_groups);
            if result.placed == size && result.fragmentation < least - FRAG_EPS {
                least = result.fragmentation;
                best = Some(counts.to_vec());
            }
        });
    }

    match best {
        Some(counts) => {
            let (trial, pod_groups) = lift(state, &slots, &groups, &counts);
            let result = solve_counts(&trial, &pod_groups);
            let targets = assign_targets(state, &pod_groups, &result.per_node);
            canonical_moves(state, &targets)
        }
        None => Vec::new(),
    }
}

fn visit(
    g: usize,
    remaining: usize,
    counts: &mut [usize],
    groups: &[((usize, usize), Vec<PodId>)],
    f: &mut dyn FnMut(&[usize]),
) {
    if remaining == 0 {
        f(counts);
        return;
    }
    if g == groups.len() {
        return;
    }
    let most = remaining.min(groups[g].1.len());
    for c in 0..=most {
        counts[g] = c;
        visit(g + 1, remaining - c, counts, groups, f);
    }
    counts[g] = 0;
}

/// Removes the selected pods from their nodes and regroups them by service.
fn lift(
    state: &ClusterState,
    slots: &EdgeSlots,
    groups: &[((usize, usize), Vec<PodId>)],
    counts: &[usize],
) -> (EdgeSlots, Vec<PodGroup>) {
    let mut trial = slots.clone();
    let mut by_service: BTreeMap<usize, Vec<PodId>> = BTreeMap::new();
    for (((node, svc), pods), &n) in groups.iter().zip(counts) {
        if n == 0 {
            continue;
        }
        let res = state.services()[*svc].pod_resources;
        trial.used[*node] -= res.scale(n as u64);
        by_service.entry(*svc).or_default().extend_from_slice(&pods[..n]);
    }
    let pod_groups = by_service
        .into_iter()
        .map(|(svc, mut pods)| {
            pods.sort();
            PodGroup { resources: state.services()[svc].pod_resources, pods }
        })
        .collect();
    (trial, pod_groups)
}

/// Converts a target assignment into the fewest moves producing the same
/// per-node pod counts: a pod whose node keeps a pod of its service stays.
fn canonical_moves(state: &ClusterState, targets: &BTreeMap<PodId, Location>) -> Vec<Migration> {
    let mut per_service: BTreeMap<usize, Vec<(PodId, NodeId, NodeId)>> = BTreeMap::new();
    for (pod, to) in targets {
        let rec = state.pod(*pod).expect("pod");
        let from = rec.location.edge_node().expect("reordered pod is on edge").clone();
        let to = to.edge_node().expect("reordered pod stays on edge").clone();
        let s = state.service_index(&rec.service).expect("service");
        per_service.entry(s).or_default().push((*pod, from, to));
    }

    let mut moves = Vec::new();
    for (_, entries) in per_service {
        let mut src: BTreeMap<NodeId, Vec<PodId>> = BTreeMap::new();
        let mut dst: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (pod, from, to) in &entries {
            src.entry(from.clone()).or_default().push(*pod);
            *dst.entry(to.clone()).or_default() += 1;
        }
        let mut movers: Vec<(PodId, NodeId)> = Vec::new();
        for (node, pods) in &mut src {
            pods.sort();
            let keep = dst.get(node).copied().unwrap_or(0).min(pods.len());
            if let Some(d) = dst.get_mut(node) {
                *d -= keep;
            }
            movers.extend(pods[keep..].iter().map(|p| (*p, node.clone())));
        }
        movers.sort();
        let slots = dst.into_iter().flat_map(|(node, n)| std::iter::repeat_n(node, n));
        for ((pod, from), to) in movers.into_iter().zip(slots) {
            moves.push(Migration { pod, from: Location::OnEdge(from), to: Location::OnEdge(to) });
        }
    }
    moves.sort_by_key(|m| m.pod);
    moves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeSpec, ResourceVector, ServiceSpec};
    use crate::objective::fragmentation;

    fn cfg(m_er: u32) -> SchedulerConfig {
        SchedulerConfig { m_er, ..SchedulerConfig::default() }
    }

    fn two_half_full() -> ClusterState {
        // Two 4000m/4000Mi nodes, pods of 1000m/1000Mi: 2 on E1, 1 on E2.
        let mut s = ClusterState::new(
            vec![
                NodeSpec::edge("E1", ResourceVector::new(4000, 4000)),
                NodeSpec::edge("E2", ResourceVector::new(4000, 4000)),
                NodeSpec::cloud("C"),
            ],
            vec![ServiceSpec::new("S", ResourceVector::new(1000, 1000), 1.0)],
        )
        .unwrap();
        s.add_pod(PodId(1), "S".into(), Location::OnEdge("E1".into())).unwrap();
        s.add_pod(PodId(2), "S".into(), Location::OnEdge("E1".into())).unwrap();
        s.add_pod(PodId(3), "S".into(), Location::OnEdge("E2".into())).unwrap();
        s
    }

    #[test]
    fn zero_limit_is_noop() {
        assert!(reorder_edge(&two_half_full(), &cfg(0)).is_empty());
    }

    #[test]
    fn consolidates_onto_one_node() {
        let s = two_half_full();
        let moves = reorder_edge(&s, &cfg(3));
        assert_eq!(
            moves,
            vec![Migration {
                pod: PodId(3),
                from: Location::OnEdge("E2".into()),
                to: Location::OnEdge("E1".into())
            }]
        );
        let after = s.apply_allocation_delta(&[(PodId(3), Location::OnEdge("E1".into()))]).unwrap();
        // 0.75/4... E1 3/4 used: 1 - 9/16; E2 empty: 1
        assert!((fragmentation(&after) - (1.0 - 0.5625 + 1.0)).abs() < 1e-12);
        assert!(fragmentation(&after) < fragmentation(&s));
    }

    #[test]
    fn strict_limit_shrinks_subsets() {
        let s = two_half_full();
        let strict = SchedulerConfig { m_er: 1, reorder_strict: true, ..SchedulerConfig::default() };
        assert!(reorder_edge(&s, &strict).is_empty());
        assert_eq!(reorder_edge(&s, &cfg(1)).len(), 1);
    }

    #[test]
    fn packed_state_is_left_alone() {
        let mut s = two_half_full();
        s.remove_pod(PodId(3)).unwrap();
        assert!(reorder_edge(&s, &cfg(3)).is_empty());
    }
}
