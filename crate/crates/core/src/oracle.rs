//! Exhaustive solvers for small instances, used to check the heuristics.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterState, Location, NodeSpec, PodId, ResourceVector, ServiceSpec};
use crate::objective::{migration_count, qos_total, QosConstants};
use crate::scheduler::{immediate_schedule, match_pods, qos_cmp, Matching, SchedulerConfig};

pub const MAX_EDGE_NODES: usize = 3;
pub const MAX_ALLOCATE_PODS: usize = 8;
pub const MAX_MATCH_PODS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {edge} edge nodes, {pods} pods (limits {max_edge} and {max_pods})")]
    TooLarge { edge: usize, pods: usize, max_edge: usize, max_pods: usize },
    #[error("unknown pod {0}")]
    UnknownPod(PodId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactAllocation {
    pub allocation: BTreeMap<PodId, Location>,
    pub qos: f64,
    pub migrations: u64,
}

/// Calls `f` with every assignment of `n` items to `k` choices, first
/// index varying slowest.
fn for_each_assignment(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; n];
    loop {
        f(&a);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            a[i] += 1;
            if a[i] < k {
                break;
            }
            a[i] = 0;
        }
    }
}

/// Best allocation of every pod (existing and new): highest QoS, then
/// fewest migrations relative to the current allocation. Choice 0 is the
/// cloud; choice `i` is edge node `i - 1`.
pub fn exact_allocate(
    state: &ClusterState,
    new_pods: &[PodId],
    c: &QosConstants,
) -> Result<ExactAllocation, OracleError> {
    let edge = state.edge_nodes().len();
    let pods: Vec<PodId> = state.pods().map(|p| p.id).collect();
    if edge > MAX_EDGE_NODES || pods.len() > MAX_ALLOCATE_PODS {
        return Err(OracleError::TooLarge {
            edge,
            pods: pods.len(),
            max_edge: MAX_EDGE_NODES,
            max_pods: MAX_ALLOCATE_PODS,
        });
    }
    for p in new_pods {
        if state.pod(*p).is_none() {
            return Err(OracleError::UnknownPod(*p));
        }
    }
    let exclude: BTreeSet<PodId> = new_pods.iter().copied().collect();
    let res: Vec<ResourceVector> = pods.iter().map(|p| state.pod_resources(*p).expect("pod")).collect();
    let caps: Vec<ResourceVector> = state.edge_nodes().iter().map(|n| n.capacity).collect();
    let mut best: Option<ExactAllocation> = None;
    let mut used = vec![ResourceVector::ZERO; edge];

    for_each_assignment(pods.len(), edge + 1, |a| {
        used.iter_mut().for_each(|u| *u = ResourceVector::ZERO);
        for (i, &choice) in a.iter().enumerate() {
            if choice > 0 {
                used[choice - 1] += res[i];
            }
        }
        if used.iter().zip(&caps).any(|(u, c)| !u.fits_within(c)) {
            return;
        }
        let moves: Vec<(PodId, Location)> = pods
            .iter()
            .zip(a)
            .map(|(p, &choice)| {
                let loc = if choice == 0 {
                    Location::OnCloud
                } else {
                    Location::OnEdge(state.edge_nodes()[choice - 1].id.clone())
                };
                (*p, loc)
            })
            .collect();
        let after = state.apply_allocation_delta(&moves).expect("checked capacity");
        let qos = qos_total(&after, c);
        let migrations = migration_count(state, &after, &exclude).expect("same pods");
        let better = match &best {
            None => true,
            Some(b) => match qos_cmp(qos, b.qos) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => migrations < b.migrations,
            },
        };
        if better {
            best = Some(ExactAllocation { allocation: moves.into_iter().collect(), qos, migrations });
        }
    });
    Ok(best.expect("all-cloud is always feasible"))
}

/// Fragmentation written out directly from node usage, independent of the
/// objective module.
fn fragmentation_of(used: &[ResourceVector], caps: &[ResourceVector]) -> f64 {
    used.iter()
        .zip(caps)
        .map(|(u, c)| {
            let cpu = u.cpu_millicores as f64 / c.cpu_millicores as f64;
            let mem = u.memory_mib as f64 / c.memory_mib as f64;
            1.0 - cpu * mem
        })
        .sum()
}

/// Tries every placement of `new_pods`: most pods on edge first, then the
/// lowest fragmentation.
pub fn brute_force_match(state: &ClusterState, new_pods: &[PodId]) -> Result<Matching, OracleError> {
    let edge = state.edge_nodes().len();
    if edge > MAX_EDGE_NODES || new_pods.len() > MAX_MATCH_PODS {
        return Err(OracleError::TooLarge {
            edge,
            pods: new_pods.len(),
            max_edge: MAX_EDGE_NODES,
            max_pods: MAX_MATCH_PODS,
        });
    }
    let mut pods = new_pods.to_vec();
    pods.sort();
    pods.dedup();
    let caps: Vec<ResourceVector> = state.edge_nodes().iter().map(|n| n.capacity).collect();
    let mut base: Vec<ResourceVector> = (0..edge).map(|i| state.used_at(i)).collect();
    let mut res = Vec::new();
    for p in &pods {
        let rec = state.pod(*p).ok_or(OracleError::UnknownPod(*p))?;
        let r = state.pod_resources(*p).expect("pod");
        if let Some(n) = rec.location.edge_node() {
            base[state.edge_index(n).expect("edge")] -= r;
        }
        res.push(r);
    }

    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    let mut used = base.clone();
    for_each_assignment(pods.len(), edge + 1, |a| {
        used.copy_from_slice(&base);
        let mut placed = 0;
        for (i, &choice) in a.iter().enumerate() {
            if choice > 0 {
                used[choice - 1] += res[i];
                placed += 1;
            }
        }
        if used.iter().zip(&caps).any(|(u, c)| !u.fits_within(c)) {
            return;
        }
        let frag = fragmentation_of(&used, &caps);
        let better = match &best {
            None => true,
            Some((bp, bf, _)) => placed > *bp || (placed == *bp && frag < bf - 1e-12),
        };
        if better {
            best = Some((placed, frag, a.to_vec()));
        }
    });
    let (_, frag, a) = best.expect("all-cloud is always feasible");
    let targets = pods
        .iter()
        .zip(a)
        .map(|(p, choice)| {
            let loc = if choice == 0 {
                Location::OnCloud
            } else {
                Location::OnEdge(state.edge_nodes()[choice - 1].id.clone())
            };
            (*p, loc)
        })
        .collect();
    Ok(Matching { targets, achieved_fragmentation: frag })
}

/// Random small cluster with a few pods already running and a batch of
/// pending ones, in the magnitude range of the default fixture.
pub fn random_instance(rng: &mut impl Rng, max_existing: usize, max_new: usize) -> (ClusterState, Vec<PodId>) {
    let edge = rng.gen_range(1..=MAX_EDGE_NODES);
    let mut nodes: Vec<NodeSpec> = (0..edge)
        .map(|i| {
            NodeSpec::edge(
                format!("E{i}"),
                ResourceVector::new(rng.gen_range(4..=14) * 500, rng.gen_range(8..=24) * 256),
            )
        })
        .collect();
    nodes.push(NodeSpec::cloud("C"));
    let services: Vec<ServiceSpec> = (0..rng.gen_range(1..=4))
        .map(|i| {
            let scale = rng.gen_range(1..=4) as u64;
            let mem_scale = rng.gen_range(1..=4) as u64;
            let q = [1.0, 0.5, 0.1][rng.gen_range(0..3)];
            ServiceSpec::new(format!("S{i}"), ResourceVector::new(500 * scale, 475 * mem_scale), q)
        })
        .collect();
    let mut state = ClusterState::new(nodes, services).expect("valid instance");
    let n_services = state.services().len();
    let mut id = 0u64;
    for _ in 0..rng.gen_range(0..=max_existing) {
        let svc = state.services()[rng.gen_range(0..n_services)].id.clone();
        let choice = rng.gen_range(0..=edge);
        let loc = if choice == edge {
            Location::OnCloud
        } else {
            Location::OnEdge(state.edge_nodes()[choice].id.clone())
        };
        if state.add_pod(PodId(id), svc.clone(), loc).is_err() {
            state.add_pod(PodId(id), svc, Location::OnCloud).expect("cloud always fits");
        }
        id += 1;
    }
    let mut new = Vec::new();
    for _ in 0..rng.gen_range(0..=max_new) {
        let svc = state.services()[rng.gen_range(0..n_services)].id.clone();
        state.add_pod(PodId(id), svc, Location::Pending).expect("pending always fits");
        new.push(PodId(id));
        id += 1;
    }
    (state, new)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cases: usize,
    pub match_count_mismatches: usize,
    pub match_fragmentation_mismatches: usize,
    pub max_fragmentation_diff: f64,
    pub allocation_cases: usize,
    /// Heuristic decisions whose QoS beat the exhaustive optimum.
    pub optimality_violations: usize,
    pub mean_optimality_gap: f64,
    pub elapsed_ms: u128,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.match_count_mismatches == 0 && self.match_fragmentation_mismatches == 0 && self.optimality_violations == 0
    }
}

/// QoS of the state `immediate_schedule` leads to: its edge share placed
/// by matching, everything else on the cloud.
pub fn heuristic_qos(state: &ClusterState, new_pods: &[PodId], c: &QosConstants) -> f64 {
    let d = immediate_schedule(state, new_pods, &SchedulerConfig::default(), c);
    let mut moves: Vec<(PodId, Location)> = match_pods(state, &d.to_edge).targets.into_iter().collect();
    moves.extend(d.to_cloud.iter().map(|p| (*p, Location::OnCloud)));
    qos_total(&state.apply_allocation_delta(&moves).expect("matched placement fits"), c)
}

/// Cross-checks the DP match against brute force on `cases` random
/// instances, and the batch decision against the exact optimum where the
/// instance is small enough.
pub fn self_check(cases: usize, seed: u64) -> OracleReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = QosConstants::default();
    let mut report = OracleReport::default();
    let mut gaps = Vec::new();
    for _ in 0..cases {
        let (state, new) = random_instance(&mut rng, 3, MAX_MATCH_PODS);
        let dp = match_pods(&state, &new);
        let bf = brute_force_match(&state, &new).expect("in bounds");
        report.cases += 1;
        if dp.placed() != bf.placed() {
            report.match_count_mismatches += 1;
        }
        let diff = (dp.achieved_fragmentation - bf.achieved_fragmentation).abs();
        report.max_fragmentation_diff = report.max_fragmentation_diff.max(diff);
        if diff > 1e-9 {
            report.match_fragmentation_mismatches += 1;
        }
        if state.pod_count() <= MAX_ALLOCATE_PODS {
            let exact = exact_allocate(&state, &new, &c).expect("in bounds");
            let heuristic = heuristic_qos(&state, &new, &c);
            report.allocation_cases += 1;
            if qos_cmp(heuristic, exact.qos) == std::cmp::Ordering::Greater {
                report.optimality_violations += 1;
            }
            gaps.push(exact.qos - heuristic);
        }
    }
    report.mean_optimality_gap = crate::metrics::mean(&gaps);
    report.elapsed_ms = start.elapsed().as_millis();
    report
}

/// Wall-clock budget the full self check is expected to fit in.
pub const SELF_CHECK_BUDGET: Duration = Duration::from_secs(60);
