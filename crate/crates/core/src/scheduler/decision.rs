use std::collections::BTreeMap;

use crate::model::{ClusterState, PodId, ResourceVector};
use crate::objective::{QosConstants, QosLedger};

use super::matching::group_by_service;
use super::offload::{after_offloads, offload_for, offload_moves, Offload};
use super::reorder::reorder_edge;
use super::{Decision, Migration, SchedulerConfig};

/// Relative tolerance for treating two QoS totals as equal.
const QOS_REL_TOL: f64 = 1e-9;

pub(crate) fn qos_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    let tol = QOS_REL_TOL * a.abs().max(b.abs()).max(1.0);
    if a > b + tol {
        std::cmp::Ordering::Greater
    } else if a < b - tol {
        std::cmp::Ordering::Less
    } else {
        std::cmp::Ordering::Equal
    }
}

struct Candidate {
    counts: Vec<usize>,
    qos: f64,
    migrations: Vec<Migration>,
    placed: usize,
}

impl Candidate {
    /// Higher QoS, then fewer migrations, then more pods on edge. Anything
    /// still tied keeps the earlier (lexicographically smaller) candidate.
    fn beats(&self, other: &Candidate) -> bool {
        use std::cmp::Ordering::*;
        match qos_cmp(self.qos, other.qos) {
            Greater => true,
            Less => false,
            Equal => match self.migrations.len().cmp(&other.migrations.len()) {
                Less => true,
                Greater => false,
                Equal => self.placed > other.placed,
            },
        }
    }
}

/// Chooses which of `new_pods` go to the edge.
///
/// Every sub-multiset of the batch (as per-service counts) is a candidate.
/// Candidates larger than the whole edge pool are dropped. With migration
/// enabled each candidate carries the offloads and reorderings `best_fit`
/// finds for it, and is dropped if offloading cannot make room; without
/// migration, candidates larger than the current free pool are dropped.
/// The winner maximizes the resulting QoS total.
pub fn make_decision(
    state: &ClusterState,
    new_pods: &[PodId],
    do_migrate: bool,
    cfg: &SchedulerConfig,
    c: &QosConstants,
) -> Decision {
    let groups = group_by_service(state, new_pods);
    debug_assert!(
        new_pods.iter().all(|p| !state.pod(*p).expect("pod").location.is_edge()),
        "new pods must not already be on edge"
    );
    let service_ix: Vec<usize> = groups
        .iter()
        .map(|g| {
            let svc = &state.pod(g.pods[0]).expect("pod").service;
            state.service_index(svc).expect("service")
        })
        .collect();
    let capacity = state.total_edge_capacity();
    let free = state.total_edge_free();
    let base = QosLedger::from_state(state);

    let mut offload_cache: BTreeMap<(u64, u64), Offload> = BTreeMap::new();
    let mut reorder_cache: BTreeMap<Vec<PodId>, Vec<Migration>> = BTreeMap::new();
    let mut best: Option<Candidate> = None;

    // Lexicographic over services in id order, last service fastest.
    let mut counts = vec![0usize; groups.len()];
    loop {
        let load: ResourceVector = groups
            .iter()
            .zip(&counts)
            .map(|(g, &n)| g.resources.scale(n as u64))
            .sum();
        let feasible_migrations = if !load.fits_within(&capacity) {
            None
        } else if do_migrate {
            let off = offload_cache
                .entry((load.cpu_millicores, load.memory_mib))
                .or_insert_with(|| offload_for(state, load, c));
            if off.satisfied {
                let reorders = reorder_cache
                    .entry(off.pods.clone())
                    .or_insert_with(|| reorder_edge(&after_offloads(state, &off.pods), cfg))
                    .clone();
                let mut moves = offload_moves(state, &off.pods);
                moves.extend(reorders);
                Some((off.pods.clone(), moves))
            } else {
                None
            }
        } else if load.fits_within(&free) {
            Some((Vec::new(), Vec::new()))
        } else {
            None
        };

        if let Some((offloaded, migrations)) = feasible_migrations {
            let mut ledger = base.clone();
            for p in &offloaded {
                let svc = &state.pod(*p).expect("pod").service;
                ledger.shift_edge(state.service_index(svc).expect("service"), -1);
            }
            for (g, &n) in counts.iter().enumerate() {
                ledger.shift_edge(service_ix[g], n as i64);
            }
            let cand = Candidate {
                counts: counts.clone(),
                qos: ledger.total(c),
                migrations,
                placed: counts.iter().sum(),
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }

        // odometer step
        let mut g = groups.len();
        loop {
            if g == 0 {
                return finish(&groups, best);
            }
            g -= 1;
            if counts[g] < groups[g].pods.len() {
                counts[g] += 1;
                break;
            }
            counts[g] = 0;
        }
    }
}

fn finish(groups: &[super::matching::PodGroup], best: Option<Candidate>) -> Decision {
    // The empty candidate is always feasible, so `best` is set.
    let best = best.expect("empty candidate is always feasible");
    let mut decision = Decision::default();
    for (g, &n) in groups.iter().zip(&best.counts) {
        decision.to_edge.extend_from_slice(&g.pods[..n]);
        decision.to_cloud.extend_from_slice(&g.pods[n..]);
    }
    decision.to_edge.sort();
    decision.to_cloud.sort();
    decision.migrations = best.migrations;
    decision
}
