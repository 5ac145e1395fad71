//! Discrete-event emulation of the cluster control loop: an autoscaler
//! chasing per-cycle replica targets, pod lifecycle latencies, the active
//! scheduler, the periodic suggester and the placement manager.
//!
//! Time is kept in integer milliseconds. Events at the same instant run in
//! insertion order. Pods created during an instant are scheduled together
//! once that instant has no more events.

mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::model::{ClusterState, Location, ModelError, PodId, ServiceId};
use crate::objective::delta;
use crate::plans::{plans_from_decision, scheduler_view, ApiAction, ClusterEvent, Directive, PlacementManager, PlanId};
use crate::scheduler::{match_pods, MigrationKind, PlacementPolicy};
use crate::workload::{generate_cycles, Cycle, Scenario};

pub use trace::{SafetyReport, SimulationTrace, TraceRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifecycleLatencies {
    pub pod_start_sec: f64,
    pub pod_delete_sec: f64,
    pub bind_ack_sec: f64,
}

impl Default for LifecycleLatencies {
    fn default() -> Self {
        Self { pod_start_sec: 2.0, pod_delete_sec: 1.0, bind_ack_sec: 0.2 }
    }
}

impl LifecycleLatencies {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("pod_start_sec", self.pod_start_sec),
            ("pod_delete_sec", self.pod_delete_sec),
            ("bind_ack_sec", self.bind_ack_sec),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("latencies.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    /// Period of the autoscaler's own reconcile loop.
    pub hpa_sync_sec: f64,
    /// A plan step unconfirmed this long fails its plan.
    pub step_timeout_sec: f64,
    /// A pod pending this long aborts the run.
    pub stuck_timeout_sec: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { hpa_sync_sec: 15.0, step_timeout_sec: 30.0, stuck_timeout_sec: 120.0 }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("hpa_sync_sec", self.hpa_sync_sec),
            ("step_timeout_sec", self.step_timeout_sec),
            ("stuck_timeout_sec", self.stuck_timeout_sec),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("simulation.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("pod {pod} of {service} pending since t={since}s, still unplaced at t={now}s")]
    Stuck { pod: PodId, service: ServiceId, since: f64, now: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Kinds of queued simulator events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimEventKind {
    ScenarioCycleStart(u32),
    HpaReconcile,
    SuggestTick,
    /// A bind request reaches the node.
    BindArrive { pod: PodId, target: Location },
    /// A bound pod finishes starting.
    PodStarted(PodId),
    /// A terminating pod is gone.
    PodGone(PodId),
    PlanTimeout { plan: PlanId, step: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub time_ms: u64,
    pub seq: u64,
    pub kind: SimEventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        (other.time_ms, other.seq).cmp(&(self.time_ms, self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Pending,
    Bound,
    Running,
}

#[derive(Clone, Debug)]
struct SimPod {
    service: ServiceId,
    phase: Phase,
    terminating: bool,
    created_ms: u64,
}

fn ms(sec: f64) -> u64 {
    ((sec * 1000.0).round() as u64).max(1)
}

fn sec(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

struct Simulation<'a> {
    policy: &'a dyn PlacementPolicy,
    cfg: &'a RunConfig,
    actual: ClusterState,
    pods: BTreeMap<PodId, SimPod>,
    manager: PlacementManager,
    queue: BinaryHeap<SimEvent>,
    seq: u64,
    now: u64,
    end: u64,
    next_pod: u64,
    cycles: Vec<Cycle>,
    targets: BTreeMap<ServiceId, u32>,
    batch: Vec<PodId>,
    records: Vec<TraceRecord>,
    safety: SafetyReport,
}

/// Runs one scenario on `cluster` (which must start without pods).
pub fn simulate(
    cluster: &ClusterState,
    scenario: &Scenario,
    policy: &dyn PlacementPolicy,
    cfg: &RunConfig,
) -> Result<SimulationTrace, SimError> {
    cfg.validate().map_err(|e| SimError::Config(e.to_string()))?;
    scenario.validate().map_err(|e| SimError::Config(e.to_string()))?;
    if cluster.pod_count() != 0 {
        return Err(SimError::Config("the starting cluster must have no pods".into()));
    }
    let cycles = generate_cycles(scenario, cluster);
    let cycle_ms = ms(scenario.cycle_sec);
    let mut sim = Simulation {
        policy,
        cfg,
        actual: cluster.clone(),
        pods: BTreeMap::new(),
        manager: PlacementManager::new(),
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        end: cycle_ms * scenario.cycles as u64,
        next_pod: 0,
        cycles,
        targets: BTreeMap::new(),
        batch: Vec::new(),
        records: Vec::new(),
        safety: SafetyReport::default(),
    };
    sim.init()?;
    for i in 0..scenario.cycles {
        sim.push_at(cycle_ms * i as u64, SimEventKind::ScenarioCycleStart(i));
    }
    sim.push_at(ms(cfg.simulation.hpa_sync_sec), SimEventKind::HpaReconcile);
    if policy.suggests() {
        sim.push_at(ms(cfg.scheduler.suggest_period_sec), SimEventKind::SuggestTick);
    }
    sim.run()?;

    Ok(SimulationTrace {
        scheduler: policy.name(),
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        end_time: sec(sim.end),
        services: cluster.services().iter().map(|s| s.id.to_string()).collect(),
        cycles: sim.cycles,
        records: sim.records,
        plan_log: sim.manager.log().to_vec(),
        safety: sim.safety,
    })
}

impl<'a> Simulation<'a> {
    fn push_at(&mut self, time_ms: u64, kind: SimEventKind) {
        self.seq += 1;
        self.queue.push(SimEvent { time_ms, seq: self.seq, kind });
    }

    fn push_in(&mut self, delay_sec: f64, kind: SimEventKind) {
        self.push_at(self.now + ms(delay_sec), kind);
    }

    fn record(&mut self, event: &str) -> &mut TraceRecord {
        self.records.push(TraceRecord::new(sec(self.now), event));
        self.records.last_mut().expect("just pushed")
    }

    fn log(&mut self, rec: TraceRecord) {
        self.records.push(rec);
    }

    fn rec(&self, event: &str) -> TraceRecord {
        TraceRecord::new(sec(self.now), event)
    }

    /// One pod per service, placed directly by the active policy.
    fn init(&mut self) -> Result<(), SimError> {
        let services: Vec<ServiceId> = self.actual.services().iter().map(|s| s.id.clone()).collect();
        let mut fresh = Vec::new();
        for s in &services {
            let id = PodId(self.next_pod);
            self.next_pod += 1;
            self.actual.add_pod(id, s.clone(), Location::Pending)?;
            self.pods.insert(id, SimPod { service: s.clone(), phase: Phase::Running, terminating: false, created_ms: 0 });
            self.targets.insert(s.clone(), 1);
            fresh.push(id);
        }
        let decision = self.policy.schedule(&self.actual, &fresh);
        let mut targets: BTreeMap<PodId, Location> = if decision.pinned.is_empty() {
            match_pods(&self.actual, &decision.to_edge).targets
        } else {
            decision.pinned.iter().map(|(p, n)| (*p, Location::OnEdge(n.clone()))).collect()
        };
        for p in &fresh {
            targets.entry(*p).or_insert(Location::OnCloud);
        }
        let moves: Vec<(PodId, Location)> = targets.into_iter().collect();
        self.actual = self.actual.apply_allocation_delta(&moves)?;
        for (p, loc) in moves {
            let svc = self.pods[&p].service.clone();
            let r = self.rec("init").pod(p).service(svc).node(loc);
            self.log(r);
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.queue.pop() {
            if ev.time_ms >= self.end {
                break;
            }
            self.now = ev.time_ms;
            self.handle(ev.kind);
            if self.actual.validate().is_err() {
                self.safety.capacity_violations += 1;
            }
            if self.queue.peek().is_none_or(|n| n.time_ms > self.now) {
                self.flush();
                self.check_stuck()?;
            }
        }
        self.now = self.end;
        self.record("end");
        Ok(())
    }

    fn check_stuck(&self) -> Result<(), SimError> {
        let limit = ms(self.cfg.simulation.stuck_timeout_sec);
        for (id, p) in &self.pods {
            if p.phase == Phase::Pending && !p.terminating && self.now > p.created_ms + limit {
                return Err(SimError::Stuck {
                    pod: *id,
                    service: p.service.clone(),
                    since: sec(p.created_ms),
                    now: sec(self.now),
                });
            }
        }
        Ok(())
    }

    fn handle(&mut self, kind: SimEventKind) {
        match kind {
            SimEventKind::ScenarioCycleStart(i) => {
                let targets = self.cycles[i as usize].targets.clone();
                let summary: BTreeMap<String, u32> = targets.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                let r = self
                    .rec("cycle_start")
                    .extra("cycle", i)
                    .extra("targets", serde_json::to_value(summary).expect("map serializes"));
                self.log(r);
                self.targets.extend(targets);
                self.reconcile();
            }
            SimEventKind::HpaReconcile => {
                self.reconcile();
                self.push_in(self.cfg.simulation.hpa_sync_sec, SimEventKind::HpaReconcile);
            }
            SimEventKind::SuggestTick => {
                self.suggest();
                self.push_in(self.cfg.scheduler.suggest_period_sec, SimEventKind::SuggestTick);
            }
            SimEventKind::BindArrive { pod, target } => self.bind_arrive(pod, target),
            SimEventKind::PodStarted(pod) => {
                let Some(p) = self.pods.get_mut(&pod) else { return };
                if p.phase != Phase::Bound {
                    return;
                }
                p.phase = Phase::Running;
                let svc = p.service.clone();
                let location = self.actual.pod(pod).expect("bound pod").location.clone();
                let r = self.rec("running").pod(pod).service(svc).node(&location);
                self.log(r);
                self.deliver(ClusterEvent::PodRunning { pod, location });
            }
            SimEventKind::PodGone(pod) => {
                let Some(p) = self.pods.remove(&pod) else { return };
                let rec = self.actual.remove_pod(pod).expect("pod tracked in both maps");
                let r = self.rec("deleted").pod(pod).service(p.service).node(rec.location);
                self.log(r);
                self.deliver(ClusterEvent::PodDeleted { pod });
            }
            SimEventKind::PlanTimeout { plan, step } => self.deliver(ClusterEvent::StepTimeout { plan, step }),
        }
    }

    fn bind_arrive(&mut self, pod: PodId, target: Location) {
        let Some(p) = self.pods.get(&pod) else { return };
        if p.phase != Phase::Pending || p.terminating {
            return;
        }
        let svc = p.service.clone();
        let fits = match &target {
            Location::OnEdge(n) => {
                let ix = self.actual.edge_index(n).expect("bind targets a known node");
                let need = self.actual.pod_resources(pod).expect("pod");
                need.fits_within(&self.actual.free_at(ix))
            }
            Location::OnCloud => true,
            Location::Pending => false,
        };
        if fits {
            self.actual.set_location(pod, target.clone()).expect("checked fit");
            self.pods.get_mut(&pod).expect("pod").phase = Phase::Bound;
            let r = self.rec("bound").pod(pod).service(svc).node(&target);
            self.log(r);
            self.push_in(self.cfg.latencies.pod_start_sec, SimEventKind::PodStarted(pod));
            self.deliver(ClusterEvent::PodBound { pod, location: target });
        } else {
            let r = self.rec("rejected").pod(pod).service(svc).node(&target);
            self.log(r);
            self.deliver(ClusterEvent::PodRejected { pod });
        }
    }

    fn deliver(&mut self, event: ClusterEvent) {
        let directive = self.manager.handle_event(sec(self.now), &event);
        match &directive {
            Directive::Forward(pod) => self.batch.push(*pod),
            Directive::Cancel { plans, .. } if !plans.is_empty() => {
                self.safety.plans_cancelled += plans.len() as u64;
                for id in plans {
                    let r = self.rec("plan_cancelled").extra("plan", *id);
                    self.log(r);
                }
            }
            Directive::Ignore => {
                // Nobody will retry a rejected pod; park it on the cloud.
                if let ClusterEvent::PodRejected { pod } = event {
                    self.execute(vec![ApiAction::Bind { pod, target: Location::OnCloud }]);
                }
            }
            _ => {}
        }
        for m in self.manager.take_finished() {
            let kind = match m.as_migration().kind() {
                MigrationKind::IntraEdge => "intra_edge",
                MigrationKind::EdgeToCloud => "edge_to_cloud",
                MigrationKind::CloudToEdge => "cloud_to_edge",
            };
            let svc = self.actual.pod(m.original).map(|r| r.service.clone());
            let mut r = self
                .rec("migrated")
                .pod(m.original)
                .node(&m.to)
                .extra("from", m.from.to_string())
                .extra("to", m.to.to_string())
                .extra("kind", kind)
                .extra("plan", m.plan);
            if let Some(svc) = svc.or_else(|| m.replacement.and_then(|p| self.pods.get(&p)).map(|p| p.service.clone())) {
                r = r.service(svc);
            }
            if let Some(rep) = m.replacement {
                r = r.extra("replacement", rep.to_string());
            }
            self.log(r);
        }
        let actions = match directive {
            Directive::Advance { actions, .. } | Directive::Cancel { actions, .. } => actions,
            _ => Vec::new(),
        };
        self.execute(actions);
    }

    fn execute(&mut self, actions: Vec<ApiAction>) {
        for a in actions {
            match a {
                ApiAction::RequestReplica { service, plan } => {
                    self.create_pod(service, Some(plan));
                }
                ApiAction::Bind { pod, target } => {
                    if self.pods.get(&pod).is_some_and(|p| p.phase == Phase::Pending && !p.terminating) {
                        self.push_in(self.cfg.latencies.bind_ack_sec, SimEventKind::BindArrive { pod, target });
                    }
                }
                ApiAction::Delete { pod } => self.request_delete(pod, "migration"),
                ApiAction::ArmTimeout { plan, step } => {
                    self.push_in(self.cfg.simulation.step_timeout_sec, SimEventKind::PlanTimeout { plan, step });
                }
            }
        }
    }

    fn create_pod(&mut self, service: ServiceId, requested_by: Option<PlanId>) -> PodId {
        let id = PodId(self.next_pod);
        self.next_pod += 1;
        self.actual.add_pod(id, service.clone(), Location::Pending).expect("fresh pod id");
        self.pods.insert(
            id,
            SimPod { service: service.clone(), phase: Phase::Pending, terminating: false, created_ms: self.now },
        );
        let mut r = self.rec("created").pod(id).service(&service);
        if let Some(plan) = requested_by {
            r = r.extra("plan", plan);
        }
        self.log(r);
        self.deliver(ClusterEvent::PodCreated { pod: id, service, requested_by });
        id
    }

    fn logical_running(&self, service: &ServiceId, without: Option<PodId>) -> usize {
        let up = |p: &PodId| {
            Some(*p) != without
                && self.pods.get(p).is_some_and(|x| x.phase == Phase::Running && !x.terminating)
        };
        let surge = self
            .manager
            .live_replacements()
            .iter()
            .filter(|(old, new)| up(old) && up(new) && &self.pods[old].service == service)
            .count();
        let running = self
            .pods
            .iter()
            .filter(|(id, p)| &p.service == service && up(id))
            .count();
        running - surge
    }

    fn request_delete(&mut self, pod: PodId, reason: &str) {
        let Some(p) = self.pods.get(&pod) else { return };
        if p.terminating {
            return;
        }
        let svc = p.service.clone();
        if reason == "migration" {
            // Running replicas net of replacements that run alongside the
            // pod they replace, before and after this delete.
            let before = self.logical_running(&svc, None);
            let after = self.logical_running(&svc, Some(pod));
            let target = self.targets.get(&svc).copied().unwrap_or(1) as usize;
            if after < before.min(target) {
                self.safety.replica_drops += 1;
            }
        }
        self.pods.get_mut(&pod).expect("pod").terminating = true;
        let node = self.actual.pod(pod).expect("pod").location.clone();
        let r = self.rec("delete_requested").pod(pod).service(svc).node(node).extra("reason", reason);
        self.log(r);
        self.push_in(self.cfg.latencies.pod_delete_sec, SimEventKind::PodGone(pod));
    }

    /// Drives every service toward its current replica target. Replacement
    /// pods of unfinished migrations are not counted, and pods taking part
    /// in a migration are never picked for scale-down.
    fn reconcile(&mut self) {
        let pairs = self.manager.live_replacements();
        let protected = self.manager.migration_pods();
        let alive = |p: &PodId, pods: &BTreeMap<PodId, SimPod>| pods.get(p).is_some_and(|x| !x.terminating);
        let targets: Vec<(ServiceId, u32)> = self.targets.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (service, target) in targets {
            let live = self.pods.values().filter(|p| p.service == service && !p.terminating).count();
            let surge = pairs
                .iter()
                .filter(|(o, r)| alive(o, &self.pods) && alive(r, &self.pods) && self.pods[o].service == service)
                .count();
            let logical = live - surge;
            let target = target as usize;
            if logical < target {
                for _ in logical..target {
                    self.create_pod(service.clone(), None);
                }
            } else if logical > target {
                let mut victims: Vec<(u64, PodId)> = self
                    .pods
                    .iter()
                    .filter(|(id, p)| p.service == service && !p.terminating && !protected.contains(id))
                    .map(|(id, p)| (p.created_ms, *id))
                    .collect();
                victims.sort_by(|a, b| b.cmp(a));
                for (_, v) in victims.into_iter().take(logical - target) {
                    self.request_delete(v, "scale_down");
                }
            }
        }
    }

    /// Schedules the pods created since the last flush.
    fn flush(&mut self) {
        if self.batch.is_empty() {
            return;
        }
        let mut batch = std::mem::take(&mut self.batch);
        batch.retain(|p| {
            self.pods.get(p).is_some_and(|x| x.phase == Phase::Pending && !x.terminating)
                && self.manager.owner_of(*p).is_none()
        });
        batch.sort();
        batch.dedup();
        if batch.is_empty() {
            return;
        }
        let view = scheduler_view(&self.actual, &self.manager);
        let decision = self.policy.schedule(&view, &batch);
        let r = self
            .rec("schedule")
            .extra("pods", batch.len())
            .extra("to_edge", decision.to_edge.len())
            .extra("to_cloud", decision.to_cloud.len());
        self.log(r);
        self.submit(&view, &decision);
    }

    fn submit(&mut self, view: &ClusterState, decision: &crate::scheduler::Decision) {
        let plans = plans_from_decision(view, decision);
        let (ids, actions) = self.manager.submit(sec(self.now), plans);
        for id in ids {
            let plan = self.manager.plan(id).expect("submitted");
            let r = self.rec("plan").extra("plan", id).extra("steps", plan.steps.len()).extra("edge", plan.edge);
            self.log(r);
        }
        self.execute(actions);
    }

    fn suggest(&mut self) {
        self.flush();
        if self.manager.edge_plan_running() {
            return;
        }
        let view = scheduler_view(&self.actual, &self.manager);
        let Some(decision) = self.policy.suggest(&view) else { return };
        self.safety.suggestions += 1;
        let chosen = (decision.to_edge.len() + decision.to_cloud.len()) as u32;
        let reorders = decision.migrations.iter().filter(|m| m.kind() == MigrationKind::IntraEdge).count() as u32;
        self.safety.max_c2e_chosen = self.safety.max_c2e_chosen.max(chosen);
        self.safety.max_reorder_moves = self.safety.max_reorder_moves.max(reorders);
        if evicts_satisfied_needlessly(&view, &decision) {
            self.safety.suggest_eviction_violations += 1;
        }
        if decision.is_noop() {
            return;
        }
        let r = self
            .rec("suggest")
            .extra("to_edge", decision.to_edge.len())
            .extra("to_cloud", decision.to_cloud.len())
            .extra("migrations", decision.migrations.len());
        self.log(r);
        self.submit(&view, &decision);
    }
}

/// True when `decision` moves a pod of a service at or above its QoS
/// target off the edge although some below-target service has a cloud pod
/// that fits on an edge node as things stand.
pub fn evicts_satisfied_needlessly(state: &ClusterState, decision: &crate::scheduler::Decision) -> bool {
    let evicted_satisfied = decision.migrations.iter().any(|m| {
        m.kind() == MigrationKind::EdgeToCloud
            && state
                .pod(m.pod)
                .and_then(|r| delta(state, &r.service).ok())
                .is_some_and(|d| d >= 0.0)
    });
    if !evicted_satisfied {
        return false;
    }
    state.pods().any(|p| {
        p.location == Location::OnCloud
            && delta(state, &p.service).is_ok_and(|d| d < 0.0)
            && (0..state.edge_nodes().len()).any(|i| {
                state.pod_resources(p.id).expect("pod").fits_within(&state.free_at(i))
            })
    })
}
