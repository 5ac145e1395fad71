//! Turning decisions into executable plans and driving them from cluster
//! events.
//!
//! A plan is a list of steps. Each step issues one API action and then
//! waits for the event that confirms it; nothing past an unconfirmed step
//! runs. A migration never deletes the original pod before its replacement
//! is running.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ClusterState, Location, NodeId, PodId, ServiceId};
use crate::scheduler::{match_pods, Decision, Migration};

pub type PlanId = u64;

/// A pod a step refers to: one that exists now, or a replacement the plan
/// itself will create (numbered per plan).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PodRef {
    Existing(PodId),
    Replacement(usize),
}

impl fmt::Display for PodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PodRef::Existing(p) => write!(f, "{p}"),
            PodRef::Replacement(s) => write!(f, "replacement#{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    AwaitPodCreation { service: ServiceId, slot: usize },
    BindPod { pod: PodRef, target: Location },
    DeletePod { pod: PodRef },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::AwaitPodCreation { service, slot } => write!(f, "create {service} as replacement#{slot}"),
            Action::BindPod { pod, target } => write!(f, "bind {pod} -> {target}"),
            Action::DeletePod { pod } => write!(f, "delete {pod}"),
        }
    }
}

/// The event a step waits for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verification {
    Created { slot: usize },
    Bound { pod: PodRef, target: Location },
    Running { pod: PodRef, target: Location },
    Deleted { pod: PodRef },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub verification: Verification,
}

impl Step {
    fn create(service: &ServiceId, slot: usize) -> Self {
        Step {
            action: Action::AwaitPodCreation { service: service.clone(), slot },
            verification: Verification::Created { slot },
        }
    }

    fn bind(pod: PodRef, target: Location) -> Self {
        Step {
            action: Action::BindPod { pod, target: target.clone() },
            verification: Verification::Bound { pod, target },
        }
    }

    /// Bind that only counts once the pod is up, as migrations require.
    fn bind_running(pod: PodRef, target: Location) -> Self {
        Step {
            action: Action::BindPod { pod, target: target.clone() },
            verification: Verification::Running { pod, target },
        }
    }

    fn delete(pod: PodRef) -> Self {
        Step { action: Action::DeletePod { pod }, verification: Verification::Deleted { pod } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Pending,
    Running,
    Done,
    Cancelled,
}

/// A logical move of one pod, possibly split into two hops via the cloud.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedMigration {
    pub original: PodId,
    pub from: Location,
    pub to: Location,
    /// Index of the step whose completion finishes each hop, with the
    /// location the hop reaches.
    pub hops: Vec<(usize, Location)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: PlanId,
    pub steps: Vec<Step>,
    pub cursor: usize,
    pub status: PlanStatus,
    /// Whether the plan touches edge nodes (as opposed to a lone cloud bind).
    pub edge: bool,
    pub migrations: Vec<PlannedMigration>,
    /// Replacement slot number to the pod that fills it.
    pub slots: BTreeMap<usize, PodId>,
}

impl Plan {
    fn new(steps: Vec<Step>, edge: bool, migrations: Vec<PlannedMigration>) -> Self {
        Plan { id: 0, steps, cursor: 0, status: PlanStatus::Pending, edge, migrations, slots: BTreeMap::new() }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.status, PlanStatus::Pending | PlanStatus::Running)
    }

    fn resolve(&self, pod: PodRef) -> Option<PodId> {
        match pod {
            PodRef::Existing(p) => Some(p),
            PodRef::Replacement(s) => self.slots.get(&s).copied(),
        }
    }

    /// Existing pods the plan binds or deletes.
    pub fn existing_pods(&self) -> BTreeSet<PodId> {
        self.steps
            .iter()
            .filter_map(|s| match &s.action {
                Action::BindPod { pod: PodRef::Existing(p), .. } | Action::DeletePod { pod: PodRef::Existing(p) } => {
                    Some(*p)
                }
                _ => None,
            })
            .collect()
    }
}

/// Builds plans for `decision` against the scheduler's view of the cluster.
///
/// Migrations run first, then edge binds, all in one edge plan. A direct
/// move is used when the target has room for the replacement next to
/// everything still on it; otherwise the pod goes to the cloud first and
/// comes back once the other moves are done. Edge-bound pods get nodes by
/// matching on the post-migration state unless the decision pins them;
/// pods the match cannot seat join the cloud set. Each pending cloud-bound
/// pod gets its own one-step plan.
pub fn plans_from_decision(state: &ClusterState, decision: &Decision) -> Vec<Plan> {
    let mut hyp = state.clone();
    let mut steps: Vec<Step> = Vec::new();
    let mut planned: Vec<PlannedMigration> = Vec::new();
    let mut slot = 0usize;
    let mut deferred: Vec<(usize, NodeId, usize)> = Vec::new();

    for m in &decision.migrations {
        let Some(rec) = hyp.pod(m.pod) else { continue };
        let service = rec.service.clone();
        let res = hyp.pod_resources(m.pod).expect("pod");
        let direct = match &m.to {
            Location::OnEdge(n) => {
                let ix = hyp.edge_index(n).expect("edge node");
                res.fits_within(&hyp.free_at(ix))
            }
            _ => true,
        };
        let hop_to = if direct { m.to.clone() } else { Location::OnCloud };
        steps.push(Step::create(&service, slot));
        steps.push(Step::bind_running(PodRef::Replacement(slot), hop_to.clone()));
        steps.push(Step::delete(PodRef::Existing(m.pod)));
        hyp.relocate(m.pod, hop_to.clone()).expect("pod exists");
        planned.push(PlannedMigration {
            original: m.pod,
            from: m.from.clone(),
            to: m.to.clone(),
            hops: vec![(steps.len() - 1, hop_to)],
        });
        if !direct {
            let node = m.to.edge_node().expect("indirect moves target edge").clone();
            deferred.push((slot, node, planned.len() - 1));
        }
        slot += 1;
    }

    for (first, node, entry) in deferred {
        let pod = planned[entry].original;
        let ix = hyp.edge_index(&node).expect("edge node");
        if !hyp.pod_resources(pod).expect("pod").fits_within(&hyp.free_at(ix)) {
            // The second hop no longer fits; the pod stays on the cloud.
            planned[entry].to = Location::OnCloud;
            continue;
        }
        let service = hyp.pod(pod).expect("pod").service.clone();
        let target = Location::OnEdge(node);
        steps.push(Step::create(&service, slot));
        steps.push(Step::bind_running(PodRef::Replacement(slot), target.clone()));
        steps.push(Step::delete(PodRef::Replacement(first)));
        hyp.relocate(pod, target.clone()).expect("pod exists");
        planned[entry].hops.push((steps.len() - 1, target));
        slot += 1;
    }

    // Edge targets for the batch.
    let mut cloud_bound: BTreeSet<PodId> = decision.to_cloud.iter().copied().collect();
    let targets: BTreeMap<PodId, Location> = if decision.pinned.is_empty() {
        match_pods(&hyp, &decision.to_edge).targets
    } else {
        decision
            .to_edge
            .iter()
            .map(|p| {
                let loc = decision.pinned.get(p).map_or(Location::OnCloud, |n| Location::OnEdge(n.clone()));
                (*p, loc)
            })
            .collect()
    };
    for (pod, target) in targets {
        if !target.is_edge() {
            cloud_bound.insert(pod);
            continue;
        }
        let Some(rec) = hyp.pod(pod) else { continue };
        match rec.location {
            Location::Pending => steps.push(Step::bind(PodRef::Existing(pod), target)),
            Location::OnCloud => {
                let service = rec.service.clone();
                steps.push(Step::create(&service, slot));
                steps.push(Step::bind_running(PodRef::Replacement(slot), target.clone()));
                steps.push(Step::delete(PodRef::Existing(pod)));
                planned.push(PlannedMigration {
                    original: pod,
                    from: Location::OnCloud,
                    to: target.clone(),
                    hops: vec![(steps.len() - 1, target)],
                });
                slot += 1;
            }
            Location::OnEdge(_) => {}
        }
    }

    let mut plans = Vec::new();
    for pod in cloud_bound {
        if state.pod(pod).is_some_and(|r| r.location == Location::Pending) {
            plans.push(Plan::new(vec![Step::bind(PodRef::Existing(pod), Location::OnCloud)], false, Vec::new()));
        }
    }
    if !steps.is_empty() {
        plans.push(Plan::new(steps, true, planned));
    }
    plans
}

/// Cluster events the manager reacts to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterEvent {
    PodCreated { pod: PodId, service: ServiceId, requested_by: Option<PlanId> },
    PodBound { pod: PodId, location: Location },
    PodRunning { pod: PodId, location: Location },
    PodRejected { pod: PodId },
    PodDeleted { pod: PodId },
    StepTimeout { plan: PlanId, step: usize },
}

/// Requests the manager makes of the cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApiAction {
    RequestReplica { service: ServiceId, plan: PlanId },
    Bind { pod: PodId, target: Location },
    Delete { pod: PodId },
    /// Start the timeout clock for a step that was just issued.
    ArmTimeout { plan: PlanId, step: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Directive {
    Advance { plan: PlanId, actions: Vec<ApiAction> },
    Cancel { plans: Vec<PlanId>, actions: Vec<ApiAction> },
    /// A pod nobody planned for; hand it to the scheduler.
    Forward(PodId),
    Ignore,
}

impl Directive {
    pub fn actions(&self) -> &[ApiAction] {
        match self {
            Directive::Advance { actions, .. } | Directive::Cancel { actions, .. } => actions,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanLogLine {
    pub time: f64,
    pub plan_id: PlanId,
    pub step_index: usize,
    pub action: String,
    pub result: String,
}

/// A finished hop sequence, reported once its plan ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedMigration {
    pub plan: PlanId,
    pub original: PodId,
    pub from: Location,
    pub to: Location,
    pub replacement: Option<PodId>,
}

impl CompletedMigration {
    pub fn as_migration(&self) -> Migration {
        Migration { pod: self.original, from: self.from.clone(), to: self.to.clone() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PlacementManager {
    plans: BTreeMap<PlanId, Plan>,
    owner: BTreeMap<PodId, PlanId>,
    next_id: PlanId,
    log: Vec<PlanLogLine>,
    finished: Vec<CompletedMigration>,
}

impl PlacementManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn plan(&self, id: PlanId) -> Option<&Plan> {
        self.plans.get(&id)
    }

    pub fn plans(&self) -> impl Iterator<Item = &Plan> {
        self.plans.values()
    }

    pub fn active_plans(&self) -> impl Iterator<Item = &Plan> {
        self.plans.values().filter(|p| p.is_active())
    }

    pub fn edge_plan_running(&self) -> bool {
        self.active_plans().any(|p| p.edge)
    }

    pub fn owner_of(&self, pod: PodId) -> Option<PlanId> {
        self.owner.get(&pod).copied()
    }

    pub fn log(&self) -> &[PlanLogLine] {
        &self.log
    }

    /// Migrations whose plans have ended since the last call.
    pub fn take_finished(&mut self) -> Vec<CompletedMigration> {
        std::mem::take(&mut self.finished)
    }

    /// Pods that are originals or replacements of an active migration.
    pub fn migration_pods(&self) -> BTreeSet<PodId> {
        let mut out = BTreeSet::new();
        for plan in self.active_plans() {
            out.extend(plan.slots.values().copied());
            out.extend(plan.migrations.iter().map(|m| m.original));
        }
        out
    }

    /// Pairs of (pod being replaced, replacement) for every migration hop of
    /// an active plan whose replacement has been created. A two-hop move
    /// contributes one pair per hop.
    pub fn live_replacements(&self) -> Vec<(PodId, PodId)> {
        let mut out = Vec::new();
        for plan in self.active_plans() {
            for w in plan.steps.windows(2) {
                if let (Action::BindPod { pod: bound @ PodRef::Replacement(_), .. }, Action::DeletePod { pod: gone }) =
                    (&w[0].action, &w[1].action)
                {
                    if let (Some(old), Some(new)) = (plan.resolve(*gone), plan.resolve(*bound)) {
                        out.push((old, new));
                    }
                }
            }
        }
        out
    }

    /// Registers new plans and issues their first steps. A plan touching a
    /// pod another active plan owns is dropped.
    pub fn submit(&mut self, now: f64, plans: Vec<Plan>) -> (Vec<PlanId>, Vec<ApiAction>) {
        let mut ids = Vec::new();
        let mut actions = Vec::new();
        for mut plan in plans {
            let pods = plan.existing_pods();
            let id = self.next_id;
            self.next_id += 1;
            plan.id = id;
            if pods.iter().any(|p| self.owner.contains_key(p)) || plan.steps.is_empty() {
                self.note(now, id, 0, "submit", "conflict");
                continue;
            }
            for p in pods {
                self.owner.insert(p, id);
            }
            plan.status = PlanStatus::Running;
            self.plans.insert(id, plan);
            ids.push(id);
            actions.extend(self.issue(now, id));
        }
        (ids, actions)
    }

    fn note(&mut self, time: f64, plan_id: PlanId, step_index: usize, action: impl Into<String>, result: &str) {
        self.log.push(PlanLogLine { time, plan_id, step_index, action: action.into(), result: result.into() });
    }

    /// Actions for the plan's current step.
    fn issue(&mut self, now: f64, id: PlanId) -> Vec<ApiAction> {
        let plan = &self.plans[&id];
        let step = plan.cursor;
        let action = plan.steps[step].action.clone();
        let api = match &action {
            Action::AwaitPodCreation { service, .. } => Some(ApiAction::RequestReplica { service: service.clone(), plan: id }),
            Action::BindPod { pod, target } => {
                plan.resolve(*pod).map(|p| ApiAction::Bind { pod: p, target: target.clone() })
            }
            Action::DeletePod { pod } => plan.resolve(*pod).map(|p| ApiAction::Delete { pod: p }),
        };
        self.note(now, id, step, action.to_string(), "issued");
        let mut out: Vec<ApiAction> = api.into_iter().collect();
        out.push(ApiAction::ArmTimeout { plan: id, step });
        out
    }

    fn expects(&self, id: PlanId, event: &ClusterEvent) -> bool {
        let plan = &self.plans[&id];
        let Some(step) = plan.steps.get(plan.cursor) else { return false };
        let is = |r: &PodRef, pod: &PodId| plan.resolve(*r) == Some(*pod);
        match (&step.verification, event) {
            (Verification::Created { .. }, ClusterEvent::PodCreated { requested_by: Some(p), .. }) => *p == id,
            (Verification::Bound { pod: r, target }, ClusterEvent::PodBound { pod, location }) => {
                is(r, pod) && target == location
            }
            (Verification::Running { pod: r, target }, ClusterEvent::PodRunning { pod, location }) => {
                is(r, pod) && target == location
            }
            (Verification::Deleted { pod: r }, ClusterEvent::PodDeleted { pod }) => is(r, pod),
            _ => false,
        }
    }

    fn advance(&mut self, now: f64, id: PlanId, event: &ClusterEvent) -> Vec<ApiAction> {
        let plan = self.plans.get_mut(&id).expect("plan");
        let step = plan.cursor;
        if let (Verification::Created { slot }, ClusterEvent::PodCreated { pod, .. }) =
            (&plan.steps[step].verification, event)
        {
            plan.slots.insert(*slot, *pod);
            self.owner.insert(*pod, id);
        }
        let plan = self.plans.get_mut(&id).expect("plan");
        plan.cursor += 1;
        let action = plan.steps[step].action.to_string();
        let done = plan.cursor == plan.steps.len();
        self.note(now, id, step, action, "verified");
        if done {
            self.finish(now, id, PlanStatus::Done);
            Vec::new()
        } else {
            self.issue(now, id)
        }
    }

    fn finish(&mut self, now: f64, id: PlanId, status: PlanStatus) {
        let plan = self.plans.get_mut(&id).expect("plan");
        plan.status = status;
        let cursor = plan.cursor;
        for m in &plan.migrations {
            let reached = m.hops.iter().take_while(|(step, _)| *step < cursor).last();
            if let Some((step, loc)) = reached {
                let replacement = plan.steps[..*step]
                    .iter()
                    .rev()
                    .find_map(|s| match &s.action {
                        Action::BindPod { pod: PodRef::Replacement(slot), .. } => plan.slots.get(slot).copied(),
                        _ => None,
                    });
                self.finished.push(CompletedMigration {
                    plan: id,
                    original: m.original,
                    from: m.from.clone(),
                    to: loc.clone(),
                    replacement,
                });
            }
        }
        self.owner.retain(|_, p| *p != id);
        if status == PlanStatus::Done {
            self.note(now, id, cursor.saturating_sub(1), "plan", "done");
        }
    }

    /// Cancels a plan and sends its not-yet-placed pods to the cloud.
    /// A replacement already bound stays; the surplus is left to the
    /// autoscaler.
    fn cancel(&mut self, now: f64, id: PlanId, reason: &str, gone: Option<PodId>) -> Vec<ApiAction> {
        let plan = &self.plans[&id];
        let cursor = plan.cursor;
        let mut actions = Vec::new();
        let mut seen = BTreeSet::new();
        for step in &plan.steps[cursor..] {
            // A bind issued but unconfirmed may still land on its target;
            // the cluster ignores a second bind for a placed pod.
            if let Action::BindPod { pod, .. } = &step.action {
                if let Some(p) = plan.resolve(*pod) {
                    if Some(p) != gone && seen.insert(p) {
                        actions.push(ApiAction::Bind { pod: p, target: Location::OnCloud });
                    }
                }
            }
        }
        let label = plan.steps.get(cursor).map(|s| s.action.to_string()).unwrap_or_default();
        self.note(now, id, cursor, label, reason);
        self.finish(now, id, PlanStatus::Cancelled);
        actions
    }

    /// Pods an active plan still needs in the future.
    fn needed_later(&self, id: PlanId, pod: PodId) -> bool {
        let plan = &self.plans[&id];
        plan.steps[plan.cursor..].iter().any(|s| match &s.action {
            Action::BindPod { pod: r, .. } | Action::DeletePod { pod: r } => plan.resolve(*r) == Some(pod),
            Action::AwaitPodCreation { .. } => false,
        })
    }

    pub fn handle_event(&mut self, now: f64, event: &ClusterEvent) -> Directive {
        match event {
            ClusterEvent::PodCreated { pod, requested_by: None, .. } => Directive::Forward(*pod),
            ClusterEvent::PodCreated { pod, requested_by: Some(id), .. } => {
                if self.plans.get(id).is_some_and(|p| p.is_active()) && self.expects(*id, event) {
                    Directive::Advance { plan: *id, actions: self.advance(now, *id, event) }
                } else {
                    // Replica for a plan that is gone: park it on the cloud.
                    Directive::Cancel {
                        plans: Vec::new(),
                        actions: vec![ApiAction::Bind { pod: *pod, target: Location::OnCloud }],
                    }
                }
            }
            ClusterEvent::PodBound { pod, .. } | ClusterEvent::PodRunning { pod, .. } => {
                match self.owner.get(pod).copied() {
                    Some(id) if self.expects(id, event) => Directive::Advance { plan: id, actions: self.advance(now, id, event) },
                    _ => Directive::Ignore,
                }
            }
            ClusterEvent::PodRejected { pod } => match self.owner.get(pod).copied() {
                Some(id) => {
                    let mut actions = self.cancel(now, id, "rejected", None);
                    if !actions.iter().any(|a| matches!(a, ApiAction::Bind { pod: p, .. } if p == pod)) {
                        actions.push(ApiAction::Bind { pod: *pod, target: Location::OnCloud });
                    }
                    Directive::Cancel { plans: vec![id], actions }
                }
                None => Directive::Ignore,
            },
            ClusterEvent::PodDeleted { pod } => match self.owner.get(pod).copied() {
                Some(id) if self.expects(id, event) => Directive::Advance { plan: id, actions: self.advance(now, id, event) },
                Some(id) if self.needed_later(id, *pod) => {
                    Directive::Cancel { plans: vec![id], actions: self.cancel(now, id, "pod deleted", Some(*pod)) }
                }
                Some(_) => {
                    self.owner.remove(pod);
                    Directive::Ignore
                }
                None => Directive::Ignore,
            },
            ClusterEvent::StepTimeout { plan, step } => match self.plans.get(plan) {
                Some(p) if p.is_active() && p.cursor == *step => {
                    Directive::Cancel { plans: vec![*plan], actions: self.cancel(now, *plan, "timeout", None) }
                }
                _ => Directive::Ignore,
            },
        }
    }
}

/// The cluster as the scheduler should see it: planned binds that have not
/// landed yet are shown at their targets, and replacements not yet bound
/// hold a reservation on their edge node.
pub fn scheduler_view(actual: &ClusterState, manager: &PlacementManager) -> ClusterState {
    let mut view = actual.clone();
    for plan in manager.active_plans() {
        for step in &plan.steps[plan.cursor..] {
            let Action::BindPod { pod, target } = &step.action else { continue };
            match plan.resolve(*pod) {
                Some(p) => {
                    if view.pod(p).is_some_and(|r| r.location == Location::Pending) {
                        // Leave it pending if the target is already taken.
                        let _ = view.set_location(p, target.clone());
                    }
                }
                None => {
                    if let (PodRef::Replacement(slot), Some(node)) = (pod, target.edge_node()) {
                        let service = plan.steps.iter().find_map(|s| match &s.action {
                            Action::AwaitPodCreation { service, slot: x } if x == slot => Some(service),
                            _ => None,
                        });
                        if let Some(spec) = service.and_then(|s| view.service(s)) {
                            let _ = view.reserve(node, spec.pod_resources);
                        }
                    }
                }
            }
        }
    }
    view
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table_cluster;
    use crate::model::ResourceVector;

    fn edge(n: &str) -> Location {
        Location::OnEdge(n.into())
    }

    #[test]
    fn all_cloud_decision_gives_single_step_plans() {
        let mut s = table_cluster();
        for i in 0..3 {
            s.add_pod(PodId(i), "A".into(), Location::Pending).unwrap();
        }
        let d = Decision { to_cloud: vec![PodId(0), PodId(1), PodId(2)], ..Default::default() };
        let plans = plans_from_decision(&s, &d);
        assert_eq!(plans.len(), 3);
        assert!(plans.iter().all(|p| p.steps.len() == 1 && !p.edge));
    }

    #[test]
    fn migration_precedes_bind() {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), edge("N2")).unwrap();
        s.add_pod(PodId(2), "B".into(), Location::Pending).unwrap();
        let d = Decision {
            to_edge: vec![PodId(2)],
            migrations: vec![Migration { pod: PodId(1), from: edge("N2"), to: edge("N3") }],
            ..Default::default()
        };
        let plans = plans_from_decision(&s, &d);
        assert_eq!(plans.len(), 1);
        let kinds: Vec<String> = plans[0].steps.iter().map(|s| s.action.to_string()).collect();
        assert_eq!(kinds[0], "create A as replacement#0");
        assert_eq!(kinds[1], "bind replacement#0 -> N3");
        assert_eq!(kinds[2], "delete pod-1");
        assert!(kinds[3].starts_with("bind pod-2 -> "));
    }

    #[test]
    fn full_target_goes_via_cloud() {
        // Swap two D pods between N2 and N3 while both nodes are full on CPU.
        let mut s = table_cluster();
        s.add_pod(PodId(1), "D".into(), edge("N2")).unwrap();
        s.add_pod(PodId(2), "D".into(), edge("N2")).unwrap();
        s.add_pod(PodId(3), "A".into(), edge("N2")).unwrap();
        s.add_pod(PodId(4), "D".into(), edge("N3")).unwrap();
        s.add_pod(PodId(5), "D".into(), edge("N3")).unwrap();
        let d = Decision {
            migrations: vec![Migration { pod: PodId(3), from: edge("N2"), to: edge("N3") }],
            ..Default::default()
        };
        let plans = plans_from_decision(&s, &d);
        let p = &plans[0];
        assert_eq!(p.steps[1].action, Action::BindPod { pod: PodRef::Replacement(0), target: Location::OnCloud });
        // N3 stays full, so the second hop is dropped and the pod stays on cloud.
        assert_eq!(p.migrations[0].to, Location::OnCloud);
    }

    #[test]
    fn unpackable_pod_is_demoted_to_cloud() {
        // Two nodes with 1000m free each: total pool fits a 2000m pod, no node does.
        let mut s = ClusterState::new(
            vec![
                crate::model::NodeSpec::edge("E1", ResourceVector::new(1000, 4000)),
                crate::model::NodeSpec::edge("E2", ResourceVector::new(1000, 4000)),
                crate::model::NodeSpec::cloud("C"),
            ],
            vec![
                crate::model::ServiceSpec::new("S", ResourceVector::new(1000, 100), 1.0),
                crate::model::ServiceSpec::new("T", ResourceVector::new(2000, 100), 1.0),
            ],
        )
        .unwrap();
        s.add_pod(PodId(1), "S".into(), Location::Pending).unwrap();
        s.add_pod(PodId(2), "T".into(), Location::Pending).unwrap();
        let d = Decision { to_edge: vec![PodId(1), PodId(2)], ..Default::default() };
        let plans = plans_from_decision(&s, &d);
        let cloud: Vec<_> = plans.iter().filter(|p| !p.edge).flat_map(|p| p.existing_pods()).collect();
        assert_eq!(cloud, vec![PodId(2)]);
    }

    fn bound(pod: u64, loc: Location) -> ClusterEvent {
        ClusterEvent::PodBound { pod: PodId(pod), location: loc }
    }

    #[test]
    fn bind_event_advances_and_finishes() {
        let mut m = PlacementManager::new();
        let plan = Plan::new(vec![Step::bind(PodRef::Existing(PodId(7)), edge("N2"))], true, Vec::new());
        let (ids, actions) = m.submit(0.0, vec![plan]);
        assert_eq!(actions[0], ApiAction::Bind { pod: PodId(7), target: edge("N2") });
        assert_eq!(m.handle_event(0.1, &bound(8, edge("N2"))), Directive::Ignore);
        assert!(matches!(m.handle_event(0.2, &bound(7, edge("N2"))), Directive::Advance { .. }));
        assert_eq!(m.plan(ids[0]).unwrap().status, PlanStatus::Done);
        assert_eq!(m.owner_of(PodId(7)), None);
    }

    #[test]
    fn deleting_awaited_pod_cancels_and_sends_rest_to_cloud() {
        let mut m = PlacementManager::new();
        let plan = Plan::new(
            vec![
                Step::bind(PodRef::Existing(PodId(1)), edge("N2")),
                Step::bind(PodRef::Existing(PodId(2)), edge("N3")),
            ],
            true,
            Vec::new(),
        );
        let (ids, _) = m.submit(0.0, vec![plan]);
        let d = m.handle_event(1.0, &ClusterEvent::PodDeleted { pod: PodId(2) });
        match d {
            Directive::Cancel { plans, actions } => {
                assert_eq!(plans, ids);
                assert!(actions.contains(&ApiAction::Bind { pod: PodId(1), target: Location::OnCloud }));
                assert!(!actions.iter().any(|a| matches!(a, ApiAction::Bind { pod: PodId(2), .. })));
            }
            other => panic!("{other:?}"),
        }
        // Cancelled plans do nothing further.
        assert_eq!(m.handle_event(1.1, &bound(1, edge("N2"))), Directive::Ignore);
    }

    #[test]
    fn unrelated_and_timeout() {
        let mut m = PlacementManager::new();
        assert_eq!(m.handle_event(0.0, &ClusterEvent::PodDeleted { pod: PodId(3) }), Directive::Ignore);
        let plan = Plan::new(vec![Step::bind(PodRef::Existing(PodId(1)), edge("N2"))], true, Vec::new());
        let (ids, _) = m.submit(0.0, vec![plan]);
        let d = m.handle_event(30.0, &ClusterEvent::StepTimeout { plan: ids[0], step: 0 });
        assert!(matches!(d, Directive::Cancel { .. }));
        assert!(m.log().iter().any(|l| l.result == "timeout"));
    }

    #[test]
    fn migration_sequence_runs_create_before_delete() {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), edge("N2")).unwrap();
        let d = Decision {
            migrations: vec![Migration { pod: PodId(1), from: edge("N2"), to: Location::OnCloud }],
            ..Default::default()
        };
        let mut m = PlacementManager::new();
        let (ids, actions) = m.submit(0.0, plans_from_decision(&s, &d));
        let id = ids[0];
        assert_eq!(actions[0], ApiAction::RequestReplica { service: "A".into(), plan: id });
        let created = ClusterEvent::PodCreated { pod: PodId(9), service: "A".into(), requested_by: Some(id) };
        let Directive::Advance { actions, .. } = m.handle_event(0.0, &created) else { panic!() };
        assert_eq!(m.live_replacements(), vec![(PodId(1), PodId(9))]);
        assert_eq!(actions[0], ApiAction::Bind { pod: PodId(9), target: Location::OnCloud });
        // Bound is not enough for a replacement; it must be running.
        assert_eq!(m.handle_event(0.2, &bound(9, Location::OnCloud)), Directive::Ignore);
        let running = ClusterEvent::PodRunning { pod: PodId(9), location: Location::OnCloud };
        let Directive::Advance { actions, .. } = m.handle_event(2.2, &running) else { panic!() };
        assert_eq!(actions[0], ApiAction::Delete { pod: PodId(1) });
        m.handle_event(3.2, &ClusterEvent::PodDeleted { pod: PodId(1) });
        let done = m.take_finished();
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].replacement, Some(PodId(9)));
        assert_eq!(done[0].to, Location::OnCloud);
    }

    #[test]
    fn two_hop_move_pairs_each_hop() {
        let mut s = table_cluster();
        for i in 1..=5 {
            s.add_pod(PodId(i), "A".into(), edge("N2")).unwrap();
        }
        s.add_pod(PodId(10), "A".into(), edge("N3")).unwrap();
        // N2 is full until pod 1 leaves, so pod 10 waits on the cloud.
        let d = Decision {
            migrations: vec![
                Migration { pod: PodId(10), from: edge("N3"), to: edge("N2") },
                Migration { pod: PodId(1), from: edge("N2"), to: Location::OnCloud },
            ],
            ..Default::default()
        };
        let mut plans = plans_from_decision(&s, &d);
        assert_eq!(plans[0].migrations[0].hops.len(), 2);
        plans[0].slots = [(0, PodId(100)), (1, PodId(101)), (2, PodId(102))].into_iter().collect();
        let mut m = PlacementManager::new();
        m.submit(0.0, plans);
        let mut pairs = m.live_replacements();
        pairs.sort();
        assert_eq!(pairs, vec![(PodId(1), PodId(101)), (PodId(10), PodId(100)), (PodId(100), PodId(102))]);
    }

    #[test]
    fn view_shows_pending_binds_at_target() {
        let mut s = table_cluster();
        s.add_pod(PodId(1), "A".into(), Location::Pending).unwrap();
        let mut m = PlacementManager::new();
        m.submit(0.0, vec![Plan::new(vec![Step::bind(PodRef::Existing(PodId(1)), edge("N3"))], true, Vec::new())]);
        let v = scheduler_view(&s, &m);
        assert_eq!(v.pod(PodId(1)).unwrap().location, edge("N3"));
    }
}
