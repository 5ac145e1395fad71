//! Turns a decision with one intra-edge move into a plan and walks it
//! through the placement manager by hand, printing each API action.

use std::collections::VecDeque;

use edgesched::fixtures::table_cluster;
use edgesched::model::{Location, PodId};
use edgesched::plans::{plans_from_decision, ApiAction, ClusterEvent, PlacementManager};
use edgesched::scheduler::{Decision, Migration};

fn main() {
    let mut state = table_cluster();
    state.add_pod(PodId(1), "A".into(), Location::OnEdge("N2".into())).unwrap();
    state.add_pod(PodId(2), "B".into(), Location::Pending).unwrap();
    let decision = Decision {
        to_edge: vec![PodId(2)],
        migrations: vec![Migration {
            pod: PodId(1),
            from: Location::OnEdge("N2".into()),
            to: Location::OnEdge("N3".into()),
        }],
        ..Default::default()
    };

    let mut manager = PlacementManager::new();
    let plans = plans_from_decision(&state, &decision);
    for step in &plans[0].steps {
        println!("planned: {}", step.action);
    }
    let (_, issued) = manager.submit(0.0, plans);
    let mut pending: VecDeque<ApiAction> = issued.into();

    // Play the cluster: every request succeeds one second later.
    let mut now = 0.0;
    let mut next_pod = 100;
    while let Some(action) = pending.pop_front() {
        if matches!(action, ApiAction::ArmTimeout { .. }) {
            continue;
        }
        now += 1.0;
        println!("t={now:>4}: {action:?}");
        let events = match action {
            ApiAction::RequestReplica { service, plan } => {
                next_pod += 1;
                vec![ClusterEvent::PodCreated { pod: PodId(next_pod), service, requested_by: Some(plan) }]
            }
            ApiAction::Bind { pod, target } => vec![
                ClusterEvent::PodBound { pod, location: target.clone() },
                ClusterEvent::PodRunning { pod, location: target },
            ],
            ApiAction::Delete { pod } => vec![ClusterEvent::PodDeleted { pod }],
            ApiAction::ArmTimeout { .. } => unreachable!(),
        };
        for e in events {
            pending.extend(manager.handle_event(now, &e).actions().iter().cloned());
        }
    }
    for line in manager.log() {
        println!("{:>5.1} plan {} step {}: {} [{}]", line.time, line.plan_id, line.step_index, line.action, line.result);
    }
    for done in manager.take_finished() {
        println!("migrated {} {} -> {} via {:?}", done.original, done.from, done.to, done.replacement);
    }
}
