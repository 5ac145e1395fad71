//! Ready-made clusters for tests, examples and the CLI.

use crate::config::ClusterDefinition;
use crate::model::ClusterState;

/// The default three-edge-node, four-service cluster with empty nodes.
pub fn table_cluster() -> ClusterState {
    ClusterDefinition::table_fixture().to_state().expect("fixture is valid")
}
