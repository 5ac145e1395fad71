//! Cluster model: resource vectors, nodes, services, pods and the
//! pod-to-node allocation that every scheduling routine reads and rewrites.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CPU in millicores and memory in MiB.
///
/// Ordering is the component-wise partial order: `a <= b` holds only when
/// both components of `a` are at most those of `b`. Two vectors where each
/// wins one component are incomparable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu_millicores: u64,
    pub memory_mib: u64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpu_millicores: 0, memory_mib: 0 };
    /// Capacity sentinel for the cloud node.
    pub const UNBOUNDED: ResourceVector =
        ResourceVector { cpu_millicores: u64::MAX, memory_mib: u64::MAX };

    pub const fn new(cpu_millicores: u64, memory_mib: u64) -> Self {
        Self { cpu_millicores, memory_mib }
    }

    pub fn is_zero(&self) -> bool {
        self.cpu_millicores == 0 && self.memory_mib == 0
    }

    /// Both components strictly positive.
    pub fn is_positive(&self) -> bool {
        self.cpu_millicores > 0 && self.memory_mib > 0
    }

    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.cpu_millicores <= other.cpu_millicores && self.memory_mib <= other.memory_mib
    }

    pub fn checked_sub(self, rhs: ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            cpu_millicores: self.cpu_millicores.checked_sub(rhs.cpu_millicores)?,
            memory_mib: self.memory_mib.checked_sub(rhs.memory_mib)?,
        })
    }

    pub fn checked_add(self, rhs: ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            cpu_millicores: self.cpu_millicores.checked_add(rhs.cpu_millicores)?,
            memory_mib: self.memory_mib.checked_add(rhs.memory_mib)?,
        })
    }

    pub fn scale(self, factor: u64) -> ResourceVector {
        ResourceVector {
            cpu_millicores: self.cpu_millicores * factor,
            memory_mib: self.memory_mib * factor,
        }
    }
}

impl PartialOrd for ResourceVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let cpu = self.cpu_millicores.cmp(&other.cpu_millicores);
        let mem = self.memory_mib.cmp(&other.memory_mib);
        match (cpu, mem) {
            (a, b) if a == b => Some(a),
            (Ordering::Equal, x) | (x, Ordering::Equal) => Some(x),
            _ => None,
        }
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector {
            cpu_millicores: self.cpu_millicores + rhs.cpu_millicores,
            memory_mib: self.memory_mib + rhs.memory_mib,
        }
    }
}

impl AddAssign for ResourceVector {
    fn add_assign(&mut self, rhs: ResourceVector) {
        *self = *self + rhs;
    }
}

/// Panics when either component would go negative.
impl Sub for ResourceVector {
    type Output = ResourceVector;

    fn sub(self, rhs: ResourceVector) -> ResourceVector {
        self.checked_sub(rhs)
            .unwrap_or_else(|| panic!("resource underflow: {self} - {rhs}"))
    }
}

impl SubAssign for ResourceVector {
    fn sub_assign(&mut self, rhs: ResourceVector) {
        *self = *self - rhs;
    }
}

impl Sum for ResourceVector {
    fn sum<I: Iterator<Item = ResourceVector>>(iter: I) -> Self {
        iter.fold(ResourceVector::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a ResourceVector> for ResourceVector {
    fn sum<I: Iterator<Item = &'a ResourceVector>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}m, {}Mi)", self.cpu_millicores, self.memory_mib)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(NodeId);
string_id!(ServiceId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PodId(pub u64);

impl fmt::Display for PodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pod-{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Edge,
    Cloud,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    pub capacity: ResourceVector,
}

impl NodeSpec {
    pub fn edge(id: impl Into<String>, capacity: ResourceVector) -> Self {
        Self { id: NodeId::new(id), kind: NodeKind::Edge, capacity }
    }

    pub fn cloud(id: impl Into<String>) -> Self {
        Self { id: NodeId::new(id), kind: NodeKind::Cloud, capacity: ResourceVector::UNBOUNDED }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: ServiceId,
    pub pod_resources: ResourceVector,
    /// Minimum fraction of the service's pods that should run on edge.
    pub qos_target: f64,
    /// False when no single edge node can hold one pod; set at load time.
    #[serde(default = "default_true")]
    pub edge_feasible: bool,
}

fn default_true() -> bool {
    true
}

impl ServiceSpec {
    pub fn new(id: impl Into<String>, pod_resources: ResourceVector, qos_target: f64) -> Self {
        Self { id: ServiceId::new(id), pod_resources, qos_target, edge_feasible: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "at", content = "node")]
pub enum Location {
    Pending,
    OnEdge(NodeId),
    OnCloud,
}

impl Location {
    pub fn is_edge(&self) -> bool {
        matches!(self, Location::OnEdge(_))
    }

    pub fn edge_node(&self) -> Option<&NodeId> {
        match self {
            Location::OnEdge(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Pending => f.write_str("pending"),
            Location::OnEdge(n) => write!(f, "{n}"),
            Location::OnCloud => f.write_str("cloud"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodRecord {
    pub id: PodId,
    pub service: ServiceId,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is the cloud node and has no finite capacity")]
    CloudNode(NodeId),
    #[error("unknown pod {0}")]
    UnknownPod(PodId),
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("duplicate identifier {0}")]
    Duplicate(String),
    #[error("node {node} over capacity: requires {required}, has {capacity}")]
    CapacityExceeded { node: NodeId, required: ResourceVector, capacity: ResourceVector },
    #[error("invalid cluster: {0}")]
    Invalid(String),
}

/// Node inventory plus the pod allocation.
///
/// Edge nodes are kept sorted by id, services likewise. Per-node usage is
/// cached and kept in sync by every mutator, so `free_resources` is cheap.
/// `reserved` holds capacity promised to in-flight work that has no pod
/// record yet; it counts as used for every fit and fragmentation test.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    edge: Vec<NodeSpec>,
    cloud: NodeSpec,
    services: Vec<ServiceSpec>,
    pods: std::collections::BTreeMap<PodId, PodRecord>,
    used: Vec<ResourceVector>,
    reserved: Vec<ResourceVector>,
}

impl ClusterState {
    /// Builds an empty cluster. Exactly one cloud node is required and every
    /// edge node needs strictly positive capacity.
    pub fn new(nodes: Vec<NodeSpec>, services: Vec<ServiceSpec>) -> Result<Self, ModelError> {
        let mut ids = BTreeSet::new();
        for n in &nodes {
            if !ids.insert(n.id.clone()) {
                return Err(ModelError::Duplicate(n.id.to_string()));
            }
        }
        let (clouds, mut edge): (Vec<_>, Vec<_>) =
            nodes.into_iter().partition(|n| n.kind == NodeKind::Cloud);
        if clouds.len() != 1 {
            return Err(ModelError::Invalid(format!(
                "exactly one cloud node required, found {}",
                clouds.len()
            )));
        }
        let mut cloud = clouds.into_iter().next().expect("one cloud node");
        cloud.capacity = ResourceVector::UNBOUNDED;
        for n in &edge {
            if !n.capacity.is_positive() {
                return Err(ModelError::Invalid(format!(
                    "edge node {} must have positive capacity, got {}",
                    n.id, n.capacity
                )));
            }
        }
        edge.sort_by(|a, b| a.id.cmp(&b.id));

        let mut services = services;
        services.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen = BTreeSet::new();
        for s in &mut services {
            if !seen.insert(s.id.clone()) {
                return Err(ModelError::Duplicate(s.id.to_string()));
            }
            if !(0.0..=1.0).contains(&s.qos_target) {
                return Err(ModelError::Invalid(format!(
                    "service {} qos_target {} outside [0, 1]",
                    s.id, s.qos_target
                )));
            }
            s.edge_feasible = edge.iter().any(|n| s.pod_resources.fits_within(&n.capacity));
        }
        let n = edge.len();
        Ok(Self {
            edge,
            cloud,
            services,
            pods: Default::default(),
            used: vec![ResourceVector::ZERO; n],
            reserved: vec![ResourceVector::ZERO; n],
        })
    }

    pub fn edge_nodes(&self) -> &[NodeSpec] {
        &self.edge
    }

    pub fn cloud_node(&self) -> &NodeSpec {
        &self.cloud
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.edge.iter().chain(std::iter::once(&self.cloud))
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes().find(|n| &n.id == id)
    }

    pub fn edge_index(&self, id: &NodeId) -> Option<usize> {
        self.edge.binary_search_by(|n| n.id.cmp(id)).ok()
    }

    pub fn services(&self) -> &[ServiceSpec] {
        &self.services
    }

    pub fn service(&self, id: &ServiceId) -> Option<&ServiceSpec> {
        self.service_index(id).map(|i| &self.services[i])
    }

    pub fn service_index(&self, id: &ServiceId) -> Option<usize> {
        self.services.binary_search_by(|s| s.id.cmp(id)).ok()
    }

    pub fn pods(&self) -> impl Iterator<Item = &PodRecord> {
        self.pods.values()
    }

    pub fn pod(&self, id: PodId) -> Option<&PodRecord> {
        self.pods.get(&id)
    }

    pub fn pod_count(&self) -> usize {
        self.pods.len()
    }

    pub fn pods_of<'a>(&'a self, service: &'a ServiceId) -> impl Iterator<Item = &'a PodRecord> {
        self.pods.values().filter(move |p| &p.service == service)
    }

    /// Resources of one pod of the pod's service.
    pub fn pod_resources(&self, id: PodId) -> Result<ResourceVector, ModelError> {
        let pod = self.pods.get(&id).ok_or(ModelError::UnknownPod(id))?;
        self.service(&pod.service)
            .map(|s| s.pod_resources)
            .ok_or_else(|| ModelError::UnknownService(pod.service.clone()))
    }

    /// Usage on an edge node by index, reservations included.
    pub fn used_at(&self, edge_ix: usize) -> ResourceVector {
        self.used[edge_ix] + self.reserved[edge_ix]
    }

    pub fn reserved_at(&self, edge_ix: usize) -> ResourceVector {
        self.reserved[edge_ix]
    }

    /// Free capacity on an edge node by index. Zero if reservations pushed
    /// usage past capacity.
    pub fn free_at(&self, edge_ix: usize) -> ResourceVector {
        self.edge[edge_ix]
            .capacity
            .checked_sub(self.used_at(edge_ix))
            .unwrap_or(ResourceVector::ZERO)
    }

    pub fn total_edge_capacity(&self) -> ResourceVector {
        self.edge.iter().map(|n| n.capacity).sum()
    }

    pub fn total_edge_free(&self) -> ResourceVector {
        (0..self.edge.len()).map(|i| self.free_at(i)).sum()
    }

    /// Capacity of the largest edge node (CPU first, then memory).
    pub fn largest_edge_capacity(&self) -> ResourceVector {
        self.edge
            .iter()
            .map(|n| n.capacity)
            .max_by_key(|c| (c.cpu_millicores, c.memory_mib))
            .unwrap_or(ResourceVector::ZERO)
    }

    fn location_index(&self, loc: &Location) -> Result<Option<usize>, ModelError> {
        match loc {
            Location::OnEdge(n) => match self.edge_index(n) {
                Some(i) => Ok(Some(i)),
                None if n == &self.cloud.id => Err(ModelError::Invalid(format!(
                    "cloud node {n} addressed as an edge location"
                ))),
                None => Err(ModelError::UnknownNode(n.clone())),
            },
            _ => Ok(None),
        }
    }

    /// Adds a pod, enforcing the per-node capacity constraint.
    pub fn add_pod(
        &mut self,
        id: PodId,
        service: ServiceId,
        location: Location,
    ) -> Result<(), ModelError> {
        if self.pods.contains_key(&id) {
            return Err(ModelError::Duplicate(id.to_string()));
        }
        let res = self
            .service(&service)
            .ok_or_else(|| ModelError::UnknownService(service.clone()))?
            .pod_resources;
        if let Some(i) = self.location_index(&location)? {
            self.check_room(i, res)?;
            self.used[i] += res;
        }
        self.pods.insert(id, PodRecord { id, service, location });
        Ok(())
    }

    pub fn remove_pod(&mut self, id: PodId) -> Result<PodRecord, ModelError> {
        let res = self.pod_resources(id)?;
        let rec = self.pods.remove(&id).ok_or(ModelError::UnknownPod(id))?;
        if let Some(i) = self.location_index(&rec.location)? {
            self.used[i] -= res;
        }
        Ok(rec)
    }

    fn check_room(&self, i: usize, extra: ResourceVector) -> Result<(), ModelError> {
        let node = &self.edge[i];
        let required = self.used_at(i) + extra;
        if required.fits_within(&node.capacity) {
            Ok(())
        } else {
            Err(ModelError::CapacityExceeded {
                node: node.id.clone(),
                required,
                capacity: node.capacity,
            })
        }
    }

    /// Moves one pod, enforcing capacity at the destination.
    pub fn set_location(&mut self, id: PodId, location: Location) -> Result<(), ModelError> {
        let res = self.pod_resources(id)?;
        let dest = self.location_index(&location)?;
        let src = self.location_index(&self.pods[&id].location)?;
        if let Some(d) = dest {
            if src != Some(d) {
                self.check_room(d, res)?;
            }
        }
        self.move_unchecked(id, location, res, src, dest);
        Ok(())
    }

    fn move_unchecked(
        &mut self,
        id: PodId,
        location: Location,
        res: ResourceVector,
        src: Option<usize>,
        dest: Option<usize>,
    ) {
        if let Some(s) = src {
            self.used[s] -= res;
        }
        if let Some(d) = dest {
            self.used[d] += res;
        }
        self.pods.get_mut(&id).expect("pod exists").location = location;
    }

    /// Relocates a pod without the capacity check. The caller restores the
    /// per-node constraint before the state escapes.
    pub(crate) fn relocate(&mut self, id: PodId, location: Location) -> Result<(), ModelError> {
        let res = self.pod_resources(id)?;
        let dest = self.location_index(&location)?;
        let src = self.location_index(&self.pods[&id].location)?;
        self.move_unchecked(id, location, res, src, dest);
        Ok(())
    }

    /// Holds capacity on an edge node for work that has no pod record yet.
    pub fn reserve(&mut self, node: &NodeId, amount: ResourceVector) -> Result<(), ModelError> {
        let i = self.edge_index(node).ok_or_else(|| ModelError::UnknownNode(node.clone()))?;
        self.check_room(i, amount)?;
        self.reserved[i] += amount;
        Ok(())
    }

    /// Checks the allocation constraint (every edge location names a known
    /// edge node) and the per-node resource constraint.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut used = vec![ResourceVector::ZERO; self.edge.len()];
        for p in self.pods.values() {
            if let Some(i) = self.location_index(&p.location)? {
                used[i] += self.pod_resources(p.id)?;
            }
        }
        for (i, node) in self.edge.iter().enumerate() {
            debug_assert_eq!(used[i], self.used[i], "usage cache out of sync on {}", node.id);
            let required = used[i] + self.reserved[i];
            if !required.fits_within(&node.capacity) {
                return Err(ModelError::CapacityExceeded {
                    node: node.id.clone(),
                    required,
                    capacity: node.capacity,
                });
            }
        }
        Ok(())
    }

    /// Applies all moves at once and validates the result as a whole, so a
    /// batch is accepted or rejected atomically. `self` is left untouched.
    pub fn apply_allocation_delta(
        &self,
        moves: &[(PodId, Location)],
    ) -> Result<ClusterState, ModelError> {
        let mut next = self.clone();
        for (pod, loc) in moves {
            next.relocate(*pod, loc.clone())?;
        }
        next.validate()?;
        Ok(next)
    }
}

/// Capacity left on an edge node.
pub fn free_resources(state: &ClusterState, node: &NodeId) -> Result<ResourceVector, ModelError> {
    match state.edge_index(node) {
        Some(i) => {
            let cap = state.edge[i].capacity;
            cap.checked_sub(state.used_at(i)).ok_or_else(|| ModelError::CapacityExceeded {
                node: node.clone(),
                required: state.used_at(i),
                capacity: cap,
            })
        }
        None if node == &state.cloud.id => Err(ModelError::CloudNode(node.clone())),
        None => Err(ModelError::UnknownNode(node.clone())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeView {
    pub edge_pods: Vec<PodRecord>,
    pub cloud_pods: Vec<PodRecord>,
    pub total_edge_capacity: ResourceVector,
    pub total_edge_free: ResourceVector,
}

/// Partitions placed pods by edge/cloud (pending pods appear in neither)
/// and totals the edge pool.
pub fn edge_view(state: &ClusterState) -> EdgeView {
    let mut edge_pods = Vec::new();
    let mut cloud_pods = Vec::new();
    for p in state.pods() {
        match p.location {
            Location::OnEdge(_) => edge_pods.push(p.clone()),
            Location::OnCloud => cloud_pods.push(p.clone()),
            Location::Pending => {}
        }
    }
    EdgeView {
        edge_pods,
        cloud_pods,
        total_edge_capacity: state.total_edge_capacity(),
        total_edge_free: state.total_edge_free(),
    }
}

pub fn apply_allocation_delta(
    state: &ClusterState,
    moves: &[(PodId, Location)],
) -> Result<ClusterState, ModelError> {
    state.apply_allocation_delta(moves)
}
