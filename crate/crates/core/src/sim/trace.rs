use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::plans::PlanLogLine;
use crate::workload::Cycle;

/// One line of the simulation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl TraceRecord {
    pub fn new(t: f64, event: &str) -> Self {
        TraceRecord { t, event: event.into(), pod: None, service: None, node: None, extra: BTreeMap::new() }
    }

    pub fn pod(mut self, pod: impl ToString) -> Self {
        self.pod = Some(pod.to_string());
        self
    }

    pub fn service(mut self, service: impl ToString) -> Self {
        self.service = Some(service.to_string());
        self
    }

    pub fn node(mut self, node: impl ToString) -> Self {
        self.node = Some(node.to_string());
        self
    }

    pub fn extra(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.extra.insert(key.into(), value.into());
        self
    }

    pub fn extra_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(|v| v.as_str())
    }
}

/// Invariant checks gathered while the simulation runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    /// Events after which some edge node was over capacity.
    pub capacity_violations: u64,
    /// Migration deletions that left a service with fewer running pods
    /// than it had, while it was at or below its target.
    pub replica_drops: u64,
    /// Largest number of cloud pods one suggestion picked.
    pub max_c2e_chosen: u32,
    /// Largest number of edge-to-edge moves in one decision.
    pub max_reorder_moves: u32,
    /// Suggestions that evicted a satisfied service's pod while an
    /// unsatisfied service had a cloud pod that fit as is.
    pub suggest_eviction_violations: u64,
    pub suggestions: u64,
    pub plans_cancelled: u64,
}

impl SafetyReport {
    pub fn is_clean(&self, m_c2e: u32, m_er: u32) -> bool {
        self.capacity_violations == 0
            && self.replica_drops == 0
            && self.max_c2e_chosen <= m_c2e
            && self.max_reorder_moves <= m_er
            && self.suggest_eviction_violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub scheduler: String,
    pub scenario: String,
    pub seed: u64,
    pub end_time: f64,
    /// Service ids in cluster order.
    pub services: Vec<String>,
    pub cycles: Vec<Cycle>,
    pub records: Vec<TraceRecord>,
    pub plan_log: Vec<PlanLogLine>,
    pub safety: SafetyReport,
}

impl SimulationTrace {
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn write_plan_log(&self, mut out: impl Write) -> io::Result<()> {
        for l in &self.plan_log {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn count(&self, event: &str) -> usize {
        self.records.iter().filter(|r| r.event == event).count()
    }
}
