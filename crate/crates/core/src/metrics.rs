//! Edge-ratio and migration metrics computed from a simulation trace.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimulationTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has no records")]
    EmptyTrace,
    #[error("trace has no running pods for service {0}")]
    NoPods(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationCounts {
    pub intra_edge: u64,
    pub edge_to_cloud: u64,
    pub cloud_to_edge: u64,
}

impl MigrationCounts {
    pub fn total(&self) -> u64 {
        self.intra_edge + self.edge_to_cloud + self.cloud_to_edge
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent of running replicas on the edge, time-weighted, per service.
    pub per_deployment_edge_ratio: BTreeMap<String, f64>,
    /// Arithmetic mean of the per-service ratios.
    pub mean_edge_ratio: f64,
    /// Population standard deviation of the per-service ratios.
    pub edge_ratio_stddev: f64,
    pub total_migrations: u64,
    pub migrations: MigrationCounts,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn population_stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn compute_metrics(trace: &SimulationTrace) -> Result<MetricsReport, MetricsError> {
    if trace.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    // pod -> (service, on edge) for pods currently running and not terminating
    let mut running: BTreeMap<String, (String, bool)> = BTreeMap::new();
    let mut area: BTreeMap<String, (f64, f64)> = trace.services.iter().map(|s| (s.clone(), (0.0, 0.0))).collect();
    let mut migrations = MigrationCounts::default();
    let mut last_t = 0.0;

    let mut accumulate = |running: &BTreeMap<String, (String, bool)>, from: f64, to: f64| {
        let dt = to - from;
        if dt <= 0.0 {
            return;
        }
        let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
        for (svc, edge) in running.values() {
            let c = counts.entry(svc.as_str()).or_default();
            c.0 += *edge as u32;
            c.1 += 1;
        }
        for (svc, (edge, total)) in counts {
            if let Some(a) = area.get_mut(svc) {
                a.0 += dt * edge as f64 / total as f64;
                a.1 += dt;
            }
        }
    };

    for r in &trace.records {
        accumulate(&running, last_t, r.t);
        last_t = last_t.max(r.t);
        let pod = r.pod.clone().unwrap_or_default();
        match r.event.as_str() {
            "init" | "running" => {
                let edge = r.node.as_deref().is_some_and(|n| n != "cloud" && n != "pending");
                running.insert(pod, (r.service.clone().unwrap_or_default(), edge));
            }
            "delete_requested" | "deleted" => {
                running.remove(&pod);
            }
            "migrated" => match r.extra_str("kind") {
                Some("intra_edge") => migrations.intra_edge += 1,
                Some("edge_to_cloud") => migrations.edge_to_cloud += 1,
                Some("cloud_to_edge") => migrations.cloud_to_edge += 1,
                _ => {}
            },
            _ => {}
        }
    }
    accumulate(&running, last_t, trace.end_time);

    let mut per = BTreeMap::new();
    for (svc, (edge_time, time)) in area {
        let ratio = if time > 0.0 {
            100.0 * edge_time / time
        } else if trace.end_time == 0.0 {
            // Zero-length run: fall back to the initial placement.
            let on: Vec<bool> = running.values().filter(|(s, _)| *s == svc).map(|(_, e)| *e).collect();
            if on.is_empty() {
                return Err(MetricsError::NoPods(svc));
            }
            100.0 * on.iter().filter(|e| **e).count() as f64 / on.len() as f64
        } else {
            return Err(MetricsError::NoPods(svc));
        };
        per.insert(svc, ratio);
    }
    let values: Vec<f64> = per.values().copied().collect();
    Ok(MetricsReport {
        mean_edge_ratio: mean(&values),
        edge_ratio_stddev: population_stddev(&values),
        total_migrations: migrations.total(),
        migrations,
        per_deployment_edge_ratio: per,
    })
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub scheduler: String,
    pub service: String,
    pub edge_ratio: f64,
    pub mean_edge_ratio: f64,
    pub stddev: f64,
    pub migrations_intra: u64,
    pub migrations_e2c: u64,
    pub migrations_c2e: u64,
}

impl MetricsReport {
    pub fn rows(&self, scenario: &str, scheduler: &str) -> Vec<MetricsRow> {
        self.per_deployment_edge_ratio
            .iter()
            .map(|(svc, ratio)| MetricsRow {
                scenario: scenario.into(),
                scheduler: scheduler.into(),
                service: svc.clone(),
                edge_ratio: *ratio,
                mean_edge_ratio: self.mean_edge_ratio,
                stddev: self.edge_ratio_stddev,
                migrations_intra: self.migrations.intra_edge,
                migrations_e2c: self.migrations.edge_to_cloud,
                migrations_c2e: self.migrations.cloud_to_edge,
            })
            .collect()
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, MetricsError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}
