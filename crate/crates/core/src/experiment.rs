//! Single runs, paired scheduler comparisons, manifests and the grouped
//! tables behind each figure.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Baseline, BaselinePolicy};
use crate::config::{ClusterDefinition, ConfigError, RunConfig};
use crate::metrics::{compute_metrics, csv_string, mean, MetricsError, MetricsReport};
use crate::scheduler::{KubeDsm, PlacementPolicy, SchedulerKind, Variant};
use crate::sim::{simulate, SafetyReport, SimError, SimulationTrace};
use crate::workload::{QosPreset, Scenario};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown scheduler {0:?} (expected one of {known})", known = SCHEDULER_LABELS.join(", "))]
    UnknownScheduler(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{failed} of {total} runs failed")]
    PartialFailure { failed: usize, total: usize },
}

pub const SCHEDULER_LABELS: [&str; 8] = [
    "kubedsm",
    "kubedsm-midmig",
    "kubedsm-nocloudoffload",
    "kubedsm-nomig",
    "k8s",
    "bef",
    "sef",
    "cf",
];

/// Builds the policy a scheduler label names. Plain `kubedsm` takes its
/// limits from `config`; the variant labels override them.
pub fn make_policy(label: &str, config: &RunConfig) -> Result<Box<dyn PlacementPolicy>, ExperimentError> {
    let variant = Variant::ALL.into_iter().find(|v| v.label() == label && *v != Variant::Original);
    if let Some(v) = variant {
        let (m_c2e, m_er) = v.limits();
        let cfg = crate::scheduler::SchedulerConfig { m_c2e, m_er, ..config.scheduler.clone() };
        return Ok(Box::new(KubeDsm::new(cfg, config.qos)));
    }
    let kind: SchedulerKind = label.parse().map_err(|_| ExperimentError::UnknownScheduler(label.into()))?;
    Ok(match kind {
        SchedulerKind::Kubedsm => Box::new(KubeDsm::new(config.scheduler.clone(), config.qos)),
        SchedulerKind::Bef => Box::new(Baseline(BaselinePolicy::BiggestEdgeFirst)),
        SchedulerKind::Sef => Box::new(Baseline(BaselinePolicy::SmallestEdgeFirst)),
        SchedulerKind::Cf => Box::new(Baseline(BaselinePolicy::CloudFirst)),
        SchedulerKind::K8s => Box::new(Baseline(BaselinePolicy::SpreadDefault)),
    })
}

/// (m_c2e, m_er) limits a label runs under, for safety checks.
pub fn limits_for(label: &str, config: &RunConfig) -> (u32, u32) {
    Variant::ALL
        .into_iter()
        .find(|v| v.label() == label && *v != Variant::Original)
        .map(|v| v.limits())
        .unwrap_or((config.scheduler.m_c2e, config.scheduler.m_er))
}

/// Everything a run depends on. Serialized as the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub cluster: ClusterDefinition,
    pub scenario: Scenario,
    pub scheduler: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos_preset: Option<QosPreset>,
    pub config: RunConfig,
}

impl RunSpec {
    pub fn new(cluster: ClusterDefinition, scenario: Scenario, scheduler: &str, config: RunConfig) -> Self {
        RunSpec { cluster, scenario, scheduler: scheduler.into(), qos_preset: None, config }
    }

    /// The cluster with the preset's QoS targets applied, if any.
    pub fn effective_cluster(&self) -> Result<ClusterDefinition, ConfigError> {
        match self.qos_preset {
            Some(p) => self.cluster.with_qos_targets(&p.targets()),
            None => Ok(self.cluster.clone()),
        }
    }

    pub fn to_manifest(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Manifest { format: MANIFEST_FORMAT.into(), run: self.clone() })
            .expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_manifest(text: &str) -> Result<Self, ExperimentError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(ExperimentError::Manifest(format!("unsupported manifest format {:?}", m.format)));
        }
        Ok(m.run)
    }
}

const MANIFEST_FORMAT: &str = "edgesched-run/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    run: RunSpec,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: SimulationTrace,
    pub metrics: MetricsReport,
}

impl RunOutput {
    pub fn metrics_csv(&self) -> String {
        csv_string(&self.metrics.rows(&self.trace.scenario, &self.trace.scheduler)).expect("in-memory csv")
    }
}

pub fn run_one(spec: &RunSpec) -> Result<RunOutput, ExperimentError> {
    let state = spec.effective_cluster()?.to_state()?;
    let policy = make_policy(&spec.scheduler, &spec.config)?;
    let mut trace = simulate(&state, &spec.scenario, policy.as_ref(), &spec.config)?;
    trace.scheduler = spec.scheduler.clone();
    let metrics = compute_metrics(&trace)?;
    Ok(RunOutput { trace, metrics })
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Runs `spec` and writes trace.jsonl, plan_log.jsonl, metrics.csv and
/// manifest.json into `out_dir`.
pub fn run_to_dir(spec: &RunSpec, out_dir: &Path) -> Result<RunOutput, ExperimentError> {
    let out = run_one(spec)?;
    write_atomic(&out_dir.join("trace.jsonl"), out.trace.to_jsonl().as_bytes())?;
    let mut log = Vec::new();
    out.trace.write_plan_log(&mut log).expect("in-memory write");
    write_atomic(&out_dir.join("plan_log.jsonl"), &log)?;
    write_atomic(&out_dir.join("metrics.csv"), out.metrics_csv().as_bytes())?;
    write_atomic(&out_dir.join("manifest.json"), spec.to_manifest().as_bytes())?;
    Ok(out)
}

/// A grid of paired runs: every scheduler sees the same scenario and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub cluster: ClusterDefinition,
    pub scenarios: Vec<Scenario>,
    pub schedulers: Vec<String>,
    pub seeds: Vec<u64>,
    /// Empty means the cluster's own QoS targets.
    #[serde(default)]
    pub qos_presets: Vec<QosPreset>,
    pub config: RunConfig,
}

/// Means 1.1 to 1.6 at standard deviation 0.4.
pub fn mean_sweep() -> Vec<Scenario> {
    [1.1, 1.2, 1.3, 1.4, 1.5, 1.6].iter().map(|m| Scenario::new(*m, 0.4, 0)).collect()
}

/// Standard deviations 0.1 to 0.5 at mean 1.5.
pub fn std_sweep() -> Vec<Scenario> {
    [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|s| Scenario::new(1.5, *s, 0)).collect()
}

pub fn default_seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

impl CompareSpec {
    pub fn runs(&self) -> Vec<RunSpec> {
        let presets: Vec<Option<QosPreset>> =
            if self.qos_presets.is_empty() { vec![None] } else { self.qos_presets.iter().map(|p| Some(*p)).collect() };
        let mut out = Vec::new();
        for preset in &presets {
            for sc in &self.scenarios {
                for seed in &self.seeds {
                    for s in &self.schedulers {
                        out.push(RunSpec {
                            cluster: self.cluster.clone(),
                            scenario: sc.with_seed(*seed),
                            scheduler: s.clone(),
                            qos_preset: *preset,
                            config: self.config.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.scenarios.is_empty() || self.schedulers.is_empty() || self.seeds.is_empty() {
            return Err(ExperimentError::Config(ConfigError::Invalid(
                "comparison grid needs at least one scenario, scheduler and seed".into(),
            )));
        }
        for s in &self.schedulers {
            make_policy(s, &self.config)?;
        }
        Ok(())
    }
}

/// One row of the long-format comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub scenario: String,
    pub scheduler: String,
    pub qos_preset: String,
    pub seed: u64,
    pub service: String,
    pub edge_ratio: f64,
    pub mean_edge_ratio: f64,
    pub stddev: f64,
    pub migrations_intra: u64,
    pub migrations_e2c: u64,
    pub migrations_c2e: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scheduler: String,
    pub qos_preset: String,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub safety: Option<SafetyReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<RunSummary>,
    pub rows: Vec<LongRow>,
}

impl Comparison {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    /// Mean of `mean_edge_ratio` over the successful runs matching `pred`.
    pub fn mean_edge_ratio(&self, pred: impl Fn(&RunSummary) -> bool) -> f64 {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| pred(r))
            .filter_map(|r| r.metrics.as_ref().map(|m| m.mean_edge_ratio))
            .collect();
        mean(&v)
    }
}

fn preset_label(p: Option<QosPreset>) -> String {
    p.map_or_else(|| "cluster".to_string(), |p| p.label().to_string())
}

/// Runs the grid with `jobs` worker threads (0 picks the machine's count).
/// Failed runs are kept in the summary and left out of the rows.
pub fn compare(spec: &CompareSpec, jobs: usize) -> Result<Comparison, ExperimentError> {
    spec.validate()?;
    let runs = spec.runs();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    let results: Vec<(RunSpec, Result<RunOutput, ExperimentError>)> =
        pool.install(|| runs.into_par_iter().map(|r| {
            let out = run_one(&r);
            (r, out)
        }).collect());

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (spec, result) in results {
        let qos_preset = preset_label(spec.qos_preset);
        let mut summary = RunSummary {
            scenario: spec.scenario.name.clone(),
            scheduler: spec.scheduler.clone(),
            qos_preset: qos_preset.clone(),
            seed: spec.scenario.seed,
            metrics: None,
            safety: None,
            error: None,
        };
        match result {
            Ok(out) => {
                for r in out.metrics.rows(&spec.scenario.name, &spec.scheduler) {
                    rows.push(LongRow {
                        scenario: r.scenario,
                        scheduler: r.scheduler,
                        qos_preset: qos_preset.clone(),
                        seed: spec.scenario.seed,
                        service: r.service,
                        edge_ratio: r.edge_ratio,
                        mean_edge_ratio: r.mean_edge_ratio,
                        stddev: r.stddev,
                        migrations_intra: r.migrations_intra,
                        migrations_e2c: r.migrations_e2c,
                        migrations_c2e: r.migrations_c2e,
                    });
                }
                summary.metrics = Some(out.metrics);
                summary.safety = Some(out.trace.safety);
            }
            Err(e) => summary.error = Some(e.to_string()),
        }
        summaries.push(summary);
    }
    Ok(Comparison { runs: summaries, rows })
}

/// Writes results.csv, runs.json, manifest.json and figures/*.csv. Returns
/// an error after writing if any run failed.
pub fn compare_to_dir(spec: &CompareSpec, jobs: usize, out_dir: &Path) -> Result<Comparison, ExperimentError> {
    let cmp = compare(spec, jobs)?;
    write_atomic(&out_dir.join("results.csv"), csv_string(&cmp.rows)?.as_bytes())?;
    let runs = serde_json::to_string_pretty(&cmp.runs).expect("summary serializes") + "\n";
    write_atomic(&out_dir.join("runs.json"), runs.as_bytes())?;
    let manifest = serde_json::to_string_pretty(spec).expect("spec serializes") + "\n";
    write_atomic(&out_dir.join("manifest.json"), manifest.as_bytes())?;
    for (name, table) in figure_tables(&cmp.rows)? {
        write_atomic(&out_dir.join("figures").join(format!("{name}.csv")), table.as_bytes())?;
    }
    let failed = cmp.failures();
    if failed > 0 {
        return Err(ExperimentError::PartialFailure { failed, total: cmp.runs.len() });
    }
    Ok(cmp)
}

#[derive(Serialize)]
struct EdgeRatioCell {
    qos_preset: String,
    scenario: String,
    scheduler: String,
    mean_edge_ratio: f64,
    seeds: usize,
}

#[derive(Serialize)]
struct StddevCell {
    qos_preset: String,
    scenario: String,
    scheduler: String,
    stddev: f64,
    seeds: usize,
}

#[derive(Serialize)]
struct ServiceCell {
    qos_preset: String,
    scheduler: String,
    service: String,
    edge_ratio: f64,
    runs: usize,
}

#[derive(Serialize)]
struct MigrationCell {
    qos_preset: String,
    scheduler: String,
    mean_edge_ratio: f64,
    migrations_intra: f64,
    migrations_e2c: f64,
    migrations_c2e: f64,
    runs: usize,
}

/// Pre-grouped tables, one per figure family:
///
/// * `edge_ratio`: mean edge ratio per scenario cell (mean and std sweeps)
/// * `stddev`: cross-service spread per scenario cell
/// * `radar`: per-service ratio per scheduler, all scenarios pooled
/// * `migrations`: edge ratio and migration counts per scheduler
/// * `qos`: per-service ratio per QoS preset
pub fn figure_tables(rows: &[LongRow]) -> Result<BTreeMap<String, String>, ExperimentError> {
    // One entry per run: (preset, scenario, scheduler, seed).
    let mut per_run: BTreeMap<(String, String, String, u64), &LongRow> = BTreeMap::new();
    let mut per_service: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        per_run.entry((r.qos_preset.clone(), r.scenario.clone(), r.scheduler.clone(), r.seed)).or_insert(r);
        per_service
            .entry((r.qos_preset.clone(), r.scheduler.clone(), r.service.clone()))
            .or_default()
            .push(r.edge_ratio);
    }

    let mut cells: BTreeMap<(String, String, String), Vec<&LongRow>> = BTreeMap::new();
    let mut by_scheduler: BTreeMap<(String, String), Vec<&LongRow>> = BTreeMap::new();
    for ((preset, scenario, scheduler, _), r) in &per_run {
        cells.entry((preset.clone(), scenario.clone(), scheduler.clone())).or_default().push(r);
        by_scheduler.entry((preset.clone(), scheduler.clone())).or_default().push(r);
    }
    let avg = |rs: &[&LongRow], f: fn(&LongRow) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());

    let edge: Vec<EdgeRatioCell> = cells
        .iter()
        .map(|((p, sc, s), rs)| EdgeRatioCell {
            qos_preset: p.clone(),
            scenario: sc.clone(),
            scheduler: s.clone(),
            mean_edge_ratio: avg(rs, |r| r.mean_edge_ratio),
            seeds: rs.len(),
        })
        .collect();
    let stddev: Vec<StddevCell> = cells
        .iter()
        .map(|((p, sc, s), rs)| StddevCell {
            qos_preset: p.clone(),
            scenario: sc.clone(),
            scheduler: s.clone(),
            stddev: avg(rs, |r| r.stddev),
            seeds: rs.len(),
        })
        .collect();
    let services: Vec<ServiceCell> = per_service
        .iter()
        .map(|((p, s, svc), v)| ServiceCell {
            qos_preset: p.clone(),
            scheduler: s.clone(),
            service: svc.clone(),
            edge_ratio: mean(v),
            runs: v.len(),
        })
        .collect();
    let migrations: Vec<MigrationCell> = by_scheduler
        .iter()
        .map(|((p, s), rs)| MigrationCell {
            qos_preset: p.clone(),
            scheduler: s.clone(),
            mean_edge_ratio: avg(rs, |r| r.mean_edge_ratio),
            migrations_intra: avg(rs, |r| r.migrations_intra as f64),
            migrations_e2c: avg(rs, |r| r.migrations_e2c as f64),
            migrations_c2e: avg(rs, |r| r.migrations_c2e as f64),
            runs: rs.len(),
        })
        .collect();
    let mut qos: Vec<&ServiceCell> = services.iter().collect();
    qos.sort_by(|a, b| (&a.scheduler, &a.qos_preset, &a.service).cmp(&(&b.scheduler, &b.qos_preset, &b.service)));

    let mut out = BTreeMap::new();
    out.insert("edge_ratio".to_string(), csv_string(&edge)?);
    out.insert("stddev".to_string(), csv_string(&stddev)?);
    out.insert("radar".to_string(), csv_string(&services)?);
    out.insert("migrations".to_string(), csv_string(&migrations)?);
    out.insert("qos".to_string(), csv_string(&qos)?);
    Ok(out)
}

/// The standard comparison grids behind each figure family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureGrid {
    /// All schedulers over means 1.1 to 1.6.
    MeanSweep,
    /// All schedulers over standard deviations 0.1 to 0.5.
    StdSweep,
    /// KubeDSM limit variants and the spread baseline over the mean sweep.
    Variants,
    /// KubeDSM under each QoS preset over the mean sweep.
    Qos,
}

pub const MAIN_SCHEDULERS: [&str; 5] = ["kubedsm", "k8s", "bef", "sef", "cf"];
pub const VARIANT_SCHEDULERS: [&str; 5] =
    ["kubedsm", "kubedsm-midmig", "kubedsm-nocloudoffload", "kubedsm-nomig", "k8s"];

impl FigureGrid {
    pub const ALL: [FigureGrid; 4] = [FigureGrid::MeanSweep, FigureGrid::StdSweep, FigureGrid::Variants, FigureGrid::Qos];

    pub fn label(&self) -> &'static str {
        match self {
            FigureGrid::MeanSweep => "mean-sweep",
            FigureGrid::StdSweep => "std-sweep",
            FigureGrid::Variants => "variants",
            FigureGrid::Qos => "qos",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FigureGrid::ALL.into_iter().find(|g| g.label() == s)
    }

    pub fn spec(&self, cluster: ClusterDefinition, seeds: Vec<u64>, config: RunConfig) -> CompareSpec {
        let (scenarios, schedulers, qos_presets) = match self {
            FigureGrid::MeanSweep => (mean_sweep(), MAIN_SCHEDULERS.to_vec(), Vec::new()),
            FigureGrid::StdSweep => (std_sweep(), MAIN_SCHEDULERS.to_vec(), Vec::new()),
            FigureGrid::Variants => (mean_sweep(), VARIANT_SCHEDULERS.to_vec(), Vec::new()),
            FigureGrid::Qos => (
                mean_sweep(),
                vec!["kubedsm"],
                vec![QosPreset::AllEqual, QosPreset::CGreaterA, QosPreset::RespectD],
            ),
        };
        CompareSpec {
            cluster,
            scenarios,
            schedulers: schedulers.into_iter().map(String::from).collect(),
            seeds,
            qos_presets,
            config,
        }
    }
}

/// Default cluster, scenario and run-config files.
pub fn emit_fixtures(out_dir: &Path) -> Result<Vec<String>, ExperimentError> {
    let files = [
        ("cluster.toml", ClusterDefinition::table_fixture().to_toml()),
        ("scenario.toml", Scenario::new(1.5, 0.4, 1).to_toml()),
        ("config.toml", RunConfig::default().to_toml()),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path.display().to_string());
    }
    Ok(written)
}
