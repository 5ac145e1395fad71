use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgesched::config::{ClusterDefinition, RunConfig, CONFIG_ENV};
use edgesched::experiment::{
    compare_to_dir, default_seeds, emit_fixtures, run_to_dir, CompareSpec, ExperimentError, FigureGrid, RunSpec,
    SCHEDULER_LABELS,
};
use edgesched::oracle::{self_check, SELF_CHECK_BUDGET};
use edgesched::workload::{QosPreset, Scenario};

#[derive(Parser)]
#[command(name = "edgesched", version, about = "Edge/cloud pod scheduling simulator")]
struct Cli {
    /// Run configuration (QoS constants, scheduler limits, latencies).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scheduler on one scenario.
    Run(RunArgs),
    /// Run a grid of scenarios, schedulers and seeds with paired workloads.
    Compare(CompareArgs),
    /// Run one of the standard figure grids.
    Figures(FiguresArgs),
    /// Cross-check the heuristics against exhaustive search.
    OracleCheck(OracleArgs),
    /// Write the default cluster, scenario and config files.
    EmitFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Cluster TOML file; defaults to the built-in four-node fixture.
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Scenario TOML file or a `<mean>_<std>` name.
    #[arg(long, default_value = "1.5_0.4")]
    scenario: String,
    #[arg(long, default_value = "kubedsm", value_parser = SCHEDULER_LABELS)]
    scheduler: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_preset)]
    qos_preset: Option<QosPreset>,
    /// Re-run exactly the run recorded in this manifest; other inputs are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Scenario files or names; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', default_value = "1.5_0.4")]
    scenario: Vec<String>,
    #[arg(long, value_delimiter = ',', value_parser = SCHEDULER_LABELS,
          default_values_t = ["kubedsm", "k8s", "bef", "sef", "cf"].map(String::from))]
    scheduler: Vec<String>,
    /// Explicit seeds; overrides --seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Number of replicate seeds, numbered from 1.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_preset)]
    qos_preset: Vec<QosPreset>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FiguresArgs {
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// mean-sweep, std-sweep, variants, qos or all.
    #[arg(long, default_value = "all")]
    grid: String,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_preset(s: &str) -> Result<QosPreset, String> {
    QosPreset::parse(s).ok_or_else(|| {
        let known: Vec<&str> = QosPreset::ALL.iter().map(|p| p.label()).collect();
        format!("unknown QoS preset {s:?} (expected one of {})", known.join(", "))
    })
}

fn load_cluster(path: Option<&Path>) -> Result<ClusterDefinition, ExperimentError> {
    Ok(match path {
        Some(p) => ClusterDefinition::load(p)?,
        None => ClusterDefinition::table_fixture(),
    })
}

fn load_scenario(arg: &str, seed: Option<u64>) -> Result<Scenario, ExperimentError> {
    let path = Path::new(arg);
    let sc = if path.exists() {
        Scenario::load(path)?
    } else {
        Scenario::from_name(arg, seed.unwrap_or(1))?
    };
    Ok(match seed {
        Some(s) => sc.with_seed(s),
        None => sc,
    })
}

fn seeds_from(explicit: Vec<u64>, n: u64) -> Vec<u64> {
    if explicit.is_empty() {
        default_seeds(n)
    } else {
        explicit
    }
}

fn report(out: &Path, cmp: &edgesched::experiment::Comparison) {
    println!("{} runs, {} failed; results in {}", cmp.runs.len(), cmp.failures(), out.display());
    for r in cmp.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "failed: {} {} {} seed {}: {}",
            r.qos_preset,
            r.scenario,
            r.scheduler,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
}

type BoxError = Box<dyn std::error::Error>;

fn execute(cli: Cli) -> Result<(), BoxError> {
    let config = || -> Result<RunConfig, ExperimentError> {
        let c = RunConfig::resolve(cli.config.as_deref())?;
        c.validate()?;
        Ok(c)
    };
    match cli.command {
        Command::Run(a) => {
            let spec = match &a.manifest {
                Some(m) => {
                    let text = std::fs::read_to_string(m)
                        .map_err(|source| ExperimentError::Io { path: m.display().to_string(), source })?;
                    RunSpec::from_manifest(&text)?
                }
                None => {
                    let cfg = config()?;
                    let mut spec =
                        RunSpec::new(load_cluster(a.cluster.as_deref())?, load_scenario(&a.scenario, a.seed)?, &a.scheduler, cfg);
                    spec.qos_preset = a.qos_preset;
                    spec
                }
            };
            spec.scenario.validate()?;
            for w in spec.config.scheduler.warnings() {
                eprintln!("warning: {w}");
            }
            let out = run_to_dir(&spec, &a.out)?;
            println!(
                "{} on {} (seed {}): mean edge ratio {:.2}%, stddev {:.2}, {} migrations",
                spec.scheduler,
                spec.scenario.name,
                spec.scenario.seed,
                out.metrics.mean_edge_ratio,
                out.metrics.edge_ratio_stddev,
                out.metrics.total_migrations
            );
            Ok(())
        }
        Command::Compare(a) => {
            let scenarios = a.scenario.iter().map(|s| load_scenario(s, None)).collect::<Result<Vec<_>, _>>()?;
            let spec = CompareSpec {
                cluster: load_cluster(a.cluster.as_deref())?,
                scenarios,
                schedulers: a.scheduler,
                seeds: seeds_from(a.seed, a.seeds),
                qos_presets: a.qos_preset,
                config: config()?,
            };
            let result = compare_to_dir(&spec, a.jobs, &a.out);
            Ok(finish(&a.out, result)?)
        }
        Command::Figures(a) => {
            let grids: Vec<FigureGrid> = if a.grid == "all" {
                FigureGrid::ALL.to_vec()
            } else {
                vec![FigureGrid::parse(&a.grid).ok_or_else(|| format!("unknown grid {:?}", a.grid))?]
            };
            let cluster = load_cluster(a.cluster.as_deref())?;
            let seeds = seeds_from(a.seed, a.seeds);
            let cfg = config()?;
            let mut failed = None;
            for g in grids {
                let spec = g.spec(cluster.clone(), seeds.clone(), cfg.clone());
                let dir = a.out.join(g.label());
                if let Err(e) = finish(&dir, compare_to_dir(&spec, a.jobs, &dir)) {
                    failed = Some(e);
                }
            }
            failed.map_or(Ok(()), |e| Err(e.into()))
        }
        Command::OracleCheck(a) => {
            let r = self_check(a.cases, a.seed);
            println!(
                "match vs brute force: {} cases, {} count mismatches, {} fragmentation mismatches (max diff {:.3e})",
                r.cases, r.match_count_mismatches, r.match_fragmentation_mismatches, r.max_fragmentation_diff
            );
            println!(
                "decision vs exact: {} cases, {} violations, mean gap {:.4}",
                r.allocation_cases, r.optimality_violations, r.mean_optimality_gap
            );
            println!("elapsed {} ms (budget {} s)", r.elapsed_ms, SELF_CHECK_BUDGET.as_secs());
            if r.passed() {
                Ok(())
            } else {
                Err("oracle check failed".into())
            }
        }
        Command::EmitFixtures { out } => {
            for f in emit_fixtures(&out)? {
                println!("wrote {f}");
            }
            Ok(())
        }
    }
}

fn finish(
    out: &Path,
    result: Result<edgesched::experiment::Comparison, ExperimentError>,
) -> Result<(), ExperimentError> {
    match result {
        Ok(cmp) => {
            report(out, &cmp);
            Ok(())
        }
        Err(ExperimentError::PartialFailure { failed, total }) => {
            if let Ok(text) = std::fs::read_to_string(out.join("runs.json")) {
                if let Ok(runs) = serde_json::from_str(&text) {
                    report(out, &edgesched::experiment::Comparison { runs, rows: Vec::new() });
                }
            }
            Err(ExperimentError::PartialFailure { failed, total })
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
