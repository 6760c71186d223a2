//! Subcommand implementations. Each command resolves its configuration,
//! runs the campaign via the core crate, writes its artifacts, and prints a
//! short human-readable line to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use dpopnet_core::benchmark::{self, SolveStatus};
use dpopnet_core::feedback::NoiseModel;
use dpopnet_core::network::Network;
use dpopnet_core::policy::{self, PolicyMode, PolicyParams};
use dpopnet_core::simulate::{
    self, fit_growth_exponent, seed_range, ReplicationSummary, RunConfig, SweepPoint,
};

use crate::config::{self, ExperimentConfig, NetworkRef, ResolvedExperiment};
use crate::CliError;

/// Flag overrides shared by the file-driven subcommands.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<u32>,
    pub base_seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(seeds) = self.seeds {
            config.seeds = seeds;
        }
        if let Some(base_seed) = self.base_seed {
            config.base_seed = base_seed;
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn replicate_resolved(resolved: &ResolvedExperiment) -> Result<ReplicationSummary, CliError> {
    let static_flow = match resolved.params.mode {
        PolicyMode::Static => resolved.static_solution.flow.as_ref(),
        _ => None,
    };
    let cfg = RunConfig {
        network: &resolved.network,
        params: resolved.params,
        noise: resolved.noise,
        arrivals: resolved.arrivals,
        terminal_cost: resolved.terminal_cost,
        static_value: resolved
            .static_solution
            .value
            .expect("resolve() requires an optimal static solution"),
        static_flow,
    };
    simulate::replicate(&cfg, &seed_range(resolved.base_seed, resolved.seeds))
        .map_err(|e| CliError::Runtime(e.to_string()))
}

pub struct RunArtifacts {
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub regret_mean: f64,
    pub regret_se: f64,
}

/// `run`: replicate one experiment, write the mean trace CSV and a summary
/// JSON, and print the regret.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunArtifacts, CliError> {
    let mut config = ExperimentConfig::from_file(config_path)?;
    overrides.apply(&mut config);
    let resolved = config::resolve(&config)?;
    let summary = replicate_resolved(&resolved)?;

    let dir = out_dir(&config);
    let trace_path = dir.join("trace.csv");
    write_file(&trace_path, &simulate::trace_csv(&summary, &resolved.network))?;

    let summary_json = json!({
        "policy": config.policy,
        "network": config.network,
        "T": config.horizon,
        "seeds": resolved.seeds,
        "base_seed": resolved.base_seed,
        "sigma": resolved.sigma,
        "beta": resolved.params.beta,
        "delta": resolved.params.delta,
        "nu": resolved.params.nu,
        "c_b": resolved.terminal_cost,
        "static_value": resolved.static_solution.value,
        "regret_mean": summary.regret_mean,
        "regret_se": summary.regret_se,
        "total_cost_mean": summary.total_cost_mean,
        "backlog_terminal_mean": summary.backlog_terminal_mean,
        "bootstrap_cost_mean": summary.bootstrap_cost_mean,
        "event_a_fraction": summary.event_a_fraction(),
    });
    let summary_path = dir.join("summary.json");
    write_file(
        &summary_path,
        &serde_json::to_string_pretty(&summary_json).expect("json"),
    )?;

    println!(
        "regret: {} (se {:.3}, {} seeds)",
        summary.regret_mean, summary.regret_se, summary.seeds
    );
    Ok(RunArtifacts {
        trace_path,
        summary_path,
        regret_mean: summary.regret_mean,
        regret_se: summary.regret_se,
    })
}

/// Short decimal form used in sweep filenames and the exponents table.
fn sigma_label(sigma: f64) -> String {
    let text = format!("{sigma:.6}");
    let trimmed = text.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

fn noise_with_sigma(base: &NoiseModel, sigma: f64) -> NoiseModel {
    match base {
        NoiseModel::Gaussian { .. } => NoiseModel::Gaussian { sigma },
        _ if sigma == 0.0 => NoiseModel::None,
        _ => NoiseModel::Uniform { sigma },
    }
}

#[derive(Debug)]
pub struct SweepArtifacts {
    pub summary_paths: Vec<PathBuf>,
    pub exponents_path: PathBuf,
    /// (sigma, fitted exponent, per-horizon points)
    pub series: Vec<(f64, Option<f64>, Vec<SweepPoint>)>,
}

/// `sweep`: independent replication campaigns over the (T, sigma) grid.
/// Emits one summary CSV per sigma (exact documented header) plus an
/// exponents table with the fitted log-log regret growth per sigma.
pub fn cmd_sweep(config_path: &Path, overrides: &Overrides) -> Result<SweepArtifacts, CliError> {
    let mut config = ExperimentConfig::from_file(config_path)?;
    overrides.apply(&mut config);
    let t_grid = config
        .t_grid
        .clone()
        .ok_or_else(|| CliError::Config("sweep requires a t_grid in the config".into()))?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "t_grid must be nonempty and strictly ascending".into(),
        ));
    }
    let sigmas = config
        .sigma_grid
        .clone()
        .unwrap_or_else(|| vec![config.noise.sigma()]);
    let base_resolved = config::resolve(&config)?;
    let seeds = seed_range(base_resolved.base_seed, base_resolved.seeds);
    let dir = out_dir(&config);

    let mut series = Vec::new();
    let mut summary_paths = Vec::new();
    for &sigma in &sigmas {
        if sigma < 0.0 {
            return Err(CliError::Config("sigma_grid entries must be nonnegative".into()));
        }
        let noise = noise_with_sigma(&config.noise, sigma);
        let beta = config.tuning.beta.unwrap_or_else(|| policy::default_beta(sigma));
        let points = simulate::horizon_sweep(&t_grid, &seeds, |horizon| RunConfig {
            network: &base_resolved.network,
            params: PolicyParams {
                nu: config.tuning.nu.unwrap_or_else(|| policy::default_nu(horizon)),
                beta,
                delta: config
                    .tuning
                    .delta
                    .unwrap_or_else(|| policy::schedule_delta(horizon, beta, sigma)),
                horizon,
                mode: config.policy,
            },
            noise,
            arrivals: config.arrivals,
            terminal_cost: base_resolved.terminal_cost,
            static_value: base_resolved.static_solution.value.expect("optimal"),
            static_flow: match config.policy {
                PolicyMode::Static => base_resolved.static_solution.flow.as_ref(),
                _ => None,
            },
        })
        .map_err(|e| CliError::Runtime(e.to_string()))?;

        let path = dir.join(format!("sweep_sigma_{}.csv", sigma_label(sigma)));
        write_file(&path, &simulate::sweep_csv(&points))?;
        summary_paths.push(path);
        let exponent = fit_growth_exponent(&points);
        series.push((sigma, exponent, points));
    }

    let mut exponents = String::from("sigma,exponent\n");
    for (sigma, exponent, _) in &series {
        let value = exponent.unwrap_or(f64::NAN);
        exponents.push_str(&format!("{},{value:.3}\n", sigma_label(*sigma)));
        println!("sigma {}: fitted growth exponent {value:.3}", sigma_label(*sigma));
    }
    let exponents_path = dir.join("exponents.csv");
    write_file(&exponents_path, &exponents)?;

    Ok(SweepArtifacts {
        summary_paths,
        exponents_path,
        series,
    })
}

/// `lp`: solve the static problem for a network file (or builtin name) and
/// print `{value, flow, status}` as JSON. An infeasible instance is a valid
/// answer, not an error.
pub fn cmd_lp(network_ref: &str) -> Result<serde_json::Value, CliError> {
    let net = config::resolve_network(&NetworkRef::Name(network_ref.to_string()), None)?;
    let solution = benchmark::solve_static(&net)
        .map_err(|e| CliError::Runtime(format!("LP solve failed: {e}")))?;
    let value = match solution.status {
        SolveStatus::Optimal => {
            let flow = solution.flow.as_ref().expect("optimal has a flow");
            let mut entries = Vec::new();
            for (e, spec) in net.edges().iter().enumerate() {
                for k in 0..net.num_classes() {
                    let rate = flow.rate(e, k);
                    if rate > 1e-12 {
                        entries.push(json!({
                            "i": spec.tail,
                            "j": spec.head,
                            "dst": net.class_dst(k),
                            "rate": rate,
                        }));
                    }
                }
            }
            json!({
                "status": "optimal",
                "value": solution.value,
                "flow": entries,
            })
        }
        SolveStatus::Infeasible => json!({"status": "infeasible"}),
        SolveStatus::UnboundedGuard => json!({"status": "unbounded_guard"}),
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(value)
}

pub const REPRO_FIGURES: [&str; 4] = [
    "cost_curve",
    "backlog_curve",
    "utilization",
    "regret_sweep",
];

const REPRO_HORIZON: u64 = 10_000;
const REPRO_SEEDS: u32 = 100;
const REPRO_SIGMA_SQ: f64 = 0.05;
const REPRO_SIGMA_SQ_GRID: [f64; 4] = [0.0, 0.01, 0.05, 0.1];
const REPRO_T_GRID: [u64; 5] = [1000, 2000, 4000, 8000, 16000];

struct ReproBench {
    network: Network,
    static_value: f64,
    terminal_cost: f64,
}

impl ReproBench {
    fn new() -> Result<ReproBench, CliError> {
        let network = config::resolve_network(&NetworkRef::Name("single9".into()), None)?;
        let solution = benchmark::solve_static(&network)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let terminal_cost = benchmark::default_terminal_cost(&network)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(ReproBench {
            static_value: solution.value.expect("single9 default rates are feasible"),
            terminal_cost,
            network,
        })
    }

    fn config(&self, horizon: u64, sigma_sq: f64, mode: PolicyMode) -> RunConfig<'_> {
        let sigma = sigma_sq.sqrt();
        let beta = policy::default_beta(sigma);
        RunConfig {
            network: &self.network,
            params: PolicyParams {
                nu: policy::default_nu(horizon),
                beta,
                delta: policy::schedule_delta(horizon, beta, sigma),
                horizon,
                mode,
            },
            noise: if sigma == 0.0 {
                NoiseModel::None
            } else {
                NoiseModel::Uniform { sigma }
            },
            arrivals: dpopnet_core::simulate::ArrivalModel::Poisson,
            terminal_cost: self.terminal_cost,
            static_value: self.static_value,
            static_flow: None,
        }
    }
}

/// `repro <figure>`: canned desk-scale campaign emitting one plot-ready CSV.
pub fn cmd_repro(figure: &str, overrides: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    if !REPRO_FIGURES.contains(&figure) {
        return Err(CliError::Config(format!(
            "unknown figure {figure:?}; expected one of: {}",
            REPRO_FIGURES.join(", ")
        )));
    }
    let bench = ReproBench::new()?;
    let dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let seeds = seed_range(
        overrides.base_seed.unwrap_or(1),
        overrides.seeds.unwrap_or(REPRO_SEEDS),
    );

    let replicate = |mode: PolicyMode| -> Result<ReplicationSummary, CliError> {
        simulate::replicate(&bench.config(REPRO_HORIZON, REPRO_SIGMA_SQ, mode), &seeds)
            .map_err(|e| CliError::Runtime(e.to_string()))
    };

    let written = match figure {
        "cost_curve" | "backlog_curve" => {
            let dpop = replicate(PolicyMode::Dpop)?;
            let doubling = replicate(PolicyMode::DpopDoubling)?;
            let oracle = replicate(PolicyMode::Oracle)?;
            let pick = |s: &ReplicationSummary, i: usize| -> f64 {
                if figure == "cost_curve" {
                    s.mean_cost[i]
                } else {
                    s.mean_backlog[i]
                }
            };
            let mut csv = String::from("t,dpop,dpop_doubling,oracle\n");
            for i in 0..REPRO_HORIZON as usize {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    i + 1,
                    pick(&dpop, i),
                    pick(&doubling, i),
                    pick(&oracle, i)
                ));
            }
            let path = dir.join(format!("{figure}.csv"));
            write_file(&path, &csv)?;
            vec![path]
        }
        "utilization" => {
            let dpop = replicate(PolicyMode::Dpop)?;
            let oracle = replicate(PolicyMode::Oracle)?;
            let horizon = REPRO_HORIZON as usize;
            let tenth = horizon / 10 - 1;
            let last = horizon - 1;
            let e_count = bench.network.num_edges();
            let mut edges: Vec<usize> = (0..e_count).collect();
            edges.sort_by(|&a, &b| {
                oracle.mean_util[last * e_count + b]
                    .total_cmp(&oracle.mean_util[last * e_count + a])
            });
            edges.truncate(8);
            let mut csv = String::from("edge,oracle_t_full,dpop_t_tenth,dpop_t_full\n");
            for &e in &edges {
                let spec = &bench.network.edges()[e];
                csv.push_str(&format!(
                    "{}_{},{},{},{}\n",
                    spec.tail,
                    spec.head,
                    oracle.mean_util[last * e_count + e],
                    dpop.mean_util[tenth * e_count + e],
                    dpop.mean_util[last * e_count + e]
                ));
            }
            let path = dir.join("utilization.csv");
            write_file(&path, &csv)?;
            vec![path]
        }
        "regret_sweep" => {
            let mut columns: Vec<(f64, Vec<SweepPoint>)> = Vec::new();
            for &sigma_sq in &REPRO_SIGMA_SQ_GRID {
                let points = simulate::horizon_sweep(&REPRO_T_GRID, &seeds, |h| {
                    bench.config(h, sigma_sq, PolicyMode::Dpop)
                })
                .map_err(|e| CliError::Runtime(e.to_string()))?;
                columns.push((sigma_sq, points));
            }
            // Reference curve a·√T·ln T, least squares against the noisiest
            // series.
            let noisiest = &columns.last().expect("nonempty grid").1;
            let (mut num, mut den) = (0.0, 0.0);
            for p in noisiest {
                let f = (p.horizon as f64).sqrt() * (p.horizon as f64).ln();
                num += f * p.regret_mean;
                den += f * f;
            }
            let scale = if den > 0.0 { num / den } else { 0.0 };

            let mut header = String::from("T");
            for (sigma_sq, _) in &columns {
                header.push_str(&format!(",regret_s2_{}", sigma_label(*sigma_sq)));
            }
            header.push_str(",ref_sqrt_t_log_t\n");
            let mut csv = header;
            for (row, &horizon) in REPRO_T_GRID.iter().enumerate() {
                csv.push_str(&format!("{horizon}"));
                for (_, points) in &columns {
                    csv.push_str(&format!(",{}", points[row].regret_mean));
                }
                let t = horizon as f64;
                csv.push_str(&format!(",{}\n", scale * t.sqrt() * t.ln()));
            }
            let path = dir.join("regret_sweep.csv");
            write_file(&path, &csv)?;
            vec![path]
        }
        _ => unreachable!("figure validated above"),
    };
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(written)
}
