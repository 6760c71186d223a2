//! Experiment configuration: JSON schema, validation, and resolution of the
//! schedule defaults (β = 4.5σ², δ = T^(−2σ²/β), ν = √T) into concrete run
//! parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpopnet_core::benchmark::{self, SolveStatus, StaticSolution};
use dpopnet_core::feedback::NoiseModel;
use dpopnet_core::network::{builtin_topology, Network, NetworkFile, BUILTIN_TOPOLOGIES};
use dpopnet_core::policy::{self, PolicyMode, PolicyParams};
use dpopnet_core::simulate::ArrivalModel;

use crate::CliError;

/// A network reference: a builtin fixture name, a path to a network JSON
/// file, or the network inlined into the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkRef {
    Name(String),
    Inline(NetworkFile),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

fn default_seeds() -> u32 {
    1
}

fn default_arrivals() -> ArrivalModel {
    ArrivalModel::Poisson
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkRef,
    pub policy: PolicyMode,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(default = "default_seeds")]
    pub seeds: u32,
    #[serde(default)]
    pub base_seed: u64,
    pub noise: NoiseModel,
    #[serde(default = "default_arrivals")]
    pub arrivals: ArrivalModel,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Optional override of the commodity rates, declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    /// Horizon grid for the sweep subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<u64>>,
    /// Noise levels (σ, same parameterization as `noise.sigma`) for the
    /// sweep subcommand. Defaults to the configured noise level alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<Vec<f64>>,
    /// Slack used by the stability-interiority warning (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_eps: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", path.display())))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Resolve a network reference, applying a rates override if given.
pub fn resolve_network(reference: &NetworkRef, rates: Option<&[f64]>) -> Result<Network, CliError> {
    let net = match reference {
        NetworkRef::Name(name) => {
            if BUILTIN_TOPOLOGIES.contains(&name.as_str()) {
                builtin_topology(name).expect("name checked against the builtin list")
            } else {
                Network::from_file(Path::new(name)).map_err(|e| {
                    CliError::Config(format!(
                        "network {name:?} is neither a builtin topology ({}) nor a readable file: {e}",
                        BUILTIN_TOPOLOGIES.join(", ")
                    ))
                })?
            }
        }
        NetworkRef::Inline(file) => Network::from(file.clone()),
    };
    let net = match rates {
        Some(r) => net
            .with_rates(r)
            .map_err(|e| CliError::Config(e.to_string()))?,
        None => net,
    };
    let violations = net.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Config(format!(
            "network fails validation: {}",
            list.join("; ")
        )));
    }
    Ok(net)
}

/// A fully resolved experiment: network, schedule parameters, the static
/// benchmark solution, and the terminal cost actually used.
#[derive(Debug)]
pub struct ResolvedExperiment {
    pub network: Network,
    pub params: PolicyParams,
    pub noise: NoiseModel,
    pub arrivals: ArrivalModel,
    pub sigma: f64,
    pub terminal_cost: f64,
    pub static_solution: StaticSolution,
    pub seeds: u32,
    pub base_seed: u64,
}

/// Validate the config and fill in every omitted tuning parameter from the
/// schedule formulas. Fails (as a config error) when the static problem is
/// infeasible, since neither regret nor the static policy is defined then.
pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedExperiment, CliError> {
    if config.horizon == 0 {
        return Err(CliError::Config("T must be at least 1".into()));
    }
    if config.seeds == 0 {
        return Err(CliError::Config("seeds must be at least 1".into()));
    }
    let network = resolve_network(&config.network, config.rates.as_deref())?;
    let sigma = config.noise.sigma();
    if sigma < 0.0 {
        return Err(CliError::Config("noise sigma must be nonnegative".into()));
    }
    let beta = config.tuning.beta.unwrap_or_else(|| policy::default_beta(sigma));
    if beta < 0.0 {
        return Err(CliError::Config("beta must be nonnegative".into()));
    }
    let delta = config
        .tuning
        .delta
        .unwrap_or_else(|| policy::schedule_delta(config.horizon, beta, sigma));
    if !(0.0 < delta && delta < 1.0) {
        return Err(CliError::Config(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let nu = config
        .tuning
        .nu
        .unwrap_or_else(|| policy::default_nu(config.horizon));
    if nu < 0.0 {
        return Err(CliError::Config("nu must be nonnegative".into()));
    }

    let static_solution = benchmark::solve_static(&network)
        .map_err(|e| CliError::Runtime(format!("static LP failed: {e}")))?;
    if static_solution.status != SolveStatus::Optimal {
        return Err(CliError::Config(
            "static problem is infeasible: arrival rates are outside the stability region, \
             so regret (and the static policy) are undefined"
                .into(),
        ));
    }
    let terminal_cost = match config.c_b {
        Some(c_b) if c_b >= 0.0 => c_b,
        Some(c_b) => {
            return Err(CliError::Config(format!(
                "c_b must be nonnegative, got {c_b}"
            )))
        }
        None => benchmark::default_terminal_cost(&network)
            .map_err(|e| CliError::Config(format!("cannot derive a default C_B: {e}")))?,
    };

    // Strict-interiority advisory, independent of feasibility at eps = 0.
    let eps = config.stability_eps.unwrap_or(0.0);
    match network.is_stabilizable(eps) {
        Ok(Some(_)) => {}
        Ok(None) => log::warn!(
            "arrival rates are not stabilizable with slack eps = {eps}; \
             the run proceeds but queues may grow"
        ),
        Err(e) => return Err(CliError::Runtime(format!("stability check failed: {e}"))),
    }

    Ok(ResolvedExperiment {
        network,
        params: PolicyParams {
            nu,
            beta,
            delta,
            horizon: config.horizon,
            mode: config.policy,
        },
        noise: config.noise,
        arrivals: config.arrivals,
        sigma,
        terminal_cost,
        static_solution,
        seeds: config.seeds,
        base_seed: config.base_seed,
    })
}
