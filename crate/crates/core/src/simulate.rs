//! The per-slot simulation loop, seeded arrival generation, metric
//! collection, and multi-seed replication.
//!
//! Slot order (after the t = 0 exploration round for adaptive modes):
//! compute cost estimates, decide the plan, clip to queue feasibility,
//! apply arrivals, observe costs, update the estimator, record metrics.
//!
//! Determinism: `(config, seed)` fully determines a trace. Each run draws
//! arrivals and observation noise from two independent sub-streams of one
//! ChaCha8 generator, so policies that make identical decisions see
//! identical arrival sequences regardless of how much noise they consume.
//! Replications run in parallel but aggregate in seed order with compensated
//! summation, so summaries do not depend on completion order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{self, EstimatorError};
use crate::feedback::{self, CostLedger, NoiseModel};
use crate::network::{FlowAssignment, Network};
use crate::policy::{self, DoublingSchedule, PolicyMode, PolicyParams};
use crate::queueing::{self, Arrivals, QueueError, QueueState};

/// Seeds processed per parallel batch; bounds peak trace memory while
/// keeping all cores busy.
const REPLICATION_BATCH: usize = 32;

/// Per-commodity arrival process. The rate always comes from the network's
/// commodity declaration; `truncated_poisson` caps each draw at `a_max`
/// (default: 10λ rounded up), which keeps arrivals bounded as the queueing
/// model assumes while staying close to a plain Poisson stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalModel {
    Poisson,
    TruncatedPoisson { a_max: Option<f64> },
    Deterministic,
}

struct ArrivalEntry {
    node: usize,
    class: usize,
    rate: f64,
    dist: Option<Poisson<f64>>,
    cap: f64,
}

struct ArrivalSampler {
    entries: Vec<ArrivalEntry>,
    deterministic: bool,
}

impl ArrivalSampler {
    fn new(net: &Network, model: &ArrivalModel) -> Self {
        let deterministic = matches!(model, ArrivalModel::Deterministic);
        let entries = net
            .commodities()
            .iter()
            .filter_map(|c| {
                let class = net.class_of(c.dst)?;
                let dist = if deterministic || c.rate <= 0.0 {
                    None
                } else {
                    Some(Poisson::new(c.rate).expect("positive finite rate"))
                };
                let cap = match model {
                    ArrivalModel::TruncatedPoisson { a_max } => {
                        a_max.unwrap_or((10.0 * c.rate).ceil())
                    }
                    _ => f64::INFINITY,
                };
                Some(ArrivalEntry {
                    node: c.src,
                    class,
                    rate: c.rate,
                    dist,
                    cap,
                })
            })
            .collect();
        ArrivalSampler {
            entries,
            deterministic,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, net: &Network, rng: &mut R) -> Arrivals {
        let mut arrivals = Arrivals::zero(net);
        for entry in &self.entries {
            let amount = if self.deterministic {
                entry.rate
            } else {
                match &entry.dist {
                    Some(d) => d.sample(rng).min(entry.cap),
                    None => 0.0,
                }
            };
            arrivals.add(entry.node, entry.class, amount);
        }
        arrivals
    }
}

/// Independent RNG sub-streams of one seed.
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    Arrivals = 0,
    Noise = 1,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Everything a single run needs. `static_value` is T-independent (cost per
/// slot of the static optimum) and is computed once by the caller.
#[derive(Debug, Clone)]
pub struct RunConfig<'a> {
    pub network: &'a Network,
    pub params: PolicyParams,
    pub noise: NoiseModel,
    pub arrivals: ArrivalModel,
    /// Terminal backlog charge C_B.
    pub terminal_cost: f64,
    /// Static optimum P(λ), the per-slot benchmark cost.
    pub static_value: f64,
    /// Required for `PolicyMode::Static`.
    pub static_flow: Option<&'a FlowAssignment>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("slot {slot}: {source}")]
    Queue {
        slot: u64,
        #[source]
        source: QueueError,
    },
    #[error("slot {slot}: {source}")]
    Estimator {
        slot: u64,
        #[source]
        source: EstimatorError,
    },
    #[error("static mode requires a precomputed static flow")]
    MissingStaticFlow,
    #[error("horizon grid must be nonempty and strictly ascending")]
    BadGrid,
    #[error("replication requires at least one seed")]
    NoSeeds,
    #[error("run with seed {seed} failed: {source}")]
    InSeed {
        seed: u64,
        #[source]
        source: Box<RunError>,
    },
}

/// One slot's metric record. `util` holds per-edge cumulative utilization
/// Σ_τ≤t Σ_k μ(τ) / (t · cap), one entry per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub cost: f64,
    pub backlog: f64,
    pub lyapunov: f64,
    pub event_a: bool,
    pub util: Vec<f64>,
}

/// Full per-slot trace plus terminal figures for one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<SlotRecord>,
    /// C(T): transmission cost plus the terminal backlog charge.
    pub total_cost: f64,
    pub transmission_cost: f64,
    pub terminal_backlog: f64,
    pub regret: f64,
    /// Exploration-round cost, excluded from `total_cost` and `regret`.
    pub bootstrap_cost: f64,
}

/// Execute one seeded run of `cfg.params.horizon` slots.
pub fn run_one(cfg: &RunConfig, seed: u64) -> Result<RunTrace, RunError> {
    let net = cfg.network;
    let horizon = cfg.params.horizon;
    let mut arrival_rng = stream_rng(seed, RngStream::Arrivals);
    let mut noise_rng = stream_rng(seed, RngStream::Noise);
    let sampler = ArrivalSampler::new(net, &cfg.arrivals);
    let sigma = cfg.noise.sigma();

    let mut ledger = CostLedger::new(cfg.terminal_cost);
    let mut est = if cfg.params.mode.needs_estimator() {
        let (est, bootstrap_cost) = estimator::bootstrap(
            net,
            &cfg.noise,
            &mut noise_rng,
            cfg.params.beta,
            cfg.params.delta,
        );
        ledger.bootstrap_cost = bootstrap_cost;
        Some(est)
    } else {
        None
    };
    let mut doubling = matches!(cfg.params.mode, PolicyMode::DpopDoubling)
        .then(|| DoublingSchedule::new(cfg.params.beta, sigma));
    let static_plan = match cfg.params.mode {
        PolicyMode::Static => Some(policy::static_decide(
            net,
            cfg.static_flow.ok_or(RunError::MissingStaticFlow)?,
        )),
        _ => None,
    };

    let mut state = QueueState::new(net);
    let mut records = Vec::with_capacity(horizon as usize);
    let mut util_acc = vec![0.0f64; net.num_edges()];

    for t in 1..=horizon {
        let slot_params = match &mut doubling {
            Some(schedule) => {
                let p = schedule.params_at(t, &cfg.params);
                if let Some(est) = &mut est {
                    est.set_delta(p.delta);
                }
                p
            }
            None => cfg.params,
        };
        // Diagnostic snapshot before the slot's updates, matching the
        // statistics the decision is about to use.
        let event_a = match &est {
            Some(est) => est.confidence_event_holds(net, t),
            None => true,
        };
        let plan = match cfg.params.mode {
            PolicyMode::Dpop | PolicyMode::DpopDoubling => {
                let est = est.as_ref().expect("adaptive mode bootstraps an estimator");
                policy::dpop_decide(net, &state, est, &slot_params, t)
                    .map_err(|source| RunError::Estimator { slot: t, source })?
            }
            PolicyMode::Oracle => policy::oracle_decide(net, &state, &slot_params),
            PolicyMode::Static => static_plan.clone().expect("static plan prepared above"),
        };
        let actual = queueing::clip_to_queues(net, &state, &plan);
        let arrivals = sampler.sample(net, &mut arrival_rng);
        state = queueing::step(net, &state, &actual, &arrivals)
            .map_err(|source| RunError::Queue { slot: t, source })?;
        feedback::accrue(&mut ledger, &plan, net);
        if let Some(est) = &mut est {
            for (edge, observation) in feedback::observe(net, &plan, &cfg.noise, &mut noise_rng) {
                est.update(edge, observation);
            }
        }
        let util = net
            .edges()
            .iter()
            .enumerate()
            .map(|(e, spec)| {
                util_acc[e] += plan.total_on_edge(e);
                util_acc[e] / (t as f64 * spec.capacity)
            })
            .collect();
        records.push(SlotRecord {
            t,
            cost: *ledger.per_slot.last().expect("accrued this slot"),
            backlog: state.total_backlog(),
            lyapunov: state.lyapunov(),
            event_a,
            util,
        });
    }

    let total_cost = feedback::finalize(&ledger, &state);
    Ok(RunTrace {
        total_cost,
        transmission_cost: ledger.cumulative,
        terminal_backlog: state.total_backlog(),
        regret: total_cost - horizon as f64 * cfg.static_value,
        bootstrap_cost: ledger.bootstrap_cost,
        records,
    })
}

// --- Aggregation -------------------------------------------------------------

/// Neumaier-compensated running sum; immune to the usual cancellation when
/// accumulating thousands of per-slot values.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Across-seed means of every per-slot metric plus terminal aggregates.
#[derive(Debug, Clone)]
pub struct ReplicationSummary {
    pub seeds: usize,
    pub horizon: u64,
    pub num_edges: usize,
    pub mean_cost: Vec<f64>,
    pub mean_backlog: Vec<f64>,
    pub mean_lyapunov: Vec<f64>,
    /// Fraction of seeds whose confidence event held, per slot.
    pub event_a_rate: Vec<f64>,
    /// Row-major horizon × num_edges mean cumulative utilization.
    pub mean_util: Vec<f64>,
    pub regret_mean: f64,
    pub regret_se: f64,
    pub backlog_terminal_mean: f64,
    pub backlog_terminal_se: f64,
    pub total_cost_mean: f64,
    pub total_cost_se: f64,
    pub bootstrap_cost_mean: f64,
}

impl ReplicationSummary {
    /// Fraction of (slot, seed) pairs on which the confidence event held.
    pub fn event_a_fraction(&self) -> f64 {
        if self.event_a_rate.is_empty() {
            return 1.0;
        }
        self.event_a_rate.iter().sum::<f64>() / self.event_a_rate.len() as f64
    }

    /// Mean per-slot cost over the trailing `fraction` of the horizon.
    pub fn tail_mean_cost(&self, fraction: f64) -> f64 {
        let n = self.mean_cost.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        self.mean_cost[n - take..].iter().sum::<f64>() / take as f64
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(*v);
    }
    let mean = acc.value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

struct TraceAccumulator {
    horizon: usize,
    num_edges: usize,
    cost: Vec<CompensatedSum>,
    backlog: Vec<CompensatedSum>,
    lyapunov: Vec<CompensatedSum>,
    event_a: Vec<CompensatedSum>,
    util: Vec<CompensatedSum>,
    regrets: Vec<f64>,
    terminal_backlogs: Vec<f64>,
    total_costs: Vec<f64>,
    bootstrap_costs: Vec<f64>,
}

impl TraceAccumulator {
    fn new(horizon: usize, num_edges: usize) -> Self {
        TraceAccumulator {
            horizon,
            num_edges,
            cost: vec![CompensatedSum::default(); horizon],
            backlog: vec![CompensatedSum::default(); horizon],
            lyapunov: vec![CompensatedSum::default(); horizon],
            event_a: vec![CompensatedSum::default(); horizon],
            util: vec![CompensatedSum::default(); horizon * num_edges],
            regrets: Vec::new(),
            terminal_backlogs: Vec::new(),
            total_costs: Vec::new(),
            bootstrap_costs: Vec::new(),
        }
    }

    fn add(&mut self, trace: &RunTrace) {
        debug_assert_eq!(trace.records.len(), self.horizon);
        for (i, rec) in trace.records.iter().enumerate() {
            self.cost[i].add(rec.cost);
            self.backlog[i].add(rec.backlog);
            self.lyapunov[i].add(rec.lyapunov);
            self.event_a[i].add(if rec.event_a { 1.0 } else { 0.0 });
            for (e, u) in rec.util.iter().enumerate() {
                self.util[i * self.num_edges + e].add(*u);
            }
        }
        self.regrets.push(trace.regret);
        self.terminal_backlogs.push(trace.terminal_backlog);
        self.total_costs.push(trace.total_cost);
        self.bootstrap_costs.push(trace.bootstrap_cost);
    }

    fn finish(self, horizon: u64) -> ReplicationSummary {
        let n = self.regrets.len() as f64;
        let scale = |sums: Vec<CompensatedSum>| -> Vec<f64> {
            sums.into_iter().map(|s| s.value() / n).collect()
        };
        let (regret_mean, regret_se) = mean_se(&self.regrets);
        let (backlog_terminal_mean, backlog_terminal_se) = mean_se(&self.terminal_backlogs);
        let (total_cost_mean, total_cost_se) = mean_se(&self.total_costs);
        let (bootstrap_cost_mean, _) = mean_se(&self.bootstrap_costs);
        ReplicationSummary {
            seeds: self.regrets.len(),
            horizon,
            num_edges: self.num_edges,
            mean_cost: scale(self.cost),
            mean_backlog: scale(self.backlog),
            mean_lyapunov: scale(self.lyapunov),
            event_a_rate: scale(self.event_a),
            mean_util: scale(self.util),
            regret_mean,
            regret_se,
            backlog_terminal_mean,
            backlog_terminal_se,
            total_cost_mean,
            total_cost_se,
            bootstrap_cost_mean,
        }
    }
}

/// Run one seeded replication per entry of `seeds` (in parallel) and
/// aggregate across-seed means and standard errors. Results are identical
/// for any thread schedule: traces are folded in seed order.
pub fn replicate(cfg: &RunConfig, seeds: &[u64]) -> Result<ReplicationSummary, RunError> {
    if seeds.is_empty() {
        return Err(RunError::NoSeeds);
    }
    let mut acc = TraceAccumulator::new(cfg.params.horizon as usize, cfg.network.num_edges());
    for batch in seeds.chunks(REPLICATION_BATCH) {
        let traces: Result<Vec<RunTrace>, RunError> = batch
            .par_iter()
            .map(|&seed| {
                run_one(cfg, seed).map_err(|source| RunError::InSeed {
                    seed,
                    source: Box::new(source),
                })
            })
            .collect();
        for trace in traces? {
            acc.add(&trace);
        }
    }
    Ok(acc.finish(cfg.params.horizon))
}

/// One row of a horizon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub horizon: u64,
    pub regret_mean: f64,
    pub regret_se: f64,
    pub backlog_terminal_mean: f64,
    pub backlog_terminal_se: f64,
    pub total_cost_mean: f64,
}

/// Independent replication campaign per horizon in `grid` (fresh policy and
/// estimator each time; the caller's `make_config` re-derives per-horizon
/// tuning such as ν = √T).
pub fn horizon_sweep<'a, F>(
    grid: &[u64],
    seeds: &[u64],
    mut make_config: F,
) -> Result<Vec<SweepPoint>, RunError>
where
    F: FnMut(u64) -> RunConfig<'a>,
{
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RunError::BadGrid);
    }
    let mut out = Vec::with_capacity(grid.len());
    for &horizon in grid {
        let cfg = make_config(horizon);
        debug_assert_eq!(cfg.params.horizon, horizon);
        let summary = replicate(&cfg, seeds)?;
        out.push(SweepPoint {
            horizon,
            regret_mean: summary.regret_mean,
            regret_se: summary.regret_se,
            backlog_terminal_mean: summary.backlog_terminal_mean,
            backlog_terminal_se: summary.backlog_terminal_se,
            total_cost_mean: summary.total_cost_mean,
        });
    }
    Ok(out)
}

/// SE-weighted least-squares slope of ln(regret) against ln(T). Points with
/// non-positive mean regret cannot enter the log fit and are skipped.
/// Returns None with fewer than two usable points.
pub fn fit_growth_exponent(points: &[SweepPoint]) -> Option<f64> {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.regret_mean > 0.0)
        .map(|p| {
            let weight = if p.regret_se > 0.0 {
                let rel = p.regret_mean / p.regret_se;
                rel * rel
            } else {
                1.0
            };
            ((p.horizon as f64).ln(), p.regret_mean.ln(), weight)
        })
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let wsum: f64 = usable.iter().map(|(_, _, w)| w).sum();
    let xbar: f64 = usable.iter().map(|(x, _, w)| w * x).sum::<f64>() / wsum;
    let ybar: f64 = usable.iter().map(|(_, y, w)| w * y).sum::<f64>() / wsum;
    let num: f64 = usable
        .iter()
        .map(|(x, y, w)| w * (x - xbar) * (y - ybar))
        .sum();
    let den: f64 = usable.iter().map(|(x, _, w)| w * (x - xbar) * (x - xbar)).sum();
    (den > 0.0).then(|| num / den)
}

// --- CSV emission ------------------------------------------------------------

/// Exact trace header: `t,cost,backlog,lyapunov,eventA` plus one
/// `util_<i>_<j>` column per edge in id order.
pub fn trace_csv_header(net: &Network) -> String {
    let mut header = String::from("t,cost,backlog,lyapunov,eventA");
    for spec in net.edges() {
        header.push_str(&format!(",util_{}_{}", spec.tail, spec.head));
    }
    header
}

/// Per-slot mean trace as CSV (across-seed means; eventA becomes the
/// fraction of seeds on which the event held).
pub fn trace_csv(summary: &ReplicationSummary, net: &Network) -> String {
    let mut out = trace_csv_header(net);
    out.push('\n');
    for i in 0..summary.horizon as usize {
        out.push_str(&format!(
            "{},{},{},{},{}",
            i + 1,
            summary.mean_cost[i],
            summary.mean_backlog[i],
            summary.mean_lyapunov[i],
            summary.event_a_rate[i]
        ));
        for e in 0..summary.num_edges {
            out.push_str(&format!(",{}", summary.mean_util[i * summary.num_edges + e]));
        }
        out.push('\n');
    }
    out
}

pub const SWEEP_CSV_HEADER: &str = "T,regret_mean,regret_se,backlog_T_mean,cost_total_mean";

/// Horizon-sweep summary as CSV with the exact documented header.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.horizon, p.regret_mean, p.regret_se, p.backlog_terminal_mean, p.total_cost_mean
        ));
    }
    out
}

/// Install a global worker pool of `threads` threads (no-op when the pool
/// already exists, e.g. in tests).
pub fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Convenience: the seed list `base, base+1, …` of length `count`.
pub fn seed_range(base: u64, count: u32) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}
