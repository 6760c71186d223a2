//! Acceptance suite: every release criterion as one test, each printing a
//! pass/fail line (run with `--nocapture` to see them all). Heavy
//! replication campaigns are computed once and shared across criteria.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpopnet_core::benchmark::{self, SolveStatus};
use dpopnet_core::estimator::CostEstimator;
use dpopnet_core::feedback::NoiseModel;
use dpopnet_core::network::{builtin_topology, Commodity, Edge, Network};
use dpopnet_core::policy::{self, PolicyMode, PolicyParams};
use dpopnet_core::queueing::{self, Arrivals, QueueState, TransmissionPlan};
use dpopnet_core::simplex::{self, LpOutcome, StandardForm};
use dpopnet_core::simulate::{
    self, fit_growth_exponent, replicate, run_one, seed_range, ArrivalModel, ReplicationSummary,
    RunConfig, SweepPoint,
};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {id:02} {name}: {status} ({detail})");
    assert!(pass, "acceptance {id:02} {name} failed: {detail}");
}

/// Schedule-derived parameters: β = 4.5σ², δ = T^(−2σ²/β), ν = √T.
fn theorem_params(horizon: u64, sigma: f64, mode: PolicyMode) -> PolicyParams {
    let beta = policy::default_beta(sigma);
    PolicyParams {
        nu: policy::default_nu(horizon),
        beta,
        delta: policy::schedule_delta(horizon, beta, sigma),
        horizon,
        mode,
    }
}

struct Bench {
    network: Network,
    static_value: f64,
    terminal_cost: f64,
}

impl Bench {
    fn new(name: &str) -> Bench {
        Bench::from_network(builtin_topology(name).unwrap())
    }

    fn with_rates(name: &str, rates: &[f64]) -> Bench {
        Bench::from_network(builtin_topology(name).unwrap().with_rates(rates).unwrap())
    }

    fn from_network(network: Network) -> Bench {
        let solution = benchmark::solve_static(&network).unwrap();
        assert_eq!(solution.status, SolveStatus::Optimal);
        Bench {
            static_value: solution.value.unwrap(),
            terminal_cost: benchmark::default_terminal_cost(&network).unwrap(),
            network,
        }
    }

    fn config(&self, horizon: u64, sigma: f64, mode: PolicyMode) -> RunConfig<'_> {
        RunConfig {
            network: &self.network,
            params: theorem_params(horizon, sigma, mode),
            noise: if sigma == 0.0 {
                NoiseModel::None
            } else {
                NoiseModel::Uniform { sigma }
            },
            arrivals: ArrivalModel::Poisson,
            terminal_cost: self.terminal_cost,
            static_value: self.static_value,
            static_flow: None,
        }
    }
}

fn single9_bench() -> &'static Bench {
    static CELL: OnceLock<Bench> = OnceLock::new();
    CELL.get_or_init(|| Bench::new("single9"))
}

const SIGMA_SQ_MAIN: f64 = 0.05;

fn sigma_main() -> f64 {
    SIGMA_SQ_MAIN.sqrt()
}

/// DPOP horizon sweep on single9: grid {1k, 2k, 4k, 8k, 16k}, σ² = 0.05,
/// 100 seeds per horizon. Shared by the regret-growth and rate-stability
/// criteria.
fn single9_sweep() -> &'static Vec<SweepPoint> {
    static CELL: OnceLock<Vec<SweepPoint>> = OnceLock::new();
    CELL.get_or_init(|| {
        let bench = single9_bench();
        simulate::horizon_sweep(&[1000, 2000, 4000, 8000, 16000], &seed_range(1, 100), |h| {
            bench.config(h, sigma_main(), PolicyMode::Dpop)
        })
        .unwrap()
    })
}

fn summary_10k(mode: PolicyMode) -> ReplicationSummary {
    let bench = single9_bench();
    replicate(&bench.config(10_000, sigma_main(), mode), &seed_range(1, 100)).unwrap()
}

fn dpop_10k() -> &'static ReplicationSummary {
    static CELL: OnceLock<ReplicationSummary> = OnceLock::new();
    CELL.get_or_init(|| summary_10k(PolicyMode::Dpop))
}

fn oracle_10k() -> &'static ReplicationSummary {
    static CELL: OnceLock<ReplicationSummary> = OnceLock::new();
    CELL.get_or_init(|| summary_10k(PolicyMode::Oracle))
}

/// `later` is considered no larger than `earlier` when it does not exceed it
/// by more than one combined standard error.
fn decreasing_within_se(earlier: f64, earlier_se: f64, later: f64, later_se: f64) -> bool {
    later <= earlier + (earlier_se * earlier_se + later_se * later_se).sqrt()
}

#[test]
fn criterion_01_lp_matches_min_cost_flow_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let net = random_single_commodity(&mut rng);
        let lp = benchmark::solve_static(&net).unwrap();
        let mcf = benchmark::min_cost_flow_oracle(&net).unwrap();
        assert_eq!(lp.status, SolveStatus::Optimal);
        assert_eq!(mcf.status, SolveStatus::Optimal);
        worst = worst.max((lp.value.unwrap() - mcf.value.unwrap()).abs());
    }
    let elapsed = started.elapsed();
    report(
        1,
        "lp correctness",
        worst < 1e-6 && elapsed.as_secs_f64() < 10.0,
        &format!(
            "100 random networks, worst value gap {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_greedy_decision_matches_lp() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let net = random_two_commodity_net(&mut rng);
        let mut est = CostEstimator::empty(
            net.num_edges(),
            rng.random_range(0.0..2.0),
            rng.random_range(0.05..0.95),
        );
        for e in 0..net.num_edges() {
            for _ in 0..rng.random_range(1..=4) {
                est.update(e, rng.random_range(0.0..3.0));
            }
        }
        let mut state = QueueState::new(&net);
        for n in 0..net.num_nodes() {
            for k in 0..net.num_classes() {
                if net.class_dst(k) != n {
                    state.set_backlog(n, k, rng.random_range(0.0..50.0));
                }
            }
        }
        let t = rng.random_range(2..500);
        let params = PolicyParams {
            nu: rng.random_range(0.0..20.0),
            beta: est.beta(),
            delta: est.delta(),
            horizon: 1000,
            mode: PolicyMode::Dpop,
        };
        let plan = policy::dpop_decide(&net, &state, &est, &params, t).unwrap();
        assert!(plan.respects_capacity(&net, 1e-12));
        let costs = est.lcb_all(t).unwrap();
        let weights = policy::edge_weights(&net, &state, &costs, params.nu);
        let greedy = policy::plan_objective(&plan, &weights);
        let lp = decision_lp_objective(&net, &weights);
        worst = worst.max((greedy - lp).abs());
    }
    let elapsed = started.elapsed();
    report(
        2,
        "decision correctness",
        worst <= 1e-9 && elapsed.as_secs_f64() < 30.0,
        &format!(
            "1000 random instances, worst objective gap {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_queue_invariants_over_random_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let nets = [
        builtin_topology("single9").unwrap(),
        builtin_topology("multi12").unwrap(),
        builtin_topology("parallel2").unwrap(),
    ];
    let mut steps = 0usize;
    for net in &nets {
        let mut state = QueueState::new(net);
        for _ in 0..4000 {
            // Dyadic rates (multiples of 1/8) keep every f64 operation
            // exact, so conservation can be asserted as equality.
            let mut plan = TransmissionPlan::zero(net);
            for e in 0..net.num_edges() {
                let mut left = net.edges()[e].capacity;
                for k in 0..net.num_classes() {
                    let want = (rng.random_range(0u32..40) as f64 / 8.0).min(left);
                    plan.set_rate(e, k, want);
                    left -= want;
                }
            }
            assert!(plan.respects_capacity(net, 0.0), "plan violates capacity");
            let actual = queueing::clip_to_queues(net, &state, &plan);
            assert!(
                actual.real.respects_capacity(net, 0.0),
                "actual transmissions violate capacity"
            );
            for e in 0..net.num_edges() {
                for k in 0..net.num_classes() {
                    let sent = actual.real.rate(e, k) + actual.dummy.rate(e, k);
                    assert_eq!(sent, plan.rate(e, k), "real+dummy must equal the plan");
                }
            }
            let mut arrivals = Arrivals::zero(net);
            for n in 0..net.num_nodes() {
                for k in 0..net.num_classes() {
                    if net.class_dst(k) != n && rng.random_bool(0.3) {
                        arrivals.add(n, k, rng.random_range(0u32..24) as f64 / 8.0);
                    }
                }
            }
            state = queueing::step(net, &state, &actual, &arrivals).unwrap();
            for n in 0..net.num_nodes() {
                for k in 0..net.num_classes() {
                    assert!(state.backlog(n, k) >= 0.0, "negative backlog");
                }
            }
            assert_eq!(
                state.arrived,
                state.delivered + state.total_backlog(),
                "conservation must hold exactly"
            );
            steps += 1;
        }
    }
    report(
        3,
        "queue invariants",
        steps >= 10_000,
        &format!("{steps} random steps, zero violations"),
    );
}

#[test]
fn criterion_04_noiseless_zero_beta_reduces_to_oracle() {
    let bench = single9_bench();
    let horizon = 1000;
    let mut dpop_cfg = bench.config(horizon, 0.0, PolicyMode::Dpop);
    dpop_cfg.params.beta = 0.0;
    dpop_cfg.noise = NoiseModel::None;
    let oracle_cfg = bench.config(horizon, 0.0, PolicyMode::Oracle);
    let seed = 424242;
    let dpop = run_one(&dpop_cfg, seed).unwrap();
    let oracle = run_one(&oracle_cfg, seed).unwrap();
    let identical = dpop.records == oracle.records
        && dpop.total_cost == oracle.total_cost
        && dpop.transmission_cost == oracle.transmission_cost
        && dpop.terminal_backlog == oracle.terminal_backlog
        && dpop.regret == oracle.regret;
    report(
        4,
        "oracle reduction",
        identical,
        &format!(
            "T={horizon}, per-slot records and terminal figures bit-identical \
             (bootstrap cost {} accounted separately)",
            dpop.bootstrap_cost
        ),
    );
}

#[test]
fn criterion_05_confidence_event_coverage() {
    let started = Instant::now();
    let summary = dpop_10k();
    let fraction = summary.event_a_fraction();
    let elapsed = started.elapsed();
    report(
        5,
        "confidence coverage",
        fraction >= 0.95 && elapsed.as_secs_f64() < 300.0,
        &format!(
            "event A held on {:.3}% of slot-seed pairs (gate 95%), {:.1}s",
            fraction * 100.0,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_06_regret_growth_is_sublinear() {
    let started = Instant::now();
    let sweep = single9_sweep();
    let all_positive = sweep.iter().all(|p| p.regret_mean > 0.0);
    let exponent = fit_growth_exponent(sweep).unwrap_or(f64::INFINITY);
    let elapsed = started.elapsed();
    report(
        6,
        "sublinear regret",
        all_positive && exponent <= 0.9 && elapsed.as_secs_f64() < 1800.0,
        &format!(
            "SE-weighted log-log exponent {exponent:.3} over T ∈ {{1k..16k}} (gate 0.9), \
             regrets {:?}, {:.1}s",
            sweep
                .iter()
                .map(|p| p.regret_mean.round())
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_07_backlog_per_slot_shrinks_with_horizon() {
    let sweep = single9_sweep();
    let scaled: Vec<(f64, f64)> = sweep
        .iter()
        .map(|p| {
            let t = p.horizon as f64;
            (p.backlog_terminal_mean / t, p.backlog_terminal_se / t)
        })
        .collect();
    let monotone = scaled
        .windows(2)
        .all(|w| decreasing_within_se(w[0].0, w[0].1, w[1].0, w[1].1));
    report(
        7,
        "rate stability",
        monotone,
        &format!(
            "terminal backlog / T across the grid: {:?}",
            scaled.iter().map(|(m, _)| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_08_regret_grows_with_noise() {
    // Light traffic (rate 2 of a max-flow of 8): the optimum uses only the
    // cheapest routes, so noise-driven exploration shows up directly in the
    // cost. Under heavy traffic every policy is forced onto every path and
    // the noise curves compress together.
    let bench = Bench::with_rates("single9", &[2.0]);
    let horizon = 8000;
    let seeds = seed_range(1, 100);
    let results: Vec<(f64, f64, f64)> = [0.0, 0.01, 0.05, 0.1]
        .iter()
        .map(|&sigma_sq| {
            let sigma = f64::sqrt(sigma_sq);
            let summary =
                replicate(&bench.config(horizon, sigma, PolicyMode::Dpop), &seeds).unwrap();
            (sigma_sq, summary.regret_mean, summary.regret_se)
        })
        .collect();
    let monotone = results.windows(2).all(|w| {
        let (_, lo_mean, lo_se) = w[0];
        let (_, hi_mean, hi_se) = w[1];
        hi_mean >= lo_mean - (lo_se * lo_se + hi_se * hi_se).sqrt()
    });
    report(
        8,
        "noise monotonicity",
        monotone,
        &format!(
            "mean regret by σ² at T=8000: {:?}",
            results
                .iter()
                .map(|(s, m, _)| (*s, m.round()))
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_09_adaptive_cost_converges_to_oracle() {
    let dpop = dpop_10k();
    let oracle = oracle_10k();
    let dpop_tail = dpop.tail_mean_cost(0.1);
    let oracle_tail = oracle.tail_mean_cost(0.1);
    let gap = (dpop_tail - oracle_tail).abs() / oracle_tail;
    // Side check from the regret contract: the oracle's mean regret over
    // 100 seeds must be nonnegative (the static optimum lower-bounds it).
    let oracle_regret_ok = oracle.regret_mean >= 0.0;
    report(
        9,
        "cost convergence",
        gap <= 0.10 && oracle_regret_ok,
        &format!(
            "tail mean cost dpop {dpop_tail:.3} vs oracle {oracle_tail:.3} ({:.1}% gap, gate 10%); \
             oracle mean regret {:.1} ≥ 0",
            gap * 100.0,
            oracle.regret_mean
        ),
    );
}

#[test]
fn criterion_10_multi_commodity_campaign() {
    let bench = Bench::new("multi12");
    let sigma = f64::sqrt(0.1);
    let seeds = seed_range(1, 50);
    let sweep = simulate::horizon_sweep(&[2000, 8000, 10_000], &seeds, |h| {
        bench.config(h, sigma, PolicyMode::Dpop)
    })
    .unwrap();
    let scaled: Vec<(f64, f64)> = sweep
        .iter()
        .map(|p| {
            let t = p.horizon as f64;
            (p.backlog_terminal_mean / t, p.backlog_terminal_se / t)
        })
        .collect();
    let backlog_bounded = scaled
        .windows(2)
        .all(|w| decreasing_within_se(w[0].0, w[0].1, w[1].0, w[1].1));
    let positive = sweep.iter().all(|p| p.regret_mean > 0.0);
    let ratio = sweep[1].regret_mean / sweep[0].regret_mean;
    report(
        10,
        "multi-commodity run",
        backlog_bounded && positive && ratio < 4.0,
        &format!(
            "backlog/T {:?}, regrets {:?}, R(8000)/R(2000) = {ratio:.2} (gate 4)",
            scaled.iter().map(|(m, _)| (m * 1e3).round() / 1e3).collect::<Vec<_>>(),
            sweep.iter().map(|p| p.regret_mean.round()).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_11_doubling_trick_parity() {
    let fixed = dpop_10k();
    let bench = single9_bench();
    let doubling = replicate(
        &bench.config(10_000, sigma_main(), PolicyMode::DpopDoubling),
        &seed_range(1, 100),
    )
    .unwrap();
    let ratio = doubling.regret_mean / fixed.regret_mean;
    let within = (0.5..=2.0).contains(&ratio);
    report(
        11,
        "doubling parity",
        within && fixed.regret_mean > 0.0,
        &format!(
            "terminal regret: doubling {:.0} vs fixed-T {:.0}, ratio {ratio:.2} (gate [0.5, 2])",
            doubling.regret_mean, fixed.regret_mean
        ),
    );
}

#[test]
fn criterion_12_terminal_bound_oracles_agree() {
    // Single-commodity instances whose standard form has at most 12 columns;
    // integer-valued costs make both routes exact in f64, so the comparison
    // is equality, not tolerance.
    let chain = Network::new(
        3,
        vec![
            Edge {
                tail: 0,
                head: 1,
                capacity: 2.0,
                cost: 3.0,
            },
            Edge {
                tail: 1,
                head: 2,
                capacity: 2.0,
                cost: 4.0,
            },
        ],
        vec![Commodity {
            src: 0,
            dst: 2,
            rate: 1.0,
        }],
    );
    let single = Network::new(
        2,
        vec![Edge {
            tail: 0,
            head: 1,
            capacity: 5.0,
            cost: 3.0,
        }],
        vec![Commodity {
            src: 0,
            dst: 1,
            rate: 1.0,
        }],
    );
    let cases: Vec<(&str, Network)> = vec![
        ("single-edge", single),
        ("parallel2", builtin_topology("parallel2").unwrap()),
        ("chain3", chain),
        ("diamond4", builtin_topology("diamond4").unwrap()),
    ];
    let mut detail = String::new();
    let mut all_equal = true;
    for (name, net) in &cases {
        let path_bound = benchmark::compute_cl(net).unwrap();
        let basis_bound = benchmark::compute_cl_multicommodity_bruteforce(net).unwrap();
        if path_bound != basis_bound {
            all_equal = false;
        }
        detail.push_str(&format!("{name}: path {path_bound} basis {basis_bound}; "));
    }
    report(12, "terminal bound agreement", all_equal, detail.trim_end());
}

// --- random instance generators ----------------------------------------------

fn random_single_commodity(rng: &mut ChaCha8Rng) -> Network {
    let nodes = rng.random_range(3..=8);
    // A direct src→dst edge sized above the demand keeps every draw feasible.
    let mut edges = vec![Edge {
        tail: 0,
        head: nodes - 1,
        capacity: rng.random_range(2..=6) as f64,
        cost: rng.random_range(4..=10) as f64 * 0.5,
    }];
    for tail in 0..nodes {
        for head in 0..nodes {
            if tail != head && !(tail == 0 && head == nodes - 1) && rng.random_bool(0.4) {
                edges.push(Edge {
                    tail,
                    head,
                    capacity: rng.random_range(1..=5) as f64,
                    cost: rng.random_range(0..=6) as f64 * 0.5,
                });
            }
        }
    }
    let rate = edges[0].capacity * rng.random_range(0.2..0.9);
    Network::new(
        nodes,
        edges,
        vec![Commodity {
            src: 0,
            dst: nodes - 1,
            rate,
        }],
    )
}

fn random_two_commodity_net(rng: &mut ChaCha8Rng) -> Network {
    let nodes = 4;
    let mut edges = Vec::new();
    for tail in 0..nodes {
        for head in 0..nodes {
            if tail != head && rng.random_bool(0.55) {
                edges.push(Edge {
                    tail,
                    head,
                    capacity: rng.random_range(1..=5) as f64,
                    cost: rng.random_range(1..=6) as f64 * 0.5,
                });
            }
        }
    }
    if edges.is_empty() {
        edges.push(Edge {
            tail: 0,
            head: 1,
            capacity: 2.0,
            cost: 1.0,
        });
    }
    Network::new(
        nodes,
        edges,
        vec![
            Commodity {
                src: 0,
                dst: 3,
                rate: 1.0,
            },
            Commodity {
                src: 1,
                dst: 2,
                rate: 0.5,
            },
        ],
    )
}

/// Brute-force value of the per-slot decision problem max Σ μ·w over the
/// capacity polytope, via the generic simplex.
fn decision_lp_objective(net: &Network, weights: &[policy::EdgeWeight]) -> f64 {
    let e_count = net.num_edges();
    let kn = net.num_classes();
    let cols = e_count * kn + e_count;
    let mut lp = StandardForm::new(e_count, cols);
    for e in 0..e_count {
        for k in 0..kn {
            lp.set_coeff(e, e * kn + k, 1.0);
        }
        lp.set_coeff(e, e_count * kn + e, 1.0);
        lp.b[e] = net.edges()[e].capacity;
    }
    for w in weights {
        lp.c[w.edge * kn + w.class] = -w.weight;
    }
    match simplex::solve(&lp).unwrap() {
        LpOutcome::Optimal(sol) => -sol.value,
        other => panic!("decision LP must be solvable, got {other:?}"),
    }
}
