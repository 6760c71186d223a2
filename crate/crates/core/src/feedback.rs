//! True-cost bookkeeping: noisy partial observations and total-cost accrual.
//!
//! An observation for edge (i,j) is emitted in a slot iff the plan put a
//! positive rate on that edge for some class — dummy packets included, which
//! is exactly what lets a controller probe an edge whose upstream queue is
//! empty. Cost accrues on *planned* transmissions, so dummies are paid for.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::Network;
use crate::queueing::{QueueState, TransmissionPlan};

/// Observation noise η. `uniform` draws from [−σ, +σ]; `gaussian` has
/// standard deviation σ. Both are zero-mean and σ-sub-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Uniform { sigma: f64 },
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    /// Sub-Gaussian parameter σ of this model (0 for noiseless feedback).
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Uniform { sigma } | NoiseModel::Gaussian { sigma } => sigma,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Uniform { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    rng.random_range(-sigma..=sigma)
                }
            }
            NoiseModel::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    rand_distr::Normal::new(0.0, sigma)
                        .expect("sigma is finite and nonnegative")
                        .sample(rng)
                }
            }
        }
    }
}

use rand_distr::Distribution;

/// Running transmission-cost account for one run. The exploration round's
/// cost is tracked separately and excluded from regret.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    /// Planned transmission cost per slot, in slot order.
    pub per_slot: Vec<f64>,
    /// Σ of `per_slot`.
    pub cumulative: f64,
    /// One packet per edge at true cost, paid before slot 1.
    pub bootstrap_cost: f64,
    /// Terminal charge C_B per undelivered packet at the horizon.
    pub terminal_cost_rate: f64,
}

impl CostLedger {
    pub fn new(terminal_cost_rate: f64) -> Self {
        CostLedger {
            per_slot: Vec::new(),
            cumulative: 0.0,
            bootstrap_cost: 0.0,
            terminal_cost_rate,
        }
    }
}

/// Noisy observations for the slot: `(edge id, observed cost)` for every
/// edge with positive planned transmission, in ascending edge order.
pub fn observe<R: Rng + ?Sized>(
    net: &Network,
    plan: &TransmissionPlan,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (edge, spec) in net.edges().iter().enumerate() {
        if plan.total_on_edge(edge) > 0.0 {
            out.push((edge, spec.cost + noise.sample(rng)));
        }
    }
    out
}

/// Charge the slot's planned transmissions to the ledger:
/// Σ_edges Σ_classes μ_ijk · c_ij.
pub fn accrue(ledger: &mut CostLedger, plan: &TransmissionPlan, net: &Network) {
    let slot_cost: f64 = net
        .edges()
        .iter()
        .enumerate()
        .map(|(e, spec)| plan.total_on_edge(e) * spec.cost)
        .sum();
    ledger.per_slot.push(slot_cost);
    ledger.cumulative += slot_cost;
}

/// Total cost at the horizon: accumulated transmission cost plus the
/// terminal backlog charge C_B · Σ Q_ik(T). Bootstrap cost is not included.
pub fn finalize(ledger: &CostLedger, terminal_state: &QueueState) -> f64 {
    ledger.cumulative + ledger.terminal_cost_rate * terminal_state.total_backlog()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_transmission_means_no_observation() {
        let net = builtin_topology("parallel2").unwrap();
        let plan = TransmissionPlan::zero(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(observe(&net, &plan, &NoiseModel::None, &mut rng).is_empty());
    }

    #[test]
    fn noiseless_observation_is_the_true_cost() {
        let net = builtin_topology("parallel2").unwrap();
        let mut plan = TransmissionPlan::zero(&net);
        plan.set_rate(1, 0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = observe(&net, &plan, &NoiseModel::None, &mut rng);
        assert_eq!(obs, vec![(1, 2.0)]);
    }

    #[test]
    fn observation_indicator_includes_dummy_only_edges() {
        // The indicator depends on the plan, not on what the queues support.
        let net = builtin_topology("parallel2").unwrap();
        let mut plan = TransmissionPlan::zero(&net);
        plan.set_rate(0, 0, 0.5);
        plan.set_rate(1, 0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = observe(&net, &plan, &NoiseModel::None, &mut rng);
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].0, 0);
        assert_eq!(obs[1].0, 1);
    }

    #[test]
    fn uniform_noise_sample_mean_matches_clt_bound() {
        // 1e5 observations of cost 2 with uniform(σ = 0.5): the sample mean
        // lands within 2 ± 0.01 (3 standard errors is ±0.0027).
        let net = builtin_topology("parallel2").unwrap();
        let mut plan = TransmissionPlan::zero(&net);
        plan.set_rate(1, 0, 1.0);
        let noise = NoiseModel::Uniform { sigma: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let obs = observe(&net, &plan, &noise, &mut rng);
            acc += obs[0].1;
        }
        let mean = acc / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn uniform_noise_mean_concentrates_across_seeds() {
        // |mean of n draws| ≤ 3σ/√(3n) in at least 99% of seeded trials.
        let noise = NoiseModel::Uniform { sigma: 0.5 };
        let n = 1_000;
        let bound = 3.0 * 0.5 / (3.0 * n as f64).sqrt();
        let trials = 300;
        let mut within = 0;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mean: f64 = (0..n).map(|_| noise.sample(&mut rng)).sum::<f64>() / n as f64;
            if mean.abs() <= bound {
                within += 1;
            }
        }
        assert!(
            within as f64 >= 0.99 * trials as f64,
            "only {within}/{trials} trials within the CLT bound"
        );
    }

    #[test]
    fn accrue_charges_planned_rates_times_cost() {
        let net = builtin_topology("parallel2").unwrap();
        let mut ledger = CostLedger::new(0.0);

        let mut plan = TransmissionPlan::zero(&net);
        plan.set_rate(1, 0, 3.0);
        accrue(&mut ledger, &plan, &net);
        assert_eq!(ledger.per_slot, vec![6.0]);

        accrue(&mut ledger, &TransmissionPlan::zero(&net), &net);
        assert_eq!(ledger.per_slot[1], 0.0);

        // Two edges (μ=1, c=1) and (μ=2, c=2) -> slot cost 5; the shipped
        // pair of costs is (1, 2).
        let mut plan2 = TransmissionPlan::zero(&net);
        plan2.set_rate(0, 0, 1.0);
        plan2.set_rate(1, 0, 2.0);
        accrue(&mut ledger, &plan2, &net);
        assert_eq!(ledger.per_slot[2], 5.0);
        assert_eq!(ledger.cumulative, 11.0);
    }

    #[test]
    fn accrue_sums_products_across_edges() {
        use crate::network::{Commodity, Edge, Network};
        let net = Network::new(
            3,
            vec![
                Edge {
                    tail: 0,
                    head: 1,
                    capacity: 5.0,
                    cost: 1.5,
                },
                Edge {
                    tail: 1,
                    head: 2,
                    capacity: 5.0,
                    cost: 0.25,
                },
            ],
            vec![Commodity {
                src: 0,
                dst: 2,
                rate: 1.0,
            }],
        );
        let mut ledger = CostLedger::new(0.0);
        let mut plan = TransmissionPlan::zero(&net);
        plan.set_rate(0, 0, 1.0);
        plan.set_rate(1, 0, 2.0);
        accrue(&mut ledger, &plan, &net);
        assert_eq!(ledger.per_slot, vec![2.0]); // 1·1.5 + 2·0.25
    }

    #[test]
    fn finalize_adds_the_terminal_backlog_charge() {
        let net = builtin_topology("parallel2").unwrap();
        let mut ledger = CostLedger::new(10.0);
        ledger.cumulative = 100.0;
        let mut state = QueueState::new(&net);
        state.set_backlog(0, 0, 3.5);
        assert_eq!(finalize(&ledger, &state), 135.0);

        ledger.terminal_cost_rate = 0.0;
        assert_eq!(finalize(&ledger, &state), 100.0);

        state.set_backlog(0, 0, 0.0);
        ledger.terminal_cost_rate = 10.0;
        assert_eq!(finalize(&ledger, &state), 100.0);
    }
}
