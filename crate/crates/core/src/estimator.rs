//! Per-edge running-mean cost statistics and the lower-confidence-bound
//! estimate that drives optimistic exploration.
//!
//! After the bootstrap round every edge has at least one observation, and
//! from then on the estimate for edge (i,j) at slot t is
//!
//! ```text
//! ĉ_ij(t) = c̄_ij(t) − sqrt(β · ln(t/δ) / N_ij(t))
//! ```
//!
//! with the natural logarithm. The bonus favors under-observed edges; ĉ may
//! go negative and is deliberately not clamped — the control policy relies
//! on the unclamped value.

use rand::Rng;
use thiserror::Error;

use crate::feedback::NoiseModel;
use crate::network::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimator {
    means: Vec<f64>,
    counts: Vec<u64>,
    beta: f64,
    delta: f64,
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("edge {edge} has no observations; the bootstrap round must run before estimates are queried")]
    Unobserved { edge: usize },
}

impl CostEstimator {
    /// Estimator with no observations yet. `update` may be called from this
    /// state; `lcb` may not.
    pub fn empty(num_edges: usize, beta: f64, delta: f64) -> Self {
        CostEstimator {
            means: vec![0.0; num_edges],
            counts: vec![0; num_edges],
            beta,
            delta,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Replace δ (the doubling-trick schedule re-derives it as its horizon
    /// estimate grows).
    pub fn set_delta(&mut self, delta: f64) {
        self.delta = delta;
    }

    pub fn mean(&self, edge: usize) -> f64 {
        self.means[edge]
    }

    pub fn count(&self, edge: usize) -> u64 {
        self.counts[edge]
    }

    /// Incremental mean update: c̄ ← c̄ + (c̃ − c̄)/(N+1), N ← N+1.
    pub fn update(&mut self, edge: usize, observation: f64) {
        let n = self.counts[edge];
        self.means[edge] += (observation - self.means[edge]) / (n + 1) as f64;
        self.counts[edge] = n + 1;
    }

    /// Exploration bonus sqrt(β ln(t/δ) / N) for `edge` at slot `t`.
    pub fn bonus(&self, edge: usize, t: u64) -> Result<f64, EstimatorError> {
        let n = self.counts[edge];
        if n == 0 {
            return Err(EstimatorError::Unobserved { edge });
        }
        let log_term = (t as f64 / self.delta).ln();
        debug_assert!(log_term >= 0.0, "lcb requires t/δ ≥ 1");
        Ok((self.beta * log_term / n as f64).sqrt())
    }

    /// Lower-confidence-bound estimate ĉ_ij(t); may be negative.
    pub fn lcb(&self, edge: usize, t: u64) -> Result<f64, EstimatorError> {
        Ok(self.means[edge] - self.bonus(edge, t)?)
    }

    /// All per-edge estimates at slot `t`, in edge order.
    pub fn lcb_all(&self, t: u64) -> Result<Vec<f64>, EstimatorError> {
        (0..self.means.len()).map(|e| self.lcb(e, t)).collect()
    }

    /// Diagnostic only: whether every true edge cost lies inside its
    /// confidence interval at slot `t`. Requires truth, so control policies
    /// never see this — they only get `lcb`.
    pub fn confidence_event_holds(&self, net: &Network, t: u64) -> bool {
        net.edges().iter().enumerate().all(|(edge, spec)| {
            match self.bonus(edge, t) {
                Ok(b) => (spec.cost - self.means[edge]).abs() <= b,
                Err(_) => false,
            }
        })
    }

    /// Debug dump: `[{"edge": [i, j], "mean": …, "count": …}, …]`.
    pub fn to_json(&self, net: &Network) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = net
            .edges()
            .iter()
            .enumerate()
            .map(|(e, spec)| {
                serde_json::json!({
                    "edge": [spec.tail, spec.head],
                    "mean": self.means[e],
                    "count": self.counts[e],
                })
            })
            .collect();
        serde_json::Value::Array(entries)
    }
}

/// Initial exploration round at t = 0: send one dummy packet on every edge,
/// observe each noisy cost once, and start the statistics from those values.
/// Returns the estimator and the bootstrap cost (one packet per edge at true
/// cost), which is accounted separately from the run's transmission cost.
pub fn bootstrap<R: Rng + ?Sized>(
    net: &Network,
    noise: &NoiseModel,
    rng: &mut R,
    beta: f64,
    delta: f64,
) -> (CostEstimator, f64) {
    let mut est = CostEstimator::empty(net.num_edges(), beta, delta);
    let mut cost = 0.0;
    for (edge, spec) in net.edges().iter().enumerate() {
        let observation = spec.cost + noise.sample(rng);
        est.means[edge] = observation;
        est.counts[edge] = 1;
        cost += spec.cost;
    }
    (est, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_bootstrap_recovers_true_costs() {
        let net = builtin_topology("single9").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, _) = bootstrap(&net, &NoiseModel::None, &mut rng, 0.1, 0.5);
        for (e, spec) in net.edges().iter().enumerate() {
            assert_eq!(est.mean(e), spec.cost);
            assert_eq!(est.count(e), 1);
        }
    }

    #[test]
    fn bootstrap_consumes_one_noise_draw_per_edge() {
        let net = builtin_topology("diamond4").unwrap();
        let noise = NoiseModel::Uniform { sigma: 0.5 };
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        bootstrap(&net, &noise, &mut rng_a, 0.1, 0.5);
        // Drawing the same number of samples by hand leaves both generators
        // in the same state.
        for _ in 0..net.num_edges() {
            noise.sample(&mut rng_b);
        }
        let a: u64 = rng_a.random();
        let b: u64 = rng_b.random();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_cost_is_the_sum_of_true_costs() {
        let net = builtin_topology("parallel2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cost) = bootstrap(&net, &NoiseModel::None, &mut rng, 0.1, 0.5);
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn update_is_the_incremental_mean() {
        let mut est = CostEstimator::empty(1, 0.0, 0.5);
        est.update(0, 2.0);
        est.update(0, 4.0);
        assert_eq!(est.mean(0), 3.0);
        assert_eq!(est.count(0), 2);

        est.update(0, 3.0); // observation equal to the mean: mean unchanged
        assert_eq!(est.mean(0), 3.0);
        assert_eq!(est.count(0), 3);
    }

    #[test]
    fn update_sequence_from_scratch_matches_batch_mean() {
        let mut est = CostEstimator::empty(1, 0.0, 0.5);
        for obs in [1.0, 2.0, 3.0, 4.0] {
            est.update(0, obs);
        }
        assert_eq!(est.mean(0), 2.5);
    }

    #[test]
    fn incremental_mean_tracks_batch_mean_over_a_million_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut est = CostEstimator::empty(1, 0.0, 0.5);
        let mut acc = 0.0;
        let n = 1_000_000;
        for _ in 0..n {
            let x: f64 = rng.random_range(0.0..3.0);
            est.update(0, x);
            acc += x;
        }
        let batch = acc / n as f64;
        assert!(((est.mean(0) - batch) / batch).abs() < 1e-9);
    }

    #[test]
    fn zero_beta_lcb_is_the_mean() {
        let mut est = CostEstimator::empty(1, 0.0, 0.5);
        est.update(0, 2.0);
        assert_eq!(est.lcb(0, 10).unwrap(), 2.0);
    }

    #[test]
    fn unit_beta_at_t_over_delta_e_subtracts_one() {
        // ln(e) = 1, N = 1, β = 1 -> bonus exactly 1. Natural log.
        let mut est = CostEstimator::empty(1, 1.0, 1.0 / std::f64::consts::E);
        est.update(0, 2.0);
        let c = est.lcb(0, 1).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_boundary_t_over_delta_one_gives_zero_bonus() {
        let mut est = CostEstimator::empty(1, 0.225, 1.0);
        est.update(0, 2.0);
        // t = 1, δ = 1 -> t/δ = 1 -> ln 1 = 0.
        assert_eq!(est.lcb(0, 1).unwrap(), 2.0);
    }

    #[test]
    fn lcb_can_go_negative_and_is_not_clamped() {
        let mut est = CostEstimator::empty(1, 4.0, 0.01);
        est.update(0, 0.1);
        let c = est.lcb(0, 1000).unwrap();
        assert!(c < 0.0, "expected a negative estimate, got {c}");
    }

    #[test]
    fn lcb_errors_without_bootstrap() {
        let est = CostEstimator::empty(1, 1.0, 0.5);
        assert!(matches!(
            est.lcb(0, 10),
            Err(EstimatorError::Unobserved { edge: 0 })
        ));
    }

    #[test]
    fn lcb_is_below_mean_and_monotone_in_beta_and_count() {
        let mut est = CostEstimator::empty(1, 0.5, 0.1);
        est.update(0, 2.0);
        let base = est.lcb(0, 100).unwrap();
        assert!(base <= est.mean(0));

        let mut wider = CostEstimator::empty(1, 1.5, 0.1);
        wider.update(0, 2.0);
        assert!(wider.lcb(0, 100).unwrap() <= base);

        est.update(0, 2.0);
        est.update(0, 2.0);
        // Same mean, larger N: the estimate moves up toward the mean.
        assert!(est.lcb(0, 100).unwrap() >= base);
    }

    #[test]
    fn confidence_event_true_without_noise_false_with_zero_width() {
        let net = builtin_topology("parallel2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, _) = bootstrap(&net, &NoiseModel::None, &mut rng, 0.225, 0.5);
        assert!(est.confidence_event_holds(&net, 10));

        // β = 0 makes the interval zero-width, so any deviation breaks it.
        let (mut est0, _) = bootstrap(&net, &NoiseModel::None, &mut rng, 0.0, 0.5);
        est0.update(0, 5.0); // drags the mean off the true cost
        assert!(!est0.confidence_event_holds(&net, 10));
    }

    #[test]
    fn json_dump_lists_every_edge() {
        let net = builtin_topology("parallel2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, _) = bootstrap(&net, &NoiseModel::None, &mut rng, 0.1, 0.5);
        let dump = est.to_json(&net);
        let arr = dump.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        assert_eq!(arr[0]["edge"], serde_json::json!([0, 1]));
        assert_eq!(arr[0]["mean"], serde_json::json!(1.0));
        assert_eq!(arr[0]["count"], serde_json::json!(1));
    }
}
