//! Control policies. Each one maps the current queue state (plus cost
//! information appropriate to its mode) to a planned transmission for the
//! slot.
//!
//! The adaptive policy greedily maximizes
//!
//! ```text
//! Σ_(i,j) Σ_k  μ_ijk · (Q_ik − Q_jk − ν·ĉ_ij)
//! ```
//!
//! over the feasible set M = {μ ≥ 0 : Σ_k μ_ijk ≤ cap_ij}. The objective is
//! separable per edge, so the exact maximizer is: pick the class with the
//! largest weight on each edge (ties to the lowest class id) and send full
//! capacity iff that weight is strictly positive. The oracle uses true costs
//! in place of the optimistic estimates ĉ; the static policy replays a fixed
//! flow.

use serde::{Deserialize, Serialize};

use crate::estimator::{CostEstimator, EstimatorError};
use crate::network::{FlowAssignment, Network};
use crate::queueing::{QueueState, TransmissionPlan};

/// δ must stay inside the open interval (0, 1); the schedule formulas hit
/// the boundary at σ = 0 and T̂ ≤ 1, so results are clamped to this range.
const DELTA_MAX: f64 = 1.0 - 1e-9;
const DELTA_MIN: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Dpop,
    DpopDoubling,
    Oracle,
    Static,
}

impl PolicyMode {
    pub fn needs_estimator(&self) -> bool {
        matches!(self, PolicyMode::Dpop | PolicyMode::DpopDoubling)
    }

    pub fn all_names() -> &'static [&'static str] {
        &["dpop", "dpop_doubling", "oracle", "static"]
    }
}

/// Per-run tuning. ν trades transmission cost against backlog; β and δ shape
/// the confidence bonus; `horizon` is the number of slots the run will last
/// (and the T that the schedule formulas refer to).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub nu: f64,
    pub beta: f64,
    pub delta: f64,
    pub horizon: u64,
    pub mode: PolicyMode,
}

/// One entry of the decision objective: w = Q_ik − Q_jk − ν·ĉ_ij.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeight {
    pub edge: usize,
    pub class: usize,
    pub weight: f64,
}

/// All (edge, class) weights for the given per-edge cost vector, in
/// (edge-major, class-minor) order.
pub fn edge_weights(
    net: &Network,
    state: &QueueState,
    costs: &[f64],
    nu: f64,
) -> Vec<EdgeWeight> {
    let kn = net.num_classes();
    let mut out = Vec::with_capacity(net.num_edges() * kn);
    for (e, spec) in net.edges().iter().enumerate() {
        let penalty = nu * costs[e];
        for k in 0..kn {
            out.push(EdgeWeight {
                edge: e,
                class: k,
                weight: state.backlog(spec.tail, k) - state.backlog(spec.head, k) - penalty,
            });
        }
    }
    out
}

/// Shared greedy maximizer: full capacity on each edge's best class when its
/// weight is strictly positive, nothing otherwise. Deterministic: class ties
/// break to the lowest id, and w = 0 sends nothing.
fn decide_from_costs(net: &Network, state: &QueueState, costs: &[f64], nu: f64) -> TransmissionPlan {
    let mut plan = TransmissionPlan::zero(net);
    let kn = net.num_classes();
    for (e, spec) in net.edges().iter().enumerate() {
        let penalty = nu * costs[e];
        let mut best_class = 0;
        let mut best_weight = f64::NEG_INFINITY;
        for k in 0..kn {
            let w = state.backlog(spec.tail, k) - state.backlog(spec.head, k) - penalty;
            if w > best_weight {
                best_weight = w;
                best_class = k;
            }
        }
        if best_weight > 0.0 {
            plan.set_rate(e, best_class, spec.capacity);
        }
    }
    plan
}

/// Adaptive decision from optimistic cost estimates at slot `t`.
pub fn dpop_decide(
    net: &Network,
    state: &QueueState,
    est: &CostEstimator,
    params: &PolicyParams,
    t: u64,
) -> Result<TransmissionPlan, EstimatorError> {
    let costs = est.lcb_all(t)?;
    Ok(decide_from_costs(net, state, &costs, params.nu))
}

/// Same rule with the true costs; the benchmark policy that knows c_ij.
pub fn oracle_decide(net: &Network, state: &QueueState, params: &PolicyParams) -> TransmissionPlan {
    decide_from_costs(net, state, &net.true_costs(), params.nu)
}

/// Constant plan equal to the given flow, every slot.
pub fn static_decide(net: &Network, flow: &FlowAssignment) -> TransmissionPlan {
    let mut plan = TransmissionPlan::zero(net);
    for e in 0..net.num_edges() {
        for k in 0..net.num_classes() {
            plan.set_rate(e, k, flow.rate(e, k));
        }
    }
    plan
}

/// Objective value Σ μ_ijk · w_ijk of a plan under the given weights.
pub fn plan_objective(plan: &TransmissionPlan, weights: &[EdgeWeight]) -> f64 {
    weights
        .iter()
        .map(|w| plan.rate(w.edge, w.class) * w.weight)
        .sum()
}

/// Default β from the noise level: β = 4.5σ², which satisfies the β > 4σ²
/// requirement of the regret schedule.
pub fn default_beta(sigma: f64) -> f64 {
    4.5 * sigma * sigma
}

/// Default ν = √T.
pub fn default_nu(horizon: u64) -> f64 {
    (horizon as f64).sqrt()
}

/// Schedule value δ = T^(−2σ²/β), clamped into (0, 1). At σ = 0 (or β = 0)
/// the formula degenerates to 1 and the clamp keeps δ legal; the bonus is
/// zero there anyway.
pub fn schedule_delta(horizon: u64, beta: f64, sigma: f64) -> f64 {
    let t = (horizon.max(1)) as f64;
    let raw = if sigma == 0.0 || beta == 0.0 {
        1.0
    } else {
        t.powf(-2.0 * sigma * sigma / beta)
    };
    raw.clamp(DELTA_MIN, DELTA_MAX)
}

/// Horizon-doubling wrapper for runs with unknown T. Keeps an estimate T̂
/// (initialized to 2), doubles it whenever the slot index passes it, and
/// re-derives ν = √T̂ and δ = T̂^(−2σ²/β) from the current estimate.
/// Estimator history is retained across doublings.
#[derive(Debug, Clone)]
pub struct DoublingSchedule {
    pub t_hat: u64,
    beta: f64,
    sigma: f64,
}

impl DoublingSchedule {
    pub fn new(beta: f64, sigma: f64) -> Self {
        DoublingSchedule {
            t_hat: 2,
            beta,
            sigma,
        }
    }

    /// Parameters to use at slot `t`, advancing T̂ first if `t` has crossed
    /// it.
    pub fn params_at(&mut self, t: u64, base: &PolicyParams) -> PolicyParams {
        while t > self.t_hat {
            self.t_hat *= 2;
        }
        PolicyParams {
            nu: (self.t_hat as f64).sqrt(),
            delta: schedule_delta(self.t_hat, self.beta, self.sigma),
            ..*base
        }
    }
}
