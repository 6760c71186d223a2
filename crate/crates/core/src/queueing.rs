//! Queue-state evolution and queue-feasibility clipping.
//!
//! Packets are continuous (rates in packets/slot). A planned transmission is
//! what the controller asked for; the actual transmission is what the queues
//! could support. The shortfall on each edge is filled with dummy packets so
//! that the total sent for cost and feedback purposes equals the plan.
//!
//! Per slot, for every node i and class k the update is exact accounting
//! over actual transmissions:
//!
//! ```text
//! Q_ik(t+1) = Q_ik(t) - Σ_out μ̃_ijk(t) + Σ_in μ̃_jik(t) + a_ik(t),  i ≠ dst(k)
//! Q_kk(t+1) = 0   (delivered packets exit the network immediately)
//! ```

use thiserror::Error;

use crate::network::Network;

/// Rounding slack: backlogs within this of zero are snapped to zero; anything
/// more negative indicates a real feasibility bug and is an error.
const NEG_TOL: f64 = 1e-9;

/// Per-(node, class) backlog matrix plus exact packet accounting. `arrived`
/// and `delivered` count real packets only; dummies never touch queues.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    backlog: Vec<f64>,
    num_classes: usize,
    pub slot: u64,
    pub arrived: f64,
    pub delivered: f64,
}

impl QueueState {
    pub fn new(net: &Network) -> Self {
        QueueState {
            backlog: vec![0.0; net.num_nodes() * net.num_classes()],
            num_classes: net.num_classes(),
            slot: 0,
            arrived: 0.0,
            delivered: 0.0,
        }
    }

    #[inline]
    pub fn backlog(&self, node: usize, class: usize) -> f64 {
        self.backlog[node * self.num_classes + class]
    }

    #[inline]
    pub fn set_backlog(&mut self, node: usize, class: usize, value: f64) {
        self.backlog[node * self.num_classes + class] = value;
    }

    pub fn total_backlog(&self) -> f64 {
        self.backlog.iter().sum()
    }

    /// Lyapunov value Φ = ½ Σ Q².
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.backlog.iter().map(|q| q * q).sum::<f64>()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Planned per-(edge, class) rates; Σ_k over an edge must respect capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    rates: Vec<f64>,
    num_classes: usize,
}

impl TransmissionPlan {
    pub fn zero(net: &Network) -> Self {
        TransmissionPlan {
            rates: vec![0.0; net.num_edges() * net.num_classes()],
            num_classes: net.num_classes(),
        }
    }

    #[inline]
    pub fn rate(&self, edge: usize, class: usize) -> f64 {
        self.rates[edge * self.num_classes + class]
    }

    #[inline]
    pub fn set_rate(&mut self, edge: usize, class: usize, value: f64) {
        self.rates[edge * self.num_classes + class] = value;
    }

    pub fn total_on_edge(&self, edge: usize) -> f64 {
        self.rates[edge * self.num_classes..(edge + 1) * self.num_classes]
            .iter()
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }

    /// Capacity and nonnegativity check against `net`.
    pub fn respects_capacity(&self, net: &Network, tol: f64) -> bool {
        (0..net.num_edges()).all(|e| {
            self.total_on_edge(e) <= net.edges()[e].capacity + tol
                && (0..self.num_classes).all(|k| self.rate(e, k) >= 0.0)
        })
    }
}

/// What actually moved (`real`) and what was padded (`dummy`), per
/// (edge, class). Invariants: real + dummy = plan, and per (node, class) the
/// real outflow never exceeds the backlog that was available.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualTransmission {
    pub real: TransmissionPlan,
    pub dummy: TransmissionPlan,
}

impl ActualTransmission {
    pub fn total_dummies(&self) -> f64 {
        self.dummy.rates.iter().sum()
    }
}

#[derive(Debug, Error)]
pub enum QueueError {
    #[error(
        "backlog for node {node}, class {class} went negative ({value}) at slot {slot}; \
         actual transmissions were not queue-feasible"
    )]
    NegativeBacklog {
        node: usize,
        class: usize,
        value: f64,
        slot: u64,
    },
}

/// Arrivals a_ik for one slot, same (node, class) layout as the backlog.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrivals {
    amounts: Vec<f64>,
    num_classes: usize,
}

impl Arrivals {
    pub fn zero(net: &Network) -> Self {
        Arrivals {
            amounts: vec![0.0; net.num_nodes() * net.num_classes()],
            num_classes: net.num_classes(),
        }
    }

    #[inline]
    pub fn get(&self, node: usize, class: usize) -> f64 {
        self.amounts[node * self.num_classes + class]
    }

    #[inline]
    pub fn add(&mut self, node: usize, class: usize, amount: f64) {
        self.amounts[node * self.num_classes + class] += amount;
    }

    pub fn total(&self) -> f64 {
        self.amounts.iter().sum()
    }
}

/// Clip a plan to what the queues can support.
///
/// For each (node, class): if the planned outflow fits in the backlog, the
/// plan is executed as-is. Otherwise the available packets are allocated
/// across the outgoing edges in ascending edge-id order, each edge taking up
/// to its planned amount; the per-edge shortfall is sent as dummy packets so
/// that real + dummy equals the plan exactly.
pub fn clip_to_queues(
    net: &Network,
    state: &QueueState,
    plan: &TransmissionPlan,
) -> ActualTransmission {
    let mut real = TransmissionPlan::zero(net);
    let mut dummy = TransmissionPlan::zero(net);
    for node in 0..net.num_nodes() {
        for class in 0..net.num_classes() {
            let mut remaining = state.backlog(node, class);
            // out_edges is ascending by construction.
            for &edge in net.out_edges(node) {
                let planned = plan.rate(edge, class);
                if planned <= 0.0 {
                    continue;
                }
                let send = planned.min(remaining);
                remaining -= send;
                real.set_rate(edge, class, send);
                dummy.set_rate(edge, class, planned - send);
            }
        }
    }
    ActualTransmission { real, dummy }
}

/// Advance the queue state by one slot under `actual` transmissions and the
/// slot's arrivals. Returns the state at t+1; real packets reaching their
/// destination are counted as delivered and exit immediately.
pub fn step(
    net: &Network,
    state: &QueueState,
    actual: &ActualTransmission,
    arrivals: &Arrivals,
) -> Result<QueueState, QueueError> {
    let mut next = state.clone();
    next.slot = state.slot + 1;
    for node in 0..net.num_nodes() {
        for class in 0..net.num_classes() {
            let inflow: f64 = net
                .in_edges(node)
                .iter()
                .map(|&e| actual.real.rate(e, class))
                .sum();
            let a = arrivals.get(node, class);
            next.arrived += a;
            if net.class_dst(class) == node {
                next.delivered += inflow + a;
                next.set_backlog(node, class, 0.0);
                continue;
            }
            let outflow: f64 = net
                .out_edges(node)
                .iter()
                .map(|&e| actual.real.rate(e, class))
                .sum();
            let mut q = state.backlog(node, class) - outflow + inflow + a;
            if q < 0.0 {
                if q < -NEG_TOL {
                    return Err(QueueError::NegativeBacklog {
                        node,
                        class,
                        value: q,
                        slot: state.slot,
                    });
                }
                q = 0.0;
            }
            next.set_backlog(node, class, q);
        }
    }
    Ok(next)
}

/// Check the one-slot backlog inequality
/// `Q_ik(t+1) ≤ [Q_ik(t) − Σ_out μ_ijk]⁺ + Σ_in μ̃_jik + a_ik`
/// (planned outflow, actual inflow) for every (node, class) pair.
pub fn satisfies_evolution_bound(
    net: &Network,
    before: &QueueState,
    after: &QueueState,
    plan: &TransmissionPlan,
    actual: &ActualTransmission,
    arrivals: &Arrivals,
    tol: f64,
) -> bool {
    for node in 0..net.num_nodes() {
        for class in 0..net.num_classes() {
            if net.class_dst(class) == node {
                continue;
            }
            let planned_out: f64 = net
                .out_edges(node)
                .iter()
                .map(|&e| plan.rate(e, class))
                .sum();
            let actual_in: f64 = net
                .in_edges(node)
                .iter()
                .map(|&e| actual.real.rate(e, class))
                .sum();
            let bound = (before.backlog(node, class) - planned_out).max(0.0)
                + actual_in
                + arrivals.get(node, class);
            if after.backlog(node, class) > bound + tol {
                return false;
            }
        }
    }
    true
}
