//! Discrete-time multi-commodity queueing-network simulation and control.
//!
//! The crate models a network whose edge transmission costs are unknown to
//! the controller and revealed only through noisy per-edge observations on
//! the edges it actually uses. It provides:
//!
//! * [`network`] — the topology model, commodity declarations, stability
//!   checks, and the shipped benchmark topologies;
//! * [`queueing`] — backlog evolution and queue-feasibility clipping with
//!   exact packet accounting;
//! * [`feedback`] — noisy partial cost observations and total-cost accrual;
//! * [`estimator`] — per-edge running means and the lower-confidence-bound
//!   cost estimate that drives optimistic exploration;
//! * [`policy`] — the adaptive drift-plus-optimistic-penalty decision rule,
//!   an oracle variant with true costs, static-flow replay, and the
//!   horizon-doubling wrapper;
//! * [`benchmark`] — the static min-cost multi-commodity flow LP (dense
//!   simplex), an independent successive-shortest-paths oracle, terminal
//!   cost bounds, and regret accounting;
//! * [`simulate`] — the slot loop, seeded arrival/noise streams, multi-seed
//!   replication, and horizon sweeps.

pub mod benchmark;
pub mod estimator;
pub mod feedback;
pub mod network;
pub mod policy;
pub mod queueing;
pub mod simplex;
pub mod simulate;

pub use benchmark::{RegretReport, SolveStatus, StaticSolution};
pub use estimator::CostEstimator;
pub use feedback::{CostLedger, NoiseModel};
pub use network::{builtin_topology, Commodity, Edge, FlowAssignment, Network, Violation};
pub use policy::{DoublingSchedule, EdgeWeight, PolicyMode, PolicyParams};
pub use queueing::{ActualTransmission, Arrivals, QueueState, TransmissionPlan};
pub use simulate::{
    replicate, run_one, ArrivalModel, ReplicationSummary, RunConfig, RunTrace, SweepPoint,
};
