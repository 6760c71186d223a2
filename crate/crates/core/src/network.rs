//! Network topology model: directed multigraph with per-edge capacities and
//! true per-packet costs, commodity declarations, feasibility checking, and
//! the shipped benchmark topologies.
//!
//! Commodities follow the destination convention: a traffic class is
//! identified by its destination node, and every node keeps one queue per
//! class. Several source declarations may feed the same class.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{self, SolverError};

/// A directed link with a transmission capacity (packets/slot) and a true
/// per-packet cost. Costs are hidden from control policies; only the
/// feedback module reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
    pub cost: f64,
}

/// An arrival declaration: `rate` packets/slot of the class destined to
/// `dst` enter the network at `src`.
#[derive(Debug, Clone, PartialEq)]
pub struct Commodity {
    pub src: usize,
    pub dst: usize,
    pub rate: f64,
}

/// Immutable network instance. Adjacency lists and the class table are
/// precomputed at construction; the struct is safe to share across
/// concurrent simulation replications.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: usize,
    edges: Vec<Edge>,
    commodities: Vec<Commodity>,
    c_max: f64,
    /// Distinct commodity destinations, ascending. Queue matrices and flow
    /// assignments are indexed by position in this list.
    classes: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown builtin topology {0:?} (expected one of: single9, multi12, parallel2, diamond4)")]
    UnknownTopology(String),
    #[error("rate override has {given} entries but the network declares {expected} commodities")]
    RateCountMismatch { given: usize, expected: usize },
    #[error("failed to read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse network JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Network {
    /// Build a network. `c_max` is derived as the largest declared edge cost;
    /// use [`Network::with_c_max`] to declare a different bound.
    pub fn new(nodes: usize, edges: Vec<Edge>, commodities: Vec<Commodity>) -> Self {
        let c_max = edges.iter().map(|e| e.cost).fold(0.0, f64::max);
        Self::with_c_max(nodes, edges, commodities, c_max)
    }

    pub fn with_c_max(
        nodes: usize,
        edges: Vec<Edge>,
        commodities: Vec<Commodity>,
        c_max: f64,
    ) -> Self {
        let mut classes: Vec<usize> = commodities.iter().map(|c| c.dst).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut out_edges = vec![Vec::new(); nodes];
        let mut in_edges = vec![Vec::new(); nodes];
        for (id, e) in edges.iter().enumerate() {
            if e.tail < nodes {
                out_edges[e.tail].push(id);
            }
            if e.head < nodes {
                in_edges[e.head].push(id);
            }
        }
        Network {
            nodes,
            edges,
            commodities,
            c_max,
            classes,
            out_edges,
            in_edges,
        }
    }

    /// Copy of this network with the commodity rates replaced (declaration
    /// order preserved). Handy for sweeping arrival intensities over a fixed
    /// topology.
    pub fn with_rates(&self, rates: &[f64]) -> Result<Network, NetworkError> {
        if rates.len() != self.commodities.len() {
            return Err(NetworkError::RateCountMismatch {
                given: rates.len(),
                expected: self.commodities.len(),
            });
        }
        let mut commodities = self.commodities.clone();
        for (c, &r) in commodities.iter_mut().zip(rates) {
            c.rate = r;
        }
        Ok(Network::with_c_max(
            self.nodes,
            self.edges.clone(),
            commodities,
            self.c_max,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Destination node of class `k`.
    pub fn class_dst(&self, class: usize) -> usize {
        self.classes[class]
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn class_of(&self, dst: usize) -> Option<usize> {
        self.classes.binary_search(&dst).ok()
    }

    /// Edge ids leaving `node`, ascending.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    /// Edge ids entering `node`, ascending.
    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    /// Aggregate arrival-rate matrix λ_ik, row-major nodes × classes.
    pub fn arrival_rates(&self) -> Vec<f64> {
        let k = self.num_classes();
        let mut rates = vec![0.0; self.nodes * k];
        for c in &self.commodities {
            if let Some(class) = self.class_of(c.dst) {
                if c.src < self.nodes {
                    rates[c.src * k + class] += c.rate;
                }
            }
        }
        rates
    }

    /// True per-edge costs, in edge-id order.
    pub fn true_costs(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.cost).collect()
    }

    /// Check every structural invariant; an empty list means the network is
    /// well formed. Violations are data, not errors, so callers can report
    /// all of them at once.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (id, e) in self.edges.iter().enumerate() {
            if e.tail >= self.nodes || e.head >= self.nodes {
                out.push(Violation::EdgeEndpointOutOfRange { edge: id });
                continue;
            }
            if e.tail == e.head {
                out.push(Violation::SelfLoop { edge: id });
            }
            if e.capacity <= 0.0 {
                out.push(Violation::NonPositiveCapacity {
                    edge: id,
                    capacity: e.capacity,
                });
            }
            if e.cost < 0.0 {
                out.push(Violation::NegativeCost { edge: id, cost: e.cost });
            } else if e.cost > self.c_max {
                out.push(Violation::CostAboveMax {
                    edge: id,
                    cost: e.cost,
                    c_max: self.c_max,
                });
            }
            for (other_id, other) in self.edges.iter().enumerate().skip(id + 1) {
                if e == other {
                    out.push(Violation::DuplicateEdge {
                        first: id,
                        second: other_id,
                    });
                }
            }
        }
        for (id, c) in self.commodities.iter().enumerate() {
            if c.src >= self.nodes || c.dst >= self.nodes {
                out.push(Violation::CommodityNodeOutOfRange { commodity: id });
                continue;
            }
            if c.src == c.dst {
                out.push(Violation::SourceIsDestination { commodity: id });
            }
            if c.rate < 0.0 {
                out.push(Violation::NegativeRate {
                    commodity: id,
                    rate: c.rate,
                });
            }
        }
        out
    }

    /// Decide whether the declared arrival rates sit inside the stability
    /// region with slack `eps`: there must exist a feasible flow with, for
    /// every node i and class k with i ≠ dst(k),
    /// `inflow_ik + λ_ik + eps ≤ outflow_ik`, subject to edge capacities and
    /// nonnegativity. Decided by LP feasibility; returns the witness flow
    /// when one exists.
    pub fn is_stabilizable(&self, eps: f64) -> Result<Option<FlowAssignment>, SolverError> {
        benchmark::feasible_flow(self, eps)
    }

    pub fn to_json_string(&self) -> String {
        let file: NetworkFile = self.into();
        serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Network, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Ok(file.into())
    }

    pub fn from_file(path: &Path) -> Result<Network, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        Network::from_json_str(&text)
    }
}

/// A single invariant breach, carrying enough context to point at the
/// offending edge or commodity declaration.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfLoop { edge: usize },
    DuplicateEdge { first: usize, second: usize },
    EdgeEndpointOutOfRange { edge: usize },
    NonPositiveCapacity { edge: usize, capacity: f64 },
    NegativeCost { edge: usize, cost: f64 },
    CostAboveMax { edge: usize, cost: f64, c_max: f64 },
    CommodityNodeOutOfRange { commodity: usize },
    SourceIsDestination { commodity: usize },
    NegativeRate { commodity: usize, rate: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::DuplicateEdge { first, second } => {
                write!(f, "edge {second} duplicates edge {first} exactly")
            }
            Violation::EdgeEndpointOutOfRange { edge } => {
                write!(f, "edge {edge} references a node outside 0..N-1")
            }
            Violation::NonPositiveCapacity { edge, capacity } => {
                write!(f, "edge {edge} has non-positive capacity {capacity}")
            }
            Violation::NegativeCost { edge, cost } => {
                write!(f, "edge {edge} has negative cost {cost}")
            }
            Violation::CostAboveMax { edge, cost, c_max } => {
                write!(f, "edge {edge} has cost {cost} above the declared bound {c_max}")
            }
            Violation::CommodityNodeOutOfRange { commodity } => {
                write!(f, "commodity {commodity} references a node outside 0..N-1")
            }
            Violation::SourceIsDestination { commodity } => {
                write!(f, "commodity {commodity} has source equal to destination")
            }
            Violation::NegativeRate { commodity, rate } => {
                write!(f, "commodity {commodity} has negative arrival rate {rate}")
            }
        }
    }
}

/// Per-(edge, class) nonnegative rates, the witness object for stability
/// checks and the output of the static LP.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAssignment {
    rates: Vec<f64>,
    num_classes: usize,
}

impl FlowAssignment {
    pub fn zero(net: &Network) -> Self {
        FlowAssignment {
            rates: vec![0.0; net.num_edges() * net.num_classes()],
            num_classes: net.num_classes(),
        }
    }

    pub fn from_raw(rates: Vec<f64>, num_classes: usize) -> Self {
        debug_assert!(num_classes > 0 || rates.is_empty());
        FlowAssignment { rates, num_classes }
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }

    /// Arithmetic re-check of the stability-region inequalities for this
    /// flow against `net` at slack `eps` (used to audit LP witnesses).
    pub fn satisfies_slack(&self, net: &Network, eps: f64, tol: f64) -> bool {
        for e in 0..net.num_edges() {
            if self.total_on_edge(e) > net.edges()[e].capacity + tol {
                return false;
            }
            for k in 0..net.num_classes() {
                if self.rate(e, k) < -tol {
                    return false;
                }
            }
        }
        let rates = net.arrival_rates();
        let kn = net.num_classes();
        for i in 0..net.num_nodes() {
            for k in 0..kn {
                if net.class_dst(k) == i {
                    continue;
                }
                let inflow: f64 = net.in_edges(i).iter().map(|&e| self.rate(e, k)).sum();
                let outflow: f64 = net.out_edges(i).iter().map(|&e| self.rate(e, k)).sum();
                if inflow + rates[i * kn + k] + eps > outflow + tol {
                    return false;
                }
            }
        }
        true
    }
}

// --- JSON wire format -------------------------------------------------------
// {"nodes": N, "edges": [{"i":…, "j":…, "cap":…, "cost":…}],
//  "commodities": [{"src":…, "dst":…, "rate":…}]}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkFile {
    pub nodes: usize,
    pub edges: Vec<EdgeFile>,
    pub commodities: Vec<CommodityFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeFile {
    pub i: usize,
    pub j: usize,
    pub cap: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CommodityFile {
    pub src: usize,
    pub dst: usize,
    pub rate: f64,
}

impl From<NetworkFile> for Network {
    fn from(file: NetworkFile) -> Network {
        Network::new(
            file.nodes,
            file.edges
                .into_iter()
                .map(|e| Edge {
                    tail: e.i,
                    head: e.j,
                    capacity: e.cap,
                    cost: e.cost,
                })
                .collect(),
            file.commodities
                .into_iter()
                .map(|c| Commodity {
                    src: c.src,
                    dst: c.dst,
                    rate: c.rate,
                })
                .collect(),
        )
    }
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> NetworkFile {
        NetworkFile {
            nodes: net.nodes,
            edges: net
                .edges
                .iter()
                .map(|e| EdgeFile {
                    i: e.tail,
                    j: e.head,
                    cap: e.capacity,
                    cost: e.cost,
                })
                .collect(),
            commodities: net
                .commodities
                .iter()
                .map(|c| CommodityFile {
                    src: c.src,
                    dst: c.dst,
                    rate: c.rate,
                })
                .collect(),
        }
    }
}

// --- Shipped topologies -----------------------------------------------------

fn edge(tail: usize, head: usize, capacity: f64, cost: f64) -> Edge {
    Edge {
        tail,
        head,
        capacity,
        cost,
    }
}

/// Fixed, versioned benchmark topologies.
///
/// * `parallel2`: 2 nodes, two parallel 0→1 links (cap 5 cost 1; cap 5 cost
///   2). The smallest instance where route choice matters.
/// * `diamond4`: 4 nodes, two disjoint 2-hop routes with integer costs.
/// * `single9`: 9 nodes, 15 edges, one commodity 0→8 at rate 4. The max-flow
///   from source to destination is exactly 8, so the stability region is
///   λ ∈ [0, 8].
/// * `multi12`: 12 nodes, 22 edges, 4 commodities, stabilizable at rates
///   [2.5, 2.0, 0.5, 2.5]. Every node has at least one outgoing edge, so
///   misrouted traffic can always drain.
pub fn builtin_topology(name: &str) -> Result<Network, NetworkError> {
    match name {
        "parallel2" => Ok(Network::new(
            2,
            vec![edge(0, 1, 5.0, 1.0), edge(0, 1, 5.0, 2.0)],
            vec![Commodity {
                src: 0,
                dst: 1,
                rate: 4.0,
            }],
        )),
        "diamond4" => Ok(Network::new(
            4,
            vec![
                edge(0, 1, 3.0, 1.0),
                edge(1, 3, 3.0, 1.0),
                edge(0, 2, 2.0, 2.0),
                edge(2, 3, 2.0, 2.0),
            ],
            vec![Commodity {
                src: 0,
                dst: 3,
                rate: 2.0,
            }],
        )),
        "single9" => Ok(Network::new(
            9,
            vec![
                edge(0, 1, 3.0, 1.0),
                edge(0, 2, 3.0, 2.0),
                edge(0, 3, 2.0, 3.0),
                edge(1, 4, 2.0, 1.0),
                edge(1, 5, 2.0, 2.0),
                edge(2, 4, 2.0, 1.5),
                edge(2, 5, 1.0, 1.0),
                edge(2, 6, 2.0, 2.5),
                edge(3, 5, 1.0, 2.0),
                edge(3, 6, 2.0, 1.0),
                edge(4, 7, 4.0, 0.5),
                edge(5, 6, 2.0, 1.0),
                edge(5, 7, 3.0, 1.5),
                edge(6, 8, 5.0, 1.0),
                edge(7, 8, 5.0, 0.5),
            ],
            vec![Commodity {
                src: 0,
                dst: 8,
                rate: 4.0,
            }],
        )),
        "multi12" => Ok(Network::new(
            12,
            vec![
                edge(0, 4, 3.0, 1.0),
                edge(0, 5, 2.0, 2.0),
                edge(1, 4, 2.0, 1.5),
                edge(1, 5, 2.0, 1.0),
                edge(2, 5, 1.0, 1.0),
                edge(2, 6, 2.0, 2.0),
                edge(3, 6, 3.0, 1.0),
                edge(3, 7, 2.0, 2.0),
                edge(4, 5, 2.0, 0.5),
                edge(5, 6, 2.0, 0.5),
                edge(6, 7, 2.0, 0.5),
                edge(4, 8, 3.0, 1.0),
                edge(4, 9, 2.0, 2.0),
                edge(5, 9, 2.0, 1.0),
                edge(5, 10, 2.0, 2.0),
                edge(6, 10, 2.0, 1.0),
                edge(6, 11, 2.0, 2.0),
                edge(7, 11, 3.0, 1.0),
                edge(8, 9, 1.0, 0.5),
                edge(9, 10, 1.0, 0.5),
                edge(10, 11, 1.0, 0.5),
                edge(11, 8, 1.0, 0.5),
            ],
            vec![
                Commodity {
                    src: 0,
                    dst: 8,
                    rate: 2.5,
                },
                Commodity {
                    src: 1,
                    dst: 9,
                    rate: 2.0,
                },
                Commodity {
                    src: 2,
                    dst: 10,
                    rate: 0.5,
                },
                Commodity {
                    src: 3,
                    dst: 11,
                    rate: 2.5,
                },
            ],
        )),
        other => Err(NetworkError::UnknownTopology(other.to_string())),
    }
}

pub const BUILTIN_TOPOLOGIES: [&str; 4] = ["parallel2", "diamond4", "single9", "multi12"];
