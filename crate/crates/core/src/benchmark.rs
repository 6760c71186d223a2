//! Static benchmark: the min-cost multi-commodity flow LP, an independent
//! successive-shortest-paths oracle for the single-commodity case, the
//! terminal-cost bound C_L, and regret accounting against the static optimum.
//!
//! The LP minimizes Σ μ_ijk·c_ij subject to, for every node i and class k
//! with i ≠ dst(k),
//!
//! ```text
//! Σ_in μ_jik + λ_ik ≤ Σ_out μ_ijk        (flow support)
//! Σ_k μ_ijk ≤ cap_ij                     (edge capacity)
//! μ ≥ 0
//! ```
//!
//! brought to standard equality form with one slack per row. T times its
//! optimum lower-bounds any policy's expected total cost once the terminal
//! backlog charge is at least C_L, which is what makes `regret` meaningful.

use log::warn;
use thiserror::Error;

use crate::network::{FlowAssignment, Network};
use crate::simplex::{self, LpOutcome, SimplexError, StandardForm};

/// Residual bound accepted from the LP solution before it is declared
/// numerically broken.
const RESIDUAL_TOL: f64 = 1e-8;

/// Simple-path enumeration guard for `compute_cl`.
const MAX_SIMPLE_PATHS: usize = 1_000_000;

/// Column budget for the basis-enumeration bound (test oracle only).
const MAX_BRUTEFORCE_COLS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The LP reported an unbounded direction. The benchmark problem is
    /// bounded by construction, so this status indicates bad input rather
    /// than a meaningful answer.
    UnboundedGuard,
}

/// Outcome of the static problem. `flow`, `value`, and `dual` are present
/// exactly when `status` is `Optimal`.
#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub status: SolveStatus,
    pub flow: Option<FlowAssignment>,
    pub value: Option<f64>,
    pub dual: Option<Vec<f64>>,
}

impl StaticSolution {
    fn infeasible() -> Self {
        StaticSolution {
            status: SolveStatus::Infeasible,
            flow: None,
            value: None,
            dual: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("LP solution violates constraints: max residual {residual} exceeds {RESIDUAL_TOL}")]
    ResidualCheck { residual: f64 },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("min-cost-flow oracle requires exactly one commodity declaration, found {0}")]
    NotSingleCommodity(usize),
    #[error("augmentation failed to terminate; residual graph may contain a negative cycle")]
    NoProgress,
}

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("terminal-cost bound requires exactly one commodity declaration, found {0}")]
    NotSingleCommodity(usize),
    #[error("no source-to-destination path exists, the path bound is undefined")]
    NoPath,
    #[error(
        "simple-path enumeration exceeded {MAX_SIMPLE_PATHS} paths; \
         pass an explicit terminal cost instead of relying on the default"
    )]
    PathGuardExceeded,
    #[error(
        "basis enumeration is a small-instance oracle: constraint matrix has {cols} columns, \
         limit is {MAX_BRUTEFORCE_COLS}"
    )]
    TooManyColumns { cols: usize },
}

#[derive(Debug, Error)]
pub enum RegretError {
    #[error("regret is undefined unless the static problem solved to optimality")]
    StaticNotOptimal,
}

/// Regret of one run against T times the static optimum. `regret` equals
/// `total_cost − static_bound` exactly; negative values are legal (sampling
/// noise at small T) and reported as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub total_cost: f64,
    pub static_bound: f64,
    pub regret: f64,
    /// Transmission-cost part of the gap: Σ_t slot cost − T·P.
    pub transmission_gap: f64,
    /// Terminal charge C_B · Σ Q(T).
    pub terminal_charge: f64,
}

/// Standard equality form of the static problem with arrival slack `eps`:
/// columns are [rates (edge-major, class-minor) | flow slacks | capacity
/// slacks], rows are [flow rows for (i, k), i ≠ dst(k) | capacity rows].
pub fn standard_form(net: &Network, eps: f64, with_costs: bool) -> StandardForm {
    let e_count = net.num_edges();
    let kn = net.num_classes();
    let flow_rows: Vec<(usize, usize)> = (0..net.num_nodes())
        .flat_map(|i| (0..kn).map(move |k| (i, k)))
        .filter(|&(i, k)| net.class_dst(k) != i)
        .collect();
    let rows = flow_rows.len() + e_count;
    let cols = e_count * kn + flow_rows.len() + e_count;
    let mut lp = StandardForm::new(rows, cols);

    let rates = net.arrival_rates();
    for (row, &(i, k)) in flow_rows.iter().enumerate() {
        // outflow − inflow − slack = λ_ik + eps
        for &e in net.out_edges(i) {
            lp.set_coeff(row, e * kn + k, 1.0);
        }
        for &e in net.in_edges(i) {
            lp.set_coeff(row, e * kn + k, -1.0);
        }
        lp.set_coeff(row, e_count * kn + row, -1.0);
        lp.b[row] = rates[i * kn + k] + eps;
    }
    for e in 0..e_count {
        let row = flow_rows.len() + e;
        for k in 0..kn {
            lp.set_coeff(row, e * kn + k, 1.0);
        }
        lp.set_coeff(row, e_count * kn + flow_rows.len() + e, 1.0);
        lp.b[row] = net.edges()[e].capacity;
    }
    if with_costs {
        for (e, spec) in net.edges().iter().enumerate() {
            for k in 0..kn {
                lp.c[e * kn + k] = spec.cost;
            }
        }
    }
    lp
}

fn extract_flow(net: &Network, x: &[f64]) -> FlowAssignment {
    let kn = net.num_classes();
    FlowAssignment::from_raw(x[..net.num_edges() * kn].to_vec(), kn.max(1))
}

/// Solve the static problem exactly (dense simplex, Bland's rule). Returns
/// `Infeasible` when the arrival rates are outside the stability region.
pub fn solve_static(net: &Network) -> Result<StaticSolution, SolverError> {
    let lp = standard_form(net, 0.0, true);
    match simplex::solve(&lp)? {
        LpOutcome::Optimal(sol) => {
            let residual = lp.residual(&sol.x);
            if residual > RESIDUAL_TOL {
                return Err(SolverError::ResidualCheck { residual });
            }
            Ok(StaticSolution {
                status: SolveStatus::Optimal,
                flow: Some(extract_flow(net, &sol.x)),
                value: Some(sol.value),
                dual: Some(sol.dual),
            })
        }
        LpOutcome::Infeasible => Ok(StaticSolution::infeasible()),
        LpOutcome::Unbounded => Ok(StaticSolution {
            status: SolveStatus::UnboundedGuard,
            flow: None,
            value: None,
            dual: None,
        }),
    }
}

/// Feasibility probe with slack `eps` (zero objective): the witness flow
/// when the rates are supportable, `None` otherwise.
pub fn feasible_flow(net: &Network, eps: f64) -> Result<Option<FlowAssignment>, SolverError> {
    let lp = standard_form(net, eps, false);
    match simplex::solve(&lp)? {
        LpOutcome::Optimal(sol) => {
            let residual = lp.residual(&sol.x);
            if residual > RESIDUAL_TOL {
                return Err(SolverError::ResidualCheck { residual });
            }
            Ok(Some(extract_flow(net, &sol.x)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => unreachable!("zero-objective LP cannot be unbounded"),
    }
}

/// Independent single-commodity oracle: successive shortest paths on the
/// residual graph with Bellman–Ford (backward arcs carry negative costs).
/// Must agree with `solve_static` on every single-commodity instance; the
/// two share no code beyond the network type.
pub fn min_cost_flow_oracle(net: &Network) -> Result<StaticSolution, OracleError> {
    if net.commodities().len() != 1 {
        return Err(OracleError::NotSingleCommodity(net.commodities().len()));
    }
    let commodity = &net.commodities()[0];
    let (src, dst, demand) = (commodity.src, commodity.dst, commodity.rate);
    let e_count = net.num_edges();

    // Arc layout: 2e = forward for edge e, 2e+1 = backward.
    let arc_count = 2 * e_count;
    let mut residual = vec![0.0; arc_count];
    let mut cost = vec![0.0; arc_count];
    let mut arc_head = vec![0usize; arc_count];
    let mut arc_tail = vec![0usize; arc_count];
    for (e, spec) in net.edges().iter().enumerate() {
        residual[2 * e] = spec.capacity;
        cost[2 * e] = spec.cost;
        arc_tail[2 * e] = spec.tail;
        arc_head[2 * e] = spec.head;
        cost[2 * e + 1] = -spec.cost;
        arc_tail[2 * e + 1] = spec.head;
        arc_head[2 * e + 1] = spec.tail;
    }

    let nodes = net.num_nodes();
    let mut flow = vec![0.0; e_count];
    let mut remaining = demand;
    let mut rounds = 0usize;
    while remaining > 1e-9 {
        rounds += 1;
        if rounds > 4 * e_count * nodes + 16 {
            return Err(OracleError::NoProgress);
        }
        // Bellman–Ford over arcs with spare residual capacity.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent: Vec<Option<usize>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes.saturating_sub(1) {
            let mut improved = false;
            for a in 0..arc_count {
                if residual[a] <= 1e-12 || dist[arc_tail[a]].is_infinite() {
                    continue;
                }
                let candidate = dist[arc_tail[a]] + cost[a];
                if candidate < dist[arc_head[a]] - 1e-12 {
                    dist[arc_head[a]] = candidate;
                    parent[arc_head[a]] = Some(a);
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if dist[dst].is_infinite() {
            return Ok(StaticSolution::infeasible());
        }
        // Augment along the parent chain.
        let mut push = remaining;
        let mut node = dst;
        while node != src {
            let a = parent[node].expect("reached node must have a parent arc");
            push = push.min(residual[a]);
            node = arc_tail[a];
        }
        let mut node = dst;
        while node != src {
            let a = parent[node].expect("reached node must have a parent arc");
            residual[a] -= push;
            residual[a ^ 1] += push;
            node = arc_tail[a];
        }
        remaining -= push;
    }
    for e in 0..e_count {
        flow[e] = net.edges()[e].capacity - residual[2 * e];
    }
    let value: f64 = flow
        .iter()
        .zip(net.edges())
        .map(|(f, spec)| f * spec.cost)
        .sum();
    let mut assignment = FlowAssignment::zero(net);
    if let Some(class) = net.class_of(dst) {
        for (e, f) in flow.iter().enumerate() {
            assignment.set_rate(e, class, *f);
        }
    }
    Ok(StaticSolution {
        status: SolveStatus::Optimal,
        flow: Some(assignment),
        value: Some(value),
        dual: None,
    })
}

/// Single-commodity terminal-cost bound: the most expensive simple
/// source→destination path cost, found by exhaustive DFS enumeration.
/// Suitable as the default C_B.
pub fn compute_cl(net: &Network) -> Result<f64, BoundError> {
    if net.commodities().len() != 1 {
        return Err(BoundError::NotSingleCommodity(net.commodities().len()));
    }
    let (src, dst) = (net.commodities()[0].src, net.commodities()[0].dst);
    let mut on_path = vec![false; net.num_nodes()];
    let mut paths_seen = 0usize;
    let mut best: Option<f64> = None;
    on_path[src] = true;
    dfs_paths(net, src, dst, 0.0, &mut on_path, &mut paths_seen, &mut best)?;
    best.ok_or(BoundError::NoPath)
}

fn dfs_paths(
    net: &Network,
    node: usize,
    dst: usize,
    cost_so_far: f64,
    on_path: &mut [bool],
    paths_seen: &mut usize,
    best: &mut Option<f64>,
) -> Result<(), BoundError> {
    if node == dst {
        *paths_seen += 1;
        if *paths_seen > MAX_SIMPLE_PATHS {
            return Err(BoundError::PathGuardExceeded);
        }
        *best = Some(best.map_or(cost_so_far, |b| b.max(cost_so_far)));
        return Ok(());
    }
    for &e in net.out_edges(node) {
        let spec = &net.edges()[e];
        if on_path[spec.head] {
            continue;
        }
        on_path[spec.head] = true;
        dfs_paths(
            net,
            spec.head,
            dst,
            cost_so_far + spec.cost,
            on_path,
            paths_seen,
            best,
        )?;
        on_path[spec.head] = false;
    }
    Ok(())
}

/// Exponential test oracle for the terminal-cost bound on tiny instances:
/// enumerate every invertible basis B of the standard-form constraint
/// matrix and return max over B of ‖c_Bᵀ M_B⁻¹‖∞.
pub fn compute_cl_multicommodity_bruteforce(net: &Network) -> Result<f64, BoundError> {
    let lp = standard_form(net, 0.0, true);
    if lp.num_cols > MAX_BRUTEFORCE_COLS {
        return Err(BoundError::TooManyColumns { cols: lp.num_cols });
    }
    let m = lp.num_rows;
    let mut best = 0.0f64;
    let mut selection: Vec<usize> = (0..m).collect();
    loop {
        // Solve M_Bᵀ p = c_B for this column selection.
        let mut mat = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for (bi, &col) in selection.iter().enumerate() {
            for row in 0..m {
                mat[bi * m + row] = lp.coeff(row, col);
            }
            rhs[bi] = lp.c[col];
        }
        if let Some(p) = simplex::solve_linear_system(m, &mut mat, &mut rhs) {
            let norm = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            best = best.max(norm);
        }
        if !advance_combination(&mut selection, lp.num_cols) {
            break;
        }
    }
    Ok(best)
}

/// Next k-combination of 0..n in lexicographic order; false when exhausted.
fn advance_combination(selection: &mut [usize], n: usize) -> bool {
    let k = selection.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if selection[i] < n - (k - i) {
            selection[i] += 1;
            for j in (i + 1)..k {
                selection[j] = selection[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Default terminal backlog charge: the exact path bound for
/// single-commodity networks; |E|·C_max otherwise (a heuristic — the exact
/// multi-commodity bound is exponential to compute, and any C_B at least as
/// large as the true bound keeps the static benchmark valid).
pub fn default_terminal_cost(net: &Network) -> Result<f64, BoundError> {
    if net.commodities().len() == 1 {
        compute_cl(net)
    } else {
        let heuristic = net.num_edges() as f64 * net.c_max();
        warn!(
            "multi-commodity terminal cost defaulted to |E|·C_max = {heuristic}; \
             this is a heuristic upper estimate, override C_B to audit sensitivity"
        );
        Ok(heuristic)
    }
}

/// Regret of a completed run: `total cost − T·P(λ)`.
pub fn regret(
    transmission_cost: f64,
    terminal_charge: f64,
    horizon: u64,
    static_solution: &StaticSolution,
) -> Result<RegretReport, RegretError> {
    if static_solution.status != SolveStatus::Optimal {
        return Err(RegretError::StaticNotOptimal);
    }
    let p = static_solution.value.expect("optimal solution has a value");
    let static_bound = horizon as f64 * p;
    let total_cost = transmission_cost + terminal_charge;
    Ok(RegretReport {
        total_cost,
        static_bound,
        regret: total_cost - static_bound,
        transmission_gap: transmission_cost - static_bound,
        terminal_charge,
    })
}
