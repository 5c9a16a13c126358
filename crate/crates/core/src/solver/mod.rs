//! Exact binary ILP solving: branch-and-bound over the LP relaxation, an
//! exhaustive brute-force oracle, and an external-solver bridge via LP files.

mod external;
mod simplex;

pub use external::{solve_external, ExternalSolver};

use crate::error::{Error, Result};
use crate::ilp::{evaluate, Assignment, IlpModel, Sense};
use simplex::{solve_lp, LpMatrix, LpStatus, SimplexParams};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    MostFractional,
    FirstFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOrder {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// A variable within this distance of 0/1 counts as integral.
    pub integrality_tol: f64,
    /// LP feasibility tolerance.
    pub feasibility_tol: f64,
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    pub branch_rule: BranchRule,
    pub search: SearchOrder,
    /// Known-feasible objective value; nodes at or above it are pruned.
    pub cutoff: Option<f64>,
    /// Known-feasible 0/1 assignment used as the starting incumbent.
    pub initial_solution: Option<Vec<f64>>,
    /// Crash point for node relaxations; variables start at the nearest
    /// bound, shortening phase 1 near-feasible starts.
    pub start_hint: Option<Vec<f64>>,
    /// Record the global dual bound after each node (for diagnostics).
    pub record_bound_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            integrality_tol: 1e-6,
            feasibility_tol: 1e-7,
            node_limit: 1_000_000,
            time_limit: None,
            branch_rule: BranchRule::MostFractional,
            search: SearchOrder::BestBound,
            cutoff: None,
            initial_solution: None,
            start_hint: None,
            record_bound_history: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("integrality_tol", self.integrality_tol),
            ("feasibility_tol", self.feasibility_tol),
        ] {
            if !(t > 0.0 && t < 1e-3) {
                return Err(Error::Domain(format!("{name}={t} must lie in (0, 1e-3)")));
            }
        }
        if self.node_limit == 0 {
            return Err(Error::Domain("node_limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    LimitReached,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub best: Option<Assignment>,
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum (minimization).
    pub dual_bound: f64,
    pub node_count: u64,
    pub wall: Duration,
    pub bound_history: Vec<f64>,
}

fn build_matrix(model: &IlpModel) -> LpMatrix {
    let rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = model
        .constraints
        .iter()
        .map(|c| (c.terms.clone(), c.sense, c.rhs))
        .collect();
    LpMatrix::from_rows(model.num_vars(), &rows)
}

/// LP relaxation of the model over the unit box.
#[derive(Debug, Clone)]
pub struct LpRelaxation {
    pub feasible: bool,
    pub objective: f64,
    pub values: Vec<f64>,
}

pub fn lp_relax(model: &IlpModel) -> Result<LpRelaxation> {
    let mat = build_matrix(model);
    let n = model.num_vars();
    let mut cost = vec![0.0; n];
    for &(v, c) in &model.objective {
        cost[v] += c;
    }
    let sol = solve_lp(
        &mat,
        &cost,
        &vec![0.0; n],
        &vec![1.0; n],
        None,
        SimplexParams::default(),
    )?;
    Ok(LpRelaxation {
        feasible: sol.status == LpStatus::Optimal,
        objective: sol.objective,
        values: sol.x,
    })
}

struct Node {
    /// (variable, forced value) pairs along the path from the root.
    fixings: Vec<(usize, u8)>,
    bound: f64,
    depth: u32,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.depth == other.depth && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; order so that pop() yields the best node:
    // lowest bound, then deepest, then lowest sequence number.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .expect("bounds are not NaN")
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Exact branch-and-bound over the LP relaxation.
///
/// Deterministic for fixed options: branching ties break by declaration
/// order and the node queue orders by (bound, depth, insertion).
pub fn solve(model: &IlpModel, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    let started = Instant::now();
    let n = model.num_vars();
    let mat = build_matrix(model);
    let mut cost = vec![0.0; n];
    for &(v, c) in &model.objective {
        cost[v] += c;
    }
    let integral_obj = model.objective_is_integral();
    let params = SimplexParams {
        feas_tol: opts.feasibility_tol,
        ..SimplexParams::default()
    };

    let mut incumbent: Option<Assignment> = None;
    let mut incumbent_obj = opts.cutoff.unwrap_or(f64::INFINITY);
    if let Some(init) = &opts.initial_solution {
        let a = Assignment::from_values(model, init.clone())?;
        let report = evaluate(model, &a)?;
        if !report.is_feasible() {
            return Err(Error::Solver(
                "initial_solution violates the model constraints".into(),
            ));
        }
        if a.objective_value < incumbent_obj {
            incumbent_obj = a.objective_value;
            incumbent = Some(a);
        }
    }

    let sharpen = |lp_obj: f64| -> f64 {
        if integral_obj {
            (lp_obj - 1e-6 * (1.0 + lp_obj.abs())).ceil()
        } else {
            lp_obj
        }
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut stack: Vec<Node> = Vec::new();
    let push = |heap: &mut BinaryHeap<Node>, stack: &mut Vec<Node>, node: Node| match opts
        .search
    {
        SearchOrder::BestBound => heap.push(node),
        SearchOrder::DepthFirst => stack.push(node),
    };

    let root = Node {
        fixings: Vec::new(),
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
    };
    push(&mut heap, &mut stack, root);
    let mut seq = 1u64;
    let mut node_count = 0u64;
    let mut best_open_bound = f64::NEG_INFINITY;
    let mut bound_history = Vec::new();
    let mut limit_hit = false;

    let mut lb = vec![0.0; n];
    let mut ub = vec![1.0; n];

    while let Some(node) = match opts.search {
        SearchOrder::BestBound => heap.pop(),
        SearchOrder::DepthFirst => stack.pop(),
    } {
        // parent bound may already be dominated by a newer incumbent
        if node.bound >= incumbent_obj - 1e-9 {
            continue;
        }
        if node_count >= opts.node_limit
            || opts.time_limit.is_some_and(|t| started.elapsed() >= t)
        {
            limit_hit = true;
            // the popped node and all remaining open nodes bound the optimum
            best_open_bound = match opts.search {
                SearchOrder::BestBound => heap
                    .iter()
                    .map(|nd| nd.bound)
                    .fold(node.bound, f64::min),
                SearchOrder::DepthFirst => stack
                    .iter()
                    .map(|nd| nd.bound)
                    .fold(node.bound, f64::min),
            };
            break;
        }
        node_count += 1;

        lb.fill(0.0);
        ub.fill(1.0);
        for &(v, val) in &node.fixings {
            lb[v] = val as f64;
            ub[v] = val as f64;
        }
        let sol = solve_lp(&mat, &cost, &lb, &ub, opts.start_hint.as_deref(), params)?;
        if sol.status == LpStatus::Infeasible {
            continue;
        }
        let bound = sharpen(sol.objective);
        if opts.record_bound_history {
            let open = match opts.search {
                SearchOrder::BestBound => heap.iter().map(|nd| nd.bound).fold(bound, f64::min),
                SearchOrder::DepthFirst => stack.iter().map(|nd| nd.bound).fold(bound, f64::min),
            };
            bound_history.push(open.min(incumbent_obj));
        }
        if bound >= incumbent_obj - 1e-9 {
            continue;
        }

        // integrality check
        let mut branch_var: Option<(usize, f64)> = None;
        match opts.branch_rule {
            BranchRule::MostFractional => {
                let mut best_frac = opts.integrality_tol;
                for (j, &v) in sol.x.iter().enumerate() {
                    let frac = (v - v.round()).abs();
                    if frac > best_frac {
                        best_frac = frac;
                        branch_var = Some((j, v));
                    }
                }
            }
            BranchRule::FirstFractional => {
                for (j, &v) in sol.x.iter().enumerate() {
                    if (v - v.round()).abs() > opts.integrality_tol {
                        branch_var = Some((j, v));
                        break;
                    }
                }
            }
        }

        match branch_var {
            None => {
                // integral: verify the rounded point exactly
                let rounded: Vec<f64> = sol.x.iter().map(|&v| v.round()).collect();
                let cand = Assignment::from_values(model, rounded)?;
                let report = evaluate(model, &cand)?;
                if report.is_feasible() {
                    if cand.objective_value < incumbent_obj - 1e-12 {
                        incumbent_obj = cand.objective_value;
                        incumbent = Some(cand);
                    }
                } else {
                    // numerical edge: treat the most uncertain variable as
                    // fractional and branch on it
                    let j = sol
                        .x
                        .iter()
                        .enumerate()
                        .min_by(|a, b| {
                            let fa = (a.1 - a.1.round()).abs();
                            let fb = (b.1 - b.1.round()).abs();
                            fb.partial_cmp(&fa).unwrap()
                        })
                        .map(|(j, _)| j);
                    if let Some(j) = j {
                        for val in [1u8, 0u8] {
                            let mut fixings = node.fixings.clone();
                            fixings.push((j, val));
                            push(
                                &mut heap,
                                &mut stack,
                                Node {
                                    fixings,
                                    bound,
                                    depth: node.depth + 1,
                                    seq,
                                },
                            );
                            seq += 1;
                        }
                    }
                }
            }
            Some((j, _)) => {
                // children: value 1 explored first on ties
                for val in [0u8, 1u8] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, val));
                    let child = Node {
                        fixings,
                        bound,
                        depth: node.depth + 1,
                        seq: seq + (1 - val as u64),
                    };
                    push(&mut heap, &mut stack, child);
                }
                seq += 2;
            }
        }
    }

    let wall = started.elapsed();
    if limit_hit {
        return Ok(SolveResult {
            status: SolveStatus::LimitReached,
            objective: incumbent.as_ref().map(|a| a.objective_value),
            best: incumbent,
            dual_bound: best_open_bound,
            node_count,
            wall,
            bound_history,
        });
    }
    match incumbent {
        Some(a) => Ok(SolveResult {
            status: SolveStatus::Optimal,
            objective: Some(a.objective_value),
            dual_bound: a.objective_value,
            best: Some(a),
            node_count,
            wall,
            bound_history,
        }),
        None => Ok(SolveResult {
            status: SolveStatus::Infeasible,
            best: None,
            objective: None,
            dual_bound: f64::INFINITY,
            node_count,
            wall,
            bound_history,
        }),
    }
}

pub const BRUTE_FORCE_CAP: usize = 24;

/// Exhaustive enumeration over all 0/1 assignments, in Gray-code order with
/// incremental constraint activities. The authoritative oracle for tests.
pub fn brute_force(model: &IlpModel, cap: Option<usize>) -> Result<SolveResult> {
    let started = Instant::now();
    let n = model.num_vars();
    let cap = cap.unwrap_or(BRUTE_FORCE_CAP);
    if n > cap {
        return Err(Error::BruteForceCap { cap, nvars: n });
    }
    let tol = crate::ilp::FEASIBILITY_TOL;

    // per-variable incidence (row, coeff)
    let mut incidence: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, c) in model.constraints.iter().enumerate() {
        for &(v, k) in &c.terms {
            incidence[v].push((r, k));
        }
    }
    let mut obj_coeff = vec![0.0; n];
    for &(v, c) in &model.objective {
        obj_coeff[v] += c;
    }

    let nrows = model.constraints.len();
    let mut lhs = vec![0.0; nrows];
    let violated = |c: &crate::ilp::Constraint, lhs: f64| -> bool {
        match c.sense {
            Sense::Le => lhs > c.rhs + tol,
            Sense::Ge => lhs < c.rhs - tol,
            Sense::Eq => (lhs - c.rhs).abs() > tol,
        }
    };
    let mut nviol = 0usize;
    for (r, c) in model.constraints.iter().enumerate() {
        if violated(c, lhs[r]) {
            nviol += 1;
        }
    }

    let mut x = vec![0u8; n];
    let mut obj = 0.0f64;
    let mut best: Option<(f64, Vec<u8>)> = None;
    let consider = |obj: f64, nviol: usize, x: &[u8], best: &mut Option<(f64, Vec<u8>)>| {
        if nviol == 0 {
            match best {
                Some((b, _)) if *b <= obj + 1e-12 => {}
                _ => *best = Some((obj, x.to_vec())),
            }
        }
    };
    consider(obj, nviol, &x, &mut best);

    let total: u64 = 1u64 << n;
    for g in 1..total {
        let bit = g.trailing_zeros() as usize;
        let now_one = x[bit] == 0;
        x[bit] ^= 1;
        let sign = if now_one { 1.0 } else { -1.0 };
        obj += sign * obj_coeff[bit];
        for &(r, k) in &incidence[bit] {
            let c = &model.constraints[r];
            let was = violated(c, lhs[r]);
            lhs[r] += sign * k;
            let is = violated(c, lhs[r]);
            match (was, is) {
                (false, true) => nviol += 1,
                (true, false) => nviol -= 1,
                _ => {}
            }
        }
        consider(obj, nviol, &x, &mut best);
    }

    let wall = started.elapsed();
    match best {
        Some((_, bits)) => {
            let values: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            let a = Assignment::from_values(model, values)?;
            Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective: Some(a.objective_value),
                dual_bound: a.objective_value,
                best: Some(a),
                node_count: total,
                wall,
                bound_history: Vec::new(),
            })
        }
        None => Ok(SolveResult {
            status: SolveStatus::Infeasible,
            best: None,
            objective: None,
            dual_bound: f64::INFINITY,
            node_count: total,
            wall,
            bound_history: Vec::new(),
        }),
    }
}
