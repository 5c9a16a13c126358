//! Plan metrics and the parameter-sweep harness: vertex connectivity of the
//! deployed quantum-network graph, requirement sweeps over feasible random
//! instances, and a solve-time harness. Sweeps run instances in parallel and
//! aggregate deterministically by instance id.

use crate::error::{Error, Result};
use crate::network::FiberNetwork;
use crate::planner::{plan, DeploymentPlan, PlanOptions};
use crate::randomnet::{feasible_corpus, FeasibleInstance};
use rayon::prelude::*;
use std::time::Instant;

/// Global vertex connectivity of an undirected simple graph given as an edge
/// list over vertices `0..n`. Complete graphs return `n - 1`; disconnected
/// graphs (and graphs with under two vertices) return 0.
pub fn vertex_connectivity(n: usize, edges: &[(usize, usize)]) -> usize {
    if n < 2 {
        return 0;
    }
    let mut adj = vec![vec![false; n]; n];
    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        if !adj[a][b] {
            adj[a][b] = true;
            adj[b][a] = true;
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    if !connected(n, &neighbors) {
        return 0;
    }
    let mut best = n - 1; // complete-graph convention
    for s in 0..n {
        for t in (s + 1)..n {
            if adj[s][t] {
                continue;
            }
            let flow = node_disjoint_paths(n, &neighbors, s, t);
            best = best.min(flow);
        }
    }
    best
}

fn connected(n: usize, neighbors: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Maximum number of internally node-disjoint s-t paths, via unit node
/// capacities in a split digraph and breadth-first augmentation.
pub fn node_disjoint_paths(n: usize, neighbors: &[Vec<usize>], s: usize, t: usize) -> usize {
    // vertex v splits into 2v (in) and 2v+1 (out)
    let nn = 2 * n;
    let big = n as i64;
    let mut cap = std::collections::HashMap::<(usize, usize), i64>::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); nn];
    let add_arc = |cap: &mut std::collections::HashMap<(usize, usize), i64>,
                       out: &mut Vec<Vec<usize>>,
                       a: usize,
                       b: usize,
                       c: i64| {
        if cap.insert((a, b), c).is_none() {
            out[a].push(b);
            out[b].push(a);
            cap.entry((b, a)).or_insert(0);
        }
    };
    for v in 0..n {
        let c = if v == s || v == t { big } else { 1 };
        add_arc(&mut cap, &mut out, 2 * v, 2 * v + 1, c);
    }
    for u in 0..n {
        for &v in &neighbors[u] {
            add_arc(&mut cap, &mut out, 2 * u + 1, 2 * v, big);
        }
    }
    let (src, dst) = (2 * s + 1, 2 * t);
    let mut flow = 0i64;
    loop {
        let mut prev = vec![usize::MAX; nn];
        prev[src] = src;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                break;
            }
            for &v in &out[u] {
                if prev[v] == usize::MAX && cap[&(u, v)] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[dst] == usize::MAX {
            break;
        }
        let mut v = dst;
        let mut bottleneck = i64::MAX;
        while v != src {
            let u = prev[v];
            bottleneck = bottleneck.min(cap[&(u, v)]);
            v = u;
        }
        let mut v = dst;
        while v != src {
            let u = prev[v];
            *cap.get_mut(&(u, v)).unwrap() -= bottleneck;
            *cap.get_mut(&(v, u)).unwrap() += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    flow as usize
}

/// Connectivity of a deployment plan's quantum-network graph: end nodes plus
/// chosen repeaters as vertices, chosen elementary links as undirected edges.
pub fn plan_connectivity(net: &FiberNetwork, plan: &DeploymentPlan) -> usize {
    let mut vertices: Vec<String> = net
        .end_nodes()
        .into_iter()
        .map(|i| net.id(i).to_string())
        .collect();
    vertices.extend(plan.repeaters.iter().cloned());
    vertices.sort();
    vertices.dedup();
    let index = |id: &str| vertices.binary_search_by(|v| v.as_str().cmp(id)).unwrap();
    let edges: Vec<(usize, usize)> = plan
        .elementary_links
        .iter()
        .map(|l| (index(&l.u), index(&l.v)))
        .collect();
    vertex_connectivity(vertices.len(), &edges)
}

/// Parameter being varied in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Repeater capacity D (larger is looser).
    Capacity,
    /// Robustness K (smaller is looser).
    Robustness,
    /// Maximum elementary-link length (larger is looser).
    LinkLength,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Capacity => "d",
            SweepParam::Robustness => "k",
            SweepParam::LinkLength => "lmax",
        }
    }

    /// True when `value` is no stricter than `base`.
    fn no_stricter(&self, value: f64, base: f64) -> bool {
        match self {
            SweepParam::Capacity | SweepParam::LinkLength => value >= base,
            SweepParam::Robustness => value <= base,
        }
    }
}

/// One solved instance at one parameter value.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param_value: f64,
    pub instance_id: u64,
    pub repeater_count: usize,
    pub connectivity: usize,
    pub solve_ms: f64,
    pub status: String,
}

/// Mean and standard error of the mean per parameter value.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub param_value: f64,
    pub mean_repeaters: f64,
    pub sem_repeaters: f64,
    pub mean_connectivity: f64,
    pub sem_connectivity: f64,
    pub instances: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: &'static str,
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    /// CSV with the fixed header used by the command-line front end.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("param_value,instance_id,repeater_count,connectivity,solve_ms,status\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.3},{}\n",
                r.param_value, r.instance_id, r.repeater_count, r.connectivity, r.solve_ms, r.status
            ));
        }
        out
    }
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Apply a sweep value to a copy of the base plan options.
fn options_at(base: &PlanOptions, param: SweepParam, value: f64) -> PlanOptions {
    let mut opts = base.clone();
    match param {
        SweepParam::Capacity => opts.d = Some(value.round() as u32),
        SweepParam::Robustness => opts.k = Some(value.round() as u32),
        SweepParam::LinkLength => {
            let mut b = opts
                .bounds_override
                .expect("sweeps run with explicit bounds");
            b.l_max_km = value;
            opts.bounds_override = Some(b);
        }
    }
    opts
}

fn base_value(base: &PlanOptions, param: SweepParam) -> f64 {
    match param {
        SweepParam::Capacity => base.d.expect("sweep base sets d") as f64,
        SweepParam::Robustness => base.k.expect("sweep base sets k") as f64,
        SweepParam::LinkLength => {
            base.bounds_override
                .expect("sweeps run with explicit bounds")
                .l_max_km
        }
    }
}

/// Sweep one parameter over a prebuilt feasible corpus. Each value must be
/// no stricter than the corpus base; an instance turning infeasible at a
/// supposedly-looser value is a hard error. The base plan solved during
/// corpus generation is reused when a value equals the base.
pub fn sweep_on(
    corpus: &[FeasibleInstance],
    base: &PlanOptions,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepTable> {
    let base_val = base_value(base, param);
    for &v in values {
        if !param.no_stricter(v, base_val) {
            return Err(Error::SweepValueStricter {
                param: param.name().into(),
                value: v,
                base: base_val,
            });
        }
    }
    let mut jobs: Vec<(usize, f64)> = Vec::new();
    for &v in values {
        for i in 0..corpus.len() {
            jobs.push((i, v));
        }
    }
    let results: Vec<Result<SweepRow>> = jobs
        .par_iter()
        .map(|&(i, v)| {
            let inst = &corpus[i];
            let at_base = (v - base_val).abs() < 1e-12;
            let (p, ms) = if at_base {
                (inst.base_plan.clone(), inst.base_solve_ms)
            } else {
                let mut opts = options_at(base, param, v);
                // the base optimum stays feasible at looser values, which
                // bounds the search from above
                opts.solve.cutoff = Some(inst.base_plan.metrics.repeater_count as f64 + 0.5);
                let started = Instant::now();
                let p = plan(&inst.network, &opts).map_err(|e| match e {
                    Error::Infeasible { .. } => Error::SweepInfeasible {
                        instance: inst.id,
                        param: param.name().into(),
                        value: v,
                    },
                    other => other,
                })?;
                (p, started.elapsed().as_secs_f64() * 1e3)
            };
            Ok(SweepRow {
                param_value: v,
                instance_id: inst.id,
                repeater_count: p.metrics.repeater_count,
                connectivity: p.metrics.connectivity,
                solve_ms: ms,
                status: "optimal".into(),
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rows.sort_by(|a, b| {
        a.param_value
            .partial_cmp(&b.param_value)
            .unwrap()
            .then(a.instance_id.cmp(&b.instance_id))
    });

    let mut points = Vec::new();
    for &v in values {
        let reps: Vec<f64> = rows
            .iter()
            .filter(|r| r.param_value == v)
            .map(|r| r.repeater_count as f64)
            .collect();
        let conns: Vec<f64> = rows
            .iter()
            .filter(|r| r.param_value == v)
            .map(|r| r.connectivity as f64)
            .collect();
        let (mr, sr) = mean_sem(&reps);
        let (mc, sc) = mean_sem(&conns);
        points.push(SweepPoint {
            param_value: v,
            mean_repeaters: mr,
            sem_repeaters: sr,
            mean_connectivity: mc,
            sem_connectivity: sc,
            instances: reps.len(),
        });
    }
    Ok(SweepTable {
        param: param.name(),
        rows,
        points,
    })
}

/// Generate a feasible corpus and sweep one parameter over it.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    nodes: usize,
    radius: f64,
    base: &PlanOptions,
    param: SweepParam,
    values: &[f64],
    n_instances: usize,
    seed: u64,
    max_attempts: u32,
) -> Result<SweepTable> {
    let corpus = feasible_corpus(nodes, radius, base, n_instances, seed, max_attempts)?;
    sweep_on(&corpus, base, param, values)
}

#[derive(Debug, Clone)]
pub struct TimingRow {
    pub nodes: usize,
    pub instances: usize,
    pub censored: usize,
    pub mean_ms: f64,
    pub sem_ms: f64,
    pub mean_variables: f64,
}

/// Wall-time study over random feasible instances of increasing size.
/// Instances hitting the solver limit are counted as censored, not dropped.
pub fn timing_harness(
    sizes: &[usize],
    per_size: usize,
    radius: f64,
    base: &PlanOptions,
    seed: u64,
    max_attempts: u32,
) -> Result<Vec<TimingRow>> {
    let mut out = Vec::new();
    for (si, &n) in sizes.iter().enumerate() {
        let corpus = feasible_corpus(
            n,
            radius,
            base,
            per_size,
            seed.wrapping_add(si as u64 * 0x9E37_79B9_7F4A_7C15),
            max_attempts,
        )?;
        let mut times = Vec::new();
        let mut vars = Vec::new();
        let mut censored = 0usize;
        for inst in &corpus {
            match inst.base_plan.provenance.solver_status.as_str() {
                "optimal" => {
                    times.push(inst.base_solve_ms);
                    vars.push(inst.base_plan.provenance.model_variables as f64);
                }
                _ => censored += 1,
            }
        }
        let (mean_ms, sem_ms) = mean_sem(&times);
        let mean_variables = if vars.is_empty() {
            f64::NAN
        } else {
            vars.iter().sum::<f64>() / vars.len() as f64
        };
        out.push(TimingRow {
            nodes: n,
            instances: corpus.len(),
            censored,
            mean_ms,
            sem_ms,
            mean_variables,
        });
    }
    Ok(out)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("nodes,instances,censored,mean_ms,sem_ms,mean_variables\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.1}\n",
            r.nodes, r.instances, r.censored, r.mean_ms, r.sem_ms, r.mean_variables
        ));
    }
    out
}
