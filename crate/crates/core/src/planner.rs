//! End-to-end planning pipeline: derive bounds, build the pair and
//! candidate-link sets, run feasibility prechecks, build and solve the
//! chosen formulation, extract per-pair paths, remove loops, and assemble an
//! audited deployment plan.
//!
//! The audit is not a test-only convenience: every plan returned by `plan`
//! has passed it, and `audit` re-verifies plans loaded from disk.

use crate::analysis::{node_disjoint_paths, plan_connectivity};
use crate::error::{Error, Result};
use crate::formulations::{
    build_generalized, build_link_based, build_path_based, enumerate_paths, resolve_params,
    FormulationArtifacts, FormulationKind, PathCatalog, ResolvedParams,
};
use crate::ilp::{evaluate, Assignment};
use crate::network::{
    build_candidate_links, build_pair_set, build_pair_set_canonical, CandidateLinkSet,
    CandidateOptions, FiberNetwork, NodeIdx, RouteThrough,
};
use crate::requirements::{ChainRequirements, DeriveOptions, DerivedBounds};
use crate::solver::{solve, solve_external, ExternalSolver, SolveOptions, SolveStatus};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Options controlling one planning run.
#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    /// Rate/fidelity requirements; optional when explicit bounds plus k and
    /// d are given instead.
    pub requirements: Option<ChainRequirements>,
    /// Override the robustness parameter.
    pub k: Option<u32>,
    /// Override the capacity parameter.
    pub d: Option<u32>,
    /// Bypass the chain model with explicit hop/length bounds.
    pub bounds_override: Option<DerivedBounds>,
    pub formulation: Option<FormulationKind>,
    pub seed: u64,
    /// Orient pairs by node-id order instead of the seeded coin flip.
    pub canonical_pairs: bool,
    pub derive: DeriveOptions,
    pub candidate: CandidateOptions,
    /// Secondary-objective scale for the generalized formulation.
    pub alpha: Option<f64>,
    /// Emit literal length rows instead of dropping over-length variables.
    pub strict_rows: bool,
    pub solve: SolveOptions,
    pub external: Option<ExternalSolver>,
    pub path_cap: Option<usize>,
}

impl PlanOptions {
    pub fn formulation(&self) -> FormulationKind {
        self.formulation.unwrap_or(FormulationKind::LinkBased)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanLink {
    pub u: String,
    pub v: String,
    pub length_km: f64,
    /// Fiber walk from u to v as consecutive node-id pairs.
    pub fibers: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanPath {
    pub s: String,
    pub t: String,
    pub k: u32,
    /// Elementary links along the path, in order.
    pub links: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub repeater_count: usize,
    pub connectivity: usize,
    pub total_link_length_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairProvenance {
    pub s: String,
    pub t: String,
    pub k: u32,
    pub n_max: u32,
    pub l_max_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub formulation: String,
    pub seed: u64,
    pub canonical_pairs: bool,
    pub route_through_end_nodes: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub pairs: Vec<PairProvenance>,
    /// Capacity per potential repeater location.
    pub capacity: BTreeMap<String, u32>,
    pub solver_status: String,
    pub solver_objective: f64,
    pub solver_nodes: u64,
    pub solve_ms: f64,
    pub model_variables: usize,
}

/// A solved, audited repeater deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub repeaters: Vec<String>,
    pub elementary_links: Vec<PlanLink>,
    pub paths: Vec<PlanPath>,
    pub metrics: PlanMetrics,
    pub provenance: Provenance,
}

impl DeploymentPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One extracted s-to-t path of a link-based solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPath {
    pub pair: usize,
    pub k: u32,
    /// Link indices into the pair's candidate list.
    pub links: Vec<usize>,
    pub nodes: Vec<NodeIdx>,
}

impl ExtractedPath {
    pub fn interior(&self) -> &[NodeIdx] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// Follow the set outgoing link of each node from s until t, once per
/// (pair, k). Flow conservation makes the next hop unique on any feasible
/// assignment; anything else reports a corrupt assignment.
pub fn extract_paths(
    assignment: &Assignment,
    artifacts: &FormulationArtifacts,
    links: &CandidateLinkSet,
) -> Result<Vec<ExtractedPath>> {
    let mut outgoing: HashMap<(usize, u32, NodeIdx), Vec<(usize, NodeIdx)>> = HashMap::new();
    for &(q, k, li, var) in &artifacts.link_vars {
        if assignment.is_set(var) {
            let link = &links.pair(q).links[li];
            outgoing
                .entry((q, k, link.u))
                .or_default()
                .push((li, link.v));
        }
    }
    let mut out = Vec::new();
    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &artifacts.params.per_pair[q];
        for k in 1..=pp.k {
            let mut nodes = vec![pl.s];
            let mut path_links = Vec::new();
            let mut cur = pl.s;
            while cur != pl.t {
                let next = outgoing.get(&(q, k, cur));
                let (li, v) = match next.map(Vec::as_slice) {
                    Some([one]) => *one,
                    Some(many) if many.len() > 1 => {
                        return Err(Error::CorruptAssignment(format!(
                            "pair {q} k={k}: {} outgoing links set at node {cur}",
                            many.len()
                        )))
                    }
                    _ => {
                        return Err(Error::CorruptAssignment(format!(
                            "pair {q} k={k}: no outgoing link set at node {cur}"
                        )))
                    }
                };
                path_links.push(li);
                nodes.push(v);
                cur = v;
                if path_links.len() > pl.links.len() {
                    return Err(Error::CorruptAssignment(format!(
                        "pair {q} k={k}: walk exceeded the link count"
                    )));
                }
            }
            out.push(ExtractedPath {
                pair: q,
                k,
                links: path_links,
                nodes,
            });
        }
    }
    Ok(out)
}

/// Zero every link variable not on its (pair, k) extracted path; repeater
/// variables are untouched. Idempotent, and the result stays feasible.
pub fn remove_loops(
    assignment: &Assignment,
    paths: &[ExtractedPath],
    artifacts: &FormulationArtifacts,
) -> Result<Assignment> {
    let mut keep: HashSet<(usize, u32, usize)> = HashSet::new();
    for p in paths {
        for &li in &p.links {
            keep.insert((p.pair, p.k, li));
        }
    }
    let mut values = assignment.values.clone();
    for &(q, k, li, var) in &artifacts.link_vars {
        if values[var] > 0.5 && !keep.contains(&(q, k, li)) {
            values[var] = 0.0;
        }
    }
    Assignment::from_values(&artifacts.model, values)
}

/// Translate a path-model solution into a link-model assignment: the k-th
/// chosen path of each pair, in catalog order, populates the k-indexed link
/// variables; repeater choices carry over.
pub fn path_to_link_assignment(
    path_assignment: &Assignment,
    path_art: &FormulationArtifacts,
    catalog: &PathCatalog,
    link_art: &FormulationArtifacts,
) -> Result<Assignment> {
    let mut values = vec![0.0; link_art.model.num_vars()];
    for &(u, var) in &path_art.y_vars {
        if path_assignment.is_set(var) {
            let lv = link_art
                .y_var(u)
                .ok_or_else(|| Error::UnknownVariable(format!("y for node {u}")))?;
            values[lv] = 1.0;
        }
    }
    let link_map = link_art.link_var_map();
    let mut next_k: Vec<u32> = vec![1; catalog.per_pair.len()];
    for &(q, pi, var) in &path_art.path_vars {
        if !path_assignment.is_set(var) {
            continue;
        }
        let k = next_k[q];
        next_k[q] += 1;
        for &li in &catalog.per_pair[q][pi].links {
            let lv = *link_map.get(&(q, k, li)).ok_or_else(|| {
                Error::UnknownVariable(format!("link var q={q} k={k} li={li}"))
            })?;
            values[lv] = 1.0;
        }
    }
    Assignment::from_values(&link_art.model, values)
}

/// Translate extracted link-model paths into a path-model assignment by
/// locating each in the catalog; repeater choices carry over.
pub fn link_to_path_assignment(
    link_assignment: &Assignment,
    link_art: &FormulationArtifacts,
    extracted: &[ExtractedPath],
    catalog: &PathCatalog,
    path_art: &FormulationArtifacts,
) -> Result<Assignment> {
    let mut values = vec![0.0; path_art.model.num_vars()];
    for &(u, var) in &link_art.y_vars {
        if link_assignment.is_set(var) {
            let pv = path_art
                .y_var(u)
                .ok_or_else(|| Error::UnknownVariable(format!("y for node {u}")))?;
            values[pv] = 1.0;
        }
    }
    let mut var_of: HashMap<(usize, usize), crate::ilp::VarId> = HashMap::new();
    for &(q, pi, var) in &path_art.path_vars {
        var_of.insert((q, pi), var);
    }
    for ep in extracted {
        let pi = catalog.per_pair[ep.pair]
            .iter()
            .position(|p| p.links == ep.links)
            .ok_or_else(|| {
                Error::CorruptAssignment(format!(
                    "extracted path for pair {} not present in the catalog",
                    ep.pair
                ))
            })?;
        let var = *var_of.get(&(ep.pair, pi)).ok_or_else(|| {
            Error::CorruptAssignment(format!(
                "extracted path for pair {} maps to an omitted variable",
                ep.pair
            ))
        })?;
        values[var] = 1.0;
    }
    Assignment::from_values(&path_art.model, values)
}

fn resolve(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    opts: &PlanOptions,
) -> Result<ResolvedParams> {
    match &opts.requirements {
        Some(req) => {
            let mut req = req.clone();
            if let Some(k) = opts.k {
                req.k = k;
            }
            if let Some(d) = opts.d {
                req.d = d;
            }
            resolve_params(net, links, &req, opts.bounds_override, &opts.derive)
        }
        None => {
            let (Some(k), Some(d), Some(b)) = (opts.k, opts.d, opts.bounds_override) else {
                return Err(Error::Domain(
                    "without a requirements document, k, d and explicit bounds are needed".into(),
                ));
            };
            if k < 1 || d < 1 {
                return Err(Error::Domain("k and d must be >= 1".into()));
            }
            Ok(ResolvedParams::uniform(net, links.num_pairs(), k, d, b))
        }
    }
}

/// Cheap sound infeasibility checks run before any model is built. Each
/// failure names its pipeline stage.
fn prechecks(net: &FiberNetwork, links: &CandidateLinkSet, params: &ResolvedParams) -> Result<()> {
    let n = net.len();
    // per pair: (relayed paths needed, repeaters usable as a first hop)
    let mut relayed_demand: Vec<(usize, u32, Vec<NodeIdx>)> = Vec::new();
    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        // admissible-link adjacency for this pair
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut direct = false;
        for link in &pl.links {
            if link.length_km > pp.l_max_km {
                continue;
            }
            if link.u == pl.s && link.v == pl.t {
                direct = true;
                continue; // handled separately (at most one direct path)
            }
            neighbors[link.u].push(link.v);
        }
        // hop-bounded reachability from s
        let mut hops = vec![u32::MAX; n];
        hops[pl.s] = 0;
        let mut queue = std::collections::VecDeque::from([pl.s]);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if hops[v] == u32::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let relayed_ok = hops[pl.t] != u32::MAX && hops[pl.t] <= pp.n_max + 1;
        let direct_ok = direct; // one link, within every hop bound
        if !relayed_ok && !direct_ok {
            return Err(Error::Infeasible {
                stage: "admissible-paths".into(),
                detail: format!(
                    "no admissible path for pair ({}, {}) within {} links of length <= {}",
                    net.id(pl.s),
                    net.id(pl.t),
                    pp.n_max + 1,
                    pp.l_max_km
                ),
            });
        }

        // vertex-disjoint path supply, ignoring hop bounds (an upper bound)
        let mut und: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, outs) in neighbors.iter().enumerate() {
            for &v in outs {
                und[u].push(v);
                und[v].push(u);
            }
        }
        let relayed_supply = node_disjoint_paths(n, &und, pl.s, pl.t);
        let supply = relayed_supply as u64 + u64::from(direct);
        if supply < pp.k as u64 {
            return Err(Error::Infeasible {
                stage: "robustness-precheck".into(),
                detail: format!(
                    "pair ({}, {}) admits at most {} node-disjoint paths but k={}",
                    net.id(pl.s),
                    net.id(pl.t),
                    supply,
                    pp.k
                ),
            });
        }

        let need = pp.k.saturating_sub(u32::from(direct));
        if need > 0 {
            // repeaters that can open a relayed path: reachable from s in one
            // admissible link, with t at most n_max further links away
            let mut hops_to_t = vec![u32::MAX; n];
            hops_to_t[pl.t] = 0;
            let mut rqueue = std::collections::VecDeque::from([pl.t]);
            let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
            for link in &pl.links {
                if link.length_km <= pp.l_max_km {
                    incoming[link.v].push(link.u);
                }
            }
            while let Some(u) = rqueue.pop_front() {
                for &v in &incoming[u] {
                    if hops_to_t[v] == u32::MAX {
                        hops_to_t[v] = hops_to_t[u] + 1;
                        rqueue.push_back(v);
                    }
                }
            }
            let first_hops: Vec<NodeIdx> = pl
                .links
                .iter()
                .filter(|l| l.u == pl.s && l.v != pl.t && l.length_km <= pp.l_max_km)
                .map(|l| l.v)
                .filter(|&u| hops_to_t[u] <= pp.n_max)
                .collect();
            relayed_demand.push((q, need, first_hops));
        }
    }

    // capacity matching: every relayed path starts at a distinct repeater of
    // its pair, and a repeater opens at most capacity paths; a bipartite flow
    // bounds what any placement can serve
    let total_demand: u64 = relayed_demand.iter().map(|&(_, need, _)| need as u64).sum();
    if total_demand > 0 {
        let served = pair_repeater_matching(net, params, &relayed_demand);
        if served < total_demand {
            return Err(Error::Infeasible {
                stage: "capacity-precheck".into(),
                detail: format!(
                    "pairs need {total_demand} relayed paths but repeater capacities can serve at most {served}"
                ),
            });
        }
    }
    Ok(())
}

/// Max pairs-to-first-repeater assignment: pair q supplies up to `need`
/// units, each (pair, repeater) edge carries at most one, each repeater at
/// most its capacity. BFS augmenting flow on a layered graph.
fn pair_repeater_matching(
    net: &FiberNetwork,
    params: &ResolvedParams,
    demand: &[(usize, u32, Vec<NodeIdx>)],
) -> u64 {
    let nq = demand.len();
    let rep_slot: HashMap<NodeIdx, usize> = params
        .repeaters
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i))
        .collect();
    let nr = params.repeaters.len();
    // nodes: 0 = source, 1..=nq pairs, nq+1..=nq+nr repeaters, nq+nr+1 sink
    let total = nq + nr + 2;
    let sink = total - 1;
    let mut cap: HashMap<(usize, usize), i64> = HashMap::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    let arc = |cap: &mut HashMap<(usize, usize), i64>,
                   adj: &mut Vec<Vec<usize>>,
                   a: usize,
                   b: usize,
                   c: i64| {
        if cap.insert((a, b), c).is_none() {
            adj[a].push(b);
            adj[b].push(a);
            cap.entry((b, a)).or_insert(0);
        }
    };
    for (qi, &(_, need, ref firsts)) in demand.iter().enumerate() {
        arc(&mut cap, &mut adj, 0, 1 + qi, need as i64);
        for u in firsts {
            arc(&mut cap, &mut adj, 1 + qi, 1 + nq + rep_slot[u], 1);
        }
    }
    for (ri, &u) in params.repeaters.iter().enumerate() {
        arc(&mut cap, &mut adj, 1 + nq + ri, sink, params.capacity[u] as i64);
    }
    let _ = net;
    let mut flow = 0i64;
    loop {
        let mut prev = vec![usize::MAX; total];
        prev[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for &v in &adj[u] {
                if prev[v] == usize::MAX && cap[&(u, v)] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let mut v = sink;
        let mut bottleneck = i64::MAX;
        while v != 0 {
            let u = prev[v];
            bottleneck = bottleneck.min(cap[&(u, v)]);
            v = u;
        }
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            *cap.get_mut(&(u, v)).unwrap() -= bottleneck;
            *cap.get_mut(&(v, u)).unwrap() += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    flow as u64
}

struct SolvedPaths {
    /// (pair, k, link indices, interior nodes)
    paths: Vec<ExtractedPath>,
    assignment: Assignment,
}

/// Greedily route K disjoint paths per pair over admissible links, packing
/// repeaters that are already open. A success is a feasible integer point
/// for the link model, used both as the solver's first incumbent and as its
/// crash start; a failure just means no hint.
fn greedy_start(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    params: &ResolvedParams,
    artifacts: &FormulationArtifacts,
) -> Option<Vec<f64>> {
    let lvm = artifacts.link_var_map();
    let mut values = vec![0.0; artifacts.model.num_vars()];
    let mut cap_left: Vec<i64> = params.capacity.iter().map(|&c| c as i64).collect();
    let mut open = vec![false; net.len()];
    let is_rep = |u: NodeIdx| net.node(u).role == crate::network::NodeRole::Repeater;

    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        let adm = |li: usize| pl.links[li].length_km <= pp.l_max_km;
        let direct_li = pl.link_index(pl.s, pl.t).filter(|&li| adm(li));
        let mut direct_used = false;
        let mut used_interior: HashSet<NodeIdx> = HashSet::new();
        for k in 1..=pp.k {
            let mut chosen: Option<Vec<usize>> = None;
            if let (false, Some(li)) = (direct_used, direct_li) {
                direct_used = true;
                chosen = Some(vec![li]);
            }
            if chosen.is_none() && pp.n_max >= 1 {
                // single-repeater path, preferring already-open repeaters,
                // then larger remaining capacity, then smaller index
                let mut best: Option<(bool, i64, NodeIdx, usize, usize)> = None;
                for (li_in, v) in pl.outgoing(pl.s) {
                    if !adm(li_in) || !is_rep(v) || used_interior.contains(&v) || cap_left[v] < 1 {
                        continue;
                    }
                    let Some(li_out) = pl.link_index(v, pl.t).filter(|&li| adm(li)) else {
                        continue;
                    };
                    let key = (open[v], cap_left[v], v, li_in, li_out);
                    let better = match &best {
                        None => true,
                        Some(b) => (key.0, key.1) > (b.0, b.1) || ((key.0, key.1) == (b.0, b.1) && key.2 < b.2),
                    };
                    if better {
                        best = Some(key);
                    }
                }
                if let Some((_, _, v, li_in, li_out)) = best {
                    cap_left[v] -= 1;
                    open[v] = true;
                    used_interior.insert(v);
                    chosen = Some(vec![li_in, li_out]);
                }
            }
            if chosen.is_none() {
                // hop-bounded BFS through capacitated, pair-unused repeaters
                let n = net.len();
                let mut parent_link = vec![usize::MAX; n];
                let mut parent = vec![usize::MAX; n];
                let mut depth = vec![u32::MAX; n];
                depth[pl.s] = 0;
                let mut queue = std::collections::VecDeque::from([pl.s]);
                'bfs: while let Some(u) = queue.pop_front() {
                    if depth[u] >= pp.n_max + 1 {
                        continue;
                    }
                    for (li, v) in pl.outgoing(u) {
                        if !adm(li) || depth[v] != u32::MAX {
                            continue;
                        }
                        if v == pl.t && u == pl.s {
                            continue; // direct handled above
                        }
                        if v != pl.t && (used_interior.contains(&v) || cap_left[v] < 1) {
                            continue;
                        }
                        depth[v] = depth[u] + 1;
                        parent[v] = u;
                        parent_link[v] = li;
                        if v == pl.t {
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                }
                if depth[pl.t] != u32::MAX {
                    let mut lis = Vec::new();
                    let mut cur = pl.t;
                    while cur != pl.s {
                        lis.push(parent_link[cur]);
                        cur = parent[cur];
                    }
                    lis.reverse();
                    for &li in &lis {
                        let v = pl.links[li].v;
                        if v != pl.t {
                            cap_left[v] -= 1;
                            open[v] = true;
                            used_interior.insert(v);
                        }
                    }
                    chosen = Some(lis);
                }
            }
            let lis = chosen?;
            for li in lis {
                values[*lvm.get(&(q, k, li))?] = 1.0;
            }
        }
    }
    for &(u, yv) in &artifacts.y_vars {
        if open[u] {
            values[yv] = 1.0;
        }
    }
    let assignment = Assignment::from_values(&artifacts.model, values).ok()?;
    let report = evaluate(&artifacts.model, &assignment).ok()?;
    if report.is_feasible() {
        Some(assignment.values)
    } else {
        None
    }
}

/// Run the full pipeline and return an audited plan.
pub fn plan(net: &FiberNetwork, opts: &PlanOptions) -> Result<DeploymentPlan> {
    net.validate()?;
    let pair_set = if opts.canonical_pairs {
        build_pair_set_canonical(net)?
    } else {
        build_pair_set(net, opts.seed)?
    };
    let links = build_candidate_links(net, &pair_set, opts.candidate)?;
    let params = resolve(net, &links, opts)?;
    prechecks(net, &links, &params)?;

    let kind = opts.formulation();
    let (artifacts, catalog) = match kind {
        FormulationKind::PathBased => {
            let catalog = enumerate_paths(&links, &params, true, opts.path_cap)?;
            let art = build_path_based(net, &links, &catalog, &params, opts.strict_rows)?;
            (art, Some(catalog))
        }
        FormulationKind::LinkBased => (
            build_link_based(net, &links, &params, opts.strict_rows)?,
            None,
        ),
        FormulationKind::Generalized => (
            build_generalized(net, &links, &params, opts.alpha, opts.strict_rows)?,
            None,
        ),
    };

    let result = match &opts.external {
        Some(ex) => solve_external(&artifacts.model, ex)?,
        None => {
            let mut solve_opts = opts.solve.clone();
            if matches!(
                kind,
                FormulationKind::LinkBased | FormulationKind::Generalized
            ) && solve_opts.initial_solution.is_none()
            {
                if let Some(start) = greedy_start(net, &links, &params, &artifacts) {
                    solve_opts.start_hint = Some(start.clone());
                    solve_opts.initial_solution = Some(start);
                }
            }
            solve(&artifacts.model, &solve_opts)?
        }
    };
    match result.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                stage: "ilp".into(),
                detail: format!("{kind}-based model has no feasible repeater placement"),
            })
        }
        SolveStatus::LimitReached => {
            return Err(Error::Solver(format!(
                "solver limit reached after {} nodes (incumbent: {:?}, bound: {})",
                result.node_count, result.objective, result.dual_bound
            )))
        }
    }
    let assignment = result.best.clone().expect("optimal result has a point");

    // extraction and loop removal
    let solved = match kind {
        FormulationKind::PathBased => {
            let catalog = catalog.as_ref().expect("path run keeps its catalog");
            let mut paths = Vec::new();
            let mut next_k: Vec<u32> = vec![1; catalog.per_pair.len()];
            for &(q, pi, var) in &artifacts.path_vars {
                if assignment.is_set(var) {
                    let p = &catalog.per_pair[q][pi];
                    paths.push(ExtractedPath {
                        pair: q,
                        k: next_k[q],
                        links: p.links.clone(),
                        nodes: p.nodes.clone(),
                    });
                    next_k[q] += 1;
                }
            }
            SolvedPaths {
                paths,
                assignment,
            }
        }
        FormulationKind::LinkBased | FormulationKind::Generalized => {
            let paths = extract_paths(&assignment, &artifacts, &links)?;
            let cleaned = remove_loops(&assignment, &paths, &artifacts)?;
            let report = evaluate(&artifacts.model, &cleaned)?;
            if !report.is_feasible() {
                return Err(Error::AuditFailure(format!(
                    "loop removal broke feasibility: {}",
                    report.violations[0]
                )));
            }
            let again = remove_loops(&cleaned, &paths, &artifacts)?;
            if again.values != cleaned.values {
                return Err(Error::AuditFailure(
                    "loop removal is not idempotent on this assignment".into(),
                ));
            }
            SolvedPaths {
                paths,
                assignment: cleaned,
            }
        }
    };

    // assemble the plan
    let mut repeaters: Vec<String> = artifacts
        .y_vars
        .iter()
        .filter(|&&(_, var)| solved.assignment.is_set(var))
        .map(|&(u, _)| net.id(u).to_string())
        .collect();
    repeaters.sort();

    let mut link_dedup: BTreeMap<(String, String), PlanLink> = BTreeMap::new();
    let mut total_len = 0.0;
    let mut plan_paths = Vec::new();
    for ep in &solved.paths {
        let pl = links.pair(ep.pair);
        let mut path_links = Vec::new();
        for &li in &ep.links {
            let link = &pl.links[li];
            let (uid, vid) = (net.id(link.u).to_string(), net.id(link.v).to_string());
            let key = if uid <= vid {
                (uid.clone(), vid.clone())
            } else {
                (vid.clone(), uid.clone())
            };
            link_dedup.entry(key.clone()).or_insert_with(|| {
                let forward = key.0 == uid;
                let route: Vec<NodeIdx> = if forward {
                    link.route.clone()
                } else {
                    link.route.iter().rev().copied().collect()
                };
                let fibers = route
                    .windows(2)
                    .map(|w| (net.id(w[0]).to_string(), net.id(w[1]).to_string()))
                    .collect();
                PlanLink {
                    u: key.0.clone(),
                    v: key.1.clone(),
                    length_km: link.length_km,
                    fibers,
                }
            });
            path_links.push((uid, vid));
        }
        plan_paths.push(PlanPath {
            s: net.id(pl.s).to_string(),
            t: net.id(pl.t).to_string(),
            k: ep.k,
            links: path_links,
        });
    }
    let elementary_links: Vec<PlanLink> = link_dedup.into_values().collect();
    for l in &elementary_links {
        total_len += l.length_km;
    }

    let provenance = Provenance {
        formulation: kind.to_string(),
        seed: opts.seed,
        canonical_pairs: opts.canonical_pairs,
        route_through_end_nodes: opts.candidate.through == RouteThrough::AnyNode,
        alpha: artifacts.alpha,
        pairs: links
            .per_pair
            .iter()
            .zip(&params.per_pair)
            .map(|(pl, pp)| PairProvenance {
                s: net.id(pl.s).to_string(),
                t: net.id(pl.t).to_string(),
                k: pp.k,
                n_max: pp.n_max,
                l_max_km: pp.l_max_km,
            })
            .collect(),
        capacity: params
            .repeaters
            .iter()
            .map(|&u| (net.id(u).to_string(), params.capacity[u]))
            .collect(),
        solver_status: "optimal".into(),
        solver_objective: result.objective.unwrap_or(f64::NAN),
        solver_nodes: result.node_count,
        solve_ms: result.wall.as_secs_f64() * 1e3,
        model_variables: artifacts.model.num_vars(),
    };

    let mut deployment = DeploymentPlan {
        repeaters: repeaters.clone(),
        elementary_links,
        paths: plan_paths,
        metrics: PlanMetrics {
            repeater_count: repeaters.len(),
            connectivity: 0,
            total_link_length_km: total_len,
        },
        provenance,
    };
    deployment.metrics.connectivity = plan_connectivity(net, &deployment);

    audit(net, &deployment)?;
    Ok(deployment)
}

const LEN_TOL: f64 = 1e-9;

/// Verify every deployment-plan invariant against the network it was planned
/// on. Accepts exactly the plans `plan` emits.
pub fn audit(net: &FiberNetwork, plan: &DeploymentPlan) -> Result<()> {
    let fail = |msg: String| Err(Error::AuditFailure(msg));
    let prov = &plan.provenance;

    // rebuild the candidate links the plan was built from
    let pair_set = if prov.canonical_pairs {
        build_pair_set_canonical(net)?
    } else {
        build_pair_set(net, prov.seed)?
    };
    let through = if prov.route_through_end_nodes {
        RouteThrough::AnyNode
    } else {
        RouteThrough::RepeatersOnly
    };
    let links = build_candidate_links(net, &pair_set, CandidateOptions { through })?;
    if links.num_pairs() != prov.pairs.len() {
        return fail(format!(
            "provenance lists {} pairs, network yields {}",
            prov.pairs.len(),
            links.num_pairs()
        ));
    }

    let repeater_set: HashSet<&str> = plan.repeaters.iter().map(String::as_str).collect();
    for r in &repeater_set {
        match net.index_of(r) {
            Some(i) if net.node(i).role == crate::network::NodeRole::Repeater => {}
            _ => return fail(format!("'{r}' is not a potential repeater location")),
        }
    }

    // index plan links by unordered endpoints
    let key = |a: &str, b: &str| {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    };
    let mut link_by_key: HashMap<(String, String), &PlanLink> = HashMap::new();
    for l in &plan.elementary_links {
        if link_by_key.insert(key(&l.u, &l.v), l).is_some() {
            return fail(format!("duplicate elementary link {}-{}", l.u, l.v));
        }
    }
    let mut used_links: HashSet<(String, String)> = HashSet::new();

    let mut usage: HashMap<String, u32> = HashMap::new();
    for (q, (pl, pp)) in links.per_pair.iter().zip(&prov.pairs).enumerate() {
        if net.id(pl.s) != pp.s || net.id(pl.t) != pp.t {
            return fail(format!(
                "pair {q} is ({}, {}) in provenance but ({}, {}) on the network",
                pp.s,
                pp.t,
                net.id(pl.s),
                net.id(pl.t)
            ));
        }
        let paths: Vec<&PlanPath> = plan
            .paths
            .iter()
            .filter(|p| p.s == pp.s && p.t == pp.t)
            .collect();
        if paths.len() != pp.k as usize {
            return fail(format!(
                "pair ({}, {}) has {} paths, expected k={}",
                pp.s,
                pp.t,
                paths.len(),
                pp.k
            ));
        }
        let mut seen_interiors: HashSet<String> = HashSet::new();
        for path in paths {
            if path.links.is_empty() {
                return fail(format!("pair ({}, {}) contains an empty path", pp.s, pp.t));
            }
            if path.links.len() > pp.n_max as usize + 1 {
                return fail(format!(
                    "path for ({}, {}) uses {} links, hop bound is {}",
                    pp.s,
                    pp.t,
                    path.links.len(),
                    pp.n_max + 1
                ));
            }
            if path.links[0].0 != pp.s || path.links.last().unwrap().1 != pp.t {
                return fail(format!("path for ({}, {}) does not run s to t", pp.s, pp.t));
            }
            let mut visited: HashSet<&str> = [pp.s.as_str()].into();
            for (i, (u, v)) in path.links.iter().enumerate() {
                if i > 0 && *u != path.links[i - 1].1 {
                    return fail(format!("path for ({}, {}) is not connected", pp.s, pp.t));
                }
                if !visited.insert(v) {
                    return fail(format!("path for ({}, {}) repeats node {v}", pp.s, pp.t));
                }
                let (ui, vi) = match (net.index_of(u), net.index_of(v)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return fail(format!("path references unknown node {u} or {v}")),
                };
                let Some(li) = links.pair(q).link_index(ui, vi) else {
                    return fail(format!(
                        "({u}, {v}) is not a candidate link for pair ({}, {})",
                        pp.s, pp.t
                    ));
                };
                let cand = &links.pair(q).links[li];
                if cand.length_km > pp.l_max_km + LEN_TOL {
                    return fail(format!(
                        "link ({u}, {v}) has length {} over the bound {}",
                        cand.length_km, pp.l_max_km
                    ));
                }
                let kk = key(u, v);
                let Some(listed) = link_by_key.get(&kk) else {
                    return fail(format!("path link ({u}, {v}) missing from elementary_links"));
                };
                if (listed.length_km - cand.length_km).abs() > LEN_TOL {
                    return fail(format!(
                        "listed link ({u}, {v}) length {} disagrees with the fiber route {}",
                        listed.length_km, cand.length_km
                    ));
                }
                used_links.insert(kk);
                if i < path.links.len() - 1 {
                    // interior node: a repeater, disjoint within the pair
                    if !repeater_set.contains(v.as_str()) {
                        return fail(format!("interior node {v} is not a chosen repeater"));
                    }
                    if !seen_interiors.insert(v.clone()) {
                        return fail(format!(
                            "pair ({}, {}) reuses repeater {v} across paths",
                            pp.s, pp.t
                        ));
                    }
                    *usage.entry(v.clone()).or_insert(0) += 1;
                }
            }
        }
    }

    for l in &plan.elementary_links {
        if !used_links.contains(&key(&l.u, &l.v)) {
            return fail(format!("listed link {}-{} is on no path", l.u, l.v));
        }
    }

    for (id, used) in &usage {
        let cap = prov
            .capacity
            .get(id)
            .copied()
            .ok_or_else(|| Error::AuditFailure(format!("no capacity recorded for {id}")))?;
        if *used > cap {
            return fail(format!("repeater {id} serves {used} paths, capacity {cap}"));
        }
    }

    // robustness: any single repeater or link loss leaves k-1 paths per pair
    let mut removals: Vec<(Option<&str>, Option<(String, String)>)> = Vec::new();
    for r in &plan.repeaters {
        removals.push((Some(r.as_str()), None));
    }
    for l in &plan.elementary_links {
        removals.push((None, Some(key(&l.u, &l.v))));
    }
    for (rep, link) in removals {
        for pp in &prov.pairs {
            let intact = plan
                .paths
                .iter()
                .filter(|p| p.s == pp.s && p.t == pp.t)
                .filter(|p| {
                    let hit = match (&rep, &link) {
                        (Some(r), None) => p
                            .links
                            .iter()
                            .enumerate()
                            .any(|(i, (_, v))| i < p.links.len() - 1 && v == r),
                        (None, Some(lk)) => p.links.iter().any(|(u, v)| &key(u, v) == lk),
                        _ => unreachable!(),
                    };
                    !hit
                })
                .count();
            if intact + 1 < pp.k as usize {
                return fail(format!(
                    "removing {:?} leaves pair ({}, {}) with {} of {} paths",
                    rep.map(str::to_string).or_else(|| link
                        .as_ref()
                        .map(|(a, b)| format!("{a}-{b}"))),
                    pp.s,
                    pp.t,
                    intact,
                    pp.k
                ));
            }
        }
    }

    if plan.metrics.repeater_count != plan.repeaters.len() {
        return fail("repeater_count metric disagrees with the repeater list".into());
    }
    let conn = plan_connectivity(net, plan);
    if plan.metrics.connectivity != conn {
        return fail(format!(
            "connectivity metric {} disagrees with recomputed {conn}",
            plan.metrics.connectivity
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Node, NodeRole};

    fn line_net() -> FiberNetwork {
        FiberNetwork::new(
            vec![
                Node { id: "a".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "b".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "r".into(), role: NodeRole::Repeater, x: None, y: None },
            ],
            vec![
                ("a".into(), "r".into(), 1.0),
                ("r".into(), "b".into(), 1.0),
            ],
        )
        .unwrap()
    }

    fn line_opts() -> PlanOptions {
        PlanOptions {
            k: Some(1),
            d: Some(1),
            bounds_override: Some(DerivedBounds {
                n_max: 1,
                l_max_km: 1.0,
            }),
            canonical_pairs: true,
            ..PlanOptions::default()
        }
    }

    #[test]
    fn plan_on_line_places_one_repeater() {
        let net = line_net();
        let p = plan(&net, &line_opts()).unwrap();
        assert_eq!(p.repeaters, vec!["r".to_string()]);
        assert_eq!(p.metrics.repeater_count, 1);
        assert_eq!(p.elementary_links.len(), 2);
        assert_eq!(p.paths.len(), 1);
        assert_eq!(p.paths[0].links.len(), 2);
        assert_eq!(p.metrics.connectivity, 1);
    }

    #[test]
    fn plan_path_formulation_agrees_on_line() {
        let net = line_net();
        let mut opts = line_opts();
        opts.formulation = Some(FormulationKind::PathBased);
        let p = plan(&net, &opts).unwrap();
        assert_eq!(p.metrics.repeater_count, 1);
    }

    #[test]
    fn plan_reports_disconnected_pair_stage() {
        let net = FiberNetwork::new(
            vec![
                Node { id: "a".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "b".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "r".into(), role: NodeRole::Repeater, x: None, y: None },
            ],
            vec![("a".into(), "r".into(), 1.0)],
        )
        .unwrap();
        let err = plan(&net, &line_opts()).unwrap_err();
        assert_eq!(err.infeasible_stage(), Some("candidate-links"));
    }

    #[test]
    fn plan_reports_admissibility_stage() {
        // both fibers too long for the bound
        let net = FiberNetwork::new(
            vec![
                Node { id: "a".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "b".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "r".into(), role: NodeRole::Repeater, x: None, y: None },
            ],
            vec![
                ("a".into(), "r".into(), 5.0),
                ("r".into(), "b".into(), 5.0),
            ],
        )
        .unwrap();
        let err = plan(&net, &line_opts()).unwrap_err();
        assert_eq!(err.infeasible_stage(), Some("admissible-paths"));
    }

    #[test]
    fn plan_reports_robustness_stage() {
        // only one disjoint route but k=2
        let net = line_net();
        let mut opts = line_opts();
        opts.k = Some(2);
        opts.d = Some(2);
        let err = plan(&net, &opts).unwrap_err();
        assert_eq!(err.infeasible_stage(), Some("robustness-precheck"));
    }

    #[test]
    fn plan_reports_capacity_stage() {
        // two pairs sharing one repeater of capacity 1: each pair needs a
        // relayed path, so 2 slots are needed but only 1 exists
        let net = FiberNetwork::new(
            vec![
                Node { id: "a".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "b".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "c".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "r".into(), role: NodeRole::Repeater, x: None, y: None },
            ],
            vec![
                ("a".into(), "r".into(), 1.0),
                ("b".into(), "r".into(), 1.0),
                ("c".into(), "r".into(), 1.0),
            ],
        )
        .unwrap();
        let mut opts = line_opts();
        opts.k = Some(1);
        opts.d = Some(1);
        // 3 pairs, no direct links, capacity sums to 1
        let err = plan(&net, &opts).unwrap_err();
        assert_eq!(err.infeasible_stage(), Some("capacity-precheck"));
    }

    #[test]
    fn extraction_handles_direct_and_relayed() {
        let net = line_net();
        let mut opts = line_opts();
        opts.bounds_override = Some(DerivedBounds {
            n_max: 1,
            l_max_km: 2.0,
        });
        // with the direct link admissible and d=1, the optimum is 0 repeaters
        let p = plan(&net, &opts).unwrap();
        assert_eq!(p.metrics.repeater_count, 0);
        assert_eq!(p.paths[0].links.len(), 1);
    }

    #[test]
    fn loop_removal_cleans_a_planted_loop() {
        use crate::formulations::build_link_based;
        use crate::network::{build_pair_set_canonical, CandidateOptions};
        // a - r1 - b plus an r1/r2 pocket to host a loop
        let net = FiberNetwork::new(
            vec![
                Node { id: "a".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "b".into(), role: NodeRole::End, x: None, y: None },
                Node { id: "r1".into(), role: NodeRole::Repeater, x: None, y: None },
                Node { id: "r2".into(), role: NodeRole::Repeater, x: None, y: None },
            ],
            vec![
                ("a".into(), "r1".into(), 1.0),
                ("r1".into(), "b".into(), 1.0),
                ("r1".into(), "r2".into(), 1.0),
            ],
        )
        .unwrap();
        let pairs = build_pair_set_canonical(&net).unwrap();
        let links = build_candidate_links(&net, &pairs, CandidateOptions::default()).unwrap();
        let params = ResolvedParams::uniform(
            &net,
            1,
            1,
            4,
            DerivedBounds { n_max: 3, l_max_km: 2.0 },
        );
        let art = build_link_based(&net, &links, &params, false).unwrap();
        let m = &art.model;

        // hand-build: path a->r1->b plus the loop r1->r2->r1 (distinct from
        // the path's use of r1's outgoing budget? the loop violates
        // disjointness at r1, so plant it at r2 only: r2->r1->r2 needs two
        // outgoing at r1 too. Instead use the direct link for the path and
        // the loop r1->r2->r1.)
        let mut values = vec![0.0; m.num_vars()];
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        let r1 = net.index_of("r1").unwrap();
        let r2 = net.index_of("r2").unwrap();
        let pl = links.pair(0);
        let lm = art.link_var_map();
        let set = |values: &mut Vec<f64>, u: NodeIdx, v: NodeIdx| {
            let li = pl.link_index(u, v).unwrap();
            values[*lm.get(&(0, 1, li)).unwrap()] = 1.0;
        };
        set(&mut values, a, b); // direct path (length 2 admissible)
        set(&mut values, r1, r2); // loop
        set(&mut values, r2, r1);
        // loop nodes must be paid for: y_r1, y_r2 = 1 keeps capacity rows
        values[art.y_var(r1).unwrap()] = 1.0;
        values[art.y_var(r2).unwrap()] = 1.0;
        let assignment = Assignment::from_values(m, values).unwrap();
        let report = evaluate(m, &assignment).unwrap();
        assert!(report.is_feasible(), "{:?}", report.violations);

        let paths = extract_paths(&assignment, &art, &links).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].nodes, vec![a, b]);

        let cleaned = remove_loops(&assignment, &paths, &art).unwrap();
        let li_loop = pl.link_index(r1, r2).unwrap();
        assert_eq!(cleaned.values[*lm.get(&(0, 1, li_loop)).unwrap()], 0.0);
        let report = evaluate(m, &cleaned).unwrap();
        assert!(report.is_feasible());
        // idempotent
        let again = remove_loops(&cleaned, &paths, &art).unwrap();
        assert_eq!(again.values, cleaned.values);
        // y untouched
        assert_eq!(cleaned.values[art.y_var(r1).unwrap()], 1.0);
    }

    #[test]
    fn audit_accepts_emitted_plan_and_rejects_tampering() {
        let net = line_net();
        let p = plan(&net, &line_opts()).unwrap();
        audit(&net, &p).unwrap();

        let mut broken = p.clone();
        broken.repeaters.clear();
        broken.metrics.repeater_count = 0;
        assert!(audit(&net, &broken).is_err());

        let mut broken = p.clone();
        broken.paths[0].links.pop();
        assert!(audit(&net, &broken).is_err());

        let mut broken = p;
        broken.metrics.connectivity += 1;
        assert!(audit(&net, &broken).is_err());
    }

    #[test]
    fn plan_json_roundtrip() {
        let net = line_net();
        let p = plan(&net, &line_opts()).unwrap();
        let text = p.to_json();
        assert!(text.contains("\"repeaters\""));
        assert!(text.contains("\"elementary_links\""));
        let back = DeploymentPlan::from_json(&text).unwrap();
        audit(&net, &back).unwrap();
    }

    #[test]
    fn generalized_plan_runs_and_audits() {
        let net = line_net();
        let mut opts = line_opts();
        opts.formulation = Some(FormulationKind::Generalized);
        let p = plan(&net, &opts).unwrap();
        assert_eq!(p.metrics.repeater_count, 1);
        assert!(p.provenance.alpha.is_some());
    }
}
