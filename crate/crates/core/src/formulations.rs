//! The three repeater-placement ILP formulations built over a candidate-link
//! set: path-based (enumerate paths, choose K disjoint ones per pair),
//! link-based (per-path flow conservation over elementary links), and the
//! generalized link-based variant with per-pair/per-node parameters and a
//! scaled total-length tiebreak in the objective.

use crate::error::{Error, Result};
use crate::ilp::{IlpModel, Sense, VarId};
use crate::network::{CandidateLinkSet, FiberNetwork, NodeIdx};
use crate::requirements::{
    derive_bounds_for, pair_key, ChainRequirements, DeriveOptions, DerivedBounds,
};
use std::collections::HashMap;

/// Hard guard against runaway model construction.
pub const MAX_MODEL_VARS: usize = 50_000_000;

/// Default cap on enumerated paths.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationKind {
    PathBased,
    LinkBased,
    Generalized,
}

impl std::fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormulationKind::PathBased => write!(f, "path"),
            FormulationKind::LinkBased => write!(f, "link"),
            FormulationKind::Generalized => write!(f, "generalized"),
        }
    }
}

/// Per-pair requirement parameters after resolving heterogeneous overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams {
    pub k: u32,
    pub n_max: u32,
    pub l_max_km: f64,
}

/// Parameters the formulations consume: one entry per pair plus a capacity
/// per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedParams {
    pub per_pair: Vec<PairParams>,
    /// Capacity indexed by node; meaningful for repeater nodes.
    pub capacity: Vec<u32>,
    /// All potential repeater locations, ascending node index.
    pub repeaters: Vec<NodeIdx>,
}

impl ResolvedParams {
    /// Homogeneous parameters for every pair.
    pub fn uniform(net: &FiberNetwork, pairs: usize, k: u32, d: u32, bounds: DerivedBounds) -> Self {
        ResolvedParams {
            per_pair: vec![
                PairParams {
                    k,
                    n_max: bounds.n_max,
                    l_max_km: bounds.l_max_km,
                };
                pairs
            ],
            capacity: vec![d; net.len()],
            repeaters: net.repeater_nodes(),
        }
    }
}

/// Resolve requirements to per-pair parameters. When `bounds_override` is
/// given it bypasses the chain model for every pair; otherwise bounds derive
/// from the homogeneous targets, and per-pair overrides re-derive them from
/// that pair's targets.
pub fn resolve_params(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    req: &ChainRequirements,
    bounds_override: Option<DerivedBounds>,
    derive_opts: &DeriveOptions,
) -> Result<ResolvedParams> {
    req.validate()?;
    let base_bounds = match bounds_override {
        Some(b) => b,
        None => derive_bounds_for(req.r_min_hz, req.f_min, &req.hardware, derive_opts)?,
    };
    let mut per_pair = Vec::with_capacity(links.num_pairs());
    for pl in &links.per_pair {
        let key = pair_key(net.id(pl.s), net.id(pl.t));
        let params = match req.per_pair.get(&key) {
            None => PairParams {
                k: req.k,
                n_max: base_bounds.n_max,
                l_max_km: base_bounds.l_max_km,
            },
            Some(ov) => {
                let b = match bounds_override {
                    Some(b) => b,
                    None => derive_bounds_for(ov.r_min_hz, ov.f_min, &req.hardware, derive_opts)?,
                };
                PairParams {
                    k: ov.k,
                    n_max: b.n_max,
                    l_max_km: b.l_max_km,
                }
            }
        };
        per_pair.push(params);
    }
    let mut capacity = vec![req.d; net.len()];
    for (id, d) in &req.per_node {
        let idx = net
            .index_of(id)
            .ok_or_else(|| Error::UnknownEndpoint(id.clone()))?;
        capacity[idx] = *d;
    }
    Ok(ResolvedParams {
        per_pair,
        capacity,
        repeaters: net.repeater_nodes(),
    })
}

/// A loop-free sequence of candidate links from s to t for one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    /// Pair index into the candidate-link set.
    pub pair: usize,
    /// Link indices into that pair's sorted link list.
    pub links: Vec<usize>,
    /// Node walk s, interiors.., t.
    pub nodes: Vec<NodeIdx>,
}

impl Path {
    /// Interior nodes, i.e. the repeaters this path uses.
    pub fn interior(&self) -> &[NodeIdx] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }
}

/// All enumerated paths, per pair.
#[derive(Debug, Clone)]
pub struct PathCatalog {
    pub per_pair: Vec<Vec<Path>>,
    /// Whether length/hop pruning was applied during enumeration.
    pub pruned: bool,
}

impl PathCatalog {
    pub fn total(&self) -> usize {
        self.per_pair.iter().map(Vec::len).sum()
    }
}

/// Enumerate loop-free paths over each pair's candidate links by DFS in
/// ascending node order. With `prune` set, links longer than the pair's
/// length bound are skipped and paths stop at the pair's hop bound.
pub fn enumerate_paths(
    links: &CandidateLinkSet,
    params: &ResolvedParams,
    prune: bool,
    cap: Option<usize>,
) -> Result<PathCatalog> {
    let cap = cap.unwrap_or(DEFAULT_PATH_CAP);
    let mut per_pair = Vec::with_capacity(links.num_pairs());
    let mut total = 0usize;
    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        let max_links = if prune {
            pp.n_max as usize + 1
        } else {
            usize::MAX
        };
        let mut paths = Vec::new();
        let mut stack_links: Vec<usize> = Vec::new();
        let mut stack_nodes: Vec<NodeIdx> = vec![pl.s];
        let mut visited: std::collections::BTreeSet<NodeIdx> = [pl.s].into();
        // iterative DFS with explicit frames of (node, outgoing links, cursor)
        struct Frame {
            node: NodeIdx,
            out: Vec<(usize, NodeIdx)>,
            at: usize,
        }
        let frame_for = |u: NodeIdx| Frame {
            node: u,
            out: pl.outgoing(u).collect(),
            at: 0,
        };
        let mut frames = vec![frame_for(pl.s)];
        while let Some(frame) = frames.last_mut() {
            if frame.at >= frame.out.len() {
                let done = frame.node;
                frames.pop();
                if !frames.is_empty() {
                    visited.remove(&done);
                    stack_nodes.pop();
                    stack_links.pop();
                }
                continue;
            }
            let (li, v) = frame.out[frame.at];
            frame.at += 1;
            if visited.contains(&v) {
                continue;
            }
            if prune && pl.links[li].length_km > pp.l_max_km {
                continue;
            }
            if stack_links.len() + 1 > max_links {
                continue;
            }
            if v == pl.t {
                let mut nodes = stack_nodes.clone();
                nodes.push(v);
                let mut path_links = stack_links.clone();
                path_links.push(li);
                paths.push(Path {
                    pair: q,
                    links: path_links,
                    nodes,
                });
                total += 1;
                if total > cap {
                    return Err(Error::CatalogTooLarge {
                        cap,
                        reached: total,
                    });
                }
                continue;
            }
            visited.insert(v);
            stack_nodes.push(v);
            stack_links.push(li);
            frames.push(frame_for(v));
        }
        paths.sort_by(|a, b| a.nodes.cmp(&b.nodes));
        per_pair.push(paths);
    }
    Ok(PathCatalog {
        per_pair,
        pruned: prune,
    })
}

/// A built model plus the variable index maps needed to read solutions back.
#[derive(Debug, Clone)]
pub struct FormulationArtifacts {
    pub model: IlpModel,
    pub kind: FormulationKind,
    pub params: ResolvedParams,
    /// (repeater node, y variable).
    pub y_vars: Vec<(NodeIdx, VarId)>,
    /// (pair, path index in catalog, x variable). Path-based only.
    pub path_vars: Vec<(usize, usize, VarId)>,
    /// (pair, k starting at 1, link index, x variable). Link-based only.
    pub link_vars: Vec<(usize, u32, usize, VarId)>,
    pub alpha: Option<f64>,
}

impl FormulationArtifacts {
    pub fn y_var(&self, u: NodeIdx) -> Option<VarId> {
        self.y_vars
            .iter()
            .find(|&&(n, _)| n == u)
            .map(|&(_, v)| v)
    }

    /// Lookup map (pair, k, link) -> variable.
    pub fn link_var_map(&self) -> HashMap<(usize, u32, usize), VarId> {
        self.link_vars
            .iter()
            .map(|&(q, k, li, v)| ((q, k, li), v))
            .collect()
    }
}

/// Build the path-based model over an enumerated catalog.
///
/// With `strict` unset, length and hop bounds are enforced by omitting the
/// variables of violating paths (equivalent, since the constraints fix them
/// to zero); with `strict` set every path gets a variable and literal bound
/// rows are emitted.
pub fn build_path_based(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    catalog: &PathCatalog,
    params: &ResolvedParams,
    strict: bool,
) -> Result<FormulationArtifacts> {
    let mut model = IlpModel::new("repeater-placement path-based");
    let mut y_vars = Vec::with_capacity(params.repeaters.len());
    for &u in &params.repeaters {
        let v = model.add_binary(format!("y[{}]", net.id(u)))?;
        y_vars.push((u, v));
    }

    let mut path_vars = Vec::new();
    let mut admitted: Vec<Vec<Option<VarId>>> = Vec::with_capacity(catalog.per_pair.len());
    for (q, paths) in catalog.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        let pl = links.pair(q);
        let mut ids = Vec::with_capacity(paths.len());
        for (pi, path) in paths.iter().enumerate() {
            let violates = path.num_links() > pp.n_max as usize + 1
                || path
                    .links
                    .iter()
                    .any(|&li| pl.links[li].length_km > pp.l_max_km);
            if violates && !strict {
                ids.push(None);
                continue;
            }
            let v = model.add_binary(format!(
                "xp[q={}:{},p={}]",
                net.id(pl.s),
                net.id(pl.t),
                pi
            ))?;
            path_vars.push((q, pi, v));
            ids.push(Some(v));
            if strict {
                for &li in &path.links {
                    let link = &pl.links[li];
                    model.add_constraint(
                        format!(
                            "pbf_len[q={q},p={pi},({},{})]",
                            net.id(link.u),
                            net.id(link.v)
                        ),
                        vec![(v, link.length_km)],
                        Sense::Le,
                        pp.l_max_km,
                    )?;
                }
                model.add_constraint(
                    format!("pbf_hops[q={q},p={pi}]"),
                    vec![(v, path.num_links() as f64)],
                    Sense::Le,
                    pp.n_max as f64 + 1.0,
                )?;
            }
            if model.num_vars() > MAX_MODEL_VARS {
                return Err(Error::ModelTooLarge(model.num_vars()));
            }
        }
        admitted.push(ids);
    }

    // exactly K chosen paths per pair
    for (q, ids) in admitted.iter().enumerate() {
        let pl = links.pair(q);
        let terms: Vec<(VarId, f64)> = ids.iter().flatten().map(|&v| (v, 1.0)).collect();
        if terms.is_empty() {
            return Err(Error::Infeasible {
                stage: "admissible-paths".into(),
                detail: format!(
                    "no admissible path for pair ({}, {})",
                    net.id(pl.s),
                    net.id(pl.t)
                ),
            });
        }
        model.add_constraint(
            format!("pbf_count[q={q}]"),
            terms,
            Sense::Eq,
            params.per_pair[q].k as f64,
        )?;
    }

    // per-pair disjointness and global capacity coupling
    let mut usage: HashMap<NodeIdx, Vec<(VarId, f64)>> = HashMap::new();
    for (q, ids) in admitted.iter().enumerate() {
        let mut per_node: HashMap<NodeIdx, Vec<(VarId, f64)>> = HashMap::new();
        for (pi, id) in ids.iter().enumerate() {
            let Some(v) = id else { continue };
            for &u in catalog.per_pair[q][pi].interior() {
                per_node.entry(u).or_default().push((*v, 1.0));
                usage.entry(u).or_default().push((*v, 1.0));
            }
        }
        let mut nodes: Vec<NodeIdx> = per_node.keys().copied().collect();
        nodes.sort_unstable();
        for u in nodes {
            let terms = per_node.remove(&u).unwrap();
            if terms.len() >= 2 {
                model.add_constraint(
                    format!("pbf_disjoint[u={},q={q}]", net.id(u)),
                    terms,
                    Sense::Le,
                    1.0,
                )?;
            }
        }
    }
    for &(u, yv) in &y_vars {
        if let Some(mut terms) = usage.remove(&u) {
            terms.push((yv, -(params.capacity[u] as f64)));
            model.add_constraint(
                format!("pbf_capacity[u={}]", net.id(u)),
                terms,
                Sense::Le,
                0.0,
            )?;
        }
    }

    model.set_objective(y_vars.iter().map(|&(_, v)| (v, 1.0)).collect());
    Ok(FormulationArtifacts {
        model,
        kind: FormulationKind::PathBased,
        params: params.clone(),
        y_vars,
        path_vars,
        link_vars: Vec::new(),
        alpha: None,
    })
}

/// Build the link-based model.
pub fn build_link_based(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    params: &ResolvedParams,
    strict: bool,
) -> Result<FormulationArtifacts> {
    build_link_model(net, links, params, 0.0, FormulationKind::LinkBased, strict)
}

/// Upper bound on the total selected elementary-link length.
pub fn secondary_objective_bound(params: &ResolvedParams) -> f64 {
    params
        .per_pair
        .iter()
        .map(|pp| pp.k as f64 * (pp.n_max as f64 + 1.0) * pp.l_max_km)
        .sum()
}

/// Scale factor keeping the total-length term strictly below 1.
pub fn default_alpha(params: &ResolvedParams) -> f64 {
    1.0 / (1.0 + secondary_objective_bound(params))
}

/// Build the generalized link-based model with per-pair parameters and the
/// total-length secondary objective. `alpha = None` selects the default
/// scale factor; an explicit value is rejected if it could let the secondary
/// term reach 1.
pub fn build_generalized(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    params: &ResolvedParams,
    alpha: Option<f64>,
    strict: bool,
) -> Result<FormulationArtifacts> {
    let bound = secondary_objective_bound(params);
    let alpha = match alpha {
        None => default_alpha(params),
        Some(a) => {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("alpha={a} must be nonnegative")));
            }
            if a > 0.0 && a * bound >= 1.0 {
                return Err(Error::AlphaTooLarge { alpha: a, bound });
            }
            a
        }
    };
    build_link_model(net, links, params, alpha, FormulationKind::Generalized, strict)
}

fn build_link_model(
    net: &FiberNetwork,
    links: &CandidateLinkSet,
    params: &ResolvedParams,
    alpha: f64,
    kind: FormulationKind,
    strict: bool,
) -> Result<FormulationArtifacts> {
    let mut model = IlpModel::new(format!("repeater-placement {kind}-based"));
    let mut y_vars = Vec::with_capacity(params.repeaters.len());
    for &u in &params.repeaters {
        let v = model.add_binary(format!("y[{}]", net.id(u)))?;
        y_vars.push((u, v));
    }

    // x variables: pair order, k ascending, links by (u, v)
    let mut link_vars = Vec::new();
    // per (q, k): admitted link vars as (link idx, var)
    let mut admitted: Vec<Vec<Vec<(usize, VarId)>>> = Vec::with_capacity(links.num_pairs());
    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        let mut per_k = Vec::with_capacity(pp.k as usize);
        for k in 1..=pp.k {
            let mut vars = Vec::new();
            for (li, link) in pl.links.iter().enumerate() {
                if !strict && link.length_km > pp.l_max_km {
                    continue;
                }
                let v = model.add_binary(format!(
                    "x[q={}:{},k={k},({},{})]",
                    net.id(pl.s),
                    net.id(pl.t),
                    net.id(link.u),
                    net.id(link.v)
                ))?;
                link_vars.push((q, k, li, v));
                vars.push((li, v));
            }
            if model.num_vars() > MAX_MODEL_VARS {
                return Err(Error::ModelTooLarge(model.num_vars()));
            }
            per_k.push(vars);
        }
        admitted.push(per_k);
    }

    for (q, pl) in links.per_pair.iter().enumerate() {
        let pp = &params.per_pair[q];
        for k in 1..=pp.k {
            let vars = &admitted[q][k as usize - 1];
            // flow conservation at s, t, and every repeater with incident links
            let mut at_node: HashMap<NodeIdx, Vec<(VarId, f64)>> = HashMap::new();
            for &(li, v) in vars {
                let link = &pl.links[li];
                at_node.entry(link.u).or_default().push((v, 1.0));
                at_node.entry(link.v).or_default().push((v, -1.0));
            }
            for (u, rhs) in [(pl.s, 1.0), (pl.t, -1.0)] {
                let terms = at_node.remove(&u).unwrap_or_default();
                model.add_constraint(
                    format!("lbf_flow[q={q},k={k},u={}]", net.id(u)),
                    terms,
                    Sense::Eq,
                    rhs,
                )?;
            }
            let mut nodes: Vec<NodeIdx> = at_node.keys().copied().collect();
            nodes.sort_unstable();
            for u in nodes {
                let terms = at_node.remove(&u).unwrap();
                model.add_constraint(
                    format!("lbf_flow[q={q},k={k},u={}]", net.id(u)),
                    terms,
                    Sense::Eq,
                    0.0,
                )?;
            }
            if strict {
                for &(li, v) in vars {
                    let link = &pl.links[li];
                    model.add_constraint(
                        format!(
                            "lbf_len[q={q},k={k},({},{})]",
                            net.id(link.u),
                            net.id(link.v)
                        ),
                        vec![(v, link.length_km)],
                        Sense::Le,
                        pp.l_max_km,
                    )?;
                }
            }
            if !vars.is_empty() {
                model.add_constraint(
                    format!("lbf_hops[q={q},k={k}]"),
                    vars.iter().map(|&(_, v)| (v, 1.0)).collect(),
                    Sense::Le,
                    pp.n_max as f64 + 1.0,
                )?;
            }
        }

        // per-pair disjointness over outgoing links of each repeater
        let mut outgoing: HashMap<NodeIdx, Vec<(VarId, f64)>> = HashMap::new();
        for per_k in &admitted[q] {
            for &(li, v) in per_k {
                let u = pl.links[li].u;
                if net.node(u).role == crate::network::NodeRole::Repeater {
                    outgoing.entry(u).or_default().push((v, 1.0));
                }
            }
        }
        let mut nodes: Vec<NodeIdx> = outgoing.keys().copied().collect();
        nodes.sort_unstable();
        for u in nodes {
            let terms = outgoing.remove(&u).unwrap();
            if terms.len() >= 2 {
                model.add_constraint(
                    format!("lbf_disjoint[u={},q={q}]", net.id(u)),
                    terms,
                    Sense::Le,
                    1.0,
                )?;
            }
        }

        // at most one direct s-t link across k
        if let Some(st) = pl.link_index(pl.s, pl.t) {
            let terms: Vec<(VarId, f64)> = admitted[q]
                .iter()
                .flatten()
                .filter(|&&(li, _)| li == st)
                .map(|&(_, v)| (v, 1.0))
                .collect();
            if terms.len() >= 2 {
                model.add_constraint(format!("lbf_direct[q={q}]"), terms, Sense::Le, 1.0)?;
            }
        }
    }

    // capacity coupling
    let mut usage: HashMap<NodeIdx, Vec<(VarId, f64)>> = HashMap::new();
    for (q, pl) in links.per_pair.iter().enumerate() {
        for per_k in &admitted[q] {
            for &(li, v) in per_k {
                let u = pl.links[li].u;
                if net.node(u).role == crate::network::NodeRole::Repeater {
                    usage.entry(u).or_default().push((v, 1.0));
                }
            }
        }
    }
    for &(u, yv) in &y_vars {
        if let Some(mut terms) = usage.remove(&u) {
            terms.push((yv, -(params.capacity[u] as f64)));
            model.add_constraint(
                format!("lbf_capacity[u={}]", net.id(u)),
                terms,
                Sense::Le,
                0.0,
            )?;
        }
    }

    let mut objective: Vec<(VarId, f64)> = y_vars.iter().map(|&(_, v)| (v, 1.0)).collect();
    if alpha > 0.0 {
        for &(q, _, li, v) in &link_vars {
            objective.push((v, alpha * links.pair(q).links[li].length_km));
        }
    }
    model.set_objective(objective);

    Ok(FormulationArtifacts {
        model,
        kind,
        params: params.clone(),
        y_vars,
        path_vars: Vec::new(),
        link_vars,
        alpha: if kind == FormulationKind::Generalized {
            Some(alpha)
        } else {
            None
        },
    })
}

/// Unpruned path count per pair on complete candidate sets: the number of
/// ordered repeater selections of each length.
pub fn complete_path_count(num_repeaters: usize) -> u64 {
    let mut total = 0u64;
    let mut perm = 1u64;
    total += perm; // the direct path
    for r in 1..=num_repeaters {
        perm *= (num_repeaters - r + 1) as u64;
        total += perm;
    }
    total
}
