//! Fiber-network graph: loading, validation, shortest paths and the derived
//! candidate-link sets consumed by the formulations.
//!
//! Nodes are stored sorted by id so that index order equals lexicographic id
//! order; all tie-breaking below relies on that.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Index of a node in `FiberNetwork::nodes`.
pub type NodeIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    End,
    Repeater,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(rename = "type")]
    pub role: NodeRole,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FiberDoc {
    a: String,
    b: String,
    length_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    nodes: Vec<Node>,
    fibers: Vec<FiberDoc>,
}

/// Undirected weighted fiber graph with end nodes and potential repeater
/// locations. Parallel fibers are collapsed to the shortest at load time,
/// so the adjacency is simple.
#[derive(Debug, Clone)]
pub struct FiberNetwork {
    nodes: Vec<Node>,
    /// Edge list: (smaller idx, larger idx, length). Sorted.
    edges: Vec<(NodeIdx, NodeIdx, f64)>,
    /// Per node: sorted (neighbor, length).
    adj: Vec<Vec<(NodeIdx, f64)>>,
}

impl FiberNetwork {
    /// Build from parts, collapsing parallel fibers; full validation is the
    /// loader's job (`from_json` / `validate`).
    pub fn new(mut nodes: Vec<Node>, fibers: Vec<(String, String, f64)>) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index: BTreeMap<String, NodeIdx> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(n.id.clone()));
            }
        }
        let mut best: BTreeMap<(NodeIdx, NodeIdx), f64> = BTreeMap::new();
        for (a, b, length) in fibers {
            let &ia = index
                .get(&a)
                .ok_or_else(|| Error::UnknownEndpoint(a.clone()))?;
            let &ib = index
                .get(&b)
                .ok_or_else(|| Error::UnknownEndpoint(b.clone()))?;
            if ia == ib {
                return Err(Error::Schema(format!("fiber {a}-{b} is a self loop")));
            }
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::NonpositiveLength { a, b, length });
            }
            let key = (ia.min(ib), ia.max(ib));
            let entry = best.entry(key).or_insert(f64::INFINITY);
            if length < *entry {
                *entry = length;
            }
        }
        let edges: Vec<(NodeIdx, NodeIdx, f64)> =
            best.into_iter().map(|((a, b), l)| (a, b, l)).collect();
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(a, b, l) in &edges {
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
        for list in &mut adj {
            list.sort_by(|x, y| x.0.cmp(&y.0));
        }
        Ok(FiberNetwork { nodes, edges, adj })
    }

    /// Check the invariants a planning input must satisfy.
    pub fn validate(&self) -> Result<()> {
        let ends = self.end_nodes().len();
        if ends < 2 {
            return Err(Error::TooFewEndNodes(ends));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let fibers = doc
            .fibers
            .into_iter()
            .map(|f| (f.a, f.b, f.length_km))
            .collect();
        let net = FiberNetwork::new(doc.nodes, fibers)?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            nodes: self.nodes.clone(),
            fibers: self
                .edges
                .iter()
                .map(|&(a, b, l)| FiberDoc {
                    a: self.nodes[a].id.clone(),
                    b: self.nodes[b].id.clone(),
                    length_km: l,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("network serializes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: NodeIdx) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn id(&self, i: NodeIdx) -> &str {
        &self.nodes[i].id
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIdx> {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(id))
            .ok()
    }

    pub fn edges(&self) -> &[(NodeIdx, NodeIdx, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: NodeIdx) -> &[(NodeIdx, f64)] {
        &self.adj[i]
    }

    /// Indices of end nodes, ascending.
    pub fn end_nodes(&self) -> Vec<NodeIdx> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role == NodeRole::End)
            .collect()
    }

    /// Indices of potential repeater locations, ascending.
    pub fn repeater_nodes(&self) -> Vec<NodeIdx> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role == NodeRole::Repeater)
            .collect()
    }

    pub fn coordinates(&self, i: NodeIdx) -> Option<(f64, f64)> {
        match (self.nodes[i].x, self.nodes[i].y) {
            (Some(x), Some(y)) => Some((x, y)),
            _ => None,
        }
    }

    /// Replace node roles; used by hull-based end-node assignment.
    pub(crate) fn with_roles(mut self, roles: Vec<NodeRole>) -> Self {
        assert_eq!(roles.len(), self.nodes.len());
        for (n, r) in self.nodes.iter_mut().zip(roles) {
            n.role = r;
        }
        self
    }
}

/// Which nodes shortest routes may pass through as interior hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteThrough {
    /// Any node may be a passive hub on a route (default).
    #[default]
    AnyNode,
    /// Routes may not pass through end nodes; interiors are repeaters only.
    RepeatersOnly,
}

/// All-sources shortest-path distances over the fiber graph.
///
/// Routes are reconstructed lazily, deterministically tie-broken to the
/// lexicographically smallest node-id sequence.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    /// row per source, column per node
    dist: Vec<f64>,
    source_slot: Vec<Option<usize>>,
    through: RouteThrough,
}

impl DistanceTable {
    pub fn distance(&self, from: NodeIdx, to: NodeIdx) -> f64 {
        let slot = self.source_slot[from].expect("node was not a shortest-path source");
        self.dist[slot * self.n + to]
    }

    pub fn reachable(&self, from: NodeIdx, to: NodeIdx) -> bool {
        self.distance(from, to).is_finite()
    }

    /// Shortest route from `from` to `to` as a node walk, or None when
    /// unreachable.
    ///
    /// The walk descends the Dijkstra tree rooted at `to` using exact float
    /// equality: each finalized distance was computed as predecessor distance
    /// plus edge weight, so the predecessor always matches bitwise and the
    /// walk cannot strand on near-ties. Among exactly-tying continuations the
    /// smallest node index (= smallest id) wins, deterministically.
    pub fn route(&self, net: &FiberNetwork, from: NodeIdx, to: NodeIdx) -> Option<Vec<NodeIdx>> {
        if !self.distance(from, to).is_finite() {
            return None;
        }
        if self.source_slot[to].is_some() {
            let rest = |v: NodeIdx| self.distance(to, v);
            self.descend(net, from, to, &rest)
        } else {
            let fresh = shortest_paths(net, &[to], self.through);
            let rest = |v: NodeIdx| fresh.distance(to, v);
            self.descend(net, from, to, &rest)
        }
    }

    fn descend(
        &self,
        net: &FiberNetwork,
        from: NodeIdx,
        to: NodeIdx,
        rest: &dyn Fn(NodeIdx) -> f64,
    ) -> Option<Vec<NodeIdx>> {
        let mut walk = vec![from];
        let mut cur = from;
        while cur != to {
            let here = rest(cur);
            let mut next: Option<NodeIdx> = None;
            for &(nb, w) in net.neighbors(cur) {
                if self.through == RouteThrough::RepeatersOnly
                    && nb != to
                    && net.node(nb).role == NodeRole::End
                {
                    continue;
                }
                if rest(nb) + w == here {
                    next = Some(nb);
                    break; // neighbors sorted: first hit is smallest index
                }
            }
            let nb = next?;
            walk.push(nb);
            cur = nb;
        }
        Some(walk)
    }
}

/// Dijkstra from every listed source. `through` restricts which nodes may be
/// expanded as route interiors.
pub fn shortest_paths(
    net: &FiberNetwork,
    sources: &[NodeIdx],
    through: RouteThrough,
) -> DistanceTable {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = net.len();
    let mut dist = vec![f64::INFINITY; sources.len() * n];
    let mut source_slot = vec![None; n];
    for (slot, &s) in sources.iter().enumerate() {
        source_slot[s] = Some(slot);
        let row = &mut dist[slot * n..(slot + 1) * n];
        let mut heap: BinaryHeap<Reverse<(ordered::F64, NodeIdx)>> = BinaryHeap::new();
        row[s] = 0.0;
        heap.push(Reverse((ordered::F64(0.0), s)));
        while let Some(Reverse((ordered::F64(d), u))) = heap.pop() {
            if d > row[u] {
                continue;
            }
            // Expansion through u is allowed for the source itself and for
            // permitted interiors; other nodes keep their final distance but
            // do not relax onward.
            if u != s
                && through == RouteThrough::RepeatersOnly
                && net.node(u).role == NodeRole::End
            {
                continue;
            }
            for &(v, w) in net.neighbors(u) {
                let nd = d + w;
                if nd < row[v] {
                    row[v] = nd;
                    heap.push(Reverse((ordered::F64(nd), v)));
                }
            }
        }
    }
    DistanceTable {
        n,
        dist,
        source_slot,
        through,
    }
}

mod ordered {
    /// Total order on finite f64 distances for the heap.
    #[derive(PartialEq, PartialOrd)]
    pub struct F64(pub f64);
    impl Eq for F64 {}
    #[allow(clippy::derive_ord_xor_partial_ord)]
    impl Ord for F64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.partial_cmp(other).expect("distances are not NaN")
        }
    }
}

/// One ordered pair per unordered end-node pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndNodePairSet {
    pub pairs: Vec<(NodeIdx, NodeIdx)>,
    pub orientation_seed: u64,
    /// True when orientation came from node-id order instead of the seed.
    pub canonical: bool,
}

/// Orient each unordered end-node pair with a seeded coin flip. The stream is
/// one draw per pair, pairs visited in ascending (i, j) index order.
pub fn build_pair_set(net: &FiberNetwork, seed: u64) -> Result<EndNodePairSet> {
    let ends = net.end_nodes();
    if ends.len() < 2 {
        return Err(Error::TooFewEndNodes(ends.len()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(ends.len() * (ends.len() - 1) / 2);
    for i in 0..ends.len() {
        for j in (i + 1)..ends.len() {
            if rng.gen::<bool>() {
                pairs.push((ends[i], ends[j]));
            } else {
                pairs.push((ends[j], ends[i]));
            }
        }
    }
    Ok(EndNodePairSet {
        pairs,
        orientation_seed: seed,
        canonical: false,
    })
}

/// Pair set oriented by node-id order (smaller id is the source).
pub fn build_pair_set_canonical(net: &FiberNetwork) -> Result<EndNodePairSet> {
    let ends = net.end_nodes();
    if ends.len() < 2 {
        return Err(Error::TooFewEndNodes(ends.len()));
    }
    let mut pairs = Vec::new();
    for i in 0..ends.len() {
        for j in (i + 1)..ends.len() {
            pairs.push((ends[i], ends[j]));
        }
    }
    Ok(EndNodePairSet {
        pairs,
        orientation_seed: 0,
        canonical: true,
    })
}

/// A candidate elementary link: an ordered node pair with its shortest fiber
/// route and total length.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLink {
    pub u: NodeIdx,
    pub v: NodeIdx,
    pub length_km: f64,
    /// Node walk u..v realizing the link; fibers are consecutive pairs.
    pub route: Vec<NodeIdx>,
}

/// Candidate links for one end-node pair.
#[derive(Debug, Clone)]
pub struct PairLinks {
    pub s: NodeIdx,
    pub t: NodeIdx,
    /// Sorted by (u, v).
    pub links: Vec<CandidateLink>,
    /// Index into `links` by (u, v).
    index: BTreeMap<(NodeIdx, NodeIdx), usize>,
}

impl PairLinks {
    pub fn link_index(&self, u: NodeIdx, v: NodeIdx) -> Option<usize> {
        self.index.get(&(u, v)).copied()
    }

    /// Links leaving `u`, as (link index, v).
    pub fn outgoing(&self, u: NodeIdx) -> impl Iterator<Item = (usize, NodeIdx)> + '_ {
        self.index
            .range((u, 0)..=(u, usize::MAX))
            .map(|(&(_, v), &li)| (li, v))
    }
}

/// Options for candidate-link construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct CandidateOptions {
    pub through: RouteThrough,
}

/// Candidate links for every pair, plus the distance table they came from.
#[derive(Debug)]
pub struct CandidateLinkSet {
    pub pair_set: EndNodePairSet,
    pub per_pair: Vec<PairLinks>,
    pub distances: DistanceTable,
}

impl CandidateLinkSet {
    pub fn pair(&self, q: usize) -> &PairLinks {
        &self.per_pair[q]
    }

    pub fn num_pairs(&self) -> usize {
        self.per_pair.len()
    }
}

/// Construct the per-pair candidate links: every ordered (n1, n2) with
/// n1 in R+{s}, n2 in R+{t}, n1 != n2 and n1 connected to n2, carrying the
/// shortest-route length and fiber walk.
///
/// A pair whose endpoints are disconnected in the fiber graph is reported as
/// structured infeasibility rather than silently dropped.
pub fn build_candidate_links(
    net: &FiberNetwork,
    pair_set: &EndNodePairSet,
    opts: CandidateOptions,
) -> Result<CandidateLinkSet> {
    let repeaters = net.repeater_nodes();
    let mut sources: Vec<NodeIdx> = repeaters.clone();
    sources.extend(net.end_nodes());
    sources.sort_unstable();
    let table = shortest_paths(net, &sources, opts.through);

    let mut per_pair = Vec::with_capacity(pair_set.pairs.len());
    for &(s, t) in &pair_set.pairs {
        if !table.reachable(s, t) {
            return Err(Error::Infeasible {
                stage: "candidate-links".into(),
                detail: format!(
                    "end nodes {} and {} are disconnected in the fiber graph",
                    net.id(s),
                    net.id(t)
                ),
            });
        }
        let mut links = Vec::new();
        let mut heads: Vec<NodeIdx> = repeaters.clone();
        heads.push(s);
        heads.sort_unstable();
        let mut tails: Vec<NodeIdx> = repeaters.clone();
        tails.push(t);
        tails.sort_unstable();
        for &u in &heads {
            for &v in &tails {
                if u == v {
                    continue;
                }
                let d = table.distance(u, v);
                if !d.is_finite() {
                    continue;
                }
                let route = table
                    .route(net, u, v)
                    .expect("finite distance implies a route");
                let length_km: f64 = route
                    .windows(2)
                    .map(|w| {
                        net.neighbors(w[0])
                            .iter()
                            .find(|&&(nb, _)| nb == w[1])
                            .map(|&(_, l)| l)
                            .expect("route follows edges")
                    })
                    .sum();
                links.push(CandidateLink {
                    u,
                    v,
                    length_km,
                    route,
                });
            }
        }
        links.sort_by(|a, b| (a.u, a.v).cmp(&(b.u, b.v)));
        let index = links
            .iter()
            .enumerate()
            .map(|(i, l)| ((l.u, l.v), i))
            .collect();
        per_pair.push(PairLinks { s, t, links, index });
    }
    Ok(CandidateLinkSet {
        pair_set: pair_set.clone(),
        per_pair,
        distances: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn net_from(
        ends: &[&str],
        reps: &[&str],
        fibers: &[(&str, &str, f64)],
    ) -> FiberNetwork {
        let mut nodes: Vec<Node> = ends
            .iter()
            .map(|id| Node {
                id: id.to_string(),
                role: NodeRole::End,
                x: None,
                y: None,
            })
            .collect();
        nodes.extend(reps.iter().map(|id| Node {
            id: id.to_string(),
            role: NodeRole::Repeater,
            x: None,
            y: None,
        }));
        FiberNetwork::new(
            nodes,
            fibers
                .iter()
                .map(|&(a, b, l)| (a.to_string(), b.to_string(), l))
                .collect(),
        )
        .unwrap()
    }

    fn line3() -> FiberNetwork {
        net_from(&["a", "b"], &["r"], &[("a", "r", 1.0), ("r", "b", 1.0)])
    }

    #[test]
    fn loads_four_node_document() {
        let doc = r#"{
          "nodes": [
            {"id": "a", "type": "end"},
            {"id": "b", "type": "end"},
            {"id": "r1", "type": "repeater"},
            {"id": "r2", "type": "repeater", "x": 0.5, "y": 0.5}
          ],
          "fibers": [
            {"a": "a", "b": "r1", "length_km": 10.0},
            {"a": "r1", "b": "r2", "length_km": 5.0},
            {"a": "r2", "b": "b", "length_km": 7.5},
            {"a": "a", "b": "b", "length_km": 40.0}
          ]
        }"#;
        let net = FiberNetwork::from_json(doc).unwrap();
        assert_eq!(net.len(), 4);
        assert_eq!(net.end_nodes().len(), 2);
        assert_eq!(net.repeater_nodes().len(), 2);
        assert_eq!(net.coordinates(net.index_of("r2").unwrap()), Some((0.5, 0.5)));
    }

    #[test]
    fn rejects_zero_length_fiber() {
        let doc = r#"{"nodes":[{"id":"a","type":"end"},{"id":"b","type":"end"}],
                      "fibers":[{"a":"a","b":"b","length_km":0.0}]}"#;
        let err = FiberNetwork::from_json(doc).unwrap_err();
        assert!(matches!(err, Error::NonpositiveLength { .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_endpoint_and_few_ends() {
        let doc = r#"{"nodes":[{"id":"a","type":"end"},{"id":"b","type":"end"}],
                      "fibers":[{"a":"a","b":"zz","length_km":1.0}]}"#;
        assert!(matches!(
            FiberNetwork::from_json(doc).unwrap_err(),
            Error::UnknownEndpoint(_)
        ));
        let doc = r#"{"nodes":[{"id":"a","type":"end"},{"id":"r","type":"repeater"}],
                      "fibers":[{"a":"a","b":"r","length_km":1.0}]}"#;
        assert!(matches!(
            FiberNetwork::from_json(doc).unwrap_err(),
            Error::TooFewEndNodes(1)
        ));
    }

    #[test]
    fn parallel_fibers_collapse_to_shortest() {
        let net = net_from(
            &["a", "b"],
            &[],
            &[("a", "b", 3.0), ("a", "b", 2.0)],
        );
        assert_eq!(net.edges().len(), 1);
        assert_eq!(net.edges()[0].2, 2.0);
    }

    #[test]
    fn shortest_path_on_line() {
        let net = line3();
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        let r = net.index_of("r").unwrap();
        let table = shortest_paths(&net, &[a], RouteThrough::AnyNode);
        assert_eq!(table.distance(a, b), 2.0);
        assert_eq!(table.distance(a, a), 0.0);
        let table2 = shortest_paths(&net, &[a, b], RouteThrough::AnyNode);
        assert_eq!(table2.route(&net, a, b).unwrap(), vec![a, r, b]);
        assert_eq!(table2.route(&net, a, a).unwrap(), vec![a]);
    }

    #[test]
    fn disconnected_distance_is_infinite() {
        let net = net_from(
            &["a", "b"],
            &["r"],
            &[("a", "r", 1.0)],
        );
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        let table = shortest_paths(&net, &[a], RouteThrough::AnyNode);
        assert!(table.distance(a, b).is_infinite());
    }

    #[test]
    fn route_tie_breaks_lexicographically() {
        // two equal-length a->b routes: via p and via q; "p" < "q"
        let net = net_from(
            &["a", "b"],
            &["p", "q"],
            &[
                ("a", "p", 1.0),
                ("p", "b", 1.0),
                ("a", "q", 1.0),
                ("q", "b", 1.0),
            ],
        );
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        let p = net.index_of("p").unwrap();
        let table = shortest_paths(&net, &[a, b], RouteThrough::AnyNode);
        assert_eq!(table.route(&net, a, b).unwrap(), vec![a, p, b]);
    }

    #[test]
    fn pair_set_is_seeded_and_deterministic() {
        let net = net_from(
            &["a", "b", "c", "d"],
            &[],
            &[
                ("a", "b", 1.0),
                ("b", "c", 1.0),
                ("c", "d", 1.0),
                ("d", "a", 1.0),
            ],
        );
        let p1 = build_pair_set(&net, 11).unwrap();
        let p2 = build_pair_set(&net, 11).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.pairs.len(), 6);
        // bijection onto unordered pairs
        let mut unordered: Vec<(NodeIdx, NodeIdx)> = p1
            .pairs
            .iter()
            .map(|&(s, t)| (s.min(t), s.max(t)))
            .collect();
        unordered.sort_unstable();
        unordered.dedup();
        assert_eq!(unordered.len(), 6);
    }

    #[test]
    fn pair_set_single_pair_orientations() {
        let net = net_from(&["a", "b"], &[], &[("a", "b", 1.0)]);
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        for seed in 0..8 {
            let p = build_pair_set(&net, seed).unwrap();
            assert_eq!(p.pairs.len(), 1);
            assert!(p.pairs[0] == (a, b) || p.pairs[0] == (b, a));
        }
        let c = build_pair_set_canonical(&net).unwrap();
        assert_eq!(c.pairs[0], (a, b));
    }

    #[test]
    fn candidate_links_count_with_two_repeaters() {
        // complete distances: 2 repeaters, 1 pair -> |E_q| = 7
        let net = net_from(
            &["a", "b"],
            &["r1", "r2"],
            &[
                ("a", "r1", 1.0),
                ("a", "r2", 1.5),
                ("r1", "r2", 1.0),
                ("r1", "b", 1.0),
                ("r2", "b", 1.0),
            ],
        );
        let pairs = build_pair_set_canonical(&net).unwrap();
        let set = build_candidate_links(&net, &pairs, CandidateOptions::default()).unwrap();
        assert_eq!(set.pair(0).links.len(), 7);
    }

    #[test]
    fn candidate_links_no_repeaters_is_direct_only() {
        let net = net_from(&["a", "b"], &[], &[("a", "b", 2.0)]);
        let pairs = build_pair_set_canonical(&net).unwrap();
        let set = build_candidate_links(&net, &pairs, CandidateOptions::default()).unwrap();
        assert_eq!(set.pair(0).links.len(), 1);
        assert_eq!(set.pair(0).links[0].length_km, 2.0);
    }

    #[test]
    fn candidate_link_routes_on_line() {
        let net = line3();
        let a = net.index_of("a").unwrap();
        let b = net.index_of("b").unwrap();
        let r = net.index_of("r").unwrap();
        let pairs = build_pair_set_canonical(&net).unwrap();
        let set = build_candidate_links(&net, &pairs, CandidateOptions::default()).unwrap();
        let pl = set.pair(0);
        let direct = &pl.links[pl.link_index(a, b).unwrap()];
        assert_eq!(direct.length_km, 2.0);
        assert_eq!(direct.route, vec![a, r, b]);
        let leg = &pl.links[pl.link_index(a, r).unwrap()];
        assert_eq!(leg.length_km, 1.0);
    }

    #[test]
    fn disconnected_pair_is_flagged() {
        let net = net_from(&["a", "b"], &["r"], &[("a", "r", 1.0)]);
        let pairs = build_pair_set_canonical(&net).unwrap();
        let err = build_candidate_links(&net, &pairs, CandidateOptions::default()).unwrap_err();
        assert_eq!(err.infeasible_stage(), Some("candidate-links"));
    }

    #[test]
    fn route_through_repeaters_only_avoids_end_hubs() {
        // r1 - c - r2 is shorter, but c is an end node; restricted mode must
        // route r1 - m - r2.
        let net = net_from(
            &["a", "b", "c"],
            &["r1", "r2", "m"],
            &[
                ("a", "r1", 1.0),
                ("r2", "b", 1.0),
                ("r1", "c", 0.5),
                ("c", "r2", 0.5),
                ("r1", "m", 1.0),
                ("m", "r2", 1.0),
                ("a", "c", 1.0),
                ("c", "b", 1.0),
            ],
        );
        let r1 = net.index_of("r1").unwrap();
        let r2 = net.index_of("r2").unwrap();
        let m = net.index_of("m").unwrap();
        let any = shortest_paths(&net, &[r1, r2], RouteThrough::AnyNode);
        assert_eq!(any.distance(r1, r2), 1.0);
        let strict = shortest_paths(&net, &[r1, r2], RouteThrough::RepeatersOnly);
        assert_eq!(strict.distance(r1, r2), 2.0);
        assert_eq!(strict.route(&net, r1, r2).unwrap(), vec![r1, m, r2]);
    }

    /// Floyd-Warshall oracle for cross-checking Dijkstra.
    fn floyd_warshall(net: &FiberNetwork) -> Vec<Vec<f64>> {
        let n = net.len();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for i in 0..n {
            d[i][i] = 0.0;
        }
        for &(a, b, l) in net.edges() {
            d[a][b] = d[a][b].min(l);
            d[b][a] = d[b][a].min(l);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn dijkstra_matches_floyd_warshall_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..30 {
            let n = rng.gen_range(3..=12);
            let mut nodes = Vec::new();
            for i in 0..n {
                nodes.push(Node {
                    id: format!("n{i:02}"),
                    role: if i < 2 { NodeRole::End } else { NodeRole::Repeater },
                    x: None,
                    y: None,
                });
            }
            let mut fibers = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.45 {
                        fibers.push((format!("n{i:02}"), format!("n{j:02}"), rng.gen_range(0.1..9.0)));
                    }
                }
            }
            let net = FiberNetwork::new(nodes, fibers).unwrap();
            let sources: Vec<NodeIdx> = (0..net.len()).collect();
            let table = shortest_paths(&net, &sources, RouteThrough::AnyNode);
            let fw = floyd_warshall(&net);
            for i in 0..net.len() {
                for j in 0..net.len() {
                    let a = table.distance(i, j);
                    let b = fw[i][j];
                    if a.is_finite() || b.is_finite() {
                        assert!(
                            (a - b).abs() <= 1e-9 * (1.0 + b.abs()),
                            "dist({i},{j}): dijkstra={a} fw={b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn candidate_lengths_match_distance_table() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.gen_range(4..=10);
            let mut nodes = Vec::new();
            for i in 0..n {
                nodes.push(Node {
                    id: format!("n{i:02}"),
                    role: if i < 2 { NodeRole::End } else { NodeRole::Repeater },
                    x: None,
                    y: None,
                });
            }
            let mut fibers = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.7 {
                        fibers.push((format!("n{i:02}"), format!("n{j:02}"), rng.gen_range(0.1..5.0)));
                    }
                }
            }
            let net = FiberNetwork::new(nodes, fibers).unwrap();
            if net.end_nodes().len() < 2 {
                continue;
            }
            let pairs = build_pair_set(&net, 3).unwrap();
            let Ok(set) = build_candidate_links(&net, &pairs, CandidateOptions::default()) else {
                continue; // disconnected pair
            };
            for pl in &set.per_pair {
                for link in &pl.links {
                    let d = set.distances.distance(link.u, link.v);
                    assert!((link.length_km - d).abs() <= 1e-9 * (1.0 + d));
                    // walk is simple
                    let mut seen = std::collections::BTreeSet::new();
                    for &w in &link.route {
                        assert!(seen.insert(w), "repeated node in route");
                    }
                }
            }
        }
    }
}
