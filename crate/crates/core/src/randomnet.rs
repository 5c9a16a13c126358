//! Seeded random geometric graphs and hull-based end-node selection.
//!
//! Stream discipline, pinned for reproducibility across platforms: the
//! generator is ChaCha12 seeded with `seed_from_u64`; node i draws its x
//! then its y coordinate, in node order, via the standard uniform [0, 1)
//! distribution. Derived seeds (per instance, per attempt) come from
//! `mix_seed`, a splitmix64 round over `base ^ (index * golden ratio)`.

use crate::error::{Error, Result};
use crate::network::{FiberNetwork, Node, NodeRole};
use crate::planner::{plan, DeploymentPlan, PlanOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

/// Derive a child seed from a base seed and an index.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample `n` points uniformly on the unit square and connect every pair at
/// Euclidean distance at most `radius`, weighted by that distance. All nodes
/// start as potential repeater locations; `assign_end_nodes` flags the hull.
pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<FiberNetwork> {
    if n < 3 {
        return Err(Error::Domain(format!("n={n} must be at least 3")));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2 + 1e-12) {
        return Err(Error::Domain(format!(
            "radius={radius} must lie in (0, sqrt(2)]"
        )));
    }
    let width = (n.max(2) - 1).to_string().len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        nodes.push(Node {
            id: format!("n{i:0width$}"),
            role: NodeRole::Repeater,
            x: Some(x),
            y: Some(y),
        });
    }
    let coords: Vec<(f64, f64)> = nodes
        .iter()
        .map(|nd| (nd.x.unwrap(), nd.y.unwrap()))
        .collect();
    let mut fibers = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ((coords[i].0 - coords[j].0).powi(2) + (coords[i].1 - coords[j].1).powi(2))
                .sqrt();
            if d <= radius && d > 0.0 {
                fibers.push((nodes[i].id.clone(), nodes[j].id.clone(), d));
            }
        }
    }
    FiberNetwork::new(nodes, fibers)
}

/// Strict convex hull (vertices only; collinear boundary points excluded) by
/// the monotone chain, returning indices into `pts`.
fn convex_hull_strict(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        pts[a]
            .partial_cmp(&pts[b])
            .expect("coordinates are not NaN")
    });
    let cross = |o: usize, a: usize, b: usize| -> f64 {
        (pts[a].0 - pts[o].0) * (pts[b].1 - pts[o].1)
            - (pts[a].1 - pts[o].1) * (pts[b].0 - pts[o].0)
    };
    let build = |iter: Box<dyn Iterator<Item = usize> + '_>| {
        let mut chain: Vec<usize> = Vec::new();
        for p in iter {
            while chain.len() >= 2
                && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= 0.0
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain.pop();
        chain
    };
    let mut hull = build(Box::new(order.iter().copied()));
    hull.extend(build(Box::new(order.iter().rev().copied())));
    hull
}

/// Flag the convex-hull vertices of a coordinate graph as end nodes and
/// everything else as potential repeater locations. Collinear point sets
/// degenerate and signal regeneration.
pub fn assign_end_nodes(net: &FiberNetwork) -> Result<FiberNetwork> {
    let pts: Vec<(f64, f64)> = (0..net.len())
        .map(|i| {
            net.coordinates(i)
                .ok_or_else(|| Error::Domain(format!("node {} has no coordinates", net.id(i))))
        })
        .collect::<Result<_>>()?;
    if pts.len() < 3 {
        return Err(Error::Domain("need at least 3 nodes".into()));
    }
    let hull = convex_hull_strict(&pts);
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut roles = vec![NodeRole::Repeater; net.len()];
    for &i in &hull {
        roles[i] = NodeRole::End;
    }
    Ok(net.clone().with_roles(roles))
}

/// A retained random instance: its network, the base-configuration plan that
/// proved it feasible, and how it was found.
#[derive(Debug, Clone)]
pub struct FeasibleInstance {
    pub id: u64,
    pub graph_seed: u64,
    pub attempts: u32,
    pub network: FiberNetwork,
    pub base_plan: DeploymentPlan,
    pub base_solve_ms: f64,
}

/// Resample random geometric graphs (advancing a derived sub-seed) until the
/// base configuration plans successfully, or attempts run out.
pub fn generate_feasible(
    n: usize,
    radius: f64,
    seed: u64,
    base: &PlanOptions,
    max_attempts: u32,
) -> Result<FeasibleInstance> {
    for attempt in 0..max_attempts {
        let graph_seed = mix_seed(seed, attempt as u64);
        let raw = random_geometric(n, radius, graph_seed)?;
        let net = match assign_end_nodes(&raw) {
            Ok(net) => net,
            Err(Error::DegenerateHull) => continue,
            Err(e) => return Err(e),
        };
        let started = Instant::now();
        match plan(&net, base) {
            Ok(base_plan) => {
                return Ok(FeasibleInstance {
                    id: seed,
                    graph_seed,
                    attempts: attempt + 1,
                    network: net,
                    base_plan,
                    base_solve_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::AttemptsExhausted {
        attempts: max_attempts,
    })
}

/// Generate `count` feasible instances with ids 0..count, instance i seeded
/// by `mix_seed(seed, i)`.
pub fn feasible_corpus(
    n: usize,
    radius: f64,
    base: &PlanOptions,
    count: usize,
    seed: u64,
    max_attempts: u32,
) -> Result<Vec<FeasibleInstance>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut inst = generate_feasible(n, radius, mix_seed(seed, i as u64), base, max_attempts)?;
        inst.id = i as u64;
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::requirements::DerivedBounds;

    #[test]
    fn same_seed_same_graph() {
        let a = random_geometric(12, 0.7, 42).unwrap();
        let b = random_geometric(12, 0.7, 42).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.edges(), b.edges());
        for i in 0..a.len() {
            assert_eq!(a.coordinates(i), b.coordinates(i));
        }
        let c = random_geometric(12, 0.7, 43).unwrap();
        assert_ne!(
            a.edges(),
            c.edges(),
            "different seeds should differ (overwhelmingly)"
        );
    }

    #[test]
    fn max_radius_gives_complete_graph() {
        let net = random_geometric(4, std::f64::consts::SQRT_2, 7).unwrap();
        assert_eq!(net.edges().len(), 6);
    }

    #[test]
    fn edges_match_distance_recheck() {
        let net = random_geometric(25, 0.9, 123).unwrap();
        let mut expect = 0;
        for i in 0..25 {
            for j in (i + 1)..25 {
                let (xi, yi) = net.coordinates(i).unwrap();
                let (xj, yj) = net.coordinates(j).unwrap();
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                if d <= 0.9 {
                    expect += 1;
                }
            }
        }
        assert_eq!(net.edges().len(), expect);
        for &(a, b, l) in net.edges() {
            let (xa, ya) = net.coordinates(a).unwrap();
            let (xb, yb) = net.coordinates(b).unwrap();
            let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            assert!((l - d).abs() < 1e-12);
        }
    }

    #[test]
    fn corners_are_end_nodes_interior_is_repeater() {
        let nodes = vec![
            Node { id: "p0".into(), role: NodeRole::Repeater, x: Some(0.0), y: Some(0.0) },
            Node { id: "p1".into(), role: NodeRole::Repeater, x: Some(1.0), y: Some(0.0) },
            Node { id: "p2".into(), role: NodeRole::Repeater, x: Some(1.0), y: Some(1.0) },
            Node { id: "p3".into(), role: NodeRole::Repeater, x: Some(0.0), y: Some(1.0) },
            Node { id: "p4".into(), role: NodeRole::Repeater, x: Some(0.5), y: Some(0.5) },
        ];
        let net = FiberNetwork::new(nodes, vec![]).unwrap();
        let assigned = assign_end_nodes(&net).unwrap();
        assert_eq!(assigned.end_nodes().len(), 4);
        assert_eq!(assigned.repeater_nodes().len(), 1);
        let center = assigned.index_of("p4").unwrap();
        assert_eq!(assigned.node(center).role, NodeRole::Repeater);
    }

    #[test]
    fn points_on_circle_all_become_end_nodes() {
        let n = 8;
        let nodes: Vec<Node> = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                Node {
                    id: format!("p{i}"),
                    role: NodeRole::Repeater,
                    x: Some(0.5 + 0.4 * a.cos()),
                    y: Some(0.5 + 0.4 * a.sin()),
                }
            })
            .collect();
        let net = FiberNetwork::new(nodes, vec![]).unwrap();
        let assigned = assign_end_nodes(&net).unwrap();
        assert_eq!(assigned.end_nodes().len(), n);
        assert!(assigned.repeater_nodes().is_empty());
    }

    #[test]
    fn collinear_points_signal_regeneration() {
        let nodes: Vec<Node> = (0..4)
            .map(|i| Node {
                id: format!("p{i}"),
                role: NodeRole::Repeater,
                x: Some(0.1 * i as f64),
                y: Some(0.2 * i as f64),
            })
            .collect();
        let net = FiberNetwork::new(nodes, vec![]).unwrap();
        assert!(matches!(
            assign_end_nodes(&net),
            Err(Error::DegenerateHull)
        ));
    }

    #[test]
    fn collinear_boundary_point_stays_repeater() {
        let nodes = vec![
            Node { id: "p0".into(), role: NodeRole::Repeater, x: Some(0.0), y: Some(0.0) },
            Node { id: "p1".into(), role: NodeRole::Repeater, x: Some(1.0), y: Some(0.0) },
            Node { id: "p2".into(), role: NodeRole::Repeater, x: Some(0.5), y: Some(0.0) },
            Node { id: "p3".into(), role: NodeRole::Repeater, x: Some(0.5), y: Some(1.0) },
        ];
        let net = FiberNetwork::new(nodes, vec![]).unwrap();
        let assigned = assign_end_nodes(&net).unwrap();
        // p2 sits on the hull edge p0-p1 but is not a vertex
        let mid = assigned.index_of("p2").unwrap();
        assert_eq!(assigned.node(mid).role, NodeRole::Repeater);
        assert_eq!(assigned.end_nodes().len(), 3);
    }

    #[test]
    fn hull_matches_orientation_test_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(4..=25);
            let pts: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
            let hull: std::collections::BTreeSet<usize> =
                convex_hull_strict(&pts).into_iter().collect();
            // oracle: i is a strict hull vertex iff no other point set
            // contains it, i.e. for some direction all others are strictly
            // on one side; O(n^3) pairwise certificate check
            for i in 0..n {
                let inside = point_in_hull_interior_or_edge(&pts, i);
                assert_eq!(
                    !hull.contains(&i),
                    inside,
                    "point {i} hull membership disagrees"
                );
            }
        }
    }

    /// True when pts[i] is expressible as a convex combination of the other
    /// points (interior or on an edge), decided by a tiny LP-free test:
    /// i is NOT a strict vertex iff it lies inside or on the hull of others.
    fn point_in_hull_interior_or_edge(pts: &[(f64, f64)], i: usize) -> bool {
        let others: Vec<(f64, f64)> = (0..pts.len()).filter(|&j| j != i).map(|j| pts[j]).collect();
        let idx: Vec<usize> = (0..others.len()).collect();
        // hull of the others, then point-in-polygon (boundary counts)
        let mut hull_pts: Vec<(f64, f64)> = Vec::new();
        {
            let mut order = idx.clone();
            order.sort_by(|&a, &b| others[a].partial_cmp(&others[b]).unwrap());
            let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
                (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
            };
            let mut lower: Vec<(f64, f64)> = Vec::new();
            for &p in &order {
                while lower.len() >= 2
                    && cross(lower[lower.len() - 2], lower[lower.len() - 1], others[p]) <= 0.0
                {
                    lower.pop();
                }
                lower.push(others[p]);
            }
            let mut upper: Vec<(f64, f64)> = Vec::new();
            for &p in order.iter().rev() {
                while upper.len() >= 2
                    && cross(upper[upper.len() - 2], upper[upper.len() - 1], others[p]) <= 0.0
                {
                    upper.pop();
                }
                upper.push(others[p]);
            }
            lower.pop();
            upper.pop();
            hull_pts.extend(lower);
            hull_pts.extend(upper);
        }
        let p = pts[i];
        let m = hull_pts.len();
        if m < 3 {
            return false;
        }
        for k in 0..m {
            let a = hull_pts[k];
            let b = hull_pts[(k + 1) % m];
            let cr = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cr < 0.0 {
                return false;
            }
        }
        true
    }

    #[test]
    fn generate_feasible_on_easy_config() {
        let base = PlanOptions {
            k: Some(1),
            d: Some(6),
            bounds_override: Some(DerivedBounds {
                n_max: 6,
                l_max_km: 1.5,
            }),
            ..PlanOptions::default()
        };
        let inst = generate_feasible(8, std::f64::consts::SQRT_2, 5, &base, 10).unwrap();
        assert_eq!(inst.attempts, 1, "complete graph with loose bounds");
        assert!(inst.base_plan.metrics.repeater_count == 0);
    }

    #[test]
    fn generate_feasible_exhaustion_path() {
        // tiny radius: almost surely disconnected pairs; strict bounds
        let base = PlanOptions {
            k: Some(3),
            d: Some(1),
            bounds_override: Some(DerivedBounds {
                n_max: 1,
                l_max_km: 0.05,
            }),
            ..PlanOptions::default()
        };
        let err = generate_feasible(10, 0.05, 11, &base, 3).unwrap_err();
        assert!(matches!(err, Error::AttemptsExhausted { attempts: 3 }));
    }

    #[test]
    fn mix_seed_spreads_indices() {
        let s: std::collections::BTreeSet<u64> = (0..100).map(|i| mix_seed(7, i)).collect();
        assert_eq!(s.len(), 100);
    }
}
