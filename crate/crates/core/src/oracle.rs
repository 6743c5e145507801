//! Exact graph answers on a truss network, used to judge the relaxation
//! solver: Dijkstra distances, near-shortest path counting, a Euclidean
//! lower bound and the analytic sphere geodesic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::truss::TrussNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: usize, to: usize },
    #[error("node index {0} out of range")]
    BadNode(usize),
    #[error("point {0:?} is not on the sphere of radius {1}")]
    NotOnSphere(Vec3, f64),
}

/// Undirected weighted graph in adjacency-list form. Edge ids are carried
/// through so callers can map a path back to elements.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    adj: Vec<Vec<Arc>>,
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    edge: usize,
    weight: f64,
}

impl WeightedGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            adj: vec![Vec::new(); node_count],
        }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, edge: usize, weight: f64) {
        self.adj[u].push(Arc {
            to: v,
            edge,
            weight,
        });
        self.adj[v].push(Arc {
            to: u,
            edge,
            weight,
        });
    }

    /// Element graph of a network, weighted by rest length; edge ids are
    /// element indices.
    pub fn from_elements(net: &TrussNetwork) -> Self {
        let mut g = Self::new(net.node_count());
        for (k, e) in net.elements.iter().enumerate() {
            g.add_edge(e.i, e.j, k, e.rest_length);
        }
        g
    }

    /// Vertex graph of a network: one arc per parent edge weighted by the
    /// summed rest lengths of its elements; edge ids are parent-edge indices.
    /// Midpoint nodes are degree-2 pass-throughs, so distances between
    /// original vertices are those of the element graph, and summing the two
    /// halves first makes them bit-identical to the unsplit network's.
    pub fn from_network(net: &TrussNetwork) -> Self {
        let mut g = Self::new(net.node_count());
        for e in 0..net.edge_count() {
            let (u, v) = net.edge_endpoints(e);
            g.add_edge(u, v, e, net.edge_length(e));
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Reversed so `BinaryHeap` pops the smallest distance, then lowest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path tree.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    pub source: usize,
    pub dist: Vec<f64>,
    /// `(predecessor node, edge id)` for every reached node but the source.
    pub pred: Vec<Option<(usize, usize)>>,
    pub settled: usize,
}

impl ShortestPathTree {
    /// Node sequence from the source to `target`, or `None` if unreachable.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while let Some((p, _)) = self.pred[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    pub fn edges_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut edges = Vec::new();
        let mut cur = target;
        while let Some((p, e)) = self.pred[cur] {
            edges.push(e);
            cur = p;
        }
        edges.reverse();
        Some(edges)
    }
}

/// Binary-heap Dijkstra over the edges accepted by `allow`. Stops early once
/// `stop_at` is settled. Equal tentative distances keep the lower-index
/// predecessor so trees are reproducible.
pub fn shortest_path_tree(
    graph: &WeightedGraph,
    source: usize,
    stop_at: Option<usize>,
    allow: impl Fn(usize) -> bool,
) -> ShortestPathTree {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut settled = 0;
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        settled += 1;
        if Some(u) == stop_at {
            break;
        }
        for arc in &graph.adj[u] {
            if done[arc.to] || !allow(arc.edge) {
                continue;
            }
            let nd = d + arc.weight;
            let better = match nd.total_cmp(&dist[arc.to]) {
                Ordering::Less => true,
                Ordering::Equal => pred[arc.to].is_some_and(|(p, _)| u < p),
                Ordering::Greater => false,
            };
            if better {
                dist[arc.to] = nd;
                pred[arc.to] = Some((u, arc.edge));
                heap.push(HeapEntry {
                    dist: nd,
                    node: arc.to,
                });
            }
        }
    }
    ShortestPathTree {
        source,
        dist,
        pred,
        settled,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDistanceResult {
    pub distance: f64,
    /// Node chain from `a` to `b`, midpoint nodes included.
    pub path: Vec<usize>,
    pub settled: usize,
}

fn check_node(net: &TrussNetwork, v: usize) -> Result<(), OracleError> {
    if v < net.node_count() {
        Ok(())
    } else {
        Err(OracleError::BadNode(v))
    }
}

/// Exact shortest distance between nodes `a` and `b` with element rest
/// lengths as weights.
pub fn dijkstra(
    net: &TrussNetwork,
    a: usize,
    b: usize,
) -> Result<GraphDistanceResult, OracleError> {
    check_node(net, a)?;
    check_node(net, b)?;
    let unreachable = OracleError::Unreachable { from: a, to: b };
    if !(net.is_vertex(a) && net.is_vertex(b)) {
        let graph = WeightedGraph::from_elements(net);
        let tree = shortest_path_tree(&graph, a, Some(b), |_| true);
        let path = tree.path_to(b).ok_or(unreachable)?;
        return Ok(GraphDistanceResult {
            distance: tree.dist[b],
            path,
            settled: tree.settled,
        });
    }
    let graph = WeightedGraph::from_network(net);
    let tree = shortest_path_tree(&graph, a, Some(b), |_| true);
    let edges = tree.edges_to(b).ok_or(unreachable)?;
    let mut path = vec![a];
    for e in edges {
        let (u, v) = net.edge_endpoints(e);
        let next = if *path.last().unwrap() == u { v } else { u };
        if net.split {
            path.push(net.elements[2 * e].j);
        }
        path.push(next);
    }
    Ok(GraphDistanceResult {
        distance: tree.dist[b],
        path,
        settled: tree.settled,
    })
}

/// Distances from `a` to every node; unreachable nodes are infinite.
pub fn distances_from(net: &TrussNetwork, a: usize) -> Vec<f64> {
    if !net.is_vertex(a) {
        let graph = WeightedGraph::from_elements(net);
        return shortest_path_tree(&graph, a, None, |_| true).dist;
    }
    let graph = WeightedGraph::from_network(net);
    let mut dist = shortest_path_tree(&graph, a, None, |_| true).dist;
    if net.split {
        for e in 0..net.edge_count() {
            let (h1, h2) = (net.elements[2 * e], net.elements[2 * e + 1]);
            dist[h1.j] = (dist[h1.i] + h1.rest_length).min(dist[h2.j] + h2.rest_length);
        }
    }
    dist
}

/// Distance between the network anchors, or infinity when disconnected.
pub fn anchor_distance(net: &TrussNetwork) -> f64 {
    let [a, b] = net.anchors;
    dijkstra(net, a, b).map_or(f64::INFINITY, |r| r.distance)
}

/// Number of `a`-`b` paths of length at most `(1 + rel_tol) * d(a, b)`,
/// counted over the DAG of tight edges. Saturates at `i64::MAX`.
pub fn count_shortest_paths(
    net: &TrussNetwork,
    a: usize,
    b: usize,
    rel_tol: f64,
) -> Result<u64, OracleError> {
    check_node(net, a)?;
    check_node(net, b)?;
    let graph = WeightedGraph::from_elements(net);
    let from_a = shortest_path_tree(&graph, a, None, |_| true).dist;
    let to_b = shortest_path_tree(&graph, b, None, |_| true).dist;
    let total = from_a[b];
    if !total.is_finite() {
        return Err(OracleError::Unreachable { from: a, to: b });
    }
    let budget = total * (1.0 + rel_tol);

    let mut order: Vec<usize> = (0..net.node_count())
        .filter(|&v| from_a[v].is_finite())
        .collect();
    order.sort_by(|&u, &v| from_a[u].total_cmp(&from_a[v]).then(u.cmp(&v)));
    let cap = i64::MAX as u64;
    let adjacency = net.adjacency();
    let mut count = vec![0u64; net.node_count()];
    count[a] = 1;
    for &u in &order {
        if count[u] == 0 || u == b {
            continue;
        }
        for &(v, k) in &adjacency[u] {
            let forward = from_a[u] < from_a[v] || (from_a[u] == from_a[v] && u < v);
            if forward && from_a[u] + net.elements[k].rest_length + to_b[v] <= budget {
                count[v] = count[v].saturating_add(count[u]).min(cap);
            }
        }
    }
    Ok(count[b])
}

/// Straight-line distance between the undeformed positions of `a` and `b`.
pub fn euclidean_bound(net: &TrussNetwork, a: usize, b: usize) -> f64 {
    geom::dist(net.nodes[a], net.nodes[b])
}

/// Great-circle distance between two points on a sphere of radius `radius`
/// centred at the origin.
pub fn sphere_geodesic(p: Vec3, q: Vec3, radius: f64) -> Result<f64, OracleError> {
    for x in [p, q] {
        if (geom::norm(x) - radius).abs() > 1e-9 {
            return Err(OracleError::NotOnSphere(x, radius));
        }
    }
    let c = (geom::dot(p, q) / (radius * radius)).clamp(-1.0, 1.0);
    Ok(radius * c.acos())
}
