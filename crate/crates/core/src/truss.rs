//! Surface mesh to truss network conversion.
//!
//! Every unique mesh edge becomes an axial element. With `split` enabled each
//! edge is divided at its midpoint by an extra free node, which removes the
//! rigid triangles a triangulated surface would otherwise contain. Elements
//! keep the index of the edge they came from so strains can be mapped back
//! onto the surface.
//!
//! Node layout: original vertices first (node `v` is mesh vertex `v`), then
//! one midpoint node per edge in edge order. Split elements come in pairs,
//! `2e` joins the lower vertex of edge `e` to its midpoint and `2e + 1` the
//! midpoint to the upper vertex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::mesh::{face_edges, MeshError, TerrainMesh};

#[derive(Debug, Error, PartialEq)]
pub enum TrussError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("anchor {which} is {distance:.3} m from the nearest vertex (limit {limit:.3} m)")]
    AnchorTooFar {
        which: char,
        distance: f64,
        limit: f64,
    },
    #[error("both anchors snap to vertex {0}")]
    AnchorsCoincide(usize),
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Lower vertex index.
    pub a: usize,
    /// Upper vertex index.
    pub b: usize,
    /// One or two incident faces.
    pub faces: Vec<usize>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet {
    pub edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Index of the edge joining `u` and `v`, if any.
    pub fn find(&self, u: usize, v: usize) -> Option<usize> {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search_by(|e| (e.a, e.b).cmp(&key)).ok()
    }

    pub fn total_length(&self) -> f64 {
        geom::sorted_sum(self.edges.iter().map(|e| e.length))
    }
}

/// Distinct undirected edges of all faces, sorted by `(a, b)`.
pub fn extract_edges(mesh: &TerrainMesh) -> Result<EdgeSet, TrussError> {
    mesh.ensure_valid()?;
    let edges = mesh
        .edge_faces()
        .into_iter()
        .map(|((a, b), faces)| Edge {
            a,
            b,
            length: geom::dist(mesh.vertices[a], mesh.vertices[b]),
            faces,
        })
        .collect();
    Ok(EdgeSet { edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "(usize, usize, f64, usize)",
    into = "(usize, usize, f64, usize)"
)]
pub struct Element {
    pub i: usize,
    pub j: usize,
    pub rest_length: f64,
    pub parent_edge: usize,
}

impl From<(usize, usize, f64, usize)> for Element {
    fn from((i, j, rest_length, parent_edge): (usize, usize, f64, usize)) -> Self {
        Self {
            i,
            j,
            rest_length,
            parent_edge,
        }
    }
}

impl From<Element> for (usize, usize, f64, usize) {
    fn from(e: Element) -> Self {
        (e.i, e.j, e.rest_length, e.parent_edge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrussNetwork {
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Element>,
    pub split: bool,
    pub anchors: [usize; 2],
}

impl TrussNetwork {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Number of parent edges.
    pub fn edge_count(&self) -> usize {
        if self.split {
            self.elements.len() / 2
        } else {
            self.elements.len()
        }
    }

    /// Number of nodes that are original mesh vertices.
    pub fn vertex_count(&self) -> usize {
        self.nodes.len() - if self.split { self.edge_count() } else { 0 }
    }

    pub fn is_vertex(&self, node: usize) -> bool {
        node < self.vertex_count()
    }

    /// Elements belonging to parent edge `e`.
    pub fn edge_elements(&self, e: usize) -> std::ops::Range<usize> {
        if self.split {
            2 * e..2 * e + 2
        } else {
            e..e + 1
        }
    }

    /// `(lower, upper)` vertex of parent edge `e`.
    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        if self.split {
            (self.elements[2 * e].i, self.elements[2 * e + 1].j)
        } else {
            (self.elements[e].i, self.elements[e].j)
        }
    }

    /// Rest length of parent edge `e`.
    pub fn edge_length(&self, e: usize) -> f64 {
        self.edge_elements(e)
            .map(|k| self.elements[k].rest_length)
            .sum()
    }

    pub fn anchor_separation(&self) -> f64 {
        geom::dist(self.nodes[self.anchors[0]], self.nodes[self.anchors[1]])
    }

    pub fn min_rest_length(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.rest_length)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_rest_length(&self) -> f64 {
        geom::sorted_sum(self.elements.iter().map(|e| e.rest_length))
    }

    /// Adjacency lists `(neighbour, element)` in element order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.elements.iter().enumerate() {
            adj[e.i].push((e.j, k));
            adj[e.j].push((e.i, k));
        }
        adj
    }

    /// Returns a copy with every coordinate and rest length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|&p| geom::scale(p, s)).collect(),
            elements: self
                .elements
                .iter()
                .map(|e| Element {
                    rest_length: e.rest_length * s,
                    ..*e
                })
                .collect(),
            split: self.split,
            anchors: self.anchors,
        }
    }

    /// Checks structural invariants, e.g. after reading a network from JSON.
    pub fn check(&self) -> Result<(), TrussError> {
        let bad = |m: String| Err(TrussError::Invalid(m));
        let n = self.nodes.len();
        if self.nodes.iter().any(|&p| !geom::is_finite(p)) {
            return bad("non-finite node position".into());
        }
        if self.split && !self.elements.len().is_multiple_of(2) {
            return bad("split network with an odd element count".into());
        }
        for (k, e) in self.elements.iter().enumerate() {
            if e.i >= n || e.j >= n || e.i == e.j {
                return bad(format!(
                    "element {k} has invalid endpoints ({}, {})",
                    e.i, e.j
                ));
            }
            if !(e.rest_length > 0.0 && e.rest_length.is_finite()) {
                return bad(format!("element {k} has rest length {}", e.rest_length));
            }
            if e.parent_edge >= self.edge_count() {
                return bad(format!("element {k} has parent edge {}", e.parent_edge));
            }
        }
        let [a, b] = self.anchors;
        if a == b {
            return Err(TrussError::AnchorsCoincide(a));
        }
        if !self.is_vertex(a) || !self.is_vertex(b) {
            return bad(format!("anchors ({a}, {b}) are not original vertices"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrussError> {
        let net: Self = serde_json::from_str(text)
            .map_err(|e| TrussError::Invalid(format!("bad network JSON: {e}")))?;
        net.check()?;
        Ok(net)
    }
}

/// Index of the vertex closest to `point`; ties go to the lowest index.
pub fn nearest_vertex(mesh: &TerrainMesh, point: Vec3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, &v) in mesh.vertices.iter().enumerate() {
        let d = geom::dist(v, point);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn median_edge_length(edges: &EdgeSet) -> f64 {
    let mut lengths: Vec<f64> = edges.edges.iter().map(|e| e.length).collect();
    lengths.sort_by(f64::total_cmp);
    lengths[lengths.len() / 2]
}

/// Builds the truss network for `mesh`, snapping the anchor points to their
/// nearest vertices.
pub fn build_truss(
    mesh: &TerrainMesh,
    split: bool,
    anchor_a: Vec3,
    anchor_b: Vec3,
) -> Result<TrussNetwork, TrussError> {
    let edges = extract_edges(mesh)?;
    let limit = 10.0 * median_edge_length(&edges);
    let mut snapped = [0; 2];
    for (slot, (which, p)) in [('a', anchor_a), ('b', anchor_b)].into_iter().enumerate() {
        let v = nearest_vertex(mesh, p);
        let distance = geom::dist(mesh.vertices[v], p);
        if distance.is_nan() || distance > limit {
            return Err(TrussError::AnchorTooFar {
                which,
                distance,
                limit,
            });
        }
        snapped[slot] = v;
    }
    build_truss_between(mesh, &edges, split, snapped)
}

/// Builds the network with anchors given directly as vertex indices.
pub fn build_truss_between(
    mesh: &TerrainMesh,
    edges: &EdgeSet,
    split: bool,
    anchors: [usize; 2],
) -> Result<TrussNetwork, TrussError> {
    if anchors[0] == anchors[1] {
        return Err(TrussError::AnchorsCoincide(anchors[0]));
    }
    if anchors.iter().any(|&v| v >= mesh.vertices.len()) {
        return Err(TrussError::Invalid(format!(
            "anchor index out of range: {anchors:?}"
        )));
    }
    let mut nodes = mesh.vertices.clone();
    let mut elements = Vec::with_capacity(if split { 2 * edges.len() } else { edges.len() });
    for (k, e) in edges.edges.iter().enumerate() {
        if split {
            let m = nodes.len();
            nodes.push(geom::midpoint(mesh.vertices[e.a], mesh.vertices[e.b]));
            // Both halves get exactly half the parent length, so graph
            // distances through midpoints equal those of the unsplit network.
            let half = 0.5 * e.length;
            elements.push(Element {
                i: e.a,
                j: m,
                rest_length: half,
                parent_edge: k,
            });
            elements.push(Element {
                i: m,
                j: e.b,
                rest_length: half,
                parent_edge: k,
            });
        } else {
            elements.push(Element {
                i: e.a,
                j: e.b,
                rest_length: e.length,
                parent_edge: k,
            });
        }
    }
    Ok(TrussNetwork {
        nodes,
        elements,
        split,
        anchors,
    })
}

/// Undirected edges of a mesh face expressed as parent-edge indices.
pub fn face_edge_indices(edges: &EdgeSet, face: &[usize]) -> Vec<usize> {
    face_edges(face)
        .map(|(u, v)| edges.find(u, v).expect("face edge present in edge set"))
        .collect()
}
