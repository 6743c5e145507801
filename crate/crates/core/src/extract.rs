//! Reading answers off a relaxed network: the taut chain (truss mode), the
//! high-strain face region (surface mode), and path export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::mesh::TerrainMesh;
use crate::oracle::{shortest_path_tree, WeightedGraph};
use crate::relax::{SolveResult, Termination};
use crate::truss::{extract_edges, face_edge_indices, TrussError, TrussNetwork};

/// Upper bound on reported alternative chains.
const MAX_ALTERNATIVES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("taut set at relative threshold {threshold} does not connect the anchors; retry with a lower threshold (e.g. {suggested})")]
    NoChain { threshold: f64, suggested: f64 },
    #[error("solver run ended with {0:?}, not a taut state")]
    NotTaut(Termination),
    #[error("result and network disagree: {0}")]
    Mismatch(String),
    #[error("region extraction needs an unsplit (surface mode) network")]
    SplitNetwork,
    #[error(transparent)]
    Truss(#[from] TrussError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Elements with peak strain at least this fraction of the largest peak
    /// form the taut set.
    pub rel_threshold: f64,
    /// Alternative chains up to this relative excess over the primary length
    /// are reported.
    pub alt_window: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            rel_threshold: 0.5,
            alt_window: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Vertex indices from anchor `a` to anchor `b`.
    pub vertices: Vec<usize>,
    /// Parent edges traversed, one per step.
    pub edges: Vec<usize>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub chain: Vec<usize>,
    /// Undeformed positions of `chain`.
    pub polyline: Vec<Vec3>,
    pub length: f64,
    /// Peak strain of each traversed edge (larger half when split).
    pub strain_profile: Vec<f64>,
    pub ambiguous: bool,
    pub alternatives: Vec<Chain>,
    /// Size of the taut element set the chain was traced in.
    pub taut_elements: usize,
}

/// Sum of segment lengths of a polyline, accumulated front to back.
pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| geom::dist(w[0], w[1])).sum()
}

/// Length of the solution's undeformed polyline.
pub fn path_length(solution: &PathSolution) -> f64 {
    polyline_length(&solution.polyline)
}

fn check_result(result: &SolveResult, net: &TrussNetwork) -> Result<(), ExtractError> {
    if result.peak_strains.len() != net.element_count() {
        return Err(ExtractError::Mismatch(format!(
            "{} strains for {} elements",
            result.peak_strains.len(),
            net.element_count()
        )));
    }
    if result.state.positions.len() != net.node_count() {
        return Err(ExtractError::Mismatch(format!(
            "{} positions for {} nodes",
            result.state.positions.len(),
            net.node_count()
        )));
    }
    Ok(())
}

/// Traces the taut chain between the anchors.
///
/// The taut set holds the elements whose peak strain reaches
/// `rel_threshold` of the largest peak; a parent edge belongs to it when
/// either half does. The primary chain is the shortest anchor-to-anchor route
/// inside the taut set by rest length. Further edge-disjoint routes inside
/// the set within `alt_window` of the primary length are reported as
/// alternatives and mark the answer ambiguous.
pub fn extract_chain(
    result: &SolveResult,
    net: &TrussNetwork,
    options: ChainOptions,
) -> Result<PathSolution, ExtractError> {
    check_result(result, net)?;
    if result.termination != Termination::Taut {
        return Err(ExtractError::NotTaut(result.termination));
    }
    let max_peak = result.max_peak_strain();
    let cut = options.rel_threshold * max_peak;
    let taut: Vec<bool> = result
        .peak_strains
        .iter()
        .map(|&s| s > 0.0 && s >= cut)
        .collect();
    let taut_elements = taut.iter().filter(|&&t| t).count();
    let taut_edges: Vec<bool> = (0..net.edge_count())
        .map(|e| net.edge_elements(e).any(|k| taut[k]))
        .collect();

    let graph = WeightedGraph::from_network(net);
    let [a, b] = net.anchors;
    let mut used = vec![false; net.edge_count()];
    let trace = |used: &[bool]| -> Option<Chain> {
        let tree = shortest_path_tree(&graph, a, Some(b), |e| taut_edges[e] && !used[e]);
        let edges = tree.edges_to(b)?;
        let vertices = tree.path_to(b)?;
        let points: Vec<Vec3> = vertices.iter().map(|&v| net.nodes[v]).collect();
        Some(Chain {
            vertices,
            edges,
            length: polyline_length(&points),
        })
    };

    let primary = trace(&used).ok_or(ExtractError::NoChain {
        threshold: options.rel_threshold,
        suggested: options.rel_threshold / 2.0,
    })?;
    let mut alternatives = Vec::new();
    let mut last = &primary;
    while alternatives.len() < MAX_ALTERNATIVES {
        for &e in &last.edges {
            used[e] = true;
        }
        match trace(&used) {
            Some(alt) if alt.length <= primary.length * (1.0 + options.alt_window) => {
                alternatives.push(alt);
                last = alternatives.last().unwrap();
            }
            _ => break,
        }
    }

    let strain_profile = primary
        .edges
        .iter()
        .map(|&e| {
            net.edge_elements(e)
                .map(|k| result.peak_strains[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(PathSolution {
        polyline: primary.vertices.iter().map(|&v| net.nodes[v]).collect(),
        chain: primary.vertices,
        length: primary.length,
        strain_profile,
        ambiguous: !alternatives.is_empty(),
        alternatives,
        taut_elements,
    })
}

/// Follows the [`ExtractError::NoChain`] advice: retries at the suggested
/// lower threshold until the taut set connects the anchors, but never below
/// `floor`. Returns the solution and the threshold that produced it.
pub fn extract_chain_lowering(
    result: &SolveResult,
    net: &TrussNetwork,
    mut options: ChainOptions,
    floor: f64,
) -> Result<(PathSolution, f64), ExtractError> {
    loop {
        match extract_chain(result, net, options) {
            Ok(path) => return Ok((path, options.rel_threshold)),
            Err(ExtractError::NoChain { suggested, .. }) if suggested >= floor => {
                options.rel_threshold = suggested;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSolution {
    /// Faces in the region, ascending.
    pub faces: Vec<usize>,
    /// Mean positive peak strain of each face's edges, for every face.
    pub face_strain: Vec<f64>,
    pub quantile: f64,
    /// Scalar value at the cut; faces at or above it are in the region.
    pub cut: f64,
}

/// Selects the faces whose mean positive edge strain lies in the top
/// `1 - quantile` fraction. Ties at the cut are included.
pub fn extract_region(
    result: &SolveResult,
    net: &TrussNetwork,
    mesh: &TerrainMesh,
    quantile: f64,
) -> Result<RegionSolution, ExtractError> {
    check_result(result, net)?;
    if net.split {
        return Err(ExtractError::SplitNetwork);
    }
    let edges = extract_edges(mesh)?;
    if edges.len() != net.edge_count()
        || edges
            .edges
            .iter()
            .enumerate()
            .any(|(k, e)| net.edge_endpoints(k) != (e.a, e.b))
    {
        return Err(ExtractError::Mismatch(
            "network was not built from this mesh".into(),
        ));
    }
    let face_strain: Vec<f64> = mesh
        .faces
        .iter()
        .map(|f| {
            let ids = face_edge_indices(&edges, f);
            ids.iter()
                .map(|&e| result.peak_strains[e].max(0.0))
                .sum::<f64>()
                / ids.len() as f64
        })
        .collect();
    let quantile = quantile.clamp(0.0, 1.0);
    let mut sorted = face_strain.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((quantile * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    let cut = sorted[idx];
    let faces = (0..face_strain.len())
        .filter(|&f| face_strain[f] >= cut)
        .collect();
    Ok(RegionSolution {
        faces,
        face_strain,
        quantile,
        cut,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFormat {
    Geojson,
    Csv,
    ObjPolyline,
}

/// Serializes a path. Coordinates are written in shortest round-trip form.
pub fn export_path(solution: &PathSolution, format: PathFormat) -> String {
    match format {
        PathFormat::Geojson => {
            let alternatives: Vec<_> = solution
                .alternatives
                .iter()
                .map(|c| json!({ "length_m": c.length, "chain": c.vertices }))
                .collect();
            let doc = json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": solution.polyline,
                },
                "properties": {
                    "length_m": solution.length,
                    "ambiguity": solution.ambiguous,
                    "alternatives": alternatives,
                    "chain": solution.chain,
                },
            });
            serde_json::to_string_pretty(&doc).expect("geojson serializes") + "\n"
        }
        PathFormat::Csv => {
            let mut out = String::from("index,x,y,z,cumulative_length,strain\n");
            let mut cumulative = 0.0;
            for (k, p) in solution.polyline.iter().enumerate() {
                let strain = if k == 0 {
                    0.0
                } else {
                    cumulative += geom::dist(solution.polyline[k - 1], *p);
                    solution.strain_profile[k - 1]
                };
                writeln!(out, "{k},{},{},{},{cumulative},{strain}", p[0], p[1], p[2]).unwrap();
            }
            out
        }
        PathFormat::ObjPolyline => {
            let mut out = String::new();
            for p in &solution.polyline {
                writeln!(out, "v {:.9} {:.9} {:.9}", p[0], p[1], p[2]).unwrap();
            }
            out.push('l');
            for k in 1..=solution.polyline.len() {
                write!(out, " {k}").unwrap();
            }
            out.push('\n');
            out
        }
    }
}

/// Parsed form of an exported GeoJSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoJsonPath {
    pub coordinates: Vec<Vec3>,
    pub length: f64,
    pub ambiguity: bool,
    pub alternatives: usize,
}

pub fn parse_geojson_path(text: &str) -> Result<GeoJsonPath, String> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let coords = doc["geometry"]["coordinates"]
        .as_array()
        .ok_or("missing geometry.coordinates")?;
    let coordinates = coords
        .iter()
        .map(|c| {
            let v: Vec<f64> = serde_json::from_value(c.clone()).map_err(|e| e.to_string())?;
            match v.as_slice() {
                [x, y, z] => Ok([*x, *y, *z]),
                _ => Err("coordinates must have three components".to_string()),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let props = &doc["properties"];
    Ok(GeoJsonPath {
        coordinates,
        length: props["length_m"].as_f64().ok_or("missing length_m")?,
        ambiguity: props["ambiguity"].as_bool().unwrap_or(false),
        alternatives: props["alternatives"].as_array().map_or(0, |a| a.len()),
    })
}
