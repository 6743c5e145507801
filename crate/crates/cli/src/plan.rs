//! Fully resolved command plans. A plan carries every value a command uses,
//! so running it again from a manifest needs nothing else.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tautpath_core::extract::{
    export_path, extract_chain, extract_chain_lowering, extract_region, parse_geojson_path,
    polyline_length, ChainOptions, PathFormat, RegionSolution,
};
use tautpath_core::geom::{self, Vec3};
use tautpath_core::heightfield::{load_heightfield, synth_heightfield, TerrainSpec};
use tautpath_core::mesh::{
    apply_flood_mask, mesh_structured_quad, mesh_structured_tri, mesh_unstructured, Diagonal,
    TerrainMesh,
};
use tautpath_core::obj::{load_obj, save_obj};
use tautpath_core::oracle::{count_shortest_paths, dijkstra, euclidean_bound};
use tautpath_core::relax::{solve_taut, SolveResult, SolverParams, Termination};
use tautpath_core::render::{render_svg, RenderInput};
use tautpath_core::truss::{build_truss, TrussNetwork};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Plan {
    Genmesh(GenmeshPlan),
    Convert(ConvertPlan),
    Solve(SolvePlan),
    Extract(ExtractPlan),
    Oracle(OraclePlan),
    Compare(ComparePlan),
    Render(RenderPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TerrainSource {
    /// `spec_file` is where the spec was read from, if anywhere; the inline
    /// copy is what runs.
    Synthetic {
        spec: TerrainSpec,
        spec_file: Option<PathBuf>,
    },
    Heightfield {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mesh", rename_all = "snake_case")]
pub enum MeshKind {
    Quad,
    Tri { diagonal: Diagonal },
    Unstructured { spacing: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenmeshPlan {
    pub terrain: TerrainSource,
    pub mesh: MeshKind,
    pub flood_level: Option<f64>,
    pub output: PathBuf,
    pub mask_output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertPlan {
    pub mesh: PathBuf,
    pub split: bool,
    pub anchor_a: Vec3,
    pub anchor_b: Vec3,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvePlan {
    pub network: PathBuf,
    pub params: SolverParams,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtractMode {
    Chain {
        rel_threshold: f64,
        alt_window: f64,
        /// When set, a disconnected taut set is retried at halved
        /// thresholds down to this value.
        lower_to: Option<f64>,
        format: PathFormat,
    },
    Region {
        quantile: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractPlan {
    pub result: PathBuf,
    pub network: PathBuf,
    pub mesh: PathBuf,
    pub mode: ExtractMode,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub network: PathBuf,
    /// Relative tolerance of the shortest-path count.
    pub count_tolerance: f64,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePlan {
    pub path: PathBuf,
    pub oracle: PathBuf,
    pub tolerance: f64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPlan {
    pub mesh: PathBuf,
    pub network: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub paths: Vec<PathBuf>,
    pub region: Option<PathBuf>,
    pub output: PathBuf,
}

/// What the `oracle` command writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub anchors: [usize; 2],
    pub distance: f64,
    pub euclidean_bound: f64,
    /// Mesh vertices of one shortest path, midpoints left out.
    pub chain: Vec<usize>,
    pub coordinates: Vec<Vec3>,
    pub settled: usize,
    pub shortest_path_count: u64,
}

/// What the `compare` command writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub path_length: f64,
    pub oracle_distance: f64,
    pub relative_difference: f64,
    pub tolerance: f64,
    pub endpoints_match: bool,
    pub pass: bool,
}

/// Files produced by a plan and the lines to print. `failure` is set when
/// the outputs are complete but the command must still exit non-zero.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub summary: Vec<String>,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn new(files: Vec<(PathBuf, Vec<u8>)>, summary: Vec<String>) -> Self {
        Self {
            files,
            summary,
            failure: None,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::input(path.display(), e))
}

fn read_mesh(path: &Path) -> Result<TerrainMesh, CliError> {
    let mesh = load_obj(&read_text(path)?).map_err(|e| CliError::input(path.display(), e))?;
    mesh.ensure_valid()
        .map_err(|e| CliError::input(path.display(), e))?;
    Ok(mesh)
}

fn read_network(path: &Path) -> Result<TrussNetwork, CliError> {
    TrussNetwork::from_json(&read_text(path)?).map_err(|e| CliError::input(path.display(), e))
}

fn read_result(path: &Path) -> Result<SolveResult, CliError> {
    SolveResult::from_json(&read_text(path)?).map_err(|e| CliError::input(path.display(), e))
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s.into_bytes()
}

fn redirect(path: &mut PathBuf, dir: &Path) {
    *path = dir.join(path.file_name().unwrap_or_default());
}

/// The network must have been converted from this mesh: same vertices, in
/// the same order.
fn check_same_vertices(net: &TrussNetwork, mesh: &TerrainMesh) -> Result<(), CliError> {
    if net.vertex_count() != mesh.vertex_count()
        || net.nodes[..net.vertex_count()] != mesh.vertices[..]
    {
        return Err(CliError::Input(format!(
            "network ({} vertices) was not converted from this mesh ({} vertices)",
            net.vertex_count(),
            mesh.vertex_count()
        )));
    }
    Ok(())
}

impl Plan {
    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Plan::Genmesh(p) => match &p.terrain {
                TerrainSource::Synthetic { spec_file, .. } => spec_file.iter().cloned().collect(),
                TerrainSource::Heightfield { path } => vec![path.clone()],
            },
            Plan::Convert(p) => vec![p.mesh.clone()],
            Plan::Solve(p) => vec![p.network.clone()],
            Plan::Extract(p) => vec![p.result.clone(), p.network.clone(), p.mesh.clone()],
            Plan::Oracle(p) => vec![p.network.clone()],
            Plan::Compare(p) => vec![p.path.clone(), p.oracle.clone()],
            Plan::Render(p) => std::iter::once(&p.mesh)
                .chain(&p.network)
                .chain(&p.result)
                .chain(&p.paths)
                .chain(&p.region)
                .cloned()
                .collect(),
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        match self {
            Plan::Genmesh(p) => std::iter::once(&p.output)
                .chain(&p.mask_output)
                .cloned()
                .collect(),
            Plan::Convert(p) => vec![p.output.clone()],
            Plan::Solve(p) => vec![p.output.clone()],
            Plan::Extract(p) => vec![p.output.clone()],
            Plan::Oracle(p) => vec![p.output.clone()],
            Plan::Compare(p) => p.output.iter().cloned().collect(),
            Plan::Render(p) => vec![p.output.clone()],
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Plan::Genmesh(p) => match (&p.mesh, &p.terrain) {
                (MeshKind::Unstructured { seed, .. }, _) => Some(*seed),
                (_, TerrainSource::Synthetic { spec, .. }) => Some(spec.seed),
                _ => None,
            },
            _ => None,
        }
    }

    /// Points every output into `dir`, keeping file names.
    pub fn redirect_outputs(&mut self, dir: &Path) {
        match self {
            Plan::Genmesh(p) => {
                redirect(&mut p.output, dir);
                if let Some(m) = &mut p.mask_output {
                    redirect(m, dir);
                }
            }
            Plan::Convert(ConvertPlan { output, .. })
            | Plan::Solve(SolvePlan { output, .. })
            | Plan::Extract(ExtractPlan { output, .. })
            | Plan::Oracle(OraclePlan { output, .. })
            | Plan::Render(RenderPlan { output, .. }) => redirect(output, dir),
            Plan::Compare(p) => {
                if let Some(o) = &mut p.output {
                    redirect(o, dir);
                }
            }
        }
    }

    pub fn run(&self) -> Result<Outcome, CliError> {
        match self {
            Plan::Genmesh(p) => p.run(),
            Plan::Convert(p) => p.run(),
            Plan::Solve(p) => p.run(),
            Plan::Extract(p) => p.run(),
            Plan::Oracle(p) => p.run(),
            Plan::Compare(p) => p.run(),
            Plan::Render(p) => p.run(),
        }
    }
}

impl GenmeshPlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let hf = match &self.terrain {
            TerrainSource::Synthetic { spec, .. } => synth_heightfield(spec)?,
            TerrainSource::Heightfield { path } => load_heightfield(&read_text(path)?)
                .map_err(|e| CliError::input(path.display(), e))?,
        };
        let mut mesh = match self.mesh {
            MeshKind::Quad => mesh_structured_quad(&hf)?,
            MeshKind::Tri { diagonal } => mesh_structured_tri(&hf, diagonal)?,
            MeshKind::Unstructured { spacing, seed } => mesh_unstructured(&hf, spacing, seed)?,
        };
        let mut summary = Vec::new();
        let mut files = Vec::new();
        if let Some(level) = self.flood_level {
            let (flooded, mask) = apply_flood_mask(&mesh, level)?;
            summary.push(format!(
                "flood level {level}: {} vertices excluded, {} component(s) remain",
                mask.excluded_vertices.len(),
                mask.components
            ));
            if let Some(path) = &self.mask_output {
                files.push((path.clone(), pretty_json(&mask)));
            }
            mesh = flooded;
        } else if self.mask_output.is_some() {
            return Err(CliError::Input("a mask output needs a flood level".into()));
        }
        let report = mesh.validate();
        if !report.is_clean() {
            return Err(CliError::Input(format!(
                "generated mesh fails validation: {report:?}"
            )));
        }
        summary.insert(
            0,
            format!(
                "mesh: {} vertices, {} faces",
                mesh.vertex_count(),
                mesh.face_count()
            ),
        );
        files.insert(0, (self.output.clone(), save_obj(&mesh).into_bytes()));
        Ok(Outcome::new(files, summary))
    }
}

impl ConvertPlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let mesh = read_mesh(&self.mesh)?;
        let net = build_truss(&mesh, self.split, self.anchor_a, self.anchor_b)?;
        let [a, b] = net.anchors;
        let summary = vec![
            format!(
                "anchor a -> vertex {a} ({:.6} m away)",
                geom::dist(mesh.vertices[a], self.anchor_a)
            ),
            format!(
                "anchor b -> vertex {b} ({:.6} m away)",
                geom::dist(mesh.vertices[b], self.anchor_b)
            ),
            format!(
                "network: {} nodes, {} elements, split {}",
                net.node_count(),
                net.element_count(),
                net.split
            ),
        ];
        Ok(Outcome::new(
            vec![(self.output.clone(), net.to_json().into_bytes())],
            summary,
        ))
    }
}

impl SolvePlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let net = read_network(&self.network)?;
        let result = solve_taut(&net, &self.params)?;
        let iterations: usize = result.history.iter().map(|h| h.iterations).sum();
        let cause = serde_json::to_value(result.termination)?;
        let summary = vec![
            format!("termination: {}", cause.as_str().unwrap_or_default()),
            format!("max strain: {:.6e}", result.state.max_strain()),
            format!("phases: {}, iterations: {iterations}", result.history.len()),
        ];
        let mut outcome = Outcome::new(
            vec![(self.output.clone(), result.to_json().into_bytes())],
            summary,
        );
        if result.termination != Termination::Taut {
            outcome.failure = Some(CliError::Solver(format!(
                "network did not become taut (termination {})",
                cause.as_str().unwrap_or_default()
            )));
        }
        Ok(outcome)
    }
}

impl ExtractPlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let result = read_result(&self.result)?;
        let net = read_network(&self.network)?;
        let mesh = read_mesh(&self.mesh)?;
        check_same_vertices(&net, &mesh)?;
        match self.mode {
            ExtractMode::Chain {
                rel_threshold,
                alt_window,
                lower_to,
                format,
            } => {
                let options = ChainOptions {
                    rel_threshold,
                    alt_window,
                };
                let (path, used) = match lower_to {
                    Some(floor) => extract_chain_lowering(&result, &net, options, floor)?,
                    None => (extract_chain(&result, &net, options)?, rel_threshold),
                };
                let mut summary = vec![format!(
                    "length: {:.9} m, ambiguity: {}, alternatives: {}",
                    path.length,
                    path.ambiguous,
                    path.alternatives.len()
                )];
                if used != rel_threshold {
                    summary.push(format!(
                        "taut set connected only at relative threshold {used}"
                    ));
                }
                let text = export_path(&path, format);
                Ok(Outcome::new(
                    vec![(self.output.clone(), text.into_bytes())],
                    summary,
                ))
            }
            ExtractMode::Region { quantile } => {
                let region = extract_region(&result, &net, &mesh, quantile)?;
                let summary = vec![format!(
                    "region: {} of {} faces at quantile {} (cut {:.6e})",
                    region.faces.len(),
                    mesh.face_count(),
                    region.quantile,
                    region.cut
                )];
                Ok(Outcome::new(
                    vec![(self.output.clone(), pretty_json(&region))],
                    summary,
                ))
            }
        }
    }
}

impl OraclePlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let net = read_network(&self.network)?;
        let [a, b] = net.anchors;
        let found = dijkstra(&net, a, b)?;
        let chain: Vec<usize> = found
            .path
            .iter()
            .copied()
            .filter(|&v| net.is_vertex(v))
            .collect();
        let report = OracleReport {
            anchors: net.anchors,
            distance: found.distance,
            euclidean_bound: euclidean_bound(&net, a, b),
            coordinates: chain.iter().map(|&v| net.nodes[v]).collect(),
            chain,
            settled: found.settled,
            shortest_path_count: count_shortest_paths(&net, a, b, self.count_tolerance)?,
        };
        let summary = vec![format!(
            "distance: {:.9} m (euclidean bound {:.9} m), shortest paths: {}",
            report.distance, report.euclidean_bound, report.shortest_path_count
        )];
        Ok(Outcome::new(
            vec![(self.output.clone(), pretty_json(&report))],
            summary,
        ))
    }
}

impl ComparePlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let path = parse_geojson_path(&read_text(&self.path)?)
            .map_err(|e| CliError::input(self.path.display(), e))?;
        let oracle: OracleReport = read_json(&self.oracle)?;
        // The length is recomputed from the coordinates; the stored
        // length_m property is not trusted.
        let length = polyline_length(&path.coordinates);
        let close = |p: &Vec3, q: &Vec3| geom::dist(*p, *q) <= 1e-9 * (1.0 + geom::norm(*q));
        let endpoints_match = match (
            path.coordinates.first().zip(path.coordinates.last()),
            oracle.coordinates.first().zip(oracle.coordinates.last()),
        ) {
            (Some((p0, p1)), Some((q0, q1))) => close(p0, q0) && close(p1, q1),
            _ => false,
        };
        let rel = (length - oracle.distance).abs() / oracle.distance;
        let pass = endpoints_match && rel <= self.tolerance;
        let report = CompareReport {
            path_length: length,
            oracle_distance: oracle.distance,
            relative_difference: rel,
            tolerance: self.tolerance,
            endpoints_match,
            pass,
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        let mut summary = vec![format!(
            "relative length difference {rel:.3e} (tolerance {:e}): {verdict}",
            self.tolerance
        )];
        if !endpoints_match {
            summary.push("path endpoints do not match the oracle anchors".into());
        }
        let files = self
            .output
            .iter()
            .map(|o| (o.clone(), pretty_json(&report)))
            .collect();
        let mut outcome = Outcome::new(files, summary);
        if !pass {
            outcome.failure = Some(CliError::Verification(format!(
                "path length {length} differs from oracle distance {} by {rel:e} relative",
                oracle.distance
            )));
        }
        Ok(outcome)
    }
}

impl RenderPlan {
    fn run(&self) -> Result<Outcome, CliError> {
        let mesh = read_mesh(&self.mesh)?;
        let strained = match (&self.network, &self.result) {
            (Some(n), Some(r)) => Some((read_network(n)?, read_result(r)?)),
            (None, None) => None,
            _ => {
                return Err(CliError::Input(
                    "strain coloring needs both a network and a result".into(),
                ))
            }
        };
        let mut paths = Vec::new();
        for p in &self.paths {
            let parsed =
                parse_geojson_path(&read_text(p)?).map_err(|e| CliError::input(p.display(), e))?;
            paths.push(parsed.coordinates);
        }
        let region: Option<RegionSolution> = self.region.as_deref().map(read_json).transpose()?;
        let svg = render_svg(
            &mesh,
            RenderInput {
                strains: strained
                    .as_ref()
                    .map(|(n, r)| (n, r.peak_strains.as_slice())),
                paths: &paths,
                region: region.as_ref().map(|r| r.faces.as_slice()),
            },
        )?;
        let summary = vec![format!(
            "rendered {} faces, {} path(s){}",
            mesh.face_count(),
            paths.len(),
            if region.is_some() {
                ", region overlay"
            } else {
                ""
            }
        )];
        Ok(Outcome::new(
            vec![(self.output.clone(), svg.into_bytes())],
            summary,
        ))
    }
}
