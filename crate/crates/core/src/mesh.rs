//! Indexed terrain meshes: structured and unstructured generation from
//! height fields, validation, and flood masking.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::heightfield::HeightField;

/// Vertices closer than this are treated as coincident.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;
/// Faces with smaller area are reported as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("height field has nodata samples inside the meshed area")]
    NodataInInterior,
    #[error("site set is degenerate (collinear or too few points)")]
    DegenerateTriangulation,
    #[error("target spacing {spacing} is too coarse for a {width} x {height} extent")]
    SpacingTooCoarse {
        spacing: f64,
        width: f64,
        height: f64,
    },
    #[error("flood level {0} leaves no face")]
    EmptyResult(f64),
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    StructuredQuad,
    StructuredTri,
    Unstructured,
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonal {
    /// Each cell is split along its south-west to north-east diagonal.
    TowardNe,
    /// Each cell is split along its south-east to north-west diagonal.
    TowardNw,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Faces {
    Triangles(Vec<[usize; 3]>),
    Quads(Vec<[usize; 4]>),
}

impl Faces {
    pub fn len(&self) -> usize {
        match self {
            Faces::Triangles(f) => f.len(),
            Faces::Quads(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        match self {
            Faces::Triangles(_) => 3,
            Faces::Quads(_) => 4,
        }
    }

    pub fn face(&self, i: usize) -> &[usize] {
        match self {
            Faces::Triangles(f) => &f[i],
            Faces::Quads(f) => &f[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |i| self.face(i))
    }

    /// Keeps the faces for which `keep` holds, preserving order.
    fn filtered(&self, mut keep: impl FnMut(&[usize]) -> bool) -> Faces {
        match self {
            Faces::Triangles(f) => {
                Faces::Triangles(f.iter().copied().filter(|t| keep(t)).collect())
            }
            Faces::Quads(f) => Faces::Quads(f.iter().copied().filter(|q| keep(q)).collect()),
        }
    }

    fn remapped(&self, map: &[Option<usize>]) -> Faces {
        let m = |v: usize| map[v].expect("face vertex was dropped");
        match self {
            Faces::Triangles(f) => Faces::Triangles(f.iter().map(|t| t.map(m)).collect()),
            Faces::Quads(f) => Faces::Quads(f.iter().map(|q| q.map(m)).collect()),
        }
    }
}

/// Undirected edges of a face, in corner order.
pub fn face_edges(face: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..face.len()).map(move |k| {
        let (a, b) = (face[k], face[(k + 1) % face.len()]);
        (a.min(b), a.max(b))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Faces,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub out_of_range_indices: usize,
    pub repeated_corner_faces: usize,
    pub duplicate_vertices: usize,
    pub non_manifold_edges: usize,
    pub degenerate_faces: usize,
    pub components: usize,
}

impl ValidationReport {
    pub fn defect_count(&self) -> usize {
        self.out_of_range_indices
            + self.repeated_corner_faces
            + self.duplicate_vertices
            + self.non_manifold_edges
            + self.degenerate_faces
    }

    pub fn is_clean(&self) -> bool {
        self.defect_count() == 0
    }
}

impl TerrainMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Area of face `i` (quads are split along their first diagonal).
    pub fn face_area(&self, i: usize) -> f64 {
        let f = self.faces.face(i);
        let p = |k: usize| self.vertices[f[k]];
        let mut area = geom::triangle_area(p(0), p(1), p(2));
        if f.len() == 4 {
            area += geom::triangle_area(p(0), p(2), p(3));
        }
        area
    }

    /// Map from undirected edge to the faces using it.
    pub fn edge_faces(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for e in face_edges(f) {
                if e.0 != e.1 {
                    map.entry(e).or_default().push(fi);
                }
            }
        }
        map
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mesh(self)
    }

    /// Fails unless the mesh satisfies every structural invariant.
    pub fn ensure_valid(&self) -> Result<(), MeshError> {
        let report = self.validate();
        if report.is_clean() && !self.faces.is_empty() {
            Ok(())
        } else if self.faces.is_empty() {
            Err(MeshError::Invalid("mesh has no faces".into()))
        } else {
            Err(MeshError::Invalid(format!("{report:?}")))
        }
    }
}

fn count_duplicate_vertices(vertices: &[Vec3]) -> usize {
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.sort_by(|&a, &b| vertices[a][0].total_cmp(&vertices[b][0]));
    let mut dups = 0;
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if vertices[j][0] - vertices[i][0] > DUPLICATE_TOLERANCE {
                break;
            }
            if geom::dist(vertices[i], vertices[j]) <= DUPLICATE_TOLERANCE {
                dups += 1;
            }
        }
    }
    dups
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    fn count_roots(&mut self) -> usize {
        (0..self.0.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Reports structural defects. Never fails.
pub fn validate_mesh(mesh: &TerrainMesh) -> ValidationReport {
    let n = mesh.vertices.len();
    let mut report = ValidationReport {
        duplicate_vertices: count_duplicate_vertices(&mesh.vertices),
        ..Default::default()
    };
    let mut uf = UnionFind::new(n);
    for (fi, f) in mesh.faces.iter().enumerate() {
        if f.iter().any(|&v| v >= n) {
            report.out_of_range_indices += 1;
            continue;
        }
        let mut sorted = f.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != f.len() {
            report.repeated_corner_faces += 1;
        }
        if mesh.face_area(fi) < DEGENERATE_AREA {
            report.degenerate_faces += 1;
        }
        for &v in &f[1..] {
            uf.union(f[0], v);
        }
    }
    report.non_manifold_edges = mesh
        .edge_faces()
        .into_iter()
        .filter(|(e, fs)| e.1 < n && fs.len() > 2)
        .count();
    report.components = uf.count_roots();
    report
}

fn grid_vertices(hf: &HeightField) -> Result<Vec<Vec3>, MeshError> {
    if hf.has_nodata() {
        return Err(MeshError::NodataInInterior);
    }
    let mut vertices = Vec::with_capacity(hf.nrows * hf.ncols);
    for r in 0..hf.nrows {
        for c in 0..hf.ncols {
            vertices.push([hf.x_of_col(c), hf.y_of_row(r), hf.get(r, c)]);
        }
    }
    Ok(vertices)
}

/// Corner indices of grid cell `(r, c)` as `[sw, se, ne, nw]`.
fn cell_corners(hf: &HeightField, r: usize, c: usize) -> [usize; 4] {
    let idx = |r: usize, c: usize| r * hf.ncols + c;
    [idx(r + 1, c), idx(r + 1, c + 1), idx(r, c + 1), idx(r, c)]
}

/// One quad per grid cell, counter-clockwise in plan.
pub fn mesh_structured_quad(hf: &HeightField) -> Result<TerrainMesh, MeshError> {
    let vertices = grid_vertices(hf)?;
    let mut quads = Vec::with_capacity((hf.nrows - 1) * (hf.ncols - 1));
    for r in 0..hf.nrows - 1 {
        for c in 0..hf.ncols - 1 {
            quads.push(cell_corners(hf, r, c));
        }
    }
    Ok(TerrainMesh {
        vertices,
        faces: Faces::Quads(quads),
        provenance: Provenance::StructuredQuad,
    })
}

/// Two right triangles per grid cell, split along `diagonal`.
pub fn mesh_structured_tri(hf: &HeightField, diagonal: Diagonal) -> Result<TerrainMesh, MeshError> {
    let vertices = grid_vertices(hf)?;
    let mut tris = Vec::with_capacity(2 * (hf.nrows - 1) * (hf.ncols - 1));
    for r in 0..hf.nrows - 1 {
        for c in 0..hf.ncols - 1 {
            let [sw, se, ne, nw] = cell_corners(hf, r, c);
            match diagonal {
                Diagonal::TowardNe => {
                    tris.push([sw, se, ne]);
                    tris.push([sw, ne, nw]);
                }
                Diagonal::TowardNw => {
                    tris.push([sw, se, nw]);
                    tris.push([se, ne, nw]);
                }
            }
        }
    }
    Ok(TerrainMesh {
        vertices,
        faces: Faces::Triangles(tris),
        provenance: Provenance::StructuredTri,
    })
}

/// Plan rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn of(hf: &HeightField) -> Self {
        Self {
            x0: hf.origin_x,
            y0: hf.origin_y,
            x1: hf.origin_x + hf.width(),
            y1: hf.origin_y + hf.height(),
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Interior site displacement as a fraction of the grid step. Larger
/// values make graph distances overshoot the surface geodesic noticeably.
pub const JITTER_FRACTION: f64 = 0.2;

/// Jittered-grid sites over `rect`: the rectangle boundary is sampled
/// evenly, interior grid points are displaced by at most `JITTER_FRACTION * spacing` in
/// each coordinate. Deterministic in `(rect, spacing, seed)`.
pub fn jittered_sites(rect: Rect, spacing: f64, seed: u64) -> Result<Vec<[f64; 2]>, MeshError> {
    let (w, h) = (rect.width(), rect.height());
    if !(spacing > 0.0 && spacing.is_finite()) || spacing >= w || spacing >= h {
        return Err(MeshError::SpacingTooCoarse {
            spacing,
            width: w,
            height: h,
        });
    }
    let nx = (w / spacing).ceil() as usize;
    let ny = (h / spacing).ceil() as usize;
    let (hx, hy) = (w / nx as f64, h / ny as f64);
    let jitter = JITTER_FRACTION * hx.min(hy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sites = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let on_boundary = i == 0 || j == 0 || i == nx || j == ny;
            // Boundary coordinates are pinned exactly to the rectangle.
            let x = if i == nx {
                rect.x1
            } else {
                rect.x0 + i as f64 * hx
            };
            let y = if j == ny {
                rect.y1
            } else {
                rect.y0 + j as f64 * hy
            };
            if on_boundary {
                sites.push([x, y]);
            } else {
                let dx = rng.gen_range(-jitter..=jitter);
                let dy = rng.gen_range(-jitter..=jitter);
                sites.push([x + dx, y + dy]);
            }
        }
    }
    Ok(sites)
}

/// Delaunay triangulation of plan sites; triangles are counter-clockwise,
/// rotated so the smallest index comes first, and sorted.
pub fn triangulate_sites(sites: &[[f64; 2]]) -> Result<Vec<[usize; 3]>, MeshError> {
    if sites.len() < 3 {
        return Err(MeshError::DegenerateTriangulation);
    }
    let points: Vec<Point2<f64>> = sites.iter().map(|s| Point2::new(s[0], s[1])).collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(points)
        .map_err(|_| MeshError::DegenerateTriangulation)?;
    if dt.num_vertices() != sites.len() {
        return Err(MeshError::DegenerateTriangulation);
    }
    let mut tris: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let t = f.vertices().map(|v| v.fix().index());
            let k = (0..3).min_by_key(|&k| t[k]).unwrap();
            [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
        })
        .collect();
    if tris.is_empty() {
        return Err(MeshError::DegenerateTriangulation);
    }
    tris.sort_unstable();
    Ok(tris)
}

/// Triangulates `sites` and lifts each one to `lift(x, y)`.
pub fn mesh_from_sites(
    sites: &[[f64; 2]],
    lift: impl Fn(f64, f64) -> f64,
) -> Result<TerrainMesh, MeshError> {
    let tris = triangulate_sites(sites)?;
    let vertices = sites.iter().map(|&[x, y]| [x, y, lift(x, y)]).collect();
    Ok(TerrainMesh {
        vertices,
        faces: Faces::Triangles(tris),
        provenance: Provenance::Unstructured,
    })
}

/// Delaunay mesh of jittered-grid sites over the field's extent, lifted by
/// bilinear interpolation.
pub fn mesh_unstructured(
    hf: &HeightField,
    target_spacing: f64,
    seed: u64,
) -> Result<TerrainMesh, MeshError> {
    if hf.has_nodata() {
        return Err(MeshError::NodataInInterior);
    }
    let sites = jittered_sites(Rect::of(hf), target_spacing, seed)?;
    mesh_from_sites(&sites, |x, y| hf.bilinear(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MaskCause {
    FloodLevel { level: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    /// Source vertex indices that were excluded, ascending.
    pub excluded_vertices: Vec<usize>,
    pub cause: MaskCause,
    /// Source vertex index to surviving vertex index.
    pub remap: Vec<Option<usize>>,
    /// Connected components of the surviving mesh.
    pub components: usize,
}

impl RegionMask {
    /// True when the surviving mesh falls apart into several pieces; anchors
    /// may then be unreachable from each other.
    pub fn disconnected(&self) -> bool {
        self.components > 1
    }
}

/// Keeps the faces whose corners are all at or above `level`, compacting
/// vertices. Vertices below `level` are listed in the mask.
pub fn apply_flood_mask(
    mesh: &TerrainMesh,
    level: f64,
) -> Result<(TerrainMesh, RegionMask), MeshError> {
    let dry = |v: usize| mesh.vertices[v][2] >= level;
    let excluded: Vec<usize> = (0..mesh.vertices.len()).filter(|&v| !dry(v)).collect();
    let (masked, mask) = mask_faces(mesh, |f| f.iter().all(|&v| dry(v)))?;
    if masked.faces.is_empty() {
        return Err(MeshError::EmptyResult(level));
    }
    let mask = RegionMask {
        excluded_vertices: excluded,
        cause: MaskCause::FloodLevel { level },
        ..mask
    };
    Ok((masked, mask))
}

/// Removes the listed vertices and every face touching them.
pub fn apply_vertex_mask(
    mesh: &TerrainMesh,
    excluded: &[usize],
) -> Result<(TerrainMesh, RegionMask), MeshError> {
    let mut gone = vec![false; mesh.vertices.len()];
    for &v in excluded {
        if v >= gone.len() {
            return Err(MeshError::Invalid(format!(
                "masked vertex {v} out of range"
            )));
        }
        gone[v] = true;
    }
    let (masked, mut mask) = mask_faces(mesh, |f| f.iter().all(|&v| !gone[v]))?;
    mask.excluded_vertices = (0..gone.len()).filter(|&v| gone[v]).collect();
    if masked.faces.is_empty() {
        return Err(MeshError::Invalid("vertex mask leaves no face".into()));
    }
    Ok((masked, mask))
}

fn mask_faces(
    mesh: &TerrainMesh,
    keep: impl FnMut(&[usize]) -> bool,
) -> Result<(TerrainMesh, RegionMask), MeshError> {
    let kept = mesh.faces.filtered(keep);
    let mut used = vec![false; mesh.vertices.len()];
    for f in kept.iter() {
        for &v in f {
            used[v] = true;
        }
    }
    let mut remap = vec![None; mesh.vertices.len()];
    let mut vertices = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            remap[v] = Some(vertices.len());
            vertices.push(mesh.vertices[v]);
        }
    }
    let faces = kept.remapped(&remap);
    let masked = TerrainMesh {
        vertices,
        faces,
        provenance: mesh.provenance,
    };
    let components = validate_mesh(&masked).components;
    Ok((
        masked,
        RegionMask {
            excluded_vertices: Vec::new(),
            cause: MaskCause::Explicit,
            remap,
            components,
        },
    ))
}
