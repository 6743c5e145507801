//! Top-down SVG plots of the undeformed mesh, optionally colored by peak
//! strain, with paths and region faces overlaid.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::Vec3;
use crate::mesh::TerrainMesh;
use crate::truss::{extract_edges, TrussNetwork};

pub const LOW_COLOR: [u8; 3] = [0x20, 0x60, 0xc0];
pub const HIGH_COLOR: [u8; 3] = [0xd0, 0x20, 0x20];
const REGION_COLOR: &str = "#f0a000";
const WIRE_COLOR: &str = "#808080";
const WIDTH: f64 = 800.0;
const MARGIN: f64 = 20.0;
const LEGEND_HEIGHT: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

/// Maps plan coordinates to SVG pixels, north up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub min_x: f64,
    pub max_y: f64,
    pub scale: f64,
    pub width: f64,
    pub height: f64,
}

impl Viewport {
    pub fn fit(points: &[Vec3]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let span_x = (hi[0] - lo[0]).max(f64::MIN_POSITIVE);
        let span_y = (hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let scale = (WIDTH - 2.0 * MARGIN) / span_x.max(span_y);
        Self {
            min_x: lo[0],
            max_y: hi[1],
            scale,
            width: WIDTH,
            height: span_y * scale + 2.0 * MARGIN + LEGEND_HEIGHT,
        }
    }

    pub fn to_svg(&self, p: Vec3) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min_x) * self.scale,
            MARGIN + (self.max_y - p[1]) * self.scale,
        )
    }

    pub fn from_svg(&self, sx: f64, sy: f64) -> (f64, f64) {
        (
            (sx - MARGIN) / self.scale + self.min_x,
            self.max_y - (sy - MARGIN) / self.scale,
        )
    }
}

/// Position on the two-stop ramp, `t` in `[0, 1]`.
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c: Vec<u8> = (0..3)
        .map(|k| {
            (LOW_COLOR[k] as f64 + t * (HIGH_COLOR[k] as f64 - LOW_COLOR[k] as f64)).round() as u8
        })
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderInput<'a> {
    /// Network and per-element peak strains used for coloring.
    pub strains: Option<(&'a TrussNetwork, &'a [f64])>,
    pub paths: &'a [Vec<Vec3>],
    pub region: Option<&'a [usize]>,
}

fn pt(out: &mut String, (x, y): (f64, f64)) {
    write!(out, "{x:.3},{y:.3}").unwrap();
}

pub fn render_svg(mesh: &TerrainMesh, input: RenderInput) -> Result<String, RenderError> {
    let view = Viewport::fit(&mesh.vertices);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        view.width, view.height, view.width, view.height
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();

    if let Some(region) = input.region {
        out.push_str(&format!(
            r#"<g fill="{REGION_COLOR}" fill-opacity="0.5" stroke="none">"#
        ));
        out.push('\n');
        for &f in region {
            if f >= mesh.face_count() {
                return Err(RenderError::Inconsistent(format!(
                    "region face {f} but the mesh has {} faces",
                    mesh.face_count()
                )));
            }
            out.push_str(r#"<polygon points=""#);
            for (k, &v) in mesh.faces.face(f).iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                pt(&mut out, view.to_svg(mesh.vertices[v]));
            }
            out.push_str("\"/>\n");
        }
        out.push_str("</g>\n");
    }

    match input.strains {
        Some((net, strains)) => {
            if net.vertex_count() != mesh.vertex_count() {
                return Err(RenderError::Inconsistent(format!(
                    "network has {} vertices, mesh has {}",
                    net.vertex_count(),
                    mesh.vertex_count()
                )));
            }
            if strains.len() != net.element_count() {
                return Err(RenderError::Inconsistent(format!(
                    "{} strains for {} elements",
                    strains.len(),
                    net.element_count()
                )));
            }
            let lo = strains.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = strains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            out.push_str("<g stroke-width=\"1\" stroke-linecap=\"round\">\n");
            for (e, &s) in net.elements.iter().zip(strains) {
                let t = if span > 0.0 { (s - lo) / span } else { 0.0 };
                let (a, b) = (view.to_svg(net.nodes[e.i]), view.to_svg(net.nodes[e.j]));
                writeln!(
                    out,
                    r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}"/>"#,
                    a.0,
                    a.1,
                    b.0,
                    b.1,
                    ramp_color(t)
                )
                .unwrap();
            }
            out.push_str("</g>\n");
            legend(&mut out, &view, lo.min(hi), hi.max(lo));
        }
        None => {
            let edges =
                extract_edges(mesh).map_err(|e| RenderError::Inconsistent(e.to_string()))?;
            writeln!(out, r#"<g stroke="{WIRE_COLOR}" stroke-width="1">"#).unwrap();
            for e in &edges.edges {
                let (a, b) = (
                    view.to_svg(mesh.vertices[e.a]),
                    view.to_svg(mesh.vertices[e.b]),
                );
                writeln!(
                    out,
                    r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                    a.0, a.1, b.0, b.1
                )
                .unwrap();
            }
            out.push_str("</g>\n");
        }
    }

    for path in input.paths {
        out.push_str(
            r#"<polyline class="path" fill="none" stroke="black" stroke-width="2" points=""#,
        );
        for (k, &p) in path.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            pt(&mut out, view.to_svg(p));
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn legend(out: &mut String, view: &Viewport, lo: f64, hi: f64) {
    let y = view.height - LEGEND_HEIGHT + 10.0;
    let w = view.width - 2.0 * MARGIN;
    writeln!(
        out,
        r#"<defs><linearGradient id="ramp"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        ramp_color(0.0),
        ramp_color(1.0)
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect x="{MARGIN:.3}" y="{y:.3}" width="{w:.3}" height="12" fill="url(#ramp)"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{MARGIN:.3}" y="{:.3}" font-size="12" font-family="sans-serif">peak strain {lo:.3e}</text>"#,
        y + 28.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" font-size="12" font-family="sans-serif" text-anchor="end">{hi:.3e}</text>"#,
        MARGIN + w,
        y + 28.0
    )
    .unwrap();
}
