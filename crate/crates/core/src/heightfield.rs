//! Regular elevation grids: ESRI ASCII grid I/O and procedural terrain
//! synthesis.
//!
//! Samples are stored row-major with row 0 at the north edge, so the sample
//! at `(r, c)` sits at plan position
//! `(origin_x + c * cellsize, origin_y + (nrows - 1 - r) * cellsize)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HeightFieldError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite sample at row {row}, column {col}")]
    NonFiniteSample { row: usize, col: usize },
    #[error("unparseable value {token:?} on line {line}")]
    InvalidNumber { line: usize, token: String },
    #[error("invalid terrain spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub ncols: usize,
    pub nrows: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cellsize: f64,
    pub nodata: f64,
    samples: Vec<f64>,
}

impl HeightField {
    pub fn new(
        ncols: usize,
        nrows: usize,
        origin_x: f64,
        origin_y: f64,
        cellsize: f64,
        nodata: f64,
        samples: Vec<f64>,
    ) -> Result<Self, HeightFieldError> {
        if ncols < 2 || nrows < 2 {
            return Err(HeightFieldError::DimensionMismatch(format!(
                "grid must be at least 2x2, got {ncols}x{nrows}"
            )));
        }
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(HeightFieldError::MalformedHeader(format!(
                "cellsize must be positive, got {cellsize}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(HeightFieldError::MalformedHeader(
                "non-finite origin".into(),
            ));
        }
        if samples.len() != ncols * nrows {
            return Err(HeightFieldError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                ncols * nrows,
                samples.len()
            )));
        }
        for (i, &z) in samples.iter().enumerate() {
            if z != nodata && !z.is_finite() {
                return Err(HeightFieldError::NonFiniteSample {
                    row: i / ncols,
                    col: i % ncols,
                });
            }
        }
        Ok(Self {
            ncols,
            nrows,
            origin_x,
            origin_y,
            cellsize,
            nodata,
            samples,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.ncols + col]
    }

    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata
    }

    pub fn has_nodata(&self) -> bool {
        self.samples.contains(&self.nodata)
    }

    pub fn x_of_col(&self, col: usize) -> f64 {
        self.origin_x + col as f64 * self.cellsize
    }

    pub fn y_of_row(&self, row: usize) -> f64 {
        self.origin_y + (self.nrows - 1 - row) as f64 * self.cellsize
    }

    pub fn width(&self) -> f64 {
        (self.ncols - 1) as f64 * self.cellsize
    }

    pub fn height(&self) -> f64 {
        (self.nrows - 1) as f64 * self.cellsize
    }

    /// Bilinear interpolation at plan position `(x, y)`, clamped to the
    /// grid extent. Nodata samples are not special-cased; callers mesh only
    /// nodata-free fields.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.origin_x) / self.cellsize).clamp(0.0, (self.ncols - 1) as f64);
        // v counts rows upward from the southern edge.
        let v = ((y - self.origin_y) / self.cellsize).clamp(0.0, (self.nrows - 1) as f64);
        let c0 = (u.floor() as usize).min(self.ncols - 2);
        let s0 = (v.floor() as usize).min(self.nrows - 2);
        let fu = u - c0 as f64;
        let fv = v - s0 as f64;
        let row_of = |s: usize| self.nrows - 1 - s;
        let z00 = self.get(row_of(s0), c0);
        let z10 = self.get(row_of(s0), c0 + 1);
        let z01 = self.get(row_of(s0 + 1), c0);
        let z11 = self.get(row_of(s0 + 1), c0 + 1);
        let south = z00 + (z10 - z00) * fu;
        let north = z01 + (z11 - z01) * fu;
        south + (north - south) * fv
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.samples
            .iter()
            .filter(|&&z| z != self.nodata)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            })
    }

    /// Writes the grid in ESRI ASCII format. Values use the shortest
    /// round-trip representation, so `load_heightfield` recovers them exactly.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ncols {}", self.ncols).unwrap();
        writeln!(out, "nrows {}", self.nrows).unwrap();
        writeln!(out, "xllcorner {}", self.origin_x).unwrap();
        writeln!(out, "yllcorner {}", self.origin_y).unwrap();
        writeln!(out, "cellsize {}", self.cellsize).unwrap();
        writeln!(out, "NODATA_value {}", self.nodata).unwrap();
        for row in self.samples.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|z| z.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

fn parse_number(token: &str, line: usize) -> Result<f64, HeightFieldError> {
    token
        .parse::<f64>()
        .map_err(|_| HeightFieldError::InvalidNumber {
            line,
            token: token.to_string(),
        })
}

/// Parses ESRI ASCII grid text.
pub fn load_heightfield(text: &str) -> Result<HeightField, HeightFieldError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header: [Option<f64>; 6] = [None; 6];
    for _ in 0..HEADER_KEYS.len() {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| HeightFieldError::MalformedHeader("truncated header".into()))?;
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        let key = match key.as_str() {
            "xllcenter" => "xllcorner".to_string(),
            "yllcenter" => "yllcorner".to_string(),
            _ => key,
        };
        let slot = HEADER_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| HeightFieldError::MalformedHeader(format!("unknown key {key:?}")))?;
        if header[slot].is_some() {
            return Err(HeightFieldError::MalformedHeader(format!(
                "duplicate key {key:?}"
            )));
        }
        let value = parts.next().ok_or_else(|| {
            HeightFieldError::MalformedHeader(format!("key {key:?} has no value"))
        })?;
        if parts.next().is_some() {
            return Err(HeightFieldError::MalformedHeader(format!(
                "trailing tokens after {key:?}"
            )));
        }
        header[slot] = Some(parse_number(value, lineno)?);
    }
    let [ncols, nrows, x0, y0, cellsize, nodata] = header.map(|v| v.unwrap());
    let as_count = |v: f64, name: &str| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(HeightFieldError::MalformedHeader(format!(
                "{name} must be a positive integer"
            )))
        }
    };
    let ncols = as_count(ncols, "ncols")?;
    let nrows = as_count(nrows, "nrows")?;

    let mut samples = Vec::with_capacity(ncols * nrows);
    let mut row = 0;
    for (lineno, line) in lines {
        let values = line
            .split_whitespace()
            .map(|t| parse_number(t, lineno))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != ncols {
            return Err(HeightFieldError::DimensionMismatch(format!(
                "line {lineno} has {} values, expected {ncols}",
                values.len()
            )));
        }
        for (col, &z) in values.iter().enumerate() {
            if z != nodata && !z.is_finite() {
                return Err(HeightFieldError::NonFiniteSample { row, col });
            }
        }
        samples.extend(values);
        row += 1;
    }
    if row != nrows {
        return Err(HeightFieldError::DimensionMismatch(format!(
            "expected {nrows} data rows, got {row}"
        )));
    }
    HeightField::new(ncols, nrows, x0, y0, cellsize, nodata, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    GaussianHill {
        center: [f64; 2],
        amplitude: f64,
        sigma: f64,
    },
    /// A trough of the given depth running parallel to `axis` through the
    /// middle of the extent. The floor rises from the plateau-minus-depth at
    /// both ends to a saddle at a quarter depth below the plateau halfway
    /// along, so flooding at mid-depth leaves the banks joined by the saddle.
    Valley {
        axis: Axis,
        depth: f64,
        width: f64,
    },
    Fbm {
        octaves: u32,
        roughness: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    #[serde(flatten)]
    pub kind: TerrainKind,
    pub extent: Extent,
    #[serde(default)]
    pub seed: u64,
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<(), HeightFieldError> {
        let bad = |m: &str| Err(HeightFieldError::InvalidSpec(m.to_string()));
        let e = &self.extent;
        if !(e.cellsize > 0.0 && e.cellsize.is_finite()) {
            return bad("cellsize must be positive");
        }
        if e.ncols < 2 || e.nrows < 2 {
            return bad("extent must be at least 2x2");
        }
        match &self.kind {
            TerrainKind::Flat => Ok(()),
            TerrainKind::GaussianHill {
                center,
                amplitude,
                sigma,
            } => {
                if !center.iter().all(|c| c.is_finite()) || !amplitude.is_finite() {
                    return bad("gaussian hill parameters must be finite");
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return bad("sigma must be positive");
                }
                Ok(())
            }
            TerrainKind::Valley { depth, width, .. } => {
                if !depth.is_finite() {
                    return bad("depth must be finite");
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return bad("width must be positive");
                }
                Ok(())
            }
            TerrainKind::Fbm {
                octaves,
                roughness,
                amplitude,
            } => {
                if *octaves == 0 || *octaves > 16 {
                    return bad("octaves must be in 1..=16");
                }
                if !(roughness.is_finite() && *roughness > 0.0) || !amplitude.is_finite() {
                    return bad("fbm roughness must be positive and amplitude finite");
                }
                Ok(())
            }
        }
    }
}

/// Value-noise lattice for one fbm octave.
struct NoiseLattice {
    size: usize,
    values: Vec<f64>,
}

impl NoiseLattice {
    fn new(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let values = (0..size * size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { size, values }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(j % self.size) * self.size + (i % self.size)]
    }

    /// Smoothstep-interpolated noise at lattice coordinates `(u, v) >= 0`.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fu, fv) = (smooth(u - i as f64), smooth(v - j as f64));
        let a = self.at(i, j) + (self.at(i + 1, j) - self.at(i, j)) * fu;
        let b = self.at(i, j + 1) + (self.at(i + 1, j + 1) - self.at(i, j + 1)) * fu;
        a + (b - a) * fv
    }
}

/// Builds a height field from a procedural terrain description. Origin is
/// `(0, 0)`; the result depends only on `spec`.
pub fn synth_heightfield(spec: &TerrainSpec) -> Result<HeightField, HeightFieldError> {
    spec.validate()?;
    let Extent {
        ncols,
        nrows,
        cellsize,
    } = spec.extent;
    let width = (ncols - 1) as f64 * cellsize;
    let height = (nrows - 1) as f64 * cellsize;

    let mut samples = Vec::with_capacity(ncols * nrows);
    let point = |r: usize, c: usize| (c as f64 * cellsize, (nrows - 1 - r) as f64 * cellsize);

    match &spec.kind {
        TerrainKind::Flat => samples.resize(ncols * nrows, 0.0),
        TerrainKind::GaussianHill {
            center,
            amplitude,
            sigma,
        } => {
            for r in 0..nrows {
                for c in 0..ncols {
                    let (x, y) = point(r, c);
                    let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                    samples.push(amplitude * (-d2 / (2.0 * sigma * sigma)).exp());
                }
            }
        }
        TerrainKind::Valley {
            axis,
            depth,
            width: w,
        } => {
            for r in 0..nrows {
                for c in 0..ncols {
                    let (x, y) = point(r, c);
                    // (across, along) in units of the valley frame
                    let (across, along, length) = match axis {
                        Axis::X => (y - height / 2.0, x, width),
                        Axis::Y => (x - width / 2.0, y, height),
                    };
                    let t = if length > 0.0 { along / length } else { 0.0 };
                    let floor = 0.75 * depth * (std::f64::consts::PI * t).sin();
                    let profile = (-across * across / (2.0 * w * w)).exp();
                    samples.push(depth + (floor - depth) * profile);
                }
            }
        }
        TerrainKind::Fbm {
            octaves,
            roughness,
            amplitude,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let base = 4usize;
            let lattices: Vec<NoiseLattice> = (0..*octaves)
                .map(|o| NoiseLattice::new((base << o) + 1, &mut rng))
                .collect();
            let span = width.max(height);
            let norm: f64 = (0..*octaves).map(|o| roughness.powi(o as i32)).sum();
            for r in 0..nrows {
                for c in 0..ncols {
                    let (x, y) = point(r, c);
                    let mut z = 0.0;
                    for (o, lat) in lattices.iter().enumerate() {
                        let freq = (base << o) as f64 / span;
                        z += roughness.powi(o as i32) * lat.sample(x * freq, y * freq);
                    }
                    samples.push(amplitude * z / norm);
                }
            }
        }
    }
    HeightField::new(ncols, nrows, 0.0, 0.0, cellsize, -9999.0, samples)
}
