//! Wavefront OBJ reading and writing for terrain meshes. Only `v` and `f`
//! records matter; everything else is skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::{Faces, Provenance, TerrainMesh};

#[derive(Debug, Error, PartialEq)]
pub enum ObjError {
    #[error("line {line}: face with {arity} corners (only triangles and quads are supported)")]
    UnsupportedFaceArity { line: usize, arity: usize },
    #[error("line {line}: vertex index {index} out of range (have {count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("line {line}: mixed triangle and quad faces")]
    MixedFaceArity { line: usize },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

pub fn load_obj(text: &str) -> Result<TerrainMesh, ObjError> {
    let mut vertices = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ObjError::Malformed {
                        line,
                        msg: format!("bad vertex coordinate: {e}"),
                    })?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(ObjError::Malformed {
                        line,
                        msg: "vertex needs three finite coordinates".into(),
                    });
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let idx = parts
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ObjError::Malformed {
                        line,
                        msg: format!("bad face index: {e}"),
                    })?;
                faces.push((line, idx));
            }
            _ => {}
        }
    }

    // Indices are resolved after all vertices are known so that forward
    // references are accepted.
    let count = vertices.len();
    for (line, idx) in faces {
        let arity = idx.len();
        if !(3..=4).contains(&arity) {
            return Err(ObjError::UnsupportedFaceArity { line, arity });
        }
        let resolved = idx
            .iter()
            .map(|&k| {
                if k >= 1 && (k as usize) <= count {
                    Ok(k as usize - 1)
                } else {
                    Err(ObjError::IndexOutOfRange {
                        line,
                        index: k,
                        count,
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        match arity {
            3 if quads.is_empty() => tris.push([resolved[0], resolved[1], resolved[2]]),
            4 if tris.is_empty() => {
                quads.push([resolved[0], resolved[1], resolved[2], resolved[3]])
            }
            _ => return Err(ObjError::MixedFaceArity { line }),
        }
    }

    let faces = if quads.is_empty() {
        Faces::Triangles(tris)
    } else {
        Faces::Quads(quads)
    };
    Ok(TerrainMesh {
        vertices,
        faces,
        provenance: Provenance::Imported,
    })
}

/// Writes `v` records with 9 decimals and 1-based `f` records.
pub fn save_obj(mesh: &TerrainMesh) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# {} vertices, {} faces",
        mesh.vertex_count(),
        mesh.face_count()
    )
    .unwrap();
    for v in &mesh.vertices {
        writeln!(out, "v {:.9} {:.9} {:.9}", v[0], v[1], v[2]).unwrap();
    }
    for f in mesh.faces.iter() {
        out.push('f');
        for &i in f {
            write!(out, " {}", i + 1).unwrap();
        }
        out.push('\n');
    }
    out
}
