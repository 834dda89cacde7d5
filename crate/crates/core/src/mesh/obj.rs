//! Wavefront OBJ: `v` and `f` records only. Polygons are fan-triangulated.

use std::io::{self, Write};

use super::{MeshError, TriangleMesh};
use crate::geometry::Vec3;

pub fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;

    let mut vertices = Vec::new();
    // Faces are resolved after all vertices are known; OBJ allows forward
    // references in practice only through negative indices, which are
    // relative to the vertices seen so far.
    let mut faces: Vec<(usize, Vec<i64>, usize)> = Vec::new();

    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let content = line.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        offset: line_start,
                        message: "vertex record needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| MeshError::Parse {
                        offset: line_start,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| MeshError::Parse {
                        offset: line_start,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    idx.push(i);
                }
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        offset: line_start,
                        message: "face record needs at least three indices".into(),
                    });
                }
                faces.push((line_start, idx, vertices.len()));
            }
            _ => {}
        }
    }

    let n = vertices.len();
    let mut triangles = Vec::new();
    for (line_start, idx, seen) in faces {
        let resolved = idx
            .iter()
            .map(|&i| {
                let zero_based = if i > 0 { i - 1 } else { seen as i64 + i };
                if i == 0 || zero_based < 0 || zero_based >= n as i64 {
                    Err(MeshError::IndexOutOfRange {
                        offset: line_start,
                        index: i,
                        n_vertices: n,
                    })
                } else {
                    Ok(zero_based as u32)
                }
            })
            .collect::<Result<Vec<u32>, _>>()?;
        for k in 1..resolved.len() - 1 {
            triangles.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }

    TriangleMesh::new(vertices, triangles)
}

/// Writes `v` and 1-based `f` records. Coordinates use Rust's shortest
/// round-trip formatting, so parsing the output reproduces the mesh exactly.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> io::Result<()> {
    if !mesh.source_id().is_empty() {
        writeln!(out, "# {}", mesh.source_id())?;
    }
    for v in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}
