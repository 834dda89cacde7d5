//! Binary STL: 80-byte header, u32 triangle count, 50-byte records.

use std::collections::HashMap;
use std::io::{self, Write};

use super::{MeshError, TriangleMesh};
use crate::geometry::Vec3;

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

/// Normals are ignored; vertices are deduplicated by exact bit equality of
/// their three `f32` coordinates, in first-seen order.
pub fn parse_stl_binary(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(MeshError::Truncated {
            offset: 0,
            needed: HEADER_LEN + 4,
            available: bytes.len(),
        });
    }
    let count = u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN + 4..];
    let needed = count * RECORD_LEN;
    if body.len() < needed {
        let complete = body.len() / RECORD_LEN;
        return Err(MeshError::Truncated {
            offset: HEADER_LEN + 4 + complete * RECORD_LEN,
            needed: HEADER_LEN + 4 + needed,
            available: bytes.len(),
        });
    }

    let mut lookup: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(count);
    for record in body[..needed].chunks_exact(RECORD_LEN) {
        let mut tri = [0u32; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let base = 12 + 12 * k;
            let bits: [u32; 3] = std::array::from_fn(|c| {
                let o = base + 4 * c;
                u32::from_le_bytes(record[o..o + 4].try_into().unwrap())
            });
            *slot = *lookup.entry(bits).or_insert_with(|| {
                vertices.push(Vec3::new(
                    f32::from_bits(bits[0]) as f64,
                    f32::from_bits(bits[1]) as f64,
                    f32::from_bits(bits[2]) as f64,
                ));
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(tri);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Writes a binary STL with zero normals. Coordinates are rounded to `f32`.
pub fn write_stl_binary<W: Write>(mesh: &TriangleMesh, mut out: W) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    let tag = b"geowalk binary stl";
    header[..tag.len()].copy_from_slice(tag);
    out.write_all(&header)?;
    out.write_all(&(mesh.triangles().len() as u32).to_le_bytes())?;
    for i in 0..mesh.triangles().len() {
        out.write_all(&[0u8; 12])?;
        for v in mesh.triangle(i) {
            for c in v.iter() {
                out.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        out.write_all(&[0u8; 2])?;
    }
    Ok(())
}
