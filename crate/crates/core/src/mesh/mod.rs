//! Indexed triangle meshes: loading, validation and normalization.

mod normalize;
mod obj;
mod stl;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

pub use normalize::{normalize_mesh, NormalizationRecord, DEFAULT_TARGET_X_LENGTH};
pub use obj::{parse_obj, write_obj};
pub use stl::{parse_stl_binary, write_stl_binary};

/// Default area threshold for degenerate triangles, in normalized units.
pub const DEFAULT_AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("truncated file at byte {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("vertex index {index} out of range ({n_vertices} vertices) at byte {offset}")]
    IndexOutOfRange {
        offset: usize,
        index: i64,
        n_vertices: usize,
    },
    #[error("triangle {triangle} references vertex {index} but mesh has {n_vertices} vertices")]
    BadTriangle {
        triangle: usize,
        index: u32,
        n_vertices: usize,
    },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("mesh has no non-degenerate triangles")]
    Empty,
    #[error("mesh has zero x-extent after rotation (extent {0:e})")]
    DegenerateExtent(f64),
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("target x-length must be positive and finite, got {0}")]
    InvalidTarget(f64),
    #[error("cannot infer mesh format from {0:?}")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape category, used for category-balanced ordering and default sampling boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Car,
    Airplane,
    Watercraft,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Car,
        Category::Airplane,
        Category::Watercraft,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Airplane => "airplane",
            Category::Watercraft => "watercraft",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "car" | "cars" => Ok(Category::Car),
            "airplane" | "airplanes" | "aircraft" => Ok(Category::Airplane),
            "watercraft" | "ship" | "ships" | "boat" | "boats" => Ok(Category::Watercraft),
            "other" => Ok(Category::Other),
            _ => Err(format!("unknown category {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    StlBinary,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(MeshFormat::StlBinary),
            _ => None,
        }
    }
}

/// Indexed triangle soup. Indices are always in range and coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    source_id: String,
    category: Category,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(MeshError::BadTriangle {
                    triangle: t,
                    index,
                    n_vertices: n,
                });
            }
        }
        Ok(Self {
            vertices,
            triangles,
            source_id: String::new(),
            category: Category::Other,
        })
    }

    pub fn with_identity(mut self, source_id: impl Into<String>, category: Category) -> Self {
        self.source_id = source_id.into();
        self.category = category;
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            let area = self.triangle_area(i);
            acc += area * (a + b + c) / 3.0;
            total += area;
        }
        if total > 0.0 {
            acc / total
        } else {
            acc
        }
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub(crate) fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            source_id: self.source_id.clone(),
            category: self.category,
        }
    }
}

/// Parses `bytes` in the stated format. The result has an empty source id and
/// category [`Category::Other`]; use [`TriangleMesh::with_identity`] to tag it.
pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    match format {
        MeshFormat::Obj => parse_obj(bytes),
        MeshFormat::StlBinary => parse_stl_binary(bytes),
    }
}

/// Reads a mesh file, inferring the format from the extension. The source id
/// is the file stem.
pub fn load_mesh_file(path: &Path, category: Category) -> Result<TriangleMesh, MeshError> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| MeshError::UnknownFormat(path.display().to_string()))?;
    let bytes = std::fs::read(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(load_mesh(&bytes, format)?.with_identity(stem, category))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closedness {
    /// Every edge is shared by exactly two triangles.
    Closed,
    /// At least one boundary edge.
    Open,
    /// No boundary edges, but some edge has more than two incident triangles.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_degenerate_dropped: usize,
    pub n_unreferenced_dropped: usize,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub is_closed: Closedness,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "vertices={} triangles={} degenerate_dropped={} unreferenced_dropped={} \
             bbox=[{:.6},{:.6}]x[{:.6},{:.6}]x[{:.6},{:.6}] closed={:?}",
            self.n_vertices,
            self.n_triangles,
            self.n_degenerate_dropped,
            self.n_unreferenced_dropped,
            self.bbox_min[0],
            self.bbox_max[0],
            self.bbox_min[1],
            self.bbox_max[1],
            self.bbox_min[2],
            self.bbox_max[2],
            self.is_closed,
        )
    }
}

/// Drops triangles with area `<= area_eps` and any vertex no longer referenced.
/// Surviving vertices and triangles keep their relative order.
pub fn validate_mesh(
    mesh: &TriangleMesh,
    area_eps: f64,
) -> Result<(TriangleMesh, ValidationReport), MeshError> {
    let kept: Vec<[u32; 3]> = (0..mesh.triangles.len())
        .filter(|&i| mesh.triangle_area(i) > area_eps)
        .map(|i| mesh.triangles[i])
        .collect();
    let n_degenerate_dropped = mesh.triangles.len() - kept.len();
    if kept.is_empty() {
        return Err(MeshError::Empty);
    }

    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    for &i in kept.iter().flatten() {
        remap[i as usize] = 0;
    }
    let mut vertices = Vec::with_capacity(mesh.vertices.len());
    for (old, slot) in remap.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = vertices.len() as u32;
            vertices.push(mesh.vertices[old]);
        }
    }
    let n_unreferenced_dropped = mesh.vertices.len() - vertices.len();
    let triangles: Vec<[u32; 3]> = kept
        .iter()
        .map(|t| t.map(|i| remap[i as usize]))
        .collect();

    let out = TriangleMesh {
        vertices,
        triangles,
        source_id: mesh.source_id.clone(),
        category: mesh.category,
    };
    let bbox = out.bbox();
    let report = ValidationReport {
        n_vertices: out.vertices.len(),
        n_triangles: out.triangles.len(),
        n_degenerate_dropped,
        n_unreferenced_dropped,
        bbox_min: bbox.min,
        bbox_max: bbox.max,
        is_closed: closedness(&out.triangles),
    };
    Ok((out, report))
}

fn closedness(triangles: &[[u32; 3]]) -> Closedness {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if edges.values().any(|&c| c == 1) {
        Closedness::Open
    } else if edges.values().all(|&c| c == 2) {
        Closedness::Closed
    } else {
        Closedness::Unknown
    }
}

/// Procedural meshes used by tests, examples and the acceptance suite.
pub mod shapes {
    use super::TriangleMesh;
    use crate::geometry::Vec3;

    /// Axis-aligned box with outward-facing triangles, 12 triangles.
    pub fn cuboid(min: [f64; 3], max: [f64; 3]) -> TriangleMesh {
        let v = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min[0] } else { max[0] },
                if y == 0 { min[1] } else { max[1] },
                if z == 0 { min[2] } else { max[2] },
            )
        };
        let vertices = vec![
            v(0, 0, 0),
            v(1, 0, 0),
            v(1, 1, 0),
            v(0, 1, 0),
            v(0, 0, 1),
            v(1, 0, 1),
            v(1, 1, 1),
            v(0, 1, 1),
        ];
        let triangles = vec![
            // -z
            [0, 2, 1],
            [0, 3, 2],
            // +z
            [4, 5, 6],
            [4, 6, 7],
            // -y
            [0, 1, 5],
            [0, 5, 4],
            // +y
            [3, 7, 6],
            [3, 6, 2],
            // -x
            [0, 4, 7],
            [0, 7, 3],
            // +x
            [1, 2, 6],
            [1, 6, 5],
        ];
        TriangleMesh::new(vertices, triangles).expect("valid cuboid")
    }

    /// Cube of half-extent 0.5 centered at the origin.
    pub fn unit_cube() -> TriangleMesh {
        cuboid([-0.5; 3], [0.5; 3])
    }

    /// Latitude/longitude sphere with `2 * segments * (rings - 1)` triangles.
    pub fn uv_sphere(center: [f64; 3], radius: f64, rings: usize, segments: usize) -> TriangleMesh {
        assert!(rings >= 2 && segments >= 3);
        let c = Vec3::from(center);
        let mut vertices = vec![c + Vec3::new(0.0, 0.0, radius)];
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(
                    c + radius
                        * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()),
                );
            }
        }
        vertices.push(c - Vec3::new(0.0, 0.0, radius));
        let south = (vertices.len() - 1) as u32;
        let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;

        let mut triangles = Vec::new();
        for s in 0..segments {
            triangles.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b) = (ring(r, s), ring(r, s + 1));
                let (c2, d) = (ring(r + 1, s), ring(r + 1, s + 1));
                triangles.push([a, c2, d]);
                triangles.push([a, d, b]);
            }
        }
        for s in 0..segments {
            triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        TriangleMesh::new(vertices, triangles).expect("valid sphere")
    }

    /// Single quad split into two triangles, spanning `origin + a*u + b*v` for a, b in [0, 1].
    pub fn quad(origin: Vec3, u: Vec3, v: Vec3) -> TriangleMesh {
        let vertices = vec![origin, origin + u, origin + u + v, origin + v];
        TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("valid quad")
    }

    /// Closed car-like body: a lower box with a narrower cabin box on top,
    /// sharing no vertices. Roughly 2.2 x 1 x 0.75 before normalization.
    pub fn car_like() -> TriangleMesh {
        let body = cuboid([-1.1, -0.5, 0.15], [1.1, 0.5, 0.5]);
        let cabin = cuboid([-0.5, -0.4, 0.5], [0.6, 0.4, 0.9]);
        merge(&[body, cabin])
    }

    pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(p.vertices());
            triangles.extend(p.triangles().iter().map(|t| t.map(|i| i + base)));
        }
        TriangleMesh::new(vertices, triangles).expect("valid merge")
    }
}
