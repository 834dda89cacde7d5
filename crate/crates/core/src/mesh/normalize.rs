//! Canonical placement: rotate, center x/y, floor z at zero, scale x-length.

use serde::{Deserialize, Serialize};

use super::{MeshError, TriangleMesh};
use crate::geometry::{orthonormality_error, Aabb, Mat3, Vec3};

pub const DEFAULT_TARGET_X_LENGTH: f64 = 5.0;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// `normalized = scale * (rotation * raw + translation)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let r = &self.rotation;
        Mat3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation_matrix() * p + Vec3::from(self.translation))
    }
}

/// Rotates by `rotation`, shifts so the x/y bounding-box center is at the
/// origin and the lowest z is 0, then scales uniformly so the x-extent equals
/// `target_x_length`.
pub fn normalize_mesh(
    mesh: &TriangleMesh,
    target_x_length: f64,
    rotation: &Mat3,
) -> Result<(TriangleMesh, NormalizationRecord), MeshError> {
    if !(target_x_length > 0.0 && target_x_length.is_finite()) {
        return Err(MeshError::InvalidTarget(target_x_length));
    }
    let err = orthonormality_error(rotation);
    if err > ORTHONORMAL_TOL {
        return Err(MeshError::NotOrthonormal(err));
    }
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }

    let rotated: Vec<Vec3> = mesh.vertices().iter().map(|v| rotation * v).collect();
    let bbox = Aabb::from_points(&rotated);
    let extent = bbox.extent();
    let x_extent = extent.x;
    let size = extent.amax();
    if !(x_extent > 1e-12 * size) {
        return Err(MeshError::DegenerateExtent(x_extent));
    }

    let record = NormalizationRecord {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| rotation[(i, j)])),
        translation: [
            -0.5 * (bbox.min[0] + bbox.max[0]),
            -0.5 * (bbox.min[1] + bbox.max[1]),
            -bbox.min[2],
        ],
        scale: target_x_length / x_extent,
    };
    Ok((mesh.map_vertices(|p| record.apply(p)), record))
}
