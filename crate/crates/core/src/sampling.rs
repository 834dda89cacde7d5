//! Seeded sampling of tracking positions, velocities and geometry order.
//!
//! Every random draw comes from a [`SeedPlan`] substream keyed by
//! `(geometry_id, dynamics_index, tag)`. Substreams are ChaCha8 generators
//! seeded with a SHA-256 digest of the key, so results do not depend on
//! thread count, scheduling or platform.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{from_f32x3, to_f32x3, Aabb, Vec3};
use crate::mesh::{Category, TriangleMesh};
use crate::spatial::SpatialIndex;

pub const DEFAULT_N_VOLUME: usize = 32_768;
pub const DEFAULT_N_SURFACE: usize = 4_096;
pub const DEFAULT_V_MAX: f64 = 2.0;
pub const DEFAULT_TAU: usize = 2;
pub const DEFAULT_N_DYN: usize = 100;

/// Rejection rounds before a volume quota shortfall is an error.
pub const MAX_QUOTA_ROUNDS: usize = 100;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("cannot sample the surface of an empty mesh")]
    EmptyMesh,
    #[error("only {got} of {wanted} exterior volume points after {rounds} rounds")]
    QuotaShortfall {
        got: usize,
        wanted: usize,
        rounds: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum StreamTag {
    VolumePositions = 1,
    SurfacePositions = 2,
    Velocities = 3,
    CatalogOrder = 4,
}

/// Master seed plus the rule that derives independent substreams from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master_seed: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Substream for `(geometry_id, dynamics_index, tag)`. The key encoding is
    /// injective (fixed-width fields, id last), so distinct keys only collide
    /// through a SHA-256 collision.
    pub fn stream(&self, geometry_id: &str, dynamics_index: Option<u32>, tag: StreamTag) -> Stream {
        let mut h = Sha256::new();
        h.update(b"geowalk-seed-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update([tag as u8]);
        match dynamics_index {
            Some(d) => {
                h.update([1u8]);
                h.update(d.to_le_bytes());
            }
            None => h.update([0u8; 5]),
        }
        h.update(geometry_id.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Volume sampling region around the geometry.
    pub bbox: Aabb,
    pub n_volume: usize,
    pub n_surface: usize,
    pub v_max: f64,
    pub tau: usize,
    pub n_dyn: usize,
}

impl SamplerConfig {
    pub fn with_defaults(bbox: Aabb) -> Self {
        Self {
            bbox,
            n_volume: DEFAULT_N_VOLUME,
            n_surface: DEFAULT_N_SURFACE,
            v_max: DEFAULT_V_MAX,
            tau: DEFAULT_TAU,
            n_dyn: DEFAULT_N_DYN,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: &str| Err(SamplingError::InvalidConfig(m.to_string()));
        if !(0..3).all(|i| self.bbox.min[i] < self.bbox.max[i]) {
            return bad("bbox_min must be < bbox_max on every axis");
        }
        if !(0..3).all(|i| self.bbox.min[i].is_finite() && self.bbox.max[i].is_finite()) {
            return bad("bbox must be finite");
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad("v_max must be positive");
        }
        if self.n_dyn < 1 {
            return bad("n_dyn must be at least 1");
        }
        if self.tau >= u16::MAX as usize {
            return bad("tau must be below 65535");
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.n_volume + self.n_surface
    }
}

/// Volume sampling box for a category, in normalized units. Categories
/// without a tabulated box use the mesh box grown to 1.5x its extent on
/// every axis, centered in x and y, with the floor kept at the mesh floor.
pub fn category_bbox(category: Category, mesh_bbox: &Aabb) -> Aabb {
    match category {
        Category::Car => Aabb::new([-3.0, -1.5, 0.0], [4.2, 1.5, 2.5]),
        Category::Airplane => Aabb::new([-3.0, -2.8, 0.0], [4.5, 2.8, 2.5]),
        Category::Watercraft => Aabb::new([-4.0, -1.5, -1.0], [5.0, 1.5, 1.0]),
        Category::Other => {
            let c = mesh_bbox.center();
            let e = mesh_bbox.extent();
            Aabb::new(
                [c.x - 0.75 * e.x, c.y - 0.75 * e.y, mesh_bbox.min[2]],
                [c.x + 0.75 * e.x, c.y + 0.75 * e.y, mesh_bbox.min[2] + 1.5 * e.z],
            )
        }
    }
}

pub fn sample_box<R: Rng + ?Sized>(bbox: &Aabb, n: usize, rng: &mut R) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            Vec3::from(std::array::from_fn::<f64, 3, _>(|i| {
                let (lo, hi) = (bbox.min[i], bbox.max[i]);
                (lo + (hi - lo) * rng.random::<f64>()).min(hi)
            }))
        })
        .collect()
}

/// `config.n_volume` points i.i.d. uniform in `config.bbox`.
pub fn sample_volume_points<R: Rng + ?Sized>(config: &SamplerConfig, rng: &mut R) -> Vec<Vec3> {
    sample_box(&config.bbox, config.n_volume, rng)
}

/// Area-weighted triangle choice, then uniform barycentric coordinates.
pub fn sample_surface_points<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec3>, SamplingError> {
    if mesh.is_empty() {
        return Err(SamplingError::EmptyMesh);
    }
    let areas: Vec<f64> = (0..mesh.triangles().len())
        .map(|i| mesh.triangle_area(i))
        .collect();
    let pick = WeightedIndex::new(&areas).map_err(|_| SamplingError::EmptyMesh)?;
    Ok((0..n)
        .map(|_| {
            let [a, b, c] = mesh.triangle(pick.sample(rng));
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect())
}

/// Keeps the points that are neither inside nor within `surf_eps` of the
/// surface, in input order.
pub fn reject_interior(index: &SpatialIndex, points: &[Vec3], surf_eps: f64) -> Vec<Vec3> {
    let keep: Vec<bool> = points
        .par_iter()
        .map(|p| !index.contains(p, surf_eps))
        .collect();
    points
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

/// Draws volume batches from `rng` until `config.n_volume` exterior points
/// survive rejection, then truncates to exactly that many. Candidates are
/// rounded to `f32` before the test, so the stored positions are exactly the
/// ones that were tested.
pub fn sample_exterior_volume<R: Rng + ?Sized>(
    index: &SpatialIndex,
    config: &SamplerConfig,
    surf_eps: f64,
    rng: &mut R,
) -> Result<Vec<Vec3>, SamplingError> {
    let wanted = config.n_volume;
    let mut kept = Vec::with_capacity(wanted);
    let mut rounds = 0;
    while kept.len() < wanted {
        if rounds == MAX_QUOTA_ROUNDS {
            return Err(SamplingError::QuotaShortfall {
                got: kept.len(),
                wanted,
                rounds,
            });
        }
        let mut batch = sample_box(&config.bbox, wanted, rng);
        for p in &mut batch {
            *p = from_f32x3(&to_f32x3(p));
        }
        kept.extend(reject_interior(index, &batch, surf_eps));
        rounds += 1;
    }
    kept.truncate(wanted);
    Ok(kept)
}

/// `n` vectors uniform by volume in the closed ball of radius `v_max`:
/// a normalized Gaussian direction scaled by `v_max * U^(1/3)`.
pub fn sample_velocities<R: Rng + ?Sized>(n: usize, v_max: f64, rng: &mut R) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            let dir = loop {
                let g = Vec3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                let norm = g.norm();
                if norm > 1e-12 {
                    break g / norm;
                }
            };
            let r = v_max * rng.random::<f64>().cbrt();
            let v = dir * r;
            let norm = v.norm();
            if norm > v_max {
                v * (v_max / norm)
            } else {
                v
            }
        })
        .collect()
}

/// Rounds `v` to `f32` precision while keeping `‖v‖ <= v_max` in `f64`.
pub fn quantize_in_ball(v: &Vec3, v_max: f64) -> [f32; 3] {
    let mut q = v.map(|c| c as f32);
    let mut shrink = 1.0f32;
    while q.map(|c| c as f64).norm() > v_max {
        shrink *= 1.0 - 1e-6;
        q = v.map(|c| c as f32 * shrink);
    }
    [q.x, q.y, q.z]
}

/// Geometry order that interleaves categories: each category's members are
/// shuffled (seeded by `epoch_seed` and the category), then categories are
/// visited round-robin in [`Category::ALL`] order. A category that runs out
/// drops out of the rotation, so the result is a permutation of
/// `0..catalog.len()`. While every category still has members, each window
/// of one full rotation contains every category exactly once.
pub fn category_balanced_order(catalog: &[(String, Category)], epoch_seed: u64) -> Vec<usize> {
    let mut queues: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (i, (_, cat)) in catalog.iter().enumerate() {
        queues.entry(*cat).or_default().push(i);
    }
    let plan = SeedPlan::new(epoch_seed);
    for (cat, q) in queues.iter_mut() {
        let mut rng = plan.stream(cat.as_str(), None, StreamTag::CatalogOrder);
        q.shuffle(&mut rng);
        q.reverse();
    }

    let mut order = Vec::with_capacity(catalog.len());
    while order.len() < catalog.len() {
        for q in queues.values_mut() {
            if let Some(i) = q.pop() {
                order.push(i);
            }
        }
    }
    order
}
