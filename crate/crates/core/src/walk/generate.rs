//! Sample and dataset generation: sample positions once per geometry, then
//! for each dynamics field sample velocities and trace features.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_trajectory, FeatureKind, StickingMode, VectorConvention, WalkError};
use crate::dataset::ShardEntry;
use crate::geometry::{from_f32x3, to_f32x3, Aabb, Vec3};
use crate::mesh::{load_mesh_file, validate_mesh, Category, TriangleMesh, DEFAULT_AREA_EPS};
use crate::sampling::{
    category_balanced_order, category_bbox, quantize_in_ball, sample_exterior_volume,
    sample_surface_points, sample_velocities, SamplerConfig, SeedPlan, StreamTag,
    DEFAULT_N_DYN, DEFAULT_N_SURFACE, DEFAULT_N_VOLUME, DEFAULT_TAU, DEFAULT_V_MAX,
};
use crate::spatial::{SpatialIndex, DEFAULT_MAX_LEAF};

/// Default on-boundary tolerance as a fraction of the normalized x-length.
pub const DEFAULT_SURF_EPS_REL: f64 = 1e-7;

/// Everything that controls sample generation besides the mesh and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_volume: usize,
    pub n_surface: usize,
    pub v_max: f64,
    pub tau: usize,
    pub n_dyn: usize,
    /// Volume sampling box; `None` uses the per-category default.
    pub bbox: Option<Aabb>,
    pub mode: StickingMode,
    pub feature: FeatureKind,
    pub convention: VectorConvention,
    pub surf_eps: f64,
    /// Outward nudge for surface samples, along the ray from the surface
    /// centroid. Zero keeps them on the surface, where they never move.
    pub surface_offset_eps: f64,
    /// Draw fresh positions for every dynamics field instead of once per geometry.
    pub resample_positions: bool,
    /// Seed for the category-balanced geometry order.
    pub epoch_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_volume: DEFAULT_N_VOLUME,
            n_surface: DEFAULT_N_SURFACE,
            v_max: DEFAULT_V_MAX,
            tau: DEFAULT_TAU,
            n_dyn: DEFAULT_N_DYN,
            bbox: None,
            mode: StickingMode::RayClamped,
            feature: FeatureKind::VectorDistance,
            convention: VectorConvention::QueryToSurface,
            surf_eps: DEFAULT_SURF_EPS_REL * crate::mesh::DEFAULT_TARGET_X_LENGTH,
            surface_offset_eps: 0.0,
            resample_positions: false,
            epoch_seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn sampler_for(&self, mesh: &TriangleMesh) -> SamplerConfig {
        SamplerConfig {
            bbox: self
                .bbox
                .unwrap_or_else(|| category_bbox(mesh.category(), &mesh.bbox())),
            n_volume: self.n_volume,
            n_surface: self.n_surface,
            v_max: self.v_max,
            tau: self.tau,
            n_dyn: self.n_dyn,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_volume + self.n_surface
    }
}

/// One (geometry, dynamics field) supervision sample, at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub geometry_id: String,
    pub dynamics_index: u32,
    pub tau: u16,
    pub feature_kind: FeatureKind,
    pub sticking_mode: StickingMode,
    pub vector_convention: VectorConvention,
    pub v_max: f64,
    pub positions: Vec<[f32; 3]>,
    pub velocities: Vec<[f32; 3]>,
    /// `[particle][step][channel]`, `tau + 1` steps.
    pub features: Vec<f32>,
    pub stuck_steps: Vec<Option<u16>>,
}

impl SampleRecord {
    pub fn n_points(&self) -> usize {
        self.positions.len()
    }

    pub fn steps(&self) -> usize {
        self.tau as usize + 1
    }

    pub fn channels(&self) -> usize {
        self.feature_kind.channels()
    }

    pub fn feature_row(&self, particle: usize, step: usize) -> &[f32] {
        let c = self.channels();
        let start = (particle * self.steps() + step) * c;
        &self.features[start..start + c]
    }

    /// Array lengths agree on `N` and `tau + 1` steps.
    pub fn is_consistent(&self) -> bool {
        let n = self.n_points();
        self.velocities.len() == n
            && self.stuck_steps.len() == n
            && self.features.len() == n * self.steps() * self.channels()
    }
}

/// Index and tracking positions for one geometry, reused across its
/// dynamics fields.
#[derive(Debug)]
pub struct PreparedGeometry {
    mesh: Arc<TriangleMesh>,
    index: SpatialIndex,
    sampler: SamplerConfig,
    positions: Option<Vec<Vec3>>,
}

impl PreparedGeometry {
    pub fn new(
        mesh: Arc<TriangleMesh>,
        config: &GenerationConfig,
        seeds: &SeedPlan,
    ) -> Result<Self, WalkError> {
        let sampler = config.sampler_for(&mesh);
        sampler.validate()?;
        let index = SpatialIndex::build(mesh.clone(), DEFAULT_MAX_LEAF)?;
        let mut prepared = Self {
            mesh,
            index,
            sampler,
            positions: None,
        };
        if !config.resample_positions {
            prepared.positions = Some(prepared.tracking_positions(config, seeds, None)?);
        }
        Ok(prepared)
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn sampler(&self) -> &SamplerConfig {
        &self.sampler
    }

    /// Volume survivors followed by surface samples, rounded to `f32`.
    fn tracking_positions(
        &self,
        config: &GenerationConfig,
        seeds: &SeedPlan,
        dynamics_index: Option<u32>,
    ) -> Result<Vec<Vec3>, WalkError> {
        let id = self.mesh.source_id();
        let quantize = |p: &Vec3| from_f32x3(&to_f32x3(p));

        let mut rng = seeds.stream(id, dynamics_index, StreamTag::VolumePositions);
        let mut positions = sample_exterior_volume(&self.index, &self.sampler, config.surf_eps, &mut rng)?;

        let mut rng = seeds.stream(id, dynamics_index, StreamTag::SurfacePositions);
        let surface = sample_surface_points(&self.mesh, self.sampler.n_surface, &mut rng)?;
        let centroid = self.mesh.surface_centroid();
        positions.extend(surface.iter().map(|p| {
            if config.surface_offset_eps > 0.0 {
                let out = p - centroid;
                let n = out.norm();
                if n > 0.0 {
                    return quantize(&(p + out * (config.surface_offset_eps / n)));
                }
            }
            quantize(p)
        }));
        Ok(positions)
    }

    pub fn sample(
        &self,
        config: &GenerationConfig,
        seeds: &SeedPlan,
        dynamics_index: u32,
    ) -> Result<SampleRecord, WalkError> {
        let id = self.mesh.source_id();
        let fresh;
        let positions = match &self.positions {
            Some(p) => p,
            None => {
                fresh = self.tracking_positions(config, seeds, Some(dynamics_index))?;
                &fresh
            }
        };

        let mut rng = seeds.stream(id, Some(dynamics_index), StreamTag::Velocities);
        let velocities: Vec<Vec3> = sample_velocities(positions.len(), config.v_max, &mut rng)
            .iter()
            .map(|v| from_f32x3(&quantize_in_ball(v, config.v_max)))
            .collect();

        let run = generate_trajectory(
            &self.index,
            positions,
            &velocities,
            config.tau,
            config.feature,
            config.mode,
            config.surf_eps,
        )?;
        let features = run.features.expect("features requested");
        let flip = config.feature == FeatureKind::VectorDistance
            && config.convention == VectorConvention::SurfaceToQuery;

        Ok(SampleRecord {
            geometry_id: id.to_string(),
            dynamics_index,
            tau: config.tau as u16,
            feature_kind: config.feature,
            sticking_mode: config.mode,
            vector_convention: config.convention,
            v_max: config.v_max,
            positions: positions.iter().map(to_f32x3).collect(),
            velocities: velocities.iter().map(to_f32x3).collect(),
            features: features
                .data
                .iter()
                .map(|&f| if flip { -f as f32 } else { f as f32 })
                .collect(),
            stuck_steps: run
                .stuck_steps
                .iter()
                .map(|s| s.map(|s| s as u16))
                .collect(),
        })
    }
}

/// Builds the index, samples positions and velocities, and traces one sample.
pub fn generate_sample(
    mesh: &TriangleMesh,
    config: &GenerationConfig,
    seeds: &SeedPlan,
    dynamics_index: u32,
) -> Result<SampleRecord, WalkError> {
    PreparedGeometry::new(Arc::new(mesh.clone()), config, seeds)?.sample(config, seeds, dynamics_index)
}

#[derive(Debug, Clone)]
pub enum MeshSource {
    File(PathBuf),
    InMemory(Arc<TriangleMesh>),
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub geometry_id: String,
    pub category: Category,
    pub source: MeshSource,
}

impl CatalogEntry {
    fn load(&self) -> Result<Arc<TriangleMesh>, WalkError> {
        match &self.source {
            MeshSource::InMemory(m) => Ok(Arc::new(
                (**m).clone().with_identity(&self.geometry_id, self.category),
            )),
            MeshSource::File(path) => {
                let raw = load_mesh_file(path, self.category)?;
                let (mesh, _) = validate_mesh(&raw, DEFAULT_AREA_EPS)?;
                Ok(Arc::new(mesh.with_identity(&self.geometry_id, self.category)))
            }
        }
    }
}

/// Destination for generated samples. Called concurrently from workers;
/// each call receives a distinct record.
pub trait SampleSink: Sync {
    fn accept(&self, category: Category, record: &SampleRecord) -> Result<ShardEntry, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedWork {
    pub geometry_id: String,
    /// `None` when the whole geometry was skipped.
    pub dynamics_index: Option<u32>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSummary {
    /// Geometries with at least one emitted sample, per category.
    pub geometries_per_category: BTreeMap<Category, usize>,
    pub samples_per_category: BTreeMap<Category, usize>,
    pub total_samples: usize,
    /// In emission order: category-balanced geometry order, dynamics index inner.
    pub shards: Vec<ShardEntry>,
    pub skipped: Vec<SkippedWork>,
    /// Particle feature evaluations, `N * (tau + 1)` per sample.
    pub point_steps: u64,
}

/// Generates `n_dyn` samples for every catalog entry, in category-balanced
/// order, using the ambient rayon pool. Failures are logged, recorded in the
/// summary and skipped.
pub fn generate_dataset(
    catalog: &[CatalogEntry],
    config: &GenerationConfig,
    seeds: &SeedPlan,
    sink: &dyn SampleSink,
) -> DatasetSummary {
    let keys: Vec<(String, Category)> = catalog
        .iter()
        .map(|e| (e.geometry_id.clone(), e.category))
        .collect();
    let order = category_balanced_order(&keys, config.epoch_seed);

    let outcomes: Vec<(Category, Vec<ShardEntry>, Vec<SkippedWork>)> = order
        .par_iter()
        .map(|&gi| {
            let entry = &catalog[gi];
            let skip = |dynamics_index: Option<u32>, reason: String| {
                warn!(
                    "skipping {} (dynamics {:?}): {reason}",
                    entry.geometry_id, dynamics_index
                );
                SkippedWork {
                    geometry_id: entry.geometry_id.clone(),
                    dynamics_index,
                    reason,
                }
            };
            let prepared = entry
                .load()
                .and_then(|mesh| PreparedGeometry::new(mesh, config, seeds));
            let prepared = match prepared {
                Ok(p) => p,
                Err(e) => return (entry.category, vec![], vec![skip(None, e.to_string())]),
            };
            let results: Vec<Result<ShardEntry, SkippedWork>> = (0..config.n_dyn as u32)
                .into_par_iter()
                .map(|d| {
                    prepared
                        .sample(config, seeds, d)
                        .map_err(|e| e.to_string())
                        .and_then(|record| sink.accept(entry.category, &record))
                        .map_err(|e| skip(Some(d), e))
                })
                .collect();
            let mut shards = Vec::new();
            let mut skipped = Vec::new();
            for r in results {
                match r {
                    Ok(s) => shards.push(s),
                    Err(s) => skipped.push(s),
                }
            }
            (entry.category, shards, skipped)
        })
        .collect();

    let mut summary = DatasetSummary::default();
    for (category, shards, skipped) in outcomes {
        if !shards.is_empty() {
            *summary.geometries_per_category.entry(category).or_default() += 1;
            *summary.samples_per_category.entry(category).or_default() += shards.len();
        }
        summary.total_samples += shards.len();
        summary.point_steps += (shards.len() * config.n_points() * (config.tau + 1)) as u64;
        summary.shards.extend(shards);
        summary.skipped.extend(skipped);
    }
    summary
}
