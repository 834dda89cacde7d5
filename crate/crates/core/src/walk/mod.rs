//! Sticking-boundary particle transport and feature trajectories.
//!
//! Each particle moves with its own constant velocity, one unit of time per
//! step, until it touches the geometry; from then on it never moves again.
//! Two discretizations are offered:
//!
//! - [`StickingMode::Literal`]: `x <- x + v` unless `x` is inside or on the
//!   surface, in which case the particle freezes where it is. A step may
//!   therefore end up to `|v|` inside the geometry before freezing.
//! - [`StickingMode::RayClamped`]: the step segment is ray cast; on a hit the
//!   particle is placed `surf_eps` before the hit point and frozen.
//!
//! Features are evaluated before each move, for `t = 0..=tau`; no move
//! follows the last evaluation.

mod generate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::spatial::{ClosestPointResult, RayHit, SpatialIndex};

pub use generate::{
    generate_dataset, generate_sample, CatalogEntry, DatasetSummary, GenerationConfig, MeshSource,
    PreparedGeometry, SampleRecord, SampleSink, SkippedWork, DEFAULT_SURF_EPS_REL,
};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("positions ({positions}) and velocities ({velocities}) differ in length")]
    LengthMismatch { positions: usize, velocities: usize },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Spatial(#[from] crate::spatial::SpatialError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error("sink failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StickingMode {
    Literal,
    RayClamped,
}

impl StickingMode {
    pub fn code(self) -> u8 {
        match self {
            StickingMode::Literal => 0,
            StickingMode::RayClamped => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(StickingMode::Literal),
            1 => Some(StickingMode::RayClamped),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    VectorDistance,
    Sdf,
}

impl FeatureKind {
    pub fn channels(self) -> usize {
        match self {
            FeatureKind::VectorDistance => 3,
            FeatureKind::Sdf => 1,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FeatureKind::VectorDistance => 0,
            FeatureKind::Sdf => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FeatureKind::VectorDistance),
            1 => Some(FeatureKind::Sdf),
            _ => None,
        }
    }
}

/// Direction of stored vector-distance features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorConvention {
    /// `closest_point - query`.
    #[default]
    QueryToSurface,
    /// `query - closest_point`.
    SurfaceToQuery,
}

impl VectorConvention {
    pub fn code(self) -> u8 {
        match self {
            VectorConvention::QueryToSurface => 0,
            VectorConvention::SurfaceToQuery => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(VectorConvention::QueryToSurface),
            1 => Some(VectorConvention::SurfaceToQuery),
            _ => None,
        }
    }
}

/// What the transport needs to know about the geometry.
pub trait Boundary: Sync {
    /// Closest surface point, or `None` when there is no surface at all.
    fn closest(&self, x: &Vec3) -> Option<ClosestPointResult>;
    /// Interior test for points off the surface.
    fn is_interior(&self, x: &Vec3) -> bool;
    /// First surface hit along the unit direction within `t_max`.
    fn first_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit>;
}

impl Boundary for SpatialIndex {
    fn closest(&self, x: &Vec3) -> Option<ClosestPointResult> {
        Some(self.closest_point(x))
    }

    fn is_interior(&self, x: &Vec3) -> bool {
        self.parity_inside(x)
    }

    fn first_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        self.first_hit_unchecked(origin, dir, t_max)
    }
}

/// A surface without an inside, such as a single wall. Particles stick only
/// by reaching it, never by containment.
#[derive(Debug, Clone, Copy)]
pub struct OpenSurface<'a>(pub &'a SpatialIndex);

impl Boundary for OpenSurface<'_> {
    fn closest(&self, x: &Vec3) -> Option<ClosestPointResult> {
        self.0.closest(x)
    }

    fn is_interior(&self, _: &Vec3) -> bool {
        false
    }

    fn first_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        self.0.first_hit(origin, dir, t_max)
    }
}

/// No geometry: every particle flies freely forever.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreeSpace;

impl Boundary for FreeSpace {
    fn closest(&self, _: &Vec3) -> Option<ClosestPointResult> {
        None
    }

    fn is_interior(&self, _: &Vec3) -> bool {
        false
    }

    fn first_hit(&self, _: &Vec3, _: &Vec3, _: f64) -> Option<RayHit> {
        None
    }
}

/// Per-particle transport state. `exterior_known` records that the particle
/// was verified outside and has not crossed the surface since, which lets
/// later steps skip the parity vote.
#[derive(Debug, Clone, Copy)]
struct Particle {
    x: Vec3,
    v: Vec3,
    stuck: Option<u32>,
    exterior_known: bool,
}

impl Particle {
    /// Freezes the particle at step `t` if it is on or inside the boundary.
    fn settle<B: Boundary + ?Sized>(&mut self, b: &B, t: u32, distance: f64, surf_eps: f64) {
        if self.stuck.is_some() {
            return;
        }
        if distance <= surf_eps {
            self.stuck = Some(t);
            return;
        }
        if !self.exterior_known {
            if b.is_interior(&self.x) {
                self.stuck = Some(t);
                return;
            }
            self.exterior_known = true;
        }
    }

    /// Moves a free particle from step `t` to `t + 1`.
    fn advance<B: Boundary + ?Sized>(&mut self, b: &B, t: u32, mode: StickingMode, surf_eps: f64) {
        if self.stuck.is_some() {
            return;
        }
        let speed = self.v.norm();
        if speed == 0.0 {
            return;
        }
        let dir = self.v / speed;
        let hit = b.first_hit(&self.x, &dir, speed);
        match (mode, hit) {
            (StickingMode::RayClamped, Some(h)) => {
                self.x += dir * (h.t - surf_eps).max(0.0);
                self.stuck = Some(t + 1);
            }
            (StickingMode::Literal, Some(_)) => {
                self.x += self.v;
                self.exterior_known = false;
            }
            (_, None) => self.x += self.v,
        }
    }
}

/// `N` particles with positions, constant velocities and the step at which
/// each became stuck.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingEnsemble {
    positions: Vec<Vec3>,
    velocities: Vec<Vec3>,
    stuck_step: Vec<Option<u32>>,
    exterior_known: Vec<bool>,
    t: u32,
}

impl TrackingEnsemble {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>) -> Result<Self, WalkError> {
        if positions.len() != velocities.len() {
            return Err(WalkError::LengthMismatch {
                positions: positions.len(),
                velocities: velocities.len(),
            });
        }
        let n = positions.len();
        Ok(Self {
            positions,
            velocities,
            stuck_step: vec![None; n],
            exterior_known: vec![false; n],
            t: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn stuck_steps(&self) -> &[Option<u32>] {
        &self.stuck_step
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    fn for_each_particle(&mut self, f: impl Fn(&mut Particle) + Sync + Send) {
        self.positions
            .par_iter_mut()
            .zip(self.velocities.par_iter())
            .zip(self.stuck_step.par_iter_mut())
            .zip(self.exterior_known.par_iter_mut())
            .for_each(|(((x, v), stuck), ext)| {
                let mut p = Particle {
                    x: *x,
                    v: *v,
                    stuck: *stuck,
                    exterior_known: *ext,
                };
                f(&mut p);
                *x = p.x;
                *stuck = p.stuck;
                *ext = p.exterior_known;
            });
    }

    /// Marks particles on or inside the boundary at the current step as
    /// stuck, without moving anything.
    pub fn settle<B: Boundary + ?Sized>(&mut self, boundary: &B, surf_eps: f64) {
        let t = self.t;
        self.for_each_particle(|p| {
            if p.stuck.is_none() {
                let d = boundary.closest(&p.x).map_or(f64::INFINITY, |c| c.distance);
                p.settle(boundary, t, d, surf_eps);
            }
        });
    }

    /// One transport step: settle at `t`, then advance every free particle.
    pub fn step<B: Boundary + ?Sized>(&mut self, boundary: &B, mode: StickingMode, surf_eps: f64) {
        let t = self.t;
        self.for_each_particle(|p| {
            if p.stuck.is_none() {
                let d = boundary.closest(&p.x).map_or(f64::INFINITY, |c| c.distance);
                p.settle(boundary, t, d, surf_eps);
                p.advance(boundary, t, mode, surf_eps);
            }
        });
        self.t += 1;
    }
}

/// Functional form of [`TrackingEnsemble::step`].
pub fn evolve_step<B: Boundary + ?Sized>(
    boundary: &B,
    ensemble: &TrackingEnsemble,
    mode: StickingMode,
    surf_eps: f64,
) -> TrackingEnsemble {
    let mut next = ensemble.clone();
    next.step(boundary, mode, surf_eps);
    next
}

/// Feature values laid out particle-major: `[particle][step][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrajectory {
    pub kind: FeatureKind,
    pub n_points: usize,
    pub steps: usize,
    pub data: Vec<f64>,
}

impl FeatureTrajectory {
    pub fn row(&self, particle: usize, step: usize) -> &[f64] {
        let c = self.kind.channels();
        let start = (particle * self.steps + step) * c;
        &self.data[start..start + c]
    }
}

/// Result of transporting an ensemble for `tau` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub features: Option<FeatureTrajectory>,
    /// Positions `[particle][step]`, `tau + 1` per particle.
    pub path: Vec<Vec3>,
    pub stuck_steps: Vec<Option<u32>>,
    pub tau: usize,
}

impl TrajectoryRun {
    pub fn position(&self, particle: usize, step: usize) -> Vec3 {
        self.path[particle * (self.tau + 1) + step]
    }
}

/// Transports the particles and records positions for `t = 0..=tau`.
/// Stuck status is settled at every recorded step, including the last.
pub fn simulate<B: Boundary + ?Sized>(
    boundary: &B,
    positions: &[Vec3],
    velocities: &[Vec3],
    tau: usize,
    mode: StickingMode,
    surf_eps: f64,
) -> Result<TrajectoryRun, WalkError> {
    trace(boundary, positions, velocities, tau, None, mode, surf_eps)
}

/// Feature trajectories `h(x_0), ..., h(x_tau)` under sticking transport.
/// Features are evaluated before each move; stuck particles keep the row of
/// the step at which they stopped.
pub fn generate_trajectory(
    index: &SpatialIndex,
    positions: &[Vec3],
    velocities: &[Vec3],
    tau: usize,
    kind: FeatureKind,
    mode: StickingMode,
    surf_eps: f64,
) -> Result<TrajectoryRun, WalkError> {
    trace(index, positions, velocities, tau, Some(kind), mode, surf_eps)
}

fn trace<B: Boundary + ?Sized>(
    boundary: &B,
    positions: &[Vec3],
    velocities: &[Vec3],
    tau: usize,
    kind: Option<FeatureKind>,
    mode: StickingMode,
    surf_eps: f64,
) -> Result<TrajectoryRun, WalkError> {
    if positions.len() != velocities.len() {
        return Err(WalkError::LengthMismatch {
            positions: positions.len(),
            velocities: velocities.len(),
        });
    }
    let n = positions.len();
    let steps = tau + 1;
    let channels = kind.map_or(0, FeatureKind::channels);
    let mut features = vec![0.0; n * steps * channels];
    let mut path = vec![Vec3::zeros(); n * steps];
    let mut stuck_steps = vec![None; n];

    // rayon rejects zero-sized chunks; a zero-channel feature buffer is empty
    // anyway, so give it a dummy chunk length.
    let row_len = (steps * channels).max(1);
    let feature_rows: Vec<&mut [f64]> = if channels == 0 {
        (0..n).map(|_| &mut [][..]).collect()
    } else {
        features.chunks_mut(row_len).collect()
    };

    feature_rows
        .into_par_iter()
        .zip(path.par_chunks_mut(steps))
        .zip(stuck_steps.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((feat, track), stuck))| {
            let mut p = Particle {
                x: positions[i],
                v: velocities[i],
                stuck: None,
                exterior_known: false,
            };
            for t in 0..steps {
                track[t] = p.x;
                if p.stuck.is_some_and(|s| (s as usize) < t) {
                    // Frozen since an earlier step: position unchanged, so is the feature.
                    feat.copy_within((t - 1) * channels..t * channels, t * channels);
                    continue;
                }
                let closest = boundary.closest(&p.x);
                let distance = closest.map_or(f64::INFINITY, |c| c.distance);
                p.settle(boundary, t as u32, distance, surf_eps);
                if let (Some(kind), Some(c)) = (kind, closest) {
                    let row = &mut feat[t * kind.channels()..(t + 1) * kind.channels()];
                    match kind {
                        FeatureKind::VectorDistance => {
                            let d = c.point - p.x;
                            row.copy_from_slice(d.as_slice());
                        }
                        FeatureKind::Sdf => {
                            let inside = c.distance > 0.0
                                && !p.exterior_known
                                && boundary.is_interior(&p.x);
                            row[0] = if inside { -c.distance } else { c.distance };
                        }
                    }
                }
                if t < tau {
                    p.advance(boundary, t as u32, mode, surf_eps);
                }
            }
            *stuck = p.stuck;
        });

    Ok(TrajectoryRun {
        features: kind.map(|kind| FeatureTrajectory {
            kind,
            n_points: n,
            steps,
            data: features,
        }),
        path,
        stuck_steps,
        tau,
    })
}
