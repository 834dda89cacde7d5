//! Mass-ledger audits and transport oracles.
//!
//! Densities are particle counts. A particle is either still in flight
//! ("interior" of phase space) or stuck on the boundary; sticking is
//! permanent, so the two counts always sum to `N` and the boundary count
//! never decreases.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::shapes;
use crate::spatial::{SpatialIndex, DEFAULT_MAX_LEAF};
use crate::walk::{simulate, FreeSpace, OpenSurface, SampleRecord, StickingMode, TrajectoryRun, WalkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConservationError {
    #[error("step {step}: interior {interior} + boundary {boundary} != {total}")]
    Ledger {
        step: usize,
        interior: usize,
        boundary: usize,
        total: usize,
    },
    #[error("step {step}: boundary count fell from {previous} to {current}")]
    NotMonotone {
        step: usize,
        previous: usize,
        current: usize,
    },
    #[error("particle {particle}: velocity changed")]
    VelocityChanged { particle: usize },
    #[error("malformed input: {0}")]
    Malformed(String),
}

impl ConservationError {
    /// The step the violation was detected at, if it is tied to one.
    pub fn step(&self) -> Option<usize> {
        match self {
            ConservationError::Ledger { step, .. } | ConservationError::NotMonotone { step, .. } => Some(*step),
            _ => None,
        }
    }
}

/// Per-step particle counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassLedger {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub total: usize,
}

impl MassLedger {
    /// Counts from stuck steps. A particle listed in `thawed` as
    /// `(particle, step)` moved again after sticking and is counted in
    /// neither bucket from that step on.
    pub fn from_stuck_steps(stuck: &[Option<usize>], thawed: &[(usize, usize)], tau: usize) -> Self {
        let steps = tau + 1;
        let mut interior = vec![0; steps];
        let mut boundary = vec![0; steps];
        let mut thaw_at = vec![usize::MAX; stuck.len()];
        for &(i, t) in thawed {
            thaw_at[i] = thaw_at[i].min(t);
        }
        for (i, s) in stuck.iter().enumerate() {
            for t in 0..steps {
                match s {
                    Some(s) if *s <= t => {
                        if t < thaw_at[i] {
                            boundary[t] += 1;
                        }
                    }
                    _ => interior[t] += 1,
                }
            }
        }
        Self {
            interior,
            boundary,
            total: stuck.len(),
        }
    }

    pub fn steps(&self) -> usize {
        self.interior.len()
    }

    /// The ledger balances at every step and the boundary only grows.
    pub fn check(&self) -> Result<(), ConservationError> {
        for t in 0..self.steps() {
            if self.interior[t] + self.boundary[t] != self.total {
                return Err(ConservationError::Ledger {
                    step: t,
                    interior: self.interior[t],
                    boundary: self.boundary[t],
                    total: self.total,
                });
            }
            if t > 0 && self.boundary[t] < self.boundary[t - 1] {
                return Err(ConservationError::NotMonotone {
                    step: t,
                    previous: self.boundary[t - 1],
                    current: self.boundary[t],
                });
            }
        }
        Ok(())
    }

    /// Fraction of particles stuck at each step.
    pub fn stuck_fraction(&self) -> Vec<f64> {
        self.boundary
            .iter()
            .map(|&b| if self.total == 0 { 0.0 } else { b as f64 / self.total as f64 })
            .collect()
    }
}

/// Audits a stored record. A stuck particle whose feature row changes after
/// its stuck step has thawed; it leaves the ledger at that step.
pub fn mass_audit(record: &SampleRecord) -> Result<MassLedger, ConservationError> {
    if !record.is_consistent() {
        return Err(ConservationError::Malformed("array lengths disagree".into()));
    }
    let tau = record.tau as usize;
    let mut stuck = Vec::with_capacity(record.n_points());
    let mut thawed = Vec::new();
    for (i, s) in record.stuck_steps.iter().enumerate() {
        let s = s.map(usize::from);
        if let Some(s) = s {
            if s > tau {
                return Err(ConservationError::Malformed(format!("particle {i} stuck at {s} > tau {tau}")));
            }
            let frozen = record.feature_row(i, s);
            if let Some(t) = (s + 1..=tau).find(|&t| !bits_equal(record.feature_row(i, t), frozen)) {
                thawed.push((i, t));
            }
        }
        stuck.push(s);
    }
    let ledger = MassLedger::from_stuck_steps(&stuck, &thawed, tau);
    ledger.check()?;
    Ok(ledger)
}

/// Audits a trajectory run; thaw is detected from the recorded positions.
pub fn mass_audit_run(run: &TrajectoryRun) -> Result<MassLedger, ConservationError> {
    let stuck: Vec<Option<usize>> = run.stuck_steps.iter().map(|s| s.map(|s| s as usize)).collect();
    let mut thawed = Vec::new();
    for (i, s) in stuck.iter().enumerate() {
        if let Some(s) = *s {
            let frozen = run.position(i, s);
            if let Some(t) = (s + 1..=run.tau).find(|&t| run.position(i, t) != frozen) {
                thawed.push((i, t));
            }
        }
    }
    let ledger = MassLedger::from_stuck_steps(&stuck, &thawed, run.tau);
    ledger.check()?;
    Ok(ledger)
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Velocities before and after evolution are bit-identical.
pub fn check_velocity_constancy(before: &[Vec3], after: &[Vec3]) -> Result<(), ConservationError> {
    if before.len() != after.len() {
        return Err(ConservationError::Malformed("velocity arrays differ in length".into()));
    }
    for (i, (a, b)) in before.iter().zip(after).enumerate() {
        if a.iter().zip(b.iter()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(ConservationError::VelocityChanged { particle: i });
        }
    }
    Ok(())
}

/// Axis-aligned voxel grid of particle counts. Particles outside the grid
/// are tallied separately so no mass goes missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityGrid {
    spec: GridSpecKey,
    counts: Vec<u64>,
    outside: u64,
}

// Bit patterns of the grid geometry, so grids compare with Eq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GridSpecKey {
    origin: [u64; 3],
    cell: u64,
    dims: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub cell: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn cube(origin: [f64; 3], cell: f64, n: usize) -> Self {
        Self {
            origin,
            cell,
            dims: [n; 3],
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.dims[k] as f64 * self.cell)
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn translated(&self, by: &Vec3) -> Self {
        Self {
            origin: std::array::from_fn(|k| self.origin[k] + by[k]),
            ..*self
        }
    }

    fn cell_of(&self, x: &Vec3) -> Option<usize> {
        let mut idx = 0;
        for k in 0..3 {
            let c = ((x[k] - self.origin[k]) / self.cell).floor();
            if !(c >= 0.0 && c < self.dims[k] as f64) {
                return None;
            }
            idx = idx * self.dims[k] + c as usize;
        }
        Some(idx)
    }
}

impl DensityGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec: GridSpecKey {
                origin: spec.origin.map(f64::to_bits),
                cell: spec.cell.to_bits(),
                dims: spec.dims,
            },
            counts: vec![0; spec.n_cells()],
            outside: 0,
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            origin: self.spec.origin.map(f64::from_bits),
            cell: f64::from_bits(self.spec.cell),
            dims: self.spec.dims,
        }
    }

    pub fn bin(spec: GridSpec, points: impl IntoIterator<Item = Vec3>) -> Self {
        let mut g = Self::new(spec);
        for p in points {
            g.add(&p);
        }
        g
    }

    pub fn add(&mut self, x: &Vec3) {
        match self.spec().cell_of(x) {
            Some(i) => self.counts[i] += 1,
            None => self.outside += 1,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn outside(&self) -> u64 {
        self.outside
    }

    /// Particles inside the grid.
    pub fn binned(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Cell-wise L1 distance, with the outside tally as one extra cell.
    /// Grid geometry is not compared; the caller decides which cells correspond.
    pub fn l1_distance(&self, other: &DensityGrid) -> u64 {
        assert_eq!(self.counts.len(), other.counts.len(), "grids differ in size");
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.abs_diff(*b))
            .sum::<u64>()
            + self.outside.abs_diff(other.outside)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationReport {
    /// Every component of `v` is a whole number of cells.
    pub grid_aligned: bool,
    pub l1: u64,
    pub l1_per_particle: f64,
    /// Zero when grid-aligned; otherwise the Monte-Carlo baseline.
    pub tolerance: f64,
    pub passed: bool,
}

/// Independent reference ensembles used for the non-aligned baseline.
pub const REFERENCE_PAIRS: usize = 8;

/// Lattice the sampled positions are snapped to, as a fraction of a cell.
/// Keeping positions and grid-aligned displacements on a common dyadic
/// lattice makes free flight exact in floating point.
const POSITION_LATTICE: f64 = 1.0 / (1u64 << 20) as f64;

fn sample_in_grid(spec: &GridSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let q = spec.cell * POSITION_LATTICE;
    let extent = spec.extent();
    (0..n)
        .map(|_| {
            Vec3::from_fn(|k, _| {
                let steps = (extent[k] / q) as u64;
                spec.origin[k] + rng.random_range(0..steps) as f64 * q
            })
        })
        .collect()
}

/// Free-flight check of the transport equation: with one shared velocity
/// the density at `tau` is the initial density translated by `tau * v`.
///
/// Particles start uniform in the grid box and fly in empty space. When `v`
/// is grid-aligned (`cell` a power of two and every `v_k / cell` an integer)
/// the final histogram on the translated grid must equal the initial one
/// exactly. Otherwise the final histogram on the translated grid is compared
/// with a fresh ensemble drawn uniformly in the translated box, against a
/// tolerance of mean + 3 sd of the same statistic over independent pairs of
/// such fresh ensembles.
pub fn translation_oracle_check(
    n_particles: usize,
    shared_v: Vec3,
    tau: usize,
    grid: GridSpec,
    seed: u64,
) -> Result<TranslationReport, WalkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = sample_in_grid(&grid, n_particles, &mut rng);
    let velocities = vec![shared_v; n_particles];
    let run = simulate(&FreeSpace, &start, &velocities, tau, StickingMode::RayClamped, 0.0)?;
    let end = (0..n_particles).map(|i| run.position(i, tau));

    let shift = shared_v * tau as f64;
    let moved = grid.translated(&shift);
    let observed = DensityGrid::bin(moved, end);

    let power_of_two = grid.cell > 0.0 && grid.cell.log2().fract() == 0.0;
    let grid_aligned = power_of_two && shared_v.iter().all(|c| (c / grid.cell).fract() == 0.0);

    let n = n_particles.max(1) as f64;
    if grid_aligned {
        let initial = DensityGrid::bin(grid, start.iter().copied());
        let l1 = observed.l1_distance(&initial);
        return Ok(TranslationReport {
            grid_aligned,
            l1,
            l1_per_particle: l1 as f64 / n,
            tolerance: 0.0,
            passed: l1 == 0,
        });
    }

    let mut fresh = || DensityGrid::bin(moved, sample_in_grid(&moved, n_particles, &mut rng));
    let reference = fresh();
    let l1 = observed.l1_distance(&reference);
    let baseline: Vec<f64> = (0..REFERENCE_PAIRS)
        .map(|_| fresh().l1_distance(&fresh()) as f64 / n)
        .collect();
    let mean = baseline.iter().sum::<f64>() / baseline.len() as f64;
    let var = baseline.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (baseline.len() - 1) as f64;
    let tolerance = mean + 3.0 * var.sqrt();
    let l1_per_particle = l1 as f64 / n;
    Ok(TranslationReport {
        grid_aligned,
        l1,
        l1_per_particle,
        tolerance,
        passed: l1_per_particle <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxStep {
    pub step: usize,
    pub expected: f64,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxReport {
    pub steps: Vec<FluxStep>,
    pub ledger: MassLedger,
}

impl FluxReport {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.passed)
    }
}

/// Wall and particle box for [`halfspace_flux_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfspaceSetup {
    /// Unit normal of the wall plane through the origin, pointing from the
    /// particles toward the wall.
    pub normal: Vec3,
    /// Box depth along the normal; particles start at depths in `(0, depth]`.
    pub depth: f64,
    /// Lateral box width.
    pub width: f64,
    pub surf_eps: f64,
}

impl Default for HalfspaceSetup {
    fn default() -> Self {
        Self {
            normal: Vec3::x(),
            depth: 4.0,
            width: 4.0,
            surf_eps: 1e-9,
        }
    }
}

/// Flux into a single wall. The fraction of particles stuck by step `t`
/// should be `min(1, t (v . n) / depth)`; each step must lie within a 3-sigma
/// binomial bound of that value (exact when the value is 0 or 1).
pub fn halfspace_flux_check(
    n_particles: usize,
    setup: &HalfspaceSetup,
    shared_v: Vec3,
    tau: usize,
    seed: u64,
) -> Result<FluxReport, WalkError> {
    let n = setup.normal.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);

    // Wall quad wide enough that no particle drifts past its edge.
    let half = setup.width / 2.0 + tau as f64 * shared_v.norm() + 1.0;
    let wall = shapes::quad(-(u + w) * half, u * 2.0 * half, w * 2.0 * half);
    let index = SpatialIndex::build(Arc::new(wall), DEFAULT_MAX_LEAF)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<Vec3> = (0..n_particles)
        .map(|_| {
            // (0, depth]: the wall plane itself is excluded.
            let d = setup.depth * (1.0 - rng.random::<f64>());
            let a = (rng.random::<f64>() - 0.5) * setup.width;
            let b = (rng.random::<f64>() - 0.5) * setup.width;
            -n * d + u * a + w * b
        })
        .collect();
    let velocities = vec![shared_v; n_particles];
    let run = simulate(
        &OpenSurface(&index),
        &positions,
        &velocities,
        tau,
        StickingMode::RayClamped,
        setup.surf_eps,
    )?;

    let ledger = mass_audit_run(&run).map_err(|e| WalkError::Sink(e.to_string()))?;
    let vn = shared_v.dot(&n).max(0.0);
    let total = n_particles.max(1) as f64;
    let steps = (0..=tau)
        .map(|t| {
            let expected = (t as f64 * vn / setup.depth).min(1.0);
            let observed = ledger.boundary[t] as f64 / total;
            let bound = 3.0 * (expected * (1.0 - expected) / total).sqrt();
            FluxStep {
                step: t,
                expected,
                observed,
                bound,
                passed: (observed - expected).abs() <= bound,
            }
        })
        .collect();
    Ok(FluxReport { steps, ledger })
}
