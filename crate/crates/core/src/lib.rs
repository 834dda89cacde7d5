//! Dynamics-lifted geometric supervision data from raw triangle meshes.
//!
//! The pipeline normalizes a mesh, samples tracking particles around it,
//! pairs each particle with a random constant velocity, and evolves the
//! ensemble under sticking-boundary transport: particles fly freely until
//! they reach the surface, where they halt permanently. The supervision
//! target for each particle is the trajectory of a geometric feature
//! (vector distance or signed distance) along that path.
//!
//! Modules, bottom-up:
//!
//! - [`mesh`]: OBJ / binary STL loading, validation and canonical normalization.
//! - [`spatial`]: BVH-backed closest-point, ray, signed-distance and
//!   containment queries.
//! - [`sampling`]: seeded substreams and the volume / surface / velocity samplers.
//! - [`walk`]: particle evolution, feature trajectories and sample generation.
//! - [`conservation`]: mass-ledger audits and transport oracles.
//! - [`condition`]: task-specific velocity fields built from simulation settings.
//! - [`dataset`]: the binary shard format and the JSON manifest.

pub mod condition;
pub mod conservation;
pub mod dataset;
pub mod geometry;
pub mod mesh;
pub mod sampling;
pub mod spatial;
pub mod walk;

pub use geometry::{Aabb, Vec3};
pub use mesh::{Category, TriangleMesh};
pub use spatial::SpatialIndex;
