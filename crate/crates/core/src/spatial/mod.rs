//! Immutable BVH over one mesh: closest point, vector and signed distance,
//! first ray hit and inside/on-boundary containment.
//!
//! Results are deterministic functions of the mesh and the query. When two
//! triangles tie on distance (or ray parameter) up to a relative `1e-12`, the
//! lower triangle id wins.

mod primitives;

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::mesh::TriangleMesh;

pub use primitives::{closest_point_on_triangle, WatertightRay};

pub const DEFAULT_MAX_LEAF: usize = 4;

/// Number of parity rays in the containment vote.
pub const PARITY_RAYS: usize = 5;

/// Seed for the parity-ray directions (the 64-bit golden ratio constant).
pub const PARITY_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

/// Relative tolerance under which two candidate distances count as tied.
const TIE_REL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("cannot index an empty mesh")]
    EmptyMesh,
    #[error("ray direction must be unit length, got norm {0}")]
    NonUnitDirection(f64),
    #[error("t_max must be non-negative, got {0}")]
    NegativeTMax(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    pub point: Vec3,
    pub distance: f64,
    pub triangle_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: Vec3,
    pub triangle_id: usize,
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone, Copy)]
struct LeafTriangle {
    id: u32,
    v: [Vec3; 3],
}

/// Bounding volume hierarchy built by median split on the longest centroid
/// axis. Triangle order within equal centroids falls back to triangle id, so
/// the build is a pure function of the mesh.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    mesh: Arc<TriangleMesh>,
    nodes: Vec<Node>,
    leaf_tris: Vec<LeafTriangle>,
    max_leaf: usize,
}

/// `a` beats `b` when smaller by more than the tie tolerance, or tied with a
/// lower id.
#[inline]
fn better(a: f64, a_id: u32, b: f64, b_id: u32) -> bool {
    let tol = TIE_REL * a.abs().max(b.abs());
    a < b - tol || (a <= b + tol && a_id < b_id)
}

fn parity_directions() -> &'static [Vec3; PARITY_RAYS] {
    static DIRS: OnceLock<[Vec3; PARITY_RAYS]> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PARITY_SEED);
        std::array::from_fn(|_| loop {
            let v = Vec3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let n = v.norm();
            if n > 1e-3 {
                break v / n;
            }
        })
    })
}

pub fn build_index(mesh: &TriangleMesh) -> Result<SpatialIndex, SpatialError> {
    SpatialIndex::build(Arc::new(mesh.clone()), DEFAULT_MAX_LEAF)
}

impl SpatialIndex {
    pub fn build(mesh: Arc<TriangleMesh>, max_leaf: usize) -> Result<Self, SpatialError> {
        if mesh.is_empty() {
            return Err(SpatialError::EmptyMesh);
        }
        let max_leaf = max_leaf.max(1);
        let mut items: Vec<(u32, Vec3, Aabb)> = (0..mesh.triangles().len())
            .map(|i| {
                let v = mesh.triangle(i);
                (i as u32, (v[0] + v[1] + v[2]) / 3.0, Aabb::from_points(&v))
            })
            .collect();
        let mut index = SpatialIndex {
            nodes: Vec::with_capacity(2 * items.len() / max_leaf + 1),
            leaf_tris: Vec::with_capacity(items.len()),
            max_leaf,
            mesh,
        };
        index.build_node(&mut items);
        Ok(index)
    }

    fn build_node(&mut self, items: &mut [(u32, Vec3, Aabb)]) -> u32 {
        let bounds = items.iter().fold(Aabb::EMPTY, |b, it| b.union(&it.2));
        let slot = self.nodes.len() as u32;
        if items.len() <= self.max_leaf {
            let start = self.leaf_tris.len() as u32;
            for &(id, _, _) in items.iter() {
                self.leaf_tris.push(LeafTriangle {
                    id,
                    v: self.mesh.triangle(id as usize),
                });
            }
            self.nodes.push(Node {
                bounds,
                kind: NodeKind::Leaf {
                    start,
                    count: items.len() as u32,
                },
            });
            return slot;
        }

        let centroid_box = Aabb::from_points(items.iter().map(|it| &it.1));
        let axis = centroid_box.extent().imax();
        items.sort_by(|a, b| a.1[axis].total_cmp(&b.1[axis]).then(a.0.cmp(&b.0)));
        let mid = items.len() / 2;

        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Inner { left: 0, right: 0 },
        });
        let (lo, hi) = items.split_at_mut(mid);
        let left = self.build_node(lo);
        let right = self.build_node(hi);
        self.nodes[slot as usize].kind = NodeKind::Inner { left, right };
        slot
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn max_leaf(&self) -> usize {
        self.max_leaf
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Triangle ids per leaf, in traversal order.
    pub fn leaves(&self) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { start, count } => Some(
                    self.leaf_tris[start as usize..(start + count) as usize]
                        .iter()
                        .map(|t| t.id as usize)
                        .collect(),
                ),
                NodeKind::Inner { .. } => None,
            })
            .collect()
    }

    /// Checks that every node box contains its children's boxes (and, at
    /// leaves, its triangles' boxes).
    pub fn check_bounds(&self) -> bool {
        self.nodes.iter().all(|n| match n.kind {
            NodeKind::Inner { left, right } => {
                n.bounds.contains_box(&self.nodes[left as usize].bounds)
                    && n.bounds.contains_box(&self.nodes[right as usize].bounds)
            }
            NodeKind::Leaf { start, count } => self.leaf_tris
                [start as usize..(start + count) as usize]
                .iter()
                .all(|t| n.bounds.contains_box(&Aabb::from_points(&t.v))),
        })
    }

    pub fn closest_point(&self, x: &Vec3) -> ClosestPointResult {
        let mut best_d2 = f64::INFINITY;
        let mut best_id = u32::MAX;
        let mut best_point = Vec3::zeros();

        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(x)));
        while let Some((ni, box_d2)) = stack.pop() {
            if box_d2 > best_d2 * (1.0 + 2.0 * TIE_REL) {
                continue;
            }
            match self.nodes[ni as usize].kind {
                NodeKind::Leaf { start, count } => {
                    for t in &self.leaf_tris[start as usize..(start + count) as usize] {
                        let p = closest_point_on_triangle(x, &t.v[0], &t.v[1], &t.v[2]);
                        let d2 = (p - x).norm_squared();
                        if better(d2, t.id, best_d2, best_id) {
                            best_d2 = d2;
                            best_id = t.id;
                            best_point = p;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left as usize].bounds.distance_squared(x);
                    let dr = self.nodes[right as usize].bounds.distance_squared(x);
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        ClosestPointResult {
            point: best_point,
            distance: (best_point - x).norm(),
            triangle_id: best_id as usize,
        }
    }

    /// Vector from `x` to its closest surface point.
    pub fn vector_distance(&self, x: &Vec3) -> Vec3 {
        self.closest_point(x).point - x
    }

    /// Unsigned distance, negated when `x` is off the surface and the parity
    /// vote puts it inside.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        let d = self.closest_point(x).distance;
        if d > 0.0 && self.parity_inside(x) {
            -d
        } else {
            d
        }
    }

    pub fn ray_first_hit(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        t_max: f64,
    ) -> Result<Option<RayHit>, SpatialError> {
        let n = direction.norm();
        if !((n - 1.0).abs() <= 1e-9) {
            return Err(SpatialError::NonUnitDirection(n));
        }
        if !(t_max >= 0.0) {
            return Err(SpatialError::NegativeTMax(t_max));
        }
        Ok(self.first_hit_unchecked(origin, direction, t_max))
    }

    pub(crate) fn first_hit_unchecked(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        t_max: f64,
    ) -> Option<RayHit> {
        let ray = WatertightRay::new(*origin, *direction);
        let inv = direction.map(|c| 1.0 / c);
        let mut best_t = t_max;
        let mut best_id = u32::MAX;

        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t0) = self.nodes[0].bounds.ray_entry(origin, &inv, t_max) {
            stack.push((0, t0));
        }
        while let Some((ni, entry)) = stack.pop() {
            if best_id != u32::MAX && entry > best_t * (1.0 + 2.0 * TIE_REL) {
                continue;
            }
            let limit = if best_id == u32::MAX {
                t_max
            } else {
                (best_t * (1.0 + 2.0 * TIE_REL)).min(t_max)
            };
            match self.nodes[ni as usize].kind {
                NodeKind::Leaf { start, count } => {
                    for tri in &self.leaf_tris[start as usize..(start + count) as usize] {
                        if let Some(t) = ray.intersect(&tri.v[0], &tri.v[1], &tri.v[2], limit) {
                            if best_id == u32::MAX || better(t, tri.id, best_t, best_id) {
                                best_t = t;
                                best_id = tri.id;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let el = self.nodes[left as usize].bounds.ray_entry(origin, &inv, limit);
                    let er = self.nodes[right as usize].bounds.ray_entry(origin, &inv, limit);
                    match (el, er) {
                        (Some(l), Some(r)) if l <= r => {
                            stack.push((right, r));
                            stack.push((left, l));
                        }
                        (Some(l), Some(r)) => {
                            stack.push((left, l));
                            stack.push((right, r));
                        }
                        (Some(l), None) => stack.push((left, l)),
                        (None, Some(r)) => stack.push((right, r)),
                        (None, None) => {}
                    }
                }
            }
        }
        (best_id != u32::MAX).then(|| RayHit {
            t: best_t,
            point: origin + best_t * direction,
            triangle_id: best_id as usize,
        })
    }

    /// Number of distinct surface crossings along the infinite ray. Hits whose
    /// parameters agree to `1e-10` (a crossing through a shared edge or
    /// vertex) count once.
    pub fn crossing_count(&self, origin: &Vec3, direction: &Vec3) -> usize {
        let ray = WatertightRay::new(*origin, *direction);
        let inv = direction.map(|c| 1.0 / c);
        let mut hits = Vec::new();
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bounds.ray_entry(origin, &inv, f64::INFINITY).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for tri in &self.leaf_tris[start as usize..(start + count) as usize] {
                        if let Some(t) = ray.intersect(&tri.v[0], &tri.v[1], &tri.v[2], f64::INFINITY)
                        {
                            hits.push(t);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        hits.sort_by(f64::total_cmp);
        let mut distinct = 0;
        let mut last = f64::NEG_INFINITY;
        for t in hits {
            if t - last > 1e-10 * (1.0 + t.abs()) {
                distinct += 1;
                last = t;
            }
        }
        distinct
    }

    /// Number of parity rays (out of [`PARITY_RAYS`]) reporting an odd
    /// number of crossings.
    pub fn inside_votes(&self, x: &Vec3) -> usize {
        parity_directions()
            .iter()
            .filter(|d| self.crossing_count(x, d) % 2 == 1)
            .count()
    }

    /// Majority parity vote, ignoring the on-boundary clause.
    pub fn parity_inside(&self, x: &Vec3) -> bool {
        self.inside_votes(x) > PARITY_RAYS / 2
    }

    /// True when `x` is within `surf_eps` of the surface or inside by majority
    /// parity vote.
    pub fn contains(&self, x: &Vec3, surf_eps: f64) -> bool {
        self.closest_point(x).distance <= surf_eps || self.parity_inside(x)
    }

    /// Exhaustive scan over all triangles with the same tie rule as
    /// [`SpatialIndex::closest_point`].
    pub fn closest_point_exhaustive(&self, x: &Vec3) -> ClosestPointResult {
        let mesh = &self.mesh;
        let mut best = (f64::INFINITY, u32::MAX, Vec3::zeros());
        for i in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle(i);
            let p = closest_point_on_triangle(x, &a, &b, &c);
            let d2 = (p - x).norm_squared();
            if better(d2, i as u32, best.0, best.1) {
                best = (d2, i as u32, p);
            }
        }
        ClosestPointResult {
            point: best.2,
            distance: (best.2 - x).norm(),
            triangle_id: best.1 as usize,
        }
    }

    /// Exhaustive scan counterpart of [`SpatialIndex::ray_first_hit`].
    pub fn ray_first_hit_exhaustive(&self, origin: &Vec3, direction: &Vec3, t_max: f64) -> Option<RayHit> {
        let ray = WatertightRay::new(*origin, *direction);
        let mut best: Option<(f64, u32)> = None;
        for i in 0..self.mesh.triangles().len() {
            let [a, b, c] = self.mesh.triangle(i);
            if let Some(t) = ray.intersect(&a, &b, &c, t_max) {
                if best.is_none_or(|(bt, bid)| better(t, i as u32, bt, bid)) {
                    best = Some((t, i as u32));
                }
            }
        }
        best.map(|(t, id)| RayHit {
            t,
            point: origin + t * direction,
            triangle_id: id as usize,
        })
    }
}
