//! Independent reference implementations and procedural meshes for tests.
//!
//! The closest-point oracle minimizes over the plane projection (when it
//! lands inside the triangle) and the three edge segments; the ray oracle is
//! Moller-Trumbore. Neither shares code with the library kernels.

#![allow(dead_code)]

use geowalk::mesh::{shapes, TriangleMesh};
use geowalk::Vec3;
use rand::Rng;

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * s
}

/// Closest point on one triangle.
pub fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let n2 = n.norm_squared();
    if n2 > 0.0 {
        let q = p - n * ((p - a).dot(&n) / n2);
        // Inside iff q is on the inner side of all three edges.
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(u, v)| (*v - *u).cross(&(q - *u)).dot(&n) >= 0.0);
        if inside {
            return q;
        }
    }
    [(a, b), (b, c), (c, a)]
        .iter()
        .map(|(u, v)| closest_on_segment(p, u, v))
        .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
        .unwrap()
}

/// Smallest distance from `p` to any triangle, and the point attaining it.
pub fn brute_closest(mesh: &TriangleMesh, p: &Vec3) -> (f64, Vec3) {
    (0..mesh.triangles().len())
        .map(|i| {
            let [a, b, c] = mesh.triangle(i);
            let q = closest_on_triangle(p, &a, &b, &c);
            ((q - p).norm(), q)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("non-empty mesh")
}

/// Moller-Trumbore, both faces, `t` in `[0, t_max]`.
pub fn moller_trumbore(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, t_max: f64) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qv) * inv;
    (t >= 0.0 && t <= t_max).then_some(t)
}

pub fn brute_first_hit(mesh: &TriangleMesh, o: &Vec3, d: &Vec3, t_max: f64) -> Option<f64> {
    (0..mesh.triangles().len())
        .filter_map(|i| {
            let [a, b, c] = mesh.triangle(i);
            moller_trumbore(o, d, &a, &b, &c, t_max)
        })
        .min_by(f64::total_cmp)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Closed blob: a UV sphere with radially jittered vertices.
pub fn jittered_sphere<R: Rng>(rng: &mut R, rings: usize, segments: usize) -> TriangleMesh {
    let base = shapes::uv_sphere([0.0; 3], 1.0, rings, segments);
    let vertices: Vec<Vec3> = base
        .vertices()
        .iter()
        .map(|v| v * rng.random_range(0.7..1.3))
        .collect();
    TriangleMesh::new(vertices, base.triangles().to_vec()).unwrap()
}

/// Union of a few random axis-aligned boxes (possibly overlapping).
pub fn random_boxes<R: Rng>(rng: &mut R, count: usize) -> TriangleMesh {
    let parts: Vec<TriangleMesh> = (0..count)
        .map(|_| {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let h: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.8));
            shapes::cuboid(
                std::array::from_fn(|k| c[k] - h[k]),
                std::array::from_fn(|k| c[k] + h[k]),
            )
        })
        .collect();
    shapes::merge(&parts)
}

/// Unstructured triangle soup in `[-1, 1]^3`.
pub fn triangle_soup<R: Rng>(rng: &mut R, n: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(3 * n);
    let mut triangles = Vec::with_capacity(n);
    for t in 0..n {
        let c = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        for _ in 0..3 {
            vertices.push(c + random_unit(rng) * rng.random_range(0.05..0.5));
        }
        let b = 3 * t as u32;
        triangles.push([b, b + 1, b + 2]);
    }
    TriangleMesh::new(vertices, triangles).unwrap()
}

/// Twenty procedural meshes of at most 200 triangles, mixing closed blobs,
/// box unions and open soups.
pub fn procedural_suite<R: Rng>(rng: &mut R) -> Vec<TriangleMesh> {
    (0..20)
        .map(|i| match i % 4 {
            0 => {
                let (rings, segments) = (rng.random_range(3..8), rng.random_range(3..12));
                jittered_sphere(rng, rings, segments)
            }
            1 => {
                let count = rng.random_range(1..5);
                random_boxes(rng, count)
            }
            2 => {
                let n = rng.random_range(1..200);
                triangle_soup(rng, n)
            }
            _ => shapes::uv_sphere([0.2, -0.1, 0.3], rng.random_range(0.3..1.2), 8, 12),
        })
        .inspect(|m| assert!(m.triangles().len() <= 200))
        .collect()
}

/// Signed distance to the axis-aligned cube `[-h, h]^3`.
pub fn cube_sdf(p: &Vec3, h: f64) -> f64 {
    let q = p.map(|c| c.abs() - h);
    let outside = q.map(|c| c.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}
