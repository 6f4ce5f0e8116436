//! Median-split bounding volume hierarchy over a [`TriangleMesh`].

use alloc::vec::Vec;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rays::Ray;

pub const MAX_LEAF_SIZE: usize = 8;
/// Smallest accepted ray parameter; nearer intersections are ignored.
pub const T_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p.axis(i) >= self.min.axis(i) && p.axis(i) <= self.max.axis(i))
    }

    fn padded(mut self) -> Self {
        let pad = (self.max - self.min).norm() * 1e-9 + 1e-12;
        self.min -= Vec3::splat(pad);
        self.max += Vec3::splat(pad);
        self
    }

    /// Entry parameter of the slab test, if the ray hits within `[0, t_max]`.
    fn ray_entry(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let inv = inv_dir.axis(i);
            let o = origin.axis(i);
            let mut near = (self.min.axis(i) - o) * inv;
            let mut far = (self.max.axis(i) - o) * inv;
            if near > far {
                core::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf keeps the current bound.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    fn distance_squared(&self, p: Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = p.axis(i);
            let e = if v < self.min.axis(i) {
                self.min.axis(i) - v
            } else if v > self.max.axis(i) {
                v - self.max.axis(i)
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    /// Triangles `order[start..start + count]`.
    Leaf { start: u32, count: u32 },
    /// Left child is the next node; right child index stored.
    Inner { right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub triangle: u32,
    /// Barycentric weight of the second vertex.
    pub u: f64,
    /// Barycentric weight of the third vertex.
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance_squared: f64,
    pub triangle: u32,
}

/// Möller-Trumbore with closed edges. Returns `(t, u, v)` for `t > T_MIN`.
#[inline]
pub fn intersect_triangle(ray: &Ray, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = ray.dir.cross(e2);
    let det = e1.dot(pvec);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = ray.origin - a;
    let u = tvec.dot(pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.dir.dot(qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(qvec) * inv;
    (t > T_MIN).then_some((t, u, v))
}

/// Closest point on triangle `abc` to `p` (Ericson's region test).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Keeps the smaller `t`, breaking exact ties towards the lower triangle id.
#[inline]
pub fn better_hit(current: Option<Hit>, candidate: Hit) -> Option<Hit> {
    match current {
        Some(h) if h.t < candidate.t || (h.t == candidate.t && h.triangle < candidate.triangle) => {
            Some(h)
        }
        _ => Some(candidate),
    }
}

fn make_hit(ray: &Ray, tri: u32, (t, u, v): (f64, f64, f64)) -> Hit {
    Hit {
        t,
        point: ray.at(t),
        triangle: tri,
        u,
        v,
    }
}

/// Brute-force nearest hit over every triangle.
pub fn cast_ray_brute_force(mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
    let mut best = None;
    for i in 0..mesh.len() {
        let [a, b, c] = mesh.triangle(i);
        if let Some(tuv) = intersect_triangle(ray, a, b, c) {
            best = better_hit(best, make_hit(ray, i as u32, tuv));
        }
    }
    best
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let centroids: Vec<Vec3> = (0..mesh.len())
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                (a + b + c) / 3.0
            })
            .collect();
        let mut order: Vec<u32> = (0..mesh.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.len() / MAX_LEAF_SIZE + 1);
        Self::build_range(mesh, &centroids, &mut order, 0, &mut nodes);
        Ok(Self { nodes, order })
    }

    fn build_range(
        mesh: &TriangleMesh,
        centroids: &[Vec3],
        order: &mut [u32],
        offset: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> usize {
        let mut bounds = Aabb::EMPTY;
        let mut cbounds = Aabb::EMPTY;
        for &t in order.iter() {
            for v in mesh.triangle(t as usize) {
                bounds.grow(v);
            }
            cbounds.grow(centroids[t as usize]);
        }
        let index = nodes.len();
        if order.len() <= MAX_LEAF_SIZE {
            nodes.push(BvhNode {
                bounds: bounds.padded(),
                kind: NodeKind::Leaf {
                    start: offset as u32,
                    count: order.len() as u32,
                },
            });
            return index;
        }
        let extent = cbounds.max - cbounds.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        order.sort_by(|&a, &b| {
            centroids[a as usize]
                .axis(axis)
                .total_cmp(&centroids[b as usize].axis(axis))
                .then(a.cmp(&b))
        });
        let mid = order.len() / 2;
        nodes.push(BvhNode {
            bounds: bounds.padded(),
            kind: NodeKind::Inner { right: 0 },
        });
        let (left, right) = order.split_at_mut(mid);
        Self::build_range(mesh, centroids, left, offset, nodes);
        let r = Self::build_range(mesh, centroids, right, offset + mid, nodes);
        nodes[index].kind = NodeKind::Inner { right: r as u32 };
        index
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Triangle ids of each leaf, in node order.
    pub fn leaves(&self) -> impl Iterator<Item = (&BvhNode, &[u32])> + '_ {
        self.nodes.iter().filter_map(move |n| match n.kind {
            NodeKind::Leaf { start, count } => {
                Some((n, &self.order[start as usize..(start + count) as usize]))
            }
            NodeKind::Inner { .. } => None,
        })
    }

    /// Nearest intersection with `t > T_MIN`; identical to
    /// [`cast_ray_brute_force`] including tie-breaks.
    pub fn cast_ray(&self, mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            let limit = best.map_or(f64::INFINITY, |h| h.t);
            if node.bounds.ray_entry(ray.origin, inv, limit).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri in &self.order[start as usize..(start + count) as usize] {
                        let [a, b, c] = mesh.triangle(tri as usize);
                        if let Some(tuv) = intersect_triangle(ray, a, b, c) {
                            best = better_hit(best, make_hit(ray, tri, tuv));
                        }
                    }
                }
                NodeKind::Inner { right } => {
                    let left = stack[sp] + 1;
                    let l_entry = self.nodes[left as usize]
                        .bounds
                        .ray_entry(ray.origin, inv, limit);
                    let r_entry = self.nodes[right as usize]
                        .bounds
                        .ray_entry(ray.origin, inv, limit);
                    // Push the farther child first so the nearer one pops next.
                    match (l_entry, r_entry) {
                        (Some(l), Some(r)) => {
                            let (first, second) =
                                if l <= r { (right, left) } else { (left, right) };
                            stack[sp] = first;
                            stack[sp + 1] = second;
                            sp += 2;
                        }
                        (Some(_), None) => {
                            stack[sp] = left;
                            sp += 1;
                        }
                        (None, Some(_)) => {
                            stack[sp] = right;
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// Nearest surface point to `p`.
    pub fn closest_point(&self, mesh: &TriangleMesh, p: Vec3) -> ClosestPoint {
        let mut best = ClosestPoint {
            point: Vec3::ZERO,
            distance_squared: f64::INFINITY,
            triangle: u32::MAX,
        };
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx as usize];
            if node.bounds.distance_squared(p) > best.distance_squared {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri in &self.order[start as usize..(start + count) as usize] {
                        let [a, b, c] = mesh.triangle(tri as usize);
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = (q - p).norm_squared();
                        if d < best.distance_squared
                            || (d == best.distance_squared && tri < best.triangle)
                        {
                            best = ClosestPoint {
                                point: q,
                                distance_squared: d,
                                triangle: tri,
                            };
                        }
                    }
                }
                NodeKind::Inner { right } => {
                    let left = idx + 1;
                    let dl = self.nodes[left as usize].bounds.distance_squared(p);
                    let dr = self.nodes[right as usize].bounds.distance_squared(p);
                    let (first, second) = if dl <= dr {
                        (right, left)
                    } else {
                        (left, right)
                    };
                    stack[sp] = first;
                    stack[sp + 1] = second;
                    sp += 2;
                }
            }
        }
        best
    }

    /// Every intersection along the full ray, found by re-casting from each
    /// hit. Coincident hits on shared edges count once.
    pub fn all_hits(&self, mesh: &TriangleMesh, ray: &Ray, max_hits: usize) -> Vec<Hit> {
        let mut hits = Vec::new();
        let mut origin = ray.origin;
        let mut travelled = 0.0;
        while hits.len() < max_hits {
            let r = Ray {
                origin,
                dir: ray.dir,
            };
            match self.cast_ray(mesh, &r) {
                Some(mut h) => {
                    travelled += h.t;
                    h.t = travelled;
                    origin = h.point;
                    hits.push(h);
                }
                None => break,
            }
        }
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Rng};

    #[test]
    fn single_triangle_is_single_leaf() {
        let (m, _) = TriangleMesh::from_triangles(
            alloc::vec![Vec3::ZERO, Vec3::X, Vec3::Y],
            alloc::vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let bvh = Bvh::build(&m).unwrap();
        assert_eq!(bvh.nodes().len(), 1);
        assert!(matches!(
            bvh.nodes()[0].kind,
            NodeKind::Leaf { count: 1, .. }
        ));
    }

    #[test]
    fn cube_partition() {
        let cube = TriangleMesh::cube(0.5);
        let bvh = Bvh::build(&cube).unwrap();
        let mut seen = alloc::vec![0u32; cube.len()];
        for (node, tris) in bvh.leaves() {
            assert!(tris.len() <= MAX_LEAF_SIZE);
            for &t in tris {
                seen[t as usize] += 1;
                for v in cube.triangle(t as usize) {
                    assert!(node.bounds.contains(v));
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn empty_mesh_rejected() {
        let (m, _) = TriangleMesh::from_triangles(Vec::new(), Vec::new(), None).unwrap();
        assert_eq!(Bvh::build(&m).unwrap_err(), Error::EmptyMesh);
    }

    #[test]
    fn sphere_hit_and_miss() {
        let s = TriangleMesh::icosphere(4, 1.0);
        let bvh = Bvh::build(&s).unwrap();
        let hit = bvh
            .cast_ray(&s, &Ray::new(Vec3::new(2.0, 0.0, 0.0), -Vec3::X))
            .unwrap();
        // Level-4 icosphere deviates from the sphere by < 2e-3.
        assert!((hit.t - 1.0).abs() < 2e-3, "t = {}", hit.t);
        assert!((hit.point - Vec3::X).norm() < 2e-3);
        assert!(bvh
            .cast_ray(&s, &Ray::new(Vec3::new(2.0, 0.0, 0.0), Vec3::X))
            .is_none());
    }

    #[test]
    fn tie_breaks_to_lowest_triangle() {
        // Two coincident triangles with different ids.
        let v = alloc::vec![
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0)
        ];
        let (m, _) =
            TriangleMesh::from_triangles(v, alloc::vec![[0, 1, 2], [0, 1, 2], [0, 1, 2]], None)
                .unwrap();
        let bvh = Bvh::build(&m).unwrap();
        let h = bvh
            .cast_ray(&m, &Ray::new(Vec3::new(0.0, 0.0, 1.0), -Vec3::Z))
            .unwrap();
        assert_eq!(h.triangle, 0);
    }

    #[test]
    fn closest_point_matches_dense_sampling() {
        let (a, b, c) = (
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.2, 0.8, 0.1),
        );
        let mut rng = seeded(3);
        for _ in 0..50 {
            let p = Vec3::new(
                rng.random_range(-1.0..2.0),
                rng.random_range(-1.0..2.0),
                rng.random_range(-1.0..1.0),
            );
            let q = closest_point_on_triangle(p, a, b, c);
            let dq = (q - p).norm();
            let mut best = f64::INFINITY;
            let n = 200;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let s = a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
                    best = best.min((s - p).norm());
                }
            }
            assert!(dq <= best + 1e-12);
            assert!(best - dq < 1e-2);
        }
    }
}
