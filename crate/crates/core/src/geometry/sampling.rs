use alloc::vec::Vec;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub triangle: u32,
}

/// Area-uniform samples: triangle chosen proportionally to area, then a
/// uniform barycentric point inside it.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(mesh.len());
    let mut total = 0.0;
    for i in 0..mesh.len() {
        total += mesh.area(i);
        cdf.push(total);
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * total;
        let tri = cdf.partition_point(|&c| c <= x).min(mesh.len() - 1);
        let [a, b, c] = mesh.triangle(tri);
        let r1 = libm::sqrt(rng.random::<f64>());
        let r2 = rng.random::<f64>();
        let point = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        out.push(SurfaceSample {
            point,
            triangle: tri as u32,
        });
    }
    Ok(out)
}

pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    Ok(sample_surface(mesh, n, seed)?
        .into_iter()
        .map(|s| s.point)
        .collect())
}
