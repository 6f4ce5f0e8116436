//! Chamfer metrics over a kd-tree and query-counted render benchmarks.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{sample_surface_points, Camera, TriangleMesh};
use crate::math::Vec3;
use crate::model::{sigmoid, PrifModel};
use crate::nn::{Matrix, Mlp};
use crate::rays::encode_ray;
use crate::rng::{seeded, shuffle};
use crate::sdf::{sphere_trace_batch, SphereTraceConfig};

/// Static 3-d tree stored as a permuted point array; each subrange is split
/// at its middle element along the widest axis.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    index: Vec<u32>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut index: Vec<u32> = (0..points.len() as u32).collect();
        let mut axes = alloc::vec![0u8; points.len()];
        build_range(points, &mut index, &mut axes);
        Self {
            points: index.iter().map(|&i| points[i as usize]).collect(),
            index,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the original slice) and squared distance of the nearest point.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (0usize, f64::INFINITY);
        self.search(0, self.points.len(), q, &mut best);
        Some((self.index[best.0] as usize, best.1))
    }

    fn search(&self, lo: usize, hi: usize, q: Vec3, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.points[mid];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && self.index[mid] < self.index[best.0]) {
            *best = (mid, d2);
        }
        let axis = self.axes[mid] as usize;
        let diff = q.axis(axis) - p.axis(axis);
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build_range(points: &[Vec3], index: &mut [u32], axes: &mut [u8]) {
    if index.len() <= 1 {
        return;
    }
    let (mut lo, mut hi) = (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY));
    for &i in index.iter() {
        lo = lo.min(points[i as usize]);
        hi = hi.max(points[i as usize]);
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = index.len() / 2;
    index.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize]
            .axis(axis)
            .total_cmp(&points[b as usize].axis(axis))
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, right) = index.split_at_mut(mid);
    let (al, ar) = axes.split_at_mut(mid);
    build_range(points, left, al);
    build_range(points, &mut right[1..], &mut ar[1..]);
}

/// Squared distance from each query to its nearest point in `tree`.
pub fn nearest_distances(tree: &KdTree, queries: &[Vec3]) -> Vec<f64> {
    crate::par::map_chunks(queries, 2048, |_, c| {
        c.iter()
            .map(|&q| tree.nearest(q).map_or(f64::INFINITY, |(_, d)| d))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChamferReport {
    /// Sum of the two directed mean squared nearest-neighbor distances.
    pub mean: f64,
    /// Median of the pooled per-point squared distances.
    pub median: f64,
    pub count_a: usize,
    pub count_b: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<ChamferReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let da = nearest_distances(&KdTree::build(b), a);
    let db = nearest_distances(&KdTree::build(a), b);
    let ma = da.iter().sum::<f64>() / a.len() as f64;
    let mb = db.iter().sum::<f64>() / b.len() as f64;
    let mut pooled = da;
    pooled.extend(db);
    Ok(ChamferReport {
        mean: ma + mb,
        median: median(&mut pooled),
        count_a: a.len(),
        count_b: b.len(),
    })
}

/// Chamfer between up to `n_eval` extracted points (random subset) and
/// `n_eval` area-uniform samples of `mesh`.
pub fn evaluation_protocol(
    points: &[Vec3],
    mesh: &TriangleMesh,
    n_eval: usize,
    seed: u64,
) -> Result<ChamferReport> {
    if points.is_empty() || n_eval == 0 {
        return Err(Error::EmptySet);
    }
    let sub: Vec<Vec3> = if points.len() > n_eval {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        shuffle(&mut idx, &mut seeded(seed));
        idx[..n_eval].iter().map(|&i| points[i]).collect()
    } else {
        points.to_vec()
    };
    let gt = sample_surface_points(mesh, n_eval, seed.wrapping_add(1))?;
    chamfer(&sub, &gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BenchMethod {
    Prif,
    SphereTrace,
}

impl BenchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::Prif => "prif",
            BenchMethod::SphereTrace => "sphere_trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchReport {
    pub method: BenchMethod,
    pub rays: u64,
    pub queries: u64,
    /// Wall time in seconds; left at 0 by the core renderers.
    pub seconds: f64,
}

/// Row-major depth image; background pixels are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
}

pub enum RenderTarget<'a> {
    Prif(&'a PrifModel),
    SphereTrace(&'a Mlp, SphereTraceConfig),
}

/// Renders one depth image, counting every network evaluation.
pub fn benchmark_render(
    target: &RenderTarget<'_>,
    camera: &Camera,
) -> Result<(BenchReport, DepthImage)> {
    let rays = camera.rays();
    let n = rays.len();
    let (method, queries, depth) = match target {
        RenderTarget::Prif(model) => {
            let mut data = Vec::with_capacity(n * 6);
            for r in &rays {
                data.extend_from_slice(&encode_ray(r, model.mode())?.to_f32());
            }
            let ids = alloc::vec![0u16; n];
            let input = model.input_matrix(&Matrix::from_vec(n, 6, data), Some(&ids))?;
            let before = model.query_count();
            let (s, z) = model.predict_raw(&input)?;
            let queries = model.query_count() - before;
            let depth = rays
                .iter()
                .zip(s.iter().zip(&z))
                .map(|(r, (&s, &z))| {
                    if sigmoid(z) < 0.5 {
                        return 0.0;
                    }
                    // The foot is at depth -p·d along the ray; raw mode measures from p.
                    let base = match model.mode() {
                        crate::rays::EncodingMode::Raw => 0.0,
                        _ => -r.origin.dot(r.dir),
                    };
                    (base + s as f64) as f32
                })
                .collect();
            (BenchMethod::Prif, queries, depth)
        }
        RenderTarget::SphereTrace(net, cfg) => {
            let (results, queries) = sphere_trace_batch(net, &rays, cfg)?;
            let depth = results
                .iter()
                .zip(&rays)
                .map(|(res, r)| match res.hit {
                    Some(h) => (h - r.origin).dot(r.dir) as f32,
                    None => 0.0,
                })
                .collect();
            (BenchMethod::SphereTrace, queries, depth)
        }
    };
    Ok((
        BenchReport {
            method,
            rays: n as u64,
            queries,
            seconds: 0.0,
        },
        DepthImage {
            width: camera.width,
            height: camera.height,
            depth,
        },
    ))
}
