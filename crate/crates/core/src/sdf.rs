//! Signed-distance baseline: ground truth from the mesh, a training-set
//! sampler, an L1-regressed SDF network and a query-counting sphere tracer.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{sample_surface_points, Scene};
use crate::math::Vec3;
use crate::model::{LossTrace, LossValue, TrainConfig};
use crate::nn::{cosine_lr, AdamState, Matrix, Mlp};
use crate::rays::Ray;
use crate::rng::{normal, seeded, shuffle, Rng};

/// Radius of the sampling ball around the normalized object.
pub const BOUNDING_RADIUS: f64 = 1.1;
pub const DEFAULT_MAX_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub point: Vec3,
    pub sdf: f64,
}

/// Fixed probe directions for the parity test; later entries are retries.
const PROBES: [[f64; 3]; 6] = [
    [0.267_261_2, 0.534_522_5, 0.801_783_7],
    [-0.639_602_1, 0.426_401_4, 0.639_602_1],
    [0.371_390_7, -0.742_781_4, 0.557_086_0],
    [0.816_496_6, 0.408_248_3, -0.408_248_3],
    [-0.301_511_3, -0.904_534_0, -0.301_511_3],
    [0.577_350_3, -0.577_350_3, -0.577_350_3],
];
const GRAZING_BARY: f64 = 1e-7;
const GRAZING_COS: f64 = 1e-6;

/// Crossing count along `dir`, or `None` when a hit lands on an edge,
/// vertex or nearly tangent triangle.
fn parity(scene: &Scene, p: Vec3, dir: Vec3) -> Option<bool> {
    let ray = Ray::new(p, dir);
    let hits = scene
        .bvh
        .all_hits(&scene.mesh, &ray, 4 * scene.mesh.len() + 8);
    for h in &hits {
        let w = 1.0 - h.u - h.v;
        if h.u < GRAZING_BARY || h.v < GRAZING_BARY || w < GRAZING_BARY {
            return None;
        }
        let [a, b, c] = scene.mesh.triangle(h.triangle as usize);
        let n = (b - a).cross(c - a).normalized();
        if n.dot(ray.dir).abs() < GRAZING_COS {
            return None;
        }
    }
    Some(hits.len() % 2 == 1)
}

/// Whether `p` is inside the closed surface, by ray parity with retries.
fn inside(scene: &Scene, p: Vec3) -> bool {
    let mut votes = 0i32;
    for d in PROBES {
        match parity(scene, p, Vec3::from_array(d)) {
            Some(v) => return v,
            None => {
                let r = Ray::new(p, Vec3::from_array(d));
                let n = scene
                    .bvh
                    .all_hits(&scene.mesh, &r, 4 * scene.mesh.len() + 8)
                    .len();
                votes += if n % 2 == 1 { 1 } else { -1 };
            }
        }
    }
    votes > 0
}

/// Signed distance: negative inside. Open meshes yield
/// [`Error::OpenMesh`] carrying the unsigned distance.
pub fn sdf_ground_truth(scene: &Scene, p: Vec3) -> Result<f64> {
    let d = libm::sqrt(scene.bvh.closest_point(&scene.mesh, p).distance_squared);
    if !scene.closed {
        return Err(Error::OpenMesh { unsigned: d });
    }
    Ok(if inside(scene, p) { -d } else { d })
}

/// 40% surface points offset by `N(0, 0.01²)`, 40% by `N(0, 0.003²)`, and
/// 20% uniform in the bounding ball.
pub fn sample_sdf_training_set(scene: &Scene, n: usize, seed: u64) -> Result<Vec<SdfSample>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let n_wide = (n * 2) / 5;
    let n_narrow = (n * 2) / 5;
    let n_ball = n - n_wide - n_narrow;
    let surface = sample_surface_points(&scene.mesh, n_wide + n_narrow, seed)?;
    let mut rng = seeded(seed.wrapping_add(0x5eed));
    let mut points = Vec::with_capacity(n);
    for (i, p) in surface.into_iter().enumerate() {
        let sigma = if i < n_wide { 0.01 } else { 0.003 };
        points.push(p + Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * sigma);
    }
    while points.len() < n {
        let q = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm_squared() <= 1.0 {
            points.push(q * BOUNDING_RADIUS);
        }
    }
    debug_assert_eq!(points.len() - n_wide - n_narrow, n_ball);
    let parts = crate::par::map_chunks(&points, 1024, |_, c| {
        c.iter()
            .map(|&p| sdf_ground_truth(scene, p).map(|sdf| SdfSample { point: p, sdf }))
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SphereTraceConfig {
    pub max_steps: usize,
    pub eps: f64,
    pub t_max: f64,
    /// When set, rays first jump analytically (without queries) to this
    /// origin-centered sphere and stop on leaving it.
    pub bound_radius: Option<f64>,
}

impl Default for SphereTraceConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            eps: 1e-4,
            t_max: 10.0,
            bound_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereTraceResult {
    pub hit: Option<Vec3>,
    pub steps: usize,
    pub converged: bool,
}

/// `(t_enter, t_exit)` of the ray against a sphere, clamped to `t >= 0`.
fn sphere_span(ray: &Ray, radius: f64) -> Option<(f64, f64)> {
    let b = ray.origin.dot(ray.dir);
    let c = ray.origin.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = libm::sqrt(disc);
    let (t0, t1) = (-b - s, -b + s);
    (t1 >= 0.0).then_some((t0.max(0.0), t1))
}

fn trace_limits(ray: &Ray, cfg: &SphereTraceConfig) -> Option<(f64, f64)> {
    match cfg.bound_radius {
        Some(r) => sphere_span(ray, r).map(|(a, b)| (a, b.min(cfg.t_max))),
        None => Some((0.0, cfg.t_max)),
    }
}

/// Marches `t ← t + sdf(p + t·d)`; every `sdf_fn` call is one query.
pub fn sphere_trace<F: FnMut(Vec3) -> f64>(
    mut sdf_fn: F,
    ray: &Ray,
    cfg: &SphereTraceConfig,
) -> SphereTraceResult {
    let miss = |steps| SphereTraceResult {
        hit: None,
        steps,
        converged: false,
    };
    let Some((mut t, t_end)) = trace_limits(ray, cfg) else {
        return miss(0);
    };
    let mut steps = 0;
    while steps < cfg.max_steps {
        let p = ray.at(t);
        let d = sdf_fn(p);
        steps += 1;
        if d < cfg.eps {
            return SphereTraceResult {
                hit: Some(p),
                steps,
                converged: true,
            };
        }
        t += d;
        if t > t_end {
            return miss(steps);
        }
    }
    miss(steps)
}

/// Batched [`sphere_trace`] of an SDF network (input 3, output 1). Returns
/// per-ray results and the total number of network queries.
pub fn sphere_trace_batch(
    net: &Mlp,
    rays: &[Ray],
    cfg: &SphereTraceConfig,
) -> Result<(Vec<SphereTraceResult>, u64)> {
    let mut results: Vec<SphereTraceResult> = rays
        .iter()
        .map(|_| SphereTraceResult {
            hit: None,
            steps: 0,
            converged: false,
        })
        .collect();
    let mut state: Vec<(usize, f64, f64)> = rays
        .iter()
        .enumerate()
        .filter_map(|(i, r)| trace_limits(r, cfg).map(|(t0, t1)| (i, t0, t1)))
        .collect();
    let mut queries = 0u64;
    for _ in 0..cfg.max_steps {
        if state.is_empty() {
            break;
        }
        let mut data = Vec::with_capacity(state.len() * 3);
        for &(i, t, _) in &state {
            data.extend_from_slice(&rays[i].at(t).to_f32());
        }
        let out = predict_chunked(net, &Matrix::from_vec(state.len(), 3, data))?;
        queries += state.len() as u64;
        let mut next = Vec::with_capacity(state.len());
        for (k, (i, t, t_end)) in state.into_iter().enumerate() {
            let d = out[k] as f64;
            let res = &mut results[i];
            res.steps += 1;
            if d < cfg.eps {
                res.hit = Some(rays[i].at(t));
                res.converged = true;
            } else if t + d <= t_end {
                next.push((i, t + d, t_end));
            }
        }
        state = next;
    }
    Ok((results, queries))
}

fn predict_chunked(net: &Mlp, input: &Matrix) -> Result<Vec<f32>> {
    let rows: Vec<usize> = (0..input.rows()).collect();
    let parts = crate::par::map_chunks(&rows, 4096, |start, c| {
        net.predict(&input.slice_rows(start, start + c.len()))
            .map(|m| m.into_vec())
    });
    let mut out = Vec::with_capacity(input.rows());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Network predictions at `points`.
pub fn sdf_predict(net: &Mlp, points: &[Vec3]) -> Result<Vec<f32>> {
    let mut data = Vec::with_capacity(points.len() * 3);
    for p in points {
        data.extend_from_slice(&p.to_f32());
    }
    predict_chunked(net, &Matrix::from_vec(points.len(), 3, data))
}

/// L1 regression of `samples` with Adam and the cosine schedule.
pub fn train_sdf(net: &mut Mlp, samples: &[SdfSample], config: &TrainConfig) -> Result<LossTrace> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySet);
    }
    let spec = *net.spec();
    if spec.input_dim != 3 || spec.output_dim != 1 {
        return Err(Error::InvalidSpec(alloc::format!(
            "SDF network must map 3 -> 1, got {} -> {}",
            spec.input_dim,
            spec.output_dim
        )));
    }
    let mut trace = LossTrace::default();
    let steps_per_epoch = samples.len().div_ceil(config.batch_size);
    let total = config.epochs * steps_per_epoch;
    let mut adam = AdamState::new(net.params().len());
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * 3);
            for &i in chunk {
                data.extend_from_slice(&samples[i].point.to_f32());
            }
            let (out, tape) = net.forward(&Matrix::from_vec(chunk.len(), 3, data))?;
            let inv = 1.0 / chunk.len() as f32;
            let mut loss = 0.0f64;
            let mut grad = Vec::with_capacity(chunk.len());
            for (k, &i) in chunk.iter().enumerate() {
                let diff = out.get(k, 0) - samples[i].sdf as f32;
                loss += diff.abs() as f64;
                grad.push(if diff > 0.0 {
                    inv
                } else if diff < 0.0 {
                    -inv
                } else {
                    0.0
                });
            }
            let loss = loss / chunk.len() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let g = net.backward(&tape, &Matrix::from_vec(chunk.len(), 1, grad))?;
            let lr = cosine_lr(step, total, config.lr_start, config.lr_end)?;
            adam.step(net.params_mut(), &g.params, lr)?;
            sum += loss * chunk.len() as f64 / samples.len() as f64;
            step += 1;
        }
        trace.epochs.push(LossValue {
            total: sum,
            s: sum,
            a: 0.0,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;

    fn unit_sphere(p: Vec3) -> f64 {
        p.norm() - 1.0
    }

    #[test]
    fn analytic_trace_hits_sphere() {
        let ray = Ray::new(Vec3::new(2.0, 0.0, 0.0), -Vec3::X);
        let r = sphere_trace(unit_sphere, &ray, &SphereTraceConfig::default());
        assert!(r.converged);
        assert!((r.hit.unwrap() - Vec3::X).norm() < 1e-3);
        assert!(r.steps >= 2);
    }

    #[test]
    fn analytic_trace_miss() {
        let ray = Ray::new(Vec3::new(2.0, 2.0, 0.0), -Vec3::X);
        let mut calls = 0;
        let r = sphere_trace(
            |p| {
                calls += 1;
                unit_sphere(p)
            },
            &ray,
            &SphereTraceConfig::default(),
        );
        assert!(!r.converged && r.hit.is_none());
        assert_eq!(calls, r.steps);
        assert!(r.steps <= DEFAULT_MAX_STEPS);
    }

    #[test]
    fn bound_sphere_skips_empty_space() {
        let cfg = SphereTraceConfig {
            bound_radius: Some(1.1),
            ..Default::default()
        };
        let miss = sphere_trace(
            unit_sphere,
            &Ray::new(Vec3::new(2.0, 2.0, 0.0), -Vec3::X),
            &cfg,
        );
        assert_eq!(miss.steps, 0);
        let hit = sphere_trace(
            unit_sphere,
            &Ray::new(Vec3::new(2.0, 0.0, 0.0), -Vec3::X),
            &cfg,
        );
        assert!(hit.converged);
    }

    #[test]
    fn ground_truth_signs() {
        let scene = Scene::new(TriangleMesh::icosphere(3, 1.0)).unwrap();
        assert!((sdf_ground_truth(&scene, Vec3::ZERO).unwrap() + 1.0).abs() < 1e-2);
        assert!((sdf_ground_truth(&scene, Vec3::new(2.0, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn open_mesh_reports_unsigned() {
        let scene = Scene::new(TriangleMesh::step_planes(1.0, 0.5)).unwrap();
        match sdf_ground_truth(&scene, Vec3::new(-0.5, 0.0, 0.2)) {
            Err(Error::OpenMesh { unsigned }) => assert!((unsigned - 0.2).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn training_set_mixture() {
        let scene = Scene::new(TriangleMesh::icosphere(3, 0.9)).unwrap();
        let s = sample_sdf_training_set(&scene, 2000, 3).unwrap();
        assert_eq!(s.len(), 2000);
        let near = s.iter().filter(|x| x.sdf.abs() < 0.05).count();
        assert!(near as f64 >= 0.75 * 2000.0);
        for x in s.iter().step_by(97) {
            assert_eq!(sdf_ground_truth(&scene, x.point).unwrap(), x.sdf);
        }
    }
}
