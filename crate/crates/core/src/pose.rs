//! Camera pose recovery by descending a silhouette loss through a frozen
//! network.
//!
//! A pose is a correction of a reference camera: the camera-to-world
//! rotation becomes `exp(ω) R₀` and the center `c₀ + t`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Scene};
use crate::math::{Mat3, Vec3};
use crate::model::{sigmoid, PrifModel, ENCODING_DIM};
use crate::nn::{AdamState, Matrix};
use crate::rays::{anchor_jacobians, encode_ray, EncodingMode, Ray};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseParams {
    /// Axis-angle, radians.
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl PoseParams {
    pub fn to_array(&self) -> [f64; 6] {
        let [a, b, c] = self.rotation.to_array();
        let [d, e, f] = self.translation.to_array();
        [a, b, c, d, e, f]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            rotation: Vec3::new(v[0], v[1], v[2]),
            translation: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.translation.is_finite()
    }

    /// Keeps the rotation angle below `π` without changing the rotation.
    pub fn rewrapped(mut self) -> Self {
        let theta = self.rotation.norm();
        if theta > core::f64::consts::PI {
            self.rotation = self.rotation * (1.0 - 2.0 * core::f64::consts::PI / theta);
        }
        self
    }

    pub fn apply(&self, reference: &Camera) -> Camera {
        Camera {
            position: reference.position + self.translation,
            rotation: Mat3::from_axis_angle(self.rotation).mul_mat(&reference.rotation),
            ..*reference
        }
    }

    /// Rotation angle (radians) and translation distance to `other`.
    pub fn error_to(&self, other: &PoseParams) -> (f64, f64) {
        let a = Mat3::from_axis_angle(self.rotation);
        let b = Mat3::from_axis_angle(other.rotation);
        (
            a.angle_to(&b),
            (self.translation - other.translation).norm(),
        )
    }
}

/// `∂(exp(ω) v)/∂ω`.
pub fn rotate_jacobian(w: Vec3, v: Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let r = Mat3::from_axis_angle(w);
    let rv = r.mul_vec(v).skew().scale(-1.0);
    if theta2 < 1e-16 {
        return rv;
    }
    // -R [v]x (w wᵀ + (Rᵀ - I)[w]x) / |w|²
    let inner = w
        .outer(w)
        .add(
            &r.transpose()
                .add(&Mat3::IDENTITY.scale(-1.0))
                .mul_mat(&w.skew()),
        )
        .scale(1.0 / theta2);
    r.mul_mat(&v.skew()).mul_mat(&inner).scale(-1.0)
}

/// Rays of the posed camera with the Jacobian of each ray's six-component
/// encoding with respect to `(ω, t)`; `jacobians[i][k][j] = ∂enc_k/∂θ_j`.
#[derive(Debug, Clone)]
pub struct PoseRays {
    pub camera: Camera,
    pub rays: Vec<Ray>,
    pub jacobians: Vec<[[f64; 6]; 6]>,
}

pub fn pose_to_rays(pose: &PoseParams, reference: &Camera, mode: EncodingMode) -> PoseRays {
    let camera = pose.apply(reference);
    let rays = camera.rays();
    let jacobians = (0..camera.height)
        .flat_map(|py| (0..camera.width).map(move |px| (px, py)))
        .zip(&rays)
        .map(|((px, py), ray)| {
            let v = reference
                .rotation
                .mul_vec(reference.local_direction(px as f64, py as f64));
            let dd_dw = rotate_jacobian(pose.rotation, v);
            let (da_dp, da_dd) = anchor_jacobians(mode, ray.origin, ray.dir);
            let da_dw = da_dd.mul_mat(&dd_dw);
            let mut j = [[0.0; 6]; 6];
            for k in 0..3 {
                for c in 0..3 {
                    j[k][c] = da_dw.rows[k][c];
                    j[k][3 + c] = da_dp.rows[k][c];
                    j[3 + k][c] = dd_dw.rows[k][c];
                }
            }
            j
        })
        .collect();
    PoseRays {
        camera,
        rays,
        jacobians,
    }
}

/// Single-channel row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch {
                expected: width as usize * height as usize,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Mean squared difference and its gradient with respect to each prediction.
pub fn silhouette_loss(pred: &Image, target: &Image) -> Result<(f64, Vec<f64>)> {
    if pred.width != target.width || pred.height != target.height {
        return Err(Error::ResolutionMismatch {
            expected: (target.width, target.height),
            got: (pred.width, pred.height),
        });
    }
    let n = pred.data.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&a, &y)| {
            let d = a as f64 - y as f64;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Binary silhouette of the mesh seen by `camera`.
pub fn mesh_silhouette(scene: &Scene, camera: &Camera) -> Image {
    let data = camera
        .rays()
        .iter()
        .map(|r| {
            if scene.cast_ray(r).is_some() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Image {
        width: camera.width,
        height: camera.height,
        data,
    }
}

fn pose_inputs(model: &PrifModel, rays: &[Ray]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rays.len() * ENCODING_DIM);
    for r in rays {
        data.extend_from_slice(&encode_ray(r, model.mode())?.to_f32());
    }
    let ids = vec![0u16; rays.len()];
    model.input_matrix(
        &Matrix::from_vec(rays.len(), ENCODING_DIM, data),
        Some(&ids),
    )
}

/// Predicted foreground probabilities for `camera`.
pub fn model_silhouette(model: &PrifModel, camera: &Camera) -> Result<Image> {
    let input = pose_inputs(model, &camera.rays())?;
    let (_, z) = model.predict_raw(&input)?;
    Image::new(
        camera.width,
        camera.height,
        z.into_iter().map(sigmoid).collect(),
    )
}

/// Silhouette loss at `pose` and its gradient with respect to `(ω, t)`.
pub fn pose_loss_and_gradient(
    model: &PrifModel,
    reference: &Camera,
    target: &Image,
    pose: &PoseParams,
) -> Result<(f64, [f64; 6])> {
    let pr = pose_to_rays(pose, reference, model.mode());
    let mut probs = Vec::with_capacity(pr.rays.len());
    let mut evals = Vec::new();
    for chunk in pr.rays.chunks(CHUNK) {
        let ev = model.evaluate(&pose_inputs(model, chunk)?)?;
        probs.extend(ev.probabilities());
        evals.push(ev);
    }
    let pred = Image::new(reference.width, reference.height, probs)?;
    let (loss, dl_da) = silhouette_loss(&pred, target)?;
    let mut grad = [0.0f64; 6];
    let mut row = 0;
    for ev in &evals {
        let n = ev.s.len();
        let dz: Vec<f32> = (0..n)
            .map(|i| {
                let a = pred.data[row + i] as f64;
                (dl_da[row + i] * a * (1.0 - a)) as f32
            })
            .collect();
        let gi = model.input_gradients(ev, &vec![0.0; n], &dz)?;
        for i in 0..n {
            let g = gi.row(i);
            let jac = &pr.jacobians[row + i];
            for (k, jrow) in jac.iter().enumerate() {
                let gk = g[k] as f64;
                for j in 0..6 {
                    grad[j] += gk * jrow[j];
                }
            }
        }
        row += n;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseOptimConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for PoseOptimConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 1e-2,
        }
    }
}

/// Adam on the six pose parameters; returns the final pose and the loss
/// before each step.
pub fn optimize_pose(
    model: &PrifModel,
    reference: &Camera,
    target: &Image,
    init: PoseParams,
    config: &PoseOptimConfig,
) -> Result<(PoseParams, Vec<f64>)> {
    let mut pose = init;
    let mut adam = AdamState::new(6);
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grad) = pose_loss_and_gradient(model, reference, target, &pose)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0, step });
        }
        trace.push(loss);
        let mut p = pose.to_array().map(|v| v as f32);
        let g = grad.map(|v| v as f32);
        let before = p;
        adam.step(&mut p, &g, config.lr)?;
        let mut next = pose.to_array();
        for j in 0..6 {
            next[j] += (p[j] - before[j]) as f64;
        }
        pose = PoseParams::from_array(next).rewrapped();
    }
    Ok((pose, trace))
}
