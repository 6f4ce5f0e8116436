//! Pinhole cameras and the Fibonacci-sphere capture rig.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::rays::Ray;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    /// Camera-to-world rotation. Columns are the camera's right, up and
    /// backward axes; the camera looks along its local `-z`.
    pub rotation: Mat3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera at `position` looking at `target`. The up hint is `+z`, or
    /// `+x` when the view axis is within 1e-3 of `±z`.
    pub fn look_at(position: Vec3, target: Vec3, fov_y: f64, width: u32, height: u32) -> Self {
        Self {
            position,
            rotation: look_at_rotation(position, target),
            fov_y,
            width: width.max(1),
            height: height.max(1),
        }
    }

    pub fn forward(&self) -> Vec3 {
        -self.rotation.col(2)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unit direction through the pixel center in camera coordinates.
    pub fn local_direction(&self, px: f64, py: f64) -> Vec3 {
        let tan = libm::tan(self.fov_y * 0.5);
        let aspect = self.width as f64 / self.height as f64;
        let x = (2.0 * (px + 0.5) / self.width as f64 - 1.0) * tan * aspect;
        let y = (1.0 - 2.0 * (py + 0.5) / self.height as f64) * tan;
        Vec3::new(x, y, -1.0).normalized()
    }

    /// Pinhole ray through the center of pixel `(px, py)`; `py` grows downward.
    pub fn ray(&self, px: u32, py: u32) -> Result<Ray> {
        if px >= self.width || py >= self.height {
            return Err(Error::PixelOutOfRange {
                x: px,
                y: py,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.ray_unchecked(px, py))
    }

    fn ray_unchecked(&self, px: u32, py: u32) -> Ray {
        let d = self
            .rotation
            .mul_vec(self.local_direction(px as f64, py as f64));
        Ray {
            origin: self.position,
            dir: d.normalized(),
        }
    }

    /// All rays in row-major pixel order.
    pub fn rays(&self) -> Vec<Ray> {
        let mut out = Vec::with_capacity(self.pixel_count());
        for py in 0..self.height {
            for px in 0..self.width {
                out.push(self.ray_unchecked(px, py));
            }
        }
        out
    }
}

pub fn camera_ray(cam: &Camera, px: u32, py: u32) -> Result<Ray> {
    cam.ray(px, py)
}

pub fn look_at_rotation(position: Vec3, target: Vec3) -> Mat3 {
    let forward = (target - position).normalized();
    let near_z = (forward - Vec3::Z).norm() < 1e-3 || (forward + Vec3::Z).norm() < 1e-3;
    let up_hint = if near_z { Vec3::X } else { Vec3::Z };
    let right = forward.cross(up_hint).normalized();
    let up = right.cross(forward);
    Mat3::from_cols(right, up, -forward)
}

/// Golden-angle increment of the Fibonacci lattice.
pub fn golden_angle() -> f64 {
    core::f64::consts::PI * (3.0 - libm::sqrt(5.0))
}

/// `n` cameras on a sphere of `radius`, all looking at the origin.
pub fn fibonacci_camera_rig(
    n: usize,
    radius: f64,
    fov_y: f64,
    resolution: (u32, u32),
) -> Vec<Camera> {
    rotated_camera_rig(n, radius, fov_y, resolution, 0.0)
}

/// Fibonacci rig with the lattice rotated by `azimuth_offset` about `z`.
/// A non-zero offset gives viewpoints disjoint from the unrotated rig.
pub fn rotated_camera_rig(
    n: usize,
    radius: f64,
    fov_y: f64,
    resolution: (u32, u32),
    azimuth_offset: f64,
) -> Vec<Camera> {
    fibonacci_positions(n, radius, azimuth_offset)
        .into_iter()
        .map(|p| Camera::look_at(p, Vec3::ZERO, fov_y, resolution.0, resolution.1))
        .collect()
}

/// Lattice positions; `azimuth_offset` rotates the whole lattice about `z`.
pub fn fibonacci_positions(n: usize, radius: f64, azimuth_offset: f64) -> Vec<Vec3> {
    let ga = golden_angle();
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = libm::sqrt((1.0 - z * z).max(0.0));
            let phi = i as f64 * ga + azimuth_offset;
            Vec3::new(r * libm::cos(phi), r * libm::sin(phi), z) * radius
        })
        .collect()
}
