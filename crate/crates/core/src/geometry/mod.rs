//! Ground-truth geometry: meshes, exact ray casting, surface sampling and
//! virtual cameras.

mod bvh;
mod camera;
mod mesh;
mod sampling;

pub use bvh::{
    better_hit, cast_ray_brute_force, closest_point_on_triangle, intersect_triangle, Aabb, Bvh,
    BvhNode, ClosestPoint, Hit, NodeKind, MAX_LEAF_SIZE, T_MIN,
};
pub use camera::{
    camera_ray, fibonacci_camera_rig, fibonacci_positions, golden_angle, look_at_rotation,
    rotated_camera_rig, Camera,
};
pub use mesh::{Normalization, TriangleMesh};
pub use sampling::{sample_surface, sample_surface_points, SurfaceSample};

/// Radius of the normalized object.
pub const DEFAULT_TARGET_RADIUS: f64 = 0.9;
/// Distance of rig cameras from the origin.
pub const DEFAULT_RIG_RADIUS: f64 = 2.5;
/// Vertical field of view in degrees; a radius-0.9 object seen from 2.5
/// subtends about 42.2°, so this leaves a background margin.
pub const DEFAULT_FOV_DEG: f64 = 50.0;

/// A mesh together with its hierarchy.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
    /// Every edge is shared by exactly two triangles.
    pub closed: bool,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> crate::Result<Self> {
        let bvh = Bvh::build(&mesh)?;
        let closed = mesh.is_closed();
        Ok(Self { mesh, bvh, closed })
    }

    pub fn cast_ray(&self, ray: &crate::rays::Ray) -> Option<Hit> {
        self.bvh.cast_ray(&self.mesh, ray)
    }
}
