//! Primary-ray implicit shape representation.
//!
//! A network in this crate maps an oriented ray, re-parametrized by the
//! perpendicular foot of the world origin onto its supporting line, to the
//! signed displacement of the ray's surface hit along its direction, plus a
//! foreground probability. One network evaluation per ray yields a surface
//! point, so rendering and point extraction need no sphere tracing.
//!
//! The crate is `no_std` + `alloc`. The `std` feature (default) enables
//! per-row parallelism through rayon; numerical results do not depend on it.
//!
//! Layout:
//! - [`math`]: small f64 vector/matrix kernel used by the geometry side.
//! - [`geometry`]: triangle meshes, BVH ray casting, surface sampling, cameras.
//! - [`rays`]: perpendicular-foot, Plücker and raw ray encodings.
//! - [`nn`]: residual MLP with layer norm, reverse-mode gradients, Adam.
//! - [`dataset`]: ray supervision generated from a mesh and camera rig.
//! - [`model`]: the ray network, its losses, training and inference.
//! - [`sdf`]: signed-distance baseline and sphere tracing.
//! - [`eval`]: Chamfer distance and render benchmarks.
//! - [`pose`]: differentiable camera pose recovery from silhouettes.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod math;
pub mod model;
pub mod nn;
mod par;
pub mod pose;
pub mod rays;
pub mod rng;
pub mod sdf;

pub use error::{Error, Result};
pub use math::{Mat3, Vec3};
