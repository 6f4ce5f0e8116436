//! File formats, pipelines and the `prif` command line on top of `prif-core`.
//!
//! - [`mesh_io`]: ASCII OBJ/PLY meshes, PLY point clouds.
//! - [`image_io`]: 16-bit depth PGM, mask PGM, color PPM.
//! - [`checkpoint`]: `PRIFCKPT` model files.
//! - [`data_io`]: `PRIFDATA` ray datasets and `PRIFSDFS` SDF samples.
//! - [`config`]: [`RunConfig`](config::RunConfig) and presets.
//! - [`pipeline`]: scene loading, rigs and renders shared by CLI and tests.
//! - [`cli`]: argument parsing and subcommands.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod container;
pub mod data_io;
pub mod error;
pub mod image_io;
pub mod mesh_io;
pub mod pipeline;

pub use error::{IoError, IoResult, LineError};
