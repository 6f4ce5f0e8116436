//! Glue shared by the CLI and the end-to-end tests.

use std::path::Path;

use prif_core::dataset::{generate_ray_dataset, RayDataset, RayRecord};
use prif_core::eval::DepthImage;
use prif_core::geometry::{fibonacci_camera_rig, Camera, Normalization, Scene, TriangleMesh};
use prif_core::model::{color_forward, predict_records, PrifModel};
use prif_core::pose::Image;
use prif_core::rays::{EncodingMode, Ray};
use prif_core::{Result, Vec3};

use crate::config::RunConfig;
use crate::error::IoResult;
use crate::mesh_io::load_mesh;

#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub normalization: Normalization,
    pub dropped: usize,
}

/// Normalizes `mesh` to `target_radius` and builds its hierarchy.
pub fn prepare_scene(mesh: &TriangleMesh, target_radius: f64) -> Result<(Scene, Normalization)> {
    let (mesh, norm) = mesh.normalized(target_radius)?;
    Ok((Scene::new(mesh)?, norm))
}

pub fn load_scene(path: &Path, target_radius: f64) -> IoResult<LoadedScene> {
    let loaded = load_mesh(path)?;
    let (scene, normalization) = prepare_scene(&loaded.mesh, target_radius)?;
    Ok(LoadedScene {
        scene,
        normalization,
        dropped: loaded.dropped,
    })
}

/// Fibonacci rig described by `cfg.rig`.
pub fn training_rig(cfg: &RunConfig) -> Vec<Camera> {
    let r = cfg.rig.resolution;
    fibonacci_camera_rig(cfg.rig.cameras, cfg.rig.radius, cfg.fov_y(), (r, r))
}

pub fn dataset_for(scene: &Scene, cfg: &RunConfig, mode: EncodingMode) -> Result<RayDataset> {
    let mut ds = generate_ray_dataset(scene, &training_rig(cfg), mode, 0)?;
    ds.meta.seed = cfg.seed;
    Ok(ds)
}

/// Records for every pixel of `camera`, labelled `shape_id`, without ground truth.
pub fn camera_records(
    camera: &Camera,
    mode: EncodingMode,
    shape_id: u16,
) -> Result<Vec<RayRecord>> {
    camera
        .rays()
        .iter()
        .map(|r| RayRecord::from_ray(r, mode, None, shape_id))
        .collect()
}

pub fn rig_records(rig: &[Camera], mode: EncodingMode, shape_id: u16) -> Result<Vec<RayRecord>> {
    let mut out = Vec::new();
    for cam in rig {
        out.extend(camera_records(cam, mode, shape_id)?);
    }
    Ok(out)
}

/// Depth along the viewing ray of the point `base + s·d`.
fn ray_depth(ray: &Ray, base: Vec3, s: f64) -> f64 {
    (base + ray.dir * s - ray.origin).dot(ray.dir)
}

#[derive(Debug, Clone)]
pub struct Render {
    pub depth: DepthImage,
    pub mask: Image,
    pub colors: Option<Vec<[f32; 3]>>,
}

/// Depth, foreground probability and (with a color head) color per pixel.
pub fn render_prif(model: &PrifModel, camera: &Camera, shape_id: u16) -> Result<Render> {
    let records = camera_records(camera, model.mode(), shape_id)?;
    let rays = camera.rays();
    let pred = predict_records(model, &records)?;
    let depth = records
        .iter()
        .zip(&rays)
        .zip(pred.s.iter().zip(&pred.a))
        .map(|((r, ray), (&s, &a))| {
            if a >= 0.5 {
                ray_depth(ray, r.base(), s as f64) as f32
            } else {
                0.0
            }
        })
        .collect();
    let colors = match model.color_net() {
        Some(_) => {
            let ids = vec![shape_id; records.len()];
            let c = color_forward(
                model,
                model.mode(),
                &RayDataset::encodings(&records),
                Some(&ids),
            )?;
            Some(
                c.into_iter()
                    .zip(&pred.a)
                    .map(|(c, &a)| if a >= 0.5 { c } else { [0.0; 3] })
                    .collect(),
            )
        }
        None => None,
    };
    Ok(Render {
        depth: DepthImage {
            width: camera.width,
            height: camera.height,
            depth,
        },
        mask: Image::new(camera.width, camera.height, pred.a)?,
        colors,
    })
}

/// Ground-truth render of the mesh; color comes from vertex colors if any.
pub fn render_mesh(scene: &Scene, camera: &Camera) -> Render {
    let rays = camera.rays();
    let hits: Vec<_> = rays.iter().map(|r| scene.cast_ray(r)).collect();
    let depth = hits.iter().map(|h| h.map_or(0.0, |h| h.t as f32)).collect();
    let mask = hits
        .iter()
        .map(|h| if h.is_some() { 1.0 } else { 0.0 })
        .collect();
    let colors = scene.mesh.colors().map(|_| {
        hits.iter()
            .map(|h| {
                h.and_then(|h| scene.mesh.color_at(h.triangle as usize, h.u, h.v))
                    .unwrap_or([0.0; 3])
            })
            .collect()
    });
    Render {
        depth: DepthImage {
            width: camera.width,
            height: camera.height,
            depth,
        },
        mask: Image {
            width: camera.width,
            height: camera.height,
            data: mask,
        },
        colors,
    }
}

/// Copy of `model` whose latent table gains `latent` as a new last row.
pub fn with_extra_latent(model: &PrifModel, latent: &[f32]) -> Result<(PrifModel, u16)> {
    let mut config = *model.config();
    let id = config.num_shapes as u16;
    config.num_shapes += 1;
    let mut latents = model.latents().to_vec();
    latents.extend_from_slice(latent);
    let m = PrifModel::from_parts(
        config,
        model.trunk().clone(),
        model.mask_net().cloned(),
        model.color_net().cloned(),
        latents,
    )?;
    Ok((m, id))
}

/// Parses `x,y,z`.
pub fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number '{p}'"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected three comma-separated numbers, got '{s}'")),
    }
}
