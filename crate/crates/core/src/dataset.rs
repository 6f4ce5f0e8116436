//! Supervised ray datasets rendered from a mesh, plus corruption operators.
//!
//! Every record stores the network input (anchor and direction), the
//! foreground flag and the signed displacement of the first hit. The
//! displacement is measured from the perpendicular foot, except in raw mode
//! where it is measured from the ray origin (the aliased parametrization).

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Scene};
use crate::math::Vec3;
use crate::nn::Matrix;
use crate::rays::{encode_ray, perpendicular_foot, EncodingMode, Ray};
use crate::rng::{normal, seeded, shuffle};

/// On-disk size of one record.
pub const RECORD_BYTES: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRecord {
    pub mode: EncodingMode,
    pub anchor: [f32; 3],
    pub direction: [f32; 3],
    /// Signed displacement of the hit from [`RayRecord::base`]; 0 for background rays.
    pub s_gt: f32,
    pub a_gt: bool,
    pub shape_id: u16,
    /// Exact hit point, for diagnostics only.
    pub hit: Option<Vec3>,
    /// Surface color at the hit when the mesh carries colors.
    pub color: Option<[f32; 3]>,
}

impl RayRecord {
    /// Record for `ray`, hitting the surface at `hit` if given.
    pub fn from_ray(
        ray: &Ray,
        mode: EncodingMode,
        hit: Option<Vec3>,
        shape_id: u16,
    ) -> Result<Self> {
        let enc = encode_ray(ray, mode)?;
        let s_gt = match hit {
            Some(h) => {
                let base = match mode {
                    EncodingMode::Raw => ray.origin,
                    _ => perpendicular_foot(ray.origin, enc.direction)?,
                };
                (h - base).dot(enc.direction) as f32
            }
            None => 0.0,
        };
        let e = enc.to_f32();
        Ok(Self {
            mode,
            anchor: [e[0], e[1], e[2]],
            direction: [e[3], e[4], e[5]],
            s_gt,
            a_gt: hit.is_some(),
            shape_id,
            hit,
            color: None,
        })
    }

    pub fn encoding(&self) -> [f32; 6] {
        let [a, b, c] = self.anchor;
        let [d, e, f] = self.direction;
        [a, b, c, d, e, f]
    }

    pub fn dir(&self) -> Vec3 {
        Vec3::from_f32(self.direction)
    }

    /// A point on the ray's line, recovered from the anchor.
    pub fn origin(&self) -> Vec3 {
        let a = Vec3::from_f32(self.anchor);
        match self.mode {
            EncodingMode::PerpFoot | EncodingMode::Raw => a,
            EncodingMode::Plucker => {
                let d = self.dir();
                d.cross(a) / d.norm_squared()
            }
        }
    }

    /// Perpendicular foot of the stored ray.
    pub fn foot(&self) -> Vec3 {
        let a = Vec3::from_f32(self.anchor);
        let d = self.dir();
        match self.mode {
            EncodingMode::PerpFoot => a,
            EncodingMode::Plucker => d.cross(a) / d.norm_squared(),
            EncodingMode::Raw => a - d * (a.dot(d) / d.norm_squared()),
        }
    }

    /// Point from which `s_gt` is measured: the origin in raw mode, the foot otherwise.
    pub fn base(&self) -> Vec3 {
        match self.mode {
            EncodingMode::Raw => Vec3::from_f32(self.anchor),
            _ => self.foot(),
        }
    }

    pub fn ray(&self) -> Ray {
        Ray::new(self.origin(), self.dir())
    }

    /// `base + s·d` for foreground records.
    pub fn target_point(&self) -> Option<Vec3> {
        self.a_gt
            .then(|| self.base() + self.dir() * self.s_gt as f64)
    }
}

/// Provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetMeta {
    pub cameras: usize,
    pub width: u32,
    pub height: u32,
    pub rig_radius: f64,
    pub fov_y: f64,
    pub mesh_hashes: Vec<u64>,
    pub seed: u64,
    /// Corruption applied after generation, e.g. `noise:0.01`.
    pub corruption: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayDataset {
    pub mode: EncodingMode,
    pub records: Vec<RayRecord>,
    /// Record range of each shape id.
    pub shape_ranges: Vec<Range<usize>>,
    pub meta: DatasetMeta,
}

impl RayDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_shapes(&self) -> usize {
        self.shape_ranges.len()
    }

    pub fn foreground_count(&self) -> usize {
        self.records.iter().filter(|r| r.a_gt).count()
    }

    /// Builds a dataset from records, deriving shape ranges. Records must be
    /// grouped by shape id and ids must be dense from 0.
    pub fn from_records(
        mode: EncodingMode,
        records: Vec<RayRecord>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let mut ranges: Vec<Range<usize>> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if r.mode != mode {
                return Err(Error::ModeMismatch {
                    expected: mode.as_str(),
                    got: r.mode.as_str(),
                });
            }
            let id = r.shape_id as usize;
            if id + 1 == ranges.len() {
                ranges[id].end = i + 1;
            } else if id == ranges.len() {
                ranges.push(i..i + 1);
            } else {
                return Err(Error::UnknownShapeId(id));
            }
        }
        Ok(Self {
            mode,
            records,
            shape_ranges: ranges,
            meta,
        })
    }

    /// Concatenates single-shape datasets, relabelling them `0..n`.
    pub fn concat(parts: Vec<RayDataset>) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptySet)?;
        let mode = first.mode;
        let mut meta = first.meta.clone();
        meta.mesh_hashes.clear();
        let mut records = Vec::new();
        for (id, p) in parts.into_iter().enumerate() {
            if p.mode != mode {
                return Err(Error::ModeMismatch {
                    expected: mode.as_str(),
                    got: p.mode.as_str(),
                });
            }
            meta.mesh_hashes.extend(p.meta.mesh_hashes);
            records.extend(p.records.into_iter().map(|mut r| {
                r.shape_id = id as u16;
                r
            }));
        }
        Self::from_records(mode, records, meta)
    }

    /// Input matrix (`n x 6`) of the given records.
    pub fn encodings(records: &[RayRecord]) -> Matrix {
        let mut data = Vec::with_capacity(records.len() * 6);
        for r in records {
            data.extend_from_slice(&r.encoding());
        }
        Matrix::from_vec(records.len(), 6, data)
    }
}

/// One record per pixel per camera, in camera then row-major pixel order.
pub fn generate_ray_dataset(
    scene: &Scene,
    rig: &[Camera],
    mode: EncodingMode,
    shape_id: u16,
) -> Result<RayDataset> {
    let first = rig.first().ok_or(Error::EmptyViewpoints)?;
    let per_camera = crate::par::map_chunks(rig, 1, |_, cams| -> Result<Vec<RayRecord>> {
        let cam = &cams[0];
        let mut out = Vec::with_capacity(cam.pixel_count());
        for ray in cam.rays() {
            let hit = scene.cast_ray(&ray);
            let mut rec = RayRecord::from_ray(&ray, mode, hit.map(|h| h.point), shape_id)?;
            if let Some(h) = hit {
                rec.color = scene.mesh.color_at(h.triangle as usize, h.u, h.v);
            }
            out.push(rec);
        }
        Ok(out)
    });
    let mut records = Vec::with_capacity(rig.iter().map(Camera::pixel_count).sum());
    for part in per_camera {
        records.extend(part?);
    }
    let n = records.len();
    Ok(RayDataset {
        mode,
        records,
        shape_ranges: alloc::vec![0..n],
        meta: DatasetMeta {
            cameras: rig.len(),
            width: first.width,
            height: first.height,
            rig_radius: first.position.norm(),
            fov_y: first.fov_y,
            mesh_hashes: alloc::vec![scene.mesh.content_hash()],
            seed: 0,
            corruption: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Isotropic Gaussian offsets of hit points, `level` = standard deviation.
    Noise,
    /// Keep a `level` fraction of foreground records.
    Partial,
}

impl Corruption {
    pub fn as_str(self) -> &'static str {
        match self {
            Corruption::Noise => "noise",
            Corruption::Partial => "partial",
        }
    }
}

pub fn corrupt(
    dataset: &RayDataset,
    kind: Corruption,
    level: f64,
    seed: u64,
) -> Result<RayDataset> {
    let valid = match kind {
        Corruption::Noise => level >= 0.0 && level.is_finite(),
        Corruption::Partial => level > 0.0 && level <= 1.0,
    };
    if !valid {
        return Err(Error::InvalidLevel(level));
    }
    let mut out = dataset.clone();
    out.meta.seed = seed;
    out.meta.corruption = Some(alloc::format!("{}:{}", kind.as_str(), level));
    let mut rng = seeded(seed);
    match kind {
        Corruption::Noise if level == 0.0 => {}
        Corruption::Noise => {
            for r in out.records.iter_mut().filter(|r| r.a_gt) {
                let h = r.target_point().unwrap_or(Vec3::ZERO);
                let delta = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * level;
                let d = r.dir().normalized();
                let origin = r.origin() + delta - d * delta.dot(d);
                let color = r.color;
                *r =
                    RayRecord::from_ray(&Ray::new(origin, d), r.mode, Some(h + delta), r.shape_id)?;
                r.color = color;
            }
        }
        Corruption::Partial => {
            let mut fg: Vec<usize> = (0..out.records.len())
                .filter(|&i| out.records[i].a_gt)
                .collect();
            shuffle(&mut fg, &mut rng);
            let keep = libm::round(level * fg.len() as f64) as usize;
            let mut drop = alloc::vec![false; out.records.len()];
            for &i in &fg[keep..] {
                drop[i] = true;
            }
            let records = core::mem::take(&mut out.records)
                .into_iter()
                .zip(drop)
                .filter_map(|(r, d)| (!d).then_some(r))
                .collect();
            let meta = out.meta.clone();
            out = RayDataset::from_records(out.mode, records, meta)?;
        }
    }
    Ok(out)
}

/// Rays from the nearest viewpoint through each observed point.
pub fn points_to_rays(
    points: &[Vec3],
    viewpoints: &[Vec3],
    mode: EncodingMode,
) -> Result<Vec<RayRecord>> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    if viewpoints.is_empty() {
        return Err(Error::EmptyViewpoints);
    }
    points
        .iter()
        .map(|&h| {
            let c = viewpoints
                .iter()
                .copied()
                .min_by(|a, b| (h - *a).norm_squared().total_cmp(&(h - *b).norm_squared()))
                .unwrap_or(Vec3::ZERO);
            if (h - c).norm() < 1e-6 {
                return Err(Error::CoincidentPoint);
            }
            RayRecord::from_ray(&Ray::new(c, h - c), mode, Some(h), 0)
        })
        .collect()
}
