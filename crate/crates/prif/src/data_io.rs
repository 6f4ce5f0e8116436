//! `PRIFDATA` ray datasets and `PRIFSDFS` SDF sample sets.
//!
//! Ray record layout (36 bytes, little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 0..12  | anchor, 3 × f32 |
//! | 12..24 | direction, 3 × f32 |
//! | 24..28 | s, f32 |
//! | 28     | a, u8 |
//! | 29..31 | shape id, u16 |
//! | 31     | flags, bit 0 = color present |
//! | 32..35 | color, 3 × u8 |
//! | 35     | pad |
//!
//! Hit points are not stored; loading rebuilds them from anchor, direction
//! and s.

use std::path::Path;

use prif_core::dataset::{DatasetMeta, RayDataset, RayRecord, RECORD_BYTES};
use prif_core::rays::EncodingMode;
use prif_core::sdf::SdfSample;
use prif_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{IoError, IoResult};

pub const DATASET_MAGIC: &[u8; 8] = b"PRIFDATA";
pub const SDF_SAMPLES_MAGIC: &[u8; 8] = b"PRIFSDFS";
pub const SDF_RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub mode: EncodingMode,
    pub count: usize,
    pub record_bytes: usize,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfSamplesHeader {
    pub count: usize,
    pub record_bytes: usize,
    pub seed: u64,
    pub mesh_hash: Option<u64>,
}

fn put_f32s(out: &mut [u8], values: &[f32]) {
    for (i, v) in values.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
    }
}

fn get_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn encode_record(r: &RayRecord) -> [u8; RECORD_BYTES] {
    let mut b = [0u8; RECORD_BYTES];
    put_f32s(&mut b[0..12], &r.anchor);
    put_f32s(&mut b[12..24], &r.direction);
    put_f32s(&mut b[24..28], &[r.s_gt]);
    b[28] = r.a_gt as u8;
    b[29..31].copy_from_slice(&r.shape_id.to_le_bytes());
    if let Some(c) = r.color {
        b[31] = 1;
        for k in 0..3 {
            b[32 + k] = (c[k].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    b
}

pub fn decode_record(mode: EncodingMode, b: &[u8]) -> Result<RayRecord, String> {
    if b.len() != RECORD_BYTES {
        return Err(format!("record of {} bytes", b.len()));
    }
    let a_gt = match b[28] {
        0 => false,
        1 => true,
        v => return Err(format!("foreground flag {v} is not 0 or 1")),
    };
    let mut r = RayRecord {
        mode,
        anchor: [get_f32(b, 0), get_f32(b, 4), get_f32(b, 8)],
        direction: [get_f32(b, 12), get_f32(b, 16), get_f32(b, 20)],
        s_gt: get_f32(b, 24),
        a_gt,
        shape_id: u16::from_le_bytes([b[29], b[30]]),
        hit: None,
        color: (b[31] & 1 == 1).then(|| [b[32], b[33], b[34]].map(|v| v as f32 / 255.0)),
    };
    r.hit = r.target_point();
    Ok(r)
}

pub fn encode_dataset(ds: &RayDataset) -> Vec<u8> {
    let header = DatasetHeader {
        mode: ds.mode,
        count: ds.records.len(),
        record_bytes: RECORD_BYTES,
        meta: ds.meta.clone(),
    };
    let mut body = Vec::with_capacity(ds.records.len() * RECORD_BYTES);
    for r in &ds.records {
        body.extend_from_slice(&encode_record(r));
    }
    container::encode(DATASET_MAGIC, &header, &body)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<RayDataset, String> {
    let (h, body): (DatasetHeader, _) = container::decode(DATASET_MAGIC, bytes)?;
    if h.record_bytes != RECORD_BYTES {
        return Err(format!("record size {} unsupported", h.record_bytes));
    }
    if body.len() != h.count * RECORD_BYTES {
        return Err(format!(
            "body holds {} bytes, expected {} records",
            body.len(),
            h.count
        ));
    }
    let records = body
        .chunks_exact(RECORD_BYTES)
        .map(|c| decode_record(h.mode, c))
        .collect::<Result<Vec<_>, _>>()?;
    RayDataset::from_records(h.mode, records, h.meta).map_err(|e| e.to_string())
}

pub fn save_dataset(path: &Path, ds: &RayDataset) -> IoResult<()> {
    container::write_file(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> IoResult<RayDataset> {
    decode_dataset(&container::read_file(path)?).map_err(|m| IoError::format(path, m))
}

pub fn encode_sdf_samples(samples: &[SdfSample], seed: u64, mesh_hash: Option<u64>) -> Vec<u8> {
    let header = SdfSamplesHeader {
        count: samples.len(),
        record_bytes: SDF_RECORD_BYTES,
        seed,
        mesh_hash,
    };
    let mut body = vec![0u8; samples.len() * SDF_RECORD_BYTES];
    for (s, out) in samples.iter().zip(body.chunks_exact_mut(SDF_RECORD_BYTES)) {
        let [x, y, z] = s.point.to_f32();
        put_f32s(out, &[x, y, z, s.sdf as f32]);
    }
    container::encode(SDF_SAMPLES_MAGIC, &header, &body)
}

pub fn decode_sdf_samples(bytes: &[u8]) -> Result<(SdfSamplesHeader, Vec<SdfSample>), String> {
    let (h, body): (SdfSamplesHeader, _) = container::decode(SDF_SAMPLES_MAGIC, bytes)?;
    if h.record_bytes != SDF_RECORD_BYTES || body.len() != h.count * SDF_RECORD_BYTES {
        return Err(format!(
            "body holds {} bytes, expected {} records",
            body.len(),
            h.count
        ));
    }
    let samples = body
        .chunks_exact(SDF_RECORD_BYTES)
        .map(|c| SdfSample {
            point: Vec3::from_f32([get_f32(c, 0), get_f32(c, 4), get_f32(c, 8)]),
            sdf: get_f32(c, 12) as f64,
        })
        .collect();
    Ok((h, samples))
}

pub fn save_sdf_samples(
    path: &Path,
    samples: &[SdfSample],
    seed: u64,
    mesh_hash: Option<u64>,
) -> IoResult<()> {
    container::write_file(path, &encode_sdf_samples(samples, seed, mesh_hash))
}

pub fn load_sdf_samples(path: &Path) -> IoResult<(SdfSamplesHeader, Vec<SdfSample>)> {
    decode_sdf_samples(&container::read_file(path)?).map_err(|m| IoError::format(path, m))
}
