//! Binary PGM (P5) and PPM (P6) images.

use std::path::Path;

use prif_core::eval::DepthImage;
use prif_core::pose::Image;

use crate::error::{IoError, IoResult};

/// Decoded P5 image; samples are widened to u16.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval > 255 {
        out.extend(pgm.data.iter().flat_map(|v| v.to_be_bytes()));
    } else {
        out.extend(pgm.data.iter().map(|&v| v as u8));
    }
    out
}

/// Parses a P5 header (comments allowed) and its 8- or 16-bit big-endian body.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("expected P5 magic, found '{}'", fields[0]));
    }
    let num = |s: &str, what: &str| {
        s.parse::<u32>()
            .map_err(|_| format!("invalid {what} '{s}'"))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!(
            "invalid dimensions {width}x{height} maxval {maxval}"
        ));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let sample = if maxval > 255 { 2 } else { 1 };
    let body = bytes
        .get(pos..pos + n * sample)
        .ok_or_else(|| format!("body shorter than {} bytes", n * sample))?;
    let data = if sample == 2 {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn read_pgm(path: &Path) -> IoResult<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_pgm(&bytes).map_err(|m| IoError::format(path, m))
}

fn write(path: &Path, bytes: &[u8]) -> IoResult<()> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Depth mapped linearly from `[0, t_max]` onto `[0, 65535]`.
pub fn depth_to_pgm(depth: &DepthImage, t_max: f64) -> Pgm {
    let data = depth
        .depth
        .iter()
        .map(|&d| ((d as f64 / t_max).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    Pgm {
        width: depth.width,
        height: depth.height,
        maxval: 65535,
        data,
    }
}

pub fn write_depth_pgm(path: &Path, depth: &DepthImage, t_max: f64) -> IoResult<()> {
    write(path, &encode_pgm(&depth_to_pgm(depth, t_max)))
}

/// Binary mask: samples above half of maxval are foreground (1.0).
pub fn pgm_to_mask(pgm: &Pgm) -> Image {
    let half = pgm.maxval as f32 / 2.0;
    let data = pgm
        .data
        .iter()
        .map(|&v| if v as f32 > half { 1.0 } else { 0.0 })
        .collect();
    Image {
        width: pgm.width,
        height: pgm.height,
        data,
    }
}

pub fn read_mask_pgm(path: &Path) -> IoResult<Image> {
    read_pgm(path).map(|p| pgm_to_mask(&p))
}

/// 8-bit mask; values at or above 0.5 become 255.
pub fn write_mask_pgm(path: &Path, mask: &Image) -> IoResult<()> {
    let pgm = Pgm {
        width: mask.width,
        height: mask.height,
        maxval: 255,
        data: mask
            .data
            .iter()
            .map(|&v| if v >= 0.5 { 255 } else { 0 })
            .collect(),
    };
    write(path, &encode_pgm(&pgm))
}

pub fn encode_ppm(width: u32, height: u32, rgb: &[[f32; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(
        rgb.iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)),
    );
    out
}

pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[[f32; 3]]) -> IoResult<()> {
    if rgb.len() != width as usize * height as usize {
        return Err(IoError::format(
            path,
            format!("{} pixels for {width}x{height}", rgb.len()),
        ));
    }
    write(path, &encode_ppm(width, height, rgb))
}
