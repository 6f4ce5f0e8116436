//! ASCII OBJ and PLY meshes in, ASCII PLY point clouds out.

use std::fmt::Write as _;
use std::path::Path;

use prif_core::geometry::TriangleMesh;
use prif_core::Vec3;

use crate::error::{IoError, IoResult, LineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            _ => None,
        }
    }
}

/// Polygon soup as read from disk, before triangulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<u32>>,
    pub colors: Option<Vec<[f32; 3]>>,
}

#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    /// Zero-area triangles dropped after fan triangulation.
    pub dropped: usize,
}

pub fn load_mesh(path: &Path) -> IoResult<LoadedMesh> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| IoError::format(path, "unknown mesh extension (expected .obj or .ply)"))?;
    load_mesh_as(path, format)
}

pub fn load_mesh_as(path: &Path, format: MeshFormat) -> IoResult<LoadedMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let raw = match format {
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::Ply => parse_ply(&text),
    }
    .map_err(|error| IoError::Parse {
        path: path.to_path_buf(),
        error,
    })?;
    let (mesh, dropped) = TriangleMesh::from_polygons(raw.vertices, raw.faces, raw.colors)?;
    Ok(LoadedMesh { mesh, dropped })
}

fn parse_f64(tok: Option<&str>, line: usize, what: &str) -> Result<f64, LineError> {
    let tok = tok.ok_or_else(|| LineError::new(line, format!("missing {what}")))?;
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| LineError::new(line, format!("invalid {what} '{tok}'")))
}

/// `v x y z [r g b]` and `f i j k ...` lines; indices are 1-based, negative
/// indices count back from the latest vertex, and `i/t/n` keeps `i`.
pub fn parse_obj(text: &str) -> Result<RawMesh, LineError> {
    let mut out = RawMesh::default();
    let mut colors: Vec<Option<[f32; 3]>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line_no, "x coordinate")?;
                let y = parse_f64(toks.next(), line_no, "y coordinate")?;
                let z = parse_f64(toks.next(), line_no, "z coordinate")?;
                out.vertices.push(Vec3::new(x, y, z));
                let rest: Vec<&str> = toks.collect();
                colors.push(match rest.len() {
                    0 => None,
                    3 | 4 => {
                        let mut c = [0f32; 3];
                        for (k, t) in rest[..3].iter().enumerate() {
                            c[k] = parse_f64(Some(t), line_no, "color")? as f32;
                        }
                        Some(c)
                    }
                    _ => {
                        return Err(LineError::new(
                            line_no,
                            "vertex needs 3 coordinates and optionally 3 colors",
                        ))
                    }
                });
            }
            Some("f") => {
                let mut face = Vec::new();
                for t in toks {
                    let idx = t.split('/').next().unwrap_or("");
                    let i: i64 = idx.parse().map_err(|_| {
                        LineError::new(line_no, format!("invalid face index '{t}'"))
                    })?;
                    let n = out.vertices.len() as i64;
                    let zero_based = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || zero_based < 0 || zero_based >= n {
                        return Err(LineError::new(
                            line_no,
                            format!("face index {i} out of range ({n} vertices)"),
                        ));
                    }
                    face.push(zero_based as u32);
                }
                if face.len() < 3 {
                    return Err(LineError::new(
                        line_no,
                        format!("face has {} vertices, need at least 3", face.len()),
                    ));
                }
                out.faces.push(face);
            }
            _ => {}
        }
    }
    if !colors.is_empty() && colors.iter().all(Option::is_some) {
        out.colors = Some(colors.into_iter().flatten().collect());
    }
    Ok(out)
}

struct PlyElement {
    name: String,
    count: usize,
    /// Property names; list properties are tagged with a leading `[]`.
    props: Vec<String>,
}

fn ply_header(
    lines: &mut std::iter::Enumerate<std::str::Lines<'_>>,
) -> Result<(Vec<PlyElement>, usize), LineError> {
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(LineError::new(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut last = 1;
    for (no, line) in lines.by_ref() {
        last = no + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(LineError::new(
                    last,
                    format!("unsupported format '{other}'"),
                ))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| {
                    LineError::new(last, format!("invalid element count '{count}'"))
                })?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| LineError::new(last, "property before element"))?
                .props
                .push(format!("[]{name}")),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| LineError::new(last, "property before element"))?
                .props
                .push(name.to_string()),
            ["end_header"] => return Ok((elements, last)),
            _ => {
                return Err(LineError::new(
                    last,
                    format!("unrecognized header line '{line}'"),
                ))
            }
        }
    }
    Err(LineError::new(last, "missing end_header"))
}

/// ASCII PLY with a `vertex` element (`x y z`, optional `red green blue`
/// in 0–255) and a `face` element carrying `vertex_indices`.
pub fn parse_ply(text: &str) -> Result<RawMesh, LineError> {
    let mut lines = text.lines().enumerate();
    let (elements, header_end) = ply_header(&mut lines)?;
    let mut out = RawMesh::default();
    let mut last_line = header_end;
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    for el in &elements {
        let pos = |n: &str| el.props.iter().position(|p| p == n);
        let xyz = [pos("x"), pos("y"), pos("z")];
        let rgb = [pos("red"), pos("green"), pos("blue")];
        let has_rgb = rgb.iter().all(Option::is_some);
        let list = el
            .props
            .iter()
            .position(|p| p == "[]vertex_indices" || p == "[]vertex_index");
        let mut colors = Vec::new();
        for k in 0..el.count {
            let (no, line) = body.next().ok_or_else(|| {
                LineError::new(
                    last_line + 1,
                    format!(
                        "unexpected end of file: {} {} of {} missing",
                        el.name, k, el.count
                    ),
                )
            })?;
            last_line = no + 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let mut v = [0f64; 3];
                    for (a, p) in xyz.iter().enumerate() {
                        let p = p.ok_or_else(|| {
                            LineError::new(last_line, "vertex element lacks x/y/z")
                        })?;
                        v[a] = parse_f64(toks.get(p).copied(), last_line, "coordinate")?;
                    }
                    out.vertices.push(Vec3::from_array(v));
                    if has_rgb {
                        let mut c = [0f32; 3];
                        for (a, p) in rgb.iter().enumerate() {
                            c[a] =
                                (parse_f64(toks.get(p.unwrap_or(0)).copied(), last_line, "color")?
                                    / 255.0) as f32;
                        }
                        colors.push(c);
                    }
                }
                "face" => {
                    let p = list.ok_or_else(|| {
                        LineError::new(last_line, "face element lacks vertex_indices")
                    })?;
                    if p != 0 {
                        return Err(LineError::new(
                            last_line,
                            "vertex_indices must be the first face property",
                        ));
                    }
                    let n: usize = toks
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| LineError::new(last_line, "missing face vertex count"))?;
                    if toks.len() < n + 1 {
                        return Err(LineError::new(
                            last_line,
                            format!("face lists {} of {n} indices", toks.len() - 1),
                        ));
                    }
                    let mut face = Vec::with_capacity(n);
                    for t in &toks[1..=n] {
                        let i: u32 = t.parse().map_err(|_| {
                            LineError::new(last_line, format!("invalid face index '{t}'"))
                        })?;
                        if i as usize >= out.vertices.len() {
                            return Err(LineError::new(
                                last_line,
                                format!(
                                    "face index {i} out of range ({} vertices)",
                                    out.vertices.len()
                                ),
                            ));
                        }
                        face.push(i);
                    }
                    if face.len() < 3 {
                        return Err(LineError::new(
                            last_line,
                            format!("face has {n} vertices, need at least 3"),
                        ));
                    }
                    out.faces.push(face);
                }
                _ => {}
            }
        }
        if el.name == "vertex" && has_rgb {
            out.colors = Some(colors);
        }
    }
    Ok(out)
}

/// ASCII PLY with one vertex element and optional uchar colors.
pub fn ply_points_string(points: &[Vec3], colors: Option<&[[f32; 3]]>) -> String {
    let mut s = String::with_capacity(64 + points.len() * 40);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
        if let Some(c) = colors {
            let q = c[i].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
            let _ = write!(s, " {} {} {}", q[0], q[1], q[2]);
        }
        s.push('\n');
    }
    s
}

/// ASCII PLY with vertex (and color) and face elements.
pub fn ply_mesh_string(mesh: &TriangleMesh) -> String {
    let mut s = ply_points_string(mesh.vertices(), mesh.colors());
    let header_end = s.find("end_header\n").expect("header present");
    s.insert_str(
        header_end,
        &format!(
            "element face {}\nproperty list uchar int vertex_indices\n",
            mesh.triangles().len()
        ),
    );
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_ply_mesh(path: &Path, mesh: &TriangleMesh) -> IoResult<()> {
    std::fs::write(path, ply_mesh_string(mesh)).map_err(|e| IoError::io(path, e))
}

pub fn write_ply_points(path: &Path, points: &[Vec3], colors: Option<&[[f32; 3]]>) -> IoResult<()> {
    if let Some(c) = colors {
        if c.len() != points.len() {
            return Err(IoError::format(
                path,
                format!("{} colors for {} points", c.len(), points.len()),
            ));
        }
    }
    std::fs::write(path, ply_points_string(points, colors)).map_err(|e| IoError::io(path, e))
}

/// Points (and colors if present) of a PLY file's vertex element.
pub fn read_ply_points(path: &Path) -> IoResult<(Vec<Vec3>, Option<Vec<[f32; 3]>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let raw = parse_ply(&text).map_err(|error| IoError::Parse {
        path: path.to_path_buf(),
        error,
    })?;
    Ok((raw.vertices, raw.colors))
}
