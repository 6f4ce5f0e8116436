use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Indexed triangle soup with optional per-vertex RGB in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    colors: Option<Vec<[f32; 3]>>,
}

/// Uniform scale about `center` applied by [`TriangleMesh::normalized`]:
/// `v' = (v - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub center: Vec3,
}

impl Normalization {
    pub fn apply(&self, v: Vec3) -> Vec3 {
        (v - self.center) * self.scale
    }

    pub fn invert(&self, v: Vec3) -> Vec3 {
        v / self.scale + self.center
    }
}

fn is_degenerate(a: Vec3, b: Vec3, c: Vec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let longest = e1
        .norm_squared()
        .max(e2.norm_squared())
        .max((c - b).norm_squared());
    let twice_area = e1.cross(e2).norm();
    !(twice_area > 1e-12 * longest) || longest == 0.0
}

impl TriangleMesh {
    /// Builds a mesh from polygons, fan-triangulating faces with more than
    /// three corners and dropping zero-area triangles.
    ///
    /// Returns the mesh and the number of dropped triangles.
    pub fn from_polygons<F, I>(
        vertices: Vec<Vec3>,
        faces: F,
        colors: Option<Vec<[f32; 3]>>,
    ) -> Result<(Self, usize)>
    where
        F: IntoIterator<Item = I>,
        I: AsRef<[u32]>,
    {
        let mut tris = Vec::new();
        for face in faces {
            let face = face.as_ref();
            for &i in face {
                if i as usize >= vertices.len() {
                    return Err(Error::InvalidIndex {
                        index: i as usize,
                        vertices: vertices.len(),
                    });
                }
            }
            for k in 1..face.len().saturating_sub(1) {
                tris.push([face[0], face[k], face[k + 1]]);
            }
        }
        Self::from_triangles(vertices, tris, colors)
    }

    /// Like [`from_polygons`](Self::from_polygons) for triangles only.
    pub fn from_triangles(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        colors: Option<Vec<[f32; 3]>>,
    ) -> Result<(Self, usize)> {
        if let Some(c) = &colors {
            if c.len() != vertices.len() {
                return Err(Error::ShapeMismatch {
                    expected: vertices.len(),
                    got: c.len(),
                });
            }
        }
        let n = triangles.len();
        let mut kept = Vec::with_capacity(n);
        for t in triangles {
            for &i in &t {
                if i as usize >= vertices.len() {
                    return Err(Error::InvalidIndex {
                        index: i as usize,
                        vertices: vertices.len(),
                    });
                }
            }
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            if !is_degenerate(a, b, c) {
                kept.push(t);
            }
        }
        let dropped = n - kept.len();
        Ok((
            Self {
                vertices,
                triangles: kept,
                colors,
            },
            dropped,
        ))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(c - a).norm()
    }

    /// Barycentric color at `(u, v)` on triangle `i`, where the point is
    /// `(1-u-v)·a + u·b + v·c`.
    pub fn color_at(&self, i: usize, u: f64, v: f64) -> Option<[f32; 3]> {
        let colors = self.colors.as_ref()?;
        let [a, b, c] = self.triangles[i].map(|k| colors[k as usize]);
        let w = [(1.0 - u - v) as f32, u as f32, v as f32];
        Some(core::array::from_fn(|ch| {
            w[0] * a[ch] + w[1] * b[ch] + w[2] * c[ch]
        }))
    }

    pub fn with_uniform_color(mut self, rgb: [f32; 3]) -> Self {
        self.colors = Some(alloc::vec![rgb; self.vertices.len()]);
        self
    }

    /// Axis-aligned bounds of referenced and unreferenced vertices alike.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for &v in &self.vertices {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Rescales uniformly about the bounding-box center so the farthest
    /// vertex lies at `target_radius` from the origin.
    pub fn normalized(&self, target_radius: f64) -> Result<(Self, Normalization)> {
        if self.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if !(target_radius > 0.0) || !target_radius.is_finite() {
            return Err(Error::InvalidRadius(target_radius));
        }
        let (lo, hi) = self.bounds();
        let center = (lo + hi) * 0.5;
        let radius = self
            .vertices
            .iter()
            .map(|&v| (v - center).norm())
            .fold(0.0, f64::max);
        if radius == 0.0 {
            return Err(Error::EmptyMesh);
        }
        let norm = Normalization {
            scale: target_radius / radius,
            center,
        };
        let vertices = self.vertices.iter().map(|&v| norm.apply(v)).collect();
        let (mesh, _) =
            Self::from_triangles(vertices, self.triangles.clone(), self.colors.clone())?;
        Ok((mesh, norm))
    }

    /// True when every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut edges: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    /// FNV-1a over vertex bit patterns and indices.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for v in &self.vertices {
            for c in v.to_array() {
                eat(&c.to_bits().to_le_bytes());
            }
        }
        for t in &self.triangles {
            for i in t {
                eat(&i.to_le_bytes());
            }
        }
        h
    }

    /// Subdivided icosahedron projected onto a sphere of `radius`.
    pub fn icosphere(subdivisions: u32, radius: f64) -> Self {
        let phi = (1.0 + libm::sqrt(5.0)) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
        let mut tris: Vec<[u32; 3]> = alloc::vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache: BTreeMap<(u32, u32), u32> = BTreeMap::new();
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalized());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        let verts = verts.into_iter().map(|v| v * radius).collect();
        Self {
            vertices: verts,
            triangles: tris,
            colors: None,
        }
    }

    /// Axis-aligned box `[-h, h]^3` as 12 triangles with outward winding.
    pub fn cube(half: f64) -> Self {
        let v: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -half } else { half },
                    if i & 2 == 0 { -half } else { half },
                    if i & 4 == 0 { -half } else { half },
                )
            })
            .collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        Self::from_polygons(v, quads, None).expect("static cube").0
    }

    /// Two axis-aligned squares forming a step: `z = 0` for `x < 0` and
    /// `z = height` for `x > 0`, both spanning `|x|, |y| <= half`. Open mesh.
    pub fn step_planes(half: f64, height: f64) -> Self {
        let v = alloc::vec![
            Vec3::new(-half, -half, 0.0),
            Vec3::new(0.0, -half, 0.0),
            Vec3::new(0.0, half, 0.0),
            Vec3::new(-half, half, 0.0),
            Vec3::new(0.0, -half, height),
            Vec3::new(half, -half, height),
            Vec3::new(half, half, height),
            Vec3::new(0.0, half, height),
        ];
        Self::from_polygons(v, [[0u32, 1, 2, 3], [4, 5, 6, 7]], None)
            .expect("static step")
            .0
    }

    /// Merge several meshes into one soup.
    pub fn merge(parts: &[TriangleMesh]) -> Self {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let with_color = parts.iter().all(|p| p.colors.is_some());
        let mut colors = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| t.map(|i| i + base)));
            if let Some(c) = &p.colors {
                colors.extend_from_slice(c);
            }
        }
        Self {
            vertices,
            triangles,
            colors: with_color.then_some(colors),
        }
    }

    /// Returns a copy with every vertex mapped by `f`.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
            colors: self.colors.clone(),
        }
    }
}
