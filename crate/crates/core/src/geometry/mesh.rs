use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::transform::Vec3;
use super::GeometryError;

/// Maximum vertex count of the histogram-anchoring mesh.
pub const MAX_REDUCED_VERTICES: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex RGB albedo in `[0, 1]`; empty when absent.
    pub colors: Vec<Vec3>,
    pub diameter: f64,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(GeometryError::InvalidIndex { index: *bad as usize, vertex_count: n });
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::DegenerateMesh("non-finite vertex".into()));
        }
        let diameter = max_pairwise_distance(&vertices);
        Ok(Self {
            vertices,
            triangles,
            colors: Vec::new(),
            diameter,
        })
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self, GeometryError> {
        if colors.len() != self.vertices.len() {
            return Err(GeometryError::DegenerateMesh(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        self.colors = colors;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Axis-aligned bounding box `(min, max)` in model coordinates.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// The eight corners of the bounding box.
    pub fn bounding_corners(&self) -> Vec<Vec3> {
        let Some((lo, hi)) = self.bounding_box() else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(8);
        for i in 0..8 {
            out.push(Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            ));
        }
        out
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| triangle_area(&self.triangle(i))).sum()
    }

    /// Parses the OBJ subset: `v x y z [r g b]` and `f i j k` (1-based, `i/t/n` accepted).
    pub fn from_obj_str(text: &str) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let bad = |msg: &str| GeometryError::Obj {
                line: lineno + 1,
                message: msg.to_string(),
            };
            match parts.next() {
                Some("v") => {
                    let vals: Vec<f64> = parts
                        .map(|p| p.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("unparsable vertex coordinate"))?;
                    if vals.len() < 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Vec3::new(vals[0], vals[1], vals[2]));
                    if vals.len() >= 6 {
                        colors.push(Vec3::new(vals[3], vals[4], vals[5]));
                    }
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| {
                            p.split('/')
                                .next()
                                .and_then(|s| s.parse::<u32>().ok())
                                .filter(|&i| i >= 1)
                                .map(|i| i - 1)
                        })
                        .collect::<Option<_>>()
                        .ok_or_else(|| bad("face indices must be positive integers"))?;
                    if idx.len() != 3 {
                        return Err(bad("only triangular faces are supported"));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        let mesh = Self::new(vertices, triangles)?;
        if !colors.is_empty() && colors.len() == mesh.vertices.len() {
            mesh.with_colors(colors)
        } else {
            Ok(mesh)
        }
    }

    pub fn load_obj(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_obj_str(&text)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            match self.colors.get(i) {
                Some(c) => writeln!(s, "v {:.17e} {:.17e} {:.17e} {} {} {}", v.x, v.y, v.z, c.x, c.y, c.z),
                None => writeln!(s, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z),
            }
            .unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        s
    }

    pub fn save_obj(&self, path: &Path) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_obj_string()).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Axis-aligned cube of edge `size` centered at the origin, each face split into
    /// `subdiv × subdiv` quads. Faces get their own vertices so per-face colors work.
    pub fn cube(size: f64, subdiv: usize, face_colors: [Vec3; 6]) -> Self {
        let subdiv = subdiv.max(1);
        let h = size * 0.5;
        // (normal, u axis, v axis) with u × v = normal so the winding faces outward.
        let faces = [
            (Vec3::x(), Vec3::y(), Vec3::z()),
            (-Vec3::x(), Vec3::z(), Vec3::y()),
            (Vec3::y(), Vec3::z(), Vec3::x()),
            (-Vec3::y(), Vec3::x(), Vec3::z()),
            (Vec3::z(), Vec3::x(), Vec3::y()),
            (-Vec3::z(), Vec3::y(), Vec3::x()),
        ];
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        let mut triangles = Vec::new();
        for (f, (n, u, v)) in faces.iter().enumerate() {
            let base = vertices.len() as u32;
            for j in 0..=subdiv {
                for i in 0..=subdiv {
                    let a = -h + size * i as f64 / subdiv as f64;
                    let b = -h + size * j as f64 / subdiv as f64;
                    vertices.push(n * h + u * a + v * b);
                    colors.push(face_colors[f]);
                }
            }
            let row = subdiv as u32 + 1;
            for j in 0..subdiv as u32 {
                for i in 0..subdiv as u32 {
                    let p = base + j * row + i;
                    triangles.push([p, p + 1, p + row + 1]);
                    triangles.push([p, p + row + 1, p + row]);
                }
            }
        }
        Self::new(vertices, triangles)
            .and_then(|m| m.with_colors(colors))
            .expect("cube construction is valid")
    }

    /// Latitude/longitude sphere centered at the origin with outward winding.
    pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> Self {
        let stacks = stacks.max(2);
        let slices = slices.max(3);
        let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
        for i in 1..stacks {
            let theta = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
                vertices.push(Vec3::new(
                    radius * theta.sin() * phi.cos(),
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                ));
            }
        }
        vertices.push(Vec3::new(0.0, 0.0, -radius));
        let south = vertices.len() as u32 - 1;
        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b) = (ring(i, j), ring(i, j + 1));
                let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for j in 0..slices {
            triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        Self::new(vertices, triangles).expect("sphere construction is valid")
    }
}

pub fn triangle_area(t: &[Vec3; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

fn max_pairwise_distance(vertices: &[Vec3]) -> f64 {
    (0..vertices.len())
        .into_par_iter()
        .map(|i| {
            let a = vertices[i];
            vertices[i + 1..]
                .iter()
                .map(|b| (a - b).norm_squared())
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// A rendering mesh paired with its evenly sampled histogram-anchoring version.
#[derive(Debug, Clone)]
pub struct MeshPair {
    pub full: TriangleMesh,
    pub reduced: TriangleMesh,
}

impl MeshPair {
    pub fn new(full: TriangleMesh) -> Result<Self, GeometryError> {
        let reduced = decimate_mesh(&full, MAX_REDUCED_VERTICES)?;
        Ok(Self { full, reduced })
    }
}

const DECIMATION_SEED: u64 = 0x5eed_dec1;
const CANDIDATES_PER_VERTEX: usize = 8;

/// Evenly resamples the surface down to at most `max_vertices` points.
///
/// Candidates are drawn uniformly over surface area (triangle chosen by area,
/// point by uniform barycentrics), then thinned by farthest-point selection.
/// The returned mesh carries vertices only.
pub fn decimate_mesh(full: &TriangleMesh, max_vertices: usize) -> Result<TriangleMesh, GeometryError> {
    if full.vertices.is_empty() {
        return Err(GeometryError::DegenerateMesh("mesh has no vertices".into()));
    }
    let max_vertices = max_vertices.max(4);
    if full.vertices.len() <= max_vertices {
        return Ok(full.clone());
    }
    let areas: Vec<f64> = (0..full.triangles.len()).map(|i| triangle_area(&full.triangle(i))).collect();
    let total: f64 = areas.iter().sum();
    let candidates: Vec<Vec3> = if total <= 0.0 {
        full.vertices.clone()
    } else {
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a;
            cdf.push(acc / total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(DECIMATION_SEED);
        let n = max_vertices * CANDIDATES_PER_VERTEX;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let ti = cdf.partition_point(|&c| c < u).min(areas.len() - 1);
                let [a, b, c] = full.triangle(ti);
                let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                a + (b - a) * r1 + (c - a) * r2
            })
            .collect()
    };
    let selected = farthest_point_selection(&candidates, max_vertices);
    TriangleMesh::new(selected, Vec::new())
}

fn farthest_point_selection(points: &[Vec3], count: usize) -> Vec<Vec3> {
    let count = count.min(points.len());
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(count);
    let mut current = 0usize;
    for _ in 0..count {
        let p = points[current];
        out.push(p);
        dist.par_iter_mut().zip(points.par_iter()).for_each(|(d, q)| {
            let dd = (q - p).norm_squared();
            if dd < *d {
                *d = dd;
            }
        });
        // Ties resolve to the lowest index so the selection is reproducible.
        current = dist
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
            .0;
    }
    out
}
