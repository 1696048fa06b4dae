//! Brute-force reference implementations and random scene generators shared by
//! the integration suites.
#![allow(dead_code)]

use rand::Rng;
use regtrack::geometry::{normalized_depth, CameraIntrinsics, RigidTransform, TriangleMesh, Vec3};
use regtrack::grid::Grid;

pub const Z_NEAR: f64 = 0.01;
pub const Z_FAR: f64 = 100.0;

pub fn cam64() -> CameraIntrinsics {
    CameraIntrinsics::new(64.0, 64.0, 31.5, 31.5, 64, 64).unwrap()
}

/// Coverage and metric depth of one camera-frame triangle along the ray
/// through pixel `(x, y)`, evaluated from scratch.
pub fn brute_hit(v: &[Vec3; 3], k: &CameraIntrinsics, x: usize, y: usize) -> Option<f64> {
    let d = Vec3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
    let det = v[0].dot(&v[1].cross(&v[2]));
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let s = det.signum();
    let edges = [v[1].cross(&v[2]) * s, v[2].cross(&v[0]) * s, v[0].cross(&v[1]) * s];
    let mut sum = 0.0;
    for n in &edges {
        let e = n.x * d.x + n.y * d.y + n.z * d.z;
        let owns = n.x > 0.0 || (n.x == 0.0 && n.y > 0.0);
        if e < 0.0 || (e == 0.0 && !owns) {
            return None;
        }
        sum += e;
    }
    (sum > 0.0).then(|| det.abs() / sum)
}

/// Index mask, normalized depth and per-object reverse depth by looping over
/// every pixel and every triangle.
pub fn brute_render(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
) -> (Grid<u8>, Grid<f64>, Vec<Grid<f64>>) {
    let (w, h) = (k.width as usize, k.height as usize);
    let cams: Vec<Vec<[Vec3; 3]>> = meshes
        .iter()
        .zip(poses)
        .map(|(m, p)| {
            m.triangles
                .iter()
                .map(|t| t.map(|i| p.apply(&m.vertices[i as usize])))
                .collect()
        })
        .collect();
    let mut mask = Grid::new(w, h, 0u8);
    let mut depth = Grid::new(w, h, 1.0);
    let mut reverse = vec![Grid::new(w, h, 1.0); meshes.len()];
    for y in 0..h {
        for x in 0..w {
            let mut near = f64::INFINITY;
            for (j, tris) in cams.iter().enumerate() {
                let mut far: Option<f64> = None;
                for v in tris {
                    let Some(z) = brute_hit(v, k, x, y) else { continue };
                    if z < Z_NEAR || z >= Z_FAR {
                        continue;
                    }
                    if z < near {
                        near = z;
                        mask.set(x, y, (j + 1) as u8);
                        depth.set(x, y, normalized_depth(z, Z_NEAR, Z_FAR));
                    }
                    if far.is_none_or(|f| z > f) {
                        far = Some(z);
                    }
                }
                if let Some(f) = far {
                    reverse[j].set(x, y, normalized_depth(f, Z_NEAR, Z_FAR));
                }
            }
        }
    }
    (mask, depth, reverse)
}

/// 1–3 objects with at most 50 triangles in total, some straddling the camera plane.
pub fn random_scene<R: Rng>(rng: &mut R) -> Vec<(TriangleMesh, RigidTransform)> {
    let objects = rng.random_range(1..=3);
    let mut budget = 50;
    let mut out = Vec::new();
    for o in 0..objects {
        let left = objects - o;
        let n = rng.random_range(1..=(budget - (left - 1)).min(25));
        budget -= n;
        let center = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(0.8..3.0));
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for t in 0..n {
            let spread = if rng.random_bool(0.1) { 2.5 } else { 0.5 };
            for _ in 0..3 {
                vertices.push(Vec3::new(
                            rng.random_range(-spread..spread),
                            rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                ));
            }
            let b = 3 * t as u32;
            triangles.push([b, b + 1, b + 2]);
        }
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = RigidTransform::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI));
        let pose = RigidTransform::new(r.rotation, center);
        out.push((TriangleMesh::new(vertices, triangles).expect("finite vertices"), pose));
    }
    out
}

/// Brute-force signed distance and closest contour pixel: contour pixels are
/// object pixels with a 4-neighbour outside the object or the image.
pub fn brute_sdt(mask: &Grid<u8>, j: u8) -> Option<(Grid<f64>, Vec<Vec<(usize, usize)>>)> {
    let (w, h) = (mask.width(), mask.height());
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && mask.get(x as usize, y as usize) == j;
    let mut contour = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if inside(x, y) && [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)].iter().any(|&(a, b)| !inside(a, b)) {
                contour.push((x as usize, y as usize));
            }
        }
    }
    if contour.is_empty() {
        return None;
    }
    let mut phi = Grid::new(w, h, 0.0);
    let mut closest = vec![Vec::new(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best = i64::MAX;
            let mut ties = Vec::new();
            for &(cx, cy) in &contour {
                let (dx, dy) = (cx as i64 - x as i64, cy as i64 - y as i64);
                let d2 = dx * dx + dy * dy;
                if d2 < best {
                    best = d2;
                    ties.clear();
                }
                if d2 == best {
                    ties.push((cx, cy));
                }
            }
            let d = (best as f64).sqrt();
            phi.set(x, y, if mask.get(x, y) == j { -d } else { d });
            closest[y * w + x] = ties;
        }
    }
    Some((phi, closest))
}

/// Random multi-label mask built from discs and rectangles, sometimes cut by the border.
pub fn random_mask<R: Rng>(rng: &mut R, w: usize, h: usize) -> Grid<u8> {
    let mut m = Grid::new(w, h, 0u8);
    for _ in 0..rng.random_range(1..6) {
        let label = rng.random_range(1..=3u8);
        let (cx, cy) = (rng.random_range(-8.0..w as f64 + 8.0), rng.random_range(-8.0..h as f64 + 8.0));
        let r = rng.random_range(1.0..20.0);
        let disc = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let hit = if disc { dx * dx + dy * dy < r * r } else { dx.abs() < r && dy.abs() < 0.6 * r };
                if hit {
                    m.set(x, y, label);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..20) {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        m.set(x, y, rng.random_range(0..=3));
    }
    m
}

/// Unshaded render: each pixel takes the color of the first vertex of the
/// visible triangle, background pixels take `background`.
pub fn render_flat(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
    background: [u8; 3],
) -> image::RgbImage {
    let frags = regtrack::raster::render_fragments(meshes, poses, k, Z_NEAR, Z_FAR).unwrap();
    image::RgbImage::from_fn(k.width, k.height, |x, y| {
        let f = frags.get(x as usize, y as usize);
        if !f.is_hit() {
            return image::Rgb(background);
        }
        let m = meshes[f.object as usize - 1];
        let c = m.colors[m.triangles[f.triangle as usize][0] as usize] * 255.0;
        image::Rgb([c.x as u8, c.y as u8, c.z as u8])
    })
}

/// Sphere of radius 5 cm in a single color.
pub fn sphere() -> TriangleMesh {
    let mut s = TriangleMesh::uv_sphere(0.05, 24, 36);
    s.colors = vec![Vec3::new(0.85, 0.3, 0.2); s.vertices.len()];
    s
}

pub fn cam320() -> CameraIntrinsics {
    CameraIntrinsics::new(300.0, 300.0, 160.0, 128.0, 320, 256).unwrap()
}
