//! Deterministic software rasterization of index masks and depth buffers.
//!
//! Every pixel `(x, y)` is sampled along the ray `K⁻¹·[x, y, 1]ᵀ`. A triangle
//! with camera-frame vertices `V₀, V₁, V₂` covers the pixel when the ray lies in
//! the positive cone spanned by the vertices, which is decided by the three
//! edge functions `nᵢ·d` with `n₀ = s·(V₁×V₂)` etc. and `s = sign(V₀·(V₁×V₂))`.
//! The hit depth is `|det| / Σ eᵢ`. Working in ray space means vertices behind
//! the camera need no clipping: the near plane is applied per pixel.
//!
//! Pixels exactly on an edge follow a top-left rule on the inward edge normal,
//! so triangles sharing an edge never both cover (or both miss) a pixel.

use std::path::Path;

use rayon::prelude::*;

use crate::geometry::{normalized_depth, CameraIntrinsics, RigidTransform, TriangleMesh, Vec3};
use crate::grid::Grid;

/// Default near and far planes in meters.
pub const DEFAULT_Z_NEAR: f64 = 0.01;
pub const DEFAULT_Z_FAR: f64 = 100.0;

/// Normalized depth of pixels no surface was rasterized into.
pub const NO_HIT: f64 = 1.0;

/// Per-pixel object index, 0 = background, `j + 1` for the `j`-th mesh.
pub type SilhouetteMask = Grid<u8>;
/// Per-pixel normalized depth in `[0, 1]`, [`NO_HIT`] for background.
pub type DepthMap = Grid<f64>;
/// Normalized depth of the farthest surface of a single object.
pub type ReverseDepthMap = Grid<f64>;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid frustum: z_near = {z_near}, z_far = {z_far}")]
    InvalidFrustum { z_near: f64, z_far: f64 },
    #[error("object is not visible")]
    NotVisible,
    #[error("too many objects for an 8-bit index mask: {0}")]
    TooManyObjects(usize),
}

fn check_frustum(z_near: f64, z_far: f64) -> Result<(), RasterError> {
    if z_near > 0.0 && z_near < z_far && z_far.is_finite() {
        Ok(())
    } else {
        Err(RasterError::InvalidFrustum { z_near, z_far })
    }
}

/// The nearest (or farthest) surface seen at a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    /// 1-based object index; 0 = no hit.
    pub object: u8,
    pub triangle: u32,
    /// Metric depth (camera Z) in meters; `f64::INFINITY` when no hit.
    pub z: f64,
}

impl Fragment {
    pub const EMPTY: Fragment = Fragment {
        object: 0,
        triangle: 0,
        z: f64::INFINITY,
    };

    pub fn is_hit(&self) -> bool {
        self.object != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DepthTest {
    Nearest,
    Farthest,
}

/// Edge setup of one triangle in ray space.
#[derive(Debug, Clone, Copy)]
pub struct TriangleSetup {
    pub normals: [Vec3; 3],
    pub abs_det: f64,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    bounds: (usize, usize, usize, usize),
}

impl TriangleSetup {
    pub fn new(v: &[Vec3; 3], k: &CameraIntrinsics) -> Option<Self> {
        if k.width == 0 || k.height == 0 {
            return None;
        }
        let c12 = v[1].cross(&v[2]);
        let det = v[0].dot(&c12);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let s = det.signum();
        let normals = [c12 * s, v[2].cross(&v[0]) * s, v[0].cross(&v[1]) * s];
        let (w, h) = (k.width as usize, k.height as usize);
        let bounds = if v.iter().all(|p| p.z > 0.0) {
            let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) =
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in v {
                let u = k.fx * p.x / p.z + k.cx;
                let t = k.fy * p.y / p.z + k.cy;
                lo_x = lo_x.min(u);
                hi_x = hi_x.max(u);
                lo_y = lo_y.min(t);
                hi_y = hi_y.max(t);
            }
            // One pixel of slack absorbs rounding in the projected bounds.
            let x0 = (lo_x.floor() - 1.0).max(0.0);
            let y0 = (lo_y.floor() - 1.0).max(0.0);
            let x1 = (hi_x.ceil() + 1.0).min(w as f64 - 1.0);
            let y1 = (hi_y.ceil() + 1.0).min(h as f64 - 1.0);
            if x1 < x0 || y1 < y0 || !(x0.is_finite() && y0.is_finite()) {
                return None;
            }
            (x0 as usize, y0 as usize, x1 as usize, y1 as usize)
        } else {
            (0, 0, w - 1, h - 1)
        };
        Some(Self {
            normals,
            abs_det: det.abs(),
            bounds,
        })
    }

    /// Metric depth of the hit along `ray` (with `ray.z == 1`), if covered.
    #[inline]
    pub fn hit(&self, ray: &Vec3) -> Option<f64> {
        let mut sum = 0.0;
        for n in &self.normals {
            let e = n.x * ray.x + n.y * ray.y + n.z * ray.z;
            if e < 0.0 || (e == 0.0 && !top_left(n)) {
                return None;
            }
            sum += e;
        }
        if sum <= 0.0 {
            return None;
        }
        Some(self.abs_det / sum)
    }

    /// Perspective-correct barycentric weights of the hit along `ray`.
    pub fn barycentric(&self, ray: &Vec3) -> [f64; 3] {
        let e = self.normals.map(|n| n.x * ray.x + n.y * ray.y + n.z * ray.z);
        let sum = e[0] + e[1] + e[2];
        if sum == 0.0 {
            [1.0 / 3.0; 3]
        } else {
            e.map(|v| v / sum)
        }
    }
}

#[inline]
fn top_left(n: &Vec3) -> bool {
    n.x > 0.0 || (n.x == 0.0 && n.y > 0.0)
}

/// Ray through the center of pixel `(x, y)`.
#[inline]
pub fn pixel_ray(k: &CameraIntrinsics, x: usize, y: usize) -> Vec3 {
    Vec3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0)
}

struct Prepared {
    object: u8,
    triangle: u32,
    setup: TriangleSetup,
}

fn prepare(meshes: &[&TriangleMesh], poses: &[RigidTransform], k: &CameraIntrinsics) -> Vec<Prepared> {
    let mut out = Vec::new();
    for (j, (mesh, pose)) in meshes.iter().zip(poses).enumerate() {
        let cam: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let v = [cam[t[0] as usize], cam[t[1] as usize], cam[t[2] as usize]];
            if let Some(setup) = TriangleSetup::new(&v, k) {
                out.push(Prepared {
                    object: (j + 1) as u8,
                    triangle: ti as u32,
                    setup,
                });
            }
        }
    }
    out
}

const ROWS_PER_TASK: usize = 8;

fn rasterize(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
    z_near: f64,
    z_far: f64,
    test: DepthTest,
) -> Grid<Fragment> {
    let (w, h) = (k.width as usize, k.height as usize);
    let tris = prepare(meshes, poses, k);
    let mut frags = vec![Fragment::EMPTY; w * h];
    if w == 0 {
        return Grid::from_vec(w, h, frags);
    }
    frags
        .par_chunks_mut(w * ROWS_PER_TASK)
        .enumerate()
        .for_each(|(chunk, rows)| {
            let y_begin = chunk * ROWS_PER_TASK;
            let y_end = y_begin + rows.len() / w;
            for t in &tris {
                let (x0, y0, x1, y1) = t.setup.bounds;
                for y in y0.max(y_begin)..=y1.min(y_end - 1) {
                    let row = &mut rows[(y - y_begin) * w..(y - y_begin + 1) * w];
                    for (x, frag) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                        let Some(z) = t.setup.hit(&pixel_ray(k, x, y)) else {
                            continue;
                        };
                        if z < z_near || z >= z_far {
                            continue;
                        }
                        let better = match test {
                            DepthTest::Nearest => z < frag.z,
                            DepthTest::Farthest => !frag.is_hit() || z > frag.z,
                        };
                        if better {
                            *frag = Fragment {
                                object: t.object,
                                triangle: t.triangle,
                                z,
                            };
                        }
                    }
                }
            }
        });
    Grid::from_vec(w, h, frags)
}

/// Nearest-surface fragments for several posed meshes (used for shading).
pub fn render_fragments(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
    z_near: f64,
    z_far: f64,
) -> Result<Grid<Fragment>, RasterError> {
    check_frustum(z_near, z_far)?;
    if meshes.len() > u8::MAX as usize {
        return Err(RasterError::TooManyObjects(meshes.len()));
    }
    Ok(rasterize(meshes, poses, k, z_near, z_far, DepthTest::Nearest))
}

/// Common silhouette index mask and normalized depth map of all objects.
pub fn render_scene(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
    z_near: f64,
    z_far: f64,
) -> Result<(SilhouetteMask, DepthMap), RasterError> {
    let frags = render_fragments(meshes, poses, k, z_near, z_far)?;
    let mask = frags.map(|f| f.object);
    let depth = frags.map(|f| {
        if f.is_hit() {
            normalized_depth(f.z, z_near, z_far)
        } else {
            NO_HIT
        }
    });
    Ok((mask, depth))
}

/// Normalized depth of the farthest surface of one object per pixel.
pub fn render_reverse_depth(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    z_near: f64,
    z_far: f64,
) -> Result<ReverseDepthMap, RasterError> {
    check_frustum(z_near, z_far)?;
    let frags = rasterize(&[mesh], std::slice::from_ref(pose), k, z_near, z_far, DepthTest::Farthest);
    Ok(frags.map(|f| {
        if f.is_hit() {
            normalized_depth(f.z, z_near, z_far)
        } else {
            NO_HIT
        }
    }))
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegionOfInterest {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl RegionOfInterest {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

pub fn roi_area(roi: &RegionOfInterest) -> usize {
    if roi.is_empty() {
        0
    } else {
        (roi.x1 - roi.x0) * (roi.y1 - roi.y0)
    }
}

/// Bounds of the projected bounding-box corners expanded by `band`, clipped to the
/// image. When some corners lie behind the camera the whole image is returned.
pub fn compute_roi(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    band: usize,
) -> Result<RegionOfInterest, RasterError> {
    let corners: Vec<Vec3> = mesh.bounding_corners().iter().map(|c| pose.apply(c)).collect();
    if corners.is_empty() || corners.iter().all(|c| c.z <= 0.0) {
        return Err(RasterError::NotVisible);
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if corners.iter().any(|c| c.z <= 0.0) {
        return Ok(RegionOfInterest::full(k.width as usize, k.height as usize));
    }
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) =
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &corners {
        let u = k.fx * c.x / c.z + k.cx;
        let v = k.fy * c.y / c.z + k.cy;
        lo_x = lo_x.min(u);
        hi_x = hi_x.max(u);
        lo_y = lo_y.min(v);
        hi_y = hi_y.max(v);
    }
    let b = band as f64;
    let clip = |v: f64, n: f64| v.clamp(0.0, n) as usize;
    let x0 = clip(lo_x.floor() - b, w);
    let y0 = clip(lo_y.floor() - b, h);
    let x1 = clip(hi_x.ceil() + 1.0 + b, w);
    let y1 = clip(hi_y.ceil() + 1.0 + b, h);
    Ok(RegionOfInterest {
        x0,
        y0,
        x1: x1.max(x0),
        y1: y1.max(y0),
    })
}

/// Writes an index mask as 8-bit grayscale PNG.
pub fn save_mask_png(mask: &SilhouetteMask, path: &Path) -> Result<(), image::ImageError> {
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.data().to_vec())
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
}

/// Writes a normalized depth map as 16-bit grayscale PNG (`depth × 65535`).
pub fn save_depth_png(depth: &DepthMap, path: &Path) -> Result<(), image::ImageError> {
    let data: Vec<u16> = depth
        .data()
        .iter()
        .map(|d| (d.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, data)
            .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric_depth;

    fn cam64() -> CameraIntrinsics {
        CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn facing_triangle(z: f64, s: f64) -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::new(-s, -s, z), Vec3::new(s, -s, z), Vec3::new(0.0, s, z)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn empty_scene() {
        let (mask, depth) = render_scene(&[], &[], &cam64(), 0.01, 100.0).unwrap();
        assert!(mask.data().iter().all(|&m| m == 0));
        assert!(depth.data().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn invalid_frustum() {
        let e = render_scene(&[], &[], &cam64(), 0.0, 1.0).unwrap_err();
        assert!(matches!(e, RasterError::InvalidFrustum { .. }));
        let e = render_reverse_depth(&facing_triangle(1.0, 0.1), &RigidTransform::identity(), &cam64(), 2.0, 1.0);
        assert!(e.is_err());
    }

    #[test]
    fn single_triangle_covers_center_with_plane_depth() {
        let tri = facing_triangle(2.0, 0.5);
        let (mask, depth) = render_scene(&[&tri], &[RigidTransform::identity()], &cam64(), 0.01, 100.0).unwrap();
        assert_eq!(mask.get(32, 32), 1);
        assert!((metric_depth(depth.get(32, 32), 0.01, 100.0) - 2.0).abs() < 1e-9);
        assert_eq!(mask.get(0, 0), 0);
        let rev = render_reverse_depth(&tri, &RigidTransform::identity(), &cam64(), 0.01, 100.0).unwrap();
        for (a, b) in rev.data().iter().zip(depth.data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn nearer_object_wins() {
        let far = facing_triangle(3.0, 1.0);
        let near = facing_triangle(2.0, 0.5);
        let id = RigidTransform::identity();
        let (mask, _) = render_scene(&[&far, &near], &[id, id], &cam64(), 0.01, 100.0).unwrap();
        assert_eq!(mask.get(32, 32), 2);
        let (mask, _) = render_scene(&[&near, &far], &[id, id], &cam64(), 0.01, 100.0).unwrap();
        assert_eq!(mask.get(32, 32), 1);
    }

    #[test]
    fn cube_reverse_depth_is_back_face() {
        let cube = TriangleMesh::cube(1.0, 2, [Vec3::zeros(); 6]);
        let pose = RigidTransform::from_translation(0.0, 0.0, 3.0);
        let k = cam64();
        let (_, depth) = render_scene(&[&cube], &[pose], &k, 0.01, 100.0).unwrap();
        let rev = render_reverse_depth(&cube, &pose, &k, 0.01, 100.0).unwrap();
        assert!((metric_depth(depth.get(32, 32), 0.01, 100.0) - 2.5).abs() < 1e-9);
        assert!((metric_depth(rev.get(32, 32), 0.01, 100.0) - 3.5).abs() < 1e-9);
    }

    #[test]
    fn shared_edges_are_covered_exactly_once() {
        // A quad split along its diagonal, exactly through pixel centers.
        let z = 1.0;
        let quad = TriangleMesh::new(
            vec![
                Vec3::new(-0.25, -0.25, z),
                Vec3::new(0.25, -0.25, z),
                Vec3::new(0.25, 0.25, z),
                Vec3::new(-0.25, 0.25, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let k = cam64();
        let frags = render_fragments(&[&quad], &[RigidTransform::identity()], &k, 0.01, 100.0).unwrap();
        for y in 17..=47 {
            for x in 17..=47 {
                assert!(frags.get(x, y).is_hit(), "hole at {x},{y}");
            }
        }
        // Count coverage per triangle along the diagonal: each pixel exactly once.
        let prepared = prepare(&[&quad], &[RigidTransform::identity()], &k);
        for i in 20..44 {
            let ray = pixel_ray(&k, i, i);
            let hits = prepared.iter().filter(|t| t.setup.hit(&ray).is_some()).count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn near_plane_cuts_per_pixel() {
        // Triangle straddling the camera plane still renders its visible part.
        let tri = TriangleMesh::new(
            vec![Vec3::new(-1.0, 0.2, -1.0), Vec3::new(1.0, 0.2, -1.0), Vec3::new(0.0, 0.2, 3.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (mask, depth) = render_scene(&[&tri], &[RigidTransform::identity()], &cam64(), 0.01, 100.0).unwrap();
        assert!(mask.data().iter().any(|&m| m == 1));
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(mask.get(x, y) != 0, depth.get(x, y) < 1.0);
            }
        }
    }

    #[test]
    fn roi_of_centered_cube() {
        let cube = TriangleMesh::cube(1.0, 1, [Vec3::zeros(); 6]);
        let pose = RigidTransform::from_translation(0.0, 0.0, 4.0);
        let k = cam64();
        let r0 = compute_roi(&cube, &pose, &k, 0).unwrap();
        let r8 = compute_roi(&cube, &pose, &k, 8).unwrap();
        // x1/y1 are exclusive bounds.
        assert_eq!(r0.x0 + r0.x1 - 1, 64);
        assert_eq!(r0.y0 + r0.y1 - 1, 64);
        assert_eq!((r0.x0 - r8.x0, r8.x1 - r0.x1), (8, 8));
        assert_eq!((r0.y0 - r8.y0, r8.y1 - r0.y1), (8, 8));
        let left = RigidTransform::from_translation(-50.0, 0.0, 4.0);
        let r = compute_roi(&cube, &left, &k, 8).unwrap();
        assert_eq!(roi_area(&r), 0);
        let behind = RigidTransform::from_translation(0.0, 0.0, -4.0);
        assert_eq!(compute_roi(&cube, &behind, &k, 8), Err(RasterError::NotVisible));
    }

    #[test]
    fn roi_area_counts() {
        let r = RegionOfInterest { x0: 5, y0: 5, x1: 15, y1: 15 };
        assert_eq!(roi_area(&r), 100);
        assert_eq!(roi_area(&RegionOfInterest::default()), 0);
    }

    #[test]
    fn png_dumps_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tri = facing_triangle(2.0, 0.5);
        let (mask, depth) = render_scene(&[&tri], &[RigidTransform::identity()], &cam64(), 0.01, 100.0).unwrap();
        save_mask_png(&mask, &dir.path().join("m.png")).unwrap();
        save_depth_png(&depth, &dir.path().join("d.png")).unwrap();
        let m = image::open(dir.path().join("m.png")).unwrap().to_luma8();
        assert_eq!(m.get_pixel(32, 32)[0], 1);
        let d = image::open(dir.path().join("d.png")).unwrap().to_luma16();
        assert_eq!(d.get_pixel(0, 0)[0], 65535);
    }
}
