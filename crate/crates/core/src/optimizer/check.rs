//! Finite-difference check of the analytic pixel Jacobians.
//!
//! The residual of a pixel is re-evaluated with the level set moved along with
//! the silhouette: for a twist `ξ` the surface point `X` projects to
//! `π(exp(ξ̂)X)`, so the pixel reads the embedding at `x − (π(exp(ξ̂)X) − π(X))`.
//! The embedding is interpolated by the biquadratic polynomial through the
//! 3×3 neighborhood of the pixel, whose gradient at the pixel equals the
//! central differences of the grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{pixel_jacobian, residual, OptimizeError};
use crate::geometry::{
    backproject, exp_twist, project_camera_point, CameraIntrinsics, Pixel, RigidTransform, TriangleMesh, Twist, Vec3,
};
use crate::grid::Grid;
use crate::levelset::{sdf_gradient, signed_distance_transform, SignedDistanceField};
use crate::raster::{render_scene, DEFAULT_Z_FAR, DEFAULT_Z_NEAR};

const SCENE_SIZE: u32 = 64;
const BAND: f64 = 8.0;
const PITCH: f64 = 1.2;
const STEP: f64 = 1e-5;

/// Biquadratic Lagrange interpolation of `grid` on the 3×3 neighborhood of
/// `(x, y)`, evaluated at offset `(du, dv)`. Its gradient at the center equals
/// the central differences of the grid.
pub fn local_biquadratic(grid: &Grid<f64>, x: usize, y: usize, du: f64, dv: f64) -> f64 {
    let weights = |t: f64| [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)];
    let (wu, wv) = (weights(du), weights(dv));
    let mut acc = 0.0;
    for (b, wy) in wv.iter().enumerate() {
        let mut row = 0.0;
        for (a, wx) in wu.iter().enumerate() {
            row += wx * grid.get(x + a - 1, y + b - 1);
        }
        acc += wy * row;
    }
    acc
}

/// Central differences of the residual of pixel `(x, y)` with respect to each
/// twist coordinate, moving the embedding with the projection of `surface_point`.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_jacobian(
    x: usize,
    y: usize,
    field: &SignedDistanceField,
    pf: f64,
    pb: f64,
    surface_point: &Vec3,
    k: &CameraIntrinsics,
    s: f64,
    h: f64,
) -> Result<[f64; 6], OptimizeError> {
    let base = project_camera_point(k, surface_point).map_err(|_| OptimizeError::DegenerateDepth(surface_point.z))?;
    let eval = |xi: &Twist| -> Result<f64, OptimizeError> {
        let moved = exp_twist(xi).apply(surface_point);
        let p = project_camera_point(k, &moved).map_err(|_| OptimizeError::DegenerateDepth(moved.z))?;
        let d = p - base;
        let phi = local_biquadratic(&field.phi, x, y, -d.x, -d.y);
        Ok(residual(pf, pb, phi, s))
    };
    let mut out = [0.0; 6];
    for (i, o) in out.iter_mut().enumerate() {
        let mut e = nalgebra::Vector6::zeros();
        e[i] = h;
        let plus = eval(&Twist::from_vector(&e))?;
        let minus = eval(&Twist::from_vector(&-e))?;
        *o = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}

/// Relative errors `‖J − J_fd‖ / ‖J_fd‖` collected over random scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheckReport {
    pub scenes: usize,
    pub samples: usize,
    pub median: f64,
    pub p99: f64,
    pub max: f64,
}

/// A rendered single-object scene with per-pixel random posteriors.
pub struct JacobianScene {
    pub k: CameraIntrinsics,
    pub depth: Grid<f64>,
    pub field: SignedDistanceField,
    pub pf: Grid<f64>,
    pub pb: Grid<f64>,
}

impl JacobianScene {
    /// Places `mesh` at a random pose about three diameters in front of a 64×64 camera.
    pub fn random<R: Rng>(mesh: &TriangleMesh, rng: &mut R) -> Option<Self> {
        let n = SCENE_SIZE;
        let k = CameraIntrinsics::new(100.0, 100.0, n as f64 / 2.0, n as f64 / 2.0, n, n).ok()?;
        let (lo, hi) = mesh.bounding_box()?;
        let center = (lo + hi) * 0.5;
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let rot = RigidTransform::from_axis_angle(&axis, angle);
        let d = mesh.diameter.max(1e-6);
        let z = d * rng.random_range(2.5..3.5);
        let offset = Vec3::new(rng.random_range(-0.2..0.2) * d, rng.random_range(-0.2..0.2) * d, z);
        let pose = RigidTransform::new(rot.rotation, offset - rot.rotation * center);
        let (mask, depth) = render_scene(&[mesh], &[pose], &k, DEFAULT_Z_NEAR, DEFAULT_Z_FAR).ok()?;
        let field = signed_distance_transform(&mask, 1, BAND).ok()?;
        let (w, h) = (n as usize, n as usize);
        let mut pf = Grid::new(w, h, 0.0);
        let mut pb = Grid::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                pf.set(x, y, rng.random_range(0.0..1.0));
                pb.set(x, y, rng.random_range(0.0..1.0));
            }
        }
        Some(Self { k, depth, field, pf, pb })
    }

    /// Front surface point used for pixel `(x, y)`.
    pub fn surface_point(&self, x: usize, y: usize) -> Vec3 {
        let (sx, sy) = if self.field.phi_at(x, y) <= 0.0 { (x, y) } else { self.field.closest_at(x, y) };
        backproject(&Pixel::new(sx as f64, sy as f64), self.depth.get(sx, sy), &self.k, DEFAULT_Z_NEAR, DEFAULT_Z_FAR)
    }

    /// Relative errors at banded, well-conditioned pixels.
    pub fn relative_errors(&self, flip_sign: bool) -> Vec<f64> {
        let (w, h) = (self.field.width(), self.field.height());
        let mut out = Vec::new();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                if !self.field.in_band(x, y) {
                    continue;
                }
                let (pf, pb) = (self.pf.get(x, y), self.pb.get(x, y));
                if (pf - pb).abs() < 0.05 {
                    continue;
                }
                let Ok([gx, gy]) = sdf_gradient(&self.field, x, y) else { continue };
                if gx.hypot(gy) <= 0.5 {
                    continue;
                }
                let p = self.surface_point(x, y);
                if p.z <= DEFAULT_Z_NEAR {
                    continue;
                }
                let (Ok(mut ja), Ok(jn)) = (
                    pixel_jacobian(x, y, &self.field, pf, pb, &p, &self.k, PITCH),
                    finite_difference_jacobian(x, y, &self.field, pf, pb, &p, &self.k, PITCH, STEP),
                ) else {
                    continue;
                };
                if flip_sign {
                    ja.iter_mut().for_each(|v| *v = -*v);
                }
                let num: f64 = ja.iter().zip(&jn).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let den: f64 = jn.iter().map(|b| b * b).sum::<f64>().sqrt();
                if den > 0.0 {
                    out.push(num / den);
                }
            }
        }
        out
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Compares analytic and finite-difference Jacobians on `scenes` random scenes.
/// Without a mesh the scenes alternate between a sphere and a cube.
pub fn check_random_scenes(
    mesh: Option<&TriangleMesh>,
    scenes: usize,
    seed: u64,
    flip_sign: bool,
) -> Result<JacobianCheckReport, OptimizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sphere = TriangleMesh::uv_sphere(0.05, 12, 18);
    let grey = Vec3::new(0.5, 0.5, 0.5);
    let cube = TriangleMesh::cube(0.08, 2, [grey; 6]);
    let mut errors = Vec::new();
    let mut made = 0;
    let mut attempts = 0;
    while made < scenes && attempts < scenes * 20 + 20 {
        attempts += 1;
        let m = match mesh {
            Some(m) => m,
            None if made % 2 == 0 => &sphere,
            None => &cube,
        };
        let Some(scene) = JacobianScene::random(m, &mut rng) else { continue };
        errors.extend(scene.relative_errors(flip_sign));
        made += 1;
    }
    if errors.is_empty() {
        return Err(OptimizeError::EmptyAccumulation);
    }
    errors.sort_by(f64::total_cmp);
    Ok(JacobianCheckReport {
        scenes: made,
        samples: errors.len(),
        median: percentile(&errors, 0.5),
        p99: percentile(&errors, 0.99),
        max: *errors.last().unwrap(),
    })
}
