//! Reweighted Gauss-Newton pose refinement over the banded region cost.
//!
//! Per pixel `x` in the ±band around the contour the residual is
//! `F = −log(H_e(Φ)·P̄_f + (1 − H_e(Φ))·P̄_b)` and its twist derivative is
//!
//! ```text
//! J = (P̄_b − P̄_f) / (H_e(Φ)(P̄_f − P̄_b) + P̄_b) · δ_e(Φ) · ∇Φ · ∂π/∂X · [−[X]× | I]
//! ```
//!
//! evaluated at the surface point `X` that generated the pixel (inside) or its
//! closest contour pixel (outside). Each pixel contributes once with the front
//! surface point and once with the back surface point. Steps solve
//! `(Σψ JᵀJ + μI) Δξ = −ΣJᵀ` with `ψ = 1/F` and update `T ← exp(Δξ̂)·T`.

mod check;
mod settings;

pub use check::{
    check_random_scenes, local_biquadratic, finite_difference_jacobian, JacobianCheckReport, JacobianScene,
};
pub use settings::{OptimizationSettings, REFERENCE_PIXELS};

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;

use crate::frame::{pyramid, RgbImage};
use crate::geometry::{
    backproject, exp_twist, metric_depth, scale_intrinsics, CameraIntrinsics, MeshPair, Pixel, RigidTransform,
    Twist, Vec3,
};
use crate::levelset::{sdf_gradient, signed_distance_transform, smoothed_dirac, smoothed_heaviside, SignedDistanceField};
use crate::raster::{
    compute_roi, render_reverse_depth, render_scene, roi_area, DepthMap, RasterError, RegionOfInterest,
    ReverseDepthMap, SilhouetteMask,
};
use crate::segmentation::{posterior_maps, ActiveRegionSet, PosteriorMaps, TclcModel, POSTERIOR_FLOOR};

/// Smallest residual used for the IRLS weight `ψ = 1/F`.
pub const MIN_RESIDUAL: f64 = 1e-9;
/// Smallest camera-frame depth accepted by [`pixel_jacobian`].
pub const MIN_DEPTH: f64 = 1e-9;
/// Rows per accumulation task.
/// Offset applied to the embedding so the zero level lies midway between
/// contour pixels and their outside neighbours.
pub const CONTOUR_OFFSET: f64 = 0.5;
const ROW_CHUNK: usize = 4;
/// Terms per reduction chunk.
const SUM_CHUNK: usize = 256;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("frame is {frame:?} but the camera expects {camera:?}")]
    DimensionMismatch { frame: (u32, u32), camera: (u32, u32) },
    #[error("surface point depth {0} is not positive")]
    DegenerateDepth(f64),
    #[error("no admissible pixel in the contour band")]
    EmptyAccumulation,
    #[error("normal equations are not positive definite")]
    SingularSystem,
    #[error("mean residual grew by a factor of {ratio:.3} on pyramid level {level}")]
    TrackingDiverged { level: usize, ratio: f64 },
    #[error("object is not visible")]
    NotVisible,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// `Σ ψ JᵀJ`, `Σ Jᵀ` and the number of contributing terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub hessian: Matrix6<f64>,
    pub gradient: Vector6<f64>,
    pub pixel_count: usize,
}

impl Default for NormalEquations {
    fn default() -> Self {
        Self {
            hessian: Matrix6::zeros(),
            gradient: Vector6::zeros(),
            pixel_count: 0,
        }
    }
}

impl NormalEquations {
    /// Adds one term to the upper triangle and the gradient.
    #[inline]
    fn add_upper(&mut self, psi: f64, j: &[f64; 6]) {
        for r in 0..6 {
            let w = psi * j[r];
            for c in r..6 {
                self.hessian[(r, c)] += w * j[c];
            }
            self.gradient[r] += j[r];
        }
        self.pixel_count += 1;
    }

    fn merge_upper(&mut self, other: &Self) {
        for r in 0..6 {
            for c in r..6 {
                self.hessian[(r, c)] += other.hessian[(r, c)];
            }
        }
        self.gradient += other.gradient;
        self.pixel_count += other.pixel_count;
    }

    fn mirror(&mut self) {
        for r in 1..6 {
            for c in 0..r {
                self.hessian[(r, c)] = self.hessian[(c, r)];
            }
        }
    }
}

/// One Jacobian term of a banded pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelResidual {
    pub x: usize,
    pub y: usize,
    /// Residual, floored at [`MIN_RESIDUAL`].
    pub f: f64,
    /// `1 / f`.
    pub psi: f64,
    pub jacobian: [f64; 6],
}

/// `−log(H_e(φ)·P̄_f + (1 − H_e(φ))·P̄_b)` with the argument floored at 1e-12.
pub fn residual(pf: f64, pb: f64, phi: f64, s: f64) -> f64 {
    let he = smoothed_heaviside(phi, s);
    -(he * pf + (1.0 - he) * pb).max(POSTERIOR_FLOOR).ln()
}

/// `∂F/∂ξ` of pixel `(x, y)` for the camera-frame surface point `surface_point`.
#[allow(clippy::too_many_arguments)]
pub fn pixel_jacobian(
    x: usize,
    y: usize,
    field: &SignedDistanceField,
    pf: f64,
    pb: f64,
    surface_point: &Vec3,
    k: &CameraIntrinsics,
    s: f64,
) -> Result<[f64; 6], OptimizeError> {
    let [gx, gy] = sdf_gradient(field, x, y).map_err(|_| OptimizeError::EmptyAccumulation)?;
    jacobian_from_gradient(field.phi_at(x, y), [gx, gy], pf, pb, surface_point, k, s)
}

fn jacobian_from_gradient(
    phi: f64,
    grad: [f64; 2],
    pf: f64,
    pb: f64,
    p: &Vec3,
    k: &CameraIntrinsics,
    s: f64,
) -> Result<[f64; 6], OptimizeError> {
    let (xx, yy, z) = (p.x, p.y, p.z);
    if !(z > MIN_DEPTH) {
        return Err(OptimizeError::DegenerateDepth(z));
    }
    let he = smoothed_heaviside(phi, s);
    let denom = (he * (pf - pb) + pb).max(POSTERIOR_FLOOR);
    let scale = (pb - pf) / denom * smoothed_dirac(phi, s);
    // ∇Φ · ∂π/∂X
    let iz = 1.0 / z;
    let a = scale * grad[0] * k.fx * iz;
    let b = scale * grad[1] * k.fy * iz;
    let c = -(a * xx + b * yy) * iz;
    // · [−[X]× | I]
    Ok([
        -b * z + c * yy,
        a * z - c * xx,
        -a * yy + b * xx,
        a,
        b,
        c,
    ])
}

/// Whether the distance value of pixel `(x, y)` for object index `j` (mask value)
/// is free of occlusion by another object.
pub fn pixel_admissible(
    x: usize,
    y: usize,
    j: u8,
    mask: &SilhouetteMask,
    depth: &DepthMap,
    field: &SignedDistanceField,
    z_near: f64,
    z_far: f64,
) -> bool {
    let (cx, cy) = field.closest_at(x, y);
    let contour_z = metric_depth(depth.get(cx, cy), z_near, z_far);
    let occludes = |px: usize, py: usize| {
        let other = mask.get(px, py);
        other != 0 && other != j && metric_depth(depth.get(px, py), z_near, z_far) < contour_z
    };
    if field.phi_at(x, y) > 0.0 {
        return !occludes(x, y);
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            continue;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if mask.get(nx, ny) != j && occludes(nx, ny) {
            return false;
        }
    }
    true
}

/// Deterministic `Σ ψ JᵀJ`, `Σ Jᵀ` over `terms`: fixed-size chunks are summed
/// in parallel and combined in order, so the result does not depend on the
/// number of worker threads.
pub fn accumulate(terms: &[PixelResidual]) -> Result<NormalEquations, OptimizeError> {
    if terms.is_empty() {
        return Err(OptimizeError::EmptyAccumulation);
    }
    let partial: Vec<NormalEquations> = terms
        .par_chunks(SUM_CHUNK)
        .map(|chunk| {
            let mut n = NormalEquations::default();
            for t in chunk {
                n.add_upper(t.psi, &t.jacobian);
            }
            n
        })
        .collect();
    let mut total = NormalEquations::default();
    for p in &partial {
        total.merge_upper(p);
    }
    total.mirror();
    Ok(total)
}

/// Solves `(H + damping·I) Δξ = −g` by Cholesky factorization.
pub fn solve_step(n: &NormalEquations, damping: f64) -> Result<Twist, OptimizeError> {
    let a = n.hessian + Matrix6::identity() * damping;
    let chol = a.cholesky().ok_or(OptimizeError::SingularSystem)?;
    let delta = chol.solve(&(-n.gradient));
    if delta.iter().all(|v| v.is_finite()) {
        Ok(Twist::from_vector(&delta))
    } else {
        Err(OptimizeError::SingularSystem)
    }
}

/// Default Levenberg damping `factor · trace(H) / 6`.
pub fn default_damping(n: &NormalEquations, factor: f64) -> f64 {
    factor * n.hessian.trace() / 6.0
}

/// Everything needed to evaluate the banded terms of one object at one level.
pub struct ObjectView<'a> {
    /// Mask value of the object.
    pub index: u8,
    pub mask: &'a SilhouetteMask,
    pub depth: &'a DepthMap,
    pub reverse_depth: &'a ReverseDepthMap,
    pub field: &'a SignedDistanceField,
    pub posteriors: &'a PosteriorMaps,
    pub roi: RegionOfInterest,
    pub k: &'a CameraIntrinsics,
}

/// Residual terms of every admissible banded pixel in the ROI (two per pixel,
/// front and back surface) and the mean residual over those pixels.
pub fn object_terms(view: &ObjectView<'_>, settings: &OptimizationSettings) -> (Vec<PixelResidual>, f64) {
    let ObjectView {
        index,
        mask,
        depth,
        reverse_depth,
        field,
        posteriors,
        roi,
        k,
    } = *view;
    let (w, h) = (mask.width(), mask.height());
    let s = settings.heaviside_pitch;
    let (zn, zf) = (settings.z_near, settings.z_far);
    let y0 = roi.y0.max(1);
    let y1 = roi.y1.min(h.saturating_sub(1));
    let x0 = roi.x0.max(1);
    let x1 = roi.x1.min(w.saturating_sub(1));
    if y0 >= y1 || x0 >= x1 {
        return (Vec::new(), 0.0);
    }
    let chunks: Vec<(Vec<PixelResidual>, f64, usize)> = (y0..y1)
        .step_by(ROW_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|ys| {
            let mut out = Vec::new();
            let (mut fsum, mut count) = (0.0, 0usize);
            for y in ys..(ys + ROW_CHUNK).min(y1) {
                for x in x0..x1 {
                    if !field.in_band(x, y) {
                        continue;
                    }
                    let Some((pf, pb)) = posteriors.get(x, y) else { continue };
                    let total = pf + pb;
                    if total <= 0.0 {
                        continue;
                    }
                    let (pf, pb) = (pf / total, pb / total);
                    if settings.occlusion_handling && !pixel_admissible(x, y, index, mask, depth, field, zn, zf) {
                        continue;
                    }
                    let raw = field.phi_at(x, y);
                    let phi = raw - CONTOUR_OFFSET;
                    let Ok(grad) = sdf_gradient(field, x, y) else { continue };
                    let (sx, sy) = if raw <= 0.0 { (x, y) } else { field.closest_at(x, y) };
                    let px = Pixel::new(sx as f64, sy as f64);
                    let front = backproject(&px, depth.get(sx, sy), k, zn, zf);
                    let back = backproject(&px, reverse_depth.get(sx, sy), k, zn, zf);
                    let (Ok(jf), Ok(jb)) = (
                        jacobian_from_gradient(phi, grad, pf, pb, &front, k, s),
                        jacobian_from_gradient(phi, grad, pf, pb, &back, k, s),
                    ) else {
                        continue;
                    };
                    let f = residual(pf, pb, phi, s).max(MIN_RESIDUAL);
                    fsum += f;
                    count += 1;
                    for jacobian in [jf, jb] {
                        out.push(PixelResidual {
                            x,
                            y,
                            f,
                            psi: 1.0 / f,
                            jacobian,
                        });
                    }
                }
            }
            (out, fsum, count)
        })
        .collect();
    let mut terms = Vec::new();
    let (mut fsum, mut count) = (0.0, 0usize);
    for (t, s, c) in chunks {
        terms.extend(t);
        fsum += s;
        count += c;
    }
    let mean = if count > 0 { fsum / count as f64 } else { 0.0 };
    (terms, mean)
}

/// One tracked object as seen by [`optimize`]: geometry, appearance model and
/// the active regions frozen for this frame.
#[derive(Debug, Clone, Copy)]
pub struct ObjectInput<'a> {
    pub meshes: &'a MeshPair,
    pub model: &'a TclcModel,
    pub active: &'a ActiveRegionSet,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Progress {
    Pending,
    Updated,
    Failed,
}

/// Coarse-to-fine refinement of all object poses on `frame`. Errors are
/// reported per object; a failing object stops being rendered and optimized
/// but does not affect the others.
pub fn optimize(
    frame: &RgbImage,
    objects: &[ObjectInput<'_>],
    k: &CameraIntrinsics,
    settings: &OptimizationSettings,
) -> Result<Vec<Result<RigidTransform, OptimizeError>>, OptimizeError> {
    settings.validate()?;
    if (frame.width(), frame.height()) != (k.width, k.height) {
        return Err(OptimizeError::DimensionMismatch {
            frame: (frame.width(), frame.height()),
            camera: (k.width, k.height),
        });
    }
    if objects.len() >= u8::MAX as usize {
        return Err(RasterError::TooManyObjects(objects.len()).into());
    }
    let levels = settings.levels();
    let images = pyramid(frame, levels);
    let mut poses: Vec<RigidTransform> = objects.iter().map(|o| o.pose).collect();
    let mut errors: Vec<Option<OptimizeError>> = vec![None; objects.len()];
    let mut progress = vec![Progress::Pending; objects.len()];
    let mut last_skip: Vec<Option<OptimizeError>> = vec![None; objects.len()];

    for level in (1..=levels).rev() {
        let iterations = settings.pyramid_iterations[levels - level];
        if iterations == 0 {
            continue;
        }
        let img = &images[level - 1];
        let kl = scale_intrinsics(k, level as u32);
        let scale = 0.5f64.powi(level as i32 - 1);
        let threshold = settings.roi_threshold(k.pixel_count());
        let maps: Vec<Option<PosteriorMaps>> = objects
            .iter()
            .enumerate()
            .map(|(j, o)| (errors[j].is_none()).then(|| posterior_maps(img, o.model, o.active, scale)))
            .collect();
        let mut skipped = vec![false; objects.len()];
        let mut first_mean: Vec<Option<f64>> = vec![None; objects.len()];

        for _ in 0..iterations {
            let live: Vec<usize> = (0..objects.len()).filter(|&j| errors[j].is_none()).collect();
            if live.iter().all(|&j| skipped[j]) {
                break;
            }
            let meshes: Vec<_> = live.iter().map(|&j| &objects[j].meshes.full).collect();
            let live_poses: Vec<_> = live.iter().map(|&j| poses[j]).collect();
            let (mask, depth) = render_scene(&meshes, &live_poses, &kl, settings.z_near, settings.z_far)?;

            for (slot, &j) in live.iter().enumerate() {
                if skipped[j] {
                    continue;
                }
                let index = (slot + 1) as u8;
                let mesh = &objects[j].meshes.full;
                let roi = match compute_roi(mesh, &poses[j], &kl, settings.band) {
                    Ok(r) => r,
                    Err(RasterError::NotVisible) => {
                        errors[j] = Some(OptimizeError::NotVisible);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                if (roi_area(&roi) as f64) < threshold {
                    skipped[j] = true;
                    continue;
                }
                let Ok(field) = signed_distance_transform(&mask, index, settings.band as f64) else {
                    skipped[j] = true;
                    last_skip[j] = Some(OptimizeError::NotVisible);
                    continue;
                };
                let reverse = render_reverse_depth(mesh, &poses[j], &kl, settings.z_near, settings.z_far)?;
                let view = ObjectView {
                    index,
                    mask: &mask,
                    depth: &depth,
                    reverse_depth: &reverse,
                    field: &field,
                    posteriors: maps[j].as_ref().expect("maps exist for live objects"),
                    roi,
                    k: &kl,
                };
                let (terms, mean) = object_terms(&view, settings);
                let normal = match accumulate(&terms) {
                    Ok(n) => n,
                    Err(e) => {
                        skipped[j] = true;
                        last_skip[j] = Some(e);
                        continue;
                    }
                };
                match first_mean[j] {
                    None => first_mean[j] = Some(mean),
                    Some(m0) if m0 > 0.0 && mean > settings.divergence_ratio * m0 => {
                        errors[j] = Some(OptimizeError::TrackingDiverged {
                            level,
                            ratio: mean / m0,
                        });
                        progress[j] = Progress::Failed;
                        continue;
                    }
                    Some(_) => {}
                }
                let step = solve_step(&normal, default_damping(&normal, settings.damping))
                    .and_then(|d| if d.is_finite() { Ok(d) } else { Err(OptimizeError::SingularSystem) });
                match step {
                    Ok(delta) => {
                        let next = exp_twist(&delta).compose(&poses[j]);
                        if next.is_finite() {
                            poses[j] = next;
                            progress[j] = Progress::Updated;
                        } else {
                            errors[j] = Some(OptimizeError::TrackingDiverged { level, ratio: f64::INFINITY });
                        }
                    }
                    Err(e) => errors[j] = Some(e),
                }
            }
        }
    }

    Ok((0..objects.len())
        .map(|j| match (&errors[j], progress[j]) {
            (Some(e), _) => Err(e.clone()),
            (None, Progress::Pending) => match &last_skip[j] {
                Some(e) => Err(e.clone()),
                None => Ok(poses[j]),
            },
            (None, _) => Ok(poses[j]),
        })
        .collect())
}
