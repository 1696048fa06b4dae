//! Semi-synthetic sequences: Lambertian renderings of posed meshes composited
//! onto background images, written with exact ground-truth poses.
//!
//! Layout of a sequence directory:
//!
//! ```text
//! frames/000000.png ...   8-bit RGB frames
//! poses.txt               per frame and object: id, 9 row-major rotation entries, t (m)
//! camera.txt              fx fy cx cy width height
//! meta.txt                key = value lines (variant flags, seed, counts)
//! objects/<id>.obj        the rendered meshes
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::Rgb;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::frame::{save_rgb, RgbImage};
use crate::geometry::{CameraIntrinsics, GeometryError, MeshPair, RigidTransform, TriangleMesh, Vec3};
use crate::grid::Grid;
use crate::raster::{pixel_ray, render_fragments, RasterError, TriangleSetup, DEFAULT_Z_FAR, DEFAULT_Z_NEAR};

/// Lower bound of the Lambertian factor.
pub const AMBIENT: f64 = 0.2;
/// Standard deviation of the 3×3 compositing blur.
pub const BLUR_SIGMA: f64 = 0.85;
/// Albedo used for meshes without vertex colors.
pub const DEFAULT_ALBEDO: f64 = 0.7;
/// Rotation of the dynamic light about the camera's vertical axis per frame.
pub const LIGHT_DEGREES_PER_FRAME: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("object is not visible")]
    NotVisible,
    #[error("dimension mismatch: background {background:?}, sprite {sprite:?}")]
    DimensionMismatch { background: (u32, u32), sprite: (u32, u32) },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("invalid variant: {0}")]
    Variant(String),
    #[error("light direction must be a unit vector")]
    LightDirection,
    #[error("no background images")]
    NoBackground,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Keyframed rigid motion: rotations are slerped, translations lerped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    keyframes: Vec<(usize, RigidTransform)>,
}

impl TrajectorySpec {
    pub fn new(keyframes: Vec<(usize, RigidTransform)>) -> Result<Self, SynthError> {
        match keyframes.first() {
            None => return Err(SynthError::Trajectory("no keyframes".into())),
            Some((i, _)) if *i != 0 => return Err(SynthError::Trajectory(format!("first keyframe index is {i}, not 0"))),
            _ => {}
        }
        if let Some(w) = keyframes.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(SynthError::Trajectory(format!(
                "keyframe indices not strictly increasing: {} then {}",
                w[0].0, w[1].0
            )));
        }
        if keyframes.iter().any(|(_, p)| !p.is_finite()) {
            return Err(SynthError::Trajectory("non-finite keyframe pose".into()));
        }
        Ok(Self { keyframes })
    }

    /// A single pose held for every frame.
    pub fn constant(pose: RigidTransform) -> Self {
        Self {
            keyframes: vec![(0, pose)],
        }
    }

    pub fn keyframes(&self) -> &[(usize, RigidTransform)] {
        &self.keyframes
    }

    pub fn last_index(&self) -> usize {
        self.keyframes.last().map_or(0, |k| k.0)
    }

    /// Whether frames `0..frames` lie within the keyframed range. A single
    /// keyframe covers any length.
    pub fn covers(&self, frames: usize) -> bool {
        self.keyframes.len() == 1 || frames <= self.last_index() + 1
    }

    /// Pose at `frame`; keyframes are returned exactly, later frames hold the last pose.
    pub fn pose_at(&self, frame: usize) -> RigidTransform {
        let i = self.keyframes.partition_point(|k| k.0 <= frame);
        let (f0, p0) = self.keyframes[i - 1];
        if f0 == frame || i == self.keyframes.len() {
            return p0;
        }
        let (f1, p1) = self.keyframes[i];
        let t = (frame - f0) as f64 / (f1 - f0) as f64;
        let q0 = UnitQuaternion::from_matrix(&p0.rotation);
        let q1 = UnitQuaternion::from_matrix(&p1.rotation);
        let q = q0.try_slerp(&q1, t, 1e-12).unwrap_or(q0);
        RigidTransform::new(*q.to_rotation_matrix().matrix(), p0.translation.lerp(&p1.translation, t))
    }

    /// Continuous 6DOF motion in front of the camera, keyframed every `step`
    /// frames. The object starts corner-on (three faces of a cube visible),
    /// spins about the optical axis, rocks up to ±20° about the image axes
    /// and drifts within a box scaled to `distance`. Angular speed is about
    /// `degrees_per_frame`; `seed` sets the phases.
    pub fn tumble(distance: f64, frames: usize, step: usize, degrees_per_frame: f64, seed: u64) -> Self {
        use std::f64::consts::TAU;
        let step = step.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
        let corner = UnitQuaternion::rotation_between(&Vector3::new(1.0, 1.0, 1.0), &Vector3::new(0.0, 0.0, -1.0))
            .unwrap_or_else(UnitQuaternion::identity);
        let amplitude = 20f64.to_radians();
        // Rocking periods long enough that its angular speed stays below the spin rate.
        let period = (2.0 * amplitude.to_degrees() * std::f64::consts::PI / degrees_per_frame.max(1e-3)).max(20.0);
        let pose = |i: usize| {
            let f = i as f64;
            let spin = (0.6 * degrees_per_frame * f).to_radians();
            let rx = amplitude * (TAU * f / period + phases[0]).sin() - amplitude * phases[0].sin();
            let ry = amplitude * (TAU * f / (1.37 * period) + phases[1]).sin() - amplitude * phases[1].sin();
            let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), spin)
                * UnitQuaternion::from_euler_angles(rx, ry, 0.0)
                * corner;
            let a = TAU * f / frames.max(2) as f64;
            let t = Vec3::new(
                0.12 * distance * (a + phases[2]).sin(),
                0.08 * distance * (2.0 * a + phases[3]).sin(),
                distance * (1.0 + 0.1 * (a.cos() - 1.0)),
            );
            RigidTransform::new(*q.to_rotation_matrix().matrix(), t)
        };
        let mut keyframes = vec![(0, pose(0))];
        let mut index = 0;
        while index + 1 < frames {
            index += step;
            keyframes.push((index, pose(index)));
        }
        Self { keyframes }
    }

    /// Circular orbit around the translation of `target`, tilted so the
    /// orbiting object passes between the target and the camera.
    pub fn orbit(target: &TrajectorySpec, radius: f64, period: usize, frames: usize) -> Self {
        let period = period.max(2) as f64;
        let keyframes = (0..frames.max(1))
            .map(|i| {
                let c = target.pose_at(i).translation;
                let a = i as f64 / period * std::f64::consts::TAU;
                let offset = Vec3::new(radius * a.cos(), 0.25 * radius * a.sin(), -radius * a.sin());
                let spin = RigidTransform::from_axis_angle(&Vec3::new(0.2, 1.0, 0.1), a);
                (i, RigidTransform::new(spin.rotation, c + offset))
            })
            .collect();
        Self { keyframes }
    }
}

/// A second rendered object that moves independently.
#[derive(Debug, Clone)]
pub struct Occluder {
    pub meshes: MeshPair,
    pub trajectory: TrajectorySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Regular,
    DynamicLight,
    Noisy,
    Occlusion,
}

impl VariantKind {
    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Regular => "regular",
            VariantKind::DynamicLight => "dynlight",
            VariantKind::Noisy => "noisy",
            VariantKind::Occlusion => "occlusion",
        }
    }
}

impl FromStr for VariantKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(VariantKind::Regular),
            "dynlight" => Ok(VariantKind::DynamicLight),
            "noisy" => Ok(VariantKind::Noisy),
            "occlusion" => Ok(VariantKind::Occlusion),
            other => Err(SynthError::Variant(format!("unknown variant {other:?}"))),
        }
    }
}

/// Rendering flags of a sequence.
#[derive(Debug, Clone)]
pub struct SequenceVariant {
    pub kind: VariantKind,
    pub dynamic_light: bool,
    /// Per-channel noise standard deviation in intensity units.
    pub noise_sigma: f64,
    pub occluder: Option<Occluder>,
}

/// Noise level of the noisy and occlusion variants.
pub const DEFAULT_NOISE_SIGMA: f64 = 8.0;

impl SequenceVariant {
    pub fn regular() -> Self {
        Self {
            kind: VariantKind::Regular,
            dynamic_light: false,
            noise_sigma: 0.0,
            occluder: None,
        }
    }

    pub fn dynamic_light() -> Self {
        Self {
            kind: VariantKind::DynamicLight,
            dynamic_light: true,
            ..Self::regular()
        }
    }

    pub fn noisy(noise_sigma: f64) -> Self {
        Self {
            kind: VariantKind::Noisy,
            dynamic_light: true,
            noise_sigma,
            occluder: None,
        }
    }

    pub fn occlusion(occluder: Occluder, noise_sigma: f64) -> Self {
        Self {
            kind: VariantKind::Occlusion,
            dynamic_light: true,
            noise_sigma,
            occluder: Some(occluder),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::Variant(format!("noise sigma {} is invalid", self.noise_sigma)));
        }
        if matches!(self.kind, VariantKind::Regular | VariantKind::DynamicLight) && self.noise_sigma != 0.0 {
            return Err(SynthError::Variant(format!("{} variant must be noise free", self.kind.name())));
        }
        if (self.kind == VariantKind::Occlusion) != self.occluder.is_some() {
            return Err(SynthError::Variant("only the occlusion variant carries an occluder".into()));
        }
        Ok(())
    }
}

/// Shaded rendering with its coverage (1-based object index, 0 = empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub color: RgbImage,
    pub coverage: Grid<u8>,
}

/// Lambertian rendering of one mesh.
pub fn shade(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    light_direction: &Vec3,
) -> Result<Sprite, SynthError> {
    shade_scene(&[mesh], std::slice::from_ref(pose), k, light_direction)
}

/// Lambertian rendering of several meshes with mutual depth testing. Each
/// pixel gets `albedo · max(AMBIENT, n·l)` with the flat triangle normal
/// turned towards the camera and the albedo interpolated from vertex colors.
pub fn shade_scene(
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
    light_direction: &Vec3,
) -> Result<Sprite, SynthError> {
    if (light_direction.norm() - 1.0).abs() > 1e-6 {
        return Err(SynthError::LightDirection);
    }
    let frags = render_fragments(meshes, poses, k, DEFAULT_Z_NEAR, DEFAULT_Z_FAR)?;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut color = RgbImage::new(k.width, k.height);
    let mut coverage = Grid::new(w, h, 0u8);
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            let f = frags.get(x, y);
            if !f.is_hit() {
                continue;
            }
            any = true;
            let j = f.object as usize - 1;
            let (mesh, pose) = (meshes[j], &poses[j]);
            let t = mesh.triangles[f.triangle as usize];
            let v = t.map(|i| pose.apply(&mesh.vertices[i as usize]));
            let mut n = (v[1] - v[0]).cross(&(v[2] - v[0]));
            let ray = pixel_ray(k, x, y);
            if n.dot(&ray) > 0.0 {
                n = -n;
            }
            let n = n.normalize();
            let albedo = if mesh.colors.is_empty() {
                Vec3::repeat(DEFAULT_ALBEDO)
            } else {
                let b = TriangleSetup::new(&v, k).map_or([1.0 / 3.0; 3], |s| s.barycentric(&ray));
                t.iter().zip(b).map(|(&i, w)| mesh.colors[i as usize] * w).sum()
            };
            let c = albedo * n.dot(light_direction).max(AMBIENT) * 255.0;
            color.put_pixel(x as u32, y as u32, Rgb([to_u8(c.x), to_u8(c.y), to_u8(c.z)]));
            coverage.set(x, y, f.object);
        }
    }
    if !any {
        return Err(SynthError::NotVisible);
    }
    Ok(Sprite { color, coverage })
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn blur_kernel() -> [f64; 3] {
    let e = (-1.0 / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp();
    let s = 1.0 + 2.0 * e;
    [e / s, 1.0 / s, e / s]
}

/// Pastes `sprite` over `background`, blurs the object region plus a one pixel
/// ring with a normalized 3×3 Gaussian, then adds clamped Gaussian noise.
pub fn composite(background: &RgbImage, sprite: &Sprite, noise_sigma: f64, seed: u64) -> Result<RgbImage, SynthError> {
    let (w, h) = background.dimensions();
    let cov = &sprite.coverage;
    if sprite.color.dimensions() != (w, h) || (cov.width(), cov.height()) != (w as usize, h as usize) {
        return Err(SynthError::DimensionMismatch {
            background: (w, h),
            sprite: sprite.color.dimensions(),
        });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::Variant(format!("noise sigma {noise_sigma} is invalid")));
    }
    let mut pasted = background.clone();
    for (x, y, p) in pasted.enumerate_pixels_mut() {
        if cov.get(x as usize, y as usize) != 0 {
            *p = *sprite.color.get_pixel(x, y);
        }
    }
    let near_object = |x: i64, y: i64| {
        (-1..=1).any(|dy| (-1..=1).any(|dx| cov.get_checked(x + dx, y + dy).is_some_and(|v| v != 0)))
    };
    let kernel = blur_kernel();
    let mut out = pasted.clone();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !near_object(x, y) {
                continue;
            }
            let mut acc = [0.0; 3];
            for (dy, wy) in (-1..=1).zip(kernel) {
                for (dx, wx) in (-1..=1).zip(kernel) {
                    let sx = (x + dx).clamp(0, w as i64 - 1) as u32;
                    let sy = (y + dy).clamp(0, h as i64 - 1) as u32;
                    let p = pasted.get_pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += wx * wy * p[c] as f64;
                    }
                }
            }
            out.put_pixel(x as u32, y as u32, Rgb(acc.map(to_u8)));
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| SynthError::Variant(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in out.pixels_mut() {
            for c in p.0.iter_mut() {
                *c = to_u8(*c as f64 + normal.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

/// Smooth multi-octave color noise used when no background images are given.
pub fn procedural_background(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (cell size, weight)
    const OCTAVES: [(f64, f64); 3] = [(96.0, 0.6), (40.0, 0.3), (16.0, 0.1)];
    let lattices: Vec<(f64, usize, Vec<Vec3>)> = OCTAVES
        .iter()
        .map(|&(cell, weight)| {
            let nx = (width as f64 / cell).ceil() as usize + 2;
            let ny = (height as f64 / cell).ceil() as usize + 2;
            let values = (0..nx * ny)
                .map(|_| {
                    let g = rng.random_range(0.25..0.8);
                    Vec3::new(
                        g * rng.random_range(0.7..1.1),
                        g * rng.random_range(0.8..1.1),
                        g * rng.random_range(0.6..0.9),
                    ) * weight
                })
                .collect();
            (cell, nx, values)
        })
        .collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    RgbImage::from_fn(width, height, |x, y| {
        let mut c = Vec3::zeros();
        for ((cell, _), (_, nx, values)) in OCTAVES.iter().zip(&lattices) {
            let (u, v) = (x as f64 / cell, y as f64 / cell);
            let (i, j) = (u.floor() as usize, v.floor() as usize);
            let (a, b) = (smooth(u.fract()), smooth(v.fract()));
            let at = |i: usize, j: usize| values[j * nx + i];
            let top = at(i, j).lerp(&at(i + 1, j), a);
            let bottom = at(i, j + 1).lerp(&at(i + 1, j + 1), a);
            c += top.lerp(&bottom, b);
        }
        let c = c * 255.0;
        Rgb([to_u8(c.x), to_u8(c.y), to_u8(c.z)])
    })
}

/// Scales every vertex color by an independent factor in `[0.75, 1.15)`.
pub fn mottle(mesh: &mut TriangleMesh, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in mesh.colors.iter_mut() {
        *c = (*c * rng.random_range(0.75..1.15)).map(|v| v.clamp(0.0, 1.0));
    }
}

/// 10 cm cube with alternating red and blue faces and mottled albedo.
pub fn demo_cube() -> TriangleMesh {
    let a = Vec3::new(0.85, 0.2, 0.15);
    let b = Vec3::new(0.2, 0.35, 0.85);
    let mut cube = TriangleMesh::cube(0.1, 8, [a, b, a, b, a, b]);
    mottle(&mut cube, 1);
    cube
}

/// Default light: from slightly above the camera towards the scene.
pub fn default_light() -> Vec3 {
    Vec3::new(0.0, -0.4, -1.0).normalize()
}

/// Light direction of `frame`, rotated about the camera's vertical axis when dynamic.
pub fn light_at(base: &Vec3, frame: usize, dynamic: bool) -> Vec3 {
    if !dynamic {
        return *base;
    }
    let angle = (LIGHT_DEGREES_PER_FRAME * frame as f64).to_radians();
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle) * base
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceConfig {
    pub frames: usize,
    pub seed: u64,
    pub light: Vec3,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 100,
            seed: 0,
            light: default_light(),
        }
    }
}

/// Ground truth of a written sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSummary {
    pub frames: usize,
    /// `poses[frame][object]`.
    pub poses: Vec<Vec<RigidTransform>>,
    /// Per frame, the number of pixels where the occluder covers the first object.
    pub occluded_pixels: Vec<usize>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

/// One `poses.txt` line.
pub fn format_pose_line(object: usize, pose: &RigidTransform) -> String {
    let mut s = object.to_string();
    let r = &pose.rotation;
    for i in 0..3 {
        for j in 0..3 {
            write!(s, " {:.16e}", r[(i, j)]).unwrap();
        }
    }
    for v in pose.translation.iter() {
        write!(s, " {v:.16e}").unwrap();
    }
    s
}

/// Renders and writes a sequence to `out`. Frame `i` uses background
/// `i mod backgrounds.len()`; noise of frame `i` is seeded from
/// `(config.seed, i)`.
pub fn generate_sequence(
    meshes: &MeshPair,
    trajectory: &TrajectorySpec,
    variant: &SequenceVariant,
    backgrounds: &[RgbImage],
    k: &CameraIntrinsics,
    config: &SequenceConfig,
    out: &Path,
) -> Result<SequenceSummary, SynthError> {
    variant.validate()?;
    if backgrounds.is_empty() {
        return Err(SynthError::NoBackground);
    }
    if !trajectory.covers(config.frames) {
        return Err(SynthError::Trajectory(format!(
            "trajectory ends at frame {} but {} frames were requested",
            trajectory.last_index(),
            config.frames
        )));
    }
    if let Some(o) = &variant.occluder {
        if !o.trajectory.covers(config.frames) {
            return Err(SynthError::Trajectory("occluder trajectory is too short".into()));
        }
    }
    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| io_error(&frames_dir, e))?;

    let mut objects: Vec<&TriangleMesh> = vec![&meshes.full];
    if let Some(o) = &variant.occluder {
        objects.push(&o.meshes.full);
    }
    let poses: Vec<Vec<RigidTransform>> = (0..config.frames)
        .map(|i| {
            let mut p = vec![trajectory.pose_at(i)];
            if let Some(o) = &variant.occluder {
                p.push(o.trajectory.pose_at(i));
            }
            p
        })
        .collect();

    let occluded_pixels = (0..config.frames)
        .into_par_iter()
        .map(|i| -> Result<usize, SynthError> {
            let light = light_at(&config.light, i, variant.dynamic_light);
            let sprite = shade_scene(&objects, &poses[i], k, &light)?;
            let background = &backgrounds[i % backgrounds.len()];
            let frame = composite(background, &sprite, variant.noise_sigma, frame_seed(config.seed, i))?;
            let path = frames_dir.join(frame_file_name(i));
            save_rgb(&frame, &path).map_err(|e| io_error(&path, e))?;
            let occluded = if objects.len() > 1 {
                let alone = render_fragments(&objects[..1], &poses[i][..1], k, DEFAULT_Z_NEAR, DEFAULT_Z_FAR)?;
                alone
                    .data()
                    .iter()
                    .zip(sprite.coverage.data())
                    .filter(|(a, &c)| a.is_hit() && c == 2)
                    .count()
            } else {
                0
            };
            Ok(occluded)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut text = String::new();
    for frame in &poses {
        for (j, p) in frame.iter().enumerate() {
            text.push_str(&format_pose_line(j, p));
            text.push('\n');
        }
    }
    write_file(&out.join("poses.txt"), &text)?;
    write_file(
        &out.join("camera.txt"),
        &format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height),
    )?;
    let meta = format!(
        "variant = {}\nframes = {}\nobjects = {}\nseed = {}\ndynamic_light = {}\nnoise_sigma = {}\n",
        variant.kind.name(),
        config.frames,
        objects.len(),
        config.seed,
        variant.dynamic_light,
        variant.noise_sigma
    );
    write_file(&out.join("meta.txt"), &meta)?;
    let objects_dir = out.join("objects");
    std::fs::create_dir_all(&objects_dir).map_err(|e| io_error(&objects_dir, e))?;
    for (j, m) in objects.iter().enumerate() {
        m.save_obj(&objects_dir.join(format!("{j}.obj")))?;
    }
    Ok(SequenceSummary {
        frames: config.frames,
        poses,
        occluded_pixels,
    })
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng.random()
}

fn write_file(path: &Path, text: &str) -> Result<(), SynthError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}
