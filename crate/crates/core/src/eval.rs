//! Pose error metrics, the reset-on-failure and AUC evaluation protocols, and
//! sequence directory loading.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::frame::{load_rgb, save_rgb, RgbImage};
use crate::geometry::{CameraIntrinsics, RigidTransform, TriangleMesh, Vec3};
use crate::levelset::extract_contour;
use crate::raster::{render_scene, DEFAULT_Z_FAR, DEFAULT_Z_NEAR};
use crate::synth::frame_file_name;
use crate::tracker::{TrackerError, TrackerState};

/// Upper end of the AUC threshold range, in units of the mesh diameter.
pub const AUC_LAMBDA_MAX: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("{path}: {message}")]
    SequenceFormat { path: PathBuf, message: String },
    #[error("expected {expected} meshes, got {got}")]
    MeshCount { expected: usize, got: usize },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn format_error(path: &Path, message: impl Into<String>) -> EvalError {
    EvalError::SequenceFormat {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Geodesic angle between two rotations in `[0, π]`.
pub fn rotation_error(r: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let c = (((r.transpose() * r_gt).trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Mean distance between the mesh vertices under `t` and under `t_gt`.
pub fn vertex_error(mesh: &TriangleMesh, t: &RigidTransform, t_gt: &RigidTransform) -> Result<f64, EvalError> {
    if mesh.vertices.is_empty() {
        return Err(EvalError::EmptyMesh);
    }
    let sum: f64 = mesh.vertices.iter().map(|v| (t.apply(v) - t_gt.apply(v)).norm()).sum();
    Ok(sum / mesh.vertices.len() as f64)
}

/// Area under the success-rate curve: `∫₀^λmax 100·|{e < λ·d}|/n dλ`,
/// evaluated in closed form as `100/n · Σ max(0, λmax − e/d)`. Ranges over
/// `[0, 100·λmax]`; empty input or a non-positive diameter scores 0.
pub fn auc_score(vertex_errors: &[f64], diameter: f64, lambda_max: f64) -> f64 {
    if vertex_errors.is_empty() || !(diameter > 0.0) || !(lambda_max > 0.0) {
        return 0.0;
    }
    let sum: f64 = vertex_errors.iter().map(|e| (lambda_max - e / diameter).max(0.0)).sum();
    100.0 * sum / vertex_errors.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameError {
    /// Meters.
    pub translation_error: f64,
    /// Radians.
    pub rotation_error: f64,
    /// Meters.
    pub vertex_error: f64,
}

impl FrameError {
    pub fn new(mesh: &TriangleMesh, t: &RigidTransform, t_gt: &RigidTransform) -> Result<Self, EvalError> {
        Ok(Self {
            translation_error: (t.translation - t_gt.translation).norm(),
            rotation_error: rotation_error(&t.rotation, &t_gt.rotation),
            vertex_error: vertex_error(mesh, t, t_gt)?,
        })
    }
}

/// Success thresholds of the reset protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Meters.
    pub translation: f64,
    /// Radians.
    pub rotation: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            translation: 0.05,
            rotation: 5f64.to_radians(),
        }
    }
}

impl Thresholds {
    pub fn unbounded() -> Self {
        Self {
            translation: f64::INFINITY,
            rotation: f64::INFINITY,
        }
    }

    pub fn accepts(&self, e: &FrameError) -> bool {
        e.translation_error < self.translation && e.rotation_error < self.rotation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Reset to ground truth whenever a pose leaves the thresholds.
    Rbot,
    /// Track through without resets.
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectFrame {
    pub errors: FrameError,
    pub success: bool,
    /// Whether the pose was reset to ground truth after this frame.
    pub reset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub index: usize,
    pub runtime_ms: f64,
    pub objects: Vec<ObjectFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectSummary {
    /// Percent of evaluated frames.
    pub success_rate: f64,
    pub auc_score: f64,
    pub resets: usize,
}

/// Evaluation of frames `1..N`; frame 0 only initializes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub protocol: Protocol,
    pub thresholds: Thresholds,
    pub frames: Vec<FrameRecord>,
    pub objects: Vec<ObjectSummary>,
    /// Percent over all evaluated (frame, object) pairs.
    pub success_rate: f64,
    /// Mean of the per-object AUC scores.
    pub auc_score: f64,
}

impl SequenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per evaluated frame and object.
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("frame,object,translation_error_m,rotation_error_deg,vertex_error_m,success,reset,runtime_ms\n");
        for f in &self.frames {
            for (j, o) in f.objects.iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    f.index,
                    j,
                    o.errors.translation_error,
                    o.errors.rotation_error.to_degrees(),
                    o.errors.vertex_error,
                    o.success,
                    o.reset,
                    f.runtime_ms
                ));
            }
        }
        s
    }

    pub fn write(&self, json: &Path, csv: Option<&Path>) -> Result<(), EvalError> {
        std::fs::write(json, self.to_json()).map_err(|e| io_error(json, e))?;
        if let Some(csv) = csv {
            std::fs::write(csv, self.to_csv()).map_err(|e| io_error(csv, e))?;
        }
        Ok(())
    }
}

/// Anything that can be driven by the evaluation protocols.
pub trait PoseTracker {
    fn initialize(&mut self, frame: &RgbImage, poses: &[RigidTransform]) -> Result<(), EvalError>;
    fn step(&mut self, frame: &RgbImage) -> Result<Vec<RigidTransform>, EvalError>;
    fn reset_pose(&mut self, object: usize, pose: RigidTransform) -> Result<(), EvalError>;
}

impl PoseTracker for TrackerState {
    fn initialize(&mut self, frame: &RgbImage, poses: &[RigidTransform]) -> Result<(), EvalError> {
        // Objects that fail to initialize stay lost and show up as failures.
        TrackerState::initialize(self, frame, poses)?;
        Ok(())
    }

    fn step(&mut self, frame: &RgbImage) -> Result<Vec<RigidTransform>, EvalError> {
        Ok(TrackerState::step(self, frame)?)
    }

    fn reset_pose(&mut self, object: usize, pose: RigidTransform) -> Result<(), EvalError> {
        Ok(TrackerState::reset_pose(self, object, pose)?)
    }
}

/// A sequence directory with its ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub dir: PathBuf,
    pub k: CameraIntrinsics,
    /// `poses[frame][object]`.
    pub poses: Vec<Vec<RigidTransform>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn object_count(&self) -> usize {
        self.poses.first().map_or(0, Vec::len)
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.dir.join("frames").join(frame_file_name(index))
    }

    pub fn frame(&self, index: usize) -> Result<RgbImage, EvalError> {
        let path = self.frame_path(index);
        let img = load_rgb(&path).map_err(|e| format_error(&path, format!("frame {index}: {e}")))?;
        if img.dimensions() != (self.k.width, self.k.height) {
            return Err(format_error(
                &path,
                format!(
                    "frame {index} is {:?}, camera is {}x{}",
                    img.dimensions(),
                    self.k.width,
                    self.k.height
                ),
            ));
        }
        Ok(img)
    }

    /// Frames in index order, loaded lazily.
    pub fn frames(&self) -> impl Iterator<Item = Result<RgbImage, EvalError>> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    /// Meshes stored next to the frames (`objects/<id>.obj`).
    pub fn load_meshes(&self) -> Result<Vec<TriangleMesh>, EvalError> {
        (0..self.object_count())
            .map(|j| {
                let path = self.dir.join("objects").join(format!("{j}.obj"));
                TriangleMesh::load_obj(&path).map_err(|e| format_error(&path, e.to_string()))
            })
            .collect()
    }
}

fn parse_camera(path: &Path) -> Result<CameraIntrinsics, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| format_error(path, e.to_string()))?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format_error(path, format!("expected 6 values, found {}", fields.len())));
    }
    let real = |i: usize| -> Result<f64, EvalError> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format_error(path, format!("value {} ({:?}) is not a finite number", i + 1, fields[i])))
    };
    let int = |i: usize| -> Result<u32, EvalError> {
        fields[i]
            .parse::<u32>()
            .map_err(|_| format_error(path, format!("value {} ({:?}) is not an image size", i + 1, fields[i])))
    };
    CameraIntrinsics::new(real(0)?, real(1)?, real(2)?, real(3)?, int(4)?, int(5)?)
        .map_err(|e| format_error(path, e.to_string()))
}

fn parse_poses(path: &Path) -> Result<Vec<Vec<RigidTransform>>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| format_error(path, e.to_string()))?;
    let mut frames: Vec<Vec<RigidTransform>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(format_error(path, format!("line {line_no}: expected 13 fields, found {}", fields.len())));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| format_error(path, format!("line {line_no}: bad object id {:?}", fields[0])))?;
        let mut v = [0.0; 12];
        for (i, f) in fields[1..].iter().enumerate() {
            v[i] = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format_error(path, format!("line {line_no}, field {}: {f:?} is not finite", i + 2)))?;
        }
        let rotation = Matrix3::from_row_slice(&v[..9]);
        let pose = RigidTransform::new(rotation, Vec3::new(v[9], v[10], v[11]));
        if pose.orthonormality_defect() > 1e-6 {
            return Err(format_error(path, format!("line {line_no}: rotation is not orthonormal")));
        }
        if id == 0 {
            frames.push(vec![pose]);
        } else {
            match frames.last_mut() {
                Some(f) if f.len() == id => f.push(pose),
                _ => return Err(format_error(path, format!("line {line_no}: unexpected object id {id}"))),
            }
        }
    }
    let Some(first) = frames.first() else {
        return Err(format_error(path, "no poses"));
    };
    let objects = first.len();
    if let Some(i) = frames.iter().position(|f| f.len() != objects) {
        return Err(format_error(path, format!("frame {i} has {} objects, expected {objects}", frames[i].len())));
    }
    Ok(frames)
}

/// Reads `camera.txt` and `poses.txt` and checks that every frame file exists.
pub fn load_sequence(path: &Path) -> Result<Sequence, EvalError> {
    let k = parse_camera(&path.join("camera.txt"))?;
    let poses = parse_poses(&path.join("poses.txt"))?;
    let seq = Sequence {
        dir: path.to_path_buf(),
        k,
        poses,
    };
    for i in 0..seq.len() {
        let f = seq.frame_path(i);
        if !f.is_file() {
            return Err(format_error(&f, format!("missing frame {i}")));
        }
    }
    Ok(seq)
}

/// Where to draw estimated contours, if anywhere.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub overlay_dir: Option<PathBuf>,
}

const OVERLAY_COLORS: [[u8; 3]; 4] = [[255, 230, 0], [0, 230, 255], [255, 0, 200], [120, 255, 0]];

/// Draws the contours of the meshes rendered at `poses` over `frame`.
pub fn draw_overlay(
    frame: &RgbImage,
    meshes: &[&TriangleMesh],
    poses: &[RigidTransform],
    k: &CameraIntrinsics,
) -> RgbImage {
    let mut out = frame.clone();
    let Ok((mask, _)) = render_scene(meshes, poses, k, DEFAULT_Z_NEAR, DEFAULT_Z_FAR) else {
        return out;
    };
    for j in 0..meshes.len() {
        if let Ok(c) = extract_contour(&mask, (j + 1) as u8) {
            for (x, y) in c.pixels {
                out.put_pixel(x as u32, y as u32, image::Rgb(OVERLAY_COLORS[j % OVERLAY_COLORS.len()]));
            }
        }
    }
    out
}

/// Runs `tracker` over `seq`: initialize on frame 0 with ground truth, then
/// step through frames `1..N`. Under [`Protocol::Rbot`] every object whose
/// pose leaves `thresholds` is reset to ground truth before the next frame.
pub fn run_protocol<T: PoseTracker>(
    tracker: &mut T,
    seq: &Sequence,
    meshes: &[&TriangleMesh],
    protocol: Protocol,
    thresholds: Thresholds,
    options: &EvalOptions,
) -> Result<SequenceReport, EvalError> {
    let m = seq.object_count();
    if meshes.len() != m {
        return Err(EvalError::MeshCount {
            expected: m,
            got: meshes.len(),
        });
    }
    if meshes.iter().any(|mesh| mesh.vertices.is_empty()) {
        return Err(EvalError::EmptyMesh);
    }
    if let Some(dir) = &options.overlay_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut frames = Vec::new();
    let mut iter = seq.frames();
    let Some(first) = iter.next() else {
        return Err(format_error(&seq.dir, "sequence has no frames"));
    };
    tracker.initialize(&first?, &seq.poses[0])?;
    for (index, frame) in (1..).zip(iter) {
        let frame = frame?;
        let gt = &seq.poses[index];
        let start = Instant::now();
        let poses = tracker.step(&frame)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        if let Some(dir) = &options.overlay_dir {
            let path = dir.join(frame_file_name(index));
            save_rgb(&draw_overlay(&frame, meshes, &poses, &seq.k), &path).map_err(|e| io_error(&path, e))?;
        }
        let mut objects = Vec::with_capacity(m);
        for j in 0..m {
            let errors = FrameError::new(meshes[j], &poses[j], &gt[j])?;
            let success = thresholds.accepts(&errors);
            let reset = protocol == Protocol::Rbot && !success;
            if reset {
                tracker.reset_pose(j, gt[j])?;
            }
            objects.push(ObjectFrame { errors, success, reset });
        }
        frames.push(FrameRecord {
            index,
            runtime_ms,
            objects,
        });
    }
    Ok(summarize(protocol, thresholds, frames, meshes))
}

fn summarize(protocol: Protocol, thresholds: Thresholds, frames: Vec<FrameRecord>, meshes: &[&TriangleMesh]) -> SequenceReport {
    let n = frames.len();
    let objects: Vec<ObjectSummary> = meshes
        .iter()
        .enumerate()
        .map(|(j, mesh)| {
            let successes = frames.iter().filter(|f| f.objects[j].success).count();
            let errors: Vec<f64> = frames.iter().map(|f| f.objects[j].errors.vertex_error).collect();
            ObjectSummary {
                success_rate: if n == 0 { 0.0 } else { 100.0 * successes as f64 / n as f64 },
                auc_score: auc_score(&errors, mesh.diameter, AUC_LAMBDA_MAX),
                resets: frames.iter().filter(|f| f.objects[j].reset).count(),
            }
        })
        .collect();
    let pairs = n * meshes.len();
    let successes: usize = frames.iter().map(|f| f.objects.iter().filter(|o| o.success).count()).sum();
    let success_rate = if pairs == 0 { 0.0 } else { 100.0 * successes as f64 / pairs as f64 };
    let auc = if objects.is_empty() {
        0.0
    } else {
        objects.iter().map(|o| o.auc_score).sum::<f64>() / objects.len() as f64
    };
    SequenceReport {
        protocol,
        thresholds,
        frames,
        objects,
        success_rate,
        auc_score: auc,
    }
}

/// Reset-on-failure protocol with the given thresholds.
pub fn rbot_protocol<T: PoseTracker>(
    tracker: &mut T,
    seq: &Sequence,
    meshes: &[&TriangleMesh],
    thresholds: Thresholds,
) -> Result<SequenceReport, EvalError> {
    run_protocol(tracker, seq, meshes, Protocol::Rbot, thresholds, &EvalOptions::default())
}

/// Tracking without resets, scored by the vertex-error AUC.
pub fn auc_protocol<T: PoseTracker>(
    tracker: &mut T,
    seq: &Sequence,
    meshes: &[&TriangleMesh],
) -> Result<SequenceReport, EvalError> {
    run_protocol(tracker, seq, meshes, Protocol::Auc, Thresholds::default(), &EvalOptions::default())
}
