//! Recursive pose estimation: refine every pose on the new frame, then update
//! the appearance models at the refined poses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frame::RgbImage;
use crate::geometry::{CameraIntrinsics, MeshPair, RigidTransform};
use crate::levelset::signed_distance_transform;
use crate::optimizer::{optimize, ObjectInput, OptimizationSettings, OptimizeError};
use crate::raster::{render_scene, RasterError, SilhouetteMask};
use crate::segmentation::{
    assign_region_weights, select_centers, update_model, ActiveRegionSet, SegmentationError, TclcModel,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("object {0} is not visible")]
    NotVisible(usize),
    #[error("object index {index} out of range for {count} objects")]
    InvalidIndex { index: usize, count: usize },
    #[error("expected {expected} poses, got {got}")]
    PoseCount { expected: usize, got: usize },
    #[error("tracker has not been initialized")]
    Uninitialized,
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("segmentation: {0}")]
    Segmentation(String),
}

impl From<SegmentationError> for TrackerError {
    fn from(e: SegmentationError) -> Self {
        TrackerError::Segmentation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectStatus {
    Tracking,
    /// Skipped by [`TrackerState::step`] until [`TrackerState::reset_pose`].
    Lost,
}

#[derive(Debug, Clone)]
pub struct TrackedObject {
    pub meshes: MeshPair,
    pub model: TclcModel,
    pub pose: RigidTransform,
    pub status: ObjectStatus,
    /// Regions used for the posteriors of the next frame.
    pub active: ActiveRegionSet,
    pub last_error: Option<TrackerError>,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub objects: Vec<TrackedObject>,
    pub settings: OptimizationSettings,
    pub k: CameraIntrinsics,
    pub frame_index: usize,
    initialized: bool,
}

impl TrackerState {
    pub fn new(
        meshes: Vec<MeshPair>,
        k: CameraIntrinsics,
        settings: OptimizationSettings,
    ) -> Result<Self, TrackerError> {
        settings.validate()?;
        k.validate().map_err(|e| OptimizeError::InvalidSettings(e.to_string()))?;
        let objects = meshes
            .into_iter()
            .map(|m| fresh_object(m, &k, &settings))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            objects,
            settings,
            k,
            frame_index: 0,
            initialized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn poses(&self) -> Vec<RigidTransform> {
        self.objects.iter().map(|o| o.pose).collect()
    }

    pub fn status(&self, j: usize) -> Option<ObjectStatus> {
        self.objects.get(j).map(|o| o.status)
    }

    /// Discards all appearance state and initializes the histograms from
    /// `frame0` at `poses0`. Objects that do not project into the image are
    /// marked lost and reported.
    pub fn initialize(
        &mut self,
        frame0: &RgbImage,
        poses0: &[RigidTransform],
    ) -> Result<Vec<Result<(), TrackerError>>, TrackerError> {
        if poses0.len() != self.objects.len() {
            return Err(TrackerError::PoseCount {
                expected: self.objects.len(),
                got: poses0.len(),
            });
        }
        check_frame(frame0, &self.k)?;
        for (o, pose) in self.objects.iter_mut().zip(poses0) {
            let meshes = o.meshes.clone();
            *o = fresh_object(meshes, &self.k, &self.settings)?;
            o.pose = *pose;
        }
        self.frame_index = 0;
        self.initialized = true;
        let all: Vec<usize> = (0..self.objects.len()).collect();
        self.refresh_regions(Some(frame0), &all)?;
        Ok(self
            .objects
            .iter_mut()
            .enumerate()
            .map(|(j, o)| {
                if o.status == ObjectStatus::Tracking && o.model.initialized_count() == 0 {
                    o.status = ObjectStatus::Lost;
                    o.last_error = Some(TrackerError::NotVisible(j));
                }
                match (o.status, &o.last_error) {
                    (ObjectStatus::Lost, Some(e)) => Err(e.clone()),
                    (ObjectStatus::Lost, None) => Err(TrackerError::NotVisible(j)),
                    _ => Ok(()),
                }
            })
            .collect())
    }

    /// Processes the next frame and returns the current pose of every object.
    pub fn step(&mut self, frame: &RgbImage) -> Result<Vec<RigidTransform>, TrackerError> {
        if !self.initialized {
            return Err(TrackerError::Uninitialized);
        }
        check_frame(frame, &self.k)?;
        let live: Vec<usize> = self.live();
        let inputs: Vec<ObjectInput<'_>> = live
            .iter()
            .map(|&j| {
                let o = &self.objects[j];
                ObjectInput {
                    meshes: &o.meshes,
                    model: &o.model,
                    active: &o.active,
                    pose: o.pose,
                }
            })
            .collect();
        let results = optimize(frame, &inputs, &self.k, &self.settings)?;
        for (&j, r) in live.iter().zip(results) {
            let o = &mut self.objects[j];
            match r {
                Ok(pose) => o.pose = pose,
                Err(e) => {
                    o.status = ObjectStatus::Lost;
                    o.last_error = Some(e.into());
                }
            }
        }
        self.frame_index += 1;
        let live = self.live();
        self.refresh_regions(Some(frame), &live)?;
        Ok(self.poses())
    }

    /// Overwrites the pose of object `j` and resumes tracking it. Histograms are kept.
    pub fn reset_pose(&mut self, j: usize, pose: RigidTransform) -> Result<(), TrackerError> {
        let count = self.objects.len();
        let o = self.objects.get_mut(j).ok_or(TrackerError::InvalidIndex { index: j, count })?;
        o.pose = pose;
        o.status = ObjectStatus::Tracking;
        o.last_error = None;
        if self.initialized {
            self.refresh_regions(None, &[j])?;
        }
        Ok(())
    }

    fn live(&self) -> Vec<usize> {
        (0..self.objects.len())
            .filter(|&j| self.objects[j].status == ObjectStatus::Tracking)
            .collect()
    }

    /// Selects the active regions of `targets` at their current poses and
    /// updates their histograms from `frame` when given.
    fn refresh_regions(&mut self, frame: Option<&RgbImage>, targets: &[usize]) -> Result<(), TrackerError> {
        let live = self.live();
        let meshes: Vec<_> = live.iter().map(|&j| &self.objects[j].meshes.full).collect();
        let poses: Vec<_> = live.iter().map(|&j| self.objects[j].pose).collect();
        let (mask, _) = render_scene(&meshes, &poses, &self.k, self.settings.z_near, self.settings.z_far)?;
        for &j in targets {
            let Some(slot) = live.iter().position(|&l| l == j) else { continue };
            if let Err(e) = self.refresh_object(j, (slot + 1) as u8, &mask, frame) {
                let o = &mut self.objects[j];
                o.status = ObjectStatus::Lost;
                o.last_error = Some(e);
            }
        }
        Ok(())
    }

    fn refresh_object(
        &mut self,
        j: usize,
        index: u8,
        mask: &SilhouetteMask,
        frame: Option<&RgbImage>,
    ) -> Result<(), TrackerError> {
        let s = &self.settings;
        let field = signed_distance_transform(mask, index, s.band as f64).map_err(|_| TrackerError::NotVisible(j))?;
        let mut rng = region_rng(s.seed, self.frame_index);
        let o = &mut self.objects[j];
        let radius = o.model.radius;
        let mut active = select_centers(
            &o.meshes.reduced,
            &o.pose,
            &self.k,
            &field,
            s.center_lambda,
            radius,
            s.max_centers,
            &mut rng,
        )
        .map_err(|_| TrackerError::NotVisible(j))?;
        if let Some(frame) = frame {
            update_model(&mut o.model, frame, mask, index, &active);
        }
        assign_region_weights(&mut active, &field, radius, s.heaviside_pitch);
        o.active = active;
        Ok(())
    }
}

/// Center selection depends only on the seed and the frame, never on the
/// object, so objects that do not interact behave as if tracked alone.
fn region_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);
    rng
}

fn fresh_object(
    meshes: MeshPair,
    k: &CameraIntrinsics,
    settings: &OptimizationSettings,
) -> Result<TrackedObject, TrackerError> {
    let model = TclcModel::new(
        meshes.reduced.vertices.len(),
        settings.radius_for_width(k.width),
        settings.alpha_f,
        settings.alpha_b,
    )?;
    Ok(TrackedObject {
        meshes,
        model,
        pose: RigidTransform::identity(),
        status: ObjectStatus::Tracking,
        active: ActiveRegionSet::default(),
        last_error: None,
    })
}

fn check_frame(frame: &RgbImage, k: &CameraIntrinsics) -> Result<(), TrackerError> {
    if (frame.width(), frame.height()) == (k.width, k.height) {
        Ok(())
    } else {
        Err(OptimizeError::DimensionMismatch {
            frame: (frame.width(), frame.height()),
            camera: (k.width, k.height),
        }
        .into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::raster::render_fragments;
    use image::Rgb;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(300.0, 300.0, 160.0, 128.0, 320, 256).unwrap()
    }

    fn cube() -> MeshPair {
        MeshPair::new(crate::synth::demo_cube()).unwrap()
    }

    /// Flat-colored render of the meshes over a plain background.
    fn render(meshes: &[&MeshPair], poses: &[RigidTransform], k: &CameraIntrinsics) -> RgbImage {
        let full: Vec<_> = meshes.iter().map(|m| &m.full).collect();
        let frags = render_fragments(&full, poses, k, 0.01, 100.0).unwrap();
        RgbImage::from_fn(k.width, k.height, |x, y| {
            let f = frags.get(x as usize, y as usize);
            if f.is_hit() {
                let m = &full[f.object as usize - 1];
                let [i0, _, _] = m.triangles[f.triangle as usize];
                let c = m.colors[i0 as usize] * 255.0;
                Rgb([c.x as u8, c.y as u8, c.z as u8])
            } else {
                Rgb([60, 170, 80])
            }
        })
    }

    fn pose(x: f64, angle: f64) -> RigidTransform {
        let r = RigidTransform::from_axis_angle(&Vec3::new(1.0, 1.0, 0.3), angle);
        RigidTransform::new(r.rotation, Vec3::new(x, 0.0, 0.45))
    }

    #[test]
    fn initialize_marks_objects_tracking_with_histograms() {
        let k = camera();
        let m = cube();
        let p = pose(0.0, 0.4);
        let img = render(&[&m], &[p], &k);
        let mut t = TrackerState::new(vec![m], k, OptimizationSettings::default()).unwrap();
        let r = t.initialize(&img, &[p]).unwrap();
        assert!(r[0].is_ok());
        assert_eq!(t.status(0), Some(ObjectStatus::Tracking));
        assert!(t.objects[0].model.initialized_count() > 0);
        assert!(!t.objects[0].active.is_empty());

        // Re-initializing resets everything.
        let before = t.objects[0].model.clone();
        t.step(&img).unwrap();
        t.initialize(&img, &[p]).unwrap();
        assert_eq!(t.frame_index, 0);
        assert_eq!(t.objects[0].model, before);
    }

    #[test]
    fn object_behind_camera_is_not_visible() {
        let k = camera();
        let (a, b) = (cube(), cube());
        let pa = pose(0.0, 0.4);
        let pb = RigidTransform::from_translation(0.0, 0.0, -1.0);
        let img = render(&[&a], &[pa], &k);
        let mut t = TrackerState::new(vec![a, b], k, OptimizationSettings::default()).unwrap();
        let r = t.initialize(&img, &[pa, pb]).unwrap();
        assert!(r[0].is_ok());
        assert!(matches!(r[1], Err(TrackerError::NotVisible(1))));
        assert_eq!(t.status(1), Some(ObjectStatus::Lost));
    }

    #[test]
    fn static_frame_stays_next_to_ground_truth() {
        let k = camera();
        let m = cube();
        let p = pose(0.0, 0.4);
        let img = render(&[&m], &[p], &k);
        let copy = img.clone();
        let mut t = TrackerState::new(vec![m], k, OptimizationSettings::default()).unwrap();
        t.initialize(&img, &[p]).unwrap();
        for _ in 0..6 {
            let e = t.step(&img).unwrap()[0].compose(&p.inverse());
            assert!(crate::geometry::log_rotation(&e.rotation).norm() < 1f64.to_radians());
            assert!(e.translation.norm() < 0.01 * p.translation.norm());
        }
        assert_eq!(img, copy);
        assert_eq!(t.frame_index, 6);
        assert!(t.objects[0].model.histograms.iter().all(|h| h.updates <= 7));
    }

    #[test]
    fn reset_keeps_histograms_and_revives_lost_objects() {
        let k = camera();
        let m = cube();
        let p = pose(0.0, 0.4);
        let img = render(&[&m], &[p], &k);
        let mut t = TrackerState::new(vec![m], k, OptimizationSettings::default()).unwrap();
        t.initialize(&img, &[p]).unwrap();
        t.step(&img).unwrap();
        let snapshot = t.objects[0].clone();
        t.reset_pose(0, snapshot.pose).unwrap();
        assert_eq!(t.objects[0].model, snapshot.model);
        assert_eq!(t.objects[0].active, snapshot.active);

        t.objects[0].status = ObjectStatus::Lost;
        let frozen = t.objects[0].pose;
        t.step(&img).unwrap();
        assert_eq!(t.objects[0].pose, frozen);
        t.reset_pose(0, p).unwrap();
        assert_eq!(t.status(0), Some(ObjectStatus::Tracking));
        assert_eq!(t.objects[0].model, snapshot.model);
        assert!(matches!(t.reset_pose(3, p), Err(TrackerError::InvalidIndex { .. })));
    }

    #[test]
    fn separated_objects_match_single_object_runs() {
        let k = camera();
        let (a, b) = (cube(), cube());
        let pa = pose(-0.12, 0.4);
        let pb = pose(0.12, -0.3);
        let shift = RigidTransform::from_translation(0.004, -0.003, 0.0);
        let frames: Vec<RgbImage> = (0..3)
            .map(|i| {
                let mut qa = pa;
                let mut qb = pb;
                for _ in 0..i {
                    qa = shift.compose(&qa);
                    qb = shift.compose(&qb);
                }
                render(&[&a, &b], &[qa, qb], &k)
            })
            .collect();
        let run = |meshes: Vec<MeshPair>, poses: &[RigidTransform]| {
            let mut t = TrackerState::new(meshes, k, OptimizationSettings::default()).unwrap();
            t.initialize(&frames[0], poses).unwrap();
            frames[1..].iter().map(|f| t.step(f).unwrap()).collect::<Vec<_>>()
        };
        let both = run(vec![a.clone(), b.clone()], &[pa, pb]);
        let only_a = run(vec![a], &[pa]);
        let only_b = run(vec![b], &[pb]);
        for i in 0..both.len() {
            assert_eq!(both[i][0], only_a[i][0]);
            assert_eq!(both[i][1], only_b[i][0]);
        }
    }

    #[test]
    fn step_requires_initialization() {
        let k = camera();
        let img = RgbImage::new(320, 256);
        let mut t = TrackerState::new(vec![cube()], k, OptimizationSettings::default()).unwrap();
        assert!(matches!(t.step(&img), Err(TrackerError::Uninitialized)));
        let small = RgbImage::new(100, 100);
        assert!(t.initialize(&small, &[pose(0.0, 0.0)]).is_err());
    }
}
