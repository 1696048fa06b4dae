use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::transform::{RigidTransform, Vec3};
use super::GeometryError;

pub type Pixel = Vector2<f64>;

/// Pinhole intrinsics. Pixel centers sit at integer coordinates, origin top-left,
/// x to the right and y downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// One pyramid step coarser: every parameter halved.
    pub fn halved(&self) -> Self {
        Self {
            fx: self.fx * 0.5,
            fy: self.fy * 0.5,
            cx: self.cx * 0.5,
            cy: self.cy * 0.5,
            width: self.width / 2,
            height: self.height / 2,
        }
    }

    /// Ray direction `K⁻¹·[x, y, 1]ᵀ` (unit depth).
    pub fn ray(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, p: &Pixel) -> bool {
        p.x >= -0.5 && p.y >= -0.5 && p.x < self.width as f64 - 0.5 && p.y < self.height as f64 - 0.5
    }

    /// Nearest pixel index for a continuous coordinate, if inside the image.
    pub fn pixel_index(&self, p: &Pixel) -> Option<(usize, usize)> {
        let x = p.x.round();
        let y = p.y.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            None
        } else {
            Some((x as usize, y as usize))
        }
    }
}

/// Intrinsics of pyramid level `level` (1 = full resolution, each level halves).
pub fn scale_intrinsics(k: &CameraIntrinsics, level: u32) -> CameraIntrinsics {
    let mut out = *k;
    for _ in 1..level.max(1) {
        out = out.halved();
    }
    out
}

/// Projects a camera-frame point.
pub fn project_camera_point(k: &CameraIntrinsics, p: &Vec3) -> Result<Pixel, GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::PointBehindCamera);
    }
    Ok(Pixel::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

pub fn project(k: &CameraIntrinsics, t: &RigidTransform, x3d: &Vec3) -> Result<Pixel, GeometryError> {
    project_camera_point(k, &t.apply(x3d))
}

/// Metric depth from a normalized depth-buffer value in `[0, 1]`.
pub fn metric_depth(depth_value: f64, z_near: f64, z_far: f64) -> f64 {
    z_near * z_far / (z_far - depth_value * (z_far - z_near))
}

/// Normalized depth-buffer value of metric depth `z` (inverse of [`metric_depth`]).
pub fn normalized_depth(z: f64, z_near: f64, z_far: f64) -> f64 {
    z_far * (z - z_near) / (z * (z_far - z_near))
}

/// Camera-frame point seen at pixel `x` with normalized depth `depth_value`.
pub fn backproject(x: &Pixel, depth_value: f64, k: &CameraIntrinsics, z_near: f64, z_far: f64) -> Vec3 {
    k.ray(x.x, x.y) * metric_depth(depth_value, z_near, z_far)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vga() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn axis_point_projects_to_principal_point() {
        let k = vga();
        let p = project(&k, &RigidTransform::identity(), &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, Pixel::new(320.0, 240.0));
    }

    #[test]
    fn off_axis_projection() {
        let p = project(&vga(), &RigidTransform::identity(), &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((p.x - 370.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let r = project(&vga(), &RigidTransform::identity(), &Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(r, Err(GeometryError::PointBehindCamera)));
    }

    #[test]
    fn depth_endpoints() {
        let k = vga();
        let x = Pixel::new(320.0, 240.0);
        assert!((backproject(&x, 0.0, &k, 0.01, 100.0).z - 0.01).abs() < 1e-15);
        assert!((backproject(&x, 1.0, &k, 0.01, 100.0).z - 100.0).abs() < 1e-9);
    }

    #[test]
    fn backproject_round_trip() {
        let k = vga();
        for &(u, v, d) in &[(10.0, 20.0, 0.3), (600.5, 470.25, 0.999), (320.0, 0.0, 0.5)] {
            let x = Pixel::new(u, v);
            let p = backproject(&x, d, &k, 0.01, 100.0);
            let back = project_camera_point(&k, &p).unwrap();
            assert!((back - x).norm() < 1e-6);
            assert!((normalized_depth(p.z, 0.01, 100.0) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn pyramid_scaling() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 256.0, 640, 512).unwrap();
        assert_eq!(scale_intrinsics(&k, 1), k);
        assert_eq!(scale_intrinsics(&k, 3).fx, 150.0);
        assert_eq!(scale_intrinsics(&k, 2).width, 320);
        assert_eq!(scale_intrinsics(&k, 2).halved(), scale_intrinsics(&k, 3));
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }
}
