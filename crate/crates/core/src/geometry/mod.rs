//! Rigid-body math, the pinhole camera model and triangle meshes.

mod camera;
mod mesh;
mod transform;

pub use camera::{
    backproject, metric_depth, normalized_depth, project, project_camera_point, scale_intrinsics,
    CameraIntrinsics, Pixel,
};
pub use mesh::{decimate_mesh, triangle_area, MeshPair, TriangleMesh, MAX_REDUCED_VERTICES};
pub use transform::{
    compose, exp_twist, hat, invert, log_rotation, orthonormalize, RigidTransform, Twist, Vec3,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("point lies behind the camera")]
    PointBehindCamera,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("triangle index {index} out of range for {vertex_count} vertices")]
    InvalidIndex { index: usize, vertex_count: usize },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("OBJ line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
