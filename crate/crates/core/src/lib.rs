//! Monocular region-based 6DOF pose tracking of rigid objects.
//!
//! The tracker aligns rendered silhouettes with per-pixel foreground/background
//! posteriors computed from vertex-anchored local color histograms, and refines
//! poses with an iteratively reweighted Gauss-Newton scheme on SE(3):
//!
//! - [`geometry`]: SE(3), twists, the pinhole camera and meshes.
//! - [`raster`]: deterministic software rendering of index masks and depth maps.
//! - [`levelset`]: contours, exact signed distance transforms, smoothed Heaviside.
//! - [`segmentation`]: temporally consistent local color histograms.
//! - [`optimizer`]: the coarse-to-fine Gauss-Newton pose refinement.
//! - [`tracker`]: the frame loop.
//! - [`synth`]: semi-synthetic sequence generation with ground truth.
//! - [`eval`]: error metrics and evaluation protocols.

pub mod eval;
pub mod geometry;
pub mod frame;
pub mod grid;
pub mod levelset;
pub mod optimizer;
pub mod raster;
pub mod segmentation;
pub mod synth;
pub mod tracker;
