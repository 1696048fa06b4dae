use std::fmt::Write as _;
use std::path::Path;

use super::OptimizeError;
use crate::raster::{DEFAULT_Z_FAR, DEFAULT_Z_NEAR};
use crate::segmentation::{
    DEFAULT_ALPHA_B, DEFAULT_ALPHA_F, DEFAULT_CENTER_LAMBDA, DEFAULT_MAX_CENTERS, DEFAULT_RADIUS,
};

/// Image size the ROI-area threshold and region radius are expressed for.
pub const REFERENCE_PIXELS: f64 = 640.0 * 512.0;

/// Tracking parameters. Everything is overridable from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSettings {
    /// Pitch `s` of the smoothed Heaviside.
    pub heaviside_pitch: f64,
    /// Half-width of the contour band, in pixels at every level.
    pub band: usize,
    /// Iterations per pyramid level, coarsest first (`[4, 2, 1]` = levels 3, 2, 1).
    pub pyramid_iterations: Vec<usize>,
    /// Minimum ROI area in pixels at 640×512, scaled with the level's pixel count.
    pub min_roi_area: f64,
    pub z_near: f64,
    pub z_far: f64,
    /// Discard pixels whose distance values are influenced by other objects.
    pub occlusion_handling: bool,
    /// Levenberg damping as a fraction of `trace(H)/6`.
    pub damping: f64,
    /// Mean-residual growth within a level that counts as divergence.
    pub divergence_ratio: f64,
    /// Histogram region radius in pixels at 640 px image width.
    pub histogram_radius: f64,
    pub alpha_f: f64,
    pub alpha_b: f64,
    /// Centers are vertices within `center_lambda · radius` of the contour.
    pub center_lambda: f64,
    pub max_centers: usize,
    pub seed: u64,
}

impl Default for OptimizationSettings {
    fn default() -> Self {
        Self {
            heaviside_pitch: 1.2,
            band: 8,
            pyramid_iterations: vec![4, 2, 1],
            min_roi_area: 3000.0,
            z_near: DEFAULT_Z_NEAR,
            z_far: DEFAULT_Z_FAR,
            occlusion_handling: true,
            damping: 1e-7,
            divergence_ratio: 10.0,
            histogram_radius: DEFAULT_RADIUS,
            alpha_f: DEFAULT_ALPHA_F,
            alpha_b: DEFAULT_ALPHA_B,
            center_lambda: DEFAULT_CENTER_LAMBDA,
            max_centers: DEFAULT_MAX_CENTERS,
            seed: 0,
        }
    }
}

impl OptimizationSettings {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: String| Err(OptimizeError::InvalidSettings(m));
        if !(self.heaviside_pitch > 0.0) {
            return bad(format!("heaviside_pitch must be positive, got {}", self.heaviside_pitch));
        }
        if self.band == 0 {
            return bad("band must be positive".into());
        }
        if self.pyramid_iterations.is_empty() {
            return bad("pyramid_iterations must list at least one level".into());
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far) {
            return bad(format!("invalid frustum {} .. {}", self.z_near, self.z_far));
        }
        if !(self.min_roi_area >= 0.0) || !(self.damping >= 0.0) || !(self.divergence_ratio > 1.0) {
            return bad("min_roi_area, damping must be non-negative and divergence_ratio > 1".into());
        }
        if !(self.histogram_radius > 0.0) || !(0.0..=1.0).contains(&self.alpha_f) || !(0.0..=1.0).contains(&self.alpha_b) {
            return bad("histogram radius must be positive and learning rates in [0, 1]".into());
        }
        if !(self.center_lambda >= 0.0) || self.max_centers == 0 {
            return bad("center_lambda must be non-negative and max_centers positive".into());
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.pyramid_iterations.len()
    }

    /// ROI-area threshold for an image of `pixels` pixels.
    pub fn roi_threshold(&self, pixels: usize) -> f64 {
        self.min_roi_area * pixels as f64 / REFERENCE_PIXELS
    }

    /// Histogram radius for a full-resolution image of `width` pixels.
    pub fn radius_for_width(&self, width: u32) -> f64 {
        self.histogram_radius * width as f64 / 640.0
    }

    pub fn parse(text: &str) -> Result<Self, OptimizeError> {
        let mut s = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| OptimizeError::InvalidSettings(format!("line {}: {m}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let f = || value.parse::<f64>().map_err(|_| err("expected a number"));
            let u = || value.parse::<usize>().map_err(|_| err("expected a non-negative integer"));
            match key {
                "heaviside_pitch" => s.heaviside_pitch = f()?,
                "band" => s.band = u()?,
                "pyramid_iterations" => {
                    s.pyramid_iterations = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err("expected a comma-separated list of integers"))?
                }
                "min_roi_area" => s.min_roi_area = f()?,
                "z_near" => s.z_near = f()?,
                "z_far" => s.z_far = f()?,
                "occlusion_handling" => {
                    s.occlusion_handling = value.parse::<bool>().map_err(|_| err("expected true or false"))?
                }
                "damping" => s.damping = f()?,
                "divergence_ratio" => s.divergence_ratio = f()?,
                "histogram_radius" => s.histogram_radius = f()?,
                "alpha_f" => s.alpha_f = f()?,
                "alpha_b" => s.alpha_b = f()?,
                "center_lambda" => s.center_lambda = f()?,
                "max_centers" => s.max_centers = u()?,
                "seed" => s.seed = value.parse::<u64>().map_err(|_| err("expected an unsigned integer"))?,
                other => return Err(err(&format!("unknown key `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, OptimizeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OptimizeError::InvalidSettings(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let iters: Vec<String> = self.pyramid_iterations.iter().map(|i| i.to_string()).collect();
        writeln!(out, "heaviside_pitch = {}", self.heaviside_pitch).unwrap();
        writeln!(out, "band = {}", self.band).unwrap();
        writeln!(out, "pyramid_iterations = {}", iters.join(",")).unwrap();
        writeln!(out, "min_roi_area = {}", self.min_roi_area).unwrap();
        writeln!(out, "z_near = {}", self.z_near).unwrap();
        writeln!(out, "z_far = {}", self.z_far).unwrap();
        writeln!(out, "occlusion_handling = {}", self.occlusion_handling).unwrap();
        writeln!(out, "damping = {}", self.damping).unwrap();
        writeln!(out, "divergence_ratio = {}", self.divergence_ratio).unwrap();
        writeln!(out, "histogram_radius = {}", self.histogram_radius).unwrap();
        writeln!(out, "alpha_f = {}", self.alpha_f).unwrap();
        writeln!(out, "alpha_b = {}", self.alpha_b).unwrap();
        writeln!(out, "center_lambda = {}", self.center_lambda).unwrap();
        writeln!(out, "max_centers = {}", self.max_centers).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        out
    }
}
