//! Temporally consistent local color histograms (tclc-histograms).
//!
//! Every vertex of the reduced mesh owns a foreground and a background color
//! histogram. Histograms are (re)estimated from circular image regions centered
//! at the vertex projection whenever that projection falls near the silhouette
//! contour, and per-pixel posteriors average over all regions covering a pixel.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::frame::RgbImage;
use crate::geometry::{project, CameraIntrinsics, Pixel, RigidTransform, TriangleMesh};
use crate::grid::Grid;
use crate::levelset::{smoothed_heaviside, SignedDistanceField};
use crate::raster::SilhouetteMask;

pub const BINS_PER_CHANNEL: usize = 32;
pub const BIN_COUNT: usize = BINS_PER_CHANNEL * BINS_PER_CHANNEL * BINS_PER_CHANNEL;

pub const DEFAULT_RADIUS: f64 = 40.0;
/// Resolution at which [`DEFAULT_RADIUS`] is specified.
pub const REFERENCE_WIDTH: u32 = 640;
pub const DEFAULT_ALPHA_F: f64 = 0.1;
pub const DEFAULT_ALPHA_B: f64 = 0.2;
pub const DEFAULT_CENTER_LAMBDA: f64 = 0.1;
pub const DEFAULT_MAX_CENTERS: usize = 100;

/// Floor of the posterior denominator.
pub const POSTERIOR_FLOOR: f64 = 1e-12;

const MODEL_MAGIC: &[u8; 4] = b"TCLC";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SegmentationError {
    #[error("no reduced-mesh vertex projects near the contour")]
    NoVisibleCenters,
    #[error("histogram of vertex {0} is not initialized")]
    Uninitialized(usize),
    #[error("pixel ({0}, {1}) is not covered by any active region")]
    NotCovered(usize, usize),
    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 32×32×32 RGB bin index of a color.
#[inline]
pub fn quantize(rgb: [u8; 3]) -> u16 {
    ((rgb[0] as u16 >> 3) << 10) | ((rgb[1] as u16 >> 3) << 5) | (rgb[2] as u16 >> 3)
}

/// Sparse color histogram over [`BIN_COUNT`] bins.
///
/// A disc of radius 40 px touches at most ~5000 distinct bins, so only
/// non-zero bins are stored, sorted by bin index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColorHistogram {
    entries: Vec<(u16, f64)>,
    total: f64,
}

impl ColorHistogram {
    /// Raw counts of a list of bin indices.
    pub fn from_bins(mut bins: Vec<u16>) -> Self {
        bins.sort_unstable();
        let mut entries: Vec<(u16, f64)> = Vec::new();
        for b in bins {
            match entries.last_mut() {
                Some((last, c)) if *last == b => *c += 1.0,
                _ => entries.push((b, 1.0)),
            }
        }
        let total = entries.iter().map(|e| e.1).sum();
        Self { entries, total }
    }

    pub fn from_dense(bins: &[f64]) -> Self {
        let entries: Vec<(u16, f64)> = bins
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u16, v))
            .collect();
        let total = entries.iter().map(|e| e.1).sum();
        Self { entries, total }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; BIN_COUNT];
        for &(b, v) in &self.entries {
            out[b as usize] = v;
        }
        out
    }

    #[inline]
    pub fn get(&self, bin: u16) -> f64 {
        match self.entries.binary_search_by_key(&bin, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total <= 0.0
    }

    pub fn nonzero_bins(&self) -> usize {
        self.entries.len()
    }

    pub fn normalized(&self) -> Self {
        if self.is_empty() {
            return Self::default();
        }
        let entries: Vec<(u16, f64)> = self.entries.iter().map(|&(b, v)| (b, v / self.total)).collect();
        let total = entries.iter().map(|e| e.1).sum();
        Self { entries, total }
    }

    /// `(1 − α)·self + α·other`, both taken normalized.
    pub fn blend(&self, other: &Self, alpha: f64) -> Self {
        let a = self.normalized();
        let b = other.normalized();
        let mut entries = Vec::with_capacity(a.entries.len() + b.entries.len());
        let (mut i, mut j) = (0, 0);
        while i < a.entries.len() || j < b.entries.len() {
            let ea = a.entries.get(i);
            let eb = b.entries.get(j);
            let (bin, va, vb) = match (ea, eb) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    (x.0, x.1, y.1)
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    (x.0, x.1, 0.0)
                }
                (Some(x), None) => {
                    i += 1;
                    (x.0, x.1, 0.0)
                }
                (_, Some(y)) => {
                    j += 1;
                    (y.0, 0.0, y.1)
                }
                (None, None) => unreachable!(),
            };
            let v = (1.0 - alpha) * va + alpha * vb;
            if v != 0.0 {
                entries.push((bin, v));
            }
        }
        let total = entries.iter().map(|e| e.1).sum();
        Self { entries, total }
    }
}

/// Histogram pair anchored to one reduced-mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct TclcHistogram {
    pub vertex_index: usize,
    pub fg: ColorHistogram,
    pub bg: ColorHistogram,
    pub initialized: bool,
    /// Frames in which this histogram was updated.
    pub updates: u32,
}

impl TclcHistogram {
    pub fn new(vertex_index: usize) -> Self {
        Self {
            vertex_index,
            fg: ColorHistogram::default(),
            bg: ColorHistogram::default(),
            initialized: false,
            updates: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TclcModel {
    pub histograms: Vec<TclcHistogram>,
    /// Region radius in pixels at full (level 1) resolution.
    pub radius: f64,
    pub alpha_f: f64,
    pub alpha_b: f64,
}

impl TclcModel {
    pub fn new(vertex_count: usize, radius: f64, alpha_f: f64, alpha_b: f64) -> Result<Self, SegmentationError> {
        if !(radius > 0.0) {
            return Err(SegmentationError::InvalidParameters(format!("radius {radius}")));
        }
        if !(0.0..=1.0).contains(&alpha_f) || !(0.0..=1.0).contains(&alpha_b) {
            return Err(SegmentationError::InvalidParameters(format!(
                "learning rates {alpha_f}, {alpha_b}"
            )));
        }
        Ok(Self {
            histograms: (0..vertex_count).map(TclcHistogram::new).collect(),
            radius,
            alpha_f,
            alpha_b,
        })
    }

    /// Radius scaled from the 640 px reference width to `width`.
    pub fn radius_for_width(radius_at_reference: f64, width: u32) -> f64 {
        radius_at_reference * width as f64 / REFERENCE_WIDTH as f64
    }

    pub fn initialized_count(&self) -> usize {
        self.histograms.iter().filter(|h| h.initialized).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), SegmentationError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(self.histograms.len() as u32).to_le_bytes())?;
        for v in [self.radius, self.alpha_f, self.alpha_b] {
            w.write_all(&v.to_le_bytes())?;
        }
        for h in &self.histograms {
            w.write_all(&(h.vertex_index as u32).to_le_bytes())?;
            w.write_all(&[h.initialized as u8])?;
            for hist in [&h.fg, &h.bg] {
                for v in hist.to_dense() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SegmentationError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(SegmentationError::Format("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != MODEL_VERSION {
            return Err(SegmentationError::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        let mut params = [0.0; 3];
        for p in &mut params {
            r.read_exact(&mut f64buf)?;
            *p = f64::from_le_bytes(f64buf);
        }
        let mut model = Self::new(0, params[0], params[1], params[2])?;
        let mut dense = vec![0.0; BIN_COUNT];
        for _ in 0..count {
            r.read_exact(&mut u32buf)?;
            let mut h = TclcHistogram::new(u32::from_le_bytes(u32buf) as usize);
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            h.initialized = flag[0] != 0;
            for side in 0..2 {
                for v in dense.iter_mut() {
                    r.read_exact(&mut f64buf)?;
                    *v = f64::from_le_bytes(f64buf);
                }
                let hist = ColorHistogram::from_dense(&dense);
                if side == 0 {
                    h.fg = hist;
                } else {
                    h.bg = hist;
                }
            }
            model.histograms.push(h);
        }
        Ok(model)
    }
}

/// A local region used in the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveRegion {
    pub vertex_index: usize,
    /// Projection of the vertex at full resolution.
    pub center: Pixel,
    /// `Σ H_e(Φ)` and `Σ 1 − H_e(Φ)` over the region at full resolution.
    pub eta_f: f64,
    pub eta_b: f64,
}

impl ActiveRegion {
    /// Integer pixel center at full resolution.
    pub fn pixel(&self) -> (i64, i64) {
        (self.center.x.round() as i64, self.center.y.round() as i64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveRegionSet {
    pub regions: Vec<ActiveRegion>,
}

impl ActiveRegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Horizontal spans `(dy, half_width)` of the pixel disc `‖x − c‖ < radius`,
/// scanned row by row like a midpoint circle.
pub fn disc_spans(radius: f64) -> Vec<(i64, i64)> {
    let r2 = radius * radius;
    let reach = radius.ceil() as i64;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        let rem = r2 - (dy * dy) as f64;
        if rem <= 0.0 {
            continue;
        }
        let mut half = rem.sqrt().floor() as i64;
        while half >= 0 && (half * half) as f64 >= rem {
            half -= 1;
        }
        while (((half + 1) * (half + 1)) as f64) < rem {
            half += 1;
        }
        if half >= 0 {
            out.push((dy, half));
        }
    }
    out
}

/// Calls `f(x, y)` for every in-image pixel of the disc around `center`.
pub fn for_each_disc_pixel(
    width: usize,
    height: usize,
    center: (i64, i64),
    spans: &[(i64, i64)],
    mut f: impl FnMut(usize, usize),
) {
    for &(dy, half) in spans {
        let y = center.1 + dy;
        if y < 0 || y >= height as i64 {
            continue;
        }
        let x0 = (center.0 - half).max(0);
        let x1 = (center.0 + half).min(width as i64 - 1);
        for x in x0..=x1 {
            f(x as usize, y as usize);
        }
    }
}

/// Projected reduced-mesh vertices within `λ·radius` of the contour; at most
/// `max_count` of them, drawn uniformly with `rng` when more qualify.
#[allow(clippy::too_many_arguments)]
pub fn select_centers<R: Rng>(
    reduced: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    field: &SignedDistanceField,
    lambda: f64,
    radius: f64,
    max_count: usize,
    rng: &mut R,
) -> Result<ActiveRegionSet, SegmentationError> {
    let limit = lambda * radius;
    let mut candidates: Vec<ActiveRegion> = Vec::new();
    for (i, v) in reduced.vertices.iter().enumerate() {
        let Ok(p) = project(k, pose, v) else { continue };
        let Some((x, y)) = k.pixel_index(&p) else { continue };
        if x >= field.width() || y >= field.height() {
            continue;
        }
        if field.phi_at(x, y).abs() <= limit {
            candidates.push(ActiveRegion {
                vertex_index: i,
                center: p,
                eta_f: 0.0,
                eta_b: 0.0,
            });
        }
    }
    if candidates.is_empty() {
        return Err(SegmentationError::NoVisibleCenters);
    }
    if candidates.len() > max_count {
        let mut picked = rand::seq::index::sample(rng, candidates.len(), max_count).into_vec();
        picked.sort_unstable();
        candidates = picked.into_iter().map(|i| candidates[i]).collect();
    }
    Ok(ActiveRegionSet { regions: candidates })
}

/// Fills `eta_f`, `eta_b` of every region from the smoothed Heaviside of `field`.
pub fn assign_region_weights(active: &mut ActiveRegionSet, field: &SignedDistanceField, radius: f64, s: f64) {
    let spans = disc_spans(radius);
    let (w, h) = (field.width(), field.height());
    active.regions.par_iter_mut().for_each(|r| {
        let (mut ef, mut eb) = (0.0, 0.0);
        for_each_disc_pixel(w, h, r.pixel(), &spans, |x, y| {
            let he = smoothed_heaviside(field.phi_at(x, y), s);
            ef += he;
            eb += 1.0 - he;
        });
        r.eta_f = ef;
        r.eta_b = eb;
    });
}

/// Raw foreground/background color counts of the disc around `center`.
pub fn scan_local_region(
    frame: &RgbImage,
    mask: &SilhouetteMask,
    j: u8,
    center: (i64, i64),
    radius: f64,
) -> (ColorHistogram, ColorHistogram) {
    let spans = disc_spans(radius);
    let (mut fg, mut bg) = (Vec::new(), Vec::new());
    for_each_disc_pixel(mask.width(), mask.height(), center, &spans, |x, y| {
        let bin = quantize(frame.get_pixel(x as u32, y as u32).0);
        if mask.get(x, y) == j {
            fg.push(bin);
        } else {
            bg.push(bin);
        }
    });
    (ColorHistogram::from_bins(fg), ColorHistogram::from_bins(bg))
}

/// Initializes or blends the histograms of every active region from `frame`.
pub fn update_model(
    model: &mut TclcModel,
    frame: &RgbImage,
    mask: &SilhouetteMask,
    j: u8,
    active: &ActiveRegionSet,
) {
    let scans: Vec<(usize, ColorHistogram, ColorHistogram)> = active
        .regions
        .par_iter()
        .map(|r| {
            let (fg, bg) = scan_local_region(frame, mask, j, r.pixel(), model.radius);
            (r.vertex_index, fg, bg)
        })
        .collect();
    let (alpha_f, alpha_b) = (model.alpha_f, model.alpha_b);
    for (vi, fg, bg) in scans {
        let Some(h) = model.histograms.get_mut(vi) else { continue };
        if !h.initialized {
            if fg.is_empty() || bg.is_empty() {
                continue;
            }
            h.fg = fg.normalized();
            h.bg = bg.normalized();
            h.initialized = true;
        } else {
            if !fg.is_empty() {
                h.fg = h.fg.blend(&fg, alpha_f);
            }
            if !bg.is_empty() {
                h.bg = h.bg.blend(&bg, alpha_b);
            }
        }
        h.updates += 1;
    }
}

/// Local posteriors `P_fi`, `P_bi` of color bin `bin`.
pub fn local_posteriors(h: &TclcHistogram, bin: u16, eta_f: f64, eta_b: f64) -> Result<(f64, f64), SegmentationError> {
    if !h.initialized {
        return Err(SegmentationError::Uninitialized(h.vertex_index));
    }
    let pf = h.fg.get(bin);
    let pb = h.bg.get(bin);
    let denom = (eta_f * pf + eta_b * pb).max(POSTERIOR_FLOOR);
    Ok((pf / denom, pb / denom))
}

/// Mean local posteriors over the regions whose disc contains pixel `(x, y)`.
/// Regions with uninitialized histograms are ignored.
pub fn averaged_posteriors(
    frame: &RgbImage,
    x: usize,
    y: usize,
    model: &TclcModel,
    active: &ActiveRegionSet,
) -> Result<(f64, f64), SegmentationError> {
    let bin = quantize(frame.get_pixel(x as u32, y as u32).0);
    let r2 = model.radius * model.radius;
    let (mut sf, mut sb, mut n) = (0.0, 0.0, 0usize);
    for r in &active.regions {
        let (cx, cy) = r.pixel();
        let (dx, dy) = ((x as i64 - cx) as f64, (y as i64 - cy) as f64);
        if dx * dx + dy * dy >= r2 {
            continue;
        }
        let Ok((pf, pb)) = local_posteriors(&model.histograms[r.vertex_index], bin, r.eta_f, r.eta_b) else {
            continue;
        };
        sf += pf;
        sb += pb;
        n += 1;
    }
    if n == 0 {
        return Err(SegmentationError::NotCovered(x, y));
    }
    Ok((sf / n as f64, sb / n as f64))
}

/// Averaged posteriors for a whole (possibly down-scaled) frame.
#[derive(Debug, Clone)]
pub struct PosteriorMaps {
    pub pf: Grid<f64>,
    pub pb: Grid<f64>,
    pub coverage: Grid<u16>,
}

impl PosteriorMaps {
    /// `(P̄_f, P̄_b)` at a pixel, `None` when not covered.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        (self.coverage.get(x, y) > 0).then(|| (self.pf.get(x, y), self.pb.get(x, y)))
    }
}

/// Evaluates the averaged posteriors of every pixel of `frame`, which is the
/// input frame down-scaled by `scale` (1, 1/2, 1/4, ...). Region centers and
/// radius scale with the image and the region weights with the pixel area.
pub fn posterior_maps(frame: &RgbImage, model: &TclcModel, active: &ActiveRegionSet, scale: f64) -> PosteriorMaps {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut pf = Grid::new(w, h, 0.0);
    let mut pb = Grid::new(w, h, 0.0);
    let mut coverage = Grid::new(w, h, 0u16);
    let radius = model.radius * scale;
    let spans = disc_spans(radius);
    let area = scale * scale;
    let bins: Vec<u16> = frame.pixels().map(|p| quantize(p.0)).collect();
    for r in &active.regions {
        let hist = &model.histograms[r.vertex_index];
        if !hist.initialized {
            continue;
        }
        let center = ((r.center.x * scale).round() as i64, (r.center.y * scale).round() as i64);
        let (eta_f, eta_b) = (r.eta_f * area, r.eta_b * area);
        for_each_disc_pixel(w, h, center, &spans, |x, y| {
            let (lf, lb) = local_posteriors(hist, bins[y * w + x], eta_f, eta_b).expect("initialized");
            let i = y * w + x;
            pf.data_mut()[i] += lf;
            pb.data_mut()[i] += lb;
            coverage.data_mut()[i] += 1;
        });
    }
    for i in 0..w * h {
        let n = coverage.data()[i];
        if n > 0 {
            pf.data_mut()[i] /= n as f64;
            pb.data_mut()[i] /= n as f64;
        }
    }
    PosteriorMaps { pf, pb, coverage }
}
