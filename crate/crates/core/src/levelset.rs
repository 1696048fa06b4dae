//! Contours, exact signed Euclidean distance transforms and the smoothed
//! Heaviside/Dirac pair of the level-set embedding.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::grid::Grid;
use crate::raster::SilhouetteMask;

#[derive(Debug, thiserror::Error)]
pub enum LevelSetError {
    #[error("object {0} has no pixels in the mask")]
    EmptyRegion(u8),
    #[error("pixel ({0}, {1}) is on the image border")]
    BorderPixel(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Foreground pixels of object `j` with a 4-neighbour outside its region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContourSet {
    pub pixels: Vec<(usize, usize)>,
}

fn is_contour(mask: &SilhouetteMask, j: u8, x: usize, y: usize) -> bool {
    if mask.get(x, y) != j {
        return false;
    }
    let (x, y) = (x as i64, y as i64);
    [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
        .iter()
        .any(|&(nx, ny)| mask.get_checked(nx, ny) != Some(j))
}

pub fn extract_contour(mask: &SilhouetteMask, j: u8) -> Result<ContourSet, LevelSetError> {
    let mut pixels = Vec::new();
    let mut any = false;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == j {
                any = true;
                if is_contour(mask, j, x, y) {
                    pixels.push((x, y));
                }
            }
        }
    }
    if !any {
        return Err(LevelSetError::EmptyRegion(j));
    }
    Ok(ContourSet { pixels })
}

/// Level-set embedding of one object's silhouette.
#[derive(Debug, Clone)]
pub struct SignedDistanceField {
    pub object: u8,
    /// Signed distance in pixels: negative inside, positive outside, 0 on the contour.
    pub phi: Grid<f64>,
    /// Nearest contour pixel of every pixel.
    pub closest: Grid<(u32, u32)>,
    /// `|phi| ≤ band`.
    pub band_mask: Grid<bool>,
    pub band: f64,
}

impl SignedDistanceField {
    pub fn width(&self) -> usize {
        self.phi.width()
    }

    pub fn height(&self) -> usize {
        self.phi.height()
    }

    #[inline]
    pub fn phi_at(&self, x: usize, y: usize) -> f64 {
        self.phi.get(x, y)
    }

    #[inline]
    pub fn closest_at(&self, x: usize, y: usize) -> (usize, usize) {
        let (cx, cy) = self.closest.get(x, y);
        (cx as usize, cy as usize)
    }

    #[inline]
    pub fn in_band(&self, x: usize, y: usize) -> bool {
        self.band_mask.get(x, y)
    }

    /// Writes `phi` as little-endian f32 with a 16-byte header
    /// (u32 width, u32 height, f32 band, u32 object index).
    pub fn write_raw(&self, path: &Path) -> Result<(), LevelSetError> {
        let mut buf = Vec::with_capacity(16 + 4 * self.phi.data().len());
        buf.extend_from_slice(&(self.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.band as f32).to_le_bytes());
        buf.extend_from_slice(&(self.object as u32).to_le_bytes());
        for v in self.phi.data() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }
}

/// Parses the raw export back into `(width, height, band, object, phi)`.
pub fn read_raw_phi(path: &Path) -> Result<(usize, usize, f32, u32, Vec<f32>), LevelSetError> {
    let bytes = std::fs::read(path)?;
    let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "truncated distance raster");
    if bytes.len() < 16 {
        return Err(bad().into());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (w, h) = (u32_at(0) as usize, u32_at(4) as usize);
    let band = f32::from_bits(u32_at(8));
    let object = u32_at(12);
    if bytes.len() != 16 + 4 * w * h {
        return Err(bad().into());
    }
    let phi = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((w, h, band, object, phi))
}

/// Lower envelope of parabolas `f(p) + (q − p)²` over integer sites.
///
/// `f[p] == None` marks an absent site. Returns, for every `q`, the squared
/// distance and minimizing site, or `None` when no site exists. Ties resolve
/// to the smallest site. All comparisons are exact integer arithmetic.
fn envelope_1d(f: &[Option<i64>], out: &mut [Option<(i64, usize)>]) {
    let n = f.len();
    // Site indices in the envelope and the left boundaries of their intervals,
    // stored as fractions (numerator, denominator) with positive denominators.
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<(i64, i64)> = Vec::with_capacity(n);
    let key = |p: usize| f[p].expect("site") + (p * p) as i64;
    // Intersection abscissa of parabolas at sites p < q.
    let cross = |q: usize, p: usize| (key(q) - key(p), 2 * (q as i64 - p as i64));
    for q in 0..n {
        if f[q].is_none() {
            continue;
        }
        loop {
            let Some(&last) = v.last() else {
                v.push(q);
                z.push((i64::MIN, 1));
                break;
            };
            let s = cross(q, last);
            let zl = *z.last().expect("paired with v");
            // s <= z[k]  ⇔  s.0 * zl.1 <= zl.0 * s.1 (denominators positive)
            let dominated = zl.0 != i64::MIN && (s.0 as i128) * (zl.1 as i128) <= (zl.0 as i128) * (s.1 as i128);
            if dominated {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = None);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        // advance while z[k+1] < q
        while k + 1 < v.len() && (z[k + 1].0 as i128) < (q as i128) * (z[k + 1].1 as i128) {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *o = Some((d * d + f[p].expect("site"), p));
    }
}

/// Exact signed Euclidean distance transform of object `j`.
///
/// Two separable passes of the lower-envelope transform: rows first, then
/// columns, each parallel over independent lines. Closest contour pixels are
/// tracked alongside; among equidistant contour pixels the one with the
/// smallest row, then smallest column is reported.
pub fn signed_distance_transform(mask: &SilhouetteMask, j: u8, band: f64) -> Result<SignedDistanceField, LevelSetError> {
    let (w, h) = (mask.width(), mask.height());
    let mut any = false;
    let mut seeds = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == j {
                any = true;
                seeds[y * w + x] = is_contour(mask, j, x, y);
            }
        }
    }
    if !any {
        return Err(LevelSetError::EmptyRegion(j));
    }

    // Pass 1: per row, squared horizontal distance to the nearest seed column.
    let mut rows: Vec<Option<(i64, usize)>> = vec![None; w * h];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let f: Vec<Option<i64>> = (0..w).map(|x| seeds[y * w + x].then_some(0)).collect();
        envelope_1d(&f, out);
    });

    // Pass 2: per column over the row results.
    let columns: Vec<Vec<Option<(i64, usize)>>> = (0..w)
        .into_par_iter()
        .map(|x| {
            let f: Vec<Option<i64>> = (0..h).map(|y| rows[y * w + x].map(|(d, _)| d)).collect();
            let mut out = vec![None; h];
            envelope_1d(&f, &mut out);
            out
        })
        .collect();

    let mut phi = Grid::new(w, h, 0.0);
    let mut closest = Grid::new(w, h, (0u32, 0u32));
    let mut band_mask = Grid::new(w, h, false);
    for x in 0..w {
        for y in 0..h {
            let (d2, row) = columns[x][y].expect("at least one contour pixel");
            let (_, col) = rows[row * w + x].expect("row has a seed");
            let d = (d2 as f64).sqrt();
            let signed = if mask.get(x, y) == j { -d } else { d };
            phi.set(x, y, signed);
            closest.set(x, y, (col as u32, row as u32));
            band_mask.set(x, y, d <= band);
        }
    }
    Ok(SignedDistanceField {
        object: j,
        phi,
        closest,
        band_mask,
        band,
    })
}

/// Central-difference gradient of `phi`.
pub fn sdf_gradient(field: &SignedDistanceField, x: usize, y: usize) -> Result<[f64; 2], LevelSetError> {
    if x == 0 || y == 0 || x + 1 >= field.width() || y + 1 >= field.height() {
        return Err(LevelSetError::BorderPixel(x, y));
    }
    let p = &field.phi;
    Ok([
        (p.get(x + 1, y) - p.get(x - 1, y)) * 0.5,
        (p.get(x, y + 1) - p.get(x, y - 1)) * 0.5,
    ])
}

/// `H_e(φ) = (π/2 − atan(s·φ)) / π`, close to 1 inside and 0 outside.
#[inline]
pub fn smoothed_heaviside(phi: f64, s: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 - (s * phi).atan()) / std::f64::consts::PI
}

/// `δ_e(φ) = s / (π·φ²·s² + π) = −dH_e/dφ`.
#[inline]
pub fn smoothed_dirac(phi: f64, s: f64) -> f64 {
    s / (std::f64::consts::PI * phi * phi * s * s + std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, inside: impl Fn(usize, usize) -> bool) -> SilhouetteMask {
        let mut m = Grid::new(w, h, 0u8);
        for y in 0..h {
            for x in 0..w {
                if inside(x, y) {
                    m.set(x, y, 1);
                }
            }
        }
        m
    }

    #[test]
    fn contour_of_full_3x3() {
        let m = mask_from(3, 3, |_, _| true);
        let c = extract_contour(&m, 1).unwrap();
        assert_eq!(c.pixels.len(), 8);
        assert!(!c.pixels.contains(&(1, 1)));
    }

    #[test]
    fn contour_of_single_pixel_and_empty() {
        let m = mask_from(10, 10, |x, y| (x, y) == (5, 5));
        assert_eq!(extract_contour(&m, 1).unwrap().pixels, vec![(5, 5)]);
        assert!(matches!(extract_contour(&m, 2), Err(LevelSetError::EmptyRegion(2))));
        assert!(signed_distance_transform(&m, 2, 8.0).is_err());
    }

    #[test]
    fn sdt_of_single_pixel() {
        let m = mask_from(12, 12, |x, y| (x, y) == (5, 5));
        let f = signed_distance_transform(&m, 1, 8.0).unwrap();
        assert_eq!(f.phi_at(5, 5), 0.0);
        assert_eq!(f.phi_at(5, 8), 3.0);
        assert_eq!(f.closest_at(5, 8), (5, 5));
        assert!((f.phi_at(8, 9) - 5.0).abs() < 1e-12);
        assert!(f.in_band(5, 8) && !f.in_band(11, 11));
    }

    #[test]
    fn sdt_of_half_plane() {
        // The image border counts as outside, so the foreground side is also
        // bounded by the border rows and the first column.
        let (w, h, c) = (40usize, 40usize, 20usize);
        let m = mask_from(w, h, |x, _| x <= c);
        let f = signed_distance_transform(&m, 1, 8.0).unwrap();
        for y in 0..h {
            for x in c + 1..w {
                assert_eq!(f.phi_at(x, y), (x - c) as f64, "at {x},{y}");
                assert_eq!(f.closest_at(x, y), (c, y));
            }
            for x in 0..=c {
                if c - x < x.min(y).min(h - 1 - y) {
                    assert_eq!(f.phi_at(x, y), -((c - x) as f64), "at {x},{y}");
                }
            }
        }
        for y in 10..30 {
            for x in 13..39 {
                let g = sdf_gradient(&f, x, y).unwrap();
                if x != c && x != c + 1 {
                    assert_eq!(g, [1.0, 0.0]);
                }
            }
        }
        assert!(matches!(sdf_gradient(&f, 0, 3), Err(LevelSetError::BorderPixel(0, 3))));
    }

    #[test]
    fn ties_prefer_smallest_row_then_column() {
        // Two contour pixels equidistant from (5, 5): (5, 2) and (5, 8), and (2, 5), (8, 5).
        let mut m = Grid::new(11, 11, 0u8);
        for p in [(5, 2), (5, 8), (2, 5), (8, 5)] {
            m.set(p.0, p.1, 1);
        }
        let f = signed_distance_transform(&m, 1, 8.0).unwrap();
        assert_eq!(f.phi_at(5, 5), 3.0);
        assert_eq!(f.closest_at(5, 5), (5, 2));
        // (2, 5) vs (8, 5) at (5, 7)? distances 13 vs 13 vs (5,8)=1 → (5,8)
        assert_eq!(f.closest_at(5, 7), (5, 8));
        // Equidistant from (2,5) and (8,5) only: (5, 5±0) handled above; use row 5 → smaller column wins
        let mut m2 = Grid::new(11, 3, 0u8);
        m2.set(2, 1, 1);
        m2.set(8, 1, 1);
        let f2 = signed_distance_transform(&m2, 1, 8.0).unwrap();
        assert_eq!(f2.closest_at(5, 1), (2, 1));
    }

    #[test]
    fn gradient_magnitude_near_circle() {
        let (cx, cy, r) = (64.0, 64.0, 30.0);
        let m = mask_from(128, 128, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        });
        let f = signed_distance_transform(&m, 1, 8.0).unwrap();
        let (mut total, mut good) = (0, 0);
        for y in 1..127 {
            for x in 1..127 {
                let d = f.phi_at(x, y).abs();
                if (2.0..=8.0).contains(&d) {
                    let g = sdf_gradient(&f, x, y).unwrap();
                    let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    total += 1;
                    if (0.9..=1.1).contains(&n) {
                        good += 1;
                    }
                }
            }
        }
        // Central differences straddle the ridges where the nearest digital
        // contour pixel switches; away from those the magnitude is ~1.
        assert!(good * 100 >= total * 95, "{good}/{total}");
    }

    #[test]
    fn heaviside_values() {
        assert_eq!(smoothed_heaviside(0.0, 1.2), 0.5);
        assert!((smoothed_heaviside(-1e12, 1.2) - 1.0).abs() < 1e-12);
        // (π/2 − atan(9.6)) / π
        let expected = (std::f64::consts::FRAC_PI_2 - 9.6f64.atan()) / std::f64::consts::PI;
        assert!((smoothed_heaviside(8.0, 1.2) - expected).abs() < 1e-15);
        assert!((smoothed_heaviside(8.0, 1.2) - 0.03304).abs() < 1e-5);
    }

    #[test]
    fn dirac_values() {
        assert!((smoothed_dirac(0.0, 1.2) - 1.2 / std::f64::consts::PI).abs() < 1e-15);
        assert!((smoothed_dirac(0.0, 1.2) - 0.38197).abs() < 1e-5);
        for phi in [0.3, 2.0, 7.5] {
            assert_eq!(smoothed_dirac(phi, 1.2), smoothed_dirac(-phi, 1.2));
        }
    }

    #[test]
    fn raw_export_round_trip() {
        let m = mask_from(7, 5, |x, y| x > 1 && y > 1);
        let f = signed_distance_transform(&m, 1, 8.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        f.write_raw(&path).unwrap();
        let (w, h, band, obj, phi) = read_raw_phi(&path).unwrap();
        assert_eq!((w, h, band, obj), (7, 5, 8.0, 1));
        assert_eq!(phi[3 * 7 + 4], f.phi_at(4, 3) as f32);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 4 * 35);
    }
}
