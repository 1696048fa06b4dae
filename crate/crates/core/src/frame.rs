//! RGB frame helpers: the image pyramid and PNG I/O.

use std::path::Path;

pub use image::RgbImage;

/// Next coarser pyramid level. A separable `[1 2 1] / 4` blur is evaluated at
/// even pixels only, so coarse pixel `(x, y)` is centered on fine pixel
/// `(2x, 2y)` and the halved intrinsics stay exact.
pub fn downsample(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    let (nw, nh) = ((w / 2).max(1), (h / 2).max(1));
    let clamp = |v: i64, n: u32| v.clamp(0, n as i64 - 1) as u32;
    const TAPS: [(i64, u32); 3] = [(-1, 1), (0, 2), (1, 1)];
    RgbImage::from_fn(nw, nh, |x, y| {
        let (cx, cy) = (2 * x as i64, 2 * y as i64);
        let mut acc = [0u32; 3];
        for (dy, wy) in TAPS {
            for (dx, wx) in TAPS {
                let p = img.get_pixel(clamp(cx + dx, w), clamp(cy + dy, h));
                for c in 0..3 {
                    acc[c] += wx * wy * p[c] as u32;
                }
            }
        }
        image::Rgb(acc.map(|a| ((a + 8) / 16) as u8))
    })
}

/// Levels `1..=levels`, index 0 being the input itself.
pub fn pyramid(img: &RgbImage, levels: usize) -> Vec<RgbImage> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, image::ImageError> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<(), image::ImageError> {
    img.save_with_format(path, image::ImageFormat::Png)
}
