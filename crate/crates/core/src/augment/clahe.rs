use super::color::{lab_to_rgb, rgb_to_lab};
use super::image::ImageBuffer;
use crate::error::{Error, Result};

const BINS: usize = 256;

/// Contrast-limited adaptive histogram equalisation of the Lab lightness channel.
///
/// The image is split into a `tiles_x × tiles_y` grid (capped at the image
/// size). Each tile's 256-bin histogram is clipped at
/// `clip_limit · tile_pixels / 256`, the excess is spread uniformly, and the
/// resulting equalisation maps are bilinearly blended between tile centres.
pub fn clahe(img: &ImageBuffer, clip_limit: f64, tiles: (usize, usize)) -> Result<ImageBuffer> {
    if !(clip_limit.is_finite() && clip_limit > 0.0) || tiles.0 == 0 || tiles.1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "clahe needs clip_limit > 0 and a non-empty grid, got {clip_limit} and {tiles:?}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (tx, ty) = (tiles.0.min(w), tiles.1.min(h));
    let labs: Vec<[f64; 3]> = img
        .data()
        .chunks_exact(3)
        .map(|p| rgb_to_lab([p[0], p[1], p[2]]))
        .collect();
    let bins: Vec<usize> = labs
        .iter()
        .map(|l| ((l[0] / 100.0 * 255.0).round().clamp(0.0, 255.0)) as usize)
        .collect();

    let bounds = |n: usize, t: usize, i: usize| (i * n / t, (i + 1) * n / t);
    let mut luts = vec![[0f64; BINS]; tx * ty];
    for j in 0..ty {
        let (y0, y1) = bounds(h, ty, j);
        for i in 0..tx {
            let (x0, x1) = bounds(w, tx, i);
            let mut hist = [0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bins[y * w + x]] += 1.0;
                }
            }
            let area = ((y1 - y0) * (x1 - x0)) as f64;
            let limit = (clip_limit * area / BINS as f64).max(1.0);
            let mut excess = 0.0;
            for v in hist.iter_mut() {
                if *v > limit {
                    excess += *v - limit;
                    *v = limit;
                }
            }
            let share = excess / BINS as f64;
            let lut = &mut luts[j * tx + i];
            let mut cdf = 0.0;
            for (b, v) in hist.iter().enumerate() {
                cdf += v + share;
                lut[b] = (cdf / area * 255.0).clamp(0.0, 255.0);
            }
        }
    }

    // tile centres in pixel coordinates, then the pair of neighbouring tiles and weight
    let locate = |p: usize, n: usize, t: usize| -> (usize, usize, f64) {
        let tile = n as f64 / t as f64;
        let pos = (p as f64 + 0.5) / tile - 0.5;
        if pos <= 0.0 {
            (0, 0, 0.0)
        } else if pos >= (t - 1) as f64 {
            (t - 1, t - 1, 0.0)
        } else {
            let a = pos.floor() as usize;
            (a, a + 1, pos - a as f64)
        }
    };
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let (j0, j1, fy) = locate(y, h, ty);
        for x in 0..w {
            let (i0, i1, fx) = locate(x, w, tx);
            let b = bins[y * w + x];
            let top = luts[j0 * tx + i0][b] * (1.0 - fx) + luts[j0 * tx + i1][b] * fx;
            let bottom = luts[j1 * tx + i0][b] * (1.0 - fx) + luts[j1 * tx + i1][b] * fx;
            let l = (top * (1.0 - fy) + bottom * fy) / 255.0 * 100.0;
            let lab = labs[y * w + x];
            out.extend(lab_to_rgb([l, lab[1], lab[2]]));
        }
    }
    Ok(ImageBuffer::from_raw_clamped(w, h, out))
}
