//! Inverse-mapped warps sampled bilinearly with reflect-101 borders.

use nalgebra::{SMatrix, SVector};

use super::filters::reflect101;
use super::image::ImageBuffer;
use crate::error::{Error, Result};

fn sample(img: &ImageBuffer, sx: f64, sy: f64) -> [f32; 3] {
    let (w, h) = (img.width(), img.height());
    let x0 = sx.floor();
    let y0 = sy.floor();
    let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let (xa, xb) = (reflect101(x0, w), reflect101(x0 + 1, w));
    let (ya, yb) = (reflect101(y0, h), reflect101(y0 + 1, h));
    let (a, b, c, d) = (
        img.pixel(xa, ya),
        img.pixel(xb, ya),
        img.pixel(xa, yb),
        img.pixel(xb, yb),
    );
    let mut out = [0f32; 3];
    for ch in 0..3 {
        let top = a[ch] + (b[ch] - a[ch]) * fx;
        let bottom = c[ch] + (d[ch] - c[ch]) * fx;
        out[ch] = top + (bottom - top) * fy;
    }
    out
}

/// Output pixel `(x, y)` takes the source value at `map(x, y)`.
pub(crate) fn remap(img: &ImageBuffer, map: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x as f64, y as f64);
            let (sx, sy) = if sx.is_finite() && sy.is_finite() {
                (sx, sy)
            } else {
                (x as f64, y as f64)
            };
            out.extend(sample(img, sx, sy));
        }
    }
    ImageBuffer::from_raw_clamped(w, h, out)
}

/// Rotation by `angle_deg` and scaling about the centre, then a shift given as
/// fractions of width and height.
pub(crate) fn shift_scale_rotate(img: &ImageBuffer, dx: f64, dy: f64, scale: f64, angle_deg: f64) -> ImageBuffer {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (tx, ty) = (dx * w, dy * h);
    remap(img, |x, y| {
        let (u, v) = (x - cx - tx, y - cy - ty);
        ((c * u + s * v) / scale + cx, (-s * u + c * v) / scale + cy)
    })
}

/// Homography taking `from[i]` to `to[i]`.
pub(crate) fn homography(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Result<SMatrix<f64, 3, 3>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (&(x, y), &(u, v))) in from.iter().zip(&to).enumerate() {
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("degenerate perspective quadrilateral".into()))?;
    Ok(SMatrix::<f64, 3, 3>::new(
        sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0,
    ))
}

/// Stretches the quadrilateral with corners `quad` (fractions of the image,
/// clockwise from top-left) over the whole output.
pub(crate) fn perspective(img: &ImageBuffer, quad: [(f64, f64); 4]) -> Result<ImageBuffer> {
    let (w, h) = ((img.width() - 1) as f64, (img.height() - 1) as f64);
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let target = quad.map(|(fx, fy)| (fx * w, fy * h));
    if w == 0.0 || h == 0.0 {
        return Ok(img.clone());
    }
    let m = homography(corners, target)?;
    Ok(remap(img, |x, y| {
        let p = m * SVector::<f64, 3>::new(x, y, 1.0);
        (p[0] / p[2], p[1] / p[2])
    }))
}

/// Radial lens distortion `r' = r (1 + k r² + k r⁴)` with the optical centre
/// shifted by `(dx, dy)` pixels; focal lengths are the image dimensions.
pub(crate) fn optical_distortion(img: &ImageBuffer, k: f64, dx: f64, dy: f64) -> ImageBuffer {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = (w * 0.5 + dx, h * 0.5 + dy);
    remap(img, |x, y| {
        let (u, v) = ((x - cx) / w, (y - cy) / h);
        let r2 = u * u + v * v;
        let f = 1.0 + k * r2 + k * r2 * r2;
        (u * f * w + cx, v * f * h + cy)
    })
}

/// Piecewise-linear map from evenly spaced destination knots to source knots
/// whose spacing is scaled by `steps`.
fn grid_axis(n: usize, steps: &[f64]) -> Vec<f64> {
    let extent = (n - 1) as f64;
    let cells = steps.len();
    let cell = extent / cells as f64;
    let mut src = Vec::with_capacity(cells + 1);
    src.push(0.0);
    for (i, s) in steps.iter().enumerate() {
        let next = if i + 1 == cells {
            extent
        } else {
            (src[i] + cell * s).clamp(0.0, extent)
        };
        src.push(next);
    }
    (0..n)
        .map(|p| {
            let pos = p as f64 / cell;
            let i = (pos.floor() as usize).min(cells - 1);
            let t = pos - i as f64;
            src[i] + (src[i + 1] - src[i]) * t
        })
        .collect()
}

pub(crate) fn grid_distortion(img: &ImageBuffer, xsteps: &[f64], ysteps: &[f64]) -> ImageBuffer {
    if img.width() < 2 || img.height() < 2 || xsteps.is_empty() || ysteps.is_empty() {
        return img.clone();
    }
    let xs = grid_axis(img.width(), xsteps);
    let ys = grid_axis(img.height(), ysteps);
    remap(img, |x, y| (xs[x as usize], ys[y as usize]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ImageBuffer {
        ImageBuffer::from_fn(9, 7, |x, y| [x as f32 / 8.0, y as f32 / 6.0, 0.5])
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let img = ramp();
        assert_eq!(shift_scale_rotate(&img, 0.0, 0.0, 1.0, 0.0), img);
        assert_eq!(optical_distortion(&img, 0.0, 0.0, 0.0), img);
        assert_eq!(grid_distortion(&img, &[1.0; 5], &[1.0; 5]), img);
        let unit = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let p = perspective(&img, unit).unwrap();
        assert!(p.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-5));
    }

    #[test]
    fn half_turn_reverses_the_image() {
        let img = ramp();
        let out = shift_scale_rotate(&img, 0.0, 0.0, 1.0, 180.0);
        for y in 0..7 {
            for x in 0..9 {
                let (a, b) = (out.pixel(x, y), img.pixel(8 - x, 6 - y));
                assert!((0..3).all(|c| (a[c] - b[c]).abs() < 1e-5));
            }
        }
    }

    #[test]
    fn homography_maps_corners() {
        let from = [(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (0.0, 3.0)];
        let to = [(0.3, 0.1), (3.8, 0.2), (3.6, 2.9), (0.1, 2.7)];
        let m = homography(from, to).unwrap();
        for (f, t) in from.iter().zip(&to) {
            let p = m * SVector::<f64, 3>::new(f.0, f.1, 1.0);
            assert!((p[0] / p[2] - t.0).abs() < 1e-9 && (p[1] / p[2] - t.1).abs() < 1e-9);
        }
        let collapsed = [(0.0, 0.0); 4];
        assert!(homography(from, collapsed).is_err());
    }

    #[test]
    fn grid_axis_endpoints_fixed() {
        let xs = grid_axis(11, &[1.3, 0.7, 1.1, 0.9, 1.2]);
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[10], 10.0);
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
    }
}
