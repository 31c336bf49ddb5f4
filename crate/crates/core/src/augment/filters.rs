//! 2-D convolutions with reflect-101 borders.

use super::image::ImageBuffer;

/// Reflect-101 index: `-1 → 1`, `n → n − 2`.
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Integer-weighted kernel normalised by the weight sum.
///
/// Accumulating in `f64` keeps constant regions bit-exact: every weighted sum
/// of an `f32` value is exact and the final division recovers it.
pub(crate) fn convolve_weighted(img: &ImageBuffer, size: usize, weights: &[u32]) -> ImageBuffer {
    debug_assert_eq!(weights.len(), size * size);
    let total: f64 = weights.iter().map(|&w| f64::from(w)).sum();
    let kernel: Vec<f64> = weights.iter().map(|&w| f64::from(w)).collect();
    convolve(img, size, &kernel, total)
}

/// Real-valued kernel, no normalisation.
pub(crate) fn convolve_real(img: &ImageBuffer, size: usize, kernel: &[f64]) -> ImageBuffer {
    convolve(img, size, kernel, 1.0)
}

fn convolve(img: &ImageBuffer, size: usize, kernel: &[f64], divisor: f64) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let r = (size / 2) as isize;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = [0f64; 3];
            for ky in 0..size as isize {
                let sy = reflect101(y + ky - r, h);
                for kx in 0..size as isize {
                    let k = kernel[(ky as usize) * size + kx as usize];
                    if k == 0.0 {
                        continue;
                    }
                    let sx = reflect101(x + kx - r, w);
                    let i = (sy * w + sx) * 3;
                    for c in 0..3 {
                        acc[c] += k * f64::from(src[i + c]);
                    }
                }
            }
            out.extend(acc.map(|v| (v / divisor) as f32));
        }
    }
    ImageBuffer::from_raw_clamped(w, h, out)
}

/// `size × size` line through the centre at `angle_deg`, as 0/1 weights.
pub(crate) fn line_kernel(size: usize, angle_deg: f64) -> Vec<u32> {
    let mut k = vec![0u32; size * size];
    let c = (size / 2) as f64;
    let (s, co) = angle_deg.to_radians().sin_cos();
    // stretch so the line reaches the border along its major axis
    let half = c / co.abs().max(s.abs());
    let steps = 4 * size;
    for i in 0..=steps {
        let t = -half + 2.0 * half * i as f64 / steps as f64;
        let x = (c + t * co).round().clamp(0.0, (size - 1) as f64) as usize;
        let y = (c + t * s).round().clamp(0.0, (size - 1) as f64) as usize;
        k[y * size + x] = 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(3, 5), 3);
        assert_eq!(reflect101(-7, 1), 0);
        assert_eq!(reflect101(2, 2), 0);
    }

    #[test]
    fn identity_kernel() {
        let img = ImageBuffer::from_fn(5, 4, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.5]);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        assert_eq!(convolve_real(&img, 3, &k), img);
    }

    #[test]
    fn box_blur_of_constant_is_exact() {
        let img = ImageBuffer::filled(6, 5, [0.1, 0.7, 0.333]);
        for size in [3usize, 5, 7] {
            let out = convolve_weighted(&img, size, &vec![1; size * size]);
            assert_eq!(out, img);
        }
    }

    #[test]
    fn line_kernel_passes_through_centre() {
        for angle in [0.0, 45.0, 90.0, 133.0] {
            let k = line_kernel(5, angle);
            assert_eq!(k[12], 1);
            assert!(k.iter().sum::<u32>() >= 5);
        }
        let horizontal = line_kernel(3, 0.0);
        assert_eq!(horizontal, vec![0, 0, 0, 1, 1, 1, 0, 0, 0]);
    }
}
