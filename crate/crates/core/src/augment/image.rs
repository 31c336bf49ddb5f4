use std::path::Path;

use image::{ImageBuffer as RgbBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

/// RGB image with channel-last `f32` samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image size {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::shape("image", &[height, width, 3], &[data.len()]));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {} at {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    /// Builds an image from a per-pixel function; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbBuffer::<Rgb<u8>, Vec<u8>>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    /// Encodes with the format implied by the file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Model input: `[H, W, 3]` tensor with `(v − mean) / std` per sample.
    pub fn to_tensor<T: crate::Scalar>(&self, mean: f32, std: f32) -> crate::Tensor<T> {
        let data = self
            .data
            .iter()
            .map(|&v| T::from_f64_lossy(f64::from((v - mean) / std)))
            .collect();
        crate::Tensor::from_vec([self.height, self.width, 3], data).expect("image tensor shape")
    }
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {width}x{height} is empty"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let axis = |dst: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = axis(width, img.width);
    let ys = axis(height, img.height);
    let mut data = Vec::with_capacity(width * height * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let (a, b, c, d) = (
                img.pixel(x0, y0),
                img.pixel(x1, y0),
                img.pixel(x0, y1),
                img.pixel(x1, y1),
            );
            for ch in 0..3 {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                data.push(top + (bottom - top) * fy);
            }
        }
    }
    Ok(ImageBuffer::from_raw_clamped(width, height, data))
}

/// Central `width × height` window; offsets are `floor((W − w)/2)`, `floor((H − h)/2)`.
pub fn center_crop(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if width == 0 || height == 0 || width > img.width || height > img.height {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {}x{} image to {width}x{height}",
            img.width, img.height
        )));
    }
    let (x0, y0) = ((img.width - width) / 2, (img.height - height) / 2);
    let mut data = Vec::with_capacity(width * height * 3);
    for y in y0..y0 + height {
        let start = (y * img.width + x0) * 3;
        data.extend_from_slice(&img.data[start..start + width * 3]);
    }
    Ok(ImageBuffer { width, height, data })
}

/// The deterministic inference geometry: square resize, then central crop.
pub fn resize_and_crop(img: &ImageBuffer, resize_to: usize, crop_to: usize) -> Result<ImageBuffer> {
    let resized = resize(img, resize_to, resize_to)?;
    center_crop(&resized, crop_to, crop_to)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient4() -> ImageBuffer {
        ImageBuffer::from_fn(4, 4, |x, y| {
            let v = (x + 4 * y) as f32 / 15.0;
            [v, v, v]
        })
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = ImageBuffer::from_fn(256, 256, |x, y| [x as f32 / 255.0, y as f32 / 255.0, 0.5]);
        assert_eq!(resize(&img, 256, 256).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(2, 2, [0.25, 0.5, 0.75]);
        for (w, h) in [(1, 1), (3, 7), (16, 5)] {
            let r = resize(&img, w, h).unwrap();
            assert!(r.data().chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
        }
    }

    #[test]
    fn downscale_matches_hand_bilinear() {
        // output pixel (i, j) samples source (2i + 0.5, 2j + 0.5): the mean of a 2x2 block
        let r = resize(&gradient4(), 2, 2).unwrap();
        let expected = [2.5f32, 4.5, 10.5, 12.5].map(|v| v / 15.0);
        for (k, want) in expected.iter().enumerate() {
            assert!(
                (r.data()[k * 3] - want).abs() < 1e-6,
                "{k}: {} vs {want}",
                r.data()[k * 3]
            );
        }
    }

    #[test]
    fn zero_target_is_an_error() {
        assert!(resize(&gradient4(), 0, 3).is_err());
    }

    #[test]
    fn crop_offsets() {
        let img = ImageBuffer::from_fn(5, 5, |x, y| [x as f32 / 4.0, y as f32 / 4.0, 0.0]);
        let c = center_crop(&img, 3, 3).unwrap();
        assert_eq!(c.pixel(0, 0), [0.25, 0.25, 0.0]);
        assert_eq!(c.pixel(2, 2), [0.75, 0.75, 0.0]);
        assert_eq!(center_crop(&img, 5, 5).unwrap(), img);
        assert!(center_crop(&img, 6, 5).is_err());

        let big = ImageBuffer::from_fn(256, 256, |x, y| [x as f32 / 255.0, y as f32 / 255.0, 0.0]);
        let c = center_crop(&big, 224, 224).unwrap();
        assert_eq!(c.pixel(0, 0), big.pixel(16, 16));
        assert_eq!(c.pixel(223, 223), big.pixel(239, 239));
    }

    #[test]
    fn crop_is_idempotent() {
        let img = ImageBuffer::from_fn(9, 7, |x, y| [x as f32 / 8.0, y as f32 / 6.0, 1.0]);
        let once = center_crop(&img, 4, 4).unwrap();
        assert_eq!(center_crop(&once, 4, 4).unwrap(), once);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageBuffer::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(ImageBuffer::new(1, 1, vec![0.0, 0.5]).is_err());
    }
}
