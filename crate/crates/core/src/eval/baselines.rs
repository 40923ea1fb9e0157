//! Baseline input-transformation defenses: median filtering and JPEG
//! re-compression. Both are applied to the whole image, attacked or not.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::imaging::{quantize, Image};

use super::EvalError;

/// A whole-image baseline defense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    MedianFilter { kernel: usize },
    Jpeg { quality: u8 },
}

impl Baseline {
    pub fn apply(&self, image: &Image) -> Result<Image, EvalError> {
        match *self {
            Baseline::MedianFilter { kernel } => median_filter(image, kernel),
            Baseline::Jpeg { quality } => jpeg_roundtrip(image, quality),
        }
    }
}

/// Per-channel median over a square window with edge-clamped sampling.
pub fn median_filter(image: &Image, kernel: usize) -> Result<Image, EvalError> {
    if kernel % 2 == 0 {
        return Err(EvalError::EvenKernel { kernel });
    }
    if kernel < 3 {
        return Err(EvalError::KernelTooSmall { kernel });
    }
    let (w, h) = (image.width(), image.height());
    let half = (kernel / 2) as isize;
    let mut window = vec![0.0f32; kernel * kernel];
    let out = Image::from_fn(w, h, |x, y| {
        let mut px = [0.0f32; 3];
        for (c, out_c) in px.iter_mut().enumerate() {
            let mut n = 0;
            for dy in -half..=half {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -half..=half {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    window[n] = image.pixel(sx, sy)[c];
                    n += 1;
                }
            }
            window[..n].sort_unstable_by(f32::total_cmp);
            *out_c = window[n / 2];
        }
        px
    })
    .expect("median preserves range");
    Ok(out)
}

/// Encodes to baseline JPEG at the given quality and decodes back.
pub fn jpeg_roundtrip(image: &Image, quality: u8) -> Result<Image, EvalError> {
    if quality == 0 || quality > 100 {
        return Err(EvalError::BadQuality { quality });
    }
    let bytes: Vec<u8> = image.as_slice().iter().map(|&v| quantize(v)).collect();
    let mut encoded = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut encoded, quality)
        .encode(
            &bytes,
            image.width() as u32,
            image.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(EvalError::Codec)?;
    let decoded = image::ImageReader::with_format(Cursor::new(&encoded), image::ImageFormat::Jpeg)
        .decode()
        .map_err(EvalError::Codec)?
        .into_rgb8();
    let data: Vec<f32> = decoded.into_raw().iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(Image::from_raw(image.width(), image.height(), data)
        .expect("decoded JPEG matches source dimensions"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_constant_image_unchanged() {
        let img = Image::constant(16, 16, [0.4, 0.2, 0.7]).unwrap();
        assert_eq!(median_filter(&img, 3).unwrap(), img);
    }

    #[test]
    fn median_removes_isolated_salt_pixel() {
        let img = Image::from_fn(17, 17, |x, y| {
            if (x, y) == (8, 8) {
                [1.0; 3]
            } else {
                [0.25; 3]
            }
        })
        .unwrap();
        let out = median_filter(&img, 3).unwrap();
        assert_eq!(out.pixel(8, 8), [0.25; 3]);
    }

    #[test]
    fn median_preserves_step_edge() {
        // Vertical step: left half 0.2, right half 0.8. The median of any
        // 3x3 window stays on its side of the edge.
        let img = Image::from_fn(16, 16, |x, _| if x < 8 { [0.2; 3] } else { [0.8; 3] }).unwrap();
        let out = median_filter(&img, 3).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(out.pixel(x, y), img.pixel(x, y), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn median_rejects_even_or_tiny_kernels() {
        let img = Image::constant(16, 16, [0.5; 3]).unwrap();
        assert!(matches!(
            median_filter(&img, 4),
            Err(EvalError::EvenKernel { kernel: 4 })
        ));
        assert!(matches!(
            median_filter(&img, 1),
            Err(EvalError::KernelTooSmall { kernel: 1 })
        ));
    }

    #[test]
    fn jpeg_keeps_dimensions_and_range() {
        let img = Image::from_fn(20, 24, |x, y| {
            [
                x as f32 / 19.0,
                y as f32 / 23.0,
                ((x + y) % 5) as f32 / 4.0,
            ]
        })
        .unwrap();
        let out = jpeg_roundtrip(&img, 10).unwrap();
        assert_eq!(out.width(), 20);
        assert_eq!(out.height(), 24);
        assert!(out.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn jpeg_quality_100_is_nearly_lossless_on_flat_gray() {
        let img = Image::constant(16, 16, [0.5; 3]).unwrap();
        let out = jpeg_roundtrip(&img, 100).unwrap();
        let max_dev = out
            .as_slice()
            .iter()
            .zip(img.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_dev < 0.02, "max deviation {max_dev}");
    }

    #[test]
    fn lower_quality_increases_error_on_texture() {
        let img = Image::from_fn(32, 32, |x, y| {
            let v = if (x / 2 + y / 3) % 2 == 0 { 0.8 } else { 0.2 };
            [v, 1.0 - v, v]
        })
        .unwrap();
        let mae = |a: &Image, b: &Image| -> f64 {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| f64::from((x - y).abs()))
                .sum::<f64>()
                / a.as_slice().len() as f64
        };
        let low = jpeg_roundtrip(&img, 10).unwrap();
        let high = jpeg_roundtrip(&img, 90).unwrap();
        assert!(mae(&low, &img) > mae(&high, &img));
    }

    #[test]
    fn jpeg_rejects_bad_quality() {
        let img = Image::constant(16, 16, [0.5; 3]).unwrap();
        assert!(matches!(
            jpeg_roundtrip(&img, 0),
            Err(EvalError::BadQuality { quality: 0 })
        ));
    }
}
