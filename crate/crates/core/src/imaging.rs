//! Float images, binary masks, rectangle geometry, and PNG persistence.
//!
//! Images are RGB rasters with per-channel intensities in `[0, 1]`, stored
//! row-major and immutable after construction. Binary masks share the raster
//! layout and mark pixels as perturbed/defended (`true`) or untouched
//! (`false`). The PNG boundary quantizes with round-half-up so that an
//! 8-bit-quantized image survives a save/load round trip bit for bit.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::ImageEncoder;
use thiserror::Error;

/// Smallest accepted image side. The smallest defensive window is 2x2; below
/// 16 pixels the window grids and sticker sizes stop being meaningful.
pub const MIN_DIMENSION: usize = 16;

/// Errors from image and mask construction or persistence.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PNG: {0}")]
    MalformedPng(#[from] image::ImageError),
    #[error("unsupported PNG bit depth, expected 8-bit channels")]
    UnsupportedBitDepth,
    #[error("unsupported PNG color type, expected RGB or RGBA")]
    UnsupportedColorType,
    #[error("image is {width}x{height}, minimum is {MIN_DIMENSION}x{MIN_DIMENSION}")]
    TooSmall { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height} raster")]
    BadBufferLength {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("channel value {value} outside [0, 1]")]
    OutOfRange { value: f32 },
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("rect {rect:?} escapes a {width}x{height} raster")]
    RectOutOfBounds {
        rect: Rect,
        width: usize,
        height: usize,
    },
    #[error("mask PNG pixel value {value} is neither 0 nor 255")]
    InvalidMaskPixel { value: u8 },
}

/// Axis-aligned pixel rectangle, `x`/`y` top-left, `w`/`h` extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    /// Whether the rect lies fully inside a `width` x `height` raster.
    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w > 0
            && self.h > 0
            && self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// RGB image with intensities in `[0, 1]`, row-major, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from an interleaved RGB buffer, validating the range
    /// and minimum-size invariants.
    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImagingError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(ImagingError::TooSmall { width, height });
        }
        if data.len() != width * height * 3 {
            return Err(ImagingError::BadBufferLength {
                len: data.len(),
                width,
                height,
            });
        }
        for &value in &data {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImagingError::OutOfRange { value });
            }
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<Self, ImagingError>
    where
        F: FnMut(usize, usize) -> [f32; 3],
    {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image::from_raw(width, height, data)
    }

    /// Constant-color image.
    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, ImagingError> {
        Image::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB buffer, row-major.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copy with `rect` filled by a flat color. The rect must fit.
    pub fn with_rect_filled(&self, rect: Rect, rgb: [f32; 3]) -> Result<Image, ImagingError> {
        if !rect.fits_in(self.width, self.height) {
            return Err(ImagingError::RectOutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            });
        }
        for &value in &rgb {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImagingError::OutOfRange { value });
            }
        }
        let mut data = self.data.clone();
        for y in rect.y..rect.y + rect.h {
            let row = (y * self.width + rect.x) * 3;
            for px in data[row..row + rect.w * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&rgb);
            }
        }
        Ok(Image {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Decodes an 8-bit RGB or RGBA PNG; alpha is discarded, channel bytes map
    /// to intensities by `v / 255`.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
        let decoded = image::ImageReader::with_format(Cursor::new(bytes), image::ImageFormat::Png)
            .decode()?;
        let (rgb, width, height) = match decoded {
            image::DynamicImage::ImageRgb8(buf) => {
                let (w, h) = (buf.width() as usize, buf.height() as usize);
                (buf.into_raw(), w, h)
            }
            image::DynamicImage::ImageRgba8(buf) => {
                let (w, h) = (buf.width() as usize, buf.height() as usize);
                let mut rgb = Vec::with_capacity(w * h * 3);
                for px in buf.into_raw().chunks_exact(4) {
                    rgb.extend_from_slice(&px[..3]);
                }
                (rgb, w, h)
            }
            image::DynamicImage::ImageLuma16(_)
            | image::DynamicImage::ImageLumaA16(_)
            | image::DynamicImage::ImageRgb16(_)
            | image::DynamicImage::ImageRgba16(_)
            | image::DynamicImage::ImageRgb32F(_)
            | image::DynamicImage::ImageRgba32F(_) => {
                return Err(ImagingError::UnsupportedBitDepth)
            }
            _ => return Err(ImagingError::UnsupportedColorType),
        };
        let data = rgb.iter().map(|&b| f32::from(b) / 255.0).collect();
        Image::from_raw(width, height, data)
    }

    /// Encodes as an 8-bit RGB PNG with round-half-up quantization.
    pub fn encode_png(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(
                &bytes,
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::Rgb8,
            )
            .expect("in-memory PNG encoding cannot fail");
        out
    }
}

/// `round(v * 255)`, round half up.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v * 255.0).round() as u8
}

/// Reads an 8-bit RGB/RGBA PNG from disk.
pub fn load_png(path: &Path) -> Result<Image, ImagingError> {
    let bytes = std::fs::read(path).map_err(|source| ImagingError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Image::decode_png(&bytes)
}

/// Writes an image to disk as an 8-bit RGB PNG.
pub fn save_png(image: &Image, path: &Path) -> Result<(), ImagingError> {
    std::fs::write(path, image.encode_png()).map_err(|source| ImagingError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Rec. 601 luminance of an RGB pixel in `[0, 1]`.
#[inline]
pub fn luminance(rgb: [f32; 3]) -> f32 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Boolean raster marking masked pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-zero mask.
    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> bool,
    {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of masked pixels.
    pub fn coverage(&self) -> f64 {
        self.count_ones() as f64 / (self.width * self.height) as f64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims_as_image(&self, image: &Image) -> bool {
        self.width == image.width() && self.height == image.height()
    }

    /// Pixelwise union; dimensions must match.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, ImagingError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImagingError::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    /// Whether every masked pixel of `self` is also masked in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }

    /// Decodes a mask PNG: every pixel must be pure 0 or pure 255, grayscale
    /// or RGB with equal channels.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
        let decoded = image::ImageReader::with_format(Cursor::new(bytes), image::ImageFormat::Png)
            .decode()?;
        let (width, height, bits) = match decoded {
            image::DynamicImage::ImageLuma8(buf) => {
                let (w, h) = (buf.width() as usize, buf.height() as usize);
                let bits = buf
                    .into_raw()
                    .iter()
                    .map(|&b| byte_to_bit(b))
                    .collect::<Result<Vec<bool>, _>>()?;
                (w, h, bits)
            }
            image::DynamicImage::ImageRgb8(buf) => {
                let (w, h) = (buf.width() as usize, buf.height() as usize);
                let mut bits = Vec::with_capacity(w * h);
                for px in buf.into_raw().chunks_exact(3) {
                    if px[0] != px[1] || px[1] != px[2] {
                        return Err(ImagingError::InvalidMaskPixel { value: px[1] });
                    }
                    bits.push(byte_to_bit(px[0])?);
                }
                (w, h, bits)
            }
            image::DynamicImage::ImageLuma16(_)
            | image::DynamicImage::ImageLumaA16(_)
            | image::DynamicImage::ImageRgb16(_)
            | image::DynamicImage::ImageRgba16(_)
            | image::DynamicImage::ImageRgb32F(_)
            | image::DynamicImage::ImageRgba32F(_) => {
                return Err(ImagingError::UnsupportedBitDepth)
            }
            _ => return Err(ImagingError::UnsupportedColorType),
        };
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    /// Encodes as a grayscale PNG, 0 for clear and 255 for masked.
    pub fn encode_png(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(
                &bytes,
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::L8,
            )
            .expect("in-memory PNG encoding cannot fail");
        out
    }
}

fn byte_to_bit(b: u8) -> Result<bool, ImagingError> {
    match b {
        0 => Ok(false),
        255 => Ok(true),
        value => Err(ImagingError::InvalidMaskPixel { value }),
    }
}

/// Reads a mask PNG from disk.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask, ImagingError> {
    let bytes = std::fs::read(path).map_err(|source| ImagingError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    BinaryMask::decode_png(&bytes)
}

/// Writes a mask to disk as a grayscale PNG.
pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), ImagingError> {
    std::fs::write(path, mask.encode_png()).map_err(|source| ImagingError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Attack-composition operator: masked pixels come from `pattern`, the rest
/// from `scene`.
pub fn composite(
    scene: &Image,
    pattern: &Image,
    mask: &BinaryMask,
) -> Result<Image, ImagingError> {
    if !scene.same_dims(pattern) || !mask.same_dims_as_image(scene) {
        return Err(ImagingError::DimensionMismatch {
            left_width: scene.width(),
            left_height: scene.height(),
            right_width: pattern.width().max(mask.width()),
            right_height: pattern.height().max(mask.height()),
        });
    }
    let data = scene
        .as_slice()
        .chunks_exact(3)
        .zip(pattern.as_slice().chunks_exact(3))
        .zip(mask.as_slice())
        .flat_map(|((s, p), &m)| {
            let src = if m { p } else { s };
            [src[0], src[1], src[2]]
        })
        .collect();
    Image::from_raw(scene.width(), scene.height(), data)
}

/// Union-of-rectangles mask; every rect must fit in the raster.
pub fn mask_from_rects(
    width: usize,
    height: usize,
    rects: &[Rect],
) -> Result<BinaryMask, ImagingError> {
    let mut bits = vec![false; width * height];
    for &rect in rects {
        if !rect.fits_in(width, height) {
            return Err(ImagingError::RectOutOfBounds {
                rect,
                width,
                height,
            });
        }
        for y in rect.y..rect.y + rect.h {
            for bit in &mut bits[y * width + rect.x..y * width + rect.x + rect.w] {
                *bit = true;
            }
        }
    }
    Ok(BinaryMask {
        width,
        height,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quantized_image(width: usize, height: usize, seed: u64) -> Image {
        let mut rng = crate::seeding::rng_from_seed(seed);
        use rand::Rng;
        Image::from_fn(width, height, |_, _| {
            [(); 3].map(|_| f32::from(rng.gen::<u8>()) / 255.0)
        })
        .unwrap()
    }

    #[test]
    fn rejects_small_images() {
        assert!(matches!(
            Image::constant(8, 8, [0.0; 3]),
            Err(ImagingError::TooSmall { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range() {
        let mut data = vec![0.0; 16 * 16 * 3];
        data[7] = 1.25;
        assert!(matches!(
            Image::from_raw(16, 16, data),
            Err(ImagingError::OutOfRange { .. })
        ));
    }

    #[test]
    fn all_zero_png_decodes_to_zeros() {
        let img = Image::constant(16, 16, [0.0; 3]).unwrap();
        let back = Image::decode_png(&img.encode_png()).unwrap();
        assert!(back.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_255_png_decodes_to_ones() {
        let img = Image::constant(16, 16, [1.0; 3]).unwrap();
        let bytes = img.encode_png();
        let back = Image::decode_png(&bytes).unwrap();
        assert!(back.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn load_missing_file_is_read_error() {
        let err = load_png(Path::new("/nonexistent/xyz.png")).unwrap_err();
        assert!(matches!(err, ImagingError::Read { .. }));
    }

    #[test]
    fn garbage_bytes_are_malformed() {
        let err = Image::decode_png(b"not a png at all").unwrap_err();
        assert!(matches!(err, ImagingError::MalformedPng(_)));
    }

    #[test]
    fn sixteen_bit_png_is_unsupported() {
        let buf: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
            image::ImageBuffer::from_pixel(16, 16, image::Rgb([1000u16, 0, 0]));
        let mut bytes = Vec::new();
        image::DynamicImage::ImageRgb16(buf)
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(
            Image::decode_png(&bytes),
            Err(ImagingError::UnsupportedBitDepth)
        ));
    }

    #[test]
    fn rgba_alpha_is_discarded() {
        let buf: image::ImageBuffer<image::Rgba<u8>, Vec<u8>> =
            image::ImageBuffer::from_pixel(16, 16, image::Rgba([10, 20, 30, 77]));
        let mut bytes = Vec::new();
        image::DynamicImage::ImageRgba8(buf)
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        let img = Image::decode_png(&bytes).unwrap();
        let px = img.pixel(3, 3);
        assert_eq!(px, [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    }

    #[test]
    fn luminance_weights() {
        assert!((luminance([1.0, 1.0, 1.0]) - 1.0).abs() < 1e-6);
        assert_eq!(luminance([0.0, 0.0, 0.0]), 0.0);
        assert!((luminance([1.0, 0.0, 0.0]) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn composite_zero_mask_is_scene() {
        let scene = quantized_image(16, 16, 1);
        let pattern = quantized_image(16, 16, 2);
        let mask = BinaryMask::empty(16, 16);
        assert_eq!(composite(&scene, &pattern, &mask).unwrap(), scene);
    }

    #[test]
    fn composite_full_mask_is_pattern() {
        let scene = quantized_image(16, 16, 1);
        let pattern = quantized_image(16, 16, 2);
        let mask = BinaryMask::from_fn(16, 16, |_, _| true);
        assert_eq!(composite(&scene, &pattern, &mask).unwrap(), pattern);
    }

    #[test]
    fn composite_block_mask() {
        let scene = Image::constant(64, 64, [0.2; 3]).unwrap();
        let pattern = Image::constant(64, 64, [1.0; 3]).unwrap();
        let mask = mask_from_rects(64, 64, &[Rect::new(8, 8, 8, 8)]).unwrap();
        let out = composite(&scene, &pattern, &mask).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let expected = if (8..16).contains(&x) && (8..16).contains(&y) {
                    [1.0; 3]
                } else {
                    [0.2; 3]
                };
                assert_eq!(out.pixel(x, y), expected, "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn composite_dimension_mismatch() {
        let scene = Image::constant(16, 16, [0.0; 3]).unwrap();
        let pattern = Image::constant(32, 16, [0.0; 3]).unwrap();
        let mask = BinaryMask::empty(16, 16);
        assert!(matches!(
            composite(&scene, &pattern, &mask),
            Err(ImagingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mask_from_rects_empty_list() {
        let mask = mask_from_rects(32, 32, &[]).unwrap();
        assert!(mask.is_empty());
        assert_eq!(mask.coverage(), 0.0);
    }

    #[test]
    fn mask_coverage_single_block() {
        let mask = mask_from_rects(64, 64, &[Rect::new(0, 0, 8, 8)]).unwrap();
        assert_eq!(mask.count_ones(), 64);
        assert_eq!(mask.coverage(), 64.0 / 4096.0);
    }

    #[test]
    fn overlapping_rects_count_union() {
        let a = Rect::new(4, 4, 8, 8);
        let b = Rect::new(8, 8, 8, 8);
        let mask = mask_from_rects(32, 32, &[a, b]).unwrap();
        // Explicit union: 64 + 64 - 16 overlap.
        assert_eq!(mask.count_ones(), 112);
    }

    #[test]
    fn out_of_bounds_rect_rejected() {
        assert!(matches!(
            mask_from_rects(32, 32, &[Rect::new(30, 0, 8, 8)]),
            Err(ImagingError::RectOutOfBounds { .. })
        ));
    }

    #[test]
    fn mask_png_round_trip_and_bad_pixel() {
        let mask = mask_from_rects(16, 16, &[Rect::new(2, 3, 5, 4)]).unwrap();
        let back = BinaryMask::decode_png(&mask.encode_png()).unwrap();
        assert_eq!(back, mask);

        let buf: image::ImageBuffer<image::Luma<u8>, Vec<u8>> =
            image::ImageBuffer::from_pixel(16, 16, image::Luma([128u8]));
        let mut bytes = Vec::new();
        image::DynamicImage::ImageLuma8(buf)
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(
            BinaryMask::decode_png(&bytes),
            Err(ImagingError::InvalidMaskPixel { value: 128 })
        ));
    }

    proptest! {
        #[test]
        fn png_round_trip_is_bit_identical(seed in any::<u64>()) {
            let img = quantized_image(17, 23, seed);
            let back = Image::decode_png(&img.encode_png()).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn composite_idempotent_and_in_range(seed in any::<u64>()) {
            let scene = quantized_image(16, 16, seed);
            let pattern = quantized_image(16, 16, seed.wrapping_add(1));
            let mask = mask_from_rects(16, 16, &[Rect::new((seed % 8) as usize, 2, 6, 9)]).unwrap();
            let once = composite(&scene, &pattern, &mask).unwrap();
            let twice = composite(&once, &pattern, &mask).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert!(once.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn rect_permutation_keeps_coverage(perm in 0usize..6) {
            let mut rects = [Rect::new(0, 0, 8, 8), Rect::new(4, 4, 8, 8), Rect::new(20, 1, 3, 7)];
            // Apply one of the six permutations of three elements.
            let (i, j) = [(0, 1), (0, 2), (1, 2), (0, 0), (1, 1), (2, 2)][perm];
            rects.swap(i, j);
            let mask = mask_from_rects(32, 32, &rects).unwrap();
            let base = mask_from_rects(
                32,
                32,
                &[Rect::new(0, 0, 8, 8), Rect::new(4, 4, 8, 8), Rect::new(20, 1, 3, 7)],
            )
            .unwrap();
            prop_assert_eq!(mask.coverage(), base.coverage());
        }
    }
}
