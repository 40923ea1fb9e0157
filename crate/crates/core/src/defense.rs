//! Local defenses: targeted remapping and localized region reconstruction.
//!
//! Both families touch only pixels selected by a defensive mask; everything
//! outside the mask is bit-identical to the input. With several masks a
//! defense is applied either sequentially (each step feeding the next, one
//! defended image out) or in parallel (one defended image per mask).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{luminance, BinaryMask, Image};

/// How masked pixels are remapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RemapMode {
    /// Masked pixels become pure white.
    White,
    /// Masked pixels become pure black.
    Black,
    /// Masked pixels with luminance above the threshold become black, the
    /// rest white. This flips both sticker colors at the default 0.5.
    Threshold { tau: f32 },
}

/// Default luminance threshold: mid-gray splits black and white stickers
/// symmetrically.
pub const DEFAULT_TAU: f32 = 0.5;

/// Convergence tolerance for reconstruction.
pub const DEFAULT_EPSILON: f32 = 1e-4;

/// Sweep cap for reconstruction.
pub const DEFAULT_MAX_ITERATIONS: usize = 2000;

/// A configured local defense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DefenseOp {
    Remap(RemapMode),
    Reconstruct { epsilon: f32, max_iterations: usize },
}

impl DefenseOp {
    pub fn reconstruct_default() -> Self {
        DefenseOp::Reconstruct {
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        match *self {
            DefenseOp::Remap(RemapMode::Threshold { tau }) => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(DefenseError::BadThreshold { tau });
                }
            }
            DefenseOp::Remap(_) => {}
            DefenseOp::Reconstruct {
                epsilon,
                max_iterations,
            } => {
                if !(epsilon > 0.0) {
                    return Err(DefenseError::BadEpsilon { epsilon });
                }
                if max_iterations == 0 {
                    return Err(DefenseError::BadMaxIterations);
                }
            }
        }
        Ok(())
    }

    /// Applies the defense to the pixels selected by `mask`.
    pub fn apply(&self, image: &Image, mask: &BinaryMask) -> Result<Image, DefenseError> {
        self.validate()?;
        match *self {
            DefenseOp::Remap(mode) => remap(image, mask, mode),
            DefenseOp::Reconstruct {
                epsilon,
                max_iterations,
            } => reconstruct(image, mask, epsilon, max_iterations),
        }
    }
}

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("mask is {mask_width}x{mask_height} but image is {width}x{height}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        mask_width: usize,
        mask_height: usize,
    },
    #[error("mask covers the whole image; reconstruction needs at least one anchor pixel")]
    FullyMasked,
    #[error("threshold {tau} outside [0, 1]")]
    BadThreshold { tau: f32 },
    #[error("epsilon {epsilon} must be positive")]
    BadEpsilon { epsilon: f32 },
    #[error("max_iterations must be at least 1")]
    BadMaxIterations,
}

fn check_dims(image: &Image, mask: &BinaryMask) -> Result<(), DefenseError> {
    if !mask.same_dims_as_image(image) {
        return Err(DefenseError::DimensionMismatch {
            width: image.width(),
            height: image.height(),
            mask_width: mask.width(),
            mask_height: mask.height(),
        });
    }
    Ok(())
}

/// Remaps masked pixels; unmasked pixels are bit-identical to the input.
pub fn remap(image: &Image, mask: &BinaryMask, mode: RemapMode) -> Result<Image, DefenseError> {
    check_dims(image, mask)?;
    if let RemapMode::Threshold { tau } = mode {
        if !(0.0..=1.0).contains(&tau) {
            return Err(DefenseError::BadThreshold { tau });
        }
    }
    let data: Vec<f32> = image
        .as_slice()
        .chunks_exact(3)
        .zip(mask.as_slice())
        .flat_map(|(px, &masked)| {
            if !masked {
                return [px[0], px[1], px[2]];
            }
            match mode {
                RemapMode::White => [1.0, 1.0, 1.0],
                RemapMode::Black => [0.0, 0.0, 0.0],
                RemapMode::Threshold { tau } => {
                    if luminance([px[0], px[1], px[2]]) > tau {
                        [0.0, 0.0, 0.0]
                    } else {
                        [1.0, 1.0, 1.0]
                    }
                }
            }
        })
        .collect();
    Ok(Image::from_raw(image.width(), image.height(), data)
        .expect("remap preserves range and dimensions"))
}

/// Harmonic diffusion inpainting of the masked region.
///
/// Masked pixels start at the channel mean of the unmasked pixels; Gauss-
/// Seidel sweeps in scan order then replace each masked pixel with the mean
/// of its in-bounds 4-neighbors until the largest per-pixel change drops
/// below `epsilon` or `max_iterations` sweeps have run. Neighbor means are
/// accumulated in f64, which keeps the discrete maximum principle exact.
pub fn reconstruct(
    image: &Image,
    mask: &BinaryMask,
    epsilon: f32,
    max_iterations: usize,
) -> Result<Image, DefenseError> {
    check_dims(image, mask)?;
    if !(epsilon > 0.0) {
        return Err(DefenseError::BadEpsilon { epsilon });
    }
    if max_iterations == 0 {
        return Err(DefenseError::BadMaxIterations);
    }
    let (w, h) = (image.width(), image.height());
    if mask.count_ones() == w * h {
        return Err(DefenseError::FullyMasked);
    }
    if mask.is_empty() {
        return Ok(image.clone());
    }

    // Per-channel planes; masked pixels seeded with the unmasked mean.
    let mut planes = [
        vec![0.0f32; w * h],
        vec![0.0f32; w * h],
        vec![0.0f32; w * h],
    ];
    for c in 0..3 {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (i, px) in image.as_slice().chunks_exact(3).enumerate() {
            planes[c][i] = px[c];
            if !mask.as_slice()[i] {
                sum += f64::from(px[c]);
                count += 1;
            }
        }
        let mean = (sum / count as f64) as f32;
        for (v, &m) in planes[c].iter_mut().zip(mask.as_slice()) {
            if m {
                *v = mean;
            }
        }
    }

    // Masked pixel list with neighbor offsets, in scan order.
    let masked: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .collect();

    for plane in planes.iter_mut() {
        for _ in 0..max_iterations {
            let mut max_change = 0.0f32;
            for &(x, y) in &masked {
                let mut acc = 0.0f64;
                let mut n = 0u32;
                if x > 0 {
                    acc += f64::from(plane[y * w + x - 1]);
                    n += 1;
                }
                if x + 1 < w {
                    acc += f64::from(plane[y * w + x + 1]);
                    n += 1;
                }
                if y > 0 {
                    acc += f64::from(plane[(y - 1) * w + x]);
                    n += 1;
                }
                if y + 1 < h {
                    acc += f64::from(plane[(y + 1) * w + x]);
                    n += 1;
                }
                let new = (acc / f64::from(n)) as f32;
                let idx = y * w + x;
                let change = (new - plane[idx]).abs();
                if change > max_change {
                    max_change = change;
                }
                plane[idx] = new;
            }
            if max_change < epsilon {
                break;
            }
        }
    }

    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        data.push(planes[0][i]);
        data.push(planes[1][i]);
        data.push(planes[2][i]);
    }
    Ok(Image::from_raw(w, h, data).expect("reconstruction preserves range"))
}

/// Applies `op` through each mask in order, feeding each output to the next.
pub fn sequential_apply(
    image: &Image,
    masks: &[BinaryMask],
    op: &DefenseOp,
) -> Result<Image, DefenseError> {
    let mut current = image.clone();
    for mask in masks {
        current = op.apply(&current, mask)?;
    }
    Ok(current)
}

/// Applies `op` with each mask independently to the original image.
pub fn parallel_apply(
    image: &Image,
    masks: &[BinaryMask],
    op: &DefenseOp,
) -> Result<Vec<Image>, DefenseError> {
    masks.iter().map(|mask| op.apply(image, mask)).collect()
}
