//! Procedural sign corpus and the black-box sticker attack.
//!
//! Signs are rendered from a per-class spec (shape, colors, glyph) onto a
//! square canvas, with seed-driven variation: multiplicative brightness
//! jitter of up to ±10%, translation of up to 5% of the canvas, and additive
//! Gaussian pixel noise with sigma up to 0.02. Variation index 0 is the
//! canonical render: centered, unjittered, noise-free. The set of pixels
//! belonging to the sign is tracked as a region mask, and stickers are only
//! ever placed inside it.

mod attack;
mod corpus;

pub use attack::{
    apply_stickers, build_attacked_corpus, surrogate_attack, AttackOutcome, StickerColor,
};
pub use corpus::{load_corpus, save_corpus, Corpus, CorpusError, CorpusManifest, ManifestEntry};

use std::f32::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Label;
use crate::imaging::{BinaryMask, Image, ImagingError};
use crate::seeding;

/// Number of distinct renderable sign classes.
pub const MAX_CLASSES: usize = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("class {class} outside the {MAX_CLASSES}-class palette")]
    ClassOutOfRange { class: usize },
    #[error("canvas {canvas} is too small to render a sign")]
    CanvasTooSmall { canvas: usize },
    #[error("train fraction {fraction} outside [0, 1]")]
    BadSplit { fraction: f64 },
    #[error("sample is already attacked")]
    AlreadyAttacked,
    #[error("attack target {target} equals the true label")]
    TargetEqualsTrue { target: usize },
    #[error("attacked sample must carry a target label and a perturbation mask")]
    MissingAttackMetadata,
    #[error("perturbation mask escapes the sign region")]
    MaskOutsideRegion,
    #[error("sticker rect {rect:?} escapes the sign region")]
    RectOutsideRegion { rect: crate::imaging::Rect },
    #[error("no valid sticker placements exist for this budget and region")]
    NoCandidates,
    #[error("attack budget is invalid: {reason}")]
    BadBudget { reason: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Sign silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignShape {
    Octagon,
    TriangleUp,
    TriangleDown,
    Diamond,
    Circle,
    Square,
    Hexagon,
    Pentagon,
}

/// Glyph painted on the sign face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlyphPattern {
    HorizontalBar,
    VerticalBar,
    Dot,
    CrossX,
    Plus,
    DiagonalStripe,
    Checker,
    Ring,
}

/// Deterministic per-class appearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSpec {
    pub class_id: Label,
    pub shape: SignShape,
    pub background: [f32; 3],
    pub border: [f32; 3],
    pub glyph: GlyphPattern,
    pub glyph_color: [f32; 3],
}

const RED: [f32; 3] = [0.72, 0.10, 0.12];
const YELLOW: [f32; 3] = [0.92, 0.78, 0.10];
const WHITE: [f32; 3] = [0.93, 0.93, 0.93];
const BLACK: [f32; 3] = [0.06, 0.06, 0.06];
const SCENE_BG: [f32; 3] = [0.56, 0.58, 0.62];

impl SignSpec {
    /// The fixed appearance table. Base colors repeat across classes on
    /// purpose (as with real signage), so shape and glyph carry class
    /// identity and sticker patterns can plausibly morph one class toward
    /// another.
    pub fn for_class(class_id: Label) -> Result<SignSpec, SynthError> {
        use GlyphPattern::*;
        use SignShape::*;
        let (shape, background, border, glyph, glyph_color) = match class_id.0 {
            0 => (Octagon, RED, WHITE, HorizontalBar, WHITE),
            1 => (TriangleUp, YELLOW, BLACK, VerticalBar, BLACK),
            2 => (TriangleDown, WHITE, RED, Dot, RED),
            3 => (Diamond, YELLOW, BLACK, CrossX, BLACK),
            4 => (Circle, WHITE, RED, Plus, BLACK),
            5 => (Square, RED, WHITE, DiagonalStripe, WHITE),
            6 => (Hexagon, WHITE, BLACK, Checker, BLACK),
            7 => (Pentagon, YELLOW, BLACK, Ring, BLACK),
            class => return Err(SynthError::ClassOutOfRange { class }),
        };
        Ok(SignSpec {
            class_id,
            shape,
            background,
            border,
            glyph,
            glyph_color,
        })
    }
}

/// One corpus element: an image, its label, the sign-face region, and attack
/// metadata when the sample has been attacked.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub true_label: Label,
    pub attacked: bool,
    pub target_label: Option<Label>,
    pub perturbation_mask: Option<BinaryMask>,
    pub sign_region: BinaryMask,
    pub seed: u64,
}

impl Sample {
    pub fn unattacked(
        id: String,
        image: Image,
        true_label: Label,
        sign_region: BinaryMask,
        seed: u64,
    ) -> Sample {
        Sample {
            id,
            image,
            true_label,
            attacked: false,
            target_label: None,
            perturbation_mask: None,
            sign_region,
            seed,
        }
    }

    /// Builds an attacked sample, enforcing that the metadata is present and
    /// the perturbation lies on the sign.
    pub fn attacked(
        id: String,
        image: Image,
        true_label: Label,
        target_label: Label,
        perturbation_mask: BinaryMask,
        sign_region: BinaryMask,
        seed: u64,
    ) -> Result<Sample, SynthError> {
        if target_label == true_label {
            return Err(SynthError::TargetEqualsTrue {
                target: target_label.0,
            });
        }
        if !perturbation_mask.is_subset_of(&sign_region) {
            return Err(SynthError::MaskOutsideRegion);
        }
        Ok(Sample {
            id,
            image,
            true_label,
            attacked: true,
            target_label: Some(target_label),
            perturbation_mask: Some(perturbation_mask),
            sign_region,
            seed,
        })
    }
}

/// Black-box attack budget: how many stickers, which square sizes, which
/// colors, and the placement-grid stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub max_stickers: usize,
    pub sticker_sizes: Vec<usize>,
    pub colors: Vec<StickerColor>,
    pub candidate_stride: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            max_stickers: 12,
            sticker_sizes: vec![4, 8],
            colors: vec![StickerColor::Black, StickerColor::White],
            candidate_stride: 4,
        }
    }
}

impl AttackBudget {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.sticker_sizes.is_empty() || self.sticker_sizes.iter().any(|&s| s == 0) {
            return Err(SynthError::BadBudget {
                reason: "sticker sizes must be non-empty and positive".into(),
            });
        }
        if self.colors.is_empty() {
            return Err(SynthError::BadBudget {
                reason: "at least one sticker color is required".into(),
            });
        }
        if self.candidate_stride == 0 {
            return Err(SynthError::BadBudget {
                reason: "candidate stride must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Explicit render parameters; [`generate_sign`] derives these from a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub brightness: f32,
    pub shift_x: isize,
    pub shift_y: isize,
    pub noise_sigma: f32,
    pub noise_seed: u64,
}

impl RenderParams {
    pub fn canonical() -> RenderParams {
        RenderParams {
            brightness: 1.0,
            shift_x: 0,
            shift_y: 0,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

/// Renders a sign class with explicit parameters, returning the image and
/// the sign-region mask.
pub fn render_sign(
    class_id: Label,
    canvas: usize,
    params: &RenderParams,
) -> Result<(Image, BinaryMask), SynthError> {
    if canvas < crate::imaging::MIN_DIMENSION {
        return Err(SynthError::CanvasTooSmall { canvas });
    }
    let spec = SignSpec::for_class(class_id)?;
    let center_x = canvas as f32 / 2.0 + params.shift_x as f32;
    let center_y = canvas as f32 / 2.0 + params.shift_y as f32;
    let radius = 0.40 * canvas as f32;
    let border_width = 0.12 * radius;

    let mut noise_rng = seeding::rng_from_seed(params.noise_seed);
    let normal = Normal::new(0.0f32, 1.0f32).expect("unit normal");

    let region = BinaryMask::from_fn(canvas, canvas, |x, y| {
        let dx = x as f32 + 0.5 - center_x;
        let dy = y as f32 + 0.5 - center_y;
        shape_contains(spec.shape, dx, dy, radius)
    });

    let image = Image::from_fn(canvas, canvas, |x, y| {
        let dx = x as f32 + 0.5 - center_x;
        let dy = y as f32 + 0.5 - center_y;
        let base = if shape_contains(spec.shape, dx, dy, radius - border_width) {
            let inner = radius - border_width;
            if glyph_contains(spec.glyph, dx, dy, inner) {
                spec.glyph_color
            } else {
                spec.background
            }
        } else if shape_contains(spec.shape, dx, dy, radius) {
            spec.border
        } else {
            SCENE_BG
        };
        base.map(|v| {
            let mut out = v * params.brightness;
            if params.noise_sigma > 0.0 {
                out += params.noise_sigma * normal.sample(&mut noise_rng);
            }
            out.clamp(0.0, 1.0)
        })
    })?;
    Ok((image, region))
}

/// Derives [`RenderParams`] for a `(class, variation, seed)` triple.
/// Variation 0 is the canonical render.
pub fn variation_params(class_id: Label, variation: u32, seed: u64, canvas: usize) -> RenderParams {
    if variation == 0 {
        return RenderParams::canonical();
    }
    let derived = seeding::derive_seed(seed, "variation", &[class_id.0 as u64, variation as u64]);
    let mut rng = seeding::rng_from_seed(derived);
    let max_shift = (canvas as f64 * 0.05).floor() as isize;
    RenderParams {
        brightness: 0.9 + 0.2 * rng.gen::<f32>(),
        shift_x: rng.gen_range(-max_shift..=max_shift),
        shift_y: rng.gen_range(-max_shift..=max_shift),
        noise_sigma: 0.02 * rng.gen::<f32>(),
        noise_seed: seeding::derive_seed(derived, "noise", &[]),
    }
}

/// Deterministic seed-driven render of one sign variation.
pub fn generate_sign(
    class_id: Label,
    variation: u32,
    seed: u64,
    canvas: usize,
) -> Result<Image, SynthError> {
    generate_sign_with_region(class_id, variation, seed, canvas).map(|(image, _)| image)
}

/// Like [`generate_sign`] but also returns the sign-region mask.
pub fn generate_sign_with_region(
    class_id: Label,
    variation: u32,
    seed: u64,
    canvas: usize,
) -> Result<(Image, BinaryMask), SynthError> {
    let params = variation_params(class_id, variation, seed, canvas);
    render_sign(class_id, canvas, &params)
}

/// Unattacked corpus, split per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Generates `n_per_class` unattacked samples for every class and splits
/// them `train_fraction` / rest per class. Per-sample seeds depend only on
/// `(master_seed, class, index)`, so regeneration is order-independent.
pub fn generate_dataset(
    n_classes: usize,
    n_per_class: usize,
    train_fraction: f64,
    master_seed: u64,
    canvas: usize,
) -> Result<DatasetSplit, SynthError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(SynthError::BadSplit {
            fraction: train_fraction,
        });
    }
    let n_train = (train_fraction * n_per_class as f64).floor() as usize;
    let mut split = DatasetSplit {
        train: Vec::with_capacity(n_classes * n_train),
        test: Vec::with_capacity(n_classes * (n_per_class - n_train)),
    };
    for class in 0..n_classes {
        for index in 0..n_per_class {
            let sample_seed =
                seeding::derive_seed(master_seed, "corpus", &[class as u64, index as u64]);
            let variation = index as u32 + 1;
            let (image, region) =
                generate_sign_with_region(Label(class), variation, sample_seed, canvas)?;
            let sample = Sample::unattacked(
                format!("c{class}_i{index:04}"),
                image,
                Label(class),
                region,
                sample_seed,
            );
            if index < n_train {
                split.train.push(sample);
            } else {
                split.test.push(sample);
            }
        }
    }
    Ok(split)
}

fn shape_contains(shape: SignShape, dx: f32, dy: f32, radius: f32) -> bool {
    match shape {
        SignShape::Circle => dx * dx + dy * dy <= radius * radius,
        SignShape::Octagon => polygon_contains(dx, dy, 8, radius, PI / 8.0),
        // Triangles get a larger circumradius so their face area is usable.
        SignShape::TriangleUp => polygon_contains(dx, dy, 3, radius * 1.3, -PI / 2.0),
        SignShape::TriangleDown => polygon_contains(dx, dy, 3, radius * 1.3, PI / 2.0),
        SignShape::Diamond => polygon_contains(dx, dy, 4, radius * 1.15, -PI / 2.0),
        SignShape::Square => polygon_contains(dx, dy, 4, radius * 1.1, PI / 4.0),
        SignShape::Hexagon => polygon_contains(dx, dy, 6, radius, PI / 6.0),
        SignShape::Pentagon => polygon_contains(dx, dy, 5, radius, -PI / 2.0),
    }
}

/// Point-in-regular-polygon test via the supporting half-planes of the
/// edges. Vertices sit at `rotation + i * TAU / sides` on the circumcircle.
fn polygon_contains(dx: f32, dy: f32, sides: u32, circumradius: f32, rotation: f32) -> bool {
    let apothem = circumradius * (PI / sides as f32).cos();
    for i in 0..sides {
        let angle = rotation + (i as f32 + 0.5) * TAU / sides as f32;
        if dx * angle.cos() + dy * angle.sin() > apothem {
            return false;
        }
    }
    true
}

fn glyph_contains(glyph: GlyphPattern, dx: f32, dy: f32, scale: f32) -> bool {
    let s = scale;
    match glyph {
        GlyphPattern::HorizontalBar => dy.abs() <= 0.18 * s && dx.abs() <= 0.62 * s,
        GlyphPattern::VerticalBar => dx.abs() <= 0.18 * s && dy.abs() <= 0.62 * s,
        GlyphPattern::Dot => dx * dx + dy * dy <= (0.30 * s) * (0.30 * s),
        GlyphPattern::CrossX => {
            let d1 = (dx - dy).abs() / std::f32::consts::SQRT_2;
            let d2 = (dx + dy).abs() / std::f32::consts::SQRT_2;
            (d1 <= 0.14 * s || d2 <= 0.14 * s) && dx.abs().max(dy.abs()) <= 0.60 * s
        }
        GlyphPattern::Plus => {
            (dx.abs() <= 0.14 * s && dy.abs() <= 0.60 * s)
                || (dy.abs() <= 0.14 * s && dx.abs() <= 0.60 * s)
        }
        GlyphPattern::DiagonalStripe => {
            (dx + dy).abs() / std::f32::consts::SQRT_2 <= 0.16 * s
                && dx.abs().max(dy.abs()) <= 0.65 * s
        }
        GlyphPattern::Checker => {
            let cell = 0.32 * s;
            let cx = (dx / cell).floor() as i64;
            let cy = (dy / cell).floor() as i64;
            (cx + cy).rem_euclid(2) == 0 && dx.abs().max(dy.abs()) <= 0.60 * s
        }
        GlyphPattern::Ring => {
            let r2 = dx * dx + dy * dy;
            r2 >= (0.34 * s) * (0.34 * s) && r2 <= (0.52 * s) * (0.52 * s)
        }
    }
}
