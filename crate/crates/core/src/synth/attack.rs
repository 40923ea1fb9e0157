//! Black-box greedy sticker attack.
//!
//! The attacker may not inspect gradients; it only queries the classifier.
//! Each step enumerates every placement of a square black or white sticker
//! on a stride grid inside the sign region, scores each candidate by the
//! target-class softmax value of the tentatively modified image, and commits
//! the best one. The search stops when the prediction reaches the target,
//! the sticker budget is exhausted, or no placement improves the objective
//! (so the objective trace is non-decreasing by construction).
//!
//! Candidate order, which also resolves score ties, is scan order: positions
//! row-major, then smaller sticker sizes, then black before white.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, Label};
use crate::imaging::{mask_from_rects, BinaryMask, Image, Rect};
use crate::seeding;

use super::{AttackBudget, Sample, SynthError};

/// Sticker color; physical stickers are opaque, so later placements win on
/// overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StickerColor {
    Black,
    White,
}

impl StickerColor {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            StickerColor::Black => [0.0, 0.0, 0.0],
            StickerColor::White => [1.0, 1.0, 1.0],
        }
    }
}

/// Applies stickers in order; every rect must lie fully inside `sign_region`.
/// Returns the modified image and the union mask of all placements.
pub fn apply_stickers(
    image: &Image,
    sign_region: &BinaryMask,
    placements: &[(Rect, StickerColor)],
) -> Result<(Image, BinaryMask), SynthError> {
    let index = RegionIndex::new(sign_region);
    let mut current = image.clone();
    for &(rect, color) in placements {
        if !index.rect_inside(rect) {
            return Err(SynthError::RectOutsideRegion { rect });
        }
        current = current.with_rect_filled(rect, color.rgb())?;
    }
    let mask = mask_from_rects(
        image.width(),
        image.height(),
        &placements.iter().map(|&(r, _)| r).collect::<Vec<_>>(),
    )?;
    Ok((current, mask))
}

/// Result of one greedy attack.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub sample: Sample,
    /// Whether the final prediction equals the target label.
    pub success: bool,
    pub placements: Vec<(Rect, StickerColor)>,
    /// Target-class softmax value before any sticker and after each
    /// committed sticker. Non-decreasing by construction.
    pub objective_trace: Vec<f32>,
}

/// Greedy targeted sticker attack against `model`.
pub fn surrogate_attack(
    model: &ClassifierModel,
    sample: &Sample,
    target_label: Label,
    budget: &AttackBudget,
    seed: u64,
) -> Result<AttackOutcome, SynthError> {
    if sample.attacked {
        return Err(SynthError::AlreadyAttacked);
    }
    if target_label == sample.true_label {
        return Err(SynthError::TargetEqualsTrue {
            target: target_label.0,
        });
    }
    budget.validate()?;

    let candidates = enumerate_candidates(&sample.sign_region, budget);
    if candidates.is_empty() && budget.max_stickers > 0 {
        return Err(SynthError::NoCandidates);
    }

    let mut current = sample.image.clone();
    let mut placements: Vec<(Rect, StickerColor)> = Vec::new();
    let mut objective = model.classify(&current).value(target_label);
    let mut trace = vec![objective];

    for _ in 0..budget.max_stickers {
        if model.predict(&current) == target_label {
            break;
        }
        let scores: Vec<f32> = candidates
            .par_iter()
            .map(|&(rect, color)| {
                let tentative = current
                    .with_rect_filled(rect, color.rgb())
                    .expect("candidate rects fit the canvas");
                model.classify(&tentative).value(target_label)
            })
            .collect();
        // First strict maximum wins, i.e. ties resolve to scan order.
        let mut best = 0usize;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        if scores[best] <= objective {
            break;
        }
        let (rect, color) = candidates[best];
        current = current.with_rect_filled(rect, color.rgb())?;
        objective = scores[best];
        placements.push((rect, color));
        trace.push(objective);
    }

    let success = model.predict(&current) == target_label;
    let mask = mask_from_rects(
        sample.image.width(),
        sample.image.height(),
        &placements.iter().map(|&(r, _)| r).collect::<Vec<_>>(),
    )?;
    let attacked = Sample::attacked(
        format!("{}_atk_t{}", sample.id, target_label.0),
        current,
        sample.true_label,
        target_label,
        mask,
        sample.sign_region.clone(),
        seed,
    )?;
    Ok(AttackOutcome {
        sample: attacked,
        success,
        placements,
        objective_trace: trace,
    })
}

/// All sticker placements on the stride grid that fit inside the region, in
/// tie-break scan order.
fn enumerate_candidates(
    sign_region: &BinaryMask,
    budget: &AttackBudget,
) -> Vec<(Rect, StickerColor)> {
    let index = RegionIndex::new(sign_region);
    let mut sizes = budget.sticker_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let (w, h) = (sign_region.width(), sign_region.height());
    let mut out = Vec::new();
    for y in (0..h).step_by(budget.candidate_stride) {
        for x in (0..w).step_by(budget.candidate_stride) {
            for &size in &sizes {
                let rect = Rect::new(x, y, size, size);
                if !rect.fits_in(w, h) || !index.rect_inside(rect) {
                    continue;
                }
                for &color in &budget.colors {
                    out.push((rect, color));
                }
            }
        }
    }
    out
}

/// Summed-area table over the region mask for O(1) "rect fully inside"
/// queries.
struct RegionIndex {
    width: usize,
    prefix: Vec<u32>,
}

impl RegionIndex {
    fn new(region: &BinaryMask) -> RegionIndex {
        let (w, h) = (region.width(), region.height());
        let mut prefix = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u32;
            for x in 0..w {
                row_sum += u32::from(region.get(x, y));
                prefix[(y + 1) * (w + 1) + x + 1] = prefix[y * (w + 1) + x + 1] + row_sum;
            }
        }
        RegionIndex { width: w, prefix }
    }

    fn rect_inside(&self, rect: Rect) -> bool {
        let w1 = self.width + 1;
        let (x0, y0) = (rect.x, rect.y);
        let (x1, y1) = (rect.x + rect.w, rect.y + rect.h);
        let count = self.prefix[y1 * w1 + x1] + self.prefix[y0 * w1 + x0]
            - self.prefix[y0 * w1 + x1]
            - self.prefix[y1 * w1 + x0];
        count as usize == rect.w * rect.h
    }
}

/// Variation index reserved for attack-source renders, disjoint from corpus
/// variation indices.
const ATTACK_SOURCE_VARIATION: u32 = 0x7fff_0001;

/// Builds the attacked evaluation corpus: one fixed source instance per
/// class, attacked once toward every other class. With 8 classes this yields
/// 8 x 7 = 56 attacked samples.
pub fn build_attacked_corpus(
    model: &ClassifierModel,
    n_classes: usize,
    canvas: usize,
    budget: &AttackBudget,
    master_seed: u64,
) -> Result<Vec<AttackOutcome>, SynthError> {
    let mut sources = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let seed = seeding::derive_seed(master_seed, "attack-src", &[class as u64]);
        let (image, region) = super::generate_sign_with_region(
            Label(class),
            ATTACK_SOURCE_VARIATION,
            seed,
            canvas,
        )?;
        sources.push(Sample::unattacked(
            format!("atksrc_c{class}"),
            image,
            Label(class),
            region,
            seed,
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..n_classes)
        .flat_map(|j| (0..n_classes).filter(move |&t| t != j).map(move |t| (j, t)))
        .collect();
    pairs
        .par_iter()
        .map(|&(source, target)| {
            surrogate_attack(
                model,
                &sources[source],
                Label(target),
                budget,
                seeding::derive_seed(master_seed, "attack", &[source as u64, target as u64]),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, TrainConfig};
    use crate::synth::generate_sign_with_region;

    fn quick_model(n_classes: usize, canvas: usize) -> ClassifierModel {
        let mut data = Vec::new();
        for class in 0..n_classes {
            for v in 1..=6u32 {
                let img = crate::synth::generate_sign(Label(class), v, 5, canvas).unwrap();
                data.push((img, Label(class)));
            }
        }
        let config = TrainConfig {
            n_classes,
            input_size: 16,
            epochs: 8,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
        };
        train(&data, &config, 21).unwrap()
    }

    #[test]
    fn apply_stickers_empty_is_identity() {
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 64).unwrap();
        let (out, mask) = apply_stickers(&image, &region, &[]).unwrap();
        assert_eq!(out, image);
        assert!(mask.is_empty());
    }

    #[test]
    fn apply_stickers_sets_exact_pixels() {
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 64).unwrap();
        let rect = Rect::new(28, 28, 8, 8);
        let (out, mask) = apply_stickers(&image, &region, &[(rect, StickerColor::White)]).unwrap();
        assert_eq!(mask.count_ones(), 64);
        let mut changed = 0;
        for y in 0..64 {
            for x in 0..64 {
                if mask.get(x, y) {
                    assert_eq!(out.pixel(x, y), [1.0; 3]);
                    changed += 1;
                } else {
                    assert_eq!(out.pixel(x, y), image.pixel(x, y));
                }
            }
        }
        assert_eq!(changed, 64);
    }

    #[test]
    fn overlapping_stickers_later_wins() {
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 64).unwrap();
        let a = Rect::new(26, 26, 8, 8);
        let b = Rect::new(30, 30, 8, 8);
        let (out, _) = apply_stickers(
            &image,
            &region,
            &[(a, StickerColor::Black), (b, StickerColor::White)],
        )
        .unwrap();
        // Overlap pixels belong to the later (white) sticker.
        assert_eq!(out.pixel(31, 31), [1.0; 3]);
        assert_eq!(out.pixel(27, 27), [0.0; 3]);
    }

    #[test]
    fn sticker_outside_region_rejected() {
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 64).unwrap();
        let rect = Rect::new(0, 0, 8, 8); // scene corner, off the sign
        assert!(matches!(
            apply_stickers(&image, &region, &[(rect, StickerColor::Black)]),
            Err(SynthError::RectOutsideRegion { .. })
        ));
    }

    #[test]
    fn region_index_matches_naive_check() {
        let (_, region) = generate_sign_with_region(Label(1), 0, 0, 64).unwrap();
        let index = RegionIndex::new(&region);
        for &rect in &[
            Rect::new(0, 0, 4, 4),
            Rect::new(30, 30, 4, 4),
            Rect::new(20, 44, 8, 8),
            Rect::new(28, 10, 6, 6),
        ] {
            let naive = (rect.y..rect.y + rect.h)
                .all(|y| (rect.x..rect.x + rect.w).all(|x| region.get(x, y)));
            assert_eq!(index.rect_inside(rect), naive, "{rect:?}");
        }
    }

    #[test]
    fn zero_budget_returns_unmodified_image() {
        let model = quick_model(2, 32);
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 32).unwrap();
        let sample = Sample::unattacked("s".into(), image.clone(), Label(0), region, 0);
        let budget = AttackBudget {
            max_stickers: 0,
            ..AttackBudget::default()
        };
        let outcome = surrogate_attack(&model, &sample, Label(1), &budget, 0).unwrap();
        assert_eq!(outcome.sample.image, image);
        assert_eq!(
            outcome.success,
            model.predict(&image) == Label(1)
        );
        assert_eq!(outcome.objective_trace.len(), 1);
    }

    #[test]
    fn attack_records_monotone_trace_and_exact_composition() {
        let model = quick_model(2, 32);
        let (image, region) = generate_sign_with_region(Label(0), 1, 3, 32).unwrap();
        let sample = Sample::unattacked("s".into(), image.clone(), Label(0), region.clone(), 3);
        let budget = AttackBudget {
            max_stickers: 4,
            sticker_sizes: vec![4, 8],
            colors: vec![StickerColor::Black, StickerColor::White],
            candidate_stride: 4,
        };
        let outcome = surrogate_attack(&model, &sample, Label(1), &budget, 9).unwrap();
        for pair in outcome.objective_trace.windows(2) {
            assert!(pair[1] >= pair[0], "objective decreased: {pair:?}");
        }
        // The attacked image reconstructs exactly from the placements.
        let (reapplied, mask) = apply_stickers(&image, &region, &outcome.placements).unwrap();
        assert_eq!(reapplied, outcome.sample.image);
        assert_eq!(&mask, outcome.sample.perturbation_mask.as_ref().unwrap());
        // Coverage bound: stickers cannot exceed budget * max size^2.
        assert!(mask.count_ones() <= budget.max_stickers * 64);
    }

    #[test]
    fn attack_is_deterministic() {
        let model = quick_model(2, 32);
        let (image, region) = generate_sign_with_region(Label(1), 1, 3, 32).unwrap();
        let sample = Sample::unattacked("s".into(), image, Label(1), region, 3);
        let budget = AttackBudget {
            max_stickers: 3,
            sticker_sizes: vec![4],
            colors: vec![StickerColor::Black, StickerColor::White],
            candidate_stride: 4,
        };
        let a = surrogate_attack(&model, &sample, Label(0), &budget, 1).unwrap();
        let b = surrogate_attack(&model, &sample, Label(0), &budget, 1).unwrap();
        assert_eq!(a.sample, b.sample);
        assert_eq!(a.placements, b.placements);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn attack_rejects_bad_preconditions() {
        let model = quick_model(2, 32);
        let (image, region) = generate_sign_with_region(Label(0), 0, 0, 32).unwrap();
        let sample = Sample::unattacked("s".into(), image, Label(0), region, 0);
        assert!(matches!(
            surrogate_attack(&model, &sample, Label(0), &AttackBudget::default(), 0),
            Err(SynthError::TargetEqualsTrue { .. })
        ));
        let outcome =
            surrogate_attack(&model, &sample, Label(1), &AttackBudget::default(), 0).unwrap();
        assert!(matches!(
            surrogate_attack(&model, &outcome.sample, Label(1), &AttackBudget::default(), 0),
            Err(SynthError::AlreadyAttacked)
        ));
    }
}
