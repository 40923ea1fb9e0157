//! Defensive-mask production for the three knowledge settings.
//!
//! Non-blind defenders know the perturbation mask and use it directly
//! (oracle). Semi-blind defenders know only the attack method: they rebuild
//! the attack from every candidate source class toward the inferred target
//! and keep the resulting masks as an estimated mask set, selected by class
//! ranking or at random. Blind defenders know nothing and fall back to
//! random w x w windows, overlapping or on a disjoint block grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierModel, Label, SoftmaxVector};
use crate::imaging::{
    load_mask_png, mask_from_rects, save_mask_png, BinaryMask, Image, ImagingError, Rect,
};
use crate::seeding;
use crate::synth::{surrogate_attack, AttackBudget, Sample, SynthError};

pub const STORE_SCHEMA: &str = "sticker-defense-maskstore/1";

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("sample is not attacked; no oracle mask exists")]
    NoOracleMask,
    #[error("mask store has no entry for target class {target}")]
    MissingTarget { target: usize },
    #[error("target {target} has {available} masks, {requested} requested")]
    InsufficientMasks {
        target: usize,
        available: usize,
        requested: usize,
    },
    #[error("window size {window} does not fit a {width}x{height} canvas")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("window count {count} exceeds the {blocks} non-overlapping blocks")]
    CountExceedsBlocks { count: usize, blocks: usize },
    #[error("coverage ratio {ratio} outside (0, 1]")]
    BadRatio { ratio: f64 },
    #[error("mask config is invalid: {reason}")]
    BadConfig { reason: String },
    #[error("attack for source {source} toward target {target} failed: {cause}")]
    AttackFailed {
        source: usize,
        target: usize,
        #[source]
        cause: SynthError,
    },
    #[error("cannot access {path}: {source}")]
    StoreIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store index is not valid JSON: {0}")]
    StoreJson(#[from] serde_json::Error),
    #[error("store schema {found:?} is not {STORE_SCHEMA:?}")]
    BadSchema { found: String },
    #[error("store entry invalid: {reason}")]
    BadStoreEntry { reason: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Returns the recorded perturbation mask of an attacked sample.
pub fn oracle_mask(sample: &Sample) -> Result<BinaryMask, MaskError> {
    match (&sample.perturbation_mask, sample.attacked) {
        (Some(mask), true) => Ok(mask.clone()),
        _ => Err(MaskError::NoOracleMask),
    }
}

/// One estimated mask: the perturbation mask produced by re-running the
/// attack from `source` toward the store's target class.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub source: Label,
    pub mask: BinaryMask,
    pub success: bool,
}

/// Precomputed estimated mask sets, one per target class, plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSetStore {
    pub canvas: usize,
    pub model_id: String,
    pub seed: u64,
    pub budget: AttackBudget,
    entries: BTreeMap<usize, Vec<StoreEntry>>,
}

impl MaskSetStore {
    pub fn targets(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.keys().map(|&t| Label(t))
    }

    pub fn entries_for(&self, target: Label) -> Option<&[StoreEntry]> {
        self.entries.get(&target.0).map(Vec::as_slice)
    }

    pub fn get(&self, source: Label, target: Label) -> Option<&StoreEntry> {
        self.entries
            .get(&target.0)?
            .iter()
            .find(|e| e.source == source)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the estimated mask set for every `(source, target)` pair with
/// `source != target` by attacking a canonical (zero-variation) rendering of
/// the source class toward the target.
pub fn build_mask_set_store(
    model: &ClassifierModel,
    sources: &[Label],
    targets: &[Label],
    budget: &AttackBudget,
    seed: u64,
    canvas: usize,
) -> Result<MaskSetStore, MaskError> {
    let mut renders: BTreeMap<usize, Sample> = BTreeMap::new();
    for &source in sources {
        let (image, region) = crate::synth::generate_sign_with_region(source, 0, 0, canvas)
            .map_err(|cause| MaskError::AttackFailed {
                source: source.0,
                target: usize::MAX,
                cause,
            })?;
        renders.insert(
            source.0,
            Sample::unattacked(
                format!("store_src{}", source.0),
                image,
                source,
                region,
                seed,
            ),
        );
    }
    let pairs: Vec<(Label, Label)> = targets
        .iter()
        .flat_map(|&t| {
            sources
                .iter()
                .filter(move |&&j| j != t)
                .map(move |&j| (j, t))
        })
        .collect();
    let outcomes: Vec<(Label, Label, StoreEntry)> = pairs
        .par_iter()
        .map(|&(source, target)| {
            let pair_seed =
                seeding::derive_seed(seed, "store", &[source.0 as u64, target.0 as u64]);
            let outcome = surrogate_attack(model, &renders[&source.0], target, budget, pair_seed)
                .map_err(|cause| MaskError::AttackFailed {
                    source: source.0,
                    target: target.0,
                    cause,
                })?;
            Ok((
                source,
                target,
                StoreEntry {
                    source,
                    mask: outcome
                        .sample
                        .perturbation_mask
                        .expect("attacked sample carries its mask"),
                    success: outcome.success,
                },
            ))
        })
        .collect::<Result<_, MaskError>>()?;

    let mut entries: BTreeMap<usize, Vec<StoreEntry>> = BTreeMap::new();
    for (_, target, entry) in outcomes {
        entries.entry(target.0).or_default().push(entry);
    }
    for list in entries.values_mut() {
        list.sort_by_key(|e| e.source.0);
    }
    Ok(MaskSetStore {
        canvas,
        model_id: model.fingerprint(),
        seed,
        budget: budget.clone(),
        entries,
    })
}

/// Ranked selection from a classifier output: the top-1 class is assumed to
/// be the attack target, and the masks for the next `k` classes in
/// activation order (skipping classes absent from the store) are returned in
/// rank order.
pub fn ranked_select_from(
    softmax: &SoftmaxVector,
    store: &MaskSetStore,
    k: usize,
) -> Result<Vec<BinaryMask>, MaskError> {
    let ranking = softmax.ranking();
    let target = ranking[0];
    let entries = store
        .entries_for(target)
        .ok_or(MaskError::MissingTarget { target: target.0 })?;
    let mut out = Vec::with_capacity(k);
    for &candidate in &ranking[1..] {
        if out.len() == k {
            break;
        }
        if let Some(entry) = entries.iter().find(|e| e.source == candidate) {
            out.push(entry.mask.clone());
        }
    }
    if out.len() < k {
        return Err(MaskError::InsufficientMasks {
            target: target.0,
            available: out.len(),
            requested: k,
        });
    }
    Ok(out)
}

/// Ranked selection for an image; see [`ranked_select_from`].
pub fn ranked_select(
    model: &ClassifierModel,
    image: &Image,
    store: &MaskSetStore,
    k: usize,
) -> Result<Vec<BinaryMask>, MaskError> {
    ranked_select_from(&model.classify(image), store, k)
}

/// `k` distinct masks for the target, sampled uniformly without replacement.
pub fn random_select(
    store: &MaskSetStore,
    target: Label,
    k: usize,
    seed: u64,
) -> Result<Vec<BinaryMask>, MaskError> {
    let entries = store
        .entries_for(target)
        .ok_or(MaskError::MissingTarget { target: target.0 })?;
    if k > entries.len() {
        return Err(MaskError::InsufficientMasks {
            target: target.0,
            available: entries.len(),
            requested: k,
        });
    }
    let picks = sample_without_replacement(entries.len(), k, seed);
    Ok(picks.into_iter().map(|i| entries[i].mask.clone()).collect())
}

/// Evaluation-only selection that always includes the mask for the true
/// `(source, target)` pair and fills the rest at random. Requires
/// ground-truth attack metadata; deployment paths must never call this.
pub fn guaranteed_select(
    store: &MaskSetStore,
    true_source: Label,
    true_target: Label,
    k: usize,
    seed: u64,
) -> Result<Vec<BinaryMask>, MaskError> {
    let entries = store
        .entries_for(true_target)
        .ok_or(MaskError::MissingTarget {
            target: true_target.0,
        })?;
    let correct = entries
        .iter()
        .find(|e| e.source == true_source)
        .ok_or(MaskError::BadStoreEntry {
            reason: format!(
                "no mask for source {} toward target {}",
                true_source.0, true_target.0
            ),
        })?;
    if k > entries.len() {
        return Err(MaskError::InsufficientMasks {
            target: true_target.0,
            available: entries.len(),
            requested: k,
        });
    }
    let mut out = vec![correct.mask.clone()];
    let others: Vec<&StoreEntry> = entries.iter().filter(|e| e.source != true_source).collect();
    for i in sample_without_replacement(others.len(), k - 1, seed) {
        out.push(others[i].mask.clone());
    }
    Ok(out)
}

/// Partial Fisher-Yates draw of `k` indices out of `n`, deterministic in the
/// seed and uniform over arrangements.
fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut rng = seeding::rng_from_seed(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// How many windows a random mask gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowCount {
    /// Fraction of the non-overlapping block count; non-integer products
    /// floor.
    Ratio(f64),
    /// Explicit window count.
    Count(usize),
}

/// Window placement policy for blind masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    /// Corners drawn uniformly over all in-bounds positions; windows may
    /// overlap.
    Overlapping,
    /// Windows drawn from the disjoint block grid; edge remainders are never
    /// selected.
    NonOverlapping,
}

/// Blind-scenario random-window configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMaskConfig {
    pub window_size: usize,
    pub count: WindowCount,
    pub overlap: Overlap,
    /// Number of masks to generate.
    pub k: usize,
    pub seed: u64,
}

/// Resolves a [`WindowCount`] against the block grid of a canvas. Returns
/// the window count and whether a fractional ratio product was floored.
pub fn window_count(
    width: usize,
    height: usize,
    window_size: usize,
    count: &WindowCount,
) -> Result<(usize, bool), MaskError> {
    if window_size == 0 || window_size > width.min(height) {
        return Err(MaskError::WindowTooLarge {
            window: window_size,
            width,
            height,
        });
    }
    let blocks = (width / window_size) * (height / window_size);
    match *count {
        WindowCount::Count(m) => {
            if m == 0 {
                return Err(MaskError::BadConfig {
                    reason: "window count must be at least 1".into(),
                });
            }
            Ok((m, false))
        }
        WindowCount::Ratio(ratio) => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(MaskError::BadRatio { ratio });
            }
            let exact = ratio * blocks as f64;
            let floored = exact.floor() as usize;
            Ok((floored, exact.fract() != 0.0))
        }
    }
}

/// `m` window rects with corners drawn uniformly over in-bounds positions.
pub fn overlapping_windows(
    width: usize,
    height: usize,
    window_size: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Rect>, MaskError> {
    if window_size == 0 || window_size > width.min(height) {
        return Err(MaskError::WindowTooLarge {
            window: window_size,
            width,
            height,
        });
    }
    let mut rng = seeding::rng_from_seed(seed);
    Ok((0..m)
        .map(|_| {
            let x = rng.gen_range(0..=width - window_size);
            let y = rng.gen_range(0..=height - window_size);
            Rect::new(x, y, window_size, window_size)
        })
        .collect())
}

/// `m` distinct blocks of the disjoint `window_size` grid.
pub fn non_overlapping_windows(
    width: usize,
    height: usize,
    window_size: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Rect>, MaskError> {
    if window_size == 0 || window_size > width.min(height) {
        return Err(MaskError::WindowTooLarge {
            window: window_size,
            width,
            height,
        });
    }
    let blocks_x = width / window_size;
    let blocks_y = height / window_size;
    let blocks = blocks_x * blocks_y;
    if m > blocks {
        return Err(MaskError::CountExceedsBlocks { count: m, blocks });
    }
    Ok(sample_without_replacement(blocks, m, seed)
        .into_iter()
        .map(|b| {
            Rect::new(
                (b % blocks_x) * window_size,
                (b / blocks_x) * window_size,
                window_size,
                window_size,
            )
        })
        .collect())
}

/// Generates `config.k` random-window masks for a canvas. Each mask draws
/// from a seed derived from `(config.seed, mask index)`, so output is
/// deterministic and independent of scheduling.
pub fn random_masks(
    width: usize,
    height: usize,
    config: &RandomMaskConfig,
) -> Result<Vec<BinaryMask>, MaskError> {
    if config.k == 0 {
        return Err(MaskError::BadConfig {
            reason: "mask count k must be at least 1".into(),
        });
    }
    let (m, _) = window_count(width, height, config.window_size, &config.count)?;
    if config.overlap == Overlap::NonOverlapping {
        let blocks = (width / config.window_size) * (height / config.window_size);
        if m > blocks {
            return Err(MaskError::CountExceedsBlocks { count: m, blocks });
        }
    }
    (0..config.k)
        .map(|i| {
            let mask_seed = seeding::derive_seed(config.seed, "window-mask", &[i as u64]);
            let rects = match config.overlap {
                Overlap::Overlapping => {
                    overlapping_windows(width, height, config.window_size, m, mask_seed)?
                }
                Overlap::NonOverlapping => {
                    non_overlapping_windows(width, height, config.window_size, m, mask_seed)?
                }
            };
            Ok(mask_from_rects(width, height, &rects)?)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreIndexEntry {
    source: usize,
    target: usize,
    mask: String,
    success: bool,
}

/// On-disk form of [`MaskSetStore`]: `index.json` plus one mask PNG per
/// `(source, target)` pair named `src{j}_tgt{t}.png`.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoreIndex {
    schema: String,
    canvas: usize,
    model_id: String,
    seed: u64,
    budget: AttackBudget,
    entries: Vec<StoreIndexEntry>,
}

impl StoreIndex {
    /// Parses and structurally validates a store index from JSON bytes.
    pub fn from_json_slice(bytes: &[u8]) -> Result<StoreIndex, MaskError> {
        let index: StoreIndex = serde_json::from_slice(bytes)?;
        if index.schema != STORE_SCHEMA {
            return Err(MaskError::BadSchema {
                found: index.schema,
            });
        }
        for entry in &index.entries {
            if entry.source == entry.target {
                return Err(MaskError::BadStoreEntry {
                    reason: format!("entry src{0}_tgt{0} maps a class to itself", entry.source),
                });
            }
        }
        Ok(index)
    }
}

/// Writes the store cache directory.
pub fn save_store(dir: &Path, store: &MaskSetStore) -> Result<(), MaskError> {
    std::fs::create_dir_all(dir).map_err(|source| MaskError::StoreIo {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (&target, list) in &store.entries {
        for entry in list {
            let rel = format!("src{}_tgt{}.png", entry.source.0, target);
            save_mask_png(&entry.mask, &dir.join(&rel))?;
            entries.push(StoreIndexEntry {
                source: entry.source.0,
                target,
                mask: rel,
                success: entry.success,
            });
        }
    }
    let index = StoreIndex {
        schema: STORE_SCHEMA.to_string(),
        canvas: store.canvas,
        model_id: store.model_id.clone(),
        seed: store.seed,
        budget: store.budget.clone(),
        entries,
    };
    let json = serde_json::to_string_pretty(&index).expect("store index serializes");
    std::fs::write(dir.join("index.json"), json).map_err(|source| MaskError::StoreIo {
        path: dir.join("index.json"),
        source,
    })
}

/// Loads a store cache directory written by [`save_store`].
pub fn load_store(dir: &Path) -> Result<MaskSetStore, MaskError> {
    let index_path = dir.join("index.json");
    let bytes = std::fs::read(&index_path).map_err(|source| MaskError::StoreIo {
        path: index_path,
        source,
    })?;
    let index = StoreIndex::from_json_slice(&bytes)?;
    let mut entries: BTreeMap<usize, Vec<StoreEntry>> = BTreeMap::new();
    for entry in &index.entries {
        let mask = load_mask_png(&dir.join(&entry.mask))?;
        if mask.width() != index.canvas || mask.height() != index.canvas {
            return Err(MaskError::BadStoreEntry {
                reason: format!(
                    "mask {} is {}x{}, store canvas is {}",
                    entry.mask,
                    mask.width(),
                    mask.height(),
                    index.canvas
                ),
            });
        }
        entries.entry(entry.target).or_default().push(StoreEntry {
            source: Label(entry.source),
            mask,
            success: entry.success,
        });
    }
    for list in entries.values_mut() {
        list.sort_by_key(|e| e.source.0);
    }
    Ok(MaskSetStore {
        canvas: index.canvas,
        model_id: index.model_id,
        seed: index.seed,
        budget: index.budget,
        entries,
    })
}
