//! Scenario orchestration and the window-parameter grid search.
//!
//! A scenario wires a knowledge level to its mask source, a local defense,
//! an application mode, and a fusion rule, then evaluates the whole corpus:
//!
//! - non-blind: the oracle mask defends attacked scenes; unattacked scenes
//!   are left alone (the defender knows no attack is present), so CD is zero
//!   by construction;
//! - semi-blind: estimated mask sets selected by ranking or at random; the
//!   defense runs on every scene because nothing flags an attack;
//! - blind: random windows, overlapping or non-overlapping; the defense
//!   likewise runs on every scene.
//!
//! Samples are evaluated independently with per-sample derived seeds, and
//! metric accumulation is a commutative count reduction, so reports do not
//! depend on evaluation order or worker count.

mod baselines;
mod metrics;
pub mod report;

pub use baselines::{jpeg_roundtrip, median_filter, Baseline};
pub use metrics::{
    compute_asr, compute_ca, pda_from_identity, Counts, MetricsReport, SampleOutcome,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierModel, Label};
use crate::defense::{parallel_apply, sequential_apply, DefenseError, DefenseOp};
use crate::fusion::{decide_single, majority_vote, softmax_fusion, FusionError, FusionMode};
use crate::imaging::ImagingError;
use crate::masks::{
    guaranteed_select, oracle_mask, random_masks, random_select, ranked_select, MaskError,
    MaskSetStore, RandomMaskConfig, WindowCount,
};
use crate::seeding;
use crate::synth::{Corpus, Sample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the {pool} sample pool is empty")]
    EmptySampleSet { pool: &'static str },
    #[error("attack prior {pi} outside [0, 1]")]
    BadPrior { pi: f64 },
    #[error("scenario configuration mismatch: {reason}")]
    ScenarioMismatch { reason: String },
    #[error("semi-blind evaluation needs a mask-set store")]
    MissingStore,
    #[error("mask store was built for model {store}, evaluating model {model}")]
    StoreModelMismatch { store: String, model: String },
    #[error("guaranteed selection uses ground-truth attack metadata; enable allow_ground_truth for evaluation-only runs")]
    GroundTruthNotAllowed,
    #[error("median kernel {kernel} must be odd")]
    EvenKernel { kernel: usize },
    #[error("median kernel {kernel} must be at least 3")]
    KernelTooSmall { kernel: usize },
    #[error("JPEG quality {quality} outside [1, 100]")]
    BadQuality { quality: u8 },
    #[error("JPEG codec failure: {0}")]
    Codec(image::ImageError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Defender knowledge level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    NonBlind,
    SemiBlind,
    Blind,
}

/// How masks are drawn from an estimated mask set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Ranked,
    Random,
    /// Evaluation-only: the true source-target mask is always included.
    Guaranteed,
}

/// Where defensive masks come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    Oracle,
    EstimatedSet { selection: Selection, k: usize },
    RandomWindows(RandomMaskConfig),
}

/// Sequential composition or parallel application with decision fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Application {
    Sequential,
    Parallel(FusionMode),
}

/// A complete scenario description; this is what gets fingerprinted into
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub knowledge: Knowledge,
    pub defense: DefenseOp,
    pub application: Application,
    pub mask_source: MaskSource,
    pub pi_attack: f64,
    pub seed: u64,
    /// Must be set for `Selection::Guaranteed`; guards ground-truth access.
    #[serde(default)]
    pub allow_ground_truth: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.pi_attack) {
            return Err(EvalError::BadPrior { pi: self.pi_attack });
        }
        self.defense.validate()?;
        let mismatch = |reason: String| Err(EvalError::ScenarioMismatch { reason });
        match (self.knowledge, &self.mask_source) {
            (Knowledge::NonBlind, MaskSource::Oracle) => {}
            (Knowledge::SemiBlind, MaskSource::EstimatedSet { k, .. }) => {
                if *k == 0 {
                    return mismatch("estimated-set selection needs k >= 1".into());
                }
            }
            (Knowledge::Blind, MaskSource::RandomWindows(_)) => {}
            (knowledge, source) => {
                return mismatch(format!(
                    "{knowledge:?} knowledge cannot use mask source {source:?}"
                ));
            }
        }
        if let MaskSource::EstimatedSet {
            selection: Selection::Guaranteed,
            ..
        } = self.mask_source
        {
            if !self.allow_ground_truth {
                return Err(EvalError::GroundTruthNotAllowed);
            }
        }
        if let Application::Parallel(FusionMode::Single) = self.application {
            return mismatch("parallel application needs majority-vote or softmax fusion".into());
        }
        Ok(())
    }

    /// Hex digest of the serialized config; stamped into reports.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        seeding::fingerprint_bytes(&json)
    }
}

/// Evaluates one scenario over the corpus's test and attacked pools.
pub fn run_scenario(
    model: &ClassifierModel,
    corpus: &Corpus,
    store: Option<&MaskSetStore>,
    config: &ScenarioConfig,
) -> Result<MetricsReport, EvalError> {
    config.validate()?;
    if corpus.test.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "unattacked" });
    }
    if corpus.attacked.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "attacked" });
    }
    if config.knowledge == Knowledge::SemiBlind {
        let store = store.ok_or(EvalError::MissingStore)?;
        let model_id = model.fingerprint();
        if store.model_id != model_id {
            return Err(EvalError::StoreModelMismatch {
                store: store.model_id.clone(),
                model: model_id,
            });
        }
    }
    let outcomes: Vec<SampleOutcome> = corpus
        .test
        .par_iter()
        .chain(corpus.attacked.par_iter())
        .map(|sample| evaluate_sample(model, sample, store, config))
        .collect::<Result<_, EvalError>>()?;
    MetricsReport::from_outcomes(&outcomes, config.pi_attack, config.fingerprint())
}

/// Pre- and post-defense decisions for one sample.
fn evaluate_sample(
    model: &ClassifierModel,
    sample: &Sample,
    store: Option<&MaskSetStore>,
    config: &ScenarioConfig,
) -> Result<SampleOutcome, EvalError> {
    let pre_decision = model.predict(&sample.image);
    let masks = select_masks(model, sample, pre_decision, store, config)?;
    let post_decision = if masks.is_empty() {
        pre_decision
    } else {
        match config.application {
            Application::Sequential => {
                let defended = sequential_apply(&sample.image, &masks, &config.defense)?;
                decide_single(model, &defended)
            }
            Application::Parallel(mode) => {
                let defended = parallel_apply(&sample.image, &masks, &config.defense)?;
                match mode {
                    FusionMode::MajorityVote => majority_vote(model, &defended)?,
                    FusionMode::SoftmaxFusion => softmax_fusion(model, &defended)?,
                    FusionMode::Single => unreachable!("rejected by validate"),
                }
            }
        }
    };
    Ok(SampleOutcome {
        attacked: sample.attacked,
        true_label: sample.true_label,
        target_label: sample.target_label,
        pre_decision,
        post_decision,
    })
}

fn select_masks(
    model: &ClassifierModel,
    sample: &Sample,
    pre_decision: Label,
    store: Option<&MaskSetStore>,
    config: &ScenarioConfig,
) -> Result<Vec<crate::imaging::BinaryMask>, EvalError> {
    match (&config.mask_source, config.knowledge) {
        (MaskSource::Oracle, Knowledge::NonBlind) => {
            // The non-blind defender knows whether an attack is present and
            // skips the defense when it is not.
            if !sample.attacked {
                return Ok(Vec::new());
            }
            Ok(vec![oracle_mask(sample)?])
        }
        (MaskSource::EstimatedSet { selection, k }, Knowledge::SemiBlind) => {
            let store = store.ok_or(EvalError::MissingStore)?;
            let select_seed = seeding::derive_seed(config.seed, "select", &[sample.seed]);
            match selection {
                Selection::Ranked => Ok(ranked_select(model, &sample.image, store, *k)?),
                Selection::Random => {
                    // The inferred target is the top-1 class of this image.
                    Ok(random_select(store, pre_decision, *k, select_seed)?)
                }
                Selection::Guaranteed => {
                    if sample.attacked {
                        let target = sample.target_label.expect("attacked sample");
                        Ok(guaranteed_select(
                            store,
                            sample.true_label,
                            target,
                            *k,
                            select_seed,
                        )?)
                    } else if *k <= 1 {
                        // No true pair exists for a clean scene; the single
                        // guaranteed slot stays empty.
                        Ok(Vec::new())
                    } else {
                        Ok(random_select(store, pre_decision, k - 1, select_seed)?)
                    }
                }
            }
        }
        (MaskSource::RandomWindows(window_config), Knowledge::Blind) => {
            let per_sample = RandomMaskConfig {
                seed: seeding::derive_seed(config.seed, "blind", &[sample.seed]),
                ..*window_config
            };
            Ok(random_masks(
                sample.image.width(),
                sample.image.height(),
                &per_sample,
            )?)
        }
        (source, knowledge) => Err(EvalError::ScenarioMismatch {
            reason: format!("{knowledge:?} knowledge cannot use mask source {source:?}"),
        }),
    }
}

/// Evaluates a whole-image baseline defense under blind-style semantics:
/// the transformation is applied to every scene.
pub fn run_baseline(
    model: &ClassifierModel,
    corpus: &Corpus,
    baseline: Baseline,
    pi_attack: f64,
) -> Result<MetricsReport, EvalError> {
    if corpus.test.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "unattacked" });
    }
    if corpus.attacked.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "attacked" });
    }
    let outcomes: Vec<SampleOutcome> = corpus
        .test
        .par_iter()
        .chain(corpus.attacked.par_iter())
        .map(|sample| {
            let transformed = baseline.apply(&sample.image)?;
            Ok(SampleOutcome {
                attacked: sample.attacked,
                true_label: sample.true_label,
                target_label: sample.target_label,
                pre_decision: model.predict(&sample.image),
                post_decision: model.predict(&transformed),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let fingerprint =
        seeding::fingerprint_bytes(&serde_json::to_vec(&baseline).expect("baseline serializes"));
    MetricsReport::from_outcomes(&outcomes, pi_attack, fingerprint)
}

/// One cell of the window-parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub window_size: usize,
    pub ratio: f64,
    /// Windows per mask after resolving the ratio.
    pub m: usize,
    /// Whether the ratio produced a fractional count that was floored.
    pub floored: bool,
    pub report: MetricsReport,
}

/// Grid-search output: all cells plus the index of the best cell by PDA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

/// Runs the blind non-overlapping reconstruction scenario over every
/// `(window size, ratio)` pair and reports the best cell by PDA.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    model: &ClassifierModel,
    corpus: &Corpus,
    window_sizes: &[usize],
    ratios: &[f64],
    k: usize,
    fusion: FusionMode,
    defense: DefenseOp,
    pi_attack: f64,
    seed: u64,
) -> Result<GridSearchResult, EvalError> {
    let mut cells = Vec::with_capacity(window_sizes.len() * ratios.len());
    for (wi, &window_size) in window_sizes.iter().enumerate() {
        for (ri, &ratio) in ratios.iter().enumerate() {
            let count = WindowCount::Ratio(ratio);
            let (m, floored) = crate::masks::window_count(
                corpus.canvas,
                corpus.canvas,
                window_size,
                &count,
            )?;
            let config = ScenarioConfig {
                knowledge: Knowledge::Blind,
                defense,
                application: Application::Parallel(fusion),
                mask_source: MaskSource::RandomWindows(RandomMaskConfig {
                    window_size,
                    count,
                    overlap: crate::masks::Overlap::NonOverlapping,
                    k,
                    seed: seeding::derive_seed(seed, "grid", &[wi as u64, ri as u64]),
                }),
                pi_attack,
                seed,
                allow_ground_truth: false,
            };
            let report = run_scenario(model, corpus, None, &config)?;
            cells.push(GridCell {
                window_size,
                ratio,
                m,
                floored,
                report,
            });
        }
    }
    let best = cells
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.report
                .pda
                .partial_cmp(&b.report.pda)
                .expect("PDA is finite")
                .then(ib.cmp(ia)) // ties keep the earliest cell
        })
        .map(|(i, _)| i)
        .expect("grid has at least one cell");
    Ok(GridSearchResult { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defense::RemapMode;

    fn base_config() -> ScenarioConfig {
        ScenarioConfig {
            knowledge: Knowledge::NonBlind,
            defense: DefenseOp::Remap(RemapMode::Threshold { tau: 0.5 }),
            application: Application::Sequential,
            mask_source: MaskSource::Oracle,
            pi_attack: 0.5,
            seed: 0,
            allow_ground_truth: false,
        }
    }

    #[test]
    fn knowledge_and_mask_source_must_agree() {
        let mut config = base_config();
        config.mask_source = MaskSource::EstimatedSet {
            selection: Selection::Ranked,
            k: 3,
        };
        assert!(matches!(
            config.validate(),
            Err(EvalError::ScenarioMismatch { .. })
        ));
    }

    #[test]
    fn guaranteed_requires_ground_truth_flag() {
        let mut config = base_config();
        config.knowledge = Knowledge::SemiBlind;
        config.mask_source = MaskSource::EstimatedSet {
            selection: Selection::Guaranteed,
            k: 2,
        };
        assert!(matches!(
            config.validate(),
            Err(EvalError::GroundTruthNotAllowed)
        ));
        config.allow_ground_truth = true;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn parallel_single_fusion_rejected() {
        let mut config = base_config();
        config.application = Application::Parallel(FusionMode::Single);
        assert!(matches!(
            config.validate(),
            Err(EvalError::ScenarioMismatch { .. })
        ));
    }

    #[test]
    fn bad_prior_rejected() {
        let mut config = base_config();
        config.pi_attack = 1.5;
        assert!(matches!(config.validate(), Err(EvalError::BadPrior { .. })));
    }

    #[test]
    fn fingerprint_is_stable_and_config_sensitive() {
        let config = base_config();
        assert_eq!(config.fingerprint(), config.fingerprint());
        let mut other = base_config();
        other.pi_attack = 0.25;
        assert_ne!(config.fingerprint(), other.fingerprint());
    }
}
