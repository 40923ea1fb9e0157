//! The metric suite: CA, T-ASR, U-ASR, DR, CD, and PDA.
//!
//! Every metric is a ratio of integer counts accumulated from per-sample
//! outcomes, so reports are exact, order-independent, and reproducible. DR
//! conditions on the attacked samples that were misclassified before the
//! defense; when that set is empty DR is undefined and reported as such,
//! never as zero.

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, Label};
use crate::synth::Sample;

use super::EvalError;

/// Pre-/post-defense decisions for one evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOutcome {
    pub attacked: bool,
    pub true_label: Label,
    pub target_label: Option<Label>,
    pub pre_decision: Label,
    pub post_decision: Label,
}

/// Integer counts backing every metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub unattacked_total: usize,
    pub unattacked_correct_pre: usize,
    pub unattacked_correct_post: usize,
    pub attacked_total: usize,
    pub attacked_target_hit_pre: usize,
    pub attacked_misclassified_pre: usize,
    pub attacked_correct_post: usize,
    /// Post-defense correct among the pre-defense misclassified (DR's
    /// numerator).
    pub attacked_recovered_post: usize,
}

impl Counts {
    pub fn from_outcomes(outcomes: &[SampleOutcome]) -> Counts {
        let mut counts = Counts {
            unattacked_total: 0,
            unattacked_correct_pre: 0,
            unattacked_correct_post: 0,
            attacked_total: 0,
            attacked_target_hit_pre: 0,
            attacked_misclassified_pre: 0,
            attacked_correct_post: 0,
            attacked_recovered_post: 0,
        };
        for o in outcomes {
            if o.attacked {
                counts.attacked_total += 1;
                if Some(o.pre_decision) == o.target_label {
                    counts.attacked_target_hit_pre += 1;
                }
                if o.post_decision == o.true_label {
                    counts.attacked_correct_post += 1;
                }
                if o.pre_decision != o.true_label {
                    counts.attacked_misclassified_pre += 1;
                    if o.post_decision == o.true_label {
                        counts.attacked_recovered_post += 1;
                    }
                }
            } else {
                counts.unattacked_total += 1;
                if o.pre_decision == o.true_label {
                    counts.unattacked_correct_pre += 1;
                }
                if o.post_decision == o.true_label {
                    counts.unattacked_correct_post += 1;
                }
            }
        }
        counts
    }
}

/// Full evaluation report: backing counts, the attack prior, the config
/// fingerprint, and the derived metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pi_attack: f64,
    pub config_fingerprint: String,
    pub counts: Counts,
    /// Classification accuracy on unattacked scenes, before any defense.
    pub ca: f64,
    /// Targeted attack success rate.
    pub t_asr: f64,
    /// Untargeted attack success rate.
    pub u_asr: f64,
    /// Defense rate; `None` when no attacked sample was misclassified
    /// pre-defense.
    pub dr: Option<f64>,
    /// Classification drop on unattacked scenes.
    pub cd: f64,
    /// Post-defense accuracy under the attack prior.
    pub pda: f64,
}

impl MetricsReport {
    /// Derives every metric from counts. Both pools must be non-empty.
    pub fn from_counts(
        counts: Counts,
        pi_attack: f64,
        config_fingerprint: String,
    ) -> Result<MetricsReport, EvalError> {
        if counts.unattacked_total == 0 {
            return Err(EvalError::EmptySampleSet { pool: "unattacked" });
        }
        if counts.attacked_total == 0 {
            return Err(EvalError::EmptySampleSet { pool: "attacked" });
        }
        if !(0.0..=1.0).contains(&pi_attack) {
            return Err(EvalError::BadPrior { pi: pi_attack });
        }
        let ratio = |num: usize, den: usize| num as f64 / den as f64;
        let ca = ratio(counts.unattacked_correct_pre, counts.unattacked_total);
        let post_unattacked = ratio(counts.unattacked_correct_post, counts.unattacked_total);
        let post_attacked = ratio(counts.attacked_correct_post, counts.attacked_total);
        Ok(MetricsReport {
            pi_attack,
            config_fingerprint,
            counts,
            ca,
            t_asr: ratio(counts.attacked_target_hit_pre, counts.attacked_total),
            u_asr: ratio(counts.attacked_misclassified_pre, counts.attacked_total),
            dr: (counts.attacked_misclassified_pre > 0)
                .then(|| ratio(counts.attacked_recovered_post, counts.attacked_misclassified_pre)),
            cd: ca - post_unattacked,
            pda: (1.0 - pi_attack) * post_unattacked + pi_attack * post_attacked,
        })
    }

    pub fn from_outcomes(
        outcomes: &[SampleOutcome],
        pi_attack: f64,
        config_fingerprint: String,
    ) -> Result<MetricsReport, EvalError> {
        MetricsReport::from_counts(
            Counts::from_outcomes(outcomes),
            pi_attack,
            config_fingerprint,
        )
    }

    /// The closed-form PDA that holds when U-ASR = 1 and DR conditions on
    /// the whole attacked pool: `(1 - pi)(CA - CD) + pi * DR`. Returns
    /// `None` when the precondition does not hold for this report.
    pub fn pda_identity(&self) -> Option<f64> {
        if self.counts.attacked_misclassified_pre != self.counts.attacked_total {
            return None;
        }
        self.dr
            .map(|dr| pda_from_identity(self.ca, self.cd, dr, self.pi_attack))
    }
}

/// `(1 - pi)(ca - cd) + pi * dr`.
pub fn pda_from_identity(ca: f64, cd: f64, dr: f64, pi_attack: f64) -> f64 {
    (1.0 - pi_attack) * (ca - cd) + pi_attack * dr
}

/// Classification accuracy of the bare model on unattacked samples.
pub fn compute_ca(model: &ClassifierModel, samples: &[Sample]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "unattacked" });
    }
    debug_assert!(samples.iter().all(|s| !s.attacked));
    let correct = samples
        .iter()
        .filter(|s| model.predict(&s.image) == s.true_label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Targeted and untargeted attack success rates of the bare model on
/// attacked samples.
pub fn compute_asr(model: &ClassifierModel, samples: &[Sample]) -> Result<(f64, f64), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySampleSet { pool: "attacked" });
    }
    let mut targeted = 0usize;
    let mut untargeted = 0usize;
    for s in samples {
        debug_assert!(s.attacked);
        let decision = model.predict(&s.image);
        if Some(decision) == s.target_label {
            targeted += 1;
        }
        if decision != s.true_label {
            untargeted += 1;
        }
    }
    Ok((
        targeted as f64 / samples.len() as f64,
        untargeted as f64 / samples.len() as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(
        attacked: bool,
        true_label: usize,
        target: Option<usize>,
        pre: usize,
        post: usize,
    ) -> SampleOutcome {
        SampleOutcome {
            attacked,
            true_label: Label(true_label),
            target_label: target.map(Label),
            pre_decision: Label(pre),
            post_decision: Label(post),
        }
    }

    #[test]
    fn counting_matches_hand_computation() {
        let outcomes = vec![
            // 3 of 4 unattacked correct pre; 4 of 4 correct post.
            outcome(false, 0, None, 0, 0),
            outcome(false, 1, None, 1, 1),
            outcome(false, 2, None, 0, 2),
            outcome(false, 3, None, 3, 3),
            // 2 attacked: one hit its target and is recovered, one failed
            // attack (pre correct).
            outcome(true, 0, Some(1), 1, 0),
            outcome(true, 2, Some(3), 2, 2),
        ];
        let report = MetricsReport::from_outcomes(&outcomes, 0.5, "t".into()).unwrap();
        assert_eq!(report.ca, 0.75);
        assert_eq!(report.t_asr, 0.5);
        assert_eq!(report.u_asr, 0.5);
        assert_eq!(report.dr, Some(1.0));
        assert_eq!(report.cd, 0.75 - 1.0);
        assert_eq!(report.pda, 0.5 * 1.0 + 0.5 * 1.0);
    }

    #[test]
    fn dr_is_undefined_when_nothing_was_misclassified() {
        let outcomes = vec![
            outcome(false, 0, None, 0, 0),
            outcome(true, 0, Some(1), 0, 0), // attack failed: pre correct
        ];
        let report = MetricsReport::from_outcomes(&outcomes, 0.5, "t".into()).unwrap();
        assert_eq!(report.dr, None);
        assert_eq!(report.pda_identity(), None);
    }

    #[test]
    fn empty_pools_are_errors() {
        let unattacked_only = vec![outcome(false, 0, None, 0, 0)];
        assert!(matches!(
            MetricsReport::from_outcomes(&unattacked_only, 0.5, String::new()),
            Err(EvalError::EmptySampleSet { pool: "attacked" })
        ));
        let attacked_only = vec![outcome(true, 0, Some(1), 1, 0)];
        assert!(matches!(
            MetricsReport::from_outcomes(&attacked_only, 0.5, String::new()),
            Err(EvalError::EmptySampleSet { pool: "unattacked" })
        ));
    }

    #[test]
    fn identity_holds_when_u_asr_is_one() {
        // 10 attacked all misclassified pre, 7 recovered; 20 unattacked all
        // correct pre, 19 post.
        let mut outcomes = Vec::new();
        for i in 0..10 {
            outcomes.push(outcome(true, 0, Some(1), 1, if i < 7 { 0 } else { 1 }));
        }
        for i in 0..20 {
            outcomes.push(outcome(false, 2, None, 2, if i < 19 { 2 } else { 0 }));
        }
        let report = MetricsReport::from_outcomes(&outcomes, 0.3, "t".into()).unwrap();
        assert_eq!(report.u_asr, 1.0);
        let identity = report.pda_identity().unwrap();
        assert!((report.pda - identity).abs() < 1e-9);
    }

    #[test]
    fn paper_identity_numbers() {
        let pda = pda_from_identity(1.0, 0.0, 0.9222, 0.5);
        assert!((pda - 0.9611).abs() < 1e-9);
    }

    #[test]
    fn metrics_equal_their_count_ratios() {
        let counts = Counts {
            unattacked_total: 66,
            unattacked_correct_pre: 66,
            unattacked_correct_post: 66,
            attacked_total: 90,
            attacked_target_hit_pre: 86,
            attacked_misclassified_pre: 90,
            attacked_correct_post: 83,
            attacked_recovered_post: 83,
        };
        let report = MetricsReport::from_counts(counts, 0.5, "t".into()).unwrap();
        assert_eq!(report.ca, 1.0);
        assert_eq!(report.t_asr, 86.0 / 90.0);
        assert_eq!(report.u_asr, 1.0);
        assert_eq!(report.dr, Some(83.0 / 90.0));
        assert_eq!(report.cd, 0.0);
    }
}
