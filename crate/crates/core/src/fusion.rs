//! Decision fusion over defended images.
//!
//! A sequential defense yields one image and one decision. A parallel defense
//! yields one image per mask; the final label comes from majority vote over
//! per-image decisions or from the argmax of the summed softmax vectors.
//! Both reductions are order-insensitive, with documented tie rules, so
//! fused results do not depend on scheduling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierModel, Label, SoftmaxVector};
use crate::imaging::Image;

/// Final-decision strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    /// Classify a single defended image.
    Single,
    /// Majority vote over per-image decisions.
    MajorityVote,
    /// Argmax of the summed softmax vectors.
    SoftmaxFusion,
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("decision fusion needs at least one defended image")]
    EmptyInput,
}

/// Decision for a single defended image.
pub fn decide_single(model: &ClassifierModel, defended: &Image) -> Label {
    model.predict(defended)
}

/// Majority vote over the predictions for each defended image. Vote ties are
/// broken by the larger summed softmax mass over the tied labels, then by
/// the lowest class index.
pub fn majority_vote(model: &ClassifierModel, defended: &[Image]) -> Result<Label, FusionError> {
    let vectors: Vec<SoftmaxVector> = defended.iter().map(|img| model.classify(img)).collect();
    majority_vote_from(&vectors)
}

/// Vector-level majority vote; see [`majority_vote`].
pub fn majority_vote_from(vectors: &[SoftmaxVector]) -> Result<Label, FusionError> {
    if vectors.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    let n = vectors[0].len();
    let mut votes = vec![0usize; n];
    for v in vectors {
        votes[v.argmax().0] += 1;
    }
    let top = *votes.iter().max().expect("n >= 1");
    let mass = summed_mass(vectors, n);
    let mut best: Option<usize> = None;
    for (label, &count) in votes.iter().enumerate() {
        if count != top {
            continue;
        }
        match best {
            None => best = Some(label),
            Some(current) => {
                if mass[label] > mass[current] {
                    best = Some(label);
                }
            }
        }
    }
    Ok(Label(best.expect("at least one label reaches the top count")))
}

/// Argmax of the summed softmax vectors, ties by the lowest class index.
pub fn softmax_fusion(model: &ClassifierModel, defended: &[Image]) -> Result<Label, FusionError> {
    let vectors: Vec<SoftmaxVector> = defended.iter().map(|img| model.classify(img)).collect();
    softmax_fusion_from(&vectors)
}

/// Vector-level softmax fusion; see [`softmax_fusion`].
pub fn softmax_fusion_from(vectors: &[SoftmaxVector]) -> Result<Label, FusionError> {
    if vectors.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    let fused = fuse_vectors(vectors);
    let mut best = 0usize;
    for (i, &v) in fused.iter().enumerate() {
        if v > fused[best] {
            best = i;
        }
    }
    Ok(Label(best))
}

/// Element-wise sum of softmax vectors, accumulated in f64.
pub fn fuse_vectors(vectors: &[SoftmaxVector]) -> Vec<f64> {
    let n = vectors.first().map_or(0, SoftmaxVector::len);
    let mut fused = vec![0.0f64; n];
    for v in vectors {
        for (acc, &x) in fused.iter_mut().zip(v.values()) {
            *acc += f64::from(x);
        }
    }
    fused
}

fn summed_mass(vectors: &[SoftmaxVector], n: usize) -> Vec<f64> {
    let mut mass = vec![0.0f64; n];
    for v in vectors {
        for (acc, &x) in mass.iter_mut().zip(v.values()) {
            *acc += f64::from(x);
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(values: &[f32]) -> SoftmaxVector {
        SoftmaxVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn majority_vote_counts_predictions() {
        // Predictions [1, 1, 2].
        let vs = [
            sv(&[0.1, 0.8, 0.1]),
            sv(&[0.2, 0.6, 0.2]),
            sv(&[0.1, 0.2, 0.7]),
        ];
        assert_eq!(majority_vote_from(&vs).unwrap(), Label(1));
    }

    #[test]
    fn unanimous_vote() {
        let vs = vec![sv(&[0.0, 0.0, 0.0, 1.0]); 5];
        assert_eq!(majority_vote_from(&vs).unwrap(), Label(3));
    }

    #[test]
    fn vote_tie_breaks_by_softmax_mass() {
        // Predictions [1, 2]; class-2 mass 0.4 + 0.7 = 1.1 beats class-1
        // mass 0.5 + 0.3 = 0.8.
        let vs = [sv(&[0.1, 0.5, 0.4]), sv(&[0.0, 0.3, 0.7])];
        assert_eq!(majority_vote_from(&vs).unwrap(), Label(2));
    }

    #[test]
    fn vote_tie_with_equal_mass_prefers_lowest_index() {
        let vs = [sv(&[0.6, 0.4]), sv(&[0.4, 0.6])];
        assert_eq!(majority_vote_from(&vs).unwrap(), Label(0));
    }

    #[test]
    fn softmax_fusion_sums_vectors() {
        let vs = [sv(&[0.6, 0.4]), sv(&[0.1, 0.9])];
        // Fused [0.7, 1.3].
        assert_eq!(softmax_fusion_from(&vs).unwrap(), Label(1));
    }

    #[test]
    fn softmax_fusion_single_equals_argmax() {
        let v = sv(&[0.2, 0.5, 0.3]);
        assert_eq!(softmax_fusion_from(std::slice::from_ref(&v)).unwrap(), v.argmax());
    }

    #[test]
    fn empty_inputs_error() {
        assert!(matches!(majority_vote_from(&[]), Err(FusionError::EmptyInput)));
        assert!(matches!(softmax_fusion_from(&[]), Err(FusionError::EmptyInput)));
    }

    #[test]
    fn fused_copies_of_one_vector_keep_the_argmax() {
        let v = sv(&[0.15, 0.25, 0.6]);
        let copies = vec![v.clone(); 7];
        assert_eq!(softmax_fusion_from(&copies).unwrap(), v.argmax());
        assert_eq!(majority_vote_from(&copies).unwrap(), v.argmax());
    }

    proptest! {
        #[test]
        fn fusion_is_permutation_invariant(seed in any::<u64>(), k in 1usize..7, n in 2usize..9) {
            let mut rng = crate::seeding::rng_from_seed(seed);
            use rand::Rng;
            let vectors: Vec<SoftmaxVector> = (0..k)
                .map(|_| {
                    let raw: Vec<f32> = (0..n).map(|_| rng.gen::<f32>() + 1e-3).collect();
                    let sum: f32 = raw.iter().sum();
                    sv(&raw.iter().map(|&x| x / sum).collect::<Vec<_>>())
                })
                .collect();
            let mut reversed = vectors.clone();
            reversed.reverse();
            prop_assert_eq!(
                majority_vote_from(&vectors).unwrap(),
                majority_vote_from(&reversed).unwrap()
            );
            prop_assert_eq!(
                softmax_fusion_from(&vectors).unwrap(),
                softmax_fusion_from(&reversed).unwrap()
            );
            // Fused vector sums to k.
            let fused = fuse_vectors(&vectors);
            let total: f64 = fused.iter().sum();
            prop_assert!((total - k as f64).abs() < 1e-5);
        }
    }
}
