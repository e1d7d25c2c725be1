//! Candidate scoring by mean prompt similarity, and the strict win rule.

use alloc::string::String;
use alloc::vec::Vec;

use crate::vector::{mean_similarity, EmbeddingVector, VectorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("score is not finite")]
pub struct NonFiniteScore;

/// Mean similarity of each candidate to the prompt embeddings, in candidate order.
pub fn score_candidates(prompts: &[EmbeddingVector], candidates: &[EmbeddingVector]) -> Result<Vec<f64>, VectorError> {
    candidates.iter().map(|c| mean_similarity(c, prompts)).collect()
}

/// `true` iff the positive strictly beats both negatives. Ties lose.
pub fn judge_instance(s_pos: f64, s_neg1: f64, s_neg2: f64) -> Result<bool, NonFiniteScore> {
    if !(s_pos.is_finite() && s_neg1.is_finite() && s_neg2.is_finite()) {
        return Err(NonFiniteScore);
    }
    Ok(s_pos > s_neg1 && s_pos > s_neg2)
}

/// Scores of one benchmark instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceScore {
    pub instance_id: String,
    pub s_pos: f64,
    pub s_neg1: f64,
    pub s_neg2: f64,
    pub win: bool,
}

impl InstanceScore {
    pub fn new(instance_id: impl Into<String>, s_pos: f64, s_neg1: f64, s_neg2: f64) -> Result<Self, NonFiniteScore> {
        let win = judge_instance(s_pos, s_neg1, s_neg2)?;
        Ok(Self { instance_id: instance_id.into(), s_pos, s_neg1, s_neg2, win })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new("t", values.to_vec()).unwrap()
    }

    #[test]
    fn judge_examples() {
        assert_eq!(judge_instance(0.30, 0.20, 0.10), Ok(true));
        assert_eq!(judge_instance(0.20, 0.30, 0.10), Ok(false));
        assert_eq!(judge_instance(0.30, 0.30, 0.10), Ok(false));
        assert_eq!(judge_instance(0.30, 0.10, 0.30), Ok(false));
        assert_eq!(judge_instance(f64::NAN, 0.1, 0.2), Err(NonFiniteScore));
        assert_eq!(judge_instance(0.3, f64::INFINITY, 0.2), Err(NonFiniteScore));
    }

    #[test]
    fn single_prompt_scores() {
        let p = v(&[0.6, 0.8]);
        let ortho = v(&[-0.8, 0.6]);
        let scores = score_candidates(core::slice::from_ref(&p), &[p.clone(), ortho]).unwrap();
        assert!((scores[0] - 1.0).abs() < 1e-15);
        assert!(scores[1].abs() < 1e-15);
    }

    #[test]
    fn score_errors() {
        assert_eq!(score_candidates(&[], &[v(&[1.0])]), Err(VectorError::EmptyPromptSet));
        assert_eq!(score_candidates(&[v(&[1.0, 0.0])], &[v(&[1.0])]), Err(VectorError::DimensionMismatch(1, 2)));
        assert_eq!(score_candidates(&[v(&[1.0])], &[]), Ok(vec![]));
    }

    proptest! {
        #[test]
        fn judge_is_invariant_under_increasing_maps(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, scale in 0.01f64..100.0, shift in -5.0f64..5.0) {
            let f = |x: f64| libm::exp(x) * scale + shift;
            prop_assert_eq!(judge_instance(a, b, c), judge_instance(f(a), f(b), f(c)));
        }

        #[test]
        fn scores_are_prompt_order_invariant(seed in any::<u64>()) {
            use rand_chacha::ChaCha8Rng;
            use rand_core::{RngCore, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut gen = |n: usize| (0..n).map(|_| {
                let vals = (0..6).map(|_| (rng.next_u32() as f64 / u32::MAX as f64) - 0.5).collect();
                EmbeddingVector::new("t", vals).unwrap()
            }).collect::<Vec<_>>();
            let mut prompts = gen(5);
            let cands = gen(3);
            let a = score_candidates(&prompts, &cands).unwrap();
            prompts.swap(0, 4);
            prompts.swap(1, 3);
            let b = score_candidates(&prompts, &cands).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
