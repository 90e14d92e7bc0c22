//! The three fusion levels: frame-level coefficient stacking lives in
//! `features` (delta-extended sets), this module covers supervector
//! concatenation and classifier score combination.
//!
//! Supervector fusion glues the pooled means of two models adapted to
//! the same utterance into one long vector, keeping a layout record so
//! the parts can be recovered exactly. Score fusion combines the two
//! back-ends' posterior-like vectors; the convex sum rule is the
//! default, with product and max rules available for experimentation.

use serde::{Deserialize, Serialize};

use crate::classifiers::ScoreVector;
use crate::config::{FusionConfig, FusionRule};
use crate::error::{Error, Result};
use crate::features::archive::SegmentLayout;
use crate::gmm::Supervector;

/// Convex weights for combining the two classifier scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_svm: f64,
    pub w_nb: f64,
}

impl FusionWeights {
    /// Both non-negative, summing to one.
    pub fn new(w_svm: f64, w_nb: f64) -> Result<Self> {
        if !(w_svm >= 0.0 && w_nb >= 0.0) || (w_svm + w_nb - 1.0).abs() > 1e-9 {
            return Err(Error::ConfigInvalid(format!(
                "fusion weights ({w_svm}, {w_nb}) must be non-negative and sum to 1"
            )));
        }
        Ok(FusionWeights { w_svm, w_nb })
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            w_svm: 0.5,
            w_nb: 0.5,
        }
    }
}

impl From<&FusionConfig> for FusionWeights {
    fn from(cfg: &FusionConfig) -> Self {
        FusionWeights {
            w_svm: cfg.weight,
            w_nb: 1.0 - cfg.weight,
        }
    }
}

/// Two supervectors laid end to end, with enough layout to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSupervector {
    pub values: Vec<f64>,
    /// Segments in concatenation order; offsets partition `values`.
    pub layout: Vec<SegmentLayout>,
    /// Utterance both parts were adapted to, when known.
    pub utterance: Option<String>,
}

/// Concatenate two same-utterance supervectors in argument order.
///
/// The toolkit convention places the spectral-envelope model first and
/// the temporal-trajectory model second; callers are responsible for
/// that ordering, which keeps archives reproducible.
pub fn concat_supervectors(a: &Supervector, b: &Supervector) -> Result<FusedSupervector> {
    if let (Some(ua), Some(ub)) = (&a.utterance, &b.utterance) {
        if ua != ub {
            return Err(Error::UtteranceMismatch(ua.clone(), ub.clone()));
        }
    }
    if a.components != b.components {
        return Err(Error::ComponentCountMismatch(a.components, b.components));
    }
    let mut values = Vec::with_capacity(a.values.len() + b.values.len());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    let layout = vec![
        SegmentLayout {
            offset: 0,
            len: a.values.len(),
            kind: a.kind,
            components: a.components,
            dims: a.dims,
        },
        SegmentLayout {
            offset: a.values.len(),
            len: b.values.len(),
            kind: b.kind,
            components: b.components,
            dims: b.dims,
        },
    ];
    Ok(FusedSupervector {
        values,
        layout,
        utterance: a.utterance.clone().or_else(|| b.utterance.clone()),
    })
}

impl FusedSupervector {
    /// Recover the source supervectors from the layout record.
    pub fn split(&self) -> Vec<Supervector> {
        self.layout
            .iter()
            .map(|seg| Supervector {
                values: self.values[seg.offset..seg.offset + seg.len].to_vec(),
                kind: seg.kind,
                components: seg.components,
                dims: seg.dims,
                utterance: self.utterance.clone(),
            })
            .collect()
    }
}

/// Combine the two back-ends' scores under the configured rule.
///
/// Inputs must cover the same speakers and each sum to one. Margins
/// are blended with the same weights when both sides carry them, pass
/// through from whichever side has them otherwise.
pub fn fuse_scores_with_rule(
    s_svm: &ScoreVector,
    s_nb: &ScoreVector,
    w: FusionWeights,
    rule: FusionRule,
) -> Result<ScoreVector> {
    if s_svm.is_empty() || s_nb.is_empty() {
        return Err(Error::EmptyScores);
    }
    if s_svm.len() != s_nb.len() || s_svm.speakers().zip(s_nb.speakers()).any(|(a, b)| a != b) {
        return Err(Error::SpeakerSetMismatch);
    }
    s_svm.check_normalized(1e-6)?;
    s_nb.check_normalized(1e-6)?;

    let mut fused: Vec<f64> = s_svm
        .entries()
        .iter()
        .zip(s_nb.entries())
        .map(|((_, a), (_, b))| match rule {
            FusionRule::Sum => w.w_svm * a + w.w_nb * b,
            FusionRule::Product => a.powf(w.w_svm) * b.powf(w.w_nb),
            FusionRule::Max => (w.w_svm * a).max(w.w_nb * b),
        })
        .collect();
    match rule {
        // The convex sum of two distributions is already normalized.
        FusionRule::Sum => {}
        FusionRule::Product | FusionRule::Max => {
            let total: f64 = fused.iter().sum();
            if !total.is_finite() || total <= 0.0 {
                return Err(Error::NumericalFailure(format!(
                    "{rule:?} rule left no score mass to normalize"
                )));
            }
            for v in &mut fused {
                *v /= total;
            }
        }
    }

    let margins = match (s_svm.margins(), s_nb.margins()) {
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(b)
                .map(|(x, y)| w.w_svm * x + w.w_nb * y)
                .collect(),
        ),
        (Some(a), None) => Some(a.to_vec()),
        (None, Some(b)) => Some(b.to_vec()),
        (None, None) => None,
    };
    let entries = s_svm.speakers().map(str::to_owned).zip(fused).collect();
    Ok(ScoreVector::new(entries, margins))
}

/// Score fusion under the default convex sum rule.
pub fn fuse_scores(
    s_svm: &ScoreVector,
    s_nb: &ScoreVector,
    w: FusionWeights,
) -> Result<ScoreVector> {
    fuse_scores_with_rule(s_svm, s_nb, w, FusionRule::Sum)
}

/// Final identification decision for one score vector.
pub fn decide(s: &ScoreVector) -> Result<&str> {
    s.decide()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    fn sv(kind: FeatureKind, components: usize, dims: usize, utt: &str) -> Supervector {
        Supervector {
            values: (0..components * dims)
                .map(|i| i as f64 * 0.25 - 3.0)
                .collect(),
            kind,
            components,
            dims,
            utterance: Some(utt.to_string()),
        }
    }

    fn scores(pairs: &[(&str, f64)]) -> ScoreVector {
        ScoreVector::new(
            pairs.iter().map(|(s, x)| (s.to_string(), *x)).collect(),
            None,
        )
    }

    #[test]
    fn tiny_concat_matches_the_worked_example() {
        let a = Supervector {
            values: vec![1.0, 2.0],
            kind: FeatureKind::Mfcc,
            components: 1,
            dims: 2,
            utterance: None,
        };
        let b = Supervector {
            values: vec![3.0],
            kind: FeatureKind::RastaPlp,
            components: 1,
            dims: 1,
            utterance: None,
        };
        let fused = concat_supervectors(&a, &b).unwrap();
        assert_eq!(fused.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(fused.layout[0].offset, 0);
        assert_eq!(fused.layout[1].offset, 2);
    }

    #[test]
    fn full_width_concat_hits_the_published_lengths() {
        let a = sv(FeatureKind::Mfcc, 128, 12, "u1");
        let b = sv(FeatureKind::RastaPlp, 128, 13, "u1");
        assert_eq!(a.values.len(), 1536);
        assert_eq!(b.values.len(), 1664);
        let fused = concat_supervectors(&a, &b).unwrap();
        assert_eq!(fused.values.len(), 3200);
        assert_eq!(fused.utterance.as_deref(), Some("u1"));
    }

    #[test]
    fn split_round_trips_exactly() {
        let a = sv(FeatureKind::Mfcc, 4, 3, "u7");
        let b = sv(FeatureKind::RastaPlp, 4, 5, "u7");
        let fused = concat_supervectors(&a, &b).unwrap();
        let parts = fused.split();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].values, a.values);
        assert_eq!(parts[0].kind, a.kind);
        assert_eq!(parts[0].dims, 3);
        assert_eq!(parts[1].values, b.values);
        assert_eq!(parts[1].components, 4);
    }

    #[test]
    fn cross_utterance_and_cross_width_pairs_are_rejected() {
        let a = sv(FeatureKind::Mfcc, 4, 3, "u1");
        let b = sv(FeatureKind::RastaPlp, 4, 5, "u2");
        assert!(matches!(
            concat_supervectors(&a, &b),
            Err(Error::UtteranceMismatch(_, _))
        ));

        let c = sv(FeatureKind::RastaPlp, 8, 5, "u1");
        assert!(matches!(
            concat_supervectors(&a, &c),
            Err(Error::ComponentCountMismatch(4, 8))
        ));

        // An untagged side cannot contradict the tagged one.
        let mut d = sv(FeatureKind::RastaPlp, 4, 5, "ignored");
        d.utterance = None;
        assert!(concat_supervectors(&a, &d).is_ok());
    }

    #[test]
    fn sum_rule_matches_hand_arithmetic() {
        let s1 = scores(&[("a", 0.6), ("b", 0.4)]);
        let s2 = scores(&[("a", 0.2), ("b", 0.8)]);
        let fused = fuse_scores(&s1, &s2, FusionWeights::default()).unwrap();
        assert!((fused.score_for("a").unwrap() - 0.4).abs() < 1e-15);
        assert!((fused.score_for("b").unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn agreement_is_idempotent_for_any_weights() {
        let s = scores(&[("a", 0.3), ("b", 0.5), ("c", 0.2)]);
        for wa in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let w = FusionWeights::new(wa, 1.0 - wa).unwrap();
            let fused = fuse_scores(&s, &s, w).unwrap();
            for ((_, x), (_, y)) in fused.entries().iter().zip(s.entries()) {
                assert!((x - y).abs() < 1e-15);
            }
            assert_eq!(fused.decide().unwrap(), s.decide().unwrap());
        }
    }

    #[test]
    fn degenerate_weights_reproduce_one_side() {
        let s1 = scores(&[("a", 0.9), ("b", 0.1)]);
        let s2 = scores(&[("a", 0.1), ("b", 0.9)]);
        let only_first = fuse_scores(&s1, &s2, FusionWeights::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(only_first.entries(), s1.entries());
        assert_eq!(only_first.decide().unwrap(), "a");
        let only_second = fuse_scores(&s1, &s2, FusionWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(only_second.entries(), s2.entries());
        assert_eq!(only_second.decide().unwrap(), "b");
    }

    #[test]
    fn fused_output_stays_normalized() {
        let s1 = scores(&[("a", 0.15), ("b", 0.35), ("c", 0.5)]);
        let s2 = scores(&[("a", 0.4), ("b", 0.4), ("c", 0.2)]);
        for rule in [FusionRule::Sum, FusionRule::Product, FusionRule::Max] {
            let fused = fuse_scores_with_rule(&s1, &s2, FusionWeights::default(), rule).unwrap();
            assert!(fused.check_normalized(1e-9).is_ok(), "{rule:?}");
        }
    }

    #[test]
    fn mismatched_and_unnormalized_inputs_are_rejected() {
        let s1 = scores(&[("a", 0.6), ("b", 0.4)]);
        let s2 = scores(&[("a", 0.6), ("c", 0.4)]);
        assert!(matches!(
            fuse_scores(&s1, &s2, FusionWeights::default()),
            Err(Error::SpeakerSetMismatch)
        ));

        let s3 = scores(&[("a", 0.6), ("b", 0.6)]);
        assert!(matches!(
            fuse_scores(&s1, &s3, FusionWeights::default()),
            Err(Error::NotNormalized(_))
        ));

        let empty = scores(&[]);
        assert!(matches!(
            fuse_scores(&empty, &empty, FusionWeights::default()),
            Err(Error::EmptyScores)
        ));
    }

    #[test]
    fn margins_blend_or_pass_through() {
        let s1 = ScoreVector::new(
            vec![("a".into(), 0.5), ("b".into(), 0.5)],
            Some(vec![2.0, -2.0]),
        );
        let s2 = ScoreVector::new(
            vec![("a".into(), 0.5), ("b".into(), 0.5)],
            Some(vec![-1.0, 1.0]),
        );
        let fused = fuse_scores(&s1, &s2, FusionWeights::default()).unwrap();
        assert_eq!(fused.margins(), Some(&[0.5, -0.5][..]));
        // Equal fused scores: the blended margin decides.
        assert_eq!(fused.decide().unwrap(), "a");

        let bare = scores(&[("a", 0.5), ("b", 0.5)]);
        let passed = fuse_scores(&s1, &bare, FusionWeights::default()).unwrap();
        assert_eq!(passed.margins(), Some(&[2.0, -2.0][..]));
        assert_eq!(
            fuse_scores(&bare, &bare, FusionWeights::default())
                .unwrap()
                .margins(),
            None
        );
    }

    #[test]
    fn product_rule_rewards_agreement_and_max_rule_tracks_peaks() {
        // Both sides weakly favor "a"; one side strongly favors "b".
        let s1 = scores(&[("a", 0.55), ("b", 0.45)]);
        let s2 = scores(&[("a", 0.55), ("b", 0.45)]);
        let prod =
            fuse_scores_with_rule(&s1, &s2, FusionWeights::default(), FusionRule::Product).unwrap();
        assert_eq!(prod.decide().unwrap(), "a");

        let s3 = scores(&[("a", 0.05), ("b", 0.95)]);
        let max =
            fuse_scores_with_rule(&s1, &s3, FusionWeights::default(), FusionRule::Max).unwrap();
        assert_eq!(max.decide().unwrap(), "b");

        // Disjoint certainty annihilates the product rule.
        let hard1 = scores(&[("a", 1.0), ("b", 0.0)]);
        let hard2 = scores(&[("a", 0.0), ("b", 1.0)]);
        assert!(matches!(
            fuse_scores_with_rule(
                &hard1,
                &hard2,
                FusionWeights::default(),
                FusionRule::Product
            ),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn weights_validate_and_derive_from_config() {
        assert!(FusionWeights::new(0.7, 0.3).is_ok());
        assert!(FusionWeights::new(0.7, 0.4).is_err());
        assert!(FusionWeights::new(-0.1, 1.1).is_err());
        let cfg = FusionConfig {
            rule: FusionRule::Sum,
            weight: 0.25,
        };
        let w = FusionWeights::from(&cfg);
        assert_eq!((w.w_svm, w.w_nb), (0.25, 0.75));
    }
}
