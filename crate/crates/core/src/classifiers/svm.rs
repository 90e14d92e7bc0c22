//! Linear support vector machine trained by sequential minimal
//! optimization, arranged one-vs-one for closed-set identification.
//!
//! The optimizer is the simplified SMO scheme: sweep the training set
//! for Karush-Kuhn-Tucker violations, pair each violator with a second
//! index drawn at random, and solve the two-variable subproblem in
//! closed form. The kernel is the plain dot product, so the weight
//! vector is maintained incrementally and every decision evaluation
//! stays linear in the dimension.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifiers::{validate_training_set, MinMaxScaler, ScoreVector};
use crate::config::{derive_seed, SvmConfig};
use crate::error::{Error, Result};

/// A two-class training problem with labels in {-1, +1}.
pub struct SmoProblem<'a> {
    pub vectors: &'a [Vec<f64>],
    pub labels: &'a [f64],
}

/// Decision hyperplane f(x) = w.x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        dot(&self.weights, x) + self.bias
    }
}

/// Optimizer output; the dual variables are kept so callers can check
/// feasibility (0 <= alpha_i <= C, sum alpha_i y_i = 0).
#[derive(Debug, Clone)]
pub struct SmoOutcome {
    pub svm: BinarySvm,
    pub alphas: Vec<f64>,
    pub sweeps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train one maximum-margin hyperplane.
///
/// Terminates after `max_passes` consecutive sweeps without an update,
/// or unconditionally after `max_iters` sweeps; non-separable data is
/// therefore safe. The same seed always yields the same machine.
pub fn smo_train(problem: &SmoProblem, cfg: &SvmConfig, seed: u64) -> SmoOutcome {
    let n = problem.vectors.len();
    assert!(n >= 2, "need at least two training vectors");
    assert_eq!(n, problem.labels.len());
    debug_assert!(problem.labels.iter().all(|y| *y == 1.0 || *y == -1.0));
    let dims = problem.vectors[0].len();
    let x = problem.vectors;
    let y = problem.labels;
    let c = cfg.c;

    // Progress below this threshold is treated as no update at all.
    const MIN_ALPHA_STEP: f64 = 1e-5;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alphas = vec![0.0f64; n];
    let mut w = vec![0.0f64; dims];
    let mut b = 0.0f64;
    let mut sweeps = 0usize;
    let mut quiet_passes = 0usize;

    while quiet_passes < cfg.max_passes && sweeps < cfg.max_iters {
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = dot(&w, &x[i]) + b - y[i];
            let r_i = e_i * y[i];
            if !((r_i < -cfg.tol && alphas[i] < c) || (r_i > cfg.tol && alphas[i] > 0.0)) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = dot(&w, &x[j]) + b - y[j];

            let (alpha_i_old, alpha_j_old) = (alphas[i], alphas[j]);
            let (lo, hi) = if y[i] != y[j] {
                (
                    (alpha_j_old - alpha_i_old).max(0.0),
                    (c + alpha_j_old - alpha_i_old).min(c),
                )
            } else {
                (
                    (alpha_i_old + alpha_j_old - c).max(0.0),
                    (alpha_i_old + alpha_j_old).min(c),
                )
            };
            // Rounding in earlier updates can push the box corners a
            // hair past each other; either way there is no room left.
            if lo >= hi {
                continue;
            }

            let k_ii = dot(&x[i], &x[i]);
            let k_jj = dot(&x[j], &x[j]);
            let k_ij = dot(&x[i], &x[j]);
            let eta = 2.0 * k_ij - k_ii - k_jj;
            if eta >= 0.0 {
                continue;
            }

            let alpha_j = (alpha_j_old - y[j] * (e_i - e_j) / eta).clamp(lo, hi);
            if (alpha_j - alpha_j_old).abs() < MIN_ALPHA_STEP {
                continue;
            }
            // The exact pair update keeps alpha_i in the box; clamp to
            // stop accumulated rounding from leaking past the corners.
            let alpha_i = (alpha_i_old + y[i] * y[j] * (alpha_j_old - alpha_j)).clamp(0.0, c);

            let d_i = alpha_i - alpha_i_old;
            let d_j = alpha_j - alpha_j_old;
            let b1 = b - e_i - y[i] * d_i * k_ii - y[j] * d_j * k_ij;
            let b2 = b - e_j - y[i] * d_i * k_ij - y[j] * d_j * k_jj;
            b = if alpha_i > 0.0 && alpha_i < c {
                b1
            } else if alpha_j > 0.0 && alpha_j < c {
                b2
            } else {
                0.5 * (b1 + b2)
            };

            for t in 0..dims {
                w[t] += y[i] * d_i * x[i][t] + y[j] * d_j * x[j][t];
            }
            alphas[i] = alpha_i;
            alphas[j] = alpha_j;
            changed += 1;
        }
        sweeps += 1;
        if changed == 0 {
            quiet_passes += 1;
        } else {
            quiet_passes = 0;
        }
    }

    SmoOutcome {
        svm: BinarySvm {
            weights: w,
            bias: b,
        },
        alphas,
        sweeps,
    }
}

/// One hyperplane of the one-vs-one arrangement. A positive decision
/// favors `classes[first]`, a non-positive one `classes[second]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairMachine {
    pub(crate) first: usize,
    pub(crate) second: usize,
    pub(crate) svm: BinarySvm,
}

/// One-vs-one linear machine over the enrolled speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: Vec<String>,
    scaler: MinMaxScaler,
    machines: Vec<PairMachine>,
    config_hash: [u8; 32],
}

/// Train k(k-1)/2 pairwise machines over min/max-normalized vectors.
///
/// Each pair gets its own seed derived from `seed` and the class index
/// pair, so retraining any subset reproduces identical hyperplanes.
pub fn svm_train(
    vectors: &[Vec<f64>],
    labels: &[String],
    cfg: &SvmConfig,
    seed: u64,
    config_hash: [u8; 32],
) -> Result<SvmModel> {
    cfg.validate()?;
    let classes = validate_training_set(vectors, labels)?;
    let scaler = MinMaxScaler::fit(vectors);
    let scaled = scaler.transform_all(vectors);

    let mut machines = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for first in 0..classes.len() {
        for second in first + 1..classes.len() {
            let mut subset = Vec::new();
            let mut subset_labels = Vec::new();
            for (v, label) in scaled.iter().zip(labels) {
                if *label == classes[first] {
                    subset.push(v.clone());
                    subset_labels.push(1.0);
                } else if *label == classes[second] {
                    subset.push(v.clone());
                    subset_labels.push(-1.0);
                }
            }
            let problem = SmoProblem {
                vectors: &subset,
                labels: &subset_labels,
            };
            let pair_seed = derive_seed(seed, &format!("svm:{first}:{second}"));
            let outcome = smo_train(&problem, cfg, pair_seed);
            machines.push(PairMachine {
                first,
                second,
                svm: outcome.svm,
            });
        }
    }
    Ok(SvmModel {
        classes,
        scaler,
        machines,
        config_hash,
    })
}

impl SvmModel {
    pub(crate) fn from_parts(
        classes: Vec<String>,
        scaler: MinMaxScaler,
        machines: Vec<PairMachine>,
        config_hash: [u8; 32],
    ) -> Self {
        SvmModel {
            classes,
            scaler,
            machines,
            config_hash,
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dims(&self) -> usize {
        self.scaler.dims()
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.config_hash
    }

    pub(crate) fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub(crate) fn machines(&self) -> &[PairMachine] {
        &self.machines
    }

    /// Score one vector: every machine casts one vote, votes are
    /// normalized to sum to one, and the signed decision values are
    /// accumulated as margins for tie-breaking.
    pub fn score(&self, x: &[f64]) -> Result<ScoreVector> {
        if x.len() != self.scaler.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.scaler.dims(),
                got: x.len(),
            });
        }
        if let Some(dim) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { vector: 0, dim });
        }
        let scaled = self.scaler.transform(x);
        let k = self.classes.len();
        let mut votes = vec![0.0f64; k];
        let mut margins = vec![0.0f64; k];
        for pm in &self.machines {
            let f = pm.svm.decision(&scaled);
            if f > 0.0 {
                votes[pm.first] += 1.0;
            } else {
                votes[pm.second] += 1.0;
            }
            margins[pm.first] += f;
            margins[pm.second] -= f;
        }
        let total = self.machines.len() as f64;
        let entries = self
            .classes
            .iter()
            .zip(&votes)
            .map(|(cls, v)| (cls.clone(), v / total))
            .collect();
        Ok(ScoreVector::new(entries, Some(margins)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{load_classifier, save_classifier, TrainedClassifier};

    fn labeled_blobs(
        seed: u64,
        per_class: usize,
        centers: &[[f64; 2]],
    ) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                vectors.push(vec![
                    center[0] + rng.random_range(-0.5..0.5),
                    center[1] + rng.random_range(-0.5..0.5),
                ]);
                labels.push(format!("s{c}"));
            }
        }
        (vectors, labels)
    }

    #[test]
    fn symmetric_pair_yields_the_analytic_hyperplane() {
        // Two points at -1 and +1: the margin-maximizing plane is
        // f(x) = x, with both dual variables at 1/2.
        let vectors = vec![vec![-1.0], vec![1.0]];
        let labels = vec![-1.0, 1.0];
        let problem = SmoProblem {
            vectors: &vectors,
            labels: &labels,
        };
        let out = smo_train(&problem, &SvmConfig::default(), 3);
        assert!((out.svm.weights[0] - 1.0).abs() < 1e-12);
        assert!(out.svm.bias.abs() < 1e-12);
        assert!((out.alphas[0] - 0.5).abs() < 1e-12);
        assert!((out.alphas[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dual_variables_stay_feasible_on_inseparable_data() {
        // Exclusive-or layout has no linear separator; the optimizer
        // must still terminate with a feasible dual point.
        let vectors = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let labels = vec![1.0, 1.0, -1.0, -1.0];
        let cfg = SvmConfig::default();
        let problem = SmoProblem {
            vectors: &vectors,
            labels: &labels,
        };
        let out = smo_train(&problem, &cfg, 11);
        assert!(out.sweeps <= cfg.max_iters);
        for &a in &out.alphas {
            assert!((0.0..=cfg.c).contains(&a), "alpha {a} out of box");
        }
        assert!(out.svm.bias.is_finite());
        assert!(out.svm.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn feasibility_holds_across_random_separable_sets() {
        for seed in 0..20u64 {
            let (vectors, labels) = labeled_blobs(seed, 8, &[[-3.0, -3.0], [3.0, 3.0]]);
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if l == "s0" { -1.0 } else { 1.0 })
                .collect();
            let cfg = SvmConfig::default();
            let out = smo_train(
                &SmoProblem {
                    vectors: &vectors,
                    labels: &y,
                },
                &cfg,
                seed,
            );
            let mut balance = 0.0;
            for (a, yi) in out.alphas.iter().zip(&y) {
                assert!((-1e-12..=cfg.c + 1e-12).contains(a));
                balance += a * yi;
            }
            assert!(balance.abs() < 1e-9, "sum alpha_i y_i = {balance}");
            // Separable blobs: every training point classified correctly.
            for (v, yi) in vectors.iter().zip(&y) {
                assert!(out.svm.decision(v) * yi > 0.0, "seed {seed} misclassifies");
            }
        }
    }

    #[test]
    fn two_class_votes_are_one_hot() {
        let (vectors, labels) = labeled_blobs(5, 6, &[[-2.0, 0.0], [2.0, 0.0]]);
        let model = svm_train(&vectors, &labels, &SvmConfig::default(), 9, [0; 32]).unwrap();
        let scores = model.score(&[-2.0, 0.0]).unwrap();
        assert_eq!(scores.score_for("s0"), Some(1.0));
        assert_eq!(scores.score_for("s1"), Some(0.0));
        assert_eq!(scores.decide().unwrap(), "s0");
    }

    #[test]
    fn three_class_votes_normalize_and_pick_the_right_cluster() {
        let (vectors, labels) = labeled_blobs(7, 6, &[[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]]);
        let model = svm_train(&vectors, &labels, &SvmConfig::default(), 13, [0; 32]).unwrap();
        for (center, expect) in [([-4.0, 0.0], "s0"), ([4.0, 0.0], "s1"), ([0.0, 5.0], "s2")] {
            let scores = model.score(&center).unwrap();
            let sum: f64 = scores.entries().iter().map(|(_, s)| s).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(scores.decide().unwrap(), expect);
            assert!(scores.margins().unwrap().iter().all(|m| m.is_finite()));
        }
    }

    #[test]
    fn same_seed_reproduces_the_model_bitwise() {
        let (vectors, labels) = labeled_blobs(2, 10, &[[-3.0, 1.0], [3.0, -1.0]]);
        let a = svm_train(&vectors, &labels, &SvmConfig::default(), 77, [0; 32]).unwrap();
        let b = svm_train(&vectors, &labels, &SvmConfig::default(), 77, [0; 32]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_rejects_wrong_width_and_non_finite_input() {
        let (vectors, labels) = labeled_blobs(4, 5, &[[-2.0, 0.0], [2.0, 0.0]]);
        let model = svm_train(&vectors, &labels, &SvmConfig::default(), 1, [0; 32]).unwrap();
        assert!(matches!(
            model.score(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            model.score(&[1.0, f64::NAN]),
            Err(Error::NonFiniteFeature { .. })
        ));
    }

    #[test]
    fn document_round_trips_and_checks_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svm.json");
        let (vectors, labels) = labeled_blobs(6, 5, &[[-2.0, 1.0], [2.0, -1.0], [0.0, 4.0]]);
        let hash = [7u8; 32];
        let model = svm_train(&vectors, &labels, &SvmConfig::default(), 21, hash).unwrap();
        save_classifier(&path, &TrainedClassifier::Svm(model.clone())).unwrap();

        let back = load_classifier(&path, Some(&hash)).unwrap();
        assert_eq!(back, TrainedClassifier::Svm(model));
        assert!(matches!(
            load_classifier(&path, Some(&[8u8; 32])),
            Err(Error::ConfigHashMismatch(_))
        ));
    }
}
