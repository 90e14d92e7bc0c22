//! Gaussian naive Bayes over supervector dimensions.
//!
//! Each class gets a diagonal Gaussian fitted by per-dimension sample
//! statistics, with priors taken from class frequencies. Variances are
//! smoothed by a fixed fraction of the largest pooled per-dimension
//! variance, so a class seen only once still yields a proper density.
//! Scoring runs in the log domain and posteriors come out of a stable
//! softmax, which keeps 3200-dimensional products from underflowing.

use crate::classifiers::{validate_training_set, ScoreVector};
use crate::config::NbConfig;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Per-class diagonal Gaussians with frequency priors.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    classes: Vec<String>,
    priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    config_hash: [u8; 32],
}

/// Fit class statistics on unscaled vectors.
pub fn nb_train(
    vectors: &[Vec<f64>],
    labels: &[String],
    cfg: &NbConfig,
    config_hash: [u8; 32],
) -> Result<NbModel> {
    cfg.validate()?;
    let classes = validate_training_set(vectors, labels)?;
    let n = vectors.len();
    let dims = vectors[0].len();

    // Smoothing floor: a fraction of the largest pooled variance, or
    // the bare fraction itself when the data has no spread at all.
    let mut pooled_mean = vec![0.0f64; dims];
    let mut pooled_sq = vec![0.0f64; dims];
    for v in vectors {
        for t in 0..dims {
            pooled_mean[t] += v[t];
            pooled_sq[t] += v[t] * v[t];
        }
    }
    let mut max_var = 0.0f64;
    for t in 0..dims {
        pooled_mean[t] /= n as f64;
        let var = (pooled_sq[t] / n as f64 - pooled_mean[t] * pooled_mean[t]).max(0.0);
        max_var = max_var.max(var);
    }
    let smoothing = if max_var > 0.0 {
        cfg.epsilon_factor * max_var
    } else {
        cfg.epsilon_factor
    };

    let mut priors = Vec::with_capacity(classes.len());
    let mut means = Vec::with_capacity(classes.len());
    let mut variances = Vec::with_capacity(classes.len());
    for class in &classes {
        let members: Vec<&Vec<f64>> = vectors
            .iter()
            .zip(labels)
            .filter(|(_, l)| *l == class)
            .map(|(v, _)| v)
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyClass(class.clone()));
        }
        let count = members.len() as f64;
        let mut mean = vec![0.0f64; dims];
        let mut sq = vec![0.0f64; dims];
        for v in &members {
            for t in 0..dims {
                mean[t] += v[t];
                sq[t] += v[t] * v[t];
            }
        }
        for t in 0..dims {
            mean[t] /= count;
            sq[t] = (sq[t] / count - mean[t] * mean[t]).max(0.0) + smoothing;
        }
        priors.push(count / n as f64);
        means.push(mean);
        variances.push(sq);
    }

    Ok(NbModel {
        classes,
        priors,
        means,
        variances,
        config_hash,
    })
}

impl NbModel {
    pub(crate) fn from_parts(
        classes: Vec<String>,
        priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        config_hash: [u8; 32],
    ) -> Result<Self> {
        let k = classes.len();
        if k < 2 || priors.len() != k || means.len() != k || variances.len() != k {
            return Err(Error::ArchiveFormat(
                "class, prior, and statistic counts disagree".into(),
            ));
        }
        let dims = means[0].len();
        if dims == 0 {
            return Err(Error::ArchiveFormat("zero-dimensional statistics".into()));
        }
        let prior_sum: f64 = priors.iter().sum();
        if !priors.iter().all(|p| p.is_finite() && *p > 0.0) || (prior_sum - 1.0).abs() > 1e-6 {
            return Err(Error::ArchiveFormat("priors are not a distribution".into()));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != dims || v.len() != dims {
                return Err(Error::ArchiveFormat("ragged class statistics".into()));
            }
            if !m.iter().all(|x| x.is_finite()) || !v.iter().all(|x| x.is_finite() && *x > 0.0) {
                return Err(Error::ArchiveFormat(
                    "non-finite or non-positive statistics".into(),
                ));
            }
        }
        Ok(NbModel {
            classes,
            priors,
            means,
            variances,
            config_hash,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dims(&self) -> usize {
        self.means[0].len()
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.config_hash
    }

    pub(crate) fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub(crate) fn class_means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub(crate) fn class_variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Posterior over classes for one vector.
    pub fn score(&self, x: &[f64]) -> Result<ScoreVector> {
        let dims = self.dims();
        if x.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: x.len(),
            });
        }
        if let Some(dim) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { vector: 0, dim });
        }
        let mut log_joint = Vec::with_capacity(self.classes.len());
        for c in 0..self.classes.len() {
            let mut ll = self.priors[c].ln();
            let (mean, var) = (&self.means[c], &self.variances[c]);
            for t in 0..dims {
                let diff = x[t] - mean[t];
                ll -= 0.5 * (LN_2PI + var[t].ln() + diff * diff / var[t]);
            }
            log_joint.push(ll);
        }
        let peak = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut posts: Vec<f64> = log_joint.iter().map(|ll| (ll - peak).exp()).collect();
        let total: f64 = posts.iter().sum();
        for p in &mut posts {
            *p /= total;
        }
        let entries = self
            .classes
            .iter()
            .zip(posts)
            .map(|(c, p)| (c.clone(), p))
            .collect();
        Ok(ScoreVector::new(entries, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{load_classifier, save_classifier, TrainedClassifier};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strings(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn midpoint_of_a_symmetric_pair_scores_fifty_fifty() {
        let vectors = vec![vec![-1.2], vec![-0.8], vec![0.8], vec![1.2]];
        let labels = strings(&["a", "a", "b", "b"]);
        let model = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        let scores = model.score(&[0.0]).unwrap();
        assert!((scores.score_for("a").unwrap() - 0.5).abs() < 1e-12);
        assert!((scores.score_for("b").unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(model.score(&[-1.0]).unwrap().decide().unwrap(), "a");
    }

    #[test]
    fn well_separated_classes_saturate_the_posterior() {
        // Means ten standard deviations apart: the posterior mass on
        // the near class is 1 up to far below 1e-9.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..30 {
            vectors.push(vec![rng.random_range(-1.0..1.0)]);
            labels.push("near".to_string());
            vectors.push(vec![10.0 + rng.random_range(-1.0..1.0)]);
            labels.push("far".to_string());
        }
        let model = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        let scores = model.score(&[0.0]).unwrap();
        assert!(scores.score_for("near").unwrap() > 1.0 - 1e-9);
        assert!(scores.score_for("far").unwrap() < 1e-9);
    }

    #[test]
    fn posteriors_are_invariant_to_affine_feature_maps() {
        // Shifting each dimension and rescaling all of them by one
        // common factor rescales every class density identically, so
        // posteriors cannot move; the smoothing floor tracks the pooled
        // variance and scales along. (A per-dimension scale would not
        // qualify: the floor is a single scalar shared by all
        // dimensions, chosen from whichever dimension spreads widest.)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..8 {
                vectors.push(vec![
                    c as f64 * 2.0 + rng.random_range(-0.7..0.7),
                    -(c as f64) + rng.random_range(-0.7..0.7),
                ]);
                labels.push(format!("s{c}"));
            }
        }
        let probe = vec![1.3, -0.4];
        let base = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        let base_scores = base.score(&probe).unwrap();

        let map = |v: &[f64]| vec![4.0 * v[0] - 7.0, 4.0 * v[1] + 100.0];
        let mapped: Vec<Vec<f64>> = vectors.iter().map(|v| map(v)).collect();
        let mapped_model = nb_train(&mapped, &labels, &NbConfig::default(), [0; 32]).unwrap();
        let mapped_scores = mapped_model.score(&map(&probe)).unwrap();

        for (a, b) in base_scores.entries().iter().zip(mapped_scores.entries()) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-9, "{} vs {}", a.1, b.1);
        }
    }

    #[test]
    fn priors_follow_class_frequencies() {
        let vectors = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0]];
        let labels = strings(&["a", "a", "a", "b"]);
        let model = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        assert_eq!(model.priors(), &[0.75, 0.25]);
    }

    #[test]
    fn single_sample_class_gets_exactly_the_smoothing_variance() {
        let vectors = vec![vec![0.0], vec![4.0], vec![8.0]];
        let labels = strings(&["a", "a", "b"]);
        let cfg = NbConfig::default();
        let model = nb_train(&vectors, &labels, &cfg, [0; 32]).unwrap();
        // Pooled variance of {0, 4, 8} is 32/3; class b has one vector.
        let expected = cfg.epsilon_factor * (32.0 / 3.0);
        let b = model.classes().iter().position(|c| c == "b").unwrap();
        assert!((model.class_variances()[b][0] - expected).abs() < 1e-12 * expected);
        // The smoothed sigma is ~1e-4, so only probes at the lone
        // vector itself land inside class b's mass.
        assert!(model.score(&[8.0]).unwrap().score_for("b").unwrap() > 0.99);
    }

    #[test]
    fn constant_data_falls_back_to_absolute_smoothing() {
        let vectors = vec![vec![2.0], vec![2.0], vec![2.0], vec![2.0]];
        let labels = strings(&["a", "a", "b", "b"]);
        let cfg = NbConfig::default();
        let model = nb_train(&vectors, &labels, &cfg, [0; 32]).unwrap();
        assert_eq!(model.class_variances()[0][0], cfg.epsilon_factor);
        let scores = model.score(&[2.0]).unwrap();
        assert!((scores.score_for("a").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_sums_to_one_in_high_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = 3200;
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..3 {
                vectors.push(
                    (0..dims)
                        .map(|_| c as f64 + rng.random_range(-0.5..0.5))
                        .collect(),
                );
                labels.push(format!("s{c}"));
            }
        }
        let model = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        let probe: Vec<f64> = (0..dims).map(|_| rng.random_range(-0.5..0.5)).collect();
        let scores = model.score(&probe).unwrap();
        let sum: f64 = scores.entries().iter().map(|(_, s)| s).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(scores.entries().iter().all(|(_, s)| s.is_finite()));
    }

    #[test]
    fn score_rejects_bad_input() {
        let vectors = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let labels = strings(&["a", "b"]);
        let model = nb_train(&vectors, &labels, &NbConfig::default(), [0; 32]).unwrap();
        assert!(matches!(
            model.score(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            model.score(&[0.0, f64::INFINITY]),
            Err(Error::NonFiniteFeature { .. })
        ));
    }

    #[test]
    fn document_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.json");
        let vectors = vec![
            vec![0.0, 1.0],
            vec![0.2, 1.1],
            vec![5.0, -1.0],
            vec![5.1, -0.9],
        ];
        let labels = strings(&["a", "a", "b", "b"]);
        let hash = [3u8; 32];
        let model = nb_train(&vectors, &labels, &NbConfig::default(), hash).unwrap();
        save_classifier(&path, &TrainedClassifier::Nb(model.clone())).unwrap();
        let back = load_classifier(&path, Some(&hash)).unwrap();
        assert_eq!(back, TrainedClassifier::Nb(model));
    }
}
