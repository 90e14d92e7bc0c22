//! Expectation-maximization training of the background model.
//!
//! Initialization is k-means++ seeding from the caller's seed: component
//! means are drawn from the data with probability proportional to squared
//! distance from the means already chosen; weights start uniform and
//! variances start at the global per-dimension data variance. Each
//! iteration computes responsibilities against the current model
//! (E-step) and re-estimates weights, means, and variances (M-step),
//! flooring variances at `variance_floor_factor` times the global
//! variance. A component left with no responsibility keeps its previous
//! parameters and is flagged in the report rather than aborting the run.
//!
//! Accumulation order is fixed (frames in sequence, components in index
//! order), so a given seed reproduces the model bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EmConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::GmmModel;

/// Starvation threshold: a component owning less than this much total
/// responsibility keeps its previous parameters.
const MIN_RESPONSIBILITY: f64 = 1e-10;

/// What happened during one training run.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// Mean per-frame log-likelihood of the model entering each
    /// iteration; non-decreasing up to floating-point noise.
    pub log_likelihoods: Vec<f64>,
    /// Iterations actually executed.
    pub iterations: usize,
    /// Reached the relative-improvement tolerance before the cap.
    pub converged: bool,
    /// Components that were starved at least once and kept previous
    /// parameters.
    pub starved_components: Vec<usize>,
}

/// Fit a diagonal-covariance mixture to the frames.
pub fn em_fit(
    data: &FeatureMatrix,
    cfg: &EmConfig,
    seed: u64,
) -> Result<(GmmModel, TrainingReport)> {
    cfg.validate()?;
    let n = data.num_frames();
    let d = data.dims();
    let m = cfg.components;
    if n < m {
        return Err(Error::InsufficientData(format!(
            "{n} frames cannot seed {m} components"
        )));
    }

    let global_var = global_variance(data);
    // Constant dimensions would yield a zero floor; keep it positive.
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (cfg.variance_floor_factor * v).max(1e-10))
        .collect();
    let init_var: Vec<f64> = global_var.iter().map(|v| v.max(1e-10)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp_seeds(data, m, &mut rng);

    let mut means = Vec::with_capacity(m * d);
    for &idx in &seeds {
        means.extend_from_slice(data.row(idx));
    }
    let mut variances = Vec::with_capacity(m * d);
    for _ in 0..m {
        variances.extend_from_slice(&init_var);
    }
    let mut model = GmmModel::new(data.kind(), d, vec![1.0 / m as f64; m], means, variances)?;

    let mut report = TrainingReport {
        log_likelihoods: Vec::new(),
        iterations: 0,
        converged: false,
        starved_components: Vec::new(),
    };

    let mut resp = vec![0.0f64; m];
    for _iter in 0..cfg.max_iters {
        // E-step: accumulate n_i, Σ r·x, Σ r·x² in fixed order.
        let mut occ = vec![0.0f64; m];
        let mut sum_x = vec![0.0f64; m * d];
        let mut sum_x2 = vec![0.0f64; m * d];
        let mut ll = 0.0f64;
        for frame in data.rows() {
            ll += model.responsibilities(frame, &mut resp);
            for i in 0..m {
                let r = resp[i];
                if r == 0.0 {
                    continue;
                }
                occ[i] += r;
                let (sx, sx2) = (
                    &mut sum_x[i * d..(i + 1) * d],
                    &mut sum_x2[i * d..(i + 1) * d],
                );
                for t in 0..d {
                    sx[t] += r * frame[t];
                    sx2[t] += r * frame[t] * frame[t];
                }
            }
        }
        let ll = ll / n as f64;

        if let Some(&prev) = report.log_likelihoods.last() {
            debug_assert!(
                ll >= prev - 1e-8 * prev.abs(),
                "log-likelihood decreased: {prev} -> {ll}"
            );
        }
        let improved_below_tol = report
            .log_likelihoods
            .last()
            .map(|&prev| (ll - prev).abs() <= cfg.tol * prev.abs().max(1e-12))
            .unwrap_or(false);
        report.log_likelihoods.push(ll);
        report.iterations += 1;
        if improved_below_tol {
            report.converged = true;
            break;
        }

        // M-step.
        let mut weights = model.weights.clone();
        let mut means = model.means.clone();
        let mut variances = model.variances.clone();
        for i in 0..m {
            if occ[i] < MIN_RESPONSIBILITY {
                if !report.starved_components.contains(&i) {
                    report.starved_components.push(i);
                }
                continue;
            }
            weights[i] = occ[i] / n as f64;
            for t in 0..d {
                let mu = sum_x[i * d + t] / occ[i];
                means[i * d + t] = mu;
                let var = sum_x2[i * d + t] / occ[i] - mu * mu;
                variances[i * d + t] = var.max(floor[t]);
            }
        }
        // Starved components kept their old weights; restore the sum
        // constraint exactly.
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        model = GmmModel::new(data.kind(), d, weights, means, variances)?;
        debug_assert!((model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    Ok((model, report))
}

/// Per-dimension population variance of all frames.
fn global_variance(data: &FeatureMatrix) -> Vec<f64> {
    let n = data.num_frames() as f64;
    let d = data.dims();
    let mut mean = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for frame in data.rows() {
        for t in 0..d {
            mean[t] += frame[t];
            sq[t] += frame[t] * frame[t];
        }
    }
    for t in 0..d {
        mean[t] /= n;
        sq[t] = (sq[t] / n - mean[t] * mean[t]).max(0.0); // cancellation guard
    }
    sq
}

/// k-means++ seeding: indices of M data rows, the first uniform, each
/// next drawn with probability proportional to its squared distance to
/// the nearest row already chosen. Duplicate-heavy data where every
/// distance is zero falls back to a uniform draw.
fn kmeans_pp_seeds(data: &FeatureMatrix, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.num_frames();
    let mut chosen = Vec::with_capacity(m);
    chosen.push(rng.random_range(0..n));

    let mut best_dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), data.row(chosen[0])))
        .collect();

    while chosen.len() < m {
        let total: f64 = best_dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in best_dist.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for i in 0..n {
            let d = squared_distance(data.row(i), data.row(next));
            if d < best_dist[i] {
                best_dist[i] = d;
            }
        }
    }
    chosen
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let dims = rows[0].len();
        FeatureMatrix::from_rows(FeatureKind::Mfcc, dims, rows)
    }

    fn two_cluster_data(seed: u64, per_cluster: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = Normal::new(-5.0, 1.0).unwrap();
        let hi = Normal::new(5.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for _ in 0..per_cluster {
            rows.push(vec![lo.sample(&mut rng)]);
            rows.push(vec![hi.sample(&mut rng)]);
        }
        matrix(rows)
    }

    #[test]
    fn single_component_recovers_sample_statistics() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 12.0]];
        let data = matrix(rows.clone());
        let cfg = EmConfig {
            components: 1,
            max_iters: 10,
            ..EmConfig::default()
        };
        let (model, report) = em_fit(&data, &cfg, 0).unwrap();

        // Sequential-sum oracle in the same accumulation order.
        let n = rows.len() as f64;
        for t in 0..2 {
            let mean: f64 = rows.iter().map(|r| r[t]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| r[t] * r[t]).sum::<f64>() / n - mean * mean;
            assert!((model.mean(0)[t] - mean).abs() < 1e-12);
            assert!((model.variance(0)[t] - var).abs() < 1e-10);
        }
        assert_eq!(model.weights(), &[1.0]);
        assert!(report.converged);
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let data = two_cluster_data(3, 500);
        let cfg = EmConfig {
            components: 2,
            max_iters: 50,
            ..EmConfig::default()
        };
        let (model, _) = em_fit(&data, &cfg, 1).unwrap();
        let mut centers = [model.mean(0)[0], model.mean(1)[0]];
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] + 5.0).abs() < 0.2, "low center {}", centers[0]);
        assert!((centers[1] - 5.0).abs() < 0.2, "high center {}", centers[1]);
        for &w in model.weights() {
            assert!((w - 0.5).abs() < 0.05, "weight {w}");
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let data = two_cluster_data(9, 200);
        let cfg = EmConfig {
            components: 4,
            max_iters: 15,
            ..EmConfig::default()
        };
        let (a, _) = em_fit(&data, &cfg, 77).unwrap();
        let (b, _) = em_fit(&data, &cfg, 77).unwrap();
        assert_eq!(a, b);
        let (c, _) = em_fit(&data, &cfg, 78).unwrap();
        assert_ne!(a, c, "different seed should move the fit");
    }

    #[test]
    fn log_likelihood_never_decreases() {
        for seed in 0..4u64 {
            let data = two_cluster_data(seed, 150);
            let cfg = EmConfig {
                components: 8,
                max_iters: 30,
                tol: 0.0, // run every iteration
                ..EmConfig::default()
            };
            let (_, report) = em_fit(&data, &cfg, seed).unwrap();
            for pair in report.log_likelihoods.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-8 * pair[0].abs(),
                    "seed {seed}: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn weights_stay_normalized_and_variances_floored() {
        let data = two_cluster_data(5, 100);
        let cfg = EmConfig {
            components: 8,
            max_iters: 25,
            ..EmConfig::default()
        };
        let (model, _) = em_fit(&data, &cfg, 2).unwrap();
        let sum: f64 = model.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for i in 0..8 {
            for &v in model.variance(i) {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn too_few_frames_is_insufficient_data() {
        let data = matrix(vec![vec![0.0], vec![1.0]]);
        let cfg = EmConfig {
            components: 3,
            ..EmConfig::default()
        };
        assert!(matches!(
            em_fit(&data, &cfg, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn duplicate_heavy_data_still_trains() {
        // All rows identical: k-means++ falls back to uniform picks and
        // variances sit on the absolute floor.
        let data = matrix(vec![vec![2.0, -1.0]; 50]);
        let cfg = EmConfig {
            components: 4,
            max_iters: 5,
            ..EmConfig::default()
        };
        let (model, _) = em_fit(&data, &cfg, 11).unwrap();
        assert_eq!(model.num_components(), 4);
        assert!(model.variance(0).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kmeans_pp_prefers_distant_seeds() {
        // Two far clusters: the second seed should come from the other
        // cluster almost surely.
        let mut rows = vec![vec![0.0]; 50];
        rows.extend(vec![vec![100.0]; 50]);
        let data = matrix(rows);
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seeds = kmeans_pp_seeds(&data, 2, &mut rng);
            let a = data.row(seeds[0])[0];
            let b = data.row(seeds[1])[0];
            if (a - b).abs() > 50.0 {
                hits += 1;
            }
        }
        assert_eq!(hits, 20);
    }
}
