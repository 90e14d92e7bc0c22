//! Oracles and generators shared by the integration test targets.
//!
//! Everything here is deliberately independent of the library's own
//! numerics: the QP reference enumerates KKT support sets and solves
//! exact linear systems, and the Bayes reference multiplies densities
//! directly instead of working in the log domain.

#![allow(dead_code)] // each test target uses the slice it needs
#![allow(clippy::needless_range_loop)] // formula-shaped indexing

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn subsets(n: usize, size: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(
        start: usize,
        n: usize,
        size: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, size, current, out);
            current.pop();
        }
    }
    let mut current = Vec::with_capacity(size);
    rec(0, n, size, &mut current, out);
}

/// Exact maximum-margin separator by KKT support-set enumeration.
///
/// For every candidate support set S the equality-constrained optimum
/// solves the linear system { y_i (sum_j a_j y_j x_j . x_i + b) = 1 for
/// i in S; sum_j a_j y_j = 0 }. A solution with a_j in [0, C] whose
/// margins cover the remaining points satisfies the full KKT conditions
/// of the convex program and is therefore the global optimum.
pub fn exhaustive_qp(x: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let dims = x[0].len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();

    let mut sets: Vec<Vec<usize>> = Vec::new();
    for size in 2..=n.min(dims + 2) {
        subsets(n, size, &mut sets);
    }

    for set in &sets {
        // Mixed labels are required by the sign constraint.
        if set.iter().all(|&i| y[i] > 0.0) || set.iter().all(|&i| y[i] < 0.0) {
            continue;
        }
        let m = set.len();
        // Unknowns: alpha over the set, then b.
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        for (row, &i) in set.iter().enumerate() {
            for (col, &j) in set.iter().enumerate() {
                a[row][col] = y[i] * y[j] * dot(&x[i], &x[j]);
            }
            a[row][m] = y[i];
            rhs[row] = 1.0;
        }
        for (col, &j) in set.iter().enumerate() {
            a[m][col] = y[j];
        }
        let Some(sol) = solve(a, rhs) else { continue };
        if sol[..m].iter().any(|&al| al < -1e-9 || al > c + 1e-9) {
            continue;
        }
        let mut w = vec![0.0; dims];
        for (col, &j) in set.iter().enumerate() {
            for d in 0..dims {
                w[d] += sol[col] * y[j] * x[j][d];
            }
        }
        let b = sol[m];
        let feasible = (0..n).all(|i| y[i] * (dot(&w, &x[i]) + b) >= 1.0 - 1e-7);
        if feasible {
            return (w, b);
        }
    }
    panic!("no KKT-consistent support set; data not separable as constructed");
}

/// Strictly separable two-class set: points displaced from two anchor
/// centroids along a random direction with a guaranteed corridor
/// between the classes.
pub fn separable_set(seed: u64, n_per_class: usize, dims: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = {
        let raw: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        raw.iter().map(|v| v / norm).collect()
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * n_per_class {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        // Offset along the corridor keeps the classes at least 1.0 apart.
        let along = sign * (1.0 + rng.random_range(0.0..1.5));
        let point: Vec<f64> = dir
            .iter()
            .map(|&d| along * d + rng.random_range(-0.3..0.3))
            .collect();
        x.push(point);
        y.push(sign);
    }
    (x, y)
}

/// Direct density-product posterior: prior times the product of per-dim
/// normal densities, normalized across classes. Estimators follow the
/// library contract (frequencies, population variances, smoothing from
/// the largest pooled per-dimension variance) but are recomputed from
/// the raw data.
pub fn oracle_nb_posteriors(
    data: &[(Vec<f64>, usize)],
    n_classes: usize,
    probe: &[f64],
    epsilon_factor: f64,
) -> Vec<f64> {
    let dims = probe.len();
    let n = data.len() as f64;

    let mut max_var = 0.0f64;
    for d in 0..dims {
        let mean = data.iter().map(|(v, _)| v[d]).sum::<f64>() / n;
        let var = data.iter().map(|(v, _)| (v[d] - mean).powi(2)).sum::<f64>() / n;
        max_var = max_var.max(var);
    }
    let smoothing = if max_var > 0.0 {
        epsilon_factor * max_var
    } else {
        epsilon_factor
    };

    let mut weights = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let members: Vec<&Vec<f64>> = data
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(v, _)| v)
            .collect();
        let m = members.len() as f64;
        let prior = m / n;
        let mut density = prior;
        for d in 0..dims {
            let mean = members.iter().map(|v| v[d]).sum::<f64>() / m;
            let var = members.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / m + smoothing;
            let diff = probe[d] - mean;
            density *=
                (-diff * diff / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        weights.push(density);
    }
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// One random multi-class Gaussian problem: samples, string labels, the
/// raw (vector, class-index) pairs, and the class centers.
pub struct NbCase {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub data: Vec<(Vec<f64>, usize)>,
    pub centers: Vec<Vec<f64>>,
    pub n_classes: usize,
}

pub fn random_nb_case(seed: u64) -> NbCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.random_range(2..=4usize);
    let dims = rng.random_range(2..=6usize);

    let mut case = NbCase {
        vectors: Vec::new(),
        labels: Vec::new(),
        data: Vec::new(),
        centers: Vec::new(),
        n_classes,
    };
    for class in 0..n_classes {
        let center: Vec<f64> = (0..dims).map(|_| rng.random_range(-4.0..4.0)).collect();
        let spread: Vec<f64> = (0..dims).map(|_| rng.random_range(0.3..1.2)).collect();
        let count = rng.random_range(8..=20usize);
        for _ in 0..count {
            let v: Vec<f64> = (0..dims)
                .map(|d| center[d] + spread[d] * rng.random_range(-1.0..1.0))
                .collect();
            case.vectors.push(v.clone());
            case.labels.push(format!("spk{class:02}"));
            case.data.push((v, class));
        }
        case.centers.push(center);
    }
    case
}

/// Probe jittered around one of the case's class centers.
pub fn random_probe(case: &NbCase, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(0..case.n_classes);
    case.centers[target]
        .iter()
        .map(|&c| c + rng.random_range(-1.5..1.5))
        .collect()
}
