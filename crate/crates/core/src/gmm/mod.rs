//! Diagonal-covariance Gaussian mixture models.
//!
//! A model is M weighted diagonal Gaussians over d dimensions. The
//! mixture density is p(x) = Σ_i w_i·b_i(x) with
//!
//!   b_i(x) = (2π)^(−d/2) |Σ_i|^(−1/2) exp(−½ Σ_t (x_t−μ_it)²/σ²_it)
//!
//! evaluated entirely in the log domain. Training ([`em_fit`]) and mean
//! adaptation ([`map_adapt_means`]) live in submodules; supervector
//! pooling concatenates the mean vectors in component order.

mod adapt;
mod em;

pub use adapt::map_adapt_means;
pub use em::{em_fit, TrainingReport};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{hash_to_hex, hex_to_hash};
use crate::error::{Error, Result};
use crate::features::FeatureKind;

/// Tolerance on |Σ w_i − 1| accepted at construction.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Mixture of M diagonal Gaussians over d dimensions.
///
/// Invariants, enforced at construction: weights are non-negative and
/// sum to 1 within 1e-9; every variance is positive; all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    kind: FeatureKind,
    dim: usize,
    weights: Vec<f64>,
    /// Row-major M×d.
    means: Vec<f64>,
    /// Row-major M×d.
    variances: Vec<f64>,
    /// Cached ln w_i − ½·Σ_t ln(2π σ²_it); −∞ for zero-weight components.
    log_norms: Vec<f64>,
}

/// Concatenated component means of one model: values[i·d..(i+1)·d] is
/// component i's mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    pub values: Vec<f64>,
    /// Feature kind the source model was trained on.
    pub kind: FeatureKind,
    /// Component count of the source model.
    pub components: usize,
    /// Frame-level dimensionality of the source model.
    pub dims: usize,
    /// Utterance the source model was adapted to, when known.
    pub utterance: Option<String>,
}

impl GmmModel {
    pub fn new(
        kind: FeatureKind,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let m = weights.len();
        if dim == 0 || m == 0 {
            return Err(Error::NumericalFailure(
                "model needs at least one component and one dimension".into(),
            ));
        }
        if means.len() != m * dim || variances.len() != m * dim {
            return Err(Error::DimensionMismatch {
                expected: m * dim,
                got: means.len().max(variances.len()),
            });
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::NumericalFailure(
                "negative or non-finite weight".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::NumericalFailure(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        if !means.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite mean entry".into()));
        }
        if !variances.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::NumericalFailure(
                "non-positive or non-finite variance entry".into(),
            ));
        }
        let mut model = GmmModel {
            kind,
            dim,
            weights,
            means,
            variances,
            log_norms: Vec::new(),
        };
        model.refresh_log_norms();
        Ok(model)
    }

    fn refresh_log_norms(&mut self) {
        const LN_2PI: f64 = 1.8378770664093453;
        self.log_norms = (0..self.num_components())
            .map(|i| {
                if self.weights[i] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let log_det: f64 = self.variance(i).iter().map(|v| LN_2PI + v.ln()).sum();
                    self.weights[i].ln() - 0.5 * log_det
                }
            })
            .collect();
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn variance(&self, i: usize) -> &[f64] {
        &self.variances[i * self.dim..(i + 1) * self.dim]
    }

    /// ln w_i + ln b_i(x) for every component, written into `out`.
    pub(crate) fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.num_components());
        for i in 0..self.num_components() {
            if self.weights[i] == 0.0 {
                out[i] = f64::NEG_INFINITY;
                continue;
            }
            let mean = self.mean(i);
            let var = self.variance(i);
            let mut maha = 0.0;
            for t in 0..self.dim {
                let diff = x[t] - mean[t];
                maha += diff * diff / var[t];
            }
            out[i] = self.log_norms[i] - 0.5 * maha;
        }
    }

    /// ln p(x | model) via log-sum-exp over components.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut logs = vec![0.0; self.num_components()];
        self.component_log_densities(x, &mut logs);
        Ok(log_sum_exp(&logs))
    }

    /// Posterior component responsibilities Pr(i | x), written into
    /// `out`; returns ln p(x). Zero-weight components get zero.
    pub(crate) fn responsibilities(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.component_log_densities(x, out);
        let total = log_sum_exp(out);
        for v in out.iter_mut() {
            *v = if v.is_finite() {
                (*v - total).exp()
            } else {
                0.0
            };
        }
        total
    }

    /// Pool the component means, in index order, into one vector of
    /// length M·d. With `kl_scaling`, each mean entry is weighted by
    /// sqrt(w_i)/σ_it so that inner products approximate the mixture
    /// divergence kernel; plain pooling is the default elsewhere.
    pub fn supervector(&self, kl_scaling: bool) -> Supervector {
        let m = self.num_components();
        let mut values = Vec::with_capacity(m * self.dim);
        for i in 0..m {
            if kl_scaling {
                let scale = self.weights[i].sqrt();
                for (mu, var) in self.mean(i).iter().zip(self.variance(i)) {
                    values.push(scale * mu / var.sqrt());
                }
            } else {
                values.extend_from_slice(self.mean(i));
            }
        }
        Supervector {
            values,
            kind: self.kind,
            components: m,
            dims: self.dim,
            utterance: None,
        }
    }
}

/// max + ln Σ exp(v − max); −∞ iff every input is −∞.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

impl Supervector {
    /// Split back into the M mean vectors this supervector pooled.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims)
    }

    pub fn tagged(mut self, utterance: &str) -> Supervector {
        self.utterance = Some(utterance.to_string());
        self
    }
}

/// Serialized form of a model; version 1.
#[derive(Serialize, Deserialize)]
struct GmmDocument {
    version: u32,
    feature_kind: FeatureKind,
    components: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    config_hash: String,
}

/// Write a model as a versioned JSON document (atomic).
pub fn save_model(path: &Path, model: &GmmModel, config_hash: &[u8; 32]) -> Result<()> {
    let doc = GmmDocument {
        version: 1,
        feature_kind: model.kind,
        components: model.num_components(),
        dim: model.dim,
        weights: model.weights.clone(),
        means: (0..model.num_components())
            .map(|i| model.mean(i).to_vec())
            .collect(),
        variances: (0..model.num_components())
            .map(|i| model.variance(i).to_vec())
            .collect(),
        config_hash: hash_to_hex(config_hash),
    };
    let json = serde_json::to_vec_pretty(&doc)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut tmp, &json).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Load a model document, optionally insisting on a config hash match.
pub fn load_model(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<GmmModel> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    let doc: GmmDocument = serde_json::from_str(&text)
        .map_err(|e| Error::ArchiveFormat(format!("{}: {e}", path.display())))?;
    if doc.version != 1 {
        return Err(Error::ArchiveFormat(format!(
            "{}: unsupported model version {}",
            path.display(),
            doc.version
        )));
    }
    if let Some(expected) = expected_hash {
        let stored = hex_to_hash(&doc.config_hash)
            .map_err(|_| Error::ArchiveFormat(format!("{}: bad config hash", path.display())))?;
        if &stored != expected {
            return Err(Error::ConfigHashMismatch(format!(
                "{} was trained under a different configuration",
                path.display()
            )));
        }
    }
    if doc.means.len() != doc.components
        || doc.variances.len() != doc.components
        || doc.weights.len() != doc.components
        || doc.means.iter().any(|m| m.len() != doc.dim)
        || doc.variances.iter().any(|v| v.len() != doc.dim)
    {
        return Err(Error::ArchiveFormat(format!(
            "{}: inconsistent component shapes",
            path.display()
        )));
    }
    GmmModel::new(
        doc.feature_kind,
        doc.dim,
        doc.weights,
        doc.means.concat(),
        doc.variances.concat(),
    )
    .map_err(|e| Error::ArchiveFormat(format!("{}: {e}", path.display())))
}
