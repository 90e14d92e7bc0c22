//! Maximum-a-posteriori adaptation of the background model's means.
//!
//! Only means move; weights and variances are copied unchanged. With
//! responsibilities Pr(i|x_t) taken from the background model:
//!
//!   n_i = Σ_t Pr(i|x_t)      E_i = Σ_t Pr(i|x_t)·x_t / n_i
//!   α_i = n_i / (n_i + r)    μ'_i = α_i·E_i + (1−α_i)·μ_i
//!
//! A component that saw no data (n_i = 0) keeps the background mean.
//! Large relevance factors freeze the model to the background; tiny ones
//! hand it over to the utterance statistics.

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gmm::GmmModel;

/// Adapt the background model's means to one utterance's frames.
pub fn map_adapt_means(ubm: &GmmModel, data: &FeatureMatrix, cfg: &MapConfig) -> Result<GmmModel> {
    cfg.validate()?;
    if data.dims() != ubm.dim() {
        return Err(Error::DimensionMismatch {
            expected: ubm.dim(),
            got: data.dims(),
        });
    }
    if data.num_frames() == 0 {
        return Err(Error::InsufficientData(
            "adaptation needs at least one frame".into(),
        ));
    }

    let m = ubm.num_components();
    let d = ubm.dim();
    let mut occ = vec![0.0f64; m];
    let mut sum_x = vec![0.0f64; m * d];
    let mut resp = vec![0.0f64; m];
    for frame in data.rows() {
        ubm.responsibilities(frame, &mut resp);
        for i in 0..m {
            let r = resp[i];
            if r == 0.0 {
                continue;
            }
            occ[i] += r;
            let sx = &mut sum_x[i * d..(i + 1) * d];
            for t in 0..d {
                sx[t] += r * frame[t];
            }
        }
    }

    let mut means = Vec::with_capacity(m * d);
    for i in 0..m {
        let prior = ubm.mean(i);
        if occ[i] > 0.0 {
            let alpha = occ[i] / (occ[i] + cfg.relevance_factor);
            for t in 0..d {
                let posterior_mean = sum_x[i * d + t] / occ[i];
                means.push(alpha * posterior_mean + (1.0 - alpha) * prior[t]);
            }
        } else {
            means.extend_from_slice(prior);
        }
    }

    GmmModel::new(
        ubm.kind(),
        d,
        ubm.weights().to_vec(),
        means,
        ubm.variances.clone(),
    )
}
