//! Per-dimension minimum/maximum normalization to the unit interval.
//!
//! Fitted on the training vectors only. Constant dimensions map to 0.5
//! regardless of the input value, and unseen test values are clipped
//! into [0, 1] so outliers cannot dominate a linear margin.

use serde::{Deserialize, Serialize};

/// Affine map x -> (x - min) / (max - min), clipped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Fit bounds over a non-empty set of equal-length vectors.
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        assert!(!vectors.is_empty(), "cannot fit a scaler on no data");
        let dims = vectors[0].len();
        let mut mins = vec![f64::INFINITY; dims];
        let mut maxs = vec![f64::NEG_INFINITY; dims];
        for v in vectors {
            debug_assert_eq!(v.len(), dims);
            for (t, &x) in v.iter().enumerate() {
                mins[t] = mins[t].min(x);
                maxs[t] = maxs[t].max(x);
            }
        }
        MinMaxScaler { mins, maxs }
    }

    /// Rebuild from stored bounds; `None` when lengths differ or any
    /// bound pair is inverted or non-finite.
    pub fn from_bounds(mins: Vec<f64>, maxs: Vec<f64>) -> Option<Self> {
        if mins.len() != maxs.len() || mins.is_empty() {
            return None;
        }
        for (lo, hi) in mins.iter().zip(&maxs) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return None;
            }
        }
        Some(MinMaxScaler { mins, maxs })
    }

    pub fn dims(&self) -> usize {
        self.mins.len()
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    /// Map one vector into the unit hypercube.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dims());
        x.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span == 0.0 {
                    0.5
                } else {
                    ((v - lo) / span).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    pub fn transform_all(&self, vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
        vectors.iter().map(|v| self.transform(v)).collect()
    }
}
