//! Toolkit configuration: every tunable in one serializable tree.
//!
//! Defaults reproduce the reference operating point: 16 ms / 8 ms framing,
//! 12 mel-cepstral and 13 perceptual-prediction coefficients, a
//! 128-component background model adapted with relevance factor 16, a
//! C = 1 linear-kernel machine, and equal-weight sum fusion.
//!
//! Window and hop lengths are given in milliseconds; sample counts derive
//! from each file's header rate, so the same config serves corpora at any
//! rate. Rate-dependent checks (FFT length vs. window, filterbank edge
//! vs. Nyquist) therefore run at extraction time, not here.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Finite and strictly positive; NaN and infinities fail.
fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Finite and non-negative; NaN and infinities fail.
fn finite_non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Frame extraction and cepstral analysis settings shared by both
/// front-ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    /// Analysis window length in milliseconds.
    pub window_ms: f64,
    /// Hop between successive windows in milliseconds.
    pub hop_ms: f64,
    /// Pre-emphasis coefficient applied before framing.
    pub pre_emphasis: f64,
    /// FFT length; must be a power of two at least the window length.
    pub fft_size: usize,
    /// Number of triangular mel filters.
    pub mel_filters: usize,
    /// Lower edge of the mel filterbank in Hz.
    pub mel_low_hz: f64,
    /// Upper edge of the mel filterbank in Hz.
    pub mel_high_hz: f64,
    /// Mel-cepstral coefficients kept (c1..c_n; c0 dropped).
    pub mfcc_coeffs: usize,
    /// Linear-prediction order of the perceptual front-end; it yields
    /// `plp_order + 1` cepstra including c0.
    pub plp_order: usize,
    /// Pole of the band-pass filter applied to log band trajectories.
    pub rasta_pole: f64,
    /// Half-width of the regression window for delta features.
    pub delta_width: usize,
    /// When set, frames whose energy falls more than this many dB below
    /// the utterance's loudest frame are dropped before analysis.
    /// Disabled by default.
    pub silence_drop_db: Option<f64>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            window_ms: 16.0,
            hop_ms: 8.0,
            pre_emphasis: 0.97,
            fft_size: 512,
            mel_filters: 26,
            mel_low_hz: 300.0,
            mel_high_hz: 8_000.0,
            mfcc_coeffs: 12,
            plp_order: 12,
            rasta_pole: 0.98,
            delta_width: 2,
            silence_drop_db: None,
        }
    }
}

impl FrontendConfig {
    /// Window length in samples at the given rate.
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    /// Hop length in samples at the given rate.
    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    /// Rate-independent checks; run once when the config is loaded.
    pub fn validate(&self) -> Result<()> {
        if !finite_positive(self.window_ms) || !finite_positive(self.hop_ms) {
            return Err(Error::ConfigInvalid(
                "window_ms and hop_ms must be positive".into(),
            ));
        }
        if self.hop_ms > self.window_ms {
            return Err(Error::ConfigInvalid(
                "hop_ms must not exceed window_ms".into(),
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::ConfigInvalid(
                "fft_size must be a power of two".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::ConfigInvalid(
                "pre_emphasis must lie in [0, 1)".into(),
            ));
        }
        if self.mel_filters < 2 {
            return Err(Error::ConfigInvalid(
                "mel_filters must be at least 2".into(),
            ));
        }
        if !finite_non_negative(self.mel_low_hz) || self.mel_high_hz <= self.mel_low_hz {
            return Err(Error::ConfigInvalid(
                "mel band edges must satisfy 0 <= low < high".into(),
            ));
        }
        if self.mfcc_coeffs == 0 || self.mfcc_coeffs >= self.mel_filters {
            return Err(Error::ConfigInvalid(
                "mfcc_coeffs must lie in [1, mel_filters)".into(),
            ));
        }
        if self.plp_order == 0 {
            return Err(Error::ConfigInvalid("plp_order must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rasta_pole) {
            return Err(Error::ConfigInvalid("rasta_pole must lie in [0, 1)".into()));
        }
        if self.delta_width == 0 {
            return Err(Error::ConfigInvalid("delta_width must be positive".into()));
        }
        if let Some(db) = self.silence_drop_db {
            if !finite_positive(db) {
                return Err(Error::ConfigInvalid(
                    "silence_drop_db must be positive when set".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checks that depend on the utterance's sample rate.
    pub fn validate_for_rate(&self, sample_rate: u32) -> Result<()> {
        if sample_rate == 0 {
            return Err(Error::ConfigInvalid("sample rate of zero".into()));
        }
        let window = self.window_len(sample_rate);
        if window == 0 {
            return Err(Error::ConfigInvalid(format!(
                "window of {} ms holds no samples at {} Hz",
                self.window_ms, sample_rate
            )));
        }
        if self.fft_size < window {
            return Err(Error::ConfigInvalid(format!(
                "fft_size {} is shorter than the {window}-sample window at {sample_rate} Hz",
                self.fft_size
            )));
        }
        if self.mel_high_hz > sample_rate as f64 / 2.0 {
            return Err(Error::ConfigInvalid(format!(
                "mel_high_hz {} exceeds the Nyquist frequency at {sample_rate} Hz",
                self.mel_high_hz
            )));
        }
        Ok(())
    }
}

/// Expectation-maximization settings for background-model training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Number of mixture components.
    pub components: usize,
    /// Maximum EM iterations.
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub tol: f64,
    /// Variance floor as a fraction of the per-dimension global data
    /// variance.
    pub variance_floor_factor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            components: 128,
            max_iters: 50,
            tol: 1e-5,
            variance_floor_factor: 0.01,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::ConfigInvalid("components must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::ConfigInvalid("max_iters must be positive".into()));
        }
        if !finite_non_negative(self.tol) {
            return Err(Error::ConfigInvalid("tol must be non-negative".into()));
        }
        if !finite_positive(self.variance_floor_factor) {
            return Err(Error::ConfigInvalid(
                "variance_floor_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Maximum-a-posteriori adaptation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Relevance factor controlling the prior weight of background means.
    pub relevance_factor: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            relevance_factor: 16.0,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if !finite_positive(self.relevance_factor) {
            return Err(Error::ConfigInvalid(
                "relevance_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Supervector extraction settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervectorConfig {
    /// Scale each mean block by sqrt(weight)/sigma before pooling.
    /// Plain mean concatenation (default) leaves blocks untouched.
    pub kl_scaling: bool,
}

/// Linear support-vector machine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// Box constraint on the dual variables.
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Optimization stops after this many consecutive full passes
    /// without an update.
    pub max_passes: usize,
    /// Hard cap on total optimization passes.
    pub max_iters: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10,
            max_iters: 10_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !finite_positive(self.c) {
            return Err(Error::ConfigInvalid("c must be positive".into()));
        }
        if !finite_positive(self.tol) {
            return Err(Error::ConfigInvalid("tol must be positive".into()));
        }
        if self.max_passes == 0 || self.max_iters == 0 {
            return Err(Error::ConfigInvalid(
                "max_passes and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian naive Bayes settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbConfig {
    /// Variance smoothing as a fraction of the largest per-dimension
    /// variance of the pooled training data.
    pub epsilon_factor: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig {
            epsilon_factor: 1e-9,
        }
    }
}

impl NbConfig {
    pub fn validate(&self) -> Result<()> {
        if !finite_positive(self.epsilon_factor) {
            return Err(Error::ConfigInvalid(
                "epsilon_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Rule used to combine two posterior score vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    /// Weighted arithmetic mean.
    Sum,
    /// Weighted geometric mean, renormalized.
    Product,
    /// Element-wise maximum of the weighted scores, renormalized.
    Max,
}

/// Score-level fusion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub rule: FusionRule,
    /// Weight of the first system's scores; the second receives
    /// `1 - weight`.
    pub weight: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            rule: FusionRule::Sum,
            weight: 0.5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::ConfigInvalid("weight must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Train/test partition settings for manifest-driven experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Training utterances taken per speaker when the manifest does not
    /// assign splits itself.
    pub train_per_speaker: usize,
    /// Test utterances taken per speaker under the same condition.
    pub test_per_speaker: usize,
    /// Keep utterances flagged as shared text (the same sentence spoken
    /// by every speaker) out of the test side.
    pub exclude_shared_text_from_test: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_per_speaker: 8,
            test_per_speaker: 2,
            exclude_shared_text_from_test: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_per_speaker == 0 || self.test_per_speaker == 0 {
            return Err(Error::ConfigInvalid(
                "train_per_speaker and test_per_speaker must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Root configuration object; together with the seed it is the unit of
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub frontend: FrontendConfig,
    pub em: EmConfig,
    pub map: MapConfig,
    pub supervector: SupervectorConfig,
    pub svm: SvmConfig,
    pub nb: NbConfig,
    pub fusion: FusionConfig,
    pub split: SplitConfig,
}

impl ToolkitConfig {
    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.em.validate()?;
        self.map.validate()?;
        self.svm.validate()?;
        self.nb.validate()?;
        self.fusion.validate()?;
        self.split.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; embedded in feature archives
    /// and model files so stale artifacts are rejected.
    pub fn content_hash(&self) -> [u8; 32] {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher.finalize().into()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ToolkitConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Lowercase hex rendering of a config hash, used in JSON documents.
pub fn hash_to_hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse the hex rendering back; rejects anything but 64 hex digits.
pub fn hex_to_hash(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::ConfigInvalid(format!("bad config hash {s:?}")));
    }
    let mut out = [0u8; 32];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).expect("checked hex");
    }
    Ok(out)
}

/// Derive an independent stream seed from a base seed and a purpose tag.
///
/// Every stochastic stage (mixture seeding, optimizer shuffling, corpus
/// synthesis, splitting) draws from its own generator so that stages
/// cannot perturb one another.
pub fn derive_seed(base: u64, salt: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(salt.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}
