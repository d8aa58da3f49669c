//! Streaming preprocessing: two branches with matched software delays.
//!
//! The clean branch band-passes 0.5–30 Hz, notches the mains frequency and
//! standardizes online. The envelope branch band-passes 12–16 Hz,
//! standardizes, squares and smooths. FIR orders are chosen so both
//! branches delay the signal by the same number of samples (10 at 250 Hz,
//! i.e. 40 ms), keeping the two outputs time-aligned.

pub mod fir;
pub mod raw;
pub mod standardize;

use serde::Serialize;

use crate::error::{Error, Result};
pub use fir::{design_fir, FirFilter, FirKind};
pub use raw::{downsample, load_raw_signal, RawSignalSpec};
pub use standardize::{Ema, OnlineStandardizer};

/// Filter and smoothing parameters for the full pipeline. The defaults
/// reproduce the reference configuration at 250 Hz.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub sample_rate_hz: f64,
    /// Clean-branch band edges (Hz) and FIR order.
    pub clean_band_hz: (f64, f64),
    pub clean_order: usize,
    /// Mains notch: center frequency, stopband full width, FIR order.
    pub notch_freq_hz: f64,
    pub notch_bandwidth_hz: f64,
    pub notch_order: usize,
    /// Envelope-branch band edges (Hz) and FIR order.
    pub envelope_band_hz: (f64, f64),
    pub envelope_order: usize,
    pub alpha_mu_clean: f64,
    pub alpha_sigma_clean: f64,
    /// Envelope standardizer uses this for both mean and variance.
    pub alpha_envelope_std: f64,
    pub alpha_envelope_smooth: f64,
    pub epsilon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 250.0,
            clean_band_hz: (0.5, 30.0),
            clean_order: 10,
            notch_freq_hz: 60.0,
            notch_bandwidth_hz: 10.0,
            notch_order: 10,
            envelope_band_hz: (12.0, 16.0),
            envelope_order: 20,
            alpha_mu_clean: 0.1,
            alpha_sigma_clean: 0.001,
            alpha_envelope_std: 0.001,
            alpha_envelope_smooth: 0.01,
            epsilon: 1e-6,
        }
    }
}

impl PipelineConfig {
    pub fn clean_delay_samples(&self) -> f64 {
        (self.clean_order + self.notch_order) as f64 / 2.0
    }

    pub fn envelope_delay_samples(&self) -> f64 {
        self.envelope_order as f64 / 2.0
    }
}

#[derive(Debug, Clone)]
struct CleanBranch {
    bandpass: FirFilter,
    notch: FirFilter,
    standardizer: OnlineStandardizer,
}

impl CleanBranch {
    fn step(&mut self, x: f64) -> f64 {
        let b = self.bandpass.step(x);
        let n = self.notch.step(b);
        self.standardizer.step(n)
    }
}

#[derive(Debug, Clone)]
struct EnvelopeBranch {
    bandpass: FirFilter,
    standardizer: OnlineStandardizer,
    smoother: Ema,
}

impl EnvelopeBranch {
    fn step(&mut self, x: f64) -> f64 {
        let b = self.bandpass.step(x);
        let s = self.standardizer.step(b);
        self.smoother.step(s * s)
    }
}

/// Two-branch streaming preprocessor with equal per-branch group delay.
#[derive(Debug, Clone)]
pub struct PreprocessPipeline {
    config: PipelineConfig,
    clean: CleanBranch,
    envelope: EnvelopeBranch,
}

impl PreprocessPipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        if config.clean_delay_samples() != config.envelope_delay_samples() {
            return Err(Error::Parameter(format!(
                "branch delays differ: clean {} samples vs envelope {} samples",
                config.clean_delay_samples(),
                config.envelope_delay_samples()
            )));
        }
        let fs = config.sample_rate_hz;
        let (lo, hi) = config.clean_band_hz;
        let clean_bp = design_fir(FirKind::Bandpass, &[lo, hi], config.clean_order, fs)?;
        let half_bw = config.notch_bandwidth_hz / 2.0;
        let notch = design_fir(
            FirKind::Notch,
            &[config.notch_freq_hz - half_bw, config.notch_freq_hz + half_bw],
            config.notch_order,
            fs,
        )?;
        let (elo, ehi) = config.envelope_band_hz;
        let env_bp = design_fir(FirKind::Bandpass, &[elo, ehi], config.envelope_order, fs)?;
        Ok(Self {
            clean: CleanBranch {
                bandpass: clean_bp,
                notch,
                standardizer: OnlineStandardizer::new(
                    config.alpha_mu_clean,
                    config.alpha_sigma_clean,
                    config.epsilon,
                ),
            },
            envelope: EnvelopeBranch {
                bandpass: env_bp,
                standardizer: OnlineStandardizer::new(
                    config.alpha_envelope_std,
                    config.alpha_envelope_std,
                    config.epsilon,
                ),
                smoother: Ema::new(config.alpha_envelope_smooth),
            },
            config,
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(PipelineConfig::default()).expect("default config is delay-matched")
    }

    /// Feeds one raw sample; returns `(clean, envelope)`.
    ///
    /// Both outputs carry the branch group delay: the pair emitted now
    /// describes the input `group_delay_samples()` samples ago.
    pub fn step(&mut self, raw: f64) -> (f64, f64) {
        (self.clean.step(raw), self.envelope.step(raw))
    }

    /// Common per-branch group delay in samples.
    pub fn group_delay_samples(&self) -> usize {
        self.config.clean_delay_samples() as usize
    }

    pub fn group_delay_ms(&self) -> f64 {
        self.config.clean_delay_samples() / self.config.sample_rate_hz * 1000.0
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Impulse response of the clean branch's FIR cascade (band-pass then
    /// notch), without the adaptive standardizer.
    pub fn clean_fir_impulse_response(&self, n: usize) -> Vec<f64> {
        let mut bp = self.clean.bandpass.clone();
        let mut notch = self.clean.notch.clone();
        bp.reset();
        notch.reset();
        (0..n)
            .map(|i| notch.step(bp.step(if i == 0 { 1.0 } else { 0.0 })))
            .collect()
    }

    /// Impulse response of the envelope branch's FIR stage.
    pub fn envelope_fir_impulse_response(&self, n: usize) -> Vec<f64> {
        self.envelope.bandpass.impulse_response(n)
    }
}

fn peak_index(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Index of the largest-magnitude sample, used by the delay tests.
pub fn impulse_peak_index(response: &[f64]) -> usize {
    peak_index(response)
}
