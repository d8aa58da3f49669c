//! Synthetic EEG recordings with spindle-like bursts and expert-style
//! score tracks.
//!
//! A recording is 1/f background noise plus amplitude-modulated sinusoidal
//! bursts in the 12–16 Hz band. Each burst carries a triangular score
//! profile; binary labels are derived from the scores with the same
//! threshold-merge-filter post-processing applied to the real annotations.

pub mod dataset;
pub mod io;
pub mod labels;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
pub use dataset::{split_subjects, BatchSampler, PreparedRecording, SubjectSplit, WindowRef};
pub use labels::{score_to_binary, true_runs, Phase};

/// One generated burst, kept for inspection and alignment tests.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpindleAnnotation {
    pub onset_s: f64,
    pub duration_s: f64,
    pub frequency_hz: f64,
    /// Peak amplitude relative to the background noise RMS.
    pub amplitude: f64,
    /// Peak of the triangular score profile, in (0, 1].
    pub score_peak: f64,
}

/// A sampled signal with per-sample scores and post-processed binary labels.
#[derive(Debug, Clone)]
pub struct Recording {
    pub subject_id: u32,
    pub phase: Phase,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    /// Mean expert-score analogue, in [0, 1].
    pub scores: Vec<f64>,
    /// Labels derived from `scores` via [`score_to_binary`].
    pub binary: Vec<bool>,
}

impl Recording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Fraction of samples labeled positive.
    pub fn positive_fraction(&self) -> f64 {
        if self.binary.is_empty() {
            return 0.0;
        }
        self.binary.iter().filter(|&&b| b).count() as f64 / self.binary.len() as f64
    }

    /// Labeled spindle intervals in seconds, `(onset, end)` half-open.
    pub fn spindle_intervals_s(&self) -> Vec<(f64, f64)> {
        true_runs(&self.binary)
            .into_iter()
            .map(|(s, e)| (s as f64 / self.sample_rate_hz, e as f64 / self.sample_rate_hz))
            .collect()
    }
}

/// Generation parameters.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Target fraction of positively labeled samples, in (0, 0.2].
    pub spindle_density: f64,
    /// Spectral exponent of the 1/f^a background noise.
    pub noise_exponent: f64,
    pub frequency_range_hz: (f64, f64),
    /// Burst duration range in seconds (before score thresholding).
    pub duration_range_s: (f64, f64),
    /// Burst peak amplitude relative to noise RMS.
    pub snr_range: (f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 360.0,
            sample_rate_hz: 250.0,
            spindle_density: 0.05,
            noise_exponent: 1.0,
            frequency_range_hz: (12.0, 16.0),
            duration_range_s: (0.8, 2.2),
            snr_range: (0.5, 3.0),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spindle_density > 0.0 && self.spindle_density <= 0.2) {
            return Err(Error::Parameter(format!(
                "spindle_density must be in (0, 0.2], got {}",
                self.spindle_density
            )));
        }
        if self.duration_s <= 2.0 || self.sample_rate_hz <= 0.0 {
            return Err(Error::Parameter("duration_s must exceed 2 s".into()));
        }
        let (lo, hi) = self.frequency_range_hz;
        if !(lo < hi && lo > 0.0 && hi < self.sample_rate_hz / 2.0) {
            return Err(Error::Parameter("bad frequency range".into()));
        }
        let (dlo, dhi) = self.duration_range_s;
        if !(dlo < dhi && dlo > 0.0) {
            return Err(Error::Parameter("bad duration range".into()));
        }
        let (slo, shi) = self.snr_range;
        if !(slo <= shi && slo > 0.0) {
            return Err(Error::Parameter("bad snr range".into()));
        }
        Ok(())
    }
}

/// 1/f^a noise via spectral synthesis, normalized to unit RMS.
fn pink_noise(n: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let mag = (k as f64).powf(-exponent / 2.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = Complex::from_polar(mag, phase);
        spectrum[k] = c;
        if n - k != k {
            spectrum[n - k] = c.conj();
        }
    }
    if n % 2 == 0 {
        spectrum[n / 2] = Complex::new(spectrum[n / 2].norm(), 0.0);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|x| *x /= rms);
    }
    out
}

/// Triangular profile over [0, 1], peaking at 1/2.
fn triangle(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        0.0
    } else if u <= 0.5 {
        2.0 * u
    } else {
        2.0 * (1.0 - u)
    }
}

/// Generates one recording, deterministic under `cfg.seed` and
/// `subject_id`.
pub fn generate_recording(cfg: &SyntheticConfig, subject_id: u32, phase: Phase) -> Result<Recording> {
    let (rec, _) = generate_recording_with_annotations(cfg, subject_id, phase)?;
    Ok(rec)
}

/// As [`generate_recording`], also returning the placed bursts.
pub fn generate_recording_with_annotations(
    cfg: &SyntheticConfig,
    subject_id: u32,
    phase: Phase,
) -> Result<(Recording, Vec<SpindleAnnotation>)> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let n = (cfg.duration_s * fs).round() as usize;
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ (subject_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

    let mut samples = pink_noise(n, cfg.noise_exponent, &mut rng);
    let mut scores = vec![0.0; n];
    let mut annotations = Vec::new();

    let thr = phase.threshold();
    let (dlo, dhi) = cfg.duration_range_s;
    let mean_burst = 0.5 * (dlo + dhi);
    // The triangular score exceeds the threshold over a (1 - thr/peak)
    // fraction of the burst; solve the inter-burst gap so the labeled
    // fraction hits the target density.
    let expected_ratio = (1.0 - thr / 0.75).max(0.2);
    let labeled_per_burst = mean_burst * expected_ratio;
    let cycle = labeled_per_burst / cfg.spindle_density;
    let min_gap = 0.5_f64;
    let mean_extra_gap = (cycle - mean_burst - min_gap).max(0.1);

    let mut t = min_gap + rng.gen_range(0.0..mean_extra_gap);
    while t < cfg.duration_s - dhi - min_gap {
        let burst_dur = rng.gen_range(dlo..dhi);
        // Keep the thresholded span comfortably above the 0.3 s filter.
        let min_peak = (thr / (1.0 - 0.4 / burst_dur)).max(thr + 0.1).min(0.95);
        let peak = rng.gen_range(min_peak..1.0);
        let freq = rng.gen_range(cfg.frequency_range_hz.0..cfg.frequency_range_hz.1);
        let amp = rng.gen_range(cfg.snr_range.0..cfg.snr_range.1);
        let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);

        let start = (t * fs).round() as usize;
        let len = (burst_dur * fs).round() as usize;
        if start + len >= n {
            break;
        }
        for i in 0..len {
            let u = i as f64 / len as f64;
            let tri = triangle(u);
            let tt = i as f64 / fs;
            samples[start + i] += amp * tri * (std::f64::consts::TAU * freq * tt + phase0).sin();
            scores[start + i] = (scores[start + i] + peak * tri).min(1.0);
        }
        annotations.push(SpindleAnnotation {
            onset_s: t,
            duration_s: burst_dur,
            frequency_hz: freq,
            amplitude: amp,
            score_peak: peak,
        });
        t += burst_dur + min_gap + rng.gen_range(0.0..2.0 * mean_extra_gap);
    }

    let binary = score_to_binary(&scores, phase, fs);
    Ok((
        Recording { subject_id, phase, sample_rate_hz: fs, samples, scores, binary },
        annotations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_under_seed() {
        let cfg = SyntheticConfig { duration_s: 60.0, ..SyntheticConfig::default() };
        let a = generate_recording(&cfg, 3, Phase::One).unwrap();
        let b = generate_recording(&cfg, 3, Phase::One).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.binary, b.binary);
        let c = generate_recording(&cfg, 4, Phase::One).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn default_density_lands_near_five_percent() {
        let cfg = SyntheticConfig::default();
        let mut total = 0usize;
        let mut positive = 0usize;
        for subject in 0..8 {
            let rec = generate_recording(&cfg, subject, Phase::One).unwrap();
            total += rec.binary.len();
            positive += rec.binary.iter().filter(|&&b| b).count();
        }
        let frac = positive as f64 / total as f64;
        assert!((0.03..=0.07).contains(&frac), "labeled fraction {frac}");
    }

    #[test]
    fn burst_frequencies_stay_in_band() {
        let cfg = SyntheticConfig { duration_s: 120.0, ..SyntheticConfig::default() };
        let (_, anns) = generate_recording_with_annotations(&cfg, 1, Phase::One).unwrap();
        assert!(!anns.is_empty());
        assert!(anns.iter().all(|a| (12.0..=16.0).contains(&a.frequency_hz)));
    }

    #[test]
    fn every_positive_run_has_legal_duration() {
        let cfg = SyntheticConfig { duration_s: 300.0, ..SyntheticConfig::default() };
        for subject in [0, 9] {
            let rec = generate_recording(&cfg, subject, Phase::Two).unwrap();
            for (s, e) in true_runs(&rec.binary) {
                let dur = (e - s) as f64 / rec.sample_rate_hz;
                assert!((0.3..=2.5).contains(&dur), "run duration {dur}");
            }
        }
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let cfg = SyntheticConfig { duration_s: 120.0, ..SyntheticConfig::default() };
        let rec = generate_recording(&cfg, 7, Phase::One).unwrap();
        assert!(rec.scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert_eq!(rec.samples.len(), rec.scores.len());
        assert_eq!(rec.samples.len(), rec.binary.len());
    }

    #[test]
    fn signal_and_scores_are_aligned() {
        // Cross-correlate the rectified, smoothed 12-16 Hz component with
        // the score track; the peak must sit at lag 0 +- 1 sample.
        use crate::signal::{design_fir, FirKind};
        let cfg = SyntheticConfig { duration_s: 600.0, ..SyntheticConfig::default() };
        let order = 200;
        let d = order / 2;
        let boxcar = |xs: &[f64], half: usize| -> Vec<f64> {
            (0..xs.len())
                .map(|i| {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(xs.len());
                    xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
                })
                .collect()
        };
        // Accumulate the centered cross-correlation over several subjects
        // to average out the band-limited noise envelope.
        let mut acc = vec![0.0f64; 61];
        for subject in 0..6 {
            let rec = generate_recording(&cfg, subject, Phase::One).unwrap();
            let mut filt = design_fir(FirKind::Bandpass, &[12.0, 16.0], order, 250.0).unwrap();
            let delayed: Vec<f64> = rec.samples.iter().map(|&x| filt.step(x)).collect();
            let n = rec.samples.len() - d;
            let rect: Vec<f64> = (0..n).map(|i| delayed[i + d].abs()).collect();
            let smooth = boxcar(&boxcar(&rect, 9), 9);
            let mean_s = smooth.iter().sum::<f64>() / n as f64;
            let mean_y = rec.scores[..n].iter().sum::<f64>() / n as f64;
            for (k, lag) in (-30i64..=30).enumerate() {
                let mut dot = 0.0;
                let mut count = 0usize;
                for i in 0..n {
                    let j = i as i64 + lag;
                    if j >= 0 && (j as usize) < n {
                        dot += (smooth[i] - mean_s) * (rec.scores[j as usize] - mean_y);
                        count += 1;
                    }
                }
                acc[k] += dot / count as f64;
            }
        }
        let best = acc
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k as i64 - 30)
            .unwrap();
        assert!(best.abs() <= 1, "cross-correlation peak at lag {best}");
    }
}
