//! Streaming FIR filters and windowed-sinc design.
//!
//! All designs produce symmetric (linear-phase) taps, so a filter of order
//! `o` delays the signal by exactly `o/2` samples.

use crate::error::{Error, Result};

/// Filter kinds supported by [`design_fir`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirKind {
    Lowpass,
    Bandpass,
    Notch,
}

/// A causal FIR filter with a ring-buffer history of the last `order + 1`
/// input samples.
#[derive(Debug, Clone)]
pub struct FirFilter {
    taps: Vec<f64>,
    history: Vec<f64>,
    pos: usize,
}

impl FirFilter {
    /// Wraps raw taps; history starts zero-filled.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Parameter("FIR needs at least one tap".into()));
        }
        let history = vec![0.0; taps.len()];
        Ok(Self { taps, history, pos: 0 })
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Group delay in samples (`order / 2`; fractional for odd orders).
    pub fn group_delay_samples(&self) -> f64 {
        self.order() as f64 / 2.0
    }

    /// Pushes one sample and returns the filtered output
    /// `sum_i taps[i] * x[t - i]`.
    pub fn step(&mut self, sample: f64) -> f64 {
        let n = self.taps.len();
        self.pos = (self.pos + 1) % n;
        self.history[self.pos] = sample;
        let mut acc = 0.0;
        for (i, &tap) in self.taps.iter().enumerate() {
            let idx = (self.pos + n - i) % n;
            acc += tap * self.history[idx];
        }
        acc
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|x| *x = 0.0);
        self.pos = 0;
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        gain_of_taps(&self.taps, freq_hz, sample_rate_hz)
    }

    /// Impulse response over `n` output samples (resets a copy first).
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut f = self.clone();
        f.reset();
        (0..n).map(|i| f.step(if i == 0 { 1.0 } else { 0.0 })).collect()
    }
}

fn gain_of_taps(taps: &[f64], freq_hz: f64, sample_rate_hz: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &tap) in taps.iter().enumerate() {
        re += tap * (omega * n as f64).cos();
        im -= tap * (omega * n as f64).sin();
    }
    (re * re + im * im).sqrt()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

fn hamming(n: usize, order: usize) -> f64 {
    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / order as f64).cos()
}

/// Windowed-sinc lowpass taps, normalized to unity DC gain.
fn lowpass_taps(cutoff_hz: f64, order: usize, fs: f64) -> Vec<f64> {
    let center = order as f64 / 2.0;
    let fc = 2.0 * cutoff_hz / fs;
    let mut taps: Vec<f64> = (0..=order)
        .map(|n| fc * sinc(fc * (n as f64 - center)) * hamming(n, order))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Difference of two unity-DC lowpasses, normalized to unity gain at the
/// band center.
fn bandpass_taps(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Vec<f64> {
    let hi = lowpass_taps(high_hz, order, fs);
    let lo = lowpass_taps(low_hz, order, fs);
    let mut taps: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    let center = 0.5 * (low_hz + high_hz);
    let g = gain_of_taps(&taps, center, fs);
    taps.iter_mut().for_each(|t| *t /= g);
    taps
}

/// Designs symmetric FIR taps with a Hamming window.
///
/// `cutoffs` holds one frequency for `Lowpass` and two (low < high) for
/// `Bandpass` and `Notch`; for `Notch` they are the stopband edges and the
/// filter nulls the band center exactly. `Notch` requires an even order so
/// the pass-through impulse sits on an integer delay.
pub fn design_fir(kind: FirKind, cutoffs: &[f64], order: usize, sample_rate_hz: f64) -> Result<FirFilter> {
    if order < 2 {
        return Err(Error::Parameter(format!("FIR order must be >= 2, got {order}")));
    }
    let nyquist = sample_rate_hz / 2.0;
    for &c in cutoffs {
        if c <= 0.0 || c >= nyquist {
            return Err(Error::Parameter(format!(
                "cutoff {c} Hz outside (0, {nyquist}) at {sample_rate_hz} Hz"
            )));
        }
    }
    let taps = match kind {
        FirKind::Lowpass => {
            let [fc] = cutoffs else {
                return Err(Error::Parameter("lowpass takes exactly one cutoff".into()));
            };
            lowpass_taps(*fc, order, sample_rate_hz)
        }
        FirKind::Bandpass | FirKind::Notch => {
            let [f1, f2] = cutoffs else {
                return Err(Error::Parameter("bandpass/notch take exactly two cutoffs".into()));
            };
            if f1 >= f2 {
                return Err(Error::Parameter(format!("cutoffs must be ordered, got {f1} >= {f2}")));
            }
            if kind == FirKind::Bandpass {
                bandpass_taps(*f1, *f2, order, sample_rate_hz)
            } else {
                if order % 2 != 0 {
                    return Err(Error::Parameter("notch requires an even order".into()));
                }
                let mut taps = bandpass_taps(*f1, *f2, order, sample_rate_hz);
                taps.iter_mut().for_each(|t| *t = -*t);
                taps[order / 2] += 1.0;
                taps
            }
        }
    };
    FirFilter::from_taps(taps)
}
