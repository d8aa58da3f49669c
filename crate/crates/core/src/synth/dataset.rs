//! Dataset splitting, preprocessing, and oversampled batch drawing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{labels::Phase, Recording};
use crate::error::{Error, Result};
use crate::signal::{PipelineConfig, PreprocessPipeline};

/// Indices into a recording slice, disjoint by subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits recordings by subject: validation and test each receive 10% of
/// subjects (rounded up), the rest train. Deterministic under `seed`.
pub fn split_subjects(recordings: &[Recording], seed: u64) -> Result<SubjectSplit> {
    let mut subjects: Vec<u32> = recordings.iter().map(|r| r.subject_id).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 10 {
        return Err(Error::Parameter(format!(
            "need at least 10 subjects to split, got {}",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let holdout = subjects.len().div_ceil(10);
    let val: Vec<u32> = subjects[..holdout].to_vec();
    let test: Vec<u32> = subjects[holdout..2 * holdout].to_vec();

    let mut split = SubjectSplit { train: vec![], validation: vec![], test: vec![] };
    for (i, rec) in recordings.iter().enumerate() {
        if val.contains(&rec.subject_id) {
            split.validation.push(i);
        } else if test.contains(&rec.subject_id) {
            split.test.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}

/// A recording run through the preprocessing pipeline, with outputs
/// realigned to the input clock.
///
/// The pipeline delays its outputs by `group_delay_samples`; the first
/// `delay` outputs are dropped so `clean[i]` and `envelope[i]` describe
/// the same instant as `scores[i]` / `binary[i]`.
#[derive(Debug, Clone)]
pub struct PreparedRecording {
    pub subject_id: u32,
    pub phase: Phase,
    pub sample_rate_hz: f64,
    pub clean: Vec<f64>,
    pub envelope: Vec<f64>,
    pub scores: Vec<f64>,
    pub binary: Vec<bool>,
}

impl PreparedRecording {
    pub fn from_recording(rec: &Recording, pipeline_cfg: &PipelineConfig) -> Result<Self> {
        let mut cfg = pipeline_cfg.clone();
        cfg.sample_rate_hz = rec.sample_rate_hz;
        let mut pipeline = PreprocessPipeline::new(cfg)?;
        let delay = pipeline.group_delay_samples();
        if rec.samples.len() <= delay {
            return Err(Error::Parameter("recording shorter than the pipeline delay".into()));
        }
        let n = rec.samples.len() - delay;
        let mut clean = Vec::with_capacity(n);
        let mut envelope = Vec::with_capacity(n);
        for (i, &x) in rec.samples.iter().enumerate() {
            let (c, e) = pipeline.step(x);
            if i >= delay {
                clean.push(c);
                envelope.push(e);
            }
        }
        Ok(Self {
            subject_id: rec.subject_id,
            phase: rec.phase,
            sample_rate_hz: rec.sample_rate_hz,
            clean,
            envelope,
            scores: rec.scores[..n].to_vec(),
            binary: rec.binary[..n].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// A window end-position inside a prepared dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub recording: usize,
    /// Index of the window's final sample in the aligned arrays.
    pub end: usize,
}

/// Draws training batches of window end-positions.
///
/// In balanced mode each slot picks the positive or the negative pool with
/// probability 1/2, so the expected positive fraction is exactly 0.5. An
/// end-position is only eligible if a full BPTT span
/// `window + dilation * (sequence_length - 1)` fits before it.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    positives: Vec<WindowRef>,
    negatives: Vec<WindowRef>,
    balanced: bool,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn collect_pools(
        recordings: &[PreparedRecording],
        span: usize,
    ) -> (Vec<WindowRef>, Vec<WindowRef>) {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (ri, rec) in recordings.iter().enumerate() {
            for end in (span - 1)..rec.len() {
                let wref = WindowRef { recording: ri, end };
                if rec.binary[end] {
                    positives.push(wref);
                } else {
                    negatives.push(wref);
                }
            }
        }
        (positives, negatives)
    }

    /// Oversampled batches: expected half positive, half negative.
    pub fn balanced(
        recordings: &[PreparedRecording],
        span: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let (positives, negatives) = Self::collect_pools(recordings, span);
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::Parameter(format!(
                "balanced sampling needs both classes (positives: {}, negatives: {})",
                positives.len(),
                negatives.len()
            )));
        }
        Ok(Self { positives, negatives, balanced: true, batch_size, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Unbalanced batches: positions drawn uniformly over all eligible ends.
    pub fn unbalanced(
        recordings: &[PreparedRecording],
        span: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let (mut positives, negatives) = Self::collect_pools(recordings, span);
        positives.extend_from_slice(&negatives);
        if positives.is_empty() {
            return Err(Error::Parameter("no eligible window positions".into()));
        }
        Ok(Self {
            positives,
            negatives: Vec::new(),
            balanced: false,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_batch(&mut self) -> Vec<WindowRef> {
        (0..self.batch_size)
            .map(|_| {
                let pool = if self.balanced && self.rng.gen_bool(0.5) {
                    &self.positives
                } else if self.balanced {
                    &self.negatives
                } else {
                    &self.positives
                };
                pool[self.rng.gen_range(0..pool.len())]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_recording, SyntheticConfig};

    fn tiny_dataset(subjects: u32) -> Vec<Recording> {
        let cfg = SyntheticConfig { duration_s: 30.0, ..SyntheticConfig::default() };
        (0..subjects).map(|s| generate_recording(&cfg, s, Phase::One).unwrap()).collect()
    }

    #[test]
    fn split_20_subjects_is_16_2_2() {
        let recs = tiny_dataset(20);
        let split = split_subjects(&recs, 7).unwrap();
        assert_eq!(split.train.len(), 16);
        assert_eq!(split.validation.len(), 2);
        assert_eq!(split.test.len(), 2);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let recs = tiny_dataset(12);
        let a = split_subjects(&recs, 3).unwrap();
        let b = split_subjects(&recs, 3).unwrap();
        assert_eq!(a, b);
        let subject = |i: usize| recs[i].subject_id;
        for &v in &a.validation {
            assert!(!a.train.iter().any(|&t| subject(t) == subject(v)));
            assert!(!a.test.iter().any(|&t| subject(t) == subject(v)));
        }
        for &t in &a.test {
            assert!(!a.train.iter().any(|&tr| subject(tr) == subject(t)));
        }
        assert_eq!(a.train.len() + a.validation.len() + a.test.len(), recs.len());
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        let recs = tiny_dataset(9);
        assert!(split_subjects(&recs, 0).is_err());
    }

    #[test]
    fn prepared_recording_is_aligned_and_shorter_by_the_delay() {
        let recs = tiny_dataset(1);
        let prep = PreparedRecording::from_recording(&recs[0], &PipelineConfig::default()).unwrap();
        assert_eq!(prep.len(), recs[0].samples.len() - 10);
        assert_eq!(prep.binary.len(), prep.clean.len());
        assert_eq!(prep.envelope.len(), prep.clean.len());
    }

    #[test]
    fn balanced_batches_hit_half_positive() {
        let cfg = SyntheticConfig { duration_s: 120.0, ..SyntheticConfig::default() };
        let recs: Vec<Recording> =
            (0..2).map(|s| generate_recording(&cfg, s, Phase::One).unwrap()).collect();
        let prepared: Vec<PreparedRecording> = recs
            .iter()
            .map(|r| PreparedRecording::from_recording(r, &PipelineConfig::default()).unwrap())
            .collect();
        let span = 54 + 42 * 7;
        let mut sampler = BatchSampler::balanced(&prepared, span, 256, 9).unwrap();
        let mut positive = 0usize;
        let batches = 2000;
        for _ in 0..batches {
            for w in sampler.next_batch() {
                if prepared[w.recording].binary[w.end] {
                    positive += 1;
                }
            }
        }
        let frac = positive as f64 / (batches * 256) as f64;
        assert!((frac - 0.5).abs() < 0.02, "positive fraction {frac}");
    }

    #[test]
    fn sampler_is_deterministic_under_seed() {
        let recs = tiny_dataset(1);
        let prepared =
            vec![PreparedRecording::from_recording(&recs[0], &PipelineConfig::default()).unwrap()];
        let mut a = BatchSampler::balanced(&prepared, 54, 32, 5).unwrap();
        let mut b = BatchSampler::balanced(&prepared, 54, 32, 5).unwrap();
        for _ in 0..10 {
            assert_eq!(a.next_batch(), b.next_batch());
        }
    }

    #[test]
    fn missing_class_is_an_error() {
        let recs = tiny_dataset(1);
        let mut prep =
            PreparedRecording::from_recording(&recs[0], &PipelineConfig::default()).unwrap();
        prep.binary.iter_mut().for_each(|b| *b = false);
        assert!(BatchSampler::balanced(&[prep], 54, 32, 5).is_err());
    }
}
