//! Sample-wise and event-level scoring, threshold sweeps, delay
//! histograms, and the shuffled train/validate/test protocol.

use serde::Serialize;

use crate::detector::{apply_policy, DetectorConfig, StimulusEvent};
use crate::error::{Error, Result};
use crate::nn::{self, Network, NetworkSpec, TrainConfig};
use crate::parallel;
use crate::signal::PipelineConfig;
use crate::synth::{split_subjects, PreparedRecording, Recording};

/// Per-sample precision/recall/f1 with raw counts.
#[derive(Debug, Clone, Serialize)]
pub struct SampleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

fn prf_from_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    // Counts formula, algebraically 2pr/(p+r).
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    (precision, recall, f1)
}

/// Element-wise precision/recall/f1 of boolean predictions.
pub fn samplewise_prf(predictions: &[bool], labels: &[bool]) -> Result<SampleMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "predictions ({}) and labels ({}) differ in length",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
    Ok(SampleMetrics { precision, recall, f1, tp, fp, fn_ })
}

/// Event-level metrics with per-spindle stimulation delays.
#[derive(Debug, Clone, Serialize)]
pub struct StimulationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Delay (ms, possibly negative) of the stimulus nearest each
    /// spindle's onset, for spindles that have one in
    /// `[onset - 2 s, end]`.
    pub delays_ms: Vec<f64>,
}

/// Classifies stimuli against labeled spindle intervals.
///
/// A spindle's first stimulus inside `[onset, end)` is a true positive;
/// every other stimulus is a false positive; spindles with none are false
/// negatives. So `tp + fn == spindles` and `tp + fp == stimuli`.
pub fn stimulation_prf(
    stimuli: &[StimulusEvent],
    spindles: &[(f64, f64)],
) -> Result<StimulationMetrics> {
    for pair in spindles.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Data(format!(
                "spindle intervals overlap or are unsorted: {:?} then {:?}",
                pair[0], pair[1]
            )));
        }
    }
    for (onset, end) in spindles {
        if end <= onset {
            return Err(Error::Data(format!("empty spindle interval ({onset}, {end})")));
        }
    }

    let mut times: Vec<f64> = stimuli.iter().map(|s| s.trigger_time_s).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tp = 0u64;
    let mut fn_ = 0u64;
    let mut delays_ms = Vec::new();
    for &(onset, end) in spindles {
        // First stimulus within the labeled duration.
        match times.iter().position(|&t| t >= onset && t < end) {
            Some(_) => tp += 1,
            None => fn_ += 1,
        }
        // Nearest stimulus for the delay statistic.
        let nearest = times
            .iter()
            .filter(|&&t| t >= onset - 2.0 && t <= end)
            .min_by(|a, b| (*a - onset).abs().partial_cmp(&(*b - onset).abs()).unwrap());
        if let Some(&t) = nearest {
            delays_ms.push((t - onset) * 1000.0);
        }
    }
    let fp = times.len() as u64 - tp;
    let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
    Ok(StimulationMetrics { precision, recall, f1, tp, fp, fn_, delays_ms })
}

/// One sweep row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub stimuli: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Argmax-f1 row (first one on ties).
    pub best: Option<SweepPoint>,
}

/// Replays the stimulation policy over cached score streams at each
/// threshold (no re-inference), pooling event counts across streams.
pub fn threshold_sweep_pooled(
    streams: &[(&[(f64, f64)], &[(f64, f64)])],
    cfg: &DetectorConfig,
    thresholds: &[f64],
) -> Result<SweepResult> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("thresholds must be strictly increasing".into()));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Parameter("thresholds must lie in [0, 1]".into()));
    }
    let points: Result<Vec<SweepPoint>> = parallel::map_collect(thresholds, |&threshold| {
        let (mut tp, mut fp, mut fn_, mut n) = (0u64, 0u64, 0u64, 0u64);
        for (scores, spindles) in streams {
            let events = apply_policy(scores, threshold, cfg)?;
            let m = stimulation_prf(&events, spindles)?;
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            n += events.len() as u64;
        }
        let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
        Ok(SweepPoint { threshold, precision, recall, f1, stimuli: n })
    })
    .into_iter()
    .collect();
    let points = points?;
    let best = points
        .iter()
        .cloned()
        .max_by(|a, b| a.f1.partial_cmp(&b.f1).unwrap().then(b.threshold.partial_cmp(&a.threshold).unwrap()));
    Ok(SweepResult { points, best })
}

/// Single-stream convenience wrapper.
pub fn threshold_sweep(
    scores: &[(f64, f64)],
    spindles: &[(f64, f64)],
    cfg: &DetectorConfig,
    thresholds: &[f64],
) -> Result<SweepResult> {
    threshold_sweep_pooled(&[(scores, spindles)], cfg, thresholds)
}

/// The default sweep grid: 0.05 to 0.95 in steps of 0.01.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=90).map(|i| 0.05 + i as f64 * 0.01).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DelayHistogram {
    /// Bin edges in ms: -500, -450, ..., 1500.
    pub edges_ms: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Fixed 50 ms bins spanning [-500, 1500] ms; out-of-range delays clamp
/// into the edge bins, so counts sum to the number of delays.
pub fn delay_distribution(delays_ms: &[f64]) -> DelayHistogram {
    let lo = -500.0;
    let width = 50.0;
    let bins = 40usize;
    let edges_ms: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &d in delays_ms {
        let idx = (((d - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    DelayHistogram { edges_ms, counts }
}

/// Shuffle protocol settings (desk-scale defaults are chosen by callers).
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolConfig {
    pub shuffles: usize,
    pub models_per_split: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { shuffles: 10, models_per_split: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolResult {
    pub per_shuffle_test_f1: Vec<f64>,
    pub mean_f1: f64,
    /// Sample standard deviation over the shuffle scores.
    pub std_f1: f64,
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Shuffles subjects, trains `models_per_split` candidates per shuffle,
/// selects the best by validation f1, and reports the test f1
/// mean/standard deviation over shuffles.
pub fn protocol_evaluate(
    recordings: &[Recording],
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
    pipeline_cfg: &PipelineConfig,
    protocol: &ProtocolConfig,
) -> Result<ProtocolResult> {
    let prepared: Result<Vec<PreparedRecording>> = parallel::map_collect(recordings, |r| {
        PreparedRecording::from_recording(r, pipeline_cfg)
    })
    .into_iter()
    .collect();
    let prepared = prepared?;

    let mut per_shuffle_test_f1 = Vec::with_capacity(protocol.shuffles);
    for shuffle in 0..protocol.shuffles {
        let split_seed = protocol.seed.wrapping_add(shuffle as u64).wrapping_mul(0x9E37_79B9);
        let split = split_subjects(recordings, split_seed)?;
        let pick = |idxs: &[usize]| -> Vec<PreparedRecording> {
            idxs.iter().map(|&i| prepared[i].clone()).collect()
        };
        let train_set = pick(&split.train);
        let val_set = pick(&split.validation);
        let test_set = pick(&split.test);

        let mut best: Option<(f64, Network)> = None;
        for model in 0..protocol.models_per_split {
            let model_seed = split_seed
                .wrapping_add(0x1000 + model as u64)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let net = Network::init(spec, model_seed)?;
            let cfg = TrainConfig { seed: model_seed, ..train_cfg.clone() };
            let (trained, _history) = nn::train(net, &cfg, &train_set, &val_set)?;
            let val_f1 = nn::train::evaluate_samplewise_f1(
                &trained,
                &val_set,
                0.5,
                cfg.validation_max_windows,
            );
            if best.as_ref().map_or(true, |(b, _)| val_f1 > *b) {
                best = Some((val_f1, trained));
            }
        }
        let (_, winner) = best.expect("models_per_split >= 1");
        let test_f1 =
            nn::train::evaluate_samplewise_f1(&winner, &test_set, 0.5, usize::MAX);
        per_shuffle_test_f1.push(test_f1);
    }
    let mean_f1 = per_shuffle_test_f1.iter().sum::<f64>() / per_shuffle_test_f1.len() as f64;
    let std_f1 = sample_std(&per_shuffle_test_f1);
    Ok(ProtocolResult { per_shuffle_test_f1, mean_f1, std_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let labels = vec![true, false, true, true, false];
        let m = samplewise_prf(&labels, &labels).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_equals_point_seventy_one_when_p_and_r_do() {
        let m = SampleMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            tp: 71,
            fp: 29,
            fn_: 29,
        };
        let (p, r, f1) = prf_from_counts(m.tp, m.fp, m.fn_);
        assert_eq!(p, 0.71);
        assert_eq!(r, 0.71);
        assert_eq!(f1, 0.71);
    }

    #[test]
    fn length_mismatch_is_a_shape_error() {
        assert!(samplewise_prf(&[true], &[true, false]).is_err());
    }

    #[test]
    fn samplewise_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = 1000;
            let preds: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
            let m = samplewise_prf(&preds, &labels).unwrap();
            // Independent counting oracle.
            let tp = preds.iter().zip(&labels).filter(|(&p, &l)| p && l).count() as u64;
            let fp = preds.iter().zip(&labels).filter(|(&p, &l)| p && !l).count() as u64;
            let fn_ = preds.iter().zip(&labels).filter(|(&p, &l)| !p && l).count() as u64;
            assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
            let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            assert!((m.precision - p).abs() < 1e-15);
            assert!((m.recall - r).abs() < 1e-15);
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            assert!((m.f1 - f1).abs() < 1e-12);
            // Harmonic-mean bounds.
            if p + r > 0.0 {
                let lo = p.min(r);
                assert!(m.f1 <= 2.0 * lo + 1e-15);
                assert!(m.f1 >= lo - 1e-15);
            }
        }
    }

    fn ev(t: f64) -> StimulusEvent {
        StimulusEvent { trigger_time_s: t }
    }

    #[test]
    fn single_spindle_single_stimulus() {
        let m = stimulation_prf(&[ev(10.3)], &[(10.0, 11.0)]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        assert_eq!(m.delays_ms.len(), 1);
        assert!((m.delays_ms[0] - 300.0).abs() < 1e-6);
    }

    #[test]
    fn early_stimulus_is_a_false_positive_with_negative_delay() {
        let m = stimulation_prf(&[ev(9.99)], &[(10.0, 11.0)]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
        assert!((m.delays_ms[0] - -10.0).abs() < 1e-6);
    }

    #[test]
    fn overlapping_intervals_are_a_data_error() {
        assert!(stimulation_prf(&[], &[(1.0, 2.0), (1.5, 3.0)]).is_err());
    }

    /// Brute force: classify every stimulus and spindle by scanning all
    /// pairs, with no early exits.
    fn stimulation_oracle(
        stimuli: &[StimulusEvent],
        spindles: &[(f64, f64)],
    ) -> (u64, u64, u64, Vec<f64>) {
        let mut tp = 0u64;
        let mut fn_ = 0u64;
        let mut tp_stimuli = vec![false; stimuli.len()];
        let mut delays = Vec::new();
        for &(onset, end) in spindles {
            let mut inside: Vec<usize> = (0..stimuli.len())
                .filter(|&i| stimuli[i].trigger_time_s >= onset && stimuli[i].trigger_time_s < end)
                .collect();
            inside.sort_by(|&a, &b| {
                stimuli[a].trigger_time_s.partial_cmp(&stimuli[b].trigger_time_s).unwrap()
            });
            match inside.first() {
                Some(&i) => {
                    tp += 1;
                    tp_stimuli[i] = true;
                }
                None => fn_ += 1,
            }
            let mut best: Option<f64> = None;
            for s in stimuli {
                let t = s.trigger_time_s;
                if t >= onset - 2.0 && t <= end {
                    let d = t - onset;
                    if best.map_or(true, |b: f64| d.abs() < b.abs()) {
                        best = Some(d);
                    }
                }
            }
            if let Some(d) = best {
                delays.push(d * 1000.0);
            }
        }
        let fp = tp_stimuli.iter().filter(|&&b| !b).count() as u64;
        (tp, fp, fn_, delays)
    }

    fn random_timeline(rng: &mut ChaCha8Rng) -> (Vec<StimulusEvent>, Vec<(f64, f64)>) {
        let mut spindles = Vec::new();
        let mut t = rng.gen_range(0.0..2.0);
        for _ in 0..rng.gen_range(0..12) {
            let dur = rng.gen_range(0.3..2.5);
            spindles.push((t, t + dur));
            t += dur + rng.gen_range(0.2..3.0);
        }
        let mut stimuli: Vec<StimulusEvent> =
            (0..rng.gen_range(0..15)).map(|_| ev(rng.gen_range(-1.0..t + 2.0))).collect();
        stimuli.sort_by(|a, b| a.trigger_time_s.partial_cmp(&b.trigger_time_s).unwrap());
        stimuli.dedup_by(|a, b| (a.trigger_time_s - b.trigger_time_s).abs() < 1e-9);
        (stimuli, spindles)
    }

    #[test]
    fn stimulation_matches_brute_force_on_random_timelines() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let (stimuli, spindles) = random_timeline(&mut rng);
            let m = stimulation_prf(&stimuli, &spindles).unwrap();
            let (tp, fp, fn_, delays) = stimulation_oracle(&stimuli, &spindles);
            assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
            assert_eq!(m.delays_ms.len(), delays.len());
            for (a, b) in m.delays_ms.iter().zip(&delays) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(m.tp + m.fn_, spindles.len() as u64);
            assert_eq!(m.tp + m.fp, stimuli.len() as u64);
        }
    }

    #[test]
    fn histogram_covers_all_delays() {
        let h = delay_distribution(&[300.0, 310.0, 340.0]);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
        let nonzero: Vec<usize> =
            h.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![16]); // [300, 350)
        let empty = delay_distribution(&[]);
        assert_eq!(empty.counts.iter().sum::<u64>(), 0);
        // Clamping keeps the total.
        let h = delay_distribution(&[-2000.0, 5000.0]);
        assert_eq!(h.counts.iter().sum::<u64>(), 2);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[39], 1);
    }

    #[test]
    fn sweep_grid_shape_and_nesting() {
        let grid = default_threshold_grid();
        assert_eq!(grid.len(), 91);
        assert!((grid[0] - 0.05).abs() < 1e-12);
        assert!((grid[90] - 0.95).abs() < 1e-12);

        // Synthetic score stream: detections at t2 are nested in t1 < t2.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<(f64, f64)> =
            (0..500).map(|i| (i as f64 * 0.02, rng.gen_range(0.0..1.0))).collect();
        for (t1, t2) in [(0.3, 0.7), (0.5, 0.55)] {
            let d1: Vec<bool> = scores.iter().map(|&(_, s)| s >= t1).collect();
            let d2: Vec<bool> = scores.iter().map(|&(_, s)| s >= t2).collect();
            assert!(d1.iter().zip(&d2).all(|(&a, &b)| a || !b), "nesting violated");
        }
    }

    #[test]
    fn sweep_extremes() {
        let cfg = DetectorConfig::default();
        let scores: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64 * 0.02, 0.6)).collect();
        let spindles = vec![(2.0, 3.0), (10.0, 11.0)];
        // Threshold above every score: no detections, recall 0.
        let r = threshold_sweep(&scores, &spindles, &cfg, &[0.7]).unwrap();
        assert_eq!(r.points[0].stimuli, 0);
        assert_eq!(r.points[0].recall, 0.0);
        // Threshold 0: every stride detects; refractory renewal keeps it
        // to exactly one stimulus (constant detection never ends).
        let r = threshold_sweep(&scores, &spindles, &cfg, &[0.0]).unwrap();
        assert_eq!(r.points[0].stimuli, 1);
    }

    #[test]
    fn unsorted_thresholds_are_rejected() {
        let cfg = DetectorConfig::default();
        assert!(threshold_sweep(&[], &[], &cfg, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn sample_std_matches_formula() {
        let xs = [0.5, 0.7, 0.6];
        let mean: f64 = 0.6;
        let expect = ((0.01f64 + 0.01 + 0.0) / 2.0).sqrt();
        assert!((sample_std(&xs) - expect).abs() < 1e-12);
        assert_eq!(
            xs.iter().sum::<f64>() / 3.0,
            mean
        );
    }
}
