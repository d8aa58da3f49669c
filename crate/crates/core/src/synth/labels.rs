//! Score-to-label post-processing.
//!
//! Expert-style score tracks are thresholded per phase, nearby segments are
//! merged, and segments outside the plausible spindle duration range are
//! relabeled negative.

/// Which annotation cohort a recording belongs to; the two use different
/// score thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn threshold(self) -> f64 {
        match self {
            Phase::One => 0.2,
            Phase::Two => 0.35,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            _ => None,
        }
    }
}

/// Maximal runs of `true`, as `(start, end)` half-open index pairs.
pub fn true_runs(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &b) in labels.iter().enumerate() {
        match (b, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len()));
    }
    runs
}

/// Thresholds scores, merges segments separated by less than 0.1 s, then
/// drops segments shorter than 0.3 s or longer than 2.5 s.
///
/// Merging applies to any gap below 0.1 s regardless of the segment
/// lengths on either side; the length filter runs afterwards.
pub fn score_to_binary(scores: &[f64], phase: Phase, sample_rate_hz: f64) -> Vec<bool> {
    let thr = phase.threshold();
    let merge_below = (0.1 * sample_rate_hz).round() as usize;
    let min_len = (0.3 * sample_rate_hz).round() as usize;
    let max_len = (2.5 * sample_rate_hz).round() as usize;

    let candidates: Vec<bool> = scores.iter().map(|&s| s >= thr).collect();
    let mut runs = true_runs(&candidates);

    // Merge pairs closer than the gap threshold.
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs.drain(..) {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 < merge_below => last.1 = run.1,
            _ => merged.push(run),
        }
    }

    let mut out = vec![false; scores.len()];
    for (s, e) in merged {
        let len = e - s;
        if len >= min_len && len <= max_len {
            out[s..e].iter_mut().for_each(|b| *b = true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment_scores(total: usize, segments: &[(usize, usize)]) -> Vec<f64> {
        let mut s = vec![0.0; total];
        for &(start, end) in segments {
            s[start..end].iter_mut().for_each(|x| *x = 0.9);
        }
        s
    }

    #[test]
    fn merge_then_keep() {
        // At 100 Hz: 0.25 s segment, 0.05 s gap, 0.20 s segment -> one
        // 0.5 s segment, kept.
        let scores = segment_scores(100, &[(10, 35), (40, 60)]);
        let out = score_to_binary(&scores, Phase::One, 100.0);
        let runs = true_runs(&out);
        assert_eq!(runs, vec![(10, 60)]);
    }

    #[test]
    fn isolated_short_segment_is_dropped() {
        let scores = segment_scores(100, &[(10, 30)]); // 0.2 s at 100 Hz
        let out = score_to_binary(&scores, Phase::One, 100.0);
        assert!(out.iter().all(|&b| !b));
    }

    #[test]
    fn overlong_segment_is_dropped() {
        let scores = segment_scores(400, &[(10, 310)]); // 3.0 s at 100 Hz
        let out = score_to_binary(&scores, Phase::One, 100.0);
        assert!(out.iter().all(|&b| !b));
    }

    #[test]
    fn phase_thresholds_differ() {
        let scores = segment_scores(200, &[(50, 100)])
            .iter()
            .map(|&x| if x > 0.0 { 0.25 } else { 0.0 })
            .collect::<Vec<_>>();
        // 0.25 clears phase 1's 0.2 but not phase 2's 0.35.
        assert!(score_to_binary(&scores, Phase::One, 100.0).iter().any(|&b| b));
        assert!(score_to_binary(&scores, Phase::Two, 100.0).iter().all(|&b| !b));
    }

    #[test]
    fn idempotent_on_own_output() {
        let scores = segment_scores(1000, &[(100, 180), (190, 260), (400, 800), (950, 990)]);
        let first = score_to_binary(&scores, Phase::One, 100.0);
        let as_scores: Vec<f64> = first.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let second = score_to_binary(&as_scores, Phase::One, 100.0);
        assert_eq!(first, second);
    }
}
