//! Truncated-BPTT training with oversampled batches and early stopping on
//! a smoothed validation f1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{loss, AdamW, HiddenState, Network, NetworkGrads, OutputMode};
use crate::error::{Error, Result};
use crate::parallel;
use crate::synth::{BatchSampler, PreparedRecording, WindowRef};

/// Optimizer and schedule settings. Defaults are the full-scale reference
/// configuration; desk-scale runs shrink `max_epochs`, `batches_per_epoch`
/// and `sequence_length`.
#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without improvement of the smoothed validation f1 before
    /// stopping.
    pub patience: usize,
    /// Running-average factor for the early-stopping metric.
    pub smoothing_factor: f64,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub sequence_length: usize,
    /// Cap on windows scored per validation pass (subsampled evenly).
    pub validation_max_windows: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 0.01,
            max_epochs: 150,
            patience: 20,
            smoothing_factor: 0.1,
            batches_per_epoch: 1000,
            batch_size: 256,
            dropout: 0.5,
            sequence_length: 50,
            validation_max_windows: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.max_epochs == 0
            || self.batches_per_epoch == 0
            || self.batch_size == 0
            || self.sequence_length == 0
        {
            return Err(Error::Parameter("training config values must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_f1: f64,
    pub smoothed_f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_smoothed_f1: f64,
    pub stopped_early: bool,
}

/// Gradients and loss for one BPTT sequence ending at `wref.end`.
/// The loss is applied to the final step's output only.
fn sequence_grads(
    net: &Network,
    recordings: &[PreparedRecording],
    wref: WindowRef,
    cfg: &TrainConfig,
    item_seed: u64,
) -> (NetworkGrads, f64) {
    let spec = net.spec();
    let window = spec.window_samples();
    let dilation = spec.dilation_samples();
    let steps = cfg.sequence_length;
    let rec = &recordings[wref.recording];
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);

    let mut hidden = net.zero_hidden();
    let mut tapes = Vec::with_capacity(steps);
    for j in 0..steps {
        let end = wref.end - (steps - 1 - j) * dilation;
        let start = end + 1 - window;
        let clean = &rec.clean[start..=end];
        let windows: Vec<&[f64]> = match spec.branch_count() {
            1 => vec![clean],
            _ => vec![clean, &rec.envelope[start..=end]],
        };
        let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
        let (_, h, tape) = net
            .forward_traced(&windows, &hidden, dropout)
            .expect("window geometry validated by the sampler");
        hidden = h;
        tapes.push(tape);
    }

    let y = tapes.last().unwrap().output();
    let (loss_value, d_pre_last) = match spec.mode {
        OutputMode::Classifier => {
            let target = f64::from(rec.binary[wref.end]);
            // d loss / d pre-activation for sigmoid + BCE.
            (loss::bce(y, target), y - target)
        }
        OutputMode::Regressor => {
            let target = rec.scores[wref.end];
            (loss::mse(y, target), loss::mse_grad(y, target))
        }
    };

    let mut grads = NetworkGrads::zeros_like(net);
    let mut d_hidden = zero_hidden_grad(net);
    for (j, tape) in tapes.iter().enumerate().rev() {
        let d_pre = if j == steps - 1 { d_pre_last } else { 0.0 };
        d_hidden = net.backward_step(d_pre, tape, &d_hidden, &mut grads, None);
    }
    (grads, loss_value)
}

fn zero_hidden_grad(net: &Network) -> HiddenState {
    net.zero_hidden()
}

/// Samplewise counts from running the network over recordings on the
/// dilation grid with a single recurrent chain per recording.
pub fn evaluate_counts(
    net: &Network,
    recordings: &[PreparedRecording],
    threshold: f64,
    max_windows: usize,
) -> (u64, u64, u64, u64) {
    let spec = net.spec();
    let window = spec.window_samples();
    let dilation = spec.dilation_samples().max(1);
    let per_rec = parallel::map_collect(recordings, |rec| {
        let mut hidden = net.zero_hidden();
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        if rec.len() < window {
            return (tp, fp, fn_, tn);
        }
        let total = (rec.len() - window) / dilation + 1;
        let budget = max_windows.max(1);
        // Evaluate every position when it fits the budget, else subsample
        // evenly (keeping the recurrent chain on the visited grid).
        let stride_mult = total.div_ceil(budget).max(1);
        let mut end = window - 1;
        while end < rec.len() {
            let clean = &rec.clean[end + 1 - window..=end];
            let windows: Vec<&[f64]> = match spec.branch_count() {
                1 => vec![clean],
                _ => vec![clean, &rec.envelope[end + 1 - window..=end]],
            };
            let (y, h) = net.forward_window(&windows, &hidden).expect("validated geometry");
            hidden = h;
            let predicted = y >= threshold;
            let actual = rec.binary[end];
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
            end += dilation * stride_mult;
        }
        (tp, fp, fn_, tn)
    });
    per_rec.into_iter().fold((0, 0, 0, 0), |acc, x| {
        (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2, acc.3 + x.3)
    })
}

pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Samplewise f1 on the dilation grid at `threshold`.
pub fn evaluate_samplewise_f1(
    net: &Network,
    recordings: &[PreparedRecording],
    threshold: f64,
    max_windows: usize,
) -> f64 {
    let (tp, fp, fn_, _) = evaluate_counts(net, recordings, threshold, max_windows);
    f1_from_counts(tp, fp, fn_)
}

/// Trains a network, returning the snapshot with the best smoothed
/// validation f1 and the per-epoch history.
///
/// Classifiers draw oversampled (half-positive) batches; regressors draw
/// unbalanced batches. Per-item gradients are evaluated in parallel and
/// reduced in input order, so results do not depend on thread count.
pub fn train(
    net: Network,
    cfg: &TrainConfig,
    train_set: &[PreparedRecording],
    validation_set: &[PreparedRecording],
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || validation_set.is_empty() {
        return Err(Error::Parameter("train and validation sets must be non-empty".into()));
    }
    let spec = net.spec().clone();
    let span = spec.window_samples() + spec.dilation_samples() * (cfg.sequence_length - 1);
    let mut sampler = match spec.mode {
        OutputMode::Classifier => BatchSampler::balanced(train_set, span, cfg.batch_size, cfg.seed)?,
        OutputMode::Regressor => BatchSampler::unbalanced(train_set, span, cfg.batch_size, cfg.seed)?,
    };

    let mut net = net;
    let mut optimizer = AdamW::new(cfg.learning_rate, cfg.weight_decay, &net.param_shapes());
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_smoothed_f1: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best_net = net.clone();
    let mut smoothed: Option<f64> = None;

    for epoch in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for batch_idx in 0..cfg.batches_per_epoch {
            let batch = sampler.next_batch();
            let item_seeds: Vec<u64> = (0..batch.len()).map(|_| seed_rng.gen()).collect();
            let items: Vec<(WindowRef, u64)> =
                batch.into_iter().zip(item_seeds).collect();
            let results =
                parallel::map_collect(&items, |(wref, seed)| {
                    sequence_grads(&net, train_set, *wref, cfg, *seed)
                });
            let mut total = NetworkGrads::zeros_like(&net);
            let mut batch_loss = 0.0;
            for (g, l) in &results {
                total.add(g);
                batch_loss += l;
            }
            total.scale(1.0 / items.len() as f64);
            batch_loss /= items.len() as f64;
            if !batch_loss.is_finite() || !total.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_idx} (loss = {batch_loss})"
                )));
            }
            let mut params = net.param_tensors_mut();
            optimizer.step(&mut params, &total.tensors);
            epoch_loss += batch_loss;
        }
        epoch_loss /= cfg.batches_per_epoch as f64;

        let val_f1 =
            evaluate_samplewise_f1(&net, validation_set, 0.5, cfg.validation_max_windows);
        let smooth = match smoothed {
            None => val_f1,
            Some(prev) => prev + cfg.smoothing_factor * (val_f1 - prev),
        };
        smoothed = Some(smooth);
        history.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss,
            validation_f1: val_f1,
            smoothed_f1: smooth,
        });
        if smooth > history.best_smoothed_f1 {
            history.best_smoothed_f1 = smooth;
            history.best_epoch = epoch;
            best_net = net.clone();
        } else if epoch - history.best_epoch >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best_net, history))
}
