//! Real-time detection over a preprocessed stream.
//!
//! A trained network runs every `stride` samples on a sliding window.
//! Because consecutive windows overlap almost entirely, the conv stack is
//! evaluated incrementally column by column (bit-identical to the plain
//! per-window forward; verified by tests) whenever the architecture has
//! unit conv/pool strides. Recurrent state lives in a FIFO of
//! `K = dilation / stride` independent hidden states, so one physical
//! network emulates K decoupled time-dilated networks with no loss of
//! detection rate.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{HiddenState, Network};
use crate::signal::{PipelineConfig, PreprocessPipeline};
use crate::synth::Recording;

/// Detection and stimulation timing parameters.
#[derive(Debug, Clone, Serialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    /// Samples consumed per forward pass (default 5 = 20 ms at 250 Hz).
    pub stride_samples: usize,
    /// Time dilation between a hidden slot's consecutive windows; must be
    /// divisible by the stride. Default 40 samples, giving K = 8. The
    /// alternative pairing 42/6 (K = 7) is also valid.
    pub dilation_samples: usize,
    /// Constant trigger latency added to every detection: filter content
    /// delay + forward pass + stimulus transport.
    pub constant_delay_ms: f64,
    pub stimulus_duration_ms: f64,
    pub refractory_ms: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            stride_samples: 5,
            dilation_samples: 40,
            constant_delay_ms: 64.0,
            stimulus_duration_ms: 100.0,
            refractory_ms: 400.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride_samples == 0 {
            return Err(Error::Parameter("stride_samples must be >= 1".into()));
        }
        if self.dilation_samples % self.stride_samples != 0 {
            return Err(Error::Parameter(format!(
                "dilation {} must be divisible by stride {}",
                self.dilation_samples, self.stride_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Parameter(format!("threshold must be in [0,1], got {}", self.threshold)));
        }
        Ok(())
    }

    pub fn fifo_depth(&self) -> usize {
        (self.dilation_samples / self.stride_samples).max(1)
    }
}

/// FIFO of decoupled hidden states implementing virtual parallelization.
///
/// Slot k only ever composes with windows K steps apart, so its state
/// sequence is exactly what a lone network would produce seeing every
/// K-th window.
#[derive(Debug, Clone)]
pub struct VirtualHiddenFifo {
    slots: VecDeque<HiddenState>,
}

impl VirtualHiddenFifo {
    pub fn new(net: &Network, depth: usize) -> Self {
        Self { slots: (0..depth.max(1)).map(|_| net.zero_hidden()).collect() }
    }

    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    /// Pops the oldest hidden state, runs one forward pass, pushes the
    /// new state back, and returns the detection score.
    pub fn step(&mut self, net: &Network, windows: &[&[f64]]) -> Result<f64> {
        let hidden = self.slots.pop_front().expect("fifo is never empty");
        let (score, new_hidden) = net.forward_window(windows, &hidden)?;
        self.slots.push_back(new_hidden);
        Ok(score)
    }

    /// As [`step`](Self::step) but with externally computed conv features.
    fn step_with_features(&mut self, net: &Network, features: &[Vec<f64>]) -> f64 {
        let hidden = self.slots.pop_front().expect("fifo is never empty");
        let (score, new_hidden) = net.head_forward(features, &hidden);
        self.slots.push_back(new_hidden);
        score
    }
}

/// An emitted stimulus, timestamped on the input clock (constant delay
/// included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StimulusEvent {
    pub trigger_time_s: f64,
}

/// One-stimulus-per-spindle policy with a 400 ms refractory timer that
/// resets while detections continue.
#[derive(Debug, Clone)]
pub struct StimulationPolicy {
    constant_delay_s: f64,
    stimulus_duration_s: f64,
    refractory_s: f64,
    stimulus_until: f64,
    refractory_deadline: f64,
    last_now: f64,
}

impl StimulationPolicy {
    pub fn new(cfg: &DetectorConfig) -> Self {
        Self {
            constant_delay_s: cfg.constant_delay_ms / 1000.0,
            stimulus_duration_s: cfg.stimulus_duration_ms / 1000.0,
            refractory_s: cfg.refractory_ms / 1000.0,
            stimulus_until: f64::NEG_INFINITY,
            refractory_deadline: f64::NEG_INFINITY,
            last_now: f64::NEG_INFINITY,
        }
    }

    /// Advances the policy by one detector stride. Emits a stimulus iff
    /// `detected`, no stimulus is active, and the refractory deadline has
    /// passed. Every detection (emitting or not) moves the deadline to
    /// `now + refractory`, since the spindle is considered ongoing.
    pub fn step(&mut self, detected: bool, now_s: f64) -> Result<Option<StimulusEvent>> {
        if now_s <= self.last_now {
            return Err(Error::Contract(format!(
                "policy time must increase monotonically: {now_s} after {}",
                self.last_now
            )));
        }
        self.last_now = now_s;
        let mut event = None;
        if detected {
            if now_s >= self.refractory_deadline && now_s >= self.stimulus_until {
                let trigger = now_s + self.constant_delay_s;
                self.stimulus_until = trigger + self.stimulus_duration_s;
                event = Some(StimulusEvent { trigger_time_s: trigger });
            }
            self.refractory_deadline = now_s + self.refractory_s;
        }
        Ok(event)
    }
}

/// Replays the stimulation policy over a cached score stream at a given
/// threshold (no re-inference).
pub fn apply_policy(
    scores: &[(f64, f64)],
    threshold: f64,
    cfg: &DetectorConfig,
) -> Result<Vec<StimulusEvent>> {
    let mut policy = StimulationPolicy::new(cfg);
    let mut events = Vec::new();
    for &(t, score) in scores {
        if let Some(ev) = policy.step(score >= threshold, t)? {
            events.push(ev);
        }
    }
    Ok(events)
}

/// Sliding column buffer: `channels x cap` with a moving head, compacted
/// by memcpy when full, so the hot loops index directly with no modulo.
struct StreamLayer {
    channels: usize,
    /// Columns of history the consumers reach back for.
    needed: usize,
    cap: usize,
    data: Vec<f64>,
    /// One past the newest column.
    head: usize,
    count: usize,
}

impl StreamLayer {
    fn new(channels: usize, needed: usize) -> Self {
        let cap = needed * 4;
        Self { channels, needed, cap, data: vec![0.0; channels * cap], head: 0, count: 0 }
    }

    fn push(&mut self, column: &[f64]) {
        if self.head == self.cap {
            let keep = self.needed - 1;
            for c in 0..self.channels {
                let row = c * self.cap;
                self.data.copy_within(row + self.cap - keep..row + self.cap, row);
            }
            self.head = keep;
        }
        for (c, &v) in column.iter().enumerate() {
            self.data[c * self.cap + self.head] = v;
        }
        self.head += 1;
        self.count += 1;
    }

    /// Channel row slice and the index of the newest column within it.
    fn row(&self, c: usize) -> (&[f64], usize) {
        (&self.data[c * self.cap..(c + 1) * self.cap], self.head - 1)
    }
}

/// Streaming CNN for one branch; exactly reproduces the plain per-window
/// conv features for unit-stride architectures.
struct StreamingBranch {
    layers: Vec<StreamLayer>,
    /// Final feature columns covering one full window.
    output: StreamLayer,
    out_len: usize,
}

impl StreamingBranch {
    fn new(net: &Network, _branch: usize) -> Self {
        let spec = net.spec();
        let dims = spec.shape_plan().expect("validated spec");
        let conv_span = (spec.conv_kernel - 1) * spec.conv_dilation + 1;
        let pool_span = (spec.pool_kernel - 1) * spec.pool_dilation + 1;
        let needed = conv_span + pool_span - 1;
        let mut layers = Vec::with_capacity(spec.cnn_layers);
        let mut in_ch = 1;
        for _ in 0..spec.cnn_layers {
            layers.push(StreamLayer::new(in_ch, needed));
            in_ch = spec.cnn_channels;
        }
        let (out_ch, out_len) = *dims.last().unwrap();
        Self { layers, output: StreamLayer::new(out_ch, out_len), out_len }
    }

    /// Feeds one aligned sample; cascades new columns through the stack.
    fn push_sample(&mut self, net: &Network, branch: usize, sample: f64) {
        let spec = net.spec();
        let conv_span = (spec.conv_kernel - 1) * spec.conv_dilation + 1;
        let pool_span = (spec.pool_kernel - 1) * spec.pool_dilation + 1;
        let warm = conv_span + pool_span - 1;
        let mut incoming: Vec<f64> = vec![sample];
        for l in 0..self.layers.len() {
            self.layers[l].push(&incoming);
            if self.layers[l].count < warm {
                return;
            }
            let conv = net.conv_layer(branch, l);
            let layer = &self.layers[l];
            let mut pooled = vec![0.0; conv.out_channels];
            for (oc, out) in pooled.iter_mut().enumerate() {
                // Fused conv + ReLU + max over the pool taps; scan order
                // matches the plain path so values are bit-identical.
                let mut best = f64::NEG_INFINITY;
                for pk in 0..spec.pool_kernel {
                    let col_age = (spec.pool_kernel - 1 - pk) * spec.pool_dilation;
                    let mut acc = conv.bias[oc];
                    for ic in 0..conv.in_channels {
                        let w_row = &conv.weight[(oc * conv.in_channels + ic) * conv.kernel..]
                            [..conv.kernel];
                        let (row, newest) = layer.row(ic);
                        // Tap kk reads the column aged
                        // col_age + (kernel-1-kk) * dilation.
                        let base = newest - col_age - (conv.kernel - 1) * conv.dilation;
                        for (kk, &w) in w_row.iter().enumerate() {
                            acc += w * row[base + kk * conv.dilation];
                        }
                    }
                    let acc = if acc < 0.0 { 0.0 } else { acc };
                    if acc > best {
                        best = acc;
                    }
                }
                *out = best;
            }
            incoming = pooled;
        }
        self.output.push(&incoming);
    }

    /// True once a full window's worth of feature columns exists.
    fn warmed(&self) -> bool {
        self.output.count >= self.out_len
    }

    /// Flattened `channels x len` features of the current window.
    fn features(&self) -> Vec<f64> {
        let len = self.out_len;
        let mut out = vec![0.0; self.output.channels * len];
        for c in 0..self.output.channels {
            let (row, newest) = self.output.row(c);
            let start = newest + 1 - len;
            out[c * len..(c + 1) * len].copy_from_slice(&row[start..=newest]);
        }
        out
    }
}

/// Per-stride output of the streaming detector.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    /// `(window_end_time_s, score)` when a forward pass ran this sample.
    pub score: Option<(f64, f64)>,
    pub event: Option<StimulusEvent>,
}

/// Streaming detector: raw samples in, scores and stimulation events out.
///
/// Scores are timestamped at the window end on the input clock (the
/// pipeline group delay is subtracted); triggers add the configured
/// constant delay on top.
pub struct StreamDetector<'a> {
    net: &'a Network,
    cfg: DetectorConfig,
    pipeline: PreprocessPipeline,
    group_delay: usize,
    sample_rate_hz: f64,
    raw_count: usize,
    aligned_count: usize,
    /// Streaming conv path (unit strides) or plain window fallback.
    streaming: Option<Vec<StreamingBranch>>,
    window_ring: Vec<VecDeque<f64>>,
    fifo: VirtualHiddenFifo,
    policy: StimulationPolicy,
}

impl<'a> StreamDetector<'a> {
    pub fn new(net: &'a Network, cfg: DetectorConfig, pipeline_cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = net.spec();
        let mut pcfg = pipeline_cfg.clone();
        pcfg.sample_rate_hz = spec.sample_rate_hz;
        let pipeline = PreprocessPipeline::new(pcfg)?;
        let unit_strides = spec.conv_stride == 1 && spec.pool_stride == 1;
        let streaming = unit_strides.then(|| {
            (0..spec.branch_count()).map(|b| StreamingBranch::new(net, b)).collect::<Vec<_>>()
        });
        Ok(Self {
            net,
            fifo: VirtualHiddenFifo::new(net, cfg.fifo_depth()),
            policy: StimulationPolicy::new(&cfg),
            cfg,
            group_delay: pipeline.group_delay_samples(),
            sample_rate_hz: spec.sample_rate_hz,
            pipeline,
            raw_count: 0,
            aligned_count: 0,
            streaming: None.or(streaming),
            window_ring: vec![VecDeque::new(); spec.branch_count()],
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Feeds one raw sample.
    pub fn push(&mut self, raw: f64) -> Result<StepOutput> {
        let (clean, envelope) = self.pipeline.step(raw);
        self.raw_count += 1;
        if self.raw_count <= self.group_delay {
            return Ok(StepOutput::default());
        }
        let spec = self.net.spec();
        let window = spec.window_samples();
        let branch_samples = [clean, envelope];

        match &mut self.streaming {
            Some(branches) => {
                for (b, br) in branches.iter_mut().enumerate() {
                    br.push_sample(self.net, b, branch_samples[b]);
                }
            }
            None => {
                for (b, ring) in self.window_ring.iter_mut().enumerate() {
                    ring.push_back(branch_samples[b]);
                    if ring.len() > window {
                        ring.pop_front();
                    }
                }
            }
        }
        self.aligned_count += 1;
        let end = self.aligned_count - 1;
        if end + 1 < window || (end + 1 - window) % self.cfg.stride_samples != 0 {
            return Ok(StepOutput::default());
        }

        let score = match &mut self.streaming {
            Some(branches) => {
                debug_assert!(branches.iter().all(|b| b.warmed()));
                let features: Vec<Vec<f64>> = branches.iter().map(|b| b.features()).collect();
                self.fifo.step_with_features(self.net, &features)
            }
            None => {
                let windows: Vec<Vec<f64>> =
                    self.window_ring.iter().map(|r| r.iter().copied().collect()).collect();
                let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
                self.fifo.step(self.net, &refs)?
            }
        };
        let now_s = end as f64 / self.sample_rate_hz;
        let event = self.policy.step(score >= self.cfg.threshold, now_s)?;
        Ok(StepOutput { score: Some((now_s, score)), event })
    }
}

/// Full run over a recording.
#[derive(Debug, Clone, Serialize)]
pub struct StreamRun {
    /// `(window_end_time_s, score)` per stride.
    pub scores: Vec<(f64, f64)>,
    pub events: Vec<StimulusEvent>,
    pub samples_processed: usize,
    pub elapsed_s: f64,
    pub samples_per_second: f64,
}

/// Runs the detector over a whole recording; deterministic, single
/// threaded.
pub fn run_stream(
    recording: &Recording,
    net: &Network,
    cfg: &DetectorConfig,
    pipeline_cfg: &PipelineConfig,
) -> Result<StreamRun> {
    let spec = net.spec();
    if recording.samples.len() < spec.window_samples() {
        return Err(Error::Parameter("recording shorter than one window".into()));
    }
    let mut detector = StreamDetector::new(net, cfg.clone(), pipeline_cfg)?;
    let mut scores = Vec::new();
    let mut events = Vec::new();
    let start = std::time::Instant::now();
    for &x in &recording.samples {
        let out = detector.push(x)?;
        if let Some(s) = out.score {
            scores.push(s);
        }
        if let Some(e) = out.event {
            events.push(e);
        }
    }
    let elapsed_s = start.elapsed().as_secs_f64();
    Ok(StreamRun {
        samples_processed: recording.samples.len(),
        samples_per_second: recording.samples.len() as f64 / elapsed_s.max(1e-12),
        elapsed_s,
        scores,
        events,
    })
}
