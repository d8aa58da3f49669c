//! Minimal neural engine for the spindle detector: CNN front end, GRU
//! memory, dense head, with manual backprop sized for truncated BPTT.
//!
//! The engine computes in f64 end to end; weight files store f32 (see
//! [`io`]). A network is one or two identical branches (clean signal, or
//! clean + envelope), each a stack of conv/ReLU/pool layers whose final
//! feature map is flattened into a GRU stack; the last hidden states of
//! all branches feed one dense output unit.

pub mod adamw;
pub mod attribution;
pub mod conv;
pub mod gru;
pub mod io;
pub mod linear;
pub mod loss;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use adamw::AdamW;
pub use attribution::integrated_gradients;
pub use conv::{Conv1d, MaxPool1d};
pub use gru::{GruCell, GruStepCache};
pub use io::{load_weights, load_weights_expecting, save_weights};
pub use linear::Dense;
pub use train::{train, EpochStats, TrainConfig, TrainHistory};

/// Which preprocessed signals the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputMode {
    Clean,
    CleanEnvelope,
}

/// Classifier (sigmoid output, BCE) or regressor (linear output, MSE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputMode {
    Classifier,
    Regressor,
}

/// Architecture hyperparameters. Defaults follow the final single-input
/// detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub sample_rate_hz: f64,
    pub window_size_s: f64,
    pub dilation_s: f64,
    pub cnn_layers: usize,
    pub cnn_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_dilation: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub pool_dilation: usize,
    pub rnn_layers: usize,
    pub rnn_hidden: usize,
    pub inputs: InputMode,
    pub mode: OutputMode,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 250.0,
            window_size_s: 0.216,
            dilation_s: 0.168,
            cnn_layers: 3,
            cnn_channels: 31,
            conv_kernel: 7,
            conv_stride: 1,
            conv_dilation: 1,
            pool_kernel: 1,
            pool_stride: 1,
            pool_dilation: 1,
            rnn_layers: 1,
            rnn_hidden: 7,
            inputs: InputMode::Clean,
            mode: OutputMode::Classifier,
        }
    }
}

impl NetworkSpec {
    pub fn window_samples(&self) -> usize {
        (self.window_size_s * self.sample_rate_hz).round() as usize
    }

    pub fn dilation_samples(&self) -> usize {
        (self.dilation_s * self.sample_rate_hz).round() as usize
    }

    pub fn branch_count(&self) -> usize {
        match self.inputs {
            InputMode::Clean => 1,
            InputMode::CleanEnvelope => 2,
        }
    }

    /// Per-layer `(channels, len)` through one CNN branch.
    pub fn shape_plan(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let mut dims = Vec::with_capacity(self.cnn_layers);
        let mut len = self.window_samples();
        for layer in 0..self.cnn_layers {
            len = conv::scan_output_len(len, self.conv_kernel, self.conv_stride, self.conv_dilation)
                .ok_or_else(|| {
                    Error::Shape(format!("conv layer {layer} underflows: input length {len}"))
                })?;
            len = conv::scan_output_len(len, self.pool_kernel, self.pool_stride, self.pool_dilation)
                .ok_or_else(|| {
                    Error::Shape(format!("pool layer {layer} underflows: input length {len}"))
                })?;
            dims.push((self.cnn_channels, len));
        }
        Ok(dims)
    }

    pub fn flattened_features(&self) -> Result<usize> {
        let dims = self.shape_plan()?;
        let (ch, len) = *dims.last().expect("cnn_layers >= 1");
        Ok(ch * len)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.cnn_layers,
            self.cnn_channels,
            self.conv_kernel,
            self.conv_stride,
            self.conv_dilation,
            self.pool_kernel,
            self.pool_stride,
            self.pool_dilation,
            self.rnn_layers,
            self.rnn_hidden,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::Parameter("all architecture integers must be positive".into()));
        }
        if self.window_size_s <= 0.0 || self.dilation_s <= 0.0 || self.sample_rate_hz <= 0.0 {
            return Err(Error::Parameter("window, dilation and sample rate must be positive".into()));
        }
        if self.window_samples() < (self.conv_kernel - 1) * self.conv_dilation + 1 {
            return Err(Error::Parameter(format!(
                "window of {} samples is shorter than the first kernel span",
                self.window_samples()
            )));
        }
        Ok(())
    }
}

/// Exact trainable scalar count for a spec.
pub fn count_parameters(spec: &NetworkSpec) -> Result<u64> {
    let flattened = spec.flattened_features()? as u64;
    let ch = spec.cnn_channels as u64;
    let k = spec.conv_kernel as u64;
    let h = spec.rnn_hidden as u64;
    let mut per_branch = 0u64;
    let mut in_ch = 1u64;
    for _ in 0..spec.cnn_layers {
        per_branch += ch * (in_ch * k) + ch;
        in_ch = ch;
    }
    let mut gru_in = flattened;
    for _ in 0..spec.rnn_layers {
        per_branch += 3 * (gru_in * h) + 3 * (h * h) + 3 * h;
        gru_in = h;
    }
    let branches = spec.branch_count() as u64;
    let dense_in = branches * h;
    Ok(branches * per_branch + (dense_in + 1))
}

#[derive(Debug, Clone)]
struct Branch {
    convs: Vec<Conv1d>,
    grus: Vec<GruCell>,
}

/// Recurrent state: one vector per `(branch, rnn layer)`, branch-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub Vec<Vec<f64>>);

impl HiddenState {
    fn zeros(spec: &NetworkSpec) -> Self {
        HiddenState(vec![
            vec![0.0; spec.rnn_hidden];
            spec.branch_count() * spec.rnn_layers
        ])
    }
}

/// Tape for one conv layer of one branch.
#[derive(Debug, Clone)]
struct ConvLayerTape {
    input: Vec<f64>,
    input_len: usize,
    relu_out: Vec<f64>,
    pool_argmax: Vec<usize>,
    drop_mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct BranchTape {
    conv_layers: Vec<ConvLayerTape>,
    gru_caches: Vec<GruStepCache>,
    /// Mask applied to each GRU layer's output on the feed-up path only.
    gru_drop_masks: Vec<Option<Vec<f64>>>,
}

/// Everything needed to backprop one forward step.
#[derive(Debug, Clone)]
pub struct StepTape {
    branches: Vec<BranchTape>,
    dense_input: Vec<f64>,
    pre_output: f64,
    output: f64,
}

impl StepTape {
    pub fn output(&self) -> f64 {
        self.output
    }

    pub fn pre_output(&self) -> f64 {
        self.pre_output
    }
}

/// Gradient tensors aligned with [`Network::param_tensors`] order.
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self { tensors: net.param_shapes().iter().map(|&n| vec![0.0; n]).collect() }
    }

    pub fn add(&mut self, other: &NetworkGrads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.iter_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// A constructed network: weights plus its spec.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    branches: Vec<Branch>,
    output: Dense,
}

impl Network {
    /// Seeded uniform fan-in initialization.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let flattened = spec.flattened_features()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches = (0..spec.branch_count())
            .map(|_| {
                let mut convs = Vec::with_capacity(spec.cnn_layers);
                let mut in_ch = 1;
                for _ in 0..spec.cnn_layers {
                    convs.push(Conv1d::new(
                        in_ch,
                        spec.cnn_channels,
                        spec.conv_kernel,
                        spec.conv_stride,
                        spec.conv_dilation,
                        &mut rng,
                    ));
                    in_ch = spec.cnn_channels;
                }
                let mut grus = Vec::with_capacity(spec.rnn_layers);
                let mut gru_in = flattened;
                for _ in 0..spec.rnn_layers {
                    grus.push(GruCell::new(gru_in, spec.rnn_hidden, &mut rng));
                    gru_in = spec.rnn_hidden;
                }
                Branch { convs, grus }
            })
            .collect();
        let output = Dense::new(spec.branch_count() * spec.rnn_hidden, 1, &mut rng);
        Ok(Self { spec: spec.clone(), branches, output })
    }

    /// All-zero weights; mainly for policy and plumbing tests.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let mut net = Self::init(spec, 0)?;
        for t in net.param_tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn zero_hidden(&self) -> HiddenState {
        HiddenState::zeros(&self.spec)
    }

    fn pool(&self) -> MaxPool1d {
        MaxPool1d {
            kernel: self.spec.pool_kernel,
            stride: self.spec.pool_stride,
            dilation: self.spec.pool_dilation,
        }
    }

    pub(crate) fn conv_layer(&self, branch: usize, layer: usize) -> &Conv1d {
        &self.branches[branch].convs[layer]
    }

    /// Parameter tensors in declaration order: per branch all conv
    /// weight/bias pairs, then all GRU (w_input, u_hidden, bias) triples,
    /// then the dense weight and bias.
    pub fn param_tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for b in &self.branches {
            for c in &b.convs {
                out.push(&c.weight);
                out.push(&c.bias);
            }
            for g in &b.grus {
                out.push(&g.w_input);
                out.push(&g.u_hidden);
                out.push(&g.bias);
            }
        }
        out.push(&self.output.weight);
        out.push(&self.output.bias);
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            for c in &mut b.convs {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            for g in &mut b.grus {
                out.push(&mut g.w_input);
                out.push(&mut g.u_hidden);
                out.push(&mut g.bias);
            }
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.param_tensors().iter().map(|t| t.len()).collect()
    }

    pub fn total_parameters(&self) -> u64 {
        self.param_tensors().iter().map(|t| t.len() as u64).sum()
    }

    fn tensor_index(&self, branch: usize, slot: BranchSlot) -> usize {
        let per_branch = self.spec.cnn_layers * 2 + self.spec.rnn_layers * 3;
        let base = branch * per_branch;
        match slot {
            BranchSlot::ConvWeight(l) => base + l * 2,
            BranchSlot::GruW(g) => base + self.spec.cnn_layers * 2 + g * 3,
        }
    }

    fn dense_weight_index(&self) -> usize {
        self.spec.branch_count() * (self.spec.cnn_layers * 2 + self.spec.rnn_layers * 3)
    }

    fn check_windows(&self, windows: &[&[f64]]) -> Result<()> {
        if windows.len() != self.spec.branch_count() {
            return Err(Error::Shape(format!(
                "expected {} input window(s), got {}",
                self.spec.branch_count(),
                windows.len()
            )));
        }
        let want = self.spec.window_samples();
        for w in windows {
            if w.len() != want {
                return Err(Error::Shape(format!(
                    "window has {} samples, expected {want}",
                    w.len()
                )));
            }
        }
        Ok(())
    }

    /// CNN feature extraction for one branch in eval mode (no dropout).
    pub(crate) fn conv_features(&self, branch: usize, window: &[f64]) -> Result<Vec<f64>> {
        let pool = self.pool();
        let mut data = window.to_vec();
        let mut len = window.len();
        for conv in &self.branches[branch].convs {
            let mut out = conv.forward(&data, len)?;
            out.iter_mut().for_each(|x| {
                if *x < 0.0 {
                    *x = 0.0;
                }
            });
            let out_len = conv.output_len(len)?;
            let (pooled, _) = pool.forward(&out, out_len, conv.out_channels)?;
            len = pool.output_len(out_len)?;
            data = pooled;
        }
        Ok(data)
    }

    /// GRU stack and dense head over precomputed branch features
    /// (eval mode). The streaming detector uses this with incrementally
    /// maintained conv features.
    pub(crate) fn head_forward(&self, features: &[Vec<f64>], hidden: &HiddenState) -> (f64, HiddenState) {
        let mut new_hidden = hidden.clone();
        let mut dense_input = Vec::with_capacity(self.spec.branch_count() * self.spec.rnn_hidden);
        for (b, branch) in self.branches.iter().enumerate() {
            let mut x = features[b].clone();
            for (g, gru) in branch.grus.iter().enumerate() {
                let slot = b * self.spec.rnn_layers + g;
                let h_new = gru.step_infer(&x, &hidden.0[slot]);
                new_hidden.0[slot] = h_new.clone();
                x = h_new;
            }
            dense_input.extend_from_slice(&x);
        }
        let mut pre = [0.0];
        self.output.forward(&dense_input, &mut pre);
        let y = match self.spec.mode {
            OutputMode::Classifier => 1.0 / (1.0 + (-pre[0]).exp()),
            OutputMode::Regressor => pre[0],
        };
        (y, new_hidden)
    }

    /// Inference step: score in (0,1) for classifiers, raw score for
    /// regressors, plus the updated hidden state.
    pub fn forward_window(&self, windows: &[&[f64]], hidden: &HiddenState) -> Result<(f64, HiddenState)> {
        self.check_windows(windows)?;
        let features: Result<Vec<Vec<f64>>> =
            (0..self.branches.len()).map(|b| self.conv_features(b, windows[b])).collect();
        Ok(self.head_forward(&features?, hidden))
    }

    /// Forward with a tape, optionally applying dropout (training mode).
    ///
    /// Dropout (inverted scaling) follows every trainable layer's hidden
    /// activation except each branch's first conv layer and the output
    /// unit; GRU outputs are masked on the feed-up path only, never on
    /// the recurrent state.
    pub fn forward_traced(
        &self,
        windows: &[&[f64]],
        hidden: &HiddenState,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(f64, HiddenState, StepTape)> {
        self.check_windows(windows)?;
        let pool = self.pool();
        let mut drop = dropout;
        let mut make_mask = |n: usize| -> Option<Vec<f64>> {
            match drop {
                Some((p, ref mut rng)) if p > 0.0 => {
                    let keep = 1.0 - p;
                    Some((0..n).map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 }).collect())
                }
                _ => None,
            }
        };

        let mut new_hidden = hidden.clone();
        let mut branch_tapes = Vec::with_capacity(self.branches.len());
        let mut dense_input = Vec::with_capacity(self.spec.branch_count() * self.spec.rnn_hidden);
        for (b, branch) in self.branches.iter().enumerate() {
            let mut conv_layers = Vec::with_capacity(branch.convs.len());
            let mut data = windows[b].to_vec();
            let mut len = windows[b].len();
            for (l, conv) in branch.convs.iter().enumerate() {
                let input = data;
                let input_len = len;
                let mut relu_out = conv.forward(&input, input_len)?;
                relu_out.iter_mut().for_each(|x| {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                });
                let conv_len = conv.output_len(input_len)?;
                let (pooled, argmax) = pool.forward(&relu_out, conv_len, conv.out_channels)?;
                len = pool.output_len(conv_len)?;
                let drop_mask = if l == 0 { None } else { make_mask(pooled.len()) };
                data = match &drop_mask {
                    Some(mask) => pooled.iter().zip(mask).map(|(x, m)| x * m).collect(),
                    None => pooled,
                };
                conv_layers.push(ConvLayerTape { input, input_len, relu_out, pool_argmax: argmax, drop_mask });
            }

            let mut gru_caches = Vec::with_capacity(branch.grus.len());
            let mut gru_drop_masks = Vec::with_capacity(branch.grus.len());
            let mut x = data;
            for (g, gru) in branch.grus.iter().enumerate() {
                let slot = b * self.spec.rnn_layers + g;
                let (h_new, cache) = gru.step(&x, &hidden.0[slot]);
                new_hidden.0[slot] = h_new.clone();
                let mask = make_mask(h_new.len());
                x = match &mask {
                    Some(m) => h_new.iter().zip(m).map(|(v, mm)| v * mm).collect(),
                    None => h_new,
                };
                gru_caches.push(cache);
                gru_drop_masks.push(mask);
            }
            dense_input.extend_from_slice(&x);
            branch_tapes.push(BranchTape { conv_layers, gru_caches, gru_drop_masks });
        }

        let mut pre = [0.0];
        self.output.forward(&dense_input, &mut pre);
        let y = match self.spec.mode {
            OutputMode::Classifier => 1.0 / (1.0 + (-pre[0]).exp()),
            OutputMode::Regressor => pre[0],
        };
        let tape = StepTape { branches: branch_tapes, dense_input, pre_output: pre[0], output: y };
        Ok((y, new_hidden, tape))
    }

    /// Converts a gradient w.r.t. the post-activation output into one
    /// w.r.t. the pre-activation.
    pub fn d_pre_from_d_output(&self, tape: &StepTape, d_output: f64) -> f64 {
        match self.spec.mode {
            OutputMode::Classifier => d_output * tape.output * (1.0 - tape.output),
            OutputMode::Regressor => d_output,
        }
    }

    /// Backward through one step. `d_pre_output` is the gradient w.r.t.
    /// the dense pre-activation; `d_hidden_in` carries gradients arriving
    /// from the following time step. Returns the gradient w.r.t. the
    /// previous hidden state; optionally accumulates per-branch window
    /// gradients.
    pub fn backward_step(
        &self,
        d_pre_output: f64,
        tape: &StepTape,
        d_hidden_in: &HiddenState,
        grads: &mut NetworkGrads,
        mut d_windows: Option<&mut Vec<Vec<f64>>>,
    ) -> HiddenState {
        let pool = self.pool();
        let dw_idx = self.dense_weight_index();
        let mut d_dense_input = vec![0.0; tape.dense_input.len()];
        {
            let (head, tail) = grads.tensors.split_at_mut(dw_idx + 1);
            self.output.backward(
                &tape.dense_input,
                &[d_pre_output],
                &mut head[dw_idx],
                &mut tail[0],
                &mut d_dense_input,
            );
        }

        let mut d_hidden_prev =
            HiddenState(vec![Vec::new(); self.spec.branch_count() * self.spec.rnn_layers]);
        let h = self.spec.rnn_hidden;
        for (b, branch) in self.branches.iter().enumerate() {
            let btape = &tape.branches[b];
            // Feed-up gradient entering the top GRU layer of this branch.
            let mut d_up: Vec<f64> = d_dense_input[b * h..(b + 1) * h].to_vec();
            let mut d_flat = vec![0.0; btape.gru_caches[0].x.len()];
            for (g, gru) in branch.grus.iter().enumerate().rev() {
                let slot = b * self.spec.rnn_layers + g;
                // Total gradient on this layer's new hidden state: the
                // masked feed-up path plus the carry from time t+1.
                let mut d_h_new = d_hidden_in.0[slot].clone();
                match &btape.gru_drop_masks[g] {
                    Some(mask) => {
                        for ((dh, du), m) in d_h_new.iter_mut().zip(&d_up).zip(mask) {
                            *dh += du * m;
                        }
                    }
                    None => {
                        for (dh, du) in d_h_new.iter_mut().zip(&d_up) {
                            *dh += du;
                        }
                    }
                }
                let wi = self.tensor_index(b, BranchSlot::GruW(g));
                let mut d_x = vec![0.0; gru.input_size];
                let (head, tail) = grads.tensors.split_at_mut(wi + 1);
                let (umid, btail) = tail.split_at_mut(1);
                let d_prev = gru.backward(
                    &d_h_new,
                    &btape.gru_caches[g],
                    &mut head[wi],
                    &mut umid[0],
                    &mut btail[0],
                    &mut d_x,
                );
                d_hidden_prev.0[slot] = d_prev;
                if g == 0 {
                    d_flat = d_x;
                } else {
                    d_up = d_x;
                }
            }

            // Back through the conv stack.
            let mut d_data = d_flat;
            for (l, conv) in branch.convs.iter().enumerate().rev() {
                let ltape = &btape.conv_layers[l];
                if let Some(mask) = &ltape.drop_mask {
                    for (d, m) in d_data.iter_mut().zip(mask) {
                        *d *= m;
                    }
                }
                let mut d_relu = vec![0.0; ltape.relu_out.len()];
                pool.backward(&d_data, &ltape.pool_argmax, &mut d_relu);
                for (d, &v) in d_relu.iter_mut().zip(&ltape.relu_out) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                let mut d_input = vec![0.0; ltape.input.len()];
                let wi = self.tensor_index(b, BranchSlot::ConvWeight(l));
                let (head, tail) = grads.tensors.split_at_mut(wi + 1);
                conv.backward(
                    &ltape.input,
                    ltape.input_len,
                    &d_relu,
                    &mut head[wi],
                    &mut tail[0],
                    &mut d_input,
                );
                d_data = d_input;
            }
            if let Some(dw) = d_windows.as_deref_mut() {
                for (acc, d) in dw[b].iter_mut().zip(&d_data) {
                    *acc += d;
                }
            }
        }
        d_hidden_prev
    }
}

#[derive(Clone, Copy)]
enum BranchSlot {
    ConvWeight(usize),
    GruW(usize),
}
