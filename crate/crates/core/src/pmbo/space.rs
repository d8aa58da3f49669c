//! The hyperparameter search space: architecture dimensions plus the two
//! searchable training knobs (batch size, learning rate).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{InputMode, NetworkSpec, OutputMode};

/// A candidate hyperparameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
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
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        let spec = NetworkSpec::default();
        Self {
            window_size_s: spec.window_size_s,
            dilation_s: spec.dilation_s,
            cnn_layers: spec.cnn_layers,
            cnn_channels: spec.cnn_channels,
            conv_kernel: spec.conv_kernel,
            conv_stride: spec.conv_stride,
            conv_dilation: spec.conv_dilation,
            pool_kernel: spec.pool_kernel,
            pool_stride: spec.pool_stride,
            pool_dilation: spec.pool_dilation,
            rnn_layers: spec.rnn_layers,
            rnn_hidden: spec.rnn_hidden,
            batch_size: 256,
            learning_rate: 5e-4,
        }
    }
}

impl HyperParams {
    pub fn to_spec(&self, inputs: InputMode, mode: OutputMode, sample_rate_hz: f64) -> NetworkSpec {
        NetworkSpec {
            sample_rate_hz,
            window_size_s: self.window_size_s,
            dilation_s: self.dilation_s,
            cnn_layers: self.cnn_layers,
            cnn_channels: self.cnn_channels,
            conv_kernel: self.conv_kernel,
            conv_stride: self.conv_stride,
            conv_dilation: self.conv_dilation,
            pool_kernel: self.pool_kernel,
            pool_stride: self.pool_stride,
            pool_dilation: self.pool_dilation,
            rnn_layers: self.rnn_layers,
            rnn_hidden: self.rnn_hidden,
            inputs,
            mode,
        }
    }

    /// Raw coordinate vector (learning rate on a log10 scale).
    fn to_raw(&self) -> [f64; DIMS] {
        [
            self.window_size_s,
            self.dilation_s,
            self.cnn_layers as f64,
            self.cnn_channels as f64,
            self.conv_kernel as f64,
            self.conv_stride as f64,
            self.conv_dilation as f64,
            self.pool_kernel as f64,
            self.pool_stride as f64,
            self.pool_dilation as f64,
            self.rnn_layers as f64,
            self.rnn_hidden as f64,
            self.batch_size as f64,
            self.learning_rate.log10(),
        ]
    }

    fn from_raw(raw: &[f64; DIMS]) -> Self {
        let int = |v: f64| v.round().max(1.0) as usize;
        Self {
            window_size_s: raw[0],
            dilation_s: raw[1],
            cnn_layers: int(raw[2]),
            cnn_channels: int(raw[3]),
            conv_kernel: int(raw[4]),
            conv_stride: int(raw[5]),
            conv_dilation: int(raw[6]),
            pool_kernel: int(raw[7]),
            pool_stride: int(raw[8]),
            pool_dilation: int(raw[9]),
            rnn_layers: int(raw[10]),
            rnn_hidden: int(raw[11]),
            batch_size: int(raw[12]),
            learning_rate: 10f64.powf(raw[13]),
        }
    }
}

pub const DIMS: usize = 14;

#[derive(Debug, Clone, Copy)]
struct Dim {
    lo: f64,
    hi: f64,
    integer: bool,
}

/// Box bounds for every dimension, with min-max encoding for the meta
/// network.
#[derive(Debug, Clone)]
pub struct HyperSpace {
    dims: [Dim; DIMS],
}

impl Default for HyperSpace {
    fn default() -> Self {
        let d = |lo: f64, hi: f64| Dim { lo, hi, integer: false };
        let i = |lo: f64, hi: f64| Dim { lo, hi, integer: true };
        Self {
            dims: [
                d(0.06, 0.5),  // window_size_s
                d(0.02, 0.5),  // dilation_s
                i(1.0, 5.0),   // cnn_layers
                i(2.0, 64.0),  // cnn_channels
                i(3.0, 9.0),   // conv_kernel
                i(1.0, 2.0),   // conv_stride
                i(1.0, 2.0),   // conv_dilation
                i(1.0, 3.0),   // pool_kernel
                i(1.0, 2.0),   // pool_stride
                i(1.0, 2.0),   // pool_dilation
                i(1.0, 3.0),   // rnn_layers
                i(2.0, 64.0),  // rnn_hidden
                i(32.0, 512.0), // batch_size
                d(-5.0, -2.0), // log10 learning rate
            ],
        }
    }
}

impl HyperSpace {
    pub fn dims(&self) -> usize {
        DIMS
    }

    /// Min-max normalized encoding over the declared ranges, the meta
    /// network's input.
    pub fn encode(&self, h: &HyperParams) -> Vec<f64> {
        h.to_raw()
            .iter()
            .zip(&self.dims)
            .map(|(&v, d)| ((v - d.lo) / (d.hi - d.lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> HyperParams {
        let mut raw = [0.0; DIMS];
        for (r, d) in raw.iter_mut().zip(&self.dims) {
            *r = if d.integer {
                rng.gen_range(d.lo as i64..=d.hi as i64) as f64
            } else {
                rng.gen_range(d.lo..d.hi)
            };
        }
        HyperParams::from_raw(&raw)
    }

    /// Gaussian proposal around `center` with per-dimension sigma equal
    /// to `scale` times the range; integers rounded, everything clamped.
    pub fn sample_gaussian(
        &self,
        center: &HyperParams,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> HyperParams {
        let c = center.to_raw();
        let mut raw = [0.0; DIMS];
        for ((r, d), &mu) in raw.iter_mut().zip(&self.dims).zip(&c) {
            let sigma = scale * (d.hi - d.lo);
            let normal = Normal::new(mu, sigma).expect("sigma > 0");
            let mut v: f64 = normal.sample(rng);
            if d.integer {
                v = v.round();
            }
            *r = v.clamp(d.lo, d.hi);
        }
        HyperParams::from_raw(&raw)
    }

    /// Structural validity: the spec's shape plan must go through.
    pub fn is_structurally_valid(&self, h: &HyperParams) -> bool {
        h.to_spec(InputMode::Clean, OutputMode::Classifier, 250.0).shape_plan().is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn encoding_is_unit_box() {
        let space = HyperSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let h = space.sample_uniform(&mut rng);
            let e = space.encode(&h);
            assert_eq!(e.len(), DIMS);
            assert!(e.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn default_params_are_valid_and_encode_strictly_inside() {
        let space = HyperSpace::default();
        let h = HyperParams::default();
        assert!(space.is_structurally_valid(&h));
        let e = space.encode(&h);
        assert!(e.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gaussian_proposals_respect_bounds_and_integrality() {
        let space = HyperSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center = HyperParams::default();
        for _ in 0..500 {
            let h = space.sample_gaussian(&center, 0.1, &mut rng);
            assert!(h.cnn_layers >= 1 && h.cnn_layers <= 5);
            assert!(h.conv_kernel >= 3 && h.conv_kernel <= 9);
            assert!(h.batch_size >= 32 && h.batch_size <= 512);
            assert!(h.learning_rate >= 1e-5 - 1e-12 && h.learning_rate <= 1e-2 + 1e-12);
        }
    }

    #[test]
    fn round_trip_through_spec() {
        let h = HyperParams::default();
        let spec = h.to_spec(InputMode::Clean, OutputMode::Classifier, 250.0);
        assert_eq!(spec.window_samples(), 54);
        assert_eq!(spec.rnn_hidden, 7);
    }
}
