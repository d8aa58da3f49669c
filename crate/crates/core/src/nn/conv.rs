//! 1D convolution (valid, no padding) and max pooling with backward passes.
//!
//! Tensors are flat `Vec<f64>` in channel-major layout: element `(c, i)` of
//! a `channels x len` activation lives at `c * len + i`.

use rand::Rng;

use crate::error::{Error, Result};

/// Output length of a valid convolution/pooling window scan.
pub fn scan_output_len(input_len: usize, kernel: usize, stride: usize, dilation: usize) -> Option<usize> {
    let span = (kernel - 1) * dilation + 1;
    if input_len < span || stride == 0 {
        return None;
    }
    Some((input_len - span) / stride + 1)
}

/// Cross-correlating 1D convolution layer with bias.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    /// `[out_channels][in_channels][kernel]`, flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (in_channels * kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = (0..out_channels * in_channels * kernel)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self { in_channels, out_channels, kernel, stride, dilation, weight, bias: vec![0.0; out_channels] }
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        scan_output_len(input_len, self.kernel, self.stride, self.dilation).ok_or_else(|| {
            Error::Shape(format!(
                "input length {input_len} too short for kernel {} stride {} dilation {}",
                self.kernel, self.stride, self.dilation
            ))
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `input` is `in_channels x input_len`; returns `out_channels x out_len`.
    pub fn forward(&self, input: &[f64], input_len: usize) -> Result<Vec<f64>> {
        if input.len() != self.in_channels * input_len {
            return Err(Error::Shape(format!(
                "conv input has {} elements, expected {} x {input_len}",
                input.len(),
                self.in_channels
            )));
        }
        let out_len = self.output_len(input_len)?;
        let mut out = vec![0.0; self.out_channels * out_len];
        for oc in 0..self.out_channels {
            let out_row = &mut out[oc * out_len..(oc + 1) * out_len];
            out_row.fill(self.bias[oc]);
            for ic in 0..self.in_channels {
                let in_row = &input[ic * input_len..(ic + 1) * input_len];
                let w_row = &self.weight[(oc * self.in_channels + ic) * self.kernel..][..self.kernel];
                if self.stride == 1 {
                    for (kk, &w) in w_row.iter().enumerate() {
                        let shifted = &in_row[kk * self.dilation..kk * self.dilation + out_len];
                        for (o, &x) in out_row.iter_mut().zip(shifted) {
                            *o += w * x;
                        }
                    }
                } else {
                    for (kk, &w) in w_row.iter().enumerate() {
                        let base = kk * self.dilation;
                        for (p, o) in out_row.iter_mut().enumerate() {
                            *o += w * in_row[base + p * self.stride];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates weight/bias gradients and the input gradient.
    pub fn backward(
        &self,
        input: &[f64],
        input_len: usize,
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        d_input: &mut [f64],
    ) {
        let out_len = d_out.len() / self.out_channels;
        for oc in 0..self.out_channels {
            let d_row = &d_out[oc * out_len..(oc + 1) * out_len];
            d_bias[oc] += d_row.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let in_row = &input[ic * input_len..(ic + 1) * input_len];
                let di_row = &mut d_input[ic * input_len..(ic + 1) * input_len];
                let w_base = (oc * self.in_channels + ic) * self.kernel;
                for kk in 0..self.kernel {
                    let base = kk * self.dilation;
                    let w = self.weight[w_base + kk];
                    let mut dw = 0.0;
                    if self.stride == 1 {
                        let in_shift = &in_row[base..base + out_len];
                        let di_shift = &mut di_row[base..base + out_len];
                        for ((&d, &x), di) in d_row.iter().zip(in_shift).zip(di_shift) {
                            dw += d * x;
                            *di += w * d;
                        }
                    } else {
                        for (p, &d) in d_row.iter().enumerate() {
                            let idx = base + p * self.stride;
                            dw += d * in_row[idx];
                            di_row[idx] += w * d;
                        }
                    }
                    d_weight[w_base + kk] += dw;
                }
            }
        }
    }
}

/// Max pooling; `kernel == 1` is the identity.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl MaxPool1d {
    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        scan_output_len(input_len, self.kernel, self.stride, self.dilation).ok_or_else(|| {
            Error::Shape(format!("input length {input_len} too short for pool kernel {}", self.kernel))
        })
    }

    /// Returns pooled values and the argmax source index per output element.
    pub fn forward(&self, input: &[f64], input_len: usize, channels: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let out_len = self.output_len(input_len)?;
        if self.kernel == 1 && self.stride == 1 {
            return Ok((input.to_vec(), (0..input.len()).collect()));
        }
        let mut out = vec![0.0; channels * out_len];
        let mut argmax = vec![0usize; channels * out_len];
        for c in 0..channels {
            let in_row = &input[c * input_len..(c + 1) * input_len];
            for p in 0..out_len {
                let mut best_idx = p * self.stride;
                let mut best = in_row[best_idx];
                for kk in 1..self.kernel {
                    let idx = p * self.stride + kk * self.dilation;
                    if in_row[idx] > best {
                        best = in_row[idx];
                        best_idx = idx;
                    }
                }
                out[c * out_len + p] = best;
                argmax[c * out_len + p] = c * input_len + best_idx;
            }
        }
        Ok((out, argmax))
    }

    pub fn backward(&self, d_out: &[f64], argmax: &[usize], d_input: &mut [f64]) {
        for (&d, &src) in d_out.iter().zip(argmax) {
            d_input[src] += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_crops_nothing_but_edges() {
        let mut conv = Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            dilation: 1,
            weight: vec![0.0, 1.0, 0.0],
            bias: vec![0.0],
        };
        let input = [1.0, 2.0, 3.0, 4.0, 5.0];
        let out = conv.forward(&input, 5).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 4.0]);
        conv.bias[0] = 1.0;
        let out = conv.forward(&input, 5).unwrap();
        assert_eq!(out, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn hand_computed_sum_kernel() {
        let conv = Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 2,
            stride: 1,
            dilation: 1,
            weight: vec![1.0, 1.0],
            bias: vec![1.0],
        };
        let out = conv.forward(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(out, vec![4.0, 6.0, 8.0]);
    }

    #[test]
    fn output_shape_31_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv1d::new(1, 31, 7, 1, 1, &mut rng);
        let input: Vec<f64> = (0..54).map(|i| (i as f64).sin()).collect();
        let out = conv.forward(&input, 54).unwrap();
        assert_eq!(out.len(), 31 * 48);
    }

    #[test]
    fn too_short_input_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv1d::new(1, 4, 7, 1, 1, &mut rng);
        assert!(conv.forward(&[0.0; 6], 6).is_err());
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let (in_ch, out_ch, k, len) = (2, 3, 3, 12);
            let mut conv = Conv1d::new(in_ch, out_ch, k, 1, 1, &mut rng);
            for b in conv.bias.iter_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
            let input: Vec<f64> = (0..in_ch * len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Scalar objective: weighted sum of outputs.
            let coeffs: Vec<f64> =
                (0..out_ch * conv.output_len(len).unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let objective = |c: &Conv1d, x: &[f64]| -> f64 {
                c.forward(x, len).unwrap().iter().zip(&coeffs).map(|(o, w)| o * w).sum()
            };

            let mut dw = vec![0.0; conv.weight.len()];
            let mut db = vec![0.0; conv.bias.len()];
            let mut dx = vec![0.0; input.len()];
            conv.backward(&input, len, &coeffs, &mut dw, &mut db, &mut dx);

            let h = 1e-4;
            let check = |analytic: f64, numeric: f64| {
                let denom = analytic.abs().max(numeric.abs()).max(1e-2);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "trial {trial}: analytic {analytic} vs numeric {numeric}"
                );
            };
            for i in 0..conv.weight.len() {
                let orig = conv.weight[i];
                conv.weight[i] = orig + h;
                let up = objective(&conv, &input);
                conv.weight[i] = orig - h;
                let dn = objective(&conv, &input);
                conv.weight[i] = orig;
                check(dw[i], (up - dn) / (2.0 * h));
            }
            for i in 0..input.len() {
                let mut x = input.clone();
                x[i] += h;
                let up = objective(&conv, &x);
                x[i] -= 2.0 * h;
                let dn = objective(&conv, &x);
                check(dx[i], (up - dn) / (2.0 * h));
            }
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let pool = MaxPool1d { kernel: 2, stride: 2, dilation: 1 };
        let input = [1.0, 5.0, 2.0, 0.5];
        let (out, argmax) = pool.forward(&input, 4, 1).unwrap();
        assert_eq!(out, vec![5.0, 2.0]);
        let mut d_input = vec![0.0; 4];
        pool.backward(&[1.0, 2.0], &argmax, &mut d_input);
        assert_eq!(d_input, vec![0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn unit_pool_is_identity() {
        let pool = MaxPool1d { kernel: 1, stride: 1, dilation: 1 };
        let input = [3.0, -1.0, 2.0];
        let (out, _) = pool.forward(&input, 3, 1).unwrap();
        assert_eq!(out, input.to_vec());
    }
}
