//! Gated recurrent unit cell with backpropagation through time.
//!
//! Gate equations (single bias per gate, candidate bias inside the reset
//! product):
//!
//! ```text
//! z  = sigmoid(Wz x + Uz h + bz)
//! r  = sigmoid(Wr x + Ur h + br)
//! n  = tanh(Wn x + r .* (Un h + bn))
//! h' = (1 - z) .* n + z .* h
//! ```

use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights are stored gate-major in z, r, n order: `w_input` is
/// `[3 * hidden][input]`, `u_hidden` is `[3 * hidden][hidden]`, `bias` is
/// `[3 * hidden]`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: Vec<f64>,
    pub u_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediates saved by [`GruCell::step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    /// `Un h + bn`, the hidden half of the candidate pre-activation.
    pub c: Vec<f64>,
}

impl GruCell {
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let wb = 1.0 / (input_size as f64).sqrt();
        let ub = 1.0 / (hidden_size as f64).sqrt();
        Self {
            input_size,
            hidden_size,
            w_input: (0..3 * hidden_size * input_size).map(|_| rng.gen_range(-wb..wb)).collect(),
            u_hidden: (0..3 * hidden_size * hidden_size).map(|_| rng.gen_range(-ub..ub)).collect(),
            bias: vec![0.0; 3 * hidden_size],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w_input.len() + self.u_hidden.len() + self.bias.len()
    }

    fn gates(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let hs = self.hidden_size;
        let mut pre = vec![0.0; 3 * hs];
        for (g, p) in pre.iter_mut().enumerate() {
            let w_row = &self.w_input[g * self.input_size..(g + 1) * self.input_size];
            let u_row = &self.u_hidden[g * hs..(g + 1) * hs];
            *p = self.bias[g]
                + w_row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                + u_row.iter().zip(h).map(|(u, v)| u * v).sum::<f64>();
        }
        let z: Vec<f64> = pre[..hs].iter().map(|&a| sigmoid(a)).collect();
        let r: Vec<f64> = pre[hs..2 * hs].iter().map(|&a| sigmoid(a)).collect();
        // For the candidate, the hidden contribution plus bias is gated by
        // r, so recompute its pieces separately.
        let mut c = vec![0.0; hs];
        let mut wx_n = vec![0.0; hs];
        for j in 0..hs {
            let g = 2 * hs + j;
            let w_row = &self.w_input[g * self.input_size..(g + 1) * self.input_size];
            let u_row = &self.u_hidden[g * hs..(g + 1) * hs];
            wx_n[j] = w_row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            c[j] = self.bias[g] + u_row.iter().zip(h).map(|(u, v)| u * v).sum::<f64>();
        }
        let n: Vec<f64> = (0..hs).map(|j| (wx_n[j] + r[j] * c[j]).tanh()).collect();
        (z, r, n, c)
    }

    /// One step with cached intermediates for BPTT.
    pub fn step(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruStepCache) {
        let (z, r, n, c) = self.gates(x, h);
        let h_new: Vec<f64> =
            (0..self.hidden_size).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect();
        (h_new, GruStepCache { x: x.to_vec(), h_prev: h.to_vec(), z, r, n, c })
    }

    /// One step without caching, for inference.
    pub fn step_infer(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let (z, _, n, _) = self.gates(x, h);
        (0..self.hidden_size).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect()
    }

    /// Backward through one step. Accumulates parameter gradients and adds
    /// into `d_x`; returns the gradient w.r.t. the previous hidden state.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        d_h_new: &[f64],
        cache: &GruStepCache,
        d_w_input: &mut [f64],
        d_u_hidden: &mut [f64],
        d_bias: &mut [f64],
        d_x: &mut [f64],
    ) -> Vec<f64> {
        let hs = self.hidden_size;
        let mut d_h_prev = vec![0.0; hs];
        // Pre-activation gradients for z, r, n.
        let mut d_pre = vec![0.0; 3 * hs];
        for j in 0..hs {
            let dz = d_h_new[j] * (cache.h_prev[j] - cache.n[j]);
            let dn = d_h_new[j] * (1.0 - cache.z[j]);
            d_h_prev[j] += d_h_new[j] * cache.z[j];
            let da_n = dn * (1.0 - cache.n[j] * cache.n[j]);
            let dr = da_n * cache.c[j];
            let da_r = dr * cache.r[j] * (1.0 - cache.r[j]);
            let da_z = dz * cache.z[j] * (1.0 - cache.z[j]);
            d_pre[j] = da_z;
            d_pre[hs + j] = da_r;
            d_pre[2 * hs + j] = da_n;
        }
        for j in 0..hs {
            // z and r rows: plain pre-activations over x and h.
            for (gate, row) in [(j, d_pre[j]), (hs + j, d_pre[hs + j])] {
                let w_row = &self.w_input[gate * self.input_size..(gate + 1) * self.input_size];
                let u_row = &self.u_hidden[gate * hs..(gate + 1) * hs];
                let dw_row = &mut d_w_input[gate * self.input_size..(gate + 1) * self.input_size];
                for ((dw, &xv), (&w, dx)) in
                    dw_row.iter_mut().zip(&cache.x).zip(w_row.iter().zip(d_x.iter_mut()))
                {
                    *dw += row * xv;
                    *dx += row * w;
                }
                let du_row = &mut d_u_hidden[gate * hs..(gate + 1) * hs];
                for ((du, &hv), (&u, dh)) in
                    du_row.iter_mut().zip(&cache.h_prev).zip(u_row.iter().zip(d_h_prev.iter_mut()))
                {
                    *du += row * hv;
                    *dh += row * u;
                }
                d_bias[gate] += row;
            }
            // Candidate row: x part direct, hidden part through r * c.
            let gate = 2 * hs + j;
            let da_n = d_pre[gate];
            let dc = da_n * cache.r[j];
            let w_row = &self.w_input[gate * self.input_size..(gate + 1) * self.input_size];
            let dw_row = &mut d_w_input[gate * self.input_size..(gate + 1) * self.input_size];
            for ((dw, &xv), (&w, dx)) in
                dw_row.iter_mut().zip(&cache.x).zip(w_row.iter().zip(d_x.iter_mut()))
            {
                *dw += da_n * xv;
                *dx += da_n * w;
            }
            let u_row = &self.u_hidden[gate * hs..(gate + 1) * hs];
            let du_row = &mut d_u_hidden[gate * hs..(gate + 1) * hs];
            for ((du, &hv), (&u, dh)) in
                du_row.iter_mut().zip(&cache.h_prev).zip(u_row.iter().zip(d_h_prev.iter_mut()))
            {
                *du += dc * hv;
                *dh += dc * u;
            }
            d_bias[gate] += dc;
        }
        d_h_prev
    }
}
