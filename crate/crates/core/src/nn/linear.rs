//! Fully connected layer.

use rand::Rng;

/// `y = W x + b` with `W: [out][in]` flattened row-major.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let weight = (0..in_features * out_features).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { in_features, out_features, weight, bias: vec![0.0; out_features] }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_features);
        for (o, (row, b)) in
            out.iter_mut().zip(self.weight.chunks_exact(self.in_features).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn backward(
        &self,
        x: &[f64],
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        d_x: &mut [f64],
    ) {
        for (o, &d) in d_out.iter().enumerate() {
            d_bias[o] += d;
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let d_row = &mut d_weight[o * self.in_features..(o + 1) * self.in_features];
            for ((dw, &xi), (&w, dxi)) in
                d_row.iter_mut().zip(x).zip(row.iter().zip(d_x.iter_mut()))
            {
                *dw += d * xi;
                *dxi += d * w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_arithmetic() {
        let dense = Dense { in_features: 2, out_features: 2, weight: vec![1.0, 2.0, -1.0, 0.5], bias: vec![0.1, -0.1] };
        let mut out = [0.0; 2];
        dense.forward(&[3.0, 4.0], &mut out);
        assert_eq!(out, [11.1, -1.1]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut dense = Dense::new(5, 3, &mut rng);
        for b in dense.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let objective = |d: &Dense, x: &[f64]| -> f64 {
            let mut out = vec![0.0; 3];
            d.forward(x, &mut out);
            out.iter().zip(&coeffs).map(|(o, c)| o * c).sum()
        };
        let mut dw = vec![0.0; dense.weight.len()];
        let mut db = vec![0.0; 3];
        let mut dx = vec![0.0; 5];
        dense.backward(&x, &coeffs, &mut dw, &mut db, &mut dx);
        let h = 1e-4;
        for i in 0..dense.weight.len() {
            let orig = dense.weight[i];
            dense.weight[i] = orig + h;
            let up = objective(&dense, &x);
            dense.weight[i] = orig - h;
            let dn = objective(&dense, &x);
            dense.weight[i] = orig;
            let numeric = (up - dn) / (2.0 * h);
            assert!((dw[i] - numeric).abs() < 1e-6);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let up = objective(&dense, &xp);
            xp[i] -= 2.0 * h;
            let dn = objective(&dense, &xp);
            let numeric = (up - dn) / (2.0 * h);
            assert!((dx[i] - numeric).abs() < 1e-6);
        }
    }
}
