//! The meta network: a 3-layer MLP predicting the software cost of a
//! hyperparameter set from its encoded coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{HyperSpace, MetaDataset};
use crate::nn::Dense;

#[derive(Debug, Clone, Serialize)]
pub struct MetaNetworkConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Full-batch gradient descent iterations per retrain.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for MetaNetworkConfig {
    fn default() -> Self {
        Self { hidden_size: 200, learning_rate: 0.05, weight_decay: 0.01, iterations: 100, seed: 0 }
    }
}

/// MLP of 3 fully connected layers with ReLU between them; trained with
/// SGD on MSE against the observed software costs.
#[derive(Debug, Clone)]
pub struct MetaNetwork {
    layers: [Dense; 3],
}

impl MetaNetwork {
    pub fn predict(&self, encoded: &[f64]) -> f64 {
        let mut h1 = vec![0.0; self.layers[0].out_features];
        self.layers[0].forward(encoded, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut h2 = vec![0.0; self.layers[1].out_features];
        self.layers[1].forward(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut out = [0.0];
        self.layers[2].forward(&h2, &mut out);
        out[0]
    }
}

/// Fits the software-cost regression on the encoded dataset with
/// full-batch SGD (weight decay on weights, not biases).
pub fn train_meta(dataset: &MetaDataset, space: &HyperSpace, cfg: &MetaNetworkConfig) -> MetaNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = space.dims();
    let hs = cfg.hidden_size;
    let mut net = MetaNetwork {
        layers: [Dense::new(d, hs, &mut rng), Dense::new(hs, hs, &mut rng), Dense::new(hs, 1, &mut rng)],
    };
    let samples: Vec<(Vec<f64>, f64)> = dataset
        .experiments()
        .iter()
        .map(|e| (space.encode(&e.params), e.software_cost))
        .collect();
    if samples.is_empty() {
        return net;
    }
    let n = samples.len() as f64;

    for _ in 0..cfg.iterations {
        let mut dw: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect();
        let mut db: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
        for (x, target) in &samples {
            // Forward with caches.
            let mut h1 = vec![0.0; hs];
            net.layers[0].forward(x, &mut h1);
            let a1: Vec<f64> = h1.iter().map(|&v| v.max(0.0)).collect();
            let mut h2 = vec![0.0; hs];
            net.layers[1].forward(&a1, &mut h2);
            let a2: Vec<f64> = h2.iter().map(|&v| v.max(0.0)).collect();
            let mut out = [0.0];
            net.layers[2].forward(&a2, &mut out);
            // Backward for mean squared error.
            let d_out = [2.0 * (out[0] - target) / n];
            let mut d_a2 = vec![0.0; hs];
            net.layers[2].backward(&a2, &d_out, &mut dw[2], &mut db[2], &mut d_a2);
            for (g, &pre) in d_a2.iter_mut().zip(&h2) {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut d_a1 = vec![0.0; hs];
            net.layers[1].backward(&a1, &d_a2, &mut dw[1], &mut db[1], &mut d_a1);
            for (g, &pre) in d_a1.iter_mut().zip(&h1) {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut d_x = vec![0.0; d];
            net.layers[0].backward(x, &d_a1, &mut dw[0], &mut db[0], &mut d_x);
        }
        for (l, layer) in net.layers.iter_mut().enumerate() {
            for (w, g) in layer.weight.iter_mut().zip(&dw[l]) {
                *w -= cfg.learning_rate * (g + cfg.weight_decay * *w);
            }
            for (b, g) in layer.bias.iter_mut().zip(&db[l]) {
                *b -= cfg.learning_rate * g;
            }
        }
    }
    net
}

/// Training loss of a meta network on a dataset, for diagnostics.
pub fn meta_mse(net: &MetaNetwork, dataset: &MetaDataset, space: &HyperSpace) -> f64 {
    let exps = dataset.experiments();
    if exps.is_empty() {
        return 0.0;
    }
    exps.iter()
        .map(|e| {
            let p = net.predict(&space.encode(&e.params));
            (p - e.software_cost) * (p - e.software_cost)
        })
        .sum::<f64>()
        / exps.len() as f64
}
