//! Binary cross entropy and mean squared error, with gradients.

const CLAMP: f64 = 1e-12;

/// BCE of a prediction in (0, 1) against a 0/1 target.
pub fn bce(prediction: f64, target: f64) -> f64 {
    let p = prediction.clamp(CLAMP, 1.0 - CLAMP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// d BCE / d prediction.
pub fn bce_grad(prediction: f64, target: f64) -> f64 {
    let p = prediction.clamp(CLAMP, 1.0 - CLAMP);
    (p - target) / (p * (1.0 - p))
}

pub fn mse(prediction: f64, target: f64) -> f64 {
    (prediction - target) * (prediction - target)
}

pub fn mse_grad(prediction: f64, target: f64) -> f64 {
    2.0 * (prediction - target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_of_half_is_ln_two() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        assert!(bce(1.0, 1.0) < 1e-10);
        assert!(mse(0.3, 0.3) == 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-4;
        for _ in 0..100 {
            let p = rng.gen_range(0.05..0.95);
            let t = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let numeric = (bce(p + h, t) - bce(p - h, t)) / (2.0 * h);
            let analytic = bce_grad(p, t);
            assert!((numeric - analytic).abs() / numeric.abs().max(1.0) < 1e-4);

            let t2 = rng.gen_range(0.0..1.0);
            let numeric = (mse(p + h, t2) - mse(p - h, t2)) / (2.0 * h);
            assert!((numeric - mse_grad(p, t2)).abs() < 1e-6);
        }
    }
}
