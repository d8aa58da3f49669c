//! Online standardization and exponential moving averages.

/// Exponential moving average, `v <- v + alpha * (x - v)`, lazily
/// initialized to the first sample.
#[derive(Debug, Clone)]
pub struct Ema {
    alpha: f64,
    value: f64,
    initialized: bool,
}

impl Ema {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: 0.0, initialized: false }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        if !self.initialized {
            self.value = x;
            self.initialized = true;
        } else {
            self.value += self.alpha * (x - self.value);
        }
        self.value
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// On-the-fly standardization by exponential estimates of mean and
/// standard deviation.
///
/// Per sample `s`:
///
/// ```text
/// delta  = s - mu
/// mu    += alpha_mu * delta
/// sigma2 = (1 - alpha_sigma) * (sigma2 + alpha_sigma * delta^2)
/// out    = (s - mu) / (sqrt(sigma2) + epsilon)
/// ```
///
/// The mean tracker doubles as a high-pass: with `alpha_mu = 0.1` at
/// 250 Hz it attenuates content below a few Hz.
#[derive(Debug, Clone)]
pub struct OnlineStandardizer {
    alpha_mu: f64,
    alpha_sigma: f64,
    epsilon: f64,
    mu: f64,
    sigma2: f64,
    initialized: bool,
}

impl OnlineStandardizer {
    /// Default startup: mean seeded with the first sample, variance 1.
    pub fn new(alpha_mu: f64, alpha_sigma: f64, epsilon: f64) -> Self {
        Self { alpha_mu, alpha_sigma, epsilon, mu: 0.0, sigma2: 1.0, initialized: false }
    }

    /// Explicit initial state, mainly for tests of the update equations.
    pub fn with_state(alpha_mu: f64, alpha_sigma: f64, epsilon: f64, mu0: f64, sigma2_0: f64) -> Self {
        Self { alpha_mu, alpha_sigma, epsilon, mu: mu0, sigma2: sigma2_0, initialized: true }
    }

    pub fn step(&mut self, s: f64) -> f64 {
        if !self.initialized {
            self.mu = s;
            self.initialized = true;
        }
        let delta = s - self.mu;
        self.mu += self.alpha_mu * delta;
        self.sigma2 = (1.0 - self.alpha_sigma) * (self.sigma2 + self.alpha_sigma * delta * delta);
        (s - self.mu) / (self.sigma2.sqrt() + self.epsilon)
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.sigma2
    }
}
