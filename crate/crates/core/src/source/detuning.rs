//! Ornstein-Uhlenbeck drift of the emitter detuning.

use rand::Rng;
use rand_distr::StandardNormal;

/// Stationary mean-reverting Gaussian process sampled at increasing times.
#[derive(Debug, Clone)]
pub struct DetuningProcess {
    sigma: f64,
    tau: f64,
    value: f64,
    time: Option<f64>,
}

impl DetuningProcess {
    pub fn new(sigma: f64, tau: f64) -> Self {
        Self { sigma, tau, value: 0.0, time: None }
    }

    /// Value at time `t`, using the exact transition density from the last
    /// sample. Times must be non-decreasing.
    pub fn sample<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = rng.sample(StandardNormal);
        self.value = match self.time {
            None => self.sigma * z,
            Some(t_prev) => {
                let decay = (-(t - t_prev).max(0.0) / self.tau).exp();
                self.value * decay + self.sigma * (1.0 - decay * decay).sqrt() * z
            }
        };
        self.time = Some(t);
        self.value
    }

    /// Value `dt` after the last sample, drawn from the transition density
    /// without advancing the process.
    pub fn branch(&self, dt: f64, z: f64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let decay = (-dt.max(0.0) / self.tau).exp();
        self.value * decay + self.sigma * (1.0 - decay * decay).sqrt() * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha_stream;

    #[test]
    fn stationary_variance_and_autocorrelation() {
        let (sigma, tau) = (2.0, 1.0);
        let dt = tau;
        let mut p = DetuningProcess::new(sigma, tau);
        let mut rng = chacha_stream(11, 3);
        let xs: Vec<f64> = (0..200_000).map(|i| p.sample(i as f64 * dt, &mut rng)).collect();
        let n = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.03, "var {var}");
        let cov = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        let rho = cov / var;
        assert!((rho / (-1.0f64).exp() - 1.0).abs() < 0.05, "rho {rho}");
    }

    #[test]
    fn zero_sigma_is_silent() {
        let mut p = DetuningProcess::new(0.0, 1.0);
        let mut rng = chacha_stream(1, 3);
        assert_eq!(p.sample(0.0, &mut rng), 0.0);
        assert_eq!(p.sample(5.0, &mut rng), 0.0);
    }
}
