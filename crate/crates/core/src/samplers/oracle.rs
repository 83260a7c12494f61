//! Two blocks of independent ±1 spins with fields `(h1, h2)`.
//!
//! An exponential family with sufficient statistic `f(x) = (Σ_block1 s, Σ_block2 s)` and
//! `log Z(h) = (n/2) (ln 2cosh h1 + ln 2cosh h2)`, so the posterior, the Bregman divergence
//! and the Fisher metric are all available in closed form.

use rand::Rng;

use super::SamplerParams;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `ln(2 cosh h)` without overflow.
pub fn ln_2cosh(h: f64) -> f64 {
    let a = h.abs();
    a + (-2.0 * a).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleModel {
    pub n_spins: usize,
}

impl OracleModel {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins == 0 || n_spins % 2 != 0 {
            return Err(Error::invalid(format!("n_spins {n_spins} must be even and positive")));
        }
        Ok(Self { n_spins })
    }

    fn half(&self) -> f64 {
        (self.n_spins / 2) as f64
    }

    pub fn log_partition(&self, h: [f64; 2]) -> f64 {
        self.half() * (ln_2cosh(h[0]) + ln_2cosh(h[1]))
    }

    /// `∇ log Z = E[f(x)]`.
    pub fn gradient(&self, h: [f64; 2]) -> [f64; 2] {
        [self.half() * h[0].tanh(), self.half() * h[1].tanh()]
    }

    /// Diagonal of `∇² log Z`; the off-diagonal entry is zero.
    pub fn hessian_diag(&self, h: [f64; 2]) -> [f64; 2] {
        let sech2 = |x: f64| 1.0 / x.cosh().powi(2);
        [self.half() * sech2(h[0]), self.half() * sech2(h[1])]
    }

    /// `KL(p(·|from) ‖ p(·|to))`, the Bregman divergence of `log Z` at `(to, from)`.
    pub fn kl(&self, from: [f64; 2], to: [f64; 2]) -> f64 {
        let g = self.gradient(from);
        self.log_partition(to) - self.log_partition(from) - g[0] * (to[0] - from[0]) - g[1] * (to[1] - from[1])
    }
}

/// Exact sample: spin k of block b is +1 with probability `e^{h_b} / (e^{h_b} + e^{-h_b})`.
pub fn oracle_sample(params: &SamplerParams, n_spins: usize) -> Result<Vec<i8>> {
    OracleModel::new(n_spins)?;
    let [h1, h2] = params.point;
    if !h1.is_finite() || !h2.is_finite() {
        return Err(Error::invalid("oracle fields must be finite"));
    }
    let mut rng = rng_from_seed(params.seed);
    let p = [0.5 * (1.0 + h1.tanh()), 0.5 * (1.0 + h2.tanh())];
    let half = n_spins / 2;
    Ok((0..n_spins)
        .map(|k| {
            let pb = p[usize::from(k >= half)];
            if rng.random::<f64>() < pb {
                1
            } else {
                -1
            }
        })
        .collect())
}

/// Block sums `(Σ_block1 s, Σ_block2 s)`.
pub fn oracle_stats(x: &[i8]) -> [f64; 2] {
    let half = x.len() / 2;
    let s1: i64 = x[..half].iter().map(|&s| s as i64).sum();
    let s2: i64 = x[half..].iter().map(|&s| s as i64).sum();
    [s1 as f64, s2 as f64]
}
