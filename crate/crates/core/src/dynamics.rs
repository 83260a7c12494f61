//! Reverse-time probability-flow ODE of a variance-preserving diffusion whose target is the
//! symmetric two-Gaussian mixture `½N(1, σ²) + ½N(−1, σ²)`, and the instability of its fixed
//! point at `x = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpMixtureSpec {
    pub sigma: f64,
    pub beta: f64,
    /// Weight of the `+1` mode.
    #[serde(default = "half")]
    pub weight: f64,
}

fn half() -> f64 {
    0.5
}

impl VpMixtureSpec {
    pub fn new(sigma: f64, beta: f64) -> Result<Self> {
        let s = Self { sigma, beta, weight: 0.5 };
        s.validate()?;
        Ok(s)
    }

    /// Same process with an asymmetric mixture; `weight = 1` leaves a single Gaussian.
    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        self.weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta = {} must be positive", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::invalid(format!("mode weight {} must lie in [0, 1]", self.weight)));
        }
        Ok(())
    }

    /// Mode location `μ(t)` and per-mode variance `σ₁²(t)` after forward noising to time `t`.
    pub fn noised_density_params(&self, t: f64) -> (f64, f64) {
        let decay = (-self.beta * t).exp();
        (decay.sqrt(), decay * self.sigma * self.sigma + (1.0 - decay))
    }

    /// Log-weights and offsets of the two mode terms at `x`.
    fn modes(&self, x: f64, t: f64) -> ([f64; 2], [f64; 2], f64) {
        let (mu, var) = self.noised_density_params(t);
        let d = [x - mu, x + mu];
        let lw = [self.weight.ln(), (1.0 - self.weight).ln()];
        ([lw[0] - d[0] * d[0] / (2.0 * var), lw[1] - d[1] * d[1] / (2.0 * var)], d, var)
    }

    pub fn log_density(&self, x: f64, t: f64) -> f64 {
        let (a, _, var) = self.modes(x, t);
        let m = a[0].max(a[1]);
        m + ((a[0] - m).exp() + (a[1] - m).exp()).ln() - 0.5 * (std::f64::consts::TAU * var).ln()
    }

    /// `d/dx log p_t(x)`.
    pub fn score(&self, x: f64, t: f64) -> f64 {
        let (a, d, var) = self.modes(x, t);
        let m = a[0].max(a[1]);
        let r = [(a[0] - m).exp(), (a[1] - m).exp()];
        -(r[0] * d[0] + r[1] * d[1]) / ((r[0] + r[1]) * var)
    }

    /// `(β/2) x + (β/2) score`: velocity of the probability-flow ODE in reverse time.
    pub fn reverse_velocity(&self, x: f64, t: f64) -> f64 {
        0.5 * self.beta * (x + self.score(x, t))
    }

    /// `v'(0) = (β/2)(1 + (e^{−βt} − σ₁²)/σ₁⁴)`.
    pub fn lyapunov_closed(&self, t: f64) -> f64 {
        let (mu, var) = self.noised_density_params(t);
        0.5 * self.beta * (1.0 + (mu * mu - var) / (var * var))
    }

    /// Central difference `(v(δ) − v(−δ)) / 2δ`.
    pub fn lyapunov_numeric(&self, t: f64, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::invalid(format!("delta = {delta} must be positive")));
        }
        Ok((self.reverse_velocity(delta, t) - self.reverse_velocity(-delta, t)) / (2.0 * delta))
    }
}

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub x0: f64,
    pub delta: f64,
    /// Start time; integration runs backward to `t_end`.
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    /// Abort once `|x|` exceeds this.
    pub window: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            delta: 1e-6,
            t_start: 0.002,
            t_end: 0.0,
            steps: 1000,
            window: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    /// Forward time at each recorded state, decreasing.
    pub s: Vec<f64>,
    pub x_plus: Vec<f64>,
    pub x_minus: Vec<f64>,
    /// `ln(|Δx(t_end)| / 2δ) / (t_start − t_end)`.
    pub rate: f64,
}

impl TrajectoryPair {
    /// CSV `s,x_plus,x_minus`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("s,x_plus,x_minus\n");
        for k in 0..self.s.len() {
            out.push_str(&format!("{},{},{}\n", fmt_f64(self.s[k]), fmt_f64(self.x_plus[k]), fmt_f64(self.x_minus[k])));
        }
        write_text(path, &out)
    }
}

/// Smallest `σ` accepted by [`trajectory_divergence`].
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Integrates `x0 ± δ` through the reverse ODE from `t_start` down to `t_end` with RK4.
pub fn trajectory_divergence(spec: &VpMixtureSpec, cfg: &TrajectoryConfig) -> Result<TrajectoryPair> {
    spec.validate()?;
    if spec.sigma < SIGMA_FLOOR {
        return Err(Error::invalid(format!("sigma = {} is below the trajectory floor {SIGMA_FLOOR}", spec.sigma)));
    }
    trajectory_divergence_with(|x, t| spec.reverse_velocity(x, t), cfg)
}

/// [`trajectory_divergence`] for an arbitrary velocity field `v(x, t)`.
pub fn trajectory_divergence_with(v: impl Fn(f64, f64) -> f64, cfg: &TrajectoryConfig) -> Result<TrajectoryPair> {
    if !(cfg.delta > 0.0) || cfg.steps == 0 || !(cfg.t_start > cfg.t_end) || cfg.t_end < 0.0 || !(cfg.window > 0.0) {
        return Err(Error::invalid("trajectory needs delta > 0, steps > 0, t_start > t_end >= 0, window > 0"));
    }
    let h = (cfg.t_start - cfg.t_end) / cfg.steps as f64;
    // Reverse time runs forward as t decreases: dx/dτ = v(x, t_start − τ).
    let step = |x: f64, t: f64| {
        let k1 = v(x, t);
        let k2 = v(x + 0.5 * h * k1, t - 0.5 * h);
        let k3 = v(x + 0.5 * h * k2, t - 0.5 * h);
        let k4 = v(x + h * k3, t - h);
        x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut pair = TrajectoryPair {
        s: vec![cfg.t_start],
        x_plus: vec![cfg.x0 + cfg.delta],
        x_minus: vec![cfg.x0 - cfg.delta],
        rate: f64::NAN,
    };
    let (mut xp, mut xm) = (cfg.x0 + cfg.delta, cfg.x0 - cfg.delta);
    for k in 0..cfg.steps {
        let t = cfg.t_start - k as f64 * h;
        xp = step(xp, t);
        xm = step(xm, t);
        let s = if k + 1 == cfg.steps { cfg.t_end } else { t - h };
        if !(xp.abs() <= cfg.window && xm.abs() <= cfg.window) {
            return Err(Error::TrajectoryEscaped { window: cfg.window, time: s });
        }
        pair.s.push(s);
        pair.x_plus.push(xp);
        pair.x_minus.push(xm);
    }
    pair.rate = ((xp - xm).abs() / (2.0 * cfg.delta)).ln() / (cfg.t_start - cfg.t_end);
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub beta: f64,
    pub t: f64,
    pub lambda_closed: f64,
    pub lambda_numeric: f64,
}

/// Closed-form and finite-difference exponents for each `σ`.
pub fn lyapunov_sweep(sigmas: &[f64], beta: f64, t: f64, delta: f64) -> Result<Vec<SweepRow>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let spec = VpMixtureSpec::new(sigma, beta)?;
            Ok(SweepRow {
                sigma,
                beta,
                t,
                lambda_closed: spec.lyapunov_closed(t),
                lambda_numeric: spec.lyapunov_numeric(t, delta)?,
            })
        })
        .collect()
}

/// CSV `sigma,beta,t,lambda_closed,lambda_numeric`.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("sigma,beta,t,lambda_closed,lambda_numeric\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.sigma),
            fmt_f64(r.beta),
            fmt_f64(r.t),
            fmt_f64(r.lambda_closed),
            fmt_f64(r.lambda_numeric)
        ));
    }
    write_text(path, &out)
}
