use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{integrate_derivative_field, Integrated, ScalarField};
use crate::error::{Error, Result};
use crate::posterior::FeatureTable;
use crate::potential::{Activation, Adam, Mlp};
use crate::rng::{derive_seed, rng_from_seed, stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub iterations: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub depth: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch: 256,
            learning_rate: 1e-3,
            hidden: 128,
            depth: 3,
            activation: Activation::Softplus,
            seed: 0,
        }
    }
}

/// Output of the posterior-mean-as-statistic baseline.
#[derive(Debug, Clone)]
pub struct MeanAsStat {
    /// Per-cell mean of the regressed statistic for each parameter.
    pub s_t: ScalarField,
    pub s_h: ScalarField,
    pub f: Integrated,
    /// Root mean squared regression error per parameter over all replica rows.
    pub train_rmse: [f64; 2],
    /// Features carried no information, so the statistic and `F` are trivial.
    pub degenerate: bool,
}

/// Regresses each parameter on per-replica features with the potential network machinery
/// (MSE loss, minibatch Adam), uses the per-cell mean prediction as `∂F/∂t`, and integrates.
pub fn mean_as_stat(table: &FeatureTable, cfg: &RegressionConfig) -> Result<MeanAsStat> {
    if cfg.batch == 0 || cfg.hidden == 0 || cfg.depth == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("regression needs positive batch, width, depth and learning rate"));
    }
    let grid = *table.grid();
    let dim = table.dim();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for c in 0..grid.len() {
        for s in table.samples(c) {
            rows.push(s.clone());
            cells.push(c);
        }
    }
    let n = rows.len();
    let mean: Vec<f64> = (0..dim).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
    let std: Vec<f64> = (0..dim)
        .map(|k| (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    let degenerate = std.iter().all(|s| *s == 0.0);
    let x = Array2::from_shape_fn((n, dim), |(r, k)| if std[k] > 0.0 { (rows[r][k] - mean[k]) / std[k] } else { 0.0 });
    let centers = grid.centers();
    let targets: Vec<[f64; 2]> = cells.iter().map(|&c| grid.normalize(centers[c])).collect();

    let mut sizes = vec![dim];
    sizes.extend(std::iter::repeat_n(cfg.hidden, cfg.depth));
    sizes.push(1);
    let [w, h] = [grid.bounds[1] - grid.bounds[0], grid.bounds[3] - grid.bounds[2]];
    let mut fields = Vec::new();
    let mut train_rmse = [0.0; 2];
    for k in 0..2 {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, stage::REGRESSION, k as u64));
        let mut net = Mlp::new(&sizes, cfg.activation, &mut rng)?;
        let mut params = net.params();
        let mut opt = Adam::new(params.len(), 0.9, 0.999, 1e-8);
        let b = cfg.batch.min(n);
        for it in 0..cfg.iterations {
            let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
            let xb = Array2::from_shape_fn((b, dim), |(r, q)| x[[idx[r], q]]);
            let (out, cache) = net.forward(xb.view());
            let adj = Array1::from_shape_fn(b, |r| 2.0 * (out[r] - targets[idx[r]][k]) / b as f64);
            let grad = net.backward(&cache, &adj);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteUpdate { iteration: it });
            }
            opt.step(&mut params, &grad, cfg.learning_rate);
            net.set_params(&params);
        }
        let (pred, _) = net.forward(x.view());
        if pred.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: cfg.iterations });
        }
        let (lo, span) = if k == 0 { (grid.bounds[0], w) } else { (grid.bounds[2], h) };
        let denorm = |u: f64| lo + 0.5 * (u + 1.0) * span;
        train_rmse[k] = (pred.iter().zip(&targets).map(|(p, t)| (denorm(*p) - denorm(t[k])).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut sum = vec![0.0; grid.len()];
        let mut cnt = vec![0usize; grid.len()];
        for (p, &c) in pred.iter().zip(&cells) {
            sum[c] += denorm(*p);
            cnt[c] += 1;
        }
        let vals = sum.iter().zip(&cnt).map(|(s, &m)| s / m as f64).collect();
        fields.push(ScalarField::new(grid, vals, if k == 0 { "s_t1" } else { "s_t2" })?);
    }
    let s_h = fields.pop().expect("two fields");
    let s_t = fields.pop().expect("two fields");
    let f = integrate_derivative_field(&s_t, &s_h, 1e-12)?;
    Ok(MeanAsStat {
        s_t,
        s_h,
        f,
        train_rmse,
        degenerate,
    })
}
