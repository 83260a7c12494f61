use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::kernel_row_masses;
use super::{Activation, Adam, PotentialModel};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_text};
use crate::posterior::{ParamGrid, PosteriorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Learning rate at the last iteration as a fraction of `learning_rate` (exponential decay).
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub activation: Activation,
    pub hidden: usize,
    pub depth: usize,
    /// Finite-difference spacing for `∇v` at source cells; `None` uses the grid spacing.
    pub h: Option<f64>,
    pub output_scale: f64,
    /// Treat source gradients as constants during backpropagation. Cheaper per step, but the
    /// resulting semi-gradient does not descend the loss and diverges on peaked targets.
    pub detach_source_gradients: bool,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            activation: Activation::Softplus,
            hidden: 128,
            depth: 3,
            h: None,
            output_scale: 1.0,
            detach_source_gradients: false,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::invalid(format!("final_lr_fraction {} must lie in (0, 1]", self.final_lr_fraction)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("Adam eps must be positive"));
        }
        if self.hidden == 0 || self.depth == 0 {
            return Err(Error::invalid("network needs at least one hidden layer of positive width"));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::invalid(format!("finite-difference spacing {h} must be positive")));
            }
        }
        if !(self.output_scale > 0.0) || !self.output_scale.is_finite() {
            return Err(Error::invalid(format!("output scale {} must be positive", self.output_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters with the lowest recorded loss.
    pub model: PotentialModel,
    /// Mean JSD per iteration, plus the loss of the final parameters as the last entry.
    pub losses: Vec<f64>,
    pub best_loss: f64,
}

/// Points at which the network is evaluated each step, and where each cell's
/// value and gradient stencil lives in that list.
struct Stencil {
    points: Vec<[f64; 2]>,
    center: Vec<usize>,
    xp: Vec<usize>,
    xm: Vec<usize>,
    yp: Vec<usize>,
    ym: Vec<usize>,
    h: [f64; 2],
}

impl Stencil {
    fn new(grid: &ParamGrid, h: Option<f64>) -> Self {
        let n = grid.len();
        match h {
            None => {
                // Lattice extended by one ring of cells, so neighbours double as stencil points.
                let w = grid.nx + 2;
                let points = (0..grid.ny + 2)
                    .flat_map(|j| (0..w).map(move |i| (i, j)))
                    .map(|(i, j)| [grid.x_at(i as f64 - 1.0), grid.y_at(j as f64 - 1.0)])
                    .collect();
                let at = |c: usize, di: isize, dj: isize| {
                    let (i, j) = grid.coords(c);
                    ((j as isize + 1 + dj) as usize) * w + (i as isize + 1 + di) as usize
                };
                Self {
                    points,
                    center: (0..n).map(|c| at(c, 0, 0)).collect(),
                    xp: (0..n).map(|c| at(c, 1, 0)).collect(),
                    xm: (0..n).map(|c| at(c, -1, 0)).collect(),
                    yp: (0..n).map(|c| at(c, 0, 1)).collect(),
                    ym: (0..n).map(|c| at(c, 0, -1)).collect(),
                    h: grid.spacing(),
                }
            }
            Some(h) => {
                let points = grid
                    .centers()
                    .iter()
                    .flat_map(|t| [*t, [t[0] + h, t[1]], [t[0] - h, t[1]], [t[0], t[1] + h], [t[0], t[1] - h]])
                    .collect();
                Self {
                    points,
                    center: (0..n).map(|c| 5 * c).collect(),
                    xp: (0..n).map(|c| 5 * c + 1).collect(),
                    xm: (0..n).map(|c| 5 * c + 2).collect(),
                    yp: (0..n).map(|c| 5 * c + 3).collect(),
                    ym: (0..n).map(|c| 5 * c + 4).collect(),
                    h: [h, h],
                }
            }
        }
    }
}

/// Loss and its adjoints with respect to every stencil value.
fn loss_and_adjoints(
    stencil: &Stencil,
    centers: &[[f64; 2]],
    target: &[f64],
    v: &[f64],
    detach: bool,
    want_adjoints: bool,
) -> Option<(f64, Vec<f64>)> {
    let n = centers.len();
    let values: Vec<f64> = stencil.center.iter().map(|&k| v[k]).collect();
    let grads: Vec<[f64; 2]> = (0..n)
        .map(|c| {
            [
                (v[stencil.xp[c]] - v[stencil.xm[c]]) / (2.0 * stencil.h[0]),
                (v[stencil.yp[c]] - v[stencil.ym[c]]) / (2.0 * stencil.h[1]),
            ]
        })
        .collect();
    let inv_n = 1.0 / n as f64;
    let mut dz = vec![0.0; if want_adjoints { n * n } else { n }];
    let row_len = if want_adjoints { n } else { 1 };
    // Each row: masses Q, loss JSD(P_row, Q), and dL/dz_c = Q_c (G_c − Σ Q G), G = ½ ln(2Q/(P+Q)).
    let per_row: Vec<Option<(f64, [f64; 2])>> = dz
        .par_chunks_mut(row_len)
        .enumerate()
        .map(|(src, out)| {
            let p = &target[src * n..(src + 1) * n];
            let mut q = vec![0.0; n];
            if !kernel_row_masses(centers, &values, grads[src], &mut q) {
                return None;
            }
            let mut g = vec![0.0; n];
            let mut loss = 0.0;
            let mut gbar = 0.0;
            for c in 0..n {
                let (pc, qc) = (p[c], q[c]);
                let m = pc + qc;
                if pc > 0.0 {
                    loss += pc * (2.0 * pc / m).ln();
                }
                if qc > 0.0 {
                    let l = (2.0 * qc / m).ln();
                    loss += qc * l;
                    g[c] = 0.5 * l;
                    gbar += qc * g[c];
                }
            }
            let mut dg = [0.0; 2];
            if want_adjoints {
                for c in 0..n {
                    let d = q[c] * (g[c] - gbar) * inv_n;
                    out[c] = d;
                    dg[0] += d * centers[c][0];
                    dg[1] += d * centers[c][1];
                }
            }
            Some((0.5 * loss * inv_n, dg))
        })
        .collect();
    let mut loss = 0.0;
    let mut adj = vec![0.0; v.len()];
    for (src, r) in per_row.iter().enumerate() {
        let (l, dg) = (*r)?;
        loss += l;
        if want_adjoints && !detach {
            adj[stencil.xp[src]] += dg[0] / (2.0 * stencil.h[0]);
            adj[stencil.xm[src]] -= dg[0] / (2.0 * stencil.h[0]);
            adj[stencil.yp[src]] += dg[1] / (2.0 * stencil.h[1]);
            adj[stencil.ym[src]] -= dg[1] / (2.0 * stencil.h[1]);
        }
    }
    if want_adjoints {
        for src in 0..n {
            for (c, d) in dz[src * n..(src + 1) * n].iter().enumerate() {
                adj[stencil.center[c]] -= d;
            }
        }
    }
    Some((loss, adj))
}

/// Fits a potential so its normalized Bregman kernel matches `target` row by row, minimizing
/// the mean Jensen–Shannon divergence over source cells with full-batch Adam.
pub fn train_potential(target: &PosteriorField, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let grid = *target.grid();
    grid.validate()?;
    let n = grid.len();
    let mut model = PotentialModel::new(&grid, cfg.hidden, cfg.depth, cfg.activation, cfg.output_scale, cfg.seed)?;
    let stencil = Stencil::new(&grid, cfg.h);
    let centers = grid.centers();
    let area = grid.cell_area();
    let target_mass: Vec<f64> = target.density().iter().map(|d| d * area).collect();
    debug_assert_eq!(target_mass.len(), n * n);

    let mut opt = Adam::new(model.n_params(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut params = model.params();
    let mut best = (f64::INFINITY, params.clone());
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    let decay = if cfg.iterations > 1 {
        cfg.final_lr_fraction.ln() / (cfg.iterations - 1) as f64
    } else {
        0.0
    };

    for it in 0..=cfg.iterations {
        let last = it == cfg.iterations;
        let eval = model.eval_batch(&stencil.points);
        let (loss, adj) = loss_and_adjoints(&stencil, &centers, &target_mass, &eval.values, cfg.detach_source_gradients, !last)
            .ok_or(Error::NonFiniteLoss { iteration: it })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if cfg.log_every > 0 && it % cfg.log_every == 0 {
            log::info!("iteration {it}: loss {loss:.6e}");
        }
        if last {
            break;
        }
        let grad = model.backward(&eval, &adj);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteUpdate { iteration: it });
        }
        opt.step(&mut params, &grad, cfg.learning_rate * (decay * it as f64).exp());
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteUpdate { iteration: it });
        }
        model.set_params(&params);
    }
    model.set_params(&best.1);
    Ok(TrainResult {
        model,
        losses,
        best_loss: best.0,
    })
}

/// Iterations `i` where the loss `window` steps later exceeds the loss at `i` by more than `tol`.
pub fn loss_trend_violations(losses: &[f64], window: usize, tol: f64) -> Vec<usize> {
    (0..losses.len().saturating_sub(window))
        .filter(|&i| losses[i + window] > losses[i] + tol)
        .collect()
}

/// Writes the loss history as CSV `iter,loss`.
pub fn write_loss_history(losses: &[f64], path: &Path) -> Result<()> {
    let mut s = String::from("iter,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", fmt_f64(*l)));
    }
    write_text(path, &s)
}
