use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricField;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv_rows, write_text};
use crate::potential::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicConfig {
    pub n_points: usize,
    pub iterations: usize,
    /// Step size as a fraction of the domain extent along each axis.
    pub learning_rate: f64,
    /// Learning rate at the last iteration relative to the first (exponential decay).
    pub final_lr_fraction: f64,
    /// Stop once the normalized energy changes by less than this for 20 consecutive steps.
    pub tol: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            n_points: 64,
            iterations: 4000,
            learning_rate: 2e-3,
            final_lr_fraction: 0.01,
            tol: 1e-10,
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::invalid(format!("n_points = {} must be at least 3", self.n_points)));
        }
        if !(self.learning_rate > 0.0) || !(self.final_lr_fraction > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::invalid("learning_rate and final_lr_fraction must be positive, tol non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub points: Vec<[f64; 2]>,
    pub length: f64,
    pub straight_length: f64,
    /// Path energy per iteration, relative to the straight path.
    pub energy_history: Vec<f64>,
    pub converged: bool,
}

impl GeodesicPath {
    /// CSV `k,t1,t2`.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_points(path, &self.points)
    }
}

pub fn write_points(path: &Path, points: &[[f64; 2]]) -> Result<()> {
    let mut s = String::from("k,t1,t2\n");
    for (k, p) in points.iter().enumerate() {
        s.push_str(&format!("{k},{},{}\n", fmt_f64(p[0]), fmt_f64(p[1])));
    }
    write_text(path, &s)
}

pub fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    let rows = read_csv_rows(path, |h| {
        if h == ["k", "t1", "t2"] {
            Ok(())
        } else {
            Err(format!("expected header 'k,t1,t2', got '{}'", h.join(",")))
        }
    })?;
    rows.iter()
        .map(|(line, f)| Ok([parse_f64(path, *line, &f[1])?, parse_f64(path, *line, &f[2])?]))
        .collect()
}

fn quad(g: &[f64; 3], d: [f64; 2]) -> f64 {
    g[0] * d[0] * d[0] + 2.0 * g[1] * d[0] * d[1] + g[2] * d[1] * d[1]
}

fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// `Σ √(Δᵀ g(midpoint) Δ)` over consecutive segments.
pub fn path_length(field: &MetricField, points: &[[f64; 2]]) -> Result<f64> {
    points
        .windows(2)
        .map(|w| {
            let g = field.metric_at(mid(w[0], w[1]))?;
            Ok(quad(&g, [w[1][0] - w[0][0], w[1][1] - w[0][1]]).max(0.0).sqrt())
        })
        .sum()
}

const SEGMENT_SAMPLES: usize = 4;

/// Discrete energy `Σ Δᵀ ḡ Δ`, with `ḡ` the metric averaged over sample points along each
/// segment, and its gradient with respect to every point.
fn energy_and_gradient(field: &MetricField, points: &[[f64; 2]], grad: &mut [[f64; 2]]) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = [0.0; 2]);
    let mut energy = 0.0;
    let w = 1.0 / SEGMENT_SAMPLES as f64;
    for k in 0..points.len() - 1 {
        let (a, b) = (points[k], points[k + 1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut gbar = [0.0; 3];
        let (mut da, mut db) = ([0.0; 2], [0.0; 2]);
        for q in 0..SEGMENT_SAMPLES {
            let s = (q as f64 + 0.5) * w;
            let (g, dg) = field.metric_with_gradient([a[0] + s * d[0], a[1] + s * d[1]])?;
            for c in 0..3 {
                gbar[c] += w * g[c];
            }
            for ax in 0..2 {
                let t = w * quad(&dg[ax], d);
                da[ax] += (1.0 - s) * t;
                db[ax] += s * t;
            }
        }
        energy += quad(&gbar, d);
        let gd = [2.0 * (gbar[0] * d[0] + gbar[1] * d[1]), 2.0 * (gbar[1] * d[0] + gbar[2] * d[1])];
        for ax in 0..2 {
            grad[k + 1][ax] += gd[ax] + db[ax];
            grad[k][ax] += -gd[ax] + da[ax];
        }
    }
    Ok(energy)
}

/// Minimizes the discrete path energy between `a` and `b` with Adam, starting from the
/// evenly spaced straight segment. The reported lengths use [`path_length`].
///
/// Interior points are clamped into the grid after every step. The final iterate is returned
/// unless it is longer than the straight path, in which case the straight path is.
pub fn geodesic(field: &MetricField, a: [f64; 2], b: [f64; 2], cfg: &GeodesicConfig) -> Result<GeodesicPath> {
    cfg.validate()?;
    let grid = field.grid();
    for p in [a, b] {
        if !grid.contains(p) {
            return Err(Error::OutOfBounds(p[0], p[1]));
        }
    }
    let n = cfg.n_points;
    let mut points: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
        })
        .collect();
    points[0] = a;
    points[n - 1] = b;
    let mut grad = vec![[0.0; 2]; n];
    let e0 = energy_and_gradient(field, &points, &mut grad)?;
    let straight_length = path_length(field, &points)?;
    if a == b || e0 <= 0.0 {
        return Ok(GeodesicPath {
            points,
            length: straight_length,
            straight_length,
            energy_history: vec![1.0],
            converged: true,
        });
    }
    let [lo1, hi1, lo2, hi2] = grid.bounds;
    let extent = [hi1 - lo1, hi2 - lo2];
    let mut adam = Adam::new(2 * (n - 2), 0.9, 0.999, 1e-8);
    // Optimize in extent-normalized coordinates so one learning rate fits both axes.
    let mut params: Vec<f64> = points[1..n - 1]
        .iter()
        .flat_map(|p| [(p[0] - lo1) / extent[0], (p[1] - lo2) / extent[1]])
        .collect();
    let mut flat_grad = vec![0.0; params.len()];
    let straight = points.clone();
    let mut history = vec![1.0];
    let mut quiet = 0;
    let mut converged = false;
    let decay = if cfg.iterations > 1 { cfg.final_lr_fraction.ln() / (cfg.iterations - 1) as f64 } else { 0.0 };
    for it in 0..cfg.iterations {
        for (k, g) in grad[1..n - 1].iter().enumerate() {
            flat_grad[2 * k] = g[0] * extent[0] / e0;
            flat_grad[2 * k + 1] = g[1] * extent[1] / e0;
        }
        adam.step(&mut params, &flat_grad, cfg.learning_rate * (decay * it as f64).exp());
        for (k, p) in points[1..n - 1].iter_mut().enumerate() {
            params[2 * k] = params[2 * k].clamp(0.0, 1.0);
            params[2 * k + 1] = params[2 * k + 1].clamp(0.0, 1.0);
            *p = [lo1 + params[2 * k] * extent[0], lo2 + params[2 * k + 1] * extent[1]];
        }
        let e = energy_and_gradient(field, &points, &mut grad)?;
        if !e.is_finite() {
            return Err(Error::NonFiniteUpdate { iteration: it });
        }
        let rel = e / e0;
        quiet = if (rel - history.last().unwrap()).abs() < cfg.tol { quiet + 1 } else { 0 };
        history.push(rel);
        if quiet >= 20 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("geodesic did not converge in {} iterations", cfg.iterations);
    }
    let mut length = path_length(field, &points)?;
    if length > straight_length {
        points = straight;
        length = straight_length;
    }
    Ok(GeodesicPath {
        points,
        length,
        straight_length,
        energy_history: history,
        converged,
    })
}

/// Mean turning angle per unit length over interior points.
pub fn path_curvature(points: &[[f64; 2]]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegeneratePath(format!("{} points; need at least 3", points.len())));
    }
    if let Some(k) = points.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::DegeneratePath(format!("points {k} and {} coincide", k + 1)));
    }
    let total: f64 = points
        .windows(3)
        .map(|w| {
            let u = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let v = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
            let (nu, nv) = (u[0].hypot(u[1]), v[0].hypot(v[1]));
            let cross = u[0] * v[1] - u[1] * v[0];
            let dot = u[0] * v[0] + u[1] * v[1];
            // Rounding of the coordinates alone can produce a cross product this large.
            let scale = w.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            let noise = 8.0 * f64::EPSILON * scale * (nu + nv);
            let angle = if cross.abs() <= noise && dot > 0.0 { 0.0 } else { cross.abs().atan2(dot) };
            angle / (0.5 * (nu + nv))
        })
        .sum();
    Ok(total / (points.len() - 2) as f64)
}
