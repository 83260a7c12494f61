use rayon::prelude::*;

use super::PotentialModel;
use crate::error::{Error, Result};
use crate::posterior::ParamGrid;

/// Jensen–Shannon divergence (natural log) between two probability vectors.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::GridMismatch(format!("rows of length {} and {}", p.len(), q.len())));
    }
    let mut s = 0.0;
    for (index, (&a, &b)) in p.iter().zip(q).enumerate() {
        if !(a >= 0.0) {
            return Err(Error::NegativeDensity { index, value: a });
        }
        if !(b >= 0.0) {
            return Err(Error::NegativeDensity { index, value: b });
        }
        // Ordered pair, so swapping the arguments rounds identically.
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let m = 0.5 * (x + y);
        if x > 0.0 {
            s += x * (x / m).ln() + y * (y / m).ln();
        } else if y > 0.0 {
            s += y * 2f64.ln();
        }
    }
    Ok((0.5 * s).clamp(0.0, std::f64::consts::LN_2))
}

/// Bregman divergence `φ(t_c) − φ(t_src) − ⟨∇φ(t_src), t_c − t_src⟩` of a gridded potential,
/// with `∇φ` from [`ParamGrid::gradient`]. The flag is set when `src` is a boundary cell and
/// the gradient there is one-sided.
pub fn bregman(phi: &[f64], grid: &ParamGrid, c: usize, src: usize) -> Result<(f64, bool)> {
    if phi.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} cells", phi.len(), grid.len())));
    }
    let g = grid.gradient(phi);
    Ok((bregman_with(phi, &g, grid, c, src), grid.on_boundary(src)))
}

fn bregman_with(phi: &[f64], grad: &[[f64; 2]], grid: &ParamGrid, c: usize, src: usize) -> f64 {
    let (t, s) = (grid.center(c), grid.center(src));
    phi[c] - phi[src] - grad[src][0] * (t[0] - s[0]) - grad[src][1] * (t[1] - s[1])
}

/// Values, source gradients and normalized kernel densities of a potential on a grid.
#[derive(Debug, Clone)]
pub struct ModelRowSet {
    pub grid: ParamGrid,
    pub values: Vec<f64>,
    pub source_gradients: Vec<[f64; 2]>,
    /// Row-major `n × n`; row `c'` is a density over cells `c`.
    pub rows: Vec<f64>,
}

impl ModelRowSet {
    pub fn row(&self, src: usize) -> &[f64] {
        let n = self.grid.len();
        &self.rows[src * n..(src + 1) * n]
    }
}

/// Fills `out` with the softmax of `⟨t_c, g⟩ − v_c` over cells; returns false on overflow.
pub(crate) fn kernel_row_masses(centers: &[[f64; 2]], values: &[f64], g: [f64; 2], out: &mut [f64]) -> bool {
    let mut max = f64::NEG_INFINITY;
    for ((o, t), v) in out.iter_mut().zip(centers).zip(values) {
        *o = t[0] * g[0] + t[1] * g[1] - v;
        max = max.max(*o);
    }
    if !max.is_finite() {
        return false;
    }
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        z += *o;
    }
    let inv = 1.0 / z;
    for o in out.iter_mut() {
        *o *= inv;
    }
    z.is_finite() && z >= 1.0
}

/// Kernel densities `q[c'][c] ∝ exp(⟨t_c, g(t_{c'})⟩ − v_c)` from cell values and source gradients.
pub fn kernel_from_field(grid: &ParamGrid, values: &[f64], gradients: &[[f64; 2]]) -> Result<Vec<f64>> {
    let n = grid.len();
    if values.len() != n || gradients.len() != n {
        return Err(Error::GridMismatch(format!("{} values and {} gradients for {n} cells", values.len(), gradients.len())));
    }
    let centers = grid.centers();
    let inv_area = 1.0 / grid.cell_area();
    let mut rows = vec![0.0; n * n];
    let bad: Option<usize> = rows
        .par_chunks_mut(n)
        .enumerate()
        .filter_map(|(src, row)| {
            let ok = kernel_row_masses(&centers, values, gradients[src], row);
            row.iter_mut().for_each(|x| *x *= inv_area);
            (!ok).then_some(src)
        })
        .min();
    match bad {
        Some(row) => Err(Error::KernelOverflow { row }),
        None => Ok(rows),
    }
}

/// Central-difference gradients of the model at every cell center with spacing `h`.
pub fn model_source_gradients(model: &PotentialModel, grid: &ParamGrid, h: f64) -> Result<Vec<[f64; 2]>> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference spacing {h} must be positive")));
    }
    let pts: Vec<[f64; 2]> = grid
        .centers()
        .iter()
        .flat_map(|t| [[t[0] + h, t[1]], [t[0] - h, t[1]], [t[0], t[1] + h], [t[0], t[1] - h]])
        .collect();
    let v = model.values(&pts);
    Ok(v.chunks(4).map(|q| [(q[0] - q[1]) / (2.0 * h), (q[2] - q[3]) / (2.0 * h)]).collect())
}

/// Normalized Bregman kernel of a trained potential.
pub fn kernel_rows(model: &PotentialModel, grid: &ParamGrid, h: f64) -> Result<ModelRowSet> {
    let values = model.values(&grid.centers());
    if let Some(c) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("model is not finite at cell {c}")));
    }
    let source_gradients = model_source_gradients(model, grid, h)?;
    let rows = kernel_from_field(grid, &values, &source_gradients)?;
    Ok(ModelRowSet {
        grid: *grid,
        values,
        source_gradients,
        rows,
    })
}

/// `∫∫ |e^{−D_a(t,t')} − e^{−D_b(t,t')}|² dt dt'` over the grid, with grid-gradient Bregman
/// divergences. A diagnostic only; unaffected by adding affine terms to either field.
pub fn mse_bregman_loss(a: &[f64], b: &[f64], grid: &ParamGrid) -> Result<f64> {
    let n = grid.len();
    if a.len() != n || b.len() != n {
        return Err(Error::GridMismatch(format!("fields of length {} and {} for {n} cells", a.len(), b.len())));
    }
    let (ga, gb) = (grid.gradient(a), grid.gradient(b));
    let area = grid.cell_area();
    let total: f64 = (0..n)
        .map(|src| {
            (0..n)
                .map(|c| {
                    let d = (-bregman_with(a, &ga, grid, c, src)).exp() - (-bregman_with(b, &gb, grid, c, src)).exp();
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total * area * area)
}
