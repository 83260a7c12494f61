use super::ScalarField;
use crate::error::{Error, Result};
use crate::posterior::ParamGrid;

/// Potential recovered from a derivative field, with the RMS misfit of its edge differences.
#[derive(Debug, Clone)]
pub struct Integrated {
    pub field: ScalarField,
    /// RMS over edges of `(forward difference − averaged target derivative)`; zero for
    /// curl-free inputs.
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Edge targets: forward differences are matched to the mean of the two cell-centered
/// derivatives, which is exact for quadratics.
fn edge_targets(grid: &ParamGrid, dt: &[f64], dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut ex = Vec::with_capacity((nx - 1) * ny);
    for j in 0..ny {
        for i in 0..nx - 1 {
            ex.push(0.5 * (dt[grid.index(i, j)] + dt[grid.index(i + 1, j)]));
        }
    }
    let mut ey = Vec::with_capacity(nx * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx {
            ey.push(0.5 * (dh[grid.index(i, j)] + dh[grid.index(i, j + 1)]));
        }
    }
    (ex, ey)
}

/// Forward differences `D F` along both axes, in the layout of [`edge_targets`].
fn forward(grid: &ParamGrid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let [dx, dy] = grid.spacing();
    let (nx, ny) = (grid.nx, grid.ny);
    let mut gx = Vec::with_capacity((nx - 1) * ny);
    for j in 0..ny {
        for i in 0..nx - 1 {
            gx.push((f[grid.index(i + 1, j)] - f[grid.index(i, j)]) / dx);
        }
    }
    let mut gy = Vec::with_capacity(nx * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx {
            gy.push((f[grid.index(i, j + 1)] - f[grid.index(i, j)]) / dy);
        }
    }
    (gx, gy)
}

/// Adjoint `Dᵀ` of [`forward`].
fn adjoint(grid: &ParamGrid, ex: &[f64], ey: &[f64]) -> Vec<f64> {
    let [dx, dy] = grid.spacing();
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx - 1 {
            let e = ex[j * (nx - 1) + i] / dx;
            out[grid.index(i + 1, j)] += e;
            out[grid.index(i, j)] -= e;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let e = ey[j * nx + i] / dy;
            out[grid.index(i, j + 1)] += e;
            out[grid.index(i, j)] -= e;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares potential `F` with `∂F/∂t1 ≈ dt`, `∂F/∂t2 ≈ dh`, gauge `F(cell 0) = 0`.
///
/// Solves the normal equations `DᵀD F = Dᵀ r` by conjugate gradients to relative residual `tol`
/// (`1e-12` is a sensible default; the system has at most `nx·ny` distinct eigenvalues).
pub fn integrate_derivative_field(dt: &ScalarField, dh: &ScalarField, tol: f64) -> Result<Integrated> {
    if dt.grid != dh.grid {
        return Err(Error::GridMismatch("derivative fields live on different grids".into()));
    }
    let grid = dt.grid;
    let n = grid.len();
    let (ex, ey) = edge_targets(&grid, &dt.values, &dh.values);
    let b = adjoint(&grid, &ex, &ey);
    let apply = |f: &[f64]| {
        let (gx, gy) = forward(&grid, f);
        adjoint(&grid, &gx, &gy)
    };
    let mut f = vec![0.0; n];
    let bnorm = dot(&b, &b).sqrt();
    let max_iter = 20 * n;
    let mut iterations = 0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        loop {
            if rr.sqrt() <= tol * bnorm {
                break;
            }
            if iterations == max_iter {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: rr.sqrt() / bnorm,
                });
            }
            let ap = apply(&p);
            let alpha = rr / dot(&p, &ap);
            for k in 0..n {
                f[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
            iterations += 1;
        }
    }
    let f0 = f[0];
    f.iter_mut().for_each(|v| *v -= f0);
    let (gx, gy) = forward(&grid, &f);
    let sq: f64 = gx.iter().zip(&ex).chain(gy.iter().zip(&ey)).map(|(a, b)| (a - b).powi(2)).sum();
    let residual_rms = (sq / (ex.len() + ey.len()) as f64).sqrt();
    Ok(Integrated {
        field: ScalarField::new(grid, f, "F")?,
        residual_rms,
        iterations,
    })
}

/// Cell-centered derivatives whose neighbour averages reproduce the forward differences of `f`
/// exactly, so [`integrate_derivative_field`] inverts this map up to a constant.
pub fn discrete_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let [dx, dy] = g.spacing();
    let mut dt = vec![0.0; g.len()];
    let mut dh = vec![0.0; g.len()];
    let line = |vals: Vec<f64>, step: f64| -> Vec<f64> {
        let mut d = vec![0.0; vals.len()];
        d[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * step);
        for i in 0..vals.len() - 1 {
            d[i + 1] = 2.0 * (vals[i + 1] - vals[i]) / step - d[i];
        }
        d
    };
    for j in 0..g.ny {
        for (i, v) in line((0..g.nx).map(|i| f.at(i, j)).collect(), dx).into_iter().enumerate() {
            dt[g.index(i, j)] = v;
        }
    }
    for i in 0..g.nx {
        for (j, v) in line((0..g.ny).map(|j| f.at(i, j)).collect(), dy).into_iter().enumerate() {
            dh[g.index(i, j)] = v;
        }
    }
    (
        ScalarField { grid: g, values: dt, label: format!("d{}/dt1", f.label) },
        ScalarField { grid: g, values: dh, label: format!("d{}/dt2", f.label) },
    )
}

/// Central differences in the interior, second-order one-sided on the boundary.
pub fn central_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let grad = g.gradient(&f.values);
    (
        ScalarField { grid: g, values: grad.iter().map(|d| d[0]).collect(), label: format!("d{}/dt1", f.label) },
        ScalarField { grid: g, values: grad.iter().map(|d| d[1]).collect(), label: format!("d{}/dt2", f.label) },
    )
}
