use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::ScalarField;
use crate::io::{fmt_f64, parse_f64, parse_usize, read_csv_rows, read_json, sidecar_path, write_json, write_text};
use crate::posterior::ParamGrid;
use crate::potential::PotentialModel;

/// Per-cell symmetric 2×2 tensors stored as `[g11, g12, g22]`, projected so every eigenvalue
/// is at least `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grid: ParamGrid,
    tensors: Vec<[f64; 3]>,
    floor: f64,
    clamped_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    bounds: [f64; 4],
    nx: usize,
    ny: usize,
    floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    #[default]
    Analytic,
    FiniteDiff,
}

/// Raises both eigenvalues of `[a, b; b, c]` to at least `floor`. Returns whether any moved.
fn clamp_tensor(t: [f64; 3], floor: f64) -> ([f64; 3], bool) {
    let [a, b, c] = t;
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + r, mean - r);
    if l2 >= floor {
        return (t, false);
    }
    let (m1, m2) = (l1.max(floor), floor);
    // Eigenvector of l1: (b, l1 − a) or (l1 − c, b), whichever is better conditioned.
    let (vx, vy) = if (l1 - a).abs() + b.abs() >= (l1 - c).abs() + b.abs() { (b, l1 - a) } else { (l1 - c, b) };
    let norm = (vx * vx + vy * vy).sqrt();
    if norm == 0.0 {
        return ([a.max(floor), 0.0, c.max(floor)], true);
    }
    let (ux, uy) = (vx / norm, vy / norm);
    (
        [m1 * ux * ux + m2 * uy * uy, (m1 - m2) * ux * uy, m1 * uy * uy + m2 * ux * ux],
        true,
    )
}

impl MetricField {
    /// Symmetric tensors are projected with `floor = max(1e-6 × mean |trace|, 1e-12)`.
    pub fn from_tensors(grid: ParamGrid, raw: Vec<[f64; 3]>) -> Result<Self> {
        let mean_trace = raw.iter().map(|t| (t[0] + t[2]).abs()).sum::<f64>() / raw.len().max(1) as f64;
        let floor = (1e-6 * mean_trace).max(1e-12);
        Self::with_floor(grid, raw, floor)
    }

    pub fn with_floor(grid: ParamGrid, raw: Vec<[f64; 3]>, floor: f64) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} tensors for {} cells", raw.len(), grid.len())));
        }
        if !(floor > 0.0) {
            return Err(Error::invalid(format!("eigenvalue floor {floor} must be positive")));
        }
        if let Some(c) = raw.iter().position(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid(format!("non-finite metric tensor at cell {c}")));
        }
        let mut clamped_cells = 0;
        let tensors = raw
            .into_iter()
            .map(|t| {
                let (p, moved) = clamp_tensor(t, floor);
                clamped_cells += moved as usize;
                p
            })
            .collect();
        Ok(Self {
            grid,
            tensors,
            floor,
            clamped_cells,
        })
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn tensors(&self) -> &[[f64; 3]] {
        &self.tensors
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn clamped_cells(&self) -> usize {
        self.clamped_cells
    }

    /// Every cell needed projection: the source potential had no positive-definite curvature.
    pub fn is_degenerate(&self) -> bool {
        self.clamped_cells == self.tensors.len()
    }

    /// Smallest eigenvalue over all cells.
    pub fn min_eigenvalue(&self) -> f64 {
        self.tensors
            .iter()
            .map(|[a, b, c]| 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// One tensor component as a scalar field (`k = 0, 1, 2` for g11, g12, g22).
    pub fn component(&self, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.tensors.iter().map(|t| t[k]).collect(),
            label: ["g11", "g12", "g22"][k].to_string(),
        }
    }

    /// Bilinear interpolation weights of `p` over cell centers, clamped at the edges, plus
    /// their derivatives with respect to `p`.
    fn stencil(&self, p: [f64; 2]) -> Result<[(usize, f64, [f64; 2]); 4]> {
        if !self.grid.contains(p) {
            return Err(Error::OutOfBounds(p[0], p[1]));
        }
        let g = &self.grid;
        let [dx, dy] = g.spacing();
        let axis = |x: f64, lo: f64, step: f64, n: usize| -> (usize, f64, f64) {
            let mut f = (x - lo) / step - 0.5;
            if (f - f.round()).abs() < 1e-9 {
                f = f.round();
            }
            if f <= 0.0 {
                (0, 0.0, 0.0)
            } else if f >= (n - 1) as f64 {
                (n - 2, 1.0, 0.0)
            } else {
                let i = (f.floor() as usize).min(n - 2);
                (i, f - i as f64, 1.0 / step)
            }
        };
        let (i, wx, dwx) = axis(p[0], g.bounds[0], dx, g.nx);
        let (j, wy, dwy) = axis(p[1], g.bounds[2], dy, g.ny);
        Ok([
            (g.index(i, j), (1.0 - wx) * (1.0 - wy), [-dwx * (1.0 - wy), -(1.0 - wx) * dwy]),
            (g.index(i + 1, j), wx * (1.0 - wy), [dwx * (1.0 - wy), -wx * dwy]),
            (g.index(i, j + 1), (1.0 - wx) * wy, [-dwx * wy, (1.0 - wx) * dwy]),
            (g.index(i + 1, j + 1), wx * wy, [dwx * wy, wx * dwy]),
        ])
    }

    /// Metric at an arbitrary point of the grid's domain by componentwise bilinear interpolation.
    pub fn metric_at(&self, p: [f64; 2]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (c, w, _) in self.stencil(p)? {
            for k in 0..3 {
                out[k] += w * self.tensors[c][k];
            }
        }
        Ok(clamp_tensor(out, self.floor).0)
    }

    /// Interpolated metric and its derivatives `∂g/∂p1`, `∂g/∂p2`.
    pub(crate) fn metric_with_gradient(&self, p: [f64; 2]) -> Result<([f64; 3], [[f64; 3]; 2])> {
        let mut g = [0.0; 3];
        let mut dg = [[0.0; 3]; 2];
        for (c, w, dw) in self.stencil(p)? {
            for k in 0..3 {
                g[k] += w * self.tensors[c][k];
                dg[0][k] += dw[0] * self.tensors[c][k];
                dg[1][k] += dw[1] * self.tensors[c][k];
            }
        }
        Ok((g, dg))
    }

    /// CSV `i,j,g11,g12,g22` plus a JSON sidecar with the grid and floor.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::from("i,j,g11,g12,g22\n");
        for (c, t) in self.tensors.iter().enumerate() {
            let (i, j) = self.grid.coords(c);
            s.push_str(&format!("{i},{j},{},{},{}\n", fmt_f64(t[0]), fmt_f64(t[1]), fmt_f64(t[2])));
        }
        write_text(path, &s)?;
        write_json(
            &sidecar_path(path),
            &Sidecar {
                bounds: self.grid.bounds,
                nx: self.grid.nx,
                ny: self.grid.ny,
                floor: self.floor,
            },
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: Sidecar = read_json(&sidecar_path(path))?;
        let grid = ParamGrid::new(meta.bounds, meta.nx, meta.ny)?;
        let rows = read_csv_rows(path, |h| {
            if h == ["i", "j", "g11", "g12", "g22"] {
                Ok(())
            } else {
                Err(format!("expected header 'i,j,g11,g12,g22', got '{}'", h.join(",")))
            }
        })?;
        let mut tensors = vec![[f64::NAN; 3]; grid.len()];
        for (line, f) in &rows {
            let (i, j) = (parse_usize(path, *line, &f[0])?, parse_usize(path, *line, &f[1])?);
            if i >= grid.nx || j >= grid.ny {
                return Err(Error::format(path, *line, format!("cell ({i}, {j}) outside the grid")));
            }
            for k in 0..3 {
                tensors[grid.index(i, j)][k] = parse_f64(path, *line, &f[2 + k])?;
            }
        }
        let missing: Vec<usize> = (0..grid.len()).filter(|&c| tensors[c][0].is_nan()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        Self::with_floor(grid, tensors, meta.floor)
    }
}

/// Hessian of a trained potential at every cell center.
///
/// `Analytic` uses the network's exact input Hessian and requires a smooth activation.
/// `FiniteDiff` evaluates the network on a 9-point stencil of spacing `h` around each center;
/// the network is defined everywhere, so the stencil stays central on boundary cells too.
pub fn hessian_field(model: &PotentialModel, grid: &ParamGrid, mode: HessianMode, h: f64) -> Result<MetricField> {
    let centers = grid.centers();
    let raw: Vec<[f64; 3]> = match mode {
        HessianMode::Analytic => {
            if !model.activation().is_smooth() {
                return Err(Error::invalid("analytic Hessians need a smooth activation; use finite-diff"));
            }
            centers
                .iter()
                .map(|t| {
                    let m = model.hessian(*t);
                    [m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]]
                })
                .collect()
        }
        HessianMode::FiniteDiff => {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::invalid(format!("finite-difference spacing {h} must be positive")));
            }
            let offsets = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
            let pts: Vec<[f64; 2]> = centers
                .iter()
                .flat_map(|t| offsets.iter().map(move |(a, b)| [t[0] + a * h, t[1] + b * h]))
                .collect();
            let v = model.values(&pts);
            v.chunks(9)
                .map(|f| {
                    let h2 = h * h;
                    [
                        (f[1] - 2.0 * f[0] + f[2]) / h2,
                        (f[5] - f[6] - f[7] + f[8]) / (4.0 * h2),
                        (f[3] - 2.0 * f[0] + f[4]) / h2,
                    ]
                })
                .collect()
        }
    };
    MetricField::from_tensors(*grid, raw)
}

/// Second derivative along a line of samples: central inside, 4-point one-sided at the ends.
fn second_diff(vals: &[f64], k: usize, step: f64) -> f64 {
    let n = vals.len();
    let s2 = step * step;
    if k == 0 {
        (2.0 * vals[0] - 5.0 * vals[1] + 4.0 * vals[2] - vals[3]) / s2
    } else if k == n - 1 {
        (2.0 * vals[n - 1] - 5.0 * vals[n - 2] + 4.0 * vals[n - 3] - vals[n - 4]) / s2
    } else {
        (vals[k + 1] - 2.0 * vals[k] + vals[k - 1]) / s2
    }
}

/// Finite-difference Hessian of gridded values at the grid spacing, one-sided at the boundary.
pub fn hessian_field_from_values(values: &ScalarField) -> Result<MetricField> {
    let g = values.grid;
    let [dx, dy] = g.spacing();
    let grad = g.gradient(&values.values);
    let gx: Vec<f64> = grad.iter().map(|d| d[0]).collect();
    let gy: Vec<f64> = grad.iter().map(|d| d[1]).collect();
    let (gxy, gyx) = (g.gradient(&gx), g.gradient(&gy));
    let raw = (0..g.len())
        .map(|c| {
            let (i, j) = g.coords(c);
            let row: Vec<f64> = (0..g.nx).map(|ii| values.at(ii, j)).collect();
            let col: Vec<f64> = (0..g.ny).map(|jj| values.at(i, jj)).collect();
            [second_diff(&row, i, dx), 0.5 * (gxy[c][1] + gyx[c][0]), second_diff(&col, j, dy)]
        })
        .collect();
    MetricField::from_tensors(g, raw)
}

/// Cells where the metric changes abruptly.
#[derive(Debug, Clone)]
pub struct PhaseMap {
    /// Frobenius norm of the discrete gradient of the tensor field (g12 counted twice).
    pub values: ScalarField,
    pub threshold: f64,
    pub flagged: Vec<bool>,
}

/// Flags cells whose metric-gradient norm reaches the `quantile` of all cells (and is nonzero).
pub fn phase_map(field: &MetricField, quantile: f64) -> Result<PhaseMap> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::invalid(format!("quantile {quantile} must lie in [0, 1]")));
    }
    let g = field.grid;
    let comps: Vec<Vec<[f64; 2]>> = (0..3).map(|k| g.gradient(&field.component(k).values)).collect();
    let values: Vec<f64> = (0..g.len())
        .map(|c| {
            let sq = |k: usize| comps[k][c][0].powi(2) + comps[k][c][1].powi(2);
            (sq(0) + 2.0 * sq(1) + sq(2)).sqrt()
        })
        .collect();
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let threshold = sorted[((quantile * (sorted.len() - 1) as f64).floor() as usize).min(sorted.len() - 1)];
    let flagged = values.iter().map(|&v| v > 0.0 && v >= threshold).collect();
    Ok(PhaseMap {
        values: ScalarField::new(g, values, "metric_gradient_norm")?,
        threshold,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Activation;
    use crate::samplers::OracleModel;
    use proptest::prelude::*;

    fn grid() -> ParamGrid {
        ParamGrid::new([-1.0, 1.0, -1.0, 2.0], 12, 10).unwrap()
    }

    #[test]
    fn quadratic_gives_constant_metric() {
        let f = ScalarField::from_fn(grid(), "v", |t| 0.5 * (t[0] * t[0] + 4.0 * t[1] * t[1])).unwrap();
        let m = hessian_field_from_values(&f).unwrap();
        for t in m.tensors() {
            assert!((t[0] - 1.0).abs() < 1e-9 && t[1].abs() < 1e-9 && (t[2] - 4.0).abs() < 1e-9, "{t:?}");
        }
        assert_eq!(m.clamped_cells(), 0);
    }

    #[test]
    fn affine_field_is_clamped_and_flagged() {
        let f = ScalarField::from_fn(grid(), "v", |t| 2.0 * t[0] - t[1] + 1.0).unwrap();
        let m = hessian_field_from_values(&f).unwrap();
        assert!(m.is_degenerate());
        for t in m.tensors() {
            assert!((t[0] - m.floor()).abs() <= 1e-12 && t[1].abs() <= 1e-12 && (t[2] - m.floor()).abs() <= 1e-12, "{t:?}");
        }
    }

    #[test]
    fn oracle_metric_converges_at_second_order() {
        let o = OracleModel::new(10).unwrap();
        let err = |n: usize| {
            let g = ParamGrid::new([-1.0, 1.0, -1.0, 1.0], n, n).unwrap();
            let f = ScalarField::from_fn(g, "logZ", |t| o.log_partition(t)).unwrap();
            let m = hessian_field_from_values(&f).unwrap();
            (0..g.len())
                .filter(|&c| !g.on_boundary(c))
                .map(|c| {
                    let e = o.hessian_diag(g.center(c));
                    let t = m.tensors()[c];
                    (t[0] - e[0]).abs().max((t[2] - e[1]).abs()).max(t[1].abs())
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(16), err(32));
        assert!(b < a / 3.0 && b < 1e-2, "{a} {b}");
    }

    #[test]
    fn model_modes_agree() {
        let g = grid();
        let model = PotentialModel::new(&g, 16, 2, Activation::Softplus, 3.0, 2).unwrap();
        let a = hessian_field(&model, &g, HessianMode::Analytic, 0.0).unwrap();
        let f = hessian_field(&model, &g, HessianMode::FiniteDiff, 1e-3).unwrap();
        for (x, y) in a.tensors().iter().zip(f.tensors()) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-4 * (1.0 + x[k].abs()), "{x:?} {y:?}");
            }
        }
        let relu = PotentialModel::new(&g, 16, 2, Activation::Relu, 1.0, 2).unwrap();
        assert!(hessian_field(&relu, &g, HessianMode::Analytic, 0.0).is_err());
        assert!(hessian_field(&relu, &g, HessianMode::FiniteDiff, 0.0).is_err());
    }

    #[test]
    fn metric_at_interpolates() {
        let g = grid();
        let raw: Vec<[f64; 3]> = (0..g.len()).map(|c| [1.0 + c as f64, 0.1 * c as f64, 2.0 + c as f64]).collect();
        let m = MetricField::from_tensors(g, raw).unwrap();
        for c in 0..g.len() {
            assert_eq!(m.metric_at(g.center(c)).unwrap(), m.tensors()[c]);
        }
        let (a, b) = (g.center(g.index(3, 4)), g.center(g.index(4, 4)));
        let mid = m.metric_at([0.5 * (a[0] + b[0]), a[1]]).unwrap();
        let (ta, tb) = (m.tensors()[g.index(3, 4)], m.tensors()[g.index(4, 4)]);
        for k in 0..3 {
            assert!((mid[k] - 0.5 * (ta[k] + tb[k])).abs() < 1e-12);
        }
        assert!(matches!(m.metric_at([1.5, 0.0]), Err(Error::OutOfBounds(..))));
        let flat = MetricField::from_tensors(g, vec![[2.0, 0.5, 3.0]; g.len()]).unwrap();
        for p in [[-1.0, -1.0], [0.3, 1.7], [1.0, 2.0]] {
            assert_eq!(flat.metric_at(p).unwrap(), [2.0, 0.5, 3.0]);
        }
    }

    #[test]
    fn interpolation_gradient_matches_finite_differences() {
        let g = grid();
        let raw: Vec<[f64; 3]> = g.centers().iter().map(|t| [2.0 + t[0].sin(), 0.3 * t[1], 3.0 + t[0] * t[1]]).collect();
        let m = MetricField::from_tensors(g, raw).unwrap();
        let p = [0.13, 0.77];
        let (_, dg) = m.metric_with_gradient(p).unwrap();
        let e = 1e-6;
        for axis in 0..2 {
            let mut a = p;
            let mut b = p;
            a[axis] += e;
            b[axis] -= e;
            let (ga, gb) = (m.metric_at(a).unwrap(), m.metric_at(b).unwrap());
            for k in 0..3 {
                assert!((dg[axis][k] - (ga[k] - gb[k]) / (2.0 * e)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let m = MetricField::from_tensors(g, g.centers().iter().map(|t| [1.0 + t[0] * t[0], 0.1, 1.0 / 3.0]).collect()).unwrap();
        let p = dir.path().join("metric.csv");
        m.write(&p).unwrap();
        assert_eq!(MetricField::read(&p).unwrap(), m);
    }

    #[test]
    fn phase_map_examples() {
        let g = ParamGrid::new([0.0, 1.0, 0.0, 1.0], 8, 8).unwrap();
        let flat = MetricField::from_tensors(g, vec![[1.0, 0.0, 1.0]; 64]).unwrap();
        let p = phase_map(&flat, 0.95).unwrap();
        assert!(p.values.values.iter().all(|v| *v == 0.0) && p.flagged.iter().all(|f| !f));
        let step = MetricField::from_tensors(g, (0..64).map(|c| if g.coords(c).0 < 4 { [1.0, 0.0, 1.0] } else { [5.0, 0.0, 5.0] }).collect()).unwrap();
        let p = phase_map(&step, 0.95).unwrap();
        for c in 0..64 {
            assert_eq!(p.flagged[c], matches!(g.coords(c).0, 3 | 4), "cell {c}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_symmetric_positive(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let (t, _) = clamp_tensor([a, b, c], 1e-3);
            let min = 0.5 * (t[0] + t[2]) - (0.25 * (t[0] - t[2]).powi(2) + t[1] * t[1]).sqrt();
            prop_assert!(min >= 1e-3 * (1.0 - 1e-9));
        }

        #[test]
        fn metric_is_affine_gauge_invariant(c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..100) {
            let g = grid();
            let model = PotentialModel::new(&g, 8, 2, Activation::Softplus, 2.0, seed).unwrap();
            let shifted = model.with_affine(c1, c2, b);
            let x = hessian_field(&model, &g, HessianMode::Analytic, 0.0).unwrap();
            let y = hessian_field(&shifted, &g, HessianMode::Analytic, 0.0).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
