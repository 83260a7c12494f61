use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ScalarField;
use crate::error::{Error, Result};

/// Least-squares map `A(F)(t) = s·F(t) + c1·t1 + c2·t2 + b` onto a reference field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub s: f64,
    pub c1: f64,
    pub c2: f64,
    pub b: f64,
    pub rmse: f64,
    /// The fitted field was itself affine in `t`, so the scale was fixed at zero.
    pub rank_deficient: bool,
}

impl AffineFit {
    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let values = f
            .values
            .iter()
            .zip(f.grid.centers())
            .map(|(v, t)| self.s * v + self.c1 * t[0] + self.c2 * t[1] + self.b)
            .collect();
        ScalarField {
            grid: f.grid,
            values,
            label: format!("A({})", f.label),
        }
    }
}

/// Solves `min ‖X β − y‖` by SVD on unit-norm columns with one refinement step; returns `β`
/// and whether `X` lost rank in its first column.
fn lstsq(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, bool) {
    let n = y.len();
    let solve = |cols: &[Vec<f64>]| {
        let norms: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE))
            .collect();
        let x = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r] / norms[c]);
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let eps = 1e-12 * smax.max(f64::MIN_POSITIVE);
        let yv = DVector::from_column_slice(y);
        let mut beta = svd.solve(&yv, eps).expect("SVD computed with both factors");
        let resid = &yv - &x * &beta;
        beta += svd.solve(&resid, eps).expect("SVD computed with both factors");
        let beta = beta.iter().zip(&norms).map(|(b, s)| b / s).collect::<Vec<f64>>();
        (beta, smin <= 1e-10 * smax)
    };
    let (beta, deficient) = solve(columns);
    if !deficient {
        return (beta, false);
    }
    let (rest, _) = solve(&columns[1..]);
    (std::iter::once(0.0).chain(rest).collect(), true)
}

fn rmse(pred: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    (pred.zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Affine-invariant RMSE of `rec` against `gt` over `(s, c1, c2, b)`.
pub fn affine_rmse(rec: &ScalarField, gt: &ScalarField) -> Result<AffineFit> {
    if rec.grid != gt.grid {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let centers = rec.grid.centers();
    let cols = vec![
        rec.values.clone(),
        centers.iter().map(|t| t[0]).collect(),
        centers.iter().map(|t| t[1]).collect(),
        vec![1.0; centers.len()],
    ];
    let (beta, rank_deficient) = lstsq(&cols, &gt.values);
    let fit = AffineFit {
        s: beta[0],
        c1: beta[1],
        c2: beta[2],
        b: beta[3],
        rmse: 0.0,
        rank_deficient,
    };
    let pred = fit.apply(rec);
    Ok(AffineFit {
        rmse: rmse(pred.values.into_iter(), &gt.values),
        ..fit
    })
}

/// One-dimensional variant on a slice: fits `y ≈ s·rec + c·x + b`; the result has `c2 = 0`.
pub fn affine_rmse_1d(x: &[f64], rec: &[f64], gt: &[f64]) -> Result<AffineFit> {
    if x.len() != rec.len() || x.len() != gt.len() || x.len() < 3 {
        return Err(Error::invalid("slice fit needs three equally long vectors of length ≥ 3"));
    }
    let cols = vec![rec.to_vec(), x.to_vec(), vec![1.0; x.len()]];
    let (beta, rank_deficient) = lstsq(&cols, gt);
    let pred = rec.iter().zip(x).map(|(r, xi)| beta[0] * r + beta[1] * xi + beta[2]);
    Ok(AffineFit {
        s: beta[0],
        c1: beta[1],
        c2: 0.0,
        b: beta[2],
        rmse: rmse(pred, gt),
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::ParamGrid;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid() -> ParamGrid {
        ParamGrid::new([0.0, 1.0, 0.0, 1.0], 10, 10).unwrap()
    }

    fn gt() -> ScalarField {
        ScalarField::from_fn(grid(), "F", |t| (2.0 * t[0]).sin() * t[1] + t[1].exp()).unwrap()
    }

    #[test]
    fn identity_and_affine_members() {
        let f = gt();
        let fit = affine_rmse(&f, &f).unwrap();
        assert!(fit.rmse < 1e-12);
        assert!((fit.s - 1.0).abs() < 1e-10 && fit.c1.abs() < 1e-10 && fit.c2.abs() < 1e-10 && fit.b.abs() < 1e-10);
        let vals = f.values.iter().zip(grid().centers()).map(|(v, t)| 2.0 * v + 3.0 * t[0] - 1.0).collect();
        let g = ScalarField::new(grid(), vals, "G").unwrap();
        assert!(affine_rmse(&g, &f).unwrap().rmse < 1e-10);
    }

    #[test]
    fn random_fields_do_not_fit_and_constants_are_flagged() {
        let mut rng = rng_from_seed(3);
        let r = ScalarField::new(grid(), (0..100).map(|_| rng.random::<f64>()).collect(), "R").unwrap();
        assert!(affine_rmse(&r, &gt()).unwrap().rmse > 0.0);
        let c = ScalarField::from_fn(grid(), "C", |_| 4.0).unwrap();
        let fit = affine_rmse(&c, &gt()).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.s, 0.0);
    }

    #[test]
    fn slice_fit() {
        let x: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let gt: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let rec: Vec<f64> = gt.iter().zip(&x).map(|(g, v)| -0.5 * g + 2.0 * v + 7.0).collect();
        let fit = affine_rmse_1d(&x, &rec, &gt).unwrap();
        assert!(fit.rmse < 1e-10 && (fit.s + 2.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gauge_completeness(s in -3.0f64..3.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!(s.abs() > 1e-3);
            let f = gt();
            let a = AffineFit { s, c1, c2, b, rmse: 0.0, rank_deficient: false }.apply(&f);
            prop_assert!(affine_rmse(&a, &f).unwrap().rmse < 1e-10);
        }
    }
}
