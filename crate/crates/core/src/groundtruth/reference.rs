use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{affine_rmse, central_gradient, AffineFit, ScalarField};
use crate::error::{Error, Result};
use crate::posterior::{build_feature_table, FeatureTable, ParamGrid};
use crate::rng::{derive_seed, stage};
use crate::samplers::SamplerSpec;

/// Reference derivative fields from a table of Ising features `(e, m)` on a `(T, H)` grid:
/// `E = −(e + H·m)` (mean energy per site) and `M = m`. When the grid is symmetric in `H`,
/// they are symmetrized with `E(T, −H) = E(T, H)` and `M(T, −H) = −M(T, H)`.
pub fn ising_reference_from_table(table: &FeatureTable) -> Result<(ScalarField, ScalarField)> {
    if table.dim() != 2 {
        return Err(Error::invalid(format!("Ising reference needs (e, m) features, got dimension {}", table.dim())));
    }
    let g = *table.grid();
    let mut e: Vec<f64> = (0..g.len())
        .map(|c| {
            let (mu, h) = (table.mean(c), g.center(c)[1]);
            -(mu[0] + h * mu[1])
        })
        .collect();
    let mut m: Vec<f64> = (0..g.len()).map(|c| table.mean(c)[1]).collect();
    let [.., lo, hi] = g.bounds;
    if (lo + hi).abs() <= 1e-12 * (hi - lo) {
        let (e0, m0) = (e.clone(), m.clone());
        for c in 0..g.len() {
            let (i, j) = g.coords(c);
            let mirror = g.index(i, g.ny - 1 - j);
            e[c] = 0.5 * (e0[c] + e0[mirror]);
            m[c] = 0.5 * (m0[c] - m0[mirror]);
        }
    } else {
        log::warn!("field range [{lo}, {hi}] is not symmetric; reference fields left unsymmetrized");
    }
    Ok((ScalarField::new(g, e, "E")?, ScalarField::new(g, m, "M")?))
}

/// Samples Ising features on `grid` and reduces them with [`ising_reference_from_table`].
pub fn ising_reference_fields(grid: &ParamGrid, sampler: &SamplerSpec, replicas: usize, seed: u64) -> Result<(ScalarField, ScalarField)> {
    if !matches!(sampler, SamplerSpec::Ising { .. }) {
        return Err(Error::invalid("reference fields need an Ising sampler"));
    }
    let table = build_feature_table(grid, sampler, replicas, derive_seed(seed, stage::REFERENCE, 0))?;
    ising_reference_from_table(&table)
}

/// Affine-invariant comparison of a reconstructed potential with a reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub fit: AffineFit,
    /// RMSE of `F` and of its two central-difference derivatives, under the given names.
    pub rmse: BTreeMap<String, f64>,
}

/// Fits `A(rec)` to `gt`, then reports the value RMSE and the RMSE of both derivatives,
/// keyed as `names = [F, ∂/∂t1, ∂/∂t2]`.
pub fn evaluate_reconstruction(rec: &ScalarField, gt: &ScalarField, names: [&str; 3]) -> Result<Evaluation> {
    let fit = affine_rmse(rec, gt)?;
    let fitted = fit.apply(rec);
    let (a1, a2) = central_gradient(&fitted);
    let (b1, b2) = central_gradient(gt);
    let rms = |x: &ScalarField, y: &ScalarField| {
        (x.values.iter().zip(&y.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.values.len() as f64).sqrt()
    };
    let mut rmse = BTreeMap::new();
    rmse.insert(names[0].to_string(), fit.rmse);
    rmse.insert(names[1].to_string(), rms(&a1, &b1));
    rmse.insert(names[2].to_string(), rms(&a2, &b2));
    Ok(Evaluation { fit, rmse })
}
