use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureTable, ParamGrid};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, parse_usize, read_csv_rows, read_json, sidecar_path, write_json, write_text};
use crate::rng::{derive_seed, rng_from_seed, stage};
use crate::samplers::OracleModel;

/// Grid posterior: row `c'` is the density over cells `c` of `p(t_c | samples drawn at t_{c'})`,
/// normalized so that `Σ_c density · cell_area = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorField {
    grid: ParamGrid,
    density: Vec<f64>,
    n_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMeta {
    pub bounds: [f64; 4],
    pub nx: usize,
    pub ny: usize,
    pub n_eff: f64,
}

/// Normalizes log-weights into a density row in place.
pub(crate) fn normalize_log_row(logw: &mut [f64], area: f64) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for w in logw.iter_mut() {
        *w = (*w - max).exp();
        z += *w;
    }
    let scale = 1.0 / (z * area);
    for w in logw.iter_mut() {
        *w *= scale;
    }
}

impl PosteriorField {
    /// Builds a field from unnormalized log-weights, one row per source cell.
    pub fn from_log_weights(grid: ParamGrid, mut logw: Vec<f64>, n_eff: f64) -> Result<Self> {
        let n = grid.len();
        if logw.len() != n * n {
            return Err(Error::GridMismatch(format!("{} log-weights for {n}x{n} rows", logw.len())));
        }
        if logw.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::invalid("log-weights must not be NaN or +inf"));
        }
        let area = grid.cell_area();
        logw.par_chunks_mut(n).for_each(|row| normalize_log_row(row, area));
        Ok(Self {
            grid,
            density: logw,
            n_eff,
        })
    }

    /// Validates and stores already-normalized densities.
    pub fn from_density(grid: ParamGrid, density: Vec<f64>, n_eff: f64) -> Result<Self> {
        let n = grid.len();
        if density.len() != n * n {
            return Err(Error::GridMismatch(format!("{} densities for {n}x{n} rows", density.len())));
        }
        if let Some((index, &value)) = density.iter().enumerate().find(|(_, d)| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::NegativeDensity { index, value });
        }
        let f = Self {
            grid,
            density,
            n_eff,
        };
        let worst = f.max_normalization_error();
        if worst > 1e-9 {
            return Err(Error::invalid(format!("posterior rows not normalized (max error {worst:e})")));
        }
        Ok(f)
    }

    pub fn uniform(grid: ParamGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            density: vec![1.0 / grid.volume(); n * n],
            n_eff: 0.0,
        }
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }

    pub fn row(&self, source: usize) -> &[f64] {
        let n = self.grid.len();
        &self.density[source * n..(source + 1) * n]
    }

    /// Row as probability masses (density × cell area).
    pub fn row_mass(&self, source: usize) -> Vec<f64> {
        let a = self.grid.cell_area();
        self.row(source).iter().map(|d| d * a).collect()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Largest `|Σ_c density·area − 1|` over rows.
    pub fn max_normalization_error(&self) -> f64 {
        let a = self.grid.cell_area();
        self.density
            .chunks(self.grid.len())
            .map(|r| (r.iter().sum::<f64>() * a - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn meta(&self) -> PosteriorMeta {
        PosteriorMeta {
            bounds: self.grid.bounds,
            nx: self.grid.nx,
            ny: self.grid.ny,
            n_eff: self.n_eff,
        }
    }

    /// Writes `row_index,col_index,density` plus a JSON sidecar with the grid and `n_eff`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let n = self.grid.len();
        let mut out = String::with_capacity(n * n * 32);
        out.push_str("row_index,col_index,density\n");
        for r in 0..n {
            for (c, d) in self.row(r).iter().enumerate() {
                out.push_str(&format!("{r},{c},{}\n", fmt_f64(*d)));
            }
        }
        write_text(path, &out)?;
        write_json(&sidecar_path(path), &self.meta())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: PosteriorMeta = read_json(&sidecar_path(path))?;
        let grid = ParamGrid::new(meta.bounds, meta.nx, meta.ny)?;
        let n = grid.len();
        let rows = read_csv_rows(path, |h| {
            if h == ["row_index", "col_index", "density"] {
                Ok(())
            } else {
                Err(format!("expected header 'row_index,col_index,density', got '{}'", h.join(",")))
            }
        })?;
        if rows.len() != n * n {
            return Err(Error::format(path, rows.len() + 1, format!("expected {} rows, found {}", n * n, rows.len())));
        }
        let mut density = vec![0.0; n * n];
        for (line, f) in rows {
            let (r, c) = (parse_usize(path, line, &f[0])?, parse_usize(path, line, &f[1])?);
            if r >= n || c >= n {
                return Err(Error::format(path, line, format!("index ({r}, {c}) outside {n}x{n}")));
            }
            density[r * n + c] = parse_f64(path, line, &f[2])?;
        }
        Self::from_density(grid, density, meta.n_eff)
    }
}

/// Per-feature weighting of squared mean differences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    /// Divide by the pooled within-cell variance, approximating whitened features.
    #[default]
    InverseVariance,
}

fn feature_weights(table: &FeatureTable, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0; table.dim()],
        Weighting::InverseVariance => {
            let pooled = table.pooled_variance();
            let between = table.between_cell_variance();
            pooled
                .iter()
                .zip(&between)
                .enumerate()
                .map(|(k, (&v, &b))| {
                    let floor = 1e-12 * b.max(1e-300);
                    if v > floor {
                        1.0 / v
                    } else if b > 0.0 {
                        log::warn!("feature {k} has zero within-cell variance; weight clamped to its across-cell variance");
                        1.0 / b
                    } else {
                        log::warn!("feature {k} is constant over the grid; weight set to zero");
                        0.0
                    }
                })
                .collect()
        }
    }
}

fn weighted_sq_dist(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), wk)| wk * (x - y) * (x - y)).sum()
}

/// Gaussian-feature posterior `P[c'][c] ∝ exp(−(n_eff/2) Σ_k w_k (μ_k(t_c) − μ_k(t_{c'}))²)`
/// under a uniform prior on the grid.
pub fn posterior_from_features(table: &FeatureTable, n_eff: f64, weighting: Weighting) -> Result<PosteriorField> {
    if !(n_eff > 0.0) || !n_eff.is_finite() {
        return Err(Error::invalid(format!("n_eff {n_eff} must be positive")));
    }
    let grid = *table.grid();
    let n = grid.len();
    let w = feature_weights(table, weighting);
    let mut logw = vec![0.0; n * n];
    logw.par_chunks_mut(n).enumerate().for_each(|(src, row)| {
        let mu_src = table.mean(src);
        for (c, x) in row.iter_mut().enumerate() {
            *x = -0.5 * n_eff * weighted_sq_dist(table.mean(c), mu_src, &w);
        }
    });
    PosteriorField::from_log_weights(grid, logw, n_eff)
}

/// Largest `n_eff` for which every row keeps at least 5 cells above 1% of its maximum.
pub fn auto_n_eff(table: &FeatureTable, weighting: Weighting) -> f64 {
    let n = table.grid().len();
    let w = feature_weights(table, weighting);
    let worst_fifth = (0..n)
        .into_par_iter()
        .map(|src| {
            let mut d: Vec<f64> = (0..n)
                .map(|c| weighted_sq_dist(table.mean(c), table.mean(src), &w))
                .collect();
            let k = 4.min(n - 1);
            d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
            d[k]
        })
        .reduce(|| 0.0, f64::max);
    if worst_fifth > 0.0 {
        2.0 * 100f64.ln() / worst_fifth
    } else {
        1.0
    }
}

/// Exact single-row posterior of the oracle model from the summed sufficient statistic of
/// `n_samples` draws: `log p(t_c) = ⟨t_c, Σ f(x_i)⟩ − N log Z(t_c)` + const.
pub fn oracle_posterior_row(grid: &ParamGrid, model: &OracleModel, stat_sum: [f64; 2], n_samples: usize) -> Vec<f64> {
    oracle_log_posterior_row(grid, model, stat_sum, n_samples).into_iter().map(f64::exp).collect()
}

/// Logarithm of [`oracle_posterior_row`], exact where the density itself underflows.
pub fn oracle_log_posterior_row(grid: &ParamGrid, model: &OracleModel, stat_sum: [f64; 2], n_samples: usize) -> Vec<f64> {
    let nf = n_samples as f64;
    let mut row: Vec<f64> = grid
        .centers()
        .iter()
        .map(|t| t[0] * stat_sum[0] + t[1] * stat_sum[1] - nf * model.log_partition(*t))
        .collect();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + row.iter().map(|w| (w - max).exp()).sum::<f64>().ln() + grid.cell_area().ln();
    row.iter_mut().for_each(|w| *w -= log_z);
    row
}

/// Exact-likelihood oracle posterior from a feature table of oracle block means: row `c` uses
/// the summed statistics of that cell's replicas as `N` draws.
pub fn oracle_posterior_from_table(table: &FeatureTable, model: &OracleModel) -> Result<PosteriorField> {
    if table.dim() != 2 {
        return Err(Error::invalid(format!("oracle features have dimension 2, got {}", table.dim())));
    }
    let grid = *table.grid();
    let half = (model.n_spins / 2) as f64;
    let reps: Vec<usize> = (0..grid.len()).map(|c| table.replicas(c)).collect();
    if reps.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::invalid("oracle posterior needs the same replica count in every cell"));
    }
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let mut sum = [0.0; 2];
            for x in table.samples(c) {
                sum[0] += x[0] * half;
                sum[1] += x[1] * half;
            }
            oracle_posterior_row(&grid, model, sum, reps[c])
        })
        .collect();
    PosteriorField::from_density(grid, rows.concat(), reps[0] as f64)
}

/// Oracle posterior for every source cell, with `n_samples` exact draws at each center.
pub fn oracle_posterior(grid: &ParamGrid, model: &OracleModel, n_samples: usize, seed: u64) -> Result<PosteriorField> {
    grid.validate()?;
    let n = grid.len();
    let half = model.n_spins / 2;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|src| {
            let t = grid.center(src);
            let mut rng = rng_from_seed(derive_seed(seed, stage::ORACLE_POSTERIOR, src as u64));
            let p = [0.5 * (1.0 + t[0].tanh()), 0.5 * (1.0 + t[1].tanh())];
            let mut sum = [0.0; 2];
            for _ in 0..n_samples * half {
                for b in 0..2 {
                    sum[b] += if rand::Rng::random::<f64>(&mut rng) < p[b] { 1.0 } else { -1.0 };
                }
            }
            oracle_posterior_row(grid, model, sum, n_samples)
        })
        .collect();
    Ok(PosteriorField {
        grid: *grid,
        density: rows.concat(),
        n_eff: n_samples as f64,
    })
}

/// Smoothed hard-label target `∝ exp(−‖t − t'‖² / (2σ²))`, normalized on the grid.
pub fn smoothed_target(grid: &ParamGrid, sigma: f64) -> Result<PosteriorField> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma {sigma} must be positive")));
    }
    let centers = grid.centers();
    let n = grid.len();
    let mut logw = vec![0.0; n * n];
    for (src, row) in logw.chunks_mut(n).enumerate() {
        let s = centers[src];
        for (c, x) in row.iter_mut().enumerate() {
            let t = centers[c];
            *x = -((t[0] - s[0]).powi(2) + (t[1] - s[1]).powi(2)) / (2.0 * sigma * sigma);
        }
    }
    PosteriorField::from_log_weights(*grid, logw, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::SamplerSpec;
    use proptest::prelude::*;

    fn grid(n: usize) -> ParamGrid {
        ParamGrid::new([-1.0, 1.0, -1.0, 1.0], n, n).unwrap()
    }

    fn synthetic_table(g: ParamGrid, f: impl Fn([f64; 2]) -> Vec<f64>) -> FeatureTable {
        let samples = g
            .centers()
            .into_iter()
            .map(|t| {
                let m = f(t);
                vec![m.iter().map(|x| x + 0.01).collect(), m.iter().map(|x| x - 0.01).collect()]
            })
            .collect();
        FeatureTable::from_samples(g, samples).unwrap()
    }

    #[test]
    fn tiny_n_eff_is_uniform_and_large_n_eff_is_self_peaked() {
        let g = grid(6);
        let t = synthetic_table(g, |t| vec![t[0], t[1] * 2.0]);
        let flat = posterior_from_features(&t, 1e-15, Weighting::InverseVariance).unwrap();
        for d in flat.density() {
            assert!((d - 1.0 / g.volume()).abs() < 1e-9);
        }
        let sharp = posterior_from_features(&t, 1e3, Weighting::Uniform).unwrap();
        for src in 0..g.len() {
            let row = sharp.row(src);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, src);
        }
        assert!(posterior_from_features(&t, 0.0, Weighting::Uniform).is_err());
    }

    #[test]
    fn identical_means_give_identical_columns() {
        let g = grid(5);
        // cells 0 and 1 share the same feature mean
        let t = synthetic_table(g, |t| if t[1] < -0.7 && t[0] < -0.3 { vec![0.0, 0.0] } else { vec![t[0], t[1]] });
        let p = posterior_from_features(&t, 3.0, Weighting::InverseVariance).unwrap();
        for src in 0..g.len() {
            assert!((p.row(src)[0] - p.row(src)[1]).abs() <= 1e-12 * p.row(src)[0].max(1.0));
        }
    }

    #[test]
    fn zero_variance_weights_fall_back() {
        let g = grid(4);
        let samples = g.centers().into_iter().map(|t| vec![vec![t[0], t[1]]]).collect();
        let t = FeatureTable::from_samples(g, samples).unwrap();
        let p = posterior_from_features(&t, 5.0, Weighting::InverseVariance).unwrap();
        assert!(p.density().iter().all(|d| d.is_finite()));
        assert!(p.max_normalization_error() < 1e-12);
    }

    #[test]
    fn inverse_variance_absorbs_feature_scale() {
        let g = grid(5);
        let table = build_tiny_oracle_table(g);
        let scaled_samples: Vec<Vec<Vec<f64>>> = (0..g.len())
            .map(|c| table.samples(c).iter().map(|r| vec![3.0 * r[0] + 1.0, -0.5 * r[1] + 7.0]).collect())
            .collect();
        let permuted_samples: Vec<Vec<Vec<f64>>> = (0..g.len())
            .map(|c| table.samples(c).iter().map(|r| vec![r[1], r[0]]).collect())
            .collect();
        let scaled = FeatureTable::from_samples(g, scaled_samples).unwrap();
        let permuted = FeatureTable::from_samples(g, permuted_samples).unwrap();
        let base = posterior_from_features(&table, 2.0, Weighting::InverseVariance).unwrap();
        let a = posterior_from_features(&scaled, 2.0, Weighting::InverseVariance).unwrap();
        let b = posterior_from_features(&permuted, 2.0, Weighting::InverseVariance).unwrap();
        for ((x, y), z) in base.density().iter().zip(a.density()).zip(b.density()) {
            assert!((x - y).abs() <= 1e-9 * x.max(1e-3));
            assert!((x - z).abs() <= 1e-12 * x.max(1.0));
        }
    }

    fn build_tiny_oracle_table(g: ParamGrid) -> FeatureTable {
        crate::posterior::build_feature_table(&g, &SamplerSpec::Oracle { n_spins: 8 }, 8, 4).unwrap()
    }

    #[test]
    fn oracle_posterior_without_samples_is_uniform() {
        let g = grid(6);
        let m = OracleModel::new(4).unwrap();
        let row = oracle_posterior_row(&g, &m, [0.0, 0.0], 0);
        assert!(row.iter().all(|d| (d - 1.0 / g.volume()).abs() < 1e-12));
    }

    #[test]
    fn oracle_single_sample_matches_enumerated_bayes() {
        // 4-cell grid is below the 4x4 minimum for pipelines, so build it by hand.
        let g = ParamGrid { bounds: [-1.0, 1.0, -1.0, 1.0], nx: 2, ny: 2 };
        let m = OracleModel::new(2).unwrap();
        let x = [1i8, -1];
        let stat = crate::samplers::oracle_stats(&x);
        let row = oracle_posterior_row(&g, &m, stat, 1);
        // p(x | h) = Π_spins e^{h s} / (2 cosh h), uniform prior.
        let lik: Vec<f64> = g
            .centers()
            .iter()
            .map(|h| (h[0] * 1.0).exp() / (2.0 * h[0].cosh()) * (h[1] * -1.0).exp() / (2.0 * h[1].cosh()))
            .collect();
        let z: f64 = lik.iter().sum::<f64>() * g.cell_area();
        for (r, l) in row.iter().zip(&lik) {
            assert!((r - l / z).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_posterior_from_oracle_features() {
        let g = ParamGrid::new([-1.0, 1.0, -1.0, 1.0], 6, 6).unwrap();
        let m = OracleModel::new(4).unwrap();
        let table = crate::posterior::build_feature_table(&g, &crate::samplers::SamplerSpec::Oracle { n_spins: 4 }, 50, 2).unwrap();
        let post = oracle_posterior_from_table(&table, &m).unwrap();
        assert_eq!(post.n_eff(), 50.0);
        assert!(post.max_normalization_error() < 1e-12);
        let hits = (0..g.len()).filter(|&c| {
            let row = post.row(c);
            let arg = (0..g.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            let ((i, j), (k, l)) = (g.coords(arg), g.coords(c));
            i.abs_diff(k) <= 1 && j.abs_diff(l) <= 1
        }).count();
        assert!(hits >= 30, "{hits}");
    }

    #[test]
    fn oracle_posterior_concentrates() {
        let g = ParamGrid::new([-1.0, 1.5, -1.0, 1.5], 20, 20).unwrap();
        let m = OracleModel::new(2).unwrap();
        let src = g.nearest([0.5, 0.5]);
        let t = g.center(src);
        let n = 10_000;
        let x = crate::samplers::oracle_sample(&crate::SamplerParams::new(t, 1, 8), 2 * n).unwrap();
        let row = oracle_posterior_row(&g, &m, crate::samplers::oracle_stats(&x), n);
        let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        let (bi, bj) = g.coords(best);
        let (si, sj) = g.coords(src);
        assert!(bi.abs_diff(si) <= 1 && bj.abs_diff(sj) <= 1);
    }

    #[test]
    fn smoothed_target_rows_are_gaussian() {
        let g = grid(8);
        let p = smoothed_target(&g, 0.3).unwrap();
        let c = g.centers();
        let r = p.row(10);
        let ratio = r[11] / r[10];
        let d2 = (c[11][0] - c[10][0]).powi(2);
        assert!((ratio - (-d2 / 0.18).exp()).abs() < 1e-12);
    }

    #[test]
    fn auto_n_eff_keeps_five_cells() {
        let g = grid(8);
        let t = synthetic_table(g, |t| vec![t[0] * 4.0, t[1]]);
        let n = auto_n_eff(&t, Weighting::Uniform);
        let p = posterior_from_features(&t, n * 0.999, Weighting::Uniform).unwrap();
        for src in 0..g.len() {
            let row = p.row(src);
            let max = row.iter().copied().fold(0.0, f64::max);
            assert!(row.iter().filter(|&&d| d >= 0.01 * max).count() >= 5);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(4);
        let p = smoothed_target(&g, 0.5).unwrap();
        let path = dir.path().join("post.csv");
        p.write(&path).unwrap();
        let back = PosteriorField::read(&path).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn rows_are_normalized(n_eff in 1e-3f64..1e3, seed in 0u64..1000) {
            let g = grid(5);
            let mut rng = rng_from_seed(seed);
            let samples = (0..g.len())
                .map(|_| (0..3).map(|_| (0..3).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).collect())
                .collect();
            let t = FeatureTable::from_samples(g, samples).unwrap();
            for w in [Weighting::Uniform, Weighting::InverseVariance] {
                let p = posterior_from_features(&t, n_eff, w).unwrap();
                prop_assert!(p.max_normalization_error() <= 1e-12);
                prop_assert!(p.density().iter().all(|d| *d >= 0.0 && d.is_finite()));
            }
        }
    }
}
