use std::path::Path;

use rayon::prelude::*;

use super::ParamGrid;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv_rows, write_text};
use crate::rng::{derive_seed, stage};
use crate::samplers::SamplerSpec;

/// Per-cell feature samples with their means and unbiased variances.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    grid: ParamGrid,
    dim: usize,
    samples: Vec<Vec<Vec<f64>>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Builds the table from per-cell replica feature vectors.
    pub fn from_samples(grid: ParamGrid, samples: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} cells of samples for a grid of {} cells",
                samples.len(),
                grid.len()
            )));
        }
        let missing: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(c, _)| c)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        let dim = samples[0][0].len();
        if dim == 0 {
            return Err(Error::invalid("feature dimension is zero"));
        }
        for (c, rows) in samples.iter().enumerate() {
            for r in rows {
                if r.len() != dim {
                    return Err(Error::invalid(format!("cell {c}: feature dimension {} != {dim}", r.len())));
                }
                if r.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("cell {c}: non-finite feature")));
                }
            }
        }
        let (means, variances) = samples
            .iter()
            .map(|rows| {
                let n = rows.len() as f64;
                let mean: Vec<f64> = (0..dim).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
                let var: Vec<f64> = (0..dim)
                    .map(|k| {
                        if rows.len() < 2 {
                            0.0
                        } else {
                            rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)
                        }
                    })
                    .collect();
                (mean, var)
            })
            .unzip();
        Ok(Self {
            grid,
            dim,
            samples,
            means,
            variances,
        })
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, cell: usize) -> &[f64] {
        &self.means[cell]
    }

    pub fn variance(&self, cell: usize) -> &[f64] {
        &self.variances[cell]
    }

    pub fn replicas(&self, cell: usize) -> usize {
        self.samples[cell].len()
    }

    pub fn samples(&self, cell: usize) -> &[Vec<f64>] {
        &self.samples[cell]
    }

    /// Feature `k` of every cell mean, in cell order.
    pub fn mean_component(&self, k: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[k]).collect()
    }

    /// Mean over cells of the within-cell variance of each feature, over cells with
    /// at least two replicas.
    pub fn pooled_variance(&self) -> Vec<f64> {
        let cells: Vec<usize> = (0..self.grid.len()).filter(|&c| self.replicas(c) >= 2).collect();
        (0..self.dim)
            .map(|k| {
                if cells.is_empty() {
                    0.0
                } else {
                    cells.iter().map(|&c| self.variances[c][k]).sum::<f64>() / cells.len() as f64
                }
            })
            .collect()
    }

    /// Across-cell variance of the mean of each feature.
    pub fn between_cell_variance(&self) -> Vec<f64> {
        let n = self.grid.len() as f64;
        (0..self.dim)
            .map(|k| {
                let mu = self.means.iter().map(|m| m[k]).sum::<f64>() / n;
                self.means.iter().map(|m| (m[k] - mu).powi(2)).sum::<f64>() / n
            })
            .collect()
    }
}

/// Samples `replicas` independent microstates at every cell center and records their
/// features. Each (cell, replica) pair owns an RNG stream derived from `seed`.
pub fn build_feature_table(grid: &ParamGrid, sampler: &SamplerSpec, replicas: usize, seed: u64) -> Result<FeatureTable> {
    grid.validate()?;
    sampler.validate()?;
    if replicas < 2 {
        return Err(Error::invalid(format!("replicas {replicas} < 2")));
    }
    let samples: Vec<Vec<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let t = grid.center(c);
            (0..replicas)
                .map(|r| {
                    let s = derive_seed(seed, stage::FEATURES, (c * replicas + r) as u64);
                    sampler.features(t, s)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::SamplerAtCell {
                    cell: c,
                    t1: t[0],
                    t2: t[1],
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    FeatureTable::from_samples(*grid, samples)
}

fn feature_header(dim: usize) -> String {
    let mut h = String::from("t1,t2");
    for k in 0..dim {
        h.push_str(&format!(",f{k}"));
    }
    h
}

/// Writes one row per replica: `t1,t2,f0,...,f{k-1}` with `(t1, t2)` the cell center.
pub fn write_feature_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut out = feature_header(table.dim());
    out.push('\n');
    for c in 0..table.grid().len() {
        let t = table.grid().center(c);
        for row in table.samples(c) {
            out.push_str(&fmt_f64(t[0]));
            out.push(',');
            out.push_str(&fmt_f64(t[1]));
            for x in row {
                out.push(',');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        }
    }
    write_text(path, &out)
}

/// Reads an externally generated feature CSV and groups rows by nearest cell center.
pub fn ingest_features(path: &Path, grid: &ParamGrid) -> Result<FeatureTable> {
    grid.validate()?;
    let rows = read_csv_rows(path, |h| {
        if h.len() < 3 || h[0] != "t1" || h[1] != "t2" {
            return Err(format!("header must start with 't1,t2' and name at least one feature, got '{}'", h.join(",")));
        }
        for (k, name) in h[2..].iter().enumerate() {
            if *name != format!("f{k}") {
                return Err(format!("feature column {} is named '{name}', expected 'f{k}'", k + 2));
            }
        }
        Ok(())
    })?;
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); grid.len()];
    for (line, fields) in rows {
        let vals = fields
            .iter()
            .map(|f| parse_f64(path, line, f))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(path, line, format!("non-finite value in column {k}")));
        }
        let t = [vals[0], vals[1]];
        if !grid.contains(t) {
            return Err(Error::format(path, line, format!("point ({}, {}) outside the grid", t[0], t[1])));
        }
        samples[grid.nearest(t)].push(vals[2..].to_vec());
    }
    // Canonical row order so statistics do not depend on the order of lines in the file.
    for rows in &mut samples {
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    let table = FeatureTable::from_samples(*grid, samples)?;
    if (0..grid.len()).any(|c| table.replicas(c) < 2) {
        log::warn!(
            "{}: some cells have a single row, their feature variances are zero",
            path.display()
        );
    }
    Ok(table)
}
