use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, parse_usize, read_csv_rows, read_json, sidecar_path, write_json, write_text};
use crate::posterior::ParamGrid;

/// One finite value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: ParamGrid,
    pub values: Vec<f64>,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    bounds: [f64; 4],
    nx: usize,
    ny: usize,
    label: String,
}

impl ScalarField {
    pub fn new(grid: ParamGrid, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.len())));
        }
        if let Some(c) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at cell {c}")));
        }
        Ok(Self {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn from_fn(grid: ParamGrid, label: impl Into<String>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, grid.centers().into_iter().map(f).collect(), label)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Values along `t1` at row `j`.
    pub fn row_slice(&self, j: usize) -> Vec<f64> {
        (0..self.grid.nx).map(|i| self.at(i, j)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::from("i,j,value\n");
        for c in 0..self.grid.len() {
            let (i, j) = self.grid.coords(c);
            s.push_str(&format!("{i},{j},{}\n", fmt_f64(self.values[c])));
        }
        write_text(path, &s)?;
        write_json(
            &sidecar_path(path),
            &Sidecar {
                bounds: self.grid.bounds,
                nx: self.grid.nx,
                ny: self.grid.ny,
                label: self.label.clone(),
            },
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta: Sidecar = read_json(&sidecar_path(path))?;
        let grid = ParamGrid::new(meta.bounds, meta.nx, meta.ny)?;
        let rows = read_csv_rows(path, |h| {
            if h == ["i", "j", "value"] {
                Ok(())
            } else {
                Err(format!("expected header 'i,j,value', got '{}'", h.join(",")))
            }
        })?;
        let mut values = vec![f64::NAN; grid.len()];
        for (line, f) in &rows {
            let (i, j) = (parse_usize(path, *line, &f[0])?, parse_usize(path, *line, &f[1])?);
            if i >= grid.nx || j >= grid.ny {
                return Err(Error::format(path, *line, format!("cell ({i}, {j}) outside {}x{}", grid.nx, grid.ny)));
            }
            let v = parse_f64(path, *line, &f[2])?;
            if !v.is_finite() {
                return Err(Error::format(path, *line, "non-finite value"));
            }
            values[grid.index(i, j)] = v;
        }
        let missing: Vec<usize> = values.iter().enumerate().filter(|(_, v)| v.is_nan()).map(|(c, _)| c).collect();
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        Self::new(grid, values, meta.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = ParamGrid::new([1.0, 5.0, -2.0, 2.0], 4, 5).unwrap();
        let f = ScalarField::from_fn(g, "F", |t| t[0].sin() * t[1] + 1.0 / 3.0).unwrap();
        let p = dir.path().join("f.csv");
        f.write(&p).unwrap();
        assert_eq!(ScalarField::read(&p).unwrap(), f);

        let text = std::fs::read_to_string(&p).unwrap().replace("i,j,value", "i,j,v");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(ScalarField::read(&p), Err(Error::Format { line: 1, .. })));
        assert!(ScalarField::new(g, vec![f64::NAN; g.len()], "x").is_err());
    }
}
