use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform `nx × ny` discretization of `[t1_min, t1_max] × [t2_min, t2_max]`.
///
/// Cells are indexed `c = j * nx + i`, with `i` along `t1` and `j` along `t2`; parameters
/// are evaluated at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    /// `[t1_min, t1_max, t2_min, t2_max]`
    pub bounds: [f64; 4],
    pub nx: usize,
    pub ny: usize,
}

impl ParamGrid {
    pub fn new(bounds: [f64; 4], nx: usize, ny: usize) -> Result<Self> {
        let g = Self { bounds, nx, ny };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c, d] = self.bounds;
        if !(a < b) || !(c < d) || !self.bounds.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid(format!("grid bounds {:?} are not increasing", self.bounds)));
        }
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::invalid(format!("grid {}x{} is smaller than 4x4", self.nx, self.ny)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.bounds[1] - self.bounds[0]) / self.nx as f64,
            (self.bounds[3] - self.bounds[2]) / self.ny as f64,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        let [dx, dy] = self.spacing();
        dx * dy
    }

    pub fn volume(&self) -> f64 {
        (self.bounds[1] - self.bounds[0]) * (self.bounds[3] - self.bounds[2])
    }

    /// Center coordinate along `t1` of column `i` (may be called with out-of-range `i`
    /// to extend the lattice).
    pub fn x_at(&self, i: f64) -> f64 {
        self.bounds[0] + (i + 0.5) * self.spacing()[0]
    }

    pub fn y_at(&self, j: f64) -> f64 {
        self.bounds[2] + (j + 0.5) * self.spacing()[1]
    }

    pub fn center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        [self.x_at(i as f64), self.y_at(j as f64)]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|c| self.center(c)).collect()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [a, b, c, d] = self.bounds;
        p[0] >= a && p[0] <= b && p[1] >= c && p[1] <= d
    }

    /// Cell whose center is nearest to `p` (points outside are clamped).
    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let [dx, dy] = self.spacing();
        let i = ((p[0] - self.bounds[0]) / dx).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p[1] - self.bounds[2]) / dy).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        self.index(i, j)
    }

    /// Maps `t` affinely onto `[-1, 1]²`.
    pub fn normalize(&self, t: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d] = self.bounds;
        [2.0 * (t[0] - a) / (b - a) - 1.0, 2.0 * (t[1] - c) / (d - c) - 1.0]
    }

    /// Finite-difference gradient of cell values: central in the interior, second-order
    /// one-sided on the boundary rows and columns.
    pub fn gradient(&self, values: &[f64]) -> Vec<[f64; 2]> {
        let [dx, dy] = self.spacing();
        (0..self.len())
            .map(|c| {
                let (i, j) = self.coords(c);
                let along = |k: usize, n: usize, step: f64, at: &dyn Fn(usize) -> f64| -> f64 {
                    if k == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * step)
                    } else if k == n - 1 {
                        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * step)
                    } else {
                        (at(k + 1) - at(k - 1)) / (2.0 * step)
                    }
                };
                [
                    along(i, self.nx, dx, &|ii| values[self.index(ii, j)]),
                    along(j, self.ny, dy, &|jj| values[self.index(i, jj)]),
                ]
            })
            .collect()
    }

    /// Whether a cell lies on the outer ring, where [`ParamGrid::gradient`] is one-sided.
    pub fn on_boundary(&self, c: usize) -> bool {
        let (i, j) = self.coords(c);
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }
}
