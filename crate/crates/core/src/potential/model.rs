use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, ForwardCache, Mlp};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::posterior::ParamGrid;
use crate::rng::rng_from_seed;

/// Learned log-partition potential `logZ_θ(t) = output_scale · net(normalize(t)) + ⟨c, t⟩ + b`.
///
/// Inputs are mapped affinely from the grid bounds onto `[-1, 1]²` before entering the network.
/// The affine term `(c1, c2, b)` is zero after training; it exists to express gauge transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    net: Mlp,
    bounds: [f64; 4],
    output_scale: f64,
    affine: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    bounds: [f64; 4],
    output_scale: f64,
    #[serde(default)]
    affine: [f64; 3],
}

/// Cached forward pass of a [`PotentialModel`] over a batch of points.
pub struct BatchEval {
    pub values: Vec<f64>,
    cache: ForwardCache,
}

impl PotentialModel {
    pub fn new(grid: &ParamGrid, hidden: usize, depth: usize, activation: Activation, output_scale: f64, seed: u64) -> Result<Self> {
        grid.validate()?;
        if hidden == 0 || depth == 0 {
            return Err(Error::invalid("network needs at least one hidden layer of positive width"));
        }
        if !(output_scale > 0.0) || !output_scale.is_finite() {
            return Err(Error::invalid(format!("output scale {output_scale} must be positive")));
        }
        let mut sizes = vec![2];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(1);
        Ok(Self {
            net: Mlp::new(&sizes, activation, &mut rng_from_seed(seed))?,
            bounds: grid.bounds,
            output_scale,
            affine: [0.0; 3],
        })
    }

    /// The same potential plus `c1·t1 + c2·t2 + b`.
    pub fn with_affine(&self, c1: f64, c2: f64, b: f64) -> Self {
        let mut m = self.clone();
        m.affine = [self.affine[0] + c1, self.affine[1] + c2, self.affine[2] + b];
        m
    }

    pub fn affine(&self) -> [f64; 3] {
        self.affine
    }

    pub fn activation(&self) -> Activation {
        self.net.activation()
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn layer_sizes(&self) -> &[usize] {
        self.net.sizes()
    }

    fn input_scale(&self) -> [f64; 2] {
        [2.0 / (self.bounds[1] - self.bounds[0]), 2.0 / (self.bounds[3] - self.bounds[2])]
    }

    fn normalize(&self, t: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d] = self.bounds;
        [2.0 * (t[0] - a) / (b - a) - 1.0, 2.0 * (t[1] - c) / (d - c) - 1.0]
    }

    pub fn value(&self, t: [f64; 2]) -> f64 {
        self.values(&[t])[0]
    }

    pub fn values(&self, points: &[[f64; 2]]) -> Vec<f64> {
        self.eval_batch(points).values
    }

    pub fn eval_batch(&self, points: &[[f64; 2]]) -> BatchEval {
        let x = Array2::from_shape_fn((points.len(), 2), |(r, k)| self.normalize(points[r])[k]);
        let (out, cache) = self.net.forward(x.view());
        BatchEval {
            values: out
                .iter()
                .zip(points)
                .map(|(v, t)| v * self.output_scale + self.affine[0] * t[0] + self.affine[1] * t[1] + self.affine[2])
                .collect(),
            cache,
        }
    }

    /// Gradient with respect to the flattened parameters of `Σ_b adjoint_b · value_b`.
    pub fn backward(&self, eval: &BatchEval, adjoints: &[f64]) -> Vec<f64> {
        let a = ndarray::Array1::from_iter(adjoints.iter().map(|x| x * self.output_scale));
        self.net.backward(&eval.cache, &a)
    }

    pub fn gradient(&self, t: [f64; 2]) -> [f64; 2] {
        let (_, g, _) = self.value_grad_hess(t);
        g
    }

    /// Exact input Hessian; zero almost everywhere for ReLU networks.
    pub fn hessian(&self, t: [f64; 2]) -> [[f64; 2]; 2] {
        let (_, _, h) = self.value_grad_hess(t);
        h
    }

    pub fn value_grad_hess(&self, t: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let s = self.input_scale();
        let k = self.output_scale;
        let (v, g, h) = self.net.value_grad_hess(self.normalize(t));
        let [c1, c2, b] = self.affine;
        (
            k * v + c1 * t[0] + c2 * t[1] + b,
            [k * g[0] * s[0] + c1, k * g[1] * s[1] + c2],
            [[k * h[0][0] * s[0] * s[0], k * h[0][1] * s[0] * s[1]], [k * h[1][0] * s[1] * s[0], k * h[1][1] * s[1] * s[1]]],
        )
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.net.set_params(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &Checkpoint {
                layer_sizes: self.net.sizes().to_vec(),
                activation: self.net.activation(),
                weights: self.net.layer_weights(),
                biases: self.net.layer_biases(),
                bounds: self.bounds,
                output_scale: self.output_scale,
                affine: self.affine,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = read_json(path)?;
        if c.layer_sizes.first() != Some(&2) {
            return Err(Error::invalid(format!("{}: checkpoint input size must be 2", path.display())));
        }
        ParamGrid::new(c.bounds, 4, 4)?;
        Ok(Self {
            net: Mlp::from_parts(c.layer_sizes, c.activation, c.weights, c.biases)?,
            bounds: c.bounds,
            output_scale: c.output_scale,
            affine: c.affine,
        })
    }
}

/// Exact reverse-mode gradient of `Σ_c adjoints[c] · logZ_θ(points[c])` with respect to the
/// flattened network parameters.
pub fn param_gradient(model: &PotentialModel, points: &[[f64; 2]], adjoints: &[f64]) -> Vec<f64> {
    assert_eq!(points.len(), adjoints.len(), "one adjoint per point");
    let eval = model.eval_batch(points);
    model.backward(&eval, adjoints)
}
