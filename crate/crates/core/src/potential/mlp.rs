use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Softplus,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    pub fn d1(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
        }
    }

    #[inline]
    pub fn d2(self, z: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        self == Activation::Softplus
    }
}

/// Fully connected network with a scalar output and no activation on the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
pub struct ForwardCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform He-style initialization.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(Error::invalid(format!("layer sizes {sizes:?} must be positive and end in 1")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, w) in sizes.windows(2).enumerate() {
            let last = l + 2 == sizes.len();
            let limit = if last { (3.0 / w[0] as f64).sqrt() } else { (6.0 / w[0] as f64).sqrt() };
            weights.push(Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-limit..limit)));
            biases.push(if last {
                Array1::zeros(w[1])
            } else {
                Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5))
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, activation: Activation, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if sizes.len() < 2 || weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::invalid("layer count does not match weights"));
        }
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (i, o) = (sizes[l], sizes[l + 1]);
            ws.push(
                Array2::from_shape_vec((o, i), w)
                    .map_err(|_| Error::invalid(format!("layer {l} weights do not have {o}x{i} entries")))?,
            );
            if b.len() != o {
                return Err(Error::invalid(format!("layer {l} bias has {} entries, expected {o}", b.len())));
            }
            bs.push(Array1::from(b));
        }
        let m = Self {
            sizes,
            activation,
            weights: ws,
            biases: bs,
        };
        if !m.params().iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("non-finite network parameters"));
        }
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_weights(&self) -> Vec<Vec<f64>> {
        self.weights.iter().map(|w| w.iter().copied().collect()).collect()
    }

    pub fn layer_biases(&self) -> Vec<Vec<f64>> {
        self.biases.iter().map(|b| b.to_vec()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().zip(&self.biases).map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Parameters flattened layer by layer: row-major weights, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for x in w.iter_mut().chain(b.iter_mut()) {
                *x = p[k];
                k += 1;
            }
        }
    }

    /// Batched forward pass; `x` has one input per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array1<f64>, ForwardCache) {
        let mut post = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.weights.len());
        let n = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = post[l].dot(&w.t());
            z += b;
            if l + 1 < n {
                let a = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
                post.push(a);
            } else {
                pre.push(z);
            }
        }
        let out = pre[n - 1].column(0).to_owned();
        (out, ForwardCache { pre, post })
    }

    /// Gradient of `Σ_b adjoint_b · out_b` with respect to the flattened parameters.
    pub fn backward(&self, cache: &ForwardCache, adjoint: &Array1<f64>) -> Vec<f64> {
        let n = self.weights.len();
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(n);
        let mut delta = adjoint.clone().insert_axis(Axis(1));
        for l in (0..n).rev() {
            let gw = delta.t().dot(&cache.post[l]);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            if l > 0 {
                let mut d = delta.dot(&self.weights[l]);
                let act = self.activation;
                d.zip_mut_with(&cache.pre[l - 1], |g, &z| *g *= act.d1(z));
                delta = d;
            }
        }
        grads.reverse();
        let mut out = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            out.extend(gw.iter());
            out.extend(gb.iter());
        }
        out
    }

    /// Value, input gradient and input Hessian at a single point by forward-mode propagation.
    pub fn value_grad_hess(&self, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        assert_eq!(self.sizes[0], 2);
        let mut a: Vec<f64> = x.to_vec();
        let mut ja: Vec<[f64; 2]> = vec![[1.0, 0.0], [0.0, 1.0]];
        let mut ha: Vec<[f64; 3]> = vec![[0.0; 3]; 2];
        let n = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let rows = w.nrows();
            let mut z = b.to_vec();
            let mut jz = vec![[0.0; 2]; rows];
            let mut hz = vec![[0.0; 3]; rows];
            for r in 0..rows {
                let wr = w.row(r);
                for (k, &wk) in wr.iter().enumerate() {
                    z[r] += wk * a[k];
                    jz[r][0] += wk * ja[k][0];
                    jz[r][1] += wk * ja[k][1];
                    for m in 0..3 {
                        hz[r][m] += wk * ha[k][m];
                    }
                }
            }
            if l + 1 == n {
                let h = hz[0];
                return (z[0], jz[0], [[h[0], h[1]], [h[1], h[2]]]);
            }
            let act = self.activation;
            a = z.iter().map(|&v| act.apply(v)).collect();
            ha = (0..rows)
                .map(|r| {
                    let (s1, s2) = (act.d1(z[r]), act.d2(z[r]));
                    let j = jz[r];
                    [
                        s2 * j[0] * j[0] + s1 * hz[r][0],
                        s2 * j[0] * j[1] + s1 * hz[r][1],
                        s2 * j[1] * j[1] + s1 * hz[r][2],
                    ]
                })
                .collect();
            ja = (0..rows)
                .map(|r| {
                    let s1 = act.d1(z[r]);
                    [s1 * jz[r][0], s1 * jz[r][1]]
                })
                .collect();
        }
        unreachable!("network has at least one layer")
    }
}
