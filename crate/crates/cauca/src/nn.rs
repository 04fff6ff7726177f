//! Small dense feedforward networks with hand-derived reverse-mode adjoints.
//!
//! Used in two places:
//! - conditioners inside flow layers (need exact parameter and input
//!   gradients for maximum-likelihood training),
//! - randomly drawn location/scale functions in nonlinear structural models
//!   (need forward evaluation and input Jacobians for scores).
//!
//! Layout conventions: activations are row vectors, `y = x W + b` with `W`
//! of shape (fan_in, fan_out). Hidden layers apply the activation; the output
//! layer is linear. Flat parameter order is `W` row-major then `b`, layer by
//! layer.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// tanh(x)
    Tanh,
    /// tanh(x) + 0.1 x; strictly increasing, derivative in [0.1, 1.1]
    LeakyTanh,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LeakyTanh => x.tanh() + 0.1 * x,
        }
    }

    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        let t = x.tanh();
        match self {
            Activation::Tanh => 1.0 - t * t,
            Activation::LeakyTanh => 1.0 - t * t + 0.1,
        }
    }
}

/// Fully connected network with linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Cached pre-activations from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input and post-activation output of every layer; len = n_layers + 1.
    acts: Vec<Array2<f64>>,
    /// Pre-activation values of hidden layers; len = n_layers - 1.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Zero-initialized network. `sizes` lists [input, hidden..., output].
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParam {
                name: "sizes".into(),
                reason: format!("{sizes:?} must list at least input and output, all nonzero"),
            });
        }
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        let biases = sizes[1..].iter().map(|&s| Array1::zeros(s)).collect();
        Ok(Mlp { sizes: sizes.to_vec(), weights, biases, activation })
    }

    /// Xavier-uniform init of every layer, biases zero.
    pub fn init_xavier<R: Rng>(&mut self, rng: &mut R) {
        for w in &mut self.weights {
            let (fi, fo) = (w.nrows() as f64, w.ncols() as f64);
            let lim = (6.0 / (fi + fo)).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-lim..lim);
            }
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    /// Zero the output layer so the network maps everything to zero while
    /// hidden features stay random. Flow layers use this for identity init.
    pub fn zero_output_layer(&mut self) {
        self.weights.last_mut().expect("at least one layer").fill(0.0);
        self.biases.last_mut().expect("at least one layer").fill(0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    /// Load parameters from a flat slice; must hold exactly `n_params`.
    pub fn load_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.n_params());
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.iter_mut() {
                *v = src[at];
                at += 1;
            }
            for v in b.iter_mut() {
                *v = src[at];
                at += 1;
            }
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.clone();
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = a.dot(w);
            for mut row in pre.rows_mut() {
                row += b;
            }
            if l < last {
                pre.mapv_inplace(|v| self.activation.eval(v));
            }
            a = pre;
        }
        a
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        let mut pres = Vec::with_capacity(last);
        acts.push(x.clone());
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = a.dot(w);
            for mut row in pre.rows_mut() {
                row += b;
            }
            if l < last {
                pres.push(pre.clone());
                pre.mapv_inplace(|v| self.activation.eval(v));
            }
            a = pre.clone();
            acts.push(pre);
        }
        (a, MlpCache { acts, pre: pres })
    }

    /// Reverse pass. `grad_out` is dL/d(output); returns dL/d(input) and
    /// appends parameter gradients (same flat order as `append_params`) into
    /// `param_grad`, which must hold exactly `n_params` entries to accumulate
    /// into.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Array2<f64>,
        param_grad: &mut [f64],
    ) -> Array2<f64> {
        debug_assert_eq!(param_grad.len(), self.n_params());
        let last = self.n_layers() - 1;
        // offsets of each layer's parameter block
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut at = 0;
        for w in &self.weights {
            offsets.push(at);
            at += w.len() + w.ncols();
        }
        let mut g = grad_out.clone();
        for l in (0..self.n_layers()).rev() {
            if l < last {
                // through the activation of layer l
                let pre = &self.pre_of(cache, l);
                g.zip_mut_with(pre, |gv, &p| *gv *= self.activation.deriv(p));
            }
            let a_in = &cache.acts[l];
            let w = &self.weights[l];
            // dW = a_in^T g, db = column sums of g
            let dw = a_in.t().dot(&g);
            let off = offsets[l];
            let ncols = w.ncols();
            for (i, v) in dw.iter().enumerate() {
                param_grad[off + i] += v;
            }
            let boff = off + w.len();
            for (j, col) in g.columns().into_iter().enumerate() {
                param_grad[boff + j] += col.sum();
            }
            let _ = ncols;
            g = g.dot(&w.t());
        }
        g
    }

    fn pre_of<'c>(&self, cache: &'c MlpCache, l: usize) -> &'c Array2<f64> {
        &cache.pre[l]
    }

    /// Jacobian d(output)/d(input) at a single input row, by one reverse
    /// sweep per output coordinate. Exact.
    pub fn jacobian_row(&self, x: ArrayView1<f64>) -> Array2<f64> {
        let xr = x.insert_axis(ndarray::Axis(0)).to_owned();
        let (out, cache) = self.forward_cached(&xr);
        let mut jac = Array2::zeros((self.output_dim(), self.input_dim()));
        let mut scratch = vec![0.0; self.n_params()];
        for o in 0..self.output_dim() {
            let mut seed = Array2::zeros(out.raw_dim());
            seed[[0, o]] = 1.0;
            scratch.iter_mut().for_each(|v| *v = 0.0);
            let gin = self.backward(&cache, &seed, &mut scratch);
            for i in 0..self.input_dim() {
                jac[[o, i]] = gin[[0, i]];
            }
        }
        jac
    }

    pub fn forward_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let xr = x.insert_axis(ndarray::Axis(0)).to_owned();
        let out = self.forward(&xr);
        out.row(0).to_owned()
    }
}

// Stored as flat parameters plus declared shape.
#[derive(Serialize, Deserialize)]
struct MlpRepr {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut params = Vec::with_capacity(self.n_params());
        self.append_params(&mut params);
        MlpRepr { sizes: self.sizes.clone(), activation: self.activation, params }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = MlpRepr::deserialize(de)?;
        let mut mlp = Mlp::zeros(&repr.sizes, repr.activation).map_err(D::Error::custom)?;
        if repr.params.len() != mlp.n_params() {
            return Err(D::Error::custom(format!(
                "expected {} parameters for sizes {:?}, got {}",
                mlp.n_params(),
                repr.sizes,
                repr.params.len()
            )));
        }
        mlp.load_params(&repr.params);
        Ok(mlp)
    }
}

/// softplus with exact small/large-argument behaviour.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
