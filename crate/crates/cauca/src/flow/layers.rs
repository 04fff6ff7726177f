//! Invertible layers composed into the encoder.
//!
//! All layers operate in the encoding direction (observations toward the
//! base density) on batches with one point per row, and report the
//! per-sample log |det Jacobian| of that direction. Every layer carries a
//! hand-derived reverse pass: given upstream gradients with respect to its
//! output and its log-determinant, it accumulates parameter gradients and
//! returns the gradient with respect to its input.
//!
//! - `Standardize`: frozen affine whitening fit on training data.
//! - `Lu`: dense linear map parametrized as L U with unit-lower L and
//!   exponential diagonal on U, so the log-determinant is a plain sum.
//! - `Coupling`: half the coordinates pass through unchanged and condition
//!   a network that emits rational-quadratic spline parameters for the
//!   other half. Zero output-layer init makes the layer start as the
//!   identity while hidden features stay random.

use crate::error::{Error, Result};
use crate::flow::spline::{Rqs, RqsScratch};
use crate::nn::{Activation, Mlp, MlpCache};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Frozen per-coordinate whitening: y = (x - mu) / sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardize {
    pub mu: Array1<f64>,
    pub log_sigma: Array1<f64>,
}

impl Standardize {
    pub fn identity(d: usize) -> Self {
        Standardize { mu: Array1::zeros(d), log_sigma: Array1::zeros(d) }
    }

    /// Fit location and scale per coordinate; scales floored at 1e-6.
    pub fn from_data(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mu = x.sum_axis(ndarray::Axis(0)) / n;
        let mut var: Array1<f64> = Array1::zeros(x.ncols());
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                let c = v - mu[j];
                var[j] += c * c;
            }
        }
        let log_sigma = var.mapv(|v| (v / n).sqrt().max(1e-6).ln());
        Standardize { mu, log_sigma }
    }
}

/// Dense linear layer y = W x with W = L U.
///
/// Parameters: strictly lower entries of L (row-major), log-diagonal of U,
/// strictly upper entries of U (row-major). log |det W| = sum(log_diag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LuLayer {
    d: usize,
    lower: Vec<f64>,
    log_diag: Vec<f64>,
    upper: Vec<f64>,
}

impl LuLayer {
    /// Identity-initialized layer.
    pub fn identity(d: usize) -> Self {
        let off = d * (d - 1) / 2;
        LuLayer { d, lower: vec![0.0; off], log_diag: vec![0.0; d], upper: vec![0.0; off] }
    }

    fn l_matrix(&self) -> Array2<f64> {
        let mut l = Array2::eye(self.d);
        let mut at = 0;
        for i in 0..self.d {
            for j in 0..i {
                l[[i, j]] = self.lower[at];
                at += 1;
            }
        }
        l
    }

    fn u_matrix(&self) -> Array2<f64> {
        let mut u = Array2::zeros((self.d, self.d));
        let mut at = 0;
        for i in 0..self.d {
            u[[i, i]] = self.log_diag[i].exp();
            for j in (i + 1)..self.d {
                u[[i, j]] = self.upper[at];
                at += 1;
            }
        }
        u
    }

    pub fn weight(&self) -> Array2<f64> {
        self.l_matrix().dot(&self.u_matrix())
    }

    fn log_det(&self) -> f64 {
        self.log_diag.iter().sum()
    }

    /// Solve W x = y row-wise by the two triangular systems.
    fn solve_rows(&self, y: &Array2<f64>) -> Array2<f64> {
        let d = self.d;
        let l = self.l_matrix();
        let u = self.u_matrix();
        let mut out = Array2::zeros(y.raw_dim());
        let mut t = vec![0.0; d];
        for (r, row) in y.rows().into_iter().enumerate() {
            // L t = y (unit diagonal)
            for i in 0..d {
                let mut v = row[i];
                for j in 0..i {
                    v -= l[[i, j]] * t[j];
                }
                t[i] = v;
            }
            // U x = t
            for i in (0..d).rev() {
                let mut v = t[i];
                for j in (i + 1)..d {
                    v -= u[[i, j]] * out[[r, j]];
                }
                out[[r, i]] = v / u[[i, i]];
            }
        }
        out
    }
}

/// Spline coupling layer. `transformed[i]` marks coordinates rewritten by
/// the spline; the rest stay fixed and feed the conditioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    transformed: Vec<bool>,
    id_idx: Vec<usize>,
    tr_idx: Vec<usize>,
    net: Mlp,
    spline: Rqs,
}

impl CouplingLayer {
    pub fn new<R: Rng>(
        transformed: Vec<bool>,
        hidden: &[usize],
        spline: Rqs,
        rng: &mut R,
    ) -> Result<Self> {
        let id_idx: Vec<usize> =
            (0..transformed.len()).filter(|&i| !transformed[i]).collect();
        let tr_idx: Vec<usize> =
            (0..transformed.len()).filter(|&i| transformed[i]).collect();
        if id_idx.is_empty() || tr_idx.is_empty() {
            return Err(Error::InvalidParam {
                name: "transformed".into(),
                reason: "coupling needs both a fixed and a transformed part".into(),
            });
        }
        let mut sizes = vec![id_idx.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(tr_idx.len() * spline.n_raw());
        let mut net = Mlp::zeros(&sizes, Activation::Tanh)?;
        net.init_xavier(rng);
        net.zero_output_layer();
        Ok(CouplingLayer { transformed, id_idx, tr_idx, net, spline })
    }

    fn gather_fixed(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.id_idx.len()));
        for (c, &j) in self.id_idx.iter().enumerate() {
            out.column_mut(c).assign(&x.column(j));
        }
        out
    }
}

/// One invertible stage of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FlowLayer {
    Standardize(Standardize),
    Lu(LuLayer),
    Coupling(CouplingLayer),
}

/// Forward intermediates a layer needs for its reverse pass.
#[derive(Debug)]
pub enum LayerCache {
    Standardize { y: Array2<f64> },
    Lu { x: Array2<f64>, l: Array2<f64>, u: Array2<f64>, w: Array2<f64> },
    Coupling { x: Array2<f64>, raw: Array2<f64>, mlp: MlpCache },
}

impl FlowLayer {
    pub fn n_params(&self) -> usize {
        match self {
            FlowLayer::Standardize(s) => 2 * s.mu.len(),
            FlowLayer::Lu(l) => l.d * l.d,
            FlowLayer::Coupling(c) => c.net.n_params(),
        }
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        match self {
            FlowLayer::Standardize(s) => {
                out.extend(s.mu.iter());
                out.extend(s.log_sigma.iter());
            }
            FlowLayer::Lu(l) => {
                out.extend(&l.lower);
                out.extend(&l.log_diag);
                out.extend(&l.upper);
            }
            FlowLayer::Coupling(c) => c.net.append_params(out),
        }
    }

    pub fn load_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.n_params());
        match self {
            FlowLayer::Standardize(s) => {
                let d = s.mu.len();
                for (i, v) in s.mu.iter_mut().enumerate() {
                    *v = src[i];
                }
                for (i, v) in s.log_sigma.iter_mut().enumerate() {
                    *v = src[d + i];
                }
            }
            FlowLayer::Lu(l) => {
                let off = l.lower.len();
                l.lower.copy_from_slice(&src[0..off]);
                l.log_diag.copy_from_slice(&src[off..off + l.d]);
                l.upper.copy_from_slice(&src[off + l.d..]);
            }
            FlowLayer::Coupling(c) => c.net.load_params(src),
        }
    }

    /// Whether each parameter is excluded from optimization.
    pub fn append_frozen(&self, out: &mut Vec<bool>) {
        let frozen = matches!(self, FlowLayer::Standardize(_));
        out.extend(std::iter::repeat_n(frozen, self.n_params()));
    }

    /// Apply the layer. Returns the output batch and per-sample
    /// log |det Jacobian|.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let (y, lam, _) = self.forward_impl(x, false);
        (y, lam)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>, LayerCache) {
        let (y, lam, cache) = self.forward_impl(x, true);
        (y, lam, cache.expect("cache requested"))
    }

    fn forward_impl(
        &self,
        x: &Array2<f64>,
        want_cache: bool,
    ) -> (Array2<f64>, Array1<f64>, Option<LayerCache>) {
        let n = x.nrows();
        match self {
            FlowLayer::Standardize(s) => {
                let mut y = x.clone();
                for mut row in y.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (*v - s.mu[j]) * (-s.log_sigma[j]).exp();
                    }
                }
                let lam = Array1::from_elem(n, -s.log_sigma.sum());
                let cache = want_cache.then(|| LayerCache::Standardize { y: y.clone() });
                (y, lam, cache)
            }
            FlowLayer::Lu(lu) => {
                let l = lu.l_matrix();
                let u = lu.u_matrix();
                let w = l.dot(&u);
                let y = x.dot(&w.t());
                let lam = Array1::from_elem(n, lu.log_det());
                let cache = want_cache.then(|| LayerCache::Lu { x: x.clone(), l, u, w });
                (y, lam, cache)
            }
            FlowLayer::Coupling(c) => {
                let fixed = c.gather_fixed(x);
                let (raw, mlp) = if want_cache {
                    let (r, m) = c.net.forward_cached(&fixed);
                    (r, Some(m))
                } else {
                    (c.net.forward(&fixed), None)
                };
                let mut y = x.clone();
                let mut lam = Array1::zeros(n);
                let rlen = c.spline.n_raw();
                let mut scratch = RqsScratch::new(c.spline.k_bins);
                for s_i in 0..n {
                    let row = raw.row(s_i);
                    let rowslice = row.as_slice().expect("contiguous row");
                    for (j, &col) in c.tr_idx.iter().enumerate() {
                        let (yv, l) = c.spline.forward(
                            &rowslice[j * rlen..(j + 1) * rlen],
                            x[[s_i, col]],
                            &mut scratch,
                        );
                        y[[s_i, col]] = yv;
                        lam[s_i] += l;
                    }
                }
                let cache = want_cache.then(|| LayerCache::Coupling {
                    x: x.clone(),
                    raw,
                    mlp: mlp.expect("cached net pass"),
                });
                (y, lam, cache)
            }
        }
    }

    /// Invert the layer on a batch of outputs.
    pub fn inverse(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            FlowLayer::Standardize(s) => {
                let mut x = y.clone();
                for mut row in x.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = *v * s.log_sigma[j].exp() + s.mu[j];
                    }
                }
                Ok(x)
            }
            FlowLayer::Lu(lu) => Ok(lu.solve_rows(y)),
            FlowLayer::Coupling(c) => {
                // fixed coordinates are unchanged, so the conditioner sees
                // the same inputs as in the forward pass
                let fixed = c.gather_fixed(y);
                let raw = c.net.forward(&fixed);
                let mut x = y.clone();
                let rlen = c.spline.n_raw();
                let mut scratch = RqsScratch::new(c.spline.k_bins);
                for s_i in 0..y.nrows() {
                    let row = raw.row(s_i);
                    let rowslice = row.as_slice().expect("contiguous row");
                    for (j, &col) in c.tr_idx.iter().enumerate() {
                        let (xv, _) = c.spline.inverse(
                            &rowslice[j * rlen..(j + 1) * rlen],
                            y[[s_i, col]],
                            &mut scratch,
                        );
                        x[[s_i, col]] = xv;
                    }
                }
                Ok(x)
            }
        }
    }

    /// Reverse pass. `gy` is dL/d(output), `glam[s]` is dL/d(log-det of
    /// sample s). Parameter gradients accumulate into `param_grad`, which
    /// must be this layer's slice of the flat gradient. Returns dL/d(input).
    pub fn backward(
        &self,
        cache: &LayerCache,
        gy: &Array2<f64>,
        glam: &Array1<f64>,
        param_grad: &mut [f64],
    ) -> Array2<f64> {
        debug_assert_eq!(param_grad.len(), self.n_params());
        match (self, cache) {
            (FlowLayer::Standardize(s), LayerCache::Standardize { y }) => {
                let d = s.mu.len();
                let glam_sum: f64 = glam.sum();
                let mut gx = gy.clone();
                for j in 0..d {
                    let inv_sigma = (-s.log_sigma[j]).exp();
                    let mut gmu = 0.0;
                    let mut grho = 0.0;
                    for s_i in 0..gy.nrows() {
                        gx[[s_i, j]] = gy[[s_i, j]] * inv_sigma;
                        gmu += -gy[[s_i, j]] * inv_sigma;
                        grho += -gy[[s_i, j]] * y[[s_i, j]];
                    }
                    param_grad[j] += gmu;
                    param_grad[d + j] += grho - glam_sum;
                }
                gx
            }
            (FlowLayer::Lu(lu), LayerCache::Lu { x, l, u, w }) => {
                let gx = gy.dot(w);
                // y_i = sum_j W_ij x_j per row: gW = gy^T x
                let gw = gy.t().dot(x);
                let gl = gw.dot(&u.t());
                let gu = l.t().dot(&gw);
                let glam_sum: f64 = glam.sum();
                let mut at = 0;
                for i in 0..lu.d {
                    for j in 0..i {
                        param_grad[at] += gl[[i, j]];
                        at += 1;
                    }
                }
                for i in 0..lu.d {
                    param_grad[at] += gu[[i, i]] * u[[i, i]] + glam_sum;
                    at += 1;
                }
                for i in 0..lu.d {
                    for j in (i + 1)..lu.d {
                        param_grad[at] += gu[[i, j]];
                        at += 1;
                    }
                }
                gx
            }
            (FlowLayer::Coupling(c), LayerCache::Coupling { x, raw, mlp }) => {
                let n = x.nrows();
                let rlen = c.spline.n_raw();
                let mut graw = Array2::zeros(raw.raw_dim());
                let mut gx = gy.clone();
                let mut scratch = RqsScratch::new(c.spline.k_bins);
                for s_i in 0..n {
                    let rrow = raw.row(s_i);
                    let rslice = rrow.as_slice().expect("contiguous row");
                    let mut grow = graw.row_mut(s_i);
                    let gslice = grow.as_slice_mut().expect("contiguous row");
                    for (j, &col) in c.tr_idx.iter().enumerate() {
                        let g = c.spline.backward(
                            &rslice[j * rlen..(j + 1) * rlen],
                            x[[s_i, col]],
                            gy[[s_i, col]],
                            glam[s_i],
                            &mut gslice[j * rlen..(j + 1) * rlen],
                            &mut scratch,
                        );
                        gx[[s_i, col]] = g;
                    }
                }
                let gfixed = c.net.backward(mlp, &graw, param_grad);
                for (c_i, &col) in c.id_idx.iter().enumerate() {
                    for s_i in 0..n {
                        gx[[s_i, col]] += gfixed[[s_i, c_i]];
                    }
                }
                gx
            }
            _ => panic!("layer cache kind does not match the layer"),
        }
    }
}

/// Alternating mask: transform coordinates of the given parity.
pub fn parity_mask(d: usize, transform_even: bool) -> Vec<bool> {
    (0..d).map(|i| (i % 2 == 0) == transform_even).collect()
}
