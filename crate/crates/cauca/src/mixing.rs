//! Invertible nonlinear mixing from latents to observations.
//!
//! x = sigma(A_M sigma(... sigma(A_1 z))) with square matrices A_m drawn
//! entrywise U(0, 1), rejected while |det A_m| < 0.1, and the invertible
//! activation sigma(v) = tanh(v) + 0.1 v applied coordinate-wise after every
//! matrix. sigma' lies in [0.1, 1.1], so the map is a diffeomorphism with a
//! tractable Jacobian log-determinant:
//! log |det Jf(z)| = sum_m [ log |det A_m| + sum_i log sigma'((A_m h)_i) ].
//!
//! Inversion is exact layer by layer: undo sigma per coordinate by
//! safeguarded Newton (the bound tanh in (-1,1) brackets the root), then
//! solve the linear system by the stored LU factorization.

use crate::error::{Error, Result};
use crate::linalg::Lu;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// sigma(v) = tanh(v) + 0.1 v.
#[inline]
pub fn leaky_tanh(v: f64) -> f64 {
    v.tanh() + 0.1 * v
}

/// sigma'(v) = 1 - tanh(v)^2 + 0.1, inside [0.1, 1.1].
#[inline]
pub fn leaky_tanh_deriv(v: f64) -> f64 {
    let t = v.tanh();
    1.0 - t * t + 0.1
}

/// Invert sigma by Newton with a bisection safeguard. Since tanh is bounded
/// by 1, the root lies in [(y - 1)/0.1, (y + 1)/0.1]; the tighter slope
/// bounds give the starting bracket [min(y/1.1, y/0.1), max(y/1.1, y/0.1)]
/// widened by 1 on each side.
pub fn leaky_tanh_inverse(y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite("leaky_tanh_inverse input".into()));
    }
    let (mut lo, mut hi) = {
        let a = y / 1.1;
        let b = y / 0.1;
        (a.min(b) - 1.0, a.max(b) + 1.0)
    };
    let mut u = y / 1.1; // decent start: slope near 1.1 around the origin
    for _ in 0..100 {
        let f = leaky_tanh(u) - y;
        if f.abs() < 1e-13 * (1.0 + y.abs()) {
            return Ok(u);
        }
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - f / leaky_tanh_deriv(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        u = next;
    }
    Err(Error::RootFinding {
        context: "leaky_tanh_inverse".into(),
        reason: format!("no convergence for y={y}"),
    })
}

/// The mixing diffeomorphism f: R^d -> R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingFunction {
    layers: Vec<Array2<f64>>,
}

impl MixingFunction {
    pub fn new(layers: Vec<Array2<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParam {
                name: "layers".into(),
                reason: "need at least one matrix".into(),
            });
        }
        let d = layers[0].nrows();
        for (m, a) in layers.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(Error::ShapeMismatch {
                    expected: format!("{d}x{d} matrix at layer {m}"),
                    got: format!("{}x{}", a.nrows(), a.ncols()),
                });
            }
            Lu::new(a.view())?; // must be invertible
        }
        Ok(MixingFunction { layers })
    }

    pub fn d(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, m: usize) -> ArrayView2<'_, f64> {
        self.layers[m].view()
    }

    /// Apply f to a batch (rows are points).
    pub fn forward_batch(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut h = z.to_owned();
        for a in &self.layers {
            h = h.dot(&a.t());
            h.mapv_inplace(leaky_tanh);
        }
        h
    }

    pub fn forward_row(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let zr = z.insert_axis(ndarray::Axis(0)).to_owned();
        let out = self.forward_batch(zr.view());
        out.row(0).to_owned()
    }

    /// log |det Jf(z)| per batch row.
    pub fn log_abs_det_jacobian(&self, z: ArrayView2<f64>) -> Array1<f64> {
        let mut h = z.to_owned();
        let mut total = Array1::zeros(z.nrows());
        for a in &self.layers {
            let lad = Lu::new(a.view()).expect("validated invertible").log_abs_det();
            let pre = h.dot(&a.t());
            for (r, row) in pre.rows().into_iter().enumerate() {
                let mut s = lad;
                for &v in row {
                    s += leaky_tanh_deriv(v).ln();
                }
                total[r] += s;
            }
            h = pre;
            h.mapv_inplace(leaky_tanh);
        }
        total
    }

    /// Exact Jacobian at one point: product over layers of
    /// diag(sigma'(pre)) A_m.
    pub fn jacobian_row(&self, z: ArrayView1<f64>) -> Array2<f64> {
        let d = self.d();
        let mut jac = Array2::eye(d);
        let mut h = z.to_owned();
        for a in &self.layers {
            let pre = a.dot(&h);
            let mut j_layer = a.clone();
            for (i, mut row) in j_layer.rows_mut().into_iter().enumerate() {
                let s = leaky_tanh_deriv(pre[i]);
                row.mapv_inplace(|v| v * s);
            }
            jac = j_layer.dot(&jac);
            h = pre.mapv(leaky_tanh);
        }
        jac
    }

    /// Exact inverse, layer by layer from the outside in.
    pub fn inverse_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixing inverse input".into()));
        }
        let mut h = x.to_owned();
        for a in self.layers.iter().rev() {
            let lu = Lu::new(a.view())?;
            for mut row in h.rows_mut() {
                for v in row.iter_mut() {
                    *v = leaky_tanh_inverse(*v)?;
                }
                let sol = lu.solve(row.view());
                row.assign(&sol);
            }
        }
        Ok(h)
    }

    pub fn inverse_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let xr = x.insert_axis(ndarray::Axis(0)).to_owned();
        let out = self.inverse_batch(xr.view())?;
        Ok(out.row(0).to_owned())
    }
}

/// Draw a mixing with `n_layers` matrices, entries U(0, 1), resampling any
/// matrix whose |det| falls below 0.1.
pub fn sample_mixing<R: Rng>(d: usize, n_layers: usize, rng: &mut R) -> Result<MixingFunction> {
    if d == 0 || n_layers == 0 {
        return Err(Error::InvalidParam {
            name: "sample_mixing".into(),
            reason: format!("d={d}, n_layers={n_layers} must both be positive"),
        });
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut accepted = None;
        for _attempt in 0..10_000 {
            let a = Array2::from_shape_fn((d, d), |_| rng.random::<f64>());
            let det = crate::linalg::det(a.view()).unwrap_or(0.0);
            if det.abs() >= 0.1 {
                accepted = Some(a);
                break;
            }
        }
        layers.push(accepted.ok_or_else(|| Error::Numeric(
            "no well-conditioned mixing matrix in 10000 draws".into(),
        ))?);
    }
    MixingFunction::new(layers)
}

// JSON form: matrices row-major with explicit shape.
#[derive(Serialize, Deserialize)]
struct MixingRepr {
    d: usize,
    n_layers: usize,
    /// row-major entries, one inner vec per layer
    matrices: Vec<Vec<f64>>,
}

impl Serialize for MixingFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MixingRepr {
            d: self.d(),
            n_layers: self.n_layers(),
            matrices: self.layers.iter().map(|a| a.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MixingFunction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = MixingRepr::deserialize(de)?;
        if repr.matrices.len() != repr.n_layers {
            return Err(D::Error::custom("layer count mismatch"));
        }
        let layers = repr
            .matrices
            .iter()
            .map(|flat| {
                Array2::from_shape_vec((repr.d, repr.d), flat.clone())
                    .map_err(|e| D::Error::custom(format!("bad matrix shape: {e}")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        MixingFunction::new(layers).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn leaky_tanh_fixed_value() {
        // tanh(1) + 0.1
        assert!((leaky_tanh(1.0) - 0.8615941559557649).abs() < 1e-15);
        assert_eq!(leaky_tanh(0.0), 0.0);
    }

    #[test]
    fn leaky_tanh_derivative_range_and_bracket() {
        let mut rng = stream(31, "sigma", 0);
        for _ in 0..200 {
            let v = rng.random_range(-20.0..20.0);
            let d = leaky_tanh_deriv(v);
            assert!((0.1..=1.1).contains(&d), "sigma'({v}) = {d}");
            let y = leaky_tanh(v);
            // spec bracket [y/1.1 - 1, y/0.1 + 1] read as [min - 1, max + 1]
            let (lo, hi) = {
                let a = y / 1.1;
                let b = y / 0.1;
                (a.min(b) - 1.0, a.max(b) + 1.0)
            };
            assert!(v > lo && v < hi, "root {v} outside bracket [{lo}, {hi}]");
            let back = leaky_tanh_inverse(y).unwrap();
            assert!((back - v).abs() < 1e-10, "{back} vs {v}");
        }
    }

    #[test]
    fn forward_matches_hand_rolled_single_layer() {
        let a = array![[0.5, 0.2], [0.1, 0.9]];
        let f = MixingFunction::new(vec![a.clone()]).unwrap();
        let z = array![[1.0, -2.0]];
        let x = f.forward_batch(z.view());
        let pre0 = 0.5 - 0.4;
        let pre1 = 0.1 - 1.8;
        assert!((x[[0, 0]] - leaky_tanh(pre0)).abs() < 1e-15);
        assert!((x[[0, 1]] - leaky_tanh(pre1)).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trips() {
        let mut rng = stream(32, "mix", 0);
        let f = sample_mixing(4, 3, &mut rng).unwrap();
        let n = 1000;
        let z = Array2::from_shape_fn((n, 4), |_| StandardNormal.sample(&mut rng));
        let x = f.forward_batch(z.view());
        let back = f.inverse_batch(x.view()).unwrap();
        let worst = z
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-6, "round trip error {worst}");
    }

    #[test]
    fn log_det_matches_finite_difference_jacobian() {
        let mut rng = stream(33, "mixdet", 0);
        let f = sample_mixing(3, 2, &mut rng).unwrap();
        for _ in 0..10 {
            let z = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
            let lad = f
                .log_abs_det_jacobian(z.view().insert_axis(ndarray::Axis(0)))[0];
            // finite-difference Jacobian
            let e = 1e-6;
            let mut jac = Array2::zeros((3, 3));
            for j in 0..3 {
                let mut zp = z.clone();
                zp[j] += e;
                let up = f.forward_row(zp.view());
                zp[j] -= 2.0 * e;
                let dn = f.forward_row(zp.view());
                for i in 0..3 {
                    jac[[i, j]] = (up[i] - dn[i]) / (2.0 * e);
                }
            }
            let det = crate::linalg::det(jac.view()).unwrap();
            let rel = (lad - det.abs().ln()).abs() / lad.abs().max(1.0);
            assert!(rel < 1e-4, "analytic {lad} vs fd {}", det.abs().ln());
            // analytic Jacobian agrees too
            let ja = f.jacobian_row(z.view());
            for (a, b) in ja.iter().zip(jac.iter()) {
                assert!((a - b).abs() < 1e-5, "jacobian {a} vs {b}");
            }
        }
    }

    #[test]
    fn sampled_matrices_pass_det_threshold() {
        let mut rng = stream(34, "mixsample", 0);
        for _ in 0..20 {
            let f = sample_mixing(4, 2, &mut rng).unwrap();
            for m in 0..f.n_layers() {
                let det = crate::linalg::det(f.layer(m)).unwrap();
                assert!(det.abs() >= 0.1, "|det| {} below threshold", det.abs());
                for &v in f.layer(m).iter() {
                    assert!((0.0..1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn serde_round_trip_bit_exact() {
        let mut rng = stream(35, "mixserde", 0);
        let f = sample_mixing(3, 2, &mut rng).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: MixingFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut rng = stream(36, "mixnan", 0);
        let f = sample_mixing(2, 1, &mut rng).unwrap();
        let x = array![[f64::NAN, 0.0]];
        assert!(matches!(
            f.inverse_batch(x.view()),
            Err(Error::NonFinite(_))
        ));
    }
}
