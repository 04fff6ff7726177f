//! Conditional mechanisms: one node's density given its parents.
//!
//! Families:
//! - `LinearGaussian`: N(sum_j w_j z_pj, sigma), the workhorse of the
//!   synthetic protocol;
//! - `GaussianMarginal`: N(mu, sigma) with no parents (roots, perfect
//!   interventions);
//! - `LocationScale`: N(loc(z_pa), scale(z_pa)) with random nets for both,
//!   scale passed through softplus plus a floor;
//! - `Plateau`: the piecewise density that is flat on an interval and decays
//!   as a half-Gaussian on both sides; its score vanishes on the plateau,
//!   which is what makes overlapping plateaus defeat identifiability;
//! - `ScaledFrom`: another mechanism pushed through coordinate-wise
//!   monotone maps, used to realize the unavoidable reparameterizations.
//!
//! The plateau density is C^1 but not C^2 at its two breakpoints: the score
//! has matching one-sided limits there, yet evaluation exactly at a
//! breakpoint reports a non-differentiable-point error so that grid scans
//! count such points instead of silently picking a side.

use crate::cbn::scaling::Scaling1;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Mlp};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

pub const LN_2PI: f64 = 1.8378770664093453;

#[inline]
pub fn gaussian_log_pdf(z: f64, mean: f64, std: f64) -> f64 {
    let e = (z - mean) / std;
    -0.5 * LN_2PI - std.ln() - 0.5 * e * e
}

#[inline]
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf::erf(x / std::f64::consts::SQRT_2))
}

#[inline]
fn std_normal_quantile(u: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * u - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechanismKind {
    LinearGaussian { weights: Vec<f64>, noise_std: f64 },
    GaussianMarginal { mean: f64, std: f64 },
    LocationScale { loc: Mlp, scale: Mlp, scale_floor: f64 },
    Plateau { a: f64, b: f64 },
    ScaledFrom { inner: Box<Mechanism>, target_map: Scaling1, parent_maps: Vec<Scaling1> },
}

/// A conditional density p(z_i | z_pa). `parents` lists the global node
/// indices (sorted) whose values must be supplied, in order, to every
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub parents: Vec<usize>,
    pub kind: MechanismKind,
}

impl Mechanism {
    pub fn linear_gaussian(parents: Vec<usize>, weights: Vec<f64>, noise_std: f64) -> Result<Self> {
        let m = Mechanism { parents, kind: MechanismKind::LinearGaussian { weights, noise_std } };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian_marginal(mean: f64, std: f64) -> Result<Self> {
        let m = Mechanism { parents: vec![], kind: MechanismKind::GaussianMarginal { mean, std } };
        m.validate()?;
        Ok(m)
    }

    pub fn location_scale(parents: Vec<usize>, loc: Mlp, scale: Mlp, scale_floor: f64) -> Result<Self> {
        let m = Mechanism { parents, kind: MechanismKind::LocationScale { loc, scale, scale_floor } };
        m.validate()?;
        Ok(m)
    }

    /// Plateau density: exp(-a z^2) for z < 0, constant 1 on [0, L], and
    /// exp(-b (z - L)^2) beyond, with L chosen so the total mass is exactly 1.
    /// Requires sqrt(pi/a) < 1 and sqrt(pi/b) < 1.
    pub fn plateau(a: f64, b: f64) -> Result<Self> {
        let m = Mechanism { parents: vec![], kind: MechanismKind::Plateau { a, b } };
        m.validate()?;
        Ok(m)
    }

    /// Push this mechanism through coordinate-wise monotone maps: the target
    /// coordinate through `target_map`, each parent through its own map.
    pub fn scaled_from(inner: Mechanism, target_map: Scaling1, parent_maps: Vec<Scaling1>) -> Result<Self> {
        if parent_maps.len() != inner.parents.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parent maps", inner.parents.len()),
                got: format!("{}", parent_maps.len()),
            });
        }
        let parents = inner.parents.clone();
        Ok(Mechanism {
            parents,
            kind: MechanismKind::ScaledFrom { inner: Box::new(inner), target_map, parent_maps },
        })
    }

    pub fn family_name(&self) -> &'static str {
        match &self.kind {
            MechanismKind::LinearGaussian { .. } => "linear-gaussian",
            MechanismKind::GaussianMarginal { .. } => "gaussian-marginal",
            MechanismKind::LocationScale { .. } => "location-scale",
            MechanismKind::Plateau { .. } => "plateau",
            MechanismKind::ScaledFrom { .. } => "scaled-from",
        }
    }

    pub fn arity(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                if weights.len() != self.parents.len() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{} weights", self.parents.len()),
                        got: format!("{}", weights.len()),
                    });
                }
                if !noise_std.is_finite() || *noise_std <= 0.0 {
                    return Err(Error::InvalidParam {
                        name: "noise_std".into(),
                        reason: format!("{noise_std} must be positive"),
                    });
                }
            }
            MechanismKind::GaussianMarginal { mean, std } => {
                if !self.parents.is_empty() {
                    return Err(Error::InvalidParam {
                        name: "parents".into(),
                        reason: "gaussian-marginal takes no parents".into(),
                    });
                }
                if !mean.is_finite() || !std.is_finite() || *std <= 0.0 {
                    return Err(Error::InvalidParam {
                        name: "gaussian-marginal".into(),
                        reason: format!("mean={mean}, std={std}"),
                    });
                }
            }
            MechanismKind::LocationScale { loc, scale, scale_floor } => {
                if loc.input_dim() != self.parents.len() || scale.input_dim() != self.parents.len() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("nets with input dim {}", self.parents.len()),
                        got: format!("loc {}, scale {}", loc.input_dim(), scale.input_dim()),
                    });
                }
                if loc.output_dim() != 1 || scale.output_dim() != 1 {
                    return Err(Error::ShapeMismatch {
                        expected: "nets with output dim 1".into(),
                        got: format!("loc {}, scale {}", loc.output_dim(), scale.output_dim()),
                    });
                }
                if !scale_floor.is_finite() || *scale_floor <= 0.0 {
                    return Err(Error::InvalidParam {
                        name: "scale_floor".into(),
                        reason: format!("{scale_floor} must be positive"),
                    });
                }
            }
            MechanismKind::Plateau { a, b } => {
                if !self.parents.is_empty() {
                    return Err(Error::InvalidParam {
                        name: "parents".into(),
                        reason: "plateau takes no parents".into(),
                    });
                }
                let pi = std::f64::consts::PI;
                if !(a.is_finite() && b.is_finite()) || *a <= pi || *b <= pi {
                    return Err(Error::InvalidParam {
                        name: "plateau".into(),
                        reason: format!(
                            "need a > pi and b > pi so both half-Gaussian masses fit; got a={a}, b={b}"
                        ),
                    });
                }
            }
            MechanismKind::ScaledFrom { inner, parent_maps, .. } => {
                inner.validate()?;
                if parent_maps.len() != inner.parents.len() || inner.parents != self.parents {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{} parent maps / matching parents", inner.parents.len()),
                        got: format!("{}", parent_maps.len()),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_args(&self, z: f64, zpa: &[f64]) -> Result<()> {
        if zpa.len() != self.parents.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parent values", self.parents.len()),
                got: format!("{}", zpa.len()),
            });
        }
        if !z.is_finite() || zpa.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mechanism evaluation point".into()));
        }
        Ok(())
    }

    /// Right edge of the plateau (only for the plateau family).
    pub fn plateau_breaks(&self) -> Option<(f64, f64)> {
        if let MechanismKind::Plateau { a, b } = self.kind {
            let pi = std::f64::consts::PI;
            let len = 1.0 - 0.5 * ((pi / a).sqrt() + (pi / b).sqrt());
            Some((0.0, len))
        } else {
            None
        }
    }

    /// log p(z | z_pa).
    pub fn log_density(&self, z: f64, zpa: &[f64]) -> Result<f64> {
        self.check_args(z, zpa)?;
        Ok(match &self.kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                let mean: f64 = weights.iter().zip(zpa).map(|(w, v)| w * v).sum();
                gaussian_log_pdf(z, mean, *noise_std)
            }
            MechanismKind::GaussianMarginal { mean, std } => gaussian_log_pdf(z, *mean, *std),
            MechanismKind::LocationScale { loc, scale, scale_floor } => {
                let zv = ndarray::Array1::from(zpa.to_vec());
                let m = loc.forward_row(zv.view())[0];
                let s = softplus(scale.forward_row(zv.view())[0]) + scale_floor;
                gaussian_log_pdf(z, m, s)
            }
            MechanismKind::Plateau { a, b } => {
                let (_, len) = self.plateau_breaks().expect("plateau");
                if z < 0.0 {
                    -a * z * z
                } else if z <= len {
                    0.0
                } else {
                    let dz = z - len;
                    -b * dz * dz
                }
            }
            MechanismKind::ScaledFrom { inner, target_map, parent_maps } => {
                let u = target_map.invert(z)?;
                let upa = invert_parents(parent_maps, zpa)?;
                inner.log_density(u, &upa)? - target_map.deriv(u).abs().ln()
            }
        })
    }

    /// d/dz log p(z | z_pa).
    pub fn score(&self, z: f64, zpa: &[f64]) -> Result<f64> {
        self.check_args(z, zpa)?;
        Ok(match &self.kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                let mean: f64 = weights.iter().zip(zpa).map(|(w, v)| w * v).sum();
                -(z - mean) / (noise_std * noise_std)
            }
            MechanismKind::GaussianMarginal { mean, std } => -(z - mean) / (std * std),
            MechanismKind::LocationScale { loc, scale, scale_floor } => {
                let zv = ndarray::Array1::from(zpa.to_vec());
                let m = loc.forward_row(zv.view())[0];
                let s = softplus(scale.forward_row(zv.view())[0]) + scale_floor;
                -(z - m) / (s * s)
            }
            MechanismKind::Plateau { a, b } => {
                let (_, len) = self.plateau_breaks().expect("plateau");
                if z == 0.0 || z == len {
                    return Err(Error::NonDifferentiablePoint(z));
                }
                if z < 0.0 {
                    -2.0 * a * z
                } else if z < len {
                    0.0
                } else {
                    -2.0 * b * (z - len)
                }
            }
            MechanismKind::ScaledFrom { inner, target_map, parent_maps } => {
                let u = target_map.invert(z)?;
                let upa = invert_parents(parent_maps, zpa)?;
                let hp = target_map.deriv(u);
                let hpp = target_map.second_deriv(u);
                (inner.score(u, &upa)? - hpp / hp) / hp
            }
        })
    }

    /// d^2/dz^2 log p(z | z_pa). Errors for families that are not C^2.
    pub fn score_derivative(&self, z: f64, zpa: &[f64]) -> Result<f64> {
        self.check_args(z, zpa)?;
        Ok(match &self.kind {
            MechanismKind::LinearGaussian { noise_std, .. } => -1.0 / (noise_std * noise_std),
            MechanismKind::GaussianMarginal { std, .. } => -1.0 / (std * std),
            MechanismKind::LocationScale { scale, scale_floor, .. } => {
                let zv = ndarray::Array1::from(zpa.to_vec());
                let s = softplus(scale.forward_row(zv.view())[0]) + scale_floor;
                -1.0 / (s * s)
            }
            MechanismKind::Plateau { .. } => {
                return Err(Error::UnsupportedFamily {
                    op: "score_derivative".into(),
                    family: "plateau (not C^2 at breakpoints)".into(),
                })
            }
            MechanismKind::ScaledFrom { inner, target_map, parent_maps } => {
                // ln q(w) = ln p(u) - ln|h'(u)| with u = h^{-1}(w)
                let u = target_map.invert(z)?;
                let upa = invert_parents(parent_maps, zpa)?;
                let hp = target_map.deriv(u);
                let hpp = target_map.second_deriv(u);
                let hppp = target_map.third_deriv(u);
                let psi = inner.score(u, &upa)? - hpp / hp;
                let psi_prime = inner.score_derivative(u, &upa)? - (hppp * hp - hpp * hpp) / (hp * hp);
                psi_prime / (hp * hp) + psi * (-hpp / (hp * hp * hp))
            }
        })
    }

    /// Gradient of log p(z | z_pa) with respect to each parent value.
    pub fn grad_parents(&self, z: f64, zpa: &[f64]) -> Result<Vec<f64>> {
        self.check_args(z, zpa)?;
        Ok(match &self.kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                let mean: f64 = weights.iter().zip(zpa).map(|(w, v)| w * v).sum();
                let e = (z - mean) / (noise_std * noise_std);
                weights.iter().map(|w| e * w).collect()
            }
            MechanismKind::GaussianMarginal { .. } | MechanismKind::Plateau { .. } => vec![],
            MechanismKind::LocationScale { loc, scale, scale_floor } => {
                let zv = ndarray::Array1::from(zpa.to_vec());
                let m = loc.forward_row(zv.view())[0];
                let raw = scale.forward_row(zv.view())[0];
                let s = softplus(raw) + scale_floor;
                let e = (z - m) / (s * s);
                let dlp_ds = e * (z - m) / s - 1.0 / s;
                let jl = loc.jacobian_row(zv.view());
                let js = scale.jacobian_row(zv.view());
                let sg = sigmoid(raw);
                (0..zpa.len())
                    .map(|j| e * jl[[0, j]] + dlp_ds * sg * js[[0, j]])
                    .collect()
            }
            MechanismKind::ScaledFrom { inner, target_map, parent_maps } => {
                let u = target_map.invert(z)?;
                let upa = invert_parents(parent_maps, zpa)?;
                let g = inner.grad_parents(u, &upa)?;
                g.iter()
                    .zip(parent_maps)
                    .zip(&upa)
                    .map(|((gi, h), &uj)| gi / h.deriv(uj))
                    .collect()
            }
        })
    }

    /// Draw z ~ p(. | z_pa).
    pub fn sample<R: Rng>(&self, zpa: &[f64], rng: &mut R) -> Result<f64> {
        if zpa.len() != self.parents.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parent values", self.parents.len()),
                got: format!("{}", zpa.len()),
            });
        }
        Ok(match &self.kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                let mean: f64 = weights.iter().zip(zpa).map(|(w, v)| w * v).sum();
                let eps: f64 = StandardNormal.sample(rng);
                mean + noise_std * eps
            }
            MechanismKind::GaussianMarginal { mean, std } => {
                let eps: f64 = StandardNormal.sample(rng);
                mean + std * eps
            }
            MechanismKind::LocationScale { loc, scale, scale_floor } => {
                let zv = ndarray::Array1::from(zpa.to_vec());
                let m = loc.forward_row(zv.view())[0];
                let s = softplus(scale.forward_row(zv.view())[0]) + scale_floor;
                let eps: f64 = StandardNormal.sample(rng);
                m + s * eps
            }
            MechanismKind::Plateau { a, b } => {
                let (_, len) = self.plateau_breaks().expect("plateau");
                let pi = std::f64::consts::PI;
                let left = 0.5 * (pi / a).sqrt();
                let right = 0.5 * (pi / b).sqrt();
                let u: f64 = rng.random::<f64>();
                if u < left {
                    // left half-Gaussian: F(z) = sqrt(pi/a) Phi(z sqrt(2a))
                    std_normal_quantile(u / (2.0 * left)) / (2.0 * a).sqrt()
                } else if u <= left + len {
                    u - left
                } else {
                    let tail = (u - left - len) / (2.0 * right) + 0.5;
                    len + std_normal_quantile(tail) / (2.0 * b).sqrt()
                }
            }
            MechanismKind::ScaledFrom { inner, target_map, parent_maps } => {
                let upa = invert_parents(parent_maps, zpa)?;
                target_map.apply(inner.sample(&upa, rng)?)
            }
        })
    }

    /// CDF, where tractable (used by stratified samplers in tests).
    pub fn cdf(&self, z: f64) -> Result<f64> {
        match &self.kind {
            MechanismKind::Plateau { a, b } => {
                let (_, len) = self.plateau_breaks().expect("plateau");
                let pi = std::f64::consts::PI;
                let left = (pi / a).sqrt();
                Ok(if z <= 0.0 {
                    left * std_normal_cdf(z * (2.0 * a).sqrt())
                } else if z <= len {
                    0.5 * left + z
                } else {
                    0.5 * left + len + (pi / b).sqrt() * (std_normal_cdf((z - len) * (2.0 * b).sqrt()) - 0.5)
                })
            }
            MechanismKind::GaussianMarginal { mean, std } => {
                Ok(std_normal_cdf((z - mean) / std))
            }
            _ => Err(Error::UnsupportedFamily {
                op: "cdf".into(),
                family: self.family_name().into(),
            }),
        }
    }
}

fn invert_parents(maps: &[Scaling1], zpa: &[f64]) -> Result<Vec<f64>> {
    maps.iter().zip(zpa).map(|(h, &v)| h.invert(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::scaling::random_scaling;
    use crate::rng::stream;

    #[test]
    fn linear_gaussian_density_and_score() {
        let m = Mechanism::linear_gaussian(vec![0, 2], vec![0.5, -1.0], 2.0).unwrap();
        // mean = 0.5*1 - 1*3 = -2.5; z = -0.5 => e = 1
        let lp = m.log_density(-0.5, &[1.0, 3.0]).unwrap();
        assert!((lp - (-0.5 * LN_2PI - 2.0f64.ln() - 0.5)).abs() < 1e-12);
        let sc = m.score(-0.5, &[1.0, 3.0]).unwrap();
        assert!((sc - (-0.5)).abs() < 1e-12, "score {sc}");
        let gp = m.grad_parents(-0.5, &[1.0, 3.0]).unwrap();
        assert!((gp[0] - 0.5 * 0.5).abs() < 1e-12 && (gp[1] - 0.5 * (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn plateau_breakpoints_density_and_errors() {
        let pi = std::f64::consts::PI;
        let m = Mechanism::plateau(4.0 * pi, 4.0 * pi).unwrap();
        let (lo, hi) = m.plateau_breaks().unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.5).abs() < 1e-12, "plateau length {hi}");
        assert_eq!(m.log_density(0.25, &[]).unwrap(), 0.0);
        assert!(m.log_density(-0.5, &[]).unwrap() < 0.0);
        assert_eq!(m.score(0.25, &[]).unwrap(), 0.0);
        assert!(matches!(m.score(0.0, &[]), Err(Error::NonDifferentiablePoint(_))));
        assert!(matches!(m.score(hi, &[]), Err(Error::NonDifferentiablePoint(_))));
        assert!(matches!(
            m.score_derivative(0.3, &[]),
            Err(Error::UnsupportedFamily { .. })
        ));
        // invalid parameters: half-Gaussian mass would exceed 1
        assert!(Mechanism::plateau(pi, 4.0 * pi).is_err());
    }

    #[test]
    fn plateau_cdf_is_a_proper_cdf_and_inverts_sampling() {
        let pi = std::f64::consts::PI;
        let m = Mechanism::plateau(4.0 * pi, 9.0 * pi).unwrap();
        assert!(m.cdf(-10.0).unwrap() < 1e-10);
        assert!((m.cdf(10.0).unwrap() - 1.0).abs() < 1e-10);
        let mut rng = stream(3, "plateau-sample", 0);
        let n = 20_000;
        let mut count_plateau = 0;
        let (_, len) = m.plateau_breaks().unwrap();
        for _ in 0..n {
            let z = m.sample(&[], &mut rng).unwrap();
            if (0.0..=len).contains(&z) {
                count_plateau += 1;
            }
        }
        // plateau mass = len; binomial sd ~ sqrt(len(1-len)/n)
        let frac = count_plateau as f64 / n as f64;
        let sd = (len * (1.0 - len) / n as f64).sqrt();
        assert!(
            (frac - len).abs() < 5.0 * sd,
            "plateau mass {frac} vs expected {len}"
        );
    }

    #[test]
    fn scaled_from_matches_change_of_variables() {
        let mut rng = stream(9, "scaled", 0);
        let inner = Mechanism::linear_gaussian(vec![1], vec![0.8], 1.0).unwrap();
        let maps = random_scaling(2, true, &mut rng);
        let target = *maps.coord(0);
        let parent = *maps.coord(1);
        let pushed = Mechanism::scaled_from(inner.clone(), target, vec![parent]).unwrap();
        // q(w | wpa) = p(h^-1(w) | hpa^-1(wpa)) / |h'(h^-1(w))|
        let (u, upa) = (0.3, -0.7);
        let w = target.apply(u);
        let wpa = parent.apply(upa);
        let expect = inner.log_density(u, &[upa]).unwrap() - target.deriv(u).abs().ln();
        let got = pushed.log_density(w, &[wpa]).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
        // score and its derivative against finite differences in w
        let e = 1e-5;
        let fd = (pushed.log_density(w + e, &[wpa]).unwrap()
            - pushed.log_density(w - e, &[wpa]).unwrap())
            / (2.0 * e);
        let sc = pushed.score(w, &[wpa]).unwrap();
        assert!((fd - sc).abs() < 1e-6, "score {sc} vs fd {fd}");
        let fd2 = (pushed.score(w + e, &[wpa]).unwrap() - pushed.score(w - e, &[wpa]).unwrap())
            / (2.0 * e);
        let sc2 = pushed.score_derivative(w, &[wpa]).unwrap();
        assert!((fd2 - sc2).abs() < 1e-5, "score' {sc2} vs fd {fd2}");
        let fdp = (pushed.log_density(w, &[wpa + e]).unwrap()
            - pushed.log_density(w, &[wpa - e]).unwrap())
            / (2.0 * e);
        let gp = pushed.grad_parents(w, &[wpa]).unwrap()[0];
        assert!((fdp - gp).abs() < 1e-6, "parent grad {gp} vs fd {fdp}");
    }

    #[test]
    fn location_scale_score_matches_finite_differences() {
        let mut rng = stream(10, "locscale", 0);
        let mut loc = Mlp::zeros(&[2, 16, 16, 1], crate::nn::Activation::LeakyTanh).unwrap();
        let mut sc = Mlp::zeros(&[2, 16, 16, 1], crate::nn::Activation::LeakyTanh).unwrap();
        loc.init_xavier(&mut rng);
        sc.init_xavier(&mut rng);
        let m = Mechanism::location_scale(vec![0, 1], loc, sc, 0.1).unwrap();
        let (z, zpa) = (0.4, [0.9, -1.3]);
        let e = 1e-6;
        let fd = (m.log_density(z + e, &zpa).unwrap() - m.log_density(z - e, &zpa).unwrap()) / (2.0 * e);
        assert!((fd - m.score(z, &zpa).unwrap()).abs() < 1e-6);
        let gp = m.grad_parents(z, &zpa).unwrap();
        for j in 0..2 {
            let mut up = zpa;
            up[j] += e;
            let mut dn = zpa;
            dn[j] -= e;
            let fdj = (m.log_density(z, &up).unwrap() - m.log_density(z, &dn).unwrap()) / (2.0 * e);
            assert!((fdj - gp[j]).abs() < 1e-5, "parent {j}: {} vs {fdj}", gp[j]);
        }
    }
}
