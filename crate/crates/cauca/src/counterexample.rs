//! A constructive non-identifiability counterexample.
//!
//! When interventions fail to change the score almost everywhere, latent
//! recovery genuinely breaks: there is a smooth, measure-preserving map that
//! is not a coordinate-wise reparametrization yet leaves every regime's
//! distribution untouched. Composing it with the true unmixing produces a
//! spurious solution no likelihood can distinguish from the truth.
//!
//! The construction uses two independent coordinates with plateau densities
//! (half-Gaussian tails around an exactly flat region of height 1). Each
//! intervention swaps a node's plateau for a wider one, so all regimes stay
//! flat on a common square. A rotation whose angle decays smoothly to zero
//! at the boundary of the disc inscribed in that square is then invisible to
//! every regime: it is area preserving, supported where all densities are
//! constant, and equal to the identity elsewhere.
//!
//! - the flat region of a plateau density starts at 0 and has the length
//!   that makes total mass exactly 1;
//! - the rotation rate is the angle applied at the disc center
//!   (scaled by 1/e from the smooth bump profile).

use crate::cbn::{InterventionSpec, LatentCbn, Mechanism};
use crate::diagnostics::ambiguity::{classify_ambiguity, fd_jacobian, AmbiguityReport, PointMap};
use crate::diagnostics::discrepancy::{
    check_interventional_discrepancy, DiscrepancyReport, GridSpec,
};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::rng::stream;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

/// Two independent plateau coordinates, each intervened with a wider
/// plateau; all three regimes share a flat square `[0, flat_length]^2`.
#[derive(Debug, Clone)]
pub struct PlateauPair {
    pub cbn: LatentCbn,
    /// Side length of the shared flat square (the narrower plateau).
    pub flat_length: f64,
}

fn plateau_flat_length(a: f64, b: f64) -> f64 {
    // mass 1 = half-Gaussian(a) + length + half-Gaussian(b)
    1.0 - 0.5 * ((std::f64::consts::PI / a).sqrt() + (std::f64::consts::PI / b).sqrt())
}

/// Build the two-node counterexample CBN. `(a, b)` are the observational
/// tail rates, `(c, d)` the intervened ones; regime 1 replaces node 0's
/// mechanism, regime 2 replaces node 1's.
pub fn plateau_pair_cbn(obs: (f64, f64), int: (f64, f64)) -> Result<PlateauPair> {
    let g = Dag::empty(2);
    let m = || Mechanism::plateau(obs.0, obs.1);
    let mut cbn = LatentCbn::new(g, vec![m()?, m()?])?;
    for node in 0..2 {
        cbn.add_regime(vec![InterventionSpec {
            target: node,
            mechanism: Mechanism::plateau(int.0, int.1)?,
        }])?;
    }
    let flat = plateau_flat_length(obs.0, obs.1).min(plateau_flat_length(int.0, int.1));
    if flat <= 0.0 {
        return Err(Error::InvalidParam {
            name: "plateau rates".into(),
            reason: "tails leave no flat region".into(),
        });
    }
    Ok(PlateauPair { cbn, flat_length: flat })
}

/// Defaults: observational tails (4pi, 9pi) give flat length 7/12;
/// intervened tails (16pi, 25pi) give 31/40, so the shared square has side
/// 7/12.
pub fn default_plateau_pair() -> Result<PlateauPair> {
    use std::f64::consts::PI;
    plateau_pair_cbn((4.0 * PI, 9.0 * PI), (16.0 * PI, 25.0 * PI))
}

/// Rotate each circle around `center` by an angle that decays smoothly
/// (with all derivatives) to zero at `radius`; the identity outside.
/// Radially varying rotations preserve area, so |det| of the Jacobian is 1
/// everywhere.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RotationAutomorphism {
    pub center: [f64; 2],
    pub radius: f64,
    /// Angle scale; the center turns by rate/e radians.
    pub rate: f64,
}

impl RotationAutomorphism {
    /// Inscribe the rotation disc in the flat square `[0, side]^2`.
    pub fn inscribed(side: f64, rate: f64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::InvalidParam {
                name: "side".into(),
                reason: format!("need a positive flat region, got {side}"),
            });
        }
        Ok(RotationAutomorphism { center: [side / 2.0, side / 2.0], radius: side / 2.0, rate })
    }

    /// Rotation angle at squared relative radius; a smooth bump that
    /// vanishes to all orders at the boundary.
    fn angle(&self, r2: f64) -> f64 {
        let s = r2 / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            self.rate * (1.0 / (s - 1.0)).exp()
        }
    }

    fn rotate(&self, z: ArrayView1<f64>, sign: f64) -> Array1<f64> {
        let dx = z[0] - self.center[0];
        let dy = z[1] - self.center[1];
        let theta = sign * self.angle(dx * dx + dy * dy);
        if theta == 0.0 {
            // exact identity outside the disc
            return z.to_owned();
        }
        let (s, c) = theta.sin_cos();
        Array1::from_vec(vec![
            self.center[0] + c * dx - s * dy,
            self.center[1] + s * dx + c * dy,
        ])
    }

    pub fn apply(&self, z: ArrayView1<f64>) -> Array1<f64> {
        self.rotate(z, 1.0)
    }

    /// Exact inverse: the angle depends only on the radius, which the
    /// rotation preserves.
    pub fn inverse(&self, z: ArrayView1<f64>) -> Array1<f64> {
        self.rotate(z, -1.0)
    }
}

impl PointMap for RotationAutomorphism {
    fn dim(&self) -> usize {
        2
    }
    fn apply(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(RotationAutomorphism::apply(self, z))
    }
}

/// One uniform point per cell of a `per_axis x per_axis` partition of the
/// square `[lo, hi]^2`.
pub fn stratified_points(lo: f64, hi: f64, per_axis: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed, "stratified-points", 0);
    let h = (hi - lo) / per_axis as f64;
    let mut pts = Array2::zeros((per_axis * per_axis, 2));
    for i in 0..per_axis {
        for j in 0..per_axis {
            let r = i * per_axis + j;
            pts[[r, 0]] = lo + (i as f64 + rng.random::<f64>()) * h;
            pts[[r, 1]] = lo + (j as f64 + rng.random::<f64>()) * h;
        }
    }
    pts
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PreservationReport {
    /// Largest |p_k(map^{-1}(z)) - p_k(z)| per regime.
    pub per_regime: Vec<f64>,
    /// Largest residual across regimes.
    pub max_density_residual: f64,
    /// Largest ||det J| - 1| of the finite-difference Jacobian.
    pub max_det_error: f64,
    pub n_points: usize,
}

/// Verify that the rotation leaves every regime's density unchanged and has
/// unit Jacobian determinant, at the given points.
pub fn verify_preservation(
    cbn: &LatentCbn,
    rot: &RotationAutomorphism,
    points: &Array2<f64>,
) -> Result<PreservationReport> {
    if points.ncols() != 2 || cbn.d() != 2 {
        return Err(Error::ShapeMismatch {
            expected: "two-dimensional points and CBN".into(),
            got: format!("points {}x{}, d={}", points.nrows(), points.ncols(), cbn.d()),
        });
    }
    let mut per_regime = vec![0.0f64; cbn.n_regimes()];
    let mut max_det = 0.0f64;
    for z in points.rows() {
        let w = rot.inverse(z);
        for (k, worst) in per_regime.iter_mut().enumerate() {
            let p_here = cbn.log_density(k, z)?.exp();
            let p_back = cbn.log_density(k, w.view())?.exp();
            *worst = worst.max((p_back - p_here).abs());
        }
        let j = fd_jacobian(rot, z, 1e-6)?;
        let det = j[[0, 0]] * j[[1, 1]] - j[[0, 1]] * j[[1, 0]];
        max_det = max_det.max((det.abs() - 1.0).abs());
    }
    let max_res = per_regime.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(PreservationReport {
        per_regime,
        max_density_residual: max_res,
        max_det_error: max_det,
        n_points: points.nrows(),
    })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CounterexampleReport {
    pub preservation: PreservationReport,
    /// Per regime, the largest |log density| gap in observation space
    /// between the true mixing and the mixing composed with the inverse
    /// rotation, at sampled observations.
    pub pushforward_per_regime: Vec<f64>,
    pub max_pushforward_residual: f64,
    /// Classification of the rotation sampled inside its disc: it fits no
    /// structured pattern.
    pub ambiguity: AmbiguityReport,
    /// One report per interventional regime; each fails the
    /// almost-everywhere requirement on the shared plateau.
    pub discrepancy: Vec<DiscrepancyReport>,
    pub flat_length: f64,
}

impl CounterexampleReport {
    /// The construction succeeded: an entangled map yields the same
    /// observation distributions in every regime, exactly because the
    /// discrepancy assumption fails.
    pub fn demonstrates_non_identifiability(&self, residual_tol: f64) -> bool {
        self.preservation.max_density_residual <= residual_tol
            && self.max_pushforward_residual <= residual_tol
            && self.preservation.max_det_error <= 1e-4
            && self.ambiguity.class == crate::diagnostics::AmbiguityClass::Unrestricted
            && self.discrepancy.iter().all(|r| !r.satisfied)
    }
}

/// Build the full counterexample around a mixing function: latent-space
/// preservation residuals on stratified points, observation-space density
/// agreement between the true mixing and the spurious alternative (the
/// mixing composed with the inverse rotation), ambiguity classification
/// inside the rotation disc, and the (failing) discrepancy checks.
pub fn demonstrate_spurious_solution(
    pair: &PlateauPair,
    mixing: &crate::mixing::MixingFunction,
    rate: f64,
    points_per_axis: usize,
    seed: u64,
) -> Result<CounterexampleReport> {
    if mixing.d() != 2 {
        return Err(Error::ShapeMismatch {
            expected: "2-dimensional mixing".into(),
            got: format!("{}", mixing.d()),
        });
    }
    let rot = RotationAutomorphism::inscribed(pair.flat_length, rate)?;
    // cover the square and its surroundings, tails included
    let margin = 0.5;
    let points =
        stratified_points(-margin, pair.flat_length + margin, points_per_axis, seed);
    let preservation = verify_preservation(&pair.cbn, &rot, &points)?;

    // observation-space check: x = f(z) has the same density whether the
    // latents are read off through f or through f composed with the inverse
    // rotation (whose extra Jacobian factor the finite difference supplies)
    let mut rng = stream(seed, "counterexample-obs", 0);
    let mut pushforward_per_regime = Vec::new();
    for k in 0..pair.cbn.n_regimes() {
        let z = pair.cbn.sample(k, 500, &mut rng)?;
        let base_logdet = mixing.log_abs_det_jacobian(z.view());
        let mut worst = 0.0f64;
        for (r, zrow) in z.rows().into_iter().enumerate() {
            let lp_true = pair.cbn.log_density(k, zrow)? - base_logdet[r];
            let w = rot.apply(zrow);
            let j = fd_jacobian(&rot, zrow, 1e-6)?;
            let det = (j[[0, 0]] * j[[1, 1]] - j[[0, 1]] * j[[1, 0]]).abs();
            let lp_alt = pair.cbn.log_density(k, w.view())? + det.ln() - base_logdet[r];
            worst = worst.max((lp_alt - lp_true).abs());
        }
        pushforward_per_regime.push(worst);
    }
    let max_pushforward_residual =
        pushforward_per_regime.iter().fold(0.0f64, |m, v| m.max(*v));

    // classify where the rotation actually moves points
    let mut rng = stream(seed, "counterexample-disc", 0);
    let mut inner = Array2::zeros((64, 2));
    for mut row in inner.rows_mut() {
        loop {
            let a = rng.random_range(-0.75..0.75) * rot.radius;
            let b = rng.random_range(-0.75..0.75) * rot.radius;
            if a * a + b * b < (0.75 * rot.radius).powi(2) {
                row[0] = rot.center[0] + a;
                row[1] = rot.center[1] + b;
                break;
            }
        }
    }
    let blocks: Vec<Vec<usize>> = vec![vec![0], vec![1]];
    let ambiguity =
        classify_ambiguity(&rot, &inner, pair.cbn.graph(), &blocks, 1e-5, 1e-2)?;

    let grid = GridSpec::default();
    let mut discrepancy = Vec::new();
    for (k, node) in [(1usize, 0usize), (2, 1)] {
        discrepancy.push(check_interventional_discrepancy(&pair.cbn, k, node, &grid, 1e-3)?);
    }
    Ok(CounterexampleReport {
        preservation,
        pushforward_per_regime,
        max_pushforward_residual,
        ambiguity,
        discrepancy,
        flat_length: pair.flat_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::AmbiguityClass;

    #[test]
    fn flat_lengths_match_hand_computation() {
        let pair = default_plateau_pair().unwrap();
        // 1 - (1/2 + 1/3)/2 = 7/12 for the narrow pair, 31/40 for the wide
        assert!((pair.flat_length - 7.0 / 12.0).abs() < 1e-12, "got {}", pair.flat_length);
        use std::f64::consts::PI;
        assert!((plateau_flat_length(16.0 * PI, 25.0 * PI) - 31.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_round_trips_and_fixes_the_exterior() {
        let rot = RotationAutomorphism::inscribed(7.0 / 12.0, 3.0).unwrap();
        let pts = stratified_points(-1.0, 1.5, 20, 5);
        for z in pts.rows() {
            let w = rot.apply(z);
            let back = rot.inverse(w.view());
            for i in 0..2 {
                assert!((back[i] - z[i]).abs() < 1e-12, "round trip at {z:?}");
            }
            let r = ((z[0] - rot.center[0]).powi(2) + (z[1] - rot.center[1]).powi(2)).sqrt();
            if r >= rot.radius {
                assert_eq!(w[0], z[0], "exterior point must be fixed");
                assert_eq!(w[1], z[1]);
            }
        }
        // the center turns by rate/e
        let c = Array1::from_vec(vec![rot.center[0], rot.center[1] + 1e-9]);
        let _ = rot.apply(c.view());
        let theta0 = rot.angle(0.0);
        assert!((theta0 - 3.0 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_every_regime_density() {
        let pair = default_plateau_pair().unwrap();
        let rot = RotationAutomorphism::inscribed(pair.flat_length, 3.0).unwrap();
        let points = stratified_points(-0.5, pair.flat_length + 0.5, 100, 11);
        let rep = verify_preservation(&pair.cbn, &rot, &points).unwrap();
        assert_eq!(rep.n_points, 10_000);
        assert!(rep.max_density_residual <= 1e-6, "residual {}", rep.max_density_residual);
        assert!(rep.max_det_error <= 1e-5, "det error {}", rep.max_det_error);
    }

    #[test]
    fn a_rotation_off_the_flat_square_is_detected() {
        let pair = default_plateau_pair().unwrap();
        // disc sticking into the tails: no longer density preserving
        let mut rot = RotationAutomorphism::inscribed(pair.flat_length, 3.0).unwrap();
        rot.center = [0.0, 0.0];
        let points = stratified_points(-0.5, pair.flat_length + 0.5, 60, 12);
        let rep = verify_preservation(&pair.cbn, &rot, &points).unwrap();
        assert!(
            rep.max_density_residual > 1e-3,
            "tail mass must move, residual {}",
            rep.max_density_residual
        );
    }

    #[test]
    fn smooth_across_the_disc_boundary() {
        let rot = RotationAutomorphism::inscribed(7.0 / 12.0, 3.0).unwrap();
        // points a hair inside the boundary barely move
        for frac in [1.0 - 1e-6, 1.0 - 1e-4, 1.0 - 1e-2] {
            let r = rot.radius * frac;
            let z = Array1::from_vec(vec![rot.center[0] + r, rot.center[1]]);
            let w = rot.apply(z.view());
            let moved = ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2)).sqrt();
            assert!(moved <= 1e-4, "boundary motion {moved} at fraction {frac}");
        }
    }

    #[test]
    fn zero_rate_rotation_is_exactly_the_identity() {
        let pair = default_plateau_pair().unwrap();
        let rot = RotationAutomorphism::inscribed(pair.flat_length, 0.0).unwrap();
        let points = stratified_points(-0.5, pair.flat_length + 0.5, 30, 3);
        let rep = verify_preservation(&pair.cbn, &rot, &points).unwrap();
        assert_eq!(rep.max_density_residual, 0.0, "identity moves no mass");
    }

    #[test]
    fn full_counterexample_hangs_together() {
        let pair = default_plateau_pair().unwrap();
        let mut rng = crate::rng::stream(77, "counterexample-mix", 0);
        let mixing = crate::mixing::sample_mixing(2, 2, &mut rng).unwrap();
        let rep = demonstrate_spurious_solution(&pair, &mixing, 3.0, 40, 19).unwrap();
        assert!(rep.demonstrates_non_identifiability(1e-6));
        assert!(rep.max_pushforward_residual <= 1e-6, "{}", rep.max_pushforward_residual);
        assert_eq!(rep.ambiguity.class, AmbiguityClass::Unrestricted);
        assert!(rep.ambiguity.max_offdiagonal > 0.1);
        for d in &rep.discrepancy {
            assert!(!d.satisfied, "plateau overlap must defeat the checker");
            assert!(d.fraction_discrepant > 0.5, "tails still differ");
            assert!(d.n_skipped >= 1, "breakpoints hit the default grid");
        }
    }

    #[test]
    fn gaussian_regimes_expose_the_rotation() {
        // same rotation against a discrepancy-satisfying Gaussian CBN: the
        // pushforward agreement fails, so no spurious solution exists there
        let g = Dag::empty(2);
        let m0 = Mechanism::gaussian_marginal(0.3, 0.4).unwrap();
        let m1 = Mechanism::gaussian_marginal(0.3, 0.4).unwrap();
        let mut cbn = LatentCbn::new(g, vec![m0, m1]).unwrap();
        cbn.add_perfect(0, 2.0, 1.0).unwrap();
        cbn.add_perfect(1, 2.0, 1.0).unwrap();
        let rot = RotationAutomorphism::inscribed(7.0 / 12.0, 3.0).unwrap();
        let points = stratified_points(-0.2, 0.8, 50, 21);
        let rep = verify_preservation(&cbn, &rot, &points).unwrap();
        assert!(
            rep.max_density_residual > 1e-3,
            "curved density must change, residual {}",
            rep.max_density_residual
        );
    }
}
