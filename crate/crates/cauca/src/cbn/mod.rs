//! Latent causal Bayesian networks over a known DAG, with interventional
//! regimes.
//!
//! Regime 0 is observational. Each interventional regime k >= 1 replaces the
//! mechanisms of its target set tau_k: perfect interventions cut all parents,
//! imperfect ones keep a nonempty subset. The joint density of regime k
//! factorizes as the product of replaced mechanisms over targets and original
//! mechanisms elsewhere.
//!
//! `pushforward` realizes the unavoidable-ambiguity construction: push every
//! mechanism (observational and interventional) through a coordinate-wise
//! diffeomorphism h. The resulting CBN Q satisfies
//! `log q^k(h(z)) + log |det Dh(z)| = log p^k(z)` for every regime, which is
//! checked factor-by-factor rather than by definition, so the identity is a
//! real test of the factorization code path.

pub mod mechanism;
pub mod scaling;

pub use mechanism::{gaussian_log_pdf, Mechanism, MechanismKind, LN_2PI};
pub use scaling::{random_scaling, Scaling1, ScalingMap};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::nn::{Activation, Mlp};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One replaced mechanism inside a regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub target: usize,
    pub mechanism: Mechanism,
}

/// An interventional regime: one or more targets, each with its replacement
/// mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Regime {
    pub interventions: Vec<InterventionSpec>,
}

impl Regime {
    pub fn targets(&self) -> BTreeSet<usize> {
        self.interventions.iter().map(|iv| iv.target).collect()
    }
}

/// A latent CBN: graph, observational mechanisms, interventional regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCbn {
    graph: Dag,
    mechanisms: Vec<Mechanism>,
    regimes: Vec<Regime>,
}

impl LatentCbn {
    /// Build from a graph and one observational mechanism per node; each
    /// mechanism's parent list must equal the graph's parent list.
    pub fn new(graph: Dag, mechanisms: Vec<Mechanism>) -> Result<Self> {
        if mechanisms.len() != graph.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} mechanisms", graph.d()),
                got: format!("{}", mechanisms.len()),
            });
        }
        for (i, m) in mechanisms.iter().enumerate() {
            m.validate()?;
            if m.parents != graph.parents(i) {
                return Err(Error::InvalidParam {
                    name: format!("mechanism[{i}].parents"),
                    reason: format!("{:?} does not match graph parents {:?}", m.parents, graph.parents(i)),
                });
            }
        }
        Ok(LatentCbn { graph, mechanisms, regimes: vec![] })
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    /// Number of regimes including the observational one (index 0).
    pub fn n_regimes(&self) -> usize {
        self.regimes.len() + 1
    }

    pub fn observational_mechanism(&self, i: usize) -> &Mechanism {
        &self.mechanisms[i]
    }

    /// Target set of regime k (empty for k = 0).
    pub fn targets(&self, k: usize) -> Result<BTreeSet<usize>> {
        self.check_regime(k)?;
        Ok(if k == 0 { BTreeSet::new() } else { self.regimes[k - 1].targets() })
    }

    /// Target sets of all interventional regimes, in order k = 1..
    pub fn interventional_targets(&self) -> Vec<BTreeSet<usize>> {
        self.regimes.iter().map(|r| r.targets()).collect()
    }

    /// Mechanism governing node i under regime k.
    pub fn mechanism(&self, k: usize, i: usize) -> Result<&Mechanism> {
        self.check_regime(k)?;
        if i >= self.d() {
            return Err(Error::NodeOutOfRange { node: i, d: self.d() });
        }
        if k > 0 {
            for iv in &self.regimes[k - 1].interventions {
                if iv.target == i {
                    return Ok(&iv.mechanism);
                }
            }
        }
        Ok(&self.mechanisms[i])
    }

    fn check_regime(&self, k: usize) -> Result<()> {
        if k >= self.n_regimes() {
            return Err(Error::RegimeOutOfRange { k, n_regimes: self.n_regimes() });
        }
        Ok(())
    }

    /// Append a regime made of explicit interventions. Validates targets and
    /// parent subsets.
    pub fn add_regime(&mut self, interventions: Vec<InterventionSpec>) -> Result<usize> {
        if interventions.is_empty() {
            return Err(Error::Config("a regime needs at least one intervention".into()));
        }
        let mut seen = BTreeSet::new();
        for iv in &interventions {
            let t = iv.target;
            if t >= self.d() {
                return Err(Error::NodeOutOfRange { node: t, d: self.d() });
            }
            if !seen.insert(t) {
                return Err(Error::InvalidIntervention {
                    node: t,
                    reason: "duplicate target in one regime".into(),
                });
            }
            iv.mechanism.validate()?;
            let orig: BTreeSet<usize> = self.graph.parents(t).iter().copied().collect();
            let used: BTreeSet<usize> = iv.mechanism.parents.iter().copied().collect();
            if !used.is_subset(&orig) {
                return Err(Error::InvalidIntervention {
                    node: t,
                    reason: format!(
                        "mechanism parents {used:?} are not a subset of graph parents {orig:?}"
                    ),
                });
            }
        }
        self.regimes.push(Regime { interventions });
        Ok(self.regimes.len())
    }

    /// Append a regime with a single perfect intervention: the target's
    /// mechanism becomes N(mean, std) with no parents.
    pub fn add_perfect(&mut self, target: usize, mean: f64, std: f64) -> Result<usize> {
        let mech = Mechanism::gaussian_marginal(mean, std)?;
        self.add_regime(vec![InterventionSpec { target, mechanism: mech }])
    }

    /// Append a regime with a single imperfect intervention; the mechanism
    /// must keep a nonempty subset of the target's parents.
    pub fn add_imperfect(&mut self, target: usize, mechanism: Mechanism) -> Result<usize> {
        if mechanism.parents.is_empty() {
            return Err(Error::InvalidIntervention {
                node: target,
                reason: "imperfect intervention must keep at least one parent".into(),
            });
        }
        self.add_regime(vec![InterventionSpec { target, mechanism }])
    }

    /// Ancestral sampling of n points under regime k.
    pub fn sample<R: Rng>(&self, k: usize, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        self.check_regime(k)?;
        let d = self.d();
        let order = self.graph.topological_order();
        let mut out = Array2::zeros((n, d));
        let mut pa_buf = Vec::with_capacity(d);
        for r in 0..n {
            for &i in &order {
                let mech = self.mechanism(k, i)?;
                pa_buf.clear();
                for &p in &mech.parents {
                    pa_buf.push(out[[r, p]]);
                }
                out[[r, i]] = mech.sample(&pa_buf, rng)?;
            }
        }
        Ok(out)
    }

    /// log p^k(z) for one point.
    pub fn log_density(&self, k: usize, z: ArrayView1<f64>) -> Result<f64> {
        self.check_regime(k)?;
        if z.len() != self.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("point of dim {}", self.d()),
                got: format!("{}", z.len()),
            });
        }
        let mut total = 0.0;
        let mut pa_buf = Vec::new();
        for i in 0..self.d() {
            let mech = self.mechanism(k, i)?;
            pa_buf.clear();
            for &p in &mech.parents {
                pa_buf.push(z[p]);
            }
            total += mech.log_density(z[i], &pa_buf)?;
        }
        Ok(total)
    }

    pub fn log_density_batch(&self, k: usize, z: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(z.nrows());
        for (r, row) in z.rows().into_iter().enumerate() {
            out[r] = self.log_density(k, row)?;
        }
        Ok(out)
    }

    /// Gradient of log p^k with respect to all coordinates of z.
    pub fn score(&self, k: usize, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_regime(k)?;
        let d = self.d();
        let mut g = Array1::zeros(d);
        let mut pa_buf = Vec::new();
        for i in 0..d {
            let mech = self.mechanism(k, i)?;
            pa_buf.clear();
            for &p in &mech.parents {
                pa_buf.push(z[p]);
            }
            g[i] += mech.score(z[i], &pa_buf)?;
            let gp = mech.grad_parents(z[i], &pa_buf)?;
            for (&p, gv) in mech.parents.iter().zip(gp) {
                g[p] += gv;
            }
        }
        Ok(g)
    }

    /// Push the whole CBN (all regimes) through a coordinate-wise
    /// diffeomorphism: every mechanism is replaced by its `ScaledFrom`
    /// counterpart, factor by factor.
    pub fn pushforward(&self, h: &ScalingMap) -> Result<LatentCbn> {
        if h.d() != self.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("scaling of dim {}", self.d()),
                got: format!("{}", h.d()),
            });
        }
        // target map of node i is h_i; parent p goes through h_p
        let mut mechanisms = Vec::with_capacity(self.d());
        for (i, m) in self.mechanisms.iter().enumerate() {
            let parent_maps = m.parents.iter().map(|&p| *h.coord(p)).collect();
            mechanisms.push(Mechanism::scaled_from(m.clone(), *h.coord(i), parent_maps)?);
        }
        let mut out = LatentCbn::new(self.graph.clone(), mechanisms)?;
        for regime in &self.regimes {
            let mut ivs = Vec::with_capacity(regime.interventions.len());
            for iv in &regime.interventions {
                let parent_maps = iv.mechanism.parents.iter().map(|&p| *h.coord(p)).collect();
                ivs.push(InterventionSpec {
                    target: iv.target,
                    mechanism: Mechanism::scaled_from(
                        iv.mechanism.clone(),
                        *h.coord(iv.target),
                        parent_maps,
                    )?,
                });
            }
            out.add_regime(ivs)?;
        }
        Ok(out)
    }
}

/// Largest absolute residual of the pushforward identity
/// `log q^k(h(z)) + log |det Dh(z)| - log p^k(z)` over the given points and
/// all regimes. Zero (to rounding) certifies that mechanism-wise pushforward
/// reproduces the joint change of variables.
pub fn pushforward_identity_residual(
    cbn: &LatentCbn,
    h: &ScalingMap,
    points: ArrayView2<f64>,
) -> Result<f64> {
    let q = cbn.pushforward(h)?;
    let mut worst = 0.0f64;
    for row in points.rows() {
        let z: Vec<f64> = row.to_vec();
        let hz = h.apply(&z);
        let logdet = h.log_abs_det(&z);
        for k in 0..cbn.n_regimes() {
            let lhs = q.log_density(k, ndarray::aview1(&hz))? + logdet;
            let rhs = cbn.log_density(k, row)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// Linear-Gaussian structural model on `graph`: each node is a weighted sum
/// of its parents plus unit Gaussian noise, weights drawn U(-snr, snr).
pub fn make_linear_gaussian_scm<R: Rng>(graph: &Dag, snr: f64, rng: &mut R) -> Result<LatentCbn> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::InvalidParam {
            name: "snr".into(),
            reason: format!("{snr} must be positive"),
        });
    }
    let mut mechanisms = Vec::with_capacity(graph.d());
    for i in 0..graph.d() {
        let parents = graph.parents(i).to_vec();
        let weights: Vec<f64> = parents.iter().map(|_| rng.random_range(-snr..snr)).collect();
        mechanisms.push(Mechanism::linear_gaussian(parents, weights, 1.0)?);
    }
    LatentCbn::new(graph.clone(), mechanisms)
}

/// Nonlinear structural model: each non-root node gets random location and
/// scale networks of the given hidden width (two hidden layers, leaky-tanh),
/// the scale passed through softplus with a 0.1 floor; roots are N(0, 1).
pub fn make_location_scale_scm<R: Rng>(
    graph: &Dag,
    hidden_width: usize,
    rng: &mut R,
) -> Result<LatentCbn> {
    let mut mechanisms = Vec::with_capacity(graph.d());
    for i in 0..graph.d() {
        let parents = graph.parents(i).to_vec();
        if parents.is_empty() {
            mechanisms.push(Mechanism::gaussian_marginal(0.0, 1.0)?);
        } else {
            let sizes = [parents.len(), hidden_width, hidden_width, 1];
            let mut loc = Mlp::zeros(&sizes, Activation::LeakyTanh)?;
            let mut scale = Mlp::zeros(&sizes, Activation::LeakyTanh)?;
            loc.init_xavier(rng);
            scale.init_xavier(rng);
            mechanisms.push(Mechanism::location_scale(parents, loc, scale, 0.1)?);
        }
    }
    LatentCbn::new(graph.clone(), mechanisms)
}

/// Add one perfect intervention per node, in node order: regime k targets
/// node k-1 with N(mu, 1), mu drawn uniformly from {-mean_abs, +mean_abs}
/// and fixed within the regime.
pub fn add_per_node_perfect<R: Rng>(cbn: &mut LatentCbn, mean_abs: f64, rng: &mut R) -> Result<()> {
    for i in 0..cbn.d() {
        let mu = if rng.random::<f64>() < 0.5 { -mean_abs } else { mean_abs };
        cbn.add_perfect(i, mu, 1.0)?;
    }
    Ok(())
}

/// Covariance of the observational linear-Gaussian SCM with unit noise:
/// (I - A)^-1 (I - A)^-T, where A[i][j] is the weight of parent j on node i.
pub fn linear_gaussian_covariance(cbn: &LatentCbn) -> Result<Array2<f64>> {
    let d = cbn.d();
    let mut a = Array2::zeros((d, d));
    for i in 0..d {
        match &cbn.observational_mechanism(i).kind {
            MechanismKind::LinearGaussian { weights, noise_std } => {
                if (noise_std - 1.0).abs() > 1e-12 {
                    return Err(Error::UnsupportedFamily {
                        op: "linear_gaussian_covariance".into(),
                        family: "linear-gaussian with non-unit noise".into(),
                    });
                }
                for (&p, &w) in cbn.observational_mechanism(i).parents.iter().zip(weights) {
                    a[[i, p]] = w;
                }
            }
            // a root with unit-variance Gaussian noise; the mean does not
            // enter the covariance
            MechanismKind::GaussianMarginal { std, .. } if (std - 1.0).abs() <= 1e-12 => {}
            _ => {
                return Err(Error::UnsupportedFamily {
                    op: "linear_gaussian_covariance".into(),
                    family: cbn.observational_mechanism(i).family_name().into(),
                })
            }
        }
    }
    let eye = Array2::eye(d);
    let ima = &eye - &a;
    // solve (I - A) B = I, covariance = B B^T
    let lu = crate::linalg::Lu::new(ima.view())?;
    let mut binv = Array2::zeros((d, d));
    for j in 0..d {
        let e: Array1<f64> = Array1::from_shape_fn(d, |i| if i == j { 1.0 } else { 0.0 });
        let col = lu.solve(e.view());
        for i in 0..d {
            binv[[i, j]] = col[i];
        }
    }
    Ok(binv.dot(&binv.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_dag;
    use crate::rng::stream;
    use ndarray::array;

    fn chain_cbn() -> LatentCbn {
        // 0 -> 1 with weight 0.8, unit noises
        let g = Dag::new(2, [(0, 1)]).unwrap();
        let m0 = Mechanism::gaussian_marginal(0.0, 1.0).unwrap();
        let m1 = Mechanism::linear_gaussian(vec![0], vec![0.8], 1.0).unwrap();
        LatentCbn::new(g, vec![m0, m1]).unwrap()
    }

    #[test]
    fn factorization_replaces_only_targets() {
        let mut cbn = chain_cbn();
        cbn.add_perfect(1, 2.0, 1.0).unwrap();
        let z = array![0.5, 1.0];
        let lp0 = cbn.log_density(0, z.view()).unwrap();
        let expect0 = gaussian_log_pdf(0.5, 0.0, 1.0) + gaussian_log_pdf(1.0, 0.4, 1.0);
        assert!((lp0 - expect0).abs() < 1e-12);
        let lp1 = cbn.log_density(1, z.view()).unwrap();
        let expect1 = gaussian_log_pdf(0.5, 0.0, 1.0) + gaussian_log_pdf(1.0, 2.0, 1.0);
        assert!((lp1 - expect1).abs() < 1e-12);
        assert_eq!(cbn.targets(1).unwrap(), BTreeSet::from([1]));
        assert!(cbn.targets(0).unwrap().is_empty());
    }

    #[test]
    fn imperfect_intervention_needs_parent_subset() {
        let mut cbn = chain_cbn();
        // node 0 has no parents: imperfect with parent 1 must fail
        let bad = Mechanism::linear_gaussian(vec![1], vec![0.5], 1.0).unwrap();
        assert!(matches!(
            cbn.add_imperfect(0, bad),
            Err(Error::InvalidIntervention { .. })
        ));
        // node 1 keeping parent 0 with a new weight is valid
        let good = Mechanism::linear_gaussian(vec![0], vec![-0.3], 0.7).unwrap();
        cbn.add_imperfect(1, good).unwrap();
        let z = array![1.0, 0.0];
        let lp = cbn.log_density(1, z.view()).unwrap();
        let expect = gaussian_log_pdf(1.0, 0.0, 1.0) + gaussian_log_pdf(0.0, -0.3, 0.7);
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn perfect_intervention_mean_moves_samples() {
        let mut cbn = chain_cbn();
        cbn.add_perfect(0, -2.0, 1.0).unwrap();
        let mut rng = stream(21, "sample", 0);
        let z = cbn.sample(1, 4000, &mut rng).unwrap();
        let mean0 = z.column(0).sum() / 4000.0;
        assert!((mean0 + 2.0).abs() < 0.1, "intervened mean {mean0}");
        // child keeps listening to its (now shifted) parent
        let mean1 = z.column(1).sum() / 4000.0;
        assert!((mean1 + 1.6).abs() < 0.15, "child mean {mean1}");
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = stream(22, "score", 0);
        let g = random_dag(4, 0.7, true, &mut rng).unwrap();
        let cbn = {
            let mut c = make_linear_gaussian_scm(&g, 1.0, &mut rng).unwrap();
            add_per_node_perfect(&mut c, 2.0, &mut rng).unwrap();
            c
        };
        let z = array![0.3, -0.9, 1.4, 0.2];
        for k in 0..cbn.n_regimes() {
            let sc = cbn.score(k, z.view()).unwrap();
            for i in 0..4 {
                let mut zp = z.clone();
                zp[i] += 1e-6;
                let up = cbn.log_density(k, zp.view()).unwrap();
                zp[i] -= 2e-6;
                let dn = cbn.log_density(k, zp.view()).unwrap();
                let fd = (up - dn) / 2e-6;
                assert!(
                    (sc[i] - fd).abs() < 1e-6,
                    "regime {k} coord {i}: {} vs {fd}",
                    sc[i]
                );
            }
        }
    }

    #[test]
    fn pushforward_identity_holds_factor_wise() {
        let mut rng = stream(23, "push", 0);
        let g = random_dag(3, 0.8, true, &mut rng).unwrap();
        let mut cbn = make_linear_gaussian_scm(&g, 1.0, &mut rng).unwrap();
        add_per_node_perfect(&mut cbn, 2.0, &mut rng).unwrap();
        let h = random_scaling(3, true, &mut rng);
        let pts = cbn.sample(0, 100, &mut rng).unwrap();
        let res = pushforward_identity_residual(&cbn, &h, pts.view()).unwrap();
        assert!(res < 1e-8, "pushforward identity residual {res}");
    }

    #[test]
    fn linear_gaussian_covariance_closed_form() {
        let cbn = chain_cbn();
        let cov = linear_gaussian_covariance(&cbn).unwrap();
        // var(z0)=1, cov=0.8, var(z1)=1+0.64
        assert!((cov[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((cov[[0, 1]] - 0.8).abs() < 1e-12);
        assert!((cov[[1, 1]] - 1.64).abs() < 1e-12);
    }

    #[test]
    fn sample_covariance_matches_closed_form() {
        let mut rng = stream(24, "cov", 0);
        let g = random_dag(3, 0.8, true, &mut rng).unwrap();
        let cbn = make_linear_gaussian_scm(&g, 1.0, &mut rng).unwrap();
        let cov = linear_gaussian_covariance(&cbn).unwrap();
        let n = 100_000;
        let z = cbn.sample(0, n, &mut rng).unwrap();
        let mean: Array1<f64> = z.mean_axis(ndarray::Axis(0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for r in 0..n {
                    s += (z[[r, i]] - mean[i]) * (z[[r, j]] - mean[j]);
                }
                let emp = s / (n as f64 - 1.0);
                // rough standard error for Gaussian products
                let se = ((cov[[i, i]] * cov[[j, j]] + cov[[i, j]] * cov[[i, j]]) / n as f64).sqrt();
                assert!(
                    (emp - cov[[i, j]]).abs() < 4.0 * se,
                    "cov[{i},{j}] {emp} vs {} (se {se})",
                    cov[[i, j]]
                );
            }
        }
    }

    #[test]
    fn regime_bounds_are_checked() {
        let cbn = chain_cbn();
        assert!(matches!(
            cbn.log_density(1, array![0.0, 0.0].view()),
            Err(Error::RegimeOutOfRange { .. })
        ));
    }
}
