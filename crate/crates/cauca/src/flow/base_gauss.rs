//! Linear-Gaussian causal base density over encoded latents.
//!
//! Given an assumed graph and per-regime intervention targets, the density
//! of regime k factorizes node-wise:
//! - non-targets keep their observational conditional
//!   N(z_i; alpha_i . z_pa(i), sigma_i^2),
//! - targets switch to a regime-specific marginal N(z_i; mu_i^k, (sigma_i^k)^2).
//!
//! Scale freedoms are pinned once per node against the data-generating
//! graph: root nodes freeze the observational sigma at 1, non-root nodes
//! freeze every interventional sigma at 1. Means and edge weights always
//! train. Standard deviations are parametrized by their logarithm.

use crate::cbn::gaussian_log_pdf;
use crate::error::{Error, Result};
use crate::graph::Dag;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbnGaussianBase {
    graph: Dag,
    targets: Vec<Vec<usize>>,
    /// one weight per parent, aligned with the sorted parent list
    alphas: Vec<Vec<f64>>,
    rho_obs: Vec<f64>,
    mu_int: Vec<Vec<f64>>,
    rho_int: Vec<Vec<f64>>,
    frozen_rho_obs: Vec<bool>,
    frozen_rho_int: Vec<Vec<bool>>,
    /// per regime, per node: index into the regime's target block
    target_slot: Vec<Vec<Option<usize>>>,
}

impl CbnGaussianBase {
    /// `data_roots[i]` says whether node i is a root in the data-generating
    /// graph; this drives which scales are pinned.
    pub fn new(graph: Dag, targets: Vec<Vec<usize>>, data_roots: &[bool]) -> Result<Self> {
        let d = graph.d();
        if data_roots.len() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} root flags"),
                got: format!("{}", data_roots.len()),
            });
        }
        let mut sorted_targets = Vec::with_capacity(targets.len());
        let mut target_slot = Vec::with_capacity(targets.len());
        for (k, t) in targets.iter().enumerate() {
            let mut t = t.clone();
            t.sort_unstable();
            t.dedup();
            let mut slots = vec![None; d];
            for (j, &i) in t.iter().enumerate() {
                if i >= d {
                    return Err(Error::NodeOutOfRange { node: i, d });
                }
                let _ = k;
                slots[i] = Some(j);
            }
            target_slot.push(slots);
            sorted_targets.push(t);
        }
        let alphas = (0..d).map(|i| vec![0.0; graph.parents(i).len()]).collect();
        let frozen_rho_obs = data_roots.to_vec();
        let frozen_rho_int = sorted_targets
            .iter()
            .map(|t| t.iter().map(|&i| !data_roots[i]).collect())
            .collect();
        let mu_int = sorted_targets.iter().map(|t| vec![0.0; t.len()]).collect();
        let rho_int = sorted_targets.iter().map(|t| vec![0.0; t.len()]).collect();
        Ok(CbnGaussianBase {
            graph,
            targets: sorted_targets,
            alphas,
            rho_obs: vec![0.0; d],
            mu_int,
            rho_int,
            frozen_rho_obs,
            frozen_rho_int,
            target_slot,
        })
    }

    /// Base for the pooled baseline: a single regime, empty graph, every
    /// coordinate an independent standard normal with nothing trainable.
    pub fn standard_normal_frozen(d: usize) -> Self {
        let graph = Dag::empty(d);
        CbnGaussianBase {
            graph,
            targets: vec![vec![]],
            alphas: vec![vec![]; d],
            rho_obs: vec![0.0; d],
            mu_int: vec![vec![]],
            rho_int: vec![vec![]],
            frozen_rho_obs: vec![true; d],
            frozen_rho_int: vec![vec![]],
            target_slot: vec![vec![None; d]],
        }
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn n_regimes(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self, k: usize) -> &[usize] {
        &self.targets[k]
    }

    /// Edge weights of one node, aligned with its sorted parent list.
    pub fn alpha(&self, i: usize) -> &[f64] {
        &self.alphas[i]
    }

    pub fn n_params(&self) -> usize {
        let a: usize = self.alphas.iter().map(Vec::len).sum();
        let r: usize = self.targets.iter().map(|t| 2 * t.len()).sum();
        a + self.rho_obs.len() + r
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for a in &self.alphas {
            out.extend(a.iter());
        }
        out.extend(self.rho_obs.iter());
        for k in 0..self.targets.len() {
            out.extend(self.mu_int[k].iter());
            out.extend(self.rho_int[k].iter());
        }
    }

    pub fn load_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.n_params());
        let mut at = 0;
        for a in &mut self.alphas {
            for v in a.iter_mut() {
                *v = src[at];
                at += 1;
            }
        }
        for v in &mut self.rho_obs {
            *v = src[at];
            at += 1;
        }
        for k in 0..self.targets.len() {
            for v in &mut self.mu_int[k] {
                *v = src[at];
                at += 1;
            }
            for v in &mut self.rho_int[k] {
                *v = src[at];
                at += 1;
            }
        }
    }

    pub fn append_frozen(&self, out: &mut Vec<bool>) {
        for a in &self.alphas {
            out.extend(std::iter::repeat_n(false, a.len()));
        }
        out.extend(self.frozen_rho_obs.iter());
        for k in 0..self.targets.len() {
            out.extend(std::iter::repeat_n(false, self.mu_int[k].len()));
            out.extend(self.frozen_rho_int[k].iter());
        }
    }

    fn check_regime(&self, k: usize) -> Result<()> {
        if k >= self.n_regimes() {
            return Err(Error::RegimeOutOfRange { k, n_regimes: self.n_regimes() });
        }
        Ok(())
    }

    /// Per-sample log density of regime k.
    pub fn log_prob(&self, k: usize, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_regime(k)?;
        let d = self.d();
        let n = z.nrows();
        let mut out = Array1::zeros(n);
        for i in 0..d {
            match self.target_slot[k][i] {
                Some(j) => {
                    let mu = self.mu_int[k][j];
                    let sigma = self.rho_int[k][j].exp();
                    for s in 0..n {
                        out[s] += gaussian_log_pdf(z[[s, i]], mu, sigma);
                    }
                }
                None => {
                    let sigma = self.rho_obs[i].exp();
                    let parents = self.graph.parents(i);
                    for s in 0..n {
                        let mut m = 0.0;
                        for (p_i, &p) in parents.iter().enumerate() {
                            m += self.alphas[i][p_i] * z[[s, p]];
                        }
                        out[s] += gaussian_log_pdf(z[[s, i]], m, sigma);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Log density plus its reverse pass. `gout[s]` weights sample s's
    /// log-density in the loss; parameter gradients accumulate into
    /// `param_grad` (this base's flat slice) and the returned array is
    /// dL/dz.
    pub fn log_prob_with_grad(
        &self,
        k: usize,
        z: &Array2<f64>,
        gout: &Array1<f64>,
        param_grad: &mut [f64],
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_regime(k)?;
        debug_assert_eq!(param_grad.len(), self.n_params());
        let d = self.d();
        let n = z.nrows();
        let mut logp = Array1::zeros(n);
        let mut gz = Array2::zeros(z.raw_dim());

        // offsets into the flat layout
        let mut alpha_off = vec![0usize; d];
        let mut at = 0;
        for i in 0..d {
            alpha_off[i] = at;
            at += self.alphas[i].len();
        }
        let rho_obs_off = at;
        at += d;
        let mut regime_off = vec![0usize; self.n_regimes()];
        for kk in 0..self.n_regimes() {
            regime_off[kk] = at;
            at += 2 * self.targets[kk].len();
        }

        for i in 0..d {
            match self.target_slot[k][i] {
                Some(j) => {
                    let mu = self.mu_int[k][j];
                    let rho = self.rho_int[k][j];
                    let sigma = rho.exp();
                    let inv_var = (-2.0 * rho).exp();
                    let mu_at = regime_off[k] + j;
                    let rho_at = regime_off[k] + self.targets[k].len() + j;
                    for s in 0..n {
                        let e = z[[s, i]] - mu;
                        logp[s] += gaussian_log_pdf(z[[s, i]], mu, sigma);
                        let g = gout[s];
                        gz[[s, i]] += -g * e * inv_var;
                        param_grad[mu_at] += g * e * inv_var;
                        param_grad[rho_at] += g * (e * e * inv_var - 1.0);
                    }
                }
                None => {
                    let rho = self.rho_obs[i];
                    let sigma = rho.exp();
                    let inv_var = (-2.0 * rho).exp();
                    let parents = self.graph.parents(i);
                    for s in 0..n {
                        let mut m = 0.0;
                        for (p_i, &p) in parents.iter().enumerate() {
                            m += self.alphas[i][p_i] * z[[s, p]];
                        }
                        let e = z[[s, i]] - m;
                        logp[s] += gaussian_log_pdf(z[[s, i]], m, sigma);
                        let g = gout[s];
                        gz[[s, i]] += -g * e * inv_var;
                        for (p_i, &p) in parents.iter().enumerate() {
                            gz[[s, p]] += g * e * inv_var * self.alphas[i][p_i];
                            param_grad[alpha_off[i] + p_i] += g * e * inv_var * z[[s, p]];
                        }
                        param_grad[rho_obs_off + i] += g * (e * e * inv_var - 1.0);
                    }
                }
            }
        }
        Ok((logp, gz))
    }

    /// Ancestral sample from the base density under regime k.
    pub fn sample<R: rand::Rng>(
        &self,
        k: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        self.check_regime(k)?;
        let d = self.d();
        let mut z = Array2::zeros((n, d));
        let order = self.graph.topological_order();
        for s in 0..n {
            for &i in &order {
                let eps: f64 = StandardNormal.sample(rng);
                z[[s, i]] = match self.target_slot[k][i] {
                    Some(j) => self.mu_int[k][j] + self.rho_int[k][j].exp() * eps,
                    None => {
                        let mut m = 0.0;
                        for (p_i, &p) in self.graph.parents(i).iter().enumerate() {
                            m += self.alphas[i][p_i] * z[[s, p]];
                        }
                        m + self.rho_obs[i].exp() * eps
                    }
                };
            }
        }
        Ok(z)
    }
}
