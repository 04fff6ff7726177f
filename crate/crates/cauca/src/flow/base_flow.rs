//! Nonparametric causal base density built from graph-masked spline stacks.
//!
//! Each node's conditional density given its parents is a 1-D normalizing
//! flow: a stack of rational-quadratic splines whose parameters are emitted
//! by a per-node conditioner reading the parent values, driving the node's
//! coordinate toward a standard normal. Root nodes hold free spline
//! parameters instead of a conditioner. Every layer conditions on the raw
//! input coordinates of the parents, so the model factorizes exactly over
//! the assumed graph rather than its ancestral closure.
//!
//! Under regime k the factors of intervened nodes are replaced by
//! regime-specific Gaussian marginals evaluated on the raw coordinate;
//! their spline factors and log-derivatives drop out of the density.

use crate::cbn::gaussian_log_pdf;
use crate::error::{Error, Result};
use crate::flow::spline::{Rqs, RqsScratch};
use crate::graph::Dag;
use crate::nn::{Activation, Mlp, MlpCache};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Spline parameter source for one node in one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeCond {
    /// Raw spline parameters shared by all samples (root nodes).
    Free(Vec<f64>),
    /// Conditioner network reading the raw parent values.
    Net(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbnFlowBase {
    graph: Dag,
    targets: Vec<Vec<usize>>,
    target_slot: Vec<Vec<Option<usize>>>,
    spline: Rqs,
    /// conds[layer][node]
    conds: Vec<Vec<NodeCond>>,
    mu_int: Vec<Vec<f64>>,
    rho_int: Vec<Vec<f64>>,
    frozen_rho_int: Vec<Vec<bool>>,
}

/// Forward intermediates for the reverse pass.
pub struct FlowBaseCache {
    /// input to each layer; inputs[0] is the raw batch
    inputs: Vec<Array2<f64>>,
    raws: Vec<Vec<NodeRawCache>>,
    u_final: Array2<f64>,
    lam: Array2<f64>,
}

enum NodeRawCache {
    Free,
    Net { raw: Array2<f64>, mlp: MlpCache },
}

impl CbnFlowBase {
    pub fn new<R: Rng>(
        graph: Dag,
        targets: Vec<Vec<usize>>,
        data_roots: &[bool],
        n_layers: usize,
        spline: Rqs,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let d = graph.d();
        if data_roots.len() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} root flags"),
                got: format!("{}", data_roots.len()),
            });
        }
        if n_layers == 0 {
            return Err(Error::InvalidParam {
                name: "n_layers".into(),
                reason: "need at least one spline layer".into(),
            });
        }
        let mut sorted_targets = Vec::with_capacity(targets.len());
        let mut target_slot = Vec::with_capacity(targets.len());
        for t in &targets {
            let mut t = t.clone();
            t.sort_unstable();
            t.dedup();
            let mut slots = vec![None; d];
            for (j, &i) in t.iter().enumerate() {
                if i >= d {
                    return Err(Error::NodeOutOfRange { node: i, d });
                }
                slots[i] = Some(j);
            }
            target_slot.push(slots);
            sorted_targets.push(t);
        }
        let n_raw = spline.n_raw();
        let mut conds = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let mut per_node = Vec::with_capacity(d);
            for i in 0..d {
                let parents = graph.parents(i);
                if parents.is_empty() {
                    per_node.push(NodeCond::Free(vec![0.0; n_raw]));
                } else {
                    let mut sizes = vec![parents.len()];
                    sizes.extend_from_slice(hidden);
                    sizes.push(n_raw);
                    let mut net = Mlp::zeros(&sizes, Activation::Tanh)?;
                    net.init_xavier(rng);
                    net.zero_output_layer();
                    per_node.push(NodeCond::Net(net));
                }
            }
            conds.push(per_node);
        }
        let mu_int = sorted_targets.iter().map(|t| vec![0.0; t.len()]).collect();
        let rho_int = sorted_targets.iter().map(|t| vec![0.0; t.len()]).collect();
        let frozen_rho_int = sorted_targets
            .iter()
            .map(|t| t.iter().map(|&i| !data_roots[i]).collect())
            .collect();
        Ok(CbnFlowBase {
            graph,
            targets: sorted_targets,
            target_slot,
            spline,
            conds,
            mu_int,
            rho_int,
            frozen_rho_int,
        })
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

    pub fn n_params(&self) -> usize {
        let c: usize = self
            .conds
            .iter()
            .flat_map(|layer| layer.iter())
            .map(|c| match c {
                NodeCond::Free(v) => v.len(),
                NodeCond::Net(m) => m.n_params(),
            })
            .sum();
        let r: usize = self.targets.iter().map(|t| 2 * t.len()).sum();
        c + r
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for layer in &self.conds {
            for c in layer {
                match c {
                    NodeCond::Free(v) => out.extend(v.iter()),
                    NodeCond::Net(m) => m.append_params(out),
                }
            }
        }
        for k in 0..self.targets.len() {
            out.extend(self.mu_int[k].iter());
            out.extend(self.rho_int[k].iter());
        }
    }

    pub fn load_params(&mut self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.n_params());
        let mut at = 0;
        for layer in &mut self.conds {
            for c in layer {
                match c {
                    NodeCond::Free(v) => {
                        let n = v.len();
                        v.copy_from_slice(&src[at..at + n]);
                        at += n;
                    }
                    NodeCond::Net(m) => {
                        m.load_params(&src[at..at + m.n_params()]);
                        at += m.n_params();
                    }
                }
            }
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
        let c: usize = self
            .conds
            .iter()
            .flat_map(|layer| layer.iter())
            .map(|c| match c {
                NodeCond::Free(v) => v.len(),
                NodeCond::Net(m) => m.n_params(),
            })
            .sum();
        out.extend(std::iter::repeat_n(false, c));
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

    fn gather_parents(&self, z: &Array2<f64>, i: usize) -> Array2<f64> {
        let parents = self.graph.parents(i);
        let mut out = Array2::zeros((z.nrows(), parents.len()));
        for (c, &p) in parents.iter().enumerate() {
            out.column_mut(c).assign(&z.column(p));
        }
        out
    }

    /// Run the spline cascade on raw inputs. Also used by sampling through
    /// its per-node inverse.
    fn cascade(&self, z: &Array2<f64>, want_cache: bool) -> FlowBaseCache {
        let n = z.nrows();
        let d = self.d();
        let mut u = z.clone();
        let mut lam = Array2::zeros((n, d));
        let mut inputs = Vec::with_capacity(self.conds.len());
        let mut raws = Vec::with_capacity(self.conds.len());
        let mut scratch = RqsScratch::new(self.spline.k_bins);
        let rlen = self.spline.n_raw();
        for layer in &self.conds {
            if want_cache {
                inputs.push(u.clone());
            }
            let mut raw_caches = Vec::with_capacity(d);
            for (i, cond) in layer.iter().enumerate() {
                match cond {
                    NodeCond::Free(rawp) => {
                        self.spline.build(rawp, &mut scratch);
                        for s in 0..n {
                            let (w, l) = self.spline.forward_knots(&scratch, u[[s, i]]);
                            u[[s, i]] = w;
                            lam[[s, i]] += l;
                        }
                        if want_cache {
                            raw_caches.push(NodeRawCache::Free);
                        }
                    }
                    NodeCond::Net(net) => {
                        let pa = self.gather_parents(z, i);
                        let (raw, mlp) = if want_cache {
                            let (r, m) = net.forward_cached(&pa);
                            (r, Some(m))
                        } else {
                            (net.forward(&pa), None)
                        };
                        for s in 0..n {
                            let row = raw.row(s);
                            let rs = row.as_slice().expect("contiguous");
                            let (w, l) = self.spline.forward(&rs[0..rlen], u[[s, i]], &mut scratch);
                            u[[s, i]] = w;
                            lam[[s, i]] += l;
                        }
                        if want_cache {
                            raw_caches.push(NodeRawCache::Net {
                                raw,
                                mlp: mlp.expect("cached"),
                            });
                        }
                    }
                }
            }
            if want_cache {
                raws.push(raw_caches);
            }
        }
        FlowBaseCache { inputs, raws, u_final: u, lam }
    }

    pub fn log_prob(&self, k: usize, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_regime(k)?;
        let cache = self.cascade(z, false);
        Ok(self.assemble_log_prob(k, z, &cache))
    }

    fn assemble_log_prob(&self, k: usize, z: &Array2<f64>, cache: &FlowBaseCache) -> Array1<f64> {
        let n = z.nrows();
        let d = self.d();
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
                    for s in 0..n {
                        out[s] += gaussian_log_pdf(cache.u_final[[s, i]], 0.0, 1.0)
                            + cache.lam[[s, i]];
                    }
                }
            }
        }
        out
    }

    pub fn log_prob_with_grad(
        &self,
        k: usize,
        z: &Array2<f64>,
        gout: &Array1<f64>,
        param_grad: &mut [f64],
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_regime(k)?;
        debug_assert_eq!(param_grad.len(), self.n_params());
        let n = z.nrows();
        let d = self.d();
        let cache = self.cascade(z, true);
        let logp = self.assemble_log_prob(k, z, &cache);

        // flat offsets per (layer, node) block, then regime blocks
        let n_layers = self.conds.len();
        let mut off = vec![vec![0usize; d]; n_layers];
        let mut at = 0;
        for (l, layer) in self.conds.iter().enumerate() {
            for (i, c) in layer.iter().enumerate() {
                off[l][i] = at;
                at += match c {
                    NodeCond::Free(v) => v.len(),
                    NodeCond::Net(m) => m.n_params(),
                };
            }
        }
        let mut regime_off = vec![0usize; self.n_regimes()];
        for kk in 0..self.n_regimes() {
            regime_off[kk] = at;
            at += 2 * self.targets[kk].len();
        }

        // upstream into the cascade outputs
        let mut gu = Array2::zeros((n, d));
        let mut gz = Array2::zeros((n, d));
        for i in 0..d {
            match self.target_slot[k][i] {
                Some(j) => {
                    let mu = self.mu_int[k][j];
                    let rho = self.rho_int[k][j];
                    let inv_var = (-2.0 * rho).exp();
                    let mu_at = regime_off[k] + j;
                    let rho_at = regime_off[k] + self.targets[k].len() + j;
                    for s in 0..n {
                        let e = z[[s, i]] - mu;
                        let g = gout[s];
                        gz[[s, i]] += -g * e * inv_var;
                        param_grad[mu_at] += g * e * inv_var;
                        param_grad[rho_at] += g * (e * e * inv_var - 1.0);
                    }
                }
                None => {
                    for s in 0..n {
                        gu[[s, i]] = -gout[s] * cache.u_final[[s, i]];
                    }
                }
            }
        }

        let rlen = self.spline.n_raw();
        let mut scratch = RqsScratch::new(self.spline.k_bins);
        let mut graw_row = vec![0.0; rlen];
        for l in (0..n_layers).rev() {
            let inputs = &cache.inputs[l];
            for (i, cond) in self.conds[l].iter().enumerate() {
                // skip coordinates whose factor is replaced in this regime:
                // zero upstream would only waste work
                let skip = self.target_slot[k][i].is_some();
                match (cond, &cache.raws[l][i]) {
                    (NodeCond::Free(rawp), NodeRawCache::Free) => {
                        if skip {
                            continue;
                        }
                        self.spline.build(rawp, &mut scratch);
                        let pslice = &mut param_grad[off[l][i]..off[l][i] + rlen];
                        for s in 0..n {
                            let gx = self.spline.backward_knots(
                                rawp,
                                &mut scratch,
                                inputs[[s, i]],
                                gu[[s, i]],
                                gout[s],
                                pslice,
                            );
                            gu[[s, i]] = gx;
                        }
                    }
                    (NodeCond::Net(net), NodeRawCache::Net { raw, mlp }) => {
                        if skip {
                            continue;
                        }
                        let mut graw = Array2::zeros(raw.raw_dim());
                        for s in 0..n {
                            let rrow = raw.row(s);
                            let rs = rrow.as_slice().expect("contiguous");
                            graw_row.iter_mut().for_each(|v| *v = 0.0);
                            let gx = self.spline.backward(
                                &rs[0..rlen],
                                inputs[[s, i]],
                                gu[[s, i]],
                                gout[s],
                                &mut graw_row,
                                &mut scratch,
                            );
                            gu[[s, i]] = gx;
                            graw.row_mut(s).assign(
                                &ndarray::ArrayView1::from(&graw_row[..]),
                            );
                        }
                        let pslice =
                            &mut param_grad[off[l][i]..off[l][i] + net.n_params()];
                        let gpa = net.backward(mlp, &graw, pslice);
                        for (c, &p) in self.graph.parents(i).iter().enumerate() {
                            for s in 0..n {
                                gz[[s, p]] += gpa[[s, c]];
                            }
                        }
                    }
                    _ => unreachable!("cache kind matches conditioner kind"),
                }
            }
        }
        // cascade entry point is the raw input itself
        gz += &gu;
        Ok((logp, gz))
    }

    /// Ancestral sample under regime k: intervened coordinates from their
    /// Gaussian marginals, the rest by inverting each node's 1-D spline
    /// stack given already-sampled parents.
    pub fn sample<R: Rng>(&self, k: usize, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        self.check_regime(k)?;
        let d = self.d();
        let n_layers = self.conds.len();
        let mut z = Array2::zeros((n, d));
        let order = self.graph.topological_order();
        let mut scratch = RqsScratch::new(self.spline.k_bins);
        let rlen = self.spline.n_raw();
        for s in 0..n {
            for &i in &order {
                let eps: f64 = StandardNormal.sample(rng);
                match self.target_slot[k][i] {
                    Some(j) => {
                        z[[s, i]] = self.mu_int[k][j] + self.rho_int[k][j].exp() * eps;
                    }
                    None => {
                        // all layer parameters depend only on raw parents
                        let mut w = eps;
                        for l in (0..n_layers).rev() {
                            match &self.conds[l][i] {
                                NodeCond::Free(rawp) => {
                                    let (x, _) = self.spline.inverse(rawp, w, &mut scratch);
                                    w = x;
                                }
                                NodeCond::Net(net) => {
                                    let parents = self.graph.parents(i);
                                    let mut pa = Array1::zeros(parents.len());
                                    for (c, &p) in parents.iter().enumerate() {
                                        pa[c] = z[[s, p]];
                                    }
                                    let raw = net.forward_row(pa.view());
                                    let rs = raw.as_slice().expect("contiguous");
                                    let (x, _) =
                                        self.spline.inverse(&rs[0..rlen], w, &mut scratch);
                                    w = x;
                                }
                            }
                        }
                        z[[s, i]] = w;
                    }
                }
            }
        }
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn toy_base(seed: u64, perturb: f64) -> CbnFlowBase {
        let graph = Dag::new(2, [(0, 1)]).unwrap();
        let mut rng = stream(seed, "flowbase", 0);
        let mut base = CbnFlowBase::new(
            graph,
            vec![vec![], vec![0], vec![1]],
            &[true, false],
            2,
            Rqs::new(8, 5.0),
            &[8],
            &mut rng,
        )
        .unwrap();
        if perturb > 0.0 {
            let mut p = Vec::new();
            base.append_params(&mut p);
            for v in p.iter_mut() {
                *v += rng.random_range(-perturb..perturb);
            }
            base.load_params(&p);
        }
        base
    }

    #[test]
    fn identity_init_reduces_to_standard_normal_factors() {
        let base = toy_base(80, 0.0);
        let z = Array2::from_shape_fn((10, 2), |(s, i)| 0.3 * s as f64 - 0.9 * i as f64);
        let lp = base.log_prob(0, &z).unwrap();
        for s in 0..10 {
            let expect = gaussian_log_pdf(z[[s, 0]], 0.0, 1.0)
                + gaussian_log_pdf(z[[s, 1]], 0.0, 1.0);
            assert!((lp[s] - expect).abs() < 1e-9, "sample {s}");
        }
    }

    #[test]
    fn density_is_normalized_on_a_grid() {
        let base = toy_base(81, 0.8);
        // trapezoid rule over [-9, 9]^2; tails are identity so mass decays
        let n_grid = 301;
        let lo = -9.0;
        let hi = 9.0;
        let step = (hi - lo) / (n_grid - 1) as f64;
        let mut pts = Array2::zeros((n_grid * n_grid, 2));
        for a in 0..n_grid {
            for b in 0..n_grid {
                pts[[a * n_grid + b, 0]] = lo + a as f64 * step;
                pts[[a * n_grid + b, 1]] = lo + b as f64 * step;
            }
        }
        for k in 0..3 {
            let lp = base.log_prob(k, &pts).unwrap();
            let mass: f64 = lp.iter().map(|&l| l.exp()).sum::<f64>() * step * step;
            assert!(
                (mass - 1.0).abs() < 2e-3,
                "regime {k} integrates to {mass}"
            );
        }
    }

    #[test]
    fn intervened_factor_reads_the_raw_coordinate() {
        let mut base = toy_base(82, 0.5);
        // make regime 2's marginal for node 1 distinctive
        let nt = base.targets[2].len();
        assert_eq!(nt, 1);
        base.mu_int[2][0] = 1.5;
        base.rho_int[2][0] = 0.0;
        let z = Array2::from_shape_fn((4, 2), |(s, i)| 0.4 * s as f64 + 0.2 * i as f64);
        let lp2 = base.log_prob(2, &z).unwrap();
        let lp0 = base.log_prob(0, &z).unwrap();
        let cache = base.cascade(&z, false);
        for s in 0..4 {
            let node0 = gaussian_log_pdf(cache.u_final[[s, 0]], 0.0, 1.0) + cache.lam[[s, 0]];
            let expect = node0 + gaussian_log_pdf(z[[s, 1]], 1.5, 1.0);
            assert!((lp2[s] - expect).abs() < 1e-9);
            assert!((lp2[s] - lp0[s]).abs() > 1e-6, "regimes must differ");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let base = toy_base(83, 0.6);
        let mut rng = stream(84, "flowbase-grad", 0);
        let z = Array2::from_shape_fn((4, 2), |_| rng.random_range(-2.5..2.5));
        let gout = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let mut p = Vec::new();
        base.append_params(&mut p);
        for k in 0..3 {
            let mut pg = vec![0.0; base.n_params()];
            let (_, gz) = base.log_prob_with_grad(k, &z, &gout, &mut pg).unwrap();
            let loss = |b: &CbnFlowBase, z: &Array2<f64>| {
                (&b.log_prob(k, z).unwrap() * &gout).sum()
            };
            let e = 1e-6;
            for i in 0..p.len() {
                let mut b = base.clone();
                let mut pp = p.clone();
                pp[i] += e;
                b.load_params(&pp);
                let up = loss(&b, &z);
                pp[i] -= 2.0 * e;
                b.load_params(&pp);
                let dn = loss(&b, &z);
                let fd = (up - dn) / (2.0 * e);
                assert!(
                    (pg[i] - fd).abs() / fd.abs().max(1e-4) < 1e-4,
                    "regime {k} param {i}: analytic {} vs fd {fd}",
                    pg[i]
                );
            }
            for r in 0..z.nrows() {
                for c in 0..z.ncols() {
                    let mut zp = z.clone();
                    zp[[r, c]] += e;
                    let up = loss(&base, &zp);
                    zp[[r, c]] -= 2.0 * e;
                    let dn = loss(&base, &zp);
                    let fd = (up - dn) / (2.0 * e);
                    assert!(
                        (gz[[r, c]] - fd).abs() / fd.abs().max(1e-4) < 1e-4,
                        "regime {k} z({r},{c}): analytic {} vs fd {fd}",
                        gz[[r, c]]
                    );
                }
            }
        }
    }

    #[test]
    fn samples_invert_back_through_the_cascade() {
        let base = toy_base(85, 0.7);
        let mut rng = stream(86, "flowbase-sample", 0);
        let z = base.sample(0, 200, &mut rng).unwrap();
        let lp = base.log_prob(0, &z).unwrap();
        assert!(lp.iter().all(|l| l.is_finite()));
        // empirical mean log-density should beat a fixed wide Gaussian's
        let wide: f64 = z
            .iter()
            .map(|&v| gaussian_log_pdf(v, 0.0, 3.0))
            .sum::<f64>()
            / 200.0;
        let got = lp.sum() / 200.0;
        assert!(got > wide, "sampled points sit in low-density regions");
        // cascade of a sample's non-intervened coordinates is standard
        // normal by construction; check the first two moments loosely
        let cache = base.cascade(&z, false);
        for i in 0..2 {
            let m = cache.u_final.column(i).sum() / 200.0;
            assert!(m.abs() < 0.3, "coordinate {i} mean {m}");
        }
    }
}
