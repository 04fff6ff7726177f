//! Ground-truth likelihood of synthetic observations.
//!
//! The generating process draws latents from a causal Bayesian network and
//! observes them through an invertible mixing, so the exact observational
//! density is available by change of variables:
//! log p^k(x) = log p^k_latent(f^{-1}(x)) - log |det Jf(f^{-1}(x))|.
//!
//! An optional square matrix composed after the unmixing produces entangled
//! alternatives: encodings that are linear mixtures of the true latents.
//! By the information inequality no alternative can beat the ground truth
//! in expected log-likelihood under its own data, which gives trained
//! models a calibrated upper bound to be compared against.

use crate::cbn::LatentCbn;
use crate::error::{Error, Result};
use crate::flow::RegimeLogProb;
use crate::linalg;
use crate::mixing::MixingFunction;
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub cbn: LatentCbn,
    pub mixing: MixingFunction,
    /// optional linear map applied to the recovered latents
    pub post: Option<Array2<f64>>,
}

impl GroundTruthModel {
    pub fn new(cbn: LatentCbn, mixing: MixingFunction) -> Result<Self> {
        if cbn.d() != mixing.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("mixing over {} coordinates", cbn.d()),
                got: format!("{}", mixing.d()),
            });
        }
        Ok(GroundTruthModel { cbn, mixing, post: None })
    }

    /// Same observation model, but encodings pass through `map` first.
    pub fn with_post_map(mut self, map: Array2<f64>) -> Result<Self> {
        if map.nrows() != self.cbn.d() || map.ncols() != self.cbn.d() {
            return Err(Error::ShapeMismatch {
                expected: format!("{d}x{d} matrix", d = self.cbn.d()),
                got: format!("{}x{}", map.nrows(), map.ncols()),
            });
        }
        linalg::Lu::new(map.view())?;
        self.post = Some(map);
        Ok(self)
    }

    /// Log-density of regime k when the generating latents are known,
    /// skipping the numerical unmixing inverse.
    pub fn log_prob_given_latents(&self, k: usize, z: &Array2<f64>) -> Result<Array1<f64>> {
        let lam = self.mixing.log_abs_det_jacobian(z.view());
        let base = self.eval_latents(k, z)?;
        Ok(base - lam)
    }

    fn eval_latents(&self, k: usize, z: &Array2<f64>) -> Result<Array1<f64>> {
        match &self.post {
            None => self.cbn.log_density_batch(k, z.view()),
            Some(map) => {
                let w = z.dot(&map.t());
                let lad = linalg::Lu::new(map.view())?.log_abs_det();
                let mut lp = self.cbn.log_density_batch(k, w.view())?;
                lp += lad;
                Ok(lp)
            }
        }
    }

    /// Draw observations from regime k.
    pub fn sample<R: rand::Rng>(
        &self,
        k: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let z = self.cbn.sample(k, n, rng)?;
        let x = self.mixing.forward_batch(z.view());
        Ok((x, z))
    }
}

impl RegimeLogProb for GroundTruthModel {
    fn n_regimes(&self) -> usize {
        self.cbn.n_regimes()
    }

    fn log_prob(&self, k: usize, x: &Array2<f64>) -> Result<Array1<f64>> {
        let z = self.mixing.inverse_batch(x.view())?;
        self.log_prob_given_latents(k, &z)
    }
}
