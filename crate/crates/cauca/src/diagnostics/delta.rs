//! Log-likelihood gap between a fitted model and the data-generating process.
//!
//! For each regime the gap is the sample mean of the model's log density
//! minus the sample mean of the generating process's log density on the same
//! observations. The pooled gap sums the per-regime means, mirroring the
//! pooled training objective. In expectation the gap is non-positive; a
//! well-fitted model sits near zero while a misspecified one falls below.

use crate::error::{Error, Result};
use crate::flow::RegimeLogProb;
use crate::oracle::GroundTruthModel;
use ndarray::Array2;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LogProbGap {
    /// Mean model log density minus mean true log density per regime.
    pub per_regime: Vec<f64>,
    /// Sum over regimes, matching the pooled objective.
    pub pooled: f64,
}

/// Compare a fitted density against the generating process on held-out data.
///
/// When the latent samples that generated `x` are available they are used
/// directly to evaluate the true density; otherwise the observations are
/// inverted through the mixing function. A model with a single regime is
/// treated as a pooled density and scored in every regime of the truth.
pub fn log_prob_gap(
    model: &dyn RegimeLogProb,
    truth: &GroundTruthModel,
    x: &[Array2<f64>],
    z: Option<&[Array2<f64>]>,
) -> Result<LogProbGap> {
    if x.len() != truth.n_regimes() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} regimes of data", truth.n_regimes()),
            got: format!("{}", x.len()),
        });
    }
    if let Some(z) = z {
        if z.len() != x.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} latent batches", x.len()),
                got: format!("{}", z.len()),
            });
        }
    }
    let pooled_model = model.n_regimes() == 1 && truth.n_regimes() > 1;
    let mut per_regime = Vec::with_capacity(x.len());
    for (k, xk) in x.iter().enumerate() {
        if xk.nrows() == 0 {
            return Err(Error::Config(format!("regime {k} has no rows")));
        }
        let model_regime = if pooled_model { 0 } else { k };
        let model_lp = model.log_prob(model_regime, xk)?;
        let true_lp = match z {
            Some(z) => truth.log_prob_given_latents(k, &z[k])?,
            None => truth.log_prob(k, xk)?,
        };
        let n = xk.nrows() as f64;
        per_regime.push((model_lp.sum() - true_lp.sum()) / n);
    }
    let pooled = per_regime.iter().sum();
    Ok(LogProbGap { per_regime, pooled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::make_linear_gaussian_scm;
    use crate::graph::Dag;
    use crate::mixing::sample_mixing;
    use crate::rng::stream;

    fn setup() -> (GroundTruthModel, Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut rng = stream(7, "gap-setup", 0);
        let g = Dag::new(2, [(0, 1)]).unwrap();
        let mut cbn = make_linear_gaussian_scm(&g, 1.0, &mut rng).unwrap();
        crate::cbn::add_per_node_perfect(&mut cbn, 2.0, &mut rng).unwrap();
        let mixing = sample_mixing(2, 2, &mut rng).unwrap();
        let truth = GroundTruthModel::new(cbn, mixing).unwrap();
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for k in 0..truth.n_regimes() {
            let (x, z) = truth.sample(k, 400, &mut rng).unwrap();
            xs.push(x);
            zs.push(z);
        }
        (truth, xs, zs)
    }

    #[test]
    fn truth_against_itself_has_zero_gap() {
        let (truth, xs, zs) = setup();
        let gap = log_prob_gap(&truth, &truth, &xs, Some(&zs)).unwrap();
        assert!(gap.pooled.abs() < 1e-9, "self-gap should vanish, got {}", gap.pooled);
        for (k, g) in gap.per_regime.iter().enumerate() {
            assert!(g.abs() < 1e-9, "regime {k} self-gap {g}");
        }
    }

    #[test]
    fn stored_latents_agree_with_inversion() {
        let (truth, xs, zs) = setup();
        let a = log_prob_gap(&truth, &truth, &xs, Some(&zs)).unwrap();
        let b = log_prob_gap(&truth, &truth, &xs, None).unwrap();
        for (x, y) in a.per_regime.iter().zip(b.per_regime.iter()) {
            assert!((x - y).abs() < 1e-6, "latent path {x} vs inversion path {y}");
        }
    }

    #[test]
    fn wrong_regime_count_is_rejected() {
        let (truth, xs, _) = setup();
        assert!(log_prob_gap(&truth, &truth, &xs[..1], None).is_err());
    }

    #[test]
    fn pooled_model_is_scored_in_every_regime() {
        struct Pooled;
        impl RegimeLogProb for Pooled {
            fn n_regimes(&self) -> usize {
                1
            }
            fn log_prob(&self, k: usize, x: &Array2<f64>) -> Result<ndarray::Array1<f64>> {
                assert_eq!(k, 0, "pooled model only has regime 0");
                Ok(ndarray::Array1::zeros(x.nrows()))
            }
        }
        let (truth, xs, zs) = setup();
        let gap = log_prob_gap(&Pooled, &truth, &xs, Some(&zs)).unwrap();
        assert_eq!(gap.per_regime.len(), truth.n_regimes());
    }
}
