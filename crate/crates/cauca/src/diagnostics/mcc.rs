//! Mean correlation coefficient between true and estimated latents.
//!
//! Correlates every true coordinate with every estimated coordinate, takes
//! absolute values, and averages along an alignment: either the identity
//! (coordinate i against coordinate i) or the best permutation, found by
//! exhaustive search (alignment quality is the maximum over d! choices,
//! practical for the small d used here). Spearman variants rank-transform
//! with average ties first, making the score invariant to monotone
//! coordinate-wise reparametrizations.
//!
//! A constant coordinate has no correlation with anything; its entries are
//! defined as zero rather than NaN so degenerate encoders score badly
//! instead of poisoning the average.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    Identity,
    BestPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Ranks with ties sharing their average position.
pub fn average_ranks(v: ArrayView1<f64>) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("no NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Absolute correlation matrix: entry (i, j) relates true coordinate i to
/// estimated coordinate j.
pub fn correlation_matrix(
    z_true: &Array2<f64>,
    z_est: &Array2<f64>,
    kind: CorrelationKind,
) -> Result<Array2<f64>> {
    if z_true.nrows() != z_est.nrows() || z_true.ncols() != z_est.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", z_true.nrows(), z_true.ncols()),
            got: format!("{}x{}", z_est.nrows(), z_est.ncols()),
        });
    }
    if z_true.nrows() < 2 {
        return Err(Error::Config("need at least two samples for correlations".into()));
    }
    let d = z_true.ncols();
    let prep = |m: &Array2<f64>| -> Array2<f64> {
        match kind {
            CorrelationKind::Pearson => m.clone(),
            CorrelationKind::Spearman => {
                let mut out = Array2::zeros(m.raw_dim());
                for j in 0..m.ncols() {
                    let r = average_ranks(m.column(j));
                    for (s, &v) in r.iter().enumerate() {
                        out[[s, j]] = v;
                    }
                }
                out
            }
        }
    };
    let t = prep(z_true);
    let e = prep(z_est);
    let mut c = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            c[[i, j]] = pearson(t.column(i), e.column(j)).abs();
        }
    }
    Ok(c)
}

fn best_permutation_mean(c: &Array2<f64>) -> f64 {
    let d = c.nrows();
    let mut used = vec![false; d];
    fn rec(c: &Array2<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        let d = c.nrows();
        if row == d {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        // optimistic bound: remaining entries are at most 1 each
        if acc + (d - row) as f64 <= *best {
            return;
        }
        for j in 0..d {
            if !used[j] {
                used[j] = true;
                rec(c, row + 1, used, acc + c[[row, j]], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(c, 0, &mut used, 0.0, &mut best);
    best / d as f64
}

/// Mean correlation coefficient under the chosen alignment.
pub fn mcc(
    z_true: &Array2<f64>,
    z_est: &Array2<f64>,
    alignment: Alignment,
    kind: CorrelationKind,
) -> Result<f64> {
    let c = correlation_matrix(z_true, z_est, kind)?;
    let d = c.nrows();
    match alignment {
        Alignment::Identity => Ok((0..d).map(|i| c[[i, i]]).sum::<f64>() / d as f64),
        Alignment::BestPermutation => {
            if d > 10 {
                return Err(Error::Config(format!(
                    "exhaustive alignment supports up to 10 coordinates, got {d}"
                )));
            }
            Ok(best_permutation_mean(&c))
        }
    }
}
