//! Classify the residual indeterminacy of a latent-to-latent map.
//!
//! The composite of the true mixing with an estimated unmixing is a map from
//! latents to recovered latents. Its finite-difference Jacobian, thresholded
//! into a support pattern at many points, reveals which indeterminacy class
//! the estimate landed in:
//!
//! - coordinate-wise: diagonal support, each latent recovered up to an
//!   invertible scalar reparametrization;
//! - block-wise: support contained in the blocks of a coordinate partition,
//!   latents mixed only within their block;
//! - ancestral: entry (i, j) allowed only when j is i or one of i's
//!   ancestors, the class a known graph leaves unresolved;
//! - unrestricted: anything else, in particular genuinely entangled maps.
//!
//! Classes are tried tightest first; a class fits when the support pattern
//! holds at almost every sampled point (the same 99.9% rule the grid
//! checkers use), leaving room for points where an entry dips through the
//! relative threshold by accident.

use crate::diagnostics::discrepancy::ALMOST_EVERYWHERE_FRACTION;
use crate::error::{Error, Result};
use crate::graph::Dag;
use ndarray::{Array1, Array2, ArrayView1};

/// A differentiable map between latent spaces of equal dimension.
pub trait PointMap {
    fn dim(&self) -> usize;
    fn apply(&self, z: ArrayView1<f64>) -> Result<Array1<f64>>;
}

/// Wrap a closure as a [`PointMap`].
pub struct FnMap<F: Fn(ArrayView1<f64>) -> Result<Array1<f64>>> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(ArrayView1<f64>) -> Result<Array1<f64>>> PointMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        (self.f)(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityClass {
    CoordinateWise,
    BlockWise,
    Ancestral,
    Unrestricted,
}

impl std::fmt::Display for AmbiguityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AmbiguityClass::CoordinateWise => "coordinate-wise",
            AmbiguityClass::BlockWise => "block-wise",
            AmbiguityClass::Ancestral => "ancestral",
            AmbiguityClass::Unrestricted => "unrestricted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AmbiguityReport {
    pub class: AmbiguityClass,
    /// Fraction of points fitting each candidate pattern, tightest first:
    /// coordinate-wise, block-wise, ancestral.
    pub fit_fractions: [f64; 3],
    /// Largest off-diagonal entry of any row-normalized Jacobian seen.
    pub max_offdiagonal: f64,
    pub n_points: usize,
}

/// Central finite-difference Jacobian of `map` at `z`.
pub fn fd_jacobian(map: &dyn PointMap, z: ArrayView1<f64>, step: f64) -> Result<Array2<f64>> {
    let d = map.dim();
    if z.len() != d {
        return Err(Error::ShapeMismatch {
            expected: format!("point of dimension {d}"),
            got: format!("{}", z.len()),
        });
    }
    let mut jac = Array2::zeros((d, d));
    let mut zp = z.to_owned();
    for j in 0..d {
        zp[j] = z[j] + step;
        let hi = map.apply(zp.view())?;
        zp[j] = z[j] - step;
        let lo = map.apply(zp.view())?;
        zp[j] = z[j];
        for i in 0..d {
            jac[[i, j]] = (hi[i] - lo[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

fn pattern_allows(class: AmbiguityClass, i: usize, j: usize, graph: &Dag, block_of: &[usize]) -> bool {
    match class {
        AmbiguityClass::CoordinateWise => i == j,
        AmbiguityClass::BlockWise => block_of[i] == block_of[j],
        AmbiguityClass::Ancestral => i == j || graph.ancestors(i).contains(&j),
        AmbiguityClass::Unrestricted => true,
    }
}

/// Classify the support pattern of a map's Jacobian over sample points.
///
/// `blocks` partitions the coordinates for the block-wise class (typically
/// the intervention-target blocks). An entry counts as active when it
/// exceeds `rel_tol` times the largest entry of its row.
pub fn classify_ambiguity(
    map: &dyn PointMap,
    points: &Array2<f64>,
    graph: &Dag,
    blocks: &[Vec<usize>],
    step: f64,
    rel_tol: f64,
) -> Result<AmbiguityReport> {
    let d = map.dim();
    if graph.d() != d {
        return Err(Error::ShapeMismatch {
            expected: format!("graph on {d} nodes"),
            got: format!("{}", graph.d()),
        });
    }
    if points.ncols() != d || points.nrows() == 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("nonempty points with {d} columns"),
            got: format!("{}x{}", points.nrows(), points.ncols()),
        });
    }
    let mut block_of = vec![usize::MAX; d];
    for (b, members) in blocks.iter().enumerate() {
        for &i in members {
            if i >= d {
                return Err(Error::NodeOutOfRange { node: i, d });
            }
            if block_of[i] != usize::MAX {
                return Err(Error::Config(format!("coordinate {i} appears in two blocks")));
            }
            block_of[i] = b;
        }
    }
    if block_of.iter().any(|&b| b == usize::MAX) {
        return Err(Error::Config("blocks must partition all coordinates".into()));
    }

    let candidates =
        [AmbiguityClass::CoordinateWise, AmbiguityClass::BlockWise, AmbiguityClass::Ancestral];
    let mut fits = [0usize; 3];
    let mut max_offdiag = 0.0f64;
    for z in points.rows() {
        let jac = fd_jacobian(map, z, step)?;
        // relative support: compare each entry against its row's largest
        let mut support = Array2::from_elem((d, d), false);
        for i in 0..d {
            let row_max = (0..d).fold(0.0f64, |m, j| m.max(jac[[i, j]].abs()));
            if row_max == 0.0 {
                return Err(Error::Numeric(format!("Jacobian row {i} vanished; map is singular")));
            }
            for j in 0..d {
                let rel = jac[[i, j]].abs() / row_max;
                support[[i, j]] = rel > rel_tol;
                if i != j {
                    max_offdiag = max_offdiag.max(rel);
                }
            }
        }
        for (c, &class) in candidates.iter().enumerate() {
            let ok = (0..d).all(|i| {
                (0..d).all(|j| !support[[i, j]] || pattern_allows(class, i, j, graph, &block_of))
            });
            if ok {
                fits[c] += 1;
            }
        }
    }
    let n = points.nrows();
    let fractions = [
        fits[0] as f64 / n as f64,
        fits[1] as f64 / n as f64,
        fits[2] as f64 / n as f64,
    ];
    let class = if fractions[0] >= ALMOST_EVERYWHERE_FRACTION {
        AmbiguityClass::CoordinateWise
    } else if fractions[1] >= ALMOST_EVERYWHERE_FRACTION {
        AmbiguityClass::BlockWise
    } else if fractions[2] >= ALMOST_EVERYWHERE_FRACTION {
        AmbiguityClass::Ancestral
    } else {
        AmbiguityClass::Unrestricted
    };
    Ok(AmbiguityReport {
        class,
        fit_fractions: fractions,
        max_offdiagonal: max_offdiag,
        n_points: n,
    })
}
