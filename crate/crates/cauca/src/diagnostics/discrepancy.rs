//! Numeric checkers for the assumptions behind latent recovery.
//!
//! Three conditions, each verified on a grid rather than proven:
//!
//! - interventional discrepancy: an intervened conditional must differ from
//!   the observational one in score (derivative of the log density with
//!   respect to the node's value) almost everywhere, not just on a small set;
//! - block discrepancy: for a regime set targeting a block of coordinates,
//!   the matrix of score differences along the block must be nonsingular, so
//!   the regimes are jointly informative about every direction in the block;
//! - variability: per node, the intervened marginals must vary enough that
//!   the pairs (score difference, score-derivative difference), viewed as
//!   functions on a grid, are linearly independent across regimes. A pair of
//!   mean shifts in opposite directions has proportional score differences
//!   and fails, which is exactly the classical counterexample.
//!
//! Grid points where a density is not differentiable (piecewise families
//! have breakpoints) are skipped and counted, never silently treated as
//! satisfied or violated.

use crate::cbn::LatentCbn;
use crate::error::{Error, Result};
use crate::linalg::{det, min_singular_value};
use ndarray::Array2;

/// Evaluation grid, shared across checkers. The per-axis resolution shrinks
/// automatically in higher dimensions to keep the total point count near
/// `budget`, so multi-parent conditionals stay affordable.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_axis: usize,
    pub budget: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -4.0, hi: 4.0, points_per_axis: 201, budget: 200_000 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParam {
                name: "grid bounds".into(),
                reason: format!("need finite lo < hi, got [{}, {}]", self.lo, self.hi),
            });
        }
        if self.points_per_axis < 2 {
            return Err(Error::InvalidParam {
                name: "points_per_axis".into(),
                reason: "need at least 2".into(),
            });
        }
        Ok(())
    }

    /// Per-axis resolution for a grid over `dims` dimensions.
    pub fn effective_per_axis(&self, dims: usize) -> usize {
        let dims = dims.max(1);
        let cap = (self.budget.max(32) as f64).powf(1.0 / dims as f64).floor() as usize;
        self.points_per_axis.min(cap).max(2)
    }

    /// Evenly spaced axis values, endpoints included.
    pub fn axis(&self, dims: usize) -> Vec<f64> {
        let n = self.effective_per_axis(dims);
        let h = (self.hi - self.lo) / (n - 1) as f64;
        (0..n).map(|i| self.lo + h * i as f64).collect()
    }
}

/// Odometer over the Cartesian product `axis^dims`; calls `f` with each point.
fn for_each_grid_point(
    axis: &[f64],
    dims: usize,
    mut f: impl FnMut(&[f64]) -> Result<()>,
) -> Result<()> {
    let mut idx = vec![0usize; dims];
    let mut point = vec![axis[0]; dims];
    loop {
        f(&point)?;
        let mut c = 0;
        loop {
            idx[c] += 1;
            if idx[c] < axis.len() {
                point[c] = axis[idx[c]];
                break;
            }
            idx[c] = 0;
            point[c] = axis[0];
            c += 1;
            if c == dims {
                return Ok(());
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DiscrepancyReport {
    /// True when the score gap clears `tol` on at least 99.9% of the
    /// evaluated grid.
    pub satisfied: bool,
    pub fraction_discrepant: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Points where both scores were defined.
    pub n_evaluated: usize,
    /// Breakpoints of piecewise densities, skipped.
    pub n_skipped: usize,
    /// Range of the node's own coordinate over the non-discrepant points;
    /// absent when every point is discrepant.
    pub agreeing_range: Option<[f64; 2]>,
}

/// Fraction of the grid on which a point must be discrepant (or a Jacobian
/// support must fit a pattern) for the property to count as holding; leaves
/// room for isolated crossings and breakpoints.
pub const ALMOST_EVERYWHERE_FRACTION: f64 = 0.999;

/// Check that regime `k` changes the score of `node`'s conditional almost
/// everywhere on a grid over the node's value and its parents' values.
pub fn check_interventional_discrepancy(
    cbn: &LatentCbn,
    k: usize,
    node: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<DiscrepancyReport> {
    grid.validate()?;
    if node >= cbn.d() {
        return Err(Error::NodeOutOfRange { node, d: cbn.d() });
    }
    let obs = cbn.observational_mechanism(node);
    let int = cbn.mechanism(k, node)?;
    // grid over (z_node, union of both mechanisms' parents)
    let mut union: Vec<usize> = obs.parents.iter().chain(int.parents.iter()).copied().collect();
    union.sort_unstable();
    union.dedup();
    let dims = 1 + union.len();
    let axis = grid.axis(dims);
    let pick = |point: &[f64], parents: &[usize]| -> Vec<f64> {
        parents
            .iter()
            .map(|p| {
                let pos = union.binary_search(p).expect("parent is in the union");
                point[1 + pos]
            })
            .collect()
    };
    let mut n_eval = 0usize;
    let mut n_skip = 0usize;
    let mut n_disc = 0usize;
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    let mut agreeing: Option<[f64; 2]> = None;
    for_each_grid_point(&axis, dims, |point| {
        let z = point[0];
        let s_obs = obs.score(z, &pick(point, &obs.parents));
        let s_int = int.score(z, &pick(point, &int.parents));
        match (s_obs, s_int) {
            (Ok(a), Ok(b)) => {
                let gap = (b - a).abs();
                n_eval += 1;
                min_gap = min_gap.min(gap);
                max_gap = max_gap.max(gap);
                if gap > tol {
                    n_disc += 1;
                } else {
                    let r = agreeing.get_or_insert([z, z]);
                    r[0] = r[0].min(z);
                    r[1] = r[1].max(z);
                }
                Ok(())
            }
            (Err(Error::NonDifferentiablePoint(_)), _)
            | (_, Err(Error::NonDifferentiablePoint(_))) => {
                n_skip += 1;
                Ok(())
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    })?;
    if n_eval == 0 {
        return Err(Error::Numeric("every grid point hit a breakpoint".into()));
    }
    let fraction = n_disc as f64 / n_eval as f64;
    Ok(DiscrepancyReport {
        satisfied: fraction >= ALMOST_EVERYWHERE_FRACTION,
        fraction_discrepant: fraction,
        min_gap,
        max_gap,
        n_evaluated: n_eval,
        n_skipped: n_skip,
        agreeing_range: agreeing,
    })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BlockDiscrepancyReport {
    pub satisfied: bool,
    /// Smallest |det| (square case) or smallest minimum singular value
    /// (rectangular case) over the evaluated points.
    pub min_value: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

fn min_singular_compact(m: &Array2<f64>) -> f64 {
    // gram over the shorter side so rank deficiency of the matrix itself,
    // not of the padding, is what gets measured
    if m.nrows() < m.ncols() {
        min_singular_value(m.t())
    } else {
        min_singular_value(m.view())
    }
}

/// Check that the regimes in `regimes` are jointly discrepant along the
/// coordinate block `block`: at each point the matrix with rows indexed by
/// regime and columns by block coordinate, holding the gradient of
/// (log density of the regime minus log density of regime 0), must be far
/// from singular.
pub fn check_block_discrepancy(
    cbn: &LatentCbn,
    regimes: &[usize],
    block: &[usize],
    points: &Array2<f64>,
    tol: f64,
) -> Result<BlockDiscrepancyReport> {
    if regimes.is_empty() || block.is_empty() {
        return Err(Error::Config("need at least one regime and one block coordinate".into()));
    }
    for &j in block {
        if j >= cbn.d() {
            return Err(Error::NodeOutOfRange { node: j, d: cbn.d() });
        }
    }
    if points.ncols() != cbn.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("points with {} columns", cbn.d()),
            got: format!("{}", points.ncols()),
        });
    }
    if points.nrows() == 0 {
        return Err(Error::Config("need at least one evaluation point".into()));
    }
    let square = regimes.len() == block.len();
    let mut n_eval = 0usize;
    let mut n_skip = 0usize;
    let mut min_value = f64::INFINITY;
    let mut m = Array2::<f64>::zeros((regimes.len(), block.len()));
    'points: for z in points.rows() {
        let base = match cbn.score(0, z) {
            Ok(s) => s,
            Err(Error::NonDifferentiablePoint(_)) => {
                n_skip += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for (r, &k) in regimes.iter().enumerate() {
            let sk = match cbn.score(k, z) {
                Ok(s) => s,
                Err(Error::NonDifferentiablePoint(_)) => {
                    n_skip += 1;
                    continue 'points;
                }
                Err(e) => return Err(e),
            };
            for (c, &j) in block.iter().enumerate() {
                m[[r, c]] = sk[j] - base[j];
            }
        }
        let value = if square {
            det(m.view()).map(f64::abs).unwrap_or(0.0)
        } else {
            min_singular_compact(&m)
        };
        n_eval += 1;
        min_value = min_value.min(value);
    }
    if n_eval == 0 {
        return Err(Error::Numeric("every evaluation point hit a breakpoint".into()));
    }
    Ok(BlockDiscrepancyReport {
        satisfied: min_value > tol,
        min_value,
        n_evaluated: n_eval,
        n_skipped: n_skip,
    })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VariabilityReport {
    pub satisfied: bool,
    /// Minimum singular value of the row-normalized function matrix.
    pub min_singular: f64,
    /// Regimes that intervene on the node.
    pub regimes_used: Vec<usize>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

/// Check that the interventions on `node` vary enough for recovery without
/// graph structure: each regime targeting the node contributes the function
/// pair (score difference, score-derivative difference) sampled on a grid,
/// and the stacked rows must be linearly independent. Requires parentless
/// mechanisms, since the condition concerns marginal densities.
pub fn check_variability(
    cbn: &LatentCbn,
    node: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<VariabilityReport> {
    grid.validate()?;
    if node >= cbn.d() {
        return Err(Error::NodeOutOfRange { node, d: cbn.d() });
    }
    let obs = cbn.observational_mechanism(node);
    if obs.arity() != 0 {
        return Err(Error::UnsupportedFamily {
            op: "variability check".into(),
            family: format!("conditional with parents ({})", obs.family_name()),
        });
    }
    let mut regimes_used = Vec::new();
    for k in 1..cbn.n_regimes() {
        if cbn.targets(k)?.contains(&node) {
            let mech = cbn.mechanism(k, node)?;
            if mech.arity() != 0 {
                return Err(Error::UnsupportedFamily {
                    op: "variability check".into(),
                    family: format!("conditional with parents ({})", mech.family_name()),
                });
            }
            regimes_used.push(k);
        }
    }
    if regimes_used.len() < 2 {
        // a single intervention can never span the two-dimensional pair
        return Ok(VariabilityReport {
            satisfied: false,
            min_singular: 0.0,
            regimes_used,
            n_evaluated: 0,
            n_skipped: 0,
        });
    }
    let axis = grid.axis(1);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut n_skip = 0usize;
    'points: for &z in &axis {
        let (s0, d0) = match (obs.score(z, &[]), obs.score_derivative(z, &[])) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::NonDifferentiablePoint(_)), _)
            | (_, Err(Error::NonDifferentiablePoint(_))) => {
                n_skip += 1;
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let mut col = Vec::with_capacity(2 * regimes_used.len());
        for &k in &regimes_used {
            let mech = cbn.mechanism(k, node)?;
            match (mech.score(z, &[]), mech.score_derivative(z, &[])) {
                (Ok(s), Ok(d)) => {
                    col.push(s - s0);
                    col.push(d - d0);
                }
                (Err(Error::NonDifferentiablePoint(_)), _)
                | (_, Err(Error::NonDifferentiablePoint(_))) => {
                    n_skip += 1;
                    continue 'points;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        cols.push(col);
    }
    let n_eval = cols.len();
    if n_eval < 2 * regimes_used.len() {
        return Err(Error::Numeric(format!(
            "only {n_eval} usable grid points for {} regimes",
            regimes_used.len()
        )));
    }
    // rows: per regime, the pair of functions sampled on the grid
    let r = regimes_used.len();
    let mut mat = Array2::<f64>::zeros((r, 2 * n_eval));
    for (p, col) in cols.iter().enumerate() {
        for row in 0..r {
            mat[[row, 2 * p]] = col[2 * row];
            mat[[row, 2 * p + 1]] = col[2 * row + 1];
        }
    }
    // unit-normalize rows so the threshold is scale free
    for mut row in mat.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    let min_singular = min_singular_compact(&mat);
    Ok(VariabilityReport {
        satisfied: min_singular > tol,
        min_singular,
        regimes_used,
        n_evaluated: n_eval,
        n_skipped: n_skip,
    })
}
