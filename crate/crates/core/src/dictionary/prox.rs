//! Projection onto the (2,0)-ball: matrices with at most `k` nonzero columns.

use crate::error::{Error, Result};
use crate::linalg::{column_norms, Mat};

/// Indices of the `k` columns of largest Euclidean norm, in increasing order.
/// Ties at the boundary keep the lower column index.
pub fn top_columns(y: &Mat, k: usize) -> Result<Vec<usize>> {
    let cols = y.ncols();
    if k == 0 || k > cols {
        return Err(Error::BadBudget { budget: k, max: cols });
    }
    let norms = column_norms(y);
    let mut order: Vec<usize> = (0..cols).collect();
    // Stable sort: equal norms stay in index order.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Copies the listed columns of `y` and zeroes the rest.
pub fn restrict_columns(y: &Mat, keep: &[usize]) -> Mat {
    let mut out = Mat::zeros(y.nrows(), y.ncols());
    for &c in keep {
        out.set_column(c, &y.column(c));
    }
    out
}

/// Exact minimiser of `‖Z − Y‖²_F` over `{Z : ‖Z‖_{2,0} ≤ k}`: keeps the
/// `k` columns of `Y` with largest norm.
pub fn prox_group_20(y: &Mat, k: usize) -> Result<Mat> {
    let keep = top_columns(y, k)?;
    Ok(restrict_columns(y, &keep))
}
