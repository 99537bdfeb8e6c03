//! Row-independence certification of covariance factors.
//!
//! A `(Q+1)×Q` block has the property when every `Q` of its rows are
//! linearly independent, i.e. when its row-spark is `Q+1`. Everything is
//! decided by exhaustive subset enumeration against the numerical-rank
//! tolerance, which the reports carry along.

use std::fmt;

use itertools::Itertools;

use crate::channel::CovarianceFactor;
use crate::error::{Error, Result};
use crate::matrix::{numerical_rank, ComplexMatrix, IndexSet};
use crate::scalar::Real;

/// Largest row count [`row_spark`] will enumerate.
pub const SPARK_ROW_CAP: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyAReport<T> {
    pub satisfied: bool,
    /// Lexicographically first `Q`-row subset with rank below `Q`.
    pub failing_row_subset: Option<IndexSet>,
    pub tolerance: T,
}

/// Checks all `Q+1` of the `Q`-row submatrices of a `(Q+1)×Q` block.
pub fn satisfies_property_a<T: Real>(a_sub: &ComplexMatrix<T>, tol: T) -> PropertyAReport<T> {
    let (rows, q) = a_sub.shape();
    assert!(q >= 1 && rows == q + 1, "expected a (Q+1)×Q matrix, got {rows}×{q}");
    let failing = (0..rows)
        .combinations(q)
        .find(|subset| numerical_rank(&a_sub.select_rows(subset), tol) < q)
        .map(|subset| IndexSet::new(subset.iter().map(|i| i + 1).collect(), rows).expect("valid subset"));
    PropertyAReport { satisfied: failing.is_none(), failing_row_subset: failing, tolerance: tol }
}

/// Lexicographically smallest `(Q+1)`-row subset of `A` whose rows have the
/// property. `{1, ..., Q+1}` comes first in that order, so it is returned
/// whenever it qualifies.
pub fn find_admissible_subset<T: Real>(a: &CovarianceFactor<T>, tol: T) -> Option<IndexSet> {
    let (t, q) = a.matrix().shape();
    (0..t)
        .combinations(q + 1)
        .find(|rows| satisfies_property_a(&a.matrix().select_rows(rows), tol).satisfied)
        .map(|rows| IndexSet::new(rows.iter().map(|i| i + 1).collect(), t).expect("valid subset"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSpark {
    /// Size of the smallest linearly dependent row subset.
    Dependent(usize),
    /// Every subset of rows is independent.
    NoDependentSet,
}

impl fmt::Display for RowSpark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowSpark::Dependent(k) => write!(f, "{k}"),
            RowSpark::NoDependentSet => f.write_str("none (no dependent set)"),
        }
    }
}

/// Smallest number of linearly dependent rows, by enumeration in increasing
/// subset size. Any `cols+1` rows are dependent, so the search stops there.
pub fn row_spark<T: Real>(a: &ComplexMatrix<T>, tol: T) -> Result<RowSpark> {
    let (rows, cols) = a.shape();
    assert!(rows >= 1, "row spark needs at least one row");
    if rows > SPARK_ROW_CAP {
        return Err(Error::TooManyRows { rows, cap: SPARK_ROW_CAP });
    }
    for k in 1..=rows.min(cols + 1) {
        let dependent = (0..rows)
            .combinations(k)
            .any(|subset| numerical_rank(&a.select_rows(&subset), tol) < k);
        if dependent {
            return Ok(RowSpark::Dependent(k));
        }
    }
    Ok(RowSpark::NoDependentSet)
}
