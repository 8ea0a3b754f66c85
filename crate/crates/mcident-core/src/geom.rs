//! Entrywise geometric mean √(P∘Q) of two transition matrices.
//!
//! This matrix drives everything: its spectral radius defines the chain
//! distance, and its powers propagate the Bhattacharyya coefficient of the
//! word distributions. Each entry is √(P_ij·Q_ij), so rows sum to at most 1
//! (Cauchy–Schwarz) with equality exactly when the two rows are identical.

use crate::matrix::{check_same_n, MatrixError, SquareMatrix, StochasticMatrix};

/// The matrix [√(P_ij·Q_ij)] for a fixed source pair (P, Q).
///
/// Only [`geometric_mean`] constructs this type, so a value always is the
/// geometric mean of some pair; it is symmetric whenever both sources are,
/// and entrywise dominated by (P+Q)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomMeanMatrix {
    m: SquareMatrix,
}

impl GeomMeanMatrix {
    pub fn n(&self) -> usize {
        self.m.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }

    pub fn as_square(&self) -> &SquareMatrix {
        &self.m
    }
}

/// Entrywise √(P_ij·Q_ij).
///
/// The product form `(p*q).sqrt()` is symmetric in its arguments down to the
/// last bit, which the argument-order invariant relies on.
pub fn geometric_mean(
    p: &StochasticMatrix,
    q: &StochasticMatrix,
) -> Result<GeomMeanMatrix, MatrixError> {
    check_same_n(p.n(), q.n())?;
    let n = p.n();
    let mut m = SquareMatrix::zeros(n)?;
    for i in 0..n {
        for j in 0..n {
            let x = p.get(i, j) * q.get(i, j);
            if x > 0.0 {
                m.set(i, j, x.sqrt());
            }
        }
    }
    Ok(GeomMeanMatrix { m })
}
