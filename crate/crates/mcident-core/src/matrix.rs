//! Row-stochastic matrices, distributions over states, and the raw
//! nonnegative square matrices the spectral routines operate on.
//!
//! Construction is where every invariant is enforced. A failed row sum is a
//! loud error, never a silent renormalization: the generators that feed these
//! types are themselves under test, and papering over their bugs here would
//! hide exactly the defects the test suite exists to catch.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Absolute tolerance for row sums of stochastic matrices and for the total
/// mass of state distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix must have at least one state")]
    Empty,
    #[error("entry ({i},{j}) = {value} is not a finite nonnegative real")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error("row {row} sums to {sum}, outside 1 ± {ROW_SUM_TOL}")]
    RowSum { row: usize, sum: f64 },
    #[error("distribution entry {i} = {value} is not a finite nonnegative real")]
    BadMass { i: usize, value: f64 },
    #[error("distribution mass sums to {sum}, outside 1 ± {ROW_SUM_TOL}")]
    MassSum { sum: f64 },
    #[error("dimension mismatch: {left} vs {right} states")]
    DimensionMismatch { left: usize, right: usize },
    #[error("state index {state} out of range for {n} states")]
    StateOutOfRange { state: usize, n: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Dense square matrix with finite nonnegative entries, row-major.
///
/// This is the carrier for everything the spectral code touches: transition
/// matrices, entrywise geometric means, and block-cyclic lifts. It promises
/// nonnegativity and squareness, nothing about row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let n = rows.len();
        if n == 0 {
            return Err(MatrixError::Empty);
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MatrixError::NotSquare {
                    row: i,
                    len: row.len(),
                    n,
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(MatrixError::BadEntry { i, j, value: x });
                }
                data.push(x);
            }
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::Empty);
        }
        Ok(Self {
            n,
            data: vec![0.0; n * n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets an entry. Callers are responsible for keeping the value finite
    /// and nonnegative; debug builds assert it.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(value.is_finite() && value >= 0.0);
        self.data[i * self.n + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// v ↦ vᵀM, the row-vector product used by the word-distribution
    /// recursions.
    pub fn vec_mat(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, &m) in out.iter_mut().zip(row) {
                *o += vi * m;
            }
        }
        out
    }

    /// v ↦ Mv.
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let mut acc = 0.0;
            for (&m, &vj) in row.iter().zip(v) {
                acc += m * vj;
            }
            out[i] = acc;
        }
        out
    }

    /// Support edges (i, j) with strictly positive entries.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0.0)
                .map(move |(j, _)| (i, j))
        })
    }
}

/// Serialized form: `{"n": 3, "rows": [[...], [...], [...]]}`.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    rows: Vec<Vec<f64>>,
}

/// Row-stochastic transition kernel of a finite Markov chain.
///
/// Every row sums to 1 within [`ROW_SUM_TOL`]. Construction never
/// renormalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    m: SquareMatrix,
}

impl StochasticMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let m = SquareMatrix::from_rows(rows)?;
        for i in 0..m.n() {
            let sum: f64 = m.row(i).iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MatrixError::RowSum { row: i, sum });
            }
        }
        Ok(Self { m })
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }

    pub fn as_square(&self) -> &SquareMatrix {
        &self.m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.m.is_symmetric(tol)
    }

    /// Uniform random walk on the complete graph K_n without self-loops.
    pub fn complete_walk(n: usize) -> Result<Self, MatrixError> {
        if n < 2 {
            return Err(MatrixError::Empty);
        }
        let w = 1.0 / (n - 1) as f64;
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { w }).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn to_json(&self) -> String {
        let rows = (0..self.n()).map(|i| self.row(i).to_vec()).collect();
        serde_json::to_string_pretty(&MatrixJson { n: self.n(), rows })
            .expect("matrix serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let parsed: MatrixJson = serde_json::from_str(text)?;
        if parsed.rows.len() != parsed.n {
            return Err(serde::de::Error::custom(format!(
                "declared n = {} but found {} rows",
                parsed.n,
                parsed.rows.len()
            )));
        }
        Self::from_rows(parsed.rows).map_err(serde::de::Error::custom)
    }

    pub fn from_path(path: &Path) -> Result<Self, MatrixError> {
        let text = std::fs::read_to_string(path).map_err(|source| MatrixError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| MatrixError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Probability distribution over the n states of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateDistribution {
    mass: Vec<f64>,
}

impl StateDistribution {
    pub fn from_mass(mass: Vec<f64>) -> Result<Self, MatrixError> {
        if mass.is_empty() {
            return Err(MatrixError::Empty);
        }
        for (i, &x) in mass.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(MatrixError::BadMass { i, value: x });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(MatrixError::MassSum { sum });
        }
        Ok(Self { mass })
    }

    pub fn uniform(n: usize) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::Empty);
        }
        Ok(Self {
            mass: vec![1.0 / n as f64; n],
        })
    }

    pub fn point(n: usize, state: usize) -> Result<Self, MatrixError> {
        if state >= n {
            return Err(MatrixError::StateOutOfRange { state, n });
        }
        let mut mass = vec![0.0; n];
        mass[state] = 1.0;
        Ok(Self { mass })
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.mass[i]
    }
}

impl TryFrom<Vec<f64>> for StateDistribution {
    type Error = MatrixError;
    fn try_from(mass: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_mass(mass)
    }
}

impl From<StateDistribution> for Vec<f64> {
    fn from(d: StateDistribution) -> Self {
        d.mass
    }
}

pub(crate) fn check_same_n(left: usize, right: usize) -> Result<(), MatrixError> {
    if left != right {
        return Err(MatrixError::DimensionMismatch { left, right });
    }
    Ok(())
}
