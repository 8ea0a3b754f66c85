//! Spectral radius of nonnegative square matrices.
//!
//! Perron–Frobenius puts the dominant eigenvalue of a nonnegative matrix on
//! the real axis at ρ(M) ≥ 0, which is all this module computes; the full
//! spectrum of an asymmetric matrix is out of scope. Three paths:
//!
//! * symmetric input: dense symmetric eigendecomposition, ρ = max |λᵢ|;
//! * irreducible asymmetric input: power iteration on the shift M + I from
//!   the all-ones vector. The shift maps eigenvalues λ to λ + 1, so for
//!   every λ ≠ ρ on the spectral circle |λ + 1| < ρ + 1 strictly, and
//!   periodic supports (block-cyclic lifts in particular) stop oscillating;
//! * reducible input: ρ is the maximum over the strongly connected diagonal
//!   blocks, each handled recursively. Detected up front via the class
//!   partition rather than waiting for the iteration to stall.

use crate::classes::partition_support;
use crate::matrix::SquareMatrix;
use nalgebra::DMatrix;
use thiserror::Error;

/// Default convergence tolerance; three orders tighter than the 1e-9 the
/// acceptance checks ask of downstream quantities.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;

/// Iteration cap for the power method before declaring non-convergence.
pub const POWER_ITERATION_CAP: u64 = 1_000_000;

/// Entrywise asymmetry below this routes to the symmetric eigensolver.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(
        "power iteration did not converge within {POWER_ITERATION_CAP} iterations \
         (degenerate dominant eigenstructure)"
    )]
    NonConvergence,
}

/// ρ(M) = max |eigenvalue| within ±tol.
pub fn spectral_radius(m: &SquareMatrix, tol: f64) -> Result<f64, SpectralError> {
    if !(tol > 0.0) {
        return Err(SpectralError::BadTolerance(tol));
    }
    let n = m.n();
    if n == 1 {
        return Ok(m.get(0, 0));
    }
    if m.is_symmetric(SYMMETRY_TOL) {
        return Ok(symmetric_radius(m));
    }

    let parts = partition_support(m);
    if parts.classes.len() == 1 {
        return irreducible_radius(m, tol);
    }

    // ρ of a reducible nonnegative matrix is the max over its strongly
    // connected diagonal blocks.
    let mut rho: f64 = 0.0;
    for class in &parts.classes {
        let block = submatrix(m, class);
        let r = if class.len() == 1 {
            block.get(0, 0)
        } else if block.is_symmetric(SYMMETRY_TOL) {
            symmetric_radius(&block)
        } else {
            irreducible_radius(&block, tol)?
        };
        rho = rho.max(r);
    }
    Ok(rho)
}

fn submatrix(m: &SquareMatrix, states: &[usize]) -> SquareMatrix {
    let rows = states
        .iter()
        .map(|&i| states.iter().map(|&j| m.get(i, j)).collect())
        .collect();
    SquareMatrix::from_rows(rows).expect("submatrix of a valid matrix is valid")
}

fn symmetric_radius(m: &SquareMatrix) -> f64 {
    let n = m.n();
    let d = DMatrix::from_fn(n, n, |i, j| {
        // Symmetrize the sub-tolerance noise so the eigensolver sees an
        // exactly symmetric problem.
        0.5 * (m.get(i, j) + m.get(j, i))
    });
    d.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// Power iteration on M + I from the all-ones vector.
///
/// The Rayleigh-style estimate λ = xᵀ(M+I)x is accepted once the residual
/// ‖(M+I)x − λx‖∞ drops below tol·max(1, λ); on an irreducible nonnegative
/// matrix the all-ones start has positive overlap with the Perron vector, so
/// the iteration converges to it. Non-convergence within the cap falls back
/// to a dense eigendecomposition.
fn irreducible_radius(m: &SquareMatrix, tol: f64) -> Result<f64, SpectralError> {
    let n = m.n();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..POWER_ITERATION_CAP {
        // y = (M + I)x
        let mut y = m.mat_vec(&x);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let lambda: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let residual = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - lambda * xi).abs())
            .fold(0.0f64, f64::max);
        if residual <= tol * lambda.max(1.0) {
            return Ok((lambda - 1.0).max(0.0));
        }
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Unreachable for x > 0 under the +I shift; purely defensive.
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    dense_radius(m).ok_or(SpectralError::NonConvergence)
}

/// Dense general eigendecomposition, max |λ|. Fallback for pathological
/// dominant eigenstructure (e.g. defective ρ).
fn dense_radius(m: &SquareMatrix) -> Option<f64> {
    let n = m.n();
    let d = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    let eig = d.complex_eigenvalues();
    eig.iter()
        .map(|c| c.norm())
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
}
