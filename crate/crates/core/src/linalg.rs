//! Small dense linear-algebra kernels shared by the analytic modules.
//!
//! Everything here works on `nalgebra` dense matrices. Systems are tiny
//! (a handful to a few hundred states), so exactness beats scalability:
//! LU with partial pivoting plus one round of iterative refinement, and
//! plain power iteration for Perron data.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting followed by one step of
/// iterative refinement.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    assert_eq!(a.nrows(), b.len());
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(Error::Singular("LU factorization"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite LU solution"));
    }
    let residual = b - a * &x;
    if let Some(dx) = lu.solve(&residual) {
        if dx.iter().all(|v| v.is_finite()) {
            x += dx;
        }
    }
    Ok(x)
}

/// Result of a power iteration.
#[derive(Debug, Clone)]
pub struct Dominant {
    pub value: f64,
    /// Eigenvector normalized to unit max-norm.
    pub vector: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration for the dominant eigenpair of a nonnegative matrix,
/// iterating on `a + shift I` from the all-ones vector.
///
/// Stops when `‖(a + shift I) x − λ x‖∞ ≤ tol · λ` with `‖x‖∞ = 1`. A
/// positive shift makes the dominant eigenvalue strictly dominant in modulus
/// for irreducible periodic matrices, at the cost of a slower contraction.
pub fn power_iteration(
    a: &DMatrix<f64>,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Dominant> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut x = DVector::from_element(n, 1.0);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut y = a * &x;
        y.axpy(shift, &x, 1.0);
        let lambda = y.amax();
        if lambda == 0.0 {
            return Ok(Dominant {
                value: 0.0,
                vector: x,
                iterations: it,
                residual: 0.0,
            });
        }
        y /= lambda;
        let mut z = a * &y;
        z.axpy(shift, &y, 1.0);
        let lambda_next = z.amax();
        residual = (&z - &y * lambda_next).amax();
        x = y;
        if residual <= tol * lambda_next {
            return Ok(Dominant {
                value: lambda_next - shift,
                vector: x,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        residual,
    })
}

/// Spectral radius of a nonnegative (possibly reducible or periodic)
/// matrix.
///
/// Runs shifted power iteration and accepts the eigenvalue estimate once it
/// has stopped moving at relative tolerance `tol`; reducible matrices with
/// Jordan structure may never meet a residual test, so the residual is not
/// required. Returns the best estimate available after `max_iter` steps.
pub fn spectral_radius(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let shift = 1.0;
    let mut x = DVector::from_element(n, 1.0);
    let mut prev = f64::NAN;
    let mut stable = 0;
    // Collatz–Wielandt upper bound max_i ((a x)_i / x_i) holds for any x > 0.
    let mut upper = f64::INFINITY;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let ax = a * &x;
        let cw = ax
            .iter()
            .zip(x.iter())
            .map(|(num, den)| num / den)
            .fold(0.0_f64, f64::max);
        upper = upper.min(cw);
        let mut y = ax;
        y.axpy(shift, &x, 1.0);
        let norm = y.amax();
        estimate = (norm - shift).max(0.0).min(upper);
        y /= norm;
        x = y;
        if (estimate - prev).abs() <= tol * estimate.max(1e-300) {
            stable += 1;
            if stable >= 8 {
                break;
            }
        } else {
            stable = 0;
        }
        prev = estimate;
    }
    estimate
}

/// Boolean reachability closure: `reach[i][j]` is true when a path of length
/// at least one leads from `i` to `j` through positive entries.
pub fn reachability(a: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = a.nrows();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] > 0.0).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// True when some power `a^k` with `k ≤ (n−1)²+1` (the Wielandt bound) is
/// entrywise positive.
pub fn is_primitive(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return false;
    }
    let pattern: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] > 0.0).collect())
        .collect();
    let bound = (n - 1) * (n - 1) + 1;
    let mut power = pattern.clone();
    for _ in 1..=bound {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        if pattern[k][j] {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        power = next;
    }
    power.iter().all(|row| row.iter().all(|&b| b))
}

/// Principal submatrix on the given index set, in the given order.
pub fn submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}
