//! Thomas algorithm for tridiagonal systems.

/// Solves `A x = rhs` for a tridiagonal `A` given by its three bands.
/// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused),
/// `upper[i]` multiplies `x[i+1]` (`upper[n-1]` unused). Overwrites and
/// returns `rhs`. `scratch` must have length `n`.
pub fn solve_in_place(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n && scratch.len() == n);
    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}
