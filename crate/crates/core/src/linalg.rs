//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Column means of a row-major `n x d` block.
pub fn column_means(rows: &[f64], d: usize) -> Vec<f64> {
    let n = rows.len() / d;
    let mut mean = vec![0.0; d];
    for r in rows.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Unbiased (`n - 1`) sample covariance of a row-major `n x d` block.
/// Returns the zero matrix when fewer than two rows are given.
pub fn sample_covariance(rows: &[f64], d: usize) -> DMatrix<f64> {
    let n = rows.len() / d;
    let mut cov = DMatrix::zeros(d, d);
    if n < 2 {
        return cov;
    }
    let mean = column_means(rows, d);
    for r in rows.chunks_exact(d) {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Cholesky factor of `m + (rel * trace / d) I`. `None` when the jittered
/// matrix is still not positive definite (including the all-zero matrix).
pub fn cholesky_with_trace_jitter(m: &DMatrix<f64>, rel: f64) -> Option<Cholesky<f64, Dyn>> {
    let d = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let jitter = rel * m.trace() / d as f64;
    let mut j = m.clone();
    for i in 0..d {
        j[(i, i)] += jitter;
    }
    let chol = Cholesky::new(j)?;
    // nalgebra accepts tiny positive pivots; treat numerically singular factors as failures
    let l = chol.l_dirty();
    let max_diag = (0..d).map(|i| l[(i, i)]).fold(0.0f64, f64::max);
    if max_diag <= 0.0 || (0..d).any(|i| !(l[(i, i)] > max_diag * 1e-12)) {
        return None;
    }
    Some(chol)
}

/// Log-density of `N(mean, L L^T)` at `x` given the Cholesky factor.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = x.len();
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let l = chol.l_dirty();
    let z = l
        .solve_lower_triangular(&diff)
        .expect("Cholesky factor has a nonzero diagonal");
    let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for a in 0..d {
        let mut row = 0.0;
        for b in 0..d {
            row += m[(a, b)] * v[b];
        }
        acc += v[a] * row;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_unit_square_corners() {
        let rows = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let c = sample_covariance(&rows, 2);
        assert!((c[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(c[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_has_no_factor() {
        assert!(cholesky_with_trace_jitter(&DMatrix::zeros(3, 3), 1e-8).is_none());
    }

    #[test]
    fn univariate_logpdf() {
        let m = DMatrix::from_element(1, 1, 2.0);
        let chol = cholesky_with_trace_jitter(&m, 0.0).unwrap();
        let lp = mvn_logpdf(&[1.0], &[1.0], &chol);
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI * 2.0).ln()).abs() < 1e-14);
    }
}
