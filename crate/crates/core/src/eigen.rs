//! Largest eigenvalue of a symmetric positive semidefinite operator.
//!
//! [`power_iteration`] works matrix-free from an `apply` closure;
//! [`dense_largest_eigenvalue`] is the dense reference used to cross-check it.

use nalgebra::DMatrix;

/// Stopping rule for [`power_iteration`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    /// Relative change of successive Rayleigh quotients that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration from the normalized all-ones vector.
///
/// `apply(x, y)` must write `A x` into `y` for a symmetric PSD `A` of size
/// `dim`. Convergence is declared when successive Rayleigh quotients agree to
/// `tol` relatively, which tolerates a repeated top eigenvalue.
pub fn power_iteration(
    dim: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    opts: PowerIteration,
) -> PowerResult {
    if dim == 0 {
        return PowerResult {
            value: 0.0,
            vector: Vec::new(),
            iterations: 0,
            converged: true,
        };
    }
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut y = vec![0.0; dim];
    let mut previous = f64::NAN;

    for iteration in 1..=opts.max_iter {
        apply(&x, &mut y);
        let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return PowerResult {
                value: 0.0,
                vector: x,
                iterations: iteration,
                converged: true,
            };
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (rayleigh - previous).abs() <= opts.tol * rayleigh.abs() {
            return PowerResult {
                value: rayleigh,
                vector: x,
                iterations: iteration,
                converged: true,
            };
        }
        previous = rayleigh;
    }
    PowerResult {
        value: previous,
        vector: x,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Largest eigenvalue of a dense symmetric matrix.
pub fn dense_largest_eigenvalue(matrix: DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    matrix
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(m: &DMatrix<f64>) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = (0..x.len()).map(|j| m[(i, j)] * x[j]).sum();
            }
        }
    }

    #[test]
    fn diagonal_matrix() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 5.0, 2.0]));
        let r = power_iteration(3, dense_apply(&m), PowerIteration::default());
        assert!(r.converged);
        assert!((r.value - 5.0).abs() < 1e-10);
        assert!((dense_largest_eigenvalue(m) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_top_eigenvalue() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 3.0, 1.0]));
        let r = power_iteration(3, dense_apply(&m), PowerIteration::default());
        assert!(r.converged);
        assert!((r.value - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_operator_and_empty() {
        let m = DMatrix::<f64>::zeros(2, 2);
        let r = power_iteration(2, dense_apply(&m), PowerIteration::default());
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
        assert_eq!(power_iteration(0, |_, _| {}, PowerIteration::default()).value, 0.0);
        assert_eq!(dense_largest_eigenvalue(DMatrix::zeros(0, 0)), 0.0);
    }

    #[test]
    fn reports_non_convergence() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0 - 1e-3]);
        let r = power_iteration(
            2,
            dense_apply(&m),
            PowerIteration {
                tol: 1e-300,
                max_iter: 3,
            },
        );
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }
}
