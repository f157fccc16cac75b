//! Symmetric positive definite matrices with the affine-invariant metric
//! `d(A, B) = |log(A^{-1/2} B A^{-1/2})|_F`.
//!
//! Tangent vectors at `A` are stored whitened: `S = log(A^{-1/2} B A^{-1/2})`
//! represents `log_A(B) = A^{1/2} S A^{1/2}`, and the Riemannian norm is the
//! Frobenius norm of `S`.

use nalgebra::DMatrix;

use super::linalg::{sym_eigen, sym_sqrt_pair, symmetrize};

/// Entrywise symmetry tolerance for SPD payloads.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

pub fn validate(m: &DMatrix<f64>) -> Result<(), String> {
    if m.nrows() != m.ncols() {
        return Err(format!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err("matrix has non-finite entries".into());
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                return Err(format!(
                    "matrix is not symmetric: entry ({i},{j}) = {} but ({j},{i}) = {}",
                    m[(i, j)],
                    m[(j, i)]
                ));
            }
        }
    }
    let min = sym_eigen(m).min_value();
    if min <= 0.0 {
        return Err(format!("matrix is not positive definite (smallest eigenvalue {min:e})"));
    }
    Ok(())
}

fn congruence(g: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(g * m * g))
}

pub fn distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (_, w) = sym_sqrt_pair(a);
    let e = sym_eigen(&congruence(&w, b));
    e.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt()
}

/// `A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}`.
pub fn geodesic(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if t == 0.0 {
        return a.clone();
    }
    if t == 1.0 {
        return b.clone();
    }
    let (s, w) = sym_sqrt_pair(a);
    let inner = sym_eigen(&congruence(&w, b)).map(|l| l.powf(t));
    congruence(&s, &inner)
}

pub fn log(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (_, w) = sym_sqrt_pair(a);
    sym_eigen(&congruence(&w, b)).map(f64::ln)
}

pub fn exp(a: &DMatrix<f64>, whitened: &DMatrix<f64>) -> DMatrix<f64> {
    let (s, _) = sym_sqrt_pair(a);
    congruence(&s, &sym_eigen(whitened).map(f64::exp))
}

/// Geodesic symmetry about `b` applied to `a`: `B A^{-1} B`.
pub fn reflect(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = sym_eigen(a).map(|l| 1.0 / l);
    symmetrize(&(b * inv * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_multiples_of_identity() {
        let i = DMatrix::<f64>::identity(2, 2);
        let e2 = &i * 1f64.exp().powi(2);
        assert_abs_diff_eq!(distance(&i, &e2), 2.0 * 2f64.sqrt(), epsilon = 1e-13);
        let mid = geodesic(&i, &(&i * 4.0), 0.5);
        assert_abs_diff_eq!((mid - &i * 2.0).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn rejects_nonsymmetric_and_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(validate(&m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(validate(&m).is_err());
    }

    #[test]
    fn reflection_doubles_the_geodesic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 3.0]);
        let r = reflect(&a, &b);
        assert_abs_diff_eq!(distance(&a, &r), 2.0 * distance(&a, &b), epsilon = 1e-12);
        assert_abs_diff_eq!((geodesic(&a, &r, 0.5) - &b).norm(), 0.0, epsilon = 1e-12);
    }
}
