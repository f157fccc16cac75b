//! Symmetric eigendecomposition by cyclic Jacobi rotations and the matrix
//! functions built on it (log, exp, powers, square roots).
//!
//! Sized for the small dense matrices of the SPD backend (order <= 16).

use nalgebra::DMatrix;

/// Off-diagonal Frobenius mass, relative to the whole matrix, at which the
/// sweep loop stops.
pub const JACOBI_THRESHOLD: f64 = 1e-13;
const MAX_SWEEPS: usize = 64;

#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            s += 2.0 * a[(p, q)] * a[(p, q)];
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    if scale == 0.0 || n == 1 {
        return SymEigen {
            values: (0..n).map(|i| a[(i, i)]).collect(),
            vectors: v,
        };
    }

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_THRESHOLD * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    SymEigen {
        values: (0..n).map(|i| a[(i, i)]).collect(),
        vectors: v,
    }
}

impl SymEigen {
    /// `V diag(f(values)) V^T`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn sym_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_eigen(m).map(f64::ln)
}

pub fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_eigen(m).map(f64::exp)
}

pub fn sym_pow(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    sym_eigen(m).map(|x| x.powf(t))
}

/// `(m^{1/2}, m^{-1/2})` from one decomposition.
pub fn sym_sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = sym_eigen(m);
    (e.map(f64::sqrt), e.map(|x| 1.0 / x.sqrt()))
}
