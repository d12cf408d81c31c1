//! Sparse symmetric positive-definite solvers for graph Laplacian systems.
//!
//! Small systems go through dense Cholesky; everything else uses conjugate
//! gradients with Jacobi preconditioning, which is plenty for the
//! well-conditioned Dirichlet-restricted Laplacians that show up here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Switch to iterative solving above this many unknowns.
pub const DENSE_CUTOFF: usize = 500;

/// Symmetric sparse matrix in coordinate-ish form: row-major adjacency of
/// (column, value) pairs, including the diagonal.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub dense: bool,
}

impl SparseSym {
    pub fn new(n: usize) -> Self {
        SparseSym {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    /// Add `v` at (i, j) and, when i != j, at (j, i).
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        push_coeff(&mut self.rows[i], j, v);
        if i != j {
            push_coeff(&mut self.rows[j], i, v);
        }
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        push_coeff(&mut self.rows[i], i, v);
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, v) in row {
                acc += v * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.rows[i]
                    .iter()
                    .filter(|&&(j, _)| j == i)
                    .map(|&(_, v)| v)
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Solve A x = b for SPD A.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveDiagnostics)> {
        if b.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "rhs length {} does not match system size {}",
                b.len(),
                self.n
            )));
        }
        if self.n == 0 {
            return Ok((
                Vec::new(),
                SolveDiagnostics {
                    iterations: 0,
                    residual: 0.0,
                    dense: true,
                },
            ));
        }
        if self.n <= DENSE_CUTOFF {
            self.solve_dense(b)
        } else {
            self.solve_cg(b)
        }
    }

    fn solve_dense(&self, b: &[f64]) -> Result<(Vec<f64>, SolveDiagnostics)> {
        let a = self.to_dense();
        let rhs = DVector::from_column_slice(b);
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
        let x = chol.solve(&rhs);
        let res = (&a * &x - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
        Ok((
            x.as_slice().to_vec(),
            SolveDiagnostics {
                iterations: 0,
                residual: res,
                dense: true,
            },
        ))
    }

    fn solve_cg(&self, b: &[f64]) -> Result<(Vec<f64>, SolveDiagnostics)> {
        const TOL: f64 = 1e-10;
        let n = self.n;
        let max_iter = (20.0 * (n as f64).sqrt()).ceil() as usize + 50;
        let diag = self.diagonal();
        let inv_diag: Vec<f64> = diag
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect();
        let bnorm = b.iter().map(|&v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok((
                vec![0.0; n],
                SolveDiagnostics {
                    iterations: 0,
                    residual: 0.0,
                    dense: false,
                },
            ));
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &d)| ri * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for iter in 0..max_iter {
            self.mul(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::SingularSystem(
                    "conjugate gradients hit a non-positive curvature direction".into(),
                ));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|&v| v * v).sum::<f64>().sqrt();
            if rnorm <= TOL * bnorm {
                return Ok((
                    x,
                    SolveDiagnostics {
                        iterations: iter + 1,
                        residual: rnorm / bnorm,
                        dense: false,
                    },
                ));
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let rnorm = r.iter().map(|&v| v * v).sum::<f64>().sqrt();
        Err(Error::NoConvergence {
            residual: rnorm / bnorm,
            iterations: max_iter,
        })
    }
}

fn push_coeff(row: &mut Vec<(usize, f64)>, j: usize, v: f64) {
    for entry in row.iter_mut() {
        if entry.0 == j {
            entry.1 += v;
            return;
        }
    }
    row.push((j, v));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Path-graph Laplacian plus mass term: tridiagonal SPD system with a
    /// closed-form dense oracle.
    fn path_system(n: usize, shift: f64) -> SparseSym {
        let mut a = SparseSym::new(n);
        for i in 0..n {
            a.add_diag(i, shift);
        }
        for i in 0..n - 1 {
            a.add_sym(i, i, 1.0);
            a.add_sym(i + 1, i + 1, 1.0);
            a.add_sym(i, i + 1, -1.0);
        }
        a
    }

    #[test]
    fn dense_and_cg_agree_with_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[3usize, 40, 120] {
            let a = path_system(n, 0.5);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (x, diag) = a.solve(&b).unwrap();
            assert!(diag.dense);
            let dense = a.to_dense();
            let oracle = dense
                .lu()
                .solve(&DVector::from_column_slice(&b))
                .unwrap();
            for i in 0..n {
                assert_relative_eq!(x[i], oracle[i], max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cg_matches_dense_path_above_cutoff() {
        let n = DENSE_CUTOFF + 137;
        let a = path_system(n, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, diag) = a.solve(&b).unwrap();
        assert!(!diag.dense);
        assert!(diag.residual <= 1e-10);
        // residual check against the matrix itself
        let mut ax = vec![0.0; n];
        a.mul(&x, &mut ax);
        let err: f64 = ax
            .iter()
            .zip(&b)
            .map(|(&p, &q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        let bnorm: f64 = b.iter().map(|&v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * bnorm);
    }

    #[test]
    fn singular_system_is_reported() {
        // pure path Laplacian has the constant kernel vector
        let n = 10;
        let a = path_system(n, 0.0);
        assert!(matches!(
            a.solve(&vec![1.0; n]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn duplicate_coefficients_accumulate() {
        let mut a = SparseSym::new(2);
        a.add_sym(0, 1, -0.5);
        a.add_sym(0, 1, -0.5);
        a.add_diag(0, 2.0);
        a.add_diag(1, 2.0);
        let d = a.to_dense();
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(d[(1, 0)], -1.0);
        assert_eq!(d[(0, 0)], 2.0);
    }
}
