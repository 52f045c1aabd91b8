//! Lanczos approximation of `exp(t A) v` for symmetric operators.
//!
//! Each Krylov basis is built once and the step length inside it is chosen by
//! the a-posteriori estimate `beta * h_{m+1,m} * |e_m^T exp(tau T) e_1|`.
//! The tridiagonal `T` is exponentiated through its eigendecomposition, so
//! shrinking `tau` after a rejected step costs no extra operator products.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric linear operator acting on dense vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub dim: usize,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { dim: 30, tol: 1e-10, max_steps: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub steps: usize,
    pub matvecs: usize,
    pub err_estimate: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `w = exp(t A) v`.
pub fn expv<A: LinearOperator + ?Sized>(
    op: &A,
    t: f64,
    v: &[f64],
    opts: KrylovOptions,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = op.dim();
    assert_eq!(v.len(), n);
    let mut stats = KrylovStats::default();
    let mut w = v.to_vec();
    if t == 0.0 || n == 0 {
        return Ok((w, stats));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!("evolution time must be finite and >= 0, got {t}")));
    }
    let m_max = opts.dim.max(1).min(n);
    let mut t_now = 0.0;
    let mut tau_hint = t;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    let mut scratch = vec![0.0; n];

    while t_now < t {
        stats.steps += 1;
        if stats.steps > opts.max_steps {
            return Err(Error::NonConvergence(format!(
                "Krylov expv exceeded {} substeps at t = {t_now}",
                opts.max_steps
            )));
        }
        let beta = dot(&w, &w).sqrt();
        if beta == 0.0 {
            break;
        }
        basis.clear();
        basis.push(w.iter().map(|x| x / beta).collect());
        let mut alpha = Vec::with_capacity(m_max);
        let mut offd = Vec::with_capacity(m_max);
        let mut h_next = 0.0;
        for j in 0..m_max {
            op.apply(&basis[j], &mut scratch);
            stats.matvecs += 1;
            let a = dot(&scratch, &basis[j]);
            alpha.push(a);
            axpy(-a, &basis[j], &mut scratch);
            if j > 0 {
                let b: f64 = offd[j - 1];
                axpy(-b, &basis[j - 1], &mut scratch);
            }
            // full reorthogonalization keeps the small basis clean
            for q in basis.iter() {
                let c = dot(&scratch, q);
                axpy(-c, q, &mut scratch);
            }
            let b = dot(&scratch, &scratch).sqrt();
            let scale = alpha.iter().map(|x: &f64| x.abs()).fold(1e-300, f64::max);
            if b <= 1e-13 * scale {
                h_next = 0.0;
                break;
            }
            h_next = b;
            if j + 1 < m_max {
                offd.push(b);
                basis.push(scratch.iter().map(|x| x / b).collect());
            }
        }
        let m = alpha.len();
        let mut tri = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alpha[i];
            if i + 1 < m {
                tri[(i, i + 1)] = offd[i];
                tri[(i + 1, i)] = offd[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let expe1 = |tau: f64| -> Vec<f64> {
            let mut c = vec![0.0; m];
            for k in 0..m {
                let coeff = eig.eigenvectors[(0, k)] * (tau * eig.eigenvalues[k]).exp();
                for (i, ci) in c.iter_mut().enumerate() {
                    *ci += eig.eigenvectors[(i, k)] * coeff;
                }
            }
            c
        };
        let remaining = t - t_now;
        let mut tau = tau_hint.min(remaining);
        let mut coeffs;
        let mut halvings = 0;
        loop {
            coeffs = expe1(tau);
            let err = beta * h_next * coeffs[m - 1].abs();
            if err <= opts.tol * tau / t || h_next == 0.0 {
                stats.err_estimate += err;
                break;
            }
            tau *= 0.5;
            halvings += 1;
            if halvings > 80 {
                return Err(Error::NonConvergence(format!(
                    "Krylov step collapsed below tolerance {} at t = {t_now}",
                    opts.tol
                )));
            }
        }
        let mut next = vec![0.0; n];
        for (k, q) in basis.iter().enumerate().take(m) {
            axpy(beta * coeffs[k], q, &mut next);
        }
        w = next;
        t_now += tau;
        tau_hint = if halvings == 0 { tau * 2.0 } else { tau };
        if remaining - tau < 1e-14 * t {
            t_now = t;
        }
    }
    Ok((w, stats))
}

/// Dense symmetric operator, used by tests and tiny systems.
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..x.len()).map(|j| self.0[(i, j)] * x[j]).sum();
        }
    }
}

/// Dense `exp(t A)` for symmetric `A` by eigendecomposition.
pub fn dense_expm_symmetric(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (t * l).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_ring(n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            a[(i, j)] += 1.0;
            a[(j, i)] += 1.0;
            a[(i, i)] -= 1.0;
            a[(j, j)] -= 1.0;
        }
        a
    }

    #[test]
    fn matches_dense_exponential() {
        let a = laplacian_ring(60);
        let mut v = vec![0.0; 60];
        v[3] = 1.0;
        v[17] = 0.5;
        for &t in &[0.0, 0.3, 5.0, 80.0] {
            let (w, _) = expv(&DenseOperator(a.clone()), t, &v, KrylovOptions::default()).unwrap();
            let e = dense_expm_symmetric(&a, t);
            for i in 0..60 {
                let want: f64 = (0..60).map(|j| e[(i, j)] * v[j]).sum();
                assert!((w[i] - want).abs() < 1e-9, "t={t} i={i}: {} vs {want}", w[i]);
            }
        }
    }

    #[test]
    fn small_krylov_dimension_substeps() {
        let a = laplacian_ring(40);
        let mut v = vec![0.0; 40];
        v[0] = 1.0;
        let opts = KrylovOptions { dim: 6, ..Default::default() };
        let (w, stats) = expv(&DenseOperator(a.clone()), 20.0, &v, opts).unwrap();
        assert!(stats.steps > 1);
        let e = dense_expm_symmetric(&a, 20.0);
        for i in 0..40 {
            assert!((w[i] - e[(i, 0)]).abs() < 1e-8);
        }
    }
}
