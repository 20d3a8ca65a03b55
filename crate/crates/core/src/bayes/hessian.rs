//! The data-space Hessian `K = σ² I + F G*` and its Cholesky factor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::gram::{gram_columns, gram_fused};
use crate::error::{Error, Result};
use crate::kernel::BlockToeplitzKernel;
use crate::matvec::MatvecPlan;

/// How the dense `F G*` product is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Assembly {
    /// One FFT matvec pair per unit vector.
    #[default]
    Columns,
    /// One GEMM over lag blocks plus a diagonal recursion.
    Fused,
}

#[derive(Debug, Clone)]
pub struct DataSpaceHessian {
    k: DMatrix<f64>,
    chol: DMatrix<f64>,
    sigma2: f64,
    asymmetry: f64,
}

impl DataSpaceHessian {
    /// Symmetrizes `k` and factorizes it. `asymmetry` is the relative
    /// Frobenius norm of `k - k^T` before symmetrization.
    pub fn new(mut k: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::Dimension(format!("K is {} x {}", k.nrows(), k.ncols())));
        }
        let norm = k.norm();
        let asymmetry = if norm > 0.0 { (&k - k.transpose()).norm() / norm } else { 0.0 };
        symmetrize(&mut k);
        let chol = factorize(&k)?;
        Ok(Self { k, chol, sigma2, asymmetry })
    }

    /// Reassembles a stored matrix and factor without refactorizing.
    pub fn from_parts(k: DMatrix<f64>, chol: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if k.shape() != chol.shape() || k.nrows() != k.ncols() {
            return Err(Error::Dimension(format!(
                "K is {:?}, factor is {:?}",
                k.shape(),
                chol.shape()
            )));
        }
        Ok(Self { k, chol, sigma2, asymmetry: 0.0 })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Lower-triangular `L` with `L L^T = K`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// `K^{-1} b` by one forward and one backward triangular solve.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, K is {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = DVector::from_column_slice(b);
        self.solve_in_place(&mut x);
        Ok(x.as_slice().to_vec())
    }

    fn solve_in_place(&self, x: &mut DVector<f64>) {
        self.chol.solve_lower_triangular_mut(x);
        self.chol.tr_solve_lower_triangular_mut(x);
    }

    /// `L^{-1} B`, column by column.
    pub fn half_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = b.clone();
        self.chol.solve_lower_triangular_mut(&mut y);
        y
    }

    /// `K^{-1} B`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.half_solve(b);
        self.chol.tr_solve_lower_triangular_mut(&mut y);
        y
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix. On
/// failure the error reports the smallest eigenvalue.
pub fn factorize(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match nalgebra::Cholesky::new(k.clone()) {
        Some(c) => Ok(c.unpack()),
        None => {
            let min_eig = SymmetricEigen::new(k.clone()).eigenvalues.min();
            Err(Error::Numerical(format!(
                "K is not positive definite (smallest eigenvalue {min_eig:e})"
            )))
        }
    }
}

/// `K = σ² I + F G*` by unit-vector matvecs.
pub fn form_k(plan_f: &MatvecPlan, plan_gstar: &MatvecPlan, sigma2: f64) -> Result<DataSpaceHessian> {
    if plan_f.rows_out() != plan_gstar.rows_out() {
        return Err(Error::Dimension(format!(
            "F has {} output rows, G* has {}",
            plan_f.rows_out(),
            plan_gstar.rows_out()
        )));
    }
    let mut k = gram_columns(plan_f, plan_gstar)?;
    add_diagonal(&mut k, sigma2);
    DataSpaceHessian::new(k, sigma2)
}

/// `K` through the fused GEMM path.
pub fn form_k_fused(
    kernel_f: &BlockToeplitzKernel,
    kernel_gstar: &BlockToeplitzKernel,
    sigma2: f64,
) -> Result<DataSpaceHessian> {
    if kernel_f.rows_out() != kernel_gstar.rows_out() {
        return Err(Error::Dimension(format!(
            "F has {} output rows, G* has {}",
            kernel_f.rows_out(),
            kernel_gstar.rows_out()
        )));
    }
    let mut k = gram_fused(kernel_f, kernel_gstar)?;
    add_diagonal(&mut k, sigma2);
    DataSpaceHessian::new(k, sigma2)
}

fn add_diagonal(k: &mut DMatrix<f64>, sigma2: f64) {
    for i in 0..k.nrows() {
        k[(i, i)] += sigma2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Provenance;
    use crate::prior::PriorOp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_maps_give_scaled_identity() {
        let f = BlockToeplitzKernel::identity(3, 4, Provenance::F);
        let g = f.clone().with_provenance(Provenance::Gstar);
        let h = form_k(&MatvecPlan::new(&f), &MatvecPlan::new(&g), 0.25).unwrap();
        let want = DMatrix::<f64>::identity(12, 12) * 1.25;
        assert!((h.k() - &want).norm() < 1e-14);
        assert!(h.asymmetry() < 1e-15);
    }

    #[test]
    fn factor_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(factorize(&i).unwrap(), i);
        let four = DMatrix::<f64>::identity(3, 3) * 4.0;
        assert_eq!(factorize(&four).unwrap(), DMatrix::<f64>::identity(3, 3) * 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let b = DMatrix::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &b * b.transpose() + DMatrix::identity(20, 20);
        let l = factorize(&spd).unwrap();
        assert!((&l * l.transpose() - &spd).norm() <= 1e-12 * spd.norm());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = factorize(&indefinite).unwrap_err().to_string();
        assert!(err.contains("-1"), "{err}");
    }

    #[test]
    fn solve_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let b = DMatrix::from_fn(30, 30, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &b * b.transpose() + DMatrix::identity(30, 30) * 0.1;
        let h = DataSpaceHessian::new(spd.clone(), 0.1).unwrap();
        for _ in 0..10 {
            let rhs: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = h.solve(&rhs).unwrap();
            let r = &spd * DVector::from_column_slice(&x) - DVector::from_column_slice(&rhs);
            assert!(r.norm() <= 1e-10 * DVector::from_column_slice(&rhs).norm());
        }
    }

    #[test]
    fn column_and_fused_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let prior = PriorOp::build(9, 1.0, 4.0, 1.0).unwrap();
        let f = BlockToeplitzKernel::from_fn(3, 9, 11, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0));
        let g = prior.premultiply_kernel(&f).unwrap();
        let cols = form_k(&MatvecPlan::new(&f), &MatvecPlan::new(&g), 1e-2).unwrap();
        let fused = form_k_fused(&f, &g, 1e-2).unwrap();
        assert!((cols.k() - fused.k()).norm() <= 1e-12 * cols.k().norm());
        assert!(cols.asymmetry() <= 1e-11);
    }
}
