//! Gaussian prior on the seafloor velocity field.
//!
//! Every time block shares the spatial covariance `Γ_x = A^{-2}` with
//! `A = δ I - γ L`, where `L` is the finite-difference Laplacian with
//! Neumann ends on the bottom line of nodes. `A` is symmetric positive
//! definite and tridiagonal, so it is factorized once (Cholesky) and every
//! covariance application costs two pairs of triangular sweeps. There is no
//! correlation across time blocks, which keeps `Γ_prior F^T` block Toeplitz.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};
use crate::layout::{Layout, SpaceTimeField};

#[derive(Debug, Clone)]
pub struct PriorOp {
    n_space: usize,
    gamma: f64,
    delta: f64,
    // A = tridiag(off, diag, off)
    diag: Vec<f64>,
    off: f64,
    // A = R^T R with R upper bidiagonal: R[i][i] = chol_diag[i], R[i][i+1] = chol_off[i].
    chol_diag: Vec<f64>,
    chol_off: Vec<f64>,
}

impl PriorOp {
    /// Assembles and factorizes `δ I - γ L` on `n_space` nodes spaced `h_x`.
    pub fn build(n_space: usize, h_x: f64, gamma: f64, delta: f64) -> Result<Self> {
        if n_space == 0 {
            return Err(Error::Config("prior needs at least one spatial node".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("prior delta must be positive, got {delta}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("prior gamma must be non-negative, got {gamma}")));
        }
        if !(h_x > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {h_x}")));
        }
        let w = gamma / (h_x * h_x);
        let diag: Vec<f64> = (0..n_space)
            .map(|i| {
                let neighbours = (i > 0) as usize + (i + 1 < n_space) as usize;
                delta + w * neighbours as f64
            })
            .collect();
        let off = -w;

        let mut chol_diag = vec![0.0; n_space];
        let mut chol_off = vec![0.0; n_space.saturating_sub(1)];
        for i in 0..n_space {
            let prev = if i > 0 { chol_off[i - 1] * chol_off[i - 1] } else { 0.0 };
            let pivot = diag[i] - prev;
            if !(pivot > 0.0) {
                return Err(Error::Numerical(format!("prior operator pivot {i} is {pivot}")));
            }
            chol_diag[i] = pivot.sqrt();
            if i + 1 < n_space {
                chol_off[i] = off / chol_diag[i];
            }
        }
        Ok(Self {
            n_space,
            gamma,
            delta,
            diag,
            off,
            chol_diag,
            chol_off,
        })
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `x <- A x` for every column of the `n_space x batch` row-major block.
    fn mul_a(&self, x: &mut [f64], batch: usize) {
        let n = self.n_space;
        let mut prev = vec![0.0; batch];
        for i in 0..n {
            let (head, tail) = x.split_at_mut((i + 1) * batch);
            let row = &mut head[i * batch..];
            let next = if i + 1 < n { Some(&tail[..batch]) } else { None };
            for b in 0..batch {
                let cur = row[b];
                let mut v = self.diag[i] * cur + self.off * prev[b];
                if let Some(next) = next {
                    v += self.off * next[b];
                }
                prev[b] = cur;
                row[b] = v;
            }
        }
    }

    /// `x <- A^{-1} x` for every column of the `n_space x batch` block.
    fn solve_a(&self, x: &mut [f64], batch: usize) {
        self.solve_rt(x, batch);
        self.solve_r(x, batch);
    }

    /// `x <- R^{-T} x` (forward sweep).
    fn solve_rt(&self, x: &mut [f64], batch: usize) {
        for i in 0..self.n_space {
            let (head, tail) = x.split_at_mut(i * batch);
            let row = &mut tail[..batch];
            let inv = 1.0 / self.chol_diag[i];
            if i > 0 {
                let prev = &head[(i - 1) * batch..];
                let e = self.chol_off[i - 1];
                for (r, p) in row.iter_mut().zip(prev) {
                    *r = (*r - e * p) * inv;
                }
            } else {
                row.iter_mut().for_each(|r| *r *= inv);
            }
        }
    }

    /// `x <- R^{-1} x` (backward sweep).
    fn solve_r(&self, x: &mut [f64], batch: usize) {
        for i in (0..self.n_space).rev() {
            let (head, tail) = x.split_at_mut((i + 1) * batch);
            let row = &mut head[i * batch..];
            let inv = 1.0 / self.chol_diag[i];
            if i + 1 < self.n_space {
                let next = &tail[..batch];
                let e = self.chol_off[i];
                for (r, n) in row.iter_mut().zip(next) {
                    *r = (*r - e * n) * inv;
                }
            } else {
                row.iter_mut().for_each(|r| *r *= inv);
            }
        }
    }

    /// Applies `Γ_x = A^{-2}` to each column of a row-major
    /// `n_space x batch` block in place.
    pub fn apply_cov_block(&self, x: &mut [f64], batch: usize) {
        debug_assert_eq!(x.len(), self.n_space * batch);
        self.solve_a(x, batch);
        self.solve_a(x, batch);
    }

    /// Applies `Γ_x^{-1} = A^2` column-wise in place.
    pub fn apply_precision_block(&self, x: &mut [f64], batch: usize) {
        debug_assert_eq!(x.len(), self.n_space * batch);
        self.mul_a(x, batch);
        self.mul_a(x, batch);
    }

    /// Applies the square-root factor `A^{-1}` column-wise in place.
    pub fn apply_sqrt_block(&self, x: &mut [f64], batch: usize) {
        self.solve_a(x, batch);
    }

    fn blockwise(
        &self,
        v: &SpaceTimeField,
        f: impl Fn(&Self, &mut [f64], usize),
    ) -> Result<SpaceTimeField> {
        if v.rows() != self.n_space {
            return Err(Error::Dimension(format!(
                "field has {} spatial rows, prior has {}",
                v.rows(),
                self.n_space
            )));
        }
        // Space-major storage is exactly an `n_space x N_t` block.
        let mut w = v.reindex(Layout::SpaceMajorRows);
        let nt = w.n_time();
        f(self, w.values_mut(), nt);
        Ok(w.reindex(v.layout()))
    }

    /// `Γ_prior v`.
    pub fn apply_cov(&self, v: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.blockwise(v, Self::apply_cov_block)
    }

    /// `Γ_prior^{-1} v`.
    pub fn apply_precision(&self, v: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.blockwise(v, Self::apply_precision_block)
    }

    /// `Γ_prior^{1/2} v` with the factor `I ⊗ A^{-1}`.
    pub fn apply_sqrt(&self, v: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.blockwise(v, Self::apply_sqrt_block)
    }

    /// Draws `A^{-1} z` per time block, `z` i.i.d. standard normal.
    pub fn sample(&self, n_time: usize, seed: u64) -> SpaceTimeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n_time, &mut rng)
    }

    pub fn sample_with<R: rand::Rng>(&self, n_time: usize, rng: &mut R) -> SpaceTimeField {
        let z: Vec<f64> = (0..self.n_space * n_time)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let mut s = SpaceTimeField::new(z, self.n_space, n_time, Layout::SpaceMajorRows)
            .expect("length matches by construction");
        self.apply_sqrt_block(s.values_mut(), n_time);
        s
    }

    /// Premultiplies a forward kernel by the prior.
    ///
    /// Given the kernel of `F` (lag blocks `F_k`), returns the kernel with
    /// blocks `F_k Γ_x`, i.e. the lower-triangular `G = F Γ_prior`, tagged so
    /// that it is applied as `G* = Γ_prior F*`. Because `Γ_prior` repeats the
    /// same block at every time step it commutes with time shifts and the
    /// result stays block Toeplitz. One batched solve pair runs per output
    /// row, with the lag axis as the batch.
    pub fn premultiply_kernel(&self, kernel: &BlockToeplitzKernel) -> Result<BlockToeplitzKernel> {
        if kernel.n_cols() != self.n_space {
            return Err(Error::Dimension(format!(
                "kernel has {} spatial columns, prior has {}",
                kernel.n_cols(),
                self.n_space
            )));
        }
        let provenance = match kernel.provenance() {
            Provenance::F => Provenance::Gstar,
            Provenance::Fq => Provenance::Gqstar,
            p => {
                return Err(Error::Dimension(format!(
                    "premultiply expects an F or Fq kernel, got {}",
                    p.name()
                )))
            }
        };
        let mut out = kernel.clone().with_provenance(provenance);
        let nt = kernel.n_time();
        for r in 0..kernel.rows_out() {
            // The row slab is `[col][lag]`: an `n_space x N_t` block.
            self.apply_cov_block(out.row_slab_mut(r), nt);
        }
        Ok(out)
    }

    /// Dense `Γ_x`, for oracles and diagnostics.
    pub fn dense_cov(&self) -> DMatrix<f64> {
        let n = self.n_space;
        let mut block = DMatrix::<f64>::identity(n, n);
        // Γ_x is symmetric, so row- and column-major storage coincide.
        self.apply_cov_block(block.as_mut_slice(), n);
        block
    }

    /// Dense `A = δ I - γ L`.
    pub fn dense_operator(&self) -> DMatrix<f64> {
        let n = self.n_space;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::rel_err;
    use rand::Rng;

    fn rand_field(rng: &mut ChaCha8Rng, n: usize, nt: usize, layout: Layout) -> SpaceTimeField {
        SpaceTimeField::from_fn(n, nt, layout, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_operator() {
        let p = PriorOp::build(6, 10.0, 0.0, 2.0).unwrap();
        let g = p.dense_cov();
        assert!((g - DMatrix::identity(6, 6) * 0.25).abs().max() < 1e-16);
    }

    #[test]
    fn constants_are_eigenvectors() {
        let p = PriorOp::build(7, 1.5, 3.0, 0.5).unwrap();
        let c = SpaceTimeField::from_fn(7, 3, Layout::TimeMajorBlocks, |_, t| 1.0 + t as f64);
        let g = p.apply_cov(&c).unwrap();
        assert!(rel_err(g.values(), c.scaled(4.0).values()) < 1e-13);
        let q = p.apply_precision(&c).unwrap();
        assert!(rel_err(q.values(), c.scaled(0.25).values()) < 1e-13);
    }

    #[test]
    fn five_node_chain_matches_dense_inverse() {
        let p = PriorOp::build(5, 1.0, 1.0, 1.0).unwrap();
        let a = p.dense_operator();
        // Explicit (δI - γL) on a unit-spaced Neumann chain.
        let expected_a = DMatrix::from_row_slice(
            5,
            5,
            &[
                2., -1., 0., 0., 0., -1., 3., -1., 0., 0., 0., -1., 3., -1., 0., 0., 0., -1., 3.,
                -1., 0., 0., 0., -1., 2.,
            ],
        );
        assert_eq!(a, expected_a);
        let inv = expected_a.clone().try_inverse().unwrap();
        let dense = &inv * &inv;
        assert!((p.dense_cov() - &dense).abs().max() < 1e-14 * dense.abs().max());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = rand_field(&mut rng, 5, 4, Layout::TimeMajorBlocks);
        let got = p.apply_cov(&v).unwrap();
        for t in 0..4 {
            let block = nalgebra::DVector::from_fn(5, |i, _| v.get(i, t));
            let want = &dense * block;
            for i in 0..5 {
                assert!((got.get(i, t) - want[i]).abs() < 1e-13);
            }
        }
        let prec = p.apply_precision(&v).unwrap();
        let a2 = &expected_a * &expected_a;
        for t in 0..4 {
            let block = nalgebra::DVector::from_fn(5, |i, _| v.get(i, t));
            let want = &a2 * block;
            for i in 0..5 {
                assert!((prec.get(i, t) - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_pair_and_symmetry() {
        let p = PriorOp::build(20, 50.0, 40_000.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for layout in [Layout::SpaceMajorRows, Layout::TimeMajorBlocks] {
            let v = rand_field(&mut rng, 20, 6, layout);
            let w = rand_field(&mut rng, 20, 6, layout);
            let back = p.apply_precision(&p.apply_cov(&v).unwrap()).unwrap();
            assert_eq!(back.layout(), layout);
            assert!(rel_err(back.values(), v.values()) < 1e-12);
            let lhs = p.apply_cov(&v).unwrap().dot(&w).unwrap();
            let rhs = v.dot(&p.apply_cov(&w).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1e-300));
        }
    }

    #[test]
    fn positive_definite() {
        let p = PriorOp::build(16, 20.0, 6400.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let v = rand_field(&mut rng, 16, 3, Layout::SpaceMajorRows);
            assert!(v.dot(&p.apply_cov(&v).unwrap()).unwrap() > 0.0);
        }
    }

    #[test]
    fn correlation_decays_with_distance() {
        let p = PriorOp::build(30, 10.0, 1600.0, 1.0).unwrap();
        let g = p.dense_cov();
        for i in [0usize, 7, 15, 29] {
            let corr = |j: usize| g[(i, j)] / g[(i, i)];
            for j in i + 1..29 {
                assert!(corr(j + 1) < corr(j), "i={i} j={j}");
            }
            for j in 1..=i {
                assert!(corr(j - 1) < corr(j), "i={i} j={j}");
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(matches!(PriorOp::build(4, 1.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(PriorOp::build(4, 1.0, 1.0, -1.0), Err(Error::Config(_))));
        assert!(PriorOp::build(4, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_centered() {
        let p = PriorOp::build(5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.sample(3, 42), p.sample(3, 42));
        assert_ne!(p.sample(3, 42), p.sample(3, 43));

        let draws = p.sample(10_000, 7);
        let g = p.dense_cov();
        for i in 0..5 {
            let mean: f64 = (0..10_000).map(|t| draws.get(i, t)).sum::<f64>() / 10_000.0;
            let sd = g[(i, i)].sqrt();
            assert!(mean.abs() / sd < 4.0 / 100.0, "node {i}: standardized mean {}", mean / sd);
        }
    }

    #[test]
    fn sample_covariance_matches_dense() {
        let p = PriorOp::build(5, 1.0, 1.0, 1.0).unwrap();
        let n = 100_000;
        let draws = p.sample(n, 99);
        let mut emp = DMatrix::<f64>::zeros(5, 5);
        for t in 0..n {
            for i in 0..5 {
                for j in 0..5 {
                    emp[(i, j)] += draws.get(i, t) * draws.get(j, t);
                }
            }
        }
        emp /= n as f64;
        let g = p.dense_cov();
        assert!((emp - &g).norm() / g.norm() < 0.05);
    }

    #[test]
    fn premultiply_matches_dense_product() {
        use crate::matvec::{materialize, DEFAULT_DENSE_CAP_BYTES};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = BlockToeplitzKernel::from_fn(2, 5, 4, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0));
        let p = PriorOp::build(5, 1.0, 0.7, 1.3).unwrap();
        let g = p.premultiply_kernel(&k).unwrap();
        assert_eq!(g.provenance(), Provenance::Gstar);

        // G* = Γ_prior F^T, so its transpose G = F Γ_prior is what is stored.
        let f = materialize(&k, DEFAULT_DENSE_CAP_BYTES).unwrap();
        let gamma_x = p.dense_cov();
        // Space-major ordering: Γ_prior = Γ_x ⊗ I_{N_t}.
        let gamma = gamma_x.kronecker(&DMatrix::<f64>::identity(4, 4));
        let want_gstar = &gamma * f.transpose();
        let got = materialize(&g, DEFAULT_DENSE_CAP_BYTES).unwrap().transpose();
        assert!((got - &want_gstar).norm() < 1e-13 * want_gstar.norm());

        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(g.toeplitz_block(i, j).unwrap(), g.toeplitz_block(i + 1, j + 1).unwrap());
            }
        }
    }

    #[test]
    fn unit_prior_leaves_kernel_unchanged() {
        let k = BlockToeplitzKernel::from_fn(3, 4, 5, Provenance::Fq, |r, c, l| (r + 2 * c + 3 * l) as f64);
        let p = PriorOp::build(4, 1.0, 0.0, 1.0).unwrap();
        let g = p.premultiply_kernel(&k).unwrap();
        assert_eq!(g.provenance(), Provenance::Gqstar);
        assert_eq!(g.data(), k.data());
    }
}
