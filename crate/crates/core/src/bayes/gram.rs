//! Dense products `A B*` of two Toeplitz maps sharing a parameter space.
//!
//! `A` is a forward kernel (`F` or `F_q`) and `B` a premultiplied kernel
//! holding the blocks of `F_b Γ_prior`, so `A B*` is one of `F G*`,
//! `F G_q*` or `F_q G_q*`. Rows and columns use space-major ordering
//! (index `row * N_t + t`) on both sides.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::BlockToeplitzKernel;
use crate::matvec::MatvecPlan;

fn check_pair(a_rows: usize, a_cols: usize, a_nt: usize, b_cols: usize, b_nt: usize) -> Result<()> {
    if a_cols != b_cols || a_nt != b_nt {
        return Err(Error::Dimension(format!(
            "operators disagree: {a_rows} x {a_cols} x {a_nt} against {b_cols} columns x {b_nt} steps"
        )));
    }
    Ok(())
}

/// Column `c` is `A (B* e_c)`: one adjoint and one forward FFT matvec per
/// column of the result, independent across columns.
pub fn gram_columns(a: &MatvecPlan, b: &MatvecPlan) -> Result<DMatrix<f64>> {
    check_pair(a.rows_out(), a.n_cols(), a.n_time(), b.n_cols(), b.n_time())?;
    let nt = a.n_time();
    let n_rows = a.rows_out() * nt;
    let n_cols = b.rows_out() * nt;
    let n_mid = a.n_cols() * nt;
    let mut out = DMatrix::<f64>::zeros(n_rows, n_cols);
    // nalgebra is column-major, so each chunk is one column.
    out.as_mut_slice()
        .par_chunks_mut(n_rows)
        .enumerate()
        .for_each_init(
            || (a.make_scratch(), b.make_scratch(), vec![0.0; n_cols], vec![0.0; n_mid]),
            |(sa, sb, unit, mid), (c, col)| {
                unit.fill(0.0);
                unit[c] = 1.0;
                b.apply_adjoint_into(unit, mid, sb);
                a.apply_into(mid, col, sa);
            },
        );
    Ok(out)
}

/// Same product from one GEMM over lag blocks.
///
/// With `P_{k,l} = A_k B_l^T` for all lag pairs, block `(i, j)` of `A B*`
/// is `Σ_{s <= min(i,j)} P_{i-s, j-s}`, which satisfies
/// `M_{i,j} = P_{i,j} + M_{i-1,j-1}`.
pub fn gram_fused(a: &BlockToeplitzKernel, b: &BlockToeplitzKernel) -> Result<DMatrix<f64>> {
    check_pair(a.rows_out(), a.n_cols(), a.n_time(), b.n_cols(), b.n_time())?;
    let (ra, rb, nm, nt) = (a.rows_out(), b.rows_out(), a.n_cols(), a.n_time());
    let stack = |k: &BlockToeplitzKernel, rows: usize| {
        DMatrix::from_fn(nt * rows, nm, |row, x| k.at(row % rows, x, row / rows))
    };
    let p = stack(a, ra) * stack(b, rb).transpose();
    let mut out = DMatrix::<f64>::zeros(ra * nt, rb * nt);
    for j in 0..nt {
        for sb in 0..rb {
            let col = sb * nt + j;
            for i in 0..nt {
                for sa in 0..ra {
                    let row = sa * nt + i;
                    let mut v = p[(i * ra + sa, j * rb + sb)];
                    if i > 0 && j > 0 {
                        v += out[(row - 1, col - 1)];
                    }
                    out[(row, col)] = v;
                }
            }
        }
    }
    Ok(out)
}
