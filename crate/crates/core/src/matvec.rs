//! FFT application of block lower-triangular Toeplitz operators.
//!
//! Each `(row, col)` lag series of the kernel is zero-padded from `N_t` to
//! `2 N_t`, which embeds the Toeplitz operator in a block circulant one.
//! The circulant is block-diagonal in Fourier space: after transforming the
//! input rows, every frequency carries an independent `rows_out x n_cols`
//! complex matrix-vector product. Inverse transforms and truncation to the
//! first `N_t` samples recover the Toeplitz product exactly (up to
//! rounding).
//!
//! Transforms are real-to-complex, so only `N_t + 1` frequencies are
//! stored. The forward transform is unnormalized and the inverse carries the
//! `1 / (2 N_t)` factor.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};
use crate::layout::{Layout, Series, SeriesKind};

/// Default cap on the memory a dense oracle may allocate.
pub const DEFAULT_DENSE_CAP_BYTES: u64 = 2 << 30;

/// Fourier-space representation of a Toeplitz kernel, reusable for any
/// number of applications.
#[derive(Clone)]
pub struct MatvecPlan {
    kernel_hat: Vec<Complex64>,
    rows_out: usize,
    n_cols: usize,
    n_time: usize,
    provenance: Provenance,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for MatvecPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatvecPlan")
            .field("rows_out", &self.rows_out)
            .field("n_cols", &self.n_cols)
            .field("n_time", &self.n_time)
            .field("n_fft", &self.n_fft())
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// Scratch buffers for one application; reuse across calls to avoid
/// reallocating.
pub struct MatvecScratch {
    real: Vec<f64>,
    spec_in: Vec<Complex64>,
    spec_out: Vec<Complex64>,
    fft: Vec<Complex64>,
    zero_rows: Vec<bool>,
}

impl MatvecPlan {
    pub fn new(kernel: &BlockToeplitzKernel) -> Self {
        let nt = kernel.n_time();
        let n_fft = 2 * nt;
        let nf = nt + 1;
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(n_fft);
        let c2r = planner.plan_fft_inverse(n_fft);

        let pairs = kernel.rows_out() * kernel.n_cols();
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); pairs * nf];
        let mut buf = r2c.make_input_vec();
        let mut scratch = r2c.make_scratch_vec();
        for (p, spec) in kernel_hat.chunks_exact_mut(nf).enumerate() {
            let (r, c) = (p / kernel.n_cols(), p % kernel.n_cols());
            buf[..nt].copy_from_slice(kernel.series(r, c));
            buf[nt..].fill(0.0);
            r2c.process_with_scratch(&mut buf, spec, &mut scratch)
                .expect("buffer sizes come from the planner");
        }
        Self {
            kernel_hat,
            rows_out: kernel.rows_out(),
            n_cols: kernel.n_cols(),
            n_time: nt,
            provenance: kernel.provenance(),
            r2c,
            c2r,
        }
    }

    pub fn rows_out(&self) -> usize {
        self.rows_out
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Padded transform length, exactly `2 N_t`.
    pub fn n_fft(&self) -> usize {
        2 * self.n_time
    }

    /// Stored frequencies, `N_t + 1`.
    pub fn n_freq(&self) -> usize {
        self.n_time + 1
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Half-spectrum of one `(row, col)` lag series.
    pub fn kernel_hat(&self, row: usize, col: usize) -> &[Complex64] {
        let nf = self.n_freq();
        let start = (row * self.n_cols + col) * nf;
        &self.kernel_hat[start..start + nf]
    }

    /// Squared norm of the full (two-sided) spectrum, reconstructed from
    /// the stored half by conjugate symmetry.
    pub fn full_spectrum_norm_sqr(&self) -> f64 {
        let nf = self.n_freq();
        self.kernel_hat
            .chunks_exact(nf)
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(f, z)| {
                        let w = if f == 0 || f == nf - 1 { 1.0 } else { 2.0 };
                        w * z.norm_sqr()
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn make_scratch(&self) -> MatvecScratch {
        let rows = self.rows_out.max(self.n_cols);
        MatvecScratch {
            real: self.r2c.make_input_vec(),
            spec_in: vec![Complex64::new(0.0, 0.0); rows * self.n_freq()],
            spec_out: vec![Complex64::new(0.0, 0.0); rows * self.n_freq()],
            fft: vec![
                Complex64::new(0.0, 0.0);
                self.r2c.get_scratch_len().max(self.c2r.get_scratch_len())
            ],
            zero_rows: vec![false; rows],
        }
    }

    /// `out = F v`. `v` must be in [`Layout::SpaceMajorRows`] with
    /// `n_cols` rows; the result has `rows_out` rows in the same layout.
    pub fn apply<I: SeriesKind, O: SeriesKind>(&self, v: &Series<I>) -> Result<Series<O>> {
        v.require_layout(Layout::SpaceMajorRows)?;
        v.check_shape(self.n_cols, self.n_time)?;
        let mut out = vec![0.0; self.rows_out * self.n_time];
        self.apply_into(v.values(), &mut out, &mut self.make_scratch());
        Series::new(out, self.rows_out, self.n_time, Layout::SpaceMajorRows)
    }

    /// `out = F^T w`, the exact transpose of [`MatvecPlan::apply`].
    pub fn apply_adjoint<I: SeriesKind, O: SeriesKind>(&self, w: &Series<I>) -> Result<Series<O>> {
        w.require_layout(Layout::SpaceMajorRows)?;
        w.check_shape(self.rows_out, self.n_time)?;
        let mut out = vec![0.0; self.n_cols * self.n_time];
        self.apply_adjoint_into(w.values(), &mut out, &mut self.make_scratch());
        Series::new(out, self.n_cols, self.n_time, Layout::SpaceMajorRows)
    }

    /// Slice form of [`MatvecPlan::apply`]: `input` is `n_cols x N_t`,
    /// `out` is `rows_out x N_t`, both row-contiguous.
    pub fn apply_into(&self, input: &[f64], out: &mut [f64], scratch: &mut MatvecScratch) {
        assert_eq!(input.len(), self.n_cols * self.n_time);
        assert_eq!(out.len(), self.rows_out * self.n_time);
        self.transform_rows(input, self.n_cols, scratch);
        let nf = self.n_freq();
        let (spec_in, spec_out) = (&scratch.spec_in, &mut scratch.spec_out);
        spec_out[..self.rows_out * nf].fill(Complex64::new(0.0, 0.0));
        for r in 0..self.rows_out {
            let acc = &mut spec_out[r * nf..(r + 1) * nf];
            for c in 0..self.n_cols {
                if scratch.zero_rows[c] {
                    continue;
                }
                let x = &spec_in[c * nf..(c + 1) * nf];
                let k = self.kernel_hat(r, c);
                for ((a, kk), xx) in acc.iter_mut().zip(k).zip(x) {
                    *a += kk * xx;
                }
            }
        }
        self.inverse_rows(out, self.rows_out, scratch);
    }

    /// Slice form of [`MatvecPlan::apply_adjoint`].
    pub fn apply_adjoint_into(&self, input: &[f64], out: &mut [f64], scratch: &mut MatvecScratch) {
        assert_eq!(input.len(), self.rows_out * self.n_time);
        assert_eq!(out.len(), self.n_cols * self.n_time);
        self.transform_rows(input, self.rows_out, scratch);
        let nf = self.n_freq();
        let (spec_in, spec_out) = (&scratch.spec_in, &mut scratch.spec_out);
        spec_out[..self.n_cols * nf].fill(Complex64::new(0.0, 0.0));
        for r in 0..self.rows_out {
            if scratch.zero_rows[r] {
                continue;
            }
            let x = &spec_in[r * nf..(r + 1) * nf];
            for c in 0..self.n_cols {
                let acc = &mut spec_out[c * nf..(c + 1) * nf];
                let k = self.kernel_hat(r, c);
                for ((a, kk), xx) in acc.iter_mut().zip(k).zip(x) {
                    *a += kk.conj() * xx;
                }
            }
        }
        self.inverse_rows(out, self.n_cols, scratch);
    }

    /// Transforms `rows` zero-padded input rows into `scratch.spec_in`.
    /// All-zero rows are skipped and flagged in `scratch.zero_rows`.
    fn transform_rows(&self, input: &[f64], rows: usize, scratch: &mut MatvecScratch) {
        let nt = self.n_time;
        let nf = self.n_freq();
        for r in 0..rows {
            let row = &input[r * nt..(r + 1) * nt];
            let spec = &mut scratch.spec_in[r * nf..(r + 1) * nf];
            scratch.zero_rows[r] = row.iter().all(|&v| v == 0.0);
            if scratch.zero_rows[r] {
                continue;
            }
            scratch.real[..nt].copy_from_slice(row);
            scratch.real[nt..].fill(0.0);
            self.r2c
                .process_with_scratch(&mut scratch.real, spec, &mut scratch.fft)
                .expect("buffer sizes come from the planner");
        }
    }

    fn inverse_rows(&self, out: &mut [f64], rows: usize, scratch: &mut MatvecScratch) {
        let nt = self.n_time;
        let nf = self.n_freq();
        let scale = 1.0 / self.n_fft() as f64;
        for r in 0..rows {
            let spec = &mut scratch.spec_out[r * nf..(r + 1) * nf];
            // DC and Nyquist bins of a real signal are real.
            spec[0].im = 0.0;
            spec[nf - 1].im = 0.0;
            self.c2r
                .process_with_scratch(spec, &mut scratch.real, &mut scratch.fft)
                .expect("buffer sizes come from the planner");
            for (o, v) in out[r * nt..(r + 1) * nt].iter_mut().zip(&scratch.real[..nt]) {
                *o = v * scale;
            }
        }
    }
}

/// Reference product with the block matrix, evaluated block by block in
/// `O(rows_out * n_cols * N_t^2)`.
///
/// Every nonzero block `F_{i,j}` (and its transpose when `adjoint` is set)
/// is materialized from the kernel by the lower-triangular Toeplitz rule
/// into a working buffer and multiplied. `cap_bytes` bounds the memory the
/// routine allocates.
pub fn dense_apply(
    kernel: &BlockToeplitzKernel,
    v: &[f64],
    adjoint: bool,
    cap_bytes: u64,
) -> Result<Vec<f64>> {
    let (nr, nc, nt) = (kernel.rows_out(), kernel.n_cols(), kernel.n_time());
    let (n_in, n_out) = if adjoint { (nr, nc) } else { (nc, nr) };
    if v.len() != n_in * nt {
        return Err(Error::Dimension(format!(
            "dense_apply input has {} values, expected {}",
            v.len(),
            n_in * nt
        )));
    }
    let needed = 8 * (nr * nc + (n_in + n_out) * nt) as u64;
    if needed > cap_bytes {
        return Err(Error::Capacity {
            needed,
            cap: cap_bytes,
        });
    }
    let mut out = vec![0.0; n_out * nt];
    let mut block = vec![0.0; nr * nc];
    // Row-contiguous vectors: value (row, t) sits at row * nt + t.
    for i in 0..nt {
        for j in 0..=i {
            let lag = i - j;
            for r in 0..nr {
                for c in 0..nc {
                    block[r * nc + c] = kernel.at(r, c, lag);
                }
            }
            if adjoint {
                // Block (j, i) of F^T is F_{i,j}^T.
                for c in 0..nc {
                    let mut acc = 0.0;
                    for r in 0..nr {
                        acc += block[r * nc + c] * v[r * nt + i];
                    }
                    out[c * nt + j] += acc;
                }
            } else {
                for r in 0..nr {
                    let mut acc = 0.0;
                    for c in 0..nc {
                        acc += block[r * nc + c] * v[c * nt + j];
                    }
                    out[r * nt + i] += acc;
                }
            }
        }
    }
    Ok(out)
}

/// Full `(rows_out N_t) x (n_cols N_t)` matrix of the operator, with rows
/// and columns in row-contiguous (space-major) order.
pub fn materialize(kernel: &BlockToeplitzKernel, cap_bytes: u64) -> Result<nalgebra::DMatrix<f64>> {
    let (nr, nc, nt) = (kernel.rows_out(), kernel.n_cols(), kernel.n_time());
    let needed = 8 * (nr * nt) as u64 * (nc * nt) as u64;
    if needed > cap_bytes {
        return Err(Error::Capacity {
            needed,
            cap: cap_bytes,
        });
    }
    Ok(nalgebra::DMatrix::from_fn(nr * nt, nc * nt, |row, col| {
        let (r, i) = (row / nt, row % nt);
        let (c, j) = (col / nt, col % nt);
        if i >= j {
            kernel.at(r, c, i - j)
        } else {
            0.0
        }
    }))
}
