//! Block lower-triangular Toeplitz operators stored by their first block
//! column.
//!
//! A shift-invariant map `d_i = sum_{j <= i} F_{i-j+1} m_j` is fully
//! described by the blocks `F_{1,1}, ..., F_{N_t,1}`. They are kept as a
//! `rows_out x n_cols x N_t` tensor with the lag axis contiguous, so each
//! `(row, col)` lag series can be transformed in place.

use crate::error::{Error, Result};

/// Which operator a kernel represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Parameter-to-observable map.
    F,
    /// Parameter-to-QoI map.
    Fq,
    /// Prior-premultiplied adjoint of `F`.
    Gstar,
    /// Prior-premultiplied adjoint of `Fq`.
    Gqstar,
}

impl Provenance {
    pub fn code(self) -> u64 {
        match self {
            Provenance::F => 0,
            Provenance::Fq => 1,
            Provenance::Gstar => 2,
            Provenance::Gqstar => 3,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        Ok(match code {
            0 => Provenance::F,
            1 => Provenance::Fq,
            2 => Provenance::Gstar,
            3 => Provenance::Gqstar,
            c => return Err(Error::Format(format!("unknown provenance code {c}"))),
        })
    }

    /// `Gstar`/`Gqstar` kernels store the lower-triangular `G = F Γ_prior`;
    /// the operator they name is its adjoint.
    pub fn direction(self) -> Direction {
        match self {
            Provenance::F | Provenance::Fq => Direction::Forward,
            Provenance::Gstar | Provenance::Gqstar => Direction::AdjointOfForward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Provenance::F => "F",
            Provenance::Fq => "Fq",
            Provenance::Gstar => "Gstar",
            Provenance::Gqstar => "Gqstar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    AdjointOfForward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitzKernel {
    rows_out: usize,
    n_cols: usize,
    n_time: usize,
    provenance: Provenance,
    data: Vec<f64>,
}

impl BlockToeplitzKernel {
    pub fn new(
        rows_out: usize,
        n_cols: usize,
        n_time: usize,
        provenance: Provenance,
        data: Vec<f64>,
    ) -> Result<Self> {
        if rows_out == 0 || n_cols == 0 || n_time == 0 {
            return Err(Error::Dimension(format!(
                "kernel shape must be nonzero, got {rows_out} x {n_cols} x {n_time}"
            )));
        }
        if data.len() != rows_out * n_cols * n_time {
            return Err(Error::Dimension(format!(
                "kernel {rows_out} x {n_cols} x {n_time} needs {} values, got {}",
                rows_out * n_cols * n_time,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("kernel entry {pos} is not finite")));
        }
        Ok(Self {
            rows_out,
            n_cols,
            n_time,
            provenance,
            data,
        })
    }

    pub fn zeros(rows_out: usize, n_cols: usize, n_time: usize, provenance: Provenance) -> Self {
        Self {
            rows_out,
            n_cols,
            n_time,
            provenance,
            data: vec![0.0; rows_out * n_cols * n_time],
        }
    }

    /// Kernel with `F_{k,1}[row][col] = f(row, col, k)`, `k` 0-based lag.
    pub fn from_fn(
        rows_out: usize,
        n_cols: usize,
        n_time: usize,
        provenance: Provenance,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows_out * n_cols * n_time);
        for r in 0..rows_out {
            for c in 0..n_cols {
                for k in 0..n_time {
                    data.push(f(r, c, k));
                }
            }
        }
        Self {
            rows_out,
            n_cols,
            n_time,
            provenance,
            data,
        }
    }

    /// The lag-1 block is the identity and every later block vanishes.
    pub fn identity(n: usize, n_time: usize, provenance: Provenance) -> Self {
        Self::from_fn(n, n, n_time, provenance, |r, c, k| {
            if r == c && k == 0 {
                1.0
            } else {
                0.0
            }
        })
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

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn direction(&self) -> Direction {
        self.provenance.direction()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Lag series of one `(row, col)` entry.
    #[inline]
    pub fn series(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.n_cols + col) * self.n_time;
        &self.data[start..start + self.n_time]
    }

    #[inline]
    pub fn series_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.n_cols + col) * self.n_time;
        &mut self.data[start..start + self.n_time]
    }

    /// All `n_cols x N_t` entries belonging to one output row.
    pub fn row_slab(&self, row: usize) -> &[f64] {
        let len = self.n_cols * self.n_time;
        &self.data[row * len..(row + 1) * len]
    }

    pub fn row_slab_mut(&mut self, row: usize) -> &mut [f64] {
        let len = self.n_cols * self.n_time;
        &mut self.data[row * len..(row + 1) * len]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, lag: usize) -> f64 {
        self.data[(row * self.n_cols + col) * self.n_time + lag]
    }

    /// Block `(i, j)` of the full operator, 1-based, as a row-major
    /// `rows_out x n_cols` matrix: `F_{i-j+1,1}` when `i >= j`, zero above
    /// the diagonal.
    pub fn toeplitz_block(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let nt = self.n_time;
        if i == 0 || j == 0 || i > nt || j > nt {
            return Err(Error::Index(format!(
                "block ({i}, {j}) outside 1..={nt}"
            )));
        }
        let mut block = vec![0.0; self.rows_out * self.n_cols];
        if i >= j {
            let lag = i - j;
            for r in 0..self.rows_out {
                for c in 0..self.n_cols {
                    block[r * self.n_cols + c] = self.at(r, c, lag);
                }
            }
        }
        Ok(block)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Kernel of the transpose-in-space operator, `F_k -> F_k^T` for every
    /// lag, without reversing time. This is not the adjoint of the map; it
    /// exists as a negative control for adjoint tests.
    pub fn transpose_blocks(&self) -> Self {
        Self::from_fn(self.n_cols, self.rows_out, self.n_time, self.provenance, |r, c, k| {
            self.at(c, r, k)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag_kernel() -> BlockToeplitzKernel {
        BlockToeplitzKernel::from_fn(2, 3, 5, Provenance::F, |_, _, k| (k + 1) as f64)
    }

    #[test]
    fn upper_blocks_vanish() {
        let k = lag_kernel();
        assert!(k.toeplitz_block(1, 2).unwrap().iter().all(|&v| v == 0.0));
        assert!(k.toeplitz_block(2, 5).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_is_first_lag() {
        let k = BlockToeplitzKernel::from_fn(2, 3, 5, Provenance::F, |r, c, l| {
            (r * 100 + c * 10 + l) as f64
        });
        let first = k.toeplitz_block(1, 1).unwrap();
        for i in 1..=5 {
            assert_eq!(k.toeplitz_block(i, i).unwrap(), first);
        }
    }

    #[test]
    fn direct_read() {
        // data[s][x][k] = k with 1-based k.
        let k = lag_kernel();
        assert!(k.toeplitz_block(3, 1).unwrap().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn shift_invariance_is_exact() {
        let k = BlockToeplitzKernel::from_fn(3, 2, 6, Provenance::Fq, |r, c, l| {
            ((r + 1) as f64 * 0.37 + c as f64).sin() * (l as f64 + 0.5).ln()
        });
        for i in 1..6 {
            for j in 1..6 {
                assert_eq!(k.toeplitz_block(i, j).unwrap(), k.toeplitz_block(i + 1, j + 1).unwrap());
            }
        }
    }

    #[test]
    fn out_of_range_index() {
        let k = lag_kernel();
        assert!(matches!(k.toeplitz_block(0, 1), Err(Error::Index(_))));
        assert!(matches!(k.toeplitz_block(1, 6), Err(Error::Index(_))));
    }

    #[test]
    fn rejects_bad_shape_and_nan() {
        assert!(BlockToeplitzKernel::new(2, 2, 2, Provenance::F, vec![0.0; 7]).is_err());
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(BlockToeplitzKernel::new(2, 2, 2, Provenance::F, data).is_err());
    }

    #[test]
    fn provenance_codes_round_trip() {
        for p in [Provenance::F, Provenance::Fq, Provenance::Gstar, Provenance::Gqstar] {
            assert_eq!(Provenance::from_code(p.code()).unwrap(), p);
        }
        assert!(Provenance::from_code(9).is_err());
        assert_eq!(Provenance::Gstar.direction(), Direction::AdjointOfForward);
    }
}
