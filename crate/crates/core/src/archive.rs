//! Binary archives for offline operators.
//!
//! `BTPZ1` holds a Toeplitz kernel: the magic bytes, four little-endian
//! `u64` fields `[rows_out, n_cols, N_t, provenance]`, then the kernel
//! values as little-endian `f64` in `[row][col][lag]` order.
//!
//! `DNSM1` holds a dense matrix: the magic bytes, little-endian `u64`
//! `[rows, cols, symmetric]`, then the entries as little-endian `f64` in
//! row-major order.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};

pub const KERNEL_MAGIC: &[u8; 5] = b"BTPZ1";
pub const DENSE_MAGIC: &[u8; 5] = b"DNSM1";

pub fn write_kernel<W: Write>(w: &mut W, kernel: &BlockToeplitzKernel) -> Result<()> {
    w.write_all(KERNEL_MAGIC)?;
    for field in [
        kernel.rows_out() as u64,
        kernel.n_cols() as u64,
        kernel.n_time() as u64,
        kernel.provenance().code(),
    ] {
        w.write_all(&field.to_le_bytes())?;
    }
    write_f64s(w, kernel.data())
}

pub fn read_kernel<R: Read>(r: &mut R) -> Result<BlockToeplitzKernel> {
    expect_magic(r, KERNEL_MAGIC)?;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let nt = read_u64(r)? as usize;
    let prov = Provenance::from_code(read_u64(r)?)?;
    let len = checked_len(&[rows, cols, nt])?;
    let data = read_f64s(r, len)?;
    BlockToeplitzKernel::new(rows, cols, nt, prov, data)
}

pub fn kernel_to_bytes(kernel: &BlockToeplitzKernel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(5 + 32 + 8 * kernel.data().len());
    write_kernel(&mut buf, kernel).expect("writing to a Vec cannot fail");
    buf
}

pub fn kernel_from_bytes(mut bytes: &[u8]) -> Result<BlockToeplitzKernel> {
    let k = read_kernel(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after kernel", bytes.len())));
    }
    Ok(k)
}

pub fn write_dense<W: Write>(w: &mut W, m: &DMatrix<f64>, symmetric: bool) -> Result<()> {
    w.write_all(DENSE_MAGIC)?;
    for field in [m.nrows() as u64, m.ncols() as u64, symmetric as u64] {
        w.write_all(&field.to_le_bytes())?;
    }
    let mut row = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        row.clear();
        row.extend(m.row(i).iter().copied());
        write_f64s(w, &row)?;
    }
    Ok(())
}

/// Dense matrix plus its symmetric flag.
pub fn read_dense<R: Read>(r: &mut R) -> Result<(DMatrix<f64>, bool)> {
    expect_magic(r, DENSE_MAGIC)?;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let sym = match read_u64(r)? {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("symmetric flag must be 0 or 1, got {f}"))),
    };
    let len = checked_len(&[rows, cols])?;
    let data = read_f64s(r, len)?;
    Ok((DMatrix::from_row_slice(rows, cols, &data), sym))
}

pub fn dense_to_bytes(m: &DMatrix<f64>, symmetric: bool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(5 + 24 + 8 * m.len());
    write_dense(&mut buf, m, symmetric).expect("writing to a Vec cannot fail");
    buf
}

pub fn dense_from_bytes(mut bytes: &[u8]) -> Result<(DMatrix<f64>, bool)> {
    let out = read_dense(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after matrix", bytes.len())));
    }
    Ok(out)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 5]) -> Result<()> {
    let mut got = [0u8; 5];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::Format(format!("archive dimensions {dims:?} overflow")))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Encodes a flat `f64` slice as raw little-endian bytes.
pub fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 * values.len());
    write_f64s(&mut buf, values).expect("writing to a Vec cannot fail");
    buf
}

pub fn f64s_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "raw float array length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let mut r = bytes;
    read_f64s(&mut r, bytes.len() / 8)
}
