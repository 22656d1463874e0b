//! Small CSR conveniences shared across the crate.

use rayon::prelude::*;
use sprs::CsMat;
use std::io::{self, Write};

/// Builds a CSR matrix from per-row `(column, value)` lists. Columns within a
/// row must be strictly increasing.
pub fn csr_from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> CsMat<f64> {
    let n_rows = rows.len();
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut indptr = Vec::with_capacity(n_rows + 1);
    let mut indices = Vec::with_capacity(nnz);
    let mut data = Vec::with_capacity(nnz);
    indptr.push(0usize);
    for row in rows {
        for &(j, v) in row {
            indices.push(j);
            data.push(v);
        }
        indptr.push(indices.len());
    }
    CsMat::new((n_rows, n_cols), indptr, indices, data)
}

/// `y = m * x`, rows in parallel.
pub fn matvec_into(m: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    debug_assert!(m.is_csr());
    debug_assert_eq!(m.cols(), x.len());
    debug_assert_eq!(m.rows(), y.len());
    let indptr = m.indptr();
    let ip = indptr.raw_storage();
    let idx = m.indices();
    let dat = m.data();
    y.par_iter_mut()
        .with_min_len(256)
        .enumerate()
        .for_each(|(i, yi)| {
            let mut s = 0.0;
            for t in ip[i]..ip[i + 1] {
                s += dat[t] * x[idx[t]];
            }
            *yi = s;
        });
}

pub fn matvec(m: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.rows()];
    matvec_into(m, x, &mut y);
    y
}

/// `y = m^T * x` without materialising the transpose (serial scatter).
pub fn matvec_transpose(m: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert!(m.is_csr());
    debug_assert_eq!(m.rows(), x.len());
    let mut y = vec![0.0; m.cols()];
    let indptr = m.indptr();
    let ip = indptr.raw_storage();
    let idx = m.indices();
    let dat = m.data();
    for i in 0..m.rows() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for t in ip[i]..ip[i + 1] {
            y[idx[t]] += dat[t] * xi;
        }
    }
    y
}

/// Materialised CSR transpose.
pub fn transpose(m: &CsMat<f64>) -> CsMat<f64> {
    m.transpose_view().to_csr()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &CsMat<f64>) -> f64 {
    let indptr = m.indptr();
    let ip = indptr.raw_storage();
    let dat = m.data();
    (0..m.rows())
        .map(|i| dat[ip[i]..ip[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Plain-text coordinate triplets `row col value`, one entry per line.
pub fn write_triplets<W: Write>(m: &CsMat<f64>, w: &mut W) -> io::Result<()> {
    for (v, (i, j)) in m.iter() {
        writeln!(w, "{} {} {:.16e}", i, j, v)?;
    }
    Ok(())
}
