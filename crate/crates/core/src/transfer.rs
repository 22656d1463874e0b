//! Ulam estimation of the transfer operator.
//!
//! A row-stochastic matrix `P` is built by advecting a regular lattice of
//! test points from every source cell and counting arrivals per target cell.
//! Together with the discretised densities `u` and `v = P^T u` this yields
//! the normalised matrix `P~` with entries `P_ij u_i / v_j`: `P~^T` acting on
//! a cell field realises the push-forward operator, `P` acting on the right
//! realises its adjoint.

use crate::dynamics::{DensitySpec, MapSpec};
use crate::error::{Error, Result};
use crate::grid::{CellField, Grid};
use crate::sparse;
use rayon::prelude::*;
use sprs::CsMat;

/// Per-cell masses of a probability measure; strictly positive, unit total.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    u: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, u: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_cells() {
            return Err(Error::FieldLength {
                expected: grid.n_cells(),
                found: u.len(),
            });
        }
        let total: f64 = u.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensity(format!(
                "cell masses sum to {total}, expected 1"
            )));
        }
        Ok(DensityField { grid, u })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.u
    }

    pub fn total_mass(&self) -> f64 {
        self.u.iter().sum()
    }

    /// Indices of cells flagged for removal because they carry no mass.
    pub fn zero_cells(&self) -> Vec<usize> {
        self.u
            .iter()
            .enumerate()
            .filter(|(_, &m)| m <= 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-cell density values (mass over cell area) as a cell field.
    pub fn to_density_field(&self) -> CellField {
        let area = self.grid.cell_area();
        CellField::new(self.grid, self.u.iter().map(|m| m / area).collect())
            .expect("lengths agree by construction")
    }
}

/// Discretises a density by tensor midpoint quadrature on every cell:
/// `samples_per_axis^2` evaluation points per cell. The result is rescaled so
/// the masses sum to exactly 1.
pub fn discretize_density(
    grid: &Grid,
    spec: &DensitySpec,
    samples_per_axis: usize,
) -> Result<DensityField> {
    if samples_per_axis == 0 {
        return Err(Error::InvalidArgument(
            "samples_per_axis must be at least 1".into(),
        ));
    }
    let s = samples_per_axis;
    let cell_area = grid.cell_area();
    let masses: Vec<f64> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let (k0, l0) = grid.cell_kl(i);
            let (x1_min, _) = grid.x1_range();
            let (x2_min, _) = grid.x2_range();
            let x0 = x1_min + k0 as f64 * grid.b_x1();
            let y0 = x2_min + l0 as f64 * grid.b_x2();
            let mut acc = 0.0;
            for a in 0..s {
                let x = x0 + (a as f64 + 0.5) / s as f64 * grid.b_x1();
                for b in 0..s {
                    let y = y0 + (b as f64 + 0.5) / s as f64 * grid.b_x2();
                    acc += spec.evaluate(grid, [x, y]);
                }
            }
            acc * cell_area / (s * s) as f64
        })
        .collect();
    if let Some((i, &m)) = masses.iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::ZeroMassCell { index: i, value: m });
    }
    let total: f64 = masses.iter().sum();
    DensityField::new(*grid, masses.iter().map(|m| m / total).collect())
}

/// Row-stochastic Ulam matrix between two grids.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    p: CsMat<f64>,
    q: usize,
    source_grid: Grid,
    target_grid: Grid,
}

impl TransferMatrix {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn source_grid(&self) -> &Grid {
        &self.source_grid
    }

    pub fn target_grid(&self) -> &Grid {
        &self.target_grid
    }

    /// Wraps an externally built row-stochastic matrix (used by the
    /// multi-step products). Row sums are validated.
    pub fn from_matrix(p: CsMat<f64>, src: Grid, dst: Grid, q: usize) -> Result<Self> {
        if p.rows() != src.n_cells() || p.cols() != dst.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "transfer matrix is {}x{}, grids have {} and {} cells",
                p.rows(),
                p.cols(),
                src.n_cells(),
                dst.n_cells()
            )));
        }
        let tm = TransferMatrix {
            p,
            q,
            source_grid: src,
            target_grid: dst,
        };
        tm.validate_row_sums(1e-12)?;
        Ok(tm)
    }

    fn validate_row_sums(&self, tol: f64) -> Result<()> {
        let indptr = self.p.indptr();
        let ip = indptr.raw_storage();
        let dat = self.p.data();
        for i in 0..self.p.rows() {
            let s: f64 = dat[ip[i]..ip[i + 1]].iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of the transfer matrix sums to {s}"
                )));
            }
        }
        Ok(())
    }

    /// Exact sparse product realising the composed map `self` then `next`.
    pub fn compose(&self, next: &TransferMatrix) -> Result<TransferMatrix> {
        if self.target_grid != next.source_grid {
            return Err(Error::DimensionMismatch(
                "composition requires matching intermediate grids".into(),
            ));
        }
        let p = &self.p * &next.p;
        TransferMatrix::from_matrix(p, self.source_grid, next.target_grid, self.q * next.q)
    }
}

/// Estimates the Ulam matrix for `map` with `q_points` test points per cell,
/// laid out as a sqrt(Q) x sqrt(Q) interior lattice. Deterministic for fixed
/// inputs. Fails if a test point's image escapes a reflecting target axis.
pub fn estimate_transfer_matrix(
    src: &Grid,
    dst: &Grid,
    map: &MapSpec,
    q_points: usize,
) -> Result<TransferMatrix> {
    let side = (q_points as f64).sqrt().round() as usize;
    if side == 0 || side * side != q_points {
        return Err(Error::InvalidArgument(format!(
            "Q = {q_points} is not a perfect square"
        )));
    }
    let rows: Vec<std::result::Result<Vec<(usize, f64)>, usize>> = (0..src.n_cells())
        .into_par_iter()
        .map(|i| {
            let (k0, l0) = src.cell_kl(i);
            let (x1_min, _) = src.x1_range();
            let (x2_min, _) = src.x2_range();
            let x0 = x1_min + k0 as f64 * src.b_x1();
            let y0 = x2_min + l0 as f64 * src.b_x2();
            let mut counts: Vec<(usize, u32)> = Vec::new();
            for a in 0..side {
                let x = x0 + (a as f64 + 0.5) / side as f64 * src.b_x1();
                for b in 0..side {
                    let y = y0 + (b as f64 + 0.5) / side as f64 * src.b_x2();
                    let image = map.evaluate([x, y]);
                    let Some(j) = dst.cell_of_point(image) else {
                        return Err(i);
                    };
                    match counts.binary_search_by_key(&j, |e| e.0) {
                        Ok(pos) => counts[pos].1 += 1,
                        Err(pos) => counts.insert(pos, (j, 1)),
                    }
                }
            }
            Ok(counts
                .into_iter()
                .map(|(j, c)| (j, c as f64 / q_points as f64))
                .collect())
        })
        .collect();
    let mut row_entries = Vec::with_capacity(rows.len());
    for r in rows {
        match r {
            Ok(entries) => row_entries.push(entries),
            Err(cell) => {
                return Err(Error::EscapedDomain {
                    cell,
                    point: src.cell_center(cell),
                })
            }
        }
    }
    let p = sparse::csr_from_rows(dst.n_cells(), &row_entries);
    Ok(TransferMatrix {
        p,
        q: q_points,
        source_grid: *src,
        target_grid: *dst,
    })
}

/// Pushes a density forward: `v = P^T u`.
pub fn pushforward_density(tm: &TransferMatrix, u: &DensityField) -> Result<DensityField> {
    if u.grid() != tm.source_grid() {
        return Err(Error::DimensionMismatch(
            "density lives on a different grid than the transfer matrix".into(),
        ));
    }
    let v = sparse::matvec_transpose(&tm.p, u.masses());
    // do not renormalise: mass conservation is checked by the caller's tests
    DensityField::new(tm.target_grid, v)
}

/// The column-stochastic normalised matrix `P~` with `P~_ij = P_ij u_i / v_j`.
#[derive(Debug, Clone)]
pub struct NormalizedTransfer {
    p_tilde: CsMat<f64>,
    source_grid: Grid,
    target_grid: Grid,
}

impl NormalizedTransfer {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.p_tilde
    }

    pub fn source_grid(&self) -> &Grid {
        &self.source_grid
    }

    pub fn target_grid(&self) -> &Grid {
        &self.target_grid
    }

    /// Push-forward action on an observable: `P~^T f`.
    pub fn pushforward_field(&self, f: &[f64]) -> Vec<f64> {
        sparse::matvec_transpose(&self.p_tilde, f)
    }
}

/// Forms `P~` from `P`, `u` and `v`. Requires `v = P^T u` componentwise to
/// 1e-10 and strictly positive `v`.
pub fn normalize_transfer(
    tm: &TransferMatrix,
    u: &DensityField,
    v: &DensityField,
) -> Result<NormalizedTransfer> {
    if u.grid() != tm.source_grid() || v.grid() != tm.target_grid() {
        return Err(Error::DimensionMismatch(
            "density grids do not match the transfer matrix".into(),
        ));
    }
    let check = sparse::matvec_transpose(&tm.p, u.masses());
    for (j, (&cj, &vj)) in check.iter().zip(v.masses()).enumerate() {
        if (cj - vj).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "v is not the push-forward of u: component {j} differs by {:.3e}",
                (cj - vj).abs()
            )));
        }
        if vj <= 0.0 {
            return Err(Error::ZeroMassCell {
                index: j,
                value: vj,
            });
        }
    }
    let um = u.masses();
    let vm = v.masses();
    let mut p_tilde = tm.p.clone();
    let indptr = p_tilde.indptr().raw_storage().to_vec();
    let indices = p_tilde.indices().to_vec();
    {
        let data = p_tilde.data_mut();
        for i in 0..um.len() {
            for t in indptr[i]..indptr[i + 1] {
                data[t] *= um[i] / vm[indices[t]];
            }
        }
    }
    Ok(NormalizedTransfer {
        p_tilde,
        source_grid: tm.source_grid,
        target_grid: tm.target_grid,
    })
}
