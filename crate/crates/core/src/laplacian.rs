//! Finite-difference assembly of weighted and dynamic Laplacians.
//!
//! The weighted Laplacian uses central differences of the flux `u grad f`,
//! which produces a wide stencil coupling cells two apart per axis. Ghost
//! indices on reflecting axes are folded back by the symmetric reflection of
//! each parity sublattice (index 0 -> 2, index -1 -> 1 in 1-based terms, and
//! mirrored at the far edge), applied to both field and weight lookups.
//!
//! The dynamic operator is kept in factored form `scale * sum_i P_i L_i Pt_i`
//! so that matrix-vector products stay cheap; an explicit CSR matrix can be
//! materialised on demand.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sparse;
use crate::transfer::{DensityField, NormalizedTransfer, TransferMatrix};
use rayon::prelude::*;
use sprs::CsMat;

/// Scaling convention for the dynamic Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `0.5 * (L_mu + P L_nu P~^T)`; identity dynamics reduce to `L_mu`.
    WithHalf,
    /// `L_mu + P L_nu P~^T` as assembled.
    Raw,
}

/// One term `P L P~^T` of a factored dynamic operator; `None` transport means
/// the identity (the step-zero term).
#[derive(Debug, Clone)]
struct FactoredTerm {
    p: Option<CsMat<f64>>,
    p_t: Option<CsMat<f64>>,
    l: CsMat<f64>,
    l_t: CsMat<f64>,
    pt_t: Option<CsMat<f64>>,
    pt: Option<CsMat<f64>>,
}

impl FactoredTerm {
    fn identity_transport(l: CsMat<f64>) -> Self {
        let l_t = sparse::transpose(&l);
        FactoredTerm {
            p: None,
            p_t: None,
            l,
            l_t,
            pt_t: None,
            pt: None,
        }
    }

    fn with_transport(p: CsMat<f64>, p_tilde: CsMat<f64>, l: CsMat<f64>) -> Self {
        let l_t = sparse::transpose(&l);
        let p_t = sparse::transpose(&p);
        let pt_t = sparse::transpose(&p_tilde);
        FactoredTerm {
            p: Some(p),
            p_t: Some(p_t),
            l,
            l_t,
            pt_t: Some(pt_t),
            pt: Some(p_tilde),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let stage = match &self.pt_t {
            Some(m) => sparse::matvec(m, x),
            None => x.to_vec(),
        };
        let mid = sparse::matvec(&self.l, &stage);
        match &self.p {
            Some(m) => sparse::matvec(m, &mid),
            None => mid,
        }
    }

    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let stage = match &self.p_t {
            Some(m) => sparse::matvec(m, x),
            None => x.to_vec(),
        };
        let mid = sparse::matvec(&self.l_t, &stage);
        match &self.pt {
            Some(m) => sparse::matvec(m, &mid),
            None => mid,
        }
    }

    fn to_csr(&self) -> CsMat<f64> {
        let right = match &self.pt_t {
            Some(pt_t) => &self.l * pt_t,
            None => self.l.clone(),
        };
        match &self.p {
            Some(p) => p * &right,
            None => right,
        }
    }
}

/// A discretised (dynamic) Laplace operator on a grid.
#[derive(Debug, Clone)]
pub struct DynOperator {
    grid: Grid,
    terms: Vec<FactoredTerm>,
    scale: f64,
    convention: Convention,
    steps: usize,
}

impl DynOperator {
    pub fn dim(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Number of time steps averaged (1 for a single static Laplacian).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for term in &self.terms {
            let t = term.apply(x);
            for (yi, ti) in y.iter_mut().zip(&t) {
                *yi += ti;
            }
        }
        for yi in &mut y {
            *yi *= self.scale;
        }
        y
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for term in &self.terms {
            let t = term.apply_transpose(x);
            for (yi, ti) in y.iter_mut().zip(&t) {
                *yi += ti;
            }
        }
        for yi in &mut y {
            *yi *= self.scale;
        }
        y
    }

    /// Materialises the operator as a CSR matrix.
    pub fn to_csr(&self) -> CsMat<f64> {
        let mut acc: Option<CsMat<f64>> = None;
        for term in &self.terms {
            let m = term.to_csr();
            acc = Some(match acc {
                Some(a) => &a + &m,
                None => m,
            });
        }
        let mut m = acc.expect("operator has at least one term");
        m.map_inplace(|v| v * self.scale);
        m
    }

    /// Cheap upper bound for the infinity norm. Transport factors are
    /// (column-)stochastic, so each term is bounded by its Laplacian factor.
    pub fn inf_norm_bound(&self) -> f64 {
        self.scale
            * self
                .terms
                .iter()
                .map(|t| sparse::inf_norm(&t.l))
                .sum::<f64>()
    }

    /// `max |A 1|`: how far constants are from the kernel.
    pub fn kernel_defect(&self) -> f64 {
        let ones = vec![1.0; self.dim()];
        self.apply(&ones)
            .iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Resolves a possibly out-of-range 0-based index along one axis: wraps on a
/// periodic axis, shifts two cells inward (the parity-sublattice reflection)
/// on a reflecting axis.
#[inline]
fn resolve(idx: isize, count: usize, periodic: bool) -> usize {
    let n = count as isize;
    let r = if periodic {
        idx.rem_euclid(n)
    } else if idx < 0 {
        idx + 2
    } else if idx >= n {
        idx - 2
    } else {
        idx
    };
    debug_assert!((0..n).contains(&r));
    r as usize
}

/// Assembles the weighted Laplacian for the density `u` on its grid.
pub fn assemble_weighted_laplacian(grid: &Grid, u: &DensityField) -> Result<DynOperator> {
    if u.grid() != grid {
        return Err(Error::DimensionMismatch(
            "density grid does not match the assembly grid".into(),
        ));
    }
    if let Some((i, &m)) = u.masses().iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::ZeroMassCell { index: i, value: m });
    }
    let k = grid.k();
    let l = grid.l();
    let um = u.masses();
    let inv_4b1 = 1.0 / (4.0 * grid.b_x1() * grid.b_x1());
    let inv_4b2 = 1.0 / (4.0 * grid.b_x2() * grid.b_x2());
    let p1 = grid.periodic_x1();
    let p2 = grid.periodic_x2();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let (k0, l0) = grid.cell_kl(i);
            let uc = um[i];
            let ki = k0 as isize;
            let li = l0 as isize;
            let u_at =
                |kk: isize, ll: isize| um[grid.cell_index(resolve(kk, k, p1), resolve(ll, l, p2))];
            let f_at =
                |kk: isize, ll: isize| grid.cell_index(resolve(kk, k, p1), resolve(ll, l, p2));
            // (column, coefficient) contributions, duplicates merged below
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut push = |col: usize, val: f64| match entries.binary_search_by_key(&col, |e| e.0)
            {
                Ok(pos) => entries[pos].1 += val,
                Err(pos) => entries.insert(pos, (col, val)),
            };
            let c_e = u_at(ki + 1, li) * inv_4b1 / uc;
            let c_w = u_at(ki - 1, li) * inv_4b1 / uc;
            let c_n = u_at(ki, li + 1) * inv_4b2 / uc;
            let c_s = u_at(ki, li - 1) * inv_4b2 / uc;
            push(f_at(ki + 2, li), c_e);
            push(f_at(ki - 2, li), c_w);
            push(f_at(ki, li + 2), c_n);
            push(f_at(ki, li - 2), c_s);
            push(i, -(c_e + c_w + c_n + c_s));
            entries
        })
        .collect();
    let matrix = sparse::csr_from_rows(grid.n_cells(), &rows);
    Ok(DynOperator {
        grid: *grid,
        terms: vec![FactoredTerm::identity_transport(matrix)],
        scale: 1.0,
        convention: Convention::Raw,
        steps: 1,
    })
}

/// Flux-form (compact) weighted Laplacian: conservative second-order scheme
/// with face weights `u_{k+1/2} = (u_k + u_{k+1})/2` and single-cell reach.
///
/// The wide central-difference stencil above cannot see the parity
/// sublattices (its symbol vanishes at the alias frequency), which lets
/// eigenvectors carry alias-scale content at no energy cost. Under strongly
/// expanding dynamics the push-forward of a test function filaments below
/// the grid scale, and the wide scheme then underprices exactly the fields a
/// coherent-set computation must penalise. This compact scheme prices the
/// whole frequency band monotonically and is the discretisation the spectral
/// pipeline solves; the wide scheme remains the reference assembly.
pub fn assemble_weighted_laplacian_flux(grid: &Grid, u: &DensityField) -> Result<DynOperator> {
    if u.grid() != grid {
        return Err(Error::DimensionMismatch(
            "density grid does not match the assembly grid".into(),
        ));
    }
    if let Some((i, &m)) = u.masses().iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::ZeroMassCell { index: i, value: m });
    }
    let k = grid.k();
    let l = grid.l();
    let um = u.masses();
    let inv_b1 = 1.0 / (grid.b_x1() * grid.b_x1());
    let inv_b2 = 1.0 / (grid.b_x2() * grid.b_x2());
    let p1 = grid.periodic_x1();
    let p2 = grid.periodic_x2();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let (k0, l0) = grid.cell_kl(i);
            let uc = um[i];
            // neighbour index along one axis, None when the face is a wall
            let step = |q: usize, count: usize, periodic: bool, up: bool| -> Option<usize> {
                if up {
                    if q + 1 < count {
                        Some(q + 1)
                    } else if periodic {
                        Some(0)
                    } else {
                        None
                    }
                } else if q > 0 {
                    Some(q - 1)
                } else if periodic {
                    Some(count - 1)
                } else {
                    None
                }
            };
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut push = |col: usize, val: f64| match entries.binary_search_by_key(&col, |e| e.0)
            {
                Ok(pos) => entries[pos].1 += val,
                Err(pos) => entries.insert(pos, (col, val)),
            };
            let mut diag = 0.0;
            for (up, horizontal) in [(true, true), (false, true), (true, false), (false, false)] {
                let neighbour = if horizontal {
                    step(k0, k, p1, up).map(|kq| grid.cell_index(kq, l0))
                } else {
                    step(l0, l, p2, up).map(|lq| grid.cell_index(k0, lq))
                };
                // zero flux through reflecting walls
                let Some(j) = neighbour else { continue };
                let face_u = 0.5 * (uc + um[j]);
                let c = face_u * if horizontal { inv_b1 } else { inv_b2 } / uc;
                push(j, c);
                diag -= c;
            }
            push(i, diag);
            entries
        })
        .collect();
    let matrix = sparse::csr_from_rows(grid.n_cells(), &rows);
    Ok(DynOperator {
        grid: *grid,
        terms: vec![FactoredTerm::identity_transport(matrix)],
        scale: 1.0,
        convention: Convention::Raw,
        steps: 1,
    })
}

/// Combines the two weighted Laplacians with the transfer factors into the
/// dynamic Laplacian `L_mu + P L_nu P~^T`, optionally halved.
pub fn assemble_dynamic_laplacian(
    l_mu: &DynOperator,
    l_nu: &DynOperator,
    tm: &TransferMatrix,
    nt: &NormalizedTransfer,
    convention: Convention,
) -> Result<DynOperator> {
    let n = l_mu.dim();
    if l_nu.dim() != tm.target_grid().n_cells()
        || tm.source_grid().n_cells() != n
        || nt.source_grid() != tm.source_grid()
        || nt.target_grid() != tm.target_grid()
    {
        return Err(Error::DimensionMismatch(
            "dynamic Laplacian factors do not agree in size".into(),
        ));
    }
    let (mu_matrix, nu_matrix) = match (single_matrix(l_mu), single_matrix(l_nu)) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => {
            return Err(Error::InvalidArgument(
                "dynamic assembly expects plain weighted Laplacians as inputs".into(),
            ))
        }
    };
    let scale = match convention {
        Convention::WithHalf => 0.5,
        Convention::Raw => 1.0,
    };
    Ok(DynOperator {
        grid: *l_mu.grid(),
        terms: vec![
            FactoredTerm::identity_transport(mu_matrix),
            FactoredTerm::with_transport(tm.matrix().clone(), nt.matrix().clone(), nu_matrix),
        ],
        scale,
        convention,
        steps: 1,
    })
}

fn single_matrix(op: &DynOperator) -> Option<&CsMat<f64>> {
    if op.terms.len() == 1 && op.terms[0].p.is_none() && op.scale == 1.0 {
        Some(&op.terms[0].l)
    } else {
        None
    }
}

/// One summand of the multi-step average: the cumulative transport to step
/// `i` (identity for the first entry) and the weighted Laplacian built with
/// the push-forward density at that step.
pub struct AveragedTerm {
    pub transport: Option<(TransferMatrix, NormalizedTransfer)>,
    pub laplacian: DynOperator,
}

/// Time-discrete average `(1/k) sum_i P_i L_i P~_i^T`. The first term must
/// carry the identity transport.
pub fn assemble_multistep(terms: Vec<AveragedTerm>) -> Result<DynOperator> {
    if terms.is_empty() {
        return Err(Error::InvalidArgument(
            "multi-step average needs at least one term".into(),
        ));
    }
    if terms[0].transport.is_some() {
        return Err(Error::InvalidArgument(
            "the first multi-step term must use the identity transport".into(),
        ));
    }
    let grid = *terms[0].laplacian.grid();
    let k = terms.len();
    let mut factored = Vec::with_capacity(k);
    for term in terms {
        let l = match single_matrix(&term.laplacian) {
            Some(m) => m.clone(),
            None => {
                return Err(Error::InvalidArgument(
                    "multi-step terms expect plain weighted Laplacians".into(),
                ))
            }
        };
        match term.transport {
            None => factored.push(FactoredTerm::identity_transport(l)),
            Some((tm, nt)) => {
                if tm.source_grid().n_cells() != grid.n_cells() {
                    return Err(Error::DimensionMismatch(
                        "multi-step transport does not match the base grid".into(),
                    ));
                }
                factored.push(FactoredTerm::with_transport(
                    tm.matrix().clone(),
                    nt.matrix().clone(),
                    l,
                ));
            }
        }
    }
    Ok(DynOperator {
        grid,
        terms: factored,
        scale: 1.0 / k as f64,
        convention: Convention::WithHalf,
        steps: k,
    })
}
