//! Diffusion kernels, the mollified transfer operator and its small-radius
//! expansion check.
//!
//! The mollified operator sandwiches the Ulam matrix between two radius-eps
//! diffusion applications and renormalises by the diffused density. Its
//! composition `L*_eps L_eps` expands as `I + c eps^2 (L_mu-form + pushed
//! L_nu-form) + O(eps^3)` where `c` is the kernel's second moment, i.e. the
//! eps^2 coefficient is `c` times the *unscaled two-term* dynamic Laplacian
//! (twice the half-convention operator). The defect routine compares against
//! exactly that combination.

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid, Point};
use crate::laplacian::DynOperator;
use crate::sparse;
use crate::transfer::{DensityField, TransferMatrix};
use rayon::prelude::*;
use sprs::CsMat;

/// Radial mollifier profile with unit mass on the unit disk.
#[derive(Debug, Clone)]
pub struct Kernel {
    normalization: f64,
    second_moment: f64,
}

impl Kernel {
    /// The built-in Epanechnikov-type profile `Q(s) = a (1 - s^2)` for
    /// `s < 1`, with `a = 2/pi` fixing unit mass on the unit disk.
    pub fn epanechnikov() -> Self {
        let normalization = 2.0 / std::f64::consts::PI;
        let mut k = Kernel {
            normalization,
            second_moment: 0.0,
        };
        k.second_moment = kernel_second_moment(&k);
        k
    }

    /// Profile value at radius `s` (unit-scaled).
    pub fn profile(&self, s: f64) -> f64 {
        if s < 1.0 {
            self.normalization * (1.0 - s * s)
        } else {
            0.0
        }
    }

    /// The eps-scaled planar kernel `eps^-2 Q(d / eps)`.
    pub fn scaled(&self, d: f64, eps: f64) -> f64 {
        self.profile(d / eps) / (eps * eps)
    }

    /// Cached second moment `c`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }
}

/// Second moment `int x1^2 Q(|x|) dl` over the unit disk by polar tensor
/// quadrature (midpoint in radius, uniform in angle; the angular factor is
/// integrated exactly by symmetry of the trigonometric sum).
pub fn kernel_second_moment(k: &Kernel) -> f64 {
    moment_quadrature(k, |theta| theta.cos() * theta.cos())
}

/// Cross moment `int x1 x2 Q(|x|) dl`; vanishes by radial symmetry.
pub fn kernel_cross_moment(k: &Kernel) -> f64 {
    moment_quadrature(k, |theta| theta.cos() * theta.sin())
}

fn moment_quadrature(k: &Kernel, angular: impl Fn(f64) -> f64) -> f64 {
    let nr = 20_000;
    let nt = 64;
    let dr = 1.0 / nr as f64;
    let dt = 2.0 * std::f64::consts::PI / nt as f64;
    let radial: f64 = (0..nr)
        .map(|i| {
            let r = (i as f64 + 0.5) * dr;
            r * r * k.profile(r) * r * dr
        })
        .sum();
    let angle: f64 = (0..nt).map(|j| angular((j as f64 + 0.5) * dt) * dt).sum();
    radial * angle
}

/// Sparse diffusion matrix: row `i` holds `Q_eps(dist(c_i, c_j)) * area`,
/// renormalised to sum to one (quadrature correction).
#[derive(Debug, Clone)]
pub struct DiffusionMatrix {
    matrix: CsMat<f64>,
    eps: f64,
    grid: Grid,
}

impl DiffusionMatrix {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        sparse::matvec(&self.matrix, f)
    }
}

/// Builds the diffusion matrix for radius `eps`. The radius must resolve the
/// grid (at least two cell sides) and stay below half of every period.
pub fn build_diffusion_matrix(grid: &Grid, kernel: &Kernel, eps: f64) -> Result<DiffusionMatrix> {
    let min_eps = 2.0 * grid.b_x1().max(grid.b_x2());
    if eps < min_eps {
        return Err(Error::InvalidArgument(format!(
            "diffusion radius {eps} under-resolves the grid; refine the grid or take eps >= {min_eps}"
        )));
    }
    for period in [grid.period_x1(), grid.period_x2()].into_iter().flatten() {
        if eps > 0.5 * period {
            return Err(Error::InvalidArgument(format!(
                "diffusion radius {eps} exceeds half the domain period {period}"
            )));
        }
    }
    let reach1 = (eps / grid.b_x1()).ceil() as isize + 1;
    let reach2 = (eps / grid.b_x2()).ceil() as isize + 1;
    let area = grid.cell_area();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let ci = grid.cell_center(i);
            let (k0, l0) = grid.cell_kl(i);
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for dl in -reach2..=reach2 {
                let lq = l0 as isize + dl;
                let l1 = if grid.periodic_x2() {
                    lq.rem_euclid(grid.l() as isize) as usize
                } else if (0..grid.l() as isize).contains(&lq) {
                    lq as usize
                } else {
                    continue;
                };
                for dk in -reach1..=reach1 {
                    let kq = k0 as isize + dk;
                    let k1 = if grid.periodic_x1() {
                        kq.rem_euclid(grid.k() as isize) as usize
                    } else if (0..grid.k() as isize).contains(&kq) {
                        kq as usize
                    } else {
                        continue;
                    };
                    let j = grid.cell_index(k1, l1);
                    let d = grid.min_image_distance(ci, grid.cell_center(j));
                    let w = kernel.scaled(d, eps) * area;
                    if w > 0.0 {
                        entries.push((j, w));
                    }
                }
            }
            entries.sort_by_key(|e| e.0);
            let total: f64 = entries.iter().map(|e| e.1).sum();
            for e in &mut entries {
                e.1 /= total;
            }
            entries
        })
        .collect();
    Ok(DiffusionMatrix {
        matrix: sparse::csr_from_rows(grid.n_cells(), &rows),
        eps,
        grid: *grid,
    })
}

/// The normalised mollified operator pair, kept in factored form.
///
/// Function actions (all vectors are cell fields on the source grid unless
/// noted):
/// `L_eps f  = [D_after P^T D_before (u . f)] / v_eps` (field on the target),
/// `L*_eps g = D_before^T P D_after^T g`.
pub struct MollifiedPair {
    d_before: CsMat<f64>,
    d_before_t: CsMat<f64>,
    d_after: CsMat<f64>,
    d_after_t: CsMat<f64>,
    p: CsMat<f64>,
    p_t: CsMat<f64>,
    u: Vec<f64>,
    v_eps: Vec<f64>,
    eps: f64,
    source_grid: Grid,
    target_grid: Grid,
}

/// Forms the mollified pair from the two diffusion matrices, the Ulam matrix
/// and the source density. Fails if the diffused push-forward density
/// vanishes anywhere.
pub fn mollified_operator(
    d_after: &DiffusionMatrix,
    d_before: &DiffusionMatrix,
    tm: &TransferMatrix,
    u: &DensityField,
) -> Result<MollifiedPair> {
    if d_before.grid() != tm.source_grid() || d_after.grid() != tm.target_grid() {
        return Err(Error::DimensionMismatch(
            "diffusion grids do not match the transfer matrix".into(),
        ));
    }
    if u.grid() != tm.source_grid() {
        return Err(Error::DimensionMismatch(
            "density grid does not match the transfer matrix".into(),
        ));
    }
    let p = tm.matrix().clone();
    let p_t = sparse::transpose(&p);
    let db = d_before.matrix().clone();
    let db_t = sparse::transpose(&db);
    let da = d_after.matrix().clone();
    let da_t = sparse::transpose(&da);
    // v_eps = D_after P^T D_before u
    let v_eps = sparse::matvec(&da, &sparse::matvec(&p_t, &sparse::matvec(&db, u.masses())));
    if let Some((j, &vj)) = v_eps.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::ZeroMassCell {
            index: j,
            value: vj,
        });
    }
    Ok(MollifiedPair {
        d_before: db,
        d_before_t: db_t,
        d_after: da,
        d_after_t: da_t,
        p,
        p_t,
        u: u.masses().to_vec(),
        v_eps,
        eps: d_before.eps(),
        source_grid: *tm.source_grid(),
        target_grid: *tm.target_grid(),
    })
}

impl MollifiedPair {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn source_grid(&self) -> &Grid {
        &self.source_grid
    }

    pub fn target_grid(&self) -> &Grid {
        &self.target_grid
    }

    /// The diffused push-forward density `v_eps` (masses on the target grid).
    pub fn v_eps(&self) -> &[f64] {
        &self.v_eps
    }

    /// `L_eps f`: push an observable forward through the mollified operator.
    pub fn l_apply(&self, f: &[f64]) -> Vec<f64> {
        let uf: Vec<f64> = f.iter().zip(&self.u).map(|(a, b)| a * b).collect();
        let w = sparse::matvec(
            &self.d_after,
            &sparse::matvec(&self.p_t, &sparse::matvec(&self.d_before, &uf)),
        );
        w.iter().zip(&self.v_eps).map(|(a, b)| a / b).collect()
    }

    /// `L*_eps g`: pull an observable back.
    pub fn l_star_apply(&self, g: &[f64]) -> Vec<f64> {
        sparse::matvec(
            &self.d_before_t,
            &sparse::matvec(&self.p, &sparse::matvec(&self.d_after_t, g)),
        )
    }

    /// `L*_eps L_eps f` on source fields.
    pub fn l_star_l_apply(&self, f: &[f64]) -> Vec<f64> {
        self.l_star_apply(&self.l_apply(f))
    }

    /// Leading singular value and u-normalised right singular vector of
    /// `L_eps` in the weighted spaces, by power iteration on `L* L`.
    pub fn leading_singular_pair(&self, iterations: usize) -> (f64, Vec<f64>) {
        self.singular_by_power(iterations, None)
    }

    /// Second singular pair, deflating the constant vector in the u-inner
    /// product.
    pub fn second_singular_pair(&self, iterations: usize) -> (f64, Vec<f64>) {
        let ones = vec![1.0; self.u.len()];
        self.singular_by_power(iterations, Some(&ones))
    }

    fn singular_by_power(&self, iterations: usize, deflate: Option<&[f64]>) -> (f64, Vec<f64>) {
        let n = self.u.len();
        let dot_u = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .zip(&self.u)
                .map(|((x, y), m)| x * y * m)
                .sum()
        };
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.37 * ((i as f64) * 0.7).sin())
            .collect();
        let mut sigma2 = 0.0;
        for _ in 0..iterations {
            if let Some(d) = deflate {
                let c = dot_u(&x, d) / dot_u(d, d);
                for (xi, di) in x.iter_mut().zip(d) {
                    *xi -= c * di;
                }
            }
            let nx = dot_u(&x, &x).sqrt();
            if nx == 0.0 {
                break;
            }
            for xi in &mut x {
                *xi /= nx;
            }
            let cx = self.l_star_l_apply(&x);
            sigma2 = dot_u(&cx, &x);
            x = cx;
        }
        let nx = dot_u(&x, &x).sqrt();
        if nx > 0.0 {
            for xi in &mut x {
                *xi /= nx;
            }
        }
        (sigma2.max(0.0).sqrt(), x)
    }

    /// Explicit matrices `(L_eps, L*_eps)` in function action (small grids).
    pub fn to_csr(&self) -> (CsMat<f64>, CsMat<f64>) {
        let scale_rows = |m: &CsMat<f64>, s: &[f64]| -> CsMat<f64> {
            let mut out = m.clone();
            let indptr = out.indptr().raw_storage().to_vec();
            let data = out.data_mut();
            for i in 0..indptr.len() - 1 {
                for t in indptr[i]..indptr[i + 1] {
                    data[t] *= s[i];
                }
            }
            out
        };
        let scale_cols = |m: &CsMat<f64>, s: &[f64]| -> CsMat<f64> {
            let mut out = m.clone();
            let indices = out.indices().to_vec();
            let data = out.data_mut();
            for (t, &j) in indices.iter().enumerate() {
                data[t] *= s[j];
            }
            out
        };
        // L_eps = diag(1/v_eps) D_after P^T D_before diag(u)
        let inv_v: Vec<f64> = self.v_eps.iter().map(|v| 1.0 / v).collect();
        let core = &(&self.d_after * &self.p_t) * &self.d_before;
        let l = scale_cols(&scale_rows(&core, &inv_v), &self.u);
        let l_star = &(&self.d_before_t * &self.p) * &self.d_after_t;
        (l, l_star)
    }
}

/// Sup-norm defect of the second-order expansion for each mollified pair:
/// `max over interior cells of |(L* L - I) f / eps^2 - c * A_raw f|`, where
/// `A_raw` is the unscaled two-term dynamic Laplacian carried by `op`.
/// Interior means farther than `eps` from every reflecting boundary and not
/// excluded by the optional mask (used to avoid map-discontinuity seams).
pub fn convergence_defect(
    f: &CellField,
    pairs: &[MollifiedPair],
    op: &DynOperator,
    c: f64,
    excluded: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let grid = *f.grid();
    if op.grid() != &grid {
        return Err(Error::DimensionMismatch(
            "operator grid does not match the field".into(),
        ));
    }
    if let Some(mask) = excluded {
        if mask.len() != grid.n_cells() {
            return Err(Error::FieldLength {
                expected: grid.n_cells(),
                found: mask.len(),
            });
        }
    }
    // unscaled two-term action: divide out the convention/average factor
    let raw: Vec<f64> = op
        .apply(f.values())
        .into_iter()
        .map(|v| v / op.scale())
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let eps = pair.eps();
        let ll = pair.l_star_l_apply(f.values());
        let mut worst = 0.0f64;
        for i in 0..grid.n_cells() {
            if !cell_is_interior(&grid, i, eps) {
                continue;
            }
            if excluded.map(|m| m[i]).unwrap_or(false) {
                continue;
            }
            let defect = ((ll[i] - f.values()[i]) / (eps * eps) - c * raw[i]).abs();
            worst = worst.max(defect);
        }
        out.push(worst);
    }
    Ok(out)
}

fn cell_is_interior(grid: &Grid, i: usize, eps: f64) -> bool {
    let c: Point = grid.cell_center(i);
    if !grid.periodic_x1() {
        let (lo, hi) = grid.x1_range();
        if c[0] - lo <= eps || hi - c[0] <= eps {
            return false;
        }
    }
    if !grid.periodic_x2() {
        let (lo, hi) = grid.x2_range();
        if c[1] - lo <= eps || hi - c[1] <= eps {
            return false;
        }
    }
    true
}
