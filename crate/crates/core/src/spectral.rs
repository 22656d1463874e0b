//! Eigensolver for the dynamic Laplacian.
//!
//! The operator is self-adjoint in the u-weighted inner product up to Ulam
//! discretisation noise, so the default path symmetrises the similarity
//! transform `D_u^{1/2} A D_u^{-1/2}` and runs Lanczos with full
//! reorthogonalisation on the shifted matrix `S + beta I`. The constant
//! kernel direction is deflated analytically and reported as the first pair
//! with its honestly computed Rayleigh quotient and residual.
//!
//! The wide finite-difference stencil decouples parity sublattices, which can
//! produce additional exact zero eigenvalues with sign-alternating
//! eigenvectors (always for identity dynamics, and whenever the map preserves
//! grid rows or columns exactly). These are discretisation artifacts with no
//! continuum counterpart; the solver sets them aside and reports their count
//! instead of numbering them among the leading eigenvalues.
//!
//! A nonsymmetric Arnoldi path exists purely as a diagnostic for comparing
//! against the complex eigenvalue artifacts of the unsymmetrised matrix.

use crate::error::{Error, Result};
use crate::grid::CellField;
use crate::laplacian::DynOperator;
use crate::transfer::DensityField;
use crate::tridiag;
use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use sprs::CsMat;

/// The u-weighted symmetrisation of a dynamic operator, applied matrix-free.
pub struct SymmetrizedOperator {
    op: DynOperator,
    sqrt_u: Vec<f64>,
    inv_sqrt_u: Vec<f64>,
}

impl SymmetrizedOperator {
    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &DynOperator {
        &self.op
    }

    /// Back-transform applied to a symmetrised eigenvector.
    pub fn back_transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.inv_sqrt_u).map(|(a, b)| a * b).collect()
    }

    /// `S x` with `S = (B + B^T)/2`, `B = D^{1/2} A D^{-1/2}`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (t1, t2) = self.split_apply(x);
        t1.iter().zip(&t2).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// `(B - B^T)/2 x`, the discarded skew part (diagnostic).
    pub fn apply_skew(&self, x: &[f64]) -> Vec<f64> {
        let (t1, t2) = self.split_apply(x);
        t1.iter().zip(&t2).map(|(a, b)| 0.5 * (a - b)).collect()
    }

    fn split_apply(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = x.iter().zip(&self.inv_sqrt_u).map(|(v, w)| v * w).collect();
        let mut t1 = self.op.apply(&a);
        for (v, w) in t1.iter_mut().zip(&self.sqrt_u) {
            *v *= w;
        }
        let c: Vec<f64> = x.iter().zip(&self.sqrt_u).map(|(v, w)| v * w).collect();
        let mut t2 = self.op.apply_transpose(&c);
        for (v, w) in t2.iter_mut().zip(&self.inv_sqrt_u) {
            *v *= w;
        }
        (t1, t2)
    }

    /// Materialises `S` (small grids and diagnostics only).
    pub fn to_csr(&self) -> CsMat<f64> {
        let mut b = self.op.to_csr();
        let indptr = b.indptr().raw_storage().to_vec();
        let indices = b.indices().to_vec();
        {
            let data = b.data_mut();
            for i in 0..indptr.len() - 1 {
                for t in indptr[i]..indptr[i + 1] {
                    data[t] *= self.sqrt_u[i] * self.inv_sqrt_u[indices[t]];
                }
            }
        }
        let bt = crate::sparse::transpose(&b);
        let sum = &b + &bt;
        sum.map(|v| 0.5 * v)
    }

    /// Largest magnitude of `(B - B^T)/2` over probe vectors, relative to the
    /// operator scale: a cheap measure of how non-normal the discretisation
    /// is (power iteration, deterministic).
    pub fn skew_norm_estimate(&self, iterations: usize) -> f64 {
        // the skew part is antisymmetric: power-iterate on (skew^T skew)
        let n = self.dim();
        let mut x = seeded_vector(n, 0x5eed_cafe);
        normalize(&mut x);
        let mut sigma = 0.0;
        for _ in 0..iterations {
            let y = self.apply_skew(&x);
            // skew^T = -skew, so skew^T skew x = -skew(skew x)
            let mut z = self.apply_skew(&y);
            for v in &mut z {
                *v = -*v;
            }
            sigma = norm(&z).sqrt();
            x = z;
            let nn = norm(&x);
            if nn == 0.0 {
                return 0.0;
            }
            for v in &mut x {
                *v /= nn;
            }
        }
        sigma
    }

    /// Power-iteration estimate of the spectral norm of `S`.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let n = self.dim();
        let mut x = seeded_vector(n, 0x00d1_5ea5);
        normalize(&mut x);
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let y = self.apply(&x);
            lambda = dot(&x, &y).abs();
            let nn = norm(&y);
            if nn == 0.0 {
                break;
            }
            x = y;
            for v in &mut x {
                *v /= nn;
            }
        }
        lambda.max(self.op.inf_norm_bound() * 1e-12)
    }
}

/// Builds the symmetrised operator for `op` with weights `u`.
pub fn symmetrize(op: &DynOperator, u: &DensityField) -> Result<SymmetrizedOperator> {
    if u.grid() != op.grid() {
        return Err(Error::DimensionMismatch(
            "weights live on a different grid than the operator".into(),
        ));
    }
    if let Some((i, &m)) = u.masses().iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::ZeroMassCell { index: i, value: m });
    }
    let sqrt_u: Vec<f64> = u.masses().iter().map(|m| m.sqrt()).collect();
    let inv_sqrt_u: Vec<f64> = sqrt_u.iter().map(|s| 1.0 / s).collect();
    Ok(SymmetrizedOperator {
        op: op.clone(),
        sqrt_u,
        inv_sqrt_u,
    })
}

/// Options for the Lanczos eigensolver.
#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Residual target relative to the operator norm.
    pub tol: f64,
    /// Hard cap on Lanczos steps; `None` picks a dimension-aware default.
    pub max_steps: Option<usize>,
    /// Seed for the deterministic start perturbation.
    pub seed: u64,
    /// Eigenvalues within this fraction of the operator norm around zero are
    /// treated as kernel members.
    pub kernel_window: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_steps: None,
            seed: 7,
            kernel_window: 1e-8,
        }
    }
}

/// Leading eigenpairs of the (symmetrised) dynamic Laplacian.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// `lambda_1 >= lambda_2 >= ...`, `lambda_1 ~ 0`.
    pub eigenvalues: Vec<f64>,
    /// u-orthonormal eigenvectors; the first is the constant vector.
    pub eigenvectors: Vec<CellField>,
    /// `||S x - lambda x||_2` per returned pair (symmetrised residual).
    pub residuals: Vec<f64>,
    /// Whether the symmetrised operator was solved (always true here).
    pub symmetrized: bool,
    /// Number of parity-artifact zero modes set aside (not numbered above).
    pub auxiliary_kernel: usize,
    /// Lanczos steps taken.
    pub iterations: usize,
}

/// Computes the `k` algebraically largest eigenpairs of `S` (the `k` smallest
/// magnitude eigenvalues of the dynamic Laplacian). The constant direction is
/// deflated and returned first with its computed Rayleigh quotient; parity
/// zero modes are counted separately.
pub fn leading_eigenpairs(
    sym: &SymmetrizedOperator,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    let n = sym.dim();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "at least two eigenpairs are required".into(),
        ));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs from a dimension-{n} operator"
        )));
    }
    let beta_shift = 1.1 * sym.norm_estimate(60).max(f64::MIN_POSITIVE);
    let kernel_tol = opts.kernel_window * beta_shift;
    let residual_tol = opts.tol * beta_shift;
    let max_steps = opts.max_steps.unwrap_or_else(|| (n - 1).min(2200));

    // deflated exact kernel direction: constants, i.e. sqrt(u) after the
    // similarity transform
    let mut w0 = sym.sqrt_u.clone();
    normalize(&mut w0);
    let lambda1 = dot(&w0, &sym.apply(&w0));
    let r1 = {
        let mut r = sym.apply(&w0);
        for (ri, wi) in r.iter_mut().zip(&w0) {
            *ri -= lambda1 * wi;
        }
        norm(&r)
    };

    // deterministic start: all-ones plus a seeded perturbation orthogonal to
    // the ones vector, then projected off the kernel direction
    let mut v0 = vec![1.0 / (n as f64).sqrt(); n];
    let mut pert = seeded_vector(n, opts.seed);
    let ones_coef = pert.iter().sum::<f64>() / n as f64;
    for p in pert.iter_mut() {
        *p -= ones_coef;
    }
    let pn = norm(&pert);
    if pn > 0.0 {
        for (vi, pi) in v0.iter_mut().zip(&pert) {
            *vi += 0.1 * pi / pn;
        }
    }
    project_out(&mut v0, &w0);
    if norm(&v0) < 1e-12 {
        v0 = seeded_vector(n, opts.seed ^ 0xabcdef);
        project_out(&mut v0, &w0);
    }
    normalize(&mut v0);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev_top: Vec<f64> = Vec::new();
    let mut step = 0usize;
    let mut fresh_seed = opts.seed;

    loop {
        let j = alphas.len();
        if j >= max_steps || j + 1 >= n {
            // final attempt with whatever space we have
            match assemble(
                sym,
                &basis,
                &alphas,
                &betas,
                &w0,
                lambda1,
                r1,
                k,
                beta_shift,
                kernel_tol,
                residual_tol,
                j,
            )? {
                Assembled::Done(mut sol) => {
                    sol.iterations = j;
                    return Ok(sol);
                }
                Assembled::NotConverged(worst) => {
                    return Err(Error::NoConvergence {
                        iterations: j,
                        residual: worst,
                    })
                }
            }
        }

        // one Lanczos step on S + beta I
        let vj = basis[j].clone();
        let mut w = sym.apply(&vj);
        for (wi, vi) in w.iter_mut().zip(&vj) {
            *wi += beta_shift * vi;
        }
        let alpha = dot(&w, &vj);
        for (wi, vi) in w.iter_mut().zip(&vj) {
            *wi -= alpha * vi;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= beta_prev * vi;
            }
        }
        reorthogonalize(&mut w, &basis, &w0);
        reorthogonalize(&mut w, &basis, &w0);
        alphas.push(alpha);
        let beta_j = norm(&w);
        if beta_j <= 1e-13 * beta_shift {
            // invariant subspace found: try to finish, otherwise restart the
            // recurrence with a fresh deterministic direction
            match assemble(
                sym,
                &basis,
                &alphas,
                &betas,
                &w0,
                lambda1,
                r1,
                k,
                beta_shift,
                kernel_tol,
                residual_tol,
                j,
            )? {
                Assembled::Done(mut sol) => {
                    sol.iterations = alphas.len();
                    return Ok(sol);
                }
                Assembled::NotConverged(_) => {
                    fresh_seed = fresh_seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add(1);
                    let mut fresh = seeded_vector(n, fresh_seed);
                    reorthogonalize(&mut fresh, &basis, &w0);
                    reorthogonalize(&mut fresh, &basis, &w0);
                    let fresh_norm = norm(&fresh);
                    if fresh_norm < 1e-10 {
                        return Err(Error::NoConvergence {
                            iterations: alphas.len(),
                            residual: f64::NAN,
                        });
                    }
                    for v in &mut fresh {
                        *v /= fresh_norm;
                    }
                    betas.push(0.0);
                    basis.push(fresh);
                    step += 1;
                    continue;
                }
            }
        }
        for wi in &mut w {
            *wi /= beta_j;
        }
        betas.push(beta_j);
        basis.push(w);
        step += 1;

        // cheap convergence probe on Ritz values
        let interval = if step < 80 { 10 } else { 25 };
        if step % interval == 0 {
            let m = alphas.len();
            let vals = tridiag::eigenvalues(&alphas, &betas[..m - 1])?;
            let mut sorted = vals;
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top: Vec<f64> = sorted.iter().take(k + 4).cloned().collect();
            let stable = !prev_top.is_empty()
                && top.len() >= (k - 1).min(m)
                && prev_top
                    .iter()
                    .zip(&top)
                    .take(k + 1)
                    .all(|(a, b)| (a - b).abs() <= 1e-11 * beta_shift);
            prev_top = top;
            if stable {
                if let Assembled::Done(mut sol) = assemble(
                    sym,
                    &basis,
                    &alphas,
                    &betas,
                    &w0,
                    lambda1,
                    r1,
                    k,
                    beta_shift,
                    kernel_tol,
                    residual_tol,
                    m,
                )? {
                    sol.iterations = m;
                    return Ok(sol);
                }
            }
        }
    }
}

enum Assembled {
    Done(EigenSolution),
    NotConverged(f64),
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sym: &SymmetrizedOperator,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    w0: &[f64],
    lambda1: f64,
    r1: f64,
    k: usize,
    beta_shift: f64,
    kernel_tol: f64,
    residual_tol: f64,
    iterations: usize,
) -> Result<Assembled> {
    let m = alphas.len();
    if m == 0 {
        return Ok(Assembled::NotConverged(f64::INFINITY));
    }
    let (theta, z) = tridiag::eigen(alphas, &betas[..m - 1])?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| theta[b].partial_cmp(&theta[a]).unwrap());

    let n = sym.dim();
    let mut eigenvalues = vec![lambda1];
    let mut vectors: Vec<Vec<f64>> = vec![w0.to_vec()];
    let mut residuals = vec![r1];
    let mut auxiliary = 0usize;
    let mut worst: f64 = r1;

    for &c in &order {
        if eigenvalues.len() == k {
            break;
        }
        let lambda = theta[c] - beta_shift;
        // Ritz vector x = V z_c
        let mut x = vec![0.0; n];
        x.par_chunks_mut(1024).enumerate().for_each(|(chunk, xs)| {
            let offset = chunk * 1024;
            for (r, row) in basis.iter().enumerate().take(m) {
                let zc = z[r * m + c];
                if zc == 0.0 {
                    continue;
                }
                for (t, xv) in xs.iter_mut().enumerate() {
                    *xv += zc * row[offset + t];
                }
            }
        });
        let xn = norm(&x);
        if xn == 0.0 {
            continue;
        }
        for v in &mut x {
            *v /= xn;
        }
        let mut res_vec = sym.apply(&x);
        for (ri, xi) in res_vec.iter_mut().zip(&x) {
            *ri -= lambda * xi;
        }
        let res = norm(&res_vec);
        worst = worst.max(res);
        if res > residual_tol {
            return Ok(Assembled::NotConverged(res));
        }
        if lambda.abs() <= kernel_tol {
            // parity-artifact zero mode, set aside
            auxiliary += 1;
            continue;
        }
        eigenvalues.push(lambda);
        vectors.push(x);
        residuals.push(res);
    }

    if eigenvalues.len() < k {
        return Ok(Assembled::NotConverged(worst));
    }

    let grid = *sym.op.grid();
    let mut fields = Vec::with_capacity(k);
    for x in &vectors {
        let mut phi = sym.back_transform(x);
        fix_sign(&mut phi);
        fields.push(CellField::new(grid, phi)?);
    }
    Ok(Assembled::Done(EigenSolution {
        eigenvalues,
        eigenvectors: fields,
        residuals,
        symmetrized: true,
        auxiliary_kernel: auxiliary,
        iterations,
    }))
}

/// A spectrum with the wide-stencil parity aliases removed.
///
/// The two-cell-reach stencil cannot distinguish a mode from its sublattice
/// alias (its symbol is pi-periodic per axis), so the raw spectrum carries
/// spurious copies: sign-alternating or half-grid-supported eigenvectors,
/// possibly hybridised with physical modes when eigenvalues come close. The
/// condensation filters the computed Ritz span through a lag-1 smoothness
/// form and re-diagonalises the operator on the smooth subspace, recovering
/// the physical eigenvalues and eigenvectors the continuum operator has.
#[derive(Debug, Clone)]
pub struct CondensedSpectrum {
    /// `0 = lambda_1 >= lambda_2 >= ...` over the smooth subspace.
    pub eigenvalues: Vec<f64>,
    /// u-orthonormal smooth eigenvectors; the first is constant.
    pub eigenvectors: Vec<CellField>,
    /// `||S x - lambda x||_2` per condensed pair. Where an alias hybridised
    /// with a physical mode this is of the order of their splitting, not of
    /// the solver tolerance.
    pub residuals: Vec<f64>,
    /// Smoothness score per kept vector (lag-1 form; 1 = perfectly smooth).
    pub smoothness: Vec<f64>,
    /// Number of alias directions removed from the computed span.
    pub discarded: usize,
}

/// u-weighted, axis-averaged lag-1 form measuring smoothness: close to +1 on
/// grid-smooth fields, near 0 on half-grid-supported fields and near -1 on
/// sign-alternating fields (for u-normalised input).
pub fn smoothness_form(a: &CellField, b: &CellField, u: &DensityField) -> f64 {
    let g = a.grid();
    let (av, bv, uv) = (a.values(), b.values(), u.masses());
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for l0 in 0..g.l() {
        for k0 in 0..g.k() {
            let i = g.cell_index(k0, l0);
            if k0 + 1 < g.k() || g.periodic_x1() {
                let j = g.cell_index((k0 + 1) % g.k(), l0);
                s1 += 0.25 * (av[i] * bv[j] + av[j] * bv[i]) * (uv[i] + uv[j]);
            }
            if l0 + 1 < g.l() || g.periodic_x2() {
                let j = g.cell_index(k0, (l0 + 1) % g.l());
                s2 += 0.25 * (av[i] * bv[j] + av[j] * bv[i]) * (uv[i] + uv[j]);
            }
        }
    }
    0.5 * (s1 + s2)
}

/// Condenses a computed spectrum by discarding parity-alias directions.
///
/// Directions of the nontrivial Ritz span whose smoothness eigenvalue
/// exceeds `threshold` (0.5 is robust: smooth modes score above 0.9, aliases
/// at or below zero) span the physical subspace; the operator is
/// re-diagonalised there. The deflated kernel pair passes through untouched.
pub fn condense_spectrum(
    sol: &EigenSolution,
    sym: &SymmetrizedOperator,
    u: &DensityField,
    threshold: f64,
) -> Result<CondensedSpectrum> {
    let m = sol.eigenvectors.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "condensation needs at least the kernel and one more pair".into(),
        ));
    }
    let n = sym.dim();
    let um = u.masses();
    let dot_u = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(um).map(|((x, y), w)| x * y * w).sum()
    };
    // smoothness form on the nontrivial pairs (u-orthonormal basis)
    let nb = m - 1;
    let mut bmat = DMatrix::<f64>::zeros(nb, nb);
    for i in 0..nb {
        for j in i..nb {
            let v = smoothness_form(&sol.eigenvectors[i + 1], &sol.eigenvectors[j + 1], u);
            bmat[(i, j)] = v;
            bmat[(j, i)] = v;
        }
    }
    let se = bmat.symmetric_eigen();
    let mut smooth_dirs: Vec<Vec<f64>> = Vec::new();
    for c in 0..nb {
        if se.eigenvalues[c] > threshold {
            // assemble the direction in cell space
            let mut x = vec![0.0; n];
            for (r, phi) in sol.eigenvectors.iter().skip(1).enumerate() {
                let coef = se.eigenvectors[(r, c)];
                if coef == 0.0 {
                    continue;
                }
                for (xv, pv) in x.iter_mut().zip(phi.values()) {
                    *xv += coef * pv;
                }
            }
            smooth_dirs.push(x);
        }
    }
    let discarded = nb - smooth_dirs.len();
    let kernel_phi = sol.eigenvectors[0].values().to_vec();
    let kernel_norm = dot_u(&kernel_phi, &kernel_phi);

    // deflate constants and u-orthonormalise the smooth span (Gram-Schmidt
    // with a rank guard)
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut x in smooth_dirs {
        let c = dot_u(&x, &kernel_phi) / kernel_norm;
        for (xv, kv) in x.iter_mut().zip(&kernel_phi) {
            *xv -= c * kv;
        }
        for b in &basis {
            let c = dot_u(&x, b);
            for (xv, bv) in x.iter_mut().zip(b) {
                *xv -= c * bv;
            }
        }
        let nx = dot_u(&x, &x).sqrt();
        if nx > 1e-8 {
            for xv in &mut x {
                *xv /= nx;
            }
            basis.push(x);
        }
    }

    // Rayleigh-Ritz of the operator on the smooth span, in the u-weighted
    // inner product (the quadratic form ignores the skew part)
    let kw = basis.len();
    let mut eigenvalues = vec![sol.eigenvalues[0]];
    let mut vectors: Vec<Vec<f64>> = vec![kernel_phi];
    let mut residuals = vec![sol.residuals[0]];
    if kw > 0 {
        let applied: Vec<Vec<f64>> = basis.iter().map(|x| sym.operator().apply(x)).collect();
        let mut amat = DMatrix::<f64>::zeros(kw, kw);
        for i in 0..kw {
            for j in 0..kw {
                amat[(i, j)] = dot_u(&basis[i], &applied[j]);
            }
        }
        let amat = 0.5 * (&amat + &amat.transpose());
        let ae = amat.symmetric_eigen();
        let mut order: Vec<usize> = (0..kw).collect();
        order.sort_by(|&a, &b| ae.eigenvalues[b].partial_cmp(&ae.eigenvalues[a]).unwrap());
        for &c in &order {
            let lambda = ae.eigenvalues[c];
            let mut x = vec![0.0; n];
            for (r, b) in basis.iter().enumerate() {
                let coef = ae.eigenvectors[(r, c)];
                for (xv, bv) in x.iter_mut().zip(b) {
                    *xv += coef * bv;
                }
            }
            // residual against the symmetrised operator
            let sx = {
                let xs: Vec<f64> = x.iter().zip(um).map(|(v, w)| v * w.sqrt()).collect();
                sym.apply(&xs)
            };
            let xs: Vec<f64> = x.iter().zip(um).map(|(v, w)| v * w.sqrt()).collect();
            let mut r2 = 0.0;
            for (s, v) in sx.iter().zip(&xs) {
                let d = s - lambda * v;
                r2 += d * d;
            }
            fix_sign(&mut x);
            eigenvalues.push(lambda);
            vectors.push(x);
            residuals.push(r2.sqrt());
        }
    }

    let grid = *sym.op.grid();
    let mut fields = Vec::with_capacity(vectors.len());
    for x in vectors {
        fields.push(CellField::new(grid, x)?);
    }
    let smoothness: Vec<f64> = fields.iter().map(|f| smoothness_form(f, f, u)).collect();
    Ok(CondensedSpectrum {
        eigenvalues,
        eigenvectors: fields,
        residuals,
        smoothness,
        discarded,
    })
}

/// u-weighted Rayleigh quotient of `phi` for the (possibly nonsymmetric)
/// operator: the quadratic form is blind to the skew part, so this matches
/// the symmetrised eigenvalue.
pub fn rayleigh_quotient(op: &DynOperator, u: &DensityField, phi: &[f64]) -> f64 {
    let ap = op.apply(phi);
    let num: f64 = phi
        .iter()
        .zip(&ap)
        .zip(u.masses())
        .map(|((p, a), m)| p * a * m)
        .sum();
    let den: f64 = phi.iter().zip(u.masses()).map(|(p, m)| p * p * m).sum();
    num / den
}

/// Leading eigenvalues of the unsymmetrised operator via shifted Arnoldi;
/// complex values expose the discretisation artifacts of the nonsymmetric
/// matrix. Diagnostic only: no convergence control beyond the step count.
pub fn arnoldi_eigenvalues(op: &DynOperator, steps: usize, seed: u64) -> Result<Vec<Complex<f64>>> {
    let n = op.dim();
    let m = steps.min(n);
    if m == 0 {
        return Err(Error::InvalidArgument(
            "arnoldi needs at least one step".into(),
        ));
    }
    let shift = op.inf_norm_bound();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let pert = seeded_vector(n, seed);
    for (vi, pi) in v.iter_mut().zip(&pert) {
        *vi += 0.05 * pi;
    }
    normalize(&mut v);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut h = vec![0.0; (m + 1) * m]; // (m+1) x m, row-major

    for j in 0..m {
        let mut w = op.apply(&basis[j]);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi += shift * vi;
        }
        for pass in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = dot(&w, b);
                if pass == 0 {
                    h[i * m + j] = c;
                } else {
                    h[i * m + j] += c;
                }
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let nw = norm(&w);
        h[(j + 1) * m + j] = nw;
        if nw <= 1e-13 * shift || j + 1 == m {
            let mm = j + 1;
            let mut dense = DMatrix::<f64>::zeros(mm, mm);
            for r in 0..mm {
                for c in 0..mm {
                    dense[(r, c)] = h[r * m + c];
                }
            }
            let mut vals: Vec<Complex<f64>> = dense
                .complex_eigenvalues()
                .iter()
                .map(|z| Complex::new(z.re - shift, z.im))
                .collect();
            vals.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            return Ok(vals);
        }
        for wi in &mut w {
            *wi /= nw;
        }
        basis.push(w);
    }
    unreachable!("loop returns on the last step");
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
}

fn project_out(v: &mut [f64], dir: &[f64]) {
    let c = dot(v, dir) / dot(dir, dir);
    for (vi, di) in v.iter_mut().zip(dir) {
        *vi -= c * di;
    }
}

/// Removes components along the deflated direction and every basis vector.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>], w0: &[f64]) {
    let c0 = dot(w, w0);
    // coefficients against the stored basis, in parallel
    let coefs: Vec<f64> = basis.par_iter().map(|b| dot_serial(w, b)).collect();
    let chunk = 2048;
    let nb = basis.len();
    w.par_chunks_mut(chunk).enumerate().for_each(|(ci, ws)| {
        let off = ci * chunk;
        for (i, b) in basis.iter().enumerate().take(nb) {
            let c = coefs[i];
            if c == 0.0 {
                continue;
            }
            let bs = &b[off..off + ws.len()];
            for (wv, bv) in ws.iter_mut().zip(bs) {
                *wv -= c * bv;
            }
        }
        let w0s = &w0[off..off + ws.len()];
        for (wv, bv) in ws.iter_mut().zip(w0s) {
            *wv -= c0 * bv;
        }
    });
}

fn dot_serial(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|_| {
            let mut z = state;
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Deterministic sign: the component of largest magnitude is made positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}
