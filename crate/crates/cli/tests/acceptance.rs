//! Acceptance suite: every shipped claim, one test per criterion, each
//! printing a single PASS/FAIL line (run with `--nocapture` to see them).
//!
//! The heavyweight case studies are computed once and shared.

use dynlap::contour::extract_level_set;
use dynlap::dynamics::{DensitySpec, MapKind, MapSpec};
use dynlap::grid::{cell_to_node, CellField, Grid};
use dynlap::isoperimetry::{
    cheeger_ratio, coarea_check, hypersurface_mass, region_masses, LineDensity,
};
use dynlap::laplacian::{assemble_dynamic_laplacian, assemble_weighted_laplacian, Convention};
use dynlap::mollify::{build_diffusion_matrix, convergence_defect, mollified_operator, Kernel};
use dynlap::spectral::rayleigh_quotient;
use dynlap::transfer::{
    discretize_density, estimate_transfer_matrix, normalize_transfer, pushforward_density,
};
use dynlap_cli::config::ExperimentConfig;
use dynlap_cli::runner::{run_experiment, RunSummary};
use dynlap_cli::{output, presets};
use std::sync::OnceLock;

fn preset_config(name: &str) -> ExperimentConfig {
    (presets::find(name).expect("preset exists").build)()
}

fn t1_case() -> &'static RunSummary {
    static CASE: OnceLock<RunSummary> = OnceLock::new();
    CASE.get_or_init(|| run_experiment(&preset_config("cylinder_T1"), true).expect("T1 run"))
}

fn t2_case() -> &'static RunSummary {
    static CASE: OnceLock<RunSummary> = OnceLock::new();
    CASE.get_or_init(|| run_experiment(&preset_config("cylinder_T2"), true).expect("T2 run"))
}

fn torus_case() -> &'static RunSummary {
    static CASE: OnceLock<RunSummary> = OnceLock::new();
    CASE.get_or_init(|| run_experiment(&preset_config("torus_T4T3"), true).expect("torus run"))
}

fn id16_case() -> &'static RunSummary {
    static CASE: OnceLock<RunSummary> = OnceLock::new();
    CASE.get_or_init(|| {
        run_experiment(&preset_config("identity_uniform_16"), true).expect("identity run")
    })
}

struct Criterion {
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion {
            name,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if ok {
            self.notes.push(detail);
        } else {
            self.failures.push(detail);
        }
    }

    fn within(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check(
            (got - want).abs() <= tol,
            format!("{label}: {got:.6} vs {want:.6} (tol {tol:.4})"),
        );
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("[{}] PASS: {}", self.name, self.notes.join("; "));
        } else {
            println!(
                "[{}] FAIL: {} | also checked: {}",
                self.name,
                self.failures.join("; "),
                self.notes.join("; ")
            );
            panic!("[{}] failed: {}", self.name, self.failures.join("; "));
        }
    }
}

#[test]
fn criterion_01_static_fixture_line_masses() {
    let mut c = Criterion::new("criterion 01");
    let summary = run_experiment(&preset_config("static_fixture_2_1"), true).unwrap();
    let get = |key: &str| -> f64 {
        summary
            .checks
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.parse().unwrap())
            .unwrap()
    };
    c.within("mu_1(Gamma)", get("fixture.boundary_mass_mu"), 0.25, 0.002);
    c.within(
        "nu_1(T Gamma)",
        get("fixture.boundary_mass_nu"),
        0.4534,
        0.005,
    );
    c.finish();
}

#[test]
fn criterion_02_cylinder_t1_case_study() {
    let mut c = Criterion::new("criterion 02");
    let summary = t1_case();
    let best = summary.best.as_ref().unwrap();
    c.within("H_D", best.ratio, 0.6903, 0.02);
    c.within("mu_1", best.len_mu(), 0.3088, 0.02);
    c.within("nu_1", best.len_nu(), 0.3815, 0.02);
    c.within("m_1", best.m1, 0.5, 0.005);
    c.within("m_2", best.m2, 0.5, 0.005);
    let ev = &summary.spectrum.as_ref().unwrap().eigenvalues;
    let r32 = ev[2] / ev[1];
    let r42 = ev[3] / ev[1];
    c.check(
        (r32 - 2.272).abs() <= 0.03 * 2.272,
        format!("lambda3/lambda2 = {r32:.4} vs 2.272 +- 3%"),
    );
    c.check(
        (r42 - 3.841).abs() <= 0.03 * 3.841,
        format!("lambda4/lambda2 = {r42:.4} vs 3.841 +- 3%"),
    );
    c.finish();
}

#[test]
fn criterion_03_convention_resolution() {
    // NOTE: expected to fail. The assembled operator's spectrum is verified
    // against the continuum (static symbols, dense oracles), yet the
    // published reference values sit at 1/4 of it on the cylinder and at
    // ~1/(2pi) on the torus: no offered convention reproduces them. The
    // check is asserted as stated.
    let mut c = Criterion::new("criterion 03");
    let summary = t1_case();
    let lambda2_half = summary.spectrum.as_ref().unwrap().eigenvalues[1];
    let lambda2_raw = 2.0 * lambda2_half;
    let reference = -0.6046;
    let matches = |v: f64| (v - reference).abs() <= 0.03 * reference.abs();
    let resolved = summary
        .checks
        .iter()
        .find(|(k, _)| k == "convention.resolved")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    c.check(
        matches(lambda2_half) ^ matches(lambda2_raw),
        format!(
            "exactly one convention matches -0.6046 +- 3%: with_half lambda2 = {lambda2_half:.4}, \
             raw lambda2 = {lambda2_raw:.4}, runner recorded `{resolved}` \
             (reference scale anomaly)"
        ),
    );
    c.finish();
}

#[test]
fn criterion_04_cylinder_t2_case_study() {
    let mut c = Criterion::new("criterion 04");
    let summary = t2_case();
    let best = summary.best.as_ref().unwrap();
    c.within("H_D", best.ratio, 1.1117, 0.03);
    let ev = &summary.spectrum.as_ref().unwrap().eigenvalues;
    let ratio = ev[3].abs() / ev[1].abs();
    let want = 3.0900 / 0.7747;
    c.check(
        (ratio - want).abs() <= 0.05 * want,
        format!("|lambda4|/|lambda2| = {ratio:.4} vs {want:.4} +- 5%"),
    );
    c.finish();
}

#[test]
fn criterion_05_torus_case_study() {
    // NOTE: the H_D / mu_1 / nu_1 sub-checks are expected to fail: at
    // K=L=128, Q=400 the Ulam estimate of the strongly expanding composed
    // map cannot support a faithful dynamic Laplacian (measured push-forward
    // rms error 0.29), and discretisation-adapted eigenvectors undercut the
    // physically coherent mode for every stencil tried. Masses and the
    // eigenvalue ratio reproduce the reference values.
    let mut c = Criterion::new("criterion 05");
    let summary = torus_case();
    let best = summary.best.as_ref().unwrap();
    c.within("H_D", best.ratio, 0.6968, 0.03);
    c.within("mu_1", best.len_mu(), 0.4584, 0.025);
    c.within("nu_1", best.len_nu(), 0.2375, 0.02);
    let (m1, m2) = (best.m1.min(best.m2), best.m1.max(best.m2));
    c.within("m_1", m1, 0.49994, 0.005);
    c.within("m_2", m2, 0.5006, 0.005);
    let ev = &summary.spectrum.as_ref().unwrap().eigenvalues;
    let ratio = ev[2] / ev[1];
    let want = 0.3751 / 0.3584;
    c.check(
        (ratio - want).abs() <= 0.02 * want,
        format!("lambda3/lambda2 = {ratio:.4} vs {want:.4} +- 2%"),
    );
    c.finish();
}

#[test]
fn criterion_06_spectral_invariants() {
    let mut c = Criterion::new("criterion 06");
    let summary = t1_case();
    let raw = summary.raw_spectrum.as_ref().unwrap();
    let u = summary.u.as_ref().unwrap();
    let op = summary.operator.as_ref().unwrap();

    c.check(
        raw.eigenvalues[0].abs() <= 1e-8 * raw.eigenvalues[1].abs(),
        format!("lambda1 = {:.3e} within 1e-8 |lambda2|", raw.eigenvalues[0]),
    );
    let phi1 = raw.eigenvectors[0].values();
    let mean = phi1.iter().sum::<f64>() / phi1.len() as f64;
    let var = phi1
        .iter()
        .fold(0.0f64, |acc, v| acc.max((v - mean).abs() / mean.abs()));
    c.check(var < 1e-6, format!("phi1 relative variation {var:.2e}"));

    let mut ortho_worst = 0.0f64;
    for a in 0..raw.eigenvectors.len() {
        for b in a..raw.eigenvectors.len() {
            let dot: f64 = raw.eigenvectors[a]
                .values()
                .iter()
                .zip(raw.eigenvectors[b].values())
                .zip(u.masses())
                .map(|((x, y), m)| x * y * m)
                .sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            ortho_worst = ortho_worst.max((dot - expect).abs());
        }
    }
    c.check(
        ortho_worst <= 1e-8,
        format!("u-orthonormality defect {ortho_worst:.2e}"),
    );

    let mut rayleigh_worst = 0.0f64;
    for (lambda, phi) in raw.eigenvalues.iter().zip(&raw.eigenvectors).skip(1) {
        let rq = rayleigh_quotient(op, u, phi.values());
        rayleigh_worst = rayleigh_worst.max((rq - lambda).abs() / lambda.abs());
    }
    // condensed pairs satisfy the same identity by construction; check too
    let cond = summary.spectrum.as_ref().unwrap();
    for (lambda, phi) in cond.eigenvalues.iter().zip(&cond.eigenvectors).skip(1) {
        let rq = rayleigh_quotient(op, u, phi.values());
        rayleigh_worst = rayleigh_worst.max((rq - lambda).abs() / lambda.abs());
    }
    c.check(
        rayleigh_worst <= 1e-6,
        format!("Rayleigh consistency defect {rayleigh_worst:.2e}"),
    );
    c.finish();
}

#[test]
fn criterion_07_cheeger_inequality_everywhere() {
    let mut c = Criterion::new("criterion 07");
    for (name, summary) in [
        ("cylinder_T1", t1_case()),
        ("cylinder_T2", t2_case()),
        ("torus_T4T3", torus_case()),
        ("identity_uniform_16", id16_case()),
    ] {
        let best = summary.best.as_ref().unwrap();
        let lambda2 = summary.spectrum.as_ref().unwrap().eigenvalues[1];
        let bound = 2.0 * (-lambda2).sqrt();
        c.check(
            best.ratio <= bound * (1.0 + 1e-6),
            format!(
                "{name}: {:.4} <= {:.4} (margin {:+.4})",
                best.ratio,
                bound,
                bound - best.ratio
            ),
        );
    }
    c.finish();
}

#[test]
fn criterion_08_identity_map_degeneracy() {
    let mut c = Criterion::new("criterion 08");
    let g = Grid::new((0.0, 4.0), (0.0, 1.0), 32, 16, true, false).unwrap();
    let map = MapSpec::identity(g);
    let tm = estimate_transfer_matrix(&g, &g, &map, 16).unwrap();
    let u = discretize_density(&g, &DensitySpec::SinusoidX1, 6).unwrap();
    let v = pushforward_density(&tm, &u).unwrap();
    let nt = normalize_transfer(&tm, &u, &v).unwrap();
    let l_mu = assemble_weighted_laplacian(&g, &u).unwrap();
    let l_nu = assemble_weighted_laplacian(&g, &v).unwrap();
    let m_mu = l_mu.to_csr();
    let scale = dynlap::sparse::inf_norm(&m_mu);

    let half = assemble_dynamic_laplacian(&l_mu, &l_nu, &tm, &nt, Convention::WithHalf).unwrap();
    let diff_half = &half.to_csr() + &m_mu.map(|x| -x);
    let err_half = dynlap::sparse::inf_norm(&diff_half) / scale;
    c.check(
        err_half <= 1e-12,
        format!("with_half vs L_mu entrywise: {err_half:.2e}"),
    );

    let raw = assemble_dynamic_laplacian(&l_mu, &l_nu, &tm, &nt, Convention::Raw).unwrap();
    let diff_raw = &raw.to_csr() + &m_mu.map(|x| -2.0 * x);
    let err_raw = dynlap::sparse::inf_norm(&diff_raw) / scale;
    c.check(
        err_raw <= 1e-12,
        format!("raw vs 2 L_mu entrywise: {err_raw:.2e}"),
    );
    c.finish();
}

#[test]
fn criterion_09_transfer_invariants() {
    let mut c = Criterion::new("criterion 09");
    let g = Grid::new((0.0, 4.0), (0.0, 1.0), 256, 64, true, false).unwrap();
    let map = MapSpec::new(MapKind::ShearT1, g);
    let tm = estimate_transfer_matrix(&g, &g, &map, 400).unwrap();
    let u = discretize_density(&g, &DensitySpec::SinusoidX1, 10).unwrap();
    let v = pushforward_density(&tm, &u).unwrap();
    let nt = normalize_transfer(&tm, &u, &v).unwrap();

    let p = tm.matrix();
    let indptr = p.indptr().raw_storage().to_vec();
    let mut row_worst = 0.0f64;
    for i in 0..p.rows() {
        let s: f64 = p.data()[indptr[i]..indptr[i + 1]].iter().sum();
        row_worst = row_worst.max((s - 1.0).abs());
    }
    c.check(
        row_worst <= 1e-12,
        format!("P row sums defect {row_worst:.2e}"),
    );

    let ones = vec![1.0; g.n_cells()];
    let col_sums = nt.pushforward_field(&ones);
    let col_worst = col_sums
        .iter()
        .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()));
    c.check(
        col_worst <= 1e-10,
        format!("P~ column sums defect {col_worst:.2e}"),
    );

    let mut state = 0xfeed_beef_u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut adjoint_worst = 0.0f64;
    for _ in 0..10 {
        let f: Vec<f64> = (0..g.n_cells()).map(|_| next()).collect();
        let gg: Vec<f64> = (0..g.n_cells()).map(|_| next()).collect();
        let lf = nt.pushforward_field(&f);
        let pg = dynlap::sparse::matvec(p, &gg);
        let lhs: f64 = lf
            .iter()
            .zip(&gg)
            .zip(v.masses())
            .map(|((a, b), w)| a * b * w)
            .sum();
        let rhs: f64 = f
            .iter()
            .zip(&pg)
            .zip(u.masses())
            .map(|((a, b), w)| a * b * w)
            .sum();
        adjoint_worst = adjoint_worst.max((lhs - rhs).abs());
    }
    c.check(
        adjoint_worst <= 1e-10,
        format!("adjoint identity defect {adjoint_worst:.2e}"),
    );
    c.finish();
}

/// Naive wide-stencil application, written independently of the library.
fn brute_wide_apply(g: &Grid, u: &[f64], f: &[f64]) -> Vec<f64> {
    let (kk, ll) = (g.k(), g.l());
    let (b1, b2) = (g.b_x1(), g.b_x2());
    let res = |q: isize, n: usize, periodic: bool| -> usize {
        if periodic {
            q.rem_euclid(n as isize) as usize
        } else if q < 0 {
            (q + 2) as usize
        } else if q >= n as isize {
            (q - 2) as usize
        } else {
            q as usize
        }
    };
    let mut out = vec![0.0; kk * ll];
    for l0 in 0..ll as isize {
        for k0 in 0..kk as isize {
            let idx = |kq: isize, lq: isize| {
                res(kq, kk, g.periodic_x1()) + kk * res(lq, ll, g.periodic_x2())
            };
            let uc = u[idx(k0, l0)];
            let ce = u[idx(k0 + 1, l0)] / (4.0 * b1 * b1 * uc);
            let cw = u[idx(k0 - 1, l0)] / (4.0 * b1 * b1 * uc);
            let cn = u[idx(k0, l0 + 1)] / (4.0 * b2 * b2 * uc);
            let cs = u[idx(k0, l0 - 1)] / (4.0 * b2 * b2 * uc);
            out[(k0 + kk as isize * l0) as usize] = ce * f[idx(k0 + 2, l0)]
                + cw * f[idx(k0 - 2, l0)]
                + cn * f[idx(k0, l0 + 2)]
                + cs * f[idx(k0, l0 - 2)]
                - (ce + cw + cn + cs) * f[idx(k0, l0)];
        }
    }
    out
}

/// Minimal marching-squares mass oracle on a node field with uniform
/// density: total level-set length per naive per-cell segment table.
fn brute_level_length(nf: &dynlap::grid::NodeField, t: f64) -> f64 {
    let g = *nf.grid();
    let mut total = 0.0;
    for l0 in 0..g.l() {
        for k0 in 0..g.k() {
            let v = [
                nf.at_wrapped(k0, l0),
                nf.at_wrapped(k0 + 1, l0),
                nf.at_wrapped(k0 + 1, l0 + 1),
                nf.at_wrapped(k0, l0 + 1),
            ];
            let inside: Vec<bool> = v.iter().map(|&x| x >= t).collect();
            let o = g.node_pos(k0, l0);
            let (b1, b2) = (g.b_x1(), g.b_x2());
            let frac = |a: f64, b: f64| ((t - a) / (b - a)).clamp(0.0, 1.0);
            let edge_pts = [
                [o[0] + frac(v[0], v[1]) * b1, o[1]],
                [o[0] + b1, o[1] + frac(v[1], v[2]) * b2],
                [o[0] + frac(v[3], v[2]) * b1, o[1] + b2],
                [o[0], o[1] + frac(v[0], v[3]) * b2],
            ];
            let mut crossings: Vec<[f64; 2]> = Vec::new();
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if inside[a] != inside[b] {
                    crossings.push(edge_pts[e]);
                }
            }
            let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
            match crossings.len() {
                2 => total += dist(crossings[0], crossings[1]),
                4 => {
                    // saddle: resolve by the cell-centre mean, matching the
                    // library's documented rule
                    let center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                    // edges: 0 bottom, 1 right, 2 top, 3 left
                    if (center >= t) == inside[0] {
                        total += dist(edge_pts[0], edge_pts[1]) + dist(edge_pts[2], edge_pts[3]);
                    } else {
                        total += dist(edge_pts[0], edge_pts[3]) + dist(edge_pts[1], edge_pts[2]);
                    }
                }
                _ => {}
            }
        }
    }
    total
}

#[test]
fn criterion_10_brute_force_oracles_at_8x8() {
    let mut c = Criterion::new("criterion 10");
    let g = Grid::new((0.0, 1.0), (0.0, 1.0), 8, 8, true, true).unwrap();
    let u = discretize_density(&g, &DensitySpec::Uniform, 3).unwrap();
    // a nonuniform positive weight for the L_mu check
    let weights: Vec<f64> = (0..64)
        .map(|i| {
            let (k0, l0) = g.cell_kl(i);
            1.0 + 0.3 * ((k0 as f64 * 0.7).sin() + (l0 as f64 * 1.1).cos()) * 0.5
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let w = dynlap::transfer::DensityField::new(g, weights.iter().map(|x| x / total).collect())
        .unwrap();

    let l_mu = assemble_weighted_laplacian(&g, &w).unwrap();
    let f: Vec<f64> = (0..64)
        .map(|i| ((i * 13 % 64) as f64 / 64.0).cos())
        .collect();
    let got = l_mu.apply(&f);
    let want = brute_wide_apply(&g, w.masses(), &f);
    let scale = l_mu.inf_norm_bound();
    let mut worst = 0.0f64;
    for (a, b) in got.iter().zip(&want) {
        worst = worst.max((a - b).abs() / scale);
    }
    c.check(worst <= 1e-12, format!("L_mu loop oracle: {worst:.2e}"));

    // dynamic operator against dense triple-product loops, translation map
    let map = MapSpec::new(
        MapKind::Affine {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            offset: [g.b_x1(), 0.0],
        },
        g,
    );
    let tm = estimate_transfer_matrix(&g, &g, &map, 4).unwrap();
    let v = pushforward_density(&tm, &u).unwrap();
    let nt = normalize_transfer(&tm, &u, &v).unwrap();
    let l_nu = assemble_weighted_laplacian(&g, &v).unwrap();
    let l_mu_u = assemble_weighted_laplacian(&g, &u).unwrap();
    let ld = assemble_dynamic_laplacian(&l_mu_u, &l_nu, &tm, &nt, Convention::Raw).unwrap();
    let ld_m = ld.to_csr();
    let n = 64;
    let mut dense_p = vec![0.0; n * n];
    for (val, (i, j)) in tm.matrix().iter() {
        dense_p[i * n + j] = *val;
    }
    let mut dense_pt = vec![0.0; n * n];
    for (val, (i, j)) in nt.matrix().iter() {
        dense_pt[j * n + i] = *val; // transpose of P~
    }
    let mut dense_lnu = vec![0.0; n * n];
    for (val, (i, j)) in l_nu.to_csr().iter() {
        dense_lnu[i * n + j] = *val;
    }
    let mut dense_lmu = vec![0.0; n * n];
    for (val, (i, j)) in l_mu_u.to_csr().iter() {
        dense_lmu[i * n + j] = *val;
    }
    // L^D = L_mu + P L_nu P~^T by plain triple loops
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for kq in 0..n {
            let a = dense_lnu[i * n + kq];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                tmp[i * n + j] += a * dense_pt[kq * n + j];
            }
        }
    }
    let mut dense_ld = dense_lmu;
    for i in 0..n {
        for kq in 0..n {
            let a = dense_p[i * n + kq];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                dense_ld[i * n + j] += a * tmp[kq * n + j];
            }
        }
    }
    let mut ld_dense_from_lib = vec![0.0; n * n];
    for (val, (i, j)) in ld_m.iter() {
        ld_dense_from_lib[i * n + j] = *val;
    }
    let scale_ld = dynlap::sparse::inf_norm(&ld_m);
    let mut worst_ld = 0.0f64;
    for (a, b) in ld_dense_from_lib.iter().zip(&dense_ld) {
        worst_ld = worst_ld.max((a - b).abs() / scale_ld);
    }
    c.check(
        worst_ld <= 1e-12,
        format!("L^D loop oracle: {worst_ld:.2e}"),
    );

    // H^D of a level set against a from-scratch marching-squares length
    let phi = CellField::from_fn(g, |p| {
        (2.0 * std::f64::consts::PI * p[0]).cos() + 0.3 * (2.0 * std::f64::consts::PI * p[1]).sin()
    })
    .unwrap();
    let nf = cell_to_node(&phi);
    let t = 0.1;
    let contour = extract_level_set(&nf, t);
    let len_lib = hypersurface_mass(&g, &contour, LineDensity::Analytic(&DensitySpec::Uniform));
    let (m1, m2) = region_masses(&phi, t, &u);
    let h_lib = cheeger_ratio(len_lib, len_lib, m1, m2).unwrap();

    let len_brute = brute_level_length(&nf, t) * 1.0; // uniform density = 1/area = 1
    let mut m1_brute = 0.0f64;
    for (i, &val) in phi.values().iter().enumerate() {
        let _ = i;
        if val <= t {
            m1_brute += 1.0 / 64.0;
        }
    }
    let m2_brute = 1.0 - m1_brute;
    let h_brute = (len_brute + len_brute) / (2.0 * m1_brute.min(m2_brute));
    let diff = (h_lib - h_brute).abs();
    c.check(diff <= 1e-8, format!("H^D loop oracle: diff {diff:.2e}"));
    c.finish();
}

#[test]
fn criterion_11_coarea_identities() {
    let mut c = Criterion::new("criterion 11");
    // f = x1 with the sinusoid density: smooth on the non-periodic box
    let g1 = Grid::new((0.0, 4.0), (0.0, 1.0), 256, 64, false, false).unwrap();
    let u1 = discretize_density(&g1, &DensitySpec::SinusoidX1, 10).unwrap();
    let f1 = CellField::from_fn(g1, |p| p[0]).unwrap();
    let (lhs1, rhs1, rel1) = coarea_check(&f1, &u1, 200).unwrap();
    c.check(
        rel1 < 0.02,
        format!("coordinate field: lhs {lhs1:.4}, rhs {rhs1:.4}, rel {rel1:.4}"),
    );
    // f = sin(pi x1) with uniform density on the cylinder
    let g2 = Grid::new((0.0, 4.0), (0.0, 1.0), 256, 64, true, false).unwrap();
    let u2 = discretize_density(&g2, &DensitySpec::Uniform, 4).unwrap();
    let f2 = CellField::from_fn(g2, |p| (std::f64::consts::PI * p[0]).sin()).unwrap();
    let (lhs2, rhs2, rel2) = coarea_check(&f2, &u2, 200).unwrap();
    c.check(
        rel2 < 0.02,
        format!("sine field: lhs {lhs2:.4}, rhs {rhs2:.4}, rel {rel2:.4}"),
    );
    c.finish();
}

#[test]
fn criterion_12_federer_fleming_consistency() {
    let mut c = Criterion::new("criterion 12");
    let summary = t1_case();
    let gap: f64 = summary
        .checks
        .iter()
        .find(|(k, _)| k == "federer_fleming.rel_gap_to_sweep")
        .map(|(_, v)| v.parse().unwrap())
        .expect("federer_fleming check ran");
    c.check(
        gap <= 0.15,
        format!("Sobolev quotient of smoothed indicator within 15%: rel gap {gap:.4}"),
    );
    c.finish();
}

#[test]
fn criterion_13_mollified_convergence() {
    let mut c = Criterion::new("criterion 13");
    let g = Grid::new((0.0, 4.0), (0.0, 1.0), 256, 64, true, true).unwrap();
    let kernel = Kernel::epanechnikov();
    let f = CellField::from_fn(g, |p| (2.0 * std::f64::consts::PI * p[0] / 4.0).sin()).unwrap();
    let u = discretize_density(&g, &DensitySpec::Uniform, 2).unwrap();
    for kind in [MapKind::Identity, MapKind::ShearT1] {
        let name = format!("{kind:?}");
        let map = MapSpec::new(kind.clone(), g);
        let tm = estimate_transfer_matrix(&g, &g, &map, 100).unwrap();
        let v = pushforward_density(&tm, &u).unwrap();
        let nt = normalize_transfer(&tm, &u, &v).unwrap();
        let l_mu = assemble_weighted_laplacian(&g, &u).unwrap();
        let l_nu = assemble_weighted_laplacian(&g, &v).unwrap();
        let op = assemble_dynamic_laplacian(&l_mu, &l_nu, &tm, &nt, Convention::WithHalf).unwrap();
        let pairs: Vec<_> = [0.2, 0.1]
            .iter()
            .map(|&eps| {
                let d = build_diffusion_matrix(&g, &kernel, eps).unwrap();
                mollified_operator(&d, &d, &tm, &u).unwrap()
            })
            .collect();
        // the torus-ised shear is discontinuous across the x2 seam; mask it
        let mask: Option<Vec<bool>> = if matches!(kind, MapKind::Identity) {
            None
        } else {
            let band = 0.2 + 2.0 * g.b_x2();
            Some(
                (0..g.n_cells())
                    .map(|i| {
                        let p = g.cell_center(i);
                        p[1].min(1.0 - p[1]) <= band
                    })
                    .collect(),
            )
        };
        let defects =
            convergence_defect(&f, &pairs, &op, kernel.second_moment(), mask.as_deref()).unwrap();
        let ratio = defects[1] / defects[0];
        c.check(
            ratio < 0.7,
            format!(
                "{name}: E(0.1)/E(0.2) = {:.3e}/{:.3e} = {ratio:.3}",
                defects[1], defects[0]
            ),
        );
        for pair in &pairs {
            let ones = vec![1.0; g.n_cells()];
            let lf = pair.l_apply(&ones);
            let lsf = pair.l_star_apply(&ones);
            let worst = lf
                .iter()
                .chain(&lsf)
                .fold(0.0f64, |acc, x| acc.max((x - 1.0).abs()));
            let (sigma, _) = pair.leading_singular_pair(60);
            c.check(
                worst <= 1e-6 && (sigma - 1.0).abs() <= 1e-6,
                format!(
                    "{name} eps={}: ones defect {worst:.2e}, sigma1 = {sigma:.8}",
                    pair.eps()
                ),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_14_deterministic_bundles() {
    let mut c = Criterion::new("criterion 14");
    let dir_a = std::env::temp_dir().join("dynlap_accept_t1_a");
    let dir_b = std::env::temp_dir().join("dynlap_accept_t1_b");
    output::write_bundle(t1_case(), &dir_a).unwrap();
    let again = run_experiment(&preset_config("cylinder_T1"), true).unwrap();
    output::write_bundle(&again, &dir_b).unwrap();
    for name in [
        "checks.txt",
        "eigenvalues.txt",
        "phi2.txt",
        "sweep.txt",
        "contour_mu.txt",
        "contour_nu.txt",
    ] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        c.check(a == b, format!("{name} byte-identical ({} bytes)", a.len()));
    }
    // manifest: identical apart from wall-clock timing comments
    let strip = |text: String| -> String {
        text.lines()
            .filter(|l| !l.starts_with("# timing"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let ma = strip(std::fs::read_to_string(dir_a.join("manifest.txt")).unwrap());
    let mb = strip(std::fs::read_to_string(dir_b.join("manifest.txt")).unwrap());
    c.check(ma == mb, "manifest identical modulo timing lines".into());
    c.finish();
}

#[test]
fn presets_all_resolve_and_fixture_pipelines_run() {
    // list_presets contract: every listed name resolves; the light pipelines
    // run end to end here (the heavy ones run in their criteria)
    for preset in presets::PRESETS {
        assert!(presets::find(preset.name).is_some());
    }
    let m = run_experiment(&preset_config("mollify_demo"), true).unwrap();
    assert!(m
        .checks
        .iter()
        .any(|(k, _)| k.starts_with("mollify.defect")));
}
