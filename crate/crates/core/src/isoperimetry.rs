//! Weighted co-dimension-1 measures, the dynamic Cheeger ratio, the level-set
//! sweep, the dynamic Sobolev quotient and the co-area cross-check.

use crate::contour::{extract_level_set, Contour};
use crate::dynamics::{DensitySpec, MapSpec};
use crate::error::{Error, Result};
use crate::grid::{cell_to_node, CellField, Grid, Point};
use crate::transfer::{DensityField, NormalizedTransfer};
use rayon::prelude::*;

/// How to evaluate a density along a curve.
#[derive(Clone, Copy)]
pub enum LineDensity<'a> {
    /// Closed-form density evaluated at the (image) point.
    Analytic(&'a DensitySpec),
    /// Closed-form initial density evaluated at the source point; valid for
    /// area-preserving maps where `h_nu o T = h_mu`.
    PullbackAnalytic(&'a DensitySpec),
    /// Discretised density, bilinearly interpolated from cell centres.
    Field(&'a CellField),
}

/// Weighted length of a contour: sum over segments of Euclidean length times
/// the density at the segment midpoint.
pub fn hypersurface_mass(grid: &Grid, contour: &Contour, density: LineDensity) -> f64 {
    contour
        .segments()
        .map(|(a, b)| {
            let d = grid.min_image_offset(a, b);
            let len = d[0].hypot(d[1]);
            let mid = grid.wrap_point([a[0] + 0.5 * d[0], a[1] + 0.5 * d[1]]);
            len * line_density_at(grid, density, mid, mid)
        })
        .sum()
}

fn line_density_at(grid: &Grid, density: LineDensity, image: Point, source: Point) -> f64 {
    match density {
        LineDensity::Analytic(spec) => spec.evaluate(grid, image),
        LineDensity::PullbackAnalytic(spec) => spec.evaluate(grid, source),
        LineDensity::Field(cf) => cf.interp_bilinear(image),
    }
}

/// Weighted length of the image curve `T(contour)`. Source segments are
/// bisected until each image segment spans at most one target cell side, then
/// summed with the image density at the mapped midpoint (or the source
/// midpoint for the pull-back form).
pub fn image_hypersurface_mass(
    src_grid: &Grid,
    contour: &Contour,
    map: &MapSpec,
    density: LineDensity,
) -> f64 {
    let target = map.domain();
    let cap = target.b_x1().min(target.b_x2());
    contour
        .segments()
        .map(|(a, b)| image_segment_mass(src_grid, target, map, density, a, b, cap, 0))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn image_segment_mass(
    src_grid: &Grid,
    target: &Grid,
    map: &MapSpec,
    density: LineDensity,
    a: Point,
    b: Point,
    cap: f64,
    depth: usize,
) -> f64 {
    let ia = map.evaluate(a);
    let ib = map.evaluate(b);
    let img = target.min_image_offset(ia, ib);
    let len = img[0].hypot(img[1]);
    if len > cap && depth < 16 {
        let d = src_grid.min_image_offset(a, b);
        let mid = [a[0] + 0.5 * d[0], a[1] + 0.5 * d[1]];
        return image_segment_mass(src_grid, target, map, density, a, mid, cap, depth + 1)
            + image_segment_mass(src_grid, target, map, density, mid, b, cap, depth + 1);
    }
    let d = src_grid.min_image_offset(a, b);
    let src_mid = src_grid.wrap_point([a[0] + 0.5 * d[0], a[1] + 0.5 * d[1]]);
    let img_mid = map.evaluate(src_mid);
    len * line_density_at(target, density, img_mid, src_mid)
}

/// Maps a contour through `T` for output, with the same refinement rule.
/// Chains are split where the image crosses a periodic seam.
pub fn map_contour(src_grid: &Grid, contour: &Contour, map: &MapSpec) -> Vec<Vec<Point>> {
    let target = map.domain();
    let cap = target.b_x1().min(target.b_x2());
    let jump1 = target.period_x1().map(|p| 0.5 * p).unwrap_or(f64::INFINITY);
    let jump2 = target.period_x2().map(|p| 0.5 * p).unwrap_or(f64::INFINITY);
    let mut out = Vec::new();
    for pl in contour.polylines() {
        let mut refined: Vec<Point> = Vec::new();
        for seg in pl.windows(2) {
            let mut stack = vec![(seg[0], seg[1], 0usize)];
            let mut pieces: Vec<Point> = Vec::new();
            while let Some((a, b, depth)) = stack.pop() {
                let ia = map.evaluate(a);
                let ib = map.evaluate(b);
                let img = target.min_image_offset(ia, ib);
                if img[0].hypot(img[1]) > cap && depth < 16 {
                    let d = src_grid.min_image_offset(a, b);
                    let mid = [a[0] + 0.5 * d[0], a[1] + 0.5 * d[1]];
                    // preserve order under the stack discipline
                    stack.push((mid, b, depth + 1));
                    stack.push((a, mid, depth + 1));
                } else {
                    pieces.push(a);
                }
            }
            refined.extend(pieces);
        }
        if let Some(last) = pl.last() {
            refined.push(*last);
        }
        // map and split at seams
        let mut chain: Vec<Point> = Vec::new();
        let mut prev: Option<Point> = None;
        for p in refined {
            let ip = map.evaluate(p);
            if let Some(q) = prev {
                if (ip[0] - q[0]).abs() > jump1 || (ip[1] - q[1]).abs() > jump2 {
                    if chain.len() > 1 {
                        out.push(std::mem::take(&mut chain));
                    } else {
                        chain.clear();
                    }
                }
            }
            chain.push(ip);
            prev = Some(ip);
        }
        if chain.len() > 1 {
            out.push(chain);
        }
    }
    out
}

/// Masses of the sub- and super-level sets: cells with value `<= t` count
/// toward `m1`, the rest toward `m2` (ties go to `m1` for determinism).
pub fn region_masses(phi: &CellField, t: f64, u: &DensityField) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&v, &m) in phi.values().iter().zip(u.masses()) {
        if v <= t {
            m1 += m;
        } else {
            m2 += m;
        }
    }
    (m1, m2)
}

/// The dynamic Cheeger ratio `(mu_1 + nu_1) / (2 min(m1, m2))`.
pub fn cheeger_ratio(len_mu: f64, len_nu: f64, m1: f64, m2: f64) -> Result<f64> {
    cheeger_ratio_multi(&[len_mu, len_nu], m1, m2)
}

/// Multi-step form: the mean of the per-step boundary masses over
/// `min(m1, m2)`. With two steps this reduces to the single-step ratio.
pub fn cheeger_ratio_multi(step_masses: &[f64], m1: f64, m2: f64) -> Result<f64> {
    let min_mass = m1.min(m2);
    if min_mass <= 0.0 {
        return Err(Error::UndefinedRatio(format!(
            "region masses ({m1}, {m2}) leave an empty side"
        )));
    }
    if step_masses.is_empty() {
        return Err(Error::InvalidArgument("no boundary masses supplied".into()));
    }
    let mean = step_masses.iter().sum::<f64>() / step_masses.len() as f64;
    Ok(mean / min_mass)
}

/// One time step of the sweep objective: the (possibly identity) composed map
/// up to this step and the density weighting its image curve.
pub struct SweepStep<'a> {
    /// `None` measures the source curve itself.
    pub map: Option<&'a MapSpec>,
    pub density: LineDensity<'a>,
}

/// A candidate partition produced by the sweep.
#[derive(Debug, Clone)]
pub struct Partition {
    pub threshold: f64,
    pub m1: f64,
    pub m2: f64,
    /// Per-step boundary masses; `[mu_1, nu_1]` for a single map.
    pub step_masses: Vec<f64>,
    pub ratio: f64,
    pub contour: Contour,
}

impl Partition {
    pub fn len_mu(&self) -> f64 {
        self.step_masses[0]
    }

    pub fn len_nu(&self) -> f64 {
        *self.step_masses.last().expect("at least one step")
    }
}

/// Full sweep output: the ratio curve and the minimising partition.
pub struct Sweep {
    /// `(threshold, ratio)`; empty contours yield `None`.
    pub curve: Vec<(f64, Option<f64>)>,
    pub best: Partition,
}

/// Evaluates the Cheeger ratio on level sets of `phi` at `n_thresholds`
/// equally spaced quantiles of its cell values (1% tails excluded) and
/// returns the curve together with the minimising partition.
pub fn sweep_level_sets(
    phi: &CellField,
    u: &DensityField,
    steps: &[SweepStep],
    n_thresholds: usize,
) -> Result<Sweep> {
    if n_thresholds < 2 {
        return Err(Error::InvalidArgument(
            "need at least two thresholds".into(),
        ));
    }
    if steps.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one sweep step".into(),
        ));
    }
    let grid = *phi.grid();
    let mut sorted: Vec<f64> = phi.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::InvalidArgument(
            "cannot sweep level sets of a constant field".into(),
        ));
    }
    let thresholds: Vec<f64> = (0..n_thresholds)
        .map(|j| {
            let q = 0.01 + 0.98 * j as f64 / (n_thresholds - 1) as f64;
            let idx = (q * (sorted.len() - 1) as f64).round() as usize;
            sorted[idx]
        })
        .collect();

    let nf = cell_to_node(phi);
    let evaluated: Vec<(f64, Option<Partition>)> = thresholds
        .par_iter()
        .map(|&t| {
            let contour = extract_level_set(&nf, t);
            if contour.is_empty() {
                return (t, None);
            }
            let (m1, m2) = region_masses(phi, t, u);
            if m1.min(m2) <= 0.0 {
                return (t, None);
            }
            let step_masses: Vec<f64> = steps
                .iter()
                .map(|s| match s.map {
                    None => hypersurface_mass(&grid, &contour, s.density),
                    Some(map) => image_hypersurface_mass(&grid, &contour, map, s.density),
                })
                .collect();
            let ratio = cheeger_ratio_multi(&step_masses, m1, m2).expect("masses positive");
            (
                t,
                Some(Partition {
                    threshold: t,
                    m1,
                    m2,
                    step_masses,
                    ratio,
                    contour,
                }),
            )
        })
        .collect();

    let curve: Vec<(f64, Option<f64>)> = evaluated
        .iter()
        .map(|(t, p)| (*t, p.as_ref().map(|p| p.ratio)))
        .collect();
    let best = evaluated
        .into_iter()
        .filter_map(|(_, p)| p)
        .min_by(|a, b| a.ratio.partial_cmp(&b.ratio).unwrap())
        .ok_or(Error::EmptySweep)?;
    Ok(Sweep { curve, best })
}

/// Central-difference gradient magnitude per cell, with periodic wrap or the
/// two-cell reflection shift at boundaries (consistent with the Laplacian
/// assembly).
pub fn gradient_magnitude(f: &CellField) -> Vec<f64> {
    let g = *f.grid();
    let (kk, ll) = (g.k(), g.l());
    let vals = f.values();
    let resolve = |idx: isize, count: usize, periodic: bool| -> usize {
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
        r as usize
    };
    (0..g.n_cells())
        .map(|i| {
            let (k0, l0) = g.cell_kl(i);
            let (ki, li) = (k0 as isize, l0 as isize);
            let e = vals[g.cell_index(resolve(ki + 1, kk, g.periodic_x1()), l0)];
            let w = vals[g.cell_index(resolve(ki - 1, kk, g.periodic_x1()), l0)];
            let n = vals[g.cell_index(k0, resolve(li + 1, ll, g.periodic_x2()))];
            let s = vals[g.cell_index(k0, resolve(li - 1, ll, g.periodic_x2()))];
            let dx = (e - w) / (2.0 * g.b_x1());
            let dy = (n - s) / (2.0 * g.b_x2());
            dx.hypot(dy)
        })
        .collect()
}

/// u-weighted median: the exact minimiser of `sum |f - a| u`.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty field")]
}

/// The dynamic Sobolev quotient of `f`:
/// `[int |grad f| dmu + int |grad(P~^T f)| dnu] / (2 inf_a int |f - a| dmu)`,
/// with the infimum attained at the u-weighted median.
pub fn sobolev_quotient(
    f: &CellField,
    nt: &NormalizedTransfer,
    u: &DensityField,
    v: &DensityField,
) -> Result<f64> {
    if f.grid() != u.grid() {
        return Err(Error::DimensionMismatch(
            "field and density grids differ".into(),
        ));
    }
    let grad_f = gradient_magnitude(f);
    let pushed = CellField::new(*v.grid(), nt.pushforward_field(f.values()))?;
    let grad_p = gradient_magnitude(&pushed);
    let num: f64 = grad_f
        .iter()
        .zip(u.masses())
        .map(|(g, m)| g * m)
        .sum::<f64>()
        + grad_p
            .iter()
            .zip(v.masses())
            .map(|(g, m)| g * m)
            .sum::<f64>();
    let alpha = weighted_median(f.values(), u.masses());
    let den: f64 = f
        .values()
        .iter()
        .zip(u.masses())
        .map(|(x, m)| (x - alpha).abs() * m)
        .sum();
    if den <= 0.0 {
        return Err(Error::UndefinedRatio(
            "Sobolev denominator vanishes (constant field)".into(),
        ));
    }
    Ok(num / (2.0 * den))
}

/// Outcome of the Cheeger-inequality check `h <= 2 sqrt(-lambda_2)`.
#[derive(Debug, Clone)]
pub struct CheegerReport {
    pub h_estimate: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Checks the dynamic Cheeger inequality for a sweep minimum against the
/// second eigenvalue of the half-convention operator.
pub fn check_cheeger(h_estimate: f64, lambda2: f64) -> Result<CheegerReport> {
    if lambda2 >= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda_2 must be negative, got {lambda2}"
        )));
    }
    let bound = 2.0 * (-lambda2).sqrt();
    Ok(CheegerReport {
        h_estimate,
        bound,
        margin: bound - h_estimate,
        pass: h_estimate <= bound * (1.0 + 1e-6),
    })
}

/// Both sides of the co-area identity for `f` against the density `u`:
/// `int |grad f| dmu` versus the threshold integral of level-set masses
/// (trapezoid rule over `n_levels` thresholds).
pub fn coarea_check(f: &CellField, u: &DensityField, n_levels: usize) -> Result<(f64, f64, f64)> {
    if n_levels < 3 {
        return Err(Error::InvalidArgument("need at least three levels".into()));
    }
    let grid = *f.grid();
    let lhs: f64 = gradient_magnitude(f)
        .iter()
        .zip(u.masses())
        .map(|(g, m)| g * m)
        .sum();
    let nf = cell_to_node(f);
    let (lo, hi) = (nf.min(), nf.max());
    if !(hi > lo) {
        return Ok((lhs, 0.0, if lhs == 0.0 { 0.0 } else { 1.0 }));
    }
    let density = u.to_density_field();
    let h = (hi - lo) / (n_levels - 1) as f64;
    let masses: Vec<f64> = (0..n_levels)
        .into_par_iter()
        .map(|i| {
            let t = lo + i as f64 * h;
            let c = extract_level_set(&nf, t);
            hypersurface_mass(&grid, &c, LineDensity::Field(&density))
        })
        .collect();
    let mut rhs = 0.0;
    for i in 0..n_levels - 1 {
        rhs += 0.5 * (masses[i] + masses[i + 1]) * h;
    }
    let rel = if lhs != 0.0 {
        (lhs - rhs).abs() / lhs
    } else {
        rhs.abs()
    };
    Ok((lhs, rhs, rel))
}
