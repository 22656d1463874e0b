//! Level-set extraction on node fields (marching squares).
//!
//! Edge crossings are interpolated once per grid edge in a canonical
//! orientation, so neighbouring cells produce bit-identical vertices and
//! segment chains connect exactly. Saddle cells are disambiguated by the
//! bilinear centre value. Segments are subdivided until none exceeds half a
//! cell side, which keeps midpoint quadrature of line integrals accurate.

use crate::grid::{NodeField, Point};
use std::collections::HashMap;

/// A level set as a list of polylines (vertex chains). Chains either close,
/// stop at a reflecting boundary, or stop at a periodic seam (the continuation
/// re-enters from the other side as a separate chain).
#[derive(Debug, Clone)]
pub struct Contour {
    polylines: Vec<Vec<Point>>,
    threshold: f64,
}

impl Contour {
    pub fn empty(threshold: f64) -> Self {
        Contour {
            polylines: Vec::new(),
            threshold,
        }
    }

    /// Builds a contour from explicit polylines (analytic fixtures, tests).
    /// Chains with fewer than two vertices are dropped.
    pub fn from_polylines(polylines: Vec<Vec<Point>>, threshold: f64) -> Self {
        Contour {
            polylines: polylines.into_iter().filter(|pl| pl.len() >= 2).collect(),
            threshold,
        }
    }

    pub fn polylines(&self) -> &[Vec<Point>] {
        &self.polylines
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    /// Total Euclidean length of all chains.
    pub fn total_length(&self) -> f64 {
        self.polylines
            .iter()
            .map(|pl| {
                pl.windows(2)
                    .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Iterates over all segments of all chains.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.polylines
            .iter()
            .flat_map(|pl| pl.windows(2).map(|s| (s[0], s[1])))
    }
}

/// Extracts the level set `{nf = t}`. A threshold at or outside the field
/// range yields an empty contour rather than an error.
pub fn extract_level_set(nf: &NodeField, t: f64) -> Contour {
    if !(nf.min() < t && t < nf.max()) {
        return Contour::empty(t);
    }
    let g = *nf.grid();
    let b1 = g.b_x1();
    let b2 = g.b_x2();
    let mut segments: Vec<(Point, Point)> = Vec::new();

    for l0 in 0..g.l() {
        for k0 in 0..g.k() {
            let v00 = nf.at_wrapped(k0, l0);
            let v10 = nf.at_wrapped(k0 + 1, l0);
            let v11 = nf.at_wrapped(k0 + 1, l0 + 1);
            let v01 = nf.at_wrapped(k0, l0 + 1);
            let case = (v00 >= t) as usize
                | ((v10 >= t) as usize) << 1
                | ((v11 >= t) as usize) << 2
                | ((v01 >= t) as usize) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let origin = g.node_pos(k0, l0);
            // canonical low-to-high interpolation along each crossed edge
            let frac = |a: f64, b: f64| ((t - a) / (b - a)).clamp(0.0, 1.0);
            let bottom = || -> Point { [origin[0] + frac(v00, v10) * b1, origin[1]] };
            let top = || -> Point { [origin[0] + frac(v01, v11) * b1, origin[1] + b2] };
            let left = || -> Point { [origin[0], origin[1] + frac(v00, v01) * b2] };
            let right = || -> Point { [origin[0] + b1, origin[1] + frac(v10, v11) * b2] };
            let mut push = |a: Point, b: Point| {
                if (a[0] - b[0]).hypot(a[1] - b[1]) > 0.0 {
                    segments.push((a, b));
                }
            };
            match case {
                1 => push(left(), bottom()),
                2 => push(bottom(), right()),
                3 => push(left(), right()),
                4 => push(right(), top()),
                5 => {
                    let center = 0.25 * (v00 + v10 + v11 + v01);
                    if center >= t {
                        push(left(), top());
                        push(bottom(), right());
                    } else {
                        push(left(), bottom());
                        push(right(), top());
                    }
                }
                6 => push(bottom(), top()),
                7 => push(left(), top()),
                8 => push(top(), left()),
                9 => push(bottom(), top()),
                10 => {
                    let center = 0.25 * (v00 + v10 + v11 + v01);
                    if center >= t {
                        push(bottom(), left());
                        push(right(), top());
                    } else {
                        push(bottom(), right());
                        push(top(), left());
                    }
                }
                11 => push(right(), top()),
                12 => push(left(), right()),
                13 => push(bottom(), right()),
                14 => push(bottom(), left()),
                _ => unreachable!(),
            }
        }
    }

    let chains = chain_segments(segments);
    let max_len = 0.5 * b1.min(b2);
    let polylines = chains
        .into_iter()
        .map(|pl| subdivide(&pl, max_len))
        .collect();
    Contour {
        polylines,
        threshold: t,
    }
}

/// Joins raw segments into polylines by matching bit-identical endpoints.
fn chain_segments(segments: Vec<(Point, Point)>) -> Vec<Vec<Point>> {
    type Key = (u64, u64);
    let key = |p: Point| -> Key { (p[0].to_bits(), p[1].to_bits()) };
    // endpoint -> list of (segment index, end selector)
    let mut at: HashMap<Key, Vec<(usize, bool)>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        at.entry(key(*a)).or_default().push((i, false));
        at.entry(key(*b)).or_default().push((i, true));
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // extend forward from the tail, then backward from the head
        for forward in [true, false] {
            loop {
                let tip = if forward {
                    *chain.last().unwrap()
                } else {
                    chain[0]
                };
                let Some(candidates) = at.get(&key(tip)) else {
                    break;
                };
                let mut found = None;
                for &(si, end) in candidates {
                    if !used[si] {
                        found = Some((si, end));
                        break;
                    }
                }
                let Some((si, end)) = found else { break };
                used[si] = true;
                let (sa, sb) = segments[si];
                let next = if end { sa } else { sb };
                if forward {
                    chain.push(next);
                } else {
                    chain.insert(0, next);
                }
            }
        }
        chains.push(chain);
    }
    chains
}

/// Splits every segment so no piece exceeds `max_len`.
fn subdivide(polyline: &[Point], max_len: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(polyline.len());
    out.push(polyline[0]);
    for seg in polyline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let pieces = (len / max_len).ceil().max(1.0) as usize;
        for s in 1..=pieces {
            let f = s as f64 / pieces as f64;
            out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
    }
    out
}

/// Marching squares on a grid needs node positions that may exceed the
/// periodic storage; this helper exposes the cell-corner geometry used by
/// [`extract_level_set`] for tests and independent checks.
pub fn cell_corner_values(nf: &NodeField, k0: usize, l0: usize) -> [f64; 4] {
    [
        nf.at_wrapped(k0, l0),
        nf.at_wrapped(k0 + 1, l0),
        nf.at_wrapped(k0 + 1, l0 + 1),
        nf.at_wrapped(k0, l0 + 1),
    ]
}
