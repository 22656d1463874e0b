//! Uniform rectangular discretisation of a 2-D flat manifold.
//!
//! The domain is a box `[x1_min, x1_max) x [x2_min, x2_max)` covered by
//! `K x L` cells of uniform size, with each axis independently periodic or
//! reflecting. Cells are stored x1-major: the cell in column `k` and row `l`
//! (0-based) has flat index `k + K*l`.

use crate::error::{Error, Result};

/// A point in the plane, `[x1, x2]`.
pub type Point = [f64; 2];

/// Uniform `K x L` cell grid over a rectangle, periodic per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x1_min: f64,
    x1_max: f64,
    x2_min: f64,
    x2_max: f64,
    k: usize,
    l: usize,
    periodic_x1: bool,
    periodic_x2: bool,
    b_x1: f64,
    b_x2: f64,
}

impl Grid {
    /// Builds a grid. Counts below 4 are rejected: the Laplacian stencil
    /// reaches two cells in each direction.
    pub fn new(
        x1_range: (f64, f64),
        x2_range: (f64, f64),
        k: usize,
        l: usize,
        periodic_x1: bool,
        periodic_x2: bool,
    ) -> Result<Self> {
        if k < 4 || l < 4 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be at least 4, got {k} x {l}"
            )));
        }
        let (x1_min, x1_max) = x1_range;
        let (x2_min, x2_max) = x2_range;
        if !(x1_max > x1_min) || !(x2_max > x2_min) {
            return Err(Error::InvalidGrid(format!(
                "degenerate ranges [{x1_min}, {x1_max}) x [{x2_min}, {x2_max})"
            )));
        }
        if !(x1_min.is_finite() && x1_max.is_finite() && x2_min.is_finite() && x2_max.is_finite()) {
            return Err(Error::InvalidGrid("ranges must be finite".into()));
        }
        Ok(Grid {
            x1_min,
            x1_max,
            x2_min,
            x2_max,
            k,
            l,
            periodic_x1,
            periodic_x2,
            b_x1: (x1_max - x1_min) / k as f64,
            b_x2: (x2_max - x2_min) / l as f64,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_cells(&self) -> usize {
        self.k * self.l
    }

    /// Cell side along x1.
    pub fn b_x1(&self) -> f64 {
        self.b_x1
    }

    /// Cell side along x2.
    pub fn b_x2(&self) -> f64 {
        self.b_x2
    }

    pub fn cell_area(&self) -> f64 {
        self.b_x1 * self.b_x2
    }

    pub fn domain_area(&self) -> f64 {
        (self.x1_max - self.x1_min) * (self.x2_max - self.x2_min)
    }

    pub fn x1_range(&self) -> (f64, f64) {
        (self.x1_min, self.x1_max)
    }

    pub fn x2_range(&self) -> (f64, f64) {
        (self.x2_min, self.x2_max)
    }

    pub fn periodic_x1(&self) -> bool {
        self.periodic_x1
    }

    pub fn periodic_x2(&self) -> bool {
        self.periodic_x2
    }

    /// Period length of an axis, `None` when the axis reflects.
    pub fn period_x1(&self) -> Option<f64> {
        self.periodic_x1.then(|| self.x1_max - self.x1_min)
    }

    pub fn period_x2(&self) -> Option<f64> {
        self.periodic_x2.then(|| self.x2_max - self.x2_min)
    }

    /// Flat index of the cell in column `k0`, row `l0` (0-based).
    #[inline]
    pub fn cell_index(&self, k0: usize, l0: usize) -> usize {
        debug_assert!(k0 < self.k && l0 < self.l);
        k0 + self.k * l0
    }

    /// Inverse of [`cell_index`](Self::cell_index).
    #[inline]
    pub fn cell_kl(&self, index: usize) -> (usize, usize) {
        debug_assert!(index < self.n_cells());
        (index % self.k, index / self.k)
    }

    /// Centre of a cell.
    pub fn cell_center(&self, index: usize) -> Point {
        let (k0, l0) = self.cell_kl(index);
        [
            self.x1_min + (k0 as f64 + 0.5) * self.b_x1,
            self.x2_min + (l0 as f64 + 0.5) * self.b_x2,
        ]
    }

    /// Wraps a point into the domain along periodic axes; reflecting axes are
    /// left untouched.
    pub fn wrap_point(&self, p: Point) -> Point {
        let mut q = p;
        if self.periodic_x1 {
            q[0] = wrap_coord(q[0], self.x1_min, self.x1_max);
        }
        if self.periodic_x2 {
            q[1] = wrap_coord(q[1], self.x2_min, self.x2_max);
        }
        q
    }

    /// Locates the cell containing `p`. Periodic coordinates are wrapped
    /// first; a point outside a reflecting axis yields `None`. Each cell owns
    /// its lower edges, and the global maximum on a reflecting axis belongs
    /// to the last cell.
    pub fn cell_of_point(&self, p: Point) -> Option<usize> {
        let q = self.wrap_point(p);
        let k0 = locate(
            q[0],
            self.x1_min,
            self.x1_max,
            self.b_x1,
            self.k,
            self.periodic_x1,
        )?;
        let l0 = locate(
            q[1],
            self.x2_min,
            self.x2_max,
            self.b_x2,
            self.l,
            self.periodic_x2,
        )?;
        Some(self.cell_index(k0, l0))
    }

    /// Signed offset `b - a` per axis, reduced to the minimal image on
    /// periodic axes. Useful for measuring short segments near a seam.
    pub fn min_image_offset(&self, a: Point, b: Point) -> [f64; 2] {
        let mut d = [b[0] - a[0], b[1] - a[1]];
        if let Some(p) = self.period_x1() {
            d[0] -= (d[0] / p).round() * p;
        }
        if let Some(p) = self.period_x2() {
            d[1] -= (d[1] / p).round() * p;
        }
        d
    }

    /// Distance between two points using minimal images on periodic axes.
    pub fn min_image_distance(&self, a: Point, b: Point) -> f64 {
        let d = self.min_image_offset(a, b);
        d[0].hypot(d[1])
    }

    /// Number of lattice nodes along x1 (`K` wrapping, `K + 1` otherwise).
    pub fn n_nodes_x1(&self) -> usize {
        if self.periodic_x1 {
            self.k
        } else {
            self.k + 1
        }
    }

    pub fn n_nodes_x2(&self) -> usize {
        if self.periodic_x2 {
            self.l
        } else {
            self.l + 1
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes_x1() * self.n_nodes_x2()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_nodes_x1() && j < self.n_nodes_x2());
        i + self.n_nodes_x1() * j
    }

    /// Position of node `(i, j)`; `i`, `j` may equal `K`, `L` to address the
    /// far corner of the last cell on a periodic axis.
    pub fn node_pos(&self, i: usize, j: usize) -> Point {
        [
            self.x1_min + i as f64 * self.b_x1,
            self.x2_min + j as f64 * self.b_x2,
        ]
    }
}

fn wrap_coord(x: f64, min: f64, max: f64) -> f64 {
    let len = max - min;
    let mut w = (x - min).rem_euclid(len);
    if w >= len {
        w = 0.0; // rem_euclid may round up to len
    }
    min + w
}

fn locate(x: f64, min: f64, max: f64, b: f64, count: usize, periodic: bool) -> Option<usize> {
    if periodic {
        let idx = ((x - min) / b).floor() as isize;
        Some(idx.rem_euclid(count as isize) as usize)
    } else {
        if x < min || x > max {
            return None;
        }
        let idx = ((x - min) / b).floor() as usize;
        Some(idx.min(count - 1))
    }
}

/// One real value per grid cell, stored x1-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: Grid,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::FieldLength {
                expected: grid.n_cells(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell field contains non-finite value {v}"
            )));
        }
        Ok(CellField { grid, values })
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..grid.n_cells())
            .map(|i| f(grid.cell_center(i)))
            .collect();
        CellField::new(grid, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        CellField {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, k0: usize, l0: usize) -> f64 {
        self.values[self.grid.cell_index(k0, l0)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation of cell-centre values at `p`. Periodic axes
    /// wrap; reflecting axes clamp to the outermost centres.
    pub fn interp_bilinear(&self, p: Point) -> f64 {
        let g = &self.grid;
        let q = g.wrap_point(p);
        let (i0, i1, fx) = interp_axis(q[0], g.x1_min, g.b_x1, g.k, g.periodic_x1);
        let (j0, j1, fy) = interp_axis(q[1], g.x2_min, g.b_x2, g.l, g.periodic_x2);
        let v00 = self.values[g.cell_index(i0, j0)];
        let v10 = self.values[g.cell_index(i1, j0)];
        let v01 = self.values[g.cell_index(i0, j1)];
        let v11 = self.values[g.cell_index(i1, j1)];
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }
}

/// Index pair and fraction for 1-D interpolation on cell centres.
fn interp_axis(x: f64, min: f64, b: f64, count: usize, periodic: bool) -> (usize, usize, f64) {
    let s = (x - min) / b - 0.5;
    if periodic {
        let i = s.floor();
        let frac = s - i;
        let i0 = (i as isize).rem_euclid(count as isize) as usize;
        let i1 = (i0 + 1) % count;
        (i0, i1, frac)
    } else if s <= 0.0 {
        (0, 0, 0.0)
    } else if s >= (count - 1) as f64 {
        (count - 1, count - 1, 0.0)
    } else {
        let i = s.floor();
        (i as usize, i as usize + 1, s - i)
    }
}

/// One real value per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    grid: Grid,
    values: Vec<f64>,
}

impl NodeField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::FieldLength {
                expected: grid.n_nodes(),
                found: values.len(),
            });
        }
        Ok(NodeField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node value with wraparound indexing on periodic axes, so `i = K` is
    /// legal there and aliases node 0.
    #[inline]
    pub fn at_wrapped(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let iw = if g.periodic_x1 { i % g.k } else { i };
        let jw = if g.periodic_x2 { j % g.l } else { j };
        self.values[g.node_index(iw, jw)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Averages a cell field onto lattice nodes: each node takes the arithmetic
/// mean of its adjacent cells (four in the interior, fewer at reflecting
/// edges, wrapped neighbours on periodic axes).
pub fn cell_to_node(field: &CellField) -> NodeField {
    let g = *field.grid();
    let ni = g.n_nodes_x1();
    let nj = g.n_nodes_x2();
    let mut values = vec![0.0; ni * nj];
    for j in 0..nj {
        let rows = adjacent_cells(j, g.l, g.periodic_x2);
        for i in 0..ni {
            let cols = adjacent_cells(i, g.k, g.periodic_x1);
            let mut sum = 0.0;
            let mut n = 0usize;
            for &l0 in rows.iter().flatten() {
                for &k0 in cols.iter().flatten() {
                    sum += field.values()[g.cell_index(k0, l0)];
                    n += 1;
                }
            }
            values[g.node_index(i, j)] = sum / n as f64;
        }
    }
    NodeField { grid: g, values }
}

/// The up-to-two cell indices adjacent to node line `i` along one axis.
fn adjacent_cells(i: usize, count: usize, periodic: bool) -> [Option<usize>; 2] {
    if periodic {
        let lo = (i + count - 1) % count;
        let hi = i % count;
        [Some(lo), Some(hi)]
    } else {
        let lo = i.checked_sub(1);
        let hi = if i < count { Some(i) } else { None };
        [lo, hi]
    }
}
