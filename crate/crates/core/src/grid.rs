//! Cell-centred tensor grids, cell masks and nodal fields.
//!
//! A grid covers the box `[box_min, box_max]` with `N` cells per axis and is surrounded
//! by `P` padding cells on every side. Node `k` along an axis sits at
//! `box_min + (k - P + 1/2) Δ`. Padding nodes always carry the value zero; together with
//! the analytic exterior tails in [`crate::operator`] they realise the zero extension
//! of a field to the whole space.
//!
//! Node indices run over the padded grid with the first axis fastest
//! (`k0 + M * k1`, `M = N + 2P`). Interior cells use the same ordering on the
//! unpadded `N^dim` block; masks are stored and serialised in that order.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub nodes_per_axis: usize,
    pub padding_cells: usize,
}

impl GridSpec {
    /// Unit box `[0, 1]^dim`.
    pub fn unit(dim: usize, nodes_per_axis: usize, padding_cells: usize) -> Self {
        GridSpec {
            dim,
            box_min: alloc::vec![0.0; dim],
            box_max: alloc::vec![1.0; dim],
            nodes_per_axis,
            padding_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    h: f64,
    m: usize,
    interior: Vec<usize>,
}

impl Grid {
    /// Builds and validates a grid.
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        if spec.dim != 1 && spec.dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {}", spec.dim)));
        }
        if spec.box_min.len() != spec.dim || spec.box_max.len() != spec.dim {
            return Err(Error::InvalidGrid(format!(
                "box bounds need {} coordinates",
                spec.dim
            )));
        }
        if spec.nodes_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "nodes_per_axis must be at least 2, got {}",
                spec.nodes_per_axis
            )));
        }
        for a in 0..spec.dim {
            let (lo, hi) = (spec.box_min[a], spec.box_max[a]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!("axis {a}: need box_max > box_min")));
            }
        }
        let h = (spec.box_max[0] - spec.box_min[0]) / spec.nodes_per_axis as f64;
        if spec.dim == 2 {
            let h1 = (spec.box_max[1] - spec.box_min[1]) / spec.nodes_per_axis as f64;
            if libm::fabs(h1 - h) > 1e-12 * h {
                return Err(Error::InvalidGrid(
                    "2D boxes must be square so that the mesh width is uniform".into(),
                ));
            }
        }
        let n = spec.nodes_per_axis;
        let pad = spec.padding_cells;
        let m = n + 2 * pad;
        let interior = if spec.dim == 1 {
            (0..n).map(|c| c + pad).collect()
        } else {
            let mut v = Vec::with_capacity(n * n);
            for c1 in 0..n {
                for c0 in 0..n {
                    v.push((c0 + pad) + m * (c1 + pad));
                }
            }
            v
        };
        Ok(Arc::new(Grid { spec, h, m, interior }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dim
    }
    /// Mesh width Δ.
    pub fn spacing(&self) -> f64 {
        self.h
    }
    /// Δ^dim, the measure carried by one node.
    pub fn cell_volume(&self) -> f64 {
        libm::pow(self.h, self.spec.dim as f64)
    }
    /// Interior cells per axis (N).
    pub fn cells_per_axis(&self) -> usize {
        self.spec.nodes_per_axis
    }
    pub fn padding(&self) -> usize {
        self.spec.padding_cells
    }
    /// Nodes per axis including padding (N + 2P).
    pub fn padded_per_axis(&self) -> usize {
        self.m
    }
    pub fn node_count(&self) -> usize {
        self.m.pow(self.spec.dim as u32)
    }
    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }
    /// Node index of every interior cell, in cell order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }
    pub fn cell_node(&self, cell: usize) -> usize {
        self.interior[cell]
    }
    /// Per-axis indices of a node (second entry 0 in 1D).
    pub fn axis_index(&self, node: usize) -> [usize; 2] {
        if self.spec.dim == 1 {
            [node, 0]
        } else {
            [node % self.m, node / self.m]
        }
    }
    pub fn node_at(&self, k: [usize; 2]) -> usize {
        if self.spec.dim == 1 {
            k[0]
        } else {
            k[0] + self.m * k[1]
        }
    }
    /// Coordinate of a padded-grid index along `axis`.
    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.spec.box_min[axis] + (k as f64 - self.spec.padding_cells as f64 + 0.5) * self.h
    }
    /// Node coordinates (second entry 0 in 1D).
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let k = self.axis_index(node);
        if self.spec.dim == 1 {
            [self.coord(0, k[0]), 0.0]
        } else {
            [self.coord(0, k[0]), self.coord(1, k[1])]
        }
    }
    pub fn is_interior(&self, node: usize) -> bool {
        let pad = self.spec.padding_cells;
        let n = self.spec.nodes_per_axis;
        let k = self.axis_index(node);
        (0..self.spec.dim).all(|a| k[a] >= pad && k[a] < pad + n)
    }
    /// Interior cell of a node, if any.
    pub fn node_cell(&self, node: usize) -> Option<usize> {
        if !self.is_interior(node) {
            return None;
        }
        let pad = self.spec.padding_cells;
        let n = self.spec.nodes_per_axis;
        let k = self.axis_index(node);
        Some(if self.spec.dim == 1 {
            k[0] - pad
        } else {
            (k[0] - pad) + n * (k[1] - pad)
        })
    }
    /// Lower and upper corner of the padded box along `axis`.
    pub fn padded_bounds(&self, axis: usize) -> (f64, f64) {
        let ext = self.spec.padding_cells as f64 * self.h;
        (self.spec.box_min[axis] - ext, self.spec.box_max[axis] + ext)
    }
    /// |Ω|, the volume of the unpadded box.
    pub fn domain_volume(&self) -> f64 {
        (0..self.spec.dim)
            .map(|a| self.spec.box_max[a] - self.spec.box_min[a])
            .product()
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Boolean per interior cell: a discrete admissible domain.
#[derive(Debug, Clone)]
pub struct Mask {
    grid: Arc<Grid>,
    cells: Vec<bool>,
    count: usize,
}

impl PartialEq for Mask {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.cells == other.cells
    }
}
impl Eq for Mask {}

impl Mask {
    pub fn from_cells(grid: &Arc<Grid>, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.interior_count() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} cells, grid has {}",
                cells.len(),
                grid.interior_count()
            )));
        }
        let count = cells.iter().filter(|&&c| c).count();
        Ok(Mask { grid: grid.clone(), cells, count })
    }

    /// Mask of the cells whose centre satisfies `pred`.
    pub fn from_predicate(grid: &Arc<Grid>, pred: impl Fn(&[f64]) -> bool) -> Self {
        let dim = grid.dim();
        let cells: Vec<bool> = grid
            .interior_nodes()
            .iter()
            .map(|&node| pred(&grid.coords(node)[..dim]))
            .collect();
        let count = cells.iter().filter(|&&c| c).count();
        Mask { grid: grid.clone(), cells, count }
    }

    pub fn from_cell_indices(grid: &Arc<Grid>, idx: &[usize]) -> Result<Self> {
        let mut cells = alloc::vec![false; grid.interior_count()];
        for &i in idx {
            if i >= cells.len() {
                return Err(Error::InvalidGrid(format!("cell {i} out of range")));
            }
            cells[i] = true;
        }
        Mask::from_cells(grid, cells)
    }

    pub fn full(grid: &Arc<Grid>) -> Self {
        Mask::from_predicate(grid, |_| true)
    }
    pub fn empty(grid: &Arc<Grid>) -> Self {
        Mask::from_predicate(grid, |_| false)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
    pub fn count(&self) -> usize {
        self.count
    }
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
    pub fn contains(&self, cell: usize) -> bool {
        self.cells[cell]
    }
    /// Δ^dim · (number of cells).
    pub fn volume(&self) -> f64 {
        self.count as f64 * self.grid.cell_volume()
    }
    /// Indices of the true cells, ascending.
    pub fn cell_indices(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&c| self.cells[c]).collect()
    }
    /// Node indices of the true cells, ascending in cell order.
    pub fn nodes(&self) -> Vec<usize> {
        self.cell_indices().into_iter().map(|c| self.grid.cell_node(c)).collect()
    }

    pub fn with_cell(&self, cell: usize, value: bool) -> Self {
        let mut cells = self.cells.clone();
        cells[cell] = value;
        Mask::from_cells(&self.grid, cells).expect("same length")
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| f(a, b)).collect();
        Mask::from_cells(&self.grid, cells)
    }
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a || b)
    }
    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a && b)
    }
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a && !b)
    }
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        same_grid(&self.grid, &other.grid)
            && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    /// Mirror image through the box centre along every axis.
    pub fn reflect(&self) -> Mask {
        let n = self.grid.cells_per_axis();
        let cells = (0..self.cells.len())
            .map(|c| {
                let src = if self.grid.dim() == 1 {
                    n - 1 - c
                } else {
                    let (c0, c1) = (c % n, c / n);
                    (n - 1 - c0) + n * (n - 1 - c1)
                };
                self.cells[src]
            })
            .collect();
        Mask::from_cells(&self.grid, cells).expect("same length")
    }

    /// True if the cells form one component under edge adjacency (empty masks count).
    pub fn is_edge_connected(&self) -> bool {
        let Some(start) = self.cells.iter().position(|&c| c) else {
            return true;
        };
        let n = self.grid.cells_per_axis();
        let dim = self.grid.dim();
        let mut seen = alloc::vec![false; self.cells.len()];
        let mut stack = alloc::vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(c) = stack.pop() {
            reached += 1;
            let mut nbrs: Vec<usize> = Vec::with_capacity(4);
            let (c0, c1) = if dim == 1 { (c, 0) } else { (c % n, c / n) };
            if c0 > 0 {
                nbrs.push(c - 1);
            }
            if c0 + 1 < n {
                nbrs.push(c + 1);
            }
            if dim == 2 {
                if c1 > 0 {
                    nbrs.push(c - n);
                }
                if c1 + 1 < n {
                    nbrs.push(c + n);
                }
            }
            for q in nbrs {
                if self.cells[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        reached == self.count
    }
}

/// One value per padded-grid node; zero on padding.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field { grid: grid.clone(), values: alloc::vec![0.0; grid.node_count()] }
    }

    /// Takes node values; rejects non-finite entries and nonzero padding.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if (0..values.len()).any(|i| values[i] != 0.0 && !grid.is_interior(i)) {
            return Err(Error::Precondition("padding nodes must be zero".into()));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Interior values in cell order.
    pub fn from_interior(grid: &Arc<Grid>, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.interior_count() {
            return Err(Error::InvalidGrid("interior length mismatch".into()));
        }
        let mut values = alloc::vec![0.0; grid.node_count()];
        for (c, &node) in grid.interior_nodes().iter().enumerate() {
            values[node] = interior[c];
        }
        Field::from_values(grid, values)
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let mut values = alloc::vec![0.0; grid.node_count()];
        for &node in grid.interior_nodes() {
            values[node] = f(&grid.coords(node)[..dim]);
        }
        Field { grid: grid.clone(), values }
    }

    /// Samples `f` on the mask and sets every other node to exactly zero.
    pub fn supported_on(mask: &Mask, f: impl Fn(&[f64]) -> f64) -> Self {
        let grid = mask.grid();
        let dim = grid.dim();
        let mut values = alloc::vec![0.0; grid.node_count()];
        for node in mask.nodes() {
            values[node] = f(&grid.coords(node)[..dim]);
        }
        Field { grid: grid.clone(), values }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Field { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }
    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_nodes().iter().map(|&n| self.values[n]).collect()
    }
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&self, alpha: f64) -> Field {
        Field::from_raw(&self.grid, self.values.iter().map(|v| alpha * v).collect())
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut values = alloc::vec![0.0; self.values.len()];
        for &node in self.grid.interior_nodes() {
            values[node] = f(self.values[node]);
        }
        Field::from_raw(&self.grid, values)
    }
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        let mut values = alloc::vec![0.0; self.values.len()];
        for &node in self.grid.interior_nodes() {
            values[node] = f(self.values[node], other.values[node]);
        }
        Ok(Field::from_raw(&self.grid, values))
    }
    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }
    /// Nodewise maximum.
    pub fn max(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, f64::max)
    }
    /// Copy with every node outside `mask` set to zero.
    pub fn restricted_to(&self, mask: &Mask) -> Result<Field> {
        if !same_grid(&self.grid, mask.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut values = alloc::vec![0.0; self.values.len()];
        for node in mask.nodes() {
            values[node] = self.values[node];
        }
        Ok(Field::from_raw(&self.grid, values))
    }
    /// max_i |u_i|
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max(libm::fabs(a - b)))
    }
    /// Δ^dim · Σ u_i
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * pairwise_sum(&self.values)
    }
}

/// Discrete L^p norm `(Δ^dim Σ |u_i|^p)^{1/p}`.
pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParams(format!("lp_norm needs p >= 1, got {p}")));
    }
    let terms: Vec<f64> = u.values.iter().map(|v| libm::pow(libm::fabs(*v), p)).collect();
    let sum = u.grid.cell_volume() * pairwise_sum(&terms);
    Ok(libm::pow(sum, 1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, pad: usize) -> Arc<Grid> {
        Grid::new(GridSpec::unit(1, n, pad)).unwrap()
    }

    #[test]
    fn cell_centred_1d() {
        let g = grid1(4, 0);
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.spacing(), 0.25);
        let xs: Vec<f64> = (0..4).map(|i| g.coords(i)[0]).collect();
        assert_eq!(xs, [0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn padding_nodes_are_zero() {
        let g = grid1(4, 2);
        assert_eq!(g.node_count(), 8);
        let f = Field::from_fn(&g, |_| 1.0);
        assert_eq!(f.values(), &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let mut bad = f.values().to_vec();
        bad[0] = 1.0;
        assert!(Field::from_values(&g, bad).is_err());
    }

    #[test]
    fn square_2d_node_count() {
        let g = Grid::new(GridSpec::unit(2, 8, 1)).unwrap();
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.spacing(), 0.125);
        assert_eq!(g.interior_count(), 64);
        assert!(g.interior_nodes().iter().all(|&n| g.is_interior(n)));
        for (c, &n) in g.interior_nodes().iter().enumerate() {
            assert_eq!(g.node_cell(n), Some(c));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid::new(GridSpec::unit(3, 4, 0)).is_err());
        assert!(Grid::new(GridSpec::unit(1, 1, 0)).is_err());
        let rect = GridSpec {
            dim: 2,
            box_min: alloc::vec![0.0, 0.0],
            box_max: alloc::vec![1.0, 2.0],
            nodes_per_axis: 4,
            padding_cells: 0,
        };
        assert!(matches!(Grid::new(rect), Err(Error::InvalidGrid(_))));
        let flipped = GridSpec {
            dim: 1,
            box_min: alloc::vec![1.0],
            box_max: alloc::vec![0.0],
            nodes_per_axis: 4,
            padding_cells: 0,
        };
        assert!(Grid::new(flipped).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid1(2, 0);
        assert_eq!(lp_norm(&Field::zeros(&g), 2.0).unwrap(), 0.0);
        let u = Field::from_fn(&g, |_| 1.0);
        assert!((lp_norm(&u, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(lp_norm(&u, 0.5).is_err());
    }

    #[test]
    fn mask_volumes() {
        let g = grid1(10, 2);
        assert!((Mask::full(&g).volume() - 1.0).abs() < 1e-15);
        assert_eq!(Mask::empty(&g).volume(), 0.0);
        let m = Mask::from_predicate(&g, |x| x[0] < 0.35);
        assert_eq!(m.cell_indices(), [0, 1, 2]);
        assert!((m.volume() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mask_set_algebra() {
        let g = grid1(6, 1);
        let a = Mask::from_cell_indices(&g, &[0, 1]).unwrap();
        let b = Mask::from_cell_indices(&g, &[4]).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.volume(), a.volume() + b.volume());
        assert!(a.is_subset_of(&u));
        assert!(!u.is_subset_of(&a));
        assert_eq!(u.reflect().cell_indices(), [1, 4, 5]);
        assert!(!u.is_edge_connected());
        assert!(a.is_edge_connected());
    }

    #[test]
    fn reflect_2d_is_involution() {
        let g = Grid::new(GridSpec::unit(2, 4, 0)).unwrap();
        let m = Mask::from_cell_indices(&g, &[0, 1, 6]).unwrap();
        assert_eq!(m.reflect().cell_indices(), [9, 14, 15]);
        assert_eq!(m.reflect().reflect(), m);
    }
}
