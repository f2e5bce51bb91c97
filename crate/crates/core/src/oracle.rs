//! Brute-force references for the test suites.
//!
//! Nothing here calls the main energy or operator code. Kernel weights are evaluated
//! from node coordinates, tails and the cell self-interaction coefficient by their own
//! quadrature routes (adaptive Simpson), and linear algebra is dense.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Mask};
use crate::operator::{AnisoParams, DiagonalRule, IsoParams};

/// Largest padded node count the dense assembly accepts.
pub const SIZE_GUARD: usize = 4096;
/// Largest interior cell count mask enumeration accepts.
pub const ENUMERATION_GUARD: usize = 20;

/// Square matrix over the interior nodes of a grid, rows in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }
    pub fn size(&self) -> usize {
        self.n
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }
    /// Largest `|L_ij − L_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                m = m.max(libm::fabs(self.get(i, j) - self.get(j, i)));
            }
        }
        m
    }
    /// `L · u` on interior values in cell order.
    pub fn mul(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * u[j]).sum()).collect()
    }
    /// Nonzero entries as `(i, j, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
    /// CSV text `i,j,value` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,value\n");
        for (i, j, v) in self.triplets() {
            s.push_str(&format!("{i},{j},{v:?}\n"));
        }
        s
    }
    fn restricted(&self, cells: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(cells.len(), cells.len(), |a, b| self.get(cells[a], cells[b]))
    }
}

fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || libm::fabs(delta) <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Exterior-of-box kernel integral seen from a point: 1D closed form, 2D polar with
/// the radius to the box edge integrated exactly and the angle by adaptive Simpson
/// over the full circle split at the corner directions.
pub fn exterior_tail(grid: &Grid, x: [f64; 2], b: f64) -> f64 {
    let (lo0, hi0) = grid.padded_bounds(0);
    if grid.dim() == 1 {
        return libm::pow(x[0] - lo0, -b) / b + libm::pow(hi0 - x[0], -b) / b;
    }
    let (lo1, hi1) = grid.padded_bounds(1);
    let exit = move |theta: f64| {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let rx = if c > 0.0 { (hi0 - x[0]) / c } else if c < 0.0 { (lo0 - x[0]) / c } else { f64::INFINITY };
        let ry = if s > 0.0 { (hi1 - x[1]) / s } else if s < 0.0 { (lo1 - x[1]) / s } else { f64::INFINITY };
        libm::pow(rx.min(ry), -b) / b
    };
    let mut corners = [
        libm::atan2(hi1 - x[1], hi0 - x[0]),
        libm::atan2(hi1 - x[1], lo0 - x[0]),
        libm::atan2(lo1 - x[1], lo0 - x[0]) + 2.0 * PI,
        libm::atan2(lo1 - x[1], hi0 - x[0]) + 2.0 * PI,
    ];
    corners.sort_by(|a, b| a.total_cmp(b));
    let mut acc = 0.0;
    let mut start = corners[3] - 2.0 * PI;
    for &end in &corners {
        acc += simpson_adaptive(&exit, start, end, 1e-14);
        start = end;
    }
    acc
}

/// `∫_0^{2π} |cos θ|^p dθ` by adaptive Simpson.
pub fn circle_moment(p: f64) -> f64 {
    4.0 * simpson_adaptive(&|t: f64| libm::pow(libm::cos(t), p), 0.0, FRAC_PI_2, 1e-15)
}

/// Direction-averaged self-interaction coefficient of a cell. In 2D the double integral
/// over the square is reduced with the substitution `z = r(1, t)` on each half, giving
/// `Q(a) = 8∫_0^1 (1+t²)^{(a−2)/2} [1/a − (1+t)/(a+1) + t/(a+2)] dt`.
pub fn cell_self_coefficient(dim: usize, a: f64, p: f64) -> f64 {
    if dim == 1 {
        return 2.0 / (a * (a + 1.0));
    }
    let f = |t: f64| libm::pow(1.0 + t * t, 0.5 * (a - 2.0)) * (1.0 / a - (1.0 + t) / (a + 1.0) + t / (a + 2.0));
    let q = 8.0 * simpson_adaptive(&f, 0.0, 1.0, 1e-15);
    circle_moment(p) / (2.0 * PI) * q
}

/// Which index runs in the outer loop of the assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyOrder {
    RowMajor,
    ColumnMajor,
}

/// Matrix of the `p = 2` operator over interior nodes.
pub fn assemble_dense_p2(grid: &Grid, params: &IsoParams) -> Result<DenseMatrix> {
    assemble_dense_p2_ordered(grid, params, AssemblyOrder::RowMajor)
}

pub fn assemble_dense_p2_ordered(grid: &Grid, params: &IsoParams, order: AssemblyOrder) -> Result<DenseMatrix> {
    if grid.node_count() > SIZE_GUARD {
        return Err(Error::SizeGuard { nodes: grid.node_count(), limit: SIZE_GUARD });
    }
    if params.p != 2.0 {
        return Err(Error::InvalidParams("dense assembly is for p = 2 only".into()));
    }
    params.validate()?;
    let dim = grid.dim();
    let h = grid.spacing();
    let hd = libm::pow(h, dim as f64);
    let cells = grid.interior_nodes();
    let n = cells.len();
    let mut l = DenseMatrix::zeros(n);

    // local part: 2d/Δ² on the diagonal, −1/Δ² between edge neighbours
    let local_coef = if params.s == 1.0 {
        1.0
    } else {
        match params.diagonal {
            DiagonalRule::Excluded => 0.0,
            DiagonalRule::CellAverage => {
                let a = 2.0 * (1.0 - params.s);
                params.kappa * (1.0 - params.s) * libm::pow(h, a) * cell_self_coefficient(dim, a, 2.0)
            }
        }
    };
    let neighbours = |i: usize, j: usize| {
        let (a, b) = (grid.axis_index(cells[i]), grid.axis_index(cells[j]));
        a[0].abs_diff(b[0]) + a[1].abs_diff(b[1]) == 1
    };
    if local_coef != 0.0 {
        for i in 0..n {
            l.add(i, i, local_coef * 2.0 * dim as f64 / (h * h));
            for j in 0..n {
                if neighbours(i, j) {
                    l.add(i, j, -local_coef / (h * h));
                }
            }
        }
    }
    if params.s == 1.0 {
        return Ok(l);
    }

    let c = params.kappa * (1.0 - params.s);
    let expo = dim as f64 + params.s * params.p;
    let kernel = |x: [f64; 2], y: [f64; 2]| {
        let r2 = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]);
        libm::pow(libm::sqrt(r2), -expo)
    };
    let all: Vec<[f64; 2]> = (0..grid.node_count()).map(|k| grid.coords(k)).collect();
    let diag_entry = |i: usize| {
        let xi = grid.coords(cells[i]);
        let mut s = 0.0;
        for (k, &y) in all.iter().enumerate() {
            if k != cells[i] {
                s += kernel(xi, y);
            }
        }
        c * (2.0 * hd * s + 2.0 * exterior_tail(grid, xi, params.s * params.p))
    };
    let off = |i: usize, j: usize| -2.0 * c * hd * kernel(grid.coords(cells[i]), grid.coords(cells[j]));
    match order {
        AssemblyOrder::RowMajor => {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        l.add(i, i, diag_entry(i));
                    } else {
                        l.add(i, j, off(i, j));
                    }
                }
            }
        }
        AssemblyOrder::ColumnMajor => {
            for j in 0..n {
                for i in (0..n).rev() {
                    if i == j {
                        l.add(i, i, diag_entry(i));
                    } else {
                        l.add(i, j, off(j, i));
                    }
                }
            }
        }
    }
    Ok(l)
}

/// Solves `L_AA u = f_A` by Cholesky on the mask block; zero off the mask.
pub fn dense_solve_p2(l: &DenseMatrix, mask: &Mask, f: &Field) -> Result<Field> {
    let grid = mask.grid();
    let cells = mask.cell_indices();
    let mut out = vec![0.0; grid.node_count()];
    if cells.is_empty() {
        return Ok(Field::from_values(grid, out)?);
    }
    let a = l.restricted(&cells);
    let rhs = DVector::from_iterator(cells.len(), cells.iter().map(|&c| f.value(grid.cell_node(c))));
    let chol = a.cholesky().ok_or(Error::Singular)?;
    let u = chol.solve(&rhs);
    for (k, &c) in cells.iter().enumerate() {
        out[grid.cell_node(c)] = u[k];
    }
    Field::from_values(grid, out)
}

/// Smallest eigenpair of the mask block, eigenvector scaled to `Δ^d Σ u² = 1` with
/// nonnegative sum.
pub fn dense_eigen_p2(l: &DenseMatrix, mask: &Mask) -> Result<(f64, Field)> {
    let grid = mask.grid();
    let cells = mask.cell_indices();
    if cells.is_empty() {
        return Err(Error::Precondition("eigenproblem on an empty mask".into()));
    }
    let eig = l.restricted(&cells).symmetric_eigen();
    let (k, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::Singular)?;
    if !(lambda > 0.0) {
        return Err(Error::Singular);
    }
    let v = eig.eigenvectors.column(k);
    let norm = libm::sqrt(grid.cell_volume() * v.iter().map(|x| x * x).sum::<f64>());
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut out = vec![0.0; grid.node_count()];
    for (a, &c) in cells.iter().enumerate() {
        out[grid.cell_node(c)] = sign * v[a] / norm;
    }
    Ok((lambda, Field::from_values(grid, out)?))
}

/// All masks with exactly `budget` cells, in lexicographic order of their cell index
/// sets.
pub fn enumerate_masks(grid: &alloc::sync::Arc<Grid>, budget: usize) -> Result<MaskIter> {
    let n = grid.interior_count();
    if n > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard { cells: n, limit: ENUMERATION_GUARD });
    }
    let done = budget > n;
    Ok(MaskIter { grid: grid.clone(), n, idx: (0..budget).collect(), done })
}

pub struct MaskIter {
    grid: alloc::sync::Arc<Grid>,
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for MaskIter {
    type Item = Mask;

    fn next(&mut self) -> Option<Mask> {
        if self.done {
            return None;
        }
        let mask = Mask::from_cell_indices(&self.grid, &self.idx).ok()?;
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(mask)
    }
}

/// Sum of directional energies computed grid line by grid line: double sums along each
/// line, closed-form tails past the padded box, and the cell self term from one-sided
/// differences with the exterior taken as zero.
pub fn directional_energy_lines(u: &Field, params: &AnisoParams) -> f64 {
    let grid = u.grid();
    let h = grid.spacing();
    let dim = grid.dim();
    let m = grid.padded_per_axis();
    let hd = libm::pow(h, dim as f64);
    let lines = if dim == 1 { 1 } else { m };
    let mut total = 0.0;
    for axis in 0..dim {
        let (s, p) = (params.s[axis], params.p[axis]);
        let (lo, hi) = grid.padded_bounds(axis);
        let mut axis_sum = 0.0;
        for t in 0..lines {
            let line: Vec<f64> = (0..m)
                .map(|l| {
                    let node = if dim == 1 { l } else if axis == 0 { l + m * t } else { t + m * l };
                    u.value(node)
                })
                .collect();
            let mut jumps = 0.0;
            let mut prev = 0.0;
            for &v in line.iter().chain(core::iter::once(&0.0)) {
                jumps += libm::pow(libm::fabs((v - prev) / h), p);
                prev = v;
            }
            if s == 1.0 {
                axis_sum += 2.0 / p * hd * jumps;
                continue;
            }
            let mut pairs = 0.0;
            let mut ext = 0.0;
            for (k, &uk) in line.iter().enumerate() {
                for (l, &ul) in line.iter().enumerate() {
                    if k != l {
                        let r = h * (k as f64 - l as f64).abs();
                        pairs += libm::pow(libm::fabs(uk - ul), p) / libm::pow(r, 1.0 + s * p);
                    }
                }
                let x = lo + (k as f64 + 0.5) * h;
                ext += libm::pow(libm::fabs(uk), p) * (libm::pow(x - lo, -s * p) + libm::pow(hi - x, -s * p)) / (s * p);
            }
            let mut line_energy = hd * h * pairs + 2.0 * hd * ext;
            if params.diagonal == DiagonalRule::CellAverage {
                let a = p * (1.0 - s);
                line_energy += libm::pow(h, a) * 2.0 / (a * (a + 1.0)) * hd * jumps;
            }
            axis_sum += (1.0 - s) * s * line_energy;
        }
        total += axis_sum;
    }
    total
}
