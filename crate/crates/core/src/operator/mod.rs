//! Discrete Gagliardo energies and their Riesz representers.
//!
//! For `s < 1` the isotropic energy of a field `u` (zero outside the padded box) is
//!
//! ```text
//! J(u) = κ(1−s) [ Δ^{2d} Σ_{i≠j} |u_i − u_j|^p w_ij + 2 Δ^d Σ_i |u_i|^p T_i + self(u) ]
//! ```
//!
//! with `w_ij = |x_i − x_j|^{−(d+sp)}` and `T_i` the kernel integrated over the
//! complement of the padded box. `self(u)` is the interaction of every cell with itself
//! (see [`DiagonalRule`]). The representer `g = apply(u)` satisfies
//! `Δ^d Σ g_i v_i = d/dε E(u + εv)` with `E = J/p`, so the torsion problem reads
//! `apply(u) = 1`.
//!
//! The anisotropic energy is a sum of one-dimensional directional energies taken along
//! grid lines, `J_i` with factor `(1−s_i)s_i`, or `(2/p_i) ∫|∂_i u|^{p_i}` when `s_i = 1`,
//! and `E = Σ J_i / p_i`.

mod local;
mod params;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

pub(crate) use local::Pow;
pub use params::*;

use crate::error::{Error, Result};
use crate::grid::{same_grid, Field, Grid};
use crate::par::{map_collect, pairwise_sum};
use crate::quad;

/// Precomputed kernel tables for one grid and one parameter set.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: Arc<Grid>,
    params: Params,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Local { p: f64, pw: Pow },
    Iso(IsoData),
    Aniso(Vec<AxisData>),
}

#[derive(Debug, Clone)]
struct IsoData {
    c: f64,
    p: f64,
    pw: Pow,
    /// Kernel by offset code `|dk0| + M |dk1|`.
    weights: Vec<f64>,
    /// Exterior tail per node (zero on padding).
    tail: Vec<f64>,
    /// `c · Δ^a · S̄`, zero when the diagonal is excluded.
    self_coef: f64,
}

#[derive(Debug, Clone)]
struct AxisData {
    axis: usize,
    p: f64,
    pw: Pow,
    /// `s_i = 1`: plain directional gradient energy.
    local: bool,
    c: f64,
    /// 1D kernel `(Δ|dk|)^{−(1+sp)}` by `|dk|`.
    weights: Vec<f64>,
    /// 1D tail by index along the axis.
    tail: Vec<f64>,
    self_coef: f64,
}

impl Operator {
    /// Builds the tables. Anisotropic parameters must be admissible for the grid
    /// dimension.
    pub fn new(grid: &Arc<Grid>, params: impl Into<Params>) -> Result<Self> {
        let params = params.into();
        let kind = match &params {
            Params::Iso(iso) => {
                iso.validate()?;
                if iso.is_local() {
                    Kind::Local { p: iso.p, pw: Pow::new(iso.p) }
                } else {
                    Kind::Iso(IsoData::new(grid, iso))
                }
            }
            Params::Aniso(an) => {
                validate_aniso(an, grid.dim()).admissible()?;
                Kind::Aniso(
                    (0..grid.dim())
                        .map(|axis| AxisData::new(grid, axis, an.s[axis], an.p[axis], an.diagonal))
                        .collect(),
                )
            }
        };
        Ok(Operator { grid: grid.clone(), params, kind })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Exponent of each energy component: one for isotropic, one per axis otherwise.
    pub fn part_exponents(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Local { p, .. } => vec![*p],
            Kind::Iso(d) => vec![d.p],
            Kind::Aniso(axes) => axes.iter().map(|a| a.p).collect(),
        }
    }

    /// Exterior tail `T_i` of the isotropic kernel, `None` for other kinds.
    pub fn tail(&self, node: usize) -> Option<f64> {
        match &self.kind {
            Kind::Iso(d) => Some(d.tail[node]),
            _ => None,
        }
    }

    fn check(&self, u: &Field) -> Result<()> {
        if !same_grid(&self.grid, u.grid()) {
            return Err(Error::GridMismatch);
        }
        if u.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Energy components: `[J]` for isotropic parameters, `[J_1, …, J_d]` otherwise.
    pub fn energy_parts(&self, u: &Field) -> Result<Vec<f64>> {
        self.check(u)?;
        let support: Vec<usize> =
            self.grid.interior_nodes().iter().copied().filter(|&n| u.value(n) != 0.0).collect();
        let vals: Vec<f64> = support.iter().map(|&n| u.value(n)).collect();
        Ok(self.support(&support).eval(&vals).parts)
    }

    /// `J(u)`, summed over axes for anisotropic parameters.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        Ok(self.energy_parts(u)?.iter().sum())
    }

    /// `E(u) = Σ J_i / p_i`, the potential whose representer is [`Operator::apply`].
    pub fn potential(&self, u: &Field) -> Result<f64> {
        let parts = self.energy_parts(u)?;
        Ok(parts.iter().zip(self.part_exponents()).map(|(j, p)| j / p).sum())
    }

    /// Riesz representer of `E` at every interior node; padding stays zero.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let interior = self.grid.interior_nodes();
        let vals = map_collect(interior.len(), |c| self.apply_at(u.values(), interior[c]));
        let mut out = vec![0.0; self.grid.node_count()];
        for (c, &node) in interior.iter().enumerate() {
            out[node] = vals[c];
        }
        Ok(Field::from_raw(&self.grid, out))
    }

    /// Representer at one node straight from the defining sums over the padded grid.
    /// `u` holds one value per node.
    pub fn apply_at(&self, u: &[f64], node: usize) -> f64 {
        let g = &*self.grid;
        match &self.kind {
            Kind::Local { pw, .. } => local::iso_grad_at(g, u, node, *pw),
            Kind::Iso(d) => {
                let ki = g.axis_index(node);
                let ui = u[node];
                let mut acc = 0.0;
                for (j, &uj) in u.iter().enumerate() {
                    if j != node {
                        acc += d.pw.phi(ui - uj) * d.weights[offset(g, ki, g.axis_index(j))];
                    }
                }
                let mut out = d.c * (2.0 * g.cell_volume() * acc + 2.0 * d.pw.phi(ui) * d.tail[node]);
                if d.self_coef != 0.0 {
                    out += d.self_coef * local::iso_grad_at(g, u, node, d.pw);
                }
                out
            }
            Kind::Aniso(axes) => {
                let ki = g.axis_index(node);
                let ui = u[node];
                let mut out = 0.0;
                for ax in axes {
                    if ax.local {
                        out += 2.0 / ax.p * local::axis_grad_at(g, u, node, ax.axis, ax.pw);
                        continue;
                    }
                    let k = ki[ax.axis];
                    let mut acc = 0.0;
                    for l in 0..g.padded_per_axis() {
                        if l != k {
                            let uj = u[line_node(g, ki, ax.axis, l)];
                            acc += ax.pw.phi(ui - uj) * ax.weights[k.abs_diff(l)];
                        }
                    }
                    out += ax.c * (2.0 * g.spacing() * acc + 2.0 * ax.pw.phi(ui) * ax.tail[k]);
                    if ax.self_coef != 0.0 {
                        out += ax.self_coef * local::axis_grad_at(g, u, node, ax.axis, ax.pw);
                    }
                }
                out
            }
        }
    }

    /// Tables restricted to fields supported on `nodes` (interior, ascending).
    pub(crate) fn support(&self, nodes: &[usize]) -> Support<'_> {
        Support::new(self, nodes)
    }
}

#[inline]
fn offset(g: &Grid, a: [usize; 2], b: [usize; 2]) -> usize {
    a[0].abs_diff(b[0]) + g.padded_per_axis() * a[1].abs_diff(b[1])
}

/// Node at position `l` on the grid line through `k` along `axis`.
#[inline]
fn line_node(g: &Grid, k: [usize; 2], axis: usize, l: usize) -> usize {
    let mut k = k;
    k[axis] = l;
    g.node_at(k)
}

impl IsoData {
    fn new(grid: &Grid, iso: &IsoParams) -> Self {
        let dim = grid.dim();
        let h = grid.spacing();
        let m = grid.padded_per_axis();
        let sp = iso.s * iso.p;
        let expo = -(dim as f64 + sp);
        let rows = if dim == 1 { 1 } else { m };
        let mut weights = vec![0.0; m * rows];
        for d1 in 0..rows {
            for d0 in 0..m {
                if d0 + d1 > 0 {
                    let r = h * libm::sqrt((d0 * d0 + d1 * d1) as f64);
                    weights[d0 + m * d1] = libm::pow(r, expo);
                }
            }
        }
        let rule = quad::gauss_legendre(iso.tail_points);
        let mut tail = vec![0.0; grid.node_count()];
        let (lo0, hi0) = grid.padded_bounds(0);
        for &node in grid.interior_nodes() {
            let x = grid.coords(node);
            tail[node] = if dim == 1 {
                quad::tail_1d(x[0], lo0, hi0, sp)
            } else {
                let (lo1, hi1) = grid.padded_bounds(1);
                quad::tail_2d(x, [lo0, lo1], [hi0, hi1], sp, &rule)
            };
        }
        let c = iso.kappa * (1.0 - iso.s);
        let self_coef = match iso.diagonal {
            DiagonalRule::Excluded => 0.0,
            DiagonalRule::CellAverage => {
                let a = iso.p * (1.0 - iso.s);
                c * libm::pow(h, a) * quad::self_coefficient(dim, a, iso.p, &rule)
            }
        };
        IsoData { c, p: iso.p, pw: Pow::new(iso.p), weights, tail, self_coef }
    }
}

impl AxisData {
    fn new(grid: &Grid, axis: usize, s: f64, p: f64, diagonal: DiagonalRule) -> Self {
        let pw = Pow::new(p);
        if s == 1.0 {
            return AxisData {
                axis,
                p,
                pw,
                local: true,
                c: 0.0,
                weights: Vec::new(),
                tail: Vec::new(),
                self_coef: 0.0,
            };
        }
        let h = grid.spacing();
        let m = grid.padded_per_axis();
        let sp = s * p;
        let weights =
            (0..m).map(|d| if d == 0 { 0.0 } else { libm::pow(h * d as f64, -(1.0 + sp)) }).collect();
        let (lo, hi) = grid.padded_bounds(axis);
        let tail = (0..m).map(|k| quad::tail_1d(grid.coord(axis, k), lo, hi, sp)).collect();
        let c = (1.0 - s) * s;
        let self_coef = match diagonal {
            DiagonalRule::Excluded => 0.0,
            DiagonalRule::CellAverage => {
                let a = p * (1.0 - s);
                c * libm::pow(h, a) * 2.0 / (a * (a + 1.0))
            }
        };
        AxisData { axis, p, pw, local: false, c, weights, tail, self_coef }
    }
}

/// Energy components, `E` and its representer on the support nodes.
#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub parts: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
}

/// An operator restricted to fields vanishing off a fixed node set `S`.
///
/// Interactions with nodes outside `S` only see `|u_i|^p`, so they fold into one
/// coefficient per node, `Ext_i = Δ^d Σ_{j∉S} w_ij + T_i`, summed directly. One
/// evaluation then costs `O(|S|²)` instead of `O(|S|·nodes)`.
pub(crate) struct Support<'a> {
    op: &'a Operator,
    nodes: Vec<usize>,
    kidx: Vec<[usize; 2]>,
    iso_ext: Vec<f64>,
    axes: Vec<AxisSupport>,
}

struct AxisSupport {
    lines: Vec<Vec<usize>>,
    line_of: Vec<usize>,
    ext: Vec<f64>,
}

impl<'a> Support<'a> {
    fn new(op: &'a Operator, nodes: &[usize]) -> Self {
        let g = &*op.grid;
        let nodes = nodes.to_vec();
        let kidx: Vec<[usize; 2]> = nodes.iter().map(|&n| g.axis_index(n)).collect();
        let mut inside = vec![false; g.node_count()];
        for &n in &nodes {
            inside[n] = true;
        }
        let mut iso_ext = Vec::new();
        let mut axes = Vec::new();
        match &op.kind {
            Kind::Local { .. } => {}
            Kind::Iso(d) => {
                let hd = g.cell_volume();
                iso_ext = map_collect(nodes.len(), |a| {
                    let mut acc = 0.0;
                    for j in 0..g.node_count() {
                        if !inside[j] {
                            acc += d.weights[offset(g, kidx[a], g.axis_index(j))];
                        }
                    }
                    hd * acc + d.tail[nodes[a]]
                });
            }
            Kind::Aniso(list) => {
                let m = g.padded_per_axis();
                for ax in list {
                    let mut line_id = vec![usize::MAX; m];
                    let mut lines: Vec<Vec<usize>> = Vec::new();
                    let mut line_of = Vec::with_capacity(nodes.len());
                    let transverse = 1 - ax.axis;
                    for (a, k) in kidx.iter().enumerate() {
                        let key = if g.dim() == 1 { 0 } else { k[transverse] };
                        if line_id[key] == usize::MAX {
                            line_id[key] = lines.len();
                            lines.push(Vec::new());
                        }
                        lines[line_id[key]].push(a);
                        line_of.push(line_id[key]);
                    }
                    let ext = if ax.local {
                        Vec::new()
                    } else {
                        map_collect(nodes.len(), |a| {
                            let k = kidx[a][ax.axis];
                            let mut acc = 0.0;
                            for l in 0..m {
                                if l != k && !inside[line_node(g, kidx[a], ax.axis, l)] {
                                    acc += ax.weights[k.abs_diff(l)];
                                }
                            }
                            g.spacing() * acc + ax.tail[k]
                        })
                    };
                    axes.push(AxisSupport { lines, line_of, ext });
                }
            }
        }
        Support { op, nodes, kidx, iso_ext, axes }
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Scatters support values into a full node vector.
    pub(crate) fn scatter(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.op.grid.node_count()];
        for (a, &n) in self.nodes.iter().enumerate() {
            full[n] = u[a];
        }
        full
    }

    /// Energy components, potential and representer for values `u` on the support.
    pub(crate) fn eval(&self, u: &[f64]) -> Eval {
        let g = &*self.op.grid;
        let ns = self.nodes.len();
        let full = self.scatter(u);
        let hd = g.cell_volume();
        let (parts, grad) = match &self.op.kind {
            Kind::Local { pw, .. } => {
                let j = local::iso_energy(g, &full, *pw);
                let grad = map_collect(ns, |a| local::iso_grad_at(g, &full, self.nodes[a], *pw));
                (vec![j], grad)
            }
            Kind::Iso(d) => {
                let per: Vec<(f64, f64)> = map_collect(ns, |a| {
                    let ka = self.kidx[a];
                    let ua = u[a];
                    let (mut e, mut gs) = (0.0, 0.0);
                    for b in 0..ns {
                        if b != a {
                            let w = d.weights[offset(g, ka, self.kidx[b])];
                            let (ep, ph) = d.pw.both(ua - u[b]);
                            e += ep * w;
                            gs += ph * w;
                        }
                    }
                    let ext = self.iso_ext[a];
                    let (ep, ph) = d.pw.both(ua);
                    let mut gi = d.c * (2.0 * hd * gs + 2.0 * ph * ext);
                    if d.self_coef != 0.0 {
                        gi += d.self_coef * local::iso_grad_at(g, &full, self.nodes[a], d.pw);
                    }
                    (hd * e + 2.0 * ep * ext, gi)
                });
                let es: Vec<f64> = per.iter().map(|x| x.0).collect();
                let mut j = d.c * hd * pairwise_sum(&es);
                if d.self_coef != 0.0 {
                    j += d.self_coef * local::iso_energy(g, &full, d.pw);
                }
                (vec![j], per.into_iter().map(|x| x.1).collect())
            }
            Kind::Aniso(list) => {
                let mut parts = Vec::with_capacity(list.len());
                let mut grad = vec![0.0; ns];
                for (ax, sup) in list.iter().zip(&self.axes) {
                    if ax.local {
                        let scale = 2.0 / ax.p;
                        parts.push(scale * local::axis_energy(g, &full, ax.axis, ax.pw));
                        let ga = map_collect(ns, |a| {
                            scale * local::axis_grad_at(g, &full, self.nodes[a], ax.axis, ax.pw)
                        });
                        for (t, x) in grad.iter_mut().zip(ga) {
                            *t += x;
                        }
                        continue;
                    }
                    let h = g.spacing();
                    let per: Vec<(f64, f64)> = map_collect(ns, |a| {
                        let k = self.kidx[a][ax.axis];
                        let ua = u[a];
                        let (mut e, mut gs) = (0.0, 0.0);
                        for &b in &sup.lines[sup.line_of[a]] {
                            if b != a {
                                let w = ax.weights[k.abs_diff(self.kidx[b][ax.axis])];
                                let (ep, ph) = ax.pw.both(ua - u[b]);
                                e += ep * w;
                                gs += ph * w;
                            }
                        }
                        let ext = sup.ext[a];
                        let (ep, ph) = ax.pw.both(ua);
                        let mut gi = ax.c * (2.0 * h * gs + 2.0 * ph * ext);
                        if ax.self_coef != 0.0 {
                            gi += ax.self_coef * local::axis_grad_at(g, &full, self.nodes[a], ax.axis, ax.pw);
                        }
                        (h * e + 2.0 * ep * ext, gi)
                    });
                    let es: Vec<f64> = per.iter().map(|x| x.0).collect();
                    let mut j = ax.c * hd * pairwise_sum(&es);
                    if ax.self_coef != 0.0 {
                        j += ax.self_coef * local::axis_energy(g, &full, ax.axis, ax.pw);
                    }
                    parts.push(j);
                    for (t, x) in grad.iter_mut().zip(per) {
                        *t += x.1;
                    }
                }
                (parts, grad)
            }
        };
        let energy = parts.iter().zip(self.op.part_exponents()).map(|(j, p)| j / p).sum();
        Eval { parts, energy, grad }
    }
}

/// Isotropic energy `J(u)`; at `s = 1` this is [`energy_local`].
pub fn energy_j(u: &Field, params: &IsoParams) -> Result<f64> {
    Operator::new(u.grid(), params.clone())?.energy(u)
}

/// Local energy `Δ^d Σ |∇_h u|^p` over forward-difference stencils.
pub fn energy_local(u: &Field, p: f64) -> Result<f64> {
    energy_j(u, &IsoParams::new(1.0, p)?)
}

/// Representer of `J/p` for isotropic parameters.
pub fn apply_operator(u: &Field, params: &IsoParams) -> Result<Field> {
    Operator::new(u.grid(), params.clone())?.apply(u)
}

/// Representer of `J_local/p`, the discrete `−Δ_p u`.
pub fn apply_local(u: &Field, p: f64) -> Result<Field> {
    apply_operator(u, &IsoParams::new(1.0, p)?)
}

/// Sum of the directional energies `Σ_i J_i(u)`.
pub fn energy_aniso(u: &Field, params: &AnisoParams) -> Result<f64> {
    Operator::new(u.grid(), params.clone())?.energy(u)
}

/// Representer of `Σ_i J_i / p_i`.
pub fn apply_aniso(u: &Field, params: &AnisoParams) -> Result<Field> {
    Operator::new(u.grid(), params.clone())?.apply(u)
}

/// Directional energy `J_axis(u)` for one `(s, p)` pair, without the admissibility
/// conditions that tie the axes together. At `s = 1` this is `(2/p) Δ^d Σ |∂_axis u|^p`.
pub fn directional_energy(u: &Field, axis: usize, s: f64, p: f64, diagonal: DiagonalRule) -> Result<f64> {
    let g = u.grid();
    if axis >= g.dim() {
        return Err(Error::InvalidParams(alloc::format!("axis {axis} out of range for dimension {}", g.dim())));
    }
    if !(s > 0.0 && s <= 1.0) || !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParams(alloc::format!("need s in (0, 1] and p > 1, got s={s} p={p}")));
    }
    let params = AnisoParams::new(vec![s; g.dim()], vec![p; g.dim()])?.with_diagonal(diagonal);
    let op = Operator {
        grid: g.clone(),
        params: params.into(),
        kind: Kind::Aniso(vec![AxisData::new(g, axis, s, p, diagonal)]),
    };
    op.energy(u)
}
