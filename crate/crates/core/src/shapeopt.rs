//! Volume-constrained minimisation of shape functionals that decrease under inclusion.
//!
//! Two functionals are built in, the first eigenvalue and the torsional compliance
//! `−Δ^d Σ u_A`. [`optimize_enumerate`] is exact by exhaustion on small grids;
//! [`optimize_rearrange`] is a level-set heuristic: solve the state problem on the
//! current mask, then keep the cells where the state would be largest.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, same_grid, Field, Grid, Mask};
use crate::operator::{Operator, Params};
use crate::oracle::{enumerate_masks, ENUMERATION_GUARD};
use crate::par::map_collect;
use crate::solve::{torsion_with, SolverOpts};
use crate::spectral::{first_eigenpair_with, EigenOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    FirstEigenvalue,
    TorsionalCompliance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFunctional {
    pub kind: CostKind,
    pub params: Params,
    pub eigen: EigenOpts,
}

impl CostFunctional {
    /// Default solver settings for the parameters' exponent.
    pub fn new(kind: CostKind, params: impl Into<Params>) -> Self {
        let params = params.into();
        let mut eigen = EigenOpts::for_exponent(params.common_exponent().unwrap_or(0.0));
        eigen.solver = SolverOpts::for_params(&params);
        CostFunctional { kind, params, eigen }
    }

    fn solver(&self) -> &SolverOpts {
        &self.eigen.solver
    }
}

/// One improvement step of an optimiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub cost: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enumerate,
    Rearrange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeResult {
    pub mask: Mask,
    pub cost: f64,
    pub history: Vec<HistoryRow>,
    pub method: Method,
    /// Every mask whose cost is within `1e−10` of the optimum (enumeration only).
    pub ties: Vec<Mask>,
    /// The budget allowed no cell at all.
    pub degenerate: bool,
    /// Rearrangement stopped because no move lowered the cost, not at the iteration limit.
    pub fixed_point: bool,
}

/// Cost evaluation sharing one operator across masks.
pub struct Evaluator<'a> {
    op: Operator,
    func: &'a CostFunctional,
}

/// State on a mask: torsion function, or eigenfunction with its eigenvalue.
struct State {
    field: Field,
    lambda: Option<f64>,
    cost: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(grid: &Arc<Grid>, func: &'a CostFunctional) -> Result<Self> {
        Ok(Evaluator { op: Operator::new(grid, func.params.clone())?, func })
    }

    fn state(&self, mask: &Mask) -> Result<State> {
        if mask.is_empty() {
            return Ok(State { field: Field::zeros(mask.grid()), lambda: None, cost: f64::INFINITY });
        }
        match self.func.kind {
            CostKind::FirstEigenvalue => {
                let r = first_eigenpair_with(&self.op, mask, &self.func.eigen)?;
                if !r.converged {
                    return Err(Error::NotConverged { what: "eigenpair", residual: r.residual });
                }
                Ok(State { field: r.field, lambda: Some(r.lambda), cost: r.lambda })
            }
            CostKind::TorsionalCompliance => {
                let r = torsion_with(&self.op, mask, self.func.solver())?;
                if !r.converged {
                    return Err(Error::NotConverged { what: "torsion", residual: r.final_residual });
                }
                let cost = -r.field.integral();
                Ok(State { field: r.field, lambda: None, cost })
            }
        }
    }

    /// `F(mask)`; `+∞` for the empty mask.
    pub fn cost(&self, mask: &Mask) -> Result<f64> {
        Ok(self.state(mask)?.cost)
    }

    /// Value a cell outside the mask would take if it alone were released: the root
    /// `t ≥ 0` of `apply(u + t e_x)_x = rhs(t)`, with `rhs = 1` for torsion and
    /// `λ t^{p−1}` for the eigenproblem.
    fn release_value(&self, st: &State, node: usize) -> f64 {
        let mut u = st.field.values().to_vec();
        let p = self.func.params.common_exponent().unwrap_or(2.0);
        let mut g = |t: f64| {
            u[node] = t;
            let a = self.op.apply_at(&u, node);
            match st.lambda {
                Some(lam) => a - lam * libm::pow(t, p - 1.0),
                None => a - 1.0,
            }
        };
        if g(0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = st.field.max_abs().max(1e-3);
        let mut doublings = 0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `F(mask)` for one mask; `+∞` on the empty mask.
pub fn cost_eval(mask: &Mask, func: &CostFunctional) -> Result<f64> {
    Evaluator::new(mask.grid(), func)?.cost(mask)
}

/// Cell budget `⌊c / Δ^d⌋`, capped at the number of cells.
pub fn cell_budget(grid: &Grid, c: f64) -> usize {
    let k = libm::floor(c / grid.cell_volume() + 1e-9);
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(grid.interior_count())
    }
}

fn lex_cmp(a: &Mask, b: &Mask) -> Ordering {
    a.cell_indices().cmp(&b.cell_indices())
}

fn select(grid: &Arc<Grid>, candidates: Vec<Mask>, costs: Vec<f64>, method: Method) -> ShapeResult {
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    for (i, (m, &c)) in candidates.iter().zip(&costs).enumerate() {
        if c < best {
            best = c;
            history.push(HistoryRow { iter: i, cost: c, volume: m.volume() });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then_with(|| lex_cmp(&candidates[a], &candidates[b])));
    let Some(&first) = order.first() else {
        return ShapeResult {
            mask: Mask::empty(grid),
            cost: f64::INFINITY,
            history,
            method,
            ties: Vec::new(),
            degenerate: true,
            fixed_point: false,
        };
    };
    let opt = costs[first];
    let ties: Vec<Mask> = order
        .iter()
        .take_while(|&&i| costs[i] - opt <= 1e-10 * opt.abs().max(1.0))
        .map(|&i| candidates[i].clone())
        .collect();
    ShapeResult {
        mask: candidates[first].clone(),
        cost: opt,
        history,
        method,
        ties,
        degenerate: false,
        fixed_point: false,
    }
}

fn guard(grid: &Grid) -> Result<()> {
    let n = grid.interior_count();
    if n > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard { cells: n, limit: ENUMERATION_GUARD });
    }
    Ok(())
}

fn evaluate_all(ev: &Evaluator, masks: &[Mask]) -> Result<Vec<f64>> {
    map_collect(masks.len(), |i| ev.cost(&masks[i])).into_iter().collect()
}

/// Exact minimiser over masks of volume at most `c`. Since the cost decreases under
/// inclusion, only masks with exactly the budget number of cells are searched.
pub fn optimize_enumerate(grid: &Arc<Grid>, func: &CostFunctional, c: f64) -> Result<ShapeResult> {
    guard(grid)?;
    let k = cell_budget(grid, c);
    if k == 0 {
        return Ok(select(grid, Vec::new(), Vec::new(), Method::Enumerate));
    }
    let ev = Evaluator::new(grid, func)?;
    let masks: Vec<Mask> = enumerate_masks(grid, k)?.collect();
    let costs = evaluate_all(&ev, &masks)?;
    Ok(select(grid, masks, costs, Method::Enumerate))
}

/// Exhaustive search over every nonempty mask with at most the budget number of cells;
/// the reference for [`optimize_enumerate`]'s restriction.
pub fn optimize_enumerate_unrestricted(grid: &Arc<Grid>, func: &CostFunctional, c: f64) -> Result<ShapeResult> {
    guard(grid)?;
    let k = cell_budget(grid, c);
    if k == 0 {
        return Ok(select(grid, Vec::new(), Vec::new(), Method::Enumerate));
    }
    let ev = Evaluator::new(grid, func)?;
    let mut masks = Vec::new();
    for j in 1..=k {
        masks.extend(enumerate_masks(grid, j)?);
    }
    let costs = evaluate_all(&ev, &masks)?;
    Ok(select(grid, masks, costs, Method::Enumerate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RearrangeOpts {
    pub max_iter: usize,
    /// Single-cell exchanges tried per step when the full rearrangement does not help.
    pub max_swaps: usize,
}

impl Default for RearrangeOpts {
    fn default() -> Self {
        RearrangeOpts { max_iter: 100, max_swaps: 64 }
    }
}

/// Rearrangement heuristic from `init`.
///
/// Each step scores cells on the mask by the state value and cells off the mask by
/// their release value, then keeps the top `⌊c/Δ^d⌋` cells (ties to the lowest
/// index). If that mask is not cheaper, single exchanges of a low-scoring member
/// for a high-scoring outsider are tried in score order and the first that lowers
/// the cost is taken. Stops when no move helps or at `max_iter`; the cost never
/// increases along the run.
pub fn optimize_rearrange(
    grid: &Arc<Grid>,
    func: &CostFunctional,
    c: f64,
    init: &Mask,
    opts: &RearrangeOpts,
) -> Result<ShapeResult> {
    if !same_grid(grid, init.grid()) {
        return Err(Error::GridMismatch);
    }
    let k = cell_budget(grid, c);
    if k == 0 {
        return Err(Error::Precondition("rearrangement needs c of at least one cell volume".into()));
    }
    if init.count() > k {
        return Err(Error::Precondition(format!(
            "initial mask has {} cells, budget allows {k}",
            init.count()
        )));
    }
    let ev = Evaluator::new(grid, func)?;
    let cells = grid.interior_count();
    let mut current = init.clone();
    let mut st = ev.state(&current)?;
    let mut history = vec![HistoryRow { iter: 0, cost: st.cost, volume: current.volume() }];
    let mut fixed_point = false;
    for iter in 1..=opts.max_iter {
        let scores: Vec<f64> = if current.is_empty() {
            vec![0.0; cells]
        } else {
            map_collect(cells, |cell| {
                let node = grid.cell_node(cell);
                if current.contains(cell) {
                    st.field.value(node)
                } else {
                    ev.release_value(&st, node)
                }
            })
        };
        let mut order: Vec<usize> = (0..cells).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut moved = None;
        let next = Mask::from_cell_indices(grid, &order[..k])?;
        if next != current {
            let ns = ev.state(&next)?;
            if ns.cost < st.cost {
                moved = Some((next, ns));
            }
        }
        if moved.is_none() {
            moved = best_swap(&ev, &current, k, &order, st.cost, opts.max_swaps)?;
        }
        let Some((next, ns)) = moved else {
            fixed_point = true;
            break;
        };
        current = next;
        st = ns;
        history.push(HistoryRow { iter, cost: st.cost, volume: current.volume() });
    }
    Ok(ShapeResult {
        mask: current,
        cost: st.cost,
        history,
        method: Method::Rearrange,
        ties: Vec::new(),
        degenerate: false,
        fixed_point,
    })
}

/// First improving exchange, members from the bottom of `order` against outsiders
/// from the top. A mask under budget may also just gain its best outsider.
fn best_swap(ev: &Evaluator, current: &Mask, budget: usize, order: &[usize], cost: f64, limit: usize) -> Result<Option<(Mask, State)>> {
    let grid = current.grid();
    let outside: Vec<usize> = order.iter().copied().filter(|&c| !current.contains(c)).collect();
    let inside: Vec<usize> = order.iter().rev().copied().filter(|&c| current.contains(c)).collect();
    let mut tried = 0;
    if current.count() < budget {
        for &o in outside.iter().take(limit) {
            let mut cells = current.cell_indices();
            cells.push(o);
            cells.sort_unstable();
            let m = Mask::from_cell_indices(grid, &cells)?;
            let s = ev.state(&m)?;
            tried += 1;
            if s.cost < cost {
                return Ok(Some((m, s)));
            }
        }
    }
    for &i in &inside {
        for &o in &outside {
            if tried >= limit {
                return Ok(None);
            }
            let mut cells: Vec<usize> = current.cell_indices().into_iter().filter(|&c| c != i).collect();
            cells.push(o);
            cells.sort_unstable();
            let m = Mask::from_cell_indices(grid, &cells)?;
            let s = ev.state(&m)?;
            tried += 1;
            if s.cost < cost {
                return Ok(Some((m, s)));
            }
        }
    }
    Ok(None)
}

/// `‖u_A − u_B‖_p` between torsion functions, with `p` the smallest exponent.
pub fn gamma_distance(a: &Mask, b: &Mask, params: impl Into<Params>, opts: &SolverOpts) -> Result<f64> {
    if !same_grid(a.grid(), b.grid()) {
        return Err(Error::GridMismatch);
    }
    let params = params.into();
    let op = Operator::new(a.grid(), params.clone())?;
    let ua = torsion_with(&op, a, opts)?;
    let ub = torsion_with(&op, b, opts)?;
    if !ua.converged || !ub.converged {
        return Err(Error::NotConverged { what: "torsion", residual: ua.final_residual.max(ub.final_residual) });
    }
    lp_norm(&ua.field.sub(&ub.field)?, params.lp_exponent())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemicontinuityReport {
    /// `F(A_k) − F(limit)` per member.
    pub gaps: Vec<f64>,
    /// `γ`-distance of each member to the limit.
    pub distances: Vec<f64>,
    pub min_gap: f64,
    /// Distances are nonincreasing along the sequence.
    pub gamma_converging: bool,
    /// Some member that does not contain the limit undercuts it by more than `1e−6`.
    pub violation: bool,
}

/// Audits `F(limit) ≤ liminf F(A_k)` along a sequence of masks.
///
/// Members that contain the limit may cost less by monotonicity alone, so only
/// members that are not supersets can raise the violation flag.
pub fn semicontinuity_probe(func: &CostFunctional, sequence: &[Mask], limit: &Mask) -> Result<SemicontinuityReport> {
    let grid = limit.grid();
    let ev = Evaluator::new(grid, func)?;
    let f_lim = ev.cost(limit)?;
    let mut gaps = Vec::with_capacity(sequence.len());
    let mut distances = Vec::with_capacity(sequence.len());
    let mut violation = false;
    for m in sequence {
        let gap = ev.cost(m)? - f_lim;
        if gap < -1e-6 && !limit.is_subset_of(m) {
            violation = true;
        }
        gaps.push(gap);
        distances.push(gamma_distance(m, limit, func.params.clone(), func.solver())?);
    }
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let gamma_converging = distances.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(SemicontinuityReport { gaps, distances, min_gap, gamma_converging, violation })
}
