//! Minimisation of `E(u) − Δ^d Σ f_i u_i` over fields supported on a mask.
//!
//! The unknowns are the mask nodes only, so the projection onto fields vanishing off the
//! mask is exact. The gradient in the `Δ^d`-weighted inner product is
//! `apply(u) − f`, and the solver stops once its max-norm over the mask is below
//! `tol_grad`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{same_grid, Field, Mask};
use crate::operator::{Operator, Params, Support};
use crate::par::pairwise_sum;

/// Step length selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Constant step `η` along the negative gradient.
    Fixed(f64),
    /// Armijo backtracking: start from a Barzilai–Borwein step and multiply by
    /// `shrink` until the sufficient-decrease test with constant `armijo` holds.
    Backtracking { shrink: f64, armijo: f64 },
    /// Bracketing secant search on the slope of the convex line function, accepting
    /// steps that satisfy the strong Wolfe conditions.
    Secant { armijo: f64, curvature: f64 },
}

/// Search direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Polak–Ribière+ nonlinear conjugate gradients, restarting on non-descent.
    ConjugateGradient,
    SteepestDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOpts {
    pub tol_grad: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    /// Ignored by [`StepRule::Fixed`], which always walks along the gradient.
    pub direction: Direction,
}

impl SolverOpts {
    /// Defaults for energies of degree `p`: `tol_grad = 1e−9` at `p = 2`, else `1e−7`.
    pub fn for_exponent(p: f64) -> Self {
        SolverOpts {
            tol_grad: if p == 2.0 { 1e-9 } else { 1e-7 },
            max_iter: 50_000,
            step_rule: StepRule::Secant { armijo: 1e-4, curvature: 0.1 },
            direction: Direction::ConjugateGradient,
        }
    }

    pub fn for_params(params: &Params) -> Self {
        SolverOpts::for_exponent(params.common_exponent().unwrap_or(0.0))
    }

    pub fn with_tol(mut self, tol_grad: f64) -> Self {
        self.tol_grad = tol_grad;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_grad > 0.0) {
            return Err(Error::InvalidParams("tol_grad must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be at least 1".into()));
        }
        let ok = match self.step_rule {
            StepRule::Fixed(eta) => eta > 0.0,
            StepRule::Backtracking { shrink, armijo } => shrink > 0.0 && shrink < 1.0 && armijo > 0.0 && armijo < 1.0,
            StepRule::Secant { armijo, curvature } => armijo > 0.0 && armijo < curvature && curvature < 1.0,
        };
        if !ok {
            return Err(Error::InvalidParams(format!("invalid step rule {:?}", self.step_rule)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub field: Field,
    pub iterations: usize,
    /// Max-norm of `apply(u) − f` over the mask.
    pub final_residual: f64,
    /// `E(u) − Δ^d Σ f_i u_i` at the returned field.
    pub energy: f64,
    pub converged: bool,
    /// Objective after every accepted iteration, starting with the initial field.
    pub energy_trace: Vec<f64>,
}

#[derive(Clone)]
struct State {
    u: Vec<f64>,
    r: Vec<f64>,
    obj: f64,
    /// Magnitude of the terms entering `obj`, for roundoff allowances.
    scale: f64,
}

/// The objective restricted to a node set.
pub(crate) struct Problem<'a> {
    sup: Support<'a>,
    f: Vec<f64>,
    hd: f64,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(op: &'a Operator, nodes: &[usize], f: &Field) -> Self {
        Problem {
            sup: op.support(nodes),
            f: nodes.iter().map(|&n| f.value(n)).collect(),
            hd: op.grid().cell_volume(),
        }
    }

    fn state(&self, u: Vec<f64>) -> State {
        let ev = self.sup.eval(&u);
        let r: Vec<f64> = ev.grad.iter().zip(&self.f).map(|(g, f)| g - f).collect();
        let lin: Vec<f64> = u.iter().zip(&self.f).map(|(u, f)| u * f).collect();
        let lin = self.hd * pairwise_sum(&lin);
        State { u, r, obj: ev.energy - lin, scale: libm::fabs(ev.energy) + libm::fabs(lin) }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let t: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        self.hd * pairwise_sum(&t)
    }

    fn field(&self, op: &Operator, u: &[f64]) -> Field {
        Field::from_raw(op.grid(), self.sup.scatter(u))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(libm::fabs(*x)))
}

fn roundoff(s: &State) -> f64 {
    1e-13 * s.scale
}

fn axpy(u: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    u.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Strong-Wolfe search by regula falsi (Illinois variant) on the slope.
fn secant_search(pb: &Problem, s0: &State, d: &[f64], t_init: f64, c1: f64, c2: f64) -> Option<(f64, State)> {
    let slope0 = pb.dot(&s0.r, d);
    if !(slope0 < 0.0) {
        return None;
    }
    let tol = roundoff(s0);
    let mut lo_t = 0.0;
    let mut hi: Option<(f64, f64)> = None;
    let mut side = 0i8;
    let (mut lo_eff, mut hi_eff) = (slope0, 0.0);
    let mut t = t_init;
    let mut best: Option<(f64, State)> = None;
    for _ in 0..80 {
        let st = pb.state(axpy(&s0.u, t, d));
        let slope = pb.dot(&st.r, d);
        let armijo = st.obj <= s0.obj + c1 * t * slope0 + tol;
        if armijo && libm::fabs(slope) <= c2 * libm::fabs(slope0) {
            return Some((t, st));
        }
        if st.obj < s0.obj && best.as_ref().is_none_or(|b| st.obj < b.1.obj) {
            best = Some((t, st.clone()));
        }
        if !armijo || slope >= 0.0 {
            if side == 1 {
                lo_eff *= 0.5;
            }
            side = 1;
            hi = Some((t, slope));
            hi_eff = slope;
        } else {
            if side == -1 {
                hi_eff *= 0.5;
            }
            side = -1;
            lo_t = t;
            lo_eff = slope;
        }
        t = match hi {
            None => 4.0 * t,
            Some((ht, hd)) => {
                let width = ht - lo_t;
                if !(hd >= 0.0) || !(hi_eff > lo_eff) {
                    lo_t + 0.5 * width
                } else {
                    let cand = (lo_t * hi_eff - ht * lo_eff) / (hi_eff - lo_eff);
                    cand.clamp(lo_t + 1e-3 * width, ht - 1e-3 * width)
                }
            }
        };
        if hi.is_some_and(|(ht, _)| ht - lo_t <= 1e-15 * ht) {
            break;
        }
    }
    best
}

/// Armijo backtracking from `t_init`.
fn backtrack(pb: &Problem, s0: &State, d: &[f64], t_init: f64, shrink: f64, c1: f64) -> Option<(f64, State)> {
    let slope0 = pb.dot(&s0.r, d);
    if !(slope0 < 0.0) {
        return None;
    }
    let tol = roundoff(s0);
    let mut t = t_init;
    for _ in 0..200 {
        let st = pb.state(axpy(&s0.u, t, d));
        if st.obj <= s0.obj + c1 * t * slope0 + tol && st.obj <= s0.obj + tol {
            return Some((t, st));
        }
        t *= shrink;
    }
    None
}

/// Unconstrained minimisation over the problem's node set.
fn minimize(pb: &Problem, u0: Vec<f64>, opts: &SolverOpts) -> (State, usize, bool, Vec<f64>) {
    let mut s = pb.state(u0);
    let mut trace = vec![s.obj];
    if pb.sup.len() == 0 || max_abs(&s.r) <= opts.tol_grad {
        return (s, 0, true, trace);
    }
    let steepest = matches!(opts.step_rule, StepRule::Fixed(_)) || opts.direction == Direction::SteepestDescent;
    let mut d: Vec<f64> = s.r.iter().map(|x| -x).collect();
    let mut t_prev = 1.0 / max_abs(&s.r);
    let mut slope_prev = pb.dot(&s.r, &d);
    let mut prev_step: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut fails = 0;
    for it in 1..=opts.max_iter {
        let slope = pb.dot(&s.r, &d);
        let next = match opts.step_rule {
            StepRule::Fixed(eta) => Some((eta, pb.state(axpy(&s.u, eta, &d)))),
            StepRule::Secant { armijo, curvature } => {
                let t0 = if it == 1 { t_prev } else { t_prev * slope_prev / slope };
                secant_search(pb, &s, &d, t0.abs().max(1e-300), armijo, curvature)
            }
            StepRule::Backtracking { shrink, armijo } => {
                let t0 = match &prev_step {
                    Some((ds, dr)) => {
                        let sy = pb.dot(ds, dr);
                        if sy > 0.0 { pb.dot(ds, ds) / sy } else { t_prev }
                    }
                    None => t_prev,
                };
                backtrack(pb, &s, &d, t0, shrink, armijo)
            }
        };
        match next {
            Some((t, ns)) => {
                fails = 0;
                let ds: Vec<f64> = ns.u.iter().zip(&s.u).map(|(a, b)| a - b).collect();
                let dr: Vec<f64> = ns.r.iter().zip(&s.r).map(|(a, b)| a - b).collect();
                let beta = if steepest {
                    0.0
                } else {
                    (pb.dot(&ns.r, &dr) / pb.dot(&s.r, &s.r)).max(0.0)
                };
                t_prev = t;
                slope_prev = slope;
                s = ns;
                trace.push(s.obj);
                prev_step = Some((ds, dr));
                if max_abs(&s.r) <= opts.tol_grad {
                    return (s, it, true, trace);
                }
                d = d.iter().zip(&s.r).map(|(dk, r)| beta * dk - r).collect();
                if pb.dot(&s.r, &d) >= 0.0 {
                    d = s.r.iter().map(|x| -x).collect();
                }
            }
            None => {
                fails += 1;
                if fails > 1 {
                    return (s, it, false, trace);
                }
                // restart from steepest descent with a fresh step estimate
                d = s.r.iter().map(|x| -x).collect();
                t_prev = 1.0 / max_abs(&s.r);
                slope_prev = pb.dot(&s.r, &d);
                prev_step = None;
            }
        }
    }
    let it = opts.max_iter;
    (s, it, false, trace)
}

/// Solver over a prebuilt operator with an optional initial field (restricted to the
/// mask before use).
pub fn solve_dirichlet_with(
    op: &Operator,
    mask: &Mask,
    f: &Field,
    opts: &SolverOpts,
    init: Option<&Field>,
) -> Result<SolveReport> {
    opts.validate()?;
    if !same_grid(op.grid(), mask.grid()) || !same_grid(op.grid(), f.grid()) {
        return Err(Error::GridMismatch);
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let nodes = mask.nodes();
    let pb = Problem::new(op, &nodes, f);
    let u0 = match init {
        Some(w) => {
            if !same_grid(op.grid(), w.grid()) {
                return Err(Error::GridMismatch);
            }
            if w.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            nodes.iter().map(|&n| w.value(n)).collect()
        }
        None => vec![0.0; nodes.len()],
    };
    let (s, iterations, converged, energy_trace) = minimize(&pb, u0, opts);
    Ok(SolveReport {
        field: pb.field(op, &s.u),
        iterations,
        final_residual: max_abs(&s.r),
        energy: s.obj,
        converged,
        energy_trace,
    })
}

/// Minimises `E(u) − Δ^d Σ f_i u_i` over fields supported on `mask`, from zero.
pub fn solve_dirichlet(mask: &Mask, f: &Field, params: impl Into<Params>, opts: &SolverOpts) -> Result<SolveReport> {
    let op = Operator::new(mask.grid(), params)?;
    solve_dirichlet_with(&op, mask, f, opts, None)
}

/// Torsion function on a prebuilt operator: `apply(u) = 1` on the mask.
pub fn torsion_with(op: &Operator, mask: &Mask, opts: &SolverOpts) -> Result<SolveReport> {
    let one = Field::from_fn(op.grid(), |_| 1.0);
    let rep = solve_dirichlet_with(op, mask, &one, opts, None)?;
    let min = rep.field.values().iter().cloned().fold(0.0, f64::min);
    let floor = 1e-8 * rep.field.max_abs().max(1.0);
    if rep.converged && min < -floor {
        return Err(Error::Precondition(format!("torsion function is negative ({min:e})")));
    }
    Ok(rep)
}

/// Torsion function `u_A`: the solution of `apply(u) = 1` on `mask`, zero elsewhere.
pub fn solve_torsion(mask: &Mask, params: impl Into<Params>, opts: &SolverOpts) -> Result<SolveReport> {
    let op = Operator::new(mask.grid(), params)?;
    torsion_with(&op, mask, opts)
}

/// `apply(w) − 1` on interior nodes.
pub fn ks_residual(w: &Field, params: impl Into<Params>) -> Result<Field> {
    let op = Operator::new(w.grid(), params)?;
    Ok(op.apply(w)?.map(|x| x - 1.0))
}

/// Membership of `w` in the constraint set of nonnegative sub-solutions.
pub fn ks_member(w: &Field, params: impl Into<Params>, tol: f64) -> Result<bool> {
    let r = ks_residual(w, params)?;
    let interior = w.grid().interior_nodes();
    let nonneg = interior.iter().all(|&n| w.value(n) >= -tol);
    let sub = interior.iter().all(|&n| r.value(n) <= tol);
    Ok(nonneg && sub)
}

/// Minimiser of `E(z) − ∫z` over fields on the grid with `z ≤ max(u, v)`.
///
/// For members of the constraint set the minimiser is `max(u, v)` itself, which shows the
/// set is closed under maxima. Projected steepest descent from zero with Armijo
/// backtracking along the projection arc and Barzilai–Borwein trial steps.
pub fn max_combine(u: &Field, v: &Field, params: impl Into<Params>, opts: &SolverOpts) -> Result<Field> {
    let params = params.into();
    opts.validate()?;
    let tol = 10.0 * opts.tol_grad;
    if !ks_member(u, params.clone(), tol)? || !ks_member(v, params.clone(), tol)? {
        return Err(Error::Precondition("max_combine inputs must be nonnegative sub-solutions".into()));
    }
    let cap = u.max(v)?;
    let op = Operator::new(u.grid(), params)?;
    let nodes = u.grid().interior_nodes().to_vec();
    let one = Field::from_fn(u.grid(), |_| 1.0);
    let pb = Problem::new(&op, &nodes, &one);
    let upper: Vec<f64> = nodes.iter().map(|&n| cap.value(n)).collect();
    let kkt = |s: &State| {
        s.u.iter()
            .zip(&s.r)
            .zip(&upper)
            .fold(0.0f64, |m, ((z, r), ub)| m.max(if *z >= *ub { r.max(0.0) } else { libm::fabs(*r) }))
    };
    let project = |u: &[f64], t: f64, r: &[f64]| -> Vec<f64> {
        u.iter().zip(r).zip(&upper).map(|((z, g), ub)| (z - t * g).min(*ub)).collect()
    };
    let mut s = pb.state(vec![0.0; nodes.len()]);
    let mut t = 1.0 / max_abs(&s.r).max(1e-300);
    let mut res = kkt(&s);
    let mut iter = 0;
    while res > opts.tol_grad && iter < opts.max_iter {
        iter += 1;
        let mut trial = t;
        let mut accepted = None;
        for _ in 0..200 {
            let z = project(&s.u, trial, &s.r);
            let step: Vec<f64> = z.iter().zip(&s.u).map(|(a, b)| a - b).collect();
            let decrease = pb.dot(&s.r, &step);
            let ns = pb.state(z);
            if ns.obj <= s.obj + 1e-4 * decrease + roundoff(&s) {
                accepted = Some((step, ns));
                break;
            }
            trial *= 0.5;
        }
        let Some((step, ns)) = accepted else { break };
        let dr: Vec<f64> = ns.r.iter().zip(&s.r).map(|(a, b)| a - b).collect();
        let sy = pb.dot(&step, &dr);
        let ss = pb.dot(&step, &step);
        t = if sy > 0.0 && ss > 0.0 { ss / sy } else { trial * 2.0 };
        s = ns;
        res = kkt(&s);
    }
    if res > opts.tol_grad {
        return Err(Error::NotConverged { what: "obstacle problem", residual: res });
    }
    Ok(pb.field(&op, &s.u))
}

/// Solves with right-hand sides `f_u ≤ f_v` and checks `u ≤ v + 10·tol_grad`.
pub fn comparison_check(
    f_u: &Field,
    f_v: &Field,
    mask: &Mask,
    params: impl Into<Params>,
    opts: &SolverOpts,
) -> Result<bool> {
    if !same_grid(f_u.grid(), f_v.grid()) {
        return Err(Error::GridMismatch);
    }
    let interior = f_u.grid().interior_nodes();
    if interior.iter().any(|&n| f_u.value(n) > f_v.value(n)) {
        return Err(Error::Precondition("comparison needs f_u <= f_v nodewise".into()));
    }
    let op = Operator::new(mask.grid(), params)?;
    let u = solve_dirichlet_with(&op, mask, f_u, opts, None)?;
    let v = solve_dirichlet_with(&op, mask, f_v, opts, None)?;
    if !u.converged || !v.converged {
        return Err(Error::NotConverged { what: "comparison solve", residual: u.final_residual.max(v.final_residual) });
    }
    let tol = 10.0 * opts.tol_grad;
    Ok(interior.iter().all(|&n| u.field.value(n) <= v.field.value(n) + tol))
}

/// Checks `w ≤ u_A` for `w = 0`, `w = u_A` and `trials` fields `θ·u_B` with random
/// `B ⊆ A`, `θ ∈ (0, 1]`, all feasible by construction.
pub fn maximality_check(mask: &Mask, params: impl Into<Params>, trials: usize, opts: &SolverOpts, seed: u64) -> Result<bool> {
    let op = Operator::new(mask.grid(), params)?;
    let ua = torsion_with(&op, mask, opts)?;
    if !ua.converged {
        return Err(Error::NotConverged { what: "torsion", residual: ua.final_residual });
    }
    let tol = 10.0 * opts.tol_grad;
    let below = |w: &Field| w.values().iter().zip(ua.field.values()).all(|(a, b)| *a <= *b + tol);
    let mut ok = below(&Field::zeros(mask.grid())) && below(&ua.field);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = mask.cell_indices();
    for _ in 0..trials {
        let keep: Vec<usize> = cells.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let theta = 1.0 - rng.gen::<f64>();
        let b = Mask::from_cell_indices(mask.grid(), &keep)?;
        let ub = torsion_with(&op, &b, opts)?;
        if !ub.converged {
            return Err(Error::NotConverged { what: "torsion", residual: ub.final_residual });
        }
        ok &= below(&ub.field.scale(theta));
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::operator::IsoParams;
    use alloc::sync::Arc;

    fn grid1(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::unit(1, n, 2)).unwrap()
    }

    fn iso(s: f64, p: f64) -> IsoParams {
        IsoParams::new(s, p).unwrap()
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let g = grid1(12);
        let m = Mask::full(&g);
        let rep = solve_dirichlet(&m, &Field::zeros(&g), iso(0.5, 3.0), &SolverOpts::for_exponent(3.0)).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.field.is_zero());
    }

    #[test]
    fn empty_mask_gives_zero_field() {
        let g = grid1(12);
        let rep = solve_torsion(&Mask::empty(&g), iso(0.5, 2.0), &SolverOpts::for_exponent(2.0)).unwrap();
        assert!(rep.converged && rep.field.is_zero());
    }

    #[test]
    fn torsion_converges_for_all_exponents_and_stays_on_mask() {
        let g = grid1(16);
        let m = Mask::from_predicate(&g, |x| x[0] > 0.2 && x[0] < 0.7);
        for p in [1.5, 2.0, 3.0] {
            for s in [0.3, 0.8, 1.0] {
                let opts = SolverOpts::for_exponent(p);
                let rep = solve_torsion(&m, iso(s, p), &opts).unwrap();
                assert!(rep.converged, "p={p} s={s} res={}", rep.final_residual);
                assert!(rep.final_residual <= opts.tol_grad);
                for n in 0..g.node_count() {
                    let on = g.node_cell(n).is_some_and(|c| m.contains(c));
                    if !on {
                        assert_eq!(rep.field.value(n), 0.0);
                    } else {
                        assert!(rep.field.value(n) > 0.0);
                    }
                }
                for w in rep.energy_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
                }
            }
        }
    }

    #[test]
    fn all_step_rules_reach_the_same_solution() {
        let g = grid1(10);
        let m = Mask::full(&g);
        let params = iso(0.5, 2.0);
        let base = solve_torsion(&m, params.clone(), &SolverOpts::for_exponent(2.0)).unwrap();
        let mut sd = SolverOpts::for_exponent(2.0);
        sd.direction = Direction::SteepestDescent;
        sd.step_rule = StepRule::Backtracking { shrink: 0.5, armijo: 1e-4 };
        let bt = solve_torsion(&m, params.clone(), &sd).unwrap();
        assert!(bt.converged);
        assert!(bt.field.max_abs_diff(&base.field) < 1e-8);
        for w in bt.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        let op = Operator::new(&g, params.clone()).unwrap();
        let e = Field::from_fn(&g, |_| 1.0);
        let lmax = op.apply(&e).unwrap().max_abs() * 4.0;
        sd.step_rule = StepRule::Fixed(1.0 / lmax);
        sd.max_iter = 200_000;
        let fx = solve_torsion(&m, params, &sd).unwrap();
        assert!(fx.converged);
        assert!(fx.field.max_abs_diff(&base.field) < 1e-8);
    }

    #[test]
    fn linear_scaling_and_oddness() {
        let g = grid1(12);
        let m = Mask::full(&g);
        let f = Field::from_fn(&g, |x| 1.0 + x[0]);
        let opts = SolverOpts::for_exponent(2.0);
        let u = solve_dirichlet(&m, &f, iso(0.5, 2.0), &opts).unwrap().field;
        for a in [0.5, 2.0, 10.0] {
            let ua = solve_dirichlet(&m, &f.scale(a), iso(0.5, 2.0), &opts).unwrap().field;
            assert!(ua.max_abs_diff(&u.scale(a)) <= 1e-8 * ua.max_abs());
        }
        let opts3 = SolverOpts::for_exponent(3.0);
        let u3 = solve_dirichlet(&m, &f, iso(0.5, 3.0), &opts3).unwrap().field;
        let n3 = solve_dirichlet(&m, &f.scale(-1.0), iso(0.5, 3.0), &opts3).unwrap().field;
        assert!(n3.max_abs_diff(&u3.scale(-1.0)) < 1e-8);
    }

    #[test]
    fn random_start_reaches_unique_minimiser() {
        let g = grid1(12);
        let m = Mask::full(&g);
        let op = Operator::new(&g, iso(0.6, 2.0)).unwrap();
        let one = Field::from_fn(&g, |_| 1.0);
        let opts = SolverOpts::for_exponent(2.0);
        let a = solve_dirichlet_with(&op, &m, &one, &opts, None).unwrap();
        let start = Field::from_fn(&g, |x| libm::sin(17.0 * x[0]));
        let b = solve_dirichlet_with(&op, &m, &one, &opts, Some(&start)).unwrap();
        assert!(a.field.max_abs_diff(&b.field) < 1e-6);
    }

    #[test]
    fn ks_membership() {
        let g = grid1(12);
        let m = Mask::from_predicate(&g, |x| x[0] < 0.6);
        let params = iso(0.5, 2.0);
        let opts = SolverOpts::for_exponent(2.0);
        assert!(ks_member(&Field::zeros(&g), params.clone(), 1e-12).unwrap());
        let u = solve_torsion(&m, params.clone(), &opts).unwrap().field;
        assert!(ks_member(&u, params.clone(), 10.0 * opts.tol_grad).unwrap());
        assert!(!ks_member(&u.scale(10.0), params.clone(), 10.0 * opts.tol_grad).unwrap());
        let r = ks_residual(&u.scale(10.0), params).unwrap();
        for c in m.cell_indices() {
            assert!((r.value(g.cell_node(c)) - 9.0).abs() < 1e-7);
        }
    }

    #[test]
    fn max_combine_of_half_torsions() {
        let g = grid1(16);
        for p in [2.0, 3.0] {
            let params = iso(0.5, p);
            let opts = SolverOpts::for_exponent(p);
            let left = Mask::from_predicate(&g, |x| x[0] < 0.5);
            let right = Mask::from_predicate(&g, |x| x[0] >= 0.5);
            let u = solve_torsion(&left, params.clone(), &opts).unwrap().field;
            let v = solve_torsion(&right, params.clone(), &opts).unwrap().field;
            let z = max_combine(&u, &v, params.clone(), &opts).unwrap();
            let w = u.max(&v).unwrap();
            assert!(z.max_abs_diff(&w) < 1e-6);
            assert!(ks_member(&z, params.clone(), 10.0 * opts.tol_grad).unwrap());
            let same = max_combine(&u, &u, params.clone(), &opts).unwrap();
            assert!(same.max_abs_diff(&u) < 1e-6);
            let zero = max_combine(&Field::zeros(&g), &v, params, &opts).unwrap();
            assert!(zero.max_abs_diff(&v) < 1e-6);
        }
    }

    #[test]
    fn max_combine_rejects_non_members() {
        let g = grid1(8);
        let params = iso(0.5, 2.0);
        let opts = SolverOpts::for_exponent(2.0);
        let u = solve_torsion(&Mask::full(&g), params.clone(), &opts).unwrap().field;
        assert!(matches!(max_combine(&u.scale(3.0), &u, params, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn comparison_and_maximality() {
        let g = grid1(16);
        let m = Mask::full(&g);
        let opts = SolverOpts::for_exponent(3.0);
        let one = Field::from_fn(&g, |_| 1.0);
        assert!(comparison_check(&one, &one.scale(2.0), &m, iso(0.6, 3.0), &opts).unwrap());
        assert!(comparison_check(&one, &one, &m, iso(0.6, 3.0), &opts).unwrap());
        assert!(comparison_check(&one.scale(2.0), &one, &m, iso(0.6, 3.0), &opts).is_err());
        let g12 = grid1(12);
        let opts2 = SolverOpts::for_exponent(2.0);
        assert!(maximality_check(&Mask::full(&g12), iso(0.5, 2.0), 20, &opts2, 1).unwrap());
    }

    #[test]
    fn aniso_comparison_in_2d() {
        use crate::operator::AnisoParams;
        let g = Grid::new(GridSpec::unit(2, 6, 1)).unwrap();
        let m = Mask::full(&g);
        let a = AnisoParams::new(alloc::vec![0.4, 0.7], alloc::vec![2.0, 2.5]).unwrap();
        let opts = SolverOpts::for_params(&a.clone().into());
        let half = Field::from_fn(&g, |_| 0.5);
        let one = Field::from_fn(&g, |_| 1.0);
        assert!(comparison_check(&half, &one, &m, a, &opts).unwrap());
    }

    #[test]
    fn invalid_options_rejected() {
        let mut o = SolverOpts::for_exponent(2.0);
        o.tol_grad = 0.0;
        assert!(o.validate().is_err());
        let mut o = SolverOpts::for_exponent(2.0);
        o.max_iter = 0;
        assert!(o.validate().is_err());
    }
}
