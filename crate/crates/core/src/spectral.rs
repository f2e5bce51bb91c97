//! First eigenpair of `apply(u) = λ |u|^{p−2} u` on a mask by inverse power iteration.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, same_grid, Field, Mask};
use crate::operator::{Operator, Params, Pow};
use crate::solve::{solve_dirichlet_with, SolverOpts};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOpts {
    /// Inner solver settings; `tol_grad` also sets the eigen-residual target
    /// `100 · tol_grad`.
    pub solver: SolverOpts,
    /// Relative change of `λ` between outer iterations at which to stop.
    pub tol: f64,
    /// Max-norm change of the normalised field between outer iterations at which to stop.
    pub step_tol: f64,
    pub max_outer: usize,
}

impl EigenOpts {
    pub fn for_exponent(p: f64) -> Self {
        EigenOpts { solver: SolverOpts::for_exponent(p), tol: 1e-12, step_tol: 1e-9, max_outer: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub lambda: f64,
    /// Nonnegative-sum representative with `‖u‖_p = 1`.
    pub field: Field,
    /// Max-norm of `apply(u) − λ|u|^{p−2}u` over the mask.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn homogeneity(params: &Params) -> Result<f64> {
    params.common_exponent().ok_or_else(|| {
        Error::InvalidParams("eigenvalue problems need one common exponent across axes".into())
    })
}

/// `J(u) / ‖u‖_p^p` on a prebuilt operator.
pub fn rayleigh_with(op: &Operator, u: &Field) -> Result<f64> {
    let p = homogeneity(op.params())?;
    let norm = lp_norm(u, p)?;
    if norm == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(op.energy(u)? / libm::pow(norm, p))
}

/// Rayleigh quotient `R(u) = J(u) / ‖u‖_p^p`, invariant under scaling of `u`.
pub fn rayleigh_quotient(u: &Field, params: impl Into<Params>) -> Result<f64> {
    rayleigh_with(&Operator::new(u.grid(), params)?, u)
}

fn eigen_residual(op: &Operator, mask_nodes: &[usize], u: &Field, lambda: f64, pw: Pow) -> f64 {
    let vals = u.values();
    mask_nodes
        .iter()
        .map(|&n| libm::fabs(op.apply_at(vals, n) - lambda * pw.phi(vals[n])))
        .fold(0.0, f64::max)
}

/// Inverse power iteration on a prebuilt operator.
pub fn first_eigenpair_with(op: &Operator, mask: &Mask, opts: &EigenOpts) -> Result<EigenResult> {
    if !same_grid(op.grid(), mask.grid()) {
        return Err(Error::GridMismatch);
    }
    if mask.is_empty() {
        return Err(Error::Precondition("first eigenpair needs a nonempty mask".into()));
    }
    opts.solver.validate()?;
    let p = homogeneity(op.params())?;
    let pw = Pow::new(p);
    let nodes = mask.nodes();
    let target = 100.0 * opts.solver.tol_grad;
    let floor = (1e-2 * opts.solver.tol_grad).max(1e-10);

    let normalise = |w: &Field| -> Result<Field> {
        let n = lp_norm(w, p)?;
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroField);
        }
        Ok(w.scale(1.0 / n))
    };
    let mut u = normalise(&Field::supported_on(mask, |_| 1.0))?;
    let mut lambda = rayleigh_with(op, &u)?;
    let mut residual = eigen_residual(op, &nodes, &u, lambda, pw);
    let mut converged = false;
    let mut iterations = 0;
    let mut inner = opts.solver.clone();
    let sup = op.support(&nodes);
    let hd = op.grid().cell_volume();
    // quotient and its derivative along `dv`, up to a positive factor
    let probe = |v: &[f64], dv: &[f64]| -> (f64, f64) {
        let ev = sup.eval(v);
        let j: f64 = ev.parts.iter().sum();
        let n: f64 = v.iter().map(|&x| pw.abs_pow(x)).sum::<f64>() * hd;
        let r = j / n;
        let d = ev.grad.iter().zip(v).zip(dv).map(|((g, &x), t)| (g - r * pw.phi(x)) * t).sum();
        (r, d)
    };
    let gather = |f: &Field| -> Vec<f64> { nodes.iter().map(|&n| f.value(n)).collect() };
    let mut prev: Option<Vec<f64>> = None;
    for k in 1..=opts.max_outer {
        iterations = k;
        inner.tol_grad = libm::pow(0.1, k as f64).max(floor);
        let rhs = u.map(|x| pw.phi(x));
        let warm = u.scale(libm::pow(lambda, -1.0 / (p - 1.0)));
        let rep = solve_dirichlet_with(op, mask, &rhs, &inner, Some(&warm))?;
        if !rep.converged {
            return Err(Error::NotConverged { what: "inverse iteration inner solve", residual: rep.final_residual });
        }
        let mut next = normalise(&rep.field)?;
        let cur = gather(&u);
        if let Some(before) = &prev {
            let step: Vec<f64> = cur.iter().zip(before).map(|(a, b)| a - b).collect();
            if let Some(v) = momentum(&gather(&next), &step, p, hd, &probe) {
                next = normalise(&Field::from_values(op.grid(), sup.scatter(&v))?)?;
            }
        }
        prev = Some(cur);
        let next_lambda = rayleigh_with(op, &next)?;
        residual = eigen_residual(op, &nodes, &next, next_lambda, pw);
        let change = libm::fabs(next_lambda - lambda);
        let moved = next.max_abs_diff(&u);
        u = next;
        lambda = next_lambda;
        if change <= opts.tol * lambda && moved <= opts.step_tol && residual <= target {
            converged = true;
            break;
        }
    }
    if u.values().iter().sum::<f64>() < 0.0 {
        u = u.scale(-1.0);
    }
    Ok(EigenResult { lambda, field: u, residual, iterations, converged })
}

/// Minimises the quotient over the plane spanned by the inverse iterate `w` and the
/// previous step, parametrised by angle. Sampled quotients locate the minimum; the
/// angle is then refined by bisection on the sign of the derivative, which stays
/// accurate where quotient differences drop below roundoff. Returns `None` when the
/// step is negligible or the minimum sits at `w` itself.
fn momentum(w: &[f64], step: &[f64], p: f64, hd: f64, probe: &dyn Fn(&[f64], &[f64]) -> (f64, f64)) -> Option<Vec<f64>> {
    let norm = |v: &[f64]| libm::pow(v.iter().map(|&x| libm::pow(libm::fabs(x), p)).sum::<f64>() * hd, 1.0 / p);
    let sn = norm(step);
    if !(sn > 1e-14) {
        return None;
    }
    let b: Vec<f64> = step.iter().map(|x| x / sn).collect();
    let at = |t: f64| -> (Vec<f64>, (f64, f64)) {
        let (c, s) = (libm::cos(t), libm::sin(t));
        let v: Vec<f64> = w.iter().zip(&b).map(|(x, y)| c * x + s * y).collect();
        let dv: Vec<f64> = w.iter().zip(&b).map(|(x, y)| -s * x + c * y).collect();
        let rd = probe(&v, &dv);
        (v, rd)
    };
    let half = core::f64::consts::FRAC_PI_2;
    let samples = 32;
    let h = 2.0 * half / samples as f64;
    let ts: Vec<f64> = (0..=samples).map(|i| -half + i as f64 * h).collect();
    let rd: Vec<(f64, f64)> = ts.iter().map(|&t| at(t).1).collect();
    // bracket: adjacent samples with the derivative turning from negative to positive
    let mut best: Option<(usize, f64)> = None;
    for i in 0..samples {
        if rd[i].1 < 0.0 && rd[i + 1].1 >= 0.0 {
            let r = rd[i].0.min(rd[i + 1].0);
            if best.is_none_or(|(_, br)| r < br) {
                best = Some((i, r));
            }
        }
    }
    let (i, _) = best?;
    let (mut lo, mut hi) = (ts[i], ts[i + 1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 .1 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    if libm::fabs(t) < 1e-15 {
        return None;
    }
    Some(at(t).0)
}

/// First eigenvalue and nonnegative eigenfunction on `mask`.
pub fn first_eigenpair(mask: &Mask, params: impl Into<Params>, opts: &EigenOpts) -> Result<EigenResult> {
    let op = Operator::new(mask.grid(), params)?;
    first_eigenpair_with(&op, mask, opts)
}

/// Sign changes of the eigenfunction over the mask, ignoring values below `tol`.
pub fn sign_changes(u: &Field, mask: &Mask, tol: f64) -> usize {
    let signs: Vec<bool> = mask
        .nodes()
        .iter()
        .map(|&n| u.value(n))
        .filter(|v| libm::fabs(*v) > tol)
        .map(|v| v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Message for a failed eigen solve, shared by callers that surface it.
pub fn describe(res: &EigenResult) -> alloc::string::String {
    format!(
        "lambda={:e} residual={:e} iterations={} converged={}",
        res.lambda, res.residual, res.iterations, res.converged
    )
}
