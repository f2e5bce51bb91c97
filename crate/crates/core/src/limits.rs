//! Behaviour of fractional problems as `s → 1`: torsion convergence, directional energy
//! ratios, Poincaré constants and convergence of optimal values.
//!
//! Every sweep returns a [`SweepTable`]. Rows are computed independently and kept in
//! `s` order; a failed solve marks its row instead of aborting the sweep.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, Field, Grid, Mask};
use crate::operator::{directional_energy, AnisoParams, DiagonalRule, IsoParams, Operator, Params};
use crate::par::map_collect;
use crate::shapeopt::{optimize_enumerate, CostFunctional, CostKind};
use crate::solve::{torsion_with, SolverOpts};
use crate::spectral::{first_eigenpair_with, EigenOpts};

/// Calibration parameter `s` for the calibrated `κ`.
pub const CALIBRATION_S: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `[s]`, or one `s_i` per axis for anisotropic sweeps.
    pub s: Vec<f64>,
    /// One entry per observable; `NaN` where the row failed or is degenerate.
    pub values: Vec<f64>,
    pub ok: bool,
    pub degenerate: bool,
    /// Optimal mask of the row, for min-value probes.
    pub mask_cells: Option<Vec<usize>>,
    pub error: Option<String>,
}

impl SweepRow {
    fn new(s: Vec<f64>, values: Vec<f64>) -> Self {
        SweepRow { s, values, ok: true, degenerate: false, mask_cells: None, error: None }
    }

    fn failed(s: Vec<f64>, width: usize, e: &Error) -> Self {
        SweepRow {
            s,
            values: vec![f64::NAN; width],
            ok: false,
            degenerate: false,
            mask_cells: None,
            error: Some(format!("{e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub observables: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub p: f64,
    pub kappa: Option<f64>,
    /// Trend diagnostic of the sweep; `None` when it cannot be formed.
    pub trend: Option<bool>,
    pub diagnostics: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl SweepTable {
    fn new(observables: &[&str], p: f64) -> Self {
        SweepTable {
            observables: observables.iter().map(|s| String::from(*s)).collect(),
            rows: Vec::new(),
            p,
            kappa: None,
            trend: None,
            diagnostics: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Column `name` across rows.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.observables.iter().position(|o| o == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(n, _)| n == name).map(|x| x.1)
    }

    /// CSV with an `s` column (or `s_0, s_1, …`), one column per observable, then
    /// `ok`, `degenerate` and the row mask as space-separated cell indices.
    pub fn to_csv(&self) -> String {
        let width = self.rows.first().map_or(1, |r| r.s.len());
        let mut out = String::new();
        if width == 1 {
            out.push('s');
        } else {
            let cols: Vec<String> = (0..width).map(|i| format!("s_{i}")).collect();
            out.push_str(&cols.join(","));
        }
        for o in &self.observables {
            out.push(',');
            out.push_str(o);
        }
        out.push_str(",ok,degenerate,mask\n");
        for r in &self.rows {
            let mut cells: Vec<String> = r.s.iter().map(|x| format!("{x:?}")).collect();
            cells.extend(r.values.iter().map(|x| format!("{x:?}")));
            let _ = write!(out, "{},{},{},", cells.join(","), r.ok, r.degenerate);
            if let Some(m) = &r.mask_cells {
                let idx: Vec<String> = m.iter().map(|c| format!("{c}")).collect();
                out.push_str(&idx.join(" "));
            }
            out.push('\n');
        }
        out
    }
}

/// True when each value exceeds its predecessor by at most `slack` relative.
pub fn nonincreasing_within(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

fn check_s_list(s_list: &[f64]) -> Result<()> {
    if s_list.is_empty() {
        return Err(Error::InvalidParams("s_list is empty".into()));
    }
    if s_list.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::InvalidParams("every s in s_list must lie in (0, 1)".into()));
    }
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("s_list must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRule {
    Fixed(f64),
    /// `κ` chosen so a reference bump has the same fractional energy at
    /// [`CALIBRATION_S`] as its local energy.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOpts {
    pub solver: SolverOpts,
    pub kappa: KappaRule,
    pub diagonal: DiagonalRule,
}

impl SweepOpts {
    pub fn for_exponent(p: f64) -> Self {
        SweepOpts { solver: SolverOpts::for_exponent(p), kappa: KappaRule::Calibrated, diagonal: DiagonalRule::default() }
    }
}

/// Product of half-sines over the box, zero on the padding.
pub fn reference_bump(grid: &Arc<Grid>) -> Field {
    let spec = grid.spec().clone();
    Field::from_fn(grid, move |x| {
        (0..spec.dim)
            .map(|i| {
                let t = (x[i] - spec.box_min[i]) / (spec.box_max[i] - spec.box_min[i]);
                libm::sin(core::f64::consts::PI * t)
            })
            .product()
    })
}

/// `κ = J_local(b) / J_{κ=1, s=0.999}(b)` for the reference bump `b` on `grid`.
pub fn calibrate_kappa(grid: &Arc<Grid>, p: f64, diagonal: DiagonalRule) -> Result<f64> {
    let b = reference_bump(grid);
    let local = Operator::new(grid, IsoParams::new(1.0, p)?)?.energy(&b)?;
    let frac = Operator::new(grid, IsoParams::new(CALIBRATION_S, p)?.with_diagonal(diagonal))?.energy(&b)?;
    if !(local > 0.0 && frac > 0.0) {
        return Err(Error::Precondition("calibration bump has zero energy".into()));
    }
    Ok(local / frac)
}

fn resolve_kappa(grid: &Arc<Grid>, p: f64, rule: KappaRule, diagonal: DiagonalRule) -> Result<f64> {
    match rule {
        KappaRule::Fixed(k) => Ok(k),
        KappaRule::Calibrated => calibrate_kappa(grid, p, diagonal),
    }
}

fn torsion_field(op: &Operator, mask: &Mask, opts: &SolverOpts) -> Result<Field> {
    let r = torsion_with(op, mask, opts)?;
    if !r.converged {
        return Err(Error::NotConverged { what: "torsion", residual: r.final_residual });
    }
    Ok(r.field)
}

fn trend_last_le_first(values: &[f64]) -> Option<bool> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return None;
    }
    Some(finite[finite.len() - 1] <= finite[0])
}

/// `‖u^s − u^1‖_p` for isotropic torsion functions on `mask`, with `u^1` the local
/// solution. Columns: `distance`, `compliance` (`Δ^d Σ u^s`).
pub fn sweep_torsion(mask: &Mask, p: f64, s_list: &[f64], opts: &SweepOpts) -> Result<SweepTable> {
    check_s_list(s_list)?;
    let grid = mask.grid();
    let kappa = resolve_kappa(grid, p, opts.kappa, opts.diagonal)?;
    let target = torsion_field(&Operator::new(grid, IsoParams::new(1.0, p)?)?, mask, &opts.solver)?;
    let rows = map_collect(s_list.len(), |i| {
        let s = s_list[i];
        let row = || -> Result<Vec<f64>> {
            let params = IsoParams::new(s, p)?.with_kappa(kappa)?.with_diagonal(opts.diagonal);
            let u = torsion_field(&Operator::new(grid, params)?, mask, &opts.solver)?;
            Ok(vec![lp_norm(&u.sub(&target)?, p)?, u.integral()])
        };
        match row() {
            Ok(v) => SweepRow::new(vec![s], v),
            Err(e) => SweepRow::failed(vec![s], 2, &e),
        }
    });
    let mut table = SweepTable::new(&["distance", "compliance"], p);
    table.kappa = Some(kappa);
    table.rows = rows;
    table.trend = trend_last_le_first(&table.column("distance").unwrap_or_default());
    table.diagnostics.push(("target_compliance".into(), target.integral()));
    Ok(table)
}

/// Anisotropic counterpart of [`sweep_torsion`]: every `s_i` equals the row's `s`
/// and the target is the solution with all `s_i = 1`. Distances use `p_1`, the
/// smallest exponent. Rows whose parameters are inadmissible are marked failed.
pub fn sweep_torsion_aniso(
    mask: &Mask,
    p: &[f64],
    s_list: &[f64],
    diagonal: DiagonalRule,
    solver: &SolverOpts,
) -> Result<SweepTable> {
    check_s_list(s_list)?;
    let grid = mask.grid();
    let d = p.len();
    let base = AnisoParams::new(vec![1.0; d], p.to_vec())?.with_diagonal(diagonal);
    let p1 = base.min_exponent();
    let target = torsion_field(&Operator::new(grid, base)?, mask, solver)?;
    let rows = map_collect(s_list.len(), |i| {
        let s = vec![s_list[i]; d];
        let row = || -> Result<Vec<f64>> {
            let params = AnisoParams::new(s.clone(), p.to_vec())?.with_diagonal(diagonal);
            let u = torsion_field(&Operator::new(grid, params)?, mask, solver)?;
            Ok(vec![lp_norm(&u.sub(&target)?, p1)?, u.integral()])
        };
        match row() {
            Ok(v) => SweepRow::new(s, v),
            Err(e) => SweepRow::failed(s, 2, &e),
        }
    });
    let mut table = SweepTable::new(&["distance", "compliance"], p1);
    table.rows = rows;
    table.trend = trend_last_le_first(&table.column("distance").unwrap_or_default());
    Ok(table)
}

/// `ρ(s) = J_axis(u; s, p) / ((2/p) Δ^d Σ |∂_axis u|^p)` for a fixed field.
///
/// Columns: `fractional`, `local`, `ratio`. A field with zero local energy gives
/// degenerate rows. The diagnostic `last_step_change` is the relative change of `ρ`
/// between the last two rows.
pub fn bbm_ratio(u: &Field, p: f64, s_list: &[f64], axis: usize, diagonal: DiagonalRule) -> Result<SweepTable> {
    check_s_list(s_list)?;
    let local = directional_energy(u, axis, 1.0, p, diagonal)?;
    let rows: Vec<Result<SweepRow>> = map_collect(s_list.len(), |i| {
        let s = s_list[i];
        let frac = directional_energy(u, axis, s, p, diagonal)?;
        let mut row = SweepRow::new(vec![s], vec![frac, local, frac / local]);
        if local == 0.0 {
            row.values[2] = f64::NAN;
            row.degenerate = true;
        }
        Ok(row)
    });
    let mut table = SweepTable::new(&["fractional", "local", "ratio"], p);
    table.rows = rows.into_iter().collect::<Result<_>>()?;
    let ratios = table.column("ratio").unwrap_or_default();
    if local == 0.0 {
        table.notes.push("field has zero directional energy; ratio undefined".into());
    } else if ratios.len() >= 2 {
        let (a, b) = (ratios[ratios.len() - 2], ratios[ratios.len() - 1]);
        let change = libm::fabs(b - a) / a;
        table.diagnostics.push(("last_step_change".into(), change));
        table.diagnostics.push(("stabilised_ratio".into(), b));
    } else {
        table.notes.push("single s value; no stabilisation diagnostic".into());
    }
    Ok(table)
}

/// Best constant `C = sup ‖u‖_p^p / J(u) = 1/λ₁` on the mask.
pub fn poincare_estimate(mask: &Mask, params: impl Into<Params>, opts: &EigenOpts) -> Result<f64> {
    let op = Operator::new(mask.grid(), params)?;
    let r = first_eigenpair_with(&op, mask, opts)?;
    if !r.converged {
        return Err(Error::NotConverged { what: "eigenpair", residual: r.residual });
    }
    Ok(1.0 / r.lambda)
}

/// Poincaré constants along `s` with columns `poincare` and `scaled` (`C / (1−s)`).
pub fn poincare_sweep(mask: &Mask, p: f64, s_list: &[f64], opts: &SweepOpts) -> Result<SweepTable> {
    check_s_list(s_list)?;
    let grid = mask.grid();
    let kappa = resolve_kappa(grid, p, opts.kappa, opts.diagonal)?;
    let mut eig = EigenOpts::for_exponent(p);
    eig.solver = opts.solver.clone();
    let rows = map_collect(s_list.len(), |i| {
        let s = s_list[i];
        let row = || -> Result<Vec<f64>> {
            let params = IsoParams::new(s, p)?.with_kappa(kappa)?.with_diagonal(opts.diagonal);
            let c = poincare_estimate(mask, params, &eig)?;
            Ok(vec![c, c / (1.0 - s)])
        };
        match row() {
            Ok(v) => SweepRow::new(vec![s], v),
            Err(e) => SweepRow::failed(vec![s], 2, &e),
        }
    });
    let mut table = SweepTable::new(&["poincare", "scaled"], p);
    table.kappa = Some(kappa);
    table.rows = rows;
    Ok(table)
}

/// Enumerated minimum of the functional for each `s` and for `s = 1` (last row).
///
/// The trend diagnostic is `|min(s_last) − min(1)| ≤ |min(s_first) − min(1)|`; it is
/// skipped with a note for a single `s`.
pub fn min_value_convergence_probe(
    grid: &Arc<Grid>,
    kind: CostKind,
    p: f64,
    c: f64,
    s_list: &[f64],
    opts: &SweepOpts,
) -> Result<SweepTable> {
    check_s_list(s_list)?;
    let kappa = resolve_kappa(grid, p, opts.kappa, opts.diagonal)?;
    let mut all: Vec<f64> = s_list.to_vec();
    all.push(1.0);
    let mut rows = Vec::with_capacity(all.len());
    for &s in &all {
        let params = IsoParams::new(s, p)?.with_kappa(kappa)?.with_diagonal(opts.diagonal);
        let mut func = CostFunctional::new(kind, params);
        func.eigen.solver = opts.solver.clone();
        let row = match optimize_enumerate(grid, &func, c) {
            Ok(r) => {
                let mut row = SweepRow::new(vec![s], vec![r.cost]);
                row.degenerate = r.degenerate;
                row.mask_cells = Some(r.mask.cell_indices());
                row
            }
            Err(e @ Error::EnumerationGuard { .. }) => return Err(e),
            Err(e) => SweepRow::failed(vec![s], 1, &e),
        };
        rows.push(row);
    }
    let mut table = SweepTable::new(&["min_value"], p);
    table.kappa = Some(kappa);
    table.rows = rows;
    let v = table.column("min_value").unwrap_or_default();
    let limit = v[v.len() - 1];
    if s_list.len() < 2 {
        table.notes.push("single s value; trend diagnostic skipped".into());
    } else {
        let first = libm::fabs(v[0] - limit);
        let last = libm::fabs(v[v.len() - 2] - limit);
        if first.is_finite() && last.is_finite() {
            table.diagnostics.push(("first_gap".into(), first));
            table.diagnostics.push(("last_gap".into(), last));
            table.trend = Some(last <= first);
        } else {
            table.notes.push("non-finite minimum; trend diagnostic skipped".into());
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid1(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::unit(1, n, 2)).unwrap()
    }

    #[test]
    fn s_list_must_be_sorted_and_inside() {
        let g = grid1(8);
        let m = Mask::full(&g);
        let o = SweepOpts::for_exponent(2.0);
        for bad in [&[0.9, 0.5][..], &[0.5, 0.5], &[0.5, 1.0], &[], &[0.0, 0.5]] {
            assert!(matches!(sweep_torsion(&m, 2.0, bad, &o), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn single_cell_single_s_row() {
        let g = grid1(8);
        let m = Mask::from_cell_indices(&g, &[3]).unwrap();
        let t = sweep_torsion(&m, 2.0, &[0.9], &SweepOpts::for_exponent(2.0)).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].ok && t.rows[0].values[0].is_finite());
        assert_eq!(t.trend, None);
    }

    #[test]
    fn calibrated_kappa_is_positive_and_fine_grid_stable() {
        let a = calibrate_kappa(&grid1(64), 2.0, DiagonalRule::CellAverage).unwrap();
        let b = calibrate_kappa(&grid1(128), 2.0, DiagonalRule::CellAverage).unwrap();
        assert!(a > 0.0 && b > 0.0);
        assert!((a - b).abs() / b < 0.1);
    }

    #[test]
    fn torsion_distances_shrink() {
        let g = grid1(32);
        let t = sweep_torsion(&Mask::full(&g), 2.0, &[0.5, 0.8, 0.95], &SweepOpts::for_exponent(2.0)).unwrap();
        assert_eq!(t.trend, Some(true));
        let d = t.column("distance").unwrap();
        assert!(nonincreasing_within(&d, 0.05), "{d:?}");
        assert!(t.kappa.unwrap() > 0.0);
    }

    #[test]
    fn bbm_ratio_zero_field_is_degenerate() {
        let g = grid1(16);
        let t = bbm_ratio(&Field::zeros(&g), 2.0, &[0.5, 0.9], 0, DiagonalRule::CellAverage).unwrap();
        assert!(t.rows.iter().all(|r| r.degenerate && r.values[2].is_nan()));
        assert!(t.diagnostic("last_step_change").is_none());
    }

    #[test]
    fn bbm_ratio_positive_and_stabilises() {
        let g = grid1(128);
        let u = reference_bump(&g);
        let t = bbm_ratio(&u, 2.0, &[0.5, 0.9, 0.99, 0.999], 0, DiagonalRule::CellAverage).unwrap();
        assert!(t.column("ratio").unwrap().iter().all(|&r| r > 0.0));
        assert!(t.diagnostic("last_step_change").unwrap() < 0.05);
    }

    #[test]
    fn poincare_monotone_in_mask() {
        let g = grid1(12);
        let a = Mask::from_cell_indices(&g, &[4, 5, 6]).unwrap();
        let b = Mask::from_cell_indices(&g, &[3, 4, 5, 6, 7, 10]).unwrap();
        let params = IsoParams::new(0.5, 2.0).unwrap();
        let o = EigenOpts::for_exponent(2.0);
        let ca = poincare_estimate(&a, params.clone(), &o).unwrap();
        let cb = poincare_estimate(&b, params, &o).unwrap();
        assert!(ca > 0.0 && ca <= cb + 1e-8);
    }

    #[test]
    fn min_value_full_budget_and_singleton() {
        let g = grid1(6);
        let o = SweepOpts::for_exponent(2.0);
        let t = min_value_convergence_probe(&g, CostKind::FirstEigenvalue, 2.0, 1.0, &[0.5, 0.9], &o).unwrap();
        assert!(t.rows.iter().all(|r| r.mask_cells.as_ref().unwrap().len() == 6));
        assert_eq!(t.rows.len(), 3);
        let s = min_value_convergence_probe(&g, CostKind::TorsionalCompliance, 2.0, 0.5, &[0.7], &o).unwrap();
        assert_eq!(s.trend, None);
        assert!(!s.notes.is_empty());
    }

    #[test]
    fn csv_layout() {
        let g = grid1(8);
        let t = sweep_torsion(&Mask::full(&g), 2.0, &[0.5, 0.9], &SweepOpts::for_exponent(2.0)).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "s,distance,compliance,ok,degenerate,mask");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0.5,"));
    }

    #[test]
    fn sweeps_are_reproducible() {
        let g = grid1(16);
        let o = SweepOpts::for_exponent(2.0);
        let a = sweep_torsion(&Mask::full(&g), 2.0, &[0.4, 0.8], &o).unwrap();
        let b = sweep_torsion(&Mask::full(&g), 2.0, &[0.4, 0.8], &o).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
