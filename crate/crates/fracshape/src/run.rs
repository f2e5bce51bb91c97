//! Command dispatch. Each command returns a [`Report`]; [`execute`] writes it out.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use fracshape_core::limits::{
    bbm_ratio, min_value_convergence_probe, poincare_sweep, reference_bump, sweep_torsion, sweep_torsion_aniso,
    SweepOpts, SweepTable,
};
use fracshape_core::operator::{validate_aniso, Check};
use fracshape_core::shapeopt::{
    cell_budget, gamma_distance, optimize_enumerate, optimize_rearrange, CostFunctional, CostKind, RearrangeOpts,
    ShapeResult,
};
use fracshape_core::solve::torsion_with;
use fracshape_core::spectral::{first_eigenpair_with, sign_changes};
use fracshape_core::{Field, Grid, Mask, Operator, Params};
use serde_json::{json, Map, Value};

use crate::config::{BbmField, Command, MethodConfig, RunConfig, SweepKind};
use crate::error::CliError;
use crate::io::{field_csv, history_csv, random_cells, resolve_mask, write, MaskFile};

/// Headline results plus the files to write next to `summary.json`.
#[derive(Debug, Default)]
pub struct Report {
    pub results: Map<String, Value>,
    pub converged: bool,
    pub notes: Vec<String>,
    pub files: Vec<(&'static str, String)>,
}

impl Report {
    fn new() -> Self {
        Report { converged: true, ..Default::default() }
    }

    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.into(), v.into());
    }

    /// `null` for non-finite values, which JSON cannot carry.
    fn num(&mut self, key: &str, x: f64) {
        self.set(key, if x.is_finite() { json!(x) } else { Value::Null });
    }
}

fn grid_of(cfg: &RunConfig) -> Result<Arc<Grid>, CliError> {
    Ok(Grid::new(cfg.grid.spec())?)
}

fn mask_of(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<Mask, CliError> {
    let src = cfg.mask.as_ref().ok_or_else(|| CliError::validation("config key `mask` is required"))?;
    resolve_mask(grid, src)
}

fn mask_json(m: &Mask) -> String {
    serde_json::to_string_pretty(&MaskFile::of(m)).expect("mask serialises") + "\n"
}

/// Runs `command` on a normalised config.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    match command {
        Command::Torsion => torsion(cfg),
        Command::Eigen => eigen(cfg),
        Command::Optimize => optimize(cfg),
        Command::SweepS => sweep(cfg),
        Command::Bbm => bbm(cfg),
        Command::AnisoCheck => aniso_check(cfg),
        Command::GammaDist => gamma(cfg),
    }
}

fn torsion(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let mask = mask_of(cfg, &grid)?;
    let op = Operator::new(&grid, cfg.params.params()?)?;
    let rep = torsion_with(&op, &mask, &cfg.solver_opts()?)?;
    let mut r = Report::new();
    r.converged = rep.converged;
    r.set("iterations", rep.iterations);
    r.num("final_residual", rep.final_residual);
    r.num("energy", rep.energy);
    r.num("compliance", rep.field.integral());
    r.num("max_value", rep.field.max_abs());
    r.set("mask_cells", mask.count());
    if mask.is_empty() {
        r.notes.push("empty mask: degenerate zero field".into());
    }
    r.files.push(("field.csv", field_csv(&rep.field)));
    r.files.push(("mask.json", mask_json(&mask)));
    Ok(r)
}

fn eigen(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let mask = mask_of(cfg, &grid)?;
    let op = Operator::new(&grid, cfg.params.params()?)?;
    let res = first_eigenpair_with(&op, &mask, &cfg.eigen_opts()?)?;
    let mut r = Report::new();
    r.converged = res.converged;
    r.num("lambda", res.lambda);
    r.num("poincare_constant", 1.0 / res.lambda);
    r.num("residual", res.residual);
    r.set("iterations", res.iterations);
    r.set("sign_changes", sign_changes(&res.field, &mask, 1e-12));
    r.set("mask_cells", mask.count());
    r.files.push(("field.csv", field_csv(&res.field)));
    r.files.push(("mask.json", mask_json(&mask)));
    Ok(r)
}

fn functional(cfg: &RunConfig, params: Params) -> Result<CostFunctional, CliError> {
    let kind: CostKind = cfg.functional.expect("normalised").into();
    let mut f = CostFunctional::new(kind, params);
    if kind == CostKind::FirstEigenvalue {
        f.eigen = cfg.eigen_opts()?;
    } else {
        f.eigen.solver = cfg.solver_opts()?;
    }
    Ok(f)
}

/// State on the optimal mask: eigenfunction or torsion function.
fn state_field(f: &CostFunctional, mask: &Mask) -> Result<Field, CliError> {
    let op = Operator::new(mask.grid(), f.params.clone())?;
    Ok(match f.kind {
        CostKind::FirstEigenvalue => first_eigenpair_with(&op, mask, &f.eigen)?.field,
        CostKind::TorsionalCompliance => torsion_with(&op, mask, &f.eigen.solver)?.field,
    })
}

fn optimize(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let f = functional(cfg, cfg.params.params()?)?;
    let c = cfg.c.expect("normalised");
    let res: ShapeResult = match cfg.method.expect("normalised") {
        MethodConfig::Enumerate => optimize_enumerate(&grid, &f, c)?,
        MethodConfig::Rearrange => {
            let init = match &cfg.init_mask {
                Some(src) => resolve_mask(&grid, src)?,
                None => random_cells(&grid, cell_budget(&grid, c), cfg.seed.unwrap_or(0))?,
            };
            let opts = RearrangeOpts { max_iter: cfg.max_iter.unwrap_or(100), ..RearrangeOpts::default() };
            optimize_rearrange(&grid, &f, c, &init, &opts)?
        }
    };
    let mut r = Report::new();
    r.num("cost", res.cost);
    r.num("volume", res.mask.volume());
    r.set("cells", res.mask.cell_indices());
    r.set("degenerate", res.degenerate);
    r.set("fixed_point", res.fixed_point);
    r.set("ties", res.ties.iter().map(|m| m.cell_indices()).collect::<Vec<_>>());
    r.set("method", match res.method {
        fracshape_core::shapeopt::Method::Enumerate => "enumerate",
        fracshape_core::shapeopt::Method::Rearrange => "rearrange",
    });
    if res.degenerate {
        r.notes.push("budget below one cell: empty mask, cost is +inf".into());
    } else {
        r.files.push(("field.csv", field_csv(&state_field(&f, &res.mask)?)));
    }
    if res.ties.len() > 1 {
        r.notes.push(format!("{} masks tie for the optimum", res.ties.len()));
    }
    r.files.push(("mask.json", mask_json(&res.mask)));
    r.files.push(("history.csv", history_csv(&res.history)));
    Ok(r)
}

fn table_report(t: &SweepTable) -> Report {
    let mut r = Report::new();
    r.converged = t.rows.iter().all(|row| row.ok);
    r.set("rows", t.rows.len());
    r.set("trend", t.trend.map_or(Value::Null, Value::Bool));
    r.num("kappa", t.kappa.unwrap_or(f64::NAN));
    for (name, v) in &t.diagnostics {
        r.num(name, *v);
    }
    for row in &t.rows {
        if let Some(e) = &row.error {
            r.notes.push(format!("row s={:?}: {e}", row.s));
        }
    }
    r.notes.extend(t.notes.iter().cloned());
    let sidecar = json!({
        "observables": t.observables,
        "p": t.p,
        "kappa": t.kappa,
        "trend": t.trend,
        "diagnostics": t.diagnostics.iter().map(|(n, v)| (n.clone(), if v.is_finite() { json!(v) } else { Value::Null })).collect::<Map<_, _>>(),
        "notes": t.notes,
        "rows": t.rows.iter().map(|row| json!({"s": row.s, "ok": row.ok, "degenerate": row.degenerate, "error": row.error})).collect::<Vec<_>>(),
    });
    r.files.push(("sweep.csv", t.to_csv()));
    r.files.push(("sweep.json", serde_json::to_string_pretty(&sidecar).expect("json") + "\n"));
    r
}

fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let s_list = cfg.s_list.as_deref().expect("normalised");
    let p = cfg.params.exponent()?;
    let solver = cfg.solver_opts()?;
    let diagonal = cfg.params.diagonal();
    let table = if cfg.params.is_aniso() {
        let mask = mask_of(cfg, &grid)?;
        let pv = cfg.params.p_vec.clone().expect("aniso");
        if cfg.params.s_vec.as_ref().map(Vec::len) != Some(pv.len()) {
            return Err(CliError::validation("params.s_vec and params.p_vec need the same length"));
        }
        sweep_torsion_aniso(&mask, &pv, s_list, diagonal, &solver)?
    } else {
        let opts = SweepOpts { solver, kappa: cfg.kappa_rule(), diagonal };
        match cfg.sweep.expect("normalised") {
            SweepKind::Torsion => sweep_torsion(&mask_of(cfg, &grid)?, p, s_list, &opts)?,
            SweepKind::Poincare => poincare_sweep(&mask_of(cfg, &grid)?, p, s_list, &opts)?,
            SweepKind::MinValue => {
                let kind = cfg.functional.expect("normalised").into();
                min_value_convergence_probe(&grid, kind, p, cfg.c.expect("normalised"), s_list, &opts)?
            }
        }
    };
    Ok(table_report(&table))
}

fn bbm(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let u = match cfg.field.expect("normalised") {
        BbmField::Bump => reference_bump(&grid),
        BbmField::Zero => Field::zeros(&grid),
    };
    let p = cfg.params.exponent()?;
    let t = bbm_ratio(&u, p, cfg.s_list.as_deref().expect("normalised"), cfg.axis.unwrap_or(0), cfg.params.diagonal())?;
    let mut r = table_report(&t);
    if t.rows.iter().any(|row| row.degenerate) {
        r.notes.push("zero local energy: ratio undefined, rows flagged degenerate".into());
    }
    Ok(r)
}

fn check_json(c: &Check) -> Value {
    match c {
        Check::Pass => json!({"status": "pass"}),
        Check::Fail(m) => json!({"status": "fail", "reason": m}),
        Check::NotApplicable(m) => json!({"status": "not_applicable", "reason": m}),
    }
}

fn aniso_check(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let params = cfg.params.aniso()?;
    let rep = validate_aniso(&params, grid.dim());
    let mut r = Report::new();
    r.num("s_bar", rep.s_bar);
    r.num("sp_bar", rep.sp_bar);
    r.num("p_star", rep.p_star.unwrap_or(f64::NAN));
    r.set("ranges", check_json(&rep.ranges));
    r.set("sorted", check_json(&rep.sorted));
    r.set("critical", check_json(&rep.critical));
    let admissible = rep.admissible().is_ok();
    r.set("admissible", admissible);
    if !admissible {
        r.notes.push("parameters are not admissible; no energies computed".into());
        return Ok(r);
    }
    let op = Operator::new(&grid, params.clone())?;
    let bump = reference_bump(&grid);
    let parts = op.energy_parts(&bump)?;
    r.set("bump_energy_parts", parts.iter().map(|x| json!(x)).collect::<Vec<_>>());
    if params.common_exponent().is_some() {
        let mask = match &cfg.mask {
            Some(src) => resolve_mask(&grid, src)?,
            None => Mask::full(&grid),
        };
        let res = first_eigenpair_with(&op, &mask, &cfg.eigen_opts()?)?;
        r.converged = res.converged;
        r.num("lambda", res.lambda);
        r.num("poincare_constant", 1.0 / res.lambda);
    } else {
        r.notes.push("exponents differ; Poincaré constant needs a common exponent".into());
    }
    Ok(r)
}

fn gamma(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_of(cfg)?;
    let a = mask_of(cfg, &grid)?;
    let b = resolve_mask(&grid, cfg.mask_b.as_ref().expect("normalised"))?;
    let d = gamma_distance(&a, &b, cfg.params.params()?, &cfg.solver_opts()?)?;
    let mut r = Report::new();
    r.num("distance", d);
    r.set("mask_cells", a.count());
    r.set("mask_b_cells", b.count());
    Ok(r)
}

/// Parses, normalises, runs and writes every output. Returns the exit code: 0, or 3
/// when a solve finished without converging (outputs are still written).
pub fn execute(command: Command, config_text: &str, config_dir: &Path, out: &Path) -> Result<i32, CliError> {
    let mut cfg = crate::config::parse_config(config_text)?;
    crate::config::resolve_paths(&mut cfg, config_dir);
    cfg.normalize(command)?;
    let report = run(command, &cfg)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    for (name, contents) in &report.files {
        write(out, name, contents)?;
    }
    let summary = json!({
        "command": command.name(),
        "config": cfg,
        "results": report.results,
        "converged": report.converged,
        "notes": report.notes,
    });
    write(out, "summary.json", &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    if report.converged {
        Ok(0)
    } else {
        Err(CliError::non_convergence(format!("{} did not converge; outputs written to {}", command.name(), out.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(text: &str, command: Command) -> RunConfig {
        let mut c = parse_config(text).unwrap();
        c.normalize(command).unwrap();
        c
    }

    #[test]
    fn torsion_on_empty_mask_is_degenerate_zero() {
        let c = cfg(r#"{"grid": {"dim": 1, "nodes_per_axis": 8}, "params": {"s": 0.5, "p": 2.0}, "mask": "empty"}"#, Command::Torsion);
        let r = run(Command::Torsion, &c).unwrap();
        assert!(r.converged);
        assert_eq!(r.results["compliance"], json!(0.0));
        assert!(r.notes.iter().any(|n| n.contains("degenerate")));
    }

    #[test]
    fn eigen_reports_positive_lambda() {
        let c = cfg(r#"{"grid": {"dim": 1, "nodes_per_axis": 12}, "params": {"s": 0.5, "p": 2.0}}"#, Command::Eigen);
        let r = run(Command::Eigen, &c).unwrap();
        assert!(r.results["lambda"].as_f64().unwrap() > 0.0);
        assert_eq!(r.results["sign_changes"], json!(0));
    }

    #[test]
    fn optimize_guard_is_code_4() {
        let c = cfg(
            r#"{"grid": {"dim": 2, "nodes_per_axis": 5}, "params": {"s": 0.5, "p": 2.0}, "c": 0.2}"#,
            Command::Optimize,
        );
        assert_eq!(run(Command::Optimize, &c).unwrap_err().code(), 4);
    }

    #[test]
    fn aniso_check_reports_parameters() {
        let c = cfg(
            r#"{"grid": {"dim": 2, "nodes_per_axis": 4}, "params": {"s_vec": [0.5, 0.5], "p_vec": [2.0, 2.0]}}"#,
            Command::AnisoCheck,
        );
        let r = run(Command::AnisoCheck, &c).unwrap();
        assert_eq!(r.results["s_bar"], json!(0.5));
        assert_eq!(r.results["sp_bar"], json!(1.0));
        assert_eq!(r.results["p_star"], json!(4.0));
        assert_eq!(r.results["admissible"], json!(true));
        assert!(r.results["poincare_constant"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn inadmissible_aniso_is_reported_not_fatal() {
        let c = cfg(
            r#"{"grid": {"dim": 2, "nodes_per_axis": 4}, "params": {"s_vec": [0.9, 0.9], "p_vec": [3.0, 3.0]}}"#,
            Command::AnisoCheck,
        );
        let r = run(Command::AnisoCheck, &c).unwrap();
        assert_eq!(r.results["admissible"], json!(false));
        assert_eq!(r.results["critical"]["status"], json!("fail"));
    }

    #[test]
    fn bbm_zero_field_degenerate() {
        let c = cfg(
            r#"{"grid": {"dim": 1, "nodes_per_axis": 16}, "params": {"p": 2.0}, "s_list": [0.5, 0.9], "field": "zero"}"#,
            Command::Bbm,
        );
        let r = run(Command::Bbm, &c).unwrap();
        assert!(r.notes.iter().any(|n| n.contains("degenerate")));
    }

    #[test]
    fn gamma_distance_of_equal_masks_is_small() {
        let c = cfg(
            r#"{"grid": {"dim": 1, "nodes_per_axis": 10}, "params": {"s": 0.5, "p": 2.0}, "mask": "left-half", "mask_b": [1,1,1,1,1,0,0,0,0,0]}"#,
            Command::GammaDist,
        );
        let r = run(Command::GammaDist, &c).unwrap();
        assert!(r.results["distance"].as_f64().unwrap() < 1e-8);
    }
}
