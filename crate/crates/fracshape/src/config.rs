//! Run configuration: strict JSON with defaults filled by [`RunConfig::normalize`].
//!
//! The normalised form is what `summary.json` echoes, and it reparses to an equal
//! value.

use std::path::{Path, PathBuf};

use fracshape_core::limits::KappaRule;
use fracshape_core::shapeopt::CostKind;
use fracshape_core::solve::{Direction, SolverOpts, StepRule};
use fracshape_core::spectral::EigenOpts;
use fracshape_core::{AnisoParams, DiagonalRule, GridSpec, IsoParams, Params};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Torsion,
    Eigen,
    Optimize,
    SweepS,
    Bbm,
    AnisoCheck,
    GammaDist,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Torsion => "torsion",
            Command::Eigen => "eigen",
            Command::Optimize => "optimize",
            Command::SweepS => "sweep-s",
            Command::Bbm => "bbm",
            Command::AnisoCheck => "aniso-check",
            Command::GammaDist => "gamma-dist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub nodes_per_axis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_max: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            box_min: self.box_min.clone().unwrap_or_else(|| vec![0.0; self.dim]),
            box_max: self.box_max.clone().unwrap_or_else(|| vec![1.0; self.dim]),
            nodes_per_axis: self.nodes_per_axis,
            padding_cells: self.padding_cells.unwrap_or(2),
        }
    }

    fn normalize(&mut self) {
        let spec = self.spec();
        self.padding_cells = Some(spec.padding_cells);
        self.box_min = Some(spec.box_min);
        self.box_max = Some(spec.box_max);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalConfig {
    Excluded,
    CellAverage,
}

impl From<DiagonalConfig> for DiagonalRule {
    fn from(d: DiagonalConfig) -> Self {
        match d {
            DiagonalConfig::Excluded => DiagonalRule::Excluded,
            DiagonalConfig::CellAverage => DiagonalRule::CellAverage,
        }
    }
}

/// Isotropic `(s, p)` or anisotropic `(s_vec, p_vec)`; sweeps and ratios only read
/// the exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<DiagonalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_points: Option<usize>,
}

impl ParamsConfig {
    pub fn is_aniso(&self) -> bool {
        self.s_vec.is_some() || self.p_vec.is_some()
    }

    pub fn diagonal(&self) -> DiagonalRule {
        self.diagonal.unwrap_or(DiagonalConfig::CellAverage).into()
    }

    fn check_family(&self) -> Result<(), CliError> {
        if self.is_aniso() && (self.s.is_some() || self.p.is_some()) {
            return Err(CliError::validation("params: give either s/p or s_vec/p_vec, not both"));
        }
        if self.is_aniso() && (self.kappa.is_some() || self.tail_points.is_some()) {
            return Err(CliError::validation("params: kappa and tail_points apply to isotropic parameters only"));
        }
        Ok(())
    }

    /// Exponent for sweeps and solver defaults: `p`, or the smallest `p_i`.
    pub fn exponent(&self) -> Result<f64, CliError> {
        if let Some(p) = self.p {
            return Ok(p);
        }
        match &self.p_vec {
            Some(v) if !v.is_empty() => Ok(v.iter().cloned().fold(f64::INFINITY, f64::min)),
            _ => Err(CliError::validation("params.p is required")),
        }
    }

    pub fn iso(&self) -> Result<IsoParams, CliError> {
        if self.is_aniso() {
            return Err(CliError::validation("this command needs isotropic params (s, p)"));
        }
        let s = self.s.ok_or_else(|| CliError::validation("params.s is required"))?;
        let p = self.p.ok_or_else(|| CliError::validation("params.p is required"))?;
        let mut iso = IsoParams::new(s, p)?.with_kappa(self.kappa.unwrap_or(1.0))?.with_diagonal(self.diagonal());
        if let Some(n) = self.tail_points {
            iso = iso.with_tail_points(n);
        }
        iso.validate()?;
        Ok(iso)
    }

    pub fn aniso(&self) -> Result<AnisoParams, CliError> {
        let s = self.s_vec.clone().ok_or_else(|| CliError::validation("params.s_vec is required"))?;
        let p = self.p_vec.clone().ok_or_else(|| CliError::validation("params.p_vec is required"))?;
        Ok(AnisoParams::new(s, p)?.with_diagonal(self.diagonal()))
    }

    pub fn params(&self) -> Result<Params, CliError> {
        if self.is_aniso() {
            Ok(self.aniso()?.into())
        } else {
            Ok(self.iso()?.into())
        }
    }

    fn normalize(&mut self) {
        self.diagonal = Some(self.diagonal.unwrap_or(DiagonalConfig::CellAverage));
        if !self.is_aniso() {
            self.kappa = Some(self.kappa.unwrap_or(1.0));
            self.tail_points = Some(self.tail_points.unwrap_or(64));
        }
    }
}

/// Where a mask comes from: a named shape, an inline 0/1 array, or a mask file.
///
/// Names: `all`, `empty`, `left-half`, `right-half`, `alternating`, `disk(r)` (centred
/// in the box) and `random(seed)` (each cell kept with probability 1/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    Named(String),
    Cells(Vec<u8>),
    File { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepConfig {
    Secant,
    Backtracking,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConfig {
    ConjugateGradient,
    SteepestDescent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_grad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepConfig>,
    /// Step length for `fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionConfig>,
}

impl SolverConfig {
    pub fn opts(&self, p: f64) -> Result<SolverOpts, CliError> {
        let mut o = SolverOpts::for_exponent(p);
        if let Some(t) = self.tol_grad {
            o.tol_grad = t;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        match self.step_rule {
            None | Some(StepConfig::Secant) => {}
            Some(StepConfig::Backtracking) => o.step_rule = StepRule::Backtracking { shrink: 0.5, armijo: 1e-4 },
            Some(StepConfig::Fixed) => {
                let eta = self.step.ok_or_else(|| CliError::validation("solver.step is required for the fixed rule"))?;
                o.step_rule = StepRule::Fixed(eta);
            }
        }
        if self.step.is_some() && self.step_rule != Some(StepConfig::Fixed) {
            return Err(CliError::validation("solver.step only applies to the fixed rule"));
        }
        if let Some(d) = self.direction {
            o.direction = match d {
                DirectionConfig::ConjugateGradient => Direction::ConjugateGradient,
                DirectionConfig::SteepestDescent => Direction::SteepestDescent,
            };
        }
        o.validate()?;
        Ok(o)
    }

    fn normalize(&mut self, p: f64) {
        let d = SolverOpts::for_exponent(p);
        self.tol_grad = Some(self.tol_grad.unwrap_or(d.tol_grad));
        self.max_iter = Some(self.max_iter.unwrap_or(d.max_iter));
        self.step_rule = Some(self.step_rule.unwrap_or(StepConfig::Secant));
        self.direction = Some(self.direction.unwrap_or(DirectionConfig::ConjugateGradient));
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
}

impl EigenConfig {
    pub fn opts(&self, p: f64, solver: SolverOpts) -> EigenOpts {
        let mut o = EigenOpts::for_exponent(p);
        o.solver = solver;
        if let Some(t) = self.tol {
            o.tol = t;
        }
        if let Some(t) = self.step_tol {
            o.step_tol = t;
        }
        if let Some(m) = self.max_outer {
            o.max_outer = m;
        }
        o
    }

    fn normalize(&mut self) {
        let d = EigenOpts::for_exponent(2.0);
        self.tol = Some(self.tol.unwrap_or(d.tol));
        self.step_tol = Some(self.step_tol.unwrap_or(d.step_tol));
        self.max_outer = Some(self.max_outer.unwrap_or(d.max_outer));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalConfig {
    FirstEigenvalue,
    TorsionalCompliance,
}

impl From<FunctionalConfig> for CostKind {
    fn from(f: FunctionalConfig) -> Self {
        match f {
            FunctionalConfig::FirstEigenvalue => CostKind::FirstEigenvalue,
            FunctionalConfig::TorsionalCompliance => CostKind::TorsionalCompliance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Enumerate,
    Rearrange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Torsion,
    Poincare,
    MinValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaConfig {
    /// Use `params.kappa`.
    Fixed,
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BbmField {
    Bump,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSource>,
    /// Second mask for `gamma-dist`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_b: Option<MaskSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenConfig>,
    /// Volume budget for `optimize` and min-value sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodConfig>,
    /// Initial mask for rearrangement; a random budget-sized mask when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_mask: Option<MaskSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_rule: Option<KappaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<BbmField>,
}

/// Parses strict JSON, naming the offending key path on failure.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::validation(format!("config key `{path}`: {}", e.inner()))
    })
}

impl RunConfig {
    /// Fills defaults for `command` and checks the command's required keys.
    pub fn normalize(&mut self, command: Command) -> Result<(), CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::validation(format!(
                    "config is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        self.params.check_family()?;
        self.grid.normalize();
        self.params.normalize();
        let p = self.params.exponent()?;
        self.solver.get_or_insert_with(SolverConfig::default).normalize(p);
        let uses_mask = matches!(command, Command::Torsion | Command::Eigen | Command::SweepS | Command::GammaDist);
        if uses_mask && self.mask.is_none() {
            self.mask = Some(MaskSource::Named("all".into()));
        }
        match command {
            Command::Eigen => self.eigen.get_or_insert_with(EigenConfig::default).normalize(),
            Command::Optimize => {
                require(self.c.is_some(), "c")?;
                self.functional.get_or_insert(FunctionalConfig::FirstEigenvalue);
                let m = *self.method.get_or_insert(MethodConfig::Enumerate);
                if self.functional == Some(FunctionalConfig::FirstEigenvalue) {
                    self.eigen.get_or_insert_with(EigenConfig::default).normalize();
                }
                if m == MethodConfig::Rearrange {
                    self.max_iter.get_or_insert(100);
                    if self.init_mask.is_none() {
                        self.seed.get_or_insert(0);
                    }
                }
            }
            Command::SweepS => {
                let list = self.s_list.as_ref().ok_or_else(|| CliError::validation("config key `s_list` is required"))?;
                check_s_list(list)?;
                let kind = *self.sweep.get_or_insert(SweepKind::Torsion);
                if !self.params.is_aniso() {
                    self.kappa_rule.get_or_insert(KappaConfig::Calibrated);
                }
                if kind == SweepKind::MinValue {
                    require(self.c.is_some(), "c")?;
                    self.functional.get_or_insert(FunctionalConfig::FirstEigenvalue);
                }
                if kind != SweepKind::Torsion && self.params.is_aniso() {
                    return Err(CliError::validation("anisotropic sweeps support `torsion` only"));
                }
                if matches!(kind, SweepKind::Poincare | SweepKind::MinValue) {
                    self.eigen.get_or_insert_with(EigenConfig::default).normalize();
                }
            }
            Command::Bbm => {
                let list = self.s_list.as_ref().ok_or_else(|| CliError::validation("config key `s_list` is required"))?;
                check_s_list(list)?;
                self.axis.get_or_insert(0);
                self.field.get_or_insert(BbmField::Bump);
            }
            Command::AnisoCheck => {
                if !self.params.is_aniso() {
                    return Err(CliError::validation("aniso-check needs params.s_vec and params.p_vec"));
                }
            }
            Command::GammaDist => require(self.mask_b.is_some(), "mask_b")?,
            Command::Torsion => {}
        }
        Ok(())
    }

    pub fn solver_opts(&self) -> Result<SolverOpts, CliError> {
        self.solver.clone().unwrap_or_default().opts(self.params.exponent()?)
    }

    pub fn eigen_opts(&self) -> Result<EigenOpts, CliError> {
        let p = self.params.exponent()?;
        Ok(self.eigen.clone().unwrap_or_default().opts(p, self.solver_opts()?))
    }

    pub fn kappa_rule(&self) -> KappaRule {
        match self.kappa_rule {
            Some(KappaConfig::Fixed) => KappaRule::Fixed(self.params.kappa.unwrap_or(1.0)),
            _ => KappaRule::Calibrated,
        }
    }
}

fn require(present: bool, key: &str) -> Result<(), CliError> {
    if present {
        Ok(())
    } else {
        Err(CliError::validation(format!("config key `{key}` is required for this command")))
    }
}

fn check_s_list(list: &[f64]) -> Result<(), CliError> {
    if list.is_empty() {
        return Err(CliError::validation("s_list is empty"));
    }
    if let Some(s) = list.iter().find(|&&s| !(s > 0.0 && s < 1.0)) {
        return Err(CliError::validation(format!(
            "s_list entry {s} is outside (0, 1); s = 1 is the implicit limit"
        )));
    }
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::validation("s_list must be strictly increasing"));
    }
    Ok(())
}

/// Resolves `file` mask paths against the config's directory.
pub fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    for m in [&mut cfg.mask, &mut cfg.mask_b, &mut cfg.init_mask].into_iter().flatten() {
        if let MaskSource::File { file } = m {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
    }
}
