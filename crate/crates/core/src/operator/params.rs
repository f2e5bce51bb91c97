use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// How the `i = j` cell of the double sum is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalRule {
    /// Drop the diagonal; the energy is the plain off-diagonal node sum.
    Excluded,
    /// Add the interaction of each cell with itself for a field that is linear on the
    /// cell, estimated with forward differences. This is the part that carries the
    /// whole energy in the `s -> 1` limit.
    #[default]
    CellAverage,
}

/// Isotropic parameters: order `s ∈ (0, 1]`, exponent `p > 1`, normalisation `kappa`.
///
/// The energy carries `kappa · (1 − s)`. At `s = 1` the local energy `∫|∇u|^p` is used
/// as is and `kappa` plays no role.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoParams {
    pub s: f64,
    pub p: f64,
    pub kappa: f64,
    pub diagonal: DiagonalRule,
    /// Gauss–Legendre points per angular sector for the 2D exterior tail and the 2D
    /// self-interaction coefficient.
    pub tail_points: usize,
}

impl IsoParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        let params = IsoParams { s, p, kappa: 1.0, diagonal: DiagonalRule::default(), tail_points: 64 };
        params.validate()?;
        Ok(params)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn with_diagonal(mut self, rule: DiagonalRule) -> Self {
        self.diagonal = rule;
        self
    }

    pub fn with_tail_points(mut self, n: usize) -> Self {
        self.tail_points = n.max(2);
        self
    }

    pub fn with_s(mut self, s: f64) -> Result<Self> {
        self.s = s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidParams(format!("s must lie in (0, 1], got {}", self.s)));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParams(format!("p must lie in (1, ∞), got {}", self.p)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.tail_points < 2 {
            return Err(Error::InvalidParams("tail_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn is_local(&self) -> bool {
        self.s == 1.0
    }
}

/// Per-axis orders and exponents of the anisotropic (pseudo) operator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisoParams {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub diagonal: DiagonalRule,
}

impl AnisoParams {
    pub fn new(s: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if s.len() != p.len() || s.is_empty() {
            return Err(Error::InvalidParams(format!(
                "s_vec and p_vec need the same nonzero length, got {} and {}",
                s.len(),
                p.len()
            )));
        }
        Ok(AnisoParams { s, p, diagonal: DiagonalRule::default() })
    }

    pub fn with_diagonal(mut self, rule: DiagonalRule) -> Self {
        self.diagonal = rule;
        self
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Harmonic mean of the orders.
    pub fn s_bar(&self) -> f64 {
        let n = self.s.len() as f64;
        n / self.s.iter().map(|s| 1.0 / s).sum::<f64>()
    }

    /// Harmonic mean of the products `s_i p_i`.
    pub fn sp_bar(&self) -> f64 {
        let n = self.s.len() as f64;
        n / self.s.iter().zip(&self.p).map(|(s, p)| 1.0 / (s * p)).sum::<f64>()
    }

    /// Critical exponent `(n·s̄p̄/s̄)/(n − s̄p̄)`; `None` when `n = s̄p̄`.
    pub fn p_star(&self) -> Option<f64> {
        let n = self.s.len() as f64;
        let spb = self.sp_bar();
        let denom = n - spb;
        if libm::fabs(denom) <= 1e-12 * n {
            None
        } else {
            Some((n * spb / self.s_bar()) / denom)
        }
    }

    /// Shared exponent when every `p_i` is equal.
    pub fn common_exponent(&self) -> Option<f64> {
        let p0 = self.p[0];
        self.p.iter().all(|&p| p == p0).then_some(p0)
    }

    pub fn min_exponent(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of one admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    Pass,
    Fail(String),
    NotApplicable(String),
}

impl Check {
    pub fn passed(&self) -> bool {
        !matches!(self, Check::Fail(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnisoReport {
    pub s_bar: f64,
    pub sp_bar: f64,
    pub p_star: Option<f64>,
    /// `0 < s_i ≤ 1` and `1 < p_i < ∞` for every axis.
    pub ranges: Check,
    /// `p_1 ≤ … ≤ p_n`.
    pub sorted: Check,
    /// `max p_i < p*` and `s̄p̄ < n`.
    pub critical: Check,
}

impl AnisoReport {
    /// Conditions the discrete operator needs. Ordering of the exponents is only a
    /// labelling convention and is reported but not required.
    pub fn admissible(&self) -> Result<()> {
        for c in [&self.ranges, &self.critical] {
            if let Check::Fail(msg) = c {
                return Err(Error::Inadmissible(msg.clone()));
            }
        }
        Ok(())
    }

    pub fn all_passed(&self) -> bool {
        self.ranges.passed() && self.sorted.passed() && self.critical.passed()
    }
}

/// Computes `s̄`, `s̄p̄`, `p*` and checks the three admissibility conditions.
pub fn validate_aniso(params: &AnisoParams, dim: usize) -> AnisoReport {
    let ranges = if params.s.len() != dim {
        Check::Fail(format!("expected {dim} axes, got {}", params.s.len()))
    } else if let Some(i) = params.s.iter().position(|&s| !(s > 0.0 && s <= 1.0)) {
        Check::Fail(format!("s_{} = {} outside (0, 1]", i + 1, params.s[i]))
    } else if let Some(i) = params.p.iter().position(|&p| !(p > 1.0 && p.is_finite())) {
        Check::Fail(format!("p_{} = {} outside (1, ∞)", i + 1, params.p[i]))
    } else {
        Check::Pass
    };
    let sorted = match params.p.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Check::Fail(format!(
            "p_{} = {} > p_{} = {}",
            i + 1,
            params.p[i],
            i + 2,
            params.p[i + 1]
        )),
        None => Check::Pass,
    };
    let s_bar = params.s_bar();
    let sp_bar = params.sp_bar();
    let p_star = params.p_star();
    let n = dim as f64;
    let critical = if dim == 1 {
        Check::NotApplicable("criticality is not checked in one dimension".into())
    } else {
        match p_star {
            None => Check::NotApplicable("n − s̄p̄ = 0, p* undefined".into()),
            Some(ps) => {
                let pmax = params.p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if sp_bar >= n {
                    Check::Fail(format!("s̄p̄ = {sp_bar} is not below n = {dim}"))
                } else if pmax >= ps {
                    Check::Fail(format!("p_n = {pmax} is not below p* = {ps}"))
                } else {
                    Check::Pass
                }
            }
        }
    };
    AnisoReport { s_bar, sp_bar, p_star, ranges, sorted, critical }
}

/// Either family of operator parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Iso(IsoParams),
    Aniso(AnisoParams),
}

impl Params {
    /// Exponent of the L^p space used for distances: `p` or the smallest `p_i`.
    pub fn lp_exponent(&self) -> f64 {
        match self {
            Params::Iso(p) => p.p,
            Params::Aniso(a) => a.min_exponent(),
        }
    }

    /// The homogeneity degree when the energy has one.
    pub fn common_exponent(&self) -> Option<f64> {
        match self {
            Params::Iso(p) => Some(p.p),
            Params::Aniso(a) => a.common_exponent(),
        }
    }
}

impl From<IsoParams> for Params {
    fn from(p: IsoParams) -> Self {
        Params::Iso(p)
    }
}

impl From<AnisoParams> for Params {
    fn from(p: AnisoParams) -> Self {
        Params::Aniso(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn iso_validation() {
        assert!(IsoParams::new(0.5, 2.0).is_ok());
        assert!(IsoParams::new(1.0, 2.0).unwrap().is_local());
        assert!(IsoParams::new(0.0, 2.0).is_err());
        assert!(IsoParams::new(1.1, 2.0).is_err());
        assert!(IsoParams::new(0.5, 1.0).is_err());
        assert!(IsoParams::new(0.5, 2.0).unwrap().with_kappa(-1.0).is_err());
    }

    #[test]
    fn equal_half_orders_give_critical_exponent_four() {
        let a = AnisoParams::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
        let r = validate_aniso(&a, 2);
        assert!((r.s_bar - 0.5).abs() < 1e-15);
        assert!((r.sp_bar - 1.0).abs() < 1e-15);
        assert!((r.p_star.unwrap() - 4.0).abs() < 1e-14);
        assert!(r.all_passed());
    }

    #[test]
    fn local_orders_make_criticality_inapplicable() {
        let a = AnisoParams::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let r = validate_aniso(&a, 2);
        assert_eq!(r.sp_bar, 2.0);
        assert!(r.p_star.is_none());
        assert!(matches!(r.critical, Check::NotApplicable(_)));
        assert!(r.admissible().is_ok());
    }

    #[test]
    fn unsorted_exponents_reported() {
        let a = AnisoParams::new(vec![0.5, 0.5], vec![3.0, 2.0]).unwrap();
        let r = validate_aniso(&a, 2);
        assert!(matches!(r.sorted, Check::Fail(_)));
        assert!(!r.all_passed());
    }

    #[test]
    fn supercritical_rejected_with_reason() {
        let a = AnisoParams::new(vec![0.9, 0.9], vec![3.0, 3.0]).unwrap();
        let r = validate_aniso(&a, 2);
        match r.admissible() {
            Err(Error::Inadmissible(msg)) => assert!(msg.contains("not below")),
            other => panic!("expected rejection, got {other:?}"),
        }
        let bad = AnisoParams::new(vec![0.0, 0.5], vec![2.0, 2.0]).unwrap();
        assert!(matches!(validate_aniso(&bad, 2).ranges, Check::Fail(_)));
    }

    #[test]
    fn one_dimension_skips_criticality() {
        let a = AnisoParams::new(vec![0.9], vec![3.0]).unwrap();
        let r = validate_aniso(&a, 1);
        assert!(matches!(r.critical, Check::NotApplicable(_)));
        assert!(r.admissible().is_ok());
    }
}
