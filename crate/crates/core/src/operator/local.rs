//! Forward-difference stencils for the local energies `∫|∇u|^p` and `∫|∂_i u|^p`.
//!
//! Differences are taken on the padded grid plus one exterior layer on each side, all
//! zero, so jumps at the edge of a support always contribute.

use alloc::vec::Vec;

use crate::grid::Grid;
use crate::par::pairwise_sum;

/// `|d|^p` and `|d|^{p−2} d` with fast paths for the common exponents.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Pow {
    Two,
    Three,
    General(f64),
}

impl Pow {
    pub(crate) fn new(p: f64) -> Self {
        if p == 2.0 {
            Pow::Two
        } else if p == 3.0 {
            Pow::Three
        } else {
            Pow::General(p)
        }
    }

    #[inline]
    pub(crate) fn abs_pow(self, d: f64) -> f64 {
        match self {
            Pow::Two => d * d,
            Pow::Three => d * d * libm::fabs(d),
            Pow::General(p) => libm::pow(libm::fabs(d), p),
        }
    }

    /// `|d|^{p−2} d`, defined as 0 at `d = 0`.
    #[inline]
    pub(crate) fn phi(self, d: f64) -> f64 {
        match self {
            Pow::Two => d,
            Pow::Three => libm::fabs(d) * d,
            Pow::General(p) => {
                if d == 0.0 {
                    0.0
                } else {
                    libm::pow(libm::fabs(d), p - 2.0) * d
                }
            }
        }
    }

    /// `(|d|^p, |d|^{p−2} d)` sharing one power evaluation.
    #[inline]
    pub(crate) fn both(self, d: f64) -> (f64, f64) {
        match self {
            Pow::Two => (d * d, d),
            Pow::Three => {
                let ad = libm::fabs(d);
                (ad * d * d, ad * d)
            }
            Pow::General(p) => {
                if d == 0.0 {
                    (0.0, 0.0)
                } else {
                    let f = libm::pow(libm::fabs(d), p - 2.0);
                    (f * d * d, f * d)
                }
            }
        }
    }

    /// `|g|^p` for a gradient vector of squared length `sq`.
    #[inline]
    fn norm_pow(self, sq: f64) -> f64 {
        match self {
            Pow::Two => sq,
            Pow::Three => sq * libm::sqrt(sq),
            Pow::General(p) => libm::pow(sq, 0.5 * p),
        }
    }

    /// `|g|^{p−2}` for squared length `sq`, 0 at `sq = 0`.
    #[inline]
    fn norm_factor(self, sq: f64) -> f64 {
        match self {
            Pow::Two => 1.0,
            Pow::Three => libm::sqrt(sq),
            Pow::General(p) => {
                if sq == 0.0 {
                    0.0
                } else {
                    libm::pow(sq, 0.5 * (p - 2.0))
                }
            }
        }
    }
}

#[inline]
fn val(grid: &Grid, u: &[f64], k0: isize, k1: isize) -> f64 {
    let m = grid.padded_per_axis() as isize;
    if k0 < 0 || k0 >= m {
        return 0.0;
    }
    if grid.dim() == 1 {
        return u[k0 as usize];
    }
    if k1 < 0 || k1 >= m {
        return 0.0;
    }
    u[(k0 + m * k1) as usize]
}

#[inline]
fn forward(grid: &Grid, u: &[f64], k0: isize, k1: isize, axis: usize) -> f64 {
    let here = val(grid, u, k0, k1);
    let next = if axis == 0 { val(grid, u, k0 + 1, k1) } else { val(grid, u, k0, k1 + 1) };
    (next - here) / grid.spacing()
}

fn stencil_points(grid: &Grid, axis: Option<usize>) -> Vec<(isize, isize)> {
    let m = grid.padded_per_axis() as isize;
    if grid.dim() == 1 {
        return (-1..m).map(|k| (k, 0)).collect();
    }
    // along a single axis the transverse index never needs the exterior layer
    let (r0, r1) = match axis {
        Some(0) => (-1, 0),
        Some(_) => (0, -1),
        None => (-1, -1),
    };
    let mut pts = Vec::new();
    for k1 in r1..m {
        for k0 in r0..m {
            pts.push((k0, k1));
        }
    }
    pts
}

/// `Δ^dim Σ_m |∇_h u(m)|^p` with the forward-difference gradient.
pub(crate) fn iso_energy(grid: &Grid, u: &[f64], pw: Pow) -> f64 {
    let terms: Vec<f64> = stencil_points(grid, None)
        .into_iter()
        .map(|(k0, k1)| {
            let gx = forward(grid, u, k0, k1, 0);
            let sq = if grid.dim() == 1 {
                gx * gx
            } else {
                let gy = forward(grid, u, k0, k1, 1);
                gx * gx + gy * gy
            };
            pw.norm_pow(sq)
        })
        .collect();
    grid.cell_volume() * pairwise_sum(&terms)
}

/// `|∇_h u|^{p−2} ∇_h u` at stencil point `m`.
fn iso_flux(grid: &Grid, u: &[f64], k0: isize, k1: isize, pw: Pow) -> (f64, f64) {
    let gx = forward(grid, u, k0, k1, 0);
    if grid.dim() == 1 {
        return (pw.phi(gx), 0.0);
    }
    let gy = forward(grid, u, k0, k1, 1);
    let f = pw.norm_factor(gx * gx + gy * gy);
    (f * gx, f * gy)
}

/// Representer of `iso_energy / p` at one node.
pub(crate) fn iso_grad_at(grid: &Grid, u: &[f64], node: usize, pw: Pow) -> f64 {
    let k = grid.axis_index(node);
    let (k0, k1) = (k[0] as isize, k[1] as isize);
    let here = iso_flux(grid, u, k0, k1, pw);
    let west = iso_flux(grid, u, k0 - 1, k1, pw);
    let mut g = west.0 - here.0;
    if grid.dim() == 2 {
        let south = iso_flux(grid, u, k0, k1 - 1, pw);
        g += south.1 - here.1;
    }
    g / grid.spacing()
}

/// `Δ^dim Σ_m |∂_i^h u(m)|^p` along one axis.
pub(crate) fn axis_energy(grid: &Grid, u: &[f64], axis: usize, pw: Pow) -> f64 {
    let terms: Vec<f64> = stencil_points(grid, Some(axis))
        .into_iter()
        .map(|(k0, k1)| pw.abs_pow(forward(grid, u, k0, k1, axis)))
        .collect();
    grid.cell_volume() * pairwise_sum(&terms)
}

/// Representer of `axis_energy / p` at one node.
pub(crate) fn axis_grad_at(grid: &Grid, u: &[f64], node: usize, axis: usize, pw: Pow) -> f64 {
    let k = grid.axis_index(node);
    let (k0, k1) = (k[0] as isize, k[1] as isize);
    let (b0, b1) = if axis == 0 { (k0 - 1, k1) } else { (k0, k1 - 1) };
    let back = pw.phi(forward(grid, u, b0, b1, axis));
    let here = pw.phi(forward(grid, u, k0, k1, axis));
    (back - here) / grid.spacing()
}
