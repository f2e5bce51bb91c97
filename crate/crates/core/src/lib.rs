//! Discrete fractional p-Laplacian machinery on uniform tensor grids.
//!
//! The crate is `no_std` (it needs `alloc`) and covers:
//!
//! * [`grid`]: cell-centred grids with a zero-extension padding layer, cell masks and fields;
//! * [`operator`]: Gagliardo-type energies and their Riesz representers, isotropic
//!   `(s, p)` and anisotropic per-axis `(s_i, p_i)`, plus the local `s = 1` counterparts;
//! * [`solve`]: convex energy minimisation for Dirichlet and torsion problems on masks,
//!   the constraint set of sub-solutions and order-theoretic checks;
//! * [`spectral`]: first eigenpair by inverse power iteration;
//! * [`shapeopt`]: volume-constrained minimisation of decreasing shape functionals;
//! * [`limits`]: `s -> 1` sweeps and Bourgain–Brezis–Mironescu ratio diagnostics;
//! * [`oracle`]: dense brute-force references used by the test suites.
//!
//! Enable the `parallel` feature to evaluate the nonlocal sums with rayon. Results are
//! bit-identical regardless of the worker count.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod error;
mod par;
mod quad;

pub mod grid;
pub mod limits;
pub mod operator;
pub mod oracle;
pub mod shapeopt;
pub mod solve;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{lp_norm, Field, Grid, GridSpec, Mask};
pub use operator::{AnisoParams, DiagonalRule, IsoParams, Operator, Params};
pub use par::pairwise_sum;
