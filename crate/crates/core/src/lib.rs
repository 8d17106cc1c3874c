//! Green's functions of linear left-invariant diffusions on SE(2).
//!
//! Two generators are supported: contour enhancement (hypo-elliptic
//! diffusion, no convection) and contour completion (Mumford's direction
//! process). Kernels come from exact Mathieu-function representations and
//! from three numerical families: a Fourier band solver, left-invariant
//! finite differences and Monte Carlo random walks.

pub mod analysis;
pub mod cdft;
pub mod convolve;
pub mod eig;
pub mod error;
pub mod exact;
pub mod fd_solver;
pub mod field;
pub mod fourier_solver;
pub mod grid;
pub mod group;
pub mod io;
pub mod mathieu;
pub mod ode;
pub mod oscore;
pub mod params;
pub mod sampling;
pub mod special;
pub mod stochastic;

pub use error::{Result, Se2Error};
pub use field::{Domain, Se2Field};
pub use grid::GridSpec;
pub use group::GroupElement;
pub use params::{Case, DiffusionParams};
