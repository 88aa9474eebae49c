//! Numerical building blocks shared by the solvers: quadrature, monotone
//! interpolation, an embedded Runge–Kutta stepper, root finding and
//! small statistics helpers.

pub mod interp;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod stats;

pub use interp::CubicHermite;
pub use quad::{integrate, integrate_with_breaks, Quadrature, QuadratureError};
pub use roots::{bisect, solve_monotone};
pub use stats::{ks_distance, mean_and_se, Accumulator};
