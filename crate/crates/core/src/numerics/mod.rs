//! Shared numerical kernels: quadrature, ODE integration, trigonometric
//! interpolation on the circle.

pub mod fourier;
pub mod ode;
pub mod quad;
