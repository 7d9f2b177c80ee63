//! Numerical laboratory for explicit solutions of the static vacuum Einstein
//! equations on 3-manifolds and the surrounding scalar-curvature machinery.
//!
//! The crate is organised around six subsystems:
//!
//! * [`chart`] - pointwise curvature tensors and the operators `L`, `L*`,
//!   `LL*` on metrics given in a coordinate chart, with configurable
//!   finite-difference schemes and analytic-derivative overrides.
//! * [`exact`] - closed-form model solutions (Schwarzschild, flat pairs) and
//!   the static-vacuum verification machinery: residual reports, the
//!   conformal companion metric, warped 4D Ricci checks, asymptotic mass
//!   fits.
//! * [`weyl`] - axisymmetric static vacuum solutions generated by Riesz
//!   measures on the axis: Newtonian potentials by quadrature, the metric
//!   function lambda by path integration of the integrability equations,
//!   metric assembly in cylindrical coordinates.
//! * [`profiles`] - rotationally symmetric warped-product ODE solutions, the
//!   kernel equation `L*(f') = 0`, and a spectral Yamabe solver on the
//!   circle.
//! * [`splitting`] - the L^2-orthogonal decompositions `z = L*f + xi` and
//!   `z = z^T + z^N` on closed warped products over a circle, and the full
//!   integral identity suite they satisfy.
//! * [`radii`] - L^2 curvature radius, volume radius, buffered-point
//!   predicates, and the descent iteration toward curvature concentration on
//!   rotationally symmetric model spaces.

pub mod chart;
pub mod exact;
pub mod numerics;
pub mod profiles;
pub mod radii;
pub mod splitting;
pub mod weyl;

pub use chart::{ChartDomain, ChartPoint, DiffScheme, MetricField, ScalarField, Sym3, SymTensorField};
