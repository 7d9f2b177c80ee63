//! Axisymmetric static vacuum (Weyl) solutions generated by Riesz measures.
//!
//! A positive measure on the z-axis (point masses plus rods with density)
//! generates the axisymmetric potential
//!
//!   nu(x) = -Integral 1/|x - xi| d mu(xi),
//!
//! harmonic off the support. The metric function lambda solves the
//! integrability system lambda_r = r (nu_r^2 - nu_z^2), lambda_z =
//! 2 r nu_r nu_z, and the metric in cylindrical coordinates (r, z, theta) is
//!
//!   g = h^{-2} ( e^{2 lambda} (dr^2 + dz^2) + r^2 dtheta^2 ),   h = e^nu.
//!
//! Uniform rods use closed forms (which double as the quadrature oracle);
//! general densities go through adaptive Gauss-Legendre quadrature. Lambda is
//! normalized to vanish on the outer axis, where the integrability system
//! forces it to be constant.

use crate::chart::{ChartDomain, ChartPoint, MetricField, ScalarField, Sym3};
use crate::exact::StaticPair;
use crate::numerics::quad;
use nalgebra::Vector3;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeylError {
    #[error("evaluation point lies on the support of the measure")]
    PointOnSupport,
    #[error("integration path crosses the support of the measure")]
    PathCrossesSupport,
    #[error("domain touches the support or the axis")]
    DomainTouchesSupport,
    #[error("rod has empty extent: [{0}, {1}]")]
    EmptyRod(f64, f64),
    #[error("measure has no mass")]
    NoMass,
    #[error("rods or atoms overlap")]
    OverlappingSupport,
    #[error("cannot parse measure description: {0}")]
    Parse(String),
    #[error("unknown density '{0}' (catalog: constant number | inverse_one_plus_abs)")]
    UnknownDensity(String),
}

/// Line density of a rod segment.
#[derive(Debug, Clone, PartialEq)]
pub enum RodDensity {
    Constant(f64),
    /// 1 / (1 + |zeta|), with zeta the axis coordinate.
    InverseOnePlusAbs,
}

impl RodDensity {
    fn eval(&self, zeta: f64) -> f64 {
        match self {
            RodDensity::Constant(c) => *c,
            RodDensity::InverseOnePlusAbs => 1.0 / (1.0 + zeta.abs()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rod {
    pub z_lo: f64,
    pub z_hi: f64,
    pub density: RodDensity,
}

/// Positive measure on the z-axis: point masses plus rods.
#[derive(Debug, Clone, Default)]
pub struct RieszMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub rods: Vec<Rod>,
}

const SUPPORT_MARGIN: f64 = 1e-9;

impl RieszMeasure {
    pub fn atom(z: f64, mass: f64) -> Self {
        RieszMeasure {
            atoms: vec![(z, mass)],
            rods: vec![],
        }
    }

    pub fn rod(z_lo: f64, z_hi: f64, density: RodDensity) -> Self {
        RieszMeasure {
            atoms: vec![],
            rods: vec![Rod {
                z_lo,
                z_hi,
                density,
            }],
        }
    }

    /// Schwarzschild of mass m as a Weyl measure: density 1/2 on [-m, m].
    pub fn schwarzschild_rod(m: f64) -> Self {
        RieszMeasure::rod(-m, m, RodDensity::Constant(0.5))
    }

    pub fn validate(&self) -> Result<(), WeylError> {
        for rod in &self.rods {
            if !(rod.z_lo < rod.z_hi) {
                return Err(WeylError::EmptyRod(rod.z_lo, rod.z_hi));
            }
        }
        if self.total_mass() <= 0.0 {
            return Err(WeylError::NoMass);
        }
        // supports pairwise ordered and disjoint
        let mut intervals: Vec<(f64, f64)> = self
            .rods
            .iter()
            .map(|r| (r.z_lo, r.z_hi))
            .chain(self.atoms.iter().map(|&(z, _)| (z, z)))
            .collect();
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in intervals.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(WeylError::OverlappingSupport);
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        let atom_mass: f64 = self.atoms.iter().map(|&(_, m)| m).sum();
        let rod_mass: f64 = self
            .rods
            .iter()
            .map(|r| quad::adaptive(|z| r.density.eval(z), r.z_lo, r.z_hi, 1e-12))
            .sum();
        atom_mass + rod_mass
    }

    /// Extent [z_min, z_max] of the support on the axis, if nonempty.
    pub fn support_extent(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(z, _) in &self.atoms {
            lo = lo.min(z);
            hi = hi.max(z);
        }
        for r in &self.rods {
            lo = lo.min(r.z_lo);
            hi = hi.max(r.z_hi);
        }
        (lo <= hi).then_some((lo, hi))
    }

    fn on_support(&self, r: f64, z: f64) -> bool {
        if r.abs() > SUPPORT_MARGIN {
            return false;
        }
        self.atoms.iter().any(|&(za, _)| (z - za).abs() <= SUPPORT_MARGIN)
            || self
                .rods
                .iter()
                .any(|rod| z >= rod.z_lo - SUPPORT_MARGIN && z <= rod.z_hi + SUPPORT_MARGIN)
    }

    /// Weyl potential nu at the cylindrical point (r, z).
    pub fn potential(&self, r: f64, z: f64) -> Result<f64, WeylError> {
        if self.on_support(r, z) {
            return Err(WeylError::PointOnSupport);
        }
        let mut nu = 0.0;
        for &(za, m) in &self.atoms {
            nu -= m / (r * r + (z - za) * (z - za)).sqrt();
        }
        for rod in &self.rods {
            nu += rod_potential(rod, r, z);
        }
        Ok(nu)
    }

    /// (nu_r, nu_z), from closed forms or differentiated quadrature.
    pub fn potential_grad(&self, r: f64, z: f64) -> Result<(f64, f64), WeylError> {
        if self.on_support(r, z) {
            return Err(WeylError::PointOnSupport);
        }
        let mut nr = 0.0;
        let mut nz = 0.0;
        for &(za, m) in &self.atoms {
            let d2 = r * r + (z - za) * (z - za);
            let d3 = d2 * d2.sqrt();
            nr += m * r / d3;
            nz += m * (z - za) / d3;
        }
        for rod in &self.rods {
            let (gr, gz) = rod_grad(rod, r, z);
            nr += gr;
            nz += gz;
        }
        Ok((nr, nz))
    }

    /// Second partials (nu_rr, nu_rz, nu_zz).
    pub fn potential_hessian(&self, r: f64, z: f64) -> Result<(f64, f64, f64), WeylError> {
        if self.on_support(r, z) {
            return Err(WeylError::PointOnSupport);
        }
        let mut hrr = 0.0;
        let mut hrz = 0.0;
        let mut hzz = 0.0;
        for &(za, m) in &self.atoms {
            let dz = z - za;
            let d2 = r * r + dz * dz;
            let d = d2.sqrt();
            let d5 = d2 * d2 * d;
            hrr += m * (d2 - 3.0 * r * r) / d5;
            hrz += -3.0 * m * r * dz / d5;
            hzz += m * (d2 - 3.0 * dz * dz) / d5;
        }
        for rod in &self.rods {
            let (a, b, c) = rod_hessian(rod, r, z);
            hrr += a;
            hrz += b;
            hzz += c;
        }
        Ok((hrr, hrz, hzz))
    }
}

/// Sum of measures; the superposition principle for Weyl potentials.
pub fn superpose(measures: &[RieszMeasure]) -> Result<RieszMeasure, WeylError> {
    let mut out = RieszMeasure::default();
    for m in measures {
        out.atoms.extend_from_slice(&m.atoms);
        out.rods.extend_from_slice(&m.rods);
    }
    out.atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out.rods
        .sort_by(|a, b| a.z_lo.partial_cmp(&b.z_lo).unwrap());
    out.validate()?;
    Ok(out)
}

fn rod_potential(rod: &Rod, r: f64, z: f64) -> f64 {
    match rod.density {
        RodDensity::Constant(c) => {
            // Closed form via the symmetric combination of end distances:
            // nu = c ln((R1 + R2 - L) / (R1 + R2 + L)).
            let l = rod.z_hi - rod.z_lo;
            let r1 = (r * r + (z - rod.z_lo) * (z - rod.z_lo)).sqrt();
            let r2 = (r * r + (z - rod.z_hi) * (z - rod.z_hi)).sqrt();
            let s = r1 + r2;
            // s - l computed in a cancellation-free form.
            let s_minus_l = 2.0 * (r * r + (z - rod.z_lo) * (z - rod.z_hi) + r1 * r2) / (s + l);
            c * (s_minus_l / (s + l)).ln()
        }
        _ => -quad::adaptive(
            |zeta| rod.density.eval(zeta) / (r * r + (z - zeta) * (z - zeta)).sqrt(),
            rod.z_lo,
            rod.z_hi,
            1e-11,
        ),
    }
}

fn rod_grad(rod: &Rod, r: f64, z: f64) -> (f64, f64) {
    match rod.density {
        RodDensity::Constant(c) => {
            let l = rod.z_hi - rod.z_lo;
            let r1 = (r * r + (z - rod.z_lo) * (z - rod.z_lo)).sqrt();
            let r2 = (r * r + (z - rod.z_hi) * (z - rod.z_hi)).sqrt();
            let s = r1 + r2;
            let s_minus_l = 2.0 * (r * r + (z - rod.z_lo) * (z - rod.z_hi) + r1 * r2) / (s + l);
            let pref = 2.0 * c * l / (s_minus_l * (s + l));
            let sr = r / r1 + r / r2;
            let sz = (z - rod.z_lo) / r1 + (z - rod.z_hi) / r2;
            (pref * sr, pref * sz)
        }
        _ => {
            let f = |zeta: f64, comp: u8| {
                let dz = z - zeta;
                let d2 = r * r + dz * dz;
                let d3 = d2 * d2.sqrt();
                let k = rod.density.eval(zeta) / d3;
                if comp == 0 {
                    k * r
                } else {
                    k * dz
                }
            };
            (
                quad::adaptive(|zt| f(zt, 0), rod.z_lo, rod.z_hi, 1e-11),
                quad::adaptive(|zt| f(zt, 1), rod.z_lo, rod.z_hi, 1e-11),
            )
        }
    }
}

fn rod_hessian(rod: &Rod, r: f64, z: f64) -> (f64, f64, f64) {
    match rod.density {
        RodDensity::Constant(c) => {
            // Differentiate nu = c [ln(S - L) - ln(S + L)] twice, with
            // S = R1 + R2 and the end-distance derivatives in closed form.
            let ends = [rod.z_lo, rod.z_hi];
            let l = rod.z_hi - rod.z_lo;
            let rr: Vec<f64> = ends
                .iter()
                .map(|&e| (r * r + (z - e) * (z - e)).sqrt())
                .collect();
            let s = rr[0] + rr[1];
            let s_minus_l = 2.0 * (r * r + (z - ends[0]) * (z - ends[1]) + rr[0] * rr[1]) / (s + l);
            let mut sr = 0.0;
            let mut sz = 0.0;
            let mut srr = 0.0;
            let mut srz = 0.0;
            let mut szz = 0.0;
            for (i, &e) in ends.iter().enumerate() {
                let dz = z - e;
                let d = rr[i];
                sr += r / d;
                sz += dz / d;
                srr += dz * dz / (d * d * d);
                srz += -r * dz / (d * d * d);
                szz += r * r / (d * d * d);
            }
            let inv_m = 1.0 / s_minus_l;
            let inv_p = 1.0 / (s + l);
            let h = |sx: f64, sy: f64, sxy: f64| {
                c * (sxy * (inv_m - inv_p) - sx * sy * (inv_m * inv_m - inv_p * inv_p))
            };
            (h(sr, sr, srr), h(sr, sz, srz), h(sz, sz, szz))
        }
        _ => {
            let f = |zeta: f64, which: u8| {
                let dz = z - zeta;
                let d2 = r * r + dz * dz;
                let d = d2.sqrt();
                let d5 = d2 * d2 * d;
                let rho = rod.density.eval(zeta);
                match which {
                    0 => -rho * (d2 - 3.0 * r * r) / d5,
                    1 => rho * 3.0 * r * dz / d5,
                    _ => -rho * (d2 - 3.0 * dz * dz) / d5,
                }
            };
            (
                quad::adaptive(|zt| f(zt, 0), rod.z_lo, rod.z_hi, 1e-11),
                quad::adaptive(|zt| f(zt, 1), rod.z_lo, rod.z_hi, 1e-11),
                quad::adaptive(|zt| f(zt, 2), rod.z_lo, rod.z_hi, 1e-11),
            )
        }
    }
}

/// Integrand of the radial leg: lambda_r = r (nu_r^2 - nu_z^2).
fn lambda_r(measure: &RieszMeasure, r: f64, z: f64) -> f64 {
    let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
    r * (nr * nr - nz * nz)
}

/// Integrand of the vertical leg: lambda_z = 2 r nu_r nu_z.
fn lambda_z(measure: &RieszMeasure, r: f64, z: f64) -> f64 {
    let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
    2.0 * r * nr * nz
}

/// Reference point for the lambda normalization: a point on the axis beyond
/// the support, where lambda = 0.
pub fn default_reference(measure: &RieszMeasure) -> f64 {
    match measure.support_extent() {
        Some((lo, hi)) => hi + (hi - lo).max(1.0),
        None => 1.0,
    }
}

/// Lambda at (r, z), integrated radially out at the reference height and then
/// vertically at radius r. Both legs avoid the axis support for any r > 0.
pub fn lambda_field(
    measure: &RieszMeasure,
    r: f64,
    z: f64,
    z_ref: f64,
) -> Result<f64, WeylError> {
    if measure.on_support(r, z) {
        return Err(WeylError::PointOnSupport);
    }
    if measure.on_support(0.0, z_ref) {
        return Err(WeylError::PathCrossesSupport);
    }
    let radial = quad::adaptive(|rr| lambda_r(measure, rr, z_ref), 0.0, r, 1e-11);
    let vertical = quad::adaptive(|zz| lambda_z(measure, r, zz), z_ref, z, 1e-11);
    Ok(radial + vertical)
}

/// Same endpoint along an alternative path (down near the axis, then out),
/// for path-independence checks. The near-axis leg runs at radius `r_inner`.
pub fn lambda_field_alt(
    measure: &RieszMeasure,
    r: f64,
    z: f64,
    z_ref: f64,
    r_inner: f64,
) -> Result<f64, WeylError> {
    if measure.on_support(r, z) {
        return Err(WeylError::PointOnSupport);
    }
    let a = quad::adaptive(|rr| lambda_r(measure, rr, z_ref), 0.0, r_inner, 1e-11);
    let b = quad::adaptive(|zz| lambda_z(measure, r_inner, zz), z_ref, z, 1e-11);
    let c = quad::adaptive(|rr| lambda_r(measure, rr, z), r_inner, r, 1e-11);
    Ok(a + b + c)
}

/// Circulation of d lambda around the rectangle [r0, r1] x [z0, z1]; zero for
/// exact one-forms, up to quadrature error.
pub fn lambda_loop_residual(
    measure: &RieszMeasure,
    r0: f64,
    r1: f64,
    z0: f64,
    z1: f64,
) -> f64 {
    let bottom = quad::adaptive(|r| lambda_r(measure, r, z0), r0, r1, 1e-12);
    let right = quad::adaptive(|z| lambda_z(measure, r1, z), z0, z1, 1e-12);
    let top = quad::adaptive(|r| lambda_r(measure, r, z1), r1, r0, 1e-12);
    let left = quad::adaptive(|z| lambda_z(measure, r0, z), z1, z0, 1e-12);
    bottom + right + top + left
}

/// Rectangular (r, z) evaluation window for an assembled Weyl metric.
#[derive(Debug, Clone, Copy)]
pub struct WeylDomain {
    pub r_lo: f64,
    pub r_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

/// An assembled Weyl solution: the measure, its evaluation window, and the
/// axis reference point that normalizes lambda.
pub struct WeylSolution {
    pub measure: RieszMeasure,
    pub domain: WeylDomain,
    pub z_ref: f64,
}

/// Relative axis margin: charts are degenerate at r = 0.
pub const AXIS_MARGIN: f64 = 1e-3;

impl WeylSolution {
    pub fn nu(&self, r: f64, z: f64) -> Result<f64, WeylError> {
        self.measure.potential(r, z)
    }

    pub fn lambda(&self, r: f64, z: f64) -> Result<f64, WeylError> {
        lambda_field(&self.measure, r, z, self.z_ref)
    }

    /// The static pair (g, h) with h = e^nu and g per the Weyl metric form.
    pub fn pair(&self) -> StaticPair<'_> {
        let d = self.domain;
        let chart =
            ChartDomain::new([d.r_lo, d.z_lo, -PI], [d.r_hi, d.z_hi, PI]).with_period(2, 2.0 * PI);
        let measure = &self.measure;
        let z_ref = self.z_ref;

        let eval = move |p: &ChartPoint| -> Sym3 {
            let (r, z) = (p.coords[0], p.coords[1]);
            let nu = measure.potential(r, z).unwrap_or(f64::NAN);
            let lam = lambda_field(measure, r, z, z_ref).unwrap_or(f64::NAN);
            let a = (2.0 * (lam - nu)).exp();
            let c = r * r * (-2.0 * nu).exp();
            Sym3::from_diagonal(&Vector3::new(a, a, c))
        };
        // First derivatives: lambda derivatives come straight from the
        // integrability equations, nu derivatives from the kernel closed
        // forms.
        let d1 = move |p: &ChartPoint| -> [Sym3; 3] {
            let (r, z) = (p.coords[0], p.coords[1]);
            let nu = measure.potential(r, z).unwrap_or(f64::NAN);
            let lam = lambda_field(measure, r, z, z_ref).unwrap_or(f64::NAN);
            let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
            let lr = r * (nr * nr - nz * nz);
            let lz = 2.0 * r * nr * nz;
            let a = (2.0 * (lam - nu)).exp();
            let c = r * r * (-2.0 * nu).exp();
            let mut dr = Sym3::zeros();
            dr[(0, 0)] = a * 2.0 * (lr - nr);
            dr[(1, 1)] = dr[(0, 0)];
            dr[(2, 2)] = (2.0 * r - 2.0 * r * r * nr) * (-2.0 * nu).exp();
            let mut dz = Sym3::zeros();
            dz[(0, 0)] = a * 2.0 * (lz - nz);
            dz[(1, 1)] = dz[(0, 0)];
            dz[(2, 2)] = c * (-2.0 * nz);
            [dr, dz, Sym3::zeros()]
        };
        let d2 = move |p: &ChartPoint| -> [[Sym3; 3]; 3] {
            let (r, z) = (p.coords[0], p.coords[1]);
            let nu = measure.potential(r, z).unwrap_or(f64::NAN);
            let lam = lambda_field(measure, r, z, z_ref).unwrap_or(f64::NAN);
            let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
            let (nrr, nrz, nzz) = measure
                .potential_hessian(r, z)
                .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            let lr = r * (nr * nr - nz * nz);
            let lz = 2.0 * r * nr * nz;
            let lrr = (nr * nr - nz * nz) + 2.0 * r * (nr * nrr - nz * nrz);
            let lrz = 2.0 * r * (nr * nrz - nz * nzz);
            let lzz = 2.0 * r * (nrz * nz + nr * nzz);
            let a = (2.0 * (lam - nu)).exp();
            let e = (-2.0 * nu).exp();
            // a = exp(2(lam - nu)); differentiate by product rule.
            let ar = 2.0 * a * (lr - nr);
            let az = 2.0 * a * (lz - nz);
            let arr = 2.0 * ar * (lr - nr) + 2.0 * a * (lrr - nrr);
            let arz = 2.0 * az * (lr - nr) + 2.0 * a * (lrz - nrz);
            let azz = 2.0 * az * (lz - nz) + 2.0 * a * (lzz - nzz);
            // c = r^2 e^{-2 nu}
            let crr = (2.0 - 8.0 * r * nr + r * r * (4.0 * nr * nr - 2.0 * nrr)) * e;
            let crz = (-4.0 * r * nz + r * r * (4.0 * nr * nz - 2.0 * nrz)) * e;
            let czz = r * r * e * (4.0 * nz * nz - 2.0 * nzz);
            let mut out = [[Sym3::zeros(); 3]; 3];
            let mut m_rr = Sym3::zeros();
            m_rr[(0, 0)] = arr;
            m_rr[(1, 1)] = arr;
            m_rr[(2, 2)] = crr;
            let mut m_rz = Sym3::zeros();
            m_rz[(0, 0)] = arz;
            m_rz[(1, 1)] = arz;
            m_rz[(2, 2)] = crz;
            let mut m_zz = Sym3::zeros();
            m_zz[(0, 0)] = azz;
            m_zz[(1, 1)] = azz;
            m_zz[(2, 2)] = czz;
            out[0][0] = m_rr;
            out[0][1] = m_rz;
            out[1][0] = m_rz;
            out[1][1] = m_zz;
            out
        };

        let metric = MetricField::new(chart, eval)
            .with_first_derivatives(d1)
            .with_second_derivatives(d2);

        let potential = ScalarField::new(move |p: &ChartPoint| {
            measure
                .potential(p.coords[0], p.coords[1])
                .map(f64::exp)
                .unwrap_or(f64::NAN)
        })
        .with_gradient(move |p: &ChartPoint| {
            let (r, z) = (p.coords[0], p.coords[1]);
            let h = measure.potential(r, z).map(f64::exp).unwrap_or(f64::NAN);
            let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
            [h * nr, h * nz, 0.0]
        })
        .with_hessian(move |p: &ChartPoint| {
            let (r, z) = (p.coords[0], p.coords[1]);
            let h = measure.potential(r, z).map(f64::exp).unwrap_or(f64::NAN);
            let (nr, nz) = measure.potential_grad(r, z).unwrap_or((f64::NAN, f64::NAN));
            let (nrr, nrz, nzz) = measure
                .potential_hessian(r, z)
                .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            let mut m = Sym3::zeros();
            m[(0, 0)] = h * (nrr + nr * nr);
            m[(0, 1)] = h * (nrz + nr * nz);
            m[(1, 0)] = m[(0, 1)];
            m[(1, 1)] = h * (nzz + nz * nz);
            m
        });

        // Radial probe at a fixed off-axis inclination.
        let beta = 1.0f64;
        StaticPair {
            metric,
            potential,
            ray: Box::new(move |t| ChartPoint::new(t * beta.sin(), t * beta.cos(), 0.0)),
        }
    }
}

/// Assemble a Weyl solution on the given window.
pub fn build(measure: RieszMeasure, domain: WeylDomain) -> Result<WeylSolution, WeylError> {
    measure.validate()?;
    let scale = (domain.r_hi - domain.r_lo)
        .max(domain.z_hi - domain.z_lo)
        .max(1.0);
    if domain.r_lo < AXIS_MARGIN * scale {
        return Err(WeylError::DomainTouchesSupport);
    }
    let z_ref = default_reference(&measure);
    Ok(WeylSolution {
        measure,
        domain,
        z_ref,
    })
}

/// Flat-Laplacian residual of nu in cylindrical form, by central differences
/// on the potential values (independent of the analytic derivative path):
/// nu_rr + nu_r / r + nu_zz.
pub fn harmonicity_residual(measure: &RieszMeasure, r: f64, z: f64, h: f64) -> f64 {
    let nu = |rr: f64, zz: f64| measure.potential(rr, zz).unwrap_or(f64::NAN);
    let nu0 = nu(r, z);
    let nu_rr = (nu(r + h, z) - 2.0 * nu0 + nu(r - h, z)) / (h * h);
    let nu_zz = (nu(r, z + h) - 2.0 * nu0 + nu(r, z - h)) / (h * h);
    let nu_r = (nu(r + h, z) - nu(r - h, z)) / (2.0 * h);
    nu_rr + nu_r / r + nu_zz
}

/// Closed-form lambda of the Curzon solution (atom of mass m at the origin).
pub fn curzon_lambda(m: f64, r: f64, z: f64) -> f64 {
    let t2 = r * r + z * z;
    -m * m * r * r / (2.0 * t2 * t2)
}

/// Parse a measure description: one entry per line,
/// `atom z=<f> mass=<f>` or `rod z_lo=<f> z_hi=<f> density=<f|name>`.
pub fn parse_measure(text: &str) -> Result<RieszMeasure, WeylError> {
    let mut measure = RieszMeasure::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap();
        let mut kv = std::collections::BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| WeylError::Parse(format!("line {}: '{part}'", lineno + 1)))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |key: &str| -> Result<f64, WeylError> {
            kv.get(key)
                .ok_or_else(|| WeylError::Parse(format!("line {}: missing {key}", lineno + 1)))?
                .parse()
                .map_err(|_| WeylError::Parse(format!("line {}: bad number for {key}", lineno + 1)))
        };
        match kind {
            "atom" => measure.atoms.push((get("z")?, get("mass")?)),
            "rod" => {
                let density_str = kv.get("density").ok_or_else(|| {
                    WeylError::Parse(format!("line {}: missing density", lineno + 1))
                })?;
                let density = match density_str.parse::<f64>() {
                    Ok(c) => RodDensity::Constant(c),
                    Err(_) => match density_str.as_str() {
                        "inverse_one_plus_abs" => RodDensity::InverseOnePlusAbs,
                        other => return Err(WeylError::UnknownDensity(other.to_string())),
                    },
                };
                measure.rods.push(Rod {
                    z_lo: get("z_lo")?,
                    z_hi: get("z_hi")?,
                    density,
                });
            }
            other => {
                return Err(WeylError::Parse(format!(
                    "line {}: unknown entry '{other}'",
                    lineno + 1
                )))
            }
        }
    }
    measure.validate()?;
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::DiffScheme;
    use crate::exact::{asymptotic_mass_fit, grid_2d, static_residual};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn atom_potential_is_green_kernel() {
        let m = RieszMeasure::atom(0.0, 2.0);
        let nu = m.potential(3.0, 4.0).unwrap();
        assert_relative_eq!(nu, -2.0 / 5.0, max_relative = 1e-14);
    }

    #[test]
    fn uniform_rod_matches_quadrature() {
        // The closed form doubles as the quadrature oracle.
        let rod = Rod {
            z_lo: -1.0,
            z_hi: 1.0,
            density: RodDensity::Constant(0.5),
        };
        for &(r, z) in &[(0.5, 0.0), (2.0, 1.5), (0.3, -4.0), (10.0, 3.0)] {
            let closed = rod_potential(&rod, r, z);
            let by_quad = -quad::adaptive(
                |zeta| 0.5 / (r * r + (z - zeta) * (z - zeta)).sqrt(),
                -1.0,
                1.0,
                1e-12,
            );
            assert_relative_eq!(closed, by_quad, max_relative = 1e-9);
        }
    }

    #[test]
    fn schwarzschild_rod_closed_form() {
        let m = 1.0;
        let measure = RieszMeasure::schwarzschild_rod(m);
        let (r, z) = (1.5, 0.7);
        let rp = (r * r + (z - m) * (z - m)).sqrt();
        let rm = (r * r + (z + m) * (z + m)).sqrt();
        let expect = 0.5 * ((rp + rm - 2.0 * m) / (rp + rm + 2.0 * m)).ln();
        assert_relative_eq!(measure.potential(r, z).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn superposition_is_additive() {
        let a = RieszMeasure::atom(-2.0, 1.0);
        let b = RieszMeasure::atom(2.0, 0.5);
        let sum = superpose(&[a.clone(), b.clone()]).unwrap();
        let (r, z) = (1.0, 0.3);
        assert_relative_eq!(
            sum.potential(r, z).unwrap(),
            a.potential(r, z).unwrap() + b.potential(r, z).unwrap(),
            max_relative = 1e-14
        );

        let with_empty = superpose(&[a.clone()]).unwrap();
        assert_relative_eq!(
            with_empty.potential(r, z).unwrap(),
            a.potential(r, z).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn gradient_matches_differences() {
        let measure = superpose(&[
            RieszMeasure::atom(-2.0, 1.0),
            RieszMeasure::rod(0.0, 1.0, RodDensity::InverseOnePlusAbs),
        ])
        .unwrap();
        let (r, z) = (1.2, 0.4);
        let (nr, nz) = measure.potential_grad(r, z).unwrap();
        let h = 1e-5;
        let fd_r = (measure.potential(r + h, z).unwrap() - measure.potential(r - h, z).unwrap())
            / (2.0 * h);
        let fd_z = (measure.potential(r, z + h).unwrap() - measure.potential(r, z - h).unwrap())
            / (2.0 * h);
        assert_relative_eq!(nr, fd_r, max_relative = 1e-6);
        assert_relative_eq!(nz, fd_z, max_relative = 1e-6);
    }

    #[test]
    fn hessian_matches_differences() {
        let measure = RieszMeasure::schwarzschild_rod(1.0);
        let (r, z) = (1.4, 0.8);
        let (hrr, hrz, hzz) = measure.potential_hessian(r, z).unwrap();
        let h = 1e-4;
        let g = |r: f64, z: f64| measure.potential_grad(r, z).unwrap();
        let fd_rr = (g(r + h, z).0 - g(r - h, z).0) / (2.0 * h);
        let fd_rz = (g(r, z + h).0 - g(r, z - h).0) / (2.0 * h);
        let fd_zz = (g(r, z + h).1 - g(r, z - h).1) / (2.0 * h);
        assert_relative_eq!(hrr, fd_rr, max_relative = 1e-6);
        assert_relative_eq!(hrz, fd_rz, max_relative = 1e-6);
        assert_relative_eq!(hzz, fd_zz, max_relative = 1e-6);
    }

    #[test]
    fn potential_is_flat_harmonic_off_support() {
        let measure = superpose(&[
            RieszMeasure::atom(3.0, 0.7),
            RieszMeasure::schwarzschild_rod(1.0),
        ])
        .unwrap();
        for &(r, z) in &[(0.8, 0.2), (2.0, -1.0), (1.0, 4.0)] {
            let res = harmonicity_residual(&measure, r, z, 1e-4);
            assert_abs_diff_eq!(res, 0.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn positivity_and_decay() {
        let measure = RieszMeasure::schwarzschild_rod(1.0);
        // nu < 0 off support, increasing to 0 along rays.
        let mut last = f64::NEG_INFINITY;
        for k in 1..=6 {
            let t = 2.0f64.powi(k);
            let nu = measure.potential(t * 0.6, t * 0.8).unwrap();
            assert!(nu < 0.0);
            assert!(nu > last);
            last = nu;
        }
        assert!(last > -0.05);
    }

    #[test]
    fn curzon_lambda_against_closed_form() {
        let m = 1.0;
        let measure = RieszMeasure::atom(0.0, m);
        let z_ref = default_reference(&measure);
        for &(r, z) in &[(0.5, 0.0), (1.0, 1.0), (2.5, -1.3), (0.7, 2.0)] {
            let lam = lambda_field(&measure, r, z, z_ref).unwrap();
            let closed = curzon_lambda(m, r, z);
            assert_relative_eq!(lam, closed, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn lambda_zero_on_outer_axis_ray() {
        let measure = RieszMeasure::schwarzschild_rod(1.0);
        let z_ref = default_reference(&measure);
        // The radial integrand carries a factor r, so staying near the axis
        // beyond the support keeps lambda at zero.
        let lam = lambda_field_alt(&measure, 1e-6, 5.0, z_ref, 1e-6).unwrap();
        assert_abs_diff_eq!(lam, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn lambda_path_independence() {
        let measure = superpose(&[
            RieszMeasure::schwarzschild_rod(1.0),
            RieszMeasure::atom(3.0, 0.4),
        ])
        .unwrap();
        let z_ref = default_reference(&measure);
        let pts = [
            (0.6, 0.1),
            (1.3, -0.8),
            (2.2, 1.9),
            (0.9, 3.6),
            (3.0, 0.0),
            (1.7, -2.5),
        ];
        for &(r, z) in &pts {
            let a = lambda_field(&measure, r, z, z_ref).unwrap();
            let b = lambda_field_alt(&measure, r, z, z_ref, 0.05).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn lambda_loop_is_exact() {
        let measure = RieszMeasure::schwarzschild_rod(1.0);
        let res = lambda_loop_residual(&measure, 0.4, 2.5, -1.8, 1.6);
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn curzon_metric_solves_static_vacuum() {
        let sol = build(
            RieszMeasure::atom(0.0, 1.0),
            WeylDomain {
                r_lo: 0.5,
                r_hi: 3.0,
                z_lo: -2.0,
                z_hi: 2.0,
            },
        )
        .unwrap();
        let pair = sol.pair();
        let grid = grid_2d((0.6, 2.8), (-1.8, 1.8), 5, 5, 0.0);
        let rep = static_residual(&pair, &grid, &DiffScheme::default()).unwrap();
        assert!(rep.sup_tensor_residual < 1e-4, "{}", rep.sup_tensor_residual);
        assert!(
            rep.sup_laplacian_residual < 1e-4,
            "{}",
            rep.sup_laplacian_residual
        );
    }

    #[test]
    fn rod_metric_mass_fit() {
        let sol = build(
            RieszMeasure::schwarzschild_rod(1.0),
            WeylDomain {
                r_lo: 0.5,
                r_hi: 100.0,
                z_lo: -100.0,
                z_hi: 100.0,
            },
        )
        .unwrap();
        let pair = sol.pair();
        let (m, _) = asymptotic_mass_fit(&pair, &[20.0, 40.0, 80.0]).unwrap();
        assert!((m - 1.0).abs() < 0.02, "m = {m}");
    }

    #[test]
    fn zero_mass_limit_is_flat() {
        let eps = 1e-8;
        let sol = build(
            RieszMeasure::atom(0.0, eps),
            WeylDomain {
                r_lo: 0.5,
                r_hi: 3.0,
                z_lo: -2.0,
                z_hi: 2.0,
            },
        )
        .unwrap();
        let (r, z) = (1.0, 0.5);
        assert!(sol.nu(r, z).unwrap().abs() < 1e-7);
        assert!(sol.lambda(r, z).unwrap().abs() < 1e-12);
        // Metric approaches the flat cylindrical form diag(1, 1, r^2).
        let pair = sol.pair();
        let g = pair.metric.eval(&ChartPoint::new(r, z, 0.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0, max_relative = 1e-6);
        assert_relative_eq!(g[(2, 2)], r * r, max_relative = 1e-6);
    }

    #[test]
    fn double_rod_has_bounded_curvature() {
        use crate::chart::{metric_jet, ricci, tensor_norm};
        let measure = superpose(&[
            RieszMeasure::rod(-2.0, -0.5, RodDensity::Constant(0.5)),
            RieszMeasure::rod(0.5, 2.0, RodDensity::Constant(0.5)),
        ])
        .unwrap();
        let sol = build(
            measure,
            WeylDomain {
                r_lo: 0.3,
                r_hi: 6.0,
                z_lo: -5.0,
                z_hi: 5.0,
            },
        )
        .unwrap();
        let pair = sol.pair();
        let scheme = DiffScheme::default();
        let mut sup: f64 = 0.0;
        for p in grid_2d((0.4, 5.0), (-4.0, 4.0), 5, 5, 0.0) {
            let jet = metric_jet(&pair.metric, &p, &scheme).unwrap();
            let r = ricci(&pair.metric, &p, &scheme).unwrap();
            sup = sup.max(tensor_norm(&jet.ginv, &r));
        }
        assert!(sup.is_finite());
        assert!(sup < 50.0, "sup |ric| = {sup}");
    }

    #[test]
    fn parse_and_validate() {
        let text = "# two-body example\natom z=3.0 mass=0.5\nrod z_lo=-1.0 z_hi=1.0 density=0.5\n";
        let m = parse_measure(text).unwrap();
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.rods.len(), 1);
        assert!(parse_measure("rod z_lo=1.0 z_hi=-1.0 density=0.5").is_err());
        assert!(parse_measure("rod z_lo=-1.0 z_hi=1.0 density=frobnitz").is_err());
        assert!(matches!(
            parse_measure("atom z=0 mass=1\natom z=0 mass=1"),
            Err(WeylError::OverlappingSupport)
        ));
    }

    #[test]
    fn support_evaluation_is_an_error() {
        let m = RieszMeasure::schwarzschild_rod(1.0);
        assert!(matches!(
            m.potential(0.0, 0.5),
            Err(WeylError::PointOnSupport)
        ));
    }

    #[test]
    fn inverse_density_total_mass() {
        // integral of 1/(1+|z|) over [0, e-1] is 1.
        let m = RieszMeasure::rod(0.0, std::f64::consts::E - 1.0, RodDensity::InverseOnePlusAbs);
        assert_relative_eq!(m.total_mass(), 1.0, max_relative = 1e-10);
    }
}
