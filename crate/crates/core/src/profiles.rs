//! Rotationally symmetric warped-product profiles dt^2 + f(t)^2 ds^2_{S^2}.
//!
//! Three kinds of profiles appear:
//!
//! * solutions of the degenerate initial value problem
//!   (f')^2 = 1 + f^2 - (a^3 + a)/f, f(0) = a, started on a short series arc
//!   and continued by adaptive Runge-Kutta;
//! * closed (periodic) profiles over a circle, stored spectrally;
//! * closed-form families used as oracles (constant cylinders, sinh cusps,
//!   trigonometric perturbations).
//!
//! The module assembles the corresponding 3-metric with analytic derivative
//! maps, evaluates the closed-form scalar curvature, measures the kernel
//! defect |L*(f')| through the chart operators, and solves the conformal
//! constant-curvature equation for SO(3)-invariant factors on closed
//! profiles by a spectral Newton iteration.

use crate::chart::{
    l_star, metric_jet, tensor_norm, ChartDomain, ChartPoint, DiffScheme, MetricField,
    ScalarField, Sym3,
};
use crate::numerics::fourier::{diff_matrix, TrigSeries};
use crate::numerics::ode::{self, OdeOptions};
use nalgebra::{DMatrix, DVector, Vector3};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("parameter out of range: {0}")]
    NonPhysicalParameter(String),
    #[error("integration tolerance not met: residual {0}")]
    ToleranceNotMet(f64),
    #[error("query {0} outside the profile range [{1}, {2}]")]
    OutOfRange(f64, f64, f64),
    #[error("profile does not have constant scalar curvature (dev {0})")]
    NonConstantScalarCurvature(f64),
    #[error("Newton iteration diverged after {0} steps")]
    NewtonDiverged(usize),
    #[error("achieved curvature sign {achieved} conflicts with the requested sign")]
    InconsistentSign { achieved: f64 },
    #[error("operation requires a closed profile")]
    NotClosed,
    #[error(transparent)]
    Ode(#[from] ode::OdeError),
}

type Closure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

enum Backend {
    /// Black-hole family: dense ODE nodes plus the algebraic derivative
    /// relations of the defining equation.
    BhOde {
        a: f64,
        t_series: f64,
        nodes: Vec<(f64, f64, f64)>,
    },
    /// Closed-form families.
    Analytic {
        f: Closure,
        d1: Closure,
        d2: Closure,
        d3: Closure,
    },
    /// Periodic samples, evaluated through the trigonometric interpolant.
    Spectral { series: TrigSeries },
}

/// Sampled warp radius with derivatives; closed profiles carry a period.
pub struct WarpedProfile {
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    period: Option<f64>,
    back: Backend,
}

fn bh_rhs_sq(a: f64, f: f64) -> f64 {
    1.0 + f * f - (a * a * a + a) / f
}

fn bh_fpp(a: f64, f: f64) -> f64 {
    f + (a * a * a + a) / (2.0 * f * f)
}

/// Solve the degenerate IVP (f')^2 = 1 + f^2 - (a^3+a)/f, f(0)=a, f' >= 0.
///
/// The right side vanishes at f = a, so integration starts from the series
/// f = a + f''(0) t^2/2 + f''''(0) t^4/24 on [0, t0], t0 = a/100, and then
/// proceeds by adaptive Runge-Kutta on f' = +sqrt(1 + f^2 - (a^3+a)/f).
pub fn solve_bh_profile(a: f64, t_max: f64, tol: f64) -> Result<WarpedProfile, ProfileError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(ProfileError::NonPhysicalParameter(format!(
            "a = {a}, need 0 < a < 1"
        )));
    }
    if t_max <= 0.0 {
        return Err(ProfileError::NonPhysicalParameter(format!("t_max = {t_max}")));
    }
    let t_series = a * 1e-2;
    let fpp0 = bh_fpp(a, a);
    let f4_0 = -fpp0 / (a * a);
    let f0 = a + 0.5 * fpp0 * t_series * t_series + f4_0 * t_series.powi(4) / 24.0;

    let opts = OdeOptions {
        rel_tol: (tol * 1e-2).clamp(1e-13, 1e-10),
        abs_tol: 1e-14,
        max_step: 1e-2,
        min_step: 1e-15,
    };
    let nodes = ode::integrate(
        |_, f: f64| bh_rhs_sq(a, f).max(0.0).sqrt(),
        t_series,
        f0,
        t_max,
        &opts,
    )?;

    // Re-substitution check on all accepted nodes.
    let mut worst: f64 = 0.0;
    for &(_, f, fp) in &nodes {
        worst = worst.max((fp * fp - bh_rhs_sq(a, f)).abs());
    }
    if worst > tol {
        return Err(ProfileError::ToleranceNotMet(worst));
    }

    let grid: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let f: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    let fp: Vec<f64> = nodes.iter().map(|n| n.2).collect();
    Ok(WarpedProfile {
        grid,
        f,
        fp,
        period: None,
        back: Backend::BhOde {
            a,
            t_series,
            nodes,
        },
    })
}

/// Round cylinder S^2(b) x S^1(length).
pub fn round_cylinder(b: f64, length: f64) -> WarpedProfile {
    analytic_closed(
        length,
        Arc::new(move |_t| b),
        Arc::new(|_t| 0.0),
        Arc::new(|_t| 0.0),
        Arc::new(|_t| 0.0),
    )
}

/// Cosine perturbation of the unit cylinder: f = 1 + eps cos(2 pi t / length).
pub fn perturbed_cylinder(eps: f64, length: f64) -> WarpedProfile {
    let w = 2.0 * PI / length;
    analytic_closed(
        length,
        Arc::new(move |t| 1.0 + eps * (w * t).cos()),
        Arc::new(move |t| -eps * w * (w * t).sin()),
        Arc::new(move |t| -eps * w * w * (w * t).cos()),
        Arc::new(move |t| eps * w * w * w * (w * t).sin()),
    )
}

/// Asymmetric closed test profile f = 1 + e1 cos(w t) + e2 sin(2 w t).
pub fn asymmetric_cylinder(e1: f64, e2: f64, length: f64) -> WarpedProfile {
    let w = 2.0 * PI / length;
    analytic_closed(
        length,
        Arc::new(move |t| 1.0 + e1 * (w * t).cos() + e2 * (2.0 * w * t).sin()),
        Arc::new(move |t| -e1 * w * (w * t).sin() + 2.0 * e2 * w * (2.0 * w * t).cos()),
        Arc::new(move |t| {
            -e1 * w * w * (w * t).cos() - 4.0 * e2 * w * w * (2.0 * w * t).sin()
        }),
        Arc::new(move |t| {
            e1 * w * w * w * (w * t).sin() - 8.0 * e2 * w * w * w * (2.0 * w * t).cos()
        }),
    )
}

/// Reflection t -> -t of a closed profile with closed-form derivatives.
pub fn reflected(profile: &WarpedProfile) -> Option<WarpedProfile> {
    let length = profile.period?;
    if let Backend::Analytic { f, d1, d2, d3 } = &profile.back {
        let (f, d1, d2, d3) = (f.clone(), d1.clone(), d2.clone(), d3.clone());
        Some(analytic_closed(
            length,
            Arc::new(move |t| f(-t)),
            Arc::new(move |t| -d1(-t)),
            Arc::new(move |t| d2(-t)),
            Arc::new(move |t| -d3(-t)),
        ))
    } else {
        None
    }
}

/// Hyperbolic cusp form f = sinh(t) on an interval.
pub fn sinh_profile(t_lo: f64, t_hi: f64) -> WarpedProfile {
    let n = 64;
    let grid: Vec<f64> = (0..n)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let f: Vec<f64> = grid.iter().map(|t| t.sinh()).collect();
    let fp: Vec<f64> = grid.iter().map(|t| t.cosh()).collect();
    WarpedProfile {
        grid,
        f,
        fp,
        period: None,
        back: Backend::Analytic {
            f: Arc::new(|t| t.sinh()),
            d1: Arc::new(|t| t.cosh()),
            d2: Arc::new(|t| t.sinh()),
            d3: Arc::new(|t| t.cosh()),
        },
    }
}

fn analytic_closed(length: f64, f: Closure, d1: Closure, d2: Closure, d3: Closure) -> WarpedProfile {
    let n = 64;
    let grid: Vec<f64> = (0..n).map(|i| length * i as f64 / n as f64).collect();
    let fs: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let fps: Vec<f64> = grid.iter().map(|&t| d1(t)).collect();
    WarpedProfile {
        grid,
        f: fs,
        fp: fps,
        period: Some(length),
        back: Backend::Analytic { f, d1, d2, d3 },
    }
}

/// Closed profile from uniform samples over one period.
pub fn from_closed_samples(samples: &[f64], period: f64) -> WarpedProfile {
    let series = TrigSeries::from_samples(samples, period);
    let n = samples.len();
    let grid: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
    let fp: Vec<f64> = grid.iter().map(|&t| series.deriv(t, 1)).collect();
    WarpedProfile {
        grid,
        f: samples.to_vec(),
        fp,
        period: Some(period),
        back: Backend::Spectral { series },
    }
}

impl WarpedProfile {
    pub fn is_closed(&self) -> bool {
        self.period.is_some()
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn t_range(&self) -> (f64, f64) {
        match self.period {
            Some(l) => (0.0, l),
            None => (
                *self.grid.first().unwrap_or(&0.0),
                *self.grid.last().unwrap_or(&0.0),
            ),
        }
    }

    /// Warp radius at t.
    pub fn value(&self, t: f64) -> f64 {
        self.deriv(t, 0)
    }

    pub fn deriv(&self, t: f64, order: u32) -> f64 {
        match &self.back {
            Backend::Analytic { f, d1, d2, d3 } => match order {
                0 => f(t),
                1 => d1(t),
                2 => d2(t),
                _ => d3(t),
            },
            Backend::Spectral { series } => series.deriv(t, order),
            Backend::BhOde { a, t_series, nodes } => {
                let a = *a;
                if t <= *t_series {
                    let fpp0 = bh_fpp(a, a);
                    let f4 = -fpp0 / (a * a);
                    return match order {
                        0 => a + 0.5 * fpp0 * t * t + f4 * t.powi(4) / 24.0,
                        1 => fpp0 * t + f4 * t * t * t / 6.0,
                        2 => fpp0 + 0.5 * f4 * t * t,
                        _ => f4 * t,
                    };
                }
                let f = bh_value_at(a, nodes, t);
                match order {
                    0 => f,
                    1 => bh_rhs_sq(a, f).max(0.0).sqrt(),
                    2 => bh_fpp(a, f),
                    _ => {
                        // Differentiate the defining relation once more.
                        let fp = bh_rhs_sq(a, f).max(0.0).sqrt();
                        fp * (1.0 - (a * a * a + a) / (f * f * f))
                    }
                }
            }
        }
    }

    /// The assembled 3-metric dt^2 + f^2 ds^2 in coordinates (t, theta, phi),
    /// with analytic first and second derivative maps.
    pub fn metric(&self) -> MetricField<'_> {
        let (lo, hi) = self.t_range();
        let theta_margin = 0.2;
        let mut chart = ChartDomain::new([lo, theta_margin, -PI], [hi, PI - theta_margin, PI])
            .with_period(2, 2.0 * PI);
        if let Some(l) = self.period {
            chart = chart.with_period(0, l);
        }
        let eval = move |p: &ChartPoint| -> Sym3 {
            let f = self.value(p.coords[0]);
            let st = p.coords[1].sin();
            Sym3::from_diagonal(&Vector3::new(1.0, f * f, f * f * st * st))
        };
        let d1 = move |p: &ChartPoint| -> [Sym3; 3] {
            let (t, th) = (p.coords[0], p.coords[1]);
            let f = self.value(t);
            let fp = self.deriv(t, 1);
            let (st, ct) = (th.sin(), th.cos());
            let mut dt = Sym3::zeros();
            dt[(1, 1)] = 2.0 * f * fp;
            dt[(2, 2)] = 2.0 * f * fp * st * st;
            let mut dth = Sym3::zeros();
            dth[(2, 2)] = 2.0 * f * f * st * ct;
            [dt, dth, Sym3::zeros()]
        };
        let d2 = move |p: &ChartPoint| -> [[Sym3; 3]; 3] {
            let (t, th) = (p.coords[0], p.coords[1]);
            let f = self.value(t);
            let fp = self.deriv(t, 1);
            let fpp = self.deriv(t, 2);
            let (st, ct) = (th.sin(), th.cos());
            let mut out = [[Sym3::zeros(); 3]; 3];
            let mut dtt = Sym3::zeros();
            dtt[(1, 1)] = 2.0 * (fp * fp + f * fpp);
            dtt[(2, 2)] = dtt[(1, 1)] * st * st;
            let mut dtth = Sym3::zeros();
            dtth[(2, 2)] = 4.0 * f * fp * st * ct;
            let mut dthth = Sym3::zeros();
            dthth[(2, 2)] = 2.0 * f * f * (ct * ct - st * st);
            out[0][0] = dtt;
            out[0][1] = dtth;
            out[1][0] = dtth;
            out[1][1] = dthth;
            out
        };
        MetricField::new(chart, eval)
            .with_first_derivatives(d1)
            .with_second_derivatives(d2)
    }

    /// The scalar field h = f' with analytic gradient and Hessian.
    pub fn fprime_field(&self) -> ScalarField<'_> {
        ScalarField::new(move |p: &ChartPoint| self.deriv(p.coords[0], 1))
            .with_gradient(move |p: &ChartPoint| [self.deriv(p.coords[0], 2), 0.0, 0.0])
            .with_hessian(move |p: &ChartPoint| {
                let mut m = Sym3::zeros();
                m[(0, 0)] = self.deriv(p.coords[0], 3);
                m
            })
    }

    /// Two-column CSV (t, f) of the stored samples.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,f")?;
        for (t, f) in self.grid.iter().zip(self.f.iter()) {
            writeln!(w, "{:.12e},{:.12e}", t, f)?;
        }
        Ok(())
    }
}

fn bh_value_at(a: f64, nodes: &[(f64, f64, f64)], t: f64) -> f64 {
    // Locate the nearest node at or below t, then take a few fixed
    // Runge-Kutta sub-steps of the defining first-order equation; the local
    // error sits far below the node accuracy.
    let idx = nodes
        .binary_search_by(|probe| probe.0.partial_cmp(&t).unwrap())
        .unwrap_or_else(|i| i.saturating_sub(1))
        .min(nodes.len() - 1);
    let (t0, f0, _) = nodes[idx];
    let h = (t - t0) / 4.0;
    if h == 0.0 {
        return f0;
    }
    let rhs = |f: f64| bh_rhs_sq(a, f).max(0.0).sqrt();
    let mut f = f0;
    for _ in 0..4 {
        let k1 = rhs(f);
        let k2 = rhs(f + 0.5 * h * k1);
        let k3 = rhs(f + 0.5 * h * k2);
        let k4 = rhs(f + h * k3);
        f += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    f
}

/// Closed-form scalar curvature of dt^2 + f^2 ds^2:
/// s = 2 (1 - (f')^2) / f^2 - 4 f'' / f.
pub fn profile_scalar_curvature(profile: &WarpedProfile, t: f64) -> Result<f64, ProfileError> {
    let (lo, hi) = profile.t_range();
    if profile.period.is_none() && !(t >= lo && t <= hi) {
        return Err(ProfileError::OutOfRange(t, lo, hi));
    }
    let f = profile.value(t);
    let fp = profile.deriv(t, 1);
    let fpp = profile.deriv(t, 2);
    Ok(2.0 * (1.0 - fp * fp) / (f * f) - 4.0 * fpp / f)
}

/// Mean scalar curvature and its sup deviation over a sample grid.
pub fn scalar_curvature_stats(profile: &WarpedProfile, n: usize) -> (f64, f64) {
    let (lo, hi) = profile.t_range();
    let samples: Vec<f64> = match profile.period {
        Some(l) => (0..n).map(|i| l * i as f64 / n as f64).collect(),
        None => (0..n)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
            .collect(),
    };
    let vals: Vec<f64> = samples
        .iter()
        .map(|&t| profile_scalar_curvature(profile, t).unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let dev = vals.iter().map(|v| (v - mean).abs()).fold(0.0f64, f64::max);
    (mean, dev)
}

/// sup |L*(f')| over sample points of the assembled metric. The profile must
/// have constant scalar curvature; that condition is exactly what makes f' a
/// kernel element.
pub fn kernel_residual(
    profile: &WarpedProfile,
    n_samples: usize,
    scheme: &DiffScheme,
) -> Result<f64, ProfileError> {
    let (mean, dev) = scalar_curvature_stats(profile, 128.max(n_samples));
    if dev > 1e-6 * mean.abs().max(1.0) {
        return Err(ProfileError::NonConstantScalarCurvature(dev));
    }
    let metric = profile.metric();
    let h = profile.fprime_field();
    let (lo, hi) = profile.t_range();
    let mut sup: f64 = 0.0;
    for i in 0..n_samples {
        let t = match profile.period {
            Some(l) => l * i as f64 / n_samples as f64,
            None => {
                let margin = 0.02 * (hi - lo);
                lo + margin + (hi - lo - 2.0 * margin) * i as f64 / (n_samples - 1).max(1) as f64
            }
        };
        let p = ChartPoint::new(t, PI / 2.0, 0.0);
        let m = l_star(&metric, &h, &p, scheme)
            .map_err(|_| ProfileError::OutOfRange(t, lo, hi))?;
        let jet = metric_jet(&metric, &p, scheme).unwrap();
        sup = sup.max(tensor_norm(&jet.ginv, &m));
    }
    Ok(sup)
}

/// Requested sign of the constant scalar curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSign {
    Negative,
    Zero,
    Positive,
}

/// Outcome of the conformal constant-curvature solve.
pub struct YamabeSolution {
    /// Conformal factor samples on the uniform circle grid.
    pub psi: Vec<f64>,
    /// Achieved constant scalar curvature of psi^4 g.
    pub s_bar: f64,
    pub iterations: usize,
}

/// Solve psi^5 s_bar = -8 Delta psi + psi s for an SO(3)-invariant conformal
/// factor on a closed profile, normalized so the conformal volume matches the
/// original one. Newton with line search; s_bar is re-estimated from the
/// current iterate each step.
pub fn yamabe_reduce(
    profile: &WarpedProfile,
    target: TargetSign,
    n: usize,
) -> Result<YamabeSolution, ProfileError> {
    let seed = vec![1.0; n];
    yamabe_reduce_from(profile, target, n, &seed)
}

/// Same solve from a caller-supplied positive initial guess.
pub fn yamabe_reduce_from(
    profile: &WarpedProfile,
    target: TargetSign,
    n: usize,
    init: &[f64],
) -> Result<YamabeSolution, ProfileError> {
    let l = profile.period.ok_or(ProfileError::NotClosed)?;
    assert_eq!(init.len(), n);
    let h = l / n as f64;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let f: Vec<f64> = ts.iter().map(|&t| profile.value(t)).collect();
    let fp: Vec<f64> = ts.iter().map(|&t| profile.deriv(t, 1)).collect();
    let s: Vec<f64> = ts
        .iter()
        .map(|&t| profile_scalar_curvature(profile, t).unwrap())
        .collect();

    // Invariant Laplacian: psi'' + 2 (f'/f) psi'.
    let d1 = diff_matrix(n, l, 1);
    let d2 = diff_matrix(n, l, 2);
    let mut lap = d2.clone();
    for i in 0..n {
        for j in 0..n {
            lap[(i, j)] += 2.0 * fp[i] / f[i] * d1[(i, j)];
        }
    }

    // dV = 4 pi f^2 dt; the conformal volume element is psi^6 dV.
    let weights: Vec<f64> = f.iter().map(|&fi| 4.0 * PI * fi * fi * h).collect();
    let vol: f64 = weights.iter().sum();

    let normalize = |psi: &mut DVector<f64>| {
        let v6: f64 = psi
            .iter()
            .zip(weights.iter())
            .map(|(&p, &w)| p.powi(6) * w)
            .sum();
        let scale = (vol / v6).powf(1.0 / 6.0);
        *psi *= scale;
    };
    let s_bar_of = |psi: &DVector<f64>| -> f64 {
        // Pairing the equation with psi: conformal total curvature over the
        // conformal volume.
        let lap_psi = &lap * psi;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (-8.0 * lap_psi[i] + s[i] * psi[i]) * psi[i] * weights[i];
            den += psi[i].powi(6) * weights[i];
        }
        num / den
    };
    let residual = |psi: &DVector<f64>, s_bar: f64| -> DVector<f64> {
        let lap_psi = &lap * psi;
        DVector::from_iterator(
            n,
            (0..n).map(|i| -8.0 * lap_psi[i] + s[i] * psi[i] - s_bar * psi[i].powi(5)),
        )
    };

    let mut psi = DVector::from_iterator(n, init.iter().copied());
    normalize(&mut psi);
    let mut s_bar = s_bar_of(&psi);
    let mut res = residual(&psi, s_bar);
    // Achievable residual floor: matrix-vector roundoff of the spectral
    // Laplacian (entries grow like n^2) plus the zeroth-order terms.
    let lap_norm_inf = (0..n)
        .map(|i| (0..n).map(|j| lap[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s_max = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 500.0 * f64::EPSILON * (8.0 * lap_norm_inf + s_max).max(1.0);
    let max_iter = 80;
    for it in 0..max_iter {
        let rnorm = res.amax();
        if rnorm < tol {
            let ok = match target {
                TargetSign::Negative => s_bar < 0.0,
                TargetSign::Zero => s_bar.abs() < 1e-8,
                TargetSign::Positive => s_bar > 0.0,
            };
            if !ok {
                return Err(ProfileError::InconsistentSign { achieved: s_bar });
            }
            return Ok(YamabeSolution {
                psi: psi.iter().copied().collect(),
                s_bar,
                iterations: it,
            });
        }
        let mut jac: DMatrix<f64> = lap.clone() * -8.0;
        for i in 0..n {
            jac[(i, i)] += s[i] - 5.0 * s_bar * psi[i].powi(4);
        }
        let delta = jac
            .lu()
            .solve(&res)
            .ok_or(ProfileError::NewtonDiverged(it))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = &psi - &delta * alpha;
            if cand.iter().any(|&v| v <= 0.0) {
                alpha *= 0.5;
                continue;
            }
            normalize(&mut cand);
            let cand_sbar = s_bar_of(&cand);
            let cand_res = residual(&cand, cand_sbar);
            if cand_res.amax() < rnorm * (1.0 - 1e-4 * alpha) || cand_res.amax() < tol {
                psi = cand;
                s_bar = cand_sbar;
                res = cand_res;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(ProfileError::NewtonDiverged(it));
        }
    }
    Err(ProfileError::NewtonDiverged(max_iter))
}

/// Reparametrize psi^4 (dt^2 + f^2 ds^2) back to warped-product form:
/// dt~ = psi^2 dt, f~ = psi^2 f. Returns a closed spectral profile.
pub fn conformal_profile(
    profile: &WarpedProfile,
    psi: &[f64],
) -> Result<WarpedProfile, ProfileError> {
    let l = profile.period.ok_or(ProfileError::NotClosed)?;
    let n = psi.len();
    let psi2: Vec<f64> = psi.iter().map(|&p| p * p).collect();
    let psi2_series = TrigSeries::from_samples(&psi2, l);
    let new_len = psi2_series.mean() * l;

    // Invert the arclength map t~(t) at uniform t~ targets.
    let mut samples = Vec::with_capacity(n);
    for j in 0..n {
        let target = new_len * j as f64 / n as f64;
        let mut t = target / psi2_series.mean();
        for _ in 0..50 {
            let g = psi2_series.antiderivative(t) - target;
            let step = g / psi2_series.eval(t);
            t -= step;
            if step.abs() < 1e-14 * (1.0 + t.abs()) {
                break;
            }
        }
        samples.push(psi2_series.eval(t) * profile.value(t));
    }
    Ok(from_closed_samples(&samples, new_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{warped4_ricci, StaticPair};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn bh_rhs_vanishes_at_start() {
        // 1 + a^2 - (a^3 + a)/a = 0 for every a.
        for &a in &[0.1, 0.3, 0.5, 0.9] {
            assert_abs_diff_eq!(bh_rhs_sq(a, a), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bh_profile_residual_small() {
        let prof = solve_bh_profile(0.5, 5.0, 1e-9).unwrap();
        let a = 0.5;
        for i in (0..prof.grid.len()).step_by(7) {
            let (f, fp) = (prof.f[i], prof.fp[i]);
            assert!((fp * fp - bh_rhs_sq(a, f)).abs() < 1e-9);
        }
        // Interpolated values satisfy the equation too.
        for &t in &[0.013, 0.4, 1.1, 2.77, 4.9] {
            let f = prof.value(t);
            let fp = prof.deriv(t, 1);
            assert!((fp * fp - bh_rhs_sq(a, f)).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn bh_profile_rejects_bad_parameters() {
        assert!(solve_bh_profile(1.5, 5.0, 1e-9).is_err());
        assert!(solve_bh_profile(0.5, -1.0, 1e-9).is_err());
    }

    #[test]
    fn bh_profile_asymptotically_hyperbolic() {
        // f / cosh(t) approaches a constant.
        let prof = solve_bh_profile(0.5, 8.0, 1e-9).unwrap();
        let r1 = prof.value(6.0) / 6.0f64.cosh();
        let r2 = prof.value(7.5) / 7.5f64.cosh();
        assert_relative_eq!(r1, r2, max_relative = 1e-3);
    }

    #[test]
    fn bh_scalar_curvature_is_minus_six() {
        let prof = solve_bh_profile(0.5, 5.0, 1e-10).unwrap();
        for &t in &[0.05, 0.5, 1.5, 3.0, 4.8] {
            let s = profile_scalar_curvature(&prof, t).unwrap();
            assert_abs_diff_eq!(s, -6.0, epsilon = 1e-8);
        }
        // And through the chart operators on the assembled metric.
        let metric = prof.metric();
        let scheme = DiffScheme::default();
        for &t in &[0.5, 1.5, 3.0] {
            let p = ChartPoint::new(t, PI / 2.0, 0.0);
            let (s, _) = crate::chart::scalar_and_traceless(&metric, &p, &scheme).unwrap();
            assert_abs_diff_eq!(s, -6.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn cylinder_scalar_curvature() {
        let prof = round_cylinder(2.0, 1.0);
        let s = profile_scalar_curvature(&prof, 0.3).unwrap();
        assert_relative_eq!(s, 2.0 / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn sinh_profile_is_hyperbolic() {
        let prof = sinh_profile(0.5, 3.0);
        for &t in &[0.7, 1.5, 2.5] {
            assert_abs_diff_eq!(
                profile_scalar_curvature(&prof, t).unwrap(),
                -6.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        let prof = sinh_profile(0.5, 3.0);
        assert!(matches!(
            profile_scalar_curvature(&prof, 4.0),
            Err(ProfileError::OutOfRange(..))
        ));
    }

    #[test]
    fn kernel_residual_bh() {
        let prof = solve_bh_profile(0.5, 5.0, 1e-10).unwrap();
        let res = kernel_residual(&prof, 24, &DiffScheme::default()).unwrap();
        assert!(res < 1e-4, "residual {res}");
    }

    #[test]
    fn kernel_residual_round_cylinder_trivial() {
        let prof = round_cylinder(1.0, 1.0);
        let res = kernel_residual(&prof, 16, &DiffScheme::default()).unwrap();
        assert!(res < 1e-12);
    }

    #[test]
    fn kernel_residual_rejects_varying_curvature() {
        let prof = perturbed_cylinder(0.1, 1.0);
        assert!(matches!(
            kernel_residual(&prof, 16, &DiffScheme::default()),
            Err(ProfileError::NonConstantScalarCurvature(_))
        ));
    }

    #[test]
    fn warped4_einstein_check() {
        // The pair (g, f') of the a = 0.5 family is Einstein upstairs:
        // horizontal Ricci -3 g(H,H), vertical -3 per unit circle direction.
        let prof = solve_bh_profile(0.5, 5.0, 1e-10).unwrap();
        let metric = prof.metric();
        let h = prof.fprime_field();
        let pair = StaticPair {
            metric,
            potential: h,
            ray: Box::new(|t| ChartPoint::new(t, PI / 2.0, 0.0)),
        };
        let scheme = DiffScheme::default();
        for &t in &[0.8, 1.6, 3.2] {
            let p = ChartPoint::new(t, PI / 2.0, 0.0);
            let dir = Vector3::new(1.0, 0.2, 0.1);
            let g = pair.metric.eval(&p).unwrap();
            let norm_sq = (dir.transpose() * g * dir)[(0, 0)];
            let (hor, vert) = warped4_ricci(&pair, &p, &dir, &scheme).unwrap();
            assert_relative_eq!(hor, -3.0 * norm_sq, max_relative = 1e-4);
            assert_relative_eq!(vert, -3.0, max_relative = 1e-4);
        }
    }

    #[test]
    fn yamabe_fixed_point_on_round_cylinder() {
        let prof = round_cylinder(1.0, 1.0);
        let sol = yamabe_reduce(&prof, TargetSign::Positive, 64).unwrap();
        for &p in &sol.psi {
            assert_relative_eq!(p, 1.0, max_relative = 1e-9);
        }
        assert_relative_eq!(sol.s_bar, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn yamabe_perturbed_cylinder_resubstitution() {
        let prof = perturbed_cylinder(0.1, 1.0);
        let sol = yamabe_reduce(&prof, TargetSign::Positive, 128).unwrap();
        // Independent check: rebuild the conformal metric as a warped profile
        // and evaluate its closed-form curvature.
        let conf = conformal_profile(&prof, &sol.psi).unwrap();
        let (mean, dev) = scalar_curvature_stats(&conf, 256);
        assert_relative_eq!(mean, sol.s_bar, max_relative = 1e-7);
        assert!(dev < 1e-6, "dev {dev}");
    }

    #[test]
    fn yamabe_reflection_equivariance() {
        let l = 1.0;
        let n = 64;
        let prof = asymmetric_cylinder(0.1, 0.05, l);
        let refl = reflected(&prof).unwrap();
        let a = yamabe_reduce(&prof, TargetSign::Positive, n).unwrap();
        let b = yamabe_reduce(&refl, TargetSign::Positive, n).unwrap();
        for j in 0..n {
            let jr = (n - j) % n;
            assert_relative_eq!(a.psi[j], b.psi[jr], max_relative = 1e-8);
        }
        assert_relative_eq!(a.s_bar, b.s_bar, max_relative = 1e-10);
    }

    #[test]
    fn yamabe_two_seeds_agree() {
        // Every warped profile over the circle is conformal to a round
        // product (substitute du = dt/f), so these classes are all positive;
        // below the bifurcation length the constant-curvature representative
        // in the reduced class is still unique, and independent Newton runs
        // must land on it.
        let prof = perturbed_cylinder(0.7, 1.0);
        let n = 128;
        let sol1 = yamabe_reduce(&prof, TargetSign::Positive, n).unwrap();
        let seed: Vec<f64> = (0..n)
            .map(|i| 0.6 + 0.3 * (2.0 * PI * i as f64 / n as f64).sin().powi(2))
            .collect();
        let sol2 = yamabe_reduce_from(&prof, TargetSign::Positive, n, &seed).unwrap();
        assert_relative_eq!(sol1.s_bar, sol2.s_bar, max_relative = 1e-10);
        for (x, y) in sol1.psi.iter().zip(sol2.psi.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
    }

    #[test]
    fn yamabe_sign_gate() {
        let prof = round_cylinder(1.0, 1.0);
        assert!(matches!(
            yamabe_reduce(&prof, TargetSign::Negative, 64),
            Err(ProfileError::InconsistentSign { .. })
        ));
    }

    #[test]
    fn h_profile_rises_quickly_for_small_a() {
        for &a in &[0.1, 0.05] {
            let prof = solve_bh_profile(a, 2.0, 1e-9).unwrap();
            assert_abs_diff_eq!(prof.deriv(0.0, 1), 0.0, epsilon = 1e-14);
            let probe = a.powf(0.25);
            assert!(
                prof.deriv(probe, 1) > 0.5,
                "a = {a}: f'({probe}) = {}",
                prof.deriv(probe, 1)
            );
        }
    }

    #[test]
    fn csv_export_shape() {
        let prof = round_cylinder(1.0, 1.0);
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,f"));
        assert_eq!(text.lines().count(), 1 + prof.grid.len());
    }
}
