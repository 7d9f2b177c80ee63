//! Closed-form model metrics and static-vacuum verification machinery.
//!
//! The central object is a [`StaticPair`]: a 3-metric together with a
//! potential function. The pair solves the static vacuum equations when
//! `h r = D^2 h` and `Delta h = 0`; [`static_residual`] measures both
//! defects over a sample grid. [`conformal_companion`] builds `u^2 g` and
//! checks its Ricci and harmonicity identities, [`warped4_ricci`] and
//! [`scalar4`] evaluate the curvature of the associated warped 4-manifold,
//! and [`asymptotic_mass_fit`] recovers the mass from the potential's decay.

use crate::chart::{
    hessian, laplacian, metric_jet, ricci, scalar_and_traceless, tensor_norm, ChartDomain,
    ChartPoint, ChartError, DiffScheme, MetricField, ScalarField, Sym3,
};
use crate::numerics::quad;
use nalgebra::{Matrix2, Vector2, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("potential vanishes or is not positive on the sample grid")]
    PotentialNotPositive,
    #[error("potential vanishes at the evaluation point")]
    PotentialZeroAtPoint,
    #[error("asymptotic fit needs at least 3 radii, got {0}")]
    InsufficientSamples(usize),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// A metric together with its static potential and a radial probe used by
/// asymptotic fits: `ray(t)` is a chart point at distance scale `t`.
pub struct StaticPair<'a> {
    pub metric: MetricField<'a>,
    pub potential: ScalarField<'a>,
    pub ray: Box<dyn Fn(f64) -> ChartPoint + Send + Sync + 'a>,
}

/// Aggregate residuals of the static vacuum equations over a grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualReport {
    pub sup_tensor_residual: f64,
    pub sup_laplacian_residual: f64,
    pub rms_tensor_residual: f64,
    pub rms_laplacian_residual: f64,
    pub sample_count: usize,
}

/// Relative margin kept outside the horizon when building Schwarzschild
/// charts; the equations degenerate on the horizon itself.
pub const HORIZON_MARGIN: f64 = 1e-3;

fn schwarzschild_components(m: f64, p: &ChartPoint) -> Sym3 {
    let t = p.coords[0];
    let theta = p.coords[1];
    let a = 1.0 - 2.0 * m / t;
    Sym3::from_diagonal(&Vector3::new(1.0 / a, t * t, t * t * theta.sin().powi(2)))
}

fn schwarzschild_d1(m: f64, p: &ChartPoint) -> [Sym3; 3] {
    let t = p.coords[0];
    let th = p.coords[1];
    let a = 1.0 - 2.0 * m / t;
    let dadt = 2.0 * m / (t * t);
    let (st, ct) = (th.sin(), th.cos());
    let mut dt = Sym3::zeros();
    dt[(0, 0)] = -dadt / (a * a);
    dt[(1, 1)] = 2.0 * t;
    dt[(2, 2)] = 2.0 * t * st * st;
    let mut dth = Sym3::zeros();
    dth[(2, 2)] = 2.0 * t * t * st * ct;
    [dt, dth, Sym3::zeros()]
}

fn schwarzschild_d2(m: f64, p: &ChartPoint) -> [[Sym3; 3]; 3] {
    let t = p.coords[0];
    let th = p.coords[1];
    let a = 1.0 - 2.0 * m / t;
    let dadt = 2.0 * m / (t * t);
    let d2adt = -4.0 * m / (t * t * t);
    let (st, ct) = (th.sin(), th.cos());
    let mut out = [[Sym3::zeros(); 3]; 3];
    // tt
    let mut dtt = Sym3::zeros();
    dtt[(0, 0)] = (2.0 * dadt * dadt - a * d2adt) / (a * a * a);
    dtt[(1, 1)] = 2.0;
    dtt[(2, 2)] = 2.0 * st * st;
    out[0][0] = dtt;
    // t theta
    let mut dtth = Sym3::zeros();
    dtth[(2, 2)] = 4.0 * t * st * ct;
    out[0][1] = dtth;
    out[1][0] = dtth;
    // theta theta
    let mut dthth = Sym3::zeros();
    dthth[(2, 2)] = 2.0 * t * t * (ct * ct - st * st);
    out[1][1] = dthth;
    out
}

/// The Schwarzschild solution of mass `m` in areal coordinates, on
/// `t in [2m(1 + margin), t_max]` with the polar axis excluded.
pub fn schwarzschild(m: f64) -> Result<StaticPair<'static>, SolutionError> {
    schwarzschild_on(m, 2.0 * m * (1.0 + HORIZON_MARGIN), 400.0 * m)
}

pub fn schwarzschild_on(m: f64, t_lo: f64, t_hi: f64) -> Result<StaticPair<'static>, SolutionError> {
    if m <= 0.0 {
        return Err(SolutionError::NonPositiveMass(m));
    }
    let domain = ChartDomain::new([t_lo, 0.2, -PI], [t_hi, PI - 0.2, PI]).with_period(2, 2.0 * PI);
    let metric = MetricField::new(domain, move |p| schwarzschild_components(m, p))
        .with_first_derivatives(move |p| schwarzschild_d1(m, p))
        .with_second_derivatives(move |p| schwarzschild_d2(m, p));
    let potential = ScalarField::new(move |p: &ChartPoint| (1.0 - 2.0 * m / p.coords[0]).sqrt())
        .with_gradient(move |p: &ChartPoint| {
            let t = p.coords[0];
            let h = (1.0 - 2.0 * m / t).sqrt();
            [m / (t * t * h), 0.0, 0.0]
        })
        .with_hessian(move |p: &ChartPoint| {
            let t = p.coords[0];
            let h = (1.0 - 2.0 * m / t).sqrt();
            let dh = m / (t * t * h);
            let d2h = -2.0 * m / (t * t * t * h) - dh * dh / h;
            let mut out = Sym3::zeros();
            out[(0, 0)] = d2h;
            out
        });
    Ok(StaticPair {
        metric,
        potential,
        ray: Box::new(|t| ChartPoint::new(t, PI / 2.0, 0.0)),
    })
}

/// Flat space on a box with an arbitrary potential.
pub fn flat_pair<'a>(
    potential: ScalarField<'a>,
) -> StaticPair<'a> {
    let metric = MetricField::new(ChartDomain::new([-50.0; 3], [50.0; 3]), |_p| Sym3::identity())
        .with_first_derivatives(|_p| [Sym3::zeros(); 3])
        .with_second_derivatives(|_p| [[Sym3::zeros(); 3]; 3]);
    StaticPair {
        metric,
        potential,
        ray: Box::new(|t| ChartPoint::new(t, 0.0, 0.0)),
    }
}

/// Flat solution with affine potential `h = 1 + a . x`.
pub fn flat_affine_pair(a: [f64; 3]) -> StaticPair<'static> {
    let potential = ScalarField::new(move |p: &ChartPoint| {
        1.0 + a[0] * p.coords[0] + a[1] * p.coords[1] + a[2] * p.coords[2]
    })
    .with_gradient(move |_p| a)
    .with_hessian(|_p| Sym3::zeros());
    flat_pair(potential)
}

/// Pointwise static-vacuum defect, measured in the metric norm.
pub fn static_residual_at(
    pair: &StaticPair,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<(f64, f64), SolutionError> {
    let jet = metric_jet(&pair.metric, p, scheme)?;
    let r = ricci(&pair.metric, p, scheme)?;
    let d2h = hessian(&pair.metric, &pair.potential, p, scheme)?;
    let lap = (jet.ginv * d2h).trace();
    let h = pair.potential.eval(p);
    let tensor = r * h - d2h;
    Ok((tensor_norm(&jet.ginv, &tensor), lap.abs()))
}

/// Residuals of `h r = D^2 h`, `Delta h = 0` over a sample grid.
pub fn static_residual(
    pair: &StaticPair,
    grid: &[ChartPoint],
    scheme: &DiffScheme,
) -> Result<ResidualReport, SolutionError> {
    let mut sup_t: f64 = 0.0;
    let mut sup_l: f64 = 0.0;
    let mut sq_t = 0.0;
    let mut sq_l = 0.0;
    for p in grid {
        let (t, l) = static_residual_at(pair, p, scheme)?;
        sup_t = sup_t.max(t);
        sup_l = sup_l.max(l);
        sq_t += t * t;
        sq_l += l * l;
    }
    let n = grid.len().max(1) as f64;
    Ok(ResidualReport {
        sup_tensor_residual: sup_t,
        sup_laplacian_residual: sup_l,
        rms_tensor_residual: (sq_t / n).sqrt(),
        rms_laplacian_residual: (sq_l / n).sqrt(),
        sample_count: grid.len(),
    })
}

/// Rectangular sample grid in the first two chart coordinates.
pub fn grid_2d(
    xr: (f64, f64),
    yr: (f64, f64),
    nx: usize,
    ny: usize,
    third: f64,
) -> Vec<ChartPoint> {
    let mut pts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let x = xr.0 + (xr.1 - xr.0) * (i as f64 + 0.5) / nx as f64;
            let y = yr.0 + (yr.1 - yr.0) * (j as f64 + 0.5) / ny as f64;
            pts.push(ChartPoint::new(x, y, third));
        }
    }
    pts
}

/// Checks for the conformally transformed metric `u^2 g`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompanionReport {
    /// sup over the grid of `| Ric(u^2 g) - 2 dlog(u) (x) dlog(u) |`.
    pub sup_ricci_residual: f64,
    /// sup over the grid of the `u^2 g`-Laplacian of `log u`.
    pub sup_harmonic_residual: f64,
}

/// Conformal companion `u^2 g` of a static pair, with its identity checks
/// evaluated over the grid.
pub fn conformal_companion<'a>(
    pair: &'a StaticPair<'a>,
    grid: &[ChartPoint],
    scheme: &DiffScheme,
) -> Result<(MetricField<'a>, CompanionReport), SolutionError> {
    for p in grid {
        if pair.potential.eval(p) <= 0.0 {
            return Err(SolutionError::PotentialNotPositive);
        }
    }
    let metric = conformal_metric(pair);
    let logu = ScalarField::new(|p: &ChartPoint| pair.potential.eval(p).ln());

    let mut sup_ricci: f64 = 0.0;
    let mut sup_harm: f64 = 0.0;
    for p in grid {
        let jet = metric_jet(&metric, p, scheme)?;
        let r = ricci(&metric, p, scheme)?;
        // dlog u (x) dlog u from the companion's own difference scheme.
        let d2 = hessian(&metric, &logu, p, scheme)?;
        let lap = (jet.ginv * d2).trace();
        let grad = gradient_of(&logu, p, scheme);
        let mut dld = Sym3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                dld[(i, j)] = grad[i] * grad[j];
            }
        }
        sup_ricci = sup_ricci.max(tensor_norm(&jet.ginv, &(r - dld * 2.0)));
        sup_harm = sup_harm.max(lap.abs());
    }
    Ok((
        metric,
        CompanionReport {
            sup_ricci_residual: sup_ricci,
            sup_harmonic_residual: sup_harm,
        },
    ))
}

fn conformal_metric<'a>(pair: &'a StaticPair<'a>) -> MetricField<'a> {
    let domain = pair.metric.domain.clone();
    MetricField::new(domain, |p| {
        let u = pair.potential.eval(p);
        pair.metric
            .eval(p)
            .map(|g| g * (u * u))
            .unwrap_or_else(|_| Sym3::identity())
    })
}

fn gradient_of(phi: &ScalarField, p: &ChartPoint, scheme: &DiffScheme) -> [f64; 3] {
    let mut grad = [0.0; 3];
    for k in 0..3 {
        let h = scheme.step * p.coords[k].abs().max(1.0);
        let mut cp = *p;
        cp.coords[k] += h;
        let mut cm = *p;
        cm.coords[k] -= h;
        grad[k] = (phi.eval(&cp) - phi.eval(&cm)) / (2.0 * h);
    }
    grad
}

/// Ricci curvature of the warped 4-manifold `N x_h S^1` in the horizontal
/// direction `H` and the unit vertical direction:
/// `(r(H,H) - D^2h(H,H)/h, -(Delta h / h))`.
pub fn warped4_ricci(
    pair: &StaticPair,
    p: &ChartPoint,
    h_dir: &Vector3<f64>,
    scheme: &DiffScheme,
) -> Result<(f64, f64), SolutionError> {
    let h = pair.potential.eval(p);
    if h.abs() < 1e-12 {
        return Err(SolutionError::PotentialZeroAtPoint);
    }
    let r = ricci(&pair.metric, p, scheme)?;
    let d2h = hessian(&pair.metric, &pair.potential, p, scheme)?;
    let jet = metric_jet(&pair.metric, p, scheme)?;
    let lap = (jet.ginv * d2h).trace();
    let quad_r = (h_dir.transpose() * r * h_dir)[(0, 0)];
    let quad_d2 = (h_dir.transpose() * d2h * h_dir)[(0, 0)];
    Ok((quad_r - quad_d2 / h, -lap / h))
}

/// Scalar curvature of the warped 4-manifold: `s - 2 Delta u / u`.
pub fn scalar4(pair: &StaticPair, p: &ChartPoint, scheme: &DiffScheme) -> Result<f64, SolutionError> {
    let u = pair.potential.eval(p);
    if u.abs() < 1e-12 {
        return Err(SolutionError::PotentialZeroAtPoint);
    }
    let (s, _) = scalar_and_traceless(&pair.metric, p, scheme)?;
    let lap = laplacian(&pair.metric, &pair.potential, p, scheme)?;
    Ok(s - 2.0 * lap / u)
}

/// Least-squares fit of the potential against `1 - m/t + b/t^2` along the
/// pair's radial probe. Returns the fitted mass and the rms fit residual.
pub fn asymptotic_mass_fit(pair: &StaticPair, radii: &[f64]) -> Result<(f64, f64), SolutionError> {
    if radii.len() < 3 {
        return Err(SolutionError::InsufficientSamples(radii.len()));
    }
    // Normal equations for (m, b) in 1 - h = m/t - b/t^2.
    let mut ata = Matrix2::<f64>::zeros();
    let mut atb = Vector2::<f64>::zeros();
    for &t in radii {
        let h = pair.potential.eval(&(pair.ray)(t));
        let row = Vector2::new(1.0 / t, -1.0 / (t * t));
        ata += row * row.transpose();
        atb += row * (1.0 - h);
    }
    let sol = ata
        .try_inverse()
        .ok_or(SolutionError::InsufficientSamples(radii.len()))?
        * atb;
    let m = sol[0];
    let b = sol[1];
    let mut sq = 0.0;
    for &t in radii {
        let h = pair.potential.eval(&(pair.ray)(t));
        let fit = 1.0 - m / t + b / (t * t);
        sq += (h - fit) * (h - fit);
    }
    Ok((m, (sq / radii.len() as f64).sqrt()))
}

/// Proper radial distance in the Schwarzschild solution, by quadrature of
/// `(1 - 2m/t)^{-1/2}`.
pub fn schwarzschild_radial_distance(m: f64, t1: f64, t2: f64) -> f64 {
    quad::adaptive(|t| (1.0 - 2.0 * m / t).max(1e-300).powf(-0.5), t1, t2, 1e-12)
}

/// Area of the coordinate sphere `t = const` in the Schwarzschild chart,
/// computed from the metric components.
pub fn schwarzschild_sphere_area(m: f64, t: f64) -> f64 {
    // Induced metric on the sphere: t^2 dtheta^2 + t^2 sin^2 theta dphi^2.
    let f = |theta: f64| {
        let p = ChartPoint::new(t, theta, 0.0);
        let g = schwarzschild_components(m, &p);
        (g[(1, 1)] * g[(2, 2)]).sqrt()
    };
    2.0 * PI * quad::adaptive(f, 1e-9, PI - 1e-9, 1e-10)
}

/// |grad h| on the shell `t = 2m(1 + eps)`, sampled over latitudes. For the
/// Schwarzschild pair this tends to the constant surface gravity `1/(4m)` as
/// `eps -> 0`.
pub fn horizon_gradient_probe(
    pair: &StaticPair,
    shell_ts: &[f64],
    scheme: &DiffScheme,
) -> Result<Vec<f64>, SolutionError> {
    let mut out = Vec::with_capacity(shell_ts.len());
    for &t in shell_ts {
        let mut vals = Vec::new();
        for k in 0..5 {
            let theta = 0.5 + (PI - 1.0) * k as f64 / 4.0;
            let p = ChartPoint::new(t, theta, 0.0);
            let jet = metric_jet(&pair.metric, &p, scheme)?;
            let grad = gradient_of(&pair.potential, &p, scheme);
            let gv = Vector3::new(grad[0], grad[1], grad[2]);
            let norm_sq = (gv.transpose() * jet.ginv * gv)[(0, 0)];
            vals.push(norm_sq.max(0.0).sqrt());
        }
        // Spread across latitudes should be tiny; report the mean.
        out.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    Ok(out)
}
