//! Curvature tensors and the scalar-curvature operators at chart points.
//!
//! A [`MetricField`] assigns a symmetric positive-definite 3x3 component
//! matrix to each point of a box-like chart. All geometry here is pointwise:
//! Christoffel symbols, Ricci curvature, scalar/traceless split, covariant
//! Hessian, divergence, the linearization `L` of scalar curvature, its formal
//! adjoint `L*`, and the fourth-order composition `LL*`.
//!
//! Partial derivatives of the component functions come from central finite
//! differences with a relative step, unless the field carries analytic
//! derivative maps, which always take precedence. Every metric evaluation is
//! Cholesky-checked; degenerate metrics are reported as errors rather than
//! silent NaNs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Symmetric 3x3 tensor components in chart coordinates.
pub type Sym3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub coords: [f64; 3],
}

impl ChartPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        ChartPoint { coords: [x, y, z] }
    }
}

impl From<[f64; 3]> for ChartPoint {
    fn from(coords: [f64; 3]) -> Self {
        ChartPoint { coords }
    }
}

/// Product-of-intervals chart description. An axis may be periodic, in which
/// case no boundary margin is required along it.
#[derive(Debug, Clone)]
pub struct ChartDomain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub period: [Option<f64>; 3],
}

impl ChartDomain {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        ChartDomain {
            lo,
            hi,
            period: [None, None, None],
        }
    }

    pub fn with_period(mut self, axis: usize, period: f64) -> Self {
        self.period[axis] = Some(period);
        self
    }

    pub fn contains(&self, p: &ChartPoint, margin: &[f64; 3]) -> bool {
        for k in 0..3 {
            if self.period[k].is_some() {
                continue;
            }
            let x = p.coords[k];
            if x - margin[k] < self.lo[k] || x + margin[k] > self.hi[k] {
                return false;
            }
        }
        true
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.period[axis].unwrap_or(self.hi[axis] - self.lo[axis])
    }
}

/// Central-difference configuration. `step` is relative to the local
/// coordinate scale; order 2 or 4; optional Richardson extrapolation.
#[derive(Debug, Clone, Copy)]
pub struct DiffScheme {
    pub step: f64,
    pub order: u8,
    pub richardson: bool,
}

impl Default for DiffScheme {
    fn default() -> Self {
        DiffScheme {
            step: 1e-4,
            order: 2,
            richardson: false,
        }
    }
}

impl DiffScheme {
    pub fn with_step(step: f64) -> Self {
        DiffScheme {
            step,
            ..Default::default()
        }
    }

    /// Coarser default for fourth-order compositions, to keep the nested
    /// difference noise under control.
    pub fn fourth_order_default() -> Self {
        DiffScheme {
            step: 1e-3,
            ..Default::default()
        }
    }

    fn local_steps(&self, p: &ChartPoint) -> [f64; 3] {
        let mut h = [0.0; 3];
        for k in 0..3 {
            h[k] = self.step * p.coords[k].abs().max(1.0);
        }
        h
    }
}

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("point {point:?} is too close to the chart boundary (needs margin {needed} steps)")]
    PointTooCloseToBoundary { point: [f64; 3], needed: f64 },
    #[error("metric is not positive definite at {point:?}")]
    MetricNotPositiveDefinite { point: [f64; 3] },
    #[error("invalid difference scheme: {0}")]
    BadScheme(String),
}

type EvalM<'a> = Box<dyn Fn(&ChartPoint) -> Sym3 + Send + Sync + 'a>;
type EvalDM<'a> = Box<dyn Fn(&ChartPoint) -> [Sym3; 3] + Send + Sync + 'a>;
type EvalD2M<'a> = Box<dyn Fn(&ChartPoint) -> [[Sym3; 3]; 3] + Send + Sync + 'a>;
type EvalS<'a> = Box<dyn Fn(&ChartPoint) -> f64 + Send + Sync + 'a>;
type EvalGrad<'a> = Box<dyn Fn(&ChartPoint) -> [f64; 3] + Send + Sync + 'a>;
type EvalHess<'a> = Box<dyn Fn(&ChartPoint) -> Sym3 + Send + Sync + 'a>;

/// Smooth assignment of metric components to chart points.
pub struct MetricField<'a> {
    pub domain: ChartDomain,
    eval: EvalM<'a>,
    d1: Option<EvalDM<'a>>,
    d2: Option<EvalD2M<'a>>,
}

impl<'a> MetricField<'a> {
    pub fn new(domain: ChartDomain, eval: impl Fn(&ChartPoint) -> Sym3 + Send + Sync + 'a) -> Self {
        MetricField {
            domain,
            eval: Box::new(eval),
            d1: None,
            d2: None,
        }
    }

    pub fn with_first_derivatives(
        mut self,
        d1: impl Fn(&ChartPoint) -> [Sym3; 3] + Send + Sync + 'a,
    ) -> Self {
        self.d1 = Some(Box::new(d1));
        self
    }

    pub fn with_second_derivatives(
        mut self,
        d2: impl Fn(&ChartPoint) -> [[Sym3; 3]; 3] + Send + Sync + 'a,
    ) -> Self {
        self.d2 = Some(Box::new(d2));
        self
    }

    /// Drop analytic derivative maps (forces the finite-difference path).
    pub fn without_analytic_derivatives(self) -> Self {
        MetricField {
            domain: self.domain,
            eval: self.eval,
            d1: None,
            d2: None,
        }
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.d1.is_some() && self.d2.is_some()
    }

    pub fn eval(&self, p: &ChartPoint) -> Result<Sym3, ChartError> {
        let g = (self.eval)(p);
        if g.cholesky().is_none() {
            return Err(ChartError::MetricNotPositiveDefinite { point: p.coords });
        }
        Ok(g)
    }

    fn eval_raw(&self, p: &ChartPoint) -> Sym3 {
        (self.eval)(p)
    }
}

/// Scalar function on the chart, optionally with analytic gradient and
/// coordinate Hessian (plain second partials; covariant corrections are
/// applied by the operators).
pub struct ScalarField<'a> {
    eval: EvalS<'a>,
    grad: Option<EvalGrad<'a>>,
    hess: Option<EvalHess<'a>>,
}

impl<'a> ScalarField<'a> {
    pub fn new(eval: impl Fn(&ChartPoint) -> f64 + Send + Sync + 'a) -> Self {
        ScalarField {
            eval: Box::new(eval),
            grad: None,
            hess: None,
        }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&ChartPoint) -> [f64; 3] + Send + Sync + 'a) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn with_hessian(mut self, hess: impl Fn(&ChartPoint) -> Sym3 + Send + Sync + 'a) -> Self {
        self.hess = Some(Box::new(hess));
        self
    }

    pub fn without_analytic_derivatives(self) -> Self {
        ScalarField {
            eval: self.eval,
            grad: None,
            hess: None,
        }
    }

    pub fn eval(&self, p: &ChartPoint) -> f64 {
        (self.eval)(p)
    }
}

/// Symmetric 2-tensor field on the chart.
pub struct SymTensorField<'a> {
    eval: EvalM<'a>,
    d1: Option<EvalDM<'a>>,
    d2: Option<EvalD2M<'a>>,
}

impl<'a> SymTensorField<'a> {
    pub fn new(eval: impl Fn(&ChartPoint) -> Sym3 + Send + Sync + 'a) -> Self {
        SymTensorField {
            eval: Box::new(eval),
            d1: None,
            d2: None,
        }
    }

    pub fn with_first_derivatives(
        mut self,
        d1: impl Fn(&ChartPoint) -> [Sym3; 3] + Send + Sync + 'a,
    ) -> Self {
        self.d1 = Some(Box::new(d1));
        self
    }

    pub fn with_second_derivatives(
        mut self,
        d2: impl Fn(&ChartPoint) -> [[Sym3; 3]; 3] + Send + Sync + 'a,
    ) -> Self {
        self.d2 = Some(Box::new(d2));
        self
    }

    pub fn eval(&self, p: &ChartPoint) -> Sym3 {
        (self.eval)(p)
    }
}

fn shifted(p: &ChartPoint, axis: usize, delta: f64) -> ChartPoint {
    let mut c = p.coords;
    c[axis] += delta;
    ChartPoint { coords: c }
}

/// First derivative of a matrix-valued map along one axis.
fn fd1_matrix<F: Fn(&ChartPoint) -> Sym3>(f: &F, p: &ChartPoint, axis: usize, h: f64, order: u8) -> Sym3 {
    match order {
        2 => (f(&shifted(p, axis, h)) - f(&shifted(p, axis, -h))) / (2.0 * h),
        4 => {
            (-f(&shifted(p, axis, 2.0 * h)) + f(&shifted(p, axis, h)) * 8.0
                - f(&shifted(p, axis, -h)) * 8.0
                + f(&shifted(p, axis, -2.0 * h)))
                / (12.0 * h)
        }
        _ => unreachable!(),
    }
}

fn fd2_matrix<F: Fn(&ChartPoint) -> Sym3>(
    f: &F,
    f0: &Sym3,
    p: &ChartPoint,
    axis: usize,
    h: f64,
    order: u8,
) -> Sym3 {
    match order {
        2 => (f(&shifted(p, axis, h)) - f0 * 2.0 + f(&shifted(p, axis, -h))) / (h * h),
        4 => {
            (-f(&shifted(p, axis, 2.0 * h)) + f(&shifted(p, axis, h)) * 16.0 - f0 * 30.0
                + f(&shifted(p, axis, -h)) * 16.0
                - f(&shifted(p, axis, -2.0 * h)))
                / (12.0 * h * h)
        }
        _ => unreachable!(),
    }
}

fn fd_mixed_matrix<F: Fn(&ChartPoint) -> Sym3>(
    f: &F,
    p: &ChartPoint,
    a: usize,
    b: usize,
    ha: f64,
    hb: f64,
    order: u8,
) -> Sym3 {
    let g = |pa: &ChartPoint| fd1_matrix(f, pa, b, hb, order);
    match order {
        2 => (g(&shifted(p, a, ha)) - g(&shifted(p, a, -ha))) / (2.0 * ha),
        4 => {
            (-g(&shifted(p, a, 2.0 * ha)) + g(&shifted(p, a, ha)) * 8.0
                - g(&shifted(p, a, -ha)) * 8.0
                + g(&shifted(p, a, -2.0 * ha)))
                / (12.0 * ha)
        }
        _ => unreachable!(),
    }
}

/// First and second partials of a matrix map, by scheme or analytic override.
fn matrix_jet<F: Fn(&ChartPoint) -> Sym3>(
    f: &F,
    d1: Option<&EvalDM<'_>>,
    d2: Option<&EvalD2M<'_>>,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> (Sym3, [Sym3; 3], [[Sym3; 3]; 3]) {
    let f0 = f(p);
    let dg = match d1 {
        Some(map) => map(p),
        None => {
            let h = scheme.local_steps(p);
            let one = |hs: [f64; 3]| {
                [
                    fd1_matrix(f, p, 0, hs[0], scheme.order),
                    fd1_matrix(f, p, 1, hs[1], scheme.order),
                    fd1_matrix(f, p, 2, hs[2], scheme.order),
                ]
            };
            if scheme.richardson {
                let coarse = one(h);
                let h2 = [h[0] / 2.0, h[1] / 2.0, h[2] / 2.0];
                let fine = one(h2);
                [
                    (fine[0] * 4.0 - coarse[0]) / 3.0,
                    (fine[1] * 4.0 - coarse[1]) / 3.0,
                    (fine[2] * 4.0 - coarse[2]) / 3.0,
                ]
            } else {
                one(h)
            }
        }
    };
    let d2g = match d2 {
        Some(map) => map(p),
        None => {
            let compute = |hs: [f64; 3]| {
                let mut out = [[Sym3::zeros(); 3]; 3];
                for k in 0..3 {
                    out[k][k] = fd2_matrix(f, &f0, p, k, hs[k], scheme.order);
                }
                for k in 0..3 {
                    for l in (k + 1)..3 {
                        let m = fd_mixed_matrix(f, p, k, l, hs[k], hs[l], scheme.order);
                        out[k][l] = m;
                        out[l][k] = m;
                    }
                }
                out
            };
            let h = scheme.local_steps(p);
            if scheme.richardson {
                let coarse = compute(h);
                let fine = compute([h[0] / 2.0, h[1] / 2.0, h[2] / 2.0]);
                let mut out = [[Sym3::zeros(); 3]; 3];
                for k in 0..3 {
                    for l in 0..3 {
                        out[k][l] = (fine[k][l] * 4.0 - coarse[k][l]) / 3.0;
                    }
                }
                out
            } else {
                compute(h)
            }
        }
    };
    (f0, dg, d2g)
}

/// Metric value, inverse, and partials at a point.
pub struct MetricJet {
    pub g: Sym3,
    pub ginv: Sym3,
    pub dg: [Sym3; 3],
    pub d2g: [[Sym3; 3]; 3],
}

fn check_scheme(scheme: &DiffScheme) -> Result<(), ChartError> {
    if !(scheme.step > 0.0) {
        return Err(ChartError::BadScheme("step must be positive".into()));
    }
    if scheme.order != 2 && scheme.order != 4 {
        return Err(ChartError::BadScheme("order must be 2 or 4".into()));
    }
    Ok(())
}

fn require_margin(
    domain: &ChartDomain,
    p: &ChartPoint,
    scheme: &DiffScheme,
    steps: f64,
) -> Result<(), ChartError> {
    let h = scheme.local_steps(p);
    let stencil = if scheme.order == 4 { 2.0 } else { 1.0 };
    let m = [
        steps * stencil * h[0],
        steps * stencil * h[1],
        steps * stencil * h[2],
    ];
    if !domain.contains(p, &m) {
        return Err(ChartError::PointTooCloseToBoundary {
            point: p.coords,
            needed: steps,
        });
    }
    Ok(())
}

/// Metric jet with positive-definiteness check at the center point.
pub fn metric_jet(g: &MetricField, p: &ChartPoint, scheme: &DiffScheme) -> Result<MetricJet, ChartError> {
    check_scheme(scheme)?;
    let gm = g.eval(p)?;
    let ginv = gm
        .try_inverse()
        .ok_or(ChartError::MetricNotPositiveDefinite { point: p.coords })?;
    let (_, dg, d2g) = matrix_jet(&|q| g.eval_raw(q), g.d1.as_ref(), g.d2.as_ref(), p, scheme);
    Ok(MetricJet {
        g: gm,
        ginv,
        dg,
        d2g,
    })
}

/// Christoffel symbols of the second kind: gamma[k][i][j] = Gamma^k_ij.
pub fn christoffel(g: &MetricField, p: &ChartPoint, scheme: &DiffScheme) -> Result<[[[f64; 3]; 3]; 3], ChartError> {
    require_margin(&g.domain, p, scheme, 2.0)?;
    let jet = metric_jet(g, p, scheme)?;
    Ok(christoffel_from_jet(&jet))
}

fn christoffel_from_jet(jet: &MetricJet) -> [[[f64; 3]; 3]; 3] {
    let mut gamma = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in i..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += jet.ginv[(k, l)]
                        * (jet.dg[i][(j, l)] + jet.dg[j][(i, l)] - jet.dg[l][(i, j)]);
                }
                gamma[k][i][j] = 0.5 * s;
                gamma[k][j][i] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Ricci tensor components r_ij.
pub fn ricci(g: &MetricField, p: &ChartPoint, scheme: &DiffScheme) -> Result<Sym3, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    Ok(ricci_from_jet(&jet))
}

fn ricci_from_jet(jet: &MetricJet) -> Sym3 {
    let gamma = christoffel_from_jet(jet);
    // d(g^{-1}) = -g^{-1} dg g^{-1}
    let mut dginv = [Sym3::zeros(); 3];
    for m in 0..3 {
        dginv[m] = -jet.ginv * jet.dg[m] * jet.ginv;
    }
    // dGamma[m][k][i][j] = partial_m Gamma^k_ij
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in i..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        let first = dginv[m][(k, l)]
                            * (jet.dg[i][(j, l)] + jet.dg[j][(i, l)] - jet.dg[l][(i, j)]);
                        let second = jet.ginv[(k, l)]
                            * (jet.d2g[m][i][(j, l)] + jet.d2g[m][j][(i, l)]
                                - jet.d2g[m][l][(i, j)]);
                        s += first + second;
                    }
                    dgamma[m][k][i][j] = 0.5 * s;
                    dgamma[m][k][j][i] = 0.5 * s;
                }
            }
        }
    }
    let mut r = Sym3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut v = 0.0;
            for k in 0..3 {
                v += dgamma[k][k][i][j] - dgamma[i][k][j][k];
                for l in 0..3 {
                    v += gamma[k][k][l] * gamma[l][i][j] - gamma[k][i][l] * gamma[l][k][j];
                }
            }
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// g-inner product of symmetric 2-tensors.
pub fn tensor_inner(ginv: &Sym3, a: &Sym3, b: &Sym3) -> f64 {
    (ginv * a * ginv * b).trace()
}

/// g-norm of a symmetric 2-tensor.
pub fn tensor_norm(ginv: &Sym3, a: &Sym3) -> f64 {
    tensor_inner(ginv, a, a).max(0.0).sqrt()
}

/// Scalar curvature and traceless Ricci z = r - (s/3) g.
pub fn scalar_and_traceless(
    g: &MetricField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<(f64, Sym3), ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    let r = ricci_from_jet(&jet);
    let s = (jet.ginv * r).trace();
    let z = r - jet.g * (s / 3.0);
    Ok((s, z))
}

fn scalar_jet(
    phi: &ScalarField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> (f64, [f64; 3], Sym3) {
    let f = |q: &ChartPoint| phi.eval(q);
    let v0 = f(p);
    let grad = match &phi.grad {
        Some(gm) => gm(p),
        None => {
            let compute = |h: [f64; 3]| {
                let mut out = [0.0; 3];
                for k in 0..3 {
                    out[k] = match scheme.order {
                        2 => (f(&shifted(p, k, h[k])) - f(&shifted(p, k, -h[k]))) / (2.0 * h[k]),
                        _ => {
                            (-f(&shifted(p, k, 2.0 * h[k])) + 8.0 * f(&shifted(p, k, h[k]))
                                - 8.0 * f(&shifted(p, k, -h[k]))
                                + f(&shifted(p, k, -2.0 * h[k])))
                                / (12.0 * h[k])
                        }
                    };
                }
                out
            };
            let h = scheme.local_steps(p);
            if scheme.richardson {
                let c = compute(h);
                let fi = compute([h[0] / 2.0, h[1] / 2.0, h[2] / 2.0]);
                [
                    (4.0 * fi[0] - c[0]) / 3.0,
                    (4.0 * fi[1] - c[1]) / 3.0,
                    (4.0 * fi[2] - c[2]) / 3.0,
                ]
            } else {
                compute(h)
            }
        }
    };
    let hess = match &phi.hess {
        Some(hm) => hm(p),
        None => {
            let compute = |h: [f64; 3]| {
                let mut m = Sym3::zeros();
                for k in 0..3 {
                    let v = match scheme.order {
                        2 => {
                            (f(&shifted(p, k, h[k])) - 2.0 * v0 + f(&shifted(p, k, -h[k])))
                                / (h[k] * h[k])
                        }
                        _ => {
                            (-f(&shifted(p, k, 2.0 * h[k])) + 16.0 * f(&shifted(p, k, h[k]))
                                - 30.0 * v0
                                + 16.0 * f(&shifted(p, k, -h[k]))
                                - f(&shifted(p, k, -2.0 * h[k])))
                                / (12.0 * h[k] * h[k])
                        }
                    };
                    m[(k, k)] = v;
                }
                for a in 0..3 {
                    for b in (a + 1)..3 {
                        let d1b = |q: &ChartPoint| match scheme.order {
                            2 => (f(&shifted(q, b, h[b])) - f(&shifted(q, b, -h[b]))) / (2.0 * h[b]),
                            _ => {
                                (-f(&shifted(q, b, 2.0 * h[b])) + 8.0 * f(&shifted(q, b, h[b]))
                                    - 8.0 * f(&shifted(q, b, -h[b]))
                                    + f(&shifted(q, b, -2.0 * h[b])))
                                    / (12.0 * h[b])
                            }
                        };
                        let v = match scheme.order {
                            2 => (d1b(&shifted(p, a, h[a])) - d1b(&shifted(p, a, -h[a]))) / (2.0 * h[a]),
                            _ => {
                                (-d1b(&shifted(p, a, 2.0 * h[a])) + 8.0 * d1b(&shifted(p, a, h[a]))
                                    - 8.0 * d1b(&shifted(p, a, -h[a]))
                                    + d1b(&shifted(p, a, -2.0 * h[a])))
                                    / (12.0 * h[a])
                            }
                        };
                        m[(a, b)] = v;
                        m[(b, a)] = v;
                    }
                }
                m
            };
            let h = scheme.local_steps(p);
            if scheme.richardson {
                let c = compute(h);
                let fi = compute([h[0] / 2.0, h[1] / 2.0, h[2] / 2.0]);
                (fi * 4.0 - c) / 3.0
            } else {
                compute(h)
            }
        }
    };
    (v0, grad, hess)
}

/// Covariant Hessian D^2 phi of a scalar field.
pub fn hessian(
    g: &MetricField,
    phi: &ScalarField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<Sym3, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    Ok(hessian_from_jet(&jet, phi, p, scheme))
}

fn hessian_from_jet(jet: &MetricJet, phi: &ScalarField, p: &ChartPoint, scheme: &DiffScheme) -> Sym3 {
    let gamma = christoffel_from_jet(jet);
    let (_, grad, hess) = scalar_jet(phi, p, scheme);
    let mut d2 = hess;
    for i in 0..3 {
        for j in i..3 {
            let mut corr = 0.0;
            for k in 0..3 {
                corr += gamma[k][i][j] * grad[k];
            }
            d2[(i, j)] -= corr;
            d2[(j, i)] = d2[(i, j)];
        }
    }
    d2
}

/// Laplace-Beltrami operator: trace of the covariant Hessian (non-positive
/// spectrum convention).
pub fn laplacian(
    g: &MetricField,
    phi: &ScalarField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<f64, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    let d2 = hessian_from_jet(&jet, phi, p, scheme);
    Ok((jet.ginv * d2).trace())
}

/// Divergence of a symmetric 2-tensor as a 1-form:
/// (delta alpha)_j = -g^{ik} (D_i alpha)_{kj}.
pub fn divergence(
    g: &MetricField,
    alpha: &SymTensorField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<Vector3<f64>, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    Ok(divergence_from_jet(&jet, alpha, p, scheme))
}

fn divergence_from_jet(
    jet: &MetricJet,
    alpha: &SymTensorField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Vector3<f64> {
    let gamma = christoffel_from_jet(jet);
    let (a0, da, _) = matrix_jet(&|q| alpha.eval(q), alpha.d1.as_ref(), None, p, scheme);
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let mut s = 0.0;
        for i in 0..3 {
            for k in 0..3 {
                // (D_i alpha)_{kj}
                let mut cov = da[i][(k, j)];
                for l in 0..3 {
                    cov -= gamma[l][i][k] * a0[(l, j)] + gamma[l][i][j] * a0[(k, l)];
                }
                s += jet.ginv[(i, k)] * cov;
            }
        }
        out[j] = -s;
    }
    out
}

/// Linearization of scalar curvature applied to a symmetric 2-tensor:
/// L(alpha) = -Delta tr(alpha) + delta delta alpha - <r, alpha>.
pub fn l_apply(
    g: &MetricField,
    alpha: &SymTensorField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<f64, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    let r = ricci_from_jet(&jet);

    // -Delta tr(alpha): the trace is formed with the metric at each point.
    let trace_field = ScalarField::new(|q: &ChartPoint| {
        let gq = g.eval_raw(q);
        let gi = gq.try_inverse().unwrap_or_else(Sym3::zeros);
        (gi * alpha.eval(q)).trace()
    });
    let lap_tr = {
        let d2 = hessian_from_jet(&jet, &trace_field, p, scheme);
        (jet.ginv * d2).trace()
    };

    // delta delta alpha: divergence of the 1-form field q -> delta(alpha)(q).
    let omega = |q: &ChartPoint| -> Vector3<f64> {
        let jq = match metric_jet(g, q, scheme) {
            Ok(j) => j,
            Err(_) => return Vector3::zeros(),
        };
        divergence_from_jet(&jq, alpha, q, scheme)
    };
    let gamma = christoffel_from_jet(&jet);
    let h = scheme.local_steps(p);
    let mut domega = [Vector3::<f64>::zeros(); 3];
    for k in 0..3 {
        domega[k] = match scheme.order {
            2 => (omega(&shifted(p, k, h[k])) - omega(&shifted(p, k, -h[k]))) / (2.0 * h[k]),
            _ => {
                (-omega(&shifted(p, k, 2.0 * h[k])) + omega(&shifted(p, k, h[k])) * 8.0
                    - omega(&shifted(p, k, -h[k])) * 8.0
                    + omega(&shifted(p, k, -2.0 * h[k])))
                    / (12.0 * h[k])
            }
        };
    }
    let w0 = omega(p);
    let mut deldel = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut cov = domega[i][j];
            for k in 0..3 {
                cov -= gamma[k][i][j] * w0[k];
            }
            deldel += jet.ginv[(i, j)] * cov;
        }
    }
    deldel = -deldel;

    let ra = tensor_inner(&jet.ginv, &r, &alpha.eval(p));
    Ok(-lap_tr + deldel - ra)
}

/// Formal L^2 adjoint of L on functions:
/// L*(h) = D^2 h - (Delta h) g - h r.
pub fn l_star(
    g: &MetricField,
    h: &ScalarField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<Sym3, ChartError> {
    require_margin(&g.domain, p, scheme, 3.0)?;
    let jet = metric_jet(g, p, scheme)?;
    let d2 = hessian_from_jet(&jet, h, p, scheme);
    let lap = (jet.ginv * d2).trace();
    let r = ricci_from_jet(&jet);
    Ok(d2 - jet.g * lap - r * h.eval(p))
}

/// Fourth-order composition L(L*(v)) evaluated through its scalar form
/// 2 Delta Delta v + 2 s Delta v - <D^2 v, r> + v |r|^2.
pub fn ll_star(
    g: &MetricField,
    v: &ScalarField,
    p: &ChartPoint,
    scheme: &DiffScheme,
) -> Result<f64, ChartError> {
    require_margin(&g.domain, p, scheme, 5.0)?;
    let jet = metric_jet(g, p, scheme)?;
    let r = ricci_from_jet(&jet);
    let s = (jet.ginv * r).trace();
    let rtr = tensor_inner(&jet.ginv, &r, &r);

    let d2v = hessian_from_jet(&jet, v, p, scheme);
    let lap_v = (jet.ginv * d2v).trace();

    let lap_field = ScalarField::new(|q: &ChartPoint| {
        laplacian(g, v, q, scheme).unwrap_or(f64::NAN)
    });
    let lap_lap = {
        let d2 = hessian_from_jet(&jet, &lap_field, p, scheme);
        (jet.ginv * d2).trace()
    };

    let d2_dot_r = tensor_inner(&jet.ginv, &d2v, &r);
    Ok(2.0 * lap_lap + 2.0 * s * lap_v - d2_dot_r + v.eval(p) * rtr)
}
