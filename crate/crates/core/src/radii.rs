//! L^2 curvature radius, volume radius, buffered points and the descent
//! iteration on rotationally symmetric model spaces.
//!
//! Every model here is a warped product dx^2 + f(x)^2 ds^2_{S^2} in a
//! geodesic radial gauge, so distances from a marked point and ball volumes
//! reduce to computations on a 2D half-strip (x, gamma), gamma in [0, pi],
//! with metric dx^2 + f^2 dgamma^2 and volume weight 2 pi f^2 sin(gamma).
//! Distances are solved by first-order fast marching on that strip; ball and
//! ball-intersection integrals reduce to per-row spherical-cap overlap
//! areas.
//!
//! The radius searches follow the ball definitions literally: the curvature
//! radius is the largest r such that every sampled sub-center y in B_x(r)
//! and every sub-radius s <= r keeps the scale-normalized L^2 curvature of
//! B_x(r) cap B_y(s) below the threshold c_o, and the volume radius is the
//! analogue for the normalized intersection volume against mu omega_3.

use crate::exact;
use crate::numerics::{ode, quad};
use crate::profiles::WarpedProfile;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RadiusError {
    #[error("point {0} outside the model chart [{1}, {2}]")]
    OutOfChart(f64, f64, f64),
    #[error("descent step violates the oscillation bound: |u - {reference}| reached {observed}")]
    OscillationViolated { reference: f64, observed: f64 },
    #[error("no candidate achieves the required radius contraction at step {step} (best ratio {best_ratio})")]
    NoDescent { step: usize, best_ratio: f64 },
    #[error(transparent)]
    Ode(#[from] ode::OdeError),
}

/// Volume of the unit ball in R^3.
pub const OMEGA3: f64 = 4.0 * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Flat,
    RoundCylinder,
    Schwarzschild,
    Warped,
}

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Rotationally symmetric model space in geodesic radial gauge.
pub struct SymmetricSpaceModel {
    pub kind: ModelKind,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Period of the x coordinate for closed models.
    pub period: Option<f64>,
    /// Ends of the x interval that are genuine chart boundaries (searches
    /// cap there); a pole like the flat origin is interior.
    pub hard_ends: [bool; 2],
    warp: Curve,
    ricci_sq: Curve,
    z_sq: Curve,
    /// Static potential on the model, when one is part of the data.
    potential: Option<Curve>,
    /// Display coordinate for traces (areal radius for the black-hole
    /// models, x itself otherwise).
    display: Curve,
    /// Characteristic curvature length of the family.
    pub curvature_scale: f64,
}

impl SymmetricSpaceModel {
    /// Flat space in polar gauge: f(x) = x on [0, extent].
    pub fn flat(extent: f64) -> Self {
        SymmetricSpaceModel {
            kind: ModelKind::Flat,
            x_lo: 0.0,
            x_hi: extent,
            period: None,
            hard_ends: [false, true],
            warp: Arc::new(|x| x),
            ricci_sq: Arc::new(|_| 0.0),
            z_sq: Arc::new(|_| 0.0),
            potential: None,
            display: Arc::new(|x| x),
            curvature_scale: f64::INFINITY,
        }
    }

    /// Product S^2(b) x S^1(length).
    pub fn round_cylinder(b: f64, length: f64) -> Self {
        let b4 = b.powi(4);
        SymmetricSpaceModel {
            kind: ModelKind::RoundCylinder,
            x_lo: 0.0,
            x_hi: length,
            period: Some(length),
            hard_ends: [false, false],
            warp: Arc::new(move |_| b),
            ricci_sq: Arc::new(move |_| 2.0 / b4),
            z_sq: Arc::new(move |_| 2.0 / (3.0 * b4)),
            potential: None,
            display: Arc::new(|x| x),
            curvature_scale: b,
        }
    }

    /// Spatial Schwarzschild of mass m, doubled across the horizon sphere.
    /// The coordinate is the signed geodesic distance from the horizon; the
    /// areal radius t(|x|) solves dt/dx = sqrt(1 - 2m/t) from t(0) = 2m.
    pub fn schwarzschild(m: f64, t_max: f64) -> Result<Self, RadiusError> {
        // Degenerate start handled by the series t = 2m + x^2/(8m).
        let x0 = 0.02 * m;
        let t0 = 2.0 * m + x0 * x0 / (8.0 * m);
        let opts = ode::OdeOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            max_step: 0.05 * m.max(1.0),
            min_step: 1e-15,
        };
        let nodes = ode::integrate(
            |_, t: f64| (1.0 - 2.0 * m / t).max(0.0).sqrt(),
            x0,
            t0,
            // Geodesic extent slightly exceeds the areal span.
            (t_max - 2.0 * m) * 1.2 + 20.0 * m,
            &opts,
        )?;
        let nodes = Arc::new(nodes);
        let areal = {
            let nodes = nodes.clone();
            Arc::new(move |x: f64| -> f64 {
                let ax = x.abs();
                if ax <= x0 {
                    return 2.0 * m + ax * ax / (8.0 * m);
                }
                let idx = nodes
                    .binary_search_by(|probe| probe.0.partial_cmp(&ax).unwrap())
                    .unwrap_or_else(|i| i.saturating_sub(1))
                    .min(nodes.len() - 1);
                let (xn, tn, _) = nodes[idx];
                // A few fixed Runge-Kutta sub-steps from the nearest node.
                let h = (ax - xn) / 4.0;
                let mut t = tn;
                if h != 0.0 {
                    let rhs = |t: f64| (1.0 - 2.0 * m / t).max(0.0).sqrt();
                    for _ in 0..4 {
                        let k1 = rhs(t);
                        let k2 = rhs(t + 0.5 * h * k1);
                        let k3 = rhs(t + 0.5 * h * k2);
                        let k4 = rhs(t + h * k3);
                        t += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
                    }
                }
                t
            })
        };
        let x_max = nodes.last().map(|n| n.0).unwrap_or(1.0);
        let a1 = areal.clone();
        let a2 = areal.clone();
        let a3 = areal.clone();
        let a4 = areal.clone();
        Ok(SymmetricSpaceModel {
            kind: ModelKind::Schwarzschild,
            x_lo: -x_max,
            x_hi: x_max,
            period: None,
            hard_ends: [true, true],
            warp: Arc::new(move |x| a1(x)),
            ricci_sq: Arc::new(move |x| {
                let t = a2(x);
                6.0 * m * m / t.powi(6)
            }),
            z_sq: Arc::new(move |x| {
                let t = a3(x);
                6.0 * m * m / t.powi(6)
            }),
            potential: Some(Arc::new(move |x| {
                (1.0 - 2.0 * m / areal(x)).max(0.0).sqrt()
            })),
            display: Arc::new(move |x| a4(x)),
            curvature_scale: m,
        })
    }

    /// Doubled warped-product model built from an open profile with
    /// f'(0) = 0 (even extension across the waist sphere).
    pub fn warped(profile: Arc<WarpedProfile>) -> Self {
        let (_, hi) = profile.t_range();
        let p1 = profile.clone();
        let p2 = profile.clone();
        let p3 = profile;
        let curvature_scale = {
            let rsq = |x: f64| {
                let f = p3.value(x);
                let fp = p3.deriv(x, 1);
                let fpp = p3.deriv(x, 2);
                let r_tt = -2.0 * fpp / f;
                let r_ff = -fpp / f + (1.0 - fp * fp) / (f * f);
                r_tt * r_tt + 2.0 * r_ff * r_ff
            };
            rsq(0.0).max(1e-300).powf(-0.25)
        };
        SymmetricSpaceModel {
            kind: ModelKind::Warped,
            x_lo: -hi,
            x_hi: hi,
            period: None,
            hard_ends: [true, true],
            warp: Arc::new(move |x| p1.value(x.abs())),
            ricci_sq: Arc::new(move |x| {
                let ax = x.abs();
                let f = p2.value(ax);
                let fp = p2.deriv(ax, 1);
                let fpp = p2.deriv(ax, 2);
                let r_tt = -2.0 * fpp / f;
                let r_ff = -fpp / f + (1.0 - fp * fp) / (f * f);
                r_tt * r_tt + 2.0 * r_ff * r_ff
            }),
            z_sq: Arc::new(move |x| {
                let ax = x.abs();
                let f = p3.value(ax);
                let fp = p3.deriv(ax, 1);
                let fpp = p3.deriv(ax, 2);
                let r_tt = -2.0 * fpp / f;
                let r_ff = -fpp / f + (1.0 - fp * fp) / (f * f);
                let s = r_tt + 2.0 * r_ff;
                (r_tt - s / 3.0).powi(2) + 2.0 * (r_ff - s / 3.0).powi(2)
            }),
            potential: None,
            display: Arc::new(|x| x),
            curvature_scale,
        }
    }

    /// The model with metric scaled by tau^2: lengths dilate by tau.
    pub fn scaled(&self, tau: f64) -> Self {
        let warp = self.warp.clone();
        let rsq = self.ricci_sq.clone();
        let zsq = self.z_sq.clone();
        let pot = self.potential.clone();
        let disp = self.display.clone();
        SymmetricSpaceModel {
            kind: self.kind,
            x_lo: tau * self.x_lo,
            x_hi: tau * self.x_hi,
            period: self.period.map(|l| tau * l),
            hard_ends: self.hard_ends,
            warp: Arc::new(move |x| tau * warp(x / tau)),
            ricci_sq: Arc::new(move |x| rsq(x / tau) / tau.powi(4)),
            z_sq: Arc::new(move |x| zsq(x / tau) / tau.powi(4)),
            potential: pot.map(|p| -> Curve { Arc::new(move |x: f64| p(x / tau)) }),
            display: Arc::new(move |x| disp(x / tau) * tau),
            curvature_scale: tau * self.curvature_scale,
        }
    }

    pub fn warp_at(&self, x: f64) -> f64 {
        (self.warp)(x)
    }

    pub fn ricci_sq_at(&self, x: f64) -> f64 {
        (self.ricci_sq)(x)
    }

    pub fn potential_at(&self, x: f64) -> Option<f64> {
        self.potential.as_ref().map(|p| p(x))
    }

    pub fn display_at(&self, x: f64) -> f64 {
        (self.display)(x)
    }

    pub fn total_volume(&self) -> Option<f64> {
        self.period
            .map(|l| quad::integrate_fixed(|x| 4.0 * PI * (self.warp)(x).powi(2), 0.0, l, 64))
    }

    /// Distance from a base point to the nearest hard chart end; closed
    /// models return a bound past the diameter instead.
    fn cap_at(&self, x: f64) -> f64 {
        if let Some(l) = self.period {
            let fmax = (0..32)
                .map(|i| (self.warp)(l * i as f64 / 32.0))
                .fold(0.0f64, f64::max);
            return 0.5 * l + PI * fmax + 1.0;
        }
        let mut cap = f64::INFINITY;
        if self.hard_ends[0] {
            cap = cap.min(x - self.x_lo);
        }
        if self.hard_ends[1] {
            cap = cap.min(self.x_hi - x);
        }
        if !cap.is_finite() {
            cap = self.x_hi - self.x_lo;
        }
        cap
    }

    fn check_in_chart(&self, x: f64) -> Result<(), RadiusError> {
        if self.period.is_some() {
            return Ok(());
        }
        if x < self.x_lo || x > self.x_hi {
            return Err(RadiusError::OutOfChart(x, self.x_lo, self.x_hi));
        }
        Ok(())
    }
}

/// Search parameters for the radius computations.
#[derive(Debug, Clone)]
pub struct RadiusConfig {
    /// Curvature-radius threshold.
    pub c_o: f64,
    /// Volume-radius threshold (fraction of the Euclidean ball volume).
    pub mu: f64,
    /// Fast-marching grid nodes along x (gamma uses half as many).
    pub grid_n: usize,
    /// Sub-center samples per direction inside the ball.
    pub center_grid: usize,
    /// Geometric sub-radius ladder length.
    pub s_ladder: usize,
    /// Relative width at which the bisection on r stops.
    pub bin_tol: f64,
    /// Coarser settings for throwaway probes (descent candidates, boundary
    /// sweeps).
    pub probe_grid_n: usize,
    pub probe_center_grid: usize,
    pub probe_s_ladder: usize,
    pub probe_bin_tol: f64,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        RadiusConfig {
            c_o: 1e-3,
            mu: 1e-2,
            grid_n: 512,
            center_grid: 9,
            s_ladder: 12,
            bin_tol: 1e-3,
            probe_grid_n: 192,
            probe_center_grid: 5,
            probe_s_ladder: 8,
            probe_bin_tol: 5e-3,
        }
    }
}

impl RadiusConfig {
    fn probe(&self) -> RadiusConfig {
        RadiusConfig {
            grid_n: self.probe_grid_n,
            center_grid: self.probe_center_grid,
            s_ladder: self.probe_s_ladder,
            bin_tol: self.probe_bin_tol,
            ..self.clone()
        }
    }
}

/// Point of the 2D reduction: radial coordinate and polar angle from the
/// marked axis.
#[derive(Debug, Clone, Copy)]
pub struct ModelPoint {
    pub x: f64,
    pub gamma: f64,
}

/// Discretized window of the reduced half-strip.
struct ReducedGrid {
    x0: f64,
    hx: f64,
    nx: usize,
    hg: f64,
    ng: usize,
    periodic: bool,
    f: Vec<f64>,
    ricci_sq: Vec<f64>,
}

impl ReducedGrid {
    fn build(model: &SymmetricSpaceModel, center: f64, half_width: f64, n: usize) -> ReducedGrid {
        let (x0, x1, periodic) = match model.period {
            Some(l) => (center - l / 2.0, center + l / 2.0, true),
            None => (
                (center - half_width).max(model.x_lo),
                (center + half_width).min(model.x_hi),
                false,
            ),
        };
        let nx = n;
        let ng = n / 2 + 1;
        let hx = (x1 - x0) / (nx as f64 - if periodic { 0.0 } else { 1.0 });
        let hg = PI / (ng - 1) as f64;
        let mut f = Vec::with_capacity(nx);
        let mut rs = Vec::with_capacity(nx);
        let floor = 1e-9 * (x1 - x0).max(1.0);
        for i in 0..nx {
            let x = x0 + hx * i as f64;
            f.push((model.warp)(x).max(floor));
            rs.push((model.ricci_sq)(x));
        }
        ReducedGrid {
            x0,
            hx,
            nx,
            hg,
            ng,
            periodic,
            f,
            ricci_sq: rs,
        }
    }

    fn x_of(&self, i: usize) -> f64 {
        self.x0 + self.hx * i as f64
    }

    fn row_of(&self, x: f64) -> usize {
        let mut ix = ((x - self.x0) / self.hx).round() as i64;
        if self.periodic {
            ix = ix.rem_euclid(self.nx as i64);
        }
        ix.clamp(0, self.nx as i64 - 1) as usize
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ng + j
    }
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// First-order fast marching for |grad d| = 1 in the metric
/// dx^2 + f(x)^2 dgamma^2, source at the pole (row src_ix, gamma = 0).
/// Gamma boundaries reflect; x wraps when periodic. Nodes farther than
/// `horizon` are left at infinity.
fn distance_map(grid: &ReducedGrid, src_ix: usize, horizon: f64) -> Vec<f64> {
    let (nx, ng) = (grid.nx, grid.ng);
    let mut dist = vec![f64::INFINITY; nx * ng];
    let mut done = vec![false; nx * ng];
    let mut heap = BinaryHeap::new();

    // Seed a small neighborhood of the source with local distances.
    let src_x = grid.x_of(src_ix);
    for di in -3i64..=3 {
        let mut i = src_ix as i64 + di;
        if grid.periodic {
            i = i.rem_euclid(nx as i64);
        }
        if i < 0 || i >= nx as i64 {
            continue;
        }
        let i = i as usize;
        for j in 0..4.min(ng) {
            let gamma = grid.hg * j as f64;
            let fm = 0.5 * (grid.f[i] + grid.f[src_ix]);
            let d = ((grid.x_of(i) - src_x).powi(2) + (fm * gamma).powi(2)).sqrt();
            let id = grid.idx(i, j);
            if d < dist[id] {
                dist[id] = d;
                heap.push(HeapItem { dist: d, node: id });
            }
        }
    }

    let neighbor_x = |i: usize, step: i64| -> Option<usize> {
        let mut v = i as i64 + step;
        if grid.periodic {
            v = v.rem_euclid(nx as i64);
            Some(v as usize)
        } else if v < 0 || v >= nx as i64 {
            None
        } else {
            Some(v as usize)
        }
    };
    // Reflecting gamma boundary: the ghost across the edge is the interior
    // neighbor on the other side.
    let neighbor_g = |j: usize, step: i64| -> usize {
        let v = j as i64 + step;
        if v < 0 {
            1.min(ng - 1)
        } else if v >= ng as i64 {
            ng.saturating_sub(2)
        } else {
            v as usize
        }
    };

    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if d > horizon {
            break;
        }
        let i = node / ng;
        let j = node % ng;
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let ni = match neighbor_x(i, di) {
                Some(v) => v,
                None => continue,
            };
            let nj = if dj == 0 { j } else { neighbor_g(j, dj) };
            let id = grid.idx(ni, nj);
            if done[id] {
                continue;
            }
            // Upwind quadratic update at (ni, nj).
            let ax = {
                let mut best = f64::INFINITY;
                for s in [-1i64, 1] {
                    if let Some(mi) = neighbor_x(ni, s) {
                        best = best.min(dist[grid.idx(mi, nj)]);
                    }
                }
                best
            };
            let ag = {
                let mut best = f64::INFINITY;
                for s in [-1i64, 1] {
                    let mj = neighbor_g(nj, s);
                    best = best.min(dist[grid.idx(ni, mj)]);
                }
                best
            };
            let wx = 1.0 / (grid.hx * grid.hx);
            let harc = grid.f[ni] * grid.hg;
            let wg = 1.0 / (harc * harc);
            let mut cand = f64::INFINITY;
            if ax.is_finite() && ag.is_finite() {
                // Solve wx (d-ax)^2 + wg (d-ag)^2 = 1 for the larger root.
                let a = wx + wg;
                let b = -2.0 * (wx * ax + wg * ag);
                let c = wx * ax * ax + wg * ag * ag - 1.0;
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let root = (-b + disc.sqrt()) / (2.0 * a);
                    if root >= ax.max(ag) {
                        cand = root;
                    }
                }
            }
            if !cand.is_finite() {
                let c1 = if ax.is_finite() {
                    ax + grid.hx
                } else {
                    f64::INFINITY
                };
                let c2 = if ag.is_finite() {
                    ag + harc
                } else {
                    f64::INFINITY
                };
                cand = c1.min(c2);
            }
            if cand < dist[id] {
                dist[id] = cand;
                heap.push(HeapItem {
                    dist: cand,
                    node: id,
                });
            }
        }
    }
    dist
}

/// Largest angle gamma such that the row's distance stays below `radius`
/// (rows are monotone in gamma up to grid noise); negative when the whole
/// row is farther than radius.
fn gamma_reach(grid: &ReducedGrid, map: &[f64], row: usize, radius: f64) -> f64 {
    let base = grid.idx(row, 0);
    if map[base] > radius {
        return -1.0;
    }
    for j in 1..grid.ng {
        let d = map[base + j];
        if d > radius {
            let d0 = map[base + j - 1];
            let frac = ((radius - d0) / (d - d0)).clamp(0.0, 1.0);
            return grid.hg * ((j - 1) as f64 + frac);
        }
    }
    PI
}

/// Area on the unit sphere of the intersection of two polar caps of angular
/// radii `a` and `b` whose axes are separated by `sep`.
fn cap_intersection_area(a: f64, b: f64, sep: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let cap = |t: f64| 2.0 * PI * (1.0 - t.cos());
    if sep <= 1e-12 {
        return cap(a.min(b));
    }
    if sep >= a + b {
        return 0.0;
    }
    if sep + a <= b {
        return cap(a);
    }
    if sep + b <= a {
        return cap(b);
    }
    // Fully-covered polar region (the azimuth spans the whole circle).
    let gamma_full = if sep < b { b - sep } else { -1.0 };
    let mut area = if gamma_full > 0.0 {
        cap(gamma_full.min(a))
    } else {
        0.0
    };
    let lo = (sep - b).abs();
    let hi = a.min(sep + b);
    if hi > lo {
        let (nodes, weights) = gauss20();
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut s = 0.0;
        for (&xn, &wn) in nodes.iter().zip(weights.iter()) {
            let g: f64 = mid + half * xn;
            let q = ((b.cos() - g.cos() * sep.cos()) / (g.sin() * sep.sin())).clamp(-1.0, 1.0);
            s += wn * 2.0 * q.acos() * g.sin();
        }
        area += half * s;
    }
    area
}

fn gauss20() -> (&'static Vec<f64>, &'static Vec<f64>) {
    use std::sync::OnceLock;
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let r = R.get_or_init(|| quad::gauss_legendre(20));
    (&r.0, &r.1)
}

/// Volume and curvature mass of the ball around the pole of `map` with
/// radius rho.
fn ball_integrals(grid: &ReducedGrid, map: &[f64], rho: f64) -> (f64, f64) {
    let mut vol = 0.0;
    let mut mass = 0.0;
    for i in 0..grid.nx {
        let a = gamma_reach(grid, map, i, rho);
        if a <= 0.0 {
            continue;
        }
        let solid = 2.0 * PI * (1.0 - a.cos());
        let cell = grid.f[i] * grid.f[i] * solid * grid.hx;
        vol += cell;
        mass += grid.ricci_sq[i] * cell;
    }
    (vol, mass)
}

/// Volume and curvature mass of B_x(r) cap B_y(s), where x sits at the pole
/// of `map_x`, and y at angle gamma_y from that axis with its own pole map.
fn intersection_integrals(
    grid: &ReducedGrid,
    map_x: &[f64],
    r: f64,
    map_y: &[f64],
    s: f64,
    gamma_y: f64,
) -> (f64, f64) {
    let mut vol = 0.0;
    let mut mass = 0.0;
    for i in 0..grid.nx {
        let a = gamma_reach(grid, map_x, i, r);
        if a <= 0.0 {
            continue;
        }
        let b = gamma_reach(grid, map_y, i, s);
        if b <= 0.0 {
            continue;
        }
        let area = cap_intersection_area(a, b, gamma_y);
        if area <= 0.0 {
            continue;
        }
        let cell = grid.f[i] * grid.f[i] * area * grid.hx;
        vol += cell;
        mass += grid.ricci_sq[i] * cell;
    }
    (vol, mass)
}

/// Shared state for radius searches around one base point: the window grid
/// and memoized pole distance maps keyed by row index.
struct BallWorkspace<'m> {
    model: &'m SymmetricSpaceModel,
    grid: ReducedGrid,
    maps: HashMap<usize, Vec<f64>>,
    horizon: f64,
}

impl<'m> BallWorkspace<'m> {
    fn new(model: &'m SymmetricSpaceModel, x: f64, reach: f64, n: usize) -> Self {
        let grid = ReducedGrid::build(model, x, reach * 1.02 + 8.0 * reach / n as f64, n);
        BallWorkspace {
            model,
            grid,
            maps: HashMap::new(),
            horizon: reach * 1.06,
        }
    }

    fn map_for(&mut self, row: usize) -> &Vec<f64> {
        let horizon = self.horizon;
        let grid = &self.grid;
        self.maps
            .entry(row)
            .or_insert_with(|| distance_map(grid, row, horizon))
    }

    /// Sub-centers spread over the ball B_x(r): rows in the x-extent of the
    /// ball, angles within each row's reach. Rows are shared, so the number
    /// of distance maps stays at the per-axis count.
    fn center_samples(&mut self, x_row: usize, r: f64, per_axis: usize) -> Vec<(usize, f64)> {
        let map_x = self.map_for(x_row).clone();
        let grid = &self.grid;
        let mut rows: Vec<usize> = Vec::new();
        for i in 0..grid.nx {
            if map_x[grid.idx(i, 0)] <= r {
                rows.push(i);
            }
        }
        if rows.is_empty() {
            rows.push(x_row);
        }
        let mut centers = vec![(x_row, 0.0)];
        let k = per_axis.max(2);
        for a in 0..k {
            let ridx = rows[(a * (rows.len() - 1)) / (k - 1)];
            let reach = gamma_reach(grid, &map_x, ridx, r).max(0.0);
            for b in 0..k {
                let gamma = reach * b as f64 / (k - 1) as f64;
                centers.push((ridx, gamma));
            }
        }
        centers
    }
}

/// Outcome of a radius search.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RadiusResult {
    pub value: f64,
    /// The search ran into the chart boundary; the true radius may be
    /// larger.
    pub capped: bool,
}

fn bisect_radius(
    lo0: f64,
    hi0: f64,
    tol: f64,
    mut admissible: impl FnMut(f64) -> bool,
) -> (f64, bool) {
    let mut lo = lo0;
    let mut hi = hi0;
    if admissible(hi) {
        return (hi, true);
    }
    if !admissible(lo) {
        return (lo, false);
    }
    while (hi - lo) > tol * hi0.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

/// Geodesic distance between two points of the reduced chart.
pub fn geodesic_distance(
    model: &SymmetricSpaceModel,
    p: ModelPoint,
    q: ModelPoint,
    config: &RadiusConfig,
) -> Result<f64, RadiusError> {
    model.check_in_chart(p.x)?;
    model.check_in_chart(q.x)?;
    let sep = (p.x - q.x).abs();
    let fmax = (0..16)
        .map(|i| (model.warp)(p.x + (q.x - p.x) * i as f64 / 15.0))
        .fold(0.0f64, f64::max);
    let reach = sep + PI * fmax + 1.0;
    let mid = 0.5 * (p.x + q.x);
    let grid = ReducedGrid::build(model, mid, reach, config.grid_n);
    let src = grid.row_of(p.x);
    let map = distance_map(&grid, src, reach * 1.5);
    // Linear read at (q.x, relative angle).
    let i = grid.row_of(q.x);
    let jf = (q.gamma - p.gamma).abs() / grid.hg;
    let j = (jf.floor() as usize).min(grid.ng - 2);
    let frac = jf - j as f64;
    let d0 = map[grid.idx(i, j)];
    let d1 = map[grid.idx(i, j + 1)];
    Ok(d0 * (1.0 - frac) + d1 * frac)
}

/// Volume radius: the largest r such that every sampled sub-ball
/// B_y(s) cap B_x(r), y in B_x(r), s <= r, has at least the fraction
/// mu omega_3 of the Euclidean volume s^3.
pub fn volume_radius(
    model: &SymmetricSpaceModel,
    x: f64,
    config: &RadiusConfig,
) -> Result<RadiusResult, RadiusError> {
    model.check_in_chart(x)?;
    let cap = model.cap_at(x);
    let mut ws = BallWorkspace::new(model, x, cap, config.grid_n);
    let x_row = ws.grid.row_of(x);
    let total_vol = model.total_volume();
    let min_r = 6.0 * ws.grid.hx;

    let mut admissible = |r: f64| -> bool {
        let centers = ws.center_samples(x_row, r, config.center_grid);
        let map_x = ws.map_for(x_row).clone();
        for (y_row, gamma_y) in centers {
            let map_y = ws.map_for(y_row).clone();
            for k in 0..config.s_ladder {
                let s = r * 20.0f64.powf(-(k as f64) / (config.s_ladder as f64 - 1.0));
                let (mut vol, _) = intersection_integrals(&ws.grid, &map_x, r, &map_y, s, gamma_y);
                if let Some(v) = total_vol {
                    vol = vol.min(v);
                }
                if vol / (s * s * s) < config.mu * OMEGA3 {
                    return false;
                }
            }
        }
        true
    };
    let (value, capped) = bisect_radius(min_r, cap, config.bin_tol, &mut admissible);
    Ok(RadiusResult { value, capped })
}

/// L^2 curvature radius: the largest r such that for every sampled center
/// y in B_x(r) and every sub-radius s <= r,
/// s^4 / vol(D) * Int_D |ric|^2 <= c_o with D = B_x(r) cap B_y(s).
pub fn l2_curvature_radius(
    model: &SymmetricSpaceModel,
    x: f64,
    config: &RadiusConfig,
) -> Result<RadiusResult, RadiusError> {
    model.check_in_chart(x)?;
    let cap = model.cap_at(x);
    let mut ws = BallWorkspace::new(model, x, cap, config.grid_n);
    let x_row = ws.grid.row_of(x);
    let min_r = 6.0 * ws.grid.hx;

    let mut admissible = |r: f64| -> bool {
        let centers = ws.center_samples(x_row, r, config.center_grid);
        let map_x = ws.map_for(x_row).clone();
        for (y_row, gamma_y) in centers {
            let map_y = ws.map_for(y_row).clone();
            // The normalized mass is not monotone in s; the whole ladder
            // runs with no early exit.
            for k in 0..config.s_ladder {
                let s = r * 20.0f64.powf(-(k as f64) / (config.s_ladder as f64 - 1.0));
                let (vol, mass) = intersection_integrals(&ws.grid, &map_x, r, &map_y, s, gamma_y);
                if vol <= 0.0 {
                    continue;
                }
                if s.powi(4) * mass / vol > config.c_o {
                    return false;
                }
            }
        }
        true
    };
    let (value, capped) = bisect_radius(min_r, cap, config.bin_tol, &mut admissible);
    Ok(RadiusResult { value, capped })
}

/// Normalized curvature mass of the inner ball:
/// rho^4 / vol(B_y(rho)) * Int over B_y((1-c) rho) of |ric|^2.
pub fn buffer_value(
    model: &SymmetricSpaceModel,
    y: f64,
    c: f64,
    rho: f64,
    config: &RadiusConfig,
) -> Result<f64, RadiusError> {
    model.check_in_chart(y)?;
    let mut ws = BallWorkspace::new(model, y, rho * 1.1, config.grid_n);
    let row = ws.grid.row_of(y);
    let map = ws.map_for(row).clone();
    let (vol, _) = ball_integrals(&ws.grid, &map, rho);
    let (_, inner_mass) = ball_integrals(&ws.grid, &map, (1.0 - c) * rho);
    Ok(rho.powi(4) * inner_mass / vol.max(1e-300))
}

/// The buffered-point predicate: a definite share c * c_o of the normalized
/// curvature mass sits strictly inside the ball.
pub fn buffered(
    model: &SymmetricSpaceModel,
    y: f64,
    c: f64,
    config: &RadiusConfig,
) -> Result<bool, RadiusError> {
    let rho = l2_curvature_radius(model, y, config)?.value;
    Ok(buffer_value(model, y, c, rho, config)? >= c * config.c_o)
}

/// Strong buffering: the curvature radius does not collapse anywhere on the
/// boundary sphere of B_y(rho(y)).
pub fn strongly_buffered(
    model: &SymmetricSpaceModel,
    y: f64,
    d: f64,
    config: &RadiusConfig,
) -> Result<bool, RadiusError> {
    let rho = l2_curvature_radius(model, y, config)?.value;
    let probe = config.probe();
    for z in boundary_samples(model, y, rho) {
        let rho_z = l2_curvature_radius(model, z, &probe)?.value;
        if rho_z < d * rho {
            return Ok(false);
        }
    }
    Ok(true)
}

/// x-coordinates met by the boundary sphere of B_y(rho). By symmetry the
/// radius function depends only on x, so these samples cover all boundary
/// orbits.
fn boundary_samples(model: &SymmetricSpaceModel, y: f64, rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..7 {
        let xr = y - rho + 2.0 * rho * k as f64 / 6.0;
        let clamped = match model.period {
            Some(_) => xr,
            None => xr.clamp(model.x_lo + 1e-9, model.x_hi - 1e-9),
        };
        out.push(clamped);
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// Covering-argument bound: Int |z|^2 dV <= C N c_o vol / rho_0^4 with the
/// implemented near-Euclidean covering constants C = 16 (halving the radius
/// inside the per-ball bound) and N = 125 (multiplicity of a rho_0/2 cover
/// with rho_0/4-separated centers, by the Euclidean volume argument).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoveringBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub rho_floor: f64,
    pub constant_c: f64,
    pub constant_n: f64,
}

pub fn lemma_covering_bound(
    model: &SymmetricSpaceModel,
    config: &RadiusConfig,
) -> Result<CoveringBoundReport, RadiusError> {
    let l = model
        .period
        .expect("covering bound applies to closed models");
    let vol = model.total_volume().unwrap();
    let lhs = quad::integrate_fixed(
        |x| (model.z_sq)(x) * 4.0 * PI * (model.warp)(x).powi(2),
        0.0,
        l,
        128,
    );
    // inf of rho over base points.
    let mut rho0 = f64::INFINITY;
    for k in 0..4 {
        let x = l * k as f64 / 4.0;
        rho0 = rho0.min(l2_curvature_radius(model, x, config)?.value);
    }
    let (c, n) = (16.0, 125.0);
    let rhs = c * n * config.c_o * vol / rho0.powi(4);
    Ok(CoveringBoundReport {
        lhs,
        rhs,
        holds: lhs <= rhs,
        rho_floor: rho0,
        constant_c: c,
        constant_n: n,
    })
}

/// One visited base point of the descent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DescentStep {
    pub step: usize,
    pub x: f64,
    /// Display coordinate (areal radius for black-hole models).
    pub t: f64,
    pub rho: f64,
    pub u: f64,
    pub buffered: bool,
    pub strongly_buffered: bool,
}

/// Record of the descent toward curvature concentration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DescentTrace {
    pub points: Vec<DescentStep>,
    pub c: f64,
    pub d: f64,
    /// Contraction factor d1 = d + 2c required between consecutive radii.
    pub d1: f64,
}

impl DescentTrace {
    pub fn terminal(&self) -> &DescentStep {
        self.points.last().expect("descent records its start")
    }

    /// Number of contraction steps taken (trace entries minus the start).
    pub fn levels(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,rho,u,buffered,strongly_buffered")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{},{}",
                p.step, p.t, p.rho, p.u, p.buffered, p.strongly_buffered
            )?;
        }
        Ok(())
    }
}

/// Descend toward the curvature concentration of the model.
///
/// From the current base point, candidates are sampled on the shell at
/// distance [(1-2c) rho, (1-c) rho] from the ball boundary; the walk moves
/// to the candidate minimizing the curvature radius and repeats while the
/// radius contracts by the factor d1 = d + 2c. It stops at the first point
/// where no candidate contracts; that point must be buffered, or the
/// descent reports NoDescent. The potential may not oscillate by more than
/// a quarter of its center value over any visited ball.
pub fn descend(
    model: &SymmetricSpaceModel,
    x_start: f64,
    c: f64,
    d: f64,
    config: &RadiusConfig,
    max_steps: usize,
) -> Result<DescentTrace, RadiusError> {
    let u = |x: f64| model.potential_at(x).unwrap_or(1.0);
    let d1 = d + 2.0 * c;
    let probe = config.probe();
    let mut points = Vec::new();
    let mut x_cur = x_start;

    for step in 0..max_steps {
        let rho = l2_curvature_radius(model, x_cur, config)?.value;
        let buf_val = buffer_value(model, x_cur, c, rho, &probe)?;
        let is_buffered = buf_val >= c * config.c_o;
        let strong = strongly_buffered(model, x_cur, d, &probe)?;
        points.push(DescentStep {
            step,
            x: x_cur,
            t: model.display_at(x_cur),
            rho,
            u: u(x_cur),
            buffered: is_buffered,
            strongly_buffered: strong,
        });

        // The family's curvature scale is a hard floor for the walk.
        if rho <= model.curvature_scale {
            break;
        }

        // Oscillation gate over the inner ball.
        let u0 = u(x_cur);
        let mut osc: f64 = 0.0;
        for k in 0..33 {
            let xs = x_cur - (1.0 - c) * rho + 2.0 * (1.0 - c) * rho * k as f64 / 32.0;
            let xs = match model.period {
                Some(_) => xs,
                None => xs.clamp(model.x_lo, model.x_hi),
            };
            osc = osc.max((u(xs) - u0).abs());
        }
        if osc > 0.25 * u0 {
            return Err(RadiusError::OscillationViolated {
                reference: u0,
                observed: osc,
            });
        }

        // Shell candidates: the shell at distance [(1-2c) rho, (1-c) rho]
        // from the boundary covers the x-interval |x - x_cur| <= (1-c) rho,
        // and the radius depends only on x.
        let span = (1.0 - c) * rho;
        let mut best: Option<(f64, f64)> = None;
        let n_cand = 17;
        for k in 0..n_cand {
            let xc = x_cur - span + 2.0 * span * k as f64 / (n_cand - 1) as f64;
            let xc = match model.period {
                Some(_) => xc,
                None => xc.clamp(model.x_lo + 1e-9, model.x_hi - 1e-9),
            };
            let rho_c = l2_curvature_radius(model, xc, &probe)?.value;
            if best.map(|(_, r)| rho_c < r).unwrap_or(true) {
                best = Some((xc, rho_c));
            }
        }
        let (x_next, rho_next) = best.expect("candidate list is nonempty");

        if rho_next > d1 * rho {
            // No contraction available: the walk stalled. A stall at the
            // concentration scale is the successful outcome; anywhere else
            // it means the model has nothing to descend into.
            if is_buffered {
                break;
            }
            return Err(RadiusError::NoDescent {
                step,
                best_ratio: rho_next / rho,
            });
        }
        x_cur = x_next;
    }
    Ok(DescentTrace { points, c, d, d1 })
}

/// Geodesic-gauge coordinate of the areal radius t in the Schwarzschild
/// model (distance from the horizon).
pub fn schwarzschild_geodesic_coordinate(m: f64, t: f64) -> f64 {
    exact::schwarzschild_radial_distance(m, 2.0 * m * (1.0 + 1e-12), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fast_config() -> RadiusConfig {
        RadiusConfig {
            grid_n: 256,
            center_grid: 7,
            s_ladder: 10,
            bin_tol: 2e-3,
            probe_grid_n: 128,
            ..Default::default()
        }
    }

    #[test]
    fn cap_intersection_matches_brute_force() {
        let brute = |a: f64, b: f64, sep: f64| -> f64 {
            let n = 2000;
            let mut s = 0.0;
            for i in 0..n {
                let g = a * (i as f64 + 0.5) / n as f64;
                let q = ((b.cos() - g.cos() * sep.cos()) / (g.sin() * sep.sin())).clamp(-1.0, 1.0);
                s += 2.0 * q.acos() * g.sin() * (a / n as f64);
            }
            s
        };
        for &(a, b, sep) in &[
            (0.7, 0.4, 0.5),
            (1.2, 1.0, 0.4),
            (0.5, 0.5, 0.99),
            (2.0, 0.3, 1.8),
            (1.0, 2.5, 0.7),
        ] {
            let exact_v = brute(a, b, sep);
            let fast = cap_intersection_area(a, b, sep);
            assert_relative_eq!(fast, exact_v, max_relative = 2e-3);
        }
        // Containment and disjoint limits.
        assert_abs_diff_eq!(cap_intersection_area(0.3, 0.2, 1.0), 0.0);
        assert_relative_eq!(
            cap_intersection_area(0.2, 1.5, 0.3),
            2.0 * PI * (1.0 - 0.2f64.cos()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn flat_distances_are_euclidean() {
        let model = SymmetricSpaceModel::flat(20.0);
        let config = fast_config();
        let p = ModelPoint { x: 3.0, gamma: 0.0 };
        let q = ModelPoint { x: 5.0, gamma: 1.0 };
        // Law of cosines in flat space.
        let expect = (9.0 + 25.0 - 2.0 * 15.0 * 1.0f64.cos()).sqrt();
        let d = geodesic_distance(&model, p, q, &config).unwrap();
        assert_relative_eq!(d, expect, max_relative = 0.02);
    }

    #[test]
    fn distance_symmetry_and_triangle() {
        let model = SymmetricSpaceModel::schwarzschild(1.0, 120.0).unwrap();
        let config = fast_config();
        let a = ModelPoint { x: 4.0, gamma: 0.0 };
        let b = ModelPoint { x: 9.0, gamma: 0.8 };
        let c = ModelPoint { x: 6.5, gamma: 1.9 };
        let dab = geodesic_distance(&model, a, b, &config).unwrap();
        let dba = geodesic_distance(&model, b, a, &config).unwrap();
        assert_relative_eq!(dab, dba, max_relative = 0.03);
        let dac = geodesic_distance(&model, a, c, &config).unwrap();
        let dbc = geodesic_distance(&model, b, c, &config).unwrap();
        assert!(dac <= dab + dbc + 0.05 * (dab + dbc));
    }

    #[test]
    fn schwarzschild_radial_distance_oracle() {
        // Radial pairs: the geodesic-gauge coordinate difference equals the
        // quadrature of (1 - 2m/t)^{-1/2}.
        let m = 1.0;
        let model = SymmetricSpaceModel::schwarzschild(m, 120.0).unwrap();
        let config = fast_config();
        let x3 = schwarzschild_geodesic_coordinate(m, 3.0);
        let x5 = schwarzschild_geodesic_coordinate(m, 5.0);
        assert_relative_eq!(model.display_at(x3), 3.0, max_relative = 1e-6);
        let d = geodesic_distance(
            &model,
            ModelPoint { x: x3, gamma: 0.0 },
            ModelPoint { x: x5, gamma: 0.0 },
            &config,
        )
        .unwrap();
        let oracle = exact::schwarzschild_radial_distance(m, 3.0, 5.0);
        assert_relative_eq!(d, oracle, max_relative = 0.02);
        assert_relative_eq!(x5 - x3, oracle, max_relative = 1e-8);
    }

    #[test]
    fn out_of_chart_is_an_error() {
        let model = SymmetricSpaceModel::flat(10.0);
        assert!(matches!(
            l2_curvature_radius(&model, 11.0, &fast_config()),
            Err(RadiusError::OutOfChart(..))
        ));
    }

    #[test]
    fn flat_radii_cap_with_flag() {
        let model = SymmetricSpaceModel::flat(20.0);
        let config = fast_config();
        let rho = l2_curvature_radius(&model, 6.0, &config).unwrap();
        assert!(rho.capped);
        assert_relative_eq!(rho.value, 14.0, max_relative = 0.02);
        let nu = volume_radius(&model, 6.0, &config).unwrap();
        assert!(nu.capped, "nu = {:?}", nu);
    }

    #[test]
    fn cylinder_volume_radius_respects_total_volume_bound() {
        let model = SymmetricSpaceModel::round_cylinder(1.0, 1.0);
        let config = fast_config();
        let nu = volume_radius(&model, 0.3, &config).unwrap();
        let bound = (model.total_volume().unwrap() / (config.mu * OMEGA3)).powf(1.0 / 3.0);
        assert!(nu.value <= bound * 1.01, "nu = {} bound = {bound}", nu.value);
        // The compactness cap is what stops the search, so the value sits
        // near the bound.
        assert!(nu.value >= 0.5 * bound, "nu = {}", nu.value);
    }

    #[test]
    fn cylinder_curvature_radius_is_homogeneous() {
        let model = SymmetricSpaceModel::round_cylinder(1.0, 1.0);
        let config = fast_config();
        let r1 = l2_curvature_radius(&model, 0.1, &config).unwrap().value;
        let r2 = l2_curvature_radius(&model, 0.63, &config).unwrap().value;
        assert_relative_eq!(r1, r2, max_relative = 0.05);
        // The bound s^4 |ric|^2 <= c_o with |ric|^2 = 2 caps s near
        // (c_o/2)^(1/4).
        let rough = (config.c_o / 2.0).powf(0.25);
        assert!(r1 > 0.5 * rough && r1 < 3.0 * rough, "r1 = {r1}");
    }

    #[test]
    fn volume_radius_self_converges() {
        let model = SymmetricSpaceModel::schwarzschild(1.0, 120.0).unwrap();
        let x20 = schwarzschild_geodesic_coordinate(1.0, 20.0);
        let coarse = RadiusConfig {
            grid_n: 192,
            ..fast_config()
        };
        let fine = RadiusConfig {
            grid_n: 384,
            ..fast_config()
        };
        let nu_c = volume_radius(&model, x20, &coarse).unwrap().value;
        let nu_f = volume_radius(&model, x20, &fine).unwrap().value;
        assert!((nu_c - nu_f).abs() / nu_f < 0.1, "coarse {nu_c} fine {nu_f}");
    }

    #[test]
    fn lipschitz_property_of_the_radius() {
        let model = SymmetricSpaceModel::schwarzschild(1.0, 200.0).unwrap();
        let config = fast_config();
        let x = schwarzschild_geodesic_coordinate(1.0, 30.0);
        let rho_x = l2_curvature_radius(&model, x, &config).unwrap().value;
        for frac in [0.3, 0.6] {
            let y = x - frac * rho_x;
            let rho_y = l2_curvature_radius(&model, y, &config).unwrap().value;
            let slack = 0.05 * rho_x;
            assert!(
                rho_y >= (1.0 - frac) * rho_x - slack,
                "rho(y) = {rho_y}, needed {}",
                (1.0 - frac) * rho_x
            );
        }
    }

    #[test]
    fn radii_scale_like_distances() {
        let model = SymmetricSpaceModel::round_cylinder(1.0, 1.0);
        let config = fast_config();
        let tau = 2.0;
        let scaled = model.scaled(tau);
        let r1 = l2_curvature_radius(&model, 0.2, &config).unwrap().value;
        let r2 = l2_curvature_radius(&scaled, 0.4, &config).unwrap().value;
        assert_relative_eq!(r2, tau * r1, max_relative = 0.02);
        let n1 = volume_radius(&model, 0.2, &config).unwrap().value;
        let n2 = volume_radius(&scaled, 0.4, &config).unwrap().value;
        assert_relative_eq!(n2, tau * n1, max_relative = 0.02);
    }

    #[test]
    fn covering_bound_holds_on_the_cylinder() {
        let model = SymmetricSpaceModel::round_cylinder(1.0, 1.0);
        let rep = lemma_covering_bound(&model, &fast_config()).unwrap();
        assert!(rep.holds, "lhs {} rhs {}", rep.lhs, rep.rhs);
        assert!(rep.lhs > 0.0);
        // lhs = Int |z|^2 = (2/3) vol for the unit product.
        assert_relative_eq!(
            rep.lhs,
            2.0 / 3.0 * model.total_volume().unwrap(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn flat_is_never_buffered() {
        let model = SymmetricSpaceModel::flat(20.0);
        assert!(!buffered(&model, 8.0, 1e-2, &fast_config()).unwrap());
    }

    #[test]
    fn buffer_monotone_in_c() {
        let model = SymmetricSpaceModel::schwarzschild(1.0, 60.0).unwrap();
        let config = fast_config();
        let y = schwarzschild_geodesic_coordinate(1.0, 3.0);
        let rho = l2_curvature_radius(&model, y, &config).unwrap().value;
        let c_big = 1e-2;
        let v_big = buffer_value(&model, y, c_big, rho, &config).unwrap();
        for c_small in [5e-3, 1e-3] {
            let v_small = buffer_value(&model, y, c_small, rho, &config).unwrap();
            // The inner mass grows as the excluded shell shrinks while the
            // threshold c * c_o drops, so buffering persists downward in c.
            assert!(v_small >= v_big);
            if v_big >= c_big * config.c_o {
                assert!(v_small >= c_small * config.c_o);
            }
        }
    }

    #[test]
    fn near_horizon_point_is_buffered() {
        let model = SymmetricSpaceModel::schwarzschild(1.0, 60.0).unwrap();
        let y = schwarzschild_geodesic_coordinate(1.0, 3.0);
        assert!(buffered(&model, y, 1e-2, &fast_config()).unwrap());
    }

    #[test]
    fn cylinder_is_strongly_buffered_by_homogeneity() {
        let model = SymmetricSpaceModel::round_cylinder(1.0, 1.0);
        assert!(strongly_buffered(&model, 0.2, 0.5, &fast_config()).unwrap());
    }

    #[test]
    fn flat_descent_fails() {
        let model = SymmetricSpaceModel::flat(40.0);
        let out = descend(&model, 15.0, 1e-2, 0.35, &fast_config(), 8);
        assert!(matches!(out, Err(RadiusError::NoDescent { .. })));
    }
}
