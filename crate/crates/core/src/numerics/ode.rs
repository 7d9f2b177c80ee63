//! Adaptive embedded Runge-Kutta integration for scalar first-order ODEs.
//!
//! Dormand-Prince 5(4) with PI step control; accepted nodes are recorded so
//! callers can build dense interpolants afterwards.

/// One accepted node of the solution: (t, y, y').
pub type Node = (f64, f64, f64);

pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            max_step: 1e-2,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },
}

// Dormand-Prince coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate y' = f(t, y) from (t0, y0) to t_end, returning all accepted nodes.
pub fn integrate<F: Fn(f64, f64) -> f64>(
    f: F,
    t0: f64,
    y0: f64,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<Vec<Node>, OdeError> {
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, y);
    if !k0.is_finite() {
        return Err(OdeError::NonFiniteRhs { t });
    }
    let mut nodes = vec![(t, y, k0)];
    let mut h = opts.max_step.min((t_end - t0).abs() / 10.0).max(opts.min_step);
    let dir = (t_end - t0).signum();

    while (t_end - t) * dir > 1e-14 * (1.0 + t.abs()) {
        h = h.min((t_end - t).abs());
        let mut k = [0.0; 7];
        k[0] = k0;
        for s in 0..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                yi += h * dir * A[s][j] * kj;
            }
            k[s + 1] = f(t + dir * h * C[s], yi);
            if !k[s + 1].is_finite() {
                return Err(OdeError::NonFiniteRhs { t });
            }
        }
        let mut err = 0.0;
        for (j, kj) in k.iter().enumerate() {
            err += E[j] * kj;
        }
        let y5 = {
            let mut v = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                v += h * dir * A[5][j] * kj;
            }
            v
        };
        let scale = opts.abs_tol + opts.rel_tol * y.abs().max(y5.abs());
        let err_norm = (h * err).abs() / scale;

        if err_norm <= 1.0 {
            t += dir * h;
            y = y5;
            k0 = k[6];
            nodes.push((t, y, k0));
        }
        let factor = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * factor).min(opts.max_step);
        if h < opts.min_step {
            return Err(OdeError::StepUnderflow { t });
        }
    }
    Ok(nodes)
}
