//! Trigonometric interpolation of smooth periodic samples.
//!
//! A `TrigSeries` is the unique trigonometric interpolant through N uniform
//! samples on a period-L circle. Evaluation and term-wise differentiation are
//! spectrally accurate for smooth data, which is what the circle-reduced
//! operators downstream rely on.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct TrigSeries {
    period: f64,
    /// cosine coefficients, k = 0..=n/2
    a: Vec<f64>,
    /// sine coefficients, k = 0..=n/2 (b[0] and the Nyquist term are zero)
    b: Vec<f64>,
}

impl TrigSeries {
    /// Interpolant through `samples[j] = f(j * period / N)`. N must be even.
    pub fn from_samples(samples: &[f64], period: f64) -> Self {
        let n = samples.len();
        assert!(n >= 4 && n % 2 == 0, "need an even number of samples");
        let half = n / 2;
        let mut a = vec![0.0; half + 1];
        let mut b = vec![0.0; half + 1];
        for k in 0..=half {
            let mut ca = 0.0;
            let mut cb = 0.0;
            for (j, &s) in samples.iter().enumerate() {
                let ang = 2.0 * PI * (k * j) as f64 / n as f64;
                ca += s * ang.cos();
                cb += s * ang.sin();
            }
            let norm = if k == 0 || k == half { 1.0 } else { 2.0 };
            a[k] = norm * ca / n as f64;
            b[k] = norm * cb / n as f64;
        }
        b[0] = 0.0;
        b[half] = 0.0;
        TrigSeries { period, a, b }
    }

    /// Series with explicitly given coefficients (a[k] cos + b[k] sin,
    /// k = 0..=n/2).
    pub fn from_coeffs(period: f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len());
        TrigSeries { period, a, b }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Value of the m-th derivative at t.
    pub fn deriv(&self, t: f64, m: u32) -> f64 {
        let omega = 2.0 * PI / self.period;
        let mut s = if m == 0 { self.a[0] } else { 0.0 };
        for k in 1..self.a.len() {
            let kw = k as f64 * omega;
            let ang = kw * t;
            let (ck, sk) = (ang.cos(), ang.sin());
            // d/dt rotates (a cos + b sin) by 90 degrees and scales by k*omega.
            let (mut ak, mut bk) = (self.a[k], self.b[k]);
            for _ in 0..m {
                let (na, nb) = (bk * kw, -ak * kw);
                ak = na;
                bk = nb;
            }
            s += ak * ck + bk * sk;
        }
        s
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.deriv(t, 0)
    }

    /// Antiderivative with zero constant term evaluated at t, plus the linear
    /// mean drift: F(t) = mean * t + (periodic part).
    pub fn antiderivative(&self, t: f64) -> f64 {
        let omega = 2.0 * PI / self.period;
        let mut s = self.a[0] * t;
        for k in 1..self.a.len() {
            let kw = k as f64 * omega;
            let ang = kw * t;
            s += self.a[k] / kw * ang.sin() - self.b[k] / kw * (ang.cos() - 1.0);
        }
        s
    }

    pub fn mean(&self) -> f64 {
        self.a[0]
    }

    /// Copy with coefficients below `rel_tol` times the largest one zeroed.
    /// High-order derivatives amplify coefficient roundoff by powers of the
    /// mode frequency; for spectrally smooth data the tail below the noise
    /// floor carries no information and is best removed before applying a
    /// stiff operator.
    pub fn truncated(&self, rel_tol: f64) -> Self {
        let peak = self
            .a
            .iter()
            .chain(self.b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = rel_tol * peak;
        let filt = |v: &f64| if v.abs() < cut { 0.0 } else { *v };
        TrigSeries {
            period: self.period,
            a: self.a.iter().map(filt).collect(),
            b: self.b.iter().map(filt).collect(),
        }
    }
}

/// Spectral differentiation matrix of order `m` for N uniform nodes on a
/// period-L circle: (D_m f)_i = f^(m)(t_i) for the trigonometric interpolant.
pub fn diff_matrix(n: usize, period: f64, m: u32) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(n, n);
    // Column j is the m-th derivative of the cardinal function of node j,
    // sampled at all nodes. Cardinal coefficients are computed per column.
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let series = TrigSeries::from_samples(&e, period);
        e[j] = 0.0;
        let h = period / n as f64;
        for i in 0..n {
            d[(i, j)] = series.deriv(i as f64 * h, m);
        }
    }
    d
}
