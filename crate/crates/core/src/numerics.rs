//! Small numerical building blocks shared by the solvers: tridiagonal
//! solves, bracketed root finding, scalar minimization, least-squares
//! slopes and a natural cubic spline.

use crate::error::{invalid, Error, Result};

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` is ignored),
/// `upper[i]` multiplies `x[i+1]` (`upper[n-1]` is ignored).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(invalid("tridiagonal bands must have equal length"));
    }
    if n == 0 {
        return Ok(());
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(invalid("singular tridiagonal system"));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == 0.0 {
            return Err(invalid("singular tridiagonal system"));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// Bisection on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of opposite sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(invalid("root is not bracketed"));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Ordinary least-squares fit `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateFit("fewer than two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 || !sxx.is_finite() {
        return Err(Error::DegenerateFit("abscissae have zero spread".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Least-squares parabola `y = a x² + b x + c`, returned as `(a, b, c)`.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::DegenerateFit("fewer than three points".into()));
    }
    // centre and scale the abscissae for conditioning
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sx = x.iter().map(|v| (v - mx).abs()).fold(0.0, f64::max);
    if sx == 0.0 || !sx.is_finite() {
        return Err(Error::DegenerateFit("abscissae have zero spread".into()));
    }
    let mut m = [[0.0f64; 4]; 3];
    for (xi, yi) in x.iter().zip(y) {
        let u = (xi - mx) / sx;
        let basis = [u * u, u, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            m[r][3] += basis[r] * yi;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        m.swap(col, piv);
        if m[col][col].abs() < 1e-14 {
            return Err(Error::DegenerateFit("singular normal equations".into()));
        }
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let (p, q, r) = (m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]);
    // expand p u² + q u + r with u = (x − mx)/sx
    let a = p / (sx * sx);
    let b = q / sx - 2.0 * p * mx / (sx * sx);
    let c = r - q * mx / sx + p * mx * mx / (sx * sx);
    Ok((a, b, c))
}

/// Piecewise-linear interpolation on increasing abscissae, `None` outside.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(ys[0]);
    }
    let j = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    Some(ys[j] + t * (ys[j + 1] - ys[j]))
}

/// Natural cubic spline through `(xs, ys)`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>, // second derivatives at knots
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::SizeMismatch { left: n, right: ys.len() });
        }
        if n < 3 {
            return Err(invalid("cubic spline needs at least three knots"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("spline knots must be strictly increasing"));
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            lower[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
        Ok(Self { xs, ys, m: rhs })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1
    }

    /// Value and first derivative at `x` (cubic extrapolation outside the knots).
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let j = self.segment(x);
        let h = self.xs[j + 1] - self.xs[j];
        let a = (self.xs[j + 1] - x) / h;
        let b = (x - self.xs[j]) / h;
        let (m0, m1) = (self.m[j], self.m[j + 1]);
        let value = a * self.ys[j]
            + b * self.ys[j + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let slope = (self.ys[j + 1] - self.ys[j]) / h
            - (3.0 * a * a - 1.0) * h * m0 / 6.0
            + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        (value, slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Second derivative, piecewise linear between knots.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let j = self.segment(x);
        let h = self.xs[j + 1] - self.xs[j];
        let b = ((x - self.xs[j]) / h).clamp(0.0, 1.0);
        (1.0 - b) * self.m[j] + b * self.m[j + 1]
    }
}

/// Measured convergence orders `log2(e_k / e_{k+1})` along a halving ladder.
pub fn convergence_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
