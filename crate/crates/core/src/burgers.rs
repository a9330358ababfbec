//! Inviscid Burgers equation `u_t + u u_x = 0` solved by characteristics,
//! gradient catastrophe times, and the odd-power similarity profiles
//! `y = −U − C U^{1+1/α}`.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::numerics::{bisect, golden_min, linear_fit, CubicSpline};

/// Initial velocity profile with closed-form derivative.
#[derive(Debug, Clone)]
pub enum Profile {
    /// `−A sin x`.
    NegativeSine { amplitude: f64 },
    /// `k x`.
    Linear { slope: f64 },
    /// `A exp(−1/(1 − (x/w)²))` on `|x| < w`, zero outside.
    Bump { amplitude: f64, width: f64 },
    /// Cubic spline through samples.
    Sampled(Arc<CubicSpline>),
}

impl Profile {
    pub fn sampled(xs: Vec<f64>, us: Vec<f64>) -> Result<Self> {
        Ok(Profile::Sampled(Arc::new(CubicSpline::new(xs, us)?)))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Profile::NegativeSine { amplitude } => -amplitude * x.sin(),
            Profile::Linear { slope } => slope * x,
            Profile::Bump { amplitude, width } => {
                let s = x / width;
                if s.abs() < 1.0 {
                    amplitude * (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            Profile::Sampled(sp) => sp.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Profile::NegativeSine { amplitude } => -amplitude * x.cos(),
            Profile::Linear { slope } => *slope,
            Profile::Bump { amplitude, width } => {
                let s = x / width;
                if s.abs() < 1.0 {
                    let d = 1.0 - s * s;
                    -amplitude * (-1.0 / d).exp() * 2.0 * s / (d * d * width)
                } else {
                    0.0
                }
            }
            Profile::Sampled(sp) => sp.eval_with_derivative(x).1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BurgersProblem {
    profile: Profile,
    lo: f64,
    hi: f64,
}

const SHOCK_SAMPLES: usize = 20_001;

impl BurgersProblem {
    pub fn new(profile: Profile, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("empty spatial domain"));
        }
        let h = (hi - lo) / (SHOCK_SAMPLES - 1) as f64;
        for i in 0..SHOCK_SAMPLES {
            let x = lo + i as f64 * h;
            if !profile.value(x).is_finite() || !profile.derivative(x).is_finite() {
                return Err(invalid(format!("initial profile is not C¹ at x = {x}")));
            }
        }
        Ok(Self { profile, lo, hi })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// First gradient catastrophe: `T = min(−1/u₀')`, attained at `x_m`, with
/// the shock forming at `x0 = x_m + T u₀(x_m)`. `T = ∞` (and no points) when
/// `u₀` is nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockTime {
    pub time: f64,
    pub x_m: Option<f64>,
    pub x0: Option<f64>,
}

impl ShockTime {
    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
    }
}

/// Dense sampling of `u₀'` followed by golden-section refinement around
/// the most negative sample.
pub fn shock_time(problem: &BurgersProblem) -> ShockTime {
    let (lo, hi) = problem.domain();
    let p = &problem.profile;
    let h = (hi - lo) / (SHOCK_SAMPLES - 1) as f64;
    let (j, dmin) = (0..SHOCK_SAMPLES)
        .map(|i| (i, p.derivative(lo + i as f64 * h)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    if !(dmin < 0.0) {
        return ShockTime { time: f64::INFINITY, x_m: None, x0: None };
    }
    let a = (lo + (j as f64 - 1.0) * h).max(lo);
    let b = (lo + (j as f64 + 1.0) * h).min(hi);
    let xr = golden_min(|x| p.derivative(x), a, b, 1e-14 * (1.0 + b.abs()));
    let (x_m, d) = if p.derivative(xr) <= dmin { (xr, p.derivative(xr)) } else { (lo + j as f64 * h, dmin) };
    let time = -1.0 / d;
    ShockTime { time, x_m: Some(x_m), x0: Some(x_m + time * p.value(x_m)) }
}

/// `u(z, t) = u₀(x)` with `z = x + t u₀(x)`, valid for `0 ≤ t < T`.
pub fn characteristic_eval(problem: &BurgersProblem, z: f64, t: f64) -> Result<f64> {
    let shock = shock_time(problem);
    characteristic_eval_with(problem, &shock, z, t)
}

/// As [`characteristic_eval`] with a precomputed shock time.
pub fn characteristic_eval_with(problem: &BurgersProblem, shock: &ShockTime, z: f64, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(invalid("time must be nonnegative"));
    }
    if t >= shock.time {
        return Err(Error::PastSingularity { t, singular: shock.time });
    }
    if t == 0.0 {
        return Ok(problem.profile.value(z));
    }
    let p = &problem.profile;
    let g = |x: f64| x + t * p.value(x) - z;
    let mut d = 1.0;
    while !(g(z - d) <= 0.0 && g(z + d) >= 0.0) {
        d *= 2.0;
        if d > 1e12 {
            return Err(invalid("characteristic foot could not be bracketed"));
        }
    }
    let x = bisect(g, z - d, z + d, 0.0)?;
    Ok(p.value(x))
}

/// `u_x(z, t)` along the characteristic from `x`: `u₀'(x) / (1 + t u₀'(x))`.
fn gradient_at_foot(p: &Profile, x: f64, t: f64) -> f64 {
    let d = p.derivative(x);
    d / (1.0 + t * d)
}

/// `α_i = 1/(2i + 2)` and the paired spatial exponent `β_i = 1 + α_i`.
pub fn selfsimilar_exponents(i: u32) -> (f64, f64) {
    let alpha = 1.0 / (2.0 * i as f64 + 2.0);
    (alpha, 1.0 + alpha)
}

/// Unique real `U` with `y = −U − C U^{1+1/α}`; `1 + 1/α` must be an odd
/// integer and `C > 0`.
pub fn profile_solve(y: f64, alpha: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid("C must be positive"));
    }
    let p = 1.0 + 1.0 / alpha;
    let pi = p.round();
    if !(alpha > 0.0) || (p - pi).abs() > 1e-9 || (pi as i64) % 2 != 1 {
        return Err(invalid(format!("1 + 1/alpha = {p} is not an odd integer")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let n = pi as i32;
    let f = |u: f64| u + c * u.powi(n) + y;
    let bound = y.abs().min((y.abs() / c).powf(1.0 / p)) * (1.0 + 1e-12) + 1e-300;
    let (lo, hi) = if y > 0.0 { (-bound, 0.0) } else { (0.0, bound) };
    bisect(f, lo, hi, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
}

/// `sup |u_x|` at time `t < T` from the characteristic formula.
pub fn sup_gradient(problem: &BurgersProblem, shock: &ShockTime, t: f64) -> Result<f64> {
    if t >= shock.time {
        return Err(Error::PastSingularity { t, singular: shock.time });
    }
    let (lo, hi) = problem.domain();
    let h = (hi - lo) / (SHOCK_SAMPLES - 1) as f64;
    let mut sup = (0..SHOCK_SAMPLES)
        .map(|i| gradient_at_foot(&problem.profile, lo + i as f64 * h, t).abs())
        .fold(0.0, f64::max);
    if let Some(xm) = shock.x_m {
        sup = sup.max(gradient_at_foot(&problem.profile, xm, t).abs());
    }
    Ok(sup)
}

/// Least-squares slope of `log sup|u_x|` against `log(T − t)`.
pub fn blowup_rate_fit(problem: &BurgersProblem, times: &[f64]) -> Result<RateFit> {
    let shock = shock_time(problem);
    if !shock.is_finite() {
        return Err(Error::NoBlowup);
    }
    if times.len() < 2 {
        return Err(Error::DegenerateFit("need at least two sample times".into()));
    }
    let mut x = Vec::with_capacity(times.len());
    let mut y = Vec::with_capacity(times.len());
    for &t in times {
        x.push((shock.time - t).ln());
        y.push(sup_gradient(problem, &shock, t)?.ln());
    }
    let (slope, intercept) = linear_fit(&x, &y)?;
    Ok(RateFit { slope, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn neg_sin() -> BurgersProblem {
        BurgersProblem::new(Profile::NegativeSine { amplitude: 1.0 }, -PI, PI).unwrap()
    }

    #[test]
    fn shock_examples() {
        let s = shock_time(&neg_sin());
        assert!((s.time - 1.0).abs() < 1e-12);
        assert!(s.x_m.unwrap().abs() < 1e-6 && s.x0.unwrap().abs() < 1e-6);
        let lin = BurgersProblem::new(Profile::Linear { slope: -1.0 }, -2.0, 2.0).unwrap();
        assert_relative_eq!(shock_time(&lin).time, 1.0);
        let expansive = BurgersProblem::new(Profile::Linear { slope: 1.0 }, -2.0, 2.0).unwrap();
        let s = shock_time(&expansive);
        assert!(s.time.is_infinite() && s.x_m.is_none());
        assert!(matches!(blowup_rate_fit(&expansive, &[0.1, 0.2]), Err(Error::NoBlowup)));
    }

    #[test]
    fn characteristic_examples() {
        let lin = BurgersProblem::new(Profile::Linear { slope: -1.0 }, -2.0, 2.0).unwrap();
        assert_relative_eq!(characteristic_eval(&lin, 1.0, 0.5).unwrap(), -2.0, epsilon = 1e-12);
        let p = neg_sin();
        assert_eq!(characteristic_eval(&p, 0.7, 0.0).unwrap(), -(0.7f64).sin());
        assert!(matches!(characteristic_eval(&p, 0.1, 1.0), Err(Error::PastSingularity { .. })));
    }

    #[test]
    fn pde_residual_is_small() {
        let p = neg_sin();
        let s = shock_time(&p);
        let h = 1e-4;
        for &(z, t) in &[(0.3, 0.2), (-1.1, 0.5), (2.0, 0.8), (0.05, 0.85)] {
            let u = characteristic_eval_with(&p, &s, z, t).unwrap();
            let ut = (characteristic_eval_with(&p, &s, z, t + h).unwrap() - characteristic_eval_with(&p, &s, z, t - h).unwrap()) / (2.0 * h);
            let ux = (characteristic_eval_with(&p, &s, z + h, t).unwrap() - characteristic_eval_with(&p, &s, z - h, t).unwrap()) / (2.0 * h);
            assert!((ut + u * ux).abs() < 1e-5 * (1.0 + ux.abs()), "({z}, {t})");
        }
    }

    #[test]
    fn compact_data_conserves_integral() {
        let p = BurgersProblem::new(Profile::Bump { amplitude: 1.0, width: 1.0 }, -3.0, 3.0).unwrap();
        let s = shock_time(&p);
        let integral = |t: f64| {
            let n = 6000;
            let h = 8.0 / n as f64;
            (0..n).map(|i| characteristic_eval_with(&p, &s, -4.0 + (i as f64 + 0.5) * h, t).unwrap()).sum::<f64>() * h
        };
        let i0 = integral(0.0);
        for t in [0.3 * s.time, 0.8 * s.time] {
            assert!((integral(t) - i0).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn exponent_family() {
        assert_eq!(selfsimilar_exponents(0), (0.5, 1.5));
        assert_eq!(selfsimilar_exponents(1).0, 0.25);
    }

    #[test]
    fn profile_examples() {
        assert_eq!(profile_solve(0.0, 0.5, 1.0).unwrap(), 0.0);
        assert_relative_eq!(profile_solve(-2.0, 0.5, 1.0).unwrap(), 1.0, epsilon = 1e-13);
        assert!(profile_solve(1.0, 0.3, 1.0).is_err());
        assert!(profile_solve(1.0, 0.5, 0.0).is_err());
        for &(a, c) in &[(0.5, 1.0), (0.25, 2.5), (1.0 / 6.0, 0.3)] {
            for &y in &[-1e4, -37.0, -0.5, 1e-3, 2.0, 900.0] {
                let u = profile_solve(y, a, c).unwrap();
                let p = (1.0 + 1.0 / a).round() as i32;
                assert!((y + u + c * u.powi(p)).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rate_examples() {
        let lin = BurgersProblem::new(Profile::Linear { slope: -1.0 }, -2.0, 2.0).unwrap();
        let times = [0.9, 0.99, 0.999];
        assert!((blowup_rate_fit(&lin, &times).unwrap().slope + 1.0).abs() < 1e-9);
        assert!((blowup_rate_fit(&neg_sin(), &times).unwrap().slope + 1.0).abs() < 0.02);
    }
}
