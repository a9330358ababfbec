//! Scalar functions of one variable used as confining potentials `V(x)` and
//! interaction kernels `W(z)`, with closed-form first and second derivatives.

use std::sync::Arc;

use crate::numerics::CubicSpline;

#[derive(Clone)]
pub enum ScalarFn {
    Zero,
    /// `k (x − a)² / 2`.
    Quadratic { center: f64, curvature: f64 },
    /// `k x² / 2 + ε sin x`.
    SinePerturbed { curvature: f64, amplitude: f64 },
    /// `(x² − 1)²`.
    DoubleWell,
    /// `|z|³ / 3`.
    CubicAbs,
    /// `A exp(−x² / 2w²)`; concave near the origin for `A > 0`.
    Bump { amplitude: f64, width: f64 },
    /// Natural cubic spline through samples.
    Sampled(Arc<CubicSpline>),
}

impl std::fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarFn::Zero => write!(f, "Zero"),
            ScalarFn::Quadratic { center, curvature } => write!(f, "Quadratic({curvature} (x - {center})^2 / 2)"),
            ScalarFn::SinePerturbed { curvature, amplitude } => {
                write!(f, "SinePerturbed({curvature} x^2 / 2 + {amplitude} sin x)")
            }
            ScalarFn::DoubleWell => write!(f, "DoubleWell"),
            ScalarFn::CubicAbs => write!(f, "CubicAbs"),
            ScalarFn::Bump { amplitude, width } => write!(f, "Bump({amplitude}, {width})"),
            ScalarFn::Sampled(s) => write!(f, "Sampled{:?}", s.domain()),
        }
    }
}

impl ScalarFn {
    pub fn quadratic(curvature: f64) -> Self {
        ScalarFn::Quadratic { center: 0.0, curvature }
    }

    pub fn sampled(xs: Vec<f64>, ys: Vec<f64>) -> crate::Result<Self> {
        Ok(ScalarFn::Sampled(Arc::new(CubicSpline::new(xs, ys)?)))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Quadratic { center, curvature } => 0.5 * curvature * (x - center) * (x - center),
            ScalarFn::SinePerturbed { curvature, amplitude } => 0.5 * curvature * x * x + amplitude * x.sin(),
            ScalarFn::DoubleWell => (x * x - 1.0) * (x * x - 1.0),
            ScalarFn::CubicAbs => x.abs().powi(3) / 3.0,
            ScalarFn::Bump { amplitude, width } => amplitude * (-0.5 * x * x / (width * width)).exp(),
            ScalarFn::Sampled(s) => s.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Quadratic { center, curvature } => curvature * (x - center),
            ScalarFn::SinePerturbed { curvature, amplitude } => curvature * x + amplitude * x.cos(),
            ScalarFn::DoubleWell => 4.0 * x * (x * x - 1.0),
            ScalarFn::CubicAbs => x * x.abs(),
            ScalarFn::Bump { amplitude, width } => {
                let w2 = width * width;
                -amplitude * x / w2 * (-0.5 * x * x / w2).exp()
            }
            ScalarFn::Sampled(s) => s.eval_with_derivative(x).1,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Quadratic { curvature, .. } => *curvature,
            ScalarFn::SinePerturbed { curvature, amplitude } => curvature - amplitude * x.sin(),
            ScalarFn::DoubleWell => 12.0 * x * x - 4.0,
            ScalarFn::CubicAbs => 2.0 * x.abs(),
            ScalarFn::Bump { amplitude, width } => {
                let w2 = width * width;
                amplitude * (x * x / w2 - 1.0) / w2 * (-0.5 * x * x / w2).exp()
            }
            ScalarFn::Sampled(s) => s.second_derivative(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFn::Zero)
    }
}
