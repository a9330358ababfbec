//! Scalar functionals of a radial Keller-Segel state and the inequality
//! checks built on them.
//!
//! All integrals use the midpoint rule on the cell-centred radial grid, with
//! area element `2π r dr`. The convention `0 log 0 = 0` holds throughout.
//!
//! Gauge: the chemical potential `c` is normalised by `c(R) = 0` on the
//! truncated disc. For a density negligible beyond `R` the free-space gauge
//! (`G = −log|x| / 2π`) differs by the constant `(M/2π) log R`, hence
//! `E_free = E_trunc + M² log R / 4π`. Both values are reported.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{cumulative_from_density, RadialDensity};
use crate::stationary::fit_bubble;

/// Snapshot of the scalar diagnostics of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass: f64,
    pub second_moment: f64,
    pub entropy: f64,
    /// `E_KS` in the `c(R) = 0` gauge.
    pub free_energy: f64,
    /// `E_KS` shifted to the free-space gauge.
    pub free_energy_free_space: f64,
    pub sup_density: f64,
    pub bubble_scale: Option<f64>,
    pub loghls_deficit: f64,
    pub gns_deficit: f64,
    /// Density in the outermost cell, for boundary-contamination checks.
    pub edge_density: f64,
}

impl DiagnosticRecord {
    pub fn of(t: f64, rho: &RadialDensity) -> Self {
        let mass = mass(rho);
        let fe = free_energy_ks(rho);
        let sqrt_rho: Vec<f64> = rho.values().iter().map(|v| v.sqrt()).collect();
        Self {
            t,
            mass,
            second_moment: second_moment(rho),
            entropy: entropy(rho),
            free_energy: fe.truncated,
            free_energy_free_space: fe.free_space,
            sup_density: rho.sup(),
            bubble_scale: fit_bubble(rho).ok().map(|f| f.lambda),
            loghls_deficit: if mass > 0.0 { loghls_deficit(rho).unwrap_or(f64::NAN) } else { 0.0 },
            gns_deficit: gns_deficit(rho.grid(), &sqrt_rho, DEFAULT_GNS_CONSTANT),
            edge_density: *rho.values().last().unwrap_or(&0.0),
        }
    }
}

fn radial_integral(rho: &RadialDensity, f: impl Fn(f64, f64) -> f64) -> f64 {
    let g = rho.grid();
    let h = g.spacing();
    rho.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = g.node(i);
            2.0 * PI * r * f(r, v) * h
        })
        .sum()
}

/// `M = ∫ ρ`.
pub fn mass(rho: &RadialDensity) -> f64 {
    rho.mass()
}

/// `M₂ = ∫ |x|² ρ`.
pub fn second_moment(rho: &RadialDensity) -> f64 {
    radial_integral(rho, |r, v| r * r * v)
}

/// Predicted `dM₂/dt = 4M (1 − M / 8π)` in free space.
pub fn second_moment_rate(mass: f64) -> f64 {
    4.0 * mass * (1.0 - mass / (8.0 * PI))
}

/// `∫ ρ log ρ`.
pub fn entropy(rho: &RadialDensity) -> f64 {
    radial_integral(rho, |_, v| if v > 0.0 { v * v.ln() } else { 0.0 })
}

/// `E_KS` in both gauges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub truncated: f64,
    pub free_space: f64,
}

/// Chemical potential at the cell centres, `c(r) = ∫_r^R m(s)/(2π s) ds`,
/// so that `c_r = −m/(2π r)` and `c(R) = 0`.
pub fn chemical_potential(rho: &RadialDensity) -> Vec<f64> {
    let m = cumulative_from_density(rho);
    let g = rho.grid();
    let n = g.node_count();
    let h = g.spacing();
    let mv = m.values();
    // c at edges, integrating inward with the midpoint rule on each cell
    let mut c_edge = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let m_mid = 0.5 * (mv[i] + mv[i + 1]);
        c_edge[i] = c_edge[i + 1] + h * m_mid / (2.0 * PI * g.node(i));
    }
    (0..n).map(|i| 0.5 * (c_edge[i] + c_edge[i + 1])).collect()
}

/// `E_KS[ρ] = ∫ ρ log ρ − ½ ∫ ρ c`.
pub fn free_energy_ks(rho: &RadialDensity) -> FreeEnergy {
    let c = chemical_potential(rho);
    let g = rho.grid();
    let h = g.spacing();
    let interaction: f64 = rho
        .values()
        .iter()
        .zip(&c)
        .enumerate()
        .map(|(i, (v, ci))| 2.0 * PI * g.node(i) * v * ci * h)
        .sum();
    let truncated = entropy(rho) - 0.5 * interaction;
    let m = rho.mass();
    FreeEnergy { truncated, free_space: truncated + m * m * g.radius().ln() / (4.0 * PI) }
}

/// `C(M) = M (1 + log π − log M)`.
pub fn loghls_constant(mass: f64) -> f64 {
    mass * (1.0 + PI.ln() - mass.ln())
}

/// `∬ ρ(x) ρ(y) log|x − y| dx dy` on the radial grid.
///
/// The angular average of `log|x − y|` is `log max(|x|, |y|)`, so the double
/// sum `Σ_ij w_i w_j log max(r_i, r_j)` (with `w_i = 2π r_i ρ_i h`) collapses
/// to one pass with running partial masses.
pub fn log_interaction(rho: &RadialDensity) -> f64 {
    let g = rho.grid();
    let h = g.spacing();
    let mut inner = 0.0;
    let mut total = 0.0;
    for (i, &v) in rho.values().iter().enumerate() {
        let r = g.node(i);
        let w = 2.0 * PI * r * v * h;
        total += w * r.ln() * (w + 2.0 * inner);
        inner += w;
    }
    total
}

/// Log-HLS deficit `∫ f log f + (2/M) ∬ f f log|x−y| + C(M) ≥ 0`.
pub fn loghls_deficit(rho: &RadialDensity) -> Result<f64> {
    let m = rho.mass();
    if !(m > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(entropy(rho) + 2.0 / m * log_interaction(rho) + loghls_constant(m))
}

/// The log-HLS minimiser `f_λ(x) = (M/π) λ / (λ + |x|²)²`.
pub fn loghls_minimiser(mass: f64, lambda: f64, r: f64) -> f64 {
    let s = lambda + r * r;
    mass / PI * lambda / (s * s)
}

/// Mass threshold below which the entropy is non-increasing, `1.862 × 4π`.
pub const ENTROPY_MONOTONE_MASS: f64 = 1.862 * 4.0 * PI;

/// GNS constant for `p = 4` implied by `M* = 4 C⁻²` at `M* = 1.862 × 4π`.
pub const DEFAULT_GNS_CONSTANT: f64 = 0.413_461_642_279_954_6;

/// `M* = 4 C⁻²` for a given GNS constant.
pub fn gns_mass_threshold(constant: f64) -> f64 {
    4.0 / (constant * constant)
}

/// Discrete `‖∇u‖₂` on the radial grid, gradients at interior edges.
fn gradient_norm_sq(grid: &crate::fields::RadialGrid, u: &[f64]) -> f64 {
    let h = grid.spacing();
    (1..grid.node_count())
        .map(|i| {
            let d = (u[i] - u[i - 1]) / h;
            2.0 * PI * grid.edge(i) * d * d * h
        })
        .sum()
}

/// GNS deficit `C ‖∇u‖₂ ‖u‖₂ − ‖u‖₄²` for a radial `u` at the cell centres.
pub fn gns_deficit(grid: &crate::fields::RadialGrid, u: &[f64], constant: f64) -> f64 {
    let h = grid.spacing();
    let mut l2 = 0.0;
    let mut l4 = 0.0;
    for (i, &v) in u.iter().enumerate() {
        let w = 2.0 * PI * grid.node(i) * h;
        l2 += w * v * v;
        l4 += w * v.powi(4);
    }
    constant * gradient_norm_sq(grid, u).sqrt() * l2.sqrt() - l4.sqrt()
}

/// The two terms of `d/dt ∫ρ log ρ = −4 ∫|∇√ρ|² + ∫ρ²`.
pub fn entropy_dissipation_balance(rho: &RadialDensity) -> (f64, f64) {
    let sqrt_rho: Vec<f64> = rho.values().iter().map(|v| v.sqrt()).collect();
    let dissipation = -4.0 * gradient_norm_sq(rho.grid(), &sqrt_rho);
    let production = radial_integral(rho, |_, v| v * v);
    (dissipation, production)
}

/// Uniform-in-time entropy bound for subcritical mass,
/// `(8π E_KS[ρ₀] − M C(M)) / (8π − M)` with `E_KS` in the free-space gauge.
pub fn subcritical_entropy_bound(initial_free_energy: f64, mass: f64) -> Option<f64> {
    (mass < 8.0 * PI)
        .then(|| (8.0 * PI * initial_free_energy - mass * loghls_constant(mass)) / (8.0 * PI - mass))
}

/// Comparison of the measured `dM₂/dt` with the free-space law.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentRateCheck {
    pub predicted: f64,
    /// Centred-difference rates at the interior records.
    pub measured: Vec<f64>,
    /// `max |measured − predicted| / |predicted|` (or absolute when the
    /// prediction vanishes).
    pub max_deviation: f64,
    pub boundary_contaminated: bool,
}

/// Relative boundary density above which a trajectory no longer counts as free space.
pub const BOUNDARY_CONTAMINATION: f64 = 1e-10;

/// Centred finite differences of `M₂(t)` against `4M(1 − M/8π)`.
pub fn second_moment_rate_check(records: &[DiagnosticRecord]) -> Result<SecondMomentRateCheck> {
    if records.len() < 3 {
        return Err(Error::DegenerateFit("need at least three records".into()));
    }
    let predicted = second_moment_rate(records[0].mass);
    let measured: Vec<f64> = records
        .windows(3)
        .map(|w| (w[2].second_moment - w[0].second_moment) / (w[2].t - w[0].t))
        .collect();
    let scale = if predicted.abs() > 1e-12 { predicted.abs() } else { 1.0 };
    let max_deviation = measured.iter().map(|m| (m - predicted).abs() / scale).fold(0.0, f64::max);
    let boundary_contaminated =
        records.iter().any(|r| r.edge_density >= BOUNDARY_CONTAMINATION * r.sup_density);
    Ok(SecondMomentRateCheck { predicted, measured, max_deviation, boundary_contaminated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::RadialGrid;
    use crate::stationary::{bubble_density, BubbleParams};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn gaussian(mass: f64, width: f64) -> impl Fn(f64) -> f64 {
        move |r| mass / (PI * width * width) * (-(r * r) / (width * width)).exp()
    }

    #[test]
    fn mass_cases() {
        let g = RadialGrid::new(1000, 100.0).unwrap();
        assert_eq!(mass(&RadialDensity::zeros(g)), 0.0);
        let b = RadialDensity::from_fn(g, |r| bubble_density(BubbleParams::new(1.0).unwrap(), r)).unwrap();
        assert!((mass(&b) / (8.0 * PI) - 1.0).abs() < 5e-3);
        let g2 = RadialGrid::new(17, 2.5).unwrap();
        let one = RadialDensity::from_fn(g2, |_| 1.0).unwrap();
        assert_relative_eq!(mass(&one), PI * 2.5 * 2.5, max_relative = 1e-14);
    }

    #[test]
    fn second_moment_cases() {
        let g = RadialGrid::new(2000, 1.0).unwrap();
        assert_eq!(second_moment(&RadialDensity::zeros(g)), 0.0);
        let one = RadialDensity::from_fn(g, |_| 1.0).unwrap();
        assert!((second_moment(&one) - PI / 2.0).abs() < 1e-6);
        // bubble tail 2π r³ · 8/r⁴ = 16π / r, so M₂(100) − M₂(10) ≈ 16π log 10
        let p = BubbleParams::new(1.0).unwrap();
        let m2 = |radius: f64| {
            let g = RadialGrid::new((radius * 100.0) as usize, radius).unwrap();
            second_moment(&RadialDensity::from_fn(g, |r| bubble_density(p, r)).unwrap())
        };
        let diff = m2(100.0) - m2(10.0);
        assert!((diff / (16.0 * PI * 10f64.ln()) - 1.0).abs() < 0.01, "{diff}");
    }

    #[test]
    fn predicted_rates() {
        assert_eq!(second_moment_rate(8.0 * PI), 0.0);
        assert_relative_eq!(second_moment_rate(4.0 * PI), 8.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(second_moment_rate(16.0 * PI), -64.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn entropy_of_uniform_disc() {
        let radius = 3.0;
        let m = 5.0;
        let g = RadialGrid::new(300, radius).unwrap();
        let c = m / (PI * radius * radius);
        let rho = RadialDensity::from_fn(g, |_| c).unwrap();
        assert_relative_eq!(entropy(&rho), m * (m / (PI * radius * radius)).ln(), max_relative = 1e-12);
        assert_eq!(entropy(&RadialDensity::zeros(g)), 0.0);
    }

    #[test]
    fn free_energy_scaling_identity() {
        let g = RadialGrid::new(8000, 40.0).unwrap();
        for m in [4.0 * PI, 8.0 * PI, 12.0 * PI] {
            let base = gaussian(m, 1.0);
            let rho = RadialDensity::from_fn(g, &base).unwrap();
            let e0 = free_energy_ks(&rho).truncated;
            for lambda in [0.5, 2.0] {
                let scaled = RadialDensity::scaled_from_fn(g, lambda, &base).unwrap();
                let e1 = free_energy_ks(&scaled).truncated;
                let expected = -2.0 * m * (1.0 - m / (8.0 * PI)) * f64::ln(lambda);
                assert!((e1 - e0 - expected).abs() < 1e-3 * m, "M={m} λ={lambda}: {} vs {expected}", e1 - e0);
            }
        }
    }

    #[test]
    fn loghls_constant_at_critical_mass() {
        let m = 8.0 * PI;
        assert_relative_eq!(loghls_constant(m), 8.0 * PI * (1.0 - 8f64.ln()), max_relative = 1e-14);
    }

    #[test]
    fn log_interaction_matches_dense_double_sum() {
        // independent O(n²) evaluation with the angular-average kernel
        let g = RadialGrid::new(300, 6.0).unwrap();
        let rho = RadialDensity::from_fn(g, |r| (-(r - 1.0).powi(2)).exp() + 0.1).unwrap();
        let h = g.spacing();
        let w: Vec<f64> = (0..300).map(|i| 2.0 * PI * g.node(i) * rho.values()[i] * h).collect();
        let mut dense = 0.0;
        for i in 0..300 {
            for j in 0..300 {
                dense += w[i] * w[j] * g.node(i).max(g.node(j)).ln();
            }
        }
        assert_relative_eq!(log_interaction(&rho), dense, max_relative = 1e-12);
    }

    #[test]
    fn loghls_minimiser_has_zero_deficit() {
        for (m, lambda) in [(1.0, 1.0), (8.0 * PI, 0.5), (3.0, 2.0)] {
            let g = RadialGrid::new(40_000, 400.0).unwrap();
            let rho = RadialDensity::from_fn(g, |r| loghls_minimiser(m, lambda, r)).unwrap();
            let d = loghls_deficit(&rho).unwrap();
            assert!(d.abs() <= 1e-3 * m, "M={m}: {d}");
        }
    }

    #[test]
    fn loghls_gaussian_positive_and_random_nonnegative() {
        let g = RadialGrid::new(4000, 20.0).unwrap();
        let rho = RadialDensity::from_fn(g, gaussian(8.0 * PI, 1.0)).unwrap();
        assert!(loghls_deficit(&rho).unwrap() > 1e-2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: f64 = rng.random_range(0.3..2.0);
            let b: f64 = rng.random_range(0.0..3.0);
            let rho = RadialDensity::from_fn(g, |r| (-(r - b).powi(2) / (a * a)).exp()).unwrap();
            let m = rho.mass();
            assert!(loghls_deficit(&rho).unwrap() >= -1e-3 * m);
        }
        assert_eq!(loghls_deficit(&RadialDensity::zeros(g)), Err(Error::ZeroMass));
    }

    #[test]
    fn gns_cases() {
        let g = RadialGrid::new(4000, 12.0).unwrap();
        assert_eq!(gns_deficit(&g, &vec![0.0; 4000], DEFAULT_GNS_CONSTANT), 0.0);
        assert_relative_eq!(gns_mass_threshold(DEFAULT_GNS_CONSTANT), ENTROPY_MONOTONE_MASS, max_relative = 1e-12);
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
        // closed forms: ‖u‖₂² = ‖∇u‖₂² = π, ‖u‖₄⁴ = π/2
        let expected = DEFAULT_GNS_CONSTANT * PI - (PI / 2.0).sqrt();
        let d = gns_deficit(&g, &u, DEFAULT_GNS_CONSTANT);
        assert!(d >= 0.0);
        assert!((d - expected).abs() < 1e-4);
    }

    #[test]
    fn dissipation_balance_cases() {
        let g = RadialGrid::new(100, 10.0).unwrap();
        let flat = RadialDensity::from_fn(g, |_| 0.3).unwrap();
        let (d, p) = entropy_dissipation_balance(&flat);
        assert_eq!(d, 0.0);
        assert_relative_eq!(p, 0.09 * PI * 100.0, max_relative = 1e-12);

        // bubble: −4∫|∇√U|² = −64π/3 = −∫U², up to tails and O(h²)
        let g = RadialGrid::new(40_000, 200.0).unwrap();
        let b = RadialDensity::from_fn(g, |r| bubble_density(BubbleParams::new(1.0).unwrap(), r)).unwrap();
        let (d, p) = entropy_dissipation_balance(&b);
        assert!((p - 64.0 * PI / 3.0).abs() < 1e-3);
        assert!((d + p).abs() < 1e-3, "{d} + {p}");
    }
}
