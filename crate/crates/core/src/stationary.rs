//! Closed-form stationary objects: the critical-mass bubble family, the
//! Liouville equation it solves, the `φ_a` mass profiles of the inner
//! self-similar problem, and the Laguerre eigenfunctions of the linearised
//! outer operator
//!
//! ```text
//! A ψ = ψ_yy + (1/y - y/2) ψ_y + ψ,    A φ_k = (1 - k) φ_k,
//! φ_k(y) = c_k L_k(y²/4),  c_k = (1 / (4π k!))^{1/2}.
//! ```

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fields::{RadialDensity, RadialGrid};

/// Scale of a radial bubble centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleParams {
    lambda: f64,
}

impl BubbleParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("bubble scale must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `U_0(y) = 8 / (1 + |y|²)²`.
#[inline]
pub fn unit_bubble(r: f64) -> f64 {
    let s = 1.0 + r * r;
    8.0 / (s * s)
}

/// `U_λ(r) = λ^{-2} U_0(r / λ)`.
pub fn bubble_density(p: BubbleParams, r: f64) -> f64 {
    unit_bubble(r / p.lambda) / (p.lambda * p.lambda)
}

/// Mass of `U_λ` inside radius `r`: `8π r² / (r² + λ²)`.
pub fn bubble_cumulative(p: BubbleParams, r: f64) -> f64 {
    let r2 = r * r;
    8.0 * PI * r2 / (r2 + p.lambda * p.lambda)
}

/// `φ_a(ξ) = 8π ξ² / (ξ² + a²)`.
pub fn phi_a(a: f64, xi: f64) -> f64 {
    let x2 = xi * xi;
    8.0 * PI * x2 / (x2 + a * a)
}

/// Cell-centred radial Laplacian `(1/r)(r u_r)_r` with edge fluxes; zero
/// flux through `r = 0`. Returns values for cells `0..n-1` (the outermost
/// cell is left out since it has no outer neighbour).
pub fn radial_laplacian(grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
    let n = grid.node_count();
    let h = grid.spacing();
    (0..n.saturating_sub(1))
        .map(|i| {
            let outer = grid.edge(i + 1) * (u[i + 1] - u[i]) / h;
            let inner = if i == 0 { 0.0 } else { grid.edge(i) * (u[i] - u[i - 1]) / h };
            (outer - inner) / (grid.node(i) * h)
        })
        .collect()
}

/// `‖−Δ_h C_λ − U_λ‖_∞` over interior cells, where `C_λ = log U_λ` solves
/// the Liouville equation `−ΔC = e^C`. The disc radius is `10 λ`.
pub fn liouville_residual(spacing: f64, lambda: f64) -> Result<f64> {
    let p = BubbleParams::new(lambda)?;
    if !(spacing > 0.0) {
        return Err(invalid("grid spacing must be positive"));
    }
    let n = ((10.0 * lambda) / spacing).round().max(3.0) as usize;
    let grid = RadialGrid::new(n, n as f64 * spacing)?;
    let c: Vec<f64> = grid.nodes().iter().map(|&r| bubble_density(p, r).ln()).collect();
    let lap = radial_laplacian(&grid, &c);
    Ok(lap
        .iter()
        .enumerate()
        .map(|(i, l)| (-l - bubble_density(p, grid.node(i))).abs())
        .fold(0.0, f64::max))
}

/// Finite-difference residual of `ξ φ'' + (φ/2π − 1) φ' = 0` at the profile
/// `phi`, sampled on the uniform nodes `ξ_j = j h` (`j = 0..len`), max norm
/// over interior nodes.
pub fn stationary_profile_residual(spacing: f64, phi: &[f64]) -> f64 {
    let h = spacing;
    (1..phi.len().saturating_sub(1))
        .map(|j| {
            let xi = j as f64 * h;
            let d2 = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) / (h * h);
            let d1 = (phi[j + 1] - phi[j - 1]) / (2.0 * h);
            (xi * d2 + (phi[j] / (2.0 * PI) - 1.0) * d1).abs()
        })
        .fold(0.0, f64::max)
}

/// Residual of the stationary inner equation at `φ_a` on `ξ ∈ [0, ξ_max]`
/// with `cells` intervals.
pub fn phi_a_residual(a: f64, xi_max: f64, cells: usize) -> Result<f64> {
    if !(a > 0.0) {
        return Err(invalid("profile scale a must be positive"));
    }
    if cells < 2 || !(xi_max > 0.0) {
        return Err(invalid("need a positive extent and at least two cells"));
    }
    let h = xi_max / cells as f64;
    let phi: Vec<f64> = (0..=cells).map(|j| phi_a(a, j as f64 * h)).collect();
    Ok(stationary_profile_residual(h, &phi))
}

/// Laguerre polynomial `L_k(x)` by the three-term recurrence.
pub fn laguerre(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 - x) * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Normalisation constant as printed, `c_k = (1 / (4π k!))^{1/2}`.
pub fn laguerre_normalisation(k: usize) -> f64 {
    (1.0 / (4.0 * PI * factorial(k))).sqrt()
}

/// `φ_k(y) = c_k L_k(y²/4)`.
pub fn laguerre_eigenfunction(k: usize, y: f64) -> f64 {
    laguerre_normalisation(k) * laguerre(k, y * y / 4.0)
}

/// Outcome of the eigenpair check of `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCheck {
    pub k: usize,
    pub eigenvalue: f64,
    /// `max_j |A_h φ_k − (1−k) φ_k| e^{−y_j²/4}` over interior nodes.
    pub residual: f64,
    /// `∫_0^∞ y φ_k² e^{−y²/4} dy` by midpoint quadrature on `(0, y_max]`.
    pub weighted_norm_sq: f64,
}

pub const SUPPORTED_LAGUERRE_DEGREES: std::ops::RangeInclusive<usize> = 0..=3;

/// Discrete eigen-residual of `A` at `φ_k` on `cells` cells covering
/// `(0, y_max]`.
///
/// The diffusion part `(1/y)(y ψ_y)_y` uses the cell-centred flux stencil,
/// the drift `−(y/2) ψ_y` a centred difference. Beyond `y_max` the function
/// is closed by zero (Dirichlet), which only affects the dropped last cell.
pub fn laguerre_eigen_check(k: usize, y_max: f64, cells: usize) -> Result<EigenCheck> {
    if !SUPPORTED_LAGUERRE_DEGREES.contains(&k) {
        return Err(invalid(format!("Laguerre degree {k} outside 0..=3")));
    }
    if y_max < 10.0 {
        return Err(invalid("y_max must be at least 10"));
    }
    let grid = RadialGrid::new(cells, y_max)?;
    let h = grid.spacing();
    let phi: Vec<f64> = grid.nodes().iter().map(|&y| laguerre_eigenfunction(k, y)).collect();
    let lap = radial_laplacian(&grid, &phi);
    let eigenvalue = 1.0 - k as f64;
    let mut residual = 0.0f64;
    for (i, l) in lap.iter().enumerate() {
        let y = grid.node(i);
        let left = if i == 0 { phi[0] } else { phi[i - 1] };
        // ψ is even in y, so the ghost value left of the first cell mirrors it
        let dpsi = (phi[i + 1] - left) / (2.0 * h);
        let a_phi = l - 0.5 * y * dpsi + phi[i];
        residual = residual.max(((a_phi - eigenvalue * phi[i]) * (-y * y / 4.0).exp()).abs());
    }
    let weighted_norm_sq = grid
        .nodes()
        .iter()
        .zip(&phi)
        .map(|(&y, &p)| y * p * p * (-y * y / 4.0).exp() * h)
        .sum();
    Ok(EigenCheck { k, eigenvalue, residual, weighted_norm_sq })
}

/// Closed form of `∫_0^∞ y c_k² L_k(y²/4)² e^{−y²/4} dy = 2 c_k²`.
pub fn laguerre_weighted_norm_sq_exact(k: usize) -> f64 {
    2.0 * laguerre_normalisation(k).powi(2)
}

/// Best-fit bubble for a radial density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleFit {
    pub lambda: f64,
    /// Relative L² misfit on `r ≤ 2 λ̂`.
    pub residual: f64,
}

/// Residual above which a profile is not considered bubble-like.
pub const BUBBLE_FIT_THRESHOLD: f64 = 0.1;

/// Matches the central density, `λ̂ = sqrt(8 / ρ(0))`, and reports the
/// relative L² error of the match on `r ≤ 2 λ̂`.
///
/// The innermost cell sits at `r_0 = h/2`, so `ρ(0)` is taken as the centre
/// value of the bubble through `(r_0, ρ_0)`: `8 u = ρ_0 (u + r_0²)²` with
/// `u = λ²`, larger root. Profiles too sharp for that (`ρ_0 r_0² > 2`) fall
/// back to `ρ(0) = ρ_0`.
pub fn fit_bubble(rho: &RadialDensity) -> Result<BubbleFit> {
    let centre = rho.values()[0];
    if !(centre > 0.0) {
        return Err(Error::Hypothesis("central density must be positive".into()));
    }
    let r0 = rho.grid().node(0);
    let r0sq = r0 * r0;
    let disc = 2.0 - centre * r0sq;
    let lambda = if disc >= 0.0 {
        let u = ((8.0 - 2.0 * centre * r0sq) + (32.0 * disc).sqrt()) / (2.0 * centre);
        u.sqrt()
    } else {
        (8.0 / centre).sqrt()
    };
    let p = BubbleParams::new(lambda)?;
    let g = rho.grid();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in rho.values().iter().enumerate() {
        let r = g.node(i);
        if r > 2.0 * lambda {
            break;
        }
        let b = bubble_density(p, r);
        num += (v - b).powi(2) * r;
        den += v * v * r;
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY };
    Ok(BubbleFit { lambda, residual })
}
