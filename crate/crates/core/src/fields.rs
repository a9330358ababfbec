//! Radially symmetric densities on a disc `B_R`, their cumulative mass, and
//! one-dimensional densities in quantile (inverse-CDF) form.
//!
//! Density values live at cell centres `r_i = (i + 1/2) h`; cumulative mass
//! lives at cell edges `r = i h`. With that layout the midpoint quadrature of
//! the density and the edge differences of the cumulative mass are exact
//! inverses of each other, so conservative updates telescope.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Uniform cell-centred grid on `[0, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    node_count: usize,
    radius: f64,
    spacing: f64,
}

impl RadialGrid {
    pub fn new(node_count: usize, radius: f64) -> Result<Self> {
        if node_count == 0 {
            return Err(invalid("radial grid needs at least one node"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { node_count, radius, spacing: radius / node_count as f64 })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Cell centre `r_i`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing
    }

    /// Cell edge `i h`, `i = 0..=node_count`.
    #[inline]
    pub fn edge(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.node_count).map(|i| self.node(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.node_count).map(|i| self.edge(i)).collect()
    }
}

/// Cell density (mass per unit area) of a radial field.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialDensity {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::SizeMismatch { left: values.len(), right: grid.node_count() });
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::NegativeDensity { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(r)` at the cell centres.
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|i| f(grid.node(i))).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass `2π Σ r_i ρ_i h`, summed in the same order as the
    /// cumulative mass so the two agree bit for bit.
    pub fn mass(&self) -> f64 {
        let h = self.grid.spacing();
        let mut m = 0.0;
        for (i, rho) in self.values.iter().enumerate() {
            m += 2.0 * PI * self.grid.node(i) * rho * h;
        }
        m
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Mass-preserving dilation `λ^{-2} ρ(r/λ)` sampled from a closed form.
    pub fn scaled_from_fn(grid: RadialGrid, lambda: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, |r| f(r / lambda) / (lambda * lambda))
    }
}

/// Cumulative mass `m(r) = ∫_{|x|<r} ρ` at the cell edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeMass {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl CumulativeMass {
    /// Builds from edge values; `values[0]` must be zero.
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() + 1 {
            return Err(Error::SizeMismatch { left: values.len(), right: grid.node_count() + 1 });
        }
        if values[0] != 0.0 {
            return Err(invalid("cumulative mass must vanish at r = 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cumulative mass must be finite"));
        }
        Ok(Self { grid, values })
    }

    /// Samples a closed-form cumulative profile at the edges (forcing `m(0) = 0`).
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = (0..=grid.node_count()).map(|i| f(grid.edge(i))).collect();
        values[0] = 0.0;
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: RadialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count() + 1);
        Self { grid, values }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Linear interpolation of `m` at radius `r` (clamped to `[0, R]`).
    pub fn at(&self, r: f64) -> f64 {
        let h = self.grid.spacing();
        let x = (r / h).clamp(0.0, self.grid.node_count() as f64);
        let j = (x.floor() as usize).min(self.grid.node_count() - 1);
        let t = x - j as f64;
        self.values[j] * (1.0 - t) + self.values[j + 1] * t
    }
}

/// What to do with negative cell densities recovered from a decreasing `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativityPolicy {
    #[default]
    Strict,
    Clamp,
}

/// `m_i = 2π Σ_{j<i} r_j ρ_j h` (exact midpoint quadrature).
pub fn cumulative_from_density(rho: &RadialDensity) -> CumulativeMass {
    let grid = *rho.grid();
    let h = grid.spacing();
    let mut values = Vec::with_capacity(grid.node_count() + 1);
    let mut m = 0.0;
    values.push(m);
    for (i, r) in rho.values().iter().enumerate() {
        m += 2.0 * PI * grid.node(i) * r * h;
        values.push(m);
    }
    CumulativeMass { grid, values }
}

/// Density recovered from edge differences, `ρ_i = (m_{i+1} - m_i) / (2π r_i h)`.
///
/// Returns the density and the total mass removed by clamping (zero under
/// [`NegativityPolicy::Strict`], which rejects negative cells instead).
pub fn density_from_cumulative(
    m: &CumulativeMass,
    policy: NegativityPolicy,
) -> Result<(RadialDensity, f64)> {
    let grid = *m.grid();
    let h = grid.spacing();
    let mut clamped = 0.0;
    let mut values = Vec::with_capacity(grid.node_count());
    for i in 0..grid.node_count() {
        let dm = m.values[i + 1] - m.values[i];
        let rho = dm / (2.0 * PI * grid.node(i) * h);
        if rho < 0.0 {
            match policy {
                NegativityPolicy::Strict => {
                    return Err(Error::NegativeDensity { index: i, value: rho })
                }
                NegativityPolicy::Clamp => {
                    clamped += -dm;
                    values.push(0.0);
                    continue;
                }
            }
        }
        values.push(rho);
    }
    Ok((RadialDensity { grid, values }, clamped))
}

/// Maximum cell density implied by `m` without allocating the density.
pub(crate) fn sup_density(m: &CumulativeMass) -> f64 {
    let g = m.grid();
    let h = g.spacing();
    let mut sup = 0.0f64;
    for i in 0..g.node_count() {
        let rho = (m.values[i + 1] - m.values[i]) / (2.0 * PI * g.node(i) * h);
        sup = sup.max(rho);
    }
    sup
}

/// A probability density on the line stored as quantiles `q_k = F^{-1}(p_k)`
/// at the mass levels `p_k = (k + 1/2) / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDensity {
    quantiles: Vec<f64>,
}

impl QuantileDensity {
    pub fn new(quantiles: Vec<f64>) -> Result<Self> {
        if quantiles.is_empty() {
            return Err(invalid("quantile density needs at least one level"));
        }
        if quantiles.iter().any(|q| !q.is_finite()) {
            return Err(invalid("quantiles must be finite"));
        }
        if let Some(k) = quantiles.windows(2).position(|w| w[1] < w[0]) {
            return Err(invalid(format!("quantiles decrease at index {}", k + 1)));
        }
        Ok(Self { quantiles })
    }

    pub(crate) fn from_raw(quantiles: Vec<f64>) -> Self {
        Self { quantiles }
    }

    /// Quantiles of a distribution with known inverse CDF.
    pub fn from_inverse_cdf(levels: usize, inverse_cdf: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(mass_levels(levels).into_iter().map(inverse_cdf).collect())
    }

    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn levels(&self) -> Vec<f64> {
        mass_levels(self.quantiles.len())
    }

    pub fn mean(&self) -> f64 {
        self.quantiles.iter().sum::<f64>() / self.quantiles.len() as f64
    }

    /// Translates every quantile by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self { quantiles: self.quantiles.iter().map(|q| q + shift).collect() }
    }
}

/// `p_k = (k + 1/2) / K`.
pub fn mass_levels(levels: usize) -> Vec<f64> {
    (0..levels).map(|k| (k as f64 + 0.5) / levels as f64).collect()
}

/// Monotone rearrangement of density samples `(x_i, f_i)`.
///
/// The samples are normalised to unit mass with the trapezoid rule, the
/// resulting piecewise-linear CDF is inverted at the `levels` mass levels.
pub fn quantile_from_samples(x: &[f64], density: &[f64], levels: usize) -> Result<QuantileDensity> {
    if x.len() != density.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: density.len() });
    }
    if x.len() < 2 || levels == 0 {
        return Err(invalid("need at least two samples and one level"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sample abscissae must be strictly increasing"));
    }
    if let Some((index, &value)) = density.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { index, value });
    }
    let mut cdf = Vec::with_capacity(x.len());
    cdf.push(0.0);
    for i in 1..x.len() {
        let prev = cdf[i - 1];
        cdf.push(prev + 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]));
    }
    invert_cdf(x, &cdf, levels)
}

/// Quantiles of a piecewise-constant density given by cell averages on the
/// uniform cells `[lo + i h, lo + (i + 1) h]`.
pub fn quantile_from_cells(lo: f64, spacing: f64, cells: &[f64], levels: usize) -> Result<QuantileDensity> {
    if cells.is_empty() || levels == 0 {
        return Err(invalid("need at least one cell and one level"));
    }
    if let Some((index, &value)) = cells.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { index, value });
    }
    let edges: Vec<f64> = (0..=cells.len()).map(|i| lo + i as f64 * spacing).collect();
    let mut cdf = Vec::with_capacity(edges.len());
    cdf.push(0.0);
    let mut acc = 0.0;
    for c in cells {
        acc += c * spacing;
        cdf.push(acc);
    }
    invert_cdf(&edges, &cdf, levels)
}

fn invert_cdf(x: &[f64], cdf: &[f64], levels: usize) -> Result<QuantileDensity> {
    let total = cdf[cdf.len() - 1];
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroMass);
    }
    let mut q = Vec::with_capacity(levels);
    let mut j = 0usize;
    for p in mass_levels(levels) {
        let target = p * total;
        while j + 2 < cdf.len() && cdf[j + 1] < target {
            j += 1;
        }
        let (c0, c1) = (cdf[j], cdf[j + 1]);
        let t = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        let value = x[j] + t * (x[j + 1] - x[j]);
        // ties can only arise from flat CDF pieces; keep the sequence monotone
        let value = q.last().map_or(value, |&last: &f64| value.max(last));
        q.push(value);
    }
    Ok(QuantileDensity { quantiles: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bubble(r: f64) -> f64 {
        8.0 / (1.0 + r * r).powi(2)
    }

    #[test]
    fn grid_nodes_are_cell_centres() {
        let g = RadialGrid::new(8, 2.0).unwrap();
        assert_relative_eq!(g.spacing(), 0.25);
        assert_relative_eq!(g.node(0), 0.125);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.nodes().iter().all(|&r| r > 0.0 && r < 2.0));
        assert!(RadialGrid::new(0, 1.0).is_err());
        assert!(RadialGrid::new(4, -1.0).is_err());
    }

    #[test]
    fn zero_density_has_zero_cumulative() {
        let g = RadialGrid::new(16, 1.0).unwrap();
        let m = cumulative_from_density(&RadialDensity::zeros(g));
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_density_cumulative_is_exact() {
        let g = RadialGrid::new(37, 3.0).unwrap();
        let c = 1.7;
        let m = cumulative_from_density(&RadialDensity::from_fn(g, |_| c).unwrap());
        for (i, &mi) in m.values().iter().enumerate() {
            let r = g.edge(i);
            assert_relative_eq!(mi, PI * c * r * r, max_relative = 1e-13, epsilon = 1e-14);
        }
    }

    #[test]
    fn bubble_cumulative_half_mass_at_unit_radius() {
        let g = RadialGrid::new(4000, 40.0).unwrap();
        let m = cumulative_from_density(&RadialDensity::from_fn(g, bubble).unwrap());
        // r = 1 is edge 100
        let h = g.spacing();
        assert!((m.values()[100] - 4.0 * PI).abs() < 10.0 * h * h);
    }

    #[test]
    fn uniform_cumulative_gives_unit_density() {
        let g = RadialGrid::new(20, 2.0).unwrap();
        let m = CumulativeMass::from_fn(g, |r| PI * r * r).unwrap();
        let (rho, clamped) = density_from_cumulative(&m, NegativityPolicy::Strict).unwrap();
        assert_eq!(clamped, 0.0);
        for v in rho.values() {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-12);
        }
        let zero = CumulativeMass::from_fn(g, |_| 0.0).unwrap();
        let (rho0, _) = density_from_cumulative(&zero, NegativityPolicy::Strict).unwrap();
        assert!(rho0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decreasing_mass_is_rejected_or_clamped() {
        let g = RadialGrid::new(3, 3.0).unwrap();
        let m = CumulativeMass::new(g, vec![0.0, 2.0, 1.5, 3.0]).unwrap();
        assert!(matches!(
            density_from_cumulative(&m, NegativityPolicy::Strict),
            Err(Error::NegativeDensity { index: 1, .. })
        ));
        let (rho, clamped) = density_from_cumulative(&m, NegativityPolicy::Clamp).unwrap();
        assert_relative_eq!(clamped, 0.5);
        assert_eq!(rho.values()[1], 0.0);
    }

    #[test]
    fn mass_matches_last_cumulative_entry_exactly() {
        let g = RadialGrid::new(321, 7.0).unwrap();
        let rho = RadialDensity::from_fn(g, |r| (-r * r).exp() * (1.0 + r.sin().abs())).unwrap();
        assert_eq!(rho.mass(), cumulative_from_density(&rho).total());
    }

    #[test]
    fn quantiles_of_uniform_densities() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let q = quantile_from_samples(&x, &vec![1.0; 101], 64).unwrap();
        for (qk, pk) in q.quantiles().iter().zip(q.levels()) {
            assert_relative_eq!(*qk, pk, epsilon = 1e-14);
        }
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let q2 = quantile_from_samples(&x2, &vec![0.5; 101], 64).unwrap();
        for (qk, pk) in q2.quantiles().iter().zip(q2.levels()) {
            assert_relative_eq!(*qk, 2.0 * pk, epsilon = 1e-14);
        }
    }

    #[test]
    fn gaussian_median_is_zero() {
        let x: Vec<f64> = (0..=2000).map(|i| -8.0 + 16.0 * i as f64 / 2000.0).collect();
        let f: Vec<f64> = x.iter().map(|v| (-v * v / 2.0).exp()).collect();
        // odd K puts a level exactly at p = 1/2
        let q = quantile_from_samples(&x, &f, 101).unwrap();
        assert!(q.quantiles()[50].abs() < 1e-10);
    }

    #[test]
    fn zero_mass_samples_are_rejected() {
        let x = [0.0, 1.0, 2.0];
        assert_eq!(quantile_from_samples(&x, &[0.0; 3], 8), Err(Error::ZeroMass));
    }

    proptest! {
        #[test]
        fn round_trip_density_cumulative(values in prop::collection::vec(0.0f64..10.0, 1..200)) {
            let g = RadialGrid::new(values.len(), 5.0).unwrap();
            let rho = RadialDensity::new(g, values).unwrap();
            let m = cumulative_from_density(&rho);
            prop_assert!(m.is_nondecreasing());
            let (back, _) = density_from_cumulative(&m, NegativityPolicy::Strict).unwrap();
            let scale = rho.values().iter().copied().fold(0.0, f64::max).max(1.0);
            for (i, (a, b)) in back.values().iter().zip(rho.values()).enumerate() {
                // cancellation in m_{i+1} - m_i grows like m / (r_i h)
                let cond = m.total() / (2.0 * PI * g.node(i) * g.spacing()) / scale;
                prop_assert!((a - b).abs() <= 1e-12 * scale * cond.max(1.0));
            }
            let again = cumulative_from_density(&back);
            for (a, b) in again.values().iter().zip(m.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * m.total().max(1e-300));
            }
        }

        #[test]
        fn quantiles_are_monotone(values in prop::collection::vec(0.0f64..5.0, 2..100), k in 1usize..300) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let x: Vec<f64> = (0..values.len()).map(|i| i as f64 * 0.1).collect();
            let q = quantile_from_samples(&x, &values, k).unwrap();
            prop_assert!(q.quantiles().windows(2).all(|w| w[1] >= w[0]));
            let qc = quantile_from_cells(0.0, 0.1, &values, k).unwrap();
            prop_assert!(qc.quantiles().windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
