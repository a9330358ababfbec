//! Linear Fokker-Planck evolution `ρ_t = (ρ_x + ρ V')_x` on a bounded
//! interval and numerical versions of the entropy inequalities around it:
//! Csiszár-Kullback-Pinsker, log-Sobolev, Talagrand and HWI.
//!
//! Every validator returns a deficit (right side minus left side); choosing
//! thresholds is left to the caller.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fields::{quantile_from_cells, QuantileDensity};
use crate::jko1d::{w2, EnergyParts, FreeEnergySpec};
use crate::numerics::linear_fit;
use crate::potential::ScalarFn;

/// Densities below this level are treated as zero in the Fisher information.
pub const FISHER_FLOOR: f64 = 1e-14;

/// A confining potential on a working interval, with `log ∫ e^{−V}`.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    v: ScalarFn,
    lo: f64,
    hi: f64,
    log_normalizer: f64,
}

impl PotentialSpec {
    pub fn new(v: ScalarFn, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("empty working interval"));
        }
        // Simpson's rule on a fine grid, shifted by the minimum for range safety
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let vs: Vec<f64> = (0..=n).map(|i| v.value(lo + i as f64 * h)).collect();
        if vs.iter().any(|x| !x.is_finite()) {
            return Err(invalid("potential is not finite on the interval"));
        }
        let vmin = vs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut s = 0.0;
        for (i, x) in vs.iter().enumerate() {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (vmin - x).exp();
        }
        let z = s * h / 3.0;
        if !(z > 0.0 && z.is_finite()) {
            return Err(invalid("e^{-V} is not integrable on the interval"));
        }
        Ok(Self { v, lo, hi, log_normalizer: z.ln() - vmin })
    }

    pub fn potential(&self) -> &ScalarFn {
        &self.v
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Normalised stationary density `e^{−V} / Z` at `x`.
    pub fn stationary_density(&self, x: f64) -> f64 {
        (-self.v.value(x) - self.log_normalizer).exp()
    }

    /// `e^{−V}` sampled at the cells of `like`, normalised discretely.
    pub fn reference_on(&self, like: &Density1D) -> Result<Density1D> {
        Density1D::from_fn(like.lo, like.hi(), like.len(), |x| self.stationary_density(x))
    }
}

/// Unit-mass density on uniform cells `[lo + i h, lo + (i+1) h]`, sampled
/// at the cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    lo: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl Density1D {
    /// Normalises `values` to unit mass.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(hi > lo) {
            return Err(invalid("need at least two cells on a nonempty interval"));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NegativeDensity { index, value });
        }
        let spacing = (hi - lo) / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * spacing;
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(Self { lo, spacing, values: values.into_iter().map(|v| v / mass).collect() })
    }

    pub fn from_fn(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (hi - lo) / cells as f64;
        Self::new(lo, hi, (0..cells).map(|i| f(lo + (i as f64 + 0.5) * h)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.spacing * self.values.len() as f64
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.spacing
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| self.x(i) * v).sum::<f64>() * self.spacing
    }

    /// Quantiles of the piecewise-constant reconstruction.
    pub fn to_quantiles(&self, levels: usize) -> Result<QuantileDensity> {
        quantile_from_cells(self.lo, self.spacing, &self.values, levels)
    }

    fn same_grid(&self, other: &Density1D) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::SizeMismatch { left: self.len(), right: other.len() });
        }
        if (self.lo - other.lo).abs() > 1e-12 * (1.0 + self.lo.abs())
            || (self.spacing - other.spacing).abs() > 1e-12 * self.spacing
        {
            return Err(invalid("densities live on different grids"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpScheme {
    Explicit,
    #[default]
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpOptions {
    pub scheme: FpScheme,
    /// Record every this many steps (the final state is always recorded).
    pub record_every: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { scheme: FpScheme::Implicit, record_every: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct FpTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Density1D>,
    /// `H(ρ(t) | e^{−V})` against the discrete stationary state.
    pub relative_entropy: Vec<f64>,
    pub fisher: Vec<f64>,
}

/// Face mobilities `sqrt(μ_i μ_{i+1})` and cell weights `μ_i = e^{−(V_i − min V)}`.
fn fp_coefficients(rho: &Density1D, spec: &PotentialSpec) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<f64> = (0..rho.len()).map(|i| spec.v.value(rho.x(i))).collect();
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu: Vec<f64> = v.iter().map(|x| (vmin - x).exp()).collect();
    let faces = mu.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    (mu, faces)
}

/// Largest stable explicit step for this grid and potential.
pub fn fp_explicit_bound(rho: &Density1D, spec: &PotentialSpec) -> f64 {
    let (mu, faces) = fp_coefficients(rho, spec);
    let n = mu.len();
    let h = rho.spacing;
    let worst = (0..n)
        .map(|i| {
            let left = if i > 0 { faces[i - 1] } else { 0.0 };
            let right = if i + 1 < n { faces[i] } else { 0.0 };
            (left + right) / mu[i]
        })
        .fold(0.0, f64::max);
    h * h / worst
}

/// Finite-volume Fokker-Planck run with no-flux walls.
///
/// The face flux is `−(M_{i+½}/h)(ρ_{i+1}/μ_{i+1} − ρ_i/μ_i)`, so the sampled
/// `e^{−V}` is an exact discrete equilibrium and mass is conserved to
/// roundoff.
pub fn fp_run(rho0: &Density1D, spec: &PotentialSpec, t_end: f64, dt: f64, opts: &FpOptions) -> Result<FpTrajectory> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(invalid("need dt > 0 and t_end >= 0"));
    }
    if opts.scheme == FpScheme::Explicit {
        let bound = fp_explicit_bound(rho0, spec);
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
    }
    let reference = spec.reference_on(rho0)?;
    let (mu, faces) = fp_coefficients(rho0, spec);
    let n = mu.len();
    let c = dt / (rho0.spacing * rho0.spacing);
    let steps = (t_end / dt).round() as usize;

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { faces[i - 1] } else { 0.0 };
        let right = if i + 1 < n { faces[i] } else { 0.0 };
        diag[i] = 1.0 + c * (left + right) / mu[i];
        if i > 0 {
            lower[i] = -c * left / mu[i - 1];
        }
        if i + 1 < n {
            upper[i] = -c * right / mu[i + 1];
        }
    }

    let mut rho = rho0.values.clone();
    let mut traj = FpTrajectory { times: vec![], states: vec![], relative_entropy: vec![], fisher: vec![] };
    let push = |t: f64, values: &[f64], traj: &mut FpTrajectory| -> Result<()> {
        let d = Density1D { lo: rho0.lo, spacing: rho0.spacing, values: values.to_vec() };
        traj.relative_entropy.push(relative_entropy(&d, &reference)?);
        traj.fisher.push(fisher_information(&d, &reference)?);
        traj.times.push(t);
        traj.states.push(d);
        Ok(())
    };
    push(0.0, &rho, &mut traj)?;
    let every = opts.record_every.max(1);
    for step in 1..=steps {
        match opts.scheme {
            FpScheme::Explicit => {
                let u: Vec<f64> = rho.iter().zip(&mu).map(|(r, m)| r / m).collect();
                let mut next = rho.clone();
                for i in 0..n - 1 {
                    let flux = c * faces[i] * (u[i + 1] - u[i]);
                    next[i] += flux;
                    next[i + 1] -= flux;
                }
                rho = next;
            }
            FpScheme::Implicit => {
                crate::numerics::solve_tridiagonal(&lower, &diag, &upper, &mut rho)?;
            }
        }
        if step % every == 0 || step == steps {
            push(step as f64 * dt, &rho, &mut traj)?;
        }
    }
    Ok(traj)
}

/// `H(ρ | ref) = ∫ ρ log(ρ / ref)`.
pub fn relative_entropy(rho: &Density1D, reference: &Density1D) -> Result<f64> {
    rho.same_grid(reference)?;
    let mut s = 0.0;
    for (i, (&r, &q)) in rho.values.iter().zip(&reference.values).enumerate() {
        if r > 0.0 {
            if !(q > 0.0) {
                return Err(Error::NotAbsolutelyContinuous { index: i });
            }
            s += r * (r / q).ln();
        }
    }
    Ok(s * rho.spacing)
}

/// `I(ρ | ref) = ∫ ρ |∂_x log(ρ / ref)|²` with centred differences
/// (one-sided at the walls).
pub fn fisher_information(rho: &Density1D, reference: &Density1D) -> Result<f64> {
    rho.same_grid(reference)?;
    let n = rho.len();
    let h = rho.spacing;
    let mut log_ratio = Vec::with_capacity(n);
    for (i, (&r, &q)) in rho.values.iter().zip(&reference.values).enumerate() {
        if r > 0.0 && !(q > 0.0) {
            return Err(Error::NotAbsolutelyContinuous { index: i });
        }
        log_ratio.push(r.max(1e-300).ln() - q.max(1e-300).ln());
    }
    let mut s = 0.0;
    for i in 0..n {
        let r = rho.values[i];
        if r < FISHER_FLOOR {
            continue;
        }
        let d = if i == 0 {
            (log_ratio[1] - log_ratio[0]) / h
        } else if i == n - 1 {
            (log_ratio[n - 1] - log_ratio[n - 2]) / h
        } else {
            (log_ratio[i + 1] - log_ratio[i - 1]) / (2.0 * h)
        };
        s += r * d * d;
    }
    Ok(s * h)
}

pub fn l1_distance(a: &Density1D, b: &Density1D) -> Result<f64> {
    a.same_grid(b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.spacing)
}

/// `H − ½ ‖ρ − ref‖₁²`.
pub fn ckp_deficit(rho: &Density1D, reference: &Density1D) -> Result<f64> {
    let l1 = l1_distance(rho, reference)?;
    Ok(relative_entropy(rho, reference)? - 0.5 * l1 * l1)
}

/// `I / 2λ − H` against the stationary state of `spec`.
pub fn logsob_deficit(rho: &Density1D, spec: &PotentialSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Hypothesis(format!("log-Sobolev constant must be positive, got {lambda}")));
    }
    let reference = spec.reference_on(rho)?;
    Ok(fisher_information(rho, &reference)? / (2.0 * lambda) - relative_entropy(rho, &reference)?)
}

const CONVEXITY_SAMPLES: usize = 100_001;

/// `inf V''` over a dense sampling of `[lo, hi]`.
pub fn bakry_emery_lambda(spec: &PotentialSpec, lo: f64, hi: f64) -> f64 {
    let h = (hi - lo) / (CONVEXITY_SAMPLES - 1) as f64;
    (0..CONVEXITY_SAMPLES).map(|i| spec.v.second_derivative(lo + i as f64 * h)).fold(f64::INFINITY, f64::min)
}

/// Log-Sobolev constant after a bounded perturbation of oscillation `osc`:
/// `λ e^{−osc}`.
pub fn holley_stroock_lambda(lambda: f64, oscillation: f64) -> f64 {
    lambda * (-oscillation).exp()
}

fn check_convexity(spec: &PotentialSpec, lambda: f64) -> Result<()> {
    let (lo, hi) = spec.interval();
    let be = bakry_emery_lambda(spec, lo, hi);
    if lambda > be + 1e-12 * be.abs().max(1.0) {
        return Err(Error::Hypothesis(format!("V'' >= {lambda} fails: inf V'' = {be}")));
    }
    Ok(())
}

/// Exponential rate fitted to the tail of `H(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub window_start: f64,
    pub window_end: f64,
}

/// Entropy values below this are treated as numerical noise.
pub const DECAY_NOISE_FLOOR: f64 = 1e-12;

/// Least-squares slope of `log H` against `t` over the window where
/// `H ∈ [1e−12, 1e−2 H(0)]`, which must span at least two decades.
pub fn decay_rate_fit(traj: &FpTrajectory) -> Result<DecayFit> {
    let h = &traj.relative_entropy;
    let h0 = *h.first().ok_or_else(|| invalid("empty trajectory"))?;
    for (i, w) in h.windows(2).enumerate() {
        if w[1] > w[0] + 1e-10 * h0.max(DECAY_NOISE_FLOOR) && w[1] > DECAY_NOISE_FLOOR {
            return Err(Error::NonMonotone { index: i + 1 });
        }
    }
    let upper = 1e-2 * h0;
    let (t, logh): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(h)
        .filter(|(_, &v)| v <= upper && v >= DECAY_NOISE_FLOOR)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    if t.len() < 3 {
        return Err(Error::DegenerateFit("entropy is below the noise floor".into()));
    }
    let span = logh[0] - logh[logh.len() - 1];
    if span < 2.0 * std::f64::consts::LN_10 {
        return Err(Error::DegenerateFit("entropy tail spans less than two decades".into()));
    }
    let (slope, _) = linear_fit(&t, &logh)?;
    Ok(DecayFit { rate: -slope, window_start: t[0], window_end: t[t.len() - 1] })
}

fn w2_densities(a: &Density1D, b: &Density1D) -> Result<f64> {
    a.same_grid(b)?;
    w2(&a.to_quantiles(a.len())?, &b.to_quantiles(b.len())?)
}

/// `sqrt(2H/λ) − W₂(ρ, e^{−V})`; requires `0 < λ ≤ inf V''`.
pub fn talagrand_deficit(rho: &Density1D, spec: &PotentialSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Hypothesis(format!("Talagrand needs λ > 0, got {lambda}")));
    }
    check_convexity(spec, lambda)?;
    let reference = spec.reference_on(rho)?;
    let h = relative_entropy(rho, &reference)?;
    Ok((2.0 * h.max(0.0) / lambda).sqrt() - w2_densities(rho, &reference)?)
}

/// `H(ρ1) + W₂ √I(ρ0) − (λ/2) W₂² − H(ρ0)`; requires `λ ≤ inf V''`.
pub fn hwi_deficit(rho0: &Density1D, rho1: &Density1D, spec: &PotentialSpec, lambda: f64) -> Result<f64> {
    check_convexity(spec, lambda)?;
    let reference = spec.reference_on(rho0)?;
    let h0 = relative_entropy(rho0, &reference)?;
    let h1 = relative_entropy(rho1, &reference)?;
    let i0 = fisher_information(rho0, &reference)?;
    let w = w2_densities(rho0, rho1)?;
    Ok(h1 + w * i0.sqrt() - 0.5 * lambda * w * w - h0)
}

/// Grid version of the free energy: `c ∫ρ log ρ + ∫ρ V + ½ ∬ W(x−y) ρ ρ`.
pub fn interaction_energy(spec: &FreeEnergySpec, rho: &Density1D) -> EnergyParts {
    let h = rho.spacing;
    let v = &rho.values;
    let entropy = spec.entropy_coefficient() * v.iter().filter(|&&r| r > 0.0).map(|r| r * r.ln()).sum::<f64>() * h;
    let potential = v.iter().enumerate().map(|(i, r)| r * spec.potential().value(rho.x(i))).sum::<f64>() * h;
    let interaction = if spec.interaction().is_zero() {
        0.0
    } else {
        let mut s = 0.0;
        for i in 0..v.len() {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..v.len() {
                s += v[i] * v[j] * spec.interaction().value(rho.x(i) - rho.x(j));
            }
        }
        0.5 * s * h * h
    };
    EnergyParts { entropy, potential, interaction, total: entropy + potential + interaction }
}

/// Random mixture of one to three Gaussians (means in `[−2, 2]`, widths in
/// `[0.4, 1.5]`), used by the property sweeps.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64, cells: usize) -> Result<Density1D> {
    let parts = rng.random_range(1..=3);
    let comps: Vec<(f64, f64, f64)> = (0..parts)
        .map(|_| (rng.random_range(0.2..1.0), rng.random_range(-2.0..2.0), rng.random_range(0.4..1.5)))
        .collect();
    Density1D::from_fn(lo, hi, cells, |x| {
        comps.iter().map(|(w, m, s)| w / s * (-0.5 * ((x - m) / s).powi(2)).exp()).sum()
    })
}
