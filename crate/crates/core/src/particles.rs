//! Moderately interacting two-species particle system in the plane.
//!
//! Bacteria (`u`) follow `dP = χ ∇ŝ_v(P) dt + √(2μ) dB`, chemical particles
//! (`v`) follow `dP = √(2η) dB`. The field `ŝ_v` is the empirical measure of
//! the `v` particles smoothed by `W_N ∗ Ŵ_N`, where `W_N(x) = α_N² W₁(α_N x)`,
//! `α_N = N^{α/2}` and `W₁` is the normalised `C^∞` bump on the unit disc.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fields::RadialDensity;
use crate::fields::RadialGrid;
use crate::numerics::CubicSpline;

pub type Point = [f64; 2];

/// 64-bit seed; every (step, species, particle) triple draws from its own
/// ChaCha8 stream derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    fn stream(self, step: u64, species: u64, index: u64) -> ChaCha8Rng {
        let k = splitmix(splitmix(splitmix(self.0) ^ step) ^ (species << 62 | index));
        ChaCha8Rng::seed_from_u64(k)
    }
}

fn unnormalised_bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn bump_normaliser() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let r = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * 2.0 * std::f64::consts::PI * r * unnormalised_bump(r * r);
        }
        1.0 / (s * h / 3.0)
    })
}

/// `W₁(x) = c exp(−1/(1−|x|²))` on the unit disc, unit integral.
pub fn base_mollifier(x: Point) -> f64 {
    bump_normaliser() * unnormalised_bump(x[0] * x[0] + x[1] * x[1])
}

/// `α_N = N^{α/2}`.
pub fn mollifier_scale(n: usize, alpha: f64) -> f64 {
    (n as f64).powf(alpha / 2.0)
}

/// `W_N(x) = α_N² W₁(α_N x)`.
pub fn mollifier_eval(n: usize, alpha: f64, x: Point) -> f64 {
    let a = mollifier_scale(n, alpha);
    a * a * base_mollifier([a * x[0], a * x[1]])
}

/// Radial table of `W_N ∗ Ŵ_N` as a spline in `s = |x|²`.
#[derive(Debug)]
pub struct EffectiveKernel {
    support: f64,
    spline: CubicSpline,
    peak: f64,
}

impl EffectiveKernel {
    pub fn new(n: usize, alpha: f64, alpha_hat: f64) -> Result<Self> {
        let a = 1.0 / mollifier_scale(n, alpha);
        let b = 1.0 / mollifier_scale(n, alpha_hat);
        let support = a + b;
        let c = bump_normaliser();
        let (n_rho, n_theta, n_table) = (240usize, 160usize, 400usize);
        let h_rho = a / n_rho as f64;
        let h_theta = std::f64::consts::PI / n_theta as f64;
        let s_max = support * support;
        let values: Vec<f64> = (0..=n_table)
            .into_par_iter()
            .map(|j| {
                let r = (s_max * j as f64 / n_table as f64).sqrt();
                let mut total = 0.0;
                for i in 0..=n_rho {
                    let rho = i as f64 * h_rho;
                    let wa = c * unnormalised_bump((rho / a).powi(2)) / (a * a);
                    if wa == 0.0 {
                        continue;
                    }
                    // trapezoid over θ ∈ [0, π], doubled by symmetry
                    let mut ang = 0.0;
                    for k in 0..=n_theta {
                        let th = k as f64 * h_theta;
                        let d2 = r * r + rho * rho - 2.0 * r * rho * th.cos();
                        let wt = if k == 0 || k == n_theta { 0.5 } else { 1.0 };
                        ang += wt * unnormalised_bump(d2 / (b * b));
                    }
                    let wsimp = if i == 0 || i == n_rho { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    total += wsimp * rho * wa * 2.0 * ang * h_theta * c / (b * b);
                }
                total * h_rho / 3.0
            })
            .collect();
        let s: Vec<f64> = (0..=n_table).map(|j| s_max * j as f64 / n_table as f64).collect();
        let peak = values[0];
        Ok(Self { support, spline: CubicSpline::new(s, values)?, peak })
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Kernel value and gradient at displacement `x`.
    pub fn eval(&self, x: Point) -> (f64, Point) {
        let s = x[0] * x[0] + x[1] * x[1];
        if s >= self.support * self.support {
            return (0.0, [0.0, 0.0]);
        }
        let (k, dk) = self.spline.eval_with_derivative(s);
        (k.max(0.0), [2.0 * x[0] * dk, 2.0 * x[1] * dk])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleParams {
    pub mu: f64,
    pub eta: f64,
    pub chi: f64,
    pub alpha: f64,
    pub alpha_hat: f64,
}

impl Default for ParticleParams {
    fn default() -> Self {
        Self { mu: 1.0, eta: 1.0, chi: 0.0, alpha: 0.3, alpha_hat: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    U,
    V,
}

#[derive(Debug, Clone)]
pub struct ParticleState {
    pub u: Vec<Point>,
    pub v: Vec<Point>,
    params: ParticleParams,
    kernel: Arc<EffectiveKernel>,
}

impl ParticleState {
    /// Diffusivities may be zero (frozen species); the exponents must
    /// satisfy `0 < α < α̂ < 1`.
    pub fn new(u: Vec<Point>, v: Vec<Point>, params: ParticleParams) -> Result<Self> {
        let p = params;
        if !(p.mu >= 0.0 && p.eta >= 0.0 && p.chi.is_finite()) {
            return Err(invalid("diffusivities must be nonnegative and χ finite"));
        }
        if !(0.0 < p.alpha && p.alpha < p.alpha_hat && p.alpha_hat < 1.0) {
            return Err(invalid("need 0 < alpha < alpha_hat < 1"));
        }
        if u.iter().chain(&v).any(|x| !x[0].is_finite() || !x[1].is_finite()) {
            return Err(invalid("positions must be finite"));
        }
        let n = (u.len() + v.len()).max(1);
        let kernel = Arc::new(EffectiveKernel::new(n, p.alpha, p.alpha_hat)?);
        Ok(Self { u, v, params, kernel })
    }

    pub fn params(&self) -> &ParticleParams {
        &self.params
    }

    pub fn total(&self) -> usize {
        self.u.len() + self.v.len()
    }

    pub fn kernel(&self) -> &EffectiveKernel {
        &self.kernel
    }

    pub fn species(&self, s: Species) -> &[Point] {
        match s {
            Species::U => &self.u,
            Species::V => &self.v,
        }
    }
}

/// Uniform cell list over one species with cell size equal to the kernel support.
struct CellList<'a> {
    size: f64,
    points: &'a [Point],
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> CellList<'a> {
    fn new(points: &'a [Point], size: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, size)).or_default().push(i);
        }
        Self { size, points, cells }
    }

    fn key(p: &Point, size: f64) -> (i64, i64) {
        ((p[0] / size).floor() as i64, (p[1] / size).floor() as i64)
    }

    fn field(&self, kernel: &EffectiveKernel, x: Point, n: usize) -> (f64, Point) {
        let (cx, cy) = Self::key(&x, self.size);
        let mut value = 0.0;
        let mut grad = [0.0, 0.0];
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(idx) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in idx {
                        let p = self.points[i];
                        let (k, g) = kernel.eval([x[0] - p[0], x[1] - p[1]]);
                        value += k;
                        grad[0] += g[0];
                        grad[1] += g[1];
                    }
                }
            }
        }
        let inv = 1.0 / n as f64;
        (value * inv, [grad[0] * inv, grad[1] * inv])
    }
}

/// `ŝ(x) = (1/N) Σ_k (W_N ∗ Ŵ_N)(x − P_k)` over one species, with gradient.
pub fn smoothed_field(state: &ParticleState, species: Species, x: Point) -> (f64, Point) {
    let pts = state.species(species);
    let n = state.total().max(1);
    let mut value = 0.0;
    let mut grad = [0.0, 0.0];
    for p in pts {
        let (k, g) = state.kernel.eval([x[0] - p[0], x[1] - p[1]]);
        value += k;
        grad[0] += g[0];
        grad[1] += g[1];
    }
    let inv = 1.0 / n as f64;
    let out = (value * inv, [grad[0] * inv, grad[1] * inv]);
    debug_assert!(out.0 <= state.kernel.peak * pts.len() as f64 * inv * (1.0 + 1e-9) + 1e-300);
    out
}

fn gaussian_pair(rng: &mut ChaCha8Rng) -> Point {
    [StandardNormal.sample(rng), StandardNormal.sample(rng)]
}

/// One Euler–Maruyama step; `step` selects the random substreams.
pub fn em_step(state: &ParticleState, dt: f64, seed: RngSeed, step: u64) -> Result<ParticleState> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let p = state.params;
    let n = state.total().max(1);
    let su = (2.0 * p.mu * dt).sqrt();
    let sv = (2.0 * p.eta * dt).sqrt();
    let cells = (p.chi != 0.0 && !state.v.is_empty()).then(|| CellList::new(&state.v, state.kernel.support));
    let kernel = &state.kernel;
    let u: Vec<Point> = state
        .u
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = seed.stream(step, 0, i as u64);
            let z = gaussian_pair(&mut rng);
            let drift = match &cells {
                Some(c) => {
                    let (_, g) = c.field(kernel, *x, n);
                    [p.chi * g[0], p.chi * g[1]]
                }
                None => [0.0, 0.0],
            };
            [x[0] + drift[0] * dt + su * z[0], x[1] + drift[1] * dt + su * z[1]]
        })
        .collect();
    let v: Vec<Point> = state
        .v
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            if sv == 0.0 {
                return *x;
            }
            let mut rng = seed.stream(step, 1, i as u64);
            let z = gaussian_pair(&mut rng);
            [x[0] + sv * z[0], x[1] + sv * z[1]]
        })
        .collect();
    Ok(ParticleState { u, v, params: state.params, kernel: state.kernel.clone() })
}

fn centroid(pts: &[Point]) -> Point {
    let n = pts.len().max(1) as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    [sx / n, sy / n]
}

/// Radial histogram around the centroid with `bins` rings on `[0, radius]`,
/// scaled to total mass `mass` (particles beyond `radius` are dropped).
pub fn empirical_density(state: &ParticleState, species: Species, bins: usize, radius: f64, mass: f64) -> Result<RadialDensity> {
    let pts = state.species(species);
    if pts.is_empty() {
        return Err(invalid("species has no particles"));
    }
    let grid = RadialGrid::new(bins, radius)?;
    let c = centroid(pts);
    let h = grid.spacing();
    let mut counts = vec![0usize; bins];
    for p in pts {
        let r = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        let i = (r / h) as usize;
        if i < bins {
            counts[i] += 1;
        }
    }
    let scale = mass / pts.len() as f64;
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let area = std::f64::consts::PI * (grid.edge(i + 1).powi(2) - grid.edge(i).powi(2));
            k as f64 * scale / area
        })
        .collect();
    RadialDensity::new(grid, values)
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub times: Vec<f64>,
    pub u_count: Vec<usize>,
    pub v_count: Vec<usize>,
    pub u_centroid: Vec<Point>,
    /// `(1/N_u) Σ |P|²` about the origin.
    pub u_second_moment: Vec<f64>,
    pub v_second_moment: Vec<f64>,
    /// `mean |P(t_end) − P(0)|² / t_end` for the `u` species.
    pub msd_slope: f64,
    /// Standard error of `msd_slope` from the sample variance.
    pub msd_slope_stderr: f64,
    pub final_state: ParticleState,
}

fn second_moment(pts: &[Point]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    pts.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / pts.len() as f64
}

pub fn run_particles(state0: &ParticleState, dt: f64, t_end: f64, seed: RngSeed, record_every: usize) -> Result<ParticleRun> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(invalid("need dt > 0 and t_end > 0"));
    }
    let steps = (t_end / dt).round().max(1.0) as u64;
    let every = record_every.max(1) as u64;
    let mut run = ParticleRun {
        times: vec![],
        u_count: vec![],
        v_count: vec![],
        u_centroid: vec![],
        u_second_moment: vec![],
        v_second_moment: vec![],
        msd_slope: 0.0,
        msd_slope_stderr: 0.0,
        final_state: state0.clone(),
    };
    let record = |run: &mut ParticleRun, t: f64, s: &ParticleState| {
        run.times.push(t);
        run.u_count.push(s.u.len());
        run.v_count.push(s.v.len());
        run.u_centroid.push(centroid(&s.u));
        run.u_second_moment.push(second_moment(&s.u));
        run.v_second_moment.push(second_moment(&s.v));
    };
    record(&mut run, 0.0, state0);
    let mut state = state0.clone();
    for step in 0..steps {
        state = em_step(&state, dt, seed, step)?;
        if (step + 1) % every == 0 || step + 1 == steps {
            record(&mut run, (step + 1) as f64 * dt, &state);
        }
    }
    let t = steps as f64 * dt;
    let d2: Vec<f64> = state
        .u
        .iter()
        .zip(&state0.u)
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / t)
        .collect();
    if !d2.is_empty() {
        let n = d2.len() as f64;
        let mean = d2.iter().sum::<f64>() / n;
        let var = d2.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        run.msd_slope = mean;
        run.msd_slope_stderr = (var / n).sqrt();
    }
    run.final_state = state;
    Ok(run)
}
