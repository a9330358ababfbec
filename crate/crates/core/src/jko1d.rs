//! Minimizing-movement (JKO) scheme on the line in quantile coordinates.
//!
//! A probability density is represented by its quantiles `q_k` at the mass
//! levels `(k + 1/2)/K`. In these coordinates the Wasserstein-2 distance is
//! the `L²(0,1)` distance of the quantile functions, so each step
//!
//! ```text
//! q^{n+1} ∈ argmin_q  F[q] + W₂²(q, q^n) / 2τ
//! ```
//!
//! is a smooth finite-dimensional problem over increasing vectors.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fields::QuantileDensity;
use crate::potential::ScalarFn;

/// `F[ρ] = c ∫ρ log ρ + ∫ρ V + ½ ∬ W(x − y) dρ dρ`.
#[derive(Debug, Clone)]
pub struct FreeEnergySpec {
    entropy_coefficient: f64,
    potential: ScalarFn,
    interaction: ScalarFn,
}

impl FreeEnergySpec {
    pub fn new(entropy_coefficient: f64, potential: ScalarFn, interaction: ScalarFn) -> Result<Self> {
        if !(entropy_coefficient >= 0.0) || !entropy_coefficient.is_finite() {
            return Err(invalid("entropy coefficient must be finite and nonnegative"));
        }
        for i in 0..=400 {
            let z = -10.0 + i as f64 * 0.05;
            let (a, b) = (interaction.value(z), interaction.value(-z));
            if !a.is_finite() || !potential.value(z).is_finite() {
                return Err(invalid(format!("energy is not finite at {z}")));
            }
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(invalid(format!("interaction is not even at z = {z}")));
            }
        }
        Ok(Self { entropy_coefficient, potential, interaction })
    }

    /// Linear Fokker-Planck energy `∫ρ log ρ + ∫ρ V`.
    pub fn fokker_planck(potential: ScalarFn) -> Self {
        Self::new(1.0, potential, ScalarFn::Zero).expect("zero interaction is even")
    }

    pub fn entropy_coefficient(&self) -> f64 {
        self.entropy_coefficient
    }

    pub fn potential(&self) -> &ScalarFn {
        &self.potential
    }

    pub fn interaction(&self) -> &ScalarFn {
        &self.interaction
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkoConfig {
    pub tau: f64,
    pub levels: usize,
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
}

impl Default for JkoConfig {
    fn default() -> Self {
        Self { tau: 1e-2, levels: 256, inner_tolerance: 1e-12, inner_max_iterations: 20_000 }
    }
}

impl JkoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau must be positive"));
        }
        if self.levels < 16 {
            return Err(invalid("need at least 16 quantile levels"));
        }
        if !(self.inner_tolerance > 0.0) || self.inner_max_iterations == 0 {
            return Err(invalid("inner tolerance and iteration budget must be positive"));
        }
        Ok(())
    }
}

fn same_len(a: &QuantileDensity, b: &QuantileDensity) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Wasserstein-2 distance between two quantile densities with equal `K`.
pub fn w2(a: &QuantileDensity, b: &QuantileDensity) -> Result<f64> {
    same_len(a, b)?;
    Ok(mean_sq_diff(a.quantiles(), b.quantiles()).sqrt())
}

/// Quantile-wise blend `(1 − t) a + t b`.
pub fn displacement_interpolate(a: &QuantileDensity, b: &QuantileDensity, t: f64) -> Result<QuantileDensity> {
    same_len(a, b)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("interpolation parameter {t} outside [0, 1]")));
    }
    let q = a.quantiles().iter().zip(b.quantiles()).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    QuantileDensity::new(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub entropy: f64,
    pub potential: f64,
    pub interaction: f64,
    pub total: f64,
}

/// Quantile entropy `−(1/(K−1)) Σ log(K (q_{k+1} − q_k))`; `+∞` on ties.
fn quantile_entropy(q: &[f64]) -> f64 {
    let k = q.len() as f64;
    let mut s = 0.0;
    for w in q.windows(2) {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return f64::INFINITY;
        }
        s += (k * gap).ln();
    }
    -s / (k - 1.0)
}

fn interaction_sum(w: &ScalarFn, q: &[f64]) -> f64 {
    let k = q.len() as f64;
    let s: f64 = q.par_iter().map(|&x| q.iter().map(|&y| w.value(x - y)).sum::<f64>()).sum();
    0.5 * s / (k * k)
}

fn energy_parts(spec: &FreeEnergySpec, q: &[f64]) -> EnergyParts {
    let k = q.len() as f64;
    let entropy = if spec.entropy_coefficient > 0.0 { spec.entropy_coefficient * quantile_entropy(q) } else { 0.0 };
    let potential =
        if spec.potential.is_zero() { 0.0 } else { q.iter().map(|&x| spec.potential.value(x)).sum::<f64>() / k };
    let interaction = if spec.interaction.is_zero() { 0.0 } else { interaction_sum(&spec.interaction, q) };
    EnergyParts { entropy, potential, interaction, total: entropy + potential + interaction }
}

/// Evaluates the free energy of a quantile density.
pub fn free_energy_eval(spec: &FreeEnergySpec, rho: &QuantileDensity) -> Result<EnergyParts> {
    let q = rho.quantiles();
    if spec.entropy_coefficient > 0.0 {
        if q.len() < 2 {
            return Err(invalid("entropy needs at least two quantiles"));
        }
        if let Some(i) = q.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NotStrictlyIncreasing { index: i + 1 });
        }
    }
    Ok(energy_parts(spec, q))
}

fn energy_gradient(spec: &FreeEnergySpec, q: &[f64], grad: &mut [f64]) {
    let n = q.len();
    let k = n as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    if spec.entropy_coefficient > 0.0 {
        let c = spec.entropy_coefficient / (k - 1.0);
        for j in 0..n - 1 {
            let inv = 1.0 / (q[j + 1] - q[j]);
            grad[j] += c * inv;
            grad[j + 1] -= c * inv;
        }
    }
    if !spec.potential.is_zero() {
        for (g, &x) in grad.iter_mut().zip(q) {
            *g += spec.potential.derivative(x) / k;
        }
    }
    if !spec.interaction.is_zero() {
        let w = &spec.interaction;
        grad.par_iter_mut().zip(q.par_iter()).for_each(|(g, &x)| {
            *g += q.iter().map(|&y| w.derivative(x - y)).sum::<f64>() / (k * k);
        });
    }
}

/// Euclidean projection onto `{q : q_{k+1} − q_k ≥ gap}` by pool-adjacent-violators.
pub fn isotonic_projection(x: &[f64], gap: f64) -> Vec<f64> {
    let mut means: Vec<f64> = Vec::with_capacity(x.len());
    let mut counts: Vec<usize> = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        let mut mean = v - i as f64 * gap;
        let mut count = 1usize;
        while let Some(&last) = means.last() {
            if last <= mean {
                break;
            }
            let c = counts.pop().unwrap();
            means.pop();
            mean = (last * c as f64 + mean * count as f64) / (c + count) as f64;
            count += c;
        }
        means.push(mean);
        counts.push(count);
    }
    let mut out = Vec::with_capacity(x.len());
    for (m, c) in means.iter().zip(&counts) {
        for _ in 0..*c {
            let i = out.len();
            out.push(m + i as f64 * gap);
        }
    }
    out
}

struct Objective<'a> {
    spec: &'a FreeEnergySpec,
    anchor: &'a [f64],
    tau: f64,
}

impl Objective<'_> {
    fn value(&self, q: &[f64]) -> f64 {
        energy_parts(self.spec, q).total + mean_sq_diff(q, self.anchor) / (2.0 * self.tau)
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        energy_gradient(self.spec, q, grad);
        let scale = 1.0 / (self.tau * q.len() as f64);
        for ((g, x), a) in grad.iter_mut().zip(q).zip(self.anchor) {
            *g += (x - a) * scale;
        }
    }
}

/// Outcome of a single minimizing-movement step.
#[derive(Debug, Clone)]
pub struct JkoStep {
    pub next: QuantileDensity,
    pub energy: f64,
    pub distance: f64,
    pub iterations: usize,
}

/// One JKO step: projected gradient descent with Barzilai-Borwein steps,
/// Armijo backtracking and isotonic projection, started at `rho`.
///
/// Iterates only ever decrease the objective, so the returned state obeys
/// `F[ρ'] + W₂²(ρ, ρ')/2τ ≤ F[ρ]` whenever the start is admissible.
pub fn jko_step(rho: &QuantileDensity, spec: &FreeEnergySpec, config: &JkoConfig) -> Result<JkoStep> {
    config.validate()?;
    let anchor = rho.quantiles();
    let n = anchor.len();
    let obj = Objective { spec, anchor, tau: config.tau };
    let span = (anchor[n - 1] - anchor[0]).abs().max(1.0);
    let floor = if spec.entropy_coefficient > 0.0 { 1e-12 * span } else { f64::NEG_INFINITY };
    let project = |x: &[f64]| {
        if floor.is_finite() {
            isotonic_projection(x, floor)
        } else {
            isotonic_projection(x, 0.0)
        }
    };

    let mut q = if obj.value(anchor).is_finite() { anchor.to_vec() } else { project(anchor) };
    let mut f = obj.value(&q);
    if !f.is_finite() {
        return Err(invalid("free energy is not finite at the starting state"));
    }
    let mut g = vec![0.0; n];
    obj.gradient(&q, &mut g);
    let base_step = config.tau * n as f64;
    let mut step = base_step;
    let mut history = vec![f];
    let mut g_new = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.inner_max_iterations {
        iterations += 1;
        let mut accepted = None;
        let mut alpha = step;
        for _ in 0..80 {
            let trial: Vec<f64> = q.iter().zip(&g).map(|(x, d)| x - alpha * d).collect();
            let trial = project(&trial);
            let moved: f64 = trial.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                accepted = Some((trial, f, 0.0));
                break;
            }
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f - 1e-4 * moved / alpha {
                accepted = Some((trial, ft, moved));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, moved)) = accepted else {
            converged = true; // no descent available at roundoff level
            break;
        };
        if moved == 0.0 {
            converged = true;
            break;
        }
        obj.gradient(&trial, &mut g_new);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for i in 0..n {
            let s = trial[i] - q[i];
            sy += s * (g_new[i] - g[i]);
            ss += s * s;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-10 * base_step, 1e6 * base_step) } else { 2.0 * alpha };
        q = trial;
        f = ft;
        std::mem::swap(&mut g, &mut g_new);
        history.push(f);
        if history.len() > 10 && history[history.len() - 11] - f < config.inner_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, best: q, best_objective: f });
    }
    let energy = energy_parts(spec, &q).total;
    let distance = mean_sq_diff(&q, anchor).sqrt();
    Ok(JkoStep { next: QuantileDensity::from_raw(q), energy, distance, iterations })
}

/// Per-step and cumulative diagnostics of a JKO run.
#[derive(Debug, Clone)]
pub struct JkoRun {
    pub tau: f64,
    pub states: Vec<QuantileDensity>,
    pub energies: Vec<f64>,
    /// `W₂(ρ^n, ρ^{n+1})`.
    pub increments: Vec<f64>,
    /// Running sums of `W₂²/2τ`.
    pub cumulative_dissipation: Vec<f64>,
    /// `F[ρ^n] − F[ρ^{n+1}] − W₂²/2τ`, nonnegative up to solver tolerance.
    pub step_slack: Vec<f64>,
    pub sup_energy_ok: bool,
    /// `Σ W₂²/2τ ≤ F[ρ⁰] − min_n F[ρ^n]` (up to the inner tolerance per step).
    pub quadratic_estimate_ok: bool,
    /// `sqrt(2 (F[ρ⁰] − min F))`.
    pub holder_constant: f64,
    /// `max W₂(ρ^n, ρ^m) / |t_n − t_m|^{1/2}` over all recorded pairs.
    pub holder_ratio: f64,
}

impl JkoRun {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.tau).collect()
    }
}

fn step_with_refinement(rho: &QuantileDensity, spec: &FreeEnergySpec, config: &JkoConfig, depth: u32) -> Result<(QuantileDensity, f64)> {
    match jko_step(rho, spec, config) {
        Ok(s) => Ok((s.next, s.energy)),
        Err(Error::NonConvergence { .. }) if depth < 4 => {
            let half = JkoConfig { tau: 0.5 * config.tau, ..*config };
            let (mid, _) = step_with_refinement(rho, spec, &half, depth + 1)?;
            step_with_refinement(&mid, spec, &half, depth + 1)
        }
        Err(e) => Err(e),
    }
}

/// Runs `n_steps` JKO steps. A step whose inner solve fails is retried as
/// two steps of half size (up to four times), which keeps the per-step
/// energy inequality valid for the combined step.
pub fn run_jko(rho0: &QuantileDensity, spec: &FreeEnergySpec, config: &JkoConfig, n_steps: usize) -> Result<JkoRun> {
    config.validate()?;
    let e0 = free_energy_eval(spec, rho0)?.total;
    let mut states = vec![rho0.clone()];
    let mut energies = vec![e0];
    let mut increments = Vec::with_capacity(n_steps);
    let mut cumulative = Vec::with_capacity(n_steps);
    let mut slack = Vec::with_capacity(n_steps);
    let mut acc = 0.0;
    for _ in 0..n_steps {
        let prev = states.last().unwrap();
        let (next, energy) = step_with_refinement(prev, spec, config, 0)?;
        let d = w2(prev, &next)?;
        let quad = d * d / (2.0 * config.tau);
        acc += quad;
        slack.push(energies.last().unwrap() - energy - quad);
        increments.push(d);
        cumulative.push(acc);
        energies.push(energy);
        states.push(next);
    }
    let tol = config.inner_tolerance * (n_steps.max(1) as f64) + 1e-12 * e0.abs().max(1.0);
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let sup_energy_ok = energies.iter().all(|&e| e <= e0 + tol);
    let quadratic_estimate_ok = acc <= e0 - e_min + tol;
    let holder_constant = (2.0 * (e0 - e_min).max(0.0)).sqrt();
    let holder_ratio = (0..states.len())
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in i + 1..states.len() {
                let d = mean_sq_diff(states[i].quantiles(), states[j].quantiles()).sqrt();
                worst = worst.max(d / ((j - i) as f64 * config.tau).sqrt());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(JkoRun {
        tau: config.tau,
        states,
        energies,
        increments,
        cumulative_dissipation: cumulative,
        step_slack: slack,
        sup_energy_ok,
        quadratic_estimate_ok,
        holder_constant,
        holder_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityProbe {
    /// Minimal centred second difference of `t ↦ F[ρ_t]` divided by `Δt²`.
    pub min_second_derivative: f64,
    /// The same divided by `W₂(a, b)²`.
    pub ratio: f64,
}

/// Samples `F` along the displacement interpolation from `a` to `b`.
pub fn displacement_convexity_probe(spec: &FreeEnergySpec, a: &QuantileDensity, b: &QuantileDensity, samples: usize) -> Result<ConvexityProbe> {
    same_len(a, b)?;
    if samples < 3 {
        return Err(invalid("need at least three samples"));
    }
    let d = w2(a, b)?;
    if d == 0.0 {
        return Err(invalid("endpoints coincide"));
    }
    let dt = 1.0 / (samples - 1) as f64;
    let values = (0..samples)
        .map(|i| {
            let t = (i as f64 * dt).min(1.0);
            free_energy_eval(spec, &displacement_interpolate(a, b, t)?).map(|e| e.total)
        })
        .collect::<Result<Vec<_>>>()?;
    let min = values.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]) / (dt * dt)).fold(f64::INFINITY, f64::min);
    Ok(ConvexityProbe { min_second_derivative: min, ratio: min / (d * d) })
}
