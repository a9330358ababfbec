//! Radial parabolic–elliptic Keller-Segel dynamics in cumulative-mass form.
//!
//! With `m(r, t) = ∫_{|x|<r} ρ` and `−Δc = ρ`, the radial chemical gradient
//! is algebraic, `c_r = −m / (2π r)`, and the system collapses to the local
//! equation
//!
//! ```text
//! m_t = m_rr − m_r / r + m m_r / (2π r),     m(0) = 0,  m(R) = M.
//! ```
//!
//! On a ball with Neumann data and the mean-subtracted Poisson equation
//! `−Δc = ρ − 1`, the background-subtracted mass `m̄ = ∫_{|x|<r} (ρ − 1)`
//! obeys instead
//!
//! ```text
//! m̄_t = m̄_rr + (m̄ / 2π − 1) m̄_r / r + m̄,   m̄(0) = m̄(R) = 0.
//! ```
//!
//! Both are discretised at the cell edges `r_i = i h` with centred
//! differences. Pinning the end values makes total mass exactly conserved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticRecord;
use crate::error::{invalid, Error, Result};
use crate::fields::{
    density_from_cumulative, sup_density, CumulativeMass, NegativityPolicy, RadialGrid,
};
use crate::numerics::{interp_linear, linear_fit, quadratic_fit, solve_tridiagonal};
use crate::stationary::{bubble_cumulative, BubbleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Explicit,
    /// Diffusion and drift implicit, drift coefficient `m / 2π r` lagged.
    #[default]
    SemiImplicit,
}

/// Which cumulative-mass equation to advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassEquation {
    /// Free-space system `m_t = m_rr − m_r/r + m m_r/(2π r)`.
    #[default]
    KellerSegel,
    /// Same without the aggregation term (heat equation in mass form).
    DiffusionOnly,
    /// Background-subtracted ball problem `m_t = m_rr + (m/2π − 1) m_r/r + m`.
    BackgroundSubtracted,
}

impl MassEquation {
    fn drift_uses_mass(self) -> bool {
        !matches!(self, MassEquation::DiffusionOnly)
    }

    fn reaction(self) -> f64 {
        if matches!(self, MassEquation::BackgroundSubtracted) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_initial: f64,
    pub dt_min: f64,
    pub cfl_factor: f64,
    pub blowup_sup_threshold: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Time between diagnostic records.
    pub record_interval: f64,
    /// Also record whenever `sup ρ` grew by this factor since the last
    /// record (values ≤ 1 disable it).
    pub record_growth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_initial: 1e-3,
            dt_min: 1e-12,
            cfl_factor: 0.5,
            blowup_sup_threshold: 1e5,
            t_end: 1.0,
            scheme: Scheme::SemiImplicit,
            record_interval: 1e-2,
            record_growth: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_initial) {
            return Err(invalid("need 0 < dt_min <= dt_initial"));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(invalid("cfl_factor must lie in (0, 1]"));
        }
        if !(self.blowup_sup_threshold > 0.0) {
            return Err(invalid("blowup_sup_threshold must be positive"));
        }
        if !(self.t_end > 0.0 && self.record_interval > 0.0) {
            return Err(invalid("t_end and record_interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    BlowupDetected,
    DtUnderflow,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CumulativeMass>,
    pub diagnostics: Vec<DiagnosticRecord>,
    pub termination: Termination,
    pub steps: usize,
    pub last_dt: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &CumulativeMass {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Blow-up time estimate from `1 / sup ρ` over the last 20 records:
    /// first zero after `t_last` of the least-squares parabola, else of the
    /// least-squares line, else `t_last + dt_last`.
    ///
    /// For log-corrected rates `1/sup ρ` is convex in `t`, so a straight
    /// line crosses zero early; the parabola removes most of that bias.
    pub fn blowup_time_estimate(&self) -> Option<f64> {
        if self.termination != Termination::BlowupDetected {
            return None;
        }
        let t_last = *self.times.last()?;
        let start = self.diagnostics.len().saturating_sub(BLOWUP_FIT_RECORDS);
        let tail = &self.diagnostics[start..];
        let t: Vec<f64> = tail.iter().map(|d| d.t - t_last).collect();
        let inv: Vec<f64> = tail.iter().map(|d| 1.0 / d.sup_density).collect();
        let quadratic = quadratic_fit(&t, &inv).ok().and_then(|(a, b, c)| first_positive_root(a, b, c));
        let linear = || match linear_fit(&t, &inv) {
            Ok((slope, intercept)) if slope < 0.0 && -intercept / slope > 0.0 => Some(-intercept / slope),
            _ => None,
        };
        let ahead = quadratic.or_else(linear).unwrap_or(self.last_dt);
        Some(t_last + ahead)
    }
}

/// Smallest positive root of `a u² + b u + c`.
fn first_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let roots: Vec<f64> = if a.abs() < 1e-300 {
        if b == 0.0 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let mut r = vec![q / a];
        if q != 0.0 {
            r.push(c / q);
        }
        r
    };
    roots.into_iter().filter(|&u| u > 0.0 && u.is_finite()).min_by(f64::total_cmp)
}

pub const BLOWUP_FIT_RECORDS: usize = 20;

/// Radial chemical gradient `c_r = −m / (2π r)` at the cell centres, with
/// `m` interpolated linearly in `r²` between the neighbouring edges.
pub fn concentration_gradient(m: &CumulativeMass) -> Vec<f64> {
    let g = m.grid();
    let v = m.values();
    (0..g.node_count())
        .map(|i| {
            let k = i as f64;
            let w = (k + 0.25) / (2.0 * k + 1.0);
            let mid = (1.0 - w) * v[i] + w * v[i + 1];
            -mid / (2.0 * PI * g.node(i))
        })
        .collect()
}

/// Right-hand side of the chosen mass equation at the interior edges
/// (entries 0 and n are zero).
pub fn mass_rhs(m: &CumulativeMass, equation: MassEquation) -> Vec<f64> {
    let g = m.grid();
    let n = g.node_count();
    let h = g.spacing();
    let v = m.values();
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        let r = g.edge(i);
        let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let drift = if equation.drift_uses_mass() { v[i] / (2.0 * PI * r) } else { 0.0 };
        out[i] = d2 + (drift - 1.0 / r) * d1 + equation.reaction() * v[i];
    }
    out
}

/// Largest explicit step, `cfl · h² / 2`.
pub fn explicit_step_bound(grid: &RadialGrid, cfl_factor: f64) -> f64 {
    cfl_factor * grid.spacing() * grid.spacing() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub scheme: Scheme,
    pub cfl_factor: f64,
    pub equation: MassEquation,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { scheme: Scheme::Explicit, cfl_factor: 1.0, equation: MassEquation::KellerSegel }
    }
}

fn step_with(m: &CumulativeMass, dt: f64, opts: &StepOptions) -> Result<CumulativeMass> {
    if !(dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let g = *m.grid();
    let n = g.node_count();
    let v = m.values();
    match opts.scheme {
        Scheme::Explicit => {
            let bound = explicit_step_bound(&g, opts.cfl_factor);
            if dt > bound {
                return Err(Error::StepTooLarge { dt, bound });
            }
            let rhs = mass_rhs(m, opts.equation);
            let mut next = v.to_vec();
            for i in 1..n {
                next[i] = v[i] + dt * rhs[i];
            }
            Ok(CumulativeMass::from_raw(g, next))
        }
        Scheme::SemiImplicit => {
            if n < 2 {
                return Ok(m.clone());
            }
            let h = g.spacing();
            let k = n - 1;
            let mut lower = vec![0.0; k];
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let reaction = opts.equation.reaction();
            for (row, i) in (1..n).enumerate() {
                let r = g.edge(i);
                let drift = if opts.equation.drift_uses_mass() { v[i] / (2.0 * PI * r) } else { 0.0 };
                let b = (drift - 1.0 / r) / (2.0 * h);
                let lo = dt * (1.0 / (h * h) - b);
                let up = dt * (1.0 / (h * h) + b);
                diag[row] = 1.0 + 2.0 * dt / (h * h) - dt * reaction;
                lower[row] = -lo;
                upper[row] = -up;
                rhs[row] = v[i];
                if i == 1 {
                    rhs[row] += lo * v[0];
                }
                if i == n - 1 {
                    rhs[row] += up * v[n];
                }
            }
            solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
            let mut next = Vec::with_capacity(n + 1);
            next.push(v[0]);
            next.extend_from_slice(&rhs);
            next.push(v[n]);
            Ok(CumulativeMass::from_raw(g, next))
        }
    }
}

/// One step of the free-space mass equation; the end values stay pinned.
pub fn step_mass_pde(m: &CumulativeMass, dt: f64, opts: &StepOptions) -> Result<CumulativeMass> {
    let mut o = *opts;
    if o.equation == MassEquation::BackgroundSubtracted {
        o.equation = MassEquation::KellerSegel;
    }
    step_with(m, dt, &o)
}

/// One step of the background-subtracted equation on the ball; `m̄(R) = 0`
/// is enforced on the returned state.
pub fn step_hv(m_bar: &CumulativeMass, dt: f64, scheme: Scheme, cfl_factor: f64) -> Result<CumulativeMass> {
    let mut state = m_bar.clone();
    if state.total() != 0.0 {
        let mut v = state.values().to_vec();
        *v.last_mut().unwrap() = 0.0;
        state = CumulativeMass::from_raw(*m_bar.grid(), v);
    }
    step_with(&state, dt, &StepOptions { scheme, cfl_factor, equation: MassEquation::BackgroundSubtracted })
}

/// `‖RHS(m_λ)‖_∞` of the free-space mass equation at the exact bubble
/// cumulative profile on a disc of radius `radius`.
pub fn bubble_stationarity_residual(spacing: f64, radius: f64, lambda: f64) -> Result<f64> {
    let n = (radius / spacing).round() as usize;
    let grid = RadialGrid::new(n, n as f64 * spacing)?;
    let p = BubbleParams::new(lambda)?;
    let m = CumulativeMass::from_fn(grid, |r| bubble_cumulative(p, r))?;
    Ok(mass_rhs(&m, MassEquation::KellerSegel).iter().map(|v| v.abs()).fold(0.0, f64::max))
}

fn monotone_violation(m: &CumulativeMass) -> bool {
    let tol = 1e-13 * m.values().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    m.values().windows(2).any(|w| w[1] - w[0] < -tol)
}

/// Where the density is below one ulp of `m`, the solve leaves tolerated
/// decreases of a few ulps that would otherwise accumulate. Clamping to
/// `[0, M]` and taking a right-to-left running minimum removes them while
/// keeping both end values.
fn remove_roundoff_decreases(m: CumulativeMass) -> CumulativeMass {
    let grid = *m.grid();
    let mut v = m.values().to_vec();
    let n = v.len() - 1;
    let total = v[n];
    for x in &mut v[1..n] {
        *x = x.clamp(0.0, total);
    }
    for i in (1..n).rev() {
        v[i] = v[i].min(v[i + 1]);
    }
    CumulativeMass::from_raw(grid, v)
}

fn record(t: f64, m: &CumulativeMass) -> DiagnosticRecord {
    let (rho, _) = density_from_cumulative(m, NegativityPolicy::Clamp).expect("clamp never fails");
    DiagnosticRecord::of(t, &rho)
}

/// Integrates the free-space system from `m0` with adaptive steps.
///
/// Steps that produce a decreasing `m` (negative density) or non-finite
/// values are rejected and retried at half the step; decreases at the
/// roundoff level are removed from accepted states. After 20 accepted
/// steps in a row the step doubles again, up to the cap. The cap is
/// `min(dt_initial, cfl h²/2)` for the explicit scheme and
/// `min(dt_initial, cfl / sup ρ)` for the semi-implicit one.
pub fn run(m0: &CumulativeMass, config: &SolverConfig) -> Result<Trajectory> {
    run_equation(m0, config, MassEquation::KellerSegel)
}

pub fn run_equation(m0: &CumulativeMass, config: &SolverConfig, equation: MassEquation) -> Result<Trajectory> {
    config.validate()?;
    let grid = *m0.grid();
    let opts = StepOptions { scheme: config.scheme, cfl_factor: config.cfl_factor, equation };
    let mut m = m0.clone();
    let mut t = 0.0;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![m.clone()],
        diagnostics: vec![record(0.0, &m)],
        termination: Termination::ReachedTEnd,
        steps: 0,
        last_dt: 0.0,
    };
    let mut next_record = config.record_interval;
    let mut last_recorded_sup = traj.diagnostics[0].sup_density;
    let mut dt = config.dt_initial;
    let mut quiet = 0usize;

    loop {
        let sup = sup_density(&m);
        if sup > config.blowup_sup_threshold {
            traj.termination = Termination::BlowupDetected;
            break;
        }
        if t >= config.t_end * (1.0 - 1e-14) {
            break;
        }
        let cap = match config.scheme {
            Scheme::Explicit => config.dt_initial.min(explicit_step_bound(&grid, config.cfl_factor)),
            Scheme::SemiImplicit => config.dt_initial.min(config.cfl_factor / sup.max(1e-300)),
        };
        if cap < config.dt_min {
            traj.termination = Termination::DtUnderflow;
            break;
        }
        dt = dt.min(cap);
        let remaining_to_record = next_record - t;
        let mut this_dt = dt.min(config.t_end - t);
        if remaining_to_record > 0.0 && remaining_to_record < this_dt {
            this_dt = remaining_to_record;
        }
        let candidate = step_with(&m, this_dt, &opts);
        let ok = match &candidate {
            Ok(c) => c.values().iter().all(|v| v.is_finite()) && !monotone_violation(c),
            Err(_) => false,
        };
        if !ok {
            dt *= 0.5;
            quiet = 0;
            if dt < config.dt_min {
                traj.termination = Termination::DtUnderflow;
                break;
            }
            continue;
        }
        m = candidate?;
        if equation != MassEquation::BackgroundSubtracted {
            m = remove_roundoff_decreases(m);
        }
        t += this_dt;
        traj.steps += 1;
        traj.last_dt = this_dt;
        quiet += 1;
        if quiet >= 20 {
            dt = (2.0 * dt).min(cap);
            quiet = 0;
        }
        let on_schedule = t >= next_record * (1.0 - 1e-12);
        let grown = config.record_growth > 1.0 && sup_density(&m) >= last_recorded_sup * config.record_growth;
        if on_schedule || grown {
            let rec = record(t, &m);
            last_recorded_sup = rec.sup_density;
            traj.times.push(t);
            traj.states.push(m.clone());
            traj.diagnostics.push(rec);
            while next_record <= t * (1.0 + 1e-12) {
                next_record += config.record_interval;
            }
        }
    }
    if *traj.times.last().unwrap() < t {
        traj.times.push(t);
        traj.states.push(m.clone());
        traj.diagnostics.push(record(t, &m));
    }
    Ok(traj)
}

/// `w(r) = ∫_0^r ξ m(ξ) dξ` at the edges (trapezoid rule).
pub fn w_from_m(m: &CumulativeMass) -> Vec<f64> {
    let g = m.grid();
    let h = g.spacing();
    let v = m.values();
    let mut w = Vec::with_capacity(v.len());
    w.push(0.0);
    for i in 1..v.len() {
        let prev = w[i - 1];
        w.push(prev + 0.5 * h * (g.edge(i - 1) * v[i - 1] + g.edge(i) * v[i]));
    }
    w
}

/// Self-similar frame `y = r (T − t)^{−1/2}`, `τ = −log(T − t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarFrame {
    pub blowup_time: f64,
    pub tau: f64,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

/// Resamples `w` (given at the edges of `grid`) as
/// `W(y, τ) = (T − t)^{−1} w(y (T − t)^{1/2}, t)` on the fixed `y` grid.
pub fn to_selfsimilar(grid: &RadialGrid, w: &[f64], t: f64, blowup_time: f64, y: &[f64]) -> Result<SelfSimilarFrame> {
    if !(t < blowup_time) {
        return Err(Error::PastSingularity { t, singular: blowup_time });
    }
    if w.len() != grid.node_count() + 1 {
        return Err(Error::SizeMismatch { left: w.len(), right: grid.node_count() + 1 });
    }
    let gap = blowup_time - t;
    let edges = grid.edges();
    let scale = gap.sqrt();
    let values = y
        .iter()
        .map(|&yy| {
            interp_linear(&edges, w, yy * scale)
                .map(|v| v / gap)
                .ok_or_else(|| invalid(format!("y = {yy} maps outside the disc at t = {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelfSimilarFrame { blowup_time, tau: -gap.ln(), y: y.to_vec(), values })
}

/// `S(t) = (T − t) sup ρ(·, t)` and the type-II classification.
#[derive(Debug, Clone, PartialEq)]
pub struct SIndicator {
    pub blowup_time: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Slope of `log S` against `log(T − t)` over the final decade of
    /// `T − t`; negative means `S` grows as `t ↑ T`.
    pub final_decade_slope: f64,
    /// `S` strictly increases from record to record over the final decade.
    pub increasing_over_final_decade: bool,
    /// Increasing over the final decade with slope below `−TYPE_II_SLOPE`.
    pub type_ii: bool,
}

/// `S` must grow by at least this much in `log S` per decade of `T − t`
/// (about 2.3 %) to count as increasing.
pub const TYPE_II_SLOPE: f64 = 0.01;

/// `S(t)` from raw `(t, sup ρ)` samples.
pub fn s_indicator_series(times: &[f64], sups: &[f64], blowup_time: f64) -> Result<SIndicator> {
    if times.len() != sups.len() {
        return Err(Error::SizeMismatch { left: times.len(), right: sups.len() });
    }
    let (times, values): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(sups)
        .filter(|(t, _)| **t < blowup_time)
        .map(|(&t, &s)| (t, (blowup_time - t) * s))
        .unzip();
    let last_gap = blowup_time - times.last().ok_or(Error::DegenerateFit("no samples before T".into()))?;
    let (lx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&values)
        .filter(|(t, _)| blowup_time - **t <= 10.0 * last_gap * (1.0 + 1e-9))
        .map(|(t, s)| ((blowup_time - t).ln(), s.ln()))
        .unzip();
    let (slope, _) = linear_fit(&lx, &ly)?;
    let increasing = ly.windows(2).all(|w| w[1] > w[0]);
    Ok(SIndicator {
        blowup_time,
        times,
        values,
        final_decade_slope: slope,
        increasing_over_final_decade: increasing,
        type_ii: increasing && slope < -TYPE_II_SLOPE,
    })
}

/// `S(t)` along a trajectory that ended in blow-up.
pub fn s_indicator(traj: &Trajectory, blowup_time: f64) -> Result<SIndicator> {
    if traj.termination != Termination::BlowupDetected {
        return Err(Error::NoBlowup);
    }
    let times: Vec<f64> = traj.diagnostics.iter().map(|d| d.t).collect();
    let sups: Vec<f64> = traj.diagnostics.iter().map(|d| d.sup_density).collect();
    s_indicator_series(&times, &sups, blowup_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{cumulative_from_density, RadialDensity};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize, r: f64) -> RadialGrid {
        RadialGrid::new(n, r).unwrap()
    }

    fn gaussian_mass(g: RadialGrid, mass: f64, width: f64) -> CumulativeMass {
        let rho = RadialDensity::from_fn(g, |r| mass / (PI * width * width) * (-(r * r) / (width * width)).exp())
            .unwrap();
        cumulative_from_density(&rho)
    }

    #[test]
    fn gradient_cases() {
        let g = grid(400, 20.0);
        let zero = CumulativeMass::from_fn(g, |_| 0.0).unwrap();
        assert!(concentration_gradient(&zero).iter().all(|&c| c == 0.0));

        let p = BubbleParams::new(1.0).unwrap();
        let m = CumulativeMass::from_fn(g, |r| bubble_cumulative(p, r)).unwrap();
        let cr = concentration_gradient(&m);
        let h = g.spacing();
        for (i, c) in cr.iter().enumerate() {
            let r = g.node(i);
            assert!((c + 4.0 * r / (1.0 + r * r)).abs() < 2.0 * h * h, "r={r}");
        }
        // far field −4/r
        let r_far = g.node(399);
        assert!((cr[399] * r_far + 4.0).abs() < 0.02);

        let uni = CumulativeMass::from_fn(g, |r| PI * r * r).unwrap();
        for (i, c) in concentration_gradient(&uni).iter().enumerate() {
            assert!((c + g.node(i) / 2.0).abs() < h * h);
        }
    }

    #[test]
    fn zero_state_is_fixed() {
        let g = grid(64, 4.0);
        let zero = CumulativeMass::from_fn(g, |_| 0.0).unwrap();
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit] {
            let opts = StepOptions { scheme, ..Default::default() };
            let next = step_mass_pde(&zero, 1e-3, &opts).unwrap();
            assert!(next.values().iter().all(|&v| v == 0.0));
            let hv = step_hv(&zero, 1e-3, scheme, 1.0).unwrap();
            assert!(hv.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn explicit_rejects_large_steps() {
        let g = grid(100, 1.0);
        let m = gaussian_mass(g, 1.0, 0.2);
        let bound = explicit_step_bound(&g, 1.0);
        assert!(matches!(step_mass_pde(&m, 2.0 * bound, &StepOptions::default()), Err(Error::StepTooLarge { .. })));
        let semi = StepOptions { scheme: Scheme::SemiImplicit, ..Default::default() };
        assert!(step_mass_pde(&m, 100.0 * bound, &semi).is_ok());
    }

    #[test]
    fn bubble_is_discretely_stationary_to_second_order() {
        let e: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| bubble_stationarity_residual(h, 10.0, 1.0).unwrap())
            .collect();
        for o in crate::numerics::convergence_orders(&e) {
            assert!((1.8..=2.2).contains(&o), "order {o}, residuals {e:?}");
        }
    }

    #[test]
    fn diffusion_only_spreads_gaussian() {
        let g = grid(200, 10.0);
        let mut m = gaussian_mass(g, 5.0, 0.5);
        let opts = StepOptions { equation: MassEquation::DiffusionOnly, ..Default::default() };
        let dt = explicit_step_bound(&g, 0.9);
        let mut sup = sup_density(&m);
        for _ in 0..200 {
            m = step_mass_pde(&m, dt, &opts).unwrap();
            let s = sup_density(&m);
            assert!(s < sup);
            sup = s;
        }
    }

    #[test]
    fn diffusion_only_converges_to_heat_solution() {
        // exact radial heat kernel in mass form: m = M (1 − exp(−r² / 4(t + t0)))
        let exact = |r: f64, t: f64| 1.0 - (-(r * r) / (4.0 * (t + 0.25))).exp();
        let errors: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let g = grid(n, 8.0);
                let mut m = CumulativeMass::from_fn(g, |r| exact(r, 0.0)).unwrap();
                let mut v = m.values().to_vec();
                *v.last_mut().unwrap() = 1.0;
                m = CumulativeMass::new(g, v).unwrap();
                let steps = 4 * n * n / 50;
                let dt = 0.2 / steps as f64;
                let opts = StepOptions { equation: MassEquation::DiffusionOnly, ..Default::default() };
                for _ in 0..steps {
                    m = step_mass_pde(&m, dt, &opts).unwrap();
                }
                m.values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v - exact(g.edge(i), 0.2)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for o in crate::numerics::convergence_orders(&errors) {
            assert!(o > 1.8, "orders from {errors:?}");
        }
    }

    fn independent_hv_rhs(v: &[f64], h: f64) -> Vec<f64> {
        let n = v.len() - 1;
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            let r = i as f64 * h;
            let m = v[i];
            let mr = (v[i + 1] - v[i - 1]) / (2.0 * h);
            let mrr = (v[i + 1] + v[i - 1] - 2.0 * v[i]) / (h * h);
            out[i] = mrr + (m / (2.0 * PI) - 1.0) * mr / r + m;
        }
        out
    }

    #[test]
    fn hv_step_matches_direct_rhs() {
        let g = grid(128, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(0.5..3.0);
            let m = CumulativeMass::from_fn(g, |r| a * (PI * r / 2.0).sin() * (1.0 + b * r * r) * r).unwrap();
            let mut v = m.values().to_vec();
            *v.last_mut().unwrap() = 0.0;
            let m = CumulativeMass::new(g, v.clone()).unwrap();
            let dt = explicit_step_bound(&g, 0.5);
            let next = step_hv(&m, dt, Scheme::Explicit, 0.5).unwrap();
            let rhs = independent_hv_rhs(&v, g.spacing());
            for i in 0..=128 {
                let expected = v[i] + dt * rhs[i];
                assert!((next.values()[i] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
            assert_eq!(next.total(), 0.0);
        }
    }

    #[test]
    fn hv_linear_term_isolation() {
        let g = grid(32, 1.0);
        let mut v = vec![0.0; 33];
        for x in v.iter_mut().take(30).skip(3) {
            *x = 2.5;
        }
        let m = CumulativeMass::new(g, v).unwrap();
        let dt = explicit_step_bound(&g, 0.5);
        let next = step_hv(&m, dt, Scheme::Explicit, 0.5).unwrap();
        for i in 4..29 {
            assert_relative_eq!(next.values()[i], 2.5 * (1.0 + dt), max_relative = 1e-14);
        }
    }

    #[test]
    fn mass_is_conserved_exactly() {
        let g = grid(256, 6.0);
        let mut m = gaussian_mass(g, 6.0 * PI, 0.7);
        let total = m.total();
        let opts = StepOptions { scheme: Scheme::SemiImplicit, ..Default::default() };
        for _ in 0..1000 {
            m = step_mass_pde(&m, 1e-3, &opts).unwrap();
        }
        assert_eq!(m.total(), total);
    }

    #[test]
    fn run_subcritical_reaches_end() {
        let g = grid(256, 12.0);
        let m0 = gaussian_mass(g, 4.0 * PI, 1.0);
        let cfg = SolverConfig { t_end: 1.0, record_interval: 0.1, ..Default::default() };
        let traj = run(&m0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd);
        let sups: Vec<f64> = traj.diagnostics.iter().map(|d| d.sup_density).collect();
        assert!(sups.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times.len(), traj.states.len());
    }

    #[test]
    fn run_supercritical_blows_up() {
        let g = grid(400, 2.0);
        let m0 = gaussian_mass(g, 10.0 * PI, 0.2);
        let cfg = SolverConfig { t_end: 1.0, blowup_sup_threshold: 2e3, ..Default::default() };
        let traj = run(&m0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::BlowupDetected);
        let t_est = traj.blowup_time_estimate().unwrap();
        assert!(t_est >= *traj.times.last().unwrap());
        assert!(s_indicator(&traj, t_est).is_ok());
    }

    #[test]
    fn forced_underflow() {
        let g = grid(200, 1.0);
        let m0 = gaussian_mass(g, 10.0 * PI, 0.01);
        let cfg = SolverConfig {
            dt_initial: 1e-4,
            dt_min: 1e-4,
            scheme: Scheme::Explicit,
            ..Default::default()
        };
        assert_eq!(run(&m0, &cfg).unwrap().termination, Termination::DtUnderflow);
    }

    #[test]
    fn w_from_m_cases() {
        let g = grid(100, 2.0);
        assert!(w_from_m(&CumulativeMass::from_fn(g, |_| 0.0).unwrap()).iter().all(|&w| w == 0.0));
        // m ≡ 8π away from the pinned origin value
        let w = w_from_m(&CumulativeMass::from_fn(g, |_| 8.0 * PI).unwrap());
        let h = g.spacing();
        for (i, wi) in w.iter().enumerate() {
            let r = g.edge(i);
            assert!((wi - 4.0 * PI * r * r).abs() <= 8.0 * PI * h * h);
        }
        let w = w_from_m(&CumulativeMass::from_fn(g, |r| r).unwrap());
        for (i, wi) in w.iter().enumerate() {
            let r = g.edge(i);
            assert!((wi - r * r * r / 3.0).abs() <= r * h * h);
        }
    }

    #[test]
    fn selfsimilar_transform_cases() {
        let g = grid(2000, 4.0);
        let w: Vec<f64> = g.edges().iter().map(|r| 4.0 * PI * r * r).collect();
        let y: Vec<f64> = (0..40).map(|j| j as f64 * 0.1).collect();
        for t in [0.0, 0.5, 0.9] {
            let f = to_selfsimilar(&g, &w, t, 1.0, &y).unwrap();
            assert_relative_eq!(f.tau, -(1.0 - t).ln());
            for (yy, v) in y.iter().zip(&f.values) {
                assert!((v - 4.0 * PI * yy * yy).abs() < 1e-3 * (1.0 + yy * yy));
            }
        }
        let zero = vec![0.0; 2001];
        assert!(to_selfsimilar(&g, &zero, 0.3, 1.0, &y).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(matches!(to_selfsimilar(&g, &w, 1.0, 1.0, &y), Err(Error::PastSingularity { .. })));

        // w(r, t) = (T−t) F(r (T−t)^{-1/2}) gives the same W at every time
        let profile = |s: f64| s * s / (1.0 + s * s);
        let frames: Vec<Vec<f64>> = [0.2, 0.7]
            .iter()
            .map(|&t| {
                let gap: f64 = 1.0 - t;
                let w: Vec<f64> = g.edges().iter().map(|r| gap * profile(r / gap.sqrt())).collect();
                to_selfsimilar(&g, &w, t, 1.0, &y).unwrap().values
            })
            .collect();
        for (a, b) in frames[0].iter().zip(&frames[1]) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn s_indicator_mock_series() {
        let big_t = 1.0;
        let times: Vec<f64> = (0..60).map(|j| big_t - 10f64.powf(-1.0 - j as f64 * 0.05)).collect();
        let type_one: Vec<f64> = times.iter().map(|t| 1.0 / (big_t - t)).collect();
        let s1 = s_indicator_series(&times, &type_one, big_t).unwrap();
        assert!(s1.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(!s1.type_ii);

        let type_two: Vec<f64> = times.iter().map(|t| (big_t - t).ln().abs() / (big_t - t)).collect();
        let s2 = s_indicator_series(&times, &type_two, big_t).unwrap();
        assert!(s2.values.windows(2).all(|w| w[1] > w[0]));
        assert!(s2.type_ii);
    }

    #[test]
    fn s_indicator_requires_blowup() {
        let g = grid(64, 10.0);
        let m0 = gaussian_mass(g, 2.0 * PI, 1.0);
        let traj = run(&m0, &SolverConfig { t_end: 0.05, ..Default::default() }).unwrap();
        assert_eq!(s_indicator(&traj, 1.0), Err(Error::NoBlowup));
        assert!(traj.blowup_time_estimate().is_none());
    }
}
