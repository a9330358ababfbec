//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line with
//! its measured values and elapsed time, and fails if either the numerical
//! tolerance or the time budget is exceeded.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kslab::burgers::{blowup_rate_fit, profile_solve, selfsimilar_exponents, shock_time, BurgersProblem, Profile};
use kslab::diagnostics::{loghls_deficit, loghls_minimiser, second_moment_rate_check};
use kslab::entropy_toolkit::{
    bakry_emery_lambda, ckp_deficit, decay_rate_fit, fp_run, hwi_deficit, logsob_deficit, random_mixture,
    talagrand_deficit, Density1D, FpOptions, PotentialSpec,
};
use kslab::fields::{cumulative_from_density, density_from_cumulative, CumulativeMass, NegativityPolicy, RadialDensity, RadialGrid};
use kslab::jko1d::{run_jko, w2, FreeEnergySpec, JkoConfig};
use kslab::ks_radial::{bubble_stationarity_residual, run, s_indicator, step_mass_pde, Scheme, SolverConfig, StepOptions, Termination};
use kslab::numerics::convergence_orders;
use kslab::particles::{run_particles, ParticleParams, ParticleState, RngSeed};
use kslab::potential::ScalarFn;
use kslab::stationary::{laguerre_eigen_check, liouville_residual};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn criterion(id: u32, name: &str, budget: Duration, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let within = elapsed <= budget;
    let (ok, detail) = match outcome {
        Ok(d) => (within, d),
        Err(d) => (false, d),
    };
    println!(
        "{} criterion {id:>2} {name}: {detail} [{:.2}s / budget {}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(ok, "criterion {id} failed: {detail} (elapsed {elapsed:?}, budget {budget:?})");
}

fn check(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_mass(grid: RadialGrid, mass: f64, width: f64) -> CumulativeMass {
    let rho = RadialDensity::from_fn(grid, |r| mass / (PI * width * width) * (-(r * r) / (width * width)).exp()).unwrap();
    cumulative_from_density(&rho)
}

#[test]
fn c01_mass_conservation() {
    criterion(1, "mass conservation", Duration::from_secs(10), || {
        let grid = RadialGrid::new(1024, 10.0).unwrap();
        let m0 = gaussian_mass(grid, 6.0 * PI, 1.0);
        let total = m0.total();
        let mut worst = 0.0f64;
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit] {
            let opts = StepOptions { scheme, cfl_factor: 0.9, ..Default::default() };
            let dt = 0.9 * grid.spacing().powi(2) / 2.0;
            let mut m = m0.clone();
            for _ in 0..10_000 {
                m = step_mass_pde(&m, dt, &opts).map_err(|e| e.to_string())?;
            }
            let (rho, _) = density_from_cumulative(&m, NegativityPolicy::Clamp).unwrap();
            worst = worst.max((m.total() - total).abs() / total).max((rho.mass() - total).abs() / total);
        }
        let cfg = SolverConfig { t_end: 1e4 * 1e-4, dt_initial: 1e-4, record_interval: 0.05, ..Default::default() };
        let traj = run(&m0, &cfg).map_err(|e| e.to_string())?;
        for d in &traj.diagnostics {
            worst = worst.max((d.mass - total).abs() / total);
        }
        check(worst <= 1e-12 && traj.steps >= 10_000, format!("max relative mass error {worst:.2e} ({} adaptive steps)", traj.steps))
    });
}

#[test]
fn c02_second_moment_law() {
    criterion(2, "second-moment law", Duration::from_secs(60), || {
        // support radius 3w = 1.5 holds all but e^{-9} of the mass; R = 40 × 1.5
        let grid = RadialGrid::new(2048, 60.0).unwrap();
        let m0 = gaussian_mass(grid, 4.0 * PI, 0.5);
        let cfg = SolverConfig { t_end: 2.0, record_interval: 0.1, dt_initial: 1e-3, ..Default::default() };
        let traj = run(&m0, &cfg).map_err(|e| e.to_string())?;
        let chk = second_moment_rate_check(&traj.diagnostics).map_err(|e| e.to_string())?;
        check(
            chk.max_deviation <= 0.01 && !chk.boundary_contaminated && traj.termination == Termination::ReachedTEnd,
            format!("predicted dM2/dt {:.6}, max relative deviation {:.2e} over t in [0, 2]", chk.predicted, chk.max_deviation),
        )
    });
}

#[test]
fn c03_mass_trichotomy() {
    criterion(3, "mass trichotomy", Duration::from_secs(300), || {
        let grid = RadialGrid::new(1024, 20.0).unwrap();
        let sub = run(&gaussian_mass(grid, 4.0 * PI, 1.0), &SolverConfig { t_end: 2.0, record_interval: 0.1, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let sups: Vec<f64> = sub.diagnostics.iter().map(|d| d.sup_density).collect();
        let a = sub.termination == Termination::ReachedTEnd && sups.windows(2).all(|w| w[1] < w[0]);

        let small = RadialGrid::new(1024, 2.0).unwrap();
        let sup_cfg = SolverConfig { t_end: 1.0, blowup_sup_threshold: 1e4, ..Default::default() };
        let sup = run(&gaussian_mass(small, 10.0 * PI, 0.2), &sup_cfg).map_err(|e| e.to_string())?;
        let b = sup.termination == Termination::BlowupDetected;

        let crit = run(&gaussian_mass(grid, 8.0 * PI, 1.0), &SolverConfig { t_end: 2.0, record_interval: 0.1, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let m2_0 = crit.diagnostics[0].second_moment;
        let drift = crit.diagnostics.iter().map(|d| (d.second_moment - m2_0).abs() / m2_0).fold(0.0, f64::max);
        let c = drift <= 0.01;
        check(
            a && b && c,
            format!(
                "4π: {:?}, sup ρ monotone {}; 10π: {:?} at t = {:.4}; 8π: max |ΔM2|/M2 = {drift:.2e}",
                sub.termination,
                a,
                sup.termination,
                sup.times.last().unwrap()
            ),
        )
    });
}

#[test]
fn c04_bubble_and_liouville_orders() {
    criterion(4, "bubble stationarity and Liouville orders", Duration::from_secs(30), || {
        let hs = [0.1, 0.05, 0.025];
        let stat: Vec<f64> = hs.iter().map(|&h| bubble_stationarity_residual(h, 10.0, 1.0).unwrap()).collect();
        let liou: Vec<f64> = hs.iter().map(|&h| liouville_residual(h, 1.0).unwrap()).collect();
        let o1 = convergence_orders(&stat);
        let o2 = convergence_orders(&liou);
        let ok = o1.iter().chain(&o2).all(|o| (1.8..=2.2).contains(o));
        check(ok, format!("stationarity orders {o1:.3?}, Liouville orders {o2:.3?}"))
    });
}

#[test]
fn c05_laguerre_eigenstructure() {
    criterion(5, "Laguerre eigen-residuals", Duration::from_secs(30), || {
        let mut parts = vec![];
        let mut ok = true;
        for k in 0..=2 {
            let res: Vec<f64> = [400, 800, 1600]
                .iter()
                .map(|&n| laguerre_eigen_check(k, 20.0, n).unwrap().residual)
                .collect();
            // degrees 0 and 1 are reproduced exactly by the stencil
            let exact = res.iter().all(|&r| r <= 1e-12);
            let orders = convergence_orders(&res);
            let good = exact || orders.iter().all(|&o| o >= 1.8);
            ok &= good;
            if exact {
                parts.push(format!("k={k}: exact (max {:.1e})", res.iter().cloned().fold(0.0, f64::max)));
            } else {
                parts.push(format!("k={k}: orders {orders:.3?}"));
            }
        }
        check(ok, parts.join(", "))
    });
}

fn fp_initial(k: usize) -> (Density1D, kslab::fields::QuantileDensity) {
    let rho0 = Density1D::from_fn(-8.0, 8.0, 8000, |x| {
        (-0.5 * ((x - 1.0) / 0.5).powi(2)).exp() + 0.5 * (-0.5 * ((x + 1.5) / 0.4).powi(2)).exp()
    })
    .unwrap();
    let q0 = rho0.to_quantiles(k).unwrap();
    (rho0, q0)
}

#[test]
fn c06_jko_estimates() {
    criterion(6, "JKO energy estimates", Duration::from_secs(60), || {
        let spec = FreeEnergySpec::fokker_planck(ScalarFn::quadratic(1.0));
        let (_, q0) = fp_initial(256);
        let cfg = JkoConfig { tau: 1e-2, levels: 256, ..Default::default() };
        let r = run_jko(&q0, &spec, &cfg, 200).map_err(|e| e.to_string())?;
        let min_slack = r.step_slack.iter().cloned().fold(f64::INFINITY, f64::min);
        let e0 = r.energies[0];
        let e_min = r.energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let total = *r.cumulative_dissipation.last().unwrap();
        check(
            min_slack >= -1e-8 && total <= e0 - e_min + 1e-8 && r.sup_energy_ok,
            format!("min step slack {min_slack:.2e}, Σ W2²/2τ = {total:.6} <= E0 - min E = {:.6}", e0 - e_min),
        )
    });
}

#[test]
fn c07_jko_matches_fokker_planck() {
    criterion(7, "JKO vs FP oracle", Duration::from_secs(120), || {
        let k = 256;
        let spec = FreeEnergySpec::fokker_planck(ScalarFn::quadratic(1.0));
        let (rho0, q0) = fp_initial(k);
        let cfg = JkoConfig { tau: 1e-3, levels: k, ..Default::default() };
        let r = run_jko(&q0, &spec, &cfg, 500).map_err(|e| e.to_string())?;
        let pspec = PotentialSpec::new(ScalarFn::quadratic(1.0), -8.0, 8.0).unwrap();
        let fp = fp_run(&rho0, &pspec, 0.5, 1e-4, &FpOptions { record_every: 1000, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let qf = fp.states.last().unwrap().to_quantiles(k).unwrap();
        let d = w2(r.states.last().unwrap(), &qf).unwrap();
        check(d <= 5e-2, format!("W2(JKO, FP) at t = 0.5: {d:.3e}"))
    });
}

#[test]
fn c08_entropy_decay_rates() {
    criterion(8, "entropy decay rate", Duration::from_secs(60), || {
        let mut parts = vec![];
        let mut ok = true;
        for (curvature, expected) in [(1.0, 2.0), (0.5, 1.0)] {
            let spec = PotentialSpec::new(ScalarFn::quadratic(curvature), -10.0, 10.0).unwrap();
            let rho0 = Density1D::from_fn(-10.0, 10.0, 1000, |x| spec.stationary_density(x - 1.0)).unwrap();
            let traj = fp_run(&rho0, &spec, 14.0 / expected, 1e-3, &FpOptions::default()).map_err(|e| e.to_string())?;
            let fit = decay_rate_fit(&traj).map_err(|e| e.to_string())?;
            let lambda = bakry_emery_lambda(&spec, -10.0, 10.0);
            let rel = (fit.rate - expected).abs() / expected;
            ok &= rel <= 0.05 && (2.0 * lambda - expected).abs() < 1e-12;
            parts.push(format!("V = {curvature}x²/2: rate {:.4} vs 2λ = {expected} ({:.2}%)", fit.rate, 100.0 * rel));
        }
        check(ok, parts.join("; "))
    });
}

#[test]
fn c09_inequality_sweeps() {
    criterion(9, "CKP / LSI / Talagrand / HWI sweeps", Duration::from_secs(180), || {
        let (lo, hi, n) = (-10.0, 10.0, 4000);
        let spec = PotentialSpec::new(ScalarFn::quadratic(1.0), lo, hi).unwrap();
        let lambda = bakry_emery_lambda(&spec, lo, hi);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut ckp, mut lsi, mut tal, mut hwi) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for _ in 0..500 {
            let a = random_mixture(&mut rng, lo, hi, n).unwrap();
            let b = random_mixture(&mut rng, lo, hi, n).unwrap();
            let reference = spec.reference_on(&a).unwrap();
            ckp = ckp.min(ckp_deficit(&a, &reference).unwrap()).min(ckp_deficit(&a, &b).unwrap());
            lsi = lsi.min(logsob_deficit(&a, &spec, lambda).unwrap());
            tal = tal.min(talagrand_deficit(&a, &spec, lambda).unwrap());
            hwi = hwi.min(hwi_deficit(&a, &b, &spec, lambda).unwrap());
        }
        // translated Gaussians are the equality family of LSI and Talagrand
        let mut eq = 0.0f64;
        for _ in 0..20 {
            let m: f64 = rng.random_range(-2.0..2.0);
            let g = Density1D::from_fn(lo, hi, n, |x| (-0.5 * (x - m).powi(2)).exp()).unwrap();
            eq = eq.max(logsob_deficit(&g, &spec, 1.0).unwrap().abs()).max(talagrand_deficit(&g, &spec, 1.0).unwrap().abs());
        }
        let ok = ckp >= -1e-6 && lsi >= -1e-6 && tal >= -1e-6 && hwi >= -1e-6 && eq <= 1e-6;
        check(
            ok,
            format!("min deficits: CKP {ckp:.2e}, LSI {lsi:.2e}, Talagrand {tal:.2e}, HWI {hwi:.2e}; max |equality deficit| {eq:.2e}"),
        )
    });
}

#[test]
fn c10_loghls() {
    criterion(10, "log-HLS", Duration::from_secs(120), || {
        let mut worst_min = 0.0f64;
        for (m, lambda) in [(1.0, 1.0), (4.0 * PI, 0.7), (8.0 * PI, 0.5)] {
            let g = RadialGrid::new(40_000, 400.0).unwrap();
            let rho = RadialDensity::from_fn(g, |r| loghls_minimiser(m, lambda, r)).unwrap();
            worst_min = worst_min.max(loghls_deficit(&rho).unwrap().abs() / m);
        }
        let g = RadialGrid::new(4000, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut worst_random = f64::INFINITY;
        for _ in 0..1000 {
            let scale: f64 = rng.random_range(0.05..5.0);
            let parts: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
                .map(|_| (rng.random_range(0.1..1.0), rng.random_range(0.0..4.0), rng.random_range(0.2..2.0)))
                .collect();
            let rho = RadialDensity::from_fn(g, |r| {
                scale * parts.iter().map(|(w, c, s)| w * (-((r - c) / s).powi(2)).exp()).sum::<f64>()
            })
            .unwrap();
            worst_random = worst_random.min(loghls_deficit(&rho).unwrap() / rho.mass());
        }
        check(
            worst_min <= 1e-3 && worst_random >= -1e-3,
            format!("max |deficit|/M at minimisers {worst_min:.2e}; min deficit/M over 1000 random {worst_random:.2e}"),
        )
    });
}

#[test]
fn c11_particles() {
    criterion(11, "particle control and determinism", Duration::from_secs(120), || {
        let mu = 0.5;
        let params = ParticleParams { mu, eta: 1.0, chi: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u: Vec<[f64; 2]> = (0..10_000).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let state = ParticleState::new(u, vec![], params).unwrap();
        let a = run_particles(&state, 0.01, 1.0, RngSeed(7), 10).map_err(|e| e.to_string())?;
        let b = run_particles(&state, 0.01, 1.0, RngSeed(7), 10).map_err(|e| e.to_string())?;
        let bytes = |r: &kslab::particles::ParticleRun| -> Vec<u8> {
            r.final_state.u.iter().flat_map(|p| p.iter().flat_map(|x| x.to_le_bytes())).collect()
        };
        let identical = bytes(&a) == bytes(&b) && a.u_second_moment == b.u_second_moment;
        let z = (a.msd_slope - 4.0 * mu) / a.msd_slope_stderr;
        check(
            z.abs() <= 3.0 && identical,
            format!("slope {:.4} vs 4μ = {} ({z:+.2} standard errors); repeated run byte-identical: {identical}", a.msd_slope, 4.0 * mu),
        )
    });
}

#[test]
fn c12_burgers() {
    criterion(12, "Burgers shock, rate and profiles", Duration::from_secs(30), || {
        let p = BurgersProblem::new(Profile::NegativeSine { amplitude: 1.0 }, -PI, PI).unwrap();
        let s = shock_time(&p);
        // brute-force oracle: min of −1/u0' over 10⁶ samples
        let n = 1_000_000;
        let brute = (0..=n)
            .map(|i| -PI + 2.0 * PI * i as f64 / n as f64)
            .map(|x| x.cos())
            .filter(|&d| d > 0.0)
            .map(|d| 1.0 / d)
            .fold(f64::INFINITY, f64::min);
        let times: Vec<f64> = (1..=20).map(|j| 1.0 - 10f64.powf(-1.0 - 0.15 * j as f64)).collect();
        let fit = blowup_rate_fit(&p, &times).map_err(|e| e.to_string())?;
        let mut slope_err = 0.0f64;
        for i in 0..2 {
            let (alpha, _) = selfsimilar_exponents(i);
            let ys: Vec<f64> = (0..=40).map(|j| 10f64.powf(2.0 + 0.05 * j as f64)).collect();
            let lx: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|&y| profile_solve(-y, alpha, 1.0).unwrap().ln()).collect();
            let (slope, _) = kslab::numerics::linear_fit(&lx, &ly).unwrap();
            slope_err = slope_err.max((slope / (alpha / (alpha + 1.0)) - 1.0).abs());
        }
        check(
            (s.time - 1.0).abs() <= 1e-6 && (s.time - brute).abs() <= 1e-6 && (fit.slope + 1.0).abs() <= 0.02 && slope_err <= 0.01,
            format!(
                "T = {:.12} (oracle {:.12}); rate slope {:.5}; far-field slope relative error {:.2}%",
                s.time,
                brute,
                fit.slope,
                100.0 * slope_err
            ),
        )
    });
}

#[test]
fn c13_type_ii_indicator() {
    criterion(13, "supercritical type-II indicator", Duration::from_secs(300), || {
        let grid = RadialGrid::new(4096, 2.0).unwrap();
        let m0 = gaussian_mass(grid, 10.0 * PI, 0.5);
        let cfg = SolverConfig {
            t_end: 10.0,
            record_interval: 1.0,
            record_growth: 1.05,
            blowup_sup_threshold: 1e5,
            cfl_factor: 0.1,
            ..Default::default()
        };
        let traj = run(&m0, &cfg).map_err(|e| e.to_string())?;
        if traj.termination != Termination::BlowupDetected {
            return Err(format!("no blow-up: {:?}", traj.termination));
        }
        let t_est = traj.blowup_time_estimate().unwrap();
        let s = s_indicator(&traj, t_est).map_err(|e| e.to_string())?;
        let last = traj.diagnostics.last().unwrap();
        let lambda = last.bubble_scale.ok_or("bubble fit failed")?;
        let inner = traj.final_state().at(10.0 * lambda) / (8.0 * PI);
        check(
            s.increasing_over_final_decade && s.type_ii && (inner - 1.0).abs() <= 0.1,
            format!(
                "T_est {t_est:.8}, S increasing over final decade {} (log-log slope {:.3}); m(10 λ̂)/8π = {inner:.4} with λ̂ = {lambda:.3e}",
                s.increasing_over_final_decade, s.final_decade_slope
            ),
        )
    });
}
