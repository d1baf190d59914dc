//! Acceptance criteria: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hotmol::beamline::oracle::monte_carlo_oracle;
use hotmol::beamline::{
    apply_heating, arrhenius_exposure, BeamState, Beamline, BeamlineConfig, HeatingBeam, ModelParams, Scenario,
};
use hotmol::constants::c70_heat_capacity;
use hotmol::cooling::{
    apply_cooling, cool, fit_cooling_law, CoolingLaw, TemperatureDistribution, TemperatureGrid, DEFAULT_FIT_RANGE,
};
use hotmol::decoherence::{predict_visibility_curve, Decoherence};
use hotmol::numerics::quadrature::{integrate, Tolerance};
use hotmol::spectra::{fit_flux_power_law, EmitterModel, FluxPowerLaw, PowerLawEmitter};
use hotmol::thermometry::{
    fit_parameters, forward_curves, temperature_distribution_at_g1, FitOptions, FitProblem, Observation,
};

struct Outcome {
    pass: bool,
    detail: String,
}

struct Check {
    pass: bool,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check { pass: true, notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        self.pass &= ok;
        let note = note.into();
        self.notes.push(if ok { note } else { format!("FAILED {note}") });
    }

    fn done(self) -> Outcome {
        Outcome { pass: self.pass, detail: self.notes.join("; ") }
    }
}

fn model() -> EmitterModel {
    EmitterModel::calibrated_default().expect("calibration").0
}

fn beamline() -> Beamline {
    Beamline::new(BeamlineConfig::default(), model()).expect("beamline")
}

fn flux_power_law(elapsed: &mut Duration) -> Outcome {
    let start = Instant::now();
    let m = model();
    let law = fit_flux_power_law(&m, 2000.0, 3000.0).expect("fit");
    *elapsed = start.elapsed();
    let ratio = law.prefactor / 6.3e-35;
    let mut c = Check::new();
    c.require((law.exponent - 11.0).abs() <= 1.0, format!("exponent {:.4}", law.exponent));
    c.require((0.5..=2.0).contains(&ratio), format!("prefactor {:.3e} eV/s ({ratio:.3}× published)", law.prefactor));
    c.require(elapsed.as_secs_f64() < 1.0, format!("{:.2} ms incl. calibration", 1e3 * elapsed.as_secs_f64()));
    c.done()
}

fn cooling_law_identity(elapsed: &mut Duration) -> Outcome {
    let start = Instant::now();
    let law = FluxPowerLaw { prefactor: 6.3e-35, exponent: 11.0, t_low: 2000.0, t_high: 3000.0 };
    let cv = c70_heat_capacity();
    let emitter = PowerLawEmitter { law, heat_capacity: cv };
    let tau = 0.76 / 190.0;
    let fit = fit_cooling_law(&emitter, tau, DEFAULT_FIT_RANGE).expect("fit");
    let closed = |t0: f64| t0 * (1.0 + 10.0 * law.prefactor / cv * t0.powi(10) * tau).powf(-0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_law: f64 = 0.0;
    let mut worst_ode: f64 = 0.0;
    for _ in 0..20 {
        let t0 = rng.gen_range(DEFAULT_FIT_RANGE.0..DEFAULT_FIT_RANGE.1);
        let exact = closed(t0);
        worst_law = worst_law.max((fit.law.temperature(t0) / exact - 1.0).abs());
        worst_ode = worst_ode.max((cool(t0, tau, &emitter).expect("ode") / exact - 1.0).abs());
    }
    *elapsed = start.elapsed();
    let mut c = Check::new();
    c.require((fit.law.n - 10.0).abs() < 1e-3, format!("n = {:.6}", fit.law.n));
    c.require(worst_law < 1e-4, format!("law vs closed form {worst_law:.2e}"));
    c.require(worst_ode < 1e-4, format!("ODE vs closed form {worst_ode:.2e}"));
    c.require(elapsed.as_secs_f64() < 5.0, format!("{:.2} ms", 1e3 * elapsed.as_secs_f64()));
    c.done()
}

fn segment_fits(bl: &Beamline) -> Outcome {
    let mut c = Check::new();
    for (v, n, t_inf) in [(100.0, 10.5, 2166.0), (190.0, 9.7, 2321.0)] {
        let fit =
            fit_cooling_law(bl.flux_table(), bl.config().grating_to_detector / v, DEFAULT_FIT_RANGE).expect("fit");
        c.require(
            (fit.law.n - n).abs() <= 1.5 && (fit.law.t_infinity / t_inf - 1.0).abs() <= 0.1,
            format!("{v} m/s: n = {:.2}, T∞ = {:.0} K", fit.law.n, fit.law.t_infinity),
        );
    }
    c.done()
}

fn kick_and_speed(bl: &Beamline) -> Outcome {
    let cfg = bl.config();
    let mut c = Check::new();
    c.require((cfg.heating_kick() - 139.0).abs() <= 1.0, format!("ΔT = {:.2} K", cfg.heating_kick()));
    c.require((cfg.most_probable_speed() - 133.0).abs() <= 1.0, format!("v_w = {:.2} m/s", cfg.most_probable_speed()));
    c.done()
}

fn thermometry_round_trip(bl: &Beamline, elapsed: &mut Duration) -> Outcome {
    let start = Instant::now();
    let truth = ModelParams { sigma_t1: 2e-17, a_ion: 5e9 };
    let scenarios: Vec<Scenario> =
        [(100.0, 0.3, 10), (100.0, 0.6, 10), (100.0, 1.0, 10), (190.0, 0.5, 16), (190.0, 0.8, 16), (190.0, 1.0, 16)]
            .iter()
            .map(|&(v, power_scale, n_beams)| Scenario { v, power_scale, n_beams })
            .collect();
    let clean = forward_curves(bl, &truth, &scenarios).expect("forward");
    let mut c = Check::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_sigma, mut worst_a): (f64, f64) = (0.0, 1.0);
    let mut failures = 0;
    for _ in 0..10 {
        let obs = scenarios
            .iter()
            .zip(&clean)
            .map(|(s, y)| {
                let noise: f64 = rng.sample(StandardNormal);
                Observation { scenario: *s, observed: y * (1.0 + 0.02 * noise), weight: 1.0 }
            })
            .collect();
        match fit_parameters(bl, &FitProblem::new(obs).expect("problem"), &FitOptions::default()) {
            Ok(fit) => {
                worst_sigma = worst_sigma.max((fit.sigma_t1 / truth.sigma_t1 - 1.0).abs());
                let fa = fit.a_ion / truth.a_ion;
                worst_a = worst_a.max(fa.max(1.0 / fa));
            }
            Err(_) => failures += 1,
        }
    }
    c.require(failures == 0, format!("{} of 10 fits converged", 10 - failures));
    c.require(worst_sigma < 0.05, format!("worst σ error {:.2}%", 100.0 * worst_sigma));
    c.require(worst_a < 2.0, format!("worst A_ion factor {worst_a:.3}"));

    let params = ModelParams::reference();
    let mut monotone = true;
    for v in [100.0, 190.0] {
        for n in [1, 4, 10, 16] {
            let ys: Vec<f64> = (0..=10)
                .map(|i| {
                    bl.ion_yield(&Scenario { v, power_scale: 0.1 * i as f64, n_beams: n }, &params).expect("yield")
                })
                .collect();
            monotone &= ys.windows(2).all(|w| w[1] >= w[0]);
        }
        for p in [0.3, 0.7, 1.0] {
            let ys: Vec<f64> = (1..=16)
                .map(|n| bl.ion_yield(&Scenario { v, power_scale: p, n_beams: n }, &params).expect("yield"))
                .collect();
            monotone &= ys.windows(2).all(|w| w[1] >= w[0]);
        }
    }
    c.require(monotone, "ion yield monotone in power and beam count");
    let mut rise_fall = Vec::new();
    for n in [4, 7, 10, 13, 16] {
        let rates: Vec<f64> = (0..=10)
            .map(|i| {
                bl.simulate(&Scenario { v: 100.0, power_scale: 0.1 * i as f64, n_beams: n }, &params)
                    .expect("simulate")
                    .detector_rate_change
            })
            .collect();
        let peak = (0..rates.len()).max_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap_or(0);
        let ok = peak > 0 && peak < rates.len() - 1 && rates[0] < rates[peak] && rates[rates.len() - 1] < rates[peak];
        rise_fall.push((n, ok, 0.1 * peak as f64));
    }
    c.require(
        rise_fall.iter().all(|r| r.1),
        format!(
            "detector rise-then-fall at 100 m/s, peak power scale by beams {}",
            rise_fall.iter().map(|r| format!("{}:{:.1}", r.0, r.2)).collect::<Vec<_>>().join(" ")
        ),
    );
    *elapsed = start.elapsed();
    c.require(elapsed.as_secs_f64() < 300.0, format!("{:.1} s", elapsed.as_secs_f64()));
    c.done()
}

fn transport_oracle(bl: &Beamline, elapsed: &mut Duration) -> Outcome {
    let start = Instant::now();
    let params = ModelParams::reference();
    let mut c = Check::new();
    for (v, p, n) in [(100.0, 0.5, 10), (140.0, 0.6, 10), (190.0, 1.0, 16)] {
        let s = Scenario { v, power_scale: p, n_beams: n };
        let grid_yield = bl.ion_yield(&s, &params).expect("yield");
        let grid_mean = temperature_distribution_at_g1(bl, &s, &params).expect("f_G1").mean_temperature;
        let mc = monte_carlo_oracle(bl, &s, &params, 100_000, 7).expect("oracle");
        let zy = (grid_yield - mc.ion_yield) / mc.ion_yield_se;
        let zt = (grid_mean - mc.mean_t_g1) / mc.mean_t_g1_se;
        c.require(
            zy.abs() < 3.0 && zt.abs() < 3.0,
            format!(
                "({v}, {p}, {n}): yield {grid_yield:.5} vs {:.5} ({zy:+.2}σ), T {grid_mean:.1} vs {:.1} K ({zt:+.2}σ)",
                mc.ion_yield, mc.mean_t_g1
            ),
        );
    }
    let t_ion = bl.config().ionization_temperature();
    let tol = Tolerance { relative: 1e-12, absolute: 0.0, max_intervals: 20_000 };
    let mut worst: f64 = 0.0;
    for law in [
        CoolingLaw::new(10.5, 2166.0, 7.6e-3).unwrap(),
        CoolingLaw::new(9.7, 2321.0, 4e-3).unwrap(),
        CoolingLaw::new(6.0, 5000.0, 3e-6).unwrap(),
    ] {
        for t0 in [1500.0, 2500.0, 3500.0, 5000.0, 8000.0] {
            let closed = arrhenius_exposure(&law, t0, t_ion).expect("exposure");
            let direct = integrate(
                |t| (-t_ion / law.temperature_at_fraction(t0, t / law.duration)).exp(),
                0.0,
                law.duration,
                tol,
            )
            .expect("quadrature")
            .value;
            worst = worst.max((closed / direct - 1.0).abs());
        }
    }
    c.require(worst < 1e-6, format!("incomplete-gamma exposure vs quadrature {worst:.1e}"));
    *elapsed = start.elapsed();
    c.done()
}

fn decoherence_endpoints(bl: &Beamline, elapsed: &mut Duration) -> Outcome {
    let start = Instant::now();
    let dec = Decoherence::from_beamline(bl);
    let cfg = bl.config();
    let mut c = Check::new();
    for band in &cfg.bands {
        let geom = hotmol::decoherence::InterferometerGeometry::from_config(cfg, band.center).expect("geometry");
        let r = dec.reduction_factor(900.0, &geom).expect("R");
        c.require(r > 0.99, format!("R(900 K, {} m/s) = {r:.6}", band.center));
    }
    let powers: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
    let params = ModelParams::reference();
    let mut curves = Vec::new();
    for band in &cfg.bands {
        let curve = predict_visibility_curve(bl, &dec, band, &powers, &params).expect("curve");
        c.require(
            curve[0].visibility == cfg.baseline_visibility,
            format!("{} m/s: V(0) = {}", band.center, curve[0].visibility),
        );
        c.require(
            curve.windows(2).all(|w| w[1].visibility <= w[0].visibility),
            format!("{} m/s: V non-increasing, V(P₀) = {:.4}", band.center, curve[curve.len() - 1].visibility),
        );
        curves.push(curve);
    }
    let (slow, fast) = (&curves[0][powers.len() - 1], &curves[1][powers.len() - 1]);
    c.require(
        slow.mean_t_g1 < fast.mean_t_g1,
        format!("full power f_G1 mean {:.0} K (100 m/s) vs {:.0} K (190 m/s)", slow.mean_t_g1, fast.mean_t_g1),
    );
    *elapsed = start.elapsed();
    c.require(elapsed.as_secs_f64() < 600.0, format!("{:.1} s two-band sweep", elapsed.as_secs_f64()));
    c.done()
}

fn conservation(bl: &Beamline) -> Outcome {
    let mut c = Check::new();
    let grid = TemperatureGrid { t_min: 0.0, width: 5.0, bins: 3000 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let masses: Vec<f64> = (0..grid.bins).map(|i| if i < 1200 { rng.gen::<f64>() } else { 0.0 }).collect();
    let mut state = BeamState::initial(100.0, grid, 150e-6, 31, 900.0);
    for row in state.mass.chunks_exact_mut(grid.bins) {
        row.copy_from_slice(&masses);
    }
    let beam = HeatingBeam { index: 1, power: 11.0, waist: 50e-6, center: 70e-6, wavelength: 514e-9 };
    let heated = apply_heating(&state, &beam, 2e-17, 139.0);
    let dh = (heated.total_mass() / state.total_mass() - 1.0).abs();
    c.require(dh < 1e-10, format!("heating {dh:.1e}"));

    let dist = TemperatureDistribution::from_masses(grid, masses).expect("dist");
    let law = CoolingLaw::new(10.5, 2166.0, 7.6e-3).unwrap();
    let cooled = apply_cooling(&dist, &law);
    let dc = (cooled.total_mass() / dist.total_mass() - 1.0).abs();
    c.require(dc < 1e-10, format!("cooling {dc:.1e}"));
    let top = cooled.masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
    c.require(grid.edge(top) < law.t_infinity, format!("support below T∞ (top occupied edge {:.0} K)", grid.edge(top)));

    let params = ModelParams::reference();
    let mut worst_ledger: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    let g = bl.config().grid;
    let fine = Beamline::new(
        BeamlineConfig {
            grid: TemperatureGrid { t_min: g.t_min, width: 0.5 * g.width, bins: 2 * g.bins },
            y_nodes: 2 * bl.config().y_nodes,
            ..bl.config().clone()
        },
        bl.model().clone(),
    )
    .expect("fine beamline");
    for (v, p, n) in [(100.0, 0.5, 10), (140.0, 0.6, 10), (190.0, 1.0, 16)] {
        let s = Scenario { v, power_scale: p, n_beams: n };
        let out = bl.simulate(&s, &params).expect("simulate");
        worst_ledger = worst_ledger.max((out.ledger.total() - 1.0).abs());
        let refined = fine.ion_yield(&s, &params).expect("yield");
        worst_grid = worst_grid.max((out.ion_yield / refined - 1.0).abs());
    }
    c.require(worst_ledger < 1e-12, format!("ledger closes to {worst_ledger:.1e}"));
    c.require(worst_grid < 0.01, format!("grid refinement changes yield by {:.2}%", 100.0 * worst_grid));
    c.done()
}

fn main() -> ExitCode {
    let total = Instant::now();
    let bl = beamline();
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut(&mut Duration) -> Outcome| {
        let start = Instant::now();
        let mut elapsed = Duration::ZERO;
        let outcome = f(&mut elapsed);
        let elapsed = if elapsed.is_zero() { start.elapsed() } else { elapsed };
        println!(
            "criterion {id} {name}: {} [{:.2} s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        results.push((id, name, outcome, elapsed));
    };
    run(1, "flux power law", &mut |e| flux_power_law(e));
    run(2, "cooling-law identity", &mut |e| cooling_law_identity(e));
    run(3, "segment fits", &mut |_| segment_fits(&bl));
    run(4, "photon kick and beam constants", &mut |_| kick_and_speed(&bl));
    run(5, "thermometry round trip", &mut |e| thermometry_round_trip(&bl, e));
    run(6, "transport oracle", &mut |e| transport_oracle(&bl, e));
    run(7, "decoherence endpoints", &mut |e| decoherence_endpoints(&bl, e));
    run(8, "conservation suite", &mut |_| conservation(&bl));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1} s{}",
        results.len() - failed.len(),
        results.len(),
        total.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
