use std::path::Path;

use hotmol::beamline::oracle::monte_carlo_oracle;
use hotmol::beamline::{Beamline, Scenario, VelocityBand};
use hotmol::constants::{omega_from_ev, HBAR_EV_S};
use hotmol::cooling::temperatures_at;
use hotmol::decoherence::{predict_visibility_curve, Decoherence};
use hotmol::numerics::par_map;
use hotmol::spectra::{fit_flux_power_law, EmitterModel};
use hotmol::thermometry::{fit_parameters, forward_curves, temperature_distribution_at_g1, FitProblem};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{number, plot_script, OutputFile, Series, Table};
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
    pub model: EmitterModel,
    pub seed: u64,
    pub provenance: Vec<String>,
}

impl Context {
    fn beamline(&self) -> Result<Beamline, CliError> {
        Ok(Beamline::new(self.config.beamline.clone(), self.model.clone())?)
    }

    fn finish(&self, table: Table, name: &str) -> OutputFile {
        table.finish(name, &self.provenance)
    }

    fn bands(&self) -> &[VelocityBand] {
        &self.config.beamline.bands
    }

    /// Rounded to 1e-9 W for readable tables.
    fn power_w(&self, power_scale: f64) -> f64 {
        (power_scale * self.config.beamline.max_power * 1e9).round() / 1e9
    }
}

fn sweep_scenarios(velocities: &[f64], beams: &[usize], powers: &[f64]) -> Vec<Scenario> {
    let mut out = Vec::with_capacity(velocities.len() * beams.len() * powers.len());
    for &n_beams in beams {
        for &power_scale in powers {
            for &v in velocities {
                out.push(Scenario { v, power_scale, n_beams });
            }
        }
    }
    out
}

pub fn spectrum(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let s = &ctx.config.spectrum;
    if s.energy_points < 2 || !(s.energy_max > s.energy_min) || s.energy_min <= 0.0 {
        return Err(CliError::new("config", "spectrum needs energy_points ≥ 2 and 0 < energy_min < energy_max"));
    }
    let mut rates = Table::new(
        "spectral photon emission rate R_ω(ω, T) of the colored emitter with finite heat capacity, photons s⁻¹ per rad s⁻¹",
        &["photon_energy_eV", "omega_rad_s", "T_K", "R_omega"],
    );
    let mut totals = Table::new(
        "total photon emission rate and radiant flux Φ(T) = ∫ħω R_ω dω",
        &["T_K", "photon_rate_per_s", "radiant_flux_eV_per_s"],
    );
    for &t in &s.temperatures {
        for i in 0..s.energy_points {
            let e = s.energy_min + (s.energy_max - s.energy_min) * i as f64 / (s.energy_points - 1) as f64;
            let w = omega_from_ev(e);
            rates.row(&[e, w, t, ctx.model.spectral_emission_rate(w, t)?]);
        }
        totals.row(&[t, ctx.model.total_photon_rate(t)?, ctx.model.radiant_flux(t)?]);
    }
    if !ctx.model.cross_section.is_zero() {
        let law = fit_flux_power_law(&ctx.model, 2000.0, 3000.0)?;
        totals.note(format!(
            "power-law fit over {}–{} K: Φ = {:e} · T^{} eV/s",
            law.t_low, law.t_high, law.prefactor, law.exponent
        ));
    }
    let series: Vec<Series> = s
        .temperatures
        .iter()
        .map(|t| Series::new("spectrum.csv", format!("($3=={t} ? $1 : 1/0):4"), format!("{t} K")))
        .collect();
    Ok(vec![
        ctx.finish(rates, "spectrum.csv"),
        ctx.finish(totals, "spectrum_totals.csv"),
        plot_script("plot_spectrum.gp", "photon energy (eV)", "R_ω (s⁻¹ per rad/s)", true, &series),
    ])
}

pub fn cool(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let cfg = bl.config();
    let r = cfg.fit_ranges;
    let mut laws = Table::new(
        "cooling laws T(τ) = T₀(1 + (T₀/T∞)ⁿ)^(−1/n) fitted to the ODE per flight segment and initial-temperature window",
        &["v_mps", "segment", "distance_m", "duration_s", "window_lo_K", "window_hi_K", "n", "T_inf_K", "max_residual_K"],
    );
    let mut paths = Table::new(
        "temperature along the first-grating to detector flight: ODE and the window law of T₀",
        &["v_mps", "T0_K", "t_s", "T_ode_K", "T_law_K"],
    );
    let np = ctx.config.cool.trajectory_points.max(2);
    for band in ctx.bands() {
        let v = band.center;
        let segments = [
            ("heating_gap", cfg.beam_spacing, r.heating_gap),
            ("to_first_grating", cfg.flight_to_grating(band.n_beams), r.to_first_grating),
            ("to_detector", cfg.grating_to_detector, r.to_detector),
            ("detector", cfg.detector_span, r.detector),
        ];
        for (name, distance, range) in segments {
            let seg = bl.segment(v, distance, range)?;
            for (fit, w) in seg.bank.fits.iter().zip(seg.bank.bounds.windows(2)) {
                let (lo, hi) = if seg.bank.fits.len() == 1 { fit.t0_range } else { (w[0], w[1]) };
                laws.raw_row(&[
                    number(v),
                    name.to_string(),
                    number(distance),
                    number(fit.law.duration),
                    number(lo),
                    number(hi),
                    number(fit.law.n),
                    number(fit.law.t_infinity),
                    number(fit.max_residual),
                ]);
            }
        }
        let seg = bl.segment(v, cfg.grating_to_detector, r.to_detector)?;
        let tau = seg.bank.duration();
        let times: Vec<f64> = (0..np).map(|i| tau * i as f64 / (np - 1) as f64).collect();
        for &t0 in &ctx.config.cool.initial_temperatures {
            let ode = temperatures_at(t0, &times, bl.flux_table())?;
            let law = seg.bank.law_for(t0);
            for (t, temp) in times.iter().zip(&ode) {
                paths.row(&[v, t0, *t, *temp, law.temperature_at_fraction(t0, t / tau)]);
            }
        }
    }
    let mut series = Vec::new();
    for band in ctx.bands() {
        for &t0 in &ctx.config.cool.initial_temperatures {
            let sel = format!("($1=={} && $2=={t0} ? $3 : 1/0)", band.center);
            series.push(Series::new(
                "cooling_trajectories.csv",
                format!("{sel}:4"),
                format!("ODE {} m/s, {t0} K", band.center),
            ));
            series.push(Series::new(
                "cooling_trajectories.csv",
                format!("{sel}:5"),
                format!("law {} m/s, {t0} K", band.center),
            ));
        }
    }
    Ok(vec![
        ctx.finish(laws, "cooling_laws.csv"),
        ctx.finish(paths, "cooling_trajectories.csv"),
        plot_script("plot_cooling.gp", "time after the first grating (s)", "temperature (K)", false, &series),
    ])
}

pub fn ion_yield(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let sw = &ctx.config.sweep;
    let scenarios = sweep_scenarios(&sw.velocities, &sw.beam_counts, &sw.power_scales);
    let yields = forward_curves(&bl, &ctx.config.params, &scenarios)?;
    let mut t = Table::new(
        "ion yield of the heating stage normalized to the effusive flux, I(v)/[C_T v³ exp(−v²/v_w²)]; readable by `fit`",
        &["v_mps", "power_W", "n_beams", "ion_yield_normalized"],
    );
    for (s, y) in scenarios.iter().zip(&yields) {
        t.row(&[s.v, ctx.power_w(s.power_scale), s.n_beams as f64, *y]);
    }
    let mut series = Vec::new();
    for &n in &sw.beam_counts {
        for &p in &sw.power_scales {
            if p > 0.0 {
                let pw = ctx.power_w(p);
                series.push(Series::new(
                    "ion_yield.csv",
                    format!("1:($3=={n} && abs($2-{pw})<1e-9 ? $4 : 1/0)"),
                    format!("{n} beams, {pw:.2} W"),
                ));
            }
        }
    }
    Ok(vec![
        ctx.finish(t, "ion_yield.csv"),
        plot_script("plot_ion_yield.gp", "velocity (m/s)", "normalized ion yield", true, &series),
    ])
}

pub fn detector(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let sw = &ctx.config.sweep;
    let velocities: Vec<f64> = ctx.bands().iter().map(|b| b.center).collect();
    let scenarios = sweep_scenarios(&velocities, &sw.beam_counts, &sw.power_scales);
    let p = ctx.config.params;
    let outcomes = par_map(&scenarios, |s| bl.simulate(s, &p));
    let mut t = Table::new(
        "detected ion rate relative to the unheated beam, minus one",
        &["v_mps", "n_beams", "power_scale", "power_W", "detector_rate_change", "detected_fraction", "ion_yield"],
    );
    for (s, o) in scenarios.iter().zip(outcomes) {
        let o = o?;
        t.row(&[
            s.v,
            s.n_beams as f64,
            s.power_scale,
            ctx.power_w(s.power_scale),
            o.detector_rate_change,
            o.detected_fraction,
            o.ion_yield,
        ]);
    }
    let mut series = Vec::new();
    for v in &velocities {
        for n in &sw.beam_counts {
            series.push(Series::new(
                "detector_rate.csv",
                format!("4:($1=={v} && $2=={n} ? $5 : 1/0)"),
                format!("{v} m/s, {n} beams"),
            ));
        }
    }
    Ok(vec![
        ctx.finish(t, "detector_rate.csv"),
        plot_script("plot_detector.gp", "heating power (W)", "relative change of the detection rate", false, &series),
    ])
}

#[derive(Serialize)]
struct FitDocument<'a> {
    source: String,
    observations: usize,
    #[serde(flatten)]
    result: &'a hotmol::thermometry::FitResult,
}

pub fn fit(ctx: &Context, data: &Path) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let problem = FitProblem::from_csv_path(data, bl.config())?;
    let result = fit_parameters(&bl, &problem, &ctx.config.fit)?;
    let scenarios: Vec<Scenario> = problem.observations.iter().map(|o| o.scenario).collect();
    let model = forward_curves(&bl, &result.params(), &scenarios)?;
    let mut t = Table::new(
        "measured ion yield against the fitted model",
        &["v_mps", "power_W", "n_beams", "observed", "model"],
    );
    t.note(format!(
        "fitted σ(T₁) = {:e} cm², A_ion = {:e} s⁻¹, scale = {}",
        result.sigma_t1, result.a_ion, result.scale
    ));
    for (o, m) in problem.observations.iter().zip(&model) {
        t.row(&[
            o.scenario.v,
            ctx.power_w(o.scenario.power_scale),
            o.scenario.n_beams as f64,
            o.observed,
            result.scale * m,
        ]);
    }
    let doc =
        FitDocument { source: data.display().to_string(), observations: problem.observations.len(), result: &result };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::new("io", e.to_string()))?;
    Ok(vec![
        OutputFile { name: "fit_result.json".into(), contents: json + "\n" },
        ctx.finish(t, "fit_curves.csv"),
        plot_script(
            "plot_fit.gp",
            "heating power (W)",
            "normalized ion yield",
            true,
            &[Series::new("fit_curves.csv", "2:4", "observed"), Series::new("fit_curves.csv", "2:5", "model")],
        ),
    ])
}

pub fn tempdist(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let scenarios: Vec<Scenario> = ctx
        .bands()
        .iter()
        .flat_map(|b| {
            ctx.config.sweep.power_scales.iter().map(|&p| Scenario { v: b.center, power_scale: p, n_beams: b.n_beams })
        })
        .collect();
    let params = ctx.config.params;
    let dists = par_map(&scenarios, |s| temperature_distribution_at_g1(&bl, s, &params));
    let mut map = Table::new(
        "normalized temperature distribution f_G1 of the neutral molecules at the first grating, per K",
        &["v_mps", "n_beams", "power_W", "T_K", "density_per_K"],
    );
    let mut summary = Table::new(
        "mean temperature at the first grating and non-ionized fraction",
        &["v_mps", "n_beams", "power_W", "mean_T_G1_K", "surviving_fraction"],
    );
    for (s, d) in scenarios.iter().zip(dists) {
        let d = d?;
        let pw = ctx.power_w(s.power_scale);
        let grid = d.distribution.grid;
        let top = d.distribution.masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
        for (i, m) in d.distribution.masses.iter().enumerate().take(top + 1) {
            map.row(&[s.v, s.n_beams as f64, pw, grid.center(i), m / grid.width]);
        }
        summary.row(&[s.v, s.n_beams as f64, pw, d.mean_temperature, d.surviving_fraction]);
    }
    let series: Vec<Series> = ctx
        .bands()
        .iter()
        .map(|b| {
            Series::new(
                "tempdist_summary.csv",
                format!("3:($1=={} ? $4 : 1/0)", b.center),
                format!("{} m/s, {} beams", b.center, b.n_beams),
            )
        })
        .collect();
    Ok(vec![
        ctx.finish(map, "tempdist.csv"),
        ctx.finish(summary, "tempdist_summary.csv"),
        plot_script(
            "plot_tempdist.gp",
            "heating power (W)",
            "mean temperature at the first grating (K)",
            false,
            &series,
        ),
    ])
}

pub fn visibility(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let dec = Decoherence::from_beamline(&bl);
    let mut files = Vec::new();
    let mut series = Vec::new();
    for band in ctx.bands() {
        let curve = predict_visibility_curve(&bl, &dec, band, &ctx.config.sweep.power_scales, &ctx.config.params)?;
        let mut t = Table::new(
            "fringe visibility under thermal emission decoherence: R = Σ f_G1(T₀) R(T₀, v), visibility = V₀ · R / R(P = 0)",
            &["power_W", "mean_T_G1_K", "R", "visibility"],
        );
        t.note(format!(
            "v = {} m/s, {} heating beams, L/L_T = {:.3}, V₀ = {}",
            band.center,
            band.n_beams,
            hotmol::decoherence::InterferometerGeometry::from_config(bl.config(), band.center)?.talbot_order(),
            bl.config().baseline_visibility
        ));
        for p in &curve {
            t.row(&[p.power_w, p.mean_t_g1, p.r_mean, p.visibility]);
        }
        let name = format!("visibility_{}mps.csv", band.center);
        series.push(Series::new(&name, "1:4", format!("{} m/s", band.center)));
        files.push(ctx.finish(t, &name));
    }
    files.push(plot_script("plot_visibility.gp", "heating power (W)", "visibility", false, &series));
    Ok(files)
}

pub fn oracle(ctx: &Context) -> Result<Vec<OutputFile>, CliError> {
    let bl = ctx.beamline()?;
    let o = &ctx.config.oracle;
    let params = ctx.config.params;
    let indexed: Vec<(usize, Scenario)> = o.scenarios.iter().copied().enumerate().collect();
    let results = par_map(&indexed, |(i, s)| -> Result<_, CliError> {
        let grid = bl.simulate(s, &params)?;
        let g1 = temperature_distribution_at_g1(&bl, s, &params)?;
        let mc = monte_carlo_oracle(&bl, s, &params, o.samples, ctx.seed.wrapping_add(*i as u64))?;
        Ok((grid, g1.mean_temperature, mc))
    });
    let mut t = Table::new(
        "grid transport against the molecule-by-molecule Monte Carlo oracle",
        &[
            "v_mps",
            "power_scale",
            "n_beams",
            "grid_ion_yield",
            "mc_ion_yield",
            "mc_ion_yield_se",
            "grid_mean_T_G1_K",
            "mc_mean_T_G1_K",
            "mc_mean_T_G1_se_K",
            "grid_detector_rate_change",
            "mc_detector_rate_change",
        ],
    );
    t.note(format!("{} samples per scenario, seed {} + scenario index", o.samples, ctx.seed));
    for ((_, s), r) in indexed.iter().zip(results) {
        let (grid, mean_t, mc) = r?;
        t.row(&[
            s.v,
            s.power_scale,
            s.n_beams as f64,
            grid.ion_yield,
            mc.ion_yield,
            mc.ion_yield_se,
            mean_t,
            mc.mean_t_g1,
            mc.mean_t_g1_se,
            grid.detector_rate_change,
            mc.detector_rate_change,
        ]);
    }
    Ok(vec![
        ctx.finish(t, "oracle.csv"),
        plot_script(
            "plot_oracle.gp",
            "velocity (m/s)",
            "ion yield",
            true,
            &[
                Series::new("oracle.csv", "1:4", "grid"),
                Series::new("oracle.csv", "1:5:6 with yerrorbars", "Monte Carlo"),
            ],
        ),
    ])
}

pub fn describe_model(model: &EmitterModel) -> String {
    format!(
        "C_V = {} eV/K, emission window {}–{} eV",
        model.heat_capacity,
        model.omega_min * HBAR_EV_S,
        model.omega_max * HBAR_EV_S
    )
}
