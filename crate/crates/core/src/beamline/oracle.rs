//! Molecule-by-molecule Monte Carlo of the beamline, used to validate the grid transport.
//!
//! Each molecule gets a uniform height, Poisson photon counts per beam, exact
//! ODE cooling between beams, and ionizes once its accumulated Arrhenius
//! hazard crosses an Exp(1) threshold drawn at the oven.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use super::{mean_absorbed_photons, Beamline, HeatingBeam, IonizationModel, ModelParams, Scenario};
use crate::cooling::TemperatureDistribution;
use crate::error::{Error, Result};
use crate::numerics::ode::{DormandPrince, OdeOptions};
use crate::spectra::Radiator;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub n_samples: usize,
    pub ion_yield: f64,
    /// Binomial standard error of `ion_yield`.
    pub ion_yield_se: f64,
    /// Normalized histogram of the survivors' temperature at the first grating.
    pub f_g1: TemperatureDistribution,
    pub mean_t_g1: f64,
    pub mean_t_g1_se: f64,
    pub after_first_grating: f64,
    pub detected_fraction: f64,
    pub baseline_detected_fraction: f64,
    pub detector_rate_change: f64,
}

struct Flight<'a> {
    radiator: &'a dyn Radiator,
    ion: IonizationModel,
}

impl Flight<'_> {
    /// Cools for `duration`, adding the Arrhenius hazard to `hazard`.
    fn fly(&self, temperature: &mut f64, hazard: &mut f64, duration: f64) -> Result<()> {
        let cv = self.radiator.heat_capacity();
        let t_ion = self.ion.t_ion();
        let a = self.ion.a_ion;
        let radiator = self.radiator;
        let rhs = move |_: f64, y: &[f64; 2]| {
            let t = y[0].max(1.0);
            [-radiator.radiant_flux(t) / cv, a * (-t_ion / t).exp()]
        };
        let opts = OdeOptions { rtol: 1e-9, atol: 1e-12, ..OdeOptions::default() };
        let mut dp = DormandPrince::new(rhs, 0.0, [*temperature, 0.0], opts);
        dp.advance_to(duration, |_, _| {})?;
        *temperature = dp.y[0].min(*temperature);
        *hazard += dp.y[1];
        Ok(())
    }
}

fn photons(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

enum Fate {
    HeatingStage,
    AfterFirstGrating(f64),
    Detected(f64),
    Neutral(f64),
}

/// Runs `n_samples` molecules through the beamline of `beamline`.
pub fn monte_carlo_oracle(
    beamline: &Beamline,
    scenario: &Scenario,
    params: &ModelParams,
    n_samples: usize,
    seed: u64,
) -> Result<OracleOutcome> {
    if n_samples < 10_000 {
        return Err(Error::InvalidInput(format!("the oracle needs at least 10⁴ samples, got {n_samples}")));
    }
    beamline.check_scenario(scenario)?;
    let cfg = beamline.config();
    let flight = Flight { radiator: beamline.flux_table(), ion: beamline.ionization(params)? };
    let v = scenario.v;
    let beams: Vec<HeatingBeam> =
        (1..=scenario.n_beams).map(|k| beamline.heating_beam(k, scenario.power_scale)).collect();
    let detector = beamline.detector_beam();
    let kick = cfg.heating_kick();
    let det_kick = cfg.detector_kick();
    let gap = cfg.beam_spacing / v;
    let to_g1 = cfg.flight_to_grating(scenario.n_beams) / v;
    let to_det = cfg.grating_to_detector / v;
    let det_span = cfg.detector_span / v;

    let run_molecule = |rng: &mut ChaCha8Rng, heated: bool| -> Result<Fate> {
        let y = rng.gen::<f64>() * cfg.beam_height;
        let threshold: f64 = Exp1.sample(rng);
        let mut t = cfg.oven_temperature;
        let mut hazard = 0.0;
        for (k, beam) in beams.iter().enumerate() {
            if heated && params.sigma_t1 > 0.0 && beam.power > 0.0 {
                t += kick * photons(rng, mean_absorbed_photons(v, y, beam, params.sigma_t1));
            }
            flight.fly(&mut t, &mut hazard, if k + 1 < beams.len() { gap } else { to_g1 })?;
            if hazard >= threshold {
                return Ok(Fate::HeatingStage);
            }
        }
        let t_g1 = t;
        flight.fly(&mut t, &mut hazard, to_det)?;
        if hazard >= threshold {
            return Ok(Fate::AfterFirstGrating(t_g1));
        }
        let yd = rng.gen::<f64>() * cfg.beam_height;
        t += det_kick * photons(rng, mean_absorbed_photons(v, yd, &detector, params.sigma_t1));
        flight.fly(&mut t, &mut hazard, det_span)?;
        Ok(if hazard >= threshold { Fate::Detected(t_g1) } else { Fate::Neutral(t_g1) })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f_g1 = TemperatureDistribution::zeros(cfg.grid);
    let (mut ions, mut post, mut detected) = (0usize, 0usize, 0usize);
    let (mut sum_t, mut sum_t2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let t_g1 = match run_molecule(&mut rng, true)? {
            Fate::HeatingStage => {
                ions += 1;
                continue;
            }
            Fate::AfterFirstGrating(t) => {
                post += 1;
                t
            }
            Fate::Detected(t) => {
                detected += 1;
                t
            }
            Fate::Neutral(t) => t,
        };
        f_g1.add_point_mass(t_g1, 1.0);
        sum_t += t_g1;
        sum_t2 += t_g1 * t_g1;
    }
    let mut baseline_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut baseline = 0usize;
    for _ in 0..n_samples {
        if let Fate::Detected(_) = run_molecule(&mut baseline_rng, false)? {
            baseline += 1;
        }
    }

    let n = n_samples as f64;
    let p = ions as f64 / n;
    let survivors = (n_samples - ions) as f64;
    let mean_t = sum_t / survivors;
    let var_t = (sum_t2 / survivors - mean_t * mean_t).max(0.0) * survivors / (survivors - 1.0).max(1.0);
    let det_frac = detected as f64 / n;
    let base_frac = baseline as f64 / n;
    Ok(OracleOutcome {
        n_samples,
        ion_yield: p,
        ion_yield_se: (p * (1.0 - p) / n).sqrt(),
        f_g1: if survivors > 0.0 { f_g1.normalized() } else { f_g1 },
        mean_t_g1: mean_t,
        mean_t_g1_se: (var_t / survivors).sqrt(),
        after_first_grating: post as f64 / n,
        detected_fraction: det_frac,
        baseline_detected_fraction: base_frac,
        detector_rate_change: if baseline > 0 { det_frac / base_frac - 1.0 } else { 0.0 },
    })
}
