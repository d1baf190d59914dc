//! Transport of the non-ionized density over (internal temperature × vertical
//! position) through the heating beams, free flights with cooling and
//! thermionic ionization, and the detection laser.

pub mod config;
pub mod oracle;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::constants::{CM2_TO_M2, C_M_S, H_J_S, KB_EV_K};
use crate::cooling::{
    fit_cooling_law, CoolingFit, CoolingLaw, CoolingLawBank, RebinMap, TemperatureDistribution, TemperatureGrid,
};
use crate::error::{Error, Result};
use crate::numerics::gamma::ln_gamma_increment;
use crate::spectra::{EmitterModel, FluxTable};

pub use config::{BeamlineConfig, FitRanges, VelocityBand};

/// Effusive flux distribution `C_T v³ exp(−v²/v_w²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffusiveBeam {
    /// m/s
    pub v_w: f64,
    pub c_t: f64,
}

impl EffusiveBeam {
    pub fn from_config(config: &BeamlineConfig) -> Self {
        EffusiveBeam { v_w: config.most_probable_speed(), c_t: 1.0 }
    }
}

pub fn effusive_weight(v: f64, beam: &EffusiveBeam) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    beam.c_t * v.powi(3) * (-(v / beam.v_w).powi(2)).exp()
}

/// One pass of a focused Gaussian laser through the molecular beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingBeam {
    pub index: usize,
    /// W
    pub power: f64,
    /// m
    pub waist: f64,
    /// m
    pub center: f64,
    /// m
    pub wavelength: f64,
}

/// √(2/π) λσP/(h c w_y v) · exp(−2(y−y₀)²/w_y²), with σ in cm².
pub fn mean_absorbed_photons(v: f64, y: f64, beam: &HeatingBeam, sigma_cm2: f64) -> f64 {
    let peak = (2.0 / std::f64::consts::PI).sqrt() * beam.wavelength * sigma_cm2 * CM2_TO_M2 * beam.power
        / (H_J_S * C_M_S * beam.waist * v);
    peak * (-2.0 * ((y - beam.center) / beam.waist).powi(2)).exp()
}

/// Arrhenius thermionic emission `A exp(−E_ion/k_BT)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonizationModel {
    /// s⁻¹
    pub a_ion: f64,
    /// eV
    pub e_ion: f64,
}

impl IonizationModel {
    pub fn new(a_ion: f64, e_ion: f64) -> Result<Self> {
        if !(a_ion >= 0.0) || !a_ion.is_finite() || !(e_ion > 0.0) {
            return Err(Error::InvalidInput(format!("need A_ion ≥ 0 and E_ion > 0 (got {a_ion}, {e_ion})")));
        }
        Ok(IonizationModel { a_ion, e_ion })
    }

    pub fn t_ion(&self) -> f64 {
        self.e_ion / KB_EV_K
    }

    pub fn rate(&self, temperature: f64) -> f64 {
        if temperature <= 0.0 {
            return 0.0;
        }
        self.a_ion * (-self.t_ion() / temperature).exp()
    }
}

/// The two unknowns of the thermometry fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Triplet absorption cross section, cm².
    pub sigma_t1: f64,
    /// Arrhenius prefactor, s⁻¹.
    pub a_ion: f64,
}

impl ModelParams {
    /// Fitted values quoted for C70.
    pub fn reference() -> Self {
        ModelParams { sigma_t1: 2e-17, a_ion: 5e9 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("sigma_t1", self.sigma_t1), ("a_ion", self.a_ion)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and non-negative, got {x}")));
            }
        }
        Ok(())
    }
}

/// ∫₀^τ exp(−T_ion/T(t; T₀)) dt along the in-segment law, in s.
///
/// Closed form `τ n (T∞/T_ion)ⁿ [Γ(n, u₀) − Γ(n, u₁)]` with `u₀ = T_ion/T₀`
/// and `u₁ = u₀ (1 + (T₀/T∞)ⁿ)^(1/n)`, evaluated in log space.
pub fn arrhenius_exposure(law: &CoolingLaw, t0: f64, t_ion: f64) -> Result<f64> {
    if t0 <= 0.0 || law.duration == 0.0 {
        return Ok(0.0);
    }
    let u0 = t_ion / t0;
    if law.is_identity() {
        return Ok(law.duration * (-u0).exp());
    }
    let n = law.n;
    let x = n * (t0 / law.t_infinity).ln();
    let ln1p_r = if x > 35.0 { x + (-x).exp() } else { x.exp().ln_1p() };
    let u1 = u0 * (ln1p_r / n).exp();
    let ln_inc = ln_gamma_increment(n, u0, u1)?;
    if ln_inc == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let ln_c = n.ln() + n * (law.t_infinity / t_ion).ln() + ln_inc;
    Ok(law.duration * ln_c.exp())
}

/// Neutral fraction surviving the segment from initial temperature `t0`.
pub fn survival_factor(law: &CoolingLaw, t0: f64, ion: &IonizationModel) -> Result<f64> {
    Ok((-ion.a_ion * arrhenius_exposure(law, t0, ion.t_ion())?).exp())
}

/// Poisson(μ) probabilities, truncated once the cumulative mass exceeds
/// 1 − 10⁻¹²; the remaining tail is added to the last term.
pub fn poisson_weights(mean: f64) -> Vec<f64> {
    if !(mean > 0.0) {
        return vec![1.0];
    }
    let mut p = (-mean).exp();
    let mut w = vec![p];
    let mut cum = p;
    let mut k = 0.0;
    let cap = (mean + 40.0 * mean.sqrt() + 60.0) as usize;
    // for μ > 745 the leading term underflows; start from the mode instead
    if p == 0.0 {
        return poisson_weights_from_mode(mean);
    }
    while cum <= 1.0 - 1e-12 && w.len() < cap {
        k += 1.0;
        p *= mean / k;
        w.push(p);
        cum += p;
    }
    let head: f64 = w[..w.len() - 1].iter().sum();
    let last = w.len() - 1;
    w[last] = 1.0 - head;
    w
}

fn poisson_weights_from_mode(mean: f64) -> Vec<f64> {
    let mode = mean.floor();
    let ln_pm = mode * mean.ln() - mean - crate::numerics::gamma::ln_gamma(mode + 1.0);
    let width = (12.0 * mean.sqrt() + 20.0) as usize;
    let lo = (mode as usize).saturating_sub(width);
    let hi = mode as usize + width;
    let mut w = vec![0.0; hi + 1];
    w[mode as usize] = ln_pm.exp();
    for k in (lo..mode as usize).rev() {
        w[k] = w[k + 1] * (k + 1) as f64 / mean;
    }
    for k in mode as usize + 1..=hi {
        w[k] = w[k - 1] * mean / k as f64;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    w
}

const NEGLIGIBLE_MASS: f64 = 1e-18;

/// Shifts every bin of `input` by k·`shift_bins` with weight `pmf[k]`,
/// splitting fractional shifts over two bins. Mass beyond the top bin is
/// kept in the top bin; bins outside the range holding more than 10⁻¹⁸ of
/// the peak bin are passed through unshifted.
fn heat_row(input: &[f64], out: &mut [f64], pmf: &[f64], shift_bins: f64) {
    let top = input.len() - 1;
    let peak = input.iter().fold(0.0f64, |a, m| a.max(*m));
    // negligible tails ride along unheated
    let floor = peak * NEGLIGIBLE_MASS;
    let (Some(lo), Some(hi)) = (input.iter().position(|m| *m > floor), input.iter().rposition(|m| *m > floor)) else {
        out.copy_from_slice(input);
        return;
    };
    out.iter_mut().for_each(|o| *o = 0.0);
    out[..lo].copy_from_slice(&input[..lo]);
    out[hi + 1..].copy_from_slice(&input[hi + 1..]);
    let src = &input[lo..=hi];
    for (k, &p) in pmf.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let s = k as f64 * shift_bins;
        let base = s.floor() as usize;
        let frac = s - base as f64;
        let (stay, move_up) = (p * (1.0 - frac), p * frac);
        let start = lo + base;
        // sources whose lower target lies below the top bin
        let n_free = top.saturating_sub(start).min(src.len());
        if n_free > 0 {
            let (low, high) = out[start..start + n_free + 1].split_at_mut(n_free);
            for (o, m) in low.iter_mut().zip(&src[..n_free]) {
                *o += m * stay;
            }
            // upper halves land one bin higher
            high[0] += src[n_free - 1] * move_up;
            for (o, m) in out[start + 1..start + n_free].iter_mut().zip(&src[..n_free - 1]) {
                *o += m * move_up;
            }
        }
        let clamped: f64 = src[n_free..].iter().sum();
        out[top] += clamped * p;
    }
}

/// Non-ionized density at one longitudinal position for one velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamState {
    /// m/s
    pub velocity: f64,
    /// m, from the first heating beam
    pub z: f64,
    pub grid: TemperatureGrid,
    /// Vertical node positions, m (cell centres over the beam height).
    pub y: Vec<f64>,
    /// Mass per (y node, T bin), row-major in y.
    pub mass: Vec<f64>,
}

impl BeamState {
    /// Unit mass at `temperature`, spread evenly over `ny` cell-centred nodes.
    pub fn initial(velocity: f64, grid: TemperatureGrid, height: f64, ny: usize, temperature: f64) -> Self {
        let y = (0..ny).map(|i| (i as f64 + 0.5) * height / ny as f64).collect();
        let row = TemperatureDistribution::delta(grid, temperature);
        let mut mass = Vec::with_capacity(ny * grid.bins);
        for _ in 0..ny {
            mass.extend(row.masses.iter().map(|m| m / ny as f64));
        }
        BeamState { velocity, z: 0.0, grid, y, mass }
    }

    pub fn from_config(config: &BeamlineConfig, velocity: f64) -> Self {
        Self::initial(velocity, config.grid, config.beam_height, config.y_nodes, config.oven_temperature)
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, iy: usize) -> &[f64] {
        let b = self.grid.bins;
        &self.mass[iy * b..(iy + 1) * b]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// ∫dy of the density: the temperature distribution irrespective of height.
    pub fn y_marginal(&self) -> TemperatureDistribution {
        let b = self.grid.bins;
        let mut m = vec![0.0; b];
        for row in self.mass.chunks_exact(b) {
            for (a, r) in m.iter_mut().zip(row) {
                *a += r;
            }
        }
        TemperatureDistribution { grid: self.grid, masses: m }
    }
}

/// Passes the state through one heating beam with photon kick `delta_t` K.
pub fn apply_heating(state: &BeamState, beam: &HeatingBeam, sigma_cm2: f64, delta_t: f64) -> BeamState {
    let b = state.grid.bins;
    let shift = delta_t / state.grid.width;
    let mut out = state.clone();
    for (iy, &y) in state.y.iter().enumerate() {
        let mean = mean_absorbed_photons(state.velocity, y, beam, sigma_cm2);
        if mean == 0.0 {
            continue;
        }
        let pmf = poisson_weights(mean);
        heat_row(state.row(iy), &mut out.mass[iy * b..(iy + 1) * b], &pmf, shift);
    }
    out
}

/// Cached transport of one free-flight segment on a fixed temperature grid.
#[derive(Debug, Clone)]
pub struct Segment {
    pub bank: CoolingLawBank,
    pub distance: f64,
    map: RebinMap,
    /// Exposure at the lower edge, centre and upper edge of each bin, under that bin's law.
    exposures: Vec<[f64; 3]>,
}

impl Segment {
    pub fn new(grid: &TemperatureGrid, bank: CoolingLawBank, distance: f64, t_ion: f64) -> Result<Self> {
        let map = RebinMap::from_bank(grid, &bank);
        let exposures = (0..grid.bins)
            .map(|i| {
                let law = bank.law_for(grid.center(i));
                Ok([
                    arrhenius_exposure(law, grid.edge(i), t_ion)?,
                    arrhenius_exposure(law, grid.center(i), t_ion)?,
                    arrhenius_exposure(law, grid.edge(i + 1), t_ion)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Segment { bank, distance, map, exposures })
    }

    /// Per-bin ionized fraction, Simpson-averaged over the bin.
    pub fn losses(&self, a_ion: f64) -> Vec<f64> {
        if a_ion == 0.0 {
            return vec![0.0; self.exposures.len()];
        }
        let loss = |x: f64| -(-a_ion * x).exp_m1();
        self.exposures.iter().map(|[l, c, h]| (loss(*l) + 4.0 * loss(*c) + loss(*h)) / 6.0).collect()
    }

    /// Per-bin survival, `1 − losses`.
    pub fn survival(&self, a_ion: f64) -> Vec<f64> {
        self.losses(a_ion).into_iter().map(|l| 1.0 - l).collect()
    }

    /// Attenuates and cools one row in place; returns the ionized mass.
    fn apply_row(&self, row: &mut [f64], losses: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let ions = row.iter().zip(losses).map(|(m, l)| m * l).sum();
        scratch.clear();
        scratch.extend(row.iter().zip(losses).map(|(m, l)| m * (1.0 - l)));
        self.map.apply(scratch, row);
        ions
    }

    fn apply_state(&self, state: &mut BeamState, losses: &[f64]) -> f64 {
        let b = state.grid.bins;
        let mut scratch = Vec::with_capacity(b);
        let mut ions = 0.0;
        for row in state.mass.chunks_exact_mut(b) {
            ions += self.apply_row(row, losses, &mut scratch);
        }
        state.z += self.distance;
        ions
    }

    fn apply_distribution(&self, dist: &mut TemperatureDistribution, losses: &[f64]) -> f64 {
        let mut scratch = Vec::with_capacity(dist.masses.len());
        self.apply_row(&mut dist.masses, losses, &mut scratch)
    }
}

/// Cools and ionizes over the flight covered by `law` (distance = v·duration).
/// Returns the new state and the ionized mass.
pub fn apply_cooling_ionization(
    state: &BeamState,
    law: &CoolingLaw,
    ion: &IonizationModel,
) -> Result<(BeamState, f64)> {
    let fit =
        CoolingFit { law: *law, max_residual: 0.0, rms_residual: 0.0, t0_range: (0.0, f64::INFINITY), samples: 0 };
    let seg = Segment::new(&state.grid, CoolingLawBank::single(fit), law.duration * state.velocity, ion.t_ion())?;
    let mut out = state.clone();
    let ions = seg.apply_state(&mut out, &seg.losses(ion.a_ion));
    Ok((out, ions))
}

/// Where the initial unit mass ends up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    /// Ionized between the first heating beam and the first grating.
    pub heating_stage: f64,
    /// Ionized between the first grating and the detection laser.
    pub after_first_grating: f64,
    /// Ionized behind the detection laser (the detected signal).
    pub detector: f64,
    /// Neutral after the detection region.
    pub surviving: f64,
}

impl MassLedger {
    pub fn total(&self) -> f64 {
        self.heating_stage + self.after_first_grating + self.detector + self.surviving
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamlineOutcome {
    pub state_at_g1: BeamState,
    /// Normalized ion yield I(v)/[C_T v³ exp(−v²/v_w²)].
    pub ion_yield: f64,
    /// Detected ion rate relative to the unheated beam, minus one.
    pub detector_rate_change: f64,
    /// Fraction of the initial beam ionized in the detector.
    pub detected_fraction: f64,
    pub baseline_detected_fraction: f64,
    pub ledger: MassLedger,
}

/// Scenario of one simulated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// m/s
    pub v: f64,
    /// P/P₀
    pub power_scale: f64,
    pub n_beams: usize,
}

type SegmentKey = (u64, u64, u64);

/// Beamline simulator: configuration, emission model and the per-segment
/// cooling-law fits, which depend only on velocity and are cached.
pub struct Beamline {
    config: BeamlineConfig,
    model: EmitterModel,
    table: FluxTable,
    segments: Mutex<HashMap<SegmentKey, Arc<Segment>>>,
}

impl Beamline {
    pub fn new(config: BeamlineConfig, model: EmitterModel) -> Result<Self> {
        config.validate()?;
        let model = EmitterModel { heat_capacity: config.heat_capacity, ..model };
        let table = FluxTable::new(&model)?;
        Ok(Beamline { config, model, table, segments: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &BeamlineConfig {
        &self.config
    }

    pub fn model(&self) -> &EmitterModel {
        &self.model
    }

    pub fn flux_table(&self) -> &FluxTable {
        &self.table
    }

    pub fn ionization(&self, params: &ModelParams) -> Result<IonizationModel> {
        IonizationModel::new(params.a_ion, self.config.ionization_energy)
    }

    /// Fitted transport over `distance` at speed `v`, fitted on `range`.
    pub fn segment(&self, v: f64, distance: f64, range: (f64, f64)) -> Result<Arc<Segment>> {
        let duration = distance / v;
        let key = (duration.to_bits(), range.0.to_bits(), range.1.to_bits());
        if let Some(s) = self.segments.lock().expect("segment cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let bank = match self.config.law_window_ratio {
            Some(ratio) => CoolingLawBank::fit(&self.table, duration, (range.0, self.config.grid.t_max()), ratio)?,
            None => CoolingLawBank::single(fit_cooling_law(&self.table, duration, range)?),
        };
        let seg = Arc::new(Segment::new(&self.config.grid, bank, distance, self.config.ionization_temperature())?);
        self.segments.lock().expect("segment cache poisoned").insert(key, Arc::clone(&seg));
        Ok(seg)
    }

    /// Segments in beam order: the gap after each beam but the last, then the flight to G1.
    pub fn heating_segments(&self, v: f64, n_beams: usize) -> Result<(Arc<Segment>, Arc<Segment>)> {
        let r = self.config.fit_ranges;
        let gap = self.segment(v, self.config.beam_spacing, r.heating_gap)?;
        let flight = self.segment(v, self.config.flight_to_grating(n_beams), r.to_first_grating)?;
        Ok((gap, flight))
    }

    pub fn heating_beam(&self, index: usize, power_scale: f64) -> HeatingBeam {
        HeatingBeam {
            index,
            power: self.config.beam_power(index, power_scale),
            waist: self.config.heating_waist,
            center: self.config.beam_center(index),
            wavelength: self.config.heating_wavelength,
        }
    }

    pub fn detector_beam(&self) -> HeatingBeam {
        HeatingBeam {
            index: 0,
            power: self.config.detector_power,
            waist: self.config.detector_waist,
            center: 0.5 * self.config.beam_height,
            wavelength: self.config.detector_wavelength,
        }
    }

    fn check_scenario(&self, s: &Scenario) -> Result<()> {
        if !(s.v > 0.0) || !s.v.is_finite() {
            return Err(Error::InvalidInput(format!("velocity must be positive, got {}", s.v)));
        }
        if !(s.power_scale >= 0.0) || !s.power_scale.is_finite() {
            return Err(Error::InvalidInput(format!("power scale must be ≥ 0, got {}", s.power_scale)));
        }
        if s.n_beams == 0 || s.n_beams > self.config.max_beams {
            return Err(Error::InvalidInput(format!(
                "n_beams must lie in 1..={}, got {}",
                self.config.max_beams, s.n_beams
            )));
        }
        Ok(())
    }

    /// State at the first grating and the mass ionized on the way.
    pub fn heat_to_first_grating(&self, s: &Scenario, params: &ModelParams) -> Result<(BeamState, f64)> {
        self.check_scenario(s)?;
        params.validate()?;
        let (gap, flight) = self.heating_segments(s.v, s.n_beams)?;
        let gap_losses = gap.losses(params.a_ion);
        let flight_losses = flight.losses(params.a_ion);
        let kick = self.config.heating_kick();
        let mut state = BeamState::from_config(&self.config, s.v);
        let mut ions = 0.0;
        for k in 1..=s.n_beams {
            if s.power_scale > 0.0 && params.sigma_t1 > 0.0 {
                state = apply_heating(&state, &self.heating_beam(k, s.power_scale), params.sigma_t1, kick);
            }
            ions += if k < s.n_beams {
                gap.apply_state(&mut state, &gap_losses)
            } else {
                flight.apply_state(&mut state, &flight_losses)
            };
        }
        Ok((state, ions))
    }

    /// Flight G1 → detection laser, detection laser, ion collection.
    /// Returns (post-G1 ions, detected ions, neutral remainder).
    pub fn detect(&self, f_g1: &TemperatureDistribution, v: f64, params: &ModelParams) -> Result<(f64, f64, f64)> {
        let r = self.config.fit_ranges;
        let to_det = self.segment(v, self.config.grating_to_detector, r.to_detector)?;
        let det = self.segment(v, self.config.detector_span, r.detector)?;
        let mut f = f_g1.clone();
        let post_g1 = to_det.apply_distribution(&mut f, &to_det.losses(params.a_ion));
        let arriving = f.total_mass();
        let losses = det.losses(params.a_ion);
        let beam = self.detector_beam();
        let nd = self.config.detector_y_nodes;
        let h = self.config.beam_height / nd as f64;
        let shift = self.config.detector_kick() / f.grid.width;
        let mut heated = vec![0.0; f.grid.bins];
        let mut detected = 0.0;
        for i in 0..nd {
            let y = (i as f64 + 0.5) * h;
            let pmf = poisson_weights(mean_absorbed_photons(v, y, &beam, params.sigma_t1));
            heat_row(&f.masses, &mut heated, &pmf, shift);
            let ionized: f64 = heated.iter().zip(&losses).map(|(m, l)| m * l).sum();
            detected += ionized / nd as f64;
        }
        Ok((post_g1, detected, arriving - detected))
    }

    pub fn simulate(&self, s: &Scenario, params: &ModelParams) -> Result<BeamlineOutcome> {
        let (state_at_g1, heating_ions) = self.heat_to_first_grating(s, params)?;
        let f_g1 = state_at_g1.y_marginal();
        let (post_g1, detected, surviving) = self.detect(&f_g1, s.v, params)?;
        let unheated = TemperatureDistribution::delta(self.config.grid, self.config.oven_temperature);
        let (_, baseline, _) = self.detect(&unheated, s.v, params)?;
        let detector_rate_change = if baseline > 0.0 { detected / baseline - 1.0 } else { 0.0 };
        Ok(BeamlineOutcome {
            ion_yield: heating_ions,
            detector_rate_change,
            detected_fraction: detected,
            baseline_detected_fraction: baseline,
            ledger: MassLedger {
                heating_stage: heating_ions,
                after_first_grating: post_g1,
                detector: detected,
                surviving,
            },
            state_at_g1,
        })
    }

    /// Normalized ion yield only (skips the detector stage).
    pub fn ion_yield(&self, s: &Scenario, params: &ModelParams) -> Result<f64> {
        Ok(self.heat_to_first_grating(s, params)?.1)
    }
}

/// One-shot convenience wrapper around [`Beamline::simulate`].
pub fn simulate_beamline(
    config: &BeamlineConfig,
    model: &EmitterModel,
    scenario: &Scenario,
    params: &ModelParams,
) -> Result<BeamlineOutcome> {
    Beamline::new(config.clone(), model.clone())?.simulate(scenario, params)
}
