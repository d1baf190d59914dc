//! Decoherence by thermal photon emission inside the interferometer.
//!
//! A photon of frequency ω emitted at time t, when the two interfering paths
//! are separated by Δx(t) = d·(L − |vt − L|)/L_T, reduces the fringe contrast
//! by 1 − sinc(ωΔx/c). The reduction factor over the transit 0…2L/v is
//!
//! R(T₀) = exp(−∫dt ∫dω R_ω(ω, T(t; T₀)) [1 − sinc(ωΔx(t)/c)]).

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::beamline::{Beamline, BeamlineConfig, ModelParams, Scenario, VelocityBand};
use crate::constants::{C_M_S, H_J_S};
use crate::cooling::{temperatures_at, TemperatureDistribution, TemperatureGrid};
use crate::error::{Error, Result};
use crate::numerics::quadrature::gauss_legendre;
use crate::numerics::{one_minus_sinc, par_map};
use crate::spectra::{EmitterModel, FluxTable, Radiator, SpectralEmitter};
use crate::thermometry::temperature_distribution_at_g1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerGeometry {
    /// Grating period, m.
    pub d: f64,
    /// Grating separation, m.
    pub l: f64,
    /// d²/λ_dB, m.
    pub talbot_length: f64,
    /// m/s
    pub v: f64,
    pub baseline_visibility: f64,
}

impl InterferometerGeometry {
    pub fn new(d: f64, l: f64, v: f64, mass_kg: f64, baseline_visibility: f64) -> Result<Self> {
        if !(d > 0.0 && l > 0.0 && v > 0.0 && mass_kg > 0.0) {
            return Err(Error::InvalidInput(format!("geometry needs d, L, v, m > 0 (got {d}, {l}, {v}, {mass_kg})")));
        }
        if !(0.0..=1.0).contains(&baseline_visibility) {
            return Err(Error::InvalidInput(format!("baseline visibility {baseline_visibility} outside [0, 1]")));
        }
        let lambda_db = H_J_S / (mass_kg * v);
        Ok(InterferometerGeometry { d, l, talbot_length: d * d / lambda_db, v, baseline_visibility })
    }

    pub fn from_config(config: &BeamlineConfig, v: f64) -> Result<Self> {
        Self::new(config.grating_period, config.grating_separation, v, config.mass_kg(), config.baseline_visibility)
    }

    /// L/L_T.
    pub fn talbot_order(&self) -> f64 {
        self.l / self.talbot_length
    }

    /// 2L/v, s.
    pub fn transit_time(&self) -> f64 {
        2.0 * self.l / self.v
    }

    /// Path separation at time `t` after the first grating, m.
    pub fn path_separation(&self, t: f64) -> f64 {
        self.d * (self.l - (self.v * t - self.l).abs()).max(0.0) / self.talbot_length
    }
}

/// Composite Gauss-Legendre rule in time, split at the second grating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    /// Panels on each half of the transit.
    pub panels_per_half: usize,
    pub order: usize,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature { panels_per_half: 48, order: 6 }
    }
}

impl TimeQuadrature {
    /// Nodes and weights over [0, 2L/v].
    pub fn nodes(&self, geom: &InterferometerGeometry) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.panels_per_half == 0 || self.order == 0 {
            return Err(Error::InvalidInput("time quadrature needs panels and nodes".into()));
        }
        let (xs, ws) = gauss_legendre(self.order);
        let half = geom.l / geom.v;
        let h = half / self.panels_per_half as f64;
        let mut t = Vec::with_capacity(2 * self.panels_per_half * self.order);
        let mut w = Vec::with_capacity(t.capacity());
        for p in 0..2 * self.panels_per_half {
            let mid = (p as f64 + 0.5) * h;
            for (x, wx) in xs.iter().zip(&ws) {
                t.push(mid + 0.5 * h * x);
                w.push(0.5 * h * wx);
            }
        }
        Ok((t, w))
    }
}

/// Decoherence exponent −ln R for a molecule entering at `t0`.
pub fn decoherence_exponent(
    t0: f64,
    geom: &InterferometerGeometry,
    emitter: &dyn SpectralEmitter,
    radiator: &dyn Radiator,
    quadrature: &TimeQuadrature,
) -> Result<f64> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::InvalidInput(format!("initial temperature must be positive, got {t0}")));
    }
    let (times, weights) = quadrature.nodes(geom)?;
    let temps = temperatures_at(t0, &times, radiator)?;
    let mut total = 0.0;
    for ((t, w), temp) in times.iter().zip(&weights).zip(&temps) {
        let k = geom.path_separation(*t) / C_M_S;
        total += w * emitter.weighted_emission(*temp, &|omega| one_minus_sinc(omega * k))?;
    }
    Ok(total)
}

/// R(T₀) for arbitrary emitter and radiator; see [`Decoherence`] for the
/// calibrated model.
pub fn reduction_factor(
    t0: f64,
    geom: &InterferometerGeometry,
    emitter: &dyn SpectralEmitter,
    radiator: &dyn Radiator,
    quadrature: &TimeQuadrature,
) -> Result<f64> {
    Ok((-decoherence_exponent(t0, geom, emitter, radiator, quadrature)?).exp())
}

/// Past this exponent R underflows and every hotter bin is zero too.
const EXPONENT_CUTOFF: f64 = 745.0;

type TableKey = [u64; 6];

/// Emitter model plus its flux table for the trajectories, with reduction
/// factors cached per (geometry, grid bin centre).
pub struct Decoherence {
    model: EmitterModel,
    table: FluxTable,
    pub quadrature: TimeQuadrature,
    cache: Mutex<HashMap<TableKey, Vec<f64>>>,
}

impl Decoherence {
    pub fn new(model: EmitterModel) -> Result<Self> {
        let table = FluxTable::new(&model)?;
        Ok(Self::with_table(model, table))
    }

    pub fn from_beamline(beamline: &Beamline) -> Self {
        Self::with_table(beamline.model().clone(), beamline.flux_table().clone())
    }

    fn with_table(model: EmitterModel, table: FluxTable) -> Self {
        Decoherence { model, table, quadrature: TimeQuadrature::default(), cache: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &EmitterModel {
        &self.model
    }

    pub fn reduction_factor(&self, t0: f64, geom: &InterferometerGeometry) -> Result<f64> {
        reduction_factor(t0, geom, &self.model, &self.table, &self.quadrature)
    }

    /// R at the centres of bins `0..bins` of `grid`.
    pub fn reduction_table(
        &self,
        grid: &TemperatureGrid,
        bins: usize,
        geom: &InterferometerGeometry,
    ) -> Result<Vec<f64>> {
        let key = [geom.d, geom.l, geom.v, geom.talbot_length, grid.t_min, grid.width].map(f64::to_bits);
        let cached = {
            let cache = self.cache.lock().expect("reduction cache poisoned");
            cache.get(&key).cloned()
        };
        let mut values = cached.unwrap_or_default();
        if values.len() >= bins {
            values.truncate(bins);
            return Ok(values);
        }
        if values.last() == Some(&0.0) {
            values.resize(bins, 0.0);
            return Ok(values);
        }
        let centers: Vec<f64> = (values.len()..bins).map(|i| grid.center(i)).collect();
        // evaluate in blocks so that the monotone cutoff can end the scan early
        for block in centers.chunks(64) {
            let exps = par_map(block, |&t| {
                decoherence_exponent(t.max(f64::MIN_POSITIVE), geom, &self.model, &self.table, &self.quadrature)
            });
            let mut done = false;
            for e in exps {
                let e = e?;
                if e > EXPONENT_CUTOFF {
                    done = true;
                }
                values.push(if done { 0.0 } else { (-e).exp() });
            }
            if done {
                values.resize(bins, 0.0);
                break;
            }
        }
        self.cache.lock().expect("reduction cache poisoned").insert(key, values.clone());
        Ok(values)
    }

    /// Σ f(T₀)·R(T₀) over the bins of `dist`, evaluated at bin centres.
    pub fn mean_reduction(&self, dist: &TemperatureDistribution, geom: &InterferometerGeometry) -> Result<f64> {
        let total = dist.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("distribution has no mass".into()));
        }
        let top = dist.masses.iter().rposition(|m| *m > 0.0).map_or(0, |i| i + 1);
        let r = self.reduction_table(&dist.grid, top, geom)?;
        Ok(dist.masses.iter().zip(&r).map(|(m, r)| m * r).sum::<f64>() / total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPrediction {
    pub power_scale: f64,
    /// Laser output power, W.
    pub power_w: f64,
    pub mean_t_g1: f64,
    /// Mean reduction factor over f_G1.
    pub r_mean: f64,
    /// Mean reduction relative to the unheated beam.
    pub r_relative: f64,
    /// V₀·r_relative.
    pub visibility: f64,
    /// Non-ionized fraction at the first grating.
    pub surviving_fraction: f64,
}

/// Visibility versus power for one velocity band.
///
/// V₀ is the measured visibility of the unheated beam, which already carries
/// the unheated reduction, so the prediction is V₀·r_mean(P)/r_mean(0).
pub fn predict_visibility_curve(
    beamline: &Beamline,
    decoherence: &Decoherence,
    band: &VelocityBand,
    power_scales: &[f64],
    params: &ModelParams,
) -> Result<Vec<VisibilityPrediction>> {
    let cfg = beamline.config();
    let velocities = if cfg.velocity_averaging { band_nodes(cfg, band) } else { vec![(band.center, 1.0)] };
    let mean_at = |power_scale: f64| -> Result<(f64, f64, f64)> {
        let (mut r, mut t, mut s) = (0.0, 0.0, 0.0);
        for &(v, w) in &velocities {
            let geom = InterferometerGeometry::from_config(cfg, v)?;
            let scenario = Scenario { v, power_scale, n_beams: band.n_beams };
            let g1 = temperature_distribution_at_g1(beamline, &scenario, params)?;
            r += w * decoherence.mean_reduction(&g1.distribution, &geom)?;
            t += w * g1.mean_temperature;
            s += w * g1.surviving_fraction;
        }
        Ok((r, t, s))
    };
    let (r0, _, _) = mean_at(0.0)?;
    let v0 = cfg.baseline_visibility;
    power_scales
        .iter()
        .map(|&p| {
            let (r, mean_t_g1, surviving_fraction) = mean_at(p)?;
            let r_relative = if r0 > 0.0 { (r / r0).min(1.0) } else { 0.0 };
            Ok(VisibilityPrediction {
                power_scale: p,
                power_w: p * cfg.max_power,
                mean_t_g1,
                r_mean: r,
                r_relative,
                visibility: v0 * r_relative,
                surviving_fraction,
            })
        })
        .collect()
}

/// Velocity nodes across a band, weighted by the effusive flux over a
/// flat chopper window.
fn band_nodes(cfg: &BeamlineConfig, band: &VelocityBand) -> Vec<(f64, f64)> {
    if band.relative_width == 0.0 {
        return vec![(band.center, 1.0)];
    }
    let beam = crate::beamline::EffusiveBeam::from_config(cfg);
    let (xs, ws) = gauss_legendre(5);
    let half = 0.5 * band.relative_width * band.center;
    let mut nodes: Vec<(f64, f64)> = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| {
            let v = band.center + half * x;
            (v, w * crate::beamline::effusive_weight(v, &beam))
        })
        .collect();
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    nodes.iter_mut().for_each(|n| n.1 /= total);
    nodes
}
