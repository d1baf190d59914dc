use serde::{Deserialize, Serialize};

use crate::constants::{
    c70_heat_capacity, photon_energy_ev, AMU_KG, C70_IONIZATION_POTENTIAL_EV, C70_TRIPLET_ENERGY_EV, KB_J_K,
};
use crate::cooling::TemperatureGrid;
use crate::error::{Error, Result};

/// Velocity class selected by the time-of-flight chopper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityBand {
    /// m/s
    pub center: f64,
    /// Δv/v (full width)
    pub relative_width: f64,
    /// Talbot order L/L_T addressed by this band.
    pub talbot_order: u32,
    /// Heating beams used when sweeping this band.
    pub n_beams: usize,
}

/// Initial-temperature windows of the per-segment cooling-law fits, K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRanges {
    pub heating_gap: (f64, f64),
    pub to_first_grating: (f64, f64),
    pub to_detector: (f64, f64),
    pub detector: (f64, f64),
}

impl Default for FitRanges {
    fn default() -> Self {
        FitRanges {
            heating_gap: (2000.0, 12000.0),
            to_first_grating: (1500.0, 8000.0),
            to_detector: (1000.0, 3500.0),
            detector: (1500.0, 12000.0),
        }
    }
}

/// Every geometric and laser parameter of the beamline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamlineConfig {
    /// Maximum number of heating passes.
    pub max_beams: usize,
    /// W, power of pass N is `(power_offset − power_slope·N)·(P/P₀)`.
    pub power_offset: f64,
    pub power_slope: f64,
    /// W, maximal laser output P₀.
    pub max_power: f64,
    /// m
    pub heating_waist: f64,
    /// m
    pub heating_wavelength: f64,
    /// m, distance between successive foci.
    pub beam_spacing: f64,
    /// m, last possible focus to the first grating.
    pub heating_to_grating: f64,
    /// m, grating period d.
    pub grating_period: f64,
    /// m, grating separation L.
    pub grating_separation: f64,
    /// m, first grating to the detection laser.
    pub grating_to_detector: f64,
    /// W
    pub detector_power: f64,
    /// m
    pub detector_waist: f64,
    /// m
    pub detector_wavelength: f64,
    /// m, flight behind the detection laser over which ions are collected.
    pub detector_span: f64,
    /// K
    pub oven_temperature: f64,
    /// m
    pub beam_height: f64,
    /// Jitter span of the heating-beam centres in units of the heating waist.
    pub center_jitter: f64,
    /// Explicit heating-beam centres in m (measured from the bottom of the beam);
    /// overrides the low-discrepancy placement when set.
    pub beam_centers: Option<Vec<f64>>,
    pub y_nodes: usize,
    pub detector_y_nodes: usize,
    pub grid: TemperatureGrid,
    pub mass_amu: f64,
    /// eV/K
    pub heat_capacity: f64,
    /// eV, ionization energy from the triplet state.
    pub ionization_energy: f64,
    pub baseline_visibility: f64,
    pub bands: Vec<VelocityBand>,
    pub fit_ranges: FitRanges,
    /// Width ratio of the initial-temperature windows of the per-segment law
    /// banks, which then span from the lower fit-range bound to the grid top.
    /// `None` fits a single law per segment on its fit range.
    pub law_window_ratio: Option<f64>,
    /// Average the reduction factor over the velocity spread of a band.
    pub velocity_averaging: bool,
}

impl Default for BeamlineConfig {
    fn default() -> Self {
        BeamlineConfig {
            max_beams: 16,
            power_offset: 11.2,
            power_slope: 0.42,
            max_power: 10.8,
            heating_waist: 50e-6,
            heating_wavelength: 514e-9,
            beam_spacing: 0.3e-3,
            heating_to_grating: 0.07,
            grating_period: 990e-9,
            grating_separation: 0.38,
            grating_to_detector: 0.76,
            detector_power: 16.0,
            detector_waist: 8e-6,
            detector_wavelength: 488e-9,
            detector_span: 0.30,
            oven_temperature: 900.0,
            beam_height: 150e-6,
            center_jitter: 1.5,
            beam_centers: None,
            y_nodes: 61,
            detector_y_nodes: 121,
            grid: TemperatureGrid { t_min: 0.0, width: 5.0, bins: 3000 },
            mass_amu: 840.0,
            heat_capacity: c70_heat_capacity(),
            ionization_energy: C70_IONIZATION_POTENTIAL_EV - C70_TRIPLET_ENERGY_EV,
            baseline_visibility: 0.47,
            bands: vec![
                VelocityBand { center: 100.0, relative_width: 0.10, talbot_order: 2, n_beams: 10 },
                VelocityBand { center: 190.0, relative_width: 0.15, talbot_order: 1, n_beams: 16 },
            ],
            fit_ranges: FitRanges::default(),
            law_window_ratio: Some(1.2),
            velocity_averaging: false,
        }
    }
}

impl BeamlineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("heating_waist", self.heating_waist),
            ("heating_wavelength", self.heating_wavelength),
            ("beam_spacing", self.beam_spacing),
            ("heating_to_grating", self.heating_to_grating),
            ("grating_period", self.grating_period),
            ("grating_separation", self.grating_separation),
            ("grating_to_detector", self.grating_to_detector),
            ("detector_waist", self.detector_waist),
            ("detector_wavelength", self.detector_wavelength),
            ("detector_span", self.detector_span),
            ("oven_temperature", self.oven_temperature),
            ("beam_height", self.beam_height),
            ("mass_amu", self.mass_amu),
            ("heat_capacity", self.heat_capacity),
            ("ionization_energy", self.ionization_energy),
            ("max_power", self.max_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("config `{name}` must be positive, got {v}")));
            }
        }
        if self.detector_power < 0.0 || self.center_jitter < 0.0 {
            return Err(Error::InvalidInput("config powers and jitter must be non-negative".into()));
        }
        if self.max_beams == 0 || self.y_nodes == 0 || self.detector_y_nodes == 0 || self.grid.bins < 2 {
            return Err(Error::InvalidInput("config needs at least one beam, one y node and two T bins".into()));
        }
        if !(0.0..=1.0).contains(&self.baseline_visibility) {
            return Err(Error::InvalidInput("baseline_visibility must lie in [0, 1]".into()));
        }
        if self.power_offset - self.power_slope * (self.max_beams as f64) < 0.0 {
            return Err(Error::InvalidInput("power of the last pass would be negative".into()));
        }
        if let Some(c) = &self.beam_centers {
            if c.len() < self.max_beams {
                return Err(Error::InvalidInput(format!("beam_centers needs {} entries", self.max_beams)));
            }
        }
        if self.oven_temperature >= self.grid.t_max() {
            return Err(Error::InvalidInput("oven temperature lies above the temperature grid".into()));
        }
        if let Some(r) = self.law_window_ratio {
            if !(r > 1.0) || !r.is_finite() {
                return Err(Error::InvalidInput(format!("law_window_ratio must exceed 1, got {r}")));
            }
        }
        for b in &self.bands {
            if !(b.center > 0.0) || b.n_beams == 0 || b.n_beams > self.max_beams || !(b.relative_width >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid velocity band {b:?}")));
            }
        }
        Ok(())
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * AMU_KG
    }

    /// Most probable oven speed √(2k_BT/m).
    pub fn most_probable_speed(&self) -> f64 {
        (2.0 * KB_J_K * self.oven_temperature / self.mass_kg()).sqrt()
    }

    /// Temperature increase per absorbed heating photon, ħω_L/C_V.
    pub fn heating_kick(&self) -> f64 {
        photon_energy_ev(self.heating_wavelength) / self.heat_capacity
    }

    pub fn detector_kick(&self) -> f64 {
        photon_energy_ev(self.detector_wavelength) / self.heat_capacity
    }

    pub fn ionization_temperature(&self) -> f64 {
        self.ionization_energy / crate::constants::KB_EV_K
    }

    /// Power of pass `index` (1-based) at global power knob `power_scale = P/P₀`.
    pub fn beam_power(&self, index: usize, power_scale: f64) -> f64 {
        (self.power_offset - self.power_slope * index as f64) * power_scale
    }

    /// Centre of pass `index` (1-based), measured from the bottom of the beam.
    ///
    /// Without explicit centres, centres follow the base-2 van der Corput
    /// sequence over the jitter span around the midline.
    pub fn beam_center(&self, index: usize) -> f64 {
        if let Some(c) = &self.beam_centers {
            return c[index - 1];
        }
        let span = self.center_jitter * self.heating_waist;
        0.5 * self.beam_height + (van_der_corput(index as u64) - 0.5) * span
    }

    /// Flight from the last used heating beam to the first grating.
    pub fn flight_to_grating(&self, n_beams: usize) -> f64 {
        (self.max_beams - n_beams) as f64 * self.beam_spacing + self.heating_to_grating
    }
}

fn van_der_corput(mut k: u64) -> f64 {
    let mut x = 0.0;
    let mut base = 0.5;
    while k > 0 {
        if k & 1 == 1 {
            x += base;
        }
        k >>= 1;
        base *= 0.5;
    }
    x
}
