//! Thermal photon emission of a finite-heat-capacity colored emitter.
//!
//! The spectral rate is
//! `R_ω(ω, T) = ω²/(π²c²) σ(ħω) exp[−x − (k_B/2C_V) x²]` with `x = ħω/k_BT`.
//! Integrals over ω are carried out in photon energy, split at the nodes of
//! the piecewise-linear cross-section table.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{c70_heat_capacity, C70_GAP_EV, CM2_TO_M2, C_M_S, HBAR_EV_S, KB_EV_K};
use crate::error::{ensure_finite, Error, Result};
use crate::numerics::fit_line;
use crate::numerics::quadrature::{integrate_with_breaks, Tolerance};

/// Upper end of the default quadrature window in eV.
pub const DEFAULT_MAX_PHOTON_ENERGY_EV: f64 = 6.0;

/// Published radiant-flux power law for C70 over 2000–3000 K.
pub const PUBLISHED_FLUX_PREFACTOR: f64 = 6.3e-35;
pub const PUBLISHED_FLUX_EXPONENT: f64 = 11.0;

/// Tabulated absorption cross section σ(E), zero below the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionCrossSection {
    /// (photon energy in eV, σ in cm²), strictly increasing in energy.
    points: Vec<(f64, f64)>,
    gap_energy: f64,
}

impl AbsorptionCrossSection {
    pub fn new(points: Vec<(f64, f64)>, gap_energy: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("cross-section table is empty".into()));
        }
        for &(e, s) in &points {
            ensure_finite("photon energy", e)?;
            ensure_finite("cross section", s)?;
            if s < 0.0 {
                return Err(Error::InvalidInput(format!("negative cross section {s} at {e} eV")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("cross-section photon energies must be strictly increasing".into()));
        }
        if !(gap_energy > 0.0) {
            return Err(Error::InvalidInput(format!("gap energy must be positive, got {gap_energy}")));
        }
        Ok(AbsorptionCrossSection { points, gap_energy })
    }

    /// Shipped template: zero below 1.6 eV, a weak onset, a visible plateau
    /// of 2–3×10⁻¹⁷ cm², a bump at the 3.16 eV dipole transition, and a rise
    /// towards the UV.
    pub fn default_template() -> Self {
        let points = vec![
            (1.60, 0.0),
            (2.00, 0.65e-17),
            (2.40, 2.30e-17),
            (2.80, 2.95e-17),
            (3.00, 3.25e-17),
            (3.16, 5.30e-17),
            (3.35, 3.85e-17),
            (4.00, 5.90e-17),
            (6.00, 8.85e-17),
        ];
        AbsorptionCrossSection { points, gap_energy: C70_GAP_EV }
    }

    /// Identically zero cross section (no emission at all).
    pub fn zero() -> Self {
        AbsorptionCrossSection { points: vec![(C70_GAP_EV, 0.0)], gap_energy: C70_GAP_EV }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn gap_energy(&self) -> f64 {
        self.gap_energy
    }

    /// σ in cm² at photon energy `energy_ev`.
    pub fn sigma_cm2(&self, energy_ev: f64) -> f64 {
        if energy_ev < self.gap_energy {
            return 0.0;
        }
        let pts = &self.points;
        if energy_ev <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if energy_ev >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|p| p.0 <= energy_ev);
        let (e0, s0) = pts[i - 1];
        let (e1, s1) = pts[i];
        s0 + (s1 - s0) * (energy_ev - e0) / (e1 - e0)
    }

    /// Same table with every σ multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        AbsorptionCrossSection {
            points: self.points.iter().map(|&(e, s)| (e, s * factor)).collect(),
            gap_energy: self.gap_energy,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.points.iter().all(|p| p.1 == 0.0)
    }

    /// Reads the `photon_energy_eV,sigma_cm2` CSV format (`#` comments allowed).
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let rows = crate::io::read_numeric_csv(reader, source, &["photon_energy_eV", "sigma_cm2"], 0)?;
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.values[0], r.values[1])).collect();
        if let Some(w) = rows.windows(2).find(|w| w[1].values[0] <= w[0].values[0]) {
            return Err(Error::Parse {
                path: source.into(),
                line: w[1].line,
                field: "photon_energy_eV".into(),
                message: "rows must be sorted by strictly increasing energy".into(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.values[1] < 0.0) {
            return Err(Error::Parse {
                path: source.into(),
                line: r.line,
                field: "sigma_cm2".into(),
                message: "cross section must be non-negative".into(),
            });
        }
        Self::new(points, C70_GAP_EV)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("photon_energy_eV,sigma_cm2\n");
        for (e, sig) in &self.points {
            s.push_str(&format!("{e},{sig:e}\n"));
        }
        s
    }
}

/// Anything that radiates energy and cools by it: radiant flux Φ(T) and heat capacity.
pub trait Radiator: Sync {
    /// Φ(T) in eV/s.
    fn radiant_flux(&self, temperature: f64) -> f64;
    /// C_V in eV/K.
    fn heat_capacity(&self) -> f64;
    /// Cooling rate dT/dt = −Φ(T)/C_V in K/s.
    fn cooling_rate(&self, temperature: f64) -> f64 {
        -self.radiant_flux(temperature) / self.heat_capacity()
    }
}

/// Spectrally resolved photon emission.
pub trait SpectralEmitter: Sync {
    /// ∫ R_ω(ω, T) w(ω) dω in s⁻¹.
    fn weighted_emission(&self, temperature: f64, weight: &dyn Fn(f64) -> f64) -> Result<f64>;
}

/// Emission model of a colored emitter with finite heat capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    pub cross_section: AbsorptionCrossSection,
    /// eV/K
    pub heat_capacity: f64,
    /// rad/s
    pub omega_min: f64,
    /// rad/s
    pub omega_max: f64,
}

impl EmitterModel {
    /// Window [gap, 6 eV]/ħ.
    pub fn new(cross_section: AbsorptionCrossSection, heat_capacity: f64) -> Result<Self> {
        if !(heat_capacity > 0.0) || !heat_capacity.is_finite() {
            return Err(Error::InvalidInput(format!("heat capacity must be positive, got {heat_capacity}")));
        }
        let omega_min = cross_section.gap_energy / HBAR_EV_S;
        let omega_max = DEFAULT_MAX_PHOTON_ENERGY_EV.max(cross_section.gap_energy) / HBAR_EV_S;
        Ok(EmitterModel { cross_section, heat_capacity, omega_min, omega_max })
    }

    pub fn with_window(mut self, omega_min: f64, omega_max: f64) -> Result<Self> {
        if !(omega_max >= omega_min) || omega_min < 0.0 {
            return Err(Error::InvalidInput("omega window must satisfy 0 ≤ min ≤ max".into()));
        }
        self.omega_min = omega_min;
        self.omega_max = omega_max;
        Ok(self)
    }

    /// Default template calibrated to the published flux law over 2000–3000 K.
    pub fn calibrated_default() -> Result<(Self, Calibration)> {
        let target = FluxPowerLaw::published();
        let cal = calibrate_cross_section(
            &AbsorptionCrossSection::default_template(),
            c70_heat_capacity(),
            &target,
            2000.0,
            3000.0,
        )?;
        let model = EmitterModel::new(cal.cross_section.clone(), c70_heat_capacity())?;
        Ok((model, cal))
    }

    fn statistical_coefficient(&self) -> f64 {
        KB_EV_K / (2.0 * self.heat_capacity)
    }

    /// R_ω per unit photon energy (s⁻¹ eV⁻¹), i.e. R_ω / ħ.
    #[inline]
    fn rate_per_ev(&self, energy_ev: f64, temperature: f64) -> f64 {
        let sigma = self.cross_section.sigma_cm2(energy_ev);
        if sigma == 0.0 {
            return 0.0;
        }
        let omega = energy_ev / HBAR_EV_S;
        let x = energy_ev / (KB_EV_K * temperature);
        let stat = (-x - self.statistical_coefficient() * x * x).exp();
        omega * omega / (std::f64::consts::PI.powi(2) * C_M_S * C_M_S) * sigma * CM2_TO_M2 * stat / HBAR_EV_S
    }

    fn breaks(&self) -> Vec<f64> {
        let lo = (self.omega_min * HBAR_EV_S).max(self.cross_section.gap_energy);
        let hi = self.omega_max * HBAR_EV_S;
        let mut b = vec![lo];
        b.extend(self.cross_section.points.iter().map(|p| p.0).filter(|&e| e > lo && e < hi));
        b.push(hi.max(lo));
        b
    }

    fn energy_integral(&self, temperature: f64, tol: Tolerance, weight: impl Fn(f64) -> f64) -> Result<f64> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
        }
        if self.cross_section.is_zero() {
            return Ok(0.0);
        }
        let r = integrate_with_breaks(|e| self.rate_per_ev(e, temperature) * weight(e), &self.breaks(), tol)?;
        Ok(r.value)
    }

    /// R_ω(ω, T) in s⁻¹ per rad/s.
    pub fn spectral_emission_rate(&self, omega: f64, temperature: f64) -> Result<f64> {
        ensure_finite("omega", omega)?;
        ensure_finite("temperature", temperature)?;
        if omega < 0.0 || !(temperature > 0.0) {
            return Err(Error::InvalidInput("requires omega ≥ 0 and temperature > 0".into()));
        }
        Ok(self.rate_per_ev(omega * HBAR_EV_S, temperature) * HBAR_EV_S)
    }

    /// Photons per second integrated over the model window.
    pub fn total_photon_rate(&self, temperature: f64) -> Result<f64> {
        self.energy_integral(temperature, Tolerance::default(), |_| 1.0)
    }

    /// Photons per second with energy in `[e_lo, e_hi]` eV.
    pub fn photon_rate_in_band(&self, temperature: f64, e_lo: f64, e_hi: f64) -> Result<f64> {
        self.energy_integral(temperature, Tolerance::default(), |e| if e >= e_lo && e <= e_hi { 1.0 } else { 0.0 })
    }

    /// Φ(T) in eV/s.
    pub fn radiant_flux(&self, temperature: f64) -> Result<f64> {
        self.energy_integral(temperature, Tolerance::default(), |e| e)
    }

    fn flux_and_log_slope(&self, temperature: f64, tol: Tolerance) -> Result<(f64, f64)> {
        let flux = self.energy_integral(temperature, tol, |e| e)?;
        if flux <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let beta = self.statistical_coefficient();
        let kt = KB_EV_K * temperature;
        let d = self.energy_integral(temperature, tol, |e| {
            let x = e / kt;
            e * (x + 2.0 * beta * x * x)
        })?;
        Ok((flux, d / flux))
    }
}

impl Radiator for EmitterModel {
    fn radiant_flux(&self, temperature: f64) -> f64 {
        match EmitterModel::radiant_flux(self, temperature) {
            Ok(v) => v,
            Err(Error::QuadratureNonConvergence { estimate, .. }) => estimate,
            Err(_) => 0.0,
        }
    }
    fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }
}

impl SpectralEmitter for EmitterModel {
    fn weighted_emission(&self, temperature: f64, weight: &dyn Fn(f64) -> f64) -> Result<f64> {
        self.energy_integral(temperature, Tolerance::default(), |e| weight(e / HBAR_EV_S))
    }
}

/// Emitter radiating at a single frequency with a fixed rate, independent of temperature.
#[derive(Debug, Clone, Copy)]
pub struct LineEmitter {
    /// rad/s
    pub omega: f64,
    /// photons per second
    pub rate: f64,
}

impl SpectralEmitter for LineEmitter {
    fn weighted_emission(&self, _temperature: f64, weight: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(self.rate * weight(self.omega))
    }
}

/// Φ(T) = prefactor · (T/K)^exponent eV/s, with the window it was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPowerLaw {
    pub prefactor: f64,
    pub exponent: f64,
    pub t_low: f64,
    pub t_high: f64,
}

impl FluxPowerLaw {
    pub fn published() -> Self {
        FluxPowerLaw {
            prefactor: PUBLISHED_FLUX_PREFACTOR,
            exponent: PUBLISHED_FLUX_EXPONENT,
            t_low: 2000.0,
            t_high: 3000.0,
        }
    }

    pub fn flux(&self, temperature: f64) -> f64 {
        self.prefactor * temperature.powf(self.exponent)
    }
}

/// Radiator obeying an exact power-law flux.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawEmitter {
    pub law: FluxPowerLaw,
    pub heat_capacity: f64,
}

impl Radiator for PowerLawEmitter {
    fn radiant_flux(&self, temperature: f64) -> f64 {
        self.law.flux(temperature.max(0.0))
    }
    fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }
}

/// A body that does not radiate.
#[derive(Debug, Clone, Copy)]
pub struct NonRadiating {
    pub heat_capacity: f64,
}

impl Radiator for NonRadiating {
    fn radiant_flux(&self, _temperature: f64) -> f64 {
        0.0
    }
    fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }
}

/// Least-squares line through log Φ vs log T on 21 log-spaced samples.
pub fn fit_flux_power_law<R: Radiator + ?Sized>(radiator: &R, t_low: f64, t_high: f64) -> Result<FluxPowerLaw> {
    if !(t_low > 0.0 && t_high > t_low) {
        return Err(Error::InvalidInput(format!("need 0 < t_low < t_high, got {t_low}, {t_high}")));
    }
    const SAMPLES: usize = 21;
    let mut xs = Vec::with_capacity(SAMPLES);
    let mut ys = Vec::with_capacity(SAMPLES);
    for i in 0..SAMPLES {
        let ln_t = t_low.ln() + (t_high / t_low).ln() * i as f64 / (SAMPLES - 1) as f64;
        let t = ln_t.exp();
        let flux = radiator.radiant_flux(t);
        if !(flux > 0.0) {
            return Err(Error::NonPositiveFlux { temperature: t, flux });
        }
        xs.push(ln_t);
        ys.push(flux.ln());
    }
    let (intercept, slope) = fit_line(&xs, &ys);
    Ok(FluxPowerLaw { prefactor: intercept.exp(), exponent: slope, t_low, t_high })
}

/// Outcome of scaling a template cross section onto a target flux law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cross_section: AbsorptionCrossSection,
    pub scale: f64,
    /// Power law fitted to the calibrated model.
    pub fitted: FluxPowerLaw,
}

/// Scales `template` by one global factor so that its fitted flux law meets
/// `target` at the logarithmic centre of `[t_low, t_high]`.
///
/// When the fitted exponent equals the target's this is the same as matching
/// prefactors; otherwise it matches the flux level where the fit is anchored.
pub fn calibrate_cross_section(
    template: &AbsorptionCrossSection,
    heat_capacity: f64,
    target: &FluxPowerLaw,
    t_low: f64,
    t_high: f64,
) -> Result<Calibration> {
    let model = EmitterModel::new(template.clone(), heat_capacity)?;
    let fitted = fit_flux_power_law(&model, t_low, t_high).map_err(|e| match e {
        Error::NonPositiveFlux { .. } => Error::InvalidInput("template cross section yields zero flux".into()),
        other => other,
    })?;
    let centre = (t_low * t_high).sqrt();
    let scale = target.flux(centre) / fitted.flux(centre);
    let cross_section = template.scaled(scale);
    let fitted = FluxPowerLaw { prefactor: fitted.prefactor * scale, ..fitted };
    Ok(Calibration { cross_section, scale, fitted })
}

/// log-log cubic Hermite table of Φ(T) with exact slopes, for fast ODE right-hand sides.
#[derive(Debug, Clone)]
pub struct FluxTable {
    ln_t_min: f64,
    step: f64,
    ln_flux: Vec<f64>,
    log_slope: Vec<f64>,
    heat_capacity: f64,
    zero: bool,
}

impl FluxTable {
    pub const T_MIN: f64 = 150.0;
    pub const T_MAX: f64 = 20_000.0;
    const NODES: usize = 1600;

    pub fn new(model: &EmitterModel) -> Result<Self> {
        let ln_t_min = Self::T_MIN.ln();
        let step = (Self::T_MAX.ln() - ln_t_min) / (Self::NODES - 1) as f64;
        let tol = Tolerance { relative: 1e-11, absolute: 0.0, max_intervals: 4000 };
        let mut ln_flux = Vec::with_capacity(Self::NODES);
        let mut log_slope = Vec::with_capacity(Self::NODES);
        let zero = model.cross_section.is_zero();
        for i in 0..Self::NODES {
            let t = (ln_t_min + step * i as f64).exp();
            if zero {
                ln_flux.push(f64::NEG_INFINITY);
                log_slope.push(0.0);
                continue;
            }
            let (flux, slope) = model.flux_and_log_slope(t, tol)?;
            ln_flux.push(if flux > 0.0 { flux.ln() } else { -745.0 });
            log_slope.push(slope);
        }
        Ok(FluxTable { ln_t_min, step, ln_flux, log_slope, heat_capacity: model.heat_capacity, zero })
    }

    fn ln_flux_at(&self, ln_t: f64) -> f64 {
        let u = (ln_t - self.ln_t_min) / self.step;
        let last = self.ln_flux.len() - 1;
        if u <= 0.0 {
            return self.ln_flux[0] + self.log_slope[0] * (ln_t - self.ln_t_min);
        }
        if u >= last as f64 {
            return self.ln_flux[last] + self.log_slope[last] * (ln_t - self.ln_t_min - self.step * last as f64);
        }
        let i = u.floor() as usize;
        let s = u - i as f64;
        let (f0, f1) = (self.ln_flux[i], self.ln_flux[i + 1]);
        let (d0, d1) = (self.log_slope[i] * self.step, self.log_slope[i + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1
    }
}

impl Radiator for FluxTable {
    fn radiant_flux(&self, temperature: f64) -> f64 {
        if self.zero || !(temperature > 0.0) {
            return 0.0;
        }
        self.ln_flux_at(temperature.ln()).exp()
    }
    fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::integrate;

    fn default_model() -> EmitterModel {
        EmitterModel::calibrated_default().unwrap().0
    }

    #[test]
    fn zero_below_gap() {
        let m = default_model();
        for e in [0.1, 1.0, 1.59] {
            assert_eq!(m.spectral_emission_rate(e / HBAR_EV_S, 2500.0).unwrap(), 0.0);
        }
        assert!(m.spectral_emission_rate(2.5 / HBAR_EV_S, 2500.0).unwrap() > 0.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = default_model();
        assert!(m.spectral_emission_rate(f64::NAN, 2000.0).is_err());
        assert!(m.spectral_emission_rate(1e15, f64::INFINITY).is_err());
        assert!(m.spectral_emission_rate(1e15, 0.0).is_err());
    }

    #[test]
    fn constant_cross_section_large_heat_capacity_closed_form() {
        let sigma0 = 2e-17;
        let cs = AbsorptionCrossSection::new(vec![(1.6, sigma0)], 1.6).unwrap();
        let m = EmitterModel::new(cs, 1e12).unwrap();
        let omega = 3.0 / HBAR_EV_S;
        let t = 2400.0;
        let closed = omega * omega * sigma0 * 1e-4 / (std::f64::consts::PI.powi(2) * C_M_S * C_M_S)
            * (-(HBAR_EV_S * omega) / (KB_EV_K * t)).exp();
        let got = m.spectral_emission_rate(omega, t).unwrap();
        assert!(((got - closed) / closed).abs() < 1e-9, "{got} vs {closed}");
    }

    #[test]
    fn statistical_factor_is_always_applied() {
        let cs = AbsorptionCrossSection::new(vec![(1.6, 1e-17)], 1.6).unwrap();
        let finite = EmitterModel::new(cs.clone(), c70_heat_capacity()).unwrap();
        let infinite = EmitterModel::new(cs, 1e12).unwrap();
        let omega = 2.5 / HBAR_EV_S;
        let x: f64 = 2.5 / (KB_EV_K * 2000.0);
        let ratio = finite.spectral_emission_rate(omega, 2000.0).unwrap()
            / infinite.spectral_emission_rate(omega, 2000.0).unwrap();
        assert!((ratio - (-x * x / (2.0 * 202.0)).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_cross_section_gives_zero_rates() {
        let m = EmitterModel::new(AbsorptionCrossSection::zero(), c70_heat_capacity()).unwrap();
        assert_eq!(m.total_photon_rate(3000.0).unwrap(), 0.0);
        assert_eq!(EmitterModel::radiant_flux(&m, 3000.0).unwrap(), 0.0);
    }

    #[test]
    fn narrow_triangle_line() {
        // triangle of half-width w around E0: ∫σ dE = σ_peak w
        let (e0, w, peak) = (2.5, 1e-4, 1e-16);
        let cs = AbsorptionCrossSection::new(vec![(1.6, 0.0), (e0 - w, 0.0), (e0, peak), (e0 + w, 0.0)], 1.6).unwrap();
        let m = EmitterModel::new(cs, 1e12).unwrap();
        let t = 2500.0;
        let omega = e0 / HBAR_EV_S;
        let analytic = omega * omega / (std::f64::consts::PI.powi(2) * C_M_S * C_M_S)
            * (-e0 / (KB_EV_K * t)).exp()
            * peak
            * 1e-4
            * w
            / HBAR_EV_S;
        let got = m.total_photon_rate(t).unwrap();
        assert!(((got - analytic) / analytic).abs() < 1e-4, "{got} vs {analytic}");
    }

    #[test]
    fn flux_exceeds_gap_energy_times_photon_rate() {
        let m = default_model();
        for t in [1500.0, 2500.0, 3500.0] {
            let phi = EmitterModel::radiant_flux(&m, t).unwrap();
            let rate = m.total_photon_rate(t).unwrap();
            assert!(phi >= m.omega_min * HBAR_EV_S * rate);
        }
    }

    #[test]
    fn adaptive_quadrature_matches_trapezoid_brute_force() {
        let m = default_model();
        let t = 2500.0;
        let (lo, hi) = (m.omega_min, m.omega_max);
        let n = 100_000;
        let h = (hi - lo) / n as f64;
        let mut trap = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            trap += w * m.spectral_emission_rate(lo + h * i as f64, t).unwrap();
        }
        trap *= h;
        let adaptive = m.total_photon_rate(t).unwrap();
        assert!(((adaptive - trap) / trap).abs() < 1e-4);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let e = PowerLawEmitter { law: FluxPowerLaw::published(), heat_capacity: c70_heat_capacity() };
        let fit = fit_flux_power_law(&e, 2000.0, 3000.0).unwrap();
        assert!((fit.exponent - 11.0).abs() < 1e-6);
        assert!((fit.prefactor / 6.3e-35 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn calibrated_default_reproduces_published_law() {
        let (m, cal) = EmitterModel::calibrated_default().unwrap();
        let fit = fit_flux_power_law(&m, 2000.0, 3000.0).unwrap();
        assert!((fit.exponent - 11.0).abs() < 1.0, "exponent {}", fit.exponent);
        let ratio = fit.prefactor / 6.3e-35;
        assert!(ratio > 0.5 && ratio < 2.0, "prefactor ratio {ratio}");
        assert!((cal.scale - 1.0).abs() < 0.1, "template should be close to calibrated, scale {}", cal.scale);
        let phi2000 = EmitterModel::radiant_flux(&m, 2000.0).unwrap();
        let phi3000 = EmitterModel::radiant_flux(&m, 3000.0).unwrap();
        assert!(phi2000 / 1.3e2 > 0.5 && phi2000 / 1.3e2 < 2.0, "{phi2000}");
        assert!(phi3000 / 1.1e4 > 0.5 && phi3000 / 1.1e4 < 2.0, "{phi3000}");
    }

    #[test]
    fn calibration_fixed_point_and_linearity() {
        let (m, _) = EmitterModel::calibrated_default().unwrap();
        let target = FluxPowerLaw::published();
        let again = calibrate_cross_section(&m.cross_section, m.heat_capacity, &target, 2000.0, 3000.0).unwrap();
        assert!((again.scale - 1.0).abs() < 1e-3);
        let tenfold = m.cross_section.scaled(10.0);
        let cal = calibrate_cross_section(&tenfold, m.heat_capacity, &target, 2000.0, 3000.0).unwrap();
        assert!((cal.scale - 0.1).abs() < 1e-3 * 0.1);
    }

    #[test]
    fn calibration_rejects_zero_template() {
        let err = calibrate_cross_section(
            &AbsorptionCrossSection::zero(),
            c70_heat_capacity(),
            &FluxPowerLaw::published(),
            2000.0,
            3000.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn colored_emitter_exponent_depends_on_window() {
        let m = default_model();
        let hot = fit_flux_power_law(&m, 2000.0, 3000.0).unwrap();
        let cold = fit_flux_power_law(&m, 1000.0, 1500.0).unwrap();
        assert_eq!((cold.t_low, cold.t_high), (1000.0, 1500.0));
        assert!((cold.exponent - hot.exponent).abs() > 1.0, "{} vs {}", cold.exponent, hot.exponent);
    }

    #[test]
    fn visible_photon_rate_order_of_magnitude() {
        let m = default_model();
        let rate = m.photon_rate_in_band(2500.0, 1.6, 3.2).unwrap();
        assert!(rate > 1e2 && rate < 1e4, "{rate}");
    }

    #[test]
    fn flux_table_matches_direct_quadrature() {
        let m = default_model();
        let table = FluxTable::new(&m).unwrap();
        for t in [600.0, 1000.0, 1777.0, 2500.0, 3333.3, 5000.0, 7000.0] {
            let direct = EmitterModel::radiant_flux(&m, t).unwrap();
            let tab = Radiator::radiant_flux(&table, t);
            assert!(((tab - direct) / direct).abs() < 1e-6, "T={t}: {tab} vs {direct}");
        }
    }

    #[test]
    fn log_slope_matches_finite_difference() {
        let m = default_model();
        let tol = Tolerance { relative: 1e-12, absolute: 0.0, max_intervals: 4000 };
        let t = 2500.0;
        let (_, slope) = m.flux_and_log_slope(t, tol).unwrap();
        let h = 1e-4;
        let f = |t: f64| m.flux_and_log_slope(t, tol).unwrap().0.ln();
        let fd = (f(t * (1.0 + h)) - f(t * (1.0 - h))) / ((1.0 + h).ln() - (1.0 - h).ln());
        assert!((slope - fd).abs() < 1e-6, "{slope} vs {fd}");
    }

    #[test]
    fn weighted_emission_equals_total_for_unit_weight() {
        let m = default_model();
        let a = m.weighted_emission(2200.0, &|_| 1.0).unwrap();
        let b = m.total_photon_rate(2200.0).unwrap();
        assert!((a - b).abs() <= 1e-12 * b);
        let half = integrate(|e| m.rate_per_ev(e, 2200.0), 1.6, 6.0, Tolerance::default()).unwrap().value;
        assert!(((half - b) / b).abs() < 1e-5);
    }

    #[test]
    fn csv_parsing_reports_line_and_field() {
        let text = "# comment\nphoton_energy_eV,sigma_cm2\n1.6,0\n2.0,abc\n";
        let err = AbsorptionCrossSection::from_csv_reader(text.as_bytes(), "cs.csv").unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 4);
                assert_eq!(field, "sigma_cm2");
            }
            other => panic!("unexpected {other}"),
        }
        let text = "photon_energy_eV,sigma_cm2\n2.0,1e-17\n1.8,1e-17\n";
        assert!(AbsorptionCrossSection::from_csv_reader(text.as_bytes(), "cs.csv").is_err());
        let ok = AbsorptionCrossSection::default_template();
        let back = AbsorptionCrossSection::from_csv_reader(ok.to_csv().as_bytes(), "x").unwrap();
        assert_eq!(back, ok);
    }
}
