//! Radiative cooling: the ODE dT/dt = −Φ(T)/C_V, the two-parameter decay law
//! `T(τ; T₀) = T₀ (1 + (T₀/T∞)ⁿ)^(−1/n)` fitted per flight segment, and the
//! pushforward of binned temperature distributions through that law.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::lm::{minimize, LmOptions};
use crate::numerics::ode::{DormandPrince, OdeOptions};
use crate::spectra::{fit_flux_power_law, Radiator};

/// Uniform temperature grid `[t_min, t_min + bins·width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub t_min: f64,
    pub width: f64,
    pub bins: usize,
}

impl Default for TemperatureGrid {
    fn default() -> Self {
        TemperatureGrid { t_min: 0.0, width: 5.0, bins: 1200 }
    }
}

impl TemperatureGrid {
    pub fn new(t_min: f64, t_max: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(t_max > t_min) || t_min < 0.0 {
            return Err(Error::InvalidInput(format!(
                "temperature grid needs 0 ≤ t_min < t_max and width > 0 (got {t_min}, {t_max}, {width})"
            )));
        }
        let bins = ((t_max - t_min) / width).round() as usize;
        Ok(TemperatureGrid { t_min, width, bins: bins.max(1) })
    }

    pub fn t_max(&self) -> f64 {
        self.edge(self.bins)
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.t_min + self.width * i as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.t_min + self.width * (i as f64 + 0.5)
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.edge(i)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }

    /// Same range with bins of half the width.
    pub fn refined(&self) -> Self {
        TemperatureGrid { t_min: self.t_min, width: self.width / 2.0, bins: self.bins * 2 }
    }

    /// Splits unit mass at temperature `t` between the two nearest bin centres
    /// so that the mean is exactly `t`. Returns `(lower bin, upper fraction)`;
    /// outside the centre range all mass goes to the end bin.
    pub fn linear_split(&self, t: f64) -> (usize, f64) {
        let u = (t - self.t_min) / self.width - 0.5;
        if u <= 0.0 {
            return (0, 0.0);
        }
        let last = self.bins - 1;
        if u >= last as f64 {
            return (last, 0.0);
        }
        let i = u.floor() as usize;
        (i, u - i as f64)
    }
}

/// Probability mass per temperature bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureDistribution {
    pub grid: TemperatureGrid,
    pub masses: Vec<f64>,
}

impl TemperatureDistribution {
    pub fn zeros(grid: TemperatureGrid) -> Self {
        TemperatureDistribution { grid, masses: vec![0.0; grid.bins] }
    }

    /// Unit mass concentrated at `t` (split over the two bracketing bins).
    pub fn delta(grid: TemperatureGrid, t: f64) -> Self {
        let mut d = Self::zeros(grid);
        d.add_point_mass(t, 1.0);
        d
    }

    pub fn from_masses(grid: TemperatureGrid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.bins {
            return Err(Error::InvalidInput(format!("expected {} masses, got {}", grid.bins, masses.len())));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("masses must be finite and non-negative".into()));
        }
        Ok(TemperatureDistribution { grid, masses })
    }

    pub fn add_point_mass(&mut self, t: f64, mass: f64) {
        let (i, f) = self.grid.linear_split(t);
        self.masses[i] += mass * (1.0 - f);
        if f > 0.0 {
            self.masses[i + 1] += mass * f;
        }
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        self.grid.edges()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass-weighted mean of the bin centres; NaN for an empty distribution.
    pub fn mean(&self) -> f64 {
        let total = self.total_mass();
        self.masses.iter().enumerate().map(|(i, m)| m * self.grid.center(i)).sum::<f64>() / total
    }

    pub fn normalized(&self) -> Self {
        let total = self.total_mass();
        TemperatureDistribution { grid: self.grid, masses: self.masses.iter().map(|m| m / total).collect() }
    }
}

/// Closed-form decay law over a flight segment of length `duration`.
///
/// `t_infinity = ∞` is the identity law of a non-radiating segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingLaw {
    pub n: f64,
    pub t_infinity: f64,
    /// s
    pub duration: f64,
}

/// ln(1 + eˣ) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

impl CoolingLaw {
    pub fn new(n: f64, t_infinity: f64, duration: f64) -> Result<Self> {
        if !(n > 0.0) || !n.is_finite() || !(t_infinity > 0.0) || !(duration >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "cooling law needs n > 0, T∞ > 0, duration ≥ 0 (got {n}, {t_infinity}, {duration})"
            )));
        }
        Ok(CoolingLaw { n, t_infinity, duration })
    }

    pub fn identity(duration: f64) -> Self {
        CoolingLaw { n: 1.0, t_infinity: f64::INFINITY, duration }
    }

    pub fn is_identity(&self) -> bool {
        self.t_infinity.is_infinite() || self.duration == 0.0
    }

    /// Temperature after `fraction` of the segment, `T₀(1 + s(T₀/T∞)ⁿ)^(−1/n)`.
    ///
    /// This family is the exact solution of the ODE for a power-law flux and
    /// reproduces the fitted law at `fraction = 1`.
    pub fn temperature_at_fraction(&self, t0: f64, fraction: f64) -> f64 {
        if self.is_identity() || fraction <= 0.0 || t0 <= 0.0 {
            return t0;
        }
        let x = self.n * (t0 / self.t_infinity).ln() + fraction.ln();
        t0 * (-softplus(x) / self.n).exp()
    }

    /// Temperature at the end of the segment.
    pub fn temperature(&self, t0: f64) -> f64 {
        self.temperature_at_fraction(t0, 1.0)
    }

    /// Inverse map `T₀ = T(1 − (T/T∞)ⁿ)^(−1/n)`; `None` at or above T∞.
    pub fn initial_temperature(&self, t: f64) -> Option<f64> {
        if self.is_identity() {
            return Some(t);
        }
        if t >= self.t_infinity {
            return None;
        }
        let r = (self.n * (t / self.t_infinity).ln()).exp();
        Some(t * (-(-r).ln_1p() / self.n).exp())
    }

    /// dT₀/dT of the inverse map, `(1 − (T/T∞)ⁿ)^(−(n+1)/n)`.
    pub fn inverse_jacobian(&self, t: f64) -> Option<f64> {
        if self.is_identity() {
            return Some(1.0);
        }
        if t >= self.t_infinity {
            return None;
        }
        let r = (self.n * (t / self.t_infinity).ln()).exp();
        Some((-(self.n + 1.0) / self.n * (-r).ln_1p()).exp())
    }
}

/// Sampled cooling trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// (t in s, T in K), starting at (0, T₀).
    pub points: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn final_temperature(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.1)
    }
}

fn cooling_stepper<'a, R: Radiator + ?Sized>(
    radiator: &'a R,
    t0: f64,
) -> DormandPrince<1, impl FnMut(f64, &[f64; 1]) -> [f64; 1] + 'a> {
    let cv = radiator.heat_capacity();
    DormandPrince::new(
        move |_, y: &[f64; 1]| [-radiator.radiant_flux(y[0].max(0.0)) / cv],
        0.0,
        [t0],
        OdeOptions::default(),
    )
}

fn check_start(t0: f64, duration: f64) -> Result<()> {
    ensure_finite("initial temperature", t0)?;
    ensure_finite("duration", duration)?;
    if !(t0 > 0.0) || duration < 0.0 {
        return Err(Error::InvalidInput(format!("need T₀ > 0 and duration ≥ 0 (got {t0}, {duration})")));
    }
    Ok(())
}

/// Integrates dT/dt = −Φ(T)/C_V from `t0` over `duration`, recording every accepted step.
pub fn integrate_cooling<R: Radiator + ?Sized>(t0: f64, duration: f64, radiator: &R) -> Result<Trajectory> {
    check_start(t0, duration)?;
    let mut points = vec![(0.0, t0)];
    let mut dp = cooling_stepper(radiator, t0);
    dp.advance_to(duration, |t, y| {
        let prev = points.last().map_or(t0, |p| p.1);
        points.push((t, y[0].min(prev)));
    })?;
    Ok(Trajectory { points })
}

/// Endpoint temperature of [`integrate_cooling`].
pub fn cool(t0: f64, duration: f64, radiator: &(impl Radiator + ?Sized)) -> Result<f64> {
    check_start(t0, duration)?;
    let mut dp = cooling_stepper(radiator, t0);
    dp.advance_to(duration, |_, _| {})?;
    Ok(dp.y[0].min(t0))
}

/// Temperatures at the sorted, non-negative `times`.
pub fn temperatures_at(t0: f64, times: &[f64], radiator: &(impl Radiator + ?Sized)) -> Result<Vec<f64>> {
    check_start(t0, 0.0)?;
    let mut dp = cooling_stepper(radiator, t0);
    let mut out = Vec::with_capacity(times.len());
    let mut prev = t0;
    for &t in times {
        if t < dp.t {
            return Err(Error::InvalidInput("sample times must be sorted".into()));
        }
        dp.advance_to(t, |_, _| {})?;
        prev = dp.y[0].min(prev);
        out.push(prev);
    }
    Ok(out)
}

/// Fitted law plus the quality of the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingFit {
    pub law: CoolingLaw,
    /// Largest |law − ODE| endpoint residual over the samples, K.
    pub max_residual: f64,
    pub rms_residual: f64,
    pub t0_range: (f64, f64),
    pub samples: usize,
}

/// Default initial-temperature window of segment fits.
pub const DEFAULT_FIT_RANGE: (f64, f64) = (1000.0, 3500.0);
const FIT_SAMPLES: usize = 26;

/// Least-squares (n, T∞) against ODE endpoints on 26 evenly spaced T₀ in `t0_range`.
pub fn fit_cooling_law<R: Radiator + ?Sized>(radiator: &R, duration: f64, t0_range: (f64, f64)) -> Result<CoolingFit> {
    fit_law(radiator, duration, t0_range, &[1.0])
}

/// Fits the in-segment family to ODE temperatures at the given fractions of
/// the flight, so that the law also follows the path and not only the endpoint.
pub fn fit_cooling_law_along_path<R: Radiator + ?Sized>(
    radiator: &R,
    duration: f64,
    t0_range: (f64, f64),
) -> Result<CoolingFit> {
    fit_law(radiator, duration, t0_range, &PATH_FRACTIONS)
}

const ENDPOINT_WEIGHT: f64 = 10.0;
const PATH_FRACTIONS: [f64; 8] =
    [1.0 / 16384.0, 1.0 / 4096.0, 1.0 / 1024.0, 1.0 / 256.0, 1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0];

fn fit_law<R: Radiator + ?Sized>(
    radiator: &R,
    duration: f64,
    t0_range: (f64, f64),
    fractions: &[f64],
) -> Result<CoolingFit> {
    let (lo, hi) = t0_range;
    if !(duration > 0.0) || !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!(
            "fit needs duration > 0 and 0 < T₀ range (got {duration}, {lo}–{hi})"
        )));
    }
    let t0s: Vec<f64> = (0..FIT_SAMPLES).map(|i| lo + (hi - lo) * i as f64 / (FIT_SAMPLES - 1) as f64).collect();
    let times: Vec<f64> = fractions.iter().map(|f| f * duration).collect();
    let paths = t0s.iter().map(|&t0| temperatures_at(t0, &times, radiator)).collect::<Result<Vec<_>>>()?;

    let drop_scale = t0s.iter().zip(&paths).map(|(a, p)| a - p[p.len() - 1]).fold(0.0, f64::max);
    if drop_scale <= 1e-9 * hi {
        let law = CoolingLaw::identity(duration);
        return Ok(CoolingFit {
            law,
            max_residual: drop_scale,
            rms_residual: drop_scale,
            t0_range,
            samples: FIT_SAMPLES,
        });
    }

    // start from the local power law: Φ ∝ T^k gives n = k − 1 and T∞ⁿ = C_V/(n a' τ)
    let start = match fit_flux_power_law(radiator, lo, hi) {
        Ok(pl) if pl.exponent > 1.5 => {
            let n = pl.exponent - 1.0;
            let ln_tinf = ((radiator.heat_capacity() / (n * pl.prefactor * duration)).ln()) / n;
            vec![n, ln_tinf]
        }
        _ => vec![10.0, (2.0 * hi).ln()],
    };
    let forward = |p: &[f64]| -> Result<Vec<f64>> {
        let law = CoolingLaw { n: p[0], t_infinity: p[1].exp(), duration };
        Ok(t0s
            .iter()
            .zip(&paths)
            .flat_map(|(&t0, path)| {
                fractions.iter().zip(path).map(move |(&f, &t)| {
                    let w = if f == 1.0 { ENDPOINT_WEIGHT } else { 1.0 };
                    w * (law.temperature_at_fraction(t0, f) - t)
                })
            })
            .collect())
    };
    let opts = LmOptions { rel_improvement: 1e-12, max_iterations: 500, ..LmOptions::default() };
    let lower = [0.05, (0.1 * lo).ln()];
    let upper = [60.0, (1e4 * hi).ln()];
    let start = vec![start[0].clamp(lower[0], upper[0]), start[1].clamp(lower[1], upper[1])];
    let rep = minimize(forward, &start, &lower, &upper, &opts)?;
    if !rep.converged {
        return Err(Error::NonConvergence { objective: rep.objective, iterations: rep.iterations });
    }
    let law = CoolingLaw::new(rep.params[0], rep.params[1].exp(), duration)?;
    let end_residuals: Vec<f64> = t0s.iter().zip(&paths).map(|(&t0, p)| law.temperature(t0) - p[p.len() - 1]).collect();
    let max_residual = end_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let rms_residual = (end_residuals.iter().map(|r| r * r).sum::<f64>() / FIT_SAMPLES as f64).sqrt();
    Ok(CoolingFit { law, max_residual, rms_residual, t0_range, samples: FIT_SAMPLES })
}

/// Cooling laws of one flight fitted on adjacent initial-temperature windows.
///
/// A single law over a wide window misplaces hot molecules by tens of kelvin,
/// which the Arrhenius rate amplifies; narrow windows keep each law close to
/// the ODE where it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingLawBank {
    /// Ascending window boundaries; window i spans `bounds[i]..bounds[i + 1]`.
    pub bounds: Vec<f64>,
    pub fits: Vec<CoolingFit>,
}

impl CoolingLawBank {
    pub fn single(fit: CoolingFit) -> Self {
        CoolingLawBank { bounds: vec![fit.t0_range.0, fit.t0_range.1], fits: vec![fit] }
    }

    /// Fits geometric windows of width ratio at most `ratio` covering `t0_range`.
    pub fn fit<R: Radiator + ?Sized>(radiator: &R, duration: f64, t0_range: (f64, f64), ratio: f64) -> Result<Self> {
        let (lo, hi) = t0_range;
        if !(ratio > 1.0) || !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidInput(format!(
                "law bank needs ratio > 1 and 0 < lo < hi (got {ratio}, {lo}–{hi})"
            )));
        }
        let count = ((hi / lo).ln() / ratio.ln()).ceil().max(1.0) as usize;
        let step = (hi / lo).powf(1.0 / count as f64);
        let bounds: Vec<f64> = (0..=count).map(|i| if i == count { hi } else { lo * step.powi(i as i32) }).collect();
        let fits = bounds
            .windows(2)
            .map(|w| fit_cooling_law_along_path(radiator, duration, (w[0], w[1])))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoolingLawBank { bounds, fits })
    }

    /// Law of the window containing `t0`; the end windows extend outward.
    pub fn law_for(&self, t0: f64) -> &CoolingLaw {
        let inner = &self.bounds[1..self.bounds.len() - 1];
        &self.fits[inner.partition_point(|b| *b <= t0)].law
    }

    pub fn duration(&self) -> f64 {
        self.fits[0].law.duration
    }

    pub fn max_residual(&self) -> f64 {
        self.fits.iter().fold(0.0, |m, f| m.max(f.max_residual))
    }
}

/// Sparse linear map between two binnings: source bin `i` sends `weights[k]`
/// of its mass to `targets[k]` for `k` in `offsets[i]..offsets[i+1]`.
#[derive(Debug, Clone)]
pub struct RebinMap {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
    pub weights: Vec<f64>,
}

impl RebinMap {
    /// Pushes each bin of `grid` through the law, spreading its mass uniformly
    /// over the image interval and splitting it across destination bins by overlap.
    pub fn from_law(grid: &TemperatureGrid, law: &CoolingLaw) -> Self {
        let images: Vec<f64> = (0..=grid.bins).map(|i| law.temperature(grid.edge(i))).collect();
        Self::from_images(grid, (0..grid.bins).map(|i| (images[i], images[i + 1])))
    }

    /// As [`RebinMap::from_law`], with each bin pushed through the bank law of its centre.
    pub fn from_bank(grid: &TemperatureGrid, bank: &CoolingLawBank) -> Self {
        Self::from_images(
            grid,
            (0..grid.bins).map(|i| {
                let law = bank.law_for(grid.center(i));
                (law.temperature(grid.edge(i)), law.temperature(grid.edge(i + 1)))
            }),
        )
    }

    fn from_images(grid: &TemperatureGrid, images: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut offsets = Vec::with_capacity(grid.bins + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (a, b) in images {
            let span = b - a;
            let first = (((a - grid.t_min) / grid.width).floor().max(0.0) as usize).min(grid.bins - 1);
            if !(span > 0.0) {
                targets.push(first);
                weights.push(1.0);
            } else {
                let mut j = first;
                let mut assigned = 0.0;
                loop {
                    let lo = grid.edge(j).max(a);
                    let hi = if j + 1 == grid.bins { b } else { grid.edge(j + 1).min(b) };
                    if hi > lo {
                        let w = (hi - lo) / span;
                        targets.push(j);
                        weights.push(w);
                        assigned += w;
                    }
                    if j + 1 == grid.bins || grid.edge(j + 1) >= b {
                        break;
                    }
                    j += 1;
                }
                // rounding drift goes to the last target so each row sums to one
                let last = weights.len() - 1;
                weights[last] += 1.0 - assigned;
            }
            offsets.push(targets.len());
        }
        RebinMap { offsets, targets, weights }
    }

    pub fn apply(&self, input: &[f64], output: &mut [f64]) {
        output.iter_mut().for_each(|o| *o = 0.0);
        for (i, &m) in input.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for k in self.offsets[i]..self.offsets[i + 1] {
                output[self.targets[k]] += m * self.weights[k];
            }
        }
    }
}

/// Transforms a temperature distribution through the segment law.
pub fn apply_cooling(dist: &TemperatureDistribution, law: &CoolingLaw) -> TemperatureDistribution {
    if law.is_identity() {
        return dist.clone();
    }
    let map = RebinMap::from_law(&dist.grid, law);
    let mut out = vec![0.0; dist.grid.bins];
    map.apply(&dist.masses, &mut out);
    TemperatureDistribution { grid: dist.grid, masses: out }
}
