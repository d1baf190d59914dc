//! Inversion of ion-yield curves for the triplet cross section σ(T₁) and the
//! Arrhenius prefactor, and the temperature distribution at the first grating.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beamline::{Beamline, BeamlineConfig, ModelParams, Scenario};
use crate::cooling::TemperatureDistribution;
use crate::error::{Error, Result};
use crate::numerics::lm::{minimize, LmOptions};

/// One measured point of a normalized ion-yield curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scenario: Scenario,
    pub observed: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    /// cm²
    pub sigma_t1: (f64, f64),
    /// s⁻¹
    pub a_ion: (f64, f64),
}

impl Default for ParameterBounds {
    fn default() -> Self {
        ParameterBounds { sigma_t1: (1e-18, 1e-16), a_ion: (1e7, 1e13) }
    }
}

impl ParameterBounds {
    fn ln_lower(&self) -> [f64; 2] {
        [self.sigma_t1.0.ln(), self.a_ion.0.ln()]
    }

    fn ln_upper(&self) -> [f64; 2] {
        [self.sigma_t1.1.ln(), self.a_ion.1.ln()]
    }

    pub fn contains(&self, p: &ModelParams) -> bool {
        (self.sigma_t1.0..=self.sigma_t1.1).contains(&p.sigma_t1) && (self.a_ion.0..=self.a_ion.1).contains(&p.a_ion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub observations: Vec<Observation>,
    pub bounds: ParameterBounds,
}

impl FitProblem {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let p = FitProblem { observations, bounds: ParameterBounds::default() };
        p.validate()?;
        Ok(p)
    }

    /// Needs two scenarios spanning two powers and two velocities.
    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.sigma_t1.0 > 0.0 && b.sigma_t1.1 > b.sigma_t1.0 && b.a_ion.0 > 0.0 && b.a_ion.1 > b.a_ion.0) {
            return Err(Error::InvalidInput(format!("invalid parameter bounds {b:?}")));
        }
        for o in &self.observations {
            if !o.observed.is_finite() || o.observed < 0.0 || !(o.weight >= 0.0) || !o.weight.is_finite() {
                return Err(Error::InvalidInput(format!("invalid observation {o:?}")));
            }
        }
        let distinct = |f: &dyn Fn(&Observation) -> f64| {
            let mut v: Vec<f64> = self.observations.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        if self.observations.len() < 2 || distinct(&|o| o.scenario.power_scale) < 2 || distinct(&|o| o.scenario.v) < 2 {
            return Err(Error::InvalidInput(
                "fit is not identifiable: need ≥ 2 scenarios spanning ≥ 2 powers and ≥ 2 velocities".into(),
            ));
        }
        if self.observations.iter().all(|o| o.weight == 0.0) {
            return Err(Error::InvalidInput("all observation weights are zero".into()));
        }
        Ok(())
    }

    /// Reads `v_mps,power_W,n_beams,ion_yield_normalized[,weight]`; powers are
    /// converted to `power_scale` with the maximal laser power of `config`.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str, config: &BeamlineConfig) -> Result<Self> {
        let rows = crate::io::read_numeric_csv(
            reader,
            source,
            &["v_mps", "power_W", "n_beams", "ion_yield_normalized", "weight"],
            1,
        )?;
        let field_err = |line: u64, field: &str, message: String| Error::Parse {
            path: source.into(),
            line,
            field: field.into(),
            message,
        };
        let mut observations = Vec::with_capacity(rows.len());
        for r in &rows {
            let v = r.values[0];
            if !(v > 0.0) {
                return Err(field_err(r.line, "v_mps", format!("velocity must be positive, got {v}")));
            }
            let power = r.values[1];
            if power < 0.0 {
                return Err(field_err(r.line, "power_W", format!("power must be ≥ 0, got {power}")));
            }
            let nb = r.values[2];
            if nb.fract() != 0.0 || nb < 1.0 || nb > config.max_beams as f64 {
                return Err(field_err(
                    r.line,
                    "n_beams",
                    format!("expected an integer in 1..={}, got {nb}", config.max_beams),
                ));
            }
            let observed = r.values[3];
            if observed < 0.0 {
                return Err(field_err(r.line, "ion_yield_normalized", format!("yield must be ≥ 0, got {observed}")));
            }
            let weight = r.values.get(4).copied().unwrap_or(1.0);
            if weight < 0.0 {
                return Err(field_err(r.line, "weight", format!("weight must be ≥ 0, got {weight}")));
            }
            let scenario = Scenario { v, power_scale: power / config.max_power, n_beams: nb as usize };
            observations.push(Observation { scenario, observed, weight });
        }
        let p = FitProblem { observations, bounds: ParameterBounds::default() };
        p.validate().map_err(|e| field_err(0, "observations", e.to_string()))?;
        Ok(p)
    }

    pub fn from_csv_path(path: &Path, config: &BeamlineConfig) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            field: "file".into(),
            message: e.to_string(),
        })?;
        Self::from_csv_reader(file, &path.display().to_string(), config)
    }
}

/// Measured-curve CSV of `observations` (header included, no comments).
pub fn observations_to_csv(observations: &[Observation], config: &BeamlineConfig) -> String {
    let mut out = String::from("v_mps,power_W,n_beams,ion_yield_normalized,weight\n");
    for o in observations {
        out.push_str(&format!(
            "{},{},{},{:e},{}\n",
            o.scenario.v,
            o.scenario.power_scale * config.max_power,
            o.scenario.n_beams,
            o.observed,
            o.weight
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Fit a common normalization of the model curves (profiled out in closed form).
    pub free_scale: bool,
    /// Relative-residual denominator floor, as a fraction of the largest observation.
    pub weight_floor: f64,
    /// Grid starts, per parameter, over the log bounds (3 → 9 starts).
    pub grid_points: usize,
    /// Local searches are run from this many of the best-screened starts.
    pub refine_starts: usize,
    pub max_iterations: usize,
    pub rel_improvement: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            free_scale: false,
            weight_floor: 1e-3,
            grid_points: 3,
            refine_starts: 3,
            max_iterations: 100,
            rel_improvement: 1e-8,
        }
    }
}

/// Outcome of one local search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: ModelParams,
    pub start_objective: f64,
    pub refined: bool,
    pub params: ModelParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Newton curvature of the objective in log-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub ln_sigma_t1: f64,
    pub ln_a_ion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// cm²
    pub sigma_t1: f64,
    /// s⁻¹
    pub a_ion: f64,
    /// Common model normalization; 1 unless `free_scale`.
    pub scale: f64,
    /// √(weighted sum of squared relative residuals).
    pub residual_norm: f64,
    pub objective: f64,
    pub sensitivity: Sensitivity,
    /// Objective after each accepted step of the winning search.
    pub history: Vec<f64>,
    pub starts: Vec<StartReport>,
    pub forward_evaluations: usize,
}

impl FitResult {
    pub fn params(&self) -> ModelParams {
        ModelParams { sigma_t1: self.sigma_t1, a_ion: self.a_ion }
    }
}

/// Normalized ion yield of every scenario at `params`.
pub fn forward_curves(beamline: &Beamline, params: &ModelParams, scenarios: &[Scenario]) -> Result<Vec<f64>> {
    crate::numerics::par_map(scenarios, |s| beamline.ion_yield(s, params)).into_iter().collect()
}

struct Weighting {
    observed: Vec<f64>,
    /// √weight / denominator per observation.
    factors: Vec<f64>,
    free_scale: bool,
}

impl Weighting {
    fn new(problem: &FitProblem, options: &FitOptions) -> Self {
        let peak = problem.observations.iter().fold(0.0f64, |m, o| m.max(o.observed));
        let floor = (options.weight_floor * peak).max(f64::MIN_POSITIVE);
        Weighting {
            observed: problem.observations.iter().map(|o| o.observed).collect(),
            factors: problem.observations.iter().map(|o| o.weight.sqrt() / o.observed.max(floor)).collect(),
            free_scale: options.free_scale,
        }
    }

    fn scale_for(&self, model: &[f64]) -> f64 {
        if !self.free_scale {
            return 1.0;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((m, o), f) in model.iter().zip(&self.observed).zip(&self.factors) {
            num += f * f * m * o;
            den += f * f * m * m;
        }
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    }

    fn residuals(&self, model: &[f64]) -> (Vec<f64>, f64) {
        let scale = self.scale_for(model);
        let r = model.iter().zip(&self.observed).zip(&self.factors).map(|((m, o), f)| f * (scale * m - o)).collect();
        (r, scale)
    }
}

/// Weighted sum of squared relative residuals of `model` against the observations.
pub fn misfit(problem: &FitProblem, options: &FitOptions, model: &[f64]) -> Result<f64> {
    if model.len() != problem.observations.len() {
        return Err(Error::InvalidInput(format!(
            "{} model values for {} observations",
            model.len(),
            problem.observations.len()
        )));
    }
    Ok(sum_sq(&Weighting::new(problem, options).residuals(model).0))
}

struct Objective<'a> {
    beamline: &'a Beamline,
    scenarios: Vec<Scenario>,
    weighting: Weighting,
    evaluations: usize,
}

impl<'a> Objective<'a> {
    fn new(beamline: &'a Beamline, problem: &FitProblem, options: &FitOptions) -> Self {
        Objective {
            beamline,
            scenarios: problem.observations.iter().map(|o| o.scenario).collect(),
            weighting: Weighting::new(problem, options),
            evaluations: 0,
        }
    }

    fn residuals(&mut self, ln_params: &[f64]) -> Result<(Vec<f64>, f64)> {
        let params = ModelParams { sigma_t1: ln_params[0].exp(), a_ion: ln_params[1].exp() };
        let model = forward_curves(self.beamline, &params, &self.scenarios)?;
        self.evaluations += 1;
        Ok(self.weighting.residuals(&model))
    }
}

/// Weighted least squares over (ln σ, ln A) with a screened multistart from
/// the log-grid of starts.
pub fn fit_parameters(beamline: &Beamline, problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    if options.grid_points == 0 || options.refine_starts == 0 {
        return Err(Error::InvalidInput("need at least one start".into()));
    }
    let lower = problem.bounds.ln_lower();
    let upper = problem.bounds.ln_upper();
    let g = options.grid_points;
    let node = |i: usize, d: usize| lower[d] + (upper[d] - lower[d]) * (i as f64 + 0.5) / g as f64;
    let mut obj = Objective::new(beamline, problem, options);

    let mut screened = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            let x = [node(i, 0), node(j, 1)];
            let (r, _) = obj.residuals(&x)?;
            screened.push((x, sum_sq(&r)));
        }
    }
    let mut order: Vec<usize> = (0..screened.len()).collect();
    order.sort_by(|&a, &b| screened[a].1.total_cmp(&screened[b].1));

    let lm = LmOptions {
        max_iterations: options.max_iterations,
        rel_improvement: options.rel_improvement,
        ..LmOptions::default()
    };
    let mut starts: Vec<StartReport> = screened
        .iter()
        .map(|(x, s)| {
            let p = ModelParams { sigma_t1: x[0].exp(), a_ion: x[1].exp() };
            StartReport {
                start: p,
                start_objective: *s,
                refined: false,
                params: p,
                objective: *s,
                iterations: 0,
                converged: false,
            }
        })
        .collect();
    let mut best: Option<(usize, crate::numerics::lm::LmReport)> = None;
    let mut last_error = None;
    for &k in order.iter().take(options.refine_starts) {
        let x0 = screened[k].0;
        match minimize(|x| obj.residuals(x).map(|r| r.0), &x0, &lower, &upper, &lm) {
            Ok(rep) => {
                let s = &mut starts[k];
                s.refined = true;
                s.params = ModelParams { sigma_t1: rep.params[0].exp(), a_ion: rep.params[1].exp() };
                s.objective = rep.objective;
                s.iterations = rep.iterations;
                s.converged = rep.converged;
                if rep.converged && best.as_ref().is_none_or(|(_, b)| rep.objective < b.objective) {
                    best = Some((k, rep));
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    let Some((_, rep)) = best else {
        if let Some(e) = last_error {
            return Err(e);
        }
        let best_objective = starts.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
        let iterations = starts.iter().map(|s| s.iterations).sum();
        return Err(Error::NonConvergence { objective: best_objective, iterations });
    };
    let (_, scale) = obj.residuals(&rep.params)?;
    Ok(FitResult {
        sigma_t1: rep.params[0].exp(),
        a_ion: rep.params[1].exp(),
        scale,
        residual_norm: rep.objective.sqrt(),
        objective: rep.objective,
        sensitivity: Sensitivity { ln_sigma_t1: rep.curvature[0], ln_a_ion: rep.curvature[1] },
        history: rep.history,
        starts,
        forward_evaluations: obj.evaluations,
    })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// f_G1: the y-marginal at the first grating, renormalized, with the
/// non-ionized fraction kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G1Distribution {
    pub scenario: Scenario,
    pub distribution: TemperatureDistribution,
    pub surviving_fraction: f64,
    pub mean_temperature: f64,
}

pub fn temperature_distribution_at_g1(
    beamline: &Beamline,
    scenario: &Scenario,
    params: &ModelParams,
) -> Result<G1Distribution> {
    let (state, _) = beamline.heat_to_first_grating(scenario, params)?;
    let marginal = state.y_marginal();
    let surviving_fraction = marginal.total_mass();
    if !(surviving_fraction > 0.0) {
        return Err(Error::InvalidInput("no molecules survive to the first grating".into()));
    }
    let distribution = marginal.normalized();
    let mean_temperature = distribution.mean();
    Ok(G1Distribution { scenario: *scenario, distribution, surviving_fraction, mean_temperature })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(v: f64, power_scale: f64, n_beams: usize) -> Scenario {
        Scenario { v, power_scale, n_beams }
    }

    fn obs(v: f64, p: f64, n: usize, y: f64) -> Observation {
        Observation { scenario: scenario(v, p, n), observed: y, weight: 1.0 }
    }

    #[test]
    fn identifiability_is_checked() {
        assert!(FitProblem::new(vec![obs(100.0, 0.5, 10, 0.1)]).is_err());
        assert!(FitProblem::new(vec![obs(100.0, 0.5, 10, 0.1), obs(100.0, 0.8, 10, 0.2)]).is_err());
        assert!(FitProblem::new(vec![obs(100.0, 0.5, 10, 0.1), obs(190.0, 0.5, 10, 0.2)]).is_err());
        assert!(FitProblem::new(vec![obs(100.0, 0.5, 10, 0.1), obs(190.0, 0.8, 10, 0.2)]).is_ok());
    }

    #[test]
    fn csv_roundtrip_converts_power() {
        let cfg = BeamlineConfig::default();
        let o = vec![obs(100.0, 0.5, 10, 0.0123), Observation { weight: 2.0, ..obs(190.0, 1.0, 16, 0.2) }];
        let text = observations_to_csv(&o, &cfg);
        let p = FitProblem::from_csv_reader(text.as_bytes(), "m.csv", &cfg).unwrap();
        assert_eq!(p.observations.len(), 2);
        for (a, b) in p.observations.iter().zip(&o) {
            assert!((a.scenario.power_scale - b.scenario.power_scale).abs() < 1e-12);
            assert_eq!(a.scenario.n_beams, b.scenario.n_beams);
            assert_eq!(a.observed, b.observed);
            assert_eq!(a.weight, b.weight);
        }
        let no_weight = "v_mps,power_W,n_beams,ion_yield_normalized\n100,5.4,10,0.1\n190,10.8,16,0.2\n";
        let p = FitProblem::from_csv_reader(no_weight.as_bytes(), "m.csv", &cfg).unwrap();
        assert_eq!(p.observations[1].weight, 1.0);
        assert!((p.observations[0].scenario.power_scale - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_errors_name_line_and_field() {
        let cfg = BeamlineConfig::default();
        let bad = "v_mps,power_W,n_beams,ion_yield_normalized\n100,5.4,10,0.1\n190,10.8,2.5,0.2\n";
        let e = FitProblem::from_csv_reader(bad.as_bytes(), "m.csv", &cfg).unwrap_err().to_string();
        assert!(e.contains("m.csv: line 3") && e.contains("n_beams"), "{e}");
        let bad = "v_mps,power_W,n_beams,ion_yield_normalized\n100,x,10,0.1\n";
        let e = FitProblem::from_csv_reader(bad.as_bytes(), "m.csv", &cfg).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("power_W"), "{e}");
    }

    #[test]
    fn profiled_scale_is_least_squares() {
        let problem = FitProblem::new(vec![obs(100.0, 0.5, 10, 2.0), obs(190.0, 0.8, 10, 4.0)]).unwrap();
        let w = Weighting::new(&problem, &FitOptions { free_scale: true, ..FitOptions::default() });
        // model (1, 2) against data (2, 4): exact scale 2
        assert!((w.scale_for(&[1.0, 2.0]) - 2.0).abs() < 1e-12);
        assert_eq!(w.scale_for(&[0.0, 0.0]), 1.0);
        assert!(misfit(&problem, &FitOptions::default(), &[1.0]).is_err());
    }
}
