//! `hotmol`: command-line runner for the beamline, thermometry and decoherence models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hotmol::spectra::{AbsorptionCrossSection, EmitterModel};
use serde_json::json;

use commands::Context;
use config::RunConfig;
use output::OutputFile;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError { category, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            "usage" => 2,
            "config" => 3,
            "parse" => 4,
            "input" => 5,
            "numerics" => 6,
            _ => 7,
        }
    }
}

impl From<hotmol::Error> for CliError {
    fn from(e: hotmol::Error) -> Self {
        use hotmol::Error as E;
        let category = match &e {
            E::Parse { .. } => "parse",
            E::InvalidInput(_) => "input",
            E::Io(_) => "io",
            E::QuadratureNonConvergence { .. }
            | E::StepSizeUnderflow { .. }
            | E::IncompleteGamma { .. }
            | E::NonConvergence { .. }
            | E::NonPositiveFlux { .. } => "numerics",
        };
        CliError::new(category, e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hotmol",
    version,
    about = "Thermal emission, cooling, ionization and decoherence of laser-heated molecules"
)]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Absorption cross-section table `photon_energy_eV,sigma_cm2`, used as given.
    /// Defaults to the built-in calibrated template.
    #[arg(long, global = true, value_name = "PATH")]
    cross_section: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed of the Monte Carlo oracle.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Override a configuration value, e.g. `--set params.sigma_t1=3e-17`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral emission rate over photon energy and temperature.
    Spectrum,
    /// Cooling trajectories and the fitted law of every flight segment.
    Cool,
    /// Normalized ion yield over velocity, power and beam count.
    IonYield,
    /// Relative change of the detection rate versus heating power.
    Detector,
    /// Fit σ(T₁) and A_ion to a measured ion-yield table.
    Fit {
        /// Table `v_mps,power_W,n_beams,ion_yield_normalized[,weight]`.
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Temperature distribution at the first grating versus power.
    Tempdist,
    /// Visibility versus heating power for both velocity bands.
    Visibility,
    /// Monte Carlo cross-check of the grid transport.
    Oracle,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Cool => "cool",
            Command::IonYield => "ion-yield",
            Command::Detector => "detector",
            Command::Fit { .. } => "fit",
            Command::Tempdist => "tempdist",
            Command::Visibility => "visibility",
            Command::Oracle => "oracle",
        }
    }
}

fn load_model(cli: &Cli, config: &RunConfig) -> Result<(EmitterModel, String), CliError> {
    let cv = config.beamline.heat_capacity;
    match &cli.cross_section {
        Some(path) => {
            let cs = AbsorptionCrossSection::from_csv_path(path).map_err(|e| match e {
                hotmol::Error::Io(io) => CliError::new("io", format!("{}: {io}", path.display())),
                other => other.into(),
            })?;
            Ok((EmitterModel::new(cs, cv)?, path.display().to_string()))
        }
        None => {
            let (model, cal) = EmitterModel::calibrated_default()?;
            let source = format!("built-in template scaled by {} onto the reference flux law", cal.scale);
            Ok((EmitterModel { heat_capacity: cv, ..model }, source))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let (model, source) = load_model(&cli, &config)?;
    let name = cli.command.name();
    let config_json = serde_json::to_value(&config).map_err(|e| CliError::new("config", e.to_string()))?;
    let provenance = vec![
        format!("hotmol {} `{name}`, seed {}", env!("CARGO_PKG_VERSION"), cli.seed),
        format!("cross section: {source}; {}", commands::describe_model(&model)),
        format!("σ(T₁) = {:e} cm², A_ion = {:e} s⁻¹", config.params.sigma_t1, config.params.a_ion),
        format!("config: {config_json}"),
    ];
    let ctx = Context { config, model, seed: cli.seed, provenance };
    let mut files: Vec<OutputFile> = match &cli.command {
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::Cool => commands::cool(&ctx)?,
        Command::IonYield => commands::ion_yield(&ctx)?,
        Command::Detector => commands::detector(&ctx)?,
        Command::Fit { data } => commands::fit(&ctx, data)?,
        Command::Tempdist => commands::tempdist(&ctx)?,
        Command::Visibility => commands::visibility(&ctx)?,
        Command::Oracle => commands::oracle(&ctx)?,
    };
    let data = match &cli.command {
        Command::Fit { data } => Some(data.display().to_string()),
        _ => None,
    };
    let record = json!({
        "tool": "hotmol",
        "versions": { "hotmol-cli": env!("CARGO_PKG_VERSION"), "hotmol": hotmol::VERSION },
        "subcommand": name,
        "seed": cli.seed,
        "inputs": {
            "config": cli.config.as_ref().map(|p| p.display().to_string()),
            "cross_section": source,
            "data": data,
        },
        "overrides": cli.overrides,
        "resolved_config": config_json,
        "outputs": files.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
    });
    files.push(OutputFile {
        name: "run_record.json".into(),
        contents: serde_json::to_string_pretty(&record).expect("record serializes") + "\n",
    });
    output::write_all(&cli.out, &files)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.message.replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}
