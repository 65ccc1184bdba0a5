mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::ExperimentConfig;
use output::Writer;

#[derive(Parser)]
#[command(name = "nvsim", version, about = "NV-center spin simulator: spectra, optical pumping, open-system dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`, default `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, env = "NVSIM_THREADS")]
    threads: Option<usize>,
    /// Record the tool version in every output file
    #[arg(long)]
    stamp: bool,
}

#[derive(Args, Clone)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Measured |0> <-> |+1> line (MHz)
    #[arg(long)]
    e_plus: Option<f64>,
    /// Measured |0> <-> |-1> line (MHz)
    #[arg(long)]
    e_minus: Option<f64>,
    #[arg(long)]
    sigma_plus: Option<f64>,
    #[arg(long)]
    sigma_minus: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Transition table and synthetic ODMR spectrum
    Spectrum(Common),
    /// Forbidden/allowed strength ratio versus field angle
    Ratio(Common),
    /// Steady-state electron polarization versus field angle
    Polarization(Common),
    /// Nuclear depolarization rates under illumination
    Depolarization(Common),
    /// CPT spectrum of the effective Lambda system with Lorentzian fit
    Cpt(Common),
    /// CPT linewidth and contrast versus drive and laser rate
    CptSweep(Common),
    /// Optical/microwave nuclear polarization sequence
    Polarize(Common),
    /// Field magnitude and angle from the two electron lines
    Calibrate(CalibrateArgs),
}

type Runner = fn(&ExperimentConfig, &mut Writer) -> commands::CmdResult;

fn run(common: &Common, mut cfg: ExperimentConfig, runner: Runner) -> Result<(), CliError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.take())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut writer = Writer::new(dir, common.stamp)?;
    runner(&cfg, &mut writer)?;
    for p in &writer.written {
        println!("wrote {}", output::display(p));
    }
    Ok(())
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(CliError::Config),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, runner): (Common, Runner) = match &cli.command {
        Command::Spectrum(c) => (c.clone(), commands::spectrum),
        Command::Ratio(c) => (c.clone(), commands::ratio),
        Command::Polarization(c) => (c.clone(), commands::polarization),
        Command::Depolarization(c) => (c.clone(), commands::depolarization),
        Command::Cpt(c) => (c.clone(), commands::cpt),
        Command::CptSweep(c) => (c.clone(), commands::cpt_sweep),
        Command::Polarize(c) => (c.clone(), commands::polarize),
        Command::Calibrate(a) => (a.common.clone(), commands::calibrate),
    };
    let result = load(&common).and_then(|mut cfg| {
        if let Command::Calibrate(a) = &cli.command {
            let c = &mut cfg.calibrate;
            c.e_plus = a.e_plus.or(c.e_plus);
            c.e_minus = a.e_minus.or(c.e_minus);
            c.sigma_plus = a.sigma_plus.unwrap_or(c.sigma_plus);
            c.sigma_minus = a.sigma_minus.unwrap_or(c.sigma_minus);
            cfg.validate().map_err(CliError::Config)?;
        }
        run(&common, cfg, runner)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nvsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
