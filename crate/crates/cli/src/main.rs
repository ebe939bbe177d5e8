//! `chiroptic`: polarimetry campaign simulation and analysis from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chiroptic::estimators::EstimatorKind;
use chiroptic::montecarlo::GridPlacement;
use chiroptic::photostats::Regime;

use config::{
    parse_count_list, parse_estimator, parse_float_list, parse_grid, parse_kind_list, parse_placement,
    parse_regime, parse_study, CliError, CountList, FloatList, GridSpec, KindList, Study,
};

const PRECEDENCE: &str = "Configuration precedence: command-line flags override fields of the \
--config JSON document; fields set by neither fall back to the documented defaults. The fully \
resolved configuration is written to <OUT>/config.resolved.json and reproduces the run when \
passed back through --config. Angles are degrees everywhere outside the library internals.";

#[derive(Parser)]
#[command(name = "chiroptic", version, about = "Heralded-photon polarimetry toolkit", long_about = None, after_long_help = PRECEDENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a counting campaign over an input-angle grid and estimate
    /// the concentration per cell
    Simulate(SimulateArgs),
    /// Estimate concentrations from an existing counts file
    Estimate(EstimateArgs),
    /// Information-per-slot report with the bound-saturation gap per angle
    Fisher(FisherArgs),
    /// Uncertainty budget: per-row standard uncertainties and the combined
    /// total
    Budget(BudgetArgs),
    /// Monte-Carlo studies: pointing-error bias, closed-form validation,
    /// scaling law
    Mc(McArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration document
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Campaign label carried into the result files
    #[arg(long)]
    label: Option<String>,
    /// quantum|classical [default: quantum]
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// single|diff|dsr [default: dsr]
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<EstimatorKind>,
    /// Transmitted-port detection efficiency (required here or in config)
    #[arg(long)]
    eta_h: Option<f64>,
    /// Reflected-port detection efficiency (required here or in config)
    #[arg(long)]
    eta_v: Option<f64>,
    /// Splitter leakage probability [default: 0]
    #[arg(long)]
    rpe: Option<f64>,
    /// Heralds (quantum) or slots (classical) per trial [default: 100000]
    #[arg(long)]
    heralds: Option<u64>,
    /// Trials per grid cell [default: 500]
    #[arg(long)]
    trials: Option<u64>,
    /// Mean photons per classical slot [default: 1]
    #[arg(long)]
    mean_photons: Option<f64>,
    /// Sample concentration, g/ml [default: 0.5]
    #[arg(long)]
    concentration: Option<f64>,
    /// Cuvette path length, dm [default: 0.1]
    #[arg(long)]
    path_length: Option<f64>,
    /// Probe wavelength, nm [default: 809.6]
    #[arg(long)]
    wavelength: Option<f64>,
    /// Input-angle grid as start:stop:step degrees [default: -100:100:10]
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSpec>,
    /// Master seed of the campaign [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Counts file (CSV: theta_in_deg,trial_index,n_h,n_v,nu)
    #[arg(long, value_name = "FILE")]
    counts: Option<PathBuf>,
    /// Budget table to combine into a total (CSV, budget schema)
    #[arg(long, value_name = "FILE")]
    budget: Option<PathBuf>,
    /// single|diff|dsr [default: dsr]
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<EstimatorKind>,
    /// quantum|classical; quantum enforces count conservation [default: quantum]
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Transmitted-port detection efficiency (required here or in config)
    #[arg(long)]
    eta_h: Option<f64>,
    /// Reflected-port detection efficiency (required here or in config)
    #[arg(long)]
    eta_v: Option<f64>,
    /// Mean photons per classical slot [default: 1]
    #[arg(long)]
    mean_photons: Option<f64>,
    /// Probe wavelength, nm [default: 809.6]
    #[arg(long)]
    wavelength: Option<f64>,
    /// Cuvette path length, dm [default: 0.1]
    #[arg(long)]
    path_length: Option<f64>,
    /// Branch hint for the angle inversion, degrees [default: each cell's
    /// input angle]
    #[arg(long)]
    branch_hint: Option<f64>,
}

#[derive(Args)]
struct FisherArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Statistic whose readout is analyzed: single|diff|dsr [default: single]
    #[arg(long, value_parser = parse_estimator)]
    scheme: Option<EstimatorKind>,
    /// quantum|classical [default: quantum]
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Transmitted-port detection efficiency [default: 0.25]
    #[arg(long)]
    eta_h: Option<f64>,
    /// Reflected-port detection efficiency [default: 0.25]
    #[arg(long)]
    eta_v: Option<f64>,
    /// Slots entering the uncertainty bound [default: 100000]
    #[arg(long)]
    heralds: Option<u64>,
    /// Output-angle grid as start:stop:step degrees [default: 10:80:5]
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSpec>,
}

#[derive(Args)]
struct BudgetArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Budget table (CSV); without it the built-in reference budget is
    /// reported
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// pe-bias|validate|scaling
    #[arg(long, value_parser = parse_study)]
    study: Option<Study>,
    /// Study label carried into the result files
    #[arg(long)]
    label: Option<String>,
    /// Statistic for pe-bias/scaling: single|diff|dsr [default: dsr]
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<EstimatorKind>,
    /// Statistics for validate, comma-separated or `all` [default: all]
    #[arg(long, value_parser = parse_kind_list)]
    estimators: Option<KindList>,
    /// quantum|classical for validate/scaling [default: quantum]
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Transmitted-port detection efficiency [default: 0.25]
    #[arg(long)]
    eta_h: Option<f64>,
    /// Reflected-port detection efficiency [default: 0.25]
    #[arg(long)]
    eta_v: Option<f64>,
    /// Heralds per trial [defaults: 100000 pe-bias, 20000 validate]
    #[arg(long)]
    heralds: Option<u64>,
    /// Trials per cell [defaults: 500 pe-bias, 2000 validate/scaling]
    #[arg(long)]
    trials: Option<u64>,
    /// Mean photons per classical slot [default: 1]
    #[arg(long)]
    mean_photons: Option<f64>,
    /// pe-bias concentrations, comma-separated g/ml [default: 0.1,0.3,0.5]
    #[arg(long, value_parser = parse_float_list)]
    concentrations: Option<FloatList>,
    /// Probe wavelength, nm [default: 809.6]
    #[arg(long)]
    wavelength: Option<f64>,
    /// Cuvette path length, dm [default: 0.1]
    #[arg(long)]
    path_length: Option<f64>,
    /// Whether the pe-bias grid pins output or input angles:
    /// theta-out|theta-in [default: theta-out]
    #[arg(long, value_parser = parse_placement)]
    placement: Option<GridPlacement>,
    /// Angle grid as start:stop:step degrees [defaults: 0:45:2.5 pe-bias,
    /// 5:85:5 validate]
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSpec>,
    /// Probe angle of the scaling study, degrees [default: 45]
    #[arg(long)]
    theta: Option<f64>,
    /// Scaling-study slot counts, comma-separated [default:
    /// 1000,10000,100000]
    #[arg(long, value_parser = parse_count_list)]
    nu_grid: Option<CountList>,
    /// pe-bias splitter leakage probability [default: 1e-3]
    #[arg(long)]
    rpe: Option<f64>,
    /// Master seed of the study [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg: config::SimulateConfig = config::load(a.common.config.as_deref())?;
            set(&mut cfg.label, a.label);
            set(&mut cfg.regime, a.regime);
            set(&mut cfg.estimator, a.estimator);
            set(&mut cfg.eta_h, a.eta_h);
            set(&mut cfg.eta_v, a.eta_v);
            set(&mut cfg.r_pe, a.rpe);
            set(&mut cfg.heralds, a.heralds);
            set(&mut cfg.trials, a.trials);
            set(&mut cfg.mean_photons, a.mean_photons);
            set(&mut cfg.concentration_g_per_ml, a.concentration);
            set(&mut cfg.path_length_dm, a.path_length);
            set(&mut cfg.wavelength_nm, a.wavelength);
            set(&mut cfg.theta_in_grid_deg, a.grid.map(|g| g.0));
            set(&mut cfg.master_seed, a.seed);
            commands::simulate(cfg.resolve()?, &a.common.out)
        }
        Command::Estimate(a) => {
            let mut cfg: config::EstimateConfig = config::load(a.common.config.as_deref())?;
            set(&mut cfg.counts, a.counts.map(|p| p.display().to_string()));
            set(&mut cfg.budget, a.budget.map(|p| p.display().to_string()));
            set(&mut cfg.estimator, a.estimator);
            set(&mut cfg.regime, a.regime);
            set(&mut cfg.eta_h, a.eta_h);
            set(&mut cfg.eta_v, a.eta_v);
            set(&mut cfg.mean_photons, a.mean_photons);
            set(&mut cfg.wavelength_nm, a.wavelength);
            set(&mut cfg.path_length_dm, a.path_length);
            set(&mut cfg.branch_hint_deg, a.branch_hint);
            commands::estimate(cfg.resolve()?, &a.common.out)
        }
        Command::Fisher(a) => {
            let mut cfg: config::FisherConfig = config::load(a.common.config.as_deref())?;
            set(&mut cfg.scheme, a.scheme);
            set(&mut cfg.regime, a.regime);
            set(&mut cfg.eta_h, a.eta_h);
            set(&mut cfg.eta_v, a.eta_v);
            set(&mut cfg.heralds, a.heralds);
            set(&mut cfg.grid_deg, a.grid.map(|g| g.0));
            commands::fisher(cfg.resolve()?, &a.common.out)
        }
        Command::Budget(a) => {
            let mut cfg: config::BudgetConfig = config::load(a.common.config.as_deref())?;
            set(&mut cfg.table, a.table.map(|p| p.display().to_string()));
            commands::budget(cfg.resolve()?, &a.common.out)
        }
        Command::Mc(a) => {
            let mut cfg: config::McConfig = config::load(a.common.config.as_deref())?;
            set(&mut cfg.study, a.study);
            set(&mut cfg.label, a.label);
            set(&mut cfg.estimator, a.estimator);
            set(&mut cfg.estimators, a.estimators.map(|k| k.0));
            set(&mut cfg.regime, a.regime);
            set(&mut cfg.eta_h, a.eta_h);
            set(&mut cfg.eta_v, a.eta_v);
            set(&mut cfg.heralds, a.heralds);
            set(&mut cfg.trials, a.trials);
            set(&mut cfg.mean_photons, a.mean_photons);
            set(&mut cfg.concentrations, a.concentrations.map(|c| c.0));
            set(&mut cfg.wavelength_nm, a.wavelength);
            set(&mut cfg.path_length_dm, a.path_length);
            set(&mut cfg.placement, a.placement);
            set(&mut cfg.grid_deg, a.grid.map(|g| g.0));
            set(&mut cfg.theta_deg, a.theta);
            set(&mut cfg.nu_grid, a.nu_grid.map(|n| n.0));
            set(&mut cfg.r_pe, a.rpe);
            set(&mut cfg.master_seed, a.seed);
            commands::mc(cfg.resolve()?, &a.common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
