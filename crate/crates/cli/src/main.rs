mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use floquet_chain::model::KernelMode;
use floquet_chain::presets::Preset;

use config::{ChainSection, DriveSection, Num, RunConfig, Scan, SolverSection, OUTPUT_DIR_ENV};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "floquet-chain", version, about = "Driven spin impurity in an XX chain: dynamics, Floquet spectra, bound states")]
struct Cli {
    /// Output directory (overrides the environment and config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact impurity dynamics from both solvers, with their cross-check.
    Dynamics {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the fidelity of the equal superposition.
        #[arg(long)]
        fidelity: bool,
    },
    /// Quasienergy spectrum with bound-mode classification.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        /// Scan a2 over start:stop:step.
        #[arg(long, value_name = "START:STOP:STEP")]
        a2_scan: Option<Scan>,
        /// Spectrum solver.
        #[arg(long, value_enum, default_value_t = SolverChoice::Monodromy)]
        solver: SolverChoice,
    },
    /// Bound-mode steady state, site profile and harmonics.
    Fbs {
        #[command(flatten)]
        run: RunArgs,
        /// Time of the site profile (default T/4).
        #[arg(long)]
        profile_time: Option<Num>,
        /// Harmonics |k| <= K written to the mode dump.
        #[arg(long, default_value_t = 8)]
        mode_harmonics: usize,
    },
    /// Spectral-filtering prediction against the exact dynamics.
    Filter {
        #[command(flatten)]
        run: RunArgs,
        /// Output times of the filtered dynamics.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Parameter sweep described by a plan file.
    Sweep {
        /// TOML (or JSON) sweep plan.
        #[arg(long)]
        plan: PathBuf,
    },
    /// Drift of observables under step halving, truncation growth and chain doubling.
    Converge {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    Monodromy,
    Sambe,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    PaperPlaneWave,
    OpenChainExact,
}

/// Parameters shared by the single-run commands. Numbers are in units of
/// `J` and `1/J`; a `pi` suffix multiplies by π.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Figure preset (fig1..fig6).
    #[arg(long)]
    preset: Option<Preset>,
    /// TOML or JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chain sites.
    #[arg(long = "L", alias = "sites")]
    sites: Option<usize>,
    /// Chain hopping.
    #[arg(long = "J", alias = "hopping")]
    hopping: Option<Num>,
    /// Impurity-chain coupling.
    #[arg(long = "g", alias = "coupling")]
    coupling: Option<Num>,
    /// Longitudinal field on the chain.
    #[arg(long = "lambda", alias = "field")]
    field: Option<Num>,
    /// Mode set of the bath.
    #[arg(long, value_enum)]
    kernel_mode: Option<KernelArg>,
    /// Drive level on [0, tau).
    #[arg(long)]
    a1: Option<Num>,
    /// Drive level on [tau, T).
    #[arg(long)]
    a2: Option<Num>,
    /// Switching time within the period.
    #[arg(long)]
    tau: Option<Num>,
    /// Drive period.
    #[arg(long = "T", alias = "period")]
    period: Option<Num>,
    /// Keep a1 = -a2.
    #[arg(long)]
    symmetric: bool,
    /// Upper bound on the Volterra step.
    #[arg(long)]
    h: Option<Num>,
    /// Final time of the lattice run.
    #[arg(long)]
    horizon: Option<Num>,
    /// Final time of the Volterra run.
    #[arg(long)]
    volterra_horizon: Option<Num>,
    /// Output samples per drive period.
    #[arg(long)]
    samples_per_period: Option<usize>,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            preset: self.preset,
            chain: ChainSection {
                sites: self.sites,
                hopping: self.hopping,
                coupling: self.coupling,
                field: self.field,
                kernel_mode: self.kernel_mode.map(|k| match k {
                    KernelArg::PaperPlaneWave => KernelMode::PaperPlaneWave,
                    KernelArg::OpenChainExact => KernelMode::OpenChainExact,
                }),
            },
            drive: DriveSection {
                a1: self.a1,
                a2: self.a2,
                tau: self.tau,
                period: self.period,
                symmetric: self.symmetric.then_some(true),
            },
            solver: SolverSection {
                h: self.h,
                horizon: self.horizon,
                volterra_horizon: self.volterra_horizon,
                samples_per_period: self.samples_per_period,
                ..Default::default()
            },
            ..Default::default()
        };
        Ok(file.merge(flags))
    }
}

fn output_dir(flag: Option<PathBuf>, configured: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or(configured)
        .unwrap_or_else(|| PathBuf::from("output"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_flag = cli.out.clone();
    match cli.command {
        Command::Sweep { plan } => {
            let plan_cfg = commands::load_plan(&plan)?;
            let out = output_dir(out_flag, plan_cfg.output_dir.clone());
            commands::sweep(&plan, plan_cfg, &out, cli.workers)
        }
        Command::Dynamics { run, fidelity } => {
            let r = run.to_config()?.resolve()?;
            let out = output_dir(out_flag, r.output_dir.clone());
            commands::dynamics(&r, &out, fidelity)
        }
        Command::Spectrum { run, a2_scan, solver } => {
            let r = run.to_config()?.resolve()?;
            let out = output_dir(out_flag, r.output_dir.clone());
            let solver = match solver {
                SolverChoice::Monodromy => commands::SpectrumSolvers::Monodromy,
                SolverChoice::Sambe => commands::SpectrumSolvers::Sambe,
                SolverChoice::Both => commands::SpectrumSolvers::Both,
            };
            commands::spectrum(&r, &out, a2_scan, solver)
        }
        Command::Fbs {
            run,
            profile_time,
            mode_harmonics,
        } => {
            let r = run.to_config()?.resolve()?;
            let out = output_dir(out_flag, r.output_dir.clone());
            commands::fbs(&r, &out, profile_time.map(|n| n.0), mode_harmonics)
        }
        Command::Filter { run, samples } => {
            let r = run.to_config()?.resolve()?;
            let out = output_dir(out_flag, r.output_dir.clone());
            commands::filter(&r, &out, samples)
        }
        Command::Converge { run } => {
            let r = run.to_config()?.resolve()?;
            let out = output_dir(out_flag, r.output_dir.clone());
            commands::converge(&r, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
