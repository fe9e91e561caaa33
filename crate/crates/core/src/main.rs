use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use rategame::config::{BoundaryKind, ExperimentConfig, ExperimentKind, StrategyKind};
use rategame::runner::{error_exit_code, run};
use rategame::sim::Measure;
use rategame::Error;

/// Mean-variance portfolio game under a stochastic short rate.
#[derive(Parser)]
#[command(name = "rategame", version, about)]
struct Cli {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Random seed; overrides the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the Vasicek closed form
    ClosedForm,
    /// Solve the value-function equations by finite differences
    Pde(PdeArgs),
    /// Simulate wealth, density and rate paths
    Simulate(SimulateArgs),
    /// Check the saddle-point inequalities by Monte Carlo
    Verify(VerifyArgs),
    /// Compare PDE and Feynman-Kac Monte Carlo values
    FkCompare(McArgs),
    /// Run the experiment named by the configuration's `kind`
    Run,
}

#[derive(Args)]
struct PdeArgs {
    #[arg(long, allow_hyphen_values = true)]
    r_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    r_max: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    /// Implicit weight, 0.5 for Crank-Nicolson
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Linearity,
    DirichletClosedForm,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// saddle, zero, or shift=<v>
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    P,
    QEta,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Saddle,
    Observable,
    Zero,
    Custom,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Comma-separated shifts of the adversary's drift
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta_shifts: Option<Vec<f64>>,
    /// Comma-separated multipliers of the investment strategy
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pi_scales: Option<Vec<f64>>,
}

fn kind_of(c: &Command) -> Option<ExperimentKind> {
    match c {
        Command::ClosedForm => Some(ExperimentKind::ClosedForm),
        Command::Pde(_) => Some(ExperimentKind::Pde),
        Command::Simulate(_) => Some(ExperimentKind::Simulate),
        Command::Verify(_) => Some(ExperimentKind::Verify),
        Command::FkCompare(_) => Some(ExperimentKind::FkCompare),
        Command::Run => None,
    }
}

fn apply_mc(cfg: &mut ExperimentConfig, a: &McArgs) {
    let mc = cfg.mc.get_or_insert_with(Default::default);
    if let Some(p) = a.paths {
        mc.paths = p;
    }
    if let Some(dt) = a.dt {
        mc.dt = dt;
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let kind = kind_of(&cli.command);
    let mut cfg = match (&cli.config, kind) {
        (Some(path), _) => {
            let mut c = ExperimentConfig::from_path(path)?;
            if let Some(k) = kind {
                c.kind = k;
            }
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            c
        }
        (None, None) => return Err(Error::Config("`run` needs --config".into())),
        (None, Some(k)) => {
            let seed = cli.seed.ok_or_else(|| {
                Error::Config("a seed is required: pass --seed or --config".into())
            })?;
            ExperimentConfig::with_defaults(k, seed)
        }
    };
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.ensure_sections();
    match &cli.command {
        Command::Pde(a) => {
            let g = cfg.grid.get_or_insert_with(Default::default);
            g.r_min = a.r_min.or(g.r_min);
            g.r_max = a.r_max.or(g.r_max);
            g.n_r = a.nr.unwrap_or(g.n_r);
            g.n_t = a.nt.unwrap_or(g.n_t);
            g.theta = a.theta.unwrap_or(g.theta);
            if let Some(b) = a.boundary {
                g.boundary = match b {
                    BoundaryArg::Linearity => BoundaryKind::Linearity,
                    BoundaryArg::DirichletClosedForm => BoundaryKind::DirichletClosedForm,
                };
            }
        }
        Command::Simulate(a) => {
            apply_mc(&mut cfg, &a.mc);
            let s = cfg.simulate.get_or_insert_with(Default::default);
            if let Some(m) = a.measure {
                s.measure = match m {
                    MeasureArg::P => Measure::P,
                    MeasureArg::QEta => Measure::QEta,
                };
            }
            if let Some(k) = a.strategy {
                s.strategy = match k {
                    StrategyArg::Saddle => StrategyKind::Saddle,
                    StrategyArg::Observable => StrategyKind::Observable,
                    StrategyArg::Zero => StrategyKind::Zero,
                    StrategyArg::Custom => StrategyKind::Custom,
                };
            }
            if let Some(e) = &a.eta {
                s.eta = e.clone();
            }
        }
        Command::Verify(a) => {
            apply_mc(&mut cfg, &a.mc);
            let v = cfg.verify.get_or_insert_with(Default::default);
            if let Some(s) = &a.eta_shifts {
                v.eta_shifts = s.clone();
            }
            if let Some(s) = &a.pi_scales {
                v.pi_scales = s.clone();
            }
        }
        Command::FkCompare(a) => {
            apply_mc(&mut cfg, a);
            if let Some(dt) = a.dt {
                cfg.fk_compare.get_or_insert_with(Default::default).dt = dt;
            }
        }
        Command::ClosedForm | Command::Run => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = build_config(&cli).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(o) => {
            info!(
                "{} finished ({:?}); wrote {} to {}",
                o.kind.name(),
                o.status,
                o.files.join(", "),
                o.out_dir.display()
            );
            ExitCode::from(o.status.exit_code() as u8)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
