//! `psforge`: sine-Gordon angle fields to pseudospherical surfaces, loop-group
//! potentials and the verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical failure, 4 loop outside the big cell.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] psforge_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.kind() {
                "BigCellViolation" => 4,
                "IncompatibleCorner" | "InvalidGrid" | "NoOrigin" | "ShapeMismatch" | "InvalidParameter" | "Parse"
                | "IOFailure" | "Io" | "Json" | "NonpositiveProfile" | "ZeroSpectralParameter" => 2,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "psforge", version, about = "Pseudospherical surfaces from sine-Gordon angle fields")]
struct Cli {
    /// key = value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an angle field (closed-form soliton, constant, or Goursat solution from axis data).
    Solve(SolveArgs),
    /// Integrate frames and write Sym immersions, meshes and geometry.
    Surface(SurfaceArgs),
    /// Write the normalized x- and y-potentials.
    Potentials(PotentialsArgs),
    /// Birkhoff-split a loop stored as JSON.
    Split(SplitArgs),
    /// Run the invariant suite and write a JSON report.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct GridArgs {
    /// Domain bounds.
    #[arg(long, num_args = 4, value_names = ["X_MIN", "X_MAX", "Y_MIN", "Y_MAX"], allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Grid step in both directions.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    hx: Option<f64>,
    #[arg(long)]
    hy: Option<f64>,
}

#[derive(Args, Default)]
struct InputArgs {
    /// Angle-field CSV.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Companion CSV of phi_x; finite differences are used without it.
    #[arg(long)]
    phi_x: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Soliton parameter a.
    #[arg(long, allow_negative_numbers = true)]
    soliton: Option<f64>,
    /// Constant angle (not a solution unless a multiple of pi).
    #[arg(long, allow_negative_numbers = true)]
    constant: Option<f64>,
    /// Values of phi along the bottom edge, one per x node.
    #[arg(long)]
    x_data: Option<PathBuf>,
    /// Values of phi along the left edge, one per y node.
    #[arg(long)]
    y_data: Option<PathBuf>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Spectral parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    mask_threshold: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PotentialsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Also write the 2x2 spinor forms.
    #[arg(long)]
    su2: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    MinusFirst,
    PlusFirst,
}

#[derive(Args)]
struct SplitArgs {
    /// Loop JSON.
    #[arg(long = "loop", value_name = "FILE")]
    loop_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Initial number of Fourier blocks.
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Verify the closed-form soliton instead of a file.
    #[arg(long, allow_negative_numbers = true)]
    soliton: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    constant: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    /// Tolerance override, e.g. --tol flatness=1e-4 (repeatable).
    #[arg(long, value_name = "CHECK=VALUE")]
    tol: Vec<String>,
    /// Run only these checks, comma separated.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[arg(long)]
    mask_threshold: Option<f64>,
    #[arg(long)]
    split_samples: Option<usize>,
    /// Report path (default OUT/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl GridArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(d) = &self.domain {
            c.domain = Some([d[0], d[1], d[2], d[3]]);
        }
        if let Some(h) = self.h {
            c.hx = Some(h);
            c.hy = Some(h);
        }
        c.hx = self.hx.or(c.hx);
        c.hy = self.hy.or(c.hy);
    }
}

impl InputArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.input = self.input.clone();
        c.phi_x = self.phi_x.clone();
    }
}

impl Command {
    /// Flags as a config layer; unset flags leave the file's values alone.
    fn flags(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        match self {
            Command::Solve(a) => {
                a.grid.apply(&mut c);
                c.soliton = a.soliton;
                c.constant = a.constant;
                c.x_data = a.x_data.clone();
                c.y_data = a.y_data.clone();
                c.substeps = a.substeps;
                c.out = a.out.clone();
            }
            Command::Surface(a) => {
                a.input.apply(&mut c);
                c.lambdas = a.lambda.clone();
                c.mask_threshold = a.mask_threshold;
                c.out = a.out.clone();
            }
            Command::Potentials(a) => {
                a.input.apply(&mut c);
                c.su2 = a.su2.then_some(true);
                c.out = a.out.clone();
            }
            Command::Split(a) => {
                c.loop_file = a.loop_file.clone();
                c.direction = a.direction.map(|d| match d {
                    DirectionArg::MinusFirst => psforge_core::Direction::MinusFirst,
                    DirectionArg::PlusFirst => psforge_core::Direction::PlusFirst,
                });
                c.truncation = a.truncation;
                c.out = a.out.clone();
            }
            Command::Verify(a) => {
                a.input.apply(&mut c);
                a.grid.apply(&mut c);
                c.soliton = a.soliton;
                c.constant = a.constant;
                c.lambdas = a.lambda.clone();
                for t in &a.tol {
                    c.set_tolerance(t)?;
                }
                c.only = a.only.clone();
                c.mask_threshold = a.mask_threshold;
                c.split_samples = a.split_samples;
                c.report = a.report.clone();
                c.out = a.out.clone();
            }
        }
        Ok(c)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PSFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("PSFORGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(cli.command.flags()?);
    cfg.check_inputs()?;
    match cli.command {
        Command::Solve(_) => commands::cmd_solve(&cfg),
        Command::Surface(_) => commands::cmd_surface(&cfg),
        Command::Potentials(_) => commands::cmd_potentials(&cfg),
        Command::Split(_) => commands::cmd_split(&cfg),
        Command::Verify(_) => commands::cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("psforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
