//! `tvlearn`: phantoms, sinograms, TV denoising and reconstruction,
//! learning the TV weight, and the gradient/memory/adjoint checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tvlearn", version, about = "TV-regularised imaging with a learned regularisation weight")]
pub struct Cli {
    /// File with one `key = value` per line (`#` comments). Keys are flag
    /// names of the chosen command; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom image.
    Phantom(PhantomArgs),
    /// Project an image into a (noisy) parallel-beam sinogram.
    Sinogram(SinogramArgs),
    /// TV denoising with GP, FGP or Condat–Vu.
    Denoise(DenoiseArgs),
    /// FISTA reconstruction from a sinogram.
    Reconstruct(ReconstructArgs),
    /// Learn the TV weight by accelerated gradient descent.
    Learn(LearnArgs),
    /// Compare the gradient strategies with each other and with finite differences.
    Gradcheck(GradcheckArgs),
    /// Saved bytes per iteration for each tape strategy.
    Memreport(MemreportArgs),
    /// Randomised adjoint tests for every operator.
    Adjointcheck(AdjointcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Disk,
    Blocks,
    SheppLogan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Gp,
    Fgp,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepModeArg {
    Gp,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InnerArg {
    Cv,
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Gp,
    Cv,
    Acv,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Denoise,
    Reconstruct,
}

/// Synthetic phantom used when no input file is given.
#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Phantom kind
    #[arg(long, value_enum, default_value_t = Kind::Blocks)]
    pub kind: Kind,
    /// Phantom side length in pixels
    #[arg(long, value_name = "INT", default_value_t = 64)]
    pub size: usize,
    /// Phantom seed (blocks layout)
    #[arg(long, value_name = "INT", default_value_t = 7)]
    pub phantom_seed: u64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct PhantomArgs {
    /// Phantom kind
    #[arg(long, value_enum, default_value_t = Kind::Blocks)]
    pub kind: Kind,
    /// Side length in pixels
    #[arg(long, value_name = "INT", default_value_t = 64)]
    pub size: usize,
    /// Layout seed
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed: u64,
    /// Output image (raw float64)
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Optional 8-bit PNG preview
    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct SinogramArgs {
    /// Input image; a phantom is generated when absent
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Number of projection angles, uniform in [0, pi)
    #[arg(long, value_name = "INT", default_value_t = 60)]
    pub angles: usize,
    /// Detector bins (default: image diagonal + 1)
    #[arg(long, value_name = "INT")]
    pub n_det: Option<usize>,
    /// Gaussian noise standard deviation
    #[arg(long, value_name = "FLOAT", default_value_t = 0.0)]
    pub sigma: f64,
    /// Noise seed
    #[arg(long, value_name = "INT", default_value_t = 1)]
    pub seed: u64,
    /// Output sinogram file
    #[arg(long, value_name = "PATH", default_value = "sinogram.f64")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct DenoiseArgs {
    /// Noisy input image; a noisy phantom is generated when absent
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Noise level for the generated input
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    pub sigma: f64,
    /// Noise seed for the generated input
    #[arg(long, value_name = "INT", default_value_t = 7)]
    pub seed: u64,
    /// Solver
    #[arg(long, value_enum, default_value_t = SolverArg::Cv)]
    pub solver: SolverArg,
    /// Step-size rule of the Condat–Vu solver
    #[arg(long, value_enum, default_value_t = StepModeArg::Cv)]
    pub step_mode: StepModeArg,
    /// TV weight (> 0)
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    pub lambda: f64,
    /// Iterations
    #[arg(long, value_name = "INT", default_value_t = 500)]
    pub iters: usize,
    /// Output image (raw float64)
    #[arg(long, value_name = "PATH", default_value = "denoised.f64")]
    pub out: PathBuf,
    /// Objective per iteration (CSV `k,objective`)
    #[arg(long, value_name = "PATH")]
    pub objective_csv: Option<PathBuf>,
    /// Optional 8-bit PNG preview
    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct ReconstructArgs {
    /// Input sinogram; one is simulated from a phantom when absent
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Projection angles of the simulated sinogram
    #[arg(long, value_name = "INT", default_value_t = 60)]
    pub angles: usize,
    /// Noise level of the simulated sinogram, relative to its peak
    #[arg(long, value_name = "FLOAT", default_value_t = 0.02)]
    pub rel_sigma: f64,
    /// Noise seed of the simulated sinogram
    #[arg(long, value_name = "INT", default_value_t = 1)]
    pub seed: u64,
    /// Image side length when reading a sinogram from file
    #[arg(long, value_name = "INT")]
    pub image_size: Option<usize>,
    /// TV weight (> 0)
    #[arg(long, value_name = "FLOAT", default_value_t = 0.5)]
    pub lambda: f64,
    /// FISTA iterations
    #[arg(long, value_name = "INT", default_value_t = 140)]
    pub outer: usize,
    /// Inner dual iterations per FISTA step
    #[arg(long, value_name = "INT", default_value_t = 5)]
    pub inner: usize,
    /// Reuse the dual variable between FISTA steps
    #[arg(long, value_name = "BOOL", action = clap::ArgAction::Set, default_value_t = true)]
    pub warm_start: bool,
    /// Inner solver
    #[arg(long, value_enum, default_value_t = InnerArg::Cv)]
    pub inner_solver: InnerArg,
    /// Seed of the power method estimating ||A||^2
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub power_seed: u64,
    /// Output image (raw float64)
    #[arg(long, value_name = "PATH", default_value = "recon.f64")]
    pub out: PathBuf,
    /// Objective per FISTA iteration (CSV `k,objective`)
    #[arg(long, value_name = "PATH")]
    pub objective_csv: Option<PathBuf>,
    /// Optional 8-bit PNG preview
    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct LearnArgs {
    /// Denoising or reconstruction task
    #[arg(long, value_enum, default_value_t = TaskArg::Denoise)]
    pub task: TaskArg,
    /// Measurement file (noisy image or sinogram); simulated when absent
    #[arg(long, value_name = "PATH", requires = "clean")]
    pub noisy: Option<PathBuf>,
    /// Ground-truth image paired with --noisy
    #[arg(long, value_name = "PATH", requires = "noisy")]
    pub clean: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Noise level of the simulated measurement (relative to the sinogram peak for reconstruction)
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    pub sigma: f64,
    /// Noise seed of the simulated measurement
    #[arg(long, value_name = "INT", default_value_t = 7)]
    pub seed: u64,
    /// Projection angles (reconstruction task)
    #[arg(long, value_name = "INT", default_value_t = 60)]
    pub angles: usize,
    /// Starting TV weight
    #[arg(long, value_name = "FLOAT", default_value_t = 0.01)]
    pub lambda0: f64,
    /// Maximum NGD iterations
    #[arg(long, value_name = "INT", default_value_t = 60)]
    pub ngd_iters: usize,
    /// Denoising iterations per loss evaluation
    #[arg(long, value_name = "INT", default_value_t = 100)]
    pub iters: usize,
    /// FISTA iterations per loss evaluation (reconstruction task)
    #[arg(long, value_name = "INT", default_value_t = 60)]
    pub outer: usize,
    /// Inner iterations per FISTA step (reconstruction task)
    #[arg(long, value_name = "INT", default_value_t = 5)]
    pub inner: usize,
    /// Gradient strategy
    #[arg(long, value_enum, default_value_t = StrategyArg::Acv)]
    pub strategy: StrategyArg,
    /// Also run a log-spaced grid search with this many points (0 = off)
    /// and fail if the learned weight is more than one cell away
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub grid: usize,
    /// Lower end of the grid
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-3)]
    pub grid_min: f64,
    /// Upper end of the grid
    #[arg(long, value_name = "FLOAT", default_value_t = 10.0)]
    pub grid_max: f64,
    /// Trace CSV
    #[arg(long, value_name = "PATH", default_value = "trace.csv")]
    pub trace: PathBuf,
    /// Result at the learned weight (raw float64)
    #[arg(long, value_name = "PATH", default_value = "learned.f64")]
    pub out: PathBuf,
    /// Optional 8-bit PNG preview of the result
    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct GradcheckArgs {
    /// Denoising or reconstruction task
    #[arg(long, value_enum, default_value_t = TaskArg::Denoise)]
    pub task: TaskArg,
    /// Image side length
    #[arg(long, value_name = "INT", default_value_t = 32)]
    pub size: usize,
    /// TV weight at which to differentiate
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    pub lambda: f64,
    /// Denoising iterations
    #[arg(long, value_name = "INT", default_value_t = 50)]
    pub iters: usize,
    /// FISTA iterations (reconstruction task)
    #[arg(long, value_name = "INT", default_value_t = 20)]
    pub outer: usize,
    /// Inner iterations per FISTA step (reconstruction task)
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub inner: usize,
    /// Data seed
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub seed: u64,
    /// Maximum relative disagreement between strategies
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-10)]
    pub tol: f64,
    /// Maximum relative error against central finite differences
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-4)]
    pub fd_tol: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct MemreportArgs {
    /// Image side length
    #[arg(long, value_name = "INT", default_value_t = 64)]
    pub size: usize,
    /// Recorded iterations
    #[arg(long, value_name = "INT", default_value_t = 5)]
    pub iters: usize,
    /// TV weight
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    pub lambda: f64,
    /// Print the per-node breakdown of every tape
    #[arg(long, value_name = "BOOL", action = clap::ArgAction::Set, default_value_t = false)]
    pub detail: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true, args_override_self = true)]
pub struct AdjointcheckArgs {
    /// Trials per operator
    #[arg(long, value_name = "INT", default_value_t = 100)]
    pub trials: usize,
    /// Image side length
    #[arg(long, value_name = "INT", default_value_t = 32)]
    pub size: usize,
    /// Projection angles of the tested projector
    #[arg(long, value_name = "INT", default_value_t = 45)]
    pub angles: usize,
    /// Random seed
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed: u64,
    /// Maximum relative residual
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-10)]
    pub tol: f64,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::ToleranceViolated) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain joined with `: `, skipping causes already spelled out by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}
