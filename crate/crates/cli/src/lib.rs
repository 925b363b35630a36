//! Command-line driver: dataset generation, training, evaluation, exactness
//! checks for the constructive weights, local-error diagnostics and the
//! advection stabilisation study.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 I/O or file format
//! failure, 4 divergence, 5 tolerance breach.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pixelpde_core::datagen::PdeKind;
use pixelpde_core::integrators::Scheme;
use pixelpde_core::Error;

mod commands;
pub mod config;
pub mod study;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_TOLERANCE: u8 = 5;

/// An error with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, msg)
    }

    /// Any failure while reading an input file counts as I/O.
    pub fn input(path: &std::path::Path, e: Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::DegenerateInput(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Format { .. } | Error::Json(_) => EXIT_IO,
            Error::Divergence { .. } | Error::SolverFailure { .. } => EXIT_DIVERGENCE,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "pixelpde", version, about = "Convolutional PDE surrogates on periodic grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a reference dataset.
    Gen(GenArgs),
    /// Train a network with the curriculum schedule.
    Train(TrainArgs),
    /// Roll a checkpoint out on a dataset and report error metrics.
    Eval(EvalArgs),
    /// Check that constructive weights reproduce the PDE right-hand side.
    Verify(VerifyArgs),
    /// Split the local error of one learned step over a time-step sweep.
    Diagnose(DiagnoseArgs),
    /// Preset experiments.
    Study {
        #[command(subcommand)]
        which: StudyCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum StudyCommand {
    /// Plain, noise-injected, norm-projected and combined training on advection data.
    Advection(StudyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeArg {
    Advection,
    Heat,
    Fisher,
}

impl From<PdeArg> for PdeKind {
    fn from(p: PdeArg) -> Self {
        match p {
            PdeArg::Advection => PdeKind::Advection,
            PdeArg::Heat => PdeKind::Heat,
            PdeArg::Fisher => PdeKind::Fisher,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchArg {
    LinearRelu,
    LinearLeaky,
    QuadraticRelu2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Euler,
    NormProjected,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::NormProjected => Scheme::NormProjectedEuler,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TheoremArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    Quadratic,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Linear,
    #[value(name = "leaky")]
    #[serde(rename = "leaky")]
    Leaky,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyPde {
    Advection,
    Heat,
    Fisher,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcArg {
    Mode,
    Random,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct GenArgs {
    /// JSON file with default values for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pde: Option<PdeArg>,
    /// Number of sequences [default: 64].
    #[arg(long)]
    pub n: Option<usize>,
    /// Steps per sequence; each sequence stores M+1 frames [default: 40].
    #[arg(long)]
    pub m: Option<usize>,
    /// Grid size [default: 32].
    #[arg(long)]
    pub p: Option<usize>,
    /// Time step [default: 0.02 for advection, 0.24·dx²/α otherwise].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Diffusivity [default: 0.01].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Advection velocity as `b1,b2` [default: 1,1].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fisher only: minimum initial Frobenius norm [default: 10·p/100].
    #[arg(long)]
    pub min_norm: Option<f64>,
    /// Solve on a grid this many times finer and subsample [default: 1].
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// [default: quadratic-relu2 for Fisher data, linear-relu otherwise]
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Hidden channels [default: 2 for linear, 10 for quadratic].
    #[arg(long)]
    pub channels: Option<usize>,
    /// Filter size of both layers [default: 5].
    #[arg(long)]
    pub ksize: Option<usize>,
    /// Leaky ReLU slope [default: 0.3].
    #[arg(long)]
    pub leaky_slope: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Euler sub-steps per time step [default: 5].
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Input noise magnitude ε [default: 0].
    #[arg(long)]
    pub noise_eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs per curriculum stage; drop epochs scale with it [default: 300].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Starting learning rate [default: 5e-3].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Rollout lengths of the curriculum stages [default: 2,3,4].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub stages: Option<Vec<usize>>,
    #[arg(long)]
    pub out_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub history_csv: Option<PathBuf>,
    /// Also write the checkpoint every this many epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Rollout steps [default: 40].
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub theorem: Option<TheoremArg>,
    /// PDE whose right-hand side is represented; `random` draws a new operator per trial.
    #[arg(long, value_enum)]
    pub pde: Option<VerifyPde>,
    /// [default: 200 for linear constructions, 100 for quadratic]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Bound on max|F_θ(U) − F(U)| / (1 + max|F(U)|) [default: 1e-12 linear, 1e-10 quadratic].
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub b: Option<Vec<f64>>,
    /// Leaky ReLU slope [default: 0.3].
    #[arg(long)]
    pub slope: Option<f64>,
    /// Quadratic terms of random operators [default: cycles through 1, 2, 3].
    #[arg(long)]
    pub interactions: Option<usize>,
    #[arg(long)]
    pub ksize: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Network to diagnose [default: constructive weights for the PDE].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pde: Option<PdeArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Time steps to sweep [default: 0.08,0.04,0.02,0.01].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub dt_sweep: Option<Vec<f64>>,
    /// [default: 1]
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// RK4 steps of the reference flow [default: 200].
    #[arg(long)]
    pub proxy_steps: Option<usize>,
    /// Initial state: a smooth Fourier mode or a random draw [default: mode].
    #[arg(long, value_enum)]
    pub ic: Option<IcArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ksize: Option<usize>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct StudyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Training dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out dataset with at least `horizon` steps.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub ksize: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Noise magnitude of the noise-injected variants [default: 0.01].
    #[arg(long)]
    pub noise_eps: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on standard error as one line starting
/// with `error:`.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: {first}");
            return EXIT_CONFIG;
        }
    };
    let res = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Study {
            which: StudyCommand::Advection(a),
        } => commands::study_advection(a),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.msg.replace('\n', " "));
            f.code
        }
    }
}
