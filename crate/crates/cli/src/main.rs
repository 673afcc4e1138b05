//! `driftspec` command-line tool.
//!
//! Exit codes: 0 success, 1 failed verification record, 2 usage or configuration error,
//! 3 eigensolver did not converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] driftspec::Error),
    #[error("{0} verification record(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Core(driftspec::Error::NotConverged { .. }) => 3,
            CliError::Core(_) | CliError::Usage(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeName {
    Square,
    Rectangle,
    Disk,
    Annulus,
    Torus,
    Sphere,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Problem {
    Dirichlet,
    Closed,
}

#[derive(Debug, Parser)]
#[command(name = "driftspec", version, about = "Weighted Laplacian eigenproblems and nodal sets on triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a mesh.
    Mesh {
        #[arg(long, value_enum)]
        shape: ShapeName,
        /// Target mean edge length.
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.5)]
        r_in: f64,
        #[arg(long, default_value_t = std::f64::consts::TAU)]
        lx: f64,
        #[arg(long, default_value_t = std::f64::consts::TAU)]
        ly: f64,
        /// Uniform refinements applied after generation.
        #[arg(long, default_value_t = 0)]
        refine: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the smallest eigenpairs of the weighted operator on a mesh.
    Solve {
        #[arg(long)]
        mesh: PathBuf,
        /// Weight φ: an expression in x, y (, z) or a JSON field spec such as
        /// '{"builtin":"gaussian_well","params":{...}}'.
        #[arg(long, default_value = "0")]
        phi: String,
        /// Optional potential h, same syntax as --phi.
        #[arg(long)]
        h: Option<String>,
        #[arg(long, value_enum)]
        problem: Problem,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nodal analysis of one eigenfunction from a `solve` output.
    Nodal {
        #[arg(long)]
        mesh: PathBuf,
        /// spectrum.json, or the directory written by `solve`.
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long)]
        index: usize,
        /// SVG path (default: nodal.svg in the output directory).
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tau_rel: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the verification suite (canonical instances when no config is given).
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report failed records as warnings and exit 0.
        #[arg(long)]
        allow_fail: bool,
    },
    /// Run an instance over a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_fail: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mesh {
            shape,
            h,
            width,
            height,
            radius,
            r_in,
            lx,
            ly,
            refine,
            out,
        } => {
            let shape = match shape {
                ShapeName::Square => driftspec::Shape::Rectangle { width: 1.0, height: 1.0 },
                ShapeName::Rectangle => driftspec::Shape::Rectangle { width, height },
                ShapeName::Disk => driftspec::Shape::Disk { radius },
                ShapeName::Annulus => driftspec::Shape::Annulus { r_in, r_out: radius },
                ShapeName::Torus => driftspec::Shape::FlatTorus { lx, ly },
                ShapeName::Sphere => driftspec::Shape::Sphere { radius },
            };
            commands::mesh(&shape, h, refine, &out)
        }
        Command::Solve {
            mesh,
            phi,
            h,
            problem,
            k,
            tol,
            seed,
            out,
        } => {
            let kind = match problem {
                Problem::Dirichlet => driftspec::ProblemKind::Dirichlet,
                Problem::Closed => driftspec::ProblemKind::Closed,
            };
            commands::solve(&commands::SolveArgs {
                mesh,
                phi,
                h,
                kind,
                k,
                tol,
                seed,
                out,
            })
        }
        Command::Nodal {
            mesh,
            spectrum,
            index,
            svg,
            tau_rel,
            out,
        } => commands::nodal(&mesh, &spectrum, index, svg.as_deref(), tau_rel, &out),
        Command::Verify { config, out, allow_fail } => commands::verify(config.as_deref(), out, allow_fail),
        Command::Sweep { config, out, allow_fail } => commands::sweep(&config, out, allow_fail),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
