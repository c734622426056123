//! Experiment harness: convergence sweeps and the verification suite.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pdefit::dataterm::DataMode;
use pdefit::experiment::{
    default_eps_values, default_m_values, default_resolution, render_summary, run_sweep,
    ExperimentConfig, SweepKind,
};
use pdefit::oracle;
use pdefit::regsolver::DEFAULT_TOLERANCE;

/// Fits scattered local-average or point data with an elliptic-PDE
/// regularizer and reports L2 errors against the known test solution.
#[derive(Parser, Debug)]
#[command(name = "pdefit", version, about)]
struct Cli {
    /// Run the verification suite instead of a sweep.
    #[arg(long)]
    verify: bool,

    /// Spatial dimension (1, 2 or 3).
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// Polynomial order of the elements; defaults to 4 for d=1,2 and 2 for d=3.
    #[arg(long)]
    order: Option<usize>,

    /// Mesh cells per dimension; defaults to 64 for d=1,2 and 16 for d=3.
    #[arg(long)]
    cells: Option<usize>,

    /// Sweep axis: "m" (data count) or "eps" (source inexactness).
    #[arg(long, default_value = "m")]
    sweep: String,

    /// Data counts; for an eps sweep exactly one value.
    #[arg(long = "m", value_delimiter = ',')]
    m: Option<Vec<usize>>,

    /// Source inexactness values; for an m sweep exactly one value.
    #[arg(long = "eps", value_delimiter = ',')]
    eps: Option<Vec<f64>>,

    /// Lattice-to-box volume ratios to sweep.
    #[arg(long = "Q", value_delimiter = ',')]
    q: Option<Vec<f64>>,

    /// Data mode: "average" (exact box averages) or "point" (point values).
    #[arg(long = "data-mode", default_value = "average")]
    data_mode: String,

    /// Seeds; every case runs once per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Output CSV path.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// Relative residual tolerance of the CG solver.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,

    /// Iteration cap for the CG solver; defaults to ten times the unknowns.
    #[arg(long)]
    maxit: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.verify {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        return match oracle::run_all(&mut lock) {
            Ok(results) if results.iter().all(|r| r.passed) => ExitCode::SUCCESS,
            Ok(_) => ExitCode::FAILURE,
            Err(e) => {
                eprintln!("verification aborted: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let sweep = match cli.sweep.as_str() {
        "m" => SweepKind::DataCount,
        "eps" => SweepKind::PdeError,
        other => {
            eprintln!("unknown sweep axis {other:?}; use \"m\" or \"eps\"");
            return ExitCode::FAILURE;
        }
    };
    let data_mode = match cli.data_mode.as_str() {
        "average" => DataMode::ExactAverage,
        "point" => DataMode::PointValue,
        other => {
            eprintln!("unknown data mode {other:?}; use \"average\" or \"point\"");
            return ExitCode::FAILURE;
        }
    };

    let (default_cells, default_order) = default_resolution(cli.dim);
    let mut config = ExperimentConfig::new(cli.dim, sweep);
    config.order = cli.order.unwrap_or(default_order);
    config.cells = cli.cells.unwrap_or(default_cells);
    config.data_mode = data_mode;
    config.tolerance = cli.tol;
    config.max_iterations = cli.maxit;
    if let Some(m) = cli.m {
        config.m_values = m;
    } else if sweep == SweepKind::DataCount {
        config.m_values = default_m_values(cli.dim);
    }
    if let Some(eps) = cli.eps {
        config.eps_values = eps;
    } else if sweep == SweepKind::PdeError {
        config.eps_values = default_eps_values();
    }
    if let Some(q) = cli.q {
        config.q_values = q;
    }
    if let Some(seeds) = cli.seeds {
        config.seeds = seeds;
    }

    match run_sweep(&config) {
        Ok(summary) => {
            if let Err(e) = fs::write(&cli.out, &summary.csv) {
                eprintln!("cannot write {}: {e}", cli.out.display());
                return ExitCode::FAILURE;
            }
            print!("{}", render_summary(&config, &summary));
            println!("rows written to {}", cli.out.display());
            if summary.rows.iter().any(|r| r.is_err()) {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            ExitCode::FAILURE
        }
    }
}
