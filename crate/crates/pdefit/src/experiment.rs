//! Convergence-study sweeps over data count and source inexactness.
//!
//! Each case runs the full pipeline on the smooth Neumann test problem:
//! parameter heuristic, point sampling, averaging operator, system assembly
//! and CG solve, then the L2 error against the known solution. Results go to
//! a CSV stream in deterministic configuration order regardless of how the
//! worker pool schedules the cases; the runtime column is the only
//! nondeterministic field.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataterm::{
    build_averaging_operator, data_values, DataCloud, DataMode, GENERATOR_NAME,
};
use crate::error::{PdefitError, Result};
use crate::fespace::{assemble_load, assemble_operator, l2_error, DofVector, FeSpace};
use crate::field::TestProblem;
use crate::grid::{Grid, QuadRule};
use crate::params::select_parameters;
use crate::regsolver::{System, DEFAULT_TOLERANCE};
use crate::sparse::SparseSymMatrix;

/// Which experiment axis is swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Increasing sample count at fixed source inexactness.
    DataCount,
    /// Decreasing source inexactness at fixed sample count.
    PdeError,
}

/// Full description of a sweep.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub order: usize,
    pub cells: usize,
    pub domain: f64,
    pub sweep: SweepKind,
    pub m_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub data_mode: DataMode,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
}

/// Grid resolution and element order used in the reference experiments.
pub fn default_resolution(dim: usize) -> (usize, usize) {
    match dim {
        1 => (64, 4),
        2 => (64, 4),
        _ => (16, 2),
    }
}

/// Sample counts swept by default for each dimension.
pub fn default_m_values(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![16, 32, 64, 128, 256, 512],
        2 => vec![64, 128, 256, 512, 1024, 2048, 4096],
        _ => vec![64, 128, 256, 512, 1024, 2048],
    }
}

/// Source inexactness values swept by default, `2^-1 .. 2^-8`.
pub fn default_eps_values() -> Vec<f64> {
    (1..=8).map(|p| 0.5f64.powi(p)).collect()
}

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

impl ExperimentConfig {
    pub fn new(dim: usize, sweep: SweepKind) -> Self {
        let (cells, order) = default_resolution(dim);
        let m_values = match sweep {
            SweepKind::DataCount => default_m_values(dim),
            SweepKind::PdeError => vec![512],
        };
        let eps_values = match sweep {
            SweepKind::DataCount => vec![0.5],
            SweepKind::PdeError => default_eps_values(),
        };
        Self {
            dim,
            order,
            cells,
            domain: 1.0,
            sweep,
            m_values,
            eps_values,
            q_values: vec![4.0, 2.0],
            data_mode: DataMode::ExactAverage,
            seeds: DEFAULT_SEEDS.to_vec(),
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.eps_values.is_empty() || self.q_values.is_empty() {
            return Err(PdefitError::InvalidConfig("sweep value lists must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(PdefitError::InvalidConfig("at least one seed is required".into()));
        }
        if self.m_values.iter().any(|&m| m == 0) {
            return Err(PdefitError::InvalidConfig("sample counts must be positive".into()));
        }
        if self.eps_values.iter().any(|&e| !(0.0..1.0).contains(&e)) {
            return Err(PdefitError::InvalidConfig("eps must lie in [0, 1)".into()));
        }
        if self.q_values.iter().any(|&q| !(q >= 1.0)) {
            return Err(PdefitError::InvalidVolumeRatio(
                self.q_values.iter().cloned().fold(f64::NAN, f64::min),
            ));
        }
        match self.sweep {
            SweepKind::DataCount if self.eps_values.len() != 1 => Err(PdefitError::InvalidConfig(
                "a data-count sweep uses exactly one eps value".into(),
            )),
            SweepKind::PdeError if self.m_values.len() != 1 => Err(PdefitError::InvalidConfig(
                "a pde-error sweep uses exactly one m value".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One finished case.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub dim: usize,
    pub order: usize,
    pub cells: usize,
    pub m: usize,
    pub q: f64,
    pub eps: f64,
    pub data_mode: DataMode,
    pub seed: u64,
    pub box_edge: f64,
    pub delta: f64,
    pub l2_error: f64,
    pub cg_iterations: usize,
    pub runtime_seconds: f64,
}

/// CSV schema; one row per case and seed.
pub const CSV_HEADER: &str =
    "d,k,n,m,Q,eps,data_mode,seed,l_hat,delta,l2_error,cg_iterations,runtime_seconds";

/// Serializes floats with 17 significant digits for a lossless round trip.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dim,
            self.order,
            self.cells,
            self.m,
            fmt_float(self.q),
            fmt_float(self.eps),
            self.data_mode.label(),
            self.seed,
            fmt_float(self.box_edge),
            fmt_float(self.delta),
            fmt_float(self.l2_error),
            self.cg_iterations,
            fmt_float(self.runtime_seconds),
        )
    }
}

/// Shared per-sweep state: the space and the parts of the system that do not
/// depend on the swept values.
pub struct SweepContext {
    space: FeSpace,
    problem: TestProblem,
    pde_matrix: Arc<SparseSymMatrix>,
    unit_load: DofVector,
    error_quad: QuadRule,
    tolerance: f64,
    max_iterations: Option<usize>,
}

impl SweepContext {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let grid = Grid::new(config.dim, config.cells, config.domain)?;
        let space = FeSpace::new(grid, config.order)?;
        let problem = TestProblem::new(config.dim);
        let quad = space.assembly_quadrature();
        let alpha = crate::field::Constant(1.0);
        let sigma = crate::field::Constant(problem.sigma());
        let pde_matrix = Arc::new(assemble_operator(&space, &alpha, &sigma, &quad));
        let unit_load = assemble_load(&space, &problem.source(), &quad);
        let error_quad = space.error_quadrature();
        Ok(Self {
            space,
            problem,
            pde_matrix,
            unit_load,
            error_quad,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
        })
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }
}

/// One sweep case: runs the full pipeline and reports the error row.
pub fn run_case(
    ctx: &SweepContext,
    m: usize,
    q: f64,
    eps: f64,
    mode: DataMode,
    seed: u64,
) -> Result<ResultRow> {
    let start = Instant::now();
    let dim = ctx.space.dim();
    let domain = ctx.space.grid().edge_length();
    let params = select_parameters(m, dim, domain, q, 1.0)?;
    let cloud = DataCloud::sample(m, dim, params.box_edge, domain, seed)?;
    let averaging = build_averaging_operator(&ctx.space, &cloud)?;
    let values = data_values(&cloud, &ctx.problem.solution(), mode);
    // the load is linear in the source, so (1 - eps) f reuses the cached one
    let mut load = ctx.unit_load.clone();
    for v in load.iter_mut() {
        *v *= 1.0 - eps;
    }
    let system = System::from_parts(
        Arc::clone(&ctx.pde_matrix),
        load,
        Arc::new(averaging),
        &values,
        params.delta,
    )?;
    let max_iterations = ctx.max_iterations.unwrap_or_else(|| system.default_max_iterations());
    let report = system.solve(ctx.tolerance, max_iterations)?;
    let error = l2_error(&ctx.space, &report.solution, &ctx.problem.solution(), &ctx.error_quad);
    Ok(ResultRow {
        dim,
        order: ctx.space.order(),
        cells: ctx.space.grid().cells_per_dim(),
        m,
        q,
        eps,
        data_mode: mode,
        seed,
        box_edge: params.box_edge,
        delta: params.delta,
        l2_error: error,
        cg_iterations: report.iterations,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Aggregated curve for one `Q`: geometric-mean errors per sweep point and
/// the fitted log-log slope.
#[derive(Clone, Debug)]
pub struct CurveFit {
    pub q: f64,
    /// `(sweep value, geometric mean over seeds)` per point, in sweep order.
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

/// Sweep output: rows (or failures) in configuration order, fitted curves
/// and the rendered CSV text.
#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub rows: Vec<std::result::Result<ResultRow, String>>,
    pub curves: Vec<CurveFit>,
    pub csv: String,
}

impl SweepSummary {
    pub fn curve_for(&self, q: f64) -> Option<&CurveFit> {
        self.curves.iter().find(|c| c.q == q)
    }

    /// CSV text with the runtime column removed, the determinism contract.
    pub fn csv_without_runtime(&self) -> String {
        self.csv
            .lines()
            .map(|line| {
                if line.starts_with('#') || line == CSV_HEADER {
                    line.rsplit_once(",runtime_seconds").map_or(line.to_string(), |(a, b)| {
                        format!("{a}{b}")
                    })
                } else {
                    line.rsplit_once(',').map_or(line.to_string(), |(a, _)| a.to_string())
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Ordinary least-squares slope of `ln y` against `ln x`; `None` when the
/// fit is degenerate.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mean_x = data.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = data.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = data.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Some(sxy / sxx)
}

fn geometric_mean(values: &[f64]) -> f64 {
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Runs every case of the sweep on a worker pool and collects rows in
/// configuration order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepSummary> {
    config.validate()?;
    let ctx = SweepContext::build(config)?;

    struct CaseSpec {
        m: usize,
        q: f64,
        eps: f64,
        seed: u64,
    }
    let mut specs = Vec::new();
    for &q in &config.q_values {
        match config.sweep {
            SweepKind::DataCount => {
                for &m in &config.m_values {
                    for &seed in &config.seeds {
                        specs.push(CaseSpec { m, q, eps: config.eps_values[0], seed });
                    }
                }
            }
            SweepKind::PdeError => {
                for &eps in &config.eps_values {
                    for &seed in &config.seeds {
                        specs.push(CaseSpec { m: config.m_values[0], q, eps, seed });
                    }
                }
            }
        }
    }

    let rows: Vec<std::result::Result<ResultRow, String>> = specs
        .par_iter()
        .map(|spec| {
            run_case(&ctx, spec.m, spec.q, spec.eps, config.data_mode, spec.seed)
                .map_err(|e| format!("m={} Q={} eps={} seed={}: {e}", spec.m, spec.q, spec.eps, spec.seed))
        })
        .collect();

    // CSV assembly
    let mut csv = String::new();
    csv.push_str(&format!(
        "# rng: {GENERATOR_NAME}; seeds: {}\n",
        config.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    ));
    csv.push_str("# aggregation: geometric mean of l2_error over seeds per configuration point\n");
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        match row {
            Ok(r) => {
                csv.push_str(&r.csv_line());
                csv.push('\n');
            }
            Err(msg) => {
                csv.push_str(&format!("# FAILED {msg}\n"));
            }
        }
    }

    // per-Q curves over the sweep axis
    let mut curves = Vec::new();
    for &q in &config.q_values {
        let sweep_values: Vec<f64> = match config.sweep {
            SweepKind::DataCount => config.m_values.iter().map(|&m| m as f64).collect(),
            SweepKind::PdeError => config.eps_values.clone(),
        };
        let mut points = Vec::new();
        for &x in &sweep_values {
            let errors: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .filter(|r| {
                    r.q == q
                        && match config.sweep {
                            SweepKind::DataCount => r.m as f64 == x,
                            SweepKind::PdeError => r.eps == x,
                        }
                })
                .map(|r| r.l2_error)
                .collect();
            if !errors.is_empty() {
                points.push((x, geometric_mean(&errors)));
            }
        }
        let slope = log_log_slope(&points);
        curves.push(CurveFit { q, points, slope });
    }

    Ok(SweepSummary { rows, curves, csv })
}

/// Renders the human-readable slope summary.
pub fn render_summary(config: &ExperimentConfig, summary: &SweepSummary) -> String {
    let axis = match config.sweep {
        SweepKind::DataCount => "m",
        SweepKind::PdeError => "eps",
    };
    let mut text = String::new();
    let failures = summary.rows.iter().filter(|r| r.is_err()).count();
    text.push_str(&format!(
        "sweep over {axis}: d={} k={} n={} mode={} ({} cases, {} failed)\n",
        config.dim,
        config.order,
        config.cells,
        config.data_mode.label(),
        summary.rows.len(),
        failures
    ));
    for curve in &summary.curves {
        let slope = curve
            .slope
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "n/a".to_string());
        text.push_str(&format!("  Q={}: slope(log err vs log {axis}) = {slope}\n", curve.q));
        for (x, y) in &curve.points {
            text.push_str(&format!("    {axis}={x:<8} gmean l2_error={y:.6e}\n"));
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slope_fit_recovers_power_law() {
        let points: Vec<(f64, f64)> =
            [16.0, 32.0, 64.0, 128.0].iter().map(|&m: &f64| (m, 3.0 * m.powf(-2.0))).collect();
        let slope = log_log_slope(&points).unwrap();
        assert_abs_diff_eq!(slope, -2.0, epsilon = 1e-12);

        assert!(log_log_slope(&[(4.0, 1.0)]).is_none());
        assert!(log_log_slope(&[]).is_none());
        assert!(log_log_slope(&[(4.0, 1.0), (4.0, 2.0)]).is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(2, SweepKind::DataCount);
        assert!(c.validate().is_ok());
        c.eps_values = vec![0.5, 0.25];
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::new(1, SweepKind::PdeError);
        assert!(c.validate().is_ok());
        c.eps_values = vec![1.5];
        assert!(c.validate().is_err());
        c.eps_values = vec![0.5];
        c.q_values = vec![0.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_sweep_is_deterministic_and_reasonable() {
        let mut config = ExperimentConfig::new(1, SweepKind::DataCount);
        config.cells = 16;
        config.order = 2;
        config.m_values = vec![8, 16, 32];
        config.q_values = vec![2.0];
        config.seeds = vec![0, 1];
        let a = run_sweep(&config).unwrap();
        let b = run_sweep(&config).unwrap();
        assert_eq!(a.csv_without_runtime(), b.csv_without_runtime());
        assert_ne!(a.csv, "");
        let curve = a.curve_for(2.0).unwrap();
        assert_eq!(curve.points.len(), 3);
        for (_, err) in &curve.points {
            assert!(*err > 0.0 && err.is_finite());
        }
        // errors decrease with more data in this clean regime
        assert!(curve.points.last().unwrap().1 < curve.points[0].1);
    }

    #[test]
    fn case_rows_are_reproducible_bit_for_bit() {
        let mut config = ExperimentConfig::new(1, SweepKind::DataCount);
        config.cells = 16;
        config.order = 2;
        let ctx = SweepContext::build(&config).unwrap();
        let a = run_case(&ctx, 24, 2.0, 0.5, DataMode::ExactAverage, 7).unwrap();
        let b = run_case(&ctx, 24, 2.0, 0.5, DataMode::ExactAverage, 7).unwrap();
        assert_eq!(a.l2_error.to_bits(), b.l2_error.to_bits());
        assert_eq!(a.cg_iterations, b.cg_iterations);
        assert_eq!(a.box_edge.to_bits(), b.box_edge.to_bits());
    }

    #[test]
    fn degenerate_fit_reports_na() {
        let mut config = ExperimentConfig::new(1, SweepKind::DataCount);
        config.cells = 8;
        config.order = 1;
        config.m_values = vec![16];
        config.q_values = vec![2.0];
        config.seeds = vec![0];
        let summary = run_sweep(&config).unwrap();
        assert!(summary.curve_for(2.0).unwrap().slope.is_none());
        let text = render_summary(&config, &summary);
        assert!(text.contains("n/a"), "summary should flag the degenerate fit: {text}");
    }

    #[test]
    fn csv_row_format_is_lossless() {
        let row = ResultRow {
            dim: 2,
            order: 4,
            cells: 64,
            m: 512,
            q: 4.0,
            eps: 0.5,
            data_mode: DataMode::PointValue,
            seed: 3,
            box_edge: 0.1234567890123456,
            delta: 7e-5,
            l2_error: 1.0 / 3.0,
            cg_iterations: 250,
            runtime_seconds: 0.25,
        };
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[6], "point");
        let parsed: f64 = fields[10].parse().unwrap();
        assert_eq!(parsed.to_bits(), (1.0f64 / 3.0).to_bits());
    }
}
