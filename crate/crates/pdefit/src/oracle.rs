//! Executable verification of the inequalities behind the solver.
//!
//! Every check evaluates both sides of a proved inequality (or identity) at
//! desk scale and reports a machine-greppable line `CHECK <name> PASS|FAIL`.
//! Geometry is always a deterministic tiling, never a random cloud, so the
//! covering constants are known exactly rather than estimated.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataterm::{
    build_averaging_operator, data_error_dual_norm, data_values, overlap_count, DataCloud,
    DataMode, DataValues,
};
use crate::error::Result;
use crate::fespace::{
    assemble_load, assemble_operator, h1_seminorm_error, interpolate, l2_error, prolong,
    DofVector, FeSpace,
};
use crate::field::{Constant, CosineSum, GradField, Poly1d, ScalarField, TestProblem};
use crate::grid::{gauss_rule, AaBox, Grid, QuadRule};
use crate::regsolver::System;

/// Constants appearing in the coercivity and error bounds.
#[derive(Clone, Copy, Debug)]
pub struct BoundConstants {
    /// Covering diameter `R`.
    pub covering_diameter: f64,
    /// Maximal overlap `M`.
    pub overlap: usize,
    /// Box/cover volume mismatch factor; 1 when boxes are the cover.
    pub volume_mismatch: f64,
    /// Balance factor in `(0, 1]` relating `delta` to the optimal weight.
    pub balance: f64,
    pub delta: f64,
    pub alpha_min: f64,
}

impl BoundConstants {
    /// Constants for a tiling cloud: boxes form the cover, so the mismatch
    /// is 1 and the overlap is 1.
    pub fn for_tiling(cloud: &DataCloud, delta: f64, alpha_min: f64) -> Self {
        let r = cloud.max_diameter();
        let optimal = r * r / (PI * PI * alpha_min);
        let ratio = delta / optimal;
        Self {
            covering_diameter: r,
            overlap: 1,
            volume_mismatch: 1.0,
            balance: ratio.min(ratio.recip()).min(1.0),
            delta,
            alpha_min,
        }
    }

    /// Coercivity constant `Gamma = eta max(R^2 M / (pi^2 alpha_min), delta)`.
    pub fn gamma(&self) -> f64 {
        let r2m = self.covering_diameter * self.covering_diameter * self.overlap as f64
            / (PI * PI * self.alpha_min);
        self.volume_mismatch * r2m.max(self.delta)
    }
}

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, details: String) -> Self {
        Self { name, passed, details }
    }

    pub fn report_line(&self) -> String {
        format!(
            "CHECK {} {} ({})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.details
        )
    }
}

const SLACK: f64 = 1e-10;

fn quad10(dim: usize) -> QuadRule {
    gauss_rule(10, dim)
}

fn box_average(v: &dyn ScalarField, b: &AaBox) -> f64 {
    quad10(b.dim).integrate_box(b, |x| v.eval(x)) / b.volume()
}

fn l2_norm_sq_on(v: &dyn ScalarField, b: &AaBox) -> f64 {
    quad10(b.dim).integrate_box(b, |x| {
        let y = v.eval(x);
        y * y
    })
}

fn grad_norm_sq_on(v: &dyn GradField, b: &AaBox) -> f64 {
    let mut g = [0.0; 3];
    quad10(b.dim).integrate_box(b, |x| {
        v.grad(x, &mut g);
        g[..b.dim].iter().map(|c| c * c).sum()
    })
}

/// Mean-value Poincare inequality on a convex box:
/// `|v - avg_U v|_{L2(U)} <= (diam(U)/pi) |grad v|_{L2(U)}`.
/// Returns `(lhs, rhs, pass)`.
pub fn check_poincare(domain: &AaBox, v: &dyn GradField) -> (f64, f64, bool) {
    let avg = box_average(v, domain);
    let shifted = |x: &[f64]| v.eval(x) - avg;
    let lhs = l2_norm_sq_on(&shifted, domain).max(0.0).sqrt();
    let rhs = domain.diameter() / PI * grad_norm_sq_on(v, domain).max(0.0).sqrt();
    (lhs, rhs, lhs <= rhs + SLACK)
}

/// Subset variant: `|v|^2_{L2(U)} <= 3 (|U|/|W|) (C_U^2 |grad v|^2 + |W| (avg_W v)^2)`.
pub fn check_subset_poincare(domain: &AaBox, subset: &AaBox, v: &dyn GradField) -> (f64, f64, bool) {
    let lhs = l2_norm_sq_on(v, domain);
    let cu = domain.diameter() / PI;
    let avg_w = box_average(v, subset);
    let rhs = 3.0 * (domain.volume() / subset.volume())
        * (cu * cu * grad_norm_sq_on(v, domain) + subset.volume() * avg_w * avg_w);
    (lhs, rhs, lhs <= rhs + SLACK)
}

/// Worst slacks of the data-dependent coercivity inequalities over random
/// FE functions on a tiling cloud (positive slack means the inequality holds
/// with margin).
#[derive(Clone, Copy, Debug)]
pub struct CoercivitySlack {
    /// `eta (R^2 M / pi^2 |grad v|^2 + b(v,v)) - |v|^2` minimized over samples.
    pub poincare: f64,
    /// `Gamma |v|_c^2 - |v|^2` minimized over samples.
    pub gamma: f64,
}

/// Checks the localized Poincare estimate with data and the resulting
/// L2-coercivity of the augmented form on a tiling geometry (`eta = 1`,
/// `M = 1`, `R` exact), with `alpha = 1` and `sigma = 0`.
pub fn check_data_coercivity(
    space: &FeSpace,
    cloud: &DataCloud,
    delta: f64,
    alpha_min: f64,
    samples: usize,
    seed: u64,
) -> Result<CoercivitySlack> {
    let constants = BoundConstants::for_tiling(cloud, delta, alpha_min);
    let r2m = constants.covering_diameter * constants.covering_diameter
        * constants.overlap as f64
        / (PI * PI);
    let gamma = constants.gamma();
    let averaging = build_averaging_operator(space, cloud)?;
    let quad = space.error_quadrature();
    let zero = Constant(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = CoercivitySlack { poincare: f64::INFINITY, gamma: f64::INFINITY };
    for _ in 0..samples {
        let v = DofVector::from(
            (0..space.dof_count()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>(),
        );
        let l2_sq = {
            let e = l2_error(space, &v, &zero, &quad);
            e * e
        };
        let h1_sq = {
            let e = h1_seminorm_error(space, &v, &zero, &quad);
            e * e
        };
        let b_vv = averaging.data_norm_sq(&v);
        let poincare_slack = constants.volume_mismatch * (r2m * h1_sq + b_vv) - l2_sq;
        let cnorm_sq = alpha_min * h1_sq + b_vv / delta;
        let gamma_slack = gamma * cnorm_sq - l2_sq;
        worst.poincare = worst.poincare.min(poincare_slack);
        worst.gamma = worst.gamma.min(gamma_slack);
    }
    Ok(worst)
}

/// PDE error identity for a scaled source: with `f_tilde = (1 - eps) f` and
/// matching operators, `E_pde = |f - f_tilde| = eps |f|`. Returns
/// `(quadrature value, eps * |f|, pass)`.
pub fn check_pde_error_term(dim: usize, eps: f64) -> (f64, f64, bool) {
    let tp = TestProblem::new(dim);
    let f = tp.source();
    let whole = unit_box(dim);
    let diff = |x: &[f64]| f.eval(x) - tp.inexact_source(eps).eval(x);
    let e_pde = l2_norm_sq_on(&diff, &whole).max(0.0).sqrt();
    let f_norm = l2_norm_sq_on(&f, &whole).max(0.0).sqrt();
    let expected = eps * f_norm;
    (e_pde, expected, (e_pde - expected).abs() <= SLACK)
}

fn unit_box(dim: usize) -> AaBox {
    AaBox::new(dim, [0.0; 3], {
        let mut hi = [0.0; 3];
        hi[..dim].fill(1.0);
        hi
    })
}

/// One row of the rough-coefficient demonstration.
#[derive(Clone, Copy, Debug)]
pub struct RoughCoefficientRow {
    pub eps: f64,
    /// `int beta grad(u) . grad(v_eps)`, always 2.
    pub integral: f64,
    /// `|v_eps|_{L2(-1,1)} = sqrt(2 eps / 3)`.
    pub v_norm: f64,
    /// `integral / v_norm = sqrt(6 / eps)`, unbounded as eps shrinks.
    pub ratio: f64,
}

/// Evaluates the sign-flip counterexample on `(-1,1)`: the pairing of the
/// rough coefficient jump with shrinking hats stays at 2 while the hat norms
/// vanish, so no L2 bound on the mismatch residual can exist.
pub fn demo_rough_coefficient(eps_seq: &[f64]) -> Vec<RoughCoefficientRow> {
    let (nodes, weights) = crate::grid::gauss_legendre_01(10);
    eps_seq
        .iter()
        .map(|&eps| {
            assert!(eps > 0.0 && eps < 0.5);
            // beta = -sgn(x), u' = 1 near zero, v' = -sgn(x)/eps; the
            // integrand is 1/eps on both halves of the hat support
            let integrand = |x: f64| {
                let beta = -x.signum();
                let v_prime = -x.signum() / eps;
                beta * v_prime
            };
            let integral = crate::grid::integrate_interval(&nodes, &weights, -eps, 0.0, integrand)
                + crate::grid::integrate_interval(&nodes, &weights, 0.0, eps, integrand);
            let hat_sq = |x: f64| {
                let v = (1.0 - x.abs() / eps).max(0.0);
                v * v
            };
            let norm_sq = crate::grid::integrate_interval(&nodes, &weights, -eps, 0.0, hat_sq)
                + crate::grid::integrate_interval(&nodes, &weights, 0.0, eps, hat_sq);
            let v_norm = norm_sq.max(0.0).sqrt();
            RoughCoefficientRow { eps, integral, v_norm, ratio: integral / v_norm }
        })
        .collect()
}

/// Assembles and solves the regularized problem for the smooth test problem
/// on an explicit cloud, with a high-order load quadrature so that nested
/// solves are consistent discretizations of the same functional.
fn solve_test_problem(
    space: &FeSpace,
    cloud: &DataCloud,
    values: &DataValues,
    delta: f64,
    eps: f64,
) -> Result<(System, DofVector)> {
    let tp = TestProblem::new(space.dim());
    let quad = gauss_rule((space.order() + 1).max(8), space.dim());
    let operator = assemble_operator(space, &Constant(1.0), &Constant(tp.sigma()), &quad);
    let load = assemble_load(space, &tp.inexact_source(eps), &quad);
    let averaging = build_averaging_operator(space, cloud)?;
    let system =
        System::from_parts(Arc::new(operator), load, Arc::new(averaging), values, delta)?;
    let report = system.solve(1e-12, system.default_max_iterations())?;
    Ok((system, report.solution))
}

/// Generalized quasi-optimality across nested spaces: the coarse-space
/// solution is at least as close to the fine one (in the fine augmented
/// norm) as the coarse interpolant of the fine solution.
/// Returns `(lhs, rhs, pass)`.
pub fn check_nested_space_quasi_optimality() -> Result<(f64, f64, bool)> {
    let dim = 1;
    let order = 2;
    let coarse = FeSpace::new(Grid::unit(dim, 8)?, order)?;
    let fine = FeSpace::new(Grid::unit(dim, 16)?, order)?;
    let tp = TestProblem::new(dim);
    let cloud = DataCloud::tiling(dim, 5, 1.0)?;
    let values = data_values(&cloud, &tp.solution(), DataMode::ExactAverage);
    let params = crate::params::select_parameters(cloud.len(), dim, 1.0, 1.0, 1.0)?;
    let eps = 0.25;

    let (_, coarse_solution) = solve_test_problem(&coarse, &cloud, &values, params.delta, eps)?;
    let (fine_system, fine_solution) =
        solve_test_problem(&fine, &cloud, &values, params.delta, eps)?;

    let embedded = prolong(&coarse, &fine, &coarse_solution);
    let lhs = {
        let diff: Vec<f64> =
            embedded.iter().zip(fine_solution.iter()).map(|(a, b)| a - b).collect();
        fine_system.cnorm_sq(&diff).max(0.0).sqrt()
    };
    let restricted = interpolate(&coarse, &|x: &[f64]| fine.evaluate(&fine_solution, x));
    let candidate = prolong(&coarse, &fine, &restricted);
    let rhs = {
        let diff: Vec<f64> =
            candidate.iter().zip(fine_solution.iter()).map(|(a, b)| a - b).collect();
        fine_system.cnorm_sq(&diff).max(0.0).sqrt()
    };
    Ok((lhs, rhs, lhs <= rhs + 1e-8))
}

/// End-to-end error bound: with exact tiled data and a scaled source,
/// `|u_h - u|_{L2} <= Gamma E_pde + floor` where the floor is the error of
/// the exact-source solve. Returns one `(eps, error, bound, pass)` row per
/// tested epsilon.
pub fn check_error_estimate_end_to_end() -> Result<Vec<(f64, f64, f64, bool)>> {
    let dim = 1;
    let space = FeSpace::new(Grid::unit(dim, 32)?, 3)?;
    let tp = TestProblem::new(dim);
    let cloud = DataCloud::tiling(dim, 8, 1.0)?;
    let values = data_values(&cloud, &tp.solution(), DataMode::ExactAverage);
    let r = cloud.max_diameter();
    let delta = r * r / (PI * PI);
    let constants = BoundConstants::for_tiling(&cloud, delta, 1.0);
    let gamma = constants.gamma();
    let quad = space.error_quadrature();

    let (_, baseline) = solve_test_problem(&space, &cloud, &values, delta, 0.0)?;
    let floor = l2_error(&space, &baseline, &tp.solution(), &quad);
    let f_norm = 2.0 * PI * PI * tp.solution().l2_norm();

    let mut rows = Vec::new();
    for &eps in &[0.5, 0.25, 0.125] {
        let (_, solution) = solve_test_problem(&space, &cloud, &values, delta, eps)?;
        let err = l2_error(&space, &solution, &tp.solution(), &quad);
        let bound = gamma * eps * f_norm + floor;
        rows.push((eps, err, bound, err <= bound + 1e-9));
    }
    Ok(rows)
}

fn fmt_pair(lhs: f64, rhs: f64) -> String {
    format!("lhs={lhs:.6e}, rhs={rhs:.6e}")
}

/// Runs the full verification suite, writing one `CHECK <name> PASS|FAIL`
/// line per check.
pub fn run_all(out: &mut dyn Write) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    let mut push = |out: &mut dyn Write, r: CheckResult| -> Result<()> {
        writeln!(out, "{}", r.report_line())?;
        results.push(r);
        Ok(())
    };

    let interval = unit_box(1);

    // equality case: the cosine eigenfunction saturates the Poincare bound
    {
        let (lhs, rhs, _) = check_poincare(&interval, &CosineSum::new(1));
        let pass = (lhs - rhs).abs() <= 1e-9;
        push(out, CheckResult::new("poincare_equality", pass, fmt_pair(lhs, rhs)))?;
    }
    {
        let (lhs, _, pass) = check_poincare(&interval, &Constant(3.7));
        let pass = pass && lhs.abs() <= SLACK;
        push(out, CheckResult::new("poincare_constant", pass, format!("lhs={lhs:.3e}")))?;
    }
    {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut all = true;
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (lhs, rhs, pass) = check_poincare(&interval, &Poly1d::new(coeffs));
            all &= pass;
            worst = worst.min(rhs - lhs);
        }
        push(
            out,
            CheckResult::new(
                "poincare_random_polynomials",
                all,
                format!("50 degree<=5 polynomials, min slack {worst:.3e}"),
            ),
        )?;
    }

    // subset Poincare
    {
        let (lhs, rhs, pass) = check_subset_poincare(&interval, &interval, &Constant(2.0));
        // with W = U and a constant the bound is exactly 3x the left side
        let pass = pass && (rhs - 3.0 * lhs).abs() <= 1e-9;
        push(out, CheckResult::new("subset_poincare_constant", pass, fmt_pair(lhs, rhs)))?;
    }
    {
        let half = AaBox::new(1, [0.0; 3], { let mut hi = [0.0; 3]; hi[0] = 0.5; hi });
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let mut all = true;
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let p = Poly1d::new(coeffs);
            let (lhs, rhs, pass) = check_subset_poincare(&interval, &half, &p);
            all &= pass;
            worst = worst.min(rhs - lhs);
        }
        push(
            out,
            CheckResult::new(
                "subset_poincare_random_polynomials",
                all,
                format!("50 degree<=5 polynomials, min slack {worst:.3e}"),
            ),
        )?;
        // zero subset average: bound reduces to the gradient term
        let mut all = true;
        for _ in 0..20 {
            let mut coeffs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let avg = box_average(&Poly1d::new(coeffs.clone()), &half);
            coeffs[0] -= avg;
            let p = Poly1d::new(coeffs);
            let (_, _, pass) = check_subset_poincare(&interval, &half, &p);
            all &= pass;
        }
        push(
            out,
            CheckResult::new("subset_poincare_zero_mean", all, "20 shifted polynomials".into()),
        )?;
    }

    // data-dependent coercivity on tilings
    {
        let space = FeSpace::new(Grid::unit(1, 16)?, 2)?;
        let cloud = DataCloud::tiling(1, 4, 1.0)?;
        let r = cloud.max_diameter();
        let delta = r * r / (PI * PI);
        let slack = check_data_coercivity(&space, &cloud, delta, 1.0, 100, 200)?;
        push(
            out,
            CheckResult::new(
                "data_coercivity_poincare_1d",
                slack.poincare >= -SLACK,
                format!("min slack {:.3e}", slack.poincare),
            ),
        )?;
        push(
            out,
            CheckResult::new(
                "data_coercivity_gamma_1d",
                slack.gamma >= -SLACK,
                format!("min slack {:.3e}", slack.gamma),
            ),
        )?;
        // constant functions attain equality in the localized estimate
        let averaging = build_averaging_operator(&space, &cloud)?;
        let c = 1.7;
        let v = DofVector::constant(space.dof_count(), c);
        let b_vv = averaging.data_norm_sq(&v);
        let pass = (b_vv - c * c).abs() <= 1e-10;
        push(
            out,
            CheckResult::new(
                "data_coercivity_constant_equality",
                pass,
                format!("b(c,c)={b_vv:.12e} vs |Omega| c^2={:.12e}", c * c),
            ),
        )?;
    }
    {
        let space = FeSpace::new(Grid::unit(2, 8)?, 2)?;
        let cloud = DataCloud::tiling(2, 4, 1.0)?;
        let r = cloud.max_diameter();
        let delta = r * r / (PI * PI);
        let slack = check_data_coercivity(&space, &cloud, delta, 1.0, 100, 201)?;
        push(
            out,
            CheckResult::new(
                "data_coercivity_poincare_2d",
                slack.poincare >= -SLACK,
                format!("min slack {:.3e}", slack.poincare),
            ),
        )?;
        push(
            out,
            CheckResult::new(
                "data_coercivity_gamma_2d",
                slack.gamma >= -SLACK,
                format!("min slack {:.3e}", slack.gamma),
            ),
        )?;
    }

    // L2 continuity of the data form on random clouds
    {
        let space = FeSpace::new(Grid::unit(2, 6)?, 2)?;
        let quad = space.error_quadrature();
        let zero = Constant(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let mut worst = f64::INFINITY;
        let mut all = true;
        for trial in 0..5u64 {
            let cloud = DataCloud::sample(8, 2, 0.06 + 0.03 * trial as f64, 1.0, 300 + trial)?;
            let averaging = build_averaging_operator(&space, &cloud)?;
            let overlap = overlap_count(&cloud) as f64;
            for _ in 0..20 {
                let v = DofVector::from(
                    (0..space.dof_count())
                        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
                        .collect::<Vec<f64>>(),
                );
                let l2 = l2_error(&space, &v, &zero, &quad);
                let slack = overlap * l2 * l2 - averaging.data_norm_sq(&v);
                worst = worst.min(slack);
                all &= slack >= -SLACK;
            }
        }
        push(
            out,
            CheckResult::new(
                "data_form_continuity",
                all,
                format!("100 random vectors, min slack {worst:.3e}"),
            ),
        )?;
    }

    // discrete energy identity and Galerkin orthogonality
    {
        let space = FeSpace::new(Grid::unit(2, 6)?, 2)?;
        let tp = TestProblem::new(2);
        let cloud = DataCloud::tiling(2, 3, 1.0)?;
        let values = data_values(&cloud, &tp.solution(), DataMode::ExactAverage);
        let params = crate::params::select_parameters(cloud.len(), 2, 1.0, 1.0, 1.0)?;
        let (system, solution) = solve_test_problem(&space, &cloud, &values, params.delta, 0.25)?;
        let minimum = system.energy(&solution);
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        let mut worst_rel = 0.0f64;
        for _ in 0..20 {
            let v: Vec<f64> =
                (0..space.dof_count()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let diff: Vec<f64> = v.iter().zip(solution.iter()).map(|(a, b)| a - b).collect();
            let lhs = system.cnorm_sq(&diff);
            let rhs = 2.0 * (system.energy(&v) - minimum);
            worst_rel = worst_rel.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
        push(
            out,
            CheckResult::new(
                "energy_identity",
                worst_rel <= 1e-9,
                format!("max relative defect {worst_rel:.3e}"),
            ),
        )?;

        let mut residual = vec![0.0; space.dof_count()];
        system.apply(&solution, &mut residual);
        for (r, b) in residual.iter_mut().zip(system.rhs().iter()) {
            *r -= b;
        }
        let rhs_norm = system.rhs().iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let w: Vec<f64> =
                (0..space.dof_count()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let pairing: f64 = w.iter().zip(&residual).map(|(a, b)| a * b).sum();
            worst = worst.max(pairing.abs() / wnorm);
        }
        push(
            out,
            CheckResult::new(
                "galerkin_orthogonality",
                worst <= 1e-12 * rhs_norm.max(1.0),
                format!("max |<w, C u - r>|/|w| = {worst:.3e}"),
            ),
        )?;
    }

    // nested-space quasi-optimality
    {
        let (lhs, rhs, pass) = check_nested_space_quasi_optimality()?;
        push(out, CheckResult::new("cea_nested_spaces", pass, fmt_pair(lhs, rhs)))?;
    }

    // Holder bound on point-value data
    {
        let mut all = true;
        let mut tightest = f64::INFINITY;
        for dim in 1..=2usize {
            let u = CosineSum::new(dim);
            for (m, seed) in [(10usize, 501u64), (40, 502)] {
                let edge = 0.3 * (m as f64).powf(-1.0 / dim as f64);
                let cloud = DataCloud::sample(m, dim, edge, 1.0, seed)?;
                let vals = data_values(&cloud, &u, DataMode::PointValue);
                let e_data = data_error_dual_norm(&cloud, &vals, &u);
                let overlap = overlap_count(&cloud) as f64;
                // |Omega|^{1/2} = 1 on the unit cube
                let bound = u.lipschitz_constant() * overlap * cloud.max_diameter();
                all &= e_data <= bound + 1e-12;
                tightest = tightest.min(bound - e_data);
            }
        }
        push(
            out,
            CheckResult::new("holder_data_bound", all, format!("min margin {tightest:.3e}")),
        )?;
    }

    // E_pde identity for scaled sources
    {
        let mut all = true;
        let mut detail = String::new();
        for (dim, eps) in [(1usize, 0.5f64), (2, 0.25)] {
            let (value, expected, pass) = check_pde_error_term(dim, eps);
            all &= pass;
            if dim == 1 {
                detail = format!("d=1: {value:.6} vs {expected:.6}");
            }
        }
        // eps = 0 gives a vanishing PDE error term
        let (zero_value, _, _) = check_pde_error_term(1, 0.0);
        all &= zero_value.abs() <= SLACK;
        push(out, CheckResult::new("epde_identity", all, detail))?;
    }

    // rough-coefficient counterexample
    {
        let eps_seq = [0.375, 0.1875, 0.09375, 0.046875];
        let rows = demo_rough_coefficient(&eps_seq);
        let mut integral_ok = true;
        let mut ratio_ok = true;
        for row in &rows {
            integral_ok &= (row.integral - 2.0).abs() <= SLACK;
            ratio_ok &= (row.ratio - (6.0 / row.eps).sqrt()).abs() <= SLACK;
        }
        // halving eps multiplies the ratio by sqrt(2)
        for pair in rows.windows(2) {
            ratio_ok &=
                (pair[1].ratio - 2.0_f64.sqrt() * pair[0].ratio).abs() <= SLACK * pair[1].ratio;
        }
        push(
            out,
            CheckResult::new(
                "rough_coefficient_integral",
                integral_ok,
                format!("integral stays at 2 for {} hat widths", rows.len()),
            ),
        )?;
        let first = &rows[0];
        push(
            out,
            CheckResult::new(
                "rough_coefficient_ratio",
                ratio_ok,
                format!("eps={}: ratio {:.9} (analytic {:.9})", first.eps, first.ratio, 4.0),
            ),
        )?;
    }

    // end-to-end error bound
    {
        let rows = check_error_estimate_end_to_end()?;
        let all = rows.iter().all(|r| r.3);
        let detail = rows
            .iter()
            .map(|(eps, err, bound, _)| format!("eps={eps}: {err:.3e} <= {bound:.3e}"))
            .collect::<Vec<_>>()
            .join("; ");
        push(out, CheckResult::new("error_estimate_end_to_end", all, detail))?;
    }

    let passed = results.iter().filter(|r| r.passed).count();
    writeln!(out, "{passed}/{} checks passed", results.len())?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn poincare_equality_for_eigenfunction() {
        let (lhs, rhs, pass) = check_poincare(&unit_box(1), &CosineSum::new(1));
        assert!(pass);
        assert_abs_diff_eq!(lhs, 0.5_f64.sqrt(), epsilon = 1e-12);
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn pde_error_term_values() {
        let (value, expected, pass) = check_pde_error_term(1, 0.5);
        assert!(pass);
        // 0.5 * 2 pi^2 * |cos|_{L2} = pi^2 / sqrt(2)
        assert_abs_diff_eq!(value, PI * PI / 2.0_f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(expected, PI * PI / 2.0_f64.sqrt(), epsilon = 1e-9);

        let (value, _, pass) = check_pde_error_term(2, 0.25);
        assert!(pass);
        assert_abs_diff_eq!(value, 0.5 * PI * PI, epsilon = 1e-9);

        let (value, _, _) = check_pde_error_term(1, 0.0);
        assert!(value.abs() <= 1e-12);
    }

    #[test]
    fn rough_coefficient_closed_forms() {
        let rows = demo_rough_coefficient(&[0.375]);
        assert_abs_diff_eq!(rows[0].integral, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rows[0].v_norm, (2.0 * 0.375 / 3.0_f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rows[0].ratio, 4.0, epsilon = 1e-11);
    }

    #[test]
    fn gamma_formula() {
        let cloud = DataCloud::tiling(2, 4, 1.0).unwrap();
        let r = cloud.max_diameter();
        let delta = r * r / (PI * PI);
        let constants = BoundConstants::for_tiling(&cloud, delta, 1.0);
        // optimal weight: both branches of the max coincide
        assert_abs_diff_eq!(constants.gamma(), delta, epsilon = 1e-15);
        assert_abs_diff_eq!(constants.balance, 1.0, epsilon = 1e-12);
    }
}
