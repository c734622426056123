//! Heuristic selection of the box edge and regularization weight.
//!
//! For `m` roughly uniform sites in `[0,D]^d` one can place `m`
//! non-overlapping lattice cubes of edge `L_hat = D m^{-1/d}`; their diameter
//! `R_hat = L_hat sqrt(d)` estimates the covering diameter. Boxes get edge
//! `l_hat = L_hat Q^{-1/d}` so the lattice-to-box volume ratio is `Q`, and
//! the weight `delta = R_hat^2 / (pi^2 alpha_min)` balances the data and PDE
//! terms assuming an O(1) overlap.

use std::f64::consts::PI;

use crate::error::{PdefitError, Result};
use crate::grid::MAX_DIM;

/// Parameters produced by [`select_parameters`], with the inputs recorded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicParams {
    /// Ideal lattice spacing `L_hat = D m^{-1/d}`.
    pub lattice_spacing: f64,
    /// Box edge `l_hat = L_hat Q^{-1/d}`.
    pub box_edge: f64,
    /// Estimated covering diameter `R_hat = L_hat sqrt(d)`.
    pub covering_diameter: f64,
    /// Regularization weight `delta = R_hat^2 / (pi^2 alpha_min)`.
    pub delta: f64,
    pub sample_count: usize,
    pub dim: usize,
    pub domain: f64,
    pub volume_ratio: f64,
    pub alpha_min: f64,
}

/// Evaluates the closed-form parameter heuristic.
pub fn select_parameters(
    sample_count: usize,
    dim: usize,
    domain: f64,
    volume_ratio: f64,
    alpha_min: f64,
) -> Result<HeuristicParams> {
    if sample_count == 0 {
        return Err(PdefitError::EmptyCloud);
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(PdefitError::InvalidDimension(dim));
    }
    if !(domain > 0.0) {
        return Err(PdefitError::InvalidEdgeLength(domain));
    }
    if !(volume_ratio >= 1.0) {
        return Err(PdefitError::InvalidVolumeRatio(volume_ratio));
    }
    if !(alpha_min > 0.0) {
        return Err(PdefitError::InvalidCoefficientBound(alpha_min));
    }
    let lattice_spacing = domain * inv_root_exact(sample_count as u64, dim);
    let box_edge = lattice_spacing * inv_root(volume_ratio, dim);
    let covering_diameter = lattice_spacing * (dim as f64).sqrt();
    let delta = covering_diameter * covering_diameter / (PI * PI * alpha_min);
    Ok(HeuristicParams {
        lattice_spacing,
        box_edge,
        covering_diameter,
        delta,
        sample_count,
        dim,
        domain,
        volume_ratio,
        alpha_min,
    })
}

/// `m^{-1/d}` with powers of `2^d` factored out first, so that scaling `m`
/// by `2^d` scales the result by exactly one half.
fn inv_root_exact(m: u64, dim: usize) -> f64 {
    let block = 1u64 << dim;
    let mut rest = m;
    let mut shift = 0i32;
    while rest % block == 0 {
        rest /= block;
        shift += 1;
    }
    inv_root(rest as f64, dim) * (-shift as f64).exp2()
}

fn inv_root(x: f64, dim: usize) -> f64 {
    match dim {
        1 => x.recip(),
        2 => x.sqrt().recip(),
        _ => x.cbrt().recip(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_values() {
        let p = select_parameters(64, 2, 1.0, 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.lattice_spacing, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(p.box_edge, 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(p.covering_diameter, 0.17677669529663687, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta, 0.0031662869888230555, epsilon = 1e-15);

        let p = select_parameters(100, 1, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.lattice_spacing, 0.01, epsilon = 1e-16);
        assert_abs_diff_eq!(p.box_edge, 0.01, epsilon = 1e-16);
        assert_abs_diff_eq!(p.covering_diameter, 0.01, epsilon = 1e-16);
        assert_abs_diff_eq!(p.delta, 1e-4 / (PI * PI), epsilon = 1e-18);

        let p = select_parameters(1, 3, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.lattice_spacing, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(p.box_edge, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(p.covering_diameter, 3.0_f64.sqrt(), epsilon = 0.0);
        assert_abs_diff_eq!(p.delta, 3.0 / (PI * PI), epsilon = 1e-16);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(select_parameters(0, 2, 1.0, 2.0, 1.0).is_err());
        assert!(select_parameters(8, 2, 1.0, 0.5, 1.0).is_err());
        assert!(select_parameters(8, 2, 1.0, 2.0, 0.0).is_err());
        assert!(select_parameters(8, 2, 1.0, 2.0, -1.0).is_err());
        assert!(select_parameters(8, 4, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn doubling_density_halves_covering_diameter_exactly() {
        for d in 1..=3usize {
            for m in [1usize, 3, 5, 12, 100, 777] {
                let base = select_parameters(m, d, 1.0, 2.0, 1.0).unwrap();
                let denser = select_parameters(m << d, d, 1.0, 2.0, 1.0).unwrap();
                assert_eq!(denser.covering_diameter, base.covering_diameter / 2.0);
                assert_eq!(denser.lattice_spacing, base.lattice_spacing / 2.0);
                assert_eq!(denser.delta, base.delta / 4.0);
            }
        }
    }

    #[test]
    fn delta_satisfies_balance_identity() {
        for (m, d, q, alpha) in [(7, 1, 1.0, 1.0), (64, 2, 4.0, 2.0), (50, 3, 2.0, 0.5)] {
            let p = select_parameters(m, d, 1.0, q, alpha).unwrap();
            let r2 = p.covering_diameter * p.covering_diameter;
            // well-balanced choice with unit overlap: delta pi^2 alpha = R^2,
            // exact up to one rounding of the division
            assert!((p.delta * PI * PI * alpha - r2).abs() <= 4.0 * f64::EPSILON * r2);
            assert!(p.box_edge <= p.lattice_spacing);
            if q > 1.0 {
                assert!(p.box_edge < p.lattice_spacing);
            }
        }
    }

    #[test]
    fn all_outputs_positive() {
        let p = select_parameters(12, 2, 2.5, 3.0, 0.7).unwrap();
        assert!(p.lattice_spacing > 0.0);
        assert!(p.box_edge > 0.0);
        assert!(p.covering_diameter > 0.0);
        assert!(p.delta > 0.0);
    }
}
