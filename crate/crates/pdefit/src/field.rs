//! Scalar coefficient and data fields over the domain.

use std::f64::consts::PI;

/// A deterministic pointwise map from the domain to the reals.
///
/// Closures `Fn(&[f64]) -> f64` implement this trait, so coefficients can be
/// passed inline where convenient.
pub trait ScalarField: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// A field with an evaluable gradient, needed for H1-seminorm errors and the
/// inequality checks.
pub trait GradField: ScalarField {
    /// Writes the gradient at `x` into `out[..x.len()]`.
    fn grad(&self, x: &[f64], out: &mut [f64]);
}

/// Constant coefficient.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn eval(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

impl GradField for Constant {
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[..x.len()].fill(0.0);
    }
}

/// `u(x) = factor * sum_i cos(pi x_i)`, the Neumann Laplace eigenfunction
/// used throughout the convergence studies.
#[derive(Clone, Copy, Debug)]
pub struct CosineSum {
    pub dim: usize,
    pub factor: f64,
}

impl CosineSum {
    pub fn new(dim: usize) -> Self {
        Self { dim, factor: 1.0 }
    }

    pub fn scaled(dim: usize, factor: f64) -> Self {
        Self { dim, factor }
    }

    /// L2 norm over the unit cube: cross terms vanish, each square gives 1/2.
    pub fn l2_norm(&self) -> f64 {
        self.factor.abs() * (self.dim as f64 / 2.0).sqrt()
    }

    /// Supremum of the Euclidean gradient norm, `|factor| pi sqrt(d)`; also
    /// the Lipschitz constant on the cube.
    pub fn lipschitz_constant(&self) -> f64 {
        self.factor.abs() * PI * (self.dim as f64).sqrt()
    }
}

impl ScalarField for CosineSum {
    fn eval(&self, x: &[f64]) -> f64 {
        self.factor * x[..self.dim].iter().map(|&xi| (PI * xi).cos()).sum::<f64>()
    }
}

impl GradField for CosineSum {
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = -self.factor * PI * (PI * x[a]).sin();
        }
    }
}

/// Univariate polynomial in the first coordinate, `sum_j c_j x^j`.
#[derive(Clone, Debug)]
pub struct Poly1d {
    pub coeffs: Vec<f64>,
}

impl Poly1d {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn derivative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * x + j as f64 * c;
        }
        acc
    }
}

impl ScalarField for Poly1d {
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x[0])
    }
}

impl GradField for Poly1d {
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[..x.len()].fill(0.0);
        out[0] = self.derivative(x[0]);
    }
}

/// The smooth Neumann test problem `-Delta u + sigma u = f` on the unit cube
/// with `u = sum_i cos(pi x_i)`, `sigma = pi^2` and `f = 2 pi^2 u`.
#[derive(Clone, Copy, Debug)]
pub struct TestProblem {
    pub dim: usize,
}

impl TestProblem {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn solution(&self) -> CosineSum {
        CosineSum::new(self.dim)
    }

    pub fn sigma(&self) -> f64 {
        PI * PI
    }

    pub fn source(&self) -> CosineSum {
        CosineSum::scaled(self.dim, 2.0 * PI * PI)
    }

    /// Inexact source `(1 - eps) f`.
    pub fn inexact_source(&self, eps: f64) -> CosineSum {
        CosineSum::scaled(self.dim, (1.0 - eps) * 2.0 * PI * PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_sum_values_and_gradient() {
        let u = CosineSum::new(2);
        assert_abs_diff_eq!(u.eval(&[0.0, 0.0]), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.eval(&[1.0, 1.0]), -2.0, epsilon = 1e-15);
        let mut g = [0.0; 2];
        u.grad(&[0.5, 0.0], &mut g);
        assert_abs_diff_eq!(g[0], -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.l2_norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn poly_derivative() {
        // p(x) = 1 + 2x + 3x^2, p'(x) = 2 + 6x
        let p = Poly1d::new(vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(p.eval(&[2.0]), 17.0, epsilon = 1e-14);
        let mut g = [0.0];
        p.grad(&[2.0], &mut g);
        assert_abs_diff_eq!(g[0], 14.0, epsilon = 1e-14);
    }

    #[test]
    fn test_problem_satisfies_pde() {
        // -Delta u = pi^2 u for the cosine sum, so f = (pi^2 + sigma) u
        let tp = TestProblem::new(3);
        let x = [0.3, 0.7, 0.1];
        let f = tp.source().eval(&x);
        let u = tp.solution().eval(&x);
        assert_abs_diff_eq!(f, 2.0 * PI * PI * u, epsilon = 1e-12);
    }
}
