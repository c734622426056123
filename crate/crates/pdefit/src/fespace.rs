//! Tensor-product Q_k Lagrange finite element spaces on uniform grids.
//!
//! Reference shape functions are Lagrange polynomials on equispaced nodes
//! `{0, 1/k, ..., 1}` per coordinate. Global degrees of freedom live on the
//! lattice with spacing `h/k` and are numbered lexicographically with the
//! first coordinate fastest, so assembled matrices are deterministic.

use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::error::{PdefitError, Result};
use crate::field::{GradField, ScalarField};
use crate::grid::{gauss_rule, Grid, QuadRule, MAX_DIM};
use crate::sparse::{SparseSymMatrix, SymTripletBuilder};

/// Coefficient vector over the global DOFs of a space.
#[derive(Clone, Debug, PartialEq)]
pub struct DofVector(pub Vec<f64>);

impl DofVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DofVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DofVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DofVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Q_k Lagrange space on a [`Grid`].
#[derive(Clone, Debug)]
pub struct FeSpace {
    grid: Grid,
    order: usize,
    nodes_per_dim: usize,
}

impl FeSpace {
    pub fn new(grid: Grid, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(PdefitError::InvalidOrder);
        }
        let nodes_per_dim = order * grid.cells_per_dim() + 1;
        Ok(Self { grid, order, nodes_per_dim })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Global DOF count `(k n + 1)^d`.
    pub fn dof_count(&self) -> usize {
        self.nodes_per_dim.pow(self.dim() as u32)
    }

    /// Local basis count per cell, `(k + 1)^d`.
    pub fn local_dof_count(&self) -> usize {
        (self.order + 1).pow(self.dim() as u32)
    }

    /// Coordinates of a global DOF node.
    pub fn dof_point(&self, dof: usize) -> [f64; MAX_DIM] {
        let spacing = self.grid.cell_size() / self.order as f64;
        let mut point = [0.0; MAX_DIM];
        let mut rest = dof;
        for p in point.iter_mut().take(self.dim()) {
            *p = (rest % self.nodes_per_dim) as f64 * spacing;
            rest /= self.nodes_per_dim;
        }
        point
    }

    /// Global DOF indices of a cell in local lexicographic order.
    pub fn cell_dofs(&self, cell: usize, out: &mut Vec<u32>) {
        let d = self.dim();
        let k = self.order;
        let coords = self.grid.cell_coords(cell);
        out.clear();
        let nloc = self.local_dof_count();
        for local in 0..nloc {
            let mut rest = local;
            let mut global = 0usize;
            let mut stride = 1usize;
            for a in 0..d {
                let j = rest % (k + 1);
                rest /= k + 1;
                global += (coords[a] * k + j) * stride;
                stride *= self.nodes_per_dim;
            }
            out.push(global as u32);
        }
    }

    /// Default assembly quadrature, `k + 1` Gauss points per dimension; exact
    /// for both forms when the coefficients are constant.
    pub fn assembly_quadrature(&self) -> QuadRule {
        gauss_rule(self.order + 1, self.dim())
    }

    /// Error quadrature following the order-`k^2` convention: `q` points per
    /// dimension with `2q - 1 >= k^2`.
    pub fn error_quadrature(&self) -> QuadRule {
        let k2 = self.order * self.order;
        let q = k2 / 2 + 1;
        gauss_rule(q, self.dim())
    }

    /// Evaluates the FE function given by `v` at a point of the domain.
    pub fn evaluate(&self, v: &DofVector, x: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dof_count());
        let cell = self.grid.cell_containing(x);
        let lower = self.grid.cell_lower(cell);
        let h = self.grid.cell_size();
        let mut t = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            t[a] = ((x[a] - lower[a]) / h).clamp(0.0, 1.0);
        }
        let (values, _) = shape_eval(self.order, &t[..self.dim()]);
        let mut dofs = Vec::with_capacity(self.local_dof_count());
        self.cell_dofs(cell, &mut dofs);
        values
            .iter()
            .zip(&dofs)
            .map(|(&phi, &g)| phi * v[g as usize])
            .sum()
    }
}

/// Values and gradients of all `(k+1)^d` cell-local bases at a reference
/// point `t` in `[0,1]^d`. Gradient components beyond the dimension are zero.
pub fn shape_eval(order: usize, t: &[f64]) -> (Vec<f64>, Vec<[f64; MAX_DIM]>) {
    let d = t.len();
    let mut vals_1d = [[0.0; 16]; MAX_DIM];
    let mut ders_1d = [[0.0; 16]; MAX_DIM];
    for a in 0..d {
        lagrange_1d(order, t[a], &mut vals_1d[a], &mut ders_1d[a]);
    }
    let nloc = (order + 1).pow(d as u32);
    let mut values = Vec::with_capacity(nloc);
    let mut gradients = Vec::with_capacity(nloc);
    for local in 0..nloc {
        let mut idx = [0usize; MAX_DIM];
        let mut rest = local;
        for i in idx.iter_mut().take(d) {
            *i = rest % (order + 1);
            rest /= order + 1;
        }
        let mut value = 1.0;
        for a in 0..d {
            value *= vals_1d[a][idx[a]];
        }
        let mut grad = [0.0; MAX_DIM];
        for g in 0..d {
            let mut prod = 1.0;
            for a in 0..d {
                prod *= if a == g { ders_1d[a][idx[a]] } else { vals_1d[a][idx[a]] };
            }
            grad[g] = prod;
        }
        values.push(value);
        gradients.push(grad);
    }
    (values, gradients)
}

/// 1D Lagrange basis on equispaced nodes `{0, 1/k, ..., 1}`: values and
/// derivatives of all `k+1` polynomials at `t`.
pub(crate) fn lagrange_1d(order: usize, t: f64, values: &mut [f64; 16], derivatives: &mut [f64; 16]) {
    assert!(order < 16, "polynomial order limited to 15");
    let k = order;
    let node = |j: usize| j as f64 / k as f64;
    for j in 0..=k {
        let mut val = 1.0;
        for m in 0..=k {
            if m != j {
                val *= (t - node(m)) / (node(j) - node(m));
            }
        }
        values[j] = val;
        let mut der = 0.0;
        for i in 0..=k {
            if i == j {
                continue;
            }
            let mut prod = 1.0 / (node(j) - node(i));
            for m in 0..=k {
                if m != j && m != i {
                    prod *= (t - node(m)) / (node(j) - node(m));
                }
            }
            der += prod;
        }
        derivatives[j] = der;
    }
}

/// Shape values and reference gradients tabulated at the points of a rule.
struct ShapeTable {
    nloc: usize,
    dim: usize,
    /// `values[q * nloc + i]`
    values: Vec<f64>,
    /// `grads[(q * nloc + i) * dim + a]`
    grads: Vec<f64>,
}

impl ShapeTable {
    fn new(order: usize, quad: &QuadRule) -> Self {
        let dim = quad.dim();
        let nloc = (order + 1).pow(dim as u32);
        let mut values = Vec::with_capacity(quad.len() * nloc);
        let mut grads = Vec::with_capacity(quad.len() * nloc * dim);
        for q in 0..quad.len() {
            let (vals, grs) = shape_eval(order, quad.point(q));
            values.extend_from_slice(&vals);
            for g in &grs {
                grads.extend_from_slice(&g[..dim]);
            }
        }
        Self { nloc, dim, values, grads }
    }

    fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.nloc..(q + 1) * self.nloc]
    }

    fn grad(&self, q: usize, i: usize) -> &[f64] {
        let base = (q * self.nloc + i) * self.dim;
        &self.grads[base..base + self.dim]
    }
}

/// Runs `f` on every cell in parallel, preserving cell order in the output.
fn map_cells<T: Send>(cell_count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..cell_count).into_par_iter().map(f).collect()
}

/// Assembles the diffusion form `(w,v) -> int alpha grad w . grad v dx`.
///
/// Symmetric positive semi-definite; constants span the kernel when it is
/// used alone.
pub fn assemble_stiffness(space: &FeSpace, alpha: &dyn ScalarField, quad: &QuadRule) -> SparseSymMatrix {
    assemble_form(space, quad, |x| alpha.eval(x), |x| {
        let _ = x;
        0.0
    })
}

/// Assembles the reaction form `(w,v) -> int sigma w v dx`.
pub fn assemble_mass(space: &FeSpace, sigma: &dyn ScalarField, quad: &QuadRule) -> SparseSymMatrix {
    assemble_form(space, quad, |x| {
        let _ = x;
        0.0
    }, |x| sigma.eval(x))
}

/// Assembles `int alpha grad w . grad v + sigma w v dx` in one pass.
pub fn assemble_operator(
    space: &FeSpace,
    alpha: &dyn ScalarField,
    sigma: &dyn ScalarField,
    quad: &QuadRule,
) -> SparseSymMatrix {
    assemble_form(space, quad, |x| alpha.eval(x), |x| sigma.eval(x))
}

fn assemble_form(
    space: &FeSpace,
    quad: &QuadRule,
    alpha: impl Fn(&[f64]) -> f64 + Sync,
    sigma: impl Fn(&[f64]) -> f64 + Sync,
) -> SparseSymMatrix {
    let d = space.dim();
    let h = space.grid().cell_size();
    let scale = h.powi(d as i32);
    let inv_h2 = 1.0 / (h * h);
    let table = ShapeTable::new(space.order(), quad);
    let nloc = space.local_dof_count();

    // local matrices in parallel, deterministic scatter afterwards
    let locals = map_cells(space.grid().cell_count(), |cell| {
        let lower = space.grid().cell_lower(cell);
        let mut local = vec![0.0; nloc * nloc];
        let mut x = [0.0; MAX_DIM];
        for q in 0..quad.len() {
            let t = quad.point(q);
            for a in 0..d {
                x[a] = lower[a] + h * t[a];
            }
            let wa = quad.weight(q) * scale * alpha(&x[..d]) * inv_h2;
            let ws = quad.weight(q) * scale * sigma(&x[..d]);
            let values = table.values_at(q);
            for i in 0..nloc {
                let gi = table.grad(q, i);
                let vi = values[i];
                for j in i..nloc {
                    let gj = table.grad(q, j);
                    let dot: f64 = gi.iter().zip(gj).map(|(a, b)| a * b).sum();
                    local[i * nloc + j] += wa * dot + ws * vi * values[j];
                }
            }
        }
        local
    });

    let mut builder =
        SymTripletBuilder::with_capacity(space.dof_count(), locals.len() * nloc * (nloc + 1));
    let mut dofs = Vec::with_capacity(nloc);
    for (cell, local) in locals.iter().enumerate() {
        space.cell_dofs(cell, &mut dofs);
        for i in 0..nloc {
            for j in i..nloc {
                builder.push_sym(dofs[i] as usize, dofs[j] as usize, local[i * nloc + j]);
            }
        }
    }
    builder.build()
}

/// Assembles the load vector with entries `int f phi_i dx`.
pub fn assemble_load(space: &FeSpace, f: &dyn ScalarField, quad: &QuadRule) -> DofVector {
    let d = space.dim();
    let h = space.grid().cell_size();
    let scale = h.powi(d as i32);
    let table = ShapeTable::new(space.order(), quad);
    let nloc = space.local_dof_count();

    let locals = map_cells(space.grid().cell_count(), |cell| {
        let lower = space.grid().cell_lower(cell);
        let mut local = vec![0.0; nloc];
        let mut x = [0.0; MAX_DIM];
        for q in 0..quad.len() {
            let t = quad.point(q);
            for a in 0..d {
                x[a] = lower[a] + h * t[a];
            }
            let w = quad.weight(q) * scale * f.eval(&x[..d]);
            for (l, &phi) in local.iter_mut().zip(table.values_at(q)) {
                *l += w * phi;
            }
        }
        local
    });

    let mut load = DofVector::zeros(space.dof_count());
    let mut dofs = Vec::with_capacity(nloc);
    for (cell, local) in locals.iter().enumerate() {
        space.cell_dofs(cell, &mut dofs);
        for (i, &g) in dofs.iter().enumerate() {
            load[g as usize] += local[i];
        }
    }
    load
}

/// Nodal interpolation: coefficient `i` is `g` evaluated at DOF node `i`.
/// Reproduces functions already in the space exactly.
pub fn interpolate(space: &FeSpace, g: &dyn ScalarField) -> DofVector {
    let mut v = DofVector::zeros(space.dof_count());
    for i in 0..space.dof_count() {
        let p = space.dof_point(i);
        v[i] = g.eval(&p[..space.dim()]);
    }
    v
}

/// Re-expresses a coarse-space function in a nested finer space (same order,
/// cell count an integer multiple) by nodal interpolation; exact because the
/// coarse space is a subspace of the fine one.
pub fn prolong(coarse: &FeSpace, fine: &FeSpace, v: &DofVector) -> DofVector {
    assert_eq!(coarse.order(), fine.order());
    assert_eq!(fine.grid().cells_per_dim() % coarse.grid().cells_per_dim(), 0);
    interpolate(fine, &|x: &[f64]| coarse.evaluate(v, x))
}

/// L2 norm of `v_h - g` by element-wise quadrature.
pub fn l2_error(space: &FeSpace, v: &DofVector, g: &dyn ScalarField, quad: &QuadRule) -> f64 {
    assert_eq!(v.len(), space.dof_count());
    let d = space.dim();
    let h = space.grid().cell_size();
    let scale = h.powi(d as i32);
    let table = ShapeTable::new(space.order(), quad);
    let nloc = space.local_dof_count();

    let contributions = map_cells(space.grid().cell_count(), |cell| {
        let lower = space.grid().cell_lower(cell);
        let mut dofs = Vec::with_capacity(nloc);
        space.cell_dofs(cell, &mut dofs);
        let mut x = [0.0; MAX_DIM];
        let mut sum = 0.0;
        for q in 0..quad.len() {
            let t = quad.point(q);
            for a in 0..d {
                x[a] = lower[a] + h * t[a];
            }
            let uh: f64 = table
                .values_at(q)
                .iter()
                .zip(&dofs)
                .map(|(&phi, &gd)| phi * v[gd as usize])
                .sum();
            let diff = uh - g.eval(&x[..d]);
            sum += quad.weight(q) * diff * diff;
        }
        sum * scale
    });
    contributions.iter().sum::<f64>().max(0.0).sqrt()
}

/// H1 seminorm of `v_h - g`, i.e. the L2 norm of the gradient difference.
pub fn h1_seminorm_error(space: &FeSpace, v: &DofVector, g: &dyn GradField, quad: &QuadRule) -> f64 {
    assert_eq!(v.len(), space.dof_count());
    let d = space.dim();
    let h = space.grid().cell_size();
    let scale = h.powi(d as i32);
    let inv_h = 1.0 / h;
    let table = ShapeTable::new(space.order(), quad);
    let nloc = space.local_dof_count();

    let contributions = map_cells(space.grid().cell_count(), |cell| {
        let lower = space.grid().cell_lower(cell);
        let mut dofs = Vec::with_capacity(nloc);
        space.cell_dofs(cell, &mut dofs);
        let mut x = [0.0; MAX_DIM];
        let mut gref = [0.0; MAX_DIM];
        let mut sum = 0.0;
        for q in 0..quad.len() {
            let t = quad.point(q);
            for a in 0..d {
                x[a] = lower[a] + h * t[a];
            }
            let mut grad_h = [0.0; MAX_DIM];
            for (i, &gd) in dofs.iter().enumerate() {
                let gi = table.grad(q, i);
                let c = v[gd as usize];
                for a in 0..d {
                    grad_h[a] += c * gi[a];
                }
            }
            g.grad(&x[..d], &mut gref);
            let mut diff2 = 0.0;
            for a in 0..d {
                let diff = grad_h[a] * inv_h - gref[a];
                diff2 += diff * diff;
            }
            sum += quad.weight(q) * diff2;
        }
        sum * scale
    });
    contributions.iter().sum::<f64>().max(0.0).sqrt()
}
