//! Scattered sample sites, averaging boxes and the data bilinear form.
//!
//! Each sample carries an axis-aligned cube `B_i` of edge `l_hat` centered at
//! the site. The data form is
//! `b(w,v) = sum_i |B_i| (avg_{B_i} w)(avg_{B_i} v)`,
//! realized through a sparse operator mapping FE coefficients to box
//! averages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PdefitError, Result};
use crate::fespace::{DofVector, FeSpace};
use crate::field::ScalarField;
use crate::grid::{clip_box_to_cell, gauss_legendre_01, gauss_rule, AaBox, MAX_DIM};
use crate::sparse::{CsrMatrix, SparseSymMatrix};

/// Name of the deterministic generator used for sampling, recorded in CSV
/// output so the sampling protocol is reproducible.
pub const GENERATOR_NAME: &str = "chacha8";

/// Gauss points per dimension used when integrating analytic data functions
/// over boxes; far more accurate than any tolerance in the crate.
const DATA_QUAD_POINTS: usize = 10;

/// How sample values relate to the unknown function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    /// `b_i` is the exact box average of `u`.
    ExactAverage,
    /// `b_i = u(p_i)`, a point value standing in for the average.
    PointValue,
}

impl DataMode {
    pub fn label(&self) -> &'static str {
        match self {
            DataMode::ExactAverage => "average",
            DataMode::PointValue => "point",
        }
    }
}

/// Sample sites with congruent averaging boxes inside `[0,D]^d`.
#[derive(Clone, Debug)]
pub struct DataCloud {
    dim: usize,
    domain: f64,
    edge: f64,
    /// flat storage, stride `dim`
    points: Vec<f64>,
    seed: Option<u64>,
}

impl DataCloud {
    /// Draws `count` sites uniformly from `[edge/2, domain - edge/2]^dim`
    /// with a seeded deterministic generator, so identical seeds reproduce
    /// identical clouds bit-for-bit.
    pub fn sample(count: usize, dim: usize, edge: f64, domain: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(PdefitError::EmptyCloud);
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(PdefitError::InvalidDimension(dim));
        }
        if !(edge > 0.0 && edge < domain) {
            return Err(PdefitError::InvalidBoxEdge { edge, domain });
        }
        let lo = 0.5 * edge;
        let span = domain - edge;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count * dim);
        for _ in 0..count {
            for _ in 0..dim {
                points.push(lo + span * rng.gen::<f64>());
            }
        }
        Ok(Self { dim, domain, edge, points, seed: Some(seed) })
    }

    /// Deterministic tiling cloud: `per_dim^dim` boxes of edge `domain /
    /// per_dim` centered on a uniform lattice, covering the cube exactly.
    /// Used by the inequality checks where the covering constants must be
    /// known in closed form.
    pub fn tiling(dim: usize, per_dim: usize, domain: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(PdefitError::InvalidDimension(dim));
        }
        if per_dim == 0 {
            return Err(PdefitError::EmptyCloud);
        }
        let edge = domain / per_dim as f64;
        let count = per_dim.pow(dim as u32);
        let mut points = Vec::with_capacity(count * dim);
        for flat in 0..count {
            let mut rest = flat;
            for _ in 0..dim {
                let i = rest % per_dim;
                rest /= per_dim;
                points.push((i as f64 + 0.5) * edge);
            }
        }
        Ok(Self { dim, domain, edge, points, seed: None })
    }

    /// Cloud from explicit sites; every box must stay inside the domain.
    pub fn from_points(dim: usize, domain: f64, edge: f64, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(PdefitError::InvalidDimension(dim));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(PdefitError::EmptyCloud);
        }
        if !(edge > 0.0 && edge <= domain) {
            return Err(PdefitError::InvalidBoxEdge { edge, domain });
        }
        let slack = 1e-12 * domain;
        for p in points.chunks(dim) {
            for &c in p {
                if c - 0.5 * edge < -slack || c + 0.5 * edge > domain + slack {
                    return Err(PdefitError::InvalidBoxEdge { edge, domain });
                }
            }
        }
        Ok(Self { dim, domain, edge, points, seed: None })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> f64 {
        self.domain
    }

    /// Box edge `l_hat`.
    pub fn edge(&self) -> f64 {
        self.edge
    }

    /// Half the box edge per coordinate.
    pub fn halfwidth(&self) -> f64 {
        0.5 * self.edge
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Averaging box around site `i`.
    pub fn box_of(&self, i: usize) -> AaBox {
        AaBox::cube_around(self.point(i), self.edge)
    }

    /// Common box volume `l_hat^d`.
    pub fn box_volume(&self) -> f64 {
        self.edge.powi(self.dim as i32)
    }

    /// Maximal box diameter `r = l_hat sqrt(d)`.
    pub fn max_diameter(&self) -> f64 {
        self.edge * (self.dim as f64).sqrt()
    }
}

/// Sample values together with their provenance mode.
#[derive(Clone, Debug)]
pub struct DataValues {
    pub values: Vec<f64>,
    pub mode: DataMode,
}

impl DataValues {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Average of an analytic field over a box, by tensor Gauss quadrature.
pub fn box_average(u: &dyn ScalarField, b: &AaBox) -> f64 {
    let quad = gauss_rule(DATA_QUAD_POINTS, b.dim);
    quad.integrate_box(b, |x| u.eval(x)) / b.volume()
}

/// Evaluates data values for a cloud: exact box averages or point values.
pub fn data_values(cloud: &DataCloud, u: &dyn ScalarField, mode: DataMode) -> DataValues {
    let values = match mode {
        DataMode::ExactAverage => {
            let quad = gauss_rule(DATA_QUAD_POINTS, cloud.dim());
            let inv_vol = 1.0 / cloud.box_volume();
            (0..cloud.len())
                .map(|i| quad.integrate_box(&cloud.box_of(i), |x| u.eval(x)) * inv_vol)
                .collect()
        }
        DataMode::PointValue => (0..cloud.len()).map(|i| u.eval(cloud.point(i))).collect(),
    };
    DataValues { values, mode }
}

/// Sparse realization of the box-average functionals on a FE space.
///
/// Row `i` applied to a coefficient vector yields `avg_{B_i} v_h`; the
/// per-box weights are the box volumes `|B_i|`.
#[derive(Clone, Debug)]
pub struct AveragingOperator {
    matrix: CsrMatrix,
    weights: Vec<f64>,
}

impl AveragingOperator {
    pub fn sample_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dof_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Box volume weights `|B_i|`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// `out = G v`: the box averages of the FE function.
    pub fn averages(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec(v, out);
    }

    /// `out += scale * G^T (weights .* y)`.
    pub fn scatter_weighted(&self, y: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.weights.len());
        let weighted: Vec<f64> = y.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        self.matrix.transpose_mul_add(&weighted, scale, out);
    }

    /// Data form `b(w, v) = sum_i |B_i| (Gw)_i (Gv)_i`.
    pub fn data_form(&self, w: &[f64], v: &[f64]) -> f64 {
        let m = self.sample_count();
        let mut aw = vec![0.0; m];
        let mut av = vec![0.0; m];
        self.averages(w, &mut aw);
        self.averages(v, &mut av);
        aw.iter()
            .zip(&av)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    /// Seminorm `|v|_b^2 = b(v, v) >= 0`.
    pub fn data_norm_sq(&self, v: &[f64]) -> f64 {
        let m = self.sample_count();
        let mut av = vec![0.0; m];
        self.averages(v, &mut av);
        av.iter().zip(&self.weights).map(|(a, w)| w * a * a).sum()
    }

    /// Diagonal of `G^T diag(weights) G` without forming the product.
    pub fn normal_matrix_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.dof_count()];
        for i in 0..self.sample_count() {
            let (cols, vals) = self.matrix.row(i);
            let w = self.weights[i];
            for (&c, &v) in cols.iter().zip(vals) {
                diag[c as usize] += w * v * v;
            }
        }
        diag
    }
}

/// Builds the averaging operator by clipping every box to the cells it
/// intersects and integrating the local bases exactly: per coordinate the
/// integrand is a degree-`k` polynomial, so `k+1` Gauss points suffice.
pub fn build_averaging_operator(space: &FeSpace, cloud: &DataCloud) -> Result<AveragingOperator> {
    if !(cloud.edge() > 0.0) {
        return Err(PdefitError::InvalidBoxEdge { edge: cloud.edge(), domain: cloud.domain() });
    }
    let d = space.dim();
    if d != cloud.dim() {
        return Err(PdefitError::InvalidDimension(cloud.dim()));
    }
    let grid = space.grid();
    let k = space.order();
    let h = grid.cell_size();
    let (nodes, wts) = gauss_legendre_01(k + 1);
    let nloc = space.local_dof_count();
    let inv_vol = 1.0 / cloud.box_volume();

    let rows: Vec<Vec<(u32, f64)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let b = cloud.box_of(i);
            let mut entries: Vec<(u32, f64)> = Vec::new();
            let mut dofs = Vec::with_capacity(nloc);
            for cell in grid.cells_overlapping(&b) {
                let clipped = match clip_box_to_cell(grid, cell, &b) {
                    Some(c) => c,
                    None => continue,
                };
                let lower = grid.cell_lower(cell);
                // 1D integrals of each Lagrange basis over the clipped
                // interval, in cell-local coordinates
                let mut per_dim = [[0.0f64; 16]; MAX_DIM];
                let mut vals = [0.0f64; 16];
                let mut ders = [0.0f64; 16];
                for a in 0..d {
                    let t0 = (clipped.lo[a] - lower[a]) / h;
                    let t1 = (clipped.hi[a] - lower[a]) / h;
                    let span = t1 - t0;
                    for (&xi, &wq) in nodes.iter().zip(&wts) {
                        crate::fespace::lagrange_1d(k, t0 + span * xi, &mut vals, &mut ders);
                        for j in 0..=k {
                            per_dim[a][j] += wq * vals[j];
                        }
                    }
                    for j in 0..=k {
                        per_dim[a][j] *= span * h;
                    }
                }
                space.cell_dofs(cell, &mut dofs);
                for (local, &global) in dofs.iter().enumerate() {
                    let mut rest = local;
                    let mut integral = 1.0;
                    for pd in per_dim.iter().take(d) {
                        integral *= pd[rest % (k + 1)];
                        rest /= k + 1;
                    }
                    entries.push((global, integral));
                }
            }
            // merge duplicates from shared faces; stable sort keeps cell
            // order within each column
            entries.sort_by_key(|&(c, _)| c);
            let mut row: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                match row.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => row.push((c, v)),
                }
            }
            for (_, v) in row.iter_mut() {
                *v *= inv_vol;
            }
            row
        })
        .collect();

    let weights = vec![cloud.box_volume(); cloud.len()];
    Ok(AveragingOperator { matrix: CsrMatrix::from_rows(space.dof_count(), rows), weights })
}

/// Forms the data matrix `B = G^T diag(|B_i|) G` explicitly: symmetric
/// positive semi-definite with rank at most the sample count.
pub fn assemble_data_matrix(op: &AveragingOperator) -> SparseSymMatrix {
    let mut triplets = Vec::new();
    for i in 0..op.sample_count() {
        let (cols, vals) = op.matrix().row(i);
        let w = op.weights()[i];
        for (&c1, &v1) in cols.iter().zip(vals) {
            for (&c2, &v2) in cols.iter().zip(vals) {
                triplets.push((c1, c2, w * v1 * v2));
            }
        }
    }
    SparseSymMatrix::from_symmetric_triplets(op.dof_count(), triplets)
}

/// Right-hand-side contribution of the data term:
/// entry `j = sum_i b_i |B_i| G_{ij}`.
pub fn data_rhs(op: &AveragingOperator, values: &DataValues) -> DofVector {
    assert_eq!(values.len(), op.sample_count());
    let mut rhs = DofVector::zeros(op.dof_count());
    op.scatter_weighted(&values.values, 1.0, &mut rhs);
    rhs
}

/// L2 dual norm of the data perturbation: with `c_i = b_i - avg_{B_i} u`,
/// the perturbation functional is integration against `sum_i c_i chi_{B_i}`,
/// whose norm is evaluated exactly from pairwise box intersection volumes.
pub fn data_error_dual_norm(cloud: &DataCloud, values: &DataValues, u: &dyn ScalarField) -> f64 {
    assert_eq!(values.len(), cloud.len());
    let m = cloud.len();
    let quad = gauss_rule(DATA_QUAD_POINTS, cloud.dim());
    let inv_vol = 1.0 / cloud.box_volume();
    let c: Vec<f64> = (0..m)
        .map(|i| values.values[i] - quad.integrate_box(&cloud.box_of(i), |x| u.eval(x)) * inv_vol)
        .collect();
    let boxes: Vec<AaBox> = (0..m).map(|i| cloud.box_of(i)).collect();
    let mut total = 0.0;
    for i in 0..m {
        total += c[i] * c[i] * boxes[i].volume();
        for j in i + 1..m {
            let inter = boxes[i].intersection_volume(&boxes[j]);
            if inter > 0.0 {
                total += 2.0 * c[i] * c[j] * inter;
            }
        }
    }
    total.max(0.0).sqrt()
}

/// Maximal number of open boxes covering any point of the domain.
///
/// Exact for axis-aligned boxes: the overlap function is constant on the
/// open cells of the arrangement spanned by all box faces, so testing one
/// interior point per arrangement cell suffices.
pub fn overlap_count(cloud: &DataCloud) -> usize {
    let d = cloud.dim();
    let m = cloud.len();
    let mut breaks: Vec<Vec<f64>> = vec![Vec::with_capacity(2 * m); d];
    for i in 0..m {
        let b = cloud.box_of(i);
        for a in 0..d {
            breaks[a].push(b.lo[a]);
            breaks[a].push(b.hi[a]);
        }
    }
    for br in breaks.iter_mut() {
        br.sort_by(|a, b| a.total_cmp(b));
        br.dedup();
    }
    let mids: Vec<Vec<f64>> = breaks
        .iter()
        .map(|br| br.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
        .collect();
    let boxes: Vec<AaBox> = (0..m).map(|i| cloud.box_of(i)).collect();
    let mut idx = [0usize; MAX_DIM];
    let mut best = 0usize;
    'outer: loop {
        let mut x = [0.0; MAX_DIM];
        for a in 0..d {
            x[a] = mids[a][idx[a]];
        }
        let count = boxes.iter().filter(|b| b.contains_interior(&x[..d])).count();
        best = best.max(count);
        let mut a = 0;
        loop {
            if a == d {
                break 'outer;
            }
            idx[a] += 1;
            if idx[a] < mids[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
    best.max(1)
}
