//! Uniform tensor-product meshes of `[0,D]^d` and tensor Gauss quadrature.
//!
//! Cells are enumerated lexicographically in their lattice indices with the
//! first coordinate running fastest, so assembled matrices are reproducible
//! across runs.

use crate::error::{PdefitError, Result};

/// Largest spatial dimension supported by the crate.
pub const MAX_DIM: usize = 3;

/// Uniform axis-aligned mesh of the cube `[0,D]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    cells_per_dim: usize,
    edge_length: f64,
    cell_size: f64,
}

impl Grid {
    /// Builds a mesh of `[0, edge_length]^dim` with `cells_per_dim` cells
    /// along every axis.
    pub fn new(dim: usize, cells_per_dim: usize, edge_length: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(PdefitError::InvalidDimension(dim));
        }
        if cells_per_dim == 0 {
            return Err(PdefitError::EmptyGrid);
        }
        if !(edge_length > 0.0) {
            return Err(PdefitError::InvalidEdgeLength(edge_length));
        }
        Ok(Self {
            dim,
            cells_per_dim,
            edge_length,
            cell_size: edge_length / cells_per_dim as f64,
        })
    }

    /// Unit cube `[0,1]^dim`.
    pub fn unit(dim: usize, cells_per_dim: usize) -> Result<Self> {
        Self::new(dim, cells_per_dim, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    /// Domain edge length `D`.
    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Cell edge `h = D / n`.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Total number of cells, `n^d`.
    pub fn cell_count(&self) -> usize {
        self.cells_per_dim.pow(self.dim as u32)
    }

    /// Lattice index of a cell along each axis; first coordinate fastest.
    pub fn cell_coords(&self, cell: usize) -> [usize; MAX_DIM] {
        debug_assert!(cell < self.cell_count());
        let mut coords = [0usize; MAX_DIM];
        let mut rest = cell;
        for c in coords.iter_mut().take(self.dim) {
            *c = rest % self.cells_per_dim;
            rest /= self.cells_per_dim;
        }
        coords
    }

    /// Flat index of a cell from its lattice coordinates.
    pub fn cell_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0usize;
        for a in (0..self.dim).rev() {
            idx = idx * self.cells_per_dim + coords[a];
        }
        idx
    }

    /// Lower corner of a cell.
    pub fn cell_lower(&self, cell: usize) -> [f64; MAX_DIM] {
        let coords = self.cell_coords(cell);
        let mut lower = [0.0; MAX_DIM];
        for a in 0..self.dim {
            lower[a] = coords[a] as f64 * self.cell_size;
        }
        lower
    }

    /// The cell as an axis-aligned box.
    pub fn cell_box(&self, cell: usize) -> AaBox {
        let lo = self.cell_lower(cell);
        let mut hi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            hi[a] = lo[a] + self.cell_size;
        }
        AaBox::new(self.dim, lo, hi)
    }

    /// Index of the cell containing `x`, with points on shared faces assigned
    /// to the cell on the upper side and `x` clamped into the domain.
    pub fn cell_containing(&self, x: &[f64]) -> usize {
        let mut coords = [0usize; MAX_DIM];
        for a in 0..self.dim {
            let c = (x[a] / self.cell_size).floor();
            coords[a] = (c.max(0.0) as usize).min(self.cells_per_dim - 1);
        }
        self.cell_index(&coords[..self.dim])
    }

    /// Cells whose closure intersects the box, in lexicographic order.
    pub fn cells_overlapping(&self, b: &AaBox) -> Vec<usize> {
        let mut lo_idx = [0usize; MAX_DIM];
        let mut hi_idx = [0usize; MAX_DIM];
        for a in 0..self.dim {
            let lo = (b.lo[a] / self.cell_size).floor().max(0.0) as usize;
            lo_idx[a] = lo.min(self.cells_per_dim - 1);
            // ceil - 1 so a box face exactly on a cell face does not drag in
            // the zero-measure neighbor
            let hi = (b.hi[a] / self.cell_size).ceil().max(1.0) as usize;
            hi_idx[a] = hi.min(self.cells_per_dim) - 1;
        }
        let mut cells = Vec::new();
        let mut coords = lo_idx;
        loop {
            cells.push(self.cell_index(&coords[..self.dim]));
            let mut a = 0;
            loop {
                if a == self.dim {
                    return cells;
                }
                coords[a] += 1;
                if coords[a] <= hi_idx[a] {
                    break;
                }
                coords[a] = lo_idx[a];
                a += 1;
            }
        }
    }
}

/// Axis-aligned box; only the first `dim` coordinates are meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AaBox {
    pub dim: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

impl AaBox {
    pub fn new(dim: usize, lo: [f64; MAX_DIM], hi: [f64; MAX_DIM]) -> Self {
        Self { dim, lo, hi }
    }

    /// Cube of the given edge centered at `center`.
    pub fn cube_around(center: &[f64], edge: f64) -> Self {
        let dim = center.len();
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..dim {
            lo[a] = center[a] - 0.5 * edge;
            hi[a] = center[a] + 0.5 * edge;
        }
        Self { dim, lo, hi }
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinate-wise intersection; `None` when the overlap has zero measure.
    pub fn intersect(&self, other: &AaBox) -> Option<AaBox> {
        debug_assert_eq!(self.dim, other.dim);
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            lo[a] = self.lo[a].max(other.lo[a]);
            hi[a] = self.hi[a].min(other.hi[a]);
            if !(hi[a] > lo[a]) {
                return None;
            }
        }
        Some(AaBox::new(self.dim, lo, hi))
    }

    /// Volume of the intersection, zero when disjoint.
    pub fn intersection_volume(&self, other: &AaBox) -> f64 {
        self.intersect(other).map_or(0.0, |b| b.volume())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| self.lo[a] <= x[a] && x[a] <= self.hi[a])
    }

    /// Strict interior containment, used for overlap counting of open boxes.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| self.lo[a] < x[a] && x[a] < self.hi[a])
    }
}

/// Clips a box to a single cell of the grid.
pub fn clip_box_to_cell(grid: &Grid, cell: usize, b: &AaBox) -> Option<AaBox> {
    grid.cell_box(cell).intersect(b)
}

/// Tensor-product quadrature rule on the reference cell `[0,1]^d`.
///
/// Weights are positive and sum to one (the reference-cell measure). Points
/// are stored flat with stride `dim`.
#[derive(Clone, Debug)]
pub struct QuadRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    /// Integrates `f` over an arbitrary box by mapping the reference rule.
    pub fn integrate_box(&self, b: &AaBox, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        debug_assert_eq!(self.dim, b.dim);
        let vol = b.volume();
        let mut x = [0.0; MAX_DIM];
        let mut sum = 0.0;
        for q in 0..self.len() {
            let t = self.point(q);
            for a in 0..self.dim {
                x[a] = b.lo[a] + (b.hi[a] - b.lo[a]) * t[a];
            }
            sum += self.weight(q) * f(&x[..self.dim]);
        }
        sum * vol
    }
}

/// 1D Gauss-Legendre nodes and weights on `[0,1]`.
///
/// Nodes are found by Newton iteration on the Legendre polynomial, converging
/// to 1e-15; a `q`-point rule integrates polynomials of degree `2q-1` exactly.
pub fn gauss_legendre_01(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "quadrature needs at least one point");
    let n = q;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-type initial guess on [-1,1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        // weight on [-1,1]: 2 / ((1-x^2) P'_n(x)^2); halved for [0,1]
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n` and its derivative at `x`, by recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor product of the 1D Gauss-Legendre rule, on `[0,1]^d`.
pub fn gauss_rule(points_per_dim: usize, dim: usize) -> QuadRule {
    assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1..=3");
    let (nodes, weights_1d) = gauss_legendre_01(points_per_dim);
    let q = points_per_dim;
    let total = q.pow(dim as u32);
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let mut w = 1.0;
        for _ in 0..dim {
            let j = rest % q;
            rest /= q;
            points.push(nodes[j]);
            w *= weights_1d[j];
        }
        weights.push(w);
    }
    QuadRule { dim, points, weights }
}

/// Integrates `f` over one interval with a 1D Gauss rule given by its
/// reference nodes and weights on `[0,1]`.
pub fn integrate_interval(
    nodes: &[f64],
    weights: &[f64],
    lo: f64,
    hi: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let span = hi - lo;
    nodes
        .iter()
        .zip(weights)
        .map(|(&t, &w)| w * f(lo + span * t))
        .sum::<f64>()
        * span
}
