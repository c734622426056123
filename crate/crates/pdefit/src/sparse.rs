//! Compressed sparse row matrices for assembled forms.

/// Rectangular CSR matrix with `u32` column indices.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from unsorted coordinate triplets, summing
    /// duplicates. A stable sort keeps the accumulation order of duplicate
    /// entries equal to their insertion order, so mirrored pushes produce a
    /// bit-exact symmetric matrix.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, v)) = iter.next() {
            let mut sum = v;
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    sum += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            row_ptr[r as usize + 1] += 1;
            cols.push(c);
            vals.push(sum);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, cols, vals }
    }

    /// Assembles from per-row `(column, value)` lists already sorted by
    /// column within each row.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0usize);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { nrows, ncols, row_ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// Stored entry at `(r, c)`, zero when absent.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = self * x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut sum = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                sum += v * x[c as usize];
            }
            y[r] = sum;
        }
    }

    /// `y += scale * self^T * x`.
    pub fn transpose_mul_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let xr = scale * x[r];
            if xr == 0.0 {
                continue;
            }
            for (&c, &v) in cols.iter().zip(vals) {
                y[c as usize] += v * xr;
            }
        }
    }
}

/// Square symmetric sparse matrix in CSR form.
///
/// Both triangles are stored; construction through [`SymTripletBuilder`]
/// guarantees `entry(i,j) == entry(j,i)` bit-exactly.
#[derive(Clone, Debug)]
pub struct SparseSymMatrix {
    inner: CsrMatrix,
}

impl SparseSymMatrix {
    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.inner.entry(i, j)
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        self.inner.row(i)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        self.inner.mul_vec(x, y);
    }

    /// `v^T A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.n());
        let mut total = 0.0;
        for r in 0..self.n() {
            let (cols, vals) = self.inner.row(r);
            let mut sum = 0.0;
            for (&c, &val) in cols.iter().zip(vals) {
                sum += val * v[c as usize];
            }
            total += v[r] * sum;
        }
        total
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.entry(i, i)).collect()
    }

    /// Entry-wise sum `self + scale * other` of two symmetric matrices.
    pub fn add_scaled(&self, other: &SparseSymMatrix, scale: f64) -> SparseSymMatrix {
        assert_eq!(self.n(), other.n());
        let n = self.n();
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let (ca, va) = self.inner.row(r);
            let (cb, vb) = other.inner.row(r);
            let mut row = Vec::with_capacity(ca.len() + cb.len());
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                if j == cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                    row.push((ca[i], va[i]));
                    i += 1;
                } else if i == ca.len() || cb[j] < ca[i] {
                    row.push((cb[j], scale * vb[j]));
                    j += 1;
                } else {
                    row.push((ca[i], va[i] + scale * vb[j]));
                    i += 1;
                    j += 1;
                }
            }
            rows.push(row);
        }
        SparseSymMatrix { inner: CsrMatrix::from_rows(n, rows) }
    }

    /// Verifies the stored symmetry, intended for tests.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n() {
            let (cols, vals) = self.inner.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if self.entry(j as usize, i) != v {
                    return false;
                }
            }
        }
        true
    }
}

impl SparseSymMatrix {
    /// Builds from raw triplets; the caller guarantees that the triplet set
    /// is symmetric (mirrored entries present with bit-equal values).
    pub fn from_symmetric_triplets(n: usize, triplets: Vec<(u32, u32, f64)>) -> Self {
        Self { inner: CsrMatrix::from_triplets(n, n, triplets) }
    }
}

/// Accumulates symmetric coordinate triplets for a square matrix.
pub struct SymTripletBuilder {
    n: usize,
    triplets: Vec<(u32, u32, f64)>,
}

impl SymTripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, triplets: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self { n, triplets: Vec::with_capacity(cap) }
    }

    /// Adds `v` at `(i, j)` and, for off-diagonal entries, the mirrored
    /// `(j, i)` as well.
    pub fn push_sym(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.triplets.push((i as u32, j as u32, v));
        if i != j {
            self.triplets.push((j as u32, i as u32, v));
        }
    }

    pub fn build(self) -> SparseSymMatrix {
        SparseSymMatrix { inner: CsrMatrix::from_triplets(self.n, self.n, self.triplets) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_matrix() -> SparseSymMatrix {
        let mut b = SymTripletBuilder::new(3);
        b.push_sym(0, 0, 2.0);
        b.push_sym(1, 1, 2.0);
        b.push_sym(2, 2, 2.0);
        b.push_sym(0, 1, -1.0);
        b.push_sym(1, 2, -1.0);
        // duplicate accumulation
        b.push_sym(0, 0, 1.0);
        b.build()
    }

    #[test]
    fn build_and_access() {
        let a = sample_matrix();
        assert_eq!(a.n(), 3);
        assert_abs_diff_eq!(a.entry(0, 0), 3.0, epsilon = 0.0);
        assert_abs_diff_eq!(a.entry(0, 1), -1.0, epsilon = 0.0);
        assert_abs_diff_eq!(a.entry(1, 0), -1.0, epsilon = 0.0);
        assert_abs_diff_eq!(a.entry(0, 2), 0.0, epsilon = 0.0);
        assert!(a.is_symmetric());
    }

    #[test]
    fn mul_and_quadratic_form() {
        let a = sample_matrix();
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        a.mul_vec(&x, &mut y);
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(y[2], 4.0, epsilon = 0.0);
        let q = a.quadratic_form(&x);
        assert_abs_diff_eq!(q, x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>(), epsilon = 0.0);
    }

    #[test]
    fn add_scaled_merges_rows() {
        let a = sample_matrix();
        let mut b = SymTripletBuilder::new(3);
        b.push_sym(0, 2, 5.0);
        b.push_sym(1, 1, 1.0);
        let b = b.build();
        let c = a.add_scaled(&b, 2.0);
        assert_abs_diff_eq!(c.entry(0, 2), 10.0, epsilon = 0.0);
        assert_abs_diff_eq!(c.entry(2, 0), 10.0, epsilon = 0.0);
        assert_abs_diff_eq!(c.entry(1, 1), 4.0, epsilon = 0.0);
        assert_abs_diff_eq!(c.entry(0, 1), -1.0, epsilon = 0.0);
        assert!(c.is_symmetric());
    }

    #[test]
    fn rectangular_transpose_apply() {
        let g = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let mut y = vec![0.0; 2];
        g.mul_vec(&[1.0, 1.0, 1.0], &mut y);
        assert_abs_diff_eq!(y[0], 3.0, epsilon = 0.0);
        assert_abs_diff_eq!(y[1], 3.0, epsilon = 0.0);
        let mut z = vec![0.0; 3];
        g.transpose_mul_add(&[1.0, 2.0], 0.5, &mut z);
        assert_abs_diff_eq!(z[0], 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(z[1], 3.0, epsilon = 0.0);
        assert_abs_diff_eq!(z[2], 1.0, epsilon = 0.0);
    }
}
