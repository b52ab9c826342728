//! Compressed sparse row matrices, block composition and sparse LU solves.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Col;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from coordinate triplets; duplicates are summed.
    pub fn from_triplets(
        rows: &[usize],
        cols: &[usize],
        values: &[f64],
        shape: (usize, usize),
    ) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != values.len() {
            return Err(invalid("triplet arrays differ in length"));
        }
        let (nrows, ncols) = shape;
        for (&i, &j) in rows.iter().zip(cols) {
            if i >= nrows || j >= ncols {
                return Err(invalid(format!("entry ({i}, {j}) outside a {nrows}x{ncols} matrix")));
            }
        }
        let mut count = vec![0usize; nrows + 1];
        for &i in rows {
            count[i + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut order = vec![0usize; rows.len()];
        let mut next = count.clone();
        for (k, &i) in rows.iter().enumerate() {
            order[next[i]] = k;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(rows.len());
        let mut vals = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend(order[count[i]..count[i + 1]].iter().map(|&k| (cols[k], values[k])));
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix { nrows, ncols, row_ptr, col_idx, values: vals })
    }

    /// Matrix with the given structural nonzeros, all set to zero.
    pub fn from_pattern(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize)>) -> Result<Self> {
        entries.sort_unstable();
        entries.dedup();
        let rows: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let cols: Vec<usize> = entries.iter().map(|e| e.1).collect();
        Self::from_triplets(&rows, &cols, &vec![0.0; entries.len()], (nrows, ncols))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row `i` as parallel column and value slices.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Storage position of entry `(i, j)` if it is structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// `y += s * A x`
    pub fn matvec_add(&self, s: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            *yi += s * c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum::<f64>();
        }
    }

    /// `y = Aᵀ x`
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut count = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                col_idx[next[j]] = i;
                values[next[j]] = a;
                next[j] += 1;
            }
        }
        SparseMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr: count, col_idx, values }
    }

    /// `s * self`
    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a * self + b * other` on the union pattern.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.shape() != other.shape() {
            return Err(invalid(format!("cannot add {:?} and {:?} matrices", self.shape(), other.shape())));
        }
        let mut r = Vec::with_capacity(self.nnz() + other.nnz());
        let mut c = Vec::with_capacity(r.capacity());
        let mut v = Vec::with_capacity(r.capacity());
        for (m, s) in [(self, a), (other, b)] {
            for i in 0..m.nrows {
                let (cols, vals) = m.row(i);
                for (&j, &x) in cols.iter().zip(vals) {
                    r.push(i);
                    c.push(j);
                    v.push(s * x);
                }
            }
        }
        Self::from_triplets(&r, &c, &v, self.shape())
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        (0..self.nrows).all(|i| {
            let (c, v) = self.row(i);
            let (ct, vt) = t.row(i);
            let mut ok = c.iter().zip(v).all(|(&j, &a)| (a - t.get(i, j)).abs() <= tol);
            ok &= ct.iter().zip(vt).all(|(&j, &a)| (a - self.get(i, j)).abs() <= tol);
            ok
        })
    }

    /// Replaces row `i` by the unit row `e_i` (the diagonal must be present).
    pub fn set_identity_row(&mut self, i: usize) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        for k in lo..hi {
            self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}

/// Assembles a block matrix; `None` blocks are zero. Every block row and
/// block column needs at least one present block to fix its size.
pub fn block_compose(blocks: &[Vec<Option<&SparseMatrix>>]) -> Result<SparseMatrix> {
    let nbr = blocks.len();
    let nbc = blocks.first().map_or(0, Vec::len);
    if nbr == 0 || nbc == 0 || blocks.iter().any(|r| r.len() != nbc) {
        return Err(invalid("block grid must be a non-empty rectangle"));
    }
    let mut heights = vec![None; nbr];
    let mut widths = vec![None; nbc];
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            let Some(m) = blk else { continue };
            for (slot, size, what) in [(&mut heights[bi], m.nrows, "rows"), (&mut widths[bj], m.ncols, "columns")] {
                match slot {
                    Some(s) if *s != size => {
                        return Err(invalid(format!("block ({bi}, {bj}) has {size} {what}, expected {s}")))
                    }
                    _ => *slot = Some(size),
                }
            }
        }
    }
    let heights: Vec<usize> = heights
        .into_iter()
        .enumerate()
        .map(|(i, h)| h.ok_or_else(|| invalid(format!("block row {i} is empty"))))
        .collect::<Result<_>>()?;
    let widths: Vec<usize> = widths
        .into_iter()
        .enumerate()
        .map(|(j, w)| w.ok_or_else(|| invalid(format!("block column {j} is empty"))))
        .collect::<Result<_>>()?;
    let row_off: Vec<usize> = offsets(&heights);
    let col_off: Vec<usize> = offsets(&widths);
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            let Some(m) = blk else { continue };
            for i in 0..m.nrows {
                let (cols, vals) = m.row(i);
                for (&j, &x) in cols.iter().zip(vals) {
                    r.push(row_off[bi] + i);
                    c.push(col_off[bj] + j);
                    v.push(x);
                }
            }
        }
    }
    SparseMatrix::from_triplets(&r, &c, &v, (row_off[nbr], col_off[nbc]))
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

/// Column-compressed copy in the layout faer expects.
struct Csc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csc {
    fn from_csr(m: &SparseMatrix) -> Self {
        let t = m.transpose();
        Csc { n: m.nrows, col_ptr: t.row_ptr, row_idx: t.col_idx, values: t.values }
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Sparse LU factors together with the matrix they came from (kept for
/// iterative refinement and the residual check).
pub struct Factorization {
    lu: Lu<usize, f64>,
    matrix: SparseMatrix,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.matrix.nrows).field("nnz", &self.matrix.nnz()).finish()
    }
}

fn check_square(m: &SparseMatrix) -> Result<()> {
    if m.nrows != m.ncols {
        return Err(invalid(format!("cannot factor a {}x{} matrix", m.nrows, m.ncols)));
    }
    Ok(())
}

fn map_lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => Error::Singular { pivot: index },
        LuError::Generic(g) => Error::Factorization(format!("{g:?}")),
    }
}

/// Factors `m` with a fresh fill-reducing ordering.
pub fn factor(m: &SparseMatrix) -> Result<Factorization> {
    LuCache::default().factor(m)
}

/// Reuses the symbolic analysis while the sparsity pattern stays fixed.
#[derive(Default)]
pub struct LuCache {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LuCache {
    pub fn factor(&mut self, m: &SparseMatrix) -> Result<Factorization> {
        check_square(m)?;
        faer::set_global_parallelism(faer::Par::Seq);
        let csc = Csc::from_csr(m);
        let reuse = matches!(&self.symbolic, Some((p, i, _)) if *p == csc.col_ptr && *i == csc.row_idx);
        if !reuse {
            let sym = SymbolicLu::try_new(csc.symbolic()).map_err(|e| Error::Factorization(format!("{e:?}")))?;
            self.symbolic = Some((csc.col_ptr.clone(), csc.row_idx.clone(), sym));
        }
        let sym = self.symbolic.as_ref().unwrap().2.clone();
        let lu = Lu::try_new_with_symbolic(sym, SparseColMatRef::new(csc.symbolic(), &csc.values))
            .map_err(map_lu_error)?;
        let f = Factorization { lu, matrix: m.clone() };
        // a zero pivot survives numeric factorization as inf/nan in the factors
        let probe = f.raw_solve(&vec![1.0; m.nrows]);
        if let Some(pivot) = probe.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { pivot });
        }
        Ok(f)
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Solves `A x = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(invalid(format!("right-hand side of length {} for a {}-system", b.len(), self.dim())));
        }
        let mut x = self.raw_solve(b);
        let mut r = b.to_vec();
        self.matrix.matvec_add(-1.0, &x, &mut r);
        let dx = self.raw_solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { pivot });
        }
        #[cfg(debug_assertions)]
        {
            let mut r = b.to_vec();
            self.matrix.matvec_add(-1.0, &x, &mut r);
            let rn = inf_norm(&r);
            let bound = 1e-10 * (self.matrix.norm_inf() * inf_norm(&x) + inf_norm(b));
            debug_assert!(rn <= bound.max(f64::MIN_POSITIVE), "solve residual {rn:e} exceeds {bound:e}");
        }
        Ok(x)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
