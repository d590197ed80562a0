//! Assembly of `H = GᵀG − diag(w∘g)` and its sparse `LDLᵀ` factorization.
//!
//! The factorization itself is delegated to faer's simplicial/supernodal
//! Cholesky machinery with an approximate-minimum-degree ordering. The
//! symbolic analysis depends only on the sparsity pattern, which is fixed by
//! the game, so [`LdlSymbolic`] is computed once and reused every iteration.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::prelude::*;
use faer::sparse::linalg::cholesky::supernodal::SupernodalLdltRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymbolicCholeskyRaw,
    SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

const NEAR_ZERO_PIVOT: f64 = 1e-12;
const DENSE_FALLBACK_MAX: usize = 500;

/// Lower triangle of a symmetric matrix in compressed columns; the diagonal
/// entry is stored first in every column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from lower-triangle triplets `(row ≥ col)`; duplicates are summed
    /// and every diagonal is present.
    pub fn from_lower_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cols: Vec<Vec<(usize, f64)>> = (0..n).map(|j| vec![(j, 0.0)]).collect();
        for &(r, c, v) in entries {
            if r >= n || c >= n || r < c {
                return Err(Error::Dimension(format!("entry ({r},{c}) not in lower triangle of {n}x{n}")));
            }
            cols[c].push((r, v));
        }
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for col in &mut cols {
            col[1..].sort_by_key(|e| e.0);
            let start = row_idx.len();
            for &(r, v) in col.iter() {
                if row_idx.len() > start && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else if r == row_idx.get(start).copied().unwrap_or(usize::MAX) {
                    values[start] += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Lower triangle of a dense symmetric matrix, keeping nonzeros only.
    pub fn from_dense(a: &Mat<f64>) -> Self {
        let n = a.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in j + 1..n {
                if a[(i, j)] != 0.0 {
                    entries.push((i, j, a[(i, j)]));
                }
            }
            entries.push((j, j, a[(j, j)]));
        }
        Self::from_lower_triplets(n, &entries).expect("valid by construction")
    }

    /// Stored entries of the lower triangle, diagonal included.
    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Structural nonzeros of the full symmetric matrix divided by `n²`.
    pub fn fill_fraction(&self) -> f64 {
        let full = 2 * self.nnz_lower() - self.n;
        full as f64 / (self.n as f64 * self.n as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.values[self.col_ptr[j]]).collect()
    }

    /// `y = H x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let (r, v) = (self.row_idx[k], self.values[k]);
                y[r] += v * x[j];
                if r != j {
                    y[j] += v * x[r];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.row_idx[k];
                m[(r, j)] = self.values[k];
                m[(j, r)] = self.values[k];
            }
        }
        m
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.symbolic_faer(), &self.values)
    }

    fn symbolic_faer(&self) -> SymbolicSparseColMatRef<'_, usize> {
        // SAFETY: col_ptr is non-decreasing, ends at row_idx.len(), and every
        // row index is below n; rows within a column are strictly increasing.
        unsafe { SymbolicSparseColMatRef::new_unchecked(self.n, self.n, &self.col_ptr, None, &self.row_idx) }
    }
}

/// Precomputed lower pattern of `GᵀG` plus the diagonal, for repeated assembly.
#[derive(Debug, Clone)]
pub struct HAssembler {
    nrows_g: usize,
    pattern: SparseSymmetric,
}

impl HAssembler {
    pub fn new(g: &CscMatrix) -> Self {
        let n = g.ncols;
        let (rptr, rcols) = g.row_pattern();
        let mut mark = vec![usize::MAX; n];
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut buf = Vec::new();
        for j in 0..n {
            buf.clear();
            mark[j] = j;
            for &r in &g.row_idx[g.col_ptr[j]..g.col_ptr[j + 1]] {
                let cols = &rcols[rptr[r]..rptr[r + 1]];
                let from = cols.partition_point(|&k| k <= j);
                for &k in &cols[from..] {
                    if mark[k] != j {
                        mark[k] = j;
                        buf.push(k);
                    }
                }
            }
            buf.sort_unstable();
            row_idx.push(j);
            row_idx.extend_from_slice(&buf);
            col_ptr.push(row_idx.len());
        }
        let values = vec![0.0; row_idx.len()];
        Self { nrows_g: g.nrows, pattern: SparseSymmetric { n, col_ptr, row_idx, values } }
    }

    pub fn pattern(&self) -> &SparseSymmetric {
        &self.pattern
    }

    /// `H_jk = ∇g_jᵀ∇g_k − [j=k] w_j g_j`.
    pub fn assemble(&self, g: &CscMatrix, gval: &[f64], w: &[f64]) -> Result<SparseSymmetric> {
        let n = self.pattern.n;
        if g.ncols != n || g.nrows != self.nrows_g || gval.len() != n || w.len() != n {
            return Err(Error::Dimension("H assembly inputs disagree in size".into()));
        }
        if let Some(j) = w.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Argument(format!("weight w[{j}] = {} is not positive", w[j])));
        }
        let mut h = self.pattern.clone();
        let mut work = vec![0.0; g.nrows];
        for j in 0..n {
            let (rj, vj) = g.col(j);
            for (&r, &v) in rj.iter().zip(vj) {
                work[r] = v;
            }
            let range = h.col_ptr[j]..h.col_ptr[j + 1];
            for p in range {
                let k = h.row_idx[p];
                let (rk, vk) = g.col(k);
                let mut s = 0.0;
                for (&r, &v) in rk.iter().zip(vk) {
                    s += work[r] * v;
                }
                h.values[p] = s;
            }
            h.values[h.col_ptr[j]] -= w[j] * gval[j];
            for &r in rj {
                work[r] = 0.0;
            }
        }
        Ok(h)
    }
}

/// One-shot assembly of `H` from gradients `G`, constraint values and weights.
pub fn build_h(g: &CscMatrix, gval: &[f64], w: &[f64]) -> Result<SparseSymmetric> {
    HAssembler::new(g).assemble(g, gval, w)
}

/// Fill-reducing ordering and elimination structure for a fixed pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    inner: Arc<SymbolicCholesky<usize>>,
    n: usize,
}

impl LdlSymbolic {
    /// AMD-ordered analysis of the pattern of `h`.
    pub fn analyze(h: &SparseSymmetric) -> Result<Self> {
        Self::analyze_with(h, true)
    }

    /// Analysis with or without the fill-reducing ordering.
    pub fn analyze_with(h: &SparseSymmetric, reorder: bool) -> Result<Self> {
        // faer's Identity ordering skips the lower-to-upper conversion, so the
        // unordered analysis goes through an explicit identity permutation
        let ident: Vec<usize> = (0..h.n).collect();
        let ord = if reorder {
            SymmetricOrdering::Amd
        } else {
            SymmetricOrdering::Custom(faer::perm::PermRef::new_checked(&ident, &ident, h.n))
        };
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::AUTO,
            ..Default::default()
        };
        let inner = factorize_symbolic_cholesky(h.symbolic_faer(), Side::Lower, ord, params)
            .map_err(|e| Error::Numeric(format!("symbolic analysis: {e:?}")))?;
        Ok(Self { inner: Arc::new(inner), n: h.n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor, diagonal included.
    pub fn factor_len(&self) -> usize {
        self.inner.len_val()
    }

    pub fn is_supernodal(&self) -> bool {
        matches!(self.inner.raw(), SymbolicCholeskyRaw::Supernodal(_))
    }

    /// Fill-reducing permutation as `perm[new] = old`, if any.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        self.inner.perm().map(|p| p.arrays().0.to_vec())
    }
}

#[derive(Debug)]
enum Backend {
    Sparse { symbolic: LdlSymbolic, values: Vec<f64> },
    Dense { lu: faer::linalg::solvers::PartialPivLu<f64> },
}

/// `P H Pᵀ = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Debug)]
pub struct LdlFactors {
    backend: Backend,
    n: usize,
    d: Vec<f64>,
    max_abs_h: f64,
    near_zero: Vec<usize>,
    solves: AtomicUsize,
}

/// Factorizes `h` from scratch.
pub fn factor(h: &SparseSymmetric) -> Result<LdlFactors> {
    factor_with(&LdlSymbolic::analyze(h)?, h)
}

/// Factorizes `h`, whose pattern must match the one `symbolic` was built from.
pub fn factor_with(symbolic: &LdlSymbolic, h: &SparseSymmetric) -> Result<LdlFactors> {
    if symbolic.n != h.n {
        return Err(Error::Dimension(format!("symbolic size {} vs matrix size {}", symbolic.n, h.n)));
    }
    let n = h.n;
    let max_abs_h = h.max_abs();
    let par = faer::get_global_parallelism();
    let sym = &symbolic.inner;
    let mut values = vec![0.0; sym.len_val()];
    let scratch = sym.factorize_numeric_ldlt_scratch::<f64>(par, Default::default());
    let mut mem = MemBuffer::try_new(scratch).map_err(|_| Error::Numeric("out of memory".into()))?;
    let res = sym.factorize_numeric_ldlt::<f64>(
        &mut values,
        h.as_faer(),
        Side::Lower,
        LdltRegularization::default(),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    );
    let d = match res {
        Ok(_) => extract_d(sym, &values),
        Err(e) => return dense_or_fail(h, max_abs_h, 0, &format!("{e:?}")),
    };
    let perm = symbolic.permutation();
    if let Some(k) = d.iter().position(|v| !v.is_finite() || *v == 0.0) {
        let pivot = perm.as_ref().map_or(k, |p| p[k]);
        return dense_or_fail(h, max_abs_h, pivot, "zero or non-finite pivot");
    }
    let near_zero = near_zero_pivots(&d, max_abs_h, perm.as_deref());
    Ok(LdlFactors {
        backend: Backend::Sparse { symbolic: symbolic.clone(), values },
        n,
        d,
        max_abs_h,
        near_zero,
        solves: AtomicUsize::new(0),
    })
}

fn near_zero_pivots(d: &[f64], max_abs_h: f64, perm: Option<&[usize]>) -> Vec<usize> {
    d.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() < NEAR_ZERO_PIVOT * max_abs_h)
        .map(|(k, _)| perm.map_or(k, |p| p[k]))
        .collect()
}

fn dense_or_fail(h: &SparseSymmetric, max_abs_h: f64, pivot: usize, reason: &str) -> Result<LdlFactors> {
    if h.n > DENSE_FALLBACK_MAX {
        return Err(Error::Factorization { pivot, reason: reason.to_string() });
    }
    let a = h.to_dense();
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let d: Vec<f64> = (0..h.n).map(|i| u[(i, i)]).collect();
    if let Some(k) = d.iter().position(|v| !v.is_finite() || *v == 0.0) {
        return Err(Error::Factorization { pivot: k, reason: format!("{reason}; dense fallback singular") });
    }
    let near_zero = near_zero_pivots(&d, max_abs_h, None);
    Ok(LdlFactors {
        backend: Backend::Dense { lu },
        n: h.n,
        d,
        max_abs_h,
        near_zero,
        solves: AtomicUsize::new(0),
    })
}

fn extract_d(sym: &SymbolicCholesky<usize>, values: &[f64]) -> Vec<f64> {
    let n = sym.nrows();
    let mut d = vec![0.0; n];
    match sym.raw() {
        SymbolicCholeskyRaw::Simplicial(s) => {
            let cp = s.col_ptr();
            for j in 0..n {
                d[j] = values[cp[j]];
            }
        }
        SymbolicCholeskyRaw::Supernodal(s) => {
            let f = SupernodalLdltRef::new(s, values);
            for k in 0..s.n_supernodes() {
                let node = f.supernode(k);
                let val = node.val();
                for c in 0..val.ncols() {
                    d[node.start() + c] = val[(c, c)];
                }
            }
        }
    }
    d
}

impl LdlFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal of `D` in factor (permuted) order.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Original indices of pivots with `|D_jj| < 1e-12·max|H|`.
    pub fn near_zero_pivots(&self) -> &[usize] {
        &self.near_zero
    }

    pub fn max_abs_h(&self) -> f64 {
        self.max_abs_h
    }

    pub fn is_dense_fallback(&self) -> bool {
        matches!(self.backend, Backend::Dense { .. })
    }

    /// Number of negative pivots (zero for a positive definite `H`).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    /// How many right-hand sides have been solved with this factorization.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Fill-reducing permutation `perm[new] = old`; `None` means identity.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        match &self.backend {
            Backend::Sparse { symbolic, .. } => symbolic.permutation(),
            Backend::Dense { .. } => None,
        }
    }

    /// Strictly lower entries of the unit factor `L` as `(row, col, value)`
    /// in permuted coordinates. Empty for the dense fallback.
    pub fn l_entries(&self) -> Vec<(usize, usize, f64)> {
        let Backend::Sparse { symbolic, values } = &self.backend else {
            return Vec::new();
        };
        let mut out = Vec::new();
        match symbolic.inner.raw() {
            SymbolicCholeskyRaw::Simplicial(s) => {
                let (cp, ri) = (s.col_ptr(), s.row_idx());
                for j in 0..self.n {
                    for k in cp[j]..cp[j + 1] {
                        if ri[k] != j {
                            out.push((ri[k], j, values[k]));
                        }
                    }
                }
            }
            SymbolicCholeskyRaw::Supernodal(s) => {
                let f = SupernodalLdltRef::new(s, values);
                for k in 0..s.n_supernodes() {
                    let node = f.supernode(k);
                    let (val, b, pattern) = (node.val(), node.start(), node.pattern());
                    let ncols = val.ncols();
                    for c in 0..ncols {
                        for r in c + 1..val.nrows() {
                            let row = if r < ncols { b + r } else { pattern[r - ncols] };
                            let v = val[(r, c)];
                            if v != 0.0 {
                                out.push((row, b + c, v));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Solves `H x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension(format!("rhs has {} entries, expected {}", b.len(), self.n)));
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        match &self.backend {
            Backend::Sparse { symbolic, values } => {
                let par = Par::Seq;
                let sym = &symbolic.inner;
                let mut mem = MemBuffer::try_new(sym.solve_in_place_scratch::<f64>(1, par))
                    .map_err(|_| Error::Numeric("out of memory".into()))?;
                LdltRef::new(sym, values).solve_in_place_with_conj(
                    Conj::No,
                    x.as_mut(),
                    par,
                    MemStack::new(&mut mem),
                );
            }
            Backend::Dense { lu } => {
                x = lu.solve(&x);
            }
        }
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite solution from LDL solve".into()));
        }
        Ok(out)
    }
}

/// Free-function form of [`LdlFactors::solve`].
pub fn solve(f: &LdlFactors, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}
