//! Sparse matrix storage and linear solution over real or complex scalars.
//!
//! The primary path is an unpivoted sparse LU specialized to structurally
//! symmetric matrices (the Galerkin systems assembled here always are): a
//! fill-reducing ordering is computed first (geometric nested dissection
//! when node coordinates are available, reverse Cuthill-McKee otherwise),
//! then the factorization proceeds column by column with elimination-tree
//! reaches, and solutions are polished by iterative refinement against the
//! original matrix. A GMRES(m) solver preconditioned by ILU(0) serves as a
//! fallback for runs whose factor would not fit the memory budget.

use crate::model::{Vec3, C64};
use crate::{Error, Result};
use std::fmt::{Debug, Display, LowerExp};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Scalar field for the linear algebra: f64 or Complex64.
pub trait Scalar:
    Copy
    + PartialEq
    + Debug
    + Display
    + LowerExp
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    /// Complex conjugate (identity for reals).
    fn conj(self) -> Self;
    /// Modulus |x|.
    fn modulus(self) -> f64;
    fn is_finite_scalar(self) -> bool;
    /// Matrix Market field name and (re, im) parts for the dump format.
    fn mm_field() -> &'static str;
    fn mm_parts(self) -> (f64, f64);
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
    fn mm_field() -> &'static str {
        "real"
    }
    fn mm_parts(self) -> (f64, f64) {
        (self, 0.0)
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        num_complex::Complex::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn is_finite_scalar(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn mm_field() -> &'static str {
        "complex"
    }
    fn mm_parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
}

/// Square sparse matrix in compressed-row storage with sorted, deduplicated
/// column indices per row.
#[derive(Debug, Clone)]
pub struct SparseMatrix<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(u32, u32, S)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r as usize >= n || c as usize >= n {
                return Err(Error::Solve(format!(
                    "triplet index ({r}, {c}) out of range for dimension {n}"
                )));
            }
        }
        // counting sort by row, then sort and merge columns within each row
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut order: Vec<u32> = vec![0; triplets.len()];
        {
            let mut next = counts.clone();
            for (idx, &(r, _, _)) in triplets.iter().enumerate() {
                order[next[r as usize]] = idx as u32;
                next[r as usize] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<S> = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row_buf: Vec<(u32, S)> = Vec::new();
        for r in 0..n {
            row_buf.clear();
            for &t in &order[counts[r]..counts[r + 1]] {
                let (_, c, v) = triplets[t as usize];
                row_buf.push((c, v));
            }
            row_buf.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row_buf.len() {
                let c = row_buf[i].0;
                let mut v = row_buf[i].1;
                i += 1;
                while i < row_buf.len() && row_buf[i].0 == c {
                    v += row_buf[i].1;
                    i += 1;
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[S]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn matvec(&self, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.n);
        for r in 0..self.n {
            let mut acc = S::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut d = vec![vec![S::zero(); self.n]; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r][self.cols[k] as usize] = self.vals[k];
            }
        }
        d
    }

    /// Dump in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate {} general", S::mm_field())?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (re, im) = self.vals[k].mm_parts();
                if S::mm_field() == "complex" {
                    writeln!(w, "{} {} {re:e} {im:e}", r + 1, self.cols[k] + 1)?;
                } else {
                    writeln!(w, "{} {} {re:e}", r + 1, self.cols[k] + 1)?;
                }
            }
        }
        Ok(())
    }
}

fn norm2<S: Scalar>(x: &[S]) -> f64 {
    x.iter().map(|v| v.modulus() * v.modulus()).sum::<f64>().sqrt()
}

fn dot_conj<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * *y;
    }
    acc
}

/// Solution method actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    DirectLu,
    GmresIlu,
}

/// Report attached to every solve; the residual is recomputed from the
/// returned solution, never taken from solver internals.
#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    pub residual_norm_relative: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub factor_nnz: usize,
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: MethodChoice,
    /// Per-unknown coordinates used by the nested-dissection ordering.
    pub coords: Option<Vec<Vec3>>,
    /// Budget for L+U values, in bytes; exceeding it aborts the direct
    /// factorization (and falls back to GMRES under `Auto`).
    pub direct_budget_bytes: usize,
    /// Budget on the predicted factorization work (multiply-adds). Repeated
    /// solves against one factor (time stepping) justify a larger budget.
    pub direct_flop_budget: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    pub gmres_tol: f64,
    /// Target relative residual for the direct path's refinement loop.
    pub refine_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Direct,
    Iterative,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: MethodChoice::Auto,
            coords: None,
            direct_budget_bytes: 2_400_000_000,
            direct_flop_budget: 2.0e10,
            gmres_restart: 120,
            gmres_max_iters: 20_000,
            gmres_tol: 1e-11,
            refine_tol: 1e-12,
        }
    }
}

/// Solve A x = b with default options (direct path).
pub fn solve<S: Scalar>(a: &SparseMatrix<S>, b: &[S]) -> Result<(Vec<S>, LinearSolveReport)> {
    let f = Factorization::new(a, &SolveOptions::default())?;
    f.solve(b)
}

// ---------------------------------------------------------------------------
// orderings
// ---------------------------------------------------------------------------

/// Symmetrized adjacency (pattern of A | A^T) in CSR form, no diagonal.
fn symmetrized_adjacency<S: Scalar>(a: &SparseMatrix<S>) -> (Vec<usize>, Vec<u32>) {
    let n = a.n;
    let mut counts = vec![0usize; n + 1];
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k] as usize;
            if c != r {
                counts[r + 1] += 1;
                counts[c + 1] += 1;
            }
        }
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut adj = vec![0u32; counts[n]];
    let mut next = counts.clone();
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k] as usize;
            if c != r {
                adj[next[r]] = c as u32;
                next[r] += 1;
                adj[next[c]] = r as u32;
                next[c] += 1;
            }
        }
    }
    // sort + dedup each row
    let mut ptr = vec![0usize; n + 1];
    let mut out = Vec::with_capacity(adj.len());
    for r in 0..n {
        let row = &mut adj[counts[r]..counts[r + 1]];
        row.sort_unstable();
        let mut last = u32::MAX;
        for &c in row.iter() {
            if c != last {
                out.push(c);
                last = c;
            }
        }
        ptr[r + 1] = out.len();
    }
    (ptr, out)
}

/// Geometric nested dissection: recursively bisect by coordinate median and
/// push the graph separator last. Returns the elimination order
/// (order[k] = original index eliminated at step k).
fn nested_dissection(ptr: &[usize], adj: &[u32], coords: &[Vec3]) -> Vec<u32> {
    let n = ptr.len() - 1;
    let mut order = Vec::with_capacity(n);
    let mut side = vec![0u8; n]; // 0: untouched, 1: in A, 2: in B
    let mut set: Vec<u32> = (0..n as u32).collect();
    recurse_nd(ptr, adj, coords, &mut set, &mut side, &mut order);
    order
}

fn recurse_nd(
    ptr: &[usize],
    adj: &[u32],
    coords: &[Vec3],
    set: &mut Vec<u32>,
    side: &mut [u8],
    order: &mut Vec<u32>,
) {
    if set.len() <= 48 {
        order.extend_from_slice(set);
        return;
    }
    // widest coordinate axis
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &v in set.iter() {
        let c = coords[v as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    // median split (stable: tie-break on index for determinism)
    set.sort_unstable_by(|&p, &q| {
        coords[p as usize][axis]
            .partial_cmp(&coords[q as usize][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p.cmp(&q))
    });
    let mid = set.len() / 2;
    for (i, &v) in set.iter().enumerate() {
        side[v as usize] = if i < mid { 1 } else { 2 };
    }
    // separator: members of A adjacent to B
    let mut part_a = Vec::with_capacity(mid);
    let mut part_b = Vec::with_capacity(set.len() - mid);
    let mut sep = Vec::new();
    for &v in set.iter() {
        if side[v as usize] == 1 {
            let mut boundary = false;
            for &w in &adj[ptr[v as usize]..ptr[v as usize + 1]] {
                if side[w as usize] == 2 {
                    boundary = true;
                    break;
                }
            }
            if boundary {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        } else {
            part_b.push(v);
        }
    }
    // reset side marks before recursing (children re-mark their own sets)
    for &v in set.iter() {
        side[v as usize] = 0;
    }
    if part_a.is_empty() || part_b.is_empty() {
        // degenerate split (coincident coordinates); fall back to plain order
        order.extend_from_slice(&part_a);
        order.extend_from_slice(&sep);
        order.extend_from_slice(&part_b);
        return;
    }
    recurse_nd(ptr, adj, coords, &mut part_a, side, order);
    recurse_nd(ptr, adj, coords, &mut part_b, side, order);
    order.extend_from_slice(&sep);
}

/// Reverse Cuthill-McKee on the symmetrized pattern (coordinate-free fallback).
fn reverse_cuthill_mckee(ptr: &[usize], adj: &[u32]) -> Vec<u32> {
    let n = ptr.len() - 1;
    let deg = |v: usize| ptr[v + 1] - ptr[v];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // lowest-degree unvisited vertex in this component would be ideal;
        // starting from `start` is fine for our purposes
        visited[start] = true;
        queue.push_back(start as u32);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<u32> = adj[ptr[v as usize]..ptr[v as usize + 1]]
                .iter()
                .copied()
                .filter(|&w| !visited[w as usize])
                .collect();
            nbrs.sort_unstable_by_key(|&w| (deg(w as usize), w));
            for w in nbrs {
                if !visited[w as usize] {
                    visited[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

// ---------------------------------------------------------------------------
// direct LU (structure-symmetric, unpivoted, fill-reducing ordering)
// ---------------------------------------------------------------------------

struct CscMatrix<S> {
    n: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<S>,
}

/// Build CSC of the permuted matrix P A P^T with the pattern symmetrized
/// (structural zeros inserted where A lacks the transposed entry).
fn permuted_csc<S: Scalar>(a: &SparseMatrix<S>, iperm: &[u32]) -> CscMatrix<S> {
    let n = a.n;
    let mut entries: Vec<(u32, u32, S)> = Vec::with_capacity(a.nnz() * 2);
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k] as usize;
            let (pr, pc) = (iperm[r], iperm[c]);
            entries.push((pc, pr, a.vals[k]));
            if r != c {
                // structural transpose entry with zero value
                entries.push((pr, pc, S::zero()));
            }
        }
    }
    entries.sort_unstable_by_key(|e| (e.0, e.1));
    let mut col_ptr = vec![0usize; n + 1];
    let mut rows = Vec::with_capacity(entries.len());
    let mut vals: Vec<S> = Vec::with_capacity(entries.len());
    let mut i = 0;
    for c in 0..n as u32 {
        while i < entries.len() && entries[i].0 == c {
            let r = entries[i].1;
            let mut v = S::zero();
            while i < entries.len() && entries[i].0 == c && entries[i].1 == r {
                v += entries[i].2;
                i += 1;
            }
            rows.push(r);
            vals.push(v);
        }
        col_ptr[c as usize + 1] = rows.len();
    }
    CscMatrix {
        n,
        col_ptr,
        rows,
        vals,
    }
}

/// Elimination tree of a symmetric-pattern CSC matrix (Liu's algorithm).
fn elimination_tree(c: &CscMatrix<impl Scalar>) -> Vec<i64> {
    let n = c.n;
    let mut parent = vec![-1i64; n];
    let mut ancestor = vec![-1i64; n];
    for k in 0..n {
        for p in c.col_ptr[k]..c.col_ptr[k + 1] {
            let mut i = c.rows[p] as i64;
            while i != -1 && (i as usize) < k {
                let next = ancestor[i as usize];
                ancestor[i as usize] = k as i64;
                if next == -1 {
                    parent[i as usize] = k as i64;
                    break;
                }
                i = next;
            }
        }
    }
    parent
}

/// Exact per-column fill counts of the no-pivot factor (pattern of L below
/// the diagonal), via elimination-tree reaches. O(nnz(L)) time, O(n) space.
fn symbolic_counts(c: &CscMatrix<impl Scalar>, parent: &[i64]) -> Vec<usize> {
    let n = c.n;
    let mut counts = vec![0usize; n];
    let mut stamp = vec![u32::MAX; n];
    for k in 0..n {
        let kk = k as u32;
        stamp[k] = kk;
        for p in c.col_ptr[k]..c.col_ptr[k + 1] {
            let mut i = c.rows[p] as usize;
            if i >= k {
                continue;
            }
            // row k of L has an entry in every column on the etree path
            while stamp[i] != kk {
                stamp[i] = kk;
                counts[i] += 1;
                match parent[i] {
                    -1 => break,
                    pi if (pi as usize) >= k => break,
                    pi => i = pi as usize,
                }
            }
        }
    }
    counts
}

/// Factors of P A P^T = L D U with unit-diagonal L (CSC, below diagonal) and
/// unit-diagonal U (CSC, above diagonal).
pub struct Factorization<S> {
    n: usize,
    perm: Vec<u32>,
    l_colptr: Vec<usize>,
    l_rows: Vec<u32>,
    l_vals: Vec<S>,
    u_colptr: Vec<usize>,
    u_rows: Vec<u32>,
    u_vals: Vec<S>,
    diag: Vec<S>,
    refine_tol: f64,
    matrix: SparseMatrix<S>,
}

impl<S: Scalar> Factorization<S> {
    /// Order, factorize, and keep a copy of A for refinement/residuals.
    pub fn new(a: &SparseMatrix<S>, opts: &SolveOptions) -> Result<Self> {
        let n = a.n;
        let (ptr, adj) = symmetrized_adjacency(a);
        let order = match &opts.coords {
            Some(c) if c.len() == n => nested_dissection(&ptr, &adj, c),
            _ => reverse_cuthill_mckee(&ptr, &adj),
        };
        let mut iperm = vec![0u32; n];
        for (new, &old) in order.iter().enumerate() {
            iperm[old as usize] = new as u32;
        }
        let ap = permuted_csc(a, &iperm);
        let parent = elimination_tree(&ap);
        // exact fill prediction; refuse fast if the factor will not fit
        let counts = symbolic_counts(&ap, &parent);
        let fill: usize = counts.iter().sum();
        let bytes_per_entry = std::mem::size_of::<S>() + 4;
        let predicted = 2 * fill * bytes_per_entry + n * std::mem::size_of::<S>();
        if predicted > opts.direct_budget_bytes {
            return Err(Error::Solve(format!(
                "predicted factor size {:.2} GB exceeds the direct budget {:.2} GB \
                 ({} fill entries per triangle)",
                predicted as f64 / 1e9,
                opts.direct_budget_bytes as f64 / 1e9,
                fill
            )));
        }
        let flops: f64 = counts.iter().map(|&c| 2.0 * (c as f64) * (c as f64)).sum();
        if flops > opts.direct_flop_budget {
            return Err(Error::Solve(format!(
                "predicted factorization work {flops:.2e} exceeds the budget {:.2e}",
                opts.direct_flop_budget
            )));
        }

        let mut l_colptr = vec![0usize; n + 1];
        let mut l_rows: Vec<u32> = Vec::with_capacity(fill);
        let mut l_vals: Vec<S> = Vec::with_capacity(fill);
        let mut u_colptr = vec![0usize; n + 1];
        let mut u_rows: Vec<u32> = Vec::with_capacity(fill);
        let mut u_vals: Vec<S> = Vec::with_capacity(fill);
        let mut diag = vec![S::zero(); n];

        let mut x = vec![S::zero(); n];
        let mut stamp = vec![u32::MAX; n];
        let mut reach: Vec<u32> = Vec::with_capacity(n);
        let mut lower: Vec<u32> = Vec::with_capacity(n);
        // per-column split index: first entry of Lcol j with row >= current k;
        // advances monotonically because k increases
        let mut l_split = vec![0usize; n];

        for k in 0..n {
            let kk = k as u32;
            reach.clear();
            lower.clear();
            stamp[k] = kk;
            // scatter column k of Ap; collect lower rows and walk the etree
            for p in ap.col_ptr[k]..ap.col_ptr[k + 1] {
                let r = ap.rows[p] as usize;
                x[r] = ap.vals[p];
                if r > k && stamp[r] != kk {
                    stamp[r] = kk;
                    lower.push(r as u32);
                }
            }
            // ereach: pattern of the upper column = etree reach of upper rows
            for p in ap.col_ptr[k]..ap.col_ptr[k + 1] {
                let mut i = ap.rows[p] as usize;
                if i >= k {
                    continue;
                }
                while stamp[i] != kk {
                    stamp[i] = kk;
                    reach.push(i as u32);
                    match parent[i] {
                        -1 => break,
                        pi if (pi as usize) >= k => break,
                        pi => i = pi as usize,
                    }
                }
            }
            // topological order: ascending (etree parents have larger indices)
            reach.sort_unstable();
            // left-looking updates; x[j] carries y_j = d_j U[j,k]
            for &ju in reach.iter() {
                let j = ju as usize;
                let yj = x[j];
                u_rows.push(ju);
                u_vals.push(yj / diag[j]);
                x[j] = S::zero();
                if yj == S::zero() {
                    continue;
                }
                let (c0, c1) = (l_colptr[j], l_colptr[j + 1]);
                // advance the cached split to the first row >= k
                let mut s = l_split[j].max(c0);
                while s < c1 && (l_rows[s] as usize) < k {
                    s += 1;
                }
                l_split[j] = s;
                // rows < k: guaranteed already in the reach, plain axpy
                for p in c0..s {
                    x[l_rows[p] as usize] -= l_vals[p] * yj;
                }
                // rows >= k: may create fill below the diagonal
                for p in s..c1 {
                    let i = l_rows[p] as usize;
                    if stamp[i] != kk {
                        stamp[i] = kk;
                        lower.push(i as u32);
                        x[i] = S::zero();
                    }
                    x[i] -= l_vals[p] * yj;
                }
            }
            u_colptr[k + 1] = u_rows.len();
            let d = x[k];
            x[k] = S::zero();
            if d.modulus() == 0.0 || !d.is_finite_scalar() {
                return Err(Error::Solve(format!(
                    "zero or non-finite pivot at elimination step {k} (unknown {})",
                    order[k]
                )));
            }
            diag[k] = d;
            lower.sort_unstable();
            for &iu in lower.iter() {
                let i = iu as usize;
                l_rows.push(iu);
                l_vals.push(x[i] / d);
                x[i] = S::zero();
            }
            l_colptr[k + 1] = l_rows.len();
        }

        Ok(Factorization {
            n,
            perm: order,
            l_colptr,
            l_rows,
            l_vals,
            u_colptr,
            u_rows,
            u_vals,
            diag,
            refine_tol: opts.refine_tol,
            matrix: a.clone(),
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_rows.len() + self.u_rows.len() + self.n
    }

    fn solve_factored(&self, b: &[S], x: &mut [S]) {
        let n = self.n;
        let mut y = vec![S::zero(); n];
        for k in 0..n {
            y[k] = b[self.perm[k] as usize];
        }
        // forward: L y = Pb (unit lower, column-oriented)
        for k in 0..n {
            let yk = y[k];
            if yk != S::zero() {
                for p in self.l_colptr[k]..self.l_colptr[k + 1] {
                    y[self.l_rows[p] as usize] -= self.l_vals[p] * yk;
                }
            }
        }
        // diagonal
        for k in 0..n {
            y[k] = y[k] / self.diag[k];
        }
        // backward: U z = y (unit upper, column-oriented)
        for k in (0..n).rev() {
            let zk = y[k];
            if zk != S::zero() {
                for p in self.u_colptr[k]..self.u_colptr[k + 1] {
                    y[self.u_rows[p] as usize] -= self.u_vals[p] * zk;
                }
            }
        }
        for k in 0..n {
            x[self.perm[k] as usize] = y[k];
        }
    }

    /// Solve with iterative refinement; residual recomputed from A.
    pub fn solve(&self, b: &[S]) -> Result<(Vec<S>, LinearSolveReport)> {
        let n = self.n;
        let bnorm = norm2(b);
        let mut x = vec![S::zero(); n];
        if bnorm == 0.0 {
            return Ok((
                x,
                LinearSolveReport {
                    residual_norm_relative: 0.0,
                    iterations: 0,
                    method: SolveMethod::DirectLu,
                    factor_nnz: self.factor_nnz(),
                },
            ));
        }
        self.solve_factored(b, &mut x);
        let mut r = vec![S::zero(); n];
        let mut corr = vec![S::zero(); n];
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            self.matrix.matvec(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            rel = norm2(&r) / bnorm;
            if rel <= self.refine_tol {
                break;
            }
            self.solve_factored(&r, &mut corr);
            for i in 0..n {
                x[i] += corr[i];
            }
        }
        if !rel.is_finite() || rel > 1e-8 {
            return Err(Error::Solve(format!(
                "direct solve residual {rel:.3e} exceeds 1e-8"
            )));
        }
        Ok((
            x,
            LinearSolveReport {
                residual_norm_relative: rel,
                iterations: 0,
                method: SolveMethod::DirectLu,
                factor_nnz: self.factor_nnz(),
            },
        ))
    }
}

// ---------------------------------------------------------------------------
// ILU(0) + GMRES fallback
// ---------------------------------------------------------------------------

/// Zero-fill incomplete LU on the matrix's own pattern.
pub struct Ilu0<S> {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
    diag_idx: Vec<usize>,
}

impl<S: Scalar> Ilu0<S> {
    pub fn new(a: &SparseMatrix<S>) -> Result<Self> {
        let n = a.n;
        let row_ptr = a.row_ptr.clone();
        let cols = a.cols.clone();
        let mut vals = a.vals.clone();
        let mut diag_idx = vec![usize::MAX; n];
        for r in 0..n {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if cols[k] as usize == r {
                    diag_idx[r] = k;
                }
            }
            if diag_idx[r] == usize::MAX {
                return Err(Error::Solve(format!("ILU(0): empty diagonal at row {r}")));
            }
        }
        for i in 0..n {
            let (ri0, ri1) = (row_ptr[i], row_ptr[i + 1]);
            for ki in ri0..ri1 {
                let k = cols[ki] as usize;
                if k >= i {
                    break;
                }
                let dk = vals[diag_idx[k]];
                if dk.modulus() == 0.0 {
                    return Err(Error::Solve(format!("ILU(0): zero pivot at row {k}")));
                }
                let lik = vals[ki] / dk;
                vals[ki] = lik;
                if lik == S::zero() {
                    continue;
                }
                // subtract lik * row k from row i on the shared pattern
                let (rk0, rk1) = (row_ptr[k], row_ptr[k + 1]);
                let mut pk = rk0;
                // advance to the first column > k in row k
                while pk < rk1 && cols[pk] as usize <= k {
                    pk += 1;
                }
                let mut pi = ki + 1;
                while pk < rk1 && pi < ri1 {
                    let ck = cols[pk];
                    let ci = cols[pi];
                    if ck == ci {
                        let upd = lik * vals[pk];
                        vals[pi] -= upd;
                        pk += 1;
                        pi += 1;
                    } else if ck < ci {
                        pk += 1;
                    } else {
                        pi += 1;
                    }
                }
            }
        }
        Ok(Ilu0 {
            row_ptr,
            cols,
            vals,
            diag_idx,
        })
    }

    /// z = (LU)^{-1} r.
    pub fn apply(&self, r: &[S], z: &mut [S]) {
        let n = self.diag_idx.len();
        // forward solve (unit lower part)
        for i in 0..n {
            let mut acc = r[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.cols[k] as usize;
                if c >= i {
                    break;
                }
                acc -= self.vals[k] * z[c];
            }
            z[i] = acc;
        }
        // backward solve (upper incl. diagonal)
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in (self.diag_idx[i] + 1)..self.row_ptr[i + 1] {
                acc -= self.vals[k] * z[self.cols[k] as usize];
            }
            z[i] = acc / self.vals[self.diag_idx[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES on the symmetrically Jacobi-scaled
/// system (the assembled blocks mix units spanning many orders of magnitude,
/// which would otherwise cripple the ILU factors).
pub fn gmres<S: Scalar>(
    a_raw: &SparseMatrix<S>,
    b_raw: &[S],
    opts: &SolveOptions,
) -> Result<(Vec<S>, LinearSolveReport)> {
    let n = a_raw.n;
    let bnorm_raw = norm2(b_raw);
    if bnorm_raw == 0.0 {
        return Ok((
            vec![S::zero(); n],
            LinearSolveReport {
                residual_norm_relative: 0.0,
                iterations: 0,
                method: SolveMethod::GmresIlu,
                factor_nnz: 0,
            },
        ));
    }
    // symmetric diagonal scaling: As = D^-1 A D^-1, with D = sqrt(|diag|)
    let mut dscale = vec![1.0f64; n];
    for r in 0..n {
        for k in a_raw.row_ptr[r]..a_raw.row_ptr[r + 1] {
            if a_raw.cols[k] as usize == r {
                let m = a_raw.vals[k].modulus();
                if m > 0.0 {
                    dscale[r] = m.sqrt();
                }
            }
        }
    }
    let mut a = a_raw.clone();
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k] as usize;
            a.vals[k] = a.vals[k] * S::from_f64(1.0 / (dscale[r] * dscale[c]));
        }
    }
    let b: Vec<S> = (0..n).map(|i| b_raw[i] * S::from_f64(1.0 / dscale[i])).collect();
    let bnorm = norm2(&b);
    let mut x = vec![S::zero(); n];
    let prec = Ilu0::new(&a)?;
    let m = opts.gmres_restart.max(4);
    let mut total_iters = 0usize;
    let mut work = vec![S::zero(); n];
    let mut z = vec![S::zero(); n];

    'outer: loop {
        // residual
        a.matvec(&x, &mut work);
        let mut r: Vec<S> = (0..n).map(|i| b[i] - work[i]).collect();
        let beta = norm2(&r);
        if beta / bnorm <= opts.gmres_tol {
            break;
        }
        if total_iters >= opts.gmres_max_iters {
            return Err(Error::Solve(format!(
                "GMRES failed to converge in {} iterations (residual {:.3e})",
                total_iters,
                beta / bnorm
            )));
        }
        for v in r.iter_mut() {
            *v = *v * S::from_f64(1.0 / beta);
        }
        let mut basis: Vec<Vec<S>> = vec![r];
        let mut h = vec![vec![S::zero(); 0]; 0];
        let mut cs: Vec<S> = Vec::new();
        let mut sn: Vec<S> = Vec::new();
        let mut g: Vec<S> = vec![S::from_f64(beta)];

        for j in 0..m {
            prec.apply(&basis[j], &mut z);
            a.matvec(&z, &mut work);
            let mut hcol = vec![S::zero(); j + 2];
            let mut w = work.clone();
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot_conj(vi, &w);
                hcol[i] = hij;
                for t in 0..n {
                    w[t] -= hij * vi[t];
                }
            }
            let hn = norm2(&w);
            hcol[j + 1] = S::from_f64(hn);
            // apply accumulated Givens rotations
            for i in 0..j {
                let t = cs[i].conj() * hcol[i] + sn[i].conj() * hcol[i + 1];
                let u = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = t;
                hcol[i + 1] = u;
            }
            // new rotation to zero hcol[j+1]
            let (c, s) = {
                let p = hcol[j];
                let q = hcol[j + 1];
                let denom = (p.modulus() * p.modulus() + q.modulus() * q.modulus()).sqrt();
                if denom == 0.0 {
                    (S::one(), S::zero())
                } else {
                    (
                        p * S::from_f64(1.0 / denom),
                        q * S::from_f64(1.0 / denom),
                    )
                }
            };
            let t = c.conj() * hcol[j] + s.conj() * hcol[j + 1];
            hcol[j] = t;
            hcol[j + 1] = S::zero();
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c.conj() * gj;
            g.push(-s * gj);
            h.push(hcol);
            total_iters += 1;

            let res_est = g[j + 1].modulus() / bnorm;
            let breakdown = hn < 1e-300;
            if res_est <= opts.gmres_tol * 0.5 || j + 1 == m || breakdown || total_iters >= opts.gmres_max_iters {
                // solve the small triangular system and update x
                let dim = j + 1;
                let mut yk = vec![S::zero(); dim];
                for i in (0..dim).rev() {
                    let mut acc = g[i];
                    for l in (i + 1)..dim {
                        acc -= h[l][i] * yk[l];
                    }
                    yk[i] = acc / h[i][i];
                }
                // x += M^{-1} (V y)
                let mut vy = vec![S::zero(); n];
                for (l, yl) in yk.iter().enumerate() {
                    if *yl != S::zero() {
                        for t in 0..n {
                            vy[t] += basis[l][t] * *yl;
                        }
                    }
                }
                prec.apply(&vy, &mut z);
                for t in 0..n {
                    x[t] += z[t];
                }
                if breakdown {
                    break 'outer;
                }
                continue 'outer;
            }
            for v in w.iter_mut() {
                *v = *v * S::from_f64(1.0 / hn);
            }
            basis.push(w);
        }
    }

    // unscale and recompute the residual against the original system
    for i in 0..n {
        x[i] = x[i] * S::from_f64(1.0 / dscale[i]);
    }
    a_raw.matvec(&x, &mut work);
    let mut rfin = 0.0;
    for i in 0..n {
        let d = b_raw[i] - work[i];
        rfin += d.modulus() * d.modulus();
    }
    let rel = rfin.sqrt() / bnorm_raw;
    if rel > 1e-8 {
        return Err(Error::Solve(format!(
            "GMRES converged residual {rel:.3e} exceeds 1e-8"
        )));
    }
    Ok((
        x,
        LinearSolveReport {
            residual_norm_relative: rel,
            iterations: total_iters,
            method: SolveMethod::GmresIlu,
            factor_nnz: 0,
        },
    ))
}

/// Solve honoring the method choice, with automatic fallback from the direct
/// path to GMRES/ILU when the factor memory budget is exceeded.
pub fn solve_with_options<S: Scalar>(
    a: &SparseMatrix<S>,
    b: &[S],
    opts: &SolveOptions,
) -> Result<(Vec<S>, LinearSolveReport)> {
    match opts.method {
        MethodChoice::Direct => Factorization::new(a, opts)?.solve(b),
        MethodChoice::Iterative => gmres(a, b, opts),
        MethodChoice::Auto => match Factorization::new(a, opts) {
            Ok(f) => f.solve(b),
            Err(_) => gmres(a, b, opts),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve_c64(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
        let n = b.len();
        for k in 0..n {
            // partial pivot
            let mut best = k;
            for r in k + 1..n {
                if a[r][k].norm() > a[best][k].norm() {
                    best = r;
                }
            }
            a.swap(k, best);
            b.swap(k, best);
            let piv = a[k][k];
            for r in k + 1..n {
                let f = a[r][k] / piv;
                for c in k..n {
                    let akc = a[k][c];
                    a[r][c] -= f * akc;
                }
                let bk = b[k];
                b[r] -= f * bk;
            }
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for k in (0..n).rev() {
            let mut acc = b[k];
            for c in k + 1..n {
                acc -= a[k][c] * x[c];
            }
            x[k] = acc / a[k][k];
        }
        x
    }

    fn xorshift(seed: &mut u64) -> f64 {
        *seed ^= *seed << 13;
        *seed ^= *seed >> 7;
        *seed ^= *seed << 17;
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        let (cols, vals) = m.row(0);
        assert_eq!(cols, &[0]);
        assert_eq!(vals, &[3.0]);
    }

    #[test]
    fn empty_triplets_zero_matrix() {
        let m = SparseMatrix::<f64>::from_triplets(3, &[]).unwrap();
        assert_eq!(m.nnz(), 0);
        let mut y = vec![1.0; 3];
        m.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(SparseMatrix::from_triplets(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn dense_reconstruction_matches_triplet_sum() {
        let mut seed = 42u64;
        let n = 50;
        let mut trips = Vec::new();
        let mut dense = vec![vec![0.0f64; n]; n];
        for _ in 0..600 {
            let r = (xorshift(&mut seed) * n as f64) as usize % n;
            let c = (xorshift(&mut seed) * n as f64) as usize % n;
            let v = xorshift(&mut seed) - 0.5;
            trips.push((r as u32, c as u32, v));
            dense[r][c] += v;
        }
        let m = SparseMatrix::from_triplets(n, &trips).unwrap();
        let d2 = m.to_dense();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(dense[r][c], d2[r][c]);
            }
        }
    }

    #[test]
    fn identity_system() {
        let n = 5;
        let trips: Vec<(u32, u32, f64)> = (0..n).map(|i| (i as u32, i as u32, 1.0)).collect();
        let m = SparseMatrix::from_triplets(n, &trips).unwrap();
        let b = vec![3.0, -1.0, 0.5, 2.0, 9.0];
        let (x, rep) = solve(&m, &b).unwrap();
        for i in 0..n {
            assert!((x[i] - b[i]).abs() < 1e-14);
        }
        assert!(rep.residual_norm_relative < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 3.0), (0, 1, 1.0)]).unwrap();
        let (x, rep) = solve(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(rep.residual_norm_relative, 0.0);
    }

    fn random_complex_system(n: usize, seed: u64) -> (SparseMatrix<C64>, Vec<C64>) {
        let mut s = seed;
        let mut trips = Vec::new();
        for r in 0..n as u32 {
            // diagonally dominant for well-conditioning
            trips.push((r, r, C64::new(10.0 + xorshift(&mut s), 3.0)));
            for _ in 0..4 {
                let c = (xorshift(&mut s) * n as f64) as usize % n;
                trips.push((
                    r,
                    c as u32,
                    C64::new(xorshift(&mut s) - 0.5, xorshift(&mut s) - 0.5),
                ));
            }
        }
        let m = SparseMatrix::from_triplets(n, &trips).unwrap();
        let b: Vec<C64> = (0..n)
            .map(|_| C64::new(xorshift(&mut s) - 0.5, xorshift(&mut s) - 0.5))
            .collect();
        (m, b)
    }

    #[test]
    fn complex_solve_matches_dense_oracle() {
        let (m, b) = random_complex_system(30, 7);
        let (x, rep) = solve(&m, &b).unwrap();
        let xd = dense_solve_c64(m.to_dense(), b.clone());
        let mut err = 0.0;
        let mut nrm = 0.0;
        for i in 0..30 {
            err += (x[i] - xd[i]).norm_sqr();
            nrm += xd[i].norm_sqr();
        }
        assert!((err / nrm).sqrt() < 1e-10, "rel err {}", (err / nrm).sqrt());
        assert!(rep.residual_norm_relative < 1e-10);
        assert_eq!(rep.method, SolveMethod::DirectLu);
    }

    #[test]
    fn gmres_matches_direct() {
        let (m, b) = random_complex_system(60, 99);
        let opts = SolveOptions::default();
        let (xd, _) = solve(&m, &b).unwrap();
        let (xi, rep) = gmres(&m, &b, &opts).unwrap();
        let mut err = 0.0;
        let mut nrm = 0.0;
        for i in 0..60 {
            err += (xd[i] - xi[i]).norm_sqr();
            nrm += xd[i].norm_sqr();
        }
        assert!((err / nrm).sqrt() < 1e-8);
        assert_eq!(rep.method, SolveMethod::GmresIlu);
        assert!(rep.iterations > 0);
    }

    #[test]
    fn direct_solve_is_deterministic() {
        let (m, b) = random_complex_system(40, 1234);
        let (x1, _) = solve(&m, &b).unwrap();
        let (x2, _) = solve(&m, &b).unwrap();
        for i in 0..40 {
            assert_eq!(x1[i], x2[i]);
        }
    }

    #[test]
    fn budget_exhaustion_reported_and_auto_falls_back() {
        let (m, b) = random_complex_system(80, 5);
        let mut opts = SolveOptions::default();
        opts.direct_budget_bytes = 64; // absurdly small
        opts.method = MethodChoice::Direct;
        assert!(matches!(
            Factorization::new(&m, &opts),
            Err(Error::Solve(_))
        ));
        opts.method = MethodChoice::Auto;
        let (x, rep) = solve_with_options(&m, &b, &opts).unwrap();
        assert_eq!(rep.method, SolveMethod::GmresIlu);
        let xd = dense_solve_c64(m.to_dense(), b.clone());
        let mut err = 0.0;
        for i in 0..80 {
            err += (x[i] - xd[i]).norm_sqr();
        }
        assert!(err.sqrt() < 1e-6);
    }

    #[test]
    fn singular_matrix_detected() {
        // second row identical to the first: structurally fine, numerically singular
        let m = SparseMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 1, 2.0)],
        )
        .unwrap();
        assert!(solve(&m, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn nd_ordering_with_coords_still_correct() {
        // laplacian-ish grid with coordinates: exercise the ND path
        let nx = 10usize;
        let n = nx * nx * 4;
        let mut trips: Vec<(u32, u32, f64)> = Vec::new();
        let mut coords = Vec::with_capacity(n);
        for i in 0..nx {
            for j in 0..nx {
                let node = i * nx + j;
                for s in 0..4 {
                    coords.push([i as f64, j as f64, s as f64 * 0.01]);
                    let r = (node * 4 + s) as u32;
                    trips.push((r, r, 8.0));
                    let mut neigh = vec![];
                    if i > 0 {
                        neigh.push((i - 1) * nx + j);
                    }
                    if i + 1 < nx {
                        neigh.push((i + 1) * nx + j);
                    }
                    if j > 0 {
                        neigh.push(i * nx + j - 1);
                    }
                    if j + 1 < nx {
                        neigh.push(i * nx + j + 1);
                    }
                    for nb in neigh {
                        trips.push((r, (nb * 4 + s) as u32, -1.0));
                    }
                }
            }
        }
        let m = SparseMatrix::from_triplets(n, &trips).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i % 7) as f64 - 3.0).collect();
        let mut opts = SolveOptions::default();
        opts.coords = Some(coords);
        let f = Factorization::new(&m, &opts).unwrap();
        let (x, rep) = f.solve(&b).unwrap();
        assert!(rep.residual_norm_relative < 1e-12);
        let mut y = vec![0.0; n];
        m.matvec(&x, &mut y);
        let mut err = 0.0f64;
        for i in 0..n {
            err = err.max((y[i] - b[i]).abs());
        }
        assert!(err < 1e-9);
    }
}
