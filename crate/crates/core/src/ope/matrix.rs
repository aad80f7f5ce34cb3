use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

/// Sparse vector keyed by index.
pub type SparseVec = BTreeMap<usize, f64>;

/// Row-major sparse matrix; each row keeps its entries sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "entry ({r}, {c}) outside {nrows}x{ncols}");
            if v != 0.0 {
                *acc[r].entry(c).or_insert(0.0) += v;
            }
        }
        Self {
            nrows,
            ncols,
            rows: acc.into_iter().map(|m| m.into_iter().filter(|(_, v)| *v != 0.0).collect()).collect(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                t.push((r, c, m[(r, c)]));
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.rows[r];
        match row.binary_search_by_key(&c, |(j, _)| *j) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.entries().map(|(r, c, v)| (c, r, v)))
    }

    /// The single-row matrix holding row `r`.
    pub fn row_slice(&self, r: usize) -> Self {
        Self { nrows: 1, ncols: self.ncols, rows: vec![self.rows[r].clone()] }
    }

    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut out = Vec::with_capacity(self.nrows);
        for row in &self.rows {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for &(k, a) in row {
                for &(c, b) in &other.rows[k] {
                    *acc.entry(c).or_insert(0.0) += a * b;
                }
            }
            out.push(acc.into_iter().filter(|(_, v)| *v != 0.0).collect());
        }
        SparseMatrix { nrows: self.nrows, ncols: other.ncols, rows: out }
    }

    /// `M · x`.
    pub fn mul_vec(&self, x: &SparseVec) -> SparseVec {
        let mut out = SparseVec::new();
        for (r, row) in self.rows.iter().enumerate() {
            let mut s = 0.0;
            for &(c, a) in row {
                if let Some(v) = x.get(&c) {
                    s += a * v;
                }
            }
            if s != 0.0 {
                out.insert(r, s);
            }
        }
        out
    }

    /// `xᵀ · M`.
    pub fn left_mul_vec(&self, x: &SparseVec) -> SparseVec {
        let mut out = SparseVec::new();
        for (&r, &a) in x {
            for &(c, b) in &self.rows[r] {
                *out.entry(c).or_insert(0.0) += a * b;
            }
        }
        out.retain(|_, v| *v != 0.0);
        out
    }

    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut d: f64 = 0.0;
        for r in 0..self.nrows {
            let mut a = self.rows[r].iter().peekable();
            let mut b = other.rows[r].iter().peekable();
            loop {
                match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(&&(ca, va)), Some(&&(cb, vb))) if ca == cb => {
                        d = d.max((va - vb).abs());
                        a.next();
                        b.next();
                    }
                    (Some(&&(ca, va)), Some(&&(cb, _))) if ca < cb => {
                        d = d.max(va.abs());
                        a.next();
                    }
                    (Some(&&(ca, va)), None) => {
                        let _ = ca;
                        d = d.max(va.abs());
                        a.next();
                    }
                    (_, Some(&&(_, vb))) => {
                        d = d.max(vb.abs());
                        b.next();
                    }
                }
            }
        }
        d
    }

    /// Row indices without any nonzero entry.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.nrows).filter(|&r| self.rows[r].is_empty()).collect()
    }

    /// Column sums.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.ncols];
        for (_, c, v) in self.entries() {
            s[c] += v;
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|(_, _, v)| v.is_finite())
    }
}

/// Singular-value summary of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDiagnostics {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Descending; padded with zeros to `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub effective_rank: usize,
    /// `σ_max / σ_min` over the kept singular values; `None` when the
    /// effective rank is zero.
    pub condition_number: Option<f64>,
    pub required_rank: Option<usize>,
    pub pass: Option<bool>,
}

impl RankDiagnostics {
    pub fn require(mut self, rank: usize) -> Self {
        self.required_rank = Some(rank);
        self.pass = Some(self.effective_rank >= rank);
        self
    }
}

/// Thresholded Moore–Penrose inverse.
///
/// The matrix is split into connected blocks (rows and columns linked by a
/// nonzero entry); each block is inverted through its SVD. Singular values
/// below `rel_threshold · σ_max`, with `σ_max` taken over the whole matrix,
/// count as zero.
pub fn pinv(m: &SparseMatrix, rel_threshold: f64) -> (SparseMatrix, RankDiagnostics) {
    let (nr, nc) = (m.nrows, m.ncols);
    let mut uf = UnionFind::new(nr + nc);
    for (r, c, _) in m.entries() {
        uf.union(r, nr + c);
    }
    let mut blocks: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for r in 0..nr {
        if !m.rows[r].is_empty() {
            blocks.entry(uf.find(r)).or_default().0.push(r);
        }
    }
    let mut has_col = vec![false; nc];
    for (_, c, _) in m.entries() {
        has_col[c] = true;
    }
    for (c, &present) in has_col.iter().enumerate() {
        if present {
            blocks.entry(uf.find(nr + c)).or_default().1.push(c);
        }
    }

    let mut svds = Vec::with_capacity(blocks.len());
    let mut all_sv = Vec::new();
    for (rows, cols) in blocks.values() {
        let mut d = DMatrix::zeros(rows.len(), cols.len());
        let col_pos: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        for (i, &r) in rows.iter().enumerate() {
            for &(c, v) in &m.rows[r] {
                d[(i, col_pos[&c])] = v;
            }
        }
        let svd = d.svd(true, true);
        all_sv.extend(svd.singular_values.iter().copied());
        svds.push(svd);
    }
    let sigma_max = all_sv.iter().copied().fold(0.0, f64::max);
    let threshold = rel_threshold * sigma_max;
    let keep = |s: f64| s > 0.0 && s >= threshold;

    let mut triplets = Vec::new();
    for ((rows, cols), svd) in blocks.values().zip(&svds) {
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested Vᵀ");
        let mut inv = DMatrix::zeros(cols.len(), rows.len());
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if keep(s) {
                let vk = vt.row(k).transpose();
                let uk = u.column(k);
                inv += (vk * uk.transpose()) / s;
            }
        }
        for (i, &c) in cols.iter().enumerate() {
            for (j, &r) in rows.iter().enumerate() {
                triplets.push((c, r, inv[(i, j)]));
            }
        }
    }
    let out = SparseMatrix::from_triplets(nc, nr, triplets);

    all_sv.sort_by(|a, b| b.total_cmp(a));
    all_sv.resize(nr.min(nc), 0.0);
    let kept: Vec<f64> = all_sv.iter().copied().filter(|&s| keep(s)).collect();
    let diag = RankDiagnostics {
        name: String::new(),
        rows: nr,
        cols: nc,
        effective_rank: kept.len(),
        condition_number: kept.last().map(|&smin| sigma_max / smin),
        singular_values: all_sv,
        threshold,
        required_rank: None,
        pass: None,
    };
    (out, diag)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_inverts_to_identity() {
        let (p, d) = pinv(&SparseMatrix::identity(3), 1e-9);
        assert_eq!(p.max_abs_diff(&SparseMatrix::identity(3)), 0.0);
        assert_eq!(d.effective_rank, 3);
        assert_eq!(d.condition_number, Some(1.0));
    }

    #[test]
    fn zero_singular_direction_is_dropped() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 0, 2.0)]);
        let (p, d) = pinv(&m, 1e-9);
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.nnz(), 1);
        assert_eq!(d.effective_rank, 1);
        assert_eq!(d.singular_values, vec![2.0, 0.0]);
    }

    #[test]
    fn zero_matrix_has_rank_zero_and_no_condition_number() {
        let (p, d) = pinv(&SparseMatrix::zeros(3, 2), 1e-9);
        assert_eq!(p.nnz(), 0);
        assert_eq!(d.effective_rank, 0);
        assert_eq!(d.condition_number, None);
    }

    #[test]
    fn thresholded_small_singular_value() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1e-12)]);
        let (p, d) = pinv(&m, 1e-9);
        assert_eq!(d.effective_rank, 1);
        assert_eq!(p.get(1, 1), 0.0);
        assert!(p.is_finite());
    }

    #[test]
    fn block_column_inverse_is_least_squares() {
        // Single column (3, 4): pinv = (3, 4) / 25.
        let m = SparseMatrix::from_triplets(2, 1, [(0, 0, 3.0), (1, 0, 4.0)]);
        let (p, _) = pinv(&m, 1e-9);
        assert!((p.get(0, 0) - 0.12).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.16).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn left_inverse_of_full_column_rank(vals in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let mut m = DMatrix::from_row_slice(4, 2, &vals);
            // Keep it well conditioned.
            m[(0, 0)] += 3.0;
            m[(1, 1)] += 3.0;
            let (p, _) = pinv(&SparseMatrix::from_dense(&m), 1e-9);
            let prod = p.to_dense() * &m;
            let eye = DMatrix::<f64>::identity(2, 2);
            prop_assert!((prod - &eye).abs().max() <= 1e-10);
            // Normal equations: (MᵀM)⁻¹Mᵀ.
            let mtm = m.transpose() * &m;
            let ne = mtm.try_inverse().unwrap() * m.transpose();
            prop_assert!((p.to_dense() - ne).abs().max() <= 1e-10);
        }

        #[test]
        fn block_split_matches_dense_svd(vals in proptest::collection::vec(0.0f64..1.0, 6)) {
            // Two disjoint blocks: rows {0,1} x col {0}, row {2} x cols {1,2}.
            let m = SparseMatrix::from_triplets(3, 3, [
                (0, 0, vals[0] + 0.1), (1, 0, vals[1]),
                (2, 1, vals[2] + 0.1), (2, 2, vals[3]),
            ]);
            let (p, d) = pinv(&m, 1e-9);
            let dense = m.to_dense().pseudo_inverse(1e-12).unwrap();
            prop_assert!((p.to_dense() - dense).abs().max() <= 1e-10);
            prop_assert_eq!(d.effective_rank, 2);
        }
    }
}
