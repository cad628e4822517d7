use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_TOL · max diag(Λ)` is
/// treated as a rank deficiency.
pub const PIVOT_TOL: f64 = 1e-12;

const NONE: usize = usize::MAX;

/// Upper-triangular factor `R` with `Pᵀ(RᵀR)P = Λ`.
///
/// Row `l` of `R` is stored contiguously, diagonal first, then the
/// off-diagonal columns in increasing order.
#[derive(Clone, Debug)]
pub struct SquareRootInformation {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv_perm[old] = new`
    inv_perm: Vec<usize>,
}

impl SquareRootInformation {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Position of original scalar index `old` in the factor.
    pub fn position(&self, old: usize) -> usize {
        self.inv_perm[old]
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn diag(&self, l: usize) -> f64 {
        self.values[self.row_ptr[l]]
    }

    /// Off-diagonal entries `(j, R_lj)`, `j > l`, of row `l`.
    #[inline]
    pub fn row(&self, l: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[l] + 1..self.row_ptr[l + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Dense `R` in factor (permuted) ordering.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut r = nalgebra::DMatrix::zeros(self.n, self.n);
        for l in 0..self.n {
            r[(l, l)] = self.diag(l);
            for (j, v) in self.row(l) {
                r[(l, j)] = v;
            }
        }
        r
    }

    /// Solves `Λ x = b` in original ordering.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        // Rᵀ y = P b
        for l in 0..n {
            y[l] /= self.diag(l);
            let yl = y[l];
            for (j, v) in self.row(l) {
                y[j] -= v * yl;
            }
        }
        // R z = y
        for l in (0..n).rev() {
            let s: f64 = self.row(l).map(|(j, v)| v * y[j]).sum();
            y[l] = (y[l] - s) / self.diag(l);
        }
        let mut x = DVector::zeros(n);
        for k in 0..n {
            x[self.perm[k]] = y[k];
        }
        x
    }

    /// `log det Λ = 2 Σ log R_ll`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|l| 2.0 * self.diag(l).ln()).sum()
    }
}

/// Upper triangle of `PᵀΛP` in compressed columns (rows sorted).
struct UpperCsc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(lambda: &CscMatrix<f64>, inv_perm: &[usize]) -> UpperCsc {
    let n = lambda.ncols();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for j in 0..n {
        let col = lambda.col(j);
        let nj = inv_perm[j];
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            let ni = inv_perm[i];
            if ni <= nj {
                cols[nj].push((ni, v));
            }
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    for mut c in cols {
        c.sort_by_key(|e| e.0);
        for (i, v) in c {
            if row_idx.len() > *col_ptr.last().unwrap() && *row_idx.last().unwrap() == i {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(i);
                values.push(v);
            }
        }
        col_ptr.push(row_idx.len());
    }
    UpperCsc { col_ptr, row_idx, values }
}

fn elimination_tree(a: &UpperCsc, n: usize) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &row in &a.row_idx[a.col_ptr[k]..a.col_ptr[k + 1]] {
            let mut i = row;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (columns `< k`), written to
/// `stack[top..]` in topological order. Returns `top`.
fn ereach(a: &UpperCsc, k: usize, parent: &[usize], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for &row in &a.row_idx[a.col_ptr[k]..a.col_ptr[k + 1]] {
        let mut i = row;
        if i > k {
            continue;
        }
        let mut len = 0;
        let start = top;
        while mark[i] != k {
            stack[start - 1 - len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        // The path was written in reverse; flip it into place.
        stack[start - len..start].reverse();
        top -= len;
    }
    top
}

/// Sparse Cholesky `PᵀΛP = RᵀR` (up-looking). `perm[new] = old`.
pub fn sparse_cholesky(lambda: &CscMatrix<f64>, perm: &[usize]) -> Result<SquareRootInformation> {
    let n = lambda.ncols();
    assert_eq!(lambda.nrows(), n, "information matrix must be square");
    assert_eq!(perm.len(), n, "permutation length mismatch");
    let mut inv_perm = vec![NONE; n];
    for (new, &old) in perm.iter().enumerate() {
        inv_perm[old] = new;
    }
    assert!(inv_perm.iter().all(|&p| p != NONE), "ordering is not a permutation");

    let a = permuted_upper(lambda, &inv_perm);
    let parent = elimination_tree(&a, n);

    let mut diag = vec![0.0; n];
    for k in 0..n {
        for p in a.col_ptr[k]..a.col_ptr[k + 1] {
            if a.row_idx[p] == k {
                diag[k] = a.values[p];
            }
        }
    }
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let tol = PIVOT_TOL * max_diag;

    // Symbolic pass: column counts of L.
    let mut stack = vec![0usize; n];
    let mut mark = vec![NONE; n];
    let mut counts = vec![1usize; n];
    for k in 0..n {
        let top = ereach(&a, k, &parent, &mut stack, &mut mark);
        for &i in &stack[top..] {
            counts[i] += 1;
        }
    }
    let mut col_ptr = vec![0usize; n + 1];
    for k in 0..n {
        col_ptr[k + 1] = col_ptr[k] + counts[k];
    }
    let nnz = col_ptr[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![0.0; nnz];
    let mut next = col_ptr[..n].to_vec();

    let mut x = vec![0.0; n];
    mark.iter_mut().for_each(|m| *m = NONE);
    for k in 0..n {
        let top = ereach(&a, k, &parent, &mut stack, &mut mark);
        x[k] = 0.0;
        for p in a.col_ptr[k]..a.col_ptr[k + 1] {
            let i = a.row_idx[p];
            if i <= k {
                x[i] = a.values[p];
            }
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &i in &stack[top..] {
            let lki = x[i] / lx[col_ptr[i]];
            x[i] = 0.0;
            for p in col_ptr[i] + 1..next[i] {
                x[li[p]] -= lx[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            next[i] += 1;
            li[p] = k;
            lx[p] = lki;
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { pivot: perm[k], value: d });
        }
        let p = next[k];
        next[k] += 1;
        li[p] = k;
        lx[p] = d.sqrt();
    }

    Ok(SquareRootInformation { n, row_ptr: col_ptr, col_idx: li, values: lx, perm: perm.to_vec(), inv_perm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use nalgebra_sparse::CooMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn to_csc(m: &DMatrix<f64>) -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    coo.push(i, j, m[(i, j)]);
                }
            }
        }
        CscMatrix::from(&coo)
    }

    fn random_sparse_spd(n: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            b[(i, i)] = rng.gen_range(0.5..2.0);
            for j in 0..n {
                if i != j && rng.gen_bool(density) {
                    b[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        b.transpose() * &b
    }

    fn identity_perm(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn identity_and_diagonal() {
        let r = sparse_cholesky(&to_csc(&DMatrix::identity(4, 4)), &identity_perm(4)).unwrap();
        assert_eq!(r.to_dense(), DMatrix::identity(4, 4));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sparse_cholesky(&to_csc(&d), &identity_perm(2)).unwrap();
        assert_eq!(r.to_dense(), DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let lambda = random_sparse_spd(60, 0.05, &mut rng);
            let mut perm = identity_perm(60);
            if trial % 2 == 1 {
                use rand::seq::SliceRandom;
                perm.shuffle(&mut rng);
            }
            let f = sparse_cholesky(&to_csc(&lambda), &perm).unwrap();
            let r = f.to_dense();
            let permuted = DMatrix::from_fn(60, 60, |i, j| lambda[(perm[i], perm[j])]);
            let err = (r.transpose() * &r - &permuted).norm();
            assert!(err < 1e-9 * lambda.norm(), "reconstruction error {err}");
            for i in 0..60 {
                assert!(f.diag(i) > 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }

            let b = DVector::from_fn(60, |i, _| (i as f64).sin());
            let x = f.solve(&b);
            assert!((&lambda * x - b).norm() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = 0.0;
        match sparse_cholesky(&to_csc(&m), &identity_perm(3)) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("expected failure, got {other:?}"),
        }
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert!(sparse_cholesky(&to_csc(&ones), &identity_perm(2)).is_err());
    }

    #[test]
    fn log_det_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let lambda = random_sparse_spd(20, 0.2, &mut rng);
        let f = sparse_cholesky(&to_csc(&lambda), &identity_perm(20)).unwrap();
        let dense = lambda.clone().cholesky().unwrap();
        let expected: f64 = dense.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        assert!((f.log_det() - expected).abs() < 1e-10);
    }
}
