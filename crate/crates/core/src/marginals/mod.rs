//! Square-root information factorization and exact marginal covariance
//! recovery.
//!
//! Three independent routes compute the same covariance blocks:
//!
//! * [`recover_marginals`]: the recursive recurrences on the entries of the
//!   sparse factor `R`, touching only the entries of `Λ⁻¹` needed to reach
//!   the requested blocks.
//! * [`schur_marginal`]: the Schur complement of the complementary variables.
//! * [`dense_inverse_oracle`]: a dense inverse, for small test problems.

mod cholesky;
mod ordering;

pub use cholesky::{sparse_cholesky, SquareRootInformation, PIVOT_TOL};
pub use ordering::constrained_minimum_degree;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};
use crate::graph::{self, BlockLayout, FactorGraph, Key, Values};

/// Default size limit for the dense oracle.
pub const DEFAULT_DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalBlock {
    pub key: Key,
    pub cov: DMatrix<f64>,
}

/// Fill-reducing scalar ordering for a graph: inverse depths and landmarks are
/// eliminated first, then poses, each stage by minimum degree.
pub fn elimination_ordering(g: &FactorGraph) -> Vec<usize> {
    let layout = g.layout();
    let adj = g.block_adjacency();
    let dims: Vec<usize> = layout.keys.iter().map(Key::dim).collect();
    let stage: Vec<u8> = layout.keys.iter().map(|k| u8::from(matches!(k, Key::Pose(_)))).collect();
    layout.expand(&constrained_minimum_degree(&adj, &dims, &stage))
}

/// Memoized covariance entries of one factor, `σ_ij = (Λ⁻¹)_ij` in factor
/// ordering.
pub struct CovarianceRecovery<'a> {
    r: &'a SquareRootInformation,
    memo: HashMap<(usize, usize), f64>,
}

impl<'a> CovarianceRecovery<'a> {
    pub fn new(r: &'a SquareRootInformation) -> Self {
        Self { r, memo: HashMap::new() }
    }

    /// Number of covariance entries computed so far.
    pub fn computed(&self) -> usize {
        self.memo.len()
    }

    /// `σ_ij` with `i`, `j` in factor ordering.
    ///
    /// Uses
    /// `σ_ll = (1/r_ll)(1/r_ll − Σ_{j>l} r_lj σ_jl)` and
    /// `σ_il = −(1/r_ii) Σ_{j>i} r_ij σ_jl` for `i < l`,
    /// with sums over the nonzeros of row `i` of `R`. Evaluated with an
    /// explicit stack so deep dependency chains do not recurse.
    pub fn entry(&mut self, i: usize, j: usize) -> f64 {
        let key = ordered(i, j);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let mut stack = vec![key];
        let mut missing = Vec::new();
        while let Some(&(a, b)) = stack.last() {
            if self.memo.contains_key(&(a, b)) {
                stack.pop();
                continue;
            }
            missing.clear();
            for (c, _) in self.r.row(a) {
                let dep = ordered(c, b);
                if !self.memo.contains_key(&dep) {
                    missing.push(dep);
                }
            }
            if !missing.is_empty() {
                stack.extend_from_slice(&missing);
                continue;
            }
            let sum: f64 = self.r.row(a).map(|(c, v)| v * self.memo[&ordered(c, b)]).sum();
            let raa = self.r.diag(a);
            let value = if a == b { (1.0 / raa - sum) / raa } else { -sum / raa };
            self.memo.insert((a, b), value);
            stack.pop();
        }
        self.memo[&key]
    }

    /// Covariance between original scalar index sets `rows` and `cols`.
    pub fn block(&mut self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        // Larger factor positions first: their entries seed the recursion for
        // the smaller ones.
        let mut pairs: Vec<(usize, usize)> =
            (0..rows.len()).flat_map(|a| (0..cols.len()).map(move |b| (a, b))).collect();
        pairs.sort_by_key(|&(a, b)| std::cmp::Reverse(self.r.position(rows[a]).min(self.r.position(cols[b]))));
        for (a, b) in pairs {
            out[(a, b)] = self.entry(self.r.position(rows[a]), self.r.position(cols[b]));
        }
        out
    }
}

#[inline]
fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Marginal covariance blocks of `keys` from the factor `r`.
pub fn recover_marginals(r: &SquareRootInformation, layout: &BlockLayout, keys: &[Key]) -> Result<Vec<MarginalBlock>> {
    let mut rec = CovarianceRecovery::new(r);
    keys.iter()
        .map(|key| {
            let idx: Vec<usize> = layout.range(key).ok_or(Error::UnknownVariable(*key))?.collect();
            let mut cov = rec.block(&idx, &idx);
            symmetrize(&mut cov);
            Ok(MarginalBlock { key: *key, cov })
        })
        .collect()
}

/// Joint covariance of several blocks, stacked in the given order.
pub fn recover_joint(r: &SquareRootInformation, layout: &BlockLayout, keys: &[Key]) -> Result<DMatrix<f64>> {
    let mut idx = Vec::new();
    for key in keys {
        idx.extend(layout.range(key).ok_or(Error::UnknownVariable(*key))?);
    }
    let mut cov = CovarianceRecovery::new(r).block(&idx, &idx);
    symmetrize(&mut cov);
    Ok(cov)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// `(Λ₁₁ − Λ₁₂ Λ₂₂⁻¹ Λ₂₁)⁻¹` for the scalar indices in `keep`.
pub fn schur_marginal(lambda: &CscMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let n = lambda.ncols();
    if keep.is_empty() {
        return Err(Error::Validation("schur_marginal needs a non-empty keep set".into()));
    }
    let mut in_keep = vec![usize::MAX; n];
    for (a, &i) in keep.iter().enumerate() {
        if i >= n {
            return Err(Error::Validation(format!("index {i} out of range for dimension {n}")));
        }
        in_keep[i] = a;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| in_keep[i] == usize::MAX).collect();
    let mut rest_pos = vec![usize::MAX; n];
    for (a, &i) in rest.iter().enumerate() {
        rest_pos[i] = a;
    }

    let m = keep.len();
    let mut l11 = DMatrix::zeros(m, m);
    let mut l21 = DMatrix::zeros(rest.len(), m);
    let mut coo22 = nalgebra_sparse::CooMatrix::new(rest.len(), rest.len());
    for j in 0..n {
        let col = lambda.col(j);
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            match (in_keep[i] != usize::MAX, in_keep[j] != usize::MAX) {
                (true, true) => l11[(in_keep[i], in_keep[j])] += v,
                (false, true) => l21[(rest_pos[i], in_keep[j])] += v,
                (false, false) => coo22.push(rest_pos[i], rest_pos[j], v),
                (true, false) => {}
            }
        }
    }

    let mut s = l11;
    if !rest.is_empty() {
        let l22 = CscMatrix::from(&coo22);
        let identity: Vec<usize> = (0..rest.len()).collect();
        let f22 = sparse_cholesky(&l22, &identity).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => Error::NotPositiveDefinite { pivot: rest[pivot], value },
            other => other,
        })?;
        for c in 0..m {
            let x = f22.solve(&DVector::from_column_slice(l21.column(c).as_slice()));
            let update = l21.transpose() * x;
            for r in 0..m {
                s[(r, c)] -= update[r];
            }
        }
    }
    symmetrize(&mut s);
    dense_spd_inverse(s)
}

fn dense_spd_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let max_diag = m.diagonal().iter().cloned().fold(0.0, f64::max);
    let chol = nalgebra::Cholesky::new(m).ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
    if let Some(k) = (0..n).find(|&k| chol.l_dirty()[(k, k)].powi(2) <= PIVOT_TOL * max_diag) {
        return Err(Error::NotPositiveDefinite { pivot: k, value: chol.l_dirty()[(k, k)].powi(2) });
    }
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Full `Λ⁻¹` by dense Cholesky. Intended as a test oracle only.
pub fn dense_inverse_oracle(lambda: &DMatrix<f64>, max_dim: usize) -> Result<DMatrix<f64>> {
    if lambda.nrows() > max_dim {
        return Err(Error::DimensionTooLarge { dim: lambda.nrows(), max_dim });
    }
    dense_spd_inverse(lambda.clone())
}

/// Linearization, factorization and recovery bundled for one graph at one
/// linearization point.
pub struct Marginals {
    layout: BlockLayout,
    information: CscMatrix<f64>,
    factor: SquareRootInformation,
}

impl Marginals {
    pub fn new(g: &FactorGraph, x: &Values) -> Result<Self> {
        let sys = graph::linearize(g, x)?;
        let information = graph::information_matrix(&sys);
        let perm = elimination_ordering(g);
        let factor = sparse_cholesky(&information, &perm)?;
        Ok(Self { layout: sys.layout, information, factor })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn information(&self) -> &CscMatrix<f64> {
        &self.information
    }

    pub fn factor(&self) -> &SquareRootInformation {
        &self.factor
    }

    pub fn marginal(&self, key: Key) -> Result<DMatrix<f64>> {
        Ok(recover_marginals(&self.factor, &self.layout, &[key])?.remove(0).cov)
    }

    pub fn marginals(&self, keys: &[Key]) -> Result<Vec<MarginalBlock>> {
        recover_marginals(&self.factor, &self.layout, keys)
    }

    pub fn joint(&self, keys: &[Key]) -> Result<DMatrix<f64>> {
        recover_joint(&self.factor, &self.layout, keys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra_sparse::CooMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_csc(m: &DMatrix<f64>) -> CscMatrix<f64> {
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

    fn random_spd(n: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
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

    fn scalar_layout(n: usize) -> BlockLayout {
        BlockLayout::new((0..n).map(Key::InvDepth).collect())
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn diagonal_marginals() {
        let d = [2.0, 5.0, 0.25];
        let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(&d));
        let r = sparse_cholesky(&to_csc(&lambda), &[0, 1, 2]).unwrap();
        let layout = scalar_layout(3);
        let blocks = recover_marginals(&r, &layout, &layout.keys.clone()).unwrap();
        for (b, di) in blocks.iter().zip(d) {
            assert!((b.cov[(0, 0)] - 1.0 / di).abs() < 1e-15);
        }
    }

    #[test]
    fn recurrences_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let lambda = random_spd(60, 0.04, &mut rng);
            let mut perm: Vec<usize> = (0..60).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let r = sparse_cholesky(&to_csc(&lambda), &perm).unwrap();
            let inv = dense_inverse_oracle(&lambda, DEFAULT_DENSE_LIMIT).unwrap();
            let mut rec = CovarianceRecovery::new(&r);
            for start in (0..60).step_by(6) {
                let idx: Vec<usize> = (start..start + 6).collect();
                let block = rec.block(&idx, &idx);
                let expected = inv.view((start, start), (6, 6)).into_owned();
                assert!(rel_err(&block, &expected) < 1e-8);
            }
        }
    }

    #[test]
    fn schur_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_spd(4, 0.5, &mut rng);
        let c = random_spd(3, 0.5, &mut rng);
        let mut bd = DMatrix::zeros(7, 7);
        bd.view_mut((0, 0), (4, 4)).copy_from(&a);
        bd.view_mut((4, 4), (3, 3)).copy_from(&c);
        let s = schur_marginal(&to_csc(&bd), &[0, 1, 2, 3]).unwrap();
        assert!(rel_err(&s, &a.clone().try_inverse().unwrap()) < 1e-10);

        let full = schur_marginal(&to_csc(&bd), &(0..7).collect::<Vec<_>>()).unwrap();
        assert!(rel_err(&full, &bd.clone().try_inverse().unwrap()) < 1e-10);

        let lambda = random_spd(40, 0.1, &mut rng);
        let inv = dense_inverse_oracle(&lambda, 100).unwrap();
        let keep = [3, 17, 25, 26];
        let s = schur_marginal(&to_csc(&lambda), &keep).unwrap();
        let expected = DMatrix::from_fn(4, 4, |i, j| inv[(keep[i], keep[j])]);
        assert!(rel_err(&s, &expected) < 1e-8);
    }

    #[test]
    fn schur_reports_singular_complement() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = 0.0;
        assert!(matches!(schur_marginal(&to_csc(&m), &[0]), Err(Error::NotPositiveDefinite { pivot: 2, .. })));
    }

    #[test]
    fn dense_oracle_basics() {
        assert!((dense_inverse_oracle(&DMatrix::identity(3, 3), 10).unwrap() - DMatrix::identity(3, 3)).amax() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let inv = dense_inverse_oracle(&d, 10).unwrap();
        assert!((inv - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]))).amax() < 1e-15);
        assert!(matches!(
            dense_inverse_oracle(&DMatrix::identity(5, 5), 4),
            Err(Error::DimensionTooLarge { dim: 5, max_dim: 4 })
        ));
        assert!(matches!(
            dense_inverse_oracle(&DMatrix::from_element(2, 2, 1.0), 4),
            Err(Error::NotPositiveDefinite { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let lambda = random_spd(30, 0.2, &mut rng) + DMatrix::identity(30, 30);
        let inv = dense_inverse_oracle(&lambda, 100).unwrap();
        assert!((&lambda * inv - DMatrix::identity(30, 30)).norm() < 1e-9);
    }

    #[test]
    fn unknown_key() {
        let r = sparse_cholesky(&to_csc(&DMatrix::identity(2, 2)), &[0, 1]).unwrap();
        assert!(matches!(
            recover_marginals(&r, &scalar_layout(2), &[Key::Pose(0)]),
            Err(Error::UnknownVariable(Key::Pose(0)))
        ));
    }
}
