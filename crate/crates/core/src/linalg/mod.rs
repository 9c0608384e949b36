//! Dense complex linear algebra used by the schemes: Vandermonde MDS
//! coefficient matrices, Kronecker / block-diagonal assembly, numerical rank
//! and the least-squares zero-forcing decoder.

pub mod sparse;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::combinatorics::ordered_subsets;
use crate::error::{BiaError, Result};

pub use sparse::SparseMatrix;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative singular-value threshold used for rank and MDS decisions.
pub const DEFAULT_TOL: f64 = 1e-10;

pub fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Coefficient matrix whose every maximal square column submatrix is invertible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdsMatrix {
    #[serde(skip)]
    pub base: ComplexMatrix,
    pub generators: Vec<f64>,
}

impl MdsMatrix {
    pub fn rows(&self) -> usize {
        self.base.nrows()
    }

    pub fn cols(&self) -> usize {
        self.base.ncols()
    }

    /// Entry `(v, n)`, both 1-based.
    #[inline]
    pub fn coeff(&self, v: usize, n: usize) -> Complex64 {
        self.base[(v - 1, n - 1)]
    }

    /// Columns listed (1-based) in `cols`, in that order.
    pub fn columns(&self, cols: &[usize]) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows(), cols.len(), |i, j| self.base[(i, cols[j] - 1)])
    }

    pub fn first_row_is_ones(&self) -> bool {
        (0..self.cols()).all(|j| self.base[(0, j)] == Complex64::new(1.0, 0.0))
    }
}

/// `rows x cols` Vandermonde matrix on generators `1..=cols`: entry `(i, j)` is `j^(i-1)`.
pub fn vandermonde_mds(rows: usize, cols: usize) -> Result<MdsMatrix> {
    if rows == 0 || rows > cols {
        return Err(BiaError::param(format!(
            "Vandermonde shape needs 1 <= rows <= cols, got {rows}x{cols}"
        )));
    }
    let generators: Vec<f64> = (1..=cols).map(|j| j as f64).collect();
    let base = ComplexMatrix::from_fn(rows, cols, |i, j| c64(generators[j].powi(i as i32)));
    Ok(MdsMatrix { base, generators })
}

pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `tol` times the largest one.
pub fn numeric_rank(a: &ComplexMatrix, tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * top).count()
}

/// True iff every `rows x rows` column submatrix has smallest singular value
/// above `tol` times the largest singular value of `a`.
pub fn is_mds(a: &ComplexMatrix, tol: f64) -> bool {
    let (r, c) = a.shape();
    if r == 0 || r > c {
        return false;
    }
    let top = singular_values(a)[0];
    if top == 0.0 {
        return false;
    }
    let Ok(table) = ordered_subsets(c, r) else { return false };
    table.groups.iter().all(|cols| {
        let sub = ComplexMatrix::from_fn(r, r, |i, j| a[(i, cols[j] - 1)]);
        singular_values(&sub).last().is_some_and(|&s| s > tol * top)
    })
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn block_diag(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

pub fn hconcat(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

pub fn vconcat(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), b.shape()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Moore-Penrose pseudo-inverse, dropping singular values below `tol * sigma_max`.
/// `log2 det(a)` of a Hermitian positive-definite matrix, via Cholesky.
pub fn log2det_hermitian(a: &ComplexMatrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.log2()).sum())
}

pub fn pinv(a: &ComplexMatrix, tol: f64) -> ComplexMatrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return ComplexMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.pseudo_inverse(tol * top).unwrap_or_else(|_| ComplexMatrix::zeros(c, r))
}

/// Max-abs deviation of `D^T E_n` from the identity (desired) or zero (others).
pub fn decoder_residual(d: &ComplexMatrix, family: &[ComplexMatrix], desired: usize) -> f64 {
    let dt = d.transpose();
    family
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut p = &dt * e;
            if i == desired {
                for j in 0..p.nrows().min(p.ncols()) {
                    p[(j, j)] -= c64(1.0);
                }
            }
            max_abs(&p)
        })
        .fold(0.0, f64::max)
}

/// Finds `D` with `D^T E_desired = I` and `D^T E_other = 0` for every other
/// member of `family` (`desired` is a 0-based index into `family`).
///
/// Solved by least squares against the concatenated family. Fails with an
/// alignment violation when the desired block is column-rank deficient or its
/// span meets the span of the others.
pub fn solve_decoder(family: &[ComplexMatrix], desired: usize) -> Result<ComplexMatrix> {
    solve_decoder_with_tol(family, desired, DEFAULT_TOL)
}

pub fn solve_decoder_with_tol(
    family: &[ComplexMatrix],
    desired: usize,
    tol: f64,
) -> Result<ComplexMatrix> {
    Ok(solve_decoders_with_tol(family, &[desired], tol)?.remove(0))
}

/// Decoders for several members of one family, sharing a single factorization.
pub fn solve_decoders_with_tol(
    family: &[ComplexMatrix],
    desired: &[usize],
    tol: f64,
) -> Result<Vec<ComplexMatrix>> {
    if let Some(&bad) = desired.iter().find(|&&d| d >= family.len()) {
        return Err(BiaError::param(format!(
            "desired index {bad} outside family of {}",
            family.len()
        )));
    }
    let Some(rows) = family.first().map(|e| e.nrows()) else {
        return Ok(Vec::new());
    };
    if family.iter().any(|e| e.nrows() != rows) {
        return Err(BiaError::param("decoder family members differ in row count"));
    }
    let ranks: Vec<usize> = family.iter().map(|e| numeric_rank(e, tol)).collect();
    let stacked = hconcat(family);
    let (union_rank, inverse) = if stacked.is_empty() {
        (0, ComplexMatrix::zeros(stacked.ncols(), rows))
    } else {
        let svd = stacked.clone().svd(true, true);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol * top).count();
        let inv = svd
            .pseudo_inverse(tol * top)
            .unwrap_or_else(|_| ComplexMatrix::zeros(stacked.ncols(), rows));
        (rank, inv)
    };

    let mut out = Vec::with_capacity(desired.len());
    for &d in desired {
        let others: Vec<ComplexMatrix> = family
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != d)
            .map(|(_, e)| e.clone())
            .collect();
        let others_rank = if others.is_empty() { 0 } else { numeric_rank(&hconcat(&others), tol) };
        let width = family[d].ncols();
        if ranks[d] < width {
            return Err(BiaError::AlignmentViolation {
                detail: format!("desired block has rank {} < {width}", ranks[d]),
                ranks,
                union_rank,
            });
        }
        if union_rank != ranks[d] + others_rank {
            return Err(BiaError::AlignmentViolation {
                detail: format!(
                    "desired span meets interference span (union {union_rank} < {} + {others_rank})",
                    ranks[d]
                ),
                ranks,
                union_rank,
            });
        }
        let offset: usize = family[..d].iter().map(|e| e.ncols()).sum();
        out.push(inverse.rows(offset, width).transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real(rows: usize, cols: usize, v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| c64(x)))
    }

    #[test]
    fn vandermonde_examples() {
        let v = vandermonde_mds(3, 4).unwrap();
        let want = real(3, 4, &[1., 1., 1., 1., 1., 2., 3., 4., 1., 4., 9., 16.]);
        assert_eq!(v.base, want);
        assert!(v.first_row_is_ones());
        assert_eq!(vandermonde_mds(2, 3).unwrap().base, real(2, 3, &[1., 1., 1., 1., 2., 3.]));
        assert_eq!(vandermonde_mds(1, 5).unwrap().base, real(1, 5, &[1.; 5]));
        assert!(vandermonde_mds(4, 3).is_err());
        assert_eq!(v.coeff(3, 4), c64(16.0));
    }

    #[test]
    fn mds_checks() {
        assert!(is_mds(&vandermonde_mds(3, 4).unwrap().base, DEFAULT_TOL));
        let repeated = real(2, 3, &[1., 1., 2., 3., 3., 5.]);
        assert!(!is_mds(&repeated, DEFAULT_TOL));
        assert!(!is_mds(&real(2, 3, &[1., 1., 1., 1., 1., 2.]), DEFAULT_TOL));
        assert!(!is_mds(&ComplexMatrix::zeros(3, 2), DEFAULT_TOL));
    }

    #[test]
    fn vandermonde_is_mds_for_scheme_sizes() {
        for c in 1..=12 {
            for r in 1..=c.min(6) {
                let v = vandermonde_mds(r, c).unwrap();
                assert!(is_mds(&v.base, DEFAULT_TOL), "({r},{c})");
            }
        }
    }

    #[test]
    fn vandermonde_margin_collapses_for_large_square_sizes() {
        // 9x9 on nodes 1..9 is invertible, but its smallest singular value sits
        // around 2e-11 of the largest, below the default threshold.
        let v = vandermonde_mds(9, 9).unwrap();
        assert!(!is_mds(&v.base, DEFAULT_TOL));
        assert!(is_mds(&v.base, 1e-12));
    }

    #[test]
    fn kron_and_block_diag() {
        let i2 = ComplexMatrix::identity(2, 2);
        let i3 = ComplexMatrix::identity(3, 3);
        assert_eq!(kron(&i2, &i3), ComplexMatrix::identity(6, 6));
        let e1 = real(1, 2, &[0., 1.]);
        let sel = kron(&e1, &i2);
        assert_eq!(sel, real(2, 4, &[0., 0., 1., 0., 0., 0., 0., 1.]));
        let h = real(1, 3, &[1., 2., 3.]);
        assert_eq!(block_diag(std::slice::from_ref(&h)), h);
        let bd = block_diag(&[i2.clone(), h.clone()]);
        assert_eq!(bd.shape(), (3, 5));
        assert_eq!(bd[(2, 4)], c64(3.0));
        assert_eq!(bd[(0, 3)], c64(0.0));
    }

    #[test]
    fn ranks() {
        assert_eq!(numeric_rank(&ComplexMatrix::identity(5, 5), DEFAULT_TOL), 5);
        let u = real(3, 1, &[1., 2., 3.]);
        let v = real(1, 4, &[1., -1., 0.5, 2.]);
        assert_eq!(numeric_rank(&(u * v), DEFAULT_TOL), 1);
        assert_eq!(numeric_rank(&ComplexMatrix::zeros(3, 3), DEFAULT_TOL), 0);
    }

    #[test]
    fn decoder_on_orthogonal_supports() {
        let a = vconcat(&[ComplexMatrix::identity(2, 2), ComplexMatrix::zeros(2, 2)]);
        let b = vconcat(&[ComplexMatrix::zeros(2, 2), ComplexMatrix::identity(2, 2)]);
        let d = solve_decoder(&[a.clone(), b.clone()], 0).unwrap();
        let want = hconcat(&[ComplexMatrix::identity(2, 2), ComplexMatrix::zeros(2, 2)]);
        assert!(max_abs(&(d.transpose() - want)) < 1e-12);
        assert!(decoder_residual(&d, &[a, b], 0) < 1e-12);
    }

    #[test]
    fn decoder_detects_overlap() {
        let a = vconcat(&[ComplexMatrix::identity(2, 2), ComplexMatrix::zeros(2, 2)]);
        let err = solve_decoder(&[a.clone(), a], 0).unwrap_err();
        match err {
            BiaError::AlignmentViolation { ranks, union_rank, .. } => {
                assert_eq!(ranks, vec![2, 2]);
                assert_eq!(union_rank, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), rows * cols).prop_map(move |v| {
            ComplexMatrix::from_iterator(rows, cols, v.into_iter().map(|(r, i)| Complex64::new(r, i)))
        })
    }

    proptest! {
        #[test]
        fn kron_mixed_product(
            a in arb_matrix(3, 3), b in arb_matrix(3, 3),
            c in arb_matrix(3, 3), d in arb_matrix(3, 3),
        ) {
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
        }

        #[test]
        fn decoder_identities_hold_for_random_separable_families(
            x in arb_matrix(6, 6), seed_cols in proptest::collection::vec(1usize..3, 3),
        ) {
            // split a random square basis into column groups: spans are independent
            prop_assume!(numeric_rank(&x, DEFAULT_TOL) == 6);
            let mut family = Vec::new();
            let mut c0 = 0;
            for &w in &seed_cols {
                family.push(x.columns(c0, w).into_owned());
                c0 += w;
            }
            for desired in 0..family.len() {
                let d = solve_decoder(&family, desired).unwrap();
                prop_assert!(decoder_residual(&d, &family, desired) < 1e-8);
            }
        }
    }
}
