//! Small dense matrices over [`Dd`].
//!
//! Sizes here never exceed a few hundred rows, so everything is plain
//! row-major storage with textbook algorithms. Rank decisions go through an
//! `f64` SVD from nalgebra; those only need to separate O(1) singular values
//! from zero.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;

use crate::dd::Dd;

#[derive(Clone, Debug, PartialEq)]
pub struct DdMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Dd>,
}

/// Failure of an unpivoted Cholesky factorization at a given row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    pub index: usize,
    pub pivot: f64,
}

impl DdMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DdMatrix {
            rows,
            cols,
            data: vec![Dd::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DdMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Dd::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Dd) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DdMatrix { rows, cols, data }
    }

    /// Row-major `f64` entries.
    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "shape mismatch");
        DdMatrix {
            rows,
            cols,
            data: values.iter().map(|&v| Dd::from_f64(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[Dd] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Dd] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        DdMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        DdMatrix::from_fn(nr, nc, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DdMatrix) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn scale(&self, s: Dd) -> Self {
        DdMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &DdMatrix) -> Self {
        assert_eq!(self.cols, below.cols, "column mismatch in vstack");
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        DdMatrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[Dd]) -> Vec<Dd> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)].to_f64())
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.to_f64()).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs().to_f64()))
    }

    pub fn max_abs_diff(&self, other: &DdMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs().to_f64()))
    }

    /// `L` with `self = L Lᵀ`, plus the smallest ratio `pivot² / diagonal`.
    pub fn cholesky(&self) -> Result<(DdMatrix, f64), NotPositiveDefinite> {
        assert_eq!(self.rows, self.cols, "cholesky of a non-square matrix");
        let n = self.rows;
        let mut l = DdMatrix::zeros(n, n);
        let mut min_ratio = f64::INFINITY;
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)].sqr();
            }
            let diag = self[(j, j)].to_f64();
            if !(d.hi() > 0.0) || !(diag > 0.0) {
                return Err(NotPositiveDefinite {
                    index: j,
                    pivot: d.to_f64(),
                });
            }
            min_ratio = min_ratio.min(d.to_f64() / diag);
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok((l, min_ratio))
    }

    /// Pivots of a symmetric Cholesky factorization with diagonal pivoting,
    /// in elimination order. Stops at the first non-positive pivot, which is
    /// included.
    pub fn pivoted_cholesky_pivots(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let (best, _) = (j..n)
                .map(|i| (i, a[(perm[i], perm[i])]))
                .fold((j, Dd::from_f64(f64::NEG_INFINITY)), |acc, (i, v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            perm.swap(j, best);
            let p = perm[j];
            let piv = a[(p, p)];
            pivots.push(piv.to_f64());
            if !(piv.hi() > 0.0) {
                break;
            }
            for i in j + 1..n {
                let pi = perm[i];
                let f = a[(pi, p)] / piv;
                for k in j + 1..n {
                    let pk = perm[k];
                    let v = a[(pi, pk)] - f * a[(p, pk)];
                    a[(pi, pk)] = v;
                }
            }
        }
        pivots
    }

    /// Inverse of a lower-triangular matrix by forward substitution.
    pub fn lower_triangular_inverse(&self) -> DdMatrix {
        let n = self.rows;
        let mut inv = DdMatrix::zeros(n, n);
        for c in 0..n {
            for r in c..n {
                let mut s = if r == c { Dd::ONE } else { Dd::ZERO };
                for k in c..r {
                    s -= self[(r, k)] * inv[(k, c)];
                }
                inv[(r, c)] = s / self[(r, r)];
            }
        }
        inv
    }

    /// LU with partial pivoting; `None` for an exactly singular pivot.
    fn lu(&self) -> Option<(DdMatrix, Vec<usize>, bool)> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        for j in 0..n {
            let p = (j..n)
                .max_by(|&x, &y| {
                    a[(x, j)]
                        .abs()
                        .partial_cmp(&a[(y, j)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(j);
            if a[(p, j)].hi() == 0.0 {
                return None;
            }
            if p != j {
                for c in 0..n {
                    let t = a[(j, c)];
                    a[(j, c)] = a[(p, c)];
                    a[(p, c)] = t;
                }
                perm.swap(j, p);
                odd = !odd;
            }
            let piv = a[(j, j)];
            for i in j + 1..n {
                let f = a[(i, j)] / piv;
                a[(i, j)] = f;
                for c in j + 1..n {
                    let v = a[(i, c)] - f * a[(j, c)];
                    a[(i, c)] = v;
                }
            }
        }
        Some((a, perm, odd))
    }

    pub fn determinant(&self) -> Dd {
        match self.lu() {
            None => Dd::ZERO,
            Some((lu, _, odd)) => {
                let mut d = Dd::ONE;
                for i in 0..self.rows {
                    d *= lu[(i, i)];
                }
                if odd {
                    -d
                } else {
                    d
                }
            }
        }
    }

    pub fn inverse(&self) -> Option<DdMatrix> {
        let n = self.rows;
        let (lu, perm, _) = self.lu()?;
        let mut inv = DdMatrix::zeros(n, n);
        for c in 0..n {
            let mut y = vec![Dd::ZERO; n];
            for i in 0..n {
                let mut s = if perm[i] == c { Dd::ONE } else { Dd::ZERO };
                for k in 0..i {
                    s -= lu[(i, k)] * y[k];
                }
                y[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= lu[(i, k)] * inv[(k, c)];
                }
                inv[(i, c)] = s / lu[(i, i)];
            }
        }
        Some(inv)
    }

    /// Least-squares solution of `self · X = rhs` by Householder QR.
    /// Requires full column rank; returns `None` on a zero pivot.
    pub fn least_squares(&self, rhs: &DdMatrix) -> Option<DdMatrix> {
        assert_eq!(self.rows, rhs.rows);
        let (m, n) = self.shape();
        assert!(m >= n, "least squares needs rows >= cols");
        let mut a = self.clone();
        let mut b = rhs.clone();
        for j in 0..n {
            let norm = (j..m).map(|i| a[(i, j)].sqr()).sum::<Dd>().sqrt();
            if norm.hi() == 0.0 {
                return None;
            }
            let alpha = if a[(j, j)].hi() > 0.0 { -norm } else { norm };
            let mut v: Vec<Dd> = (j..m).map(|i| a[(i, j)]).collect();
            v[0] -= alpha;
            let vnorm2: Dd = v.iter().map(|x| x.sqr()).sum();
            if vnorm2.hi() == 0.0 {
                continue;
            }
            let apply = |mat: &mut DdMatrix, cols: std::ops::Range<usize>| {
                for c in cols {
                    let dot: Dd = (j..m).map(|i| v[i - j] * mat[(i, c)]).sum();
                    let f = dot * 2.0 / vnorm2;
                    for i in j..m {
                        let val = mat[(i, c)] - f * v[i - j];
                        mat[(i, c)] = val;
                    }
                }
            };
            apply(&mut a, j..n);
            let bc = b.cols;
            apply(&mut b, 0..bc);
        }
        let mut x = DdMatrix::zeros(n, rhs.cols);
        for c in 0..rhs.cols {
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in i + 1..n {
                    s -= a[(i, k)] * x[(k, c)];
                }
                if a[(i, i)].hi() == 0.0 {
                    return None;
                }
                x[(i, c)] = s / a[(i, i)];
            }
        }
        Some(x)
    }

    /// Singular values in descending order (computed in `f64`).
    pub fn singular_values(&self) -> Vec<f64> {
        if self.rows == 0 || self.cols == 0 {
            return Vec::new();
        }
        let mut sv: Vec<f64> = self.to_f64().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sv
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let smax = singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

impl Index<(usize, usize)> for DdMatrix {
    type Output = Dd;
    fn index(&self, (r, c): (usize, usize)) -> &Dd {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DdMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Dd {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &DdMatrix {
    type Output = DdMatrix;
    fn mul(self, rhs: &DdMatrix) -> DdMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        let mut out = DdMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.hi() == 0.0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    let v = out[(r, c)] + a * rhs[(k, c)];
                    out[(r, c)] = v;
                }
            }
        }
        out
    }
}

impl Add for &DdMatrix {
    type Output = DdMatrix;
    fn add(self, rhs: &DdMatrix) -> DdMatrix {
        assert_eq!(self.shape(), rhs.shape());
        DdMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl Sub for &DdMatrix {
    type Output = DdMatrix;
    fn sub(self, rhs: &DdMatrix) -> DdMatrix {
        assert_eq!(self.shape(), rhs.shape());
        DdMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hilbert(n: usize) -> DdMatrix {
        DdMatrix::from_fn(n, n, |r, c| Dd::ONE / Dd::from_f64((r + c + 1) as f64))
    }

    #[test]
    fn cholesky_of_hilbert_reconstructs() {
        let h = hilbert(10);
        let (l, ratio) = h.cholesky().unwrap();
        let back = &l * &l.transpose();
        assert!(back.max_abs_diff(&h) < 1e-30);
        assert!(ratio > 0.0 && ratio < 1e-8);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DdMatrix::from_f64(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = m.cholesky().unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn triangular_inverse() {
        let (l, _) = hilbert(8).cholesky().unwrap();
        let li = l.lower_triangular_inverse();
        let p = &li * &l;
        assert!(p.max_abs_diff(&DdMatrix::identity(8)) < 1e-25);
    }

    #[test]
    fn general_inverse_and_determinant() {
        let m = DdMatrix::from_f64(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let inv = m.inverse().unwrap();
        assert!((&m * &inv).max_abs_diff(&DdMatrix::identity(3)) < 1e-30);
        // det = 0·(1) - 2·(1) + 1·(-3) = -5
        assert!((m.determinant() + 5.0).abs().to_f64() < 1e-30);
        let singular = DdMatrix::from_f64(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(singular.inverse().is_none());
        assert_eq!(singular.determinant().to_f64(), 0.0);
    }

    #[test]
    fn least_squares_consistent_system() {
        let a = DdMatrix::from_f64(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let x_true = DdMatrix::from_f64(2, 1, &[0.5, -2.0]);
        let b = &a * &x_true;
        let x = a.least_squares(&b).unwrap();
        assert!(x.max_abs_diff(&x_true) < 1e-30);
    }

    #[test]
    fn pivoted_pivots_detect_rank() {
        let v = [1.0, 2.0, 3.0];
        let m = DdMatrix::from_fn(3, 3, |r, c| Dd::from_f64(v[r] * v[c]));
        let piv = m.pivoted_cholesky_pivots();
        assert_eq!(piv[0], 9.0);
        assert!(piv[1].abs() < 1e-28);
    }

    #[test]
    fn rank_from_singular_values() {
        assert_eq!(numerical_rank(&[3.0, 1.0, 1e-12], 1e-10), 2);
        assert_eq!(numerical_rank(&[], 1e-10), 0);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
    }
}
