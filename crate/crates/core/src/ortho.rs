//! Orthonormal Laurent systems from moment data.
//!
//! The canonical system comes from a Cholesky factorization `M_N = R R^T`
//! over the globally ordered monomials: row `g` of `R^{-1}` holds the
//! coefficients of the `g`-th orthonormal function, so every leading block
//! `A^{(n)}_n` is lower triangular with positive diagonal.

use serde::Serialize;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::lattice::{dim, level_basis, Axis, Monomial};
use crate::linalg::DdMatrix;
use crate::moments::{MomentProvider, TABLE_DIGITS};

/// Block moment matrix `M_n` over all monomials of level at most `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    n: usize,
    matrix: DdMatrix,
}

impl MomentMatrix {
    pub fn level(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DdMatrix {
        &self.matrix
    }

    /// Block `L(phi_k phi_l^T)` of shape `(k+1) x (l+1)`.
    pub fn block(&self, k: usize, l: usize) -> DdMatrix {
        assert!(k <= self.n && l <= self.n);
        self.matrix.submatrix(dim(k) - k - 1, dim(l) - l - 1, k + 1, l + 1)
    }

    pub fn determinant(&self) -> Dd {
        self.matrix.determinant()
    }

    /// Leading principal part for a lower level.
    pub fn truncate(&self, n: usize) -> MomentMatrix {
        assert!(n <= self.n);
        MomentMatrix {
            n,
            matrix: self.matrix.submatrix(0, 0, dim(n), dim(n)),
        }
    }
}

pub fn build_moment_matrix(provider: &MomentProvider, n: usize) -> Result<MomentMatrix> {
    let monos: Vec<Monomial> = (0..dim(n)).map(Monomial::from_global_index).collect();
    let d = monos.len();
    let mut m = DdMatrix::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let e = monos[r].times(monos[c]);
            let v = provider.moment(e.i, e.j)?;
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    Ok(MomentMatrix { n, matrix: m })
}

/// True iff a diagonally pivoted Cholesky factorization runs to completion
/// with every pivot above `tol` times the largest diagonal entry.
pub fn is_positive_definite(m: &MomentMatrix, tol: f64) -> bool {
    let a = m.matrix();
    let size = a.rows();
    let max_diag = (0..size).map(|i| a[(i, i)].to_f64()).fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return false;
    }
    let pivots = a.pivoted_cholesky_pivots();
    pivots.len() == size && pivots.iter().all(|&p| p > tol * max_diag)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthoOptions {
    /// Smallest accepted `pivot^2 / diagonal` in the Cholesky factorization.
    pub min_pivot_ratio: f64,
}

impl Default for OrthoOptions {
    fn default() -> Self {
        OrthoOptions {
            min_pivot_ratio: 1e-28,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoSystem {
    max_level: usize,
    /// Row `g`: coefficients of component `g` over the global monomial index.
    coeffs: DdMatrix,
    min_pivot_ratio: Option<f64>,
    provider: Option<MomentProvider>,
}

pub fn orthonormalize(provider: &MomentProvider, max_level: usize) -> Result<OrthoSystem> {
    orthonormalize_with(provider, max_level, &OrthoOptions::default())
}

pub fn orthonormalize_with(
    provider: &MomentProvider,
    max_level: usize,
    opts: &OrthoOptions,
) -> Result<OrthoSystem> {
    let mm = build_moment_matrix(provider, max_level)?;
    let m = mm.matrix();
    let (l, _) = m.cholesky().map_err(|e| Error::NotPositiveDefinite {
        level: Monomial::from_global_index(e.index).level(),
        index: e.index,
        pivot: e.pivot,
    })?;
    let mut min_ratio = f64::INFINITY;
    for g in 0..l.rows() {
        let ratio = (l[(g, g)].sqr() / m[(g, g)]).to_f64();
        if ratio < opts.min_pivot_ratio {
            return Err(Error::IllConditioned {
                level: Monomial::from_global_index(g).level(),
                ratio,
                threshold: opts.min_pivot_ratio,
            });
        }
        min_ratio = min_ratio.min(ratio);
    }
    Ok(OrthoSystem {
        max_level,
        coeffs: l.lower_triangular_inverse(),
        min_pivot_ratio: Some(min_ratio),
        provider: Some(provider.clone()),
    })
}

fn check_point(x: f64, y: f64) -> Result<()> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "evaluation point ({x}, {y}) is not finite"
        )));
    }
    if x == 0.0 || y == 0.0 {
        return Err(Error::OnAxis { x, y });
    }
    Ok(())
}

/// Values of all monomials of level at most `n` at `(x, y)`, in global order.
pub fn monomial_values(n: usize, x: Dd, y: Dd) -> Vec<Dd> {
    (0..dim(n))
        .map(|g| {
            let m = Monomial::from_global_index(g);
            x.powi(m.i as i32) * y.powi(m.j as i32)
        })
        .collect()
}

/// Partial derivatives of all monomials of level at most `n`.
pub fn monomial_derivatives(n: usize, x: Dd, y: Dd, axis: Axis) -> Vec<Dd> {
    (0..dim(n))
        .map(|g| {
            let m = Monomial::from_global_index(g);
            match axis {
                Axis::X if m.i != 0 => {
                    x.powi(m.i as i32 - 1) * y.powi(m.j as i32) * Dd::from(m.i)
                }
                Axis::Y if m.j != 0 => {
                    x.powi(m.i as i32) * y.powi(m.j as i32 - 1) * Dd::from(m.j)
                }
                _ => Dd::ZERO,
            }
        })
        .collect()
}

/// The monomial vector of level `n` at `(x, y)`.
pub fn evaluate_monomial_vector(n: usize, x: f64, y: f64) -> Result<Vec<f64>> {
    check_point(x, y)?;
    Ok(level_basis(n)
        .entries
        .iter()
        .map(|m| x.powi(m.i as i32) * y.powi(m.j as i32))
        .collect())
}

impl OrthoSystem {
    /// Wraps explicit coefficient rows. Component `g` may only involve
    /// monomials of level at most the level of `g`.
    pub fn from_coefficients(
        max_level: usize,
        coeffs: DdMatrix,
        provider: Option<MomentProvider>,
    ) -> Result<OrthoSystem> {
        let d = dim(max_level);
        if coeffs.shape() != (d, d) {
            return Err(Error::InvalidInput(format!(
                "coefficient matrix is {:?}, expected {d}x{d}",
                coeffs.shape()
            )));
        }
        for g in 0..d {
            let width = dim(Monomial::from_global_index(g).level());
            if (width..d).any(|c| coeffs[(g, c)].hi() != 0.0) {
                return Err(Error::InvalidInput(format!(
                    "component {g} reaches beyond its level"
                )));
            }
        }
        Ok(OrthoSystem {
            max_level,
            coeffs,
            min_pivot_ratio: None,
            provider,
        })
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn coefficients(&self) -> &DdMatrix {
        &self.coeffs
    }

    pub fn provider(&self) -> Option<&MomentProvider> {
        self.provider.as_ref()
    }

    /// Smallest Cholesky pivot ratio, for systems built from moments.
    pub fn min_pivot_ratio(&self) -> Option<f64> {
        self.min_pivot_ratio
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.max_level {
            return Err(Error::LevelOutOfRange {
                level: n,
                max: self.max_level,
            });
        }
        Ok(())
    }

    /// Coefficient rows of `phi_n` over all monomials of level at most `n`.
    pub fn rows(&self, n: usize) -> DdMatrix {
        self.coeffs.submatrix(dim(n) - n - 1, 0, n + 1, dim(n))
    }

    /// `A^{(n)}_i`, the coefficients of `phi_n` on the monomials of level `i`.
    pub fn block(&self, n: usize, i: usize) -> DdMatrix {
        assert!(i <= n && n <= self.max_level);
        self.coeffs.submatrix(dim(n) - n - 1, dim(i) - i - 1, n + 1, i + 1)
    }

    /// 2-norm condition number of the leading block `A^{(n)}_n`.
    pub fn leading_condition(&self, n: usize) -> f64 {
        let sv = self.block(n, n).singular_values();
        sv[0] / sv[sv.len() - 1]
    }

    /// All `phi_0 .. phi_upto` at a point, in double-double.
    pub fn phi_all_dd(&self, upto: usize, x: Dd, y: Dd) -> Vec<Vec<Dd>> {
        let vals = monomial_values(upto, x, y);
        self.apply_levels(upto, &vals)
    }

    /// All partial derivatives `d/dt phi_0 .. phi_upto`.
    pub fn dphi_all_dd(&self, upto: usize, x: Dd, y: Dd, axis: Axis) -> Vec<Vec<Dd>> {
        let vals = monomial_derivatives(upto, x, y, axis);
        self.apply_levels(upto, &vals)
    }

    fn apply_levels(&self, upto: usize, vals: &[Dd]) -> Vec<Vec<Dd>> {
        (0..=upto)
            .map(|n| {
                (0..=n)
                    .map(|t| {
                        let g = dim(n) - n - 1 + t;
                        (0..dim(n)).map(|c| self.coeffs[(g, c)] * vals[c]).sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn phi_dd(&self, n: usize, x: f64, y: f64) -> Result<Vec<Dd>> {
        self.check_level(n)?;
        check_point(x, y)?;
        Ok(self
            .phi_all_dd(n, Dd::from(x), Dd::from(y))
            .pop()
            .unwrap_or_default())
    }

    pub fn evaluate_phi(&self, n: usize, x: f64, y: f64) -> Result<Vec<f64>> {
        Ok(self.phi_dd(n, x, y)?.into_iter().map(Dd::to_f64).collect())
    }

    /// Exact partial derivative of `phi_n` along `axis`.
    pub fn derivative_phi(&self, n: usize, x: f64, y: f64, axis: Axis) -> Result<Vec<f64>> {
        self.check_level(n)?;
        check_point(x, y)?;
        Ok(self
            .dphi_all_dd(n, Dd::from(x), Dd::from(y), axis)
            .pop()
            .unwrap_or_default()
            .into_iter()
            .map(Dd::to_f64)
            .collect())
    }

    /// `L(phi_n phi_m^T)` computed from moments.
    pub fn gram_block(&self, provider: &MomentProvider, n: usize, m: usize) -> Result<DdMatrix> {
        self.check_level(n.max(m))?;
        let top = n.max(m);
        let mm = build_moment_matrix(provider, top)?;
        let (rn, rm) = (self.rows(n), self.rows(m));
        let sub = mm.matrix().submatrix(0, 0, dim(n), dim(m));
        Ok(&(&rn * &sub) * &rm.transpose())
    }

    /// Largest deviation of `L(phi_n phi_m^T)` from `delta_{nm} I` over all
    /// `n, m <= upto`.
    pub fn orthonormality_defect(&self, provider: &MomentProvider, upto: usize) -> Result<f64> {
        self.check_level(upto)?;
        let mm = build_moment_matrix(provider, upto)?;
        let d = dim(upto);
        let c = self.coeffs.submatrix(0, 0, d, d);
        let g = &(&c * mm.matrix()) * &c.transpose();
        Ok(g.max_abs_diff(&DdMatrix::identity(d)))
    }

    /// The system with each `phi_n` replaced by `Q_n phi_n`.
    pub fn left_rotated(&self, qs: &[DdMatrix]) -> OrthoSystem {
        assert_eq!(qs.len(), self.max_level + 1);
        let mut coeffs = self.coeffs.clone();
        for (n, q) in qs.iter().enumerate() {
            let rows = self.rows(n);
            let rotated = q * &rows;
            coeffs.set_block(dim(n) - n - 1, 0, &rotated);
        }
        OrthoSystem {
            max_level: self.max_level,
            coeffs,
            min_pivot_ratio: None,
            provider: self.provider.clone(),
        }
    }

    /// Same functions truncated to a lower level.
    pub fn truncated(&self, n: usize) -> OrthoSystem {
        assert!(n <= self.max_level);
        OrthoSystem {
            max_level: n,
            coeffs: self.coeffs.submatrix(0, 0, dim(n), dim(n)),
            min_pivot_ratio: self.min_pivot_ratio,
            provider: self.provider.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Level {
            n: usize,
            blocks: Vec<Vec<String>>,
        }
        #[derive(Serialize)]
        struct Out {
            max_level: usize,
            levels: Vec<Level>,
            min_pivot_ratio: Option<String>,
            provider_fingerprint: Option<String>,
        }
        let levels = (0..=self.max_level)
            .map(|n| Level {
                n,
                blocks: (0..=n)
                    .map(|i| {
                        self.block(n, i)
                            .as_slice()
                            .iter()
                            .map(|v| v.to_decimal(TABLE_DIGITS))
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        let fingerprint = match &self.provider {
            Some(p) => Some(p.fingerprint(2 * crate::lattice::max_exponent(self.max_level))?),
            None => None,
        };
        let out = Out {
            max_level: self.max_level,
            levels,
            min_pivot_ratio: self.min_pivot_ratio.map(|r| format!("{r:.16e}")),
            provider_fingerprint: fingerprint,
        };
        Ok(serde_json::to_string_pretty(&out)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::AtomicMeasure;

    fn lebesgue() -> MomentProvider {
        MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap()
    }

    #[test]
    fn moment_matrix_small_levels() {
        let p = lebesgue();
        let m0 = build_moment_matrix(&p, 0).unwrap();
        assert_eq!(m0.matrix()[(0, 0)].to_f64(), 1.0);
        assert_eq!(m0.determinant().to_f64(), 1.0);
        let m1 = build_moment_matrix(&p, 1).unwrap();
        let expect = [1.0, 1.5, 1.5, 1.5, 7.0 / 3.0, 2.25, 1.5, 2.25, 7.0 / 3.0];
        for (v, e) in m1.matrix().as_slice().iter().zip(expect) {
            assert!((v.to_f64() - e).abs() < 1e-15);
        }
        // row x, column 1/x of M_2 is mu_{0,0}
        let m2 = build_moment_matrix(&p, 2).unwrap();
        let b = m2.block(1, 2);
        assert_eq!(b[(0, 0)].to_f64(), 1.0);
        assert_eq!(m2.block(2, 1), b.transpose());
    }

    #[test]
    fn positive_definiteness() {
        let p = lebesgue();
        for n in 0..=6 {
            assert!(is_positive_definite(&build_moment_matrix(&p, n).unwrap(), 1e-28));
        }
        let atoms = AtomicMeasure::new(vec![(1.0, 1.0, 1.0), (2.0, 1.5, 1.0), (1.2, 3.0, 1.0)]);
        let a = MomentProvider::atomic(atoms.unwrap(), 4).unwrap();
        assert!(!is_positive_definite(&build_moment_matrix(&a, 2).unwrap(), 1e-20));
        let zero = MomentMatrix {
            n: 0,
            matrix: DdMatrix::zeros(1, 1),
        };
        assert!(!is_positive_definite(&zero, 1e-13));
    }

    #[test]
    fn canonical_form_and_orthonormality() {
        let p = lebesgue();
        let s = orthonormalize(&p, 6).unwrap();
        assert_eq!(s.block(0, 0)[(0, 0)].to_f64(), 1.0);
        for n in 0..=6 {
            let a = s.block(n, n);
            for r in 0..=n {
                assert!(a[(r, r)].hi() > 0.0);
                for c in r + 1..=n {
                    assert_eq!(a[(r, c)].to_f64(), 0.0);
                }
            }
        }
        assert!(s.orthonormality_defect(&p, 6).unwrap() < 1e-20);
    }

    #[test]
    fn monomial_vectors_and_derivatives() {
        let v = evaluate_monomial_vector(3, 2.0, 3.0).unwrap();
        let e = [4.0, 1.5, 2.0 / 3.0, 9.0];
        for (a, b) in v.iter().zip(e) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(
            evaluate_monomial_vector(1, 0.0, 1.0),
            Err(Error::OnAxis { .. })
        ));
        let id = OrthoSystem::from_coefficients(2, DdMatrix::identity(6), None).unwrap();
        assert_eq!(id.derivative_phi(1, 2.0, 3.0, Axis::X).unwrap(), vec![1.0, 0.0]);
        let d = id.derivative_phi(2, 2.0, 3.0, Axis::Y).unwrap();
        // (1/x, xy, 1/y)
        assert!((d[0]).abs() < 1e-16 && (d[1] - 2.0).abs() < 1e-15);
        assert!((d[2] + 1.0 / 9.0).abs() < 1e-15);
        assert!(id.evaluate_phi(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn indefinite_moments_are_rejected() {
        let atoms = AtomicMeasure::new(vec![(1.0, 1.0, 1.0), (2.0, 1.5, 1.0), (1.2, 3.0, 1.0)]);
        let a = MomentProvider::atomic(atoms.unwrap(), 4).unwrap();
        assert!(matches!(
            orthonormalize(&a, 2),
            Err(Error::NotPositiveDefinite { level: 2, .. } | Error::IllConditioned { level: 2, .. })
        ));
    }
}
