//! One-variable balanced Laurent polynomials and the tensor-product system for
//! product measures.
//!
//! In one variable the ordering is `1, x, 1/x, x^2, 1/x^2, ...`, position `k`
//! holding the exponent `c_k`, and
//!
//! ```text
//! C_n psi_{n+1} = (Omega_n x - 1) psi_n - C_{n-1} psi_{n-1}     n even
//! C_n psi_{n+1} = (1 - Omega_n / x) psi_n - C_{n-1} psi_{n-1}   n odd
//! ```
//!
//! with `Omega_n` fixed by `psi_{n+1} ⊥ psi_n` and `C_n > 0` by normalization.

use serde::Serialize;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::lattice::{c_seq, dim, inv_c, Axis, Monomial};
use crate::linalg::DdMatrix;
use crate::moments::{MomentProvider, UnivariateMoments};
use crate::ortho::OrthoSystem;
use crate::recurrence::{neighbours, RecurrenceData};

#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateSystem {
    moments: UnivariateMoments,
    /// `psi[n][k]` multiplies `x^{c_k}`.
    psi: Vec<Vec<Dd>>,
    omega: Vec<Dd>,
    c: Vec<Dd>,
}

fn moment(m: &UnivariateMoments, k: i64) -> Result<Dd> {
    m.get(k).ok_or(Error::WindowExceeded {
        i: k,
        j: 0,
        window: (-m.kmin).min(m.kmax()),
    })
}

/// `<f, g>` for coefficient vectors over the balanced ordering, with `f`
/// multiplied by `x^shift`.
fn inner(m: &UnivariateMoments, f: &[Dd], g: &[Dd], shift: i64) -> Result<Dd> {
    let mut acc = Dd::ZERO;
    for (a, &fa) in f.iter().enumerate() {
        if fa.hi() == 0.0 {
            continue;
        }
        for (b, &gb) in g.iter().enumerate() {
            if gb.hi() == 0.0 {
                continue;
            }
            acc += fa * gb * moment(m, c_seq(a) + c_seq(b) + shift)?;
        }
    }
    Ok(acc)
}

/// Coefficients of `x^shift * f` for `shift = +-1`.
fn shifted(f: &[Dd], shift: i64, len: usize) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; len];
    for (a, &fa) in f.iter().enumerate() {
        if fa.hi() != 0.0 {
            out[inv_c(c_seq(a) + shift)] += fa;
        }
    }
    out
}

/// Builds `psi_0 .. psi_{n+1}` with `Omega_0 .. Omega_n` and `C_0 .. C_n`.
pub fn build_univariate(moments: &UnivariateMoments, n: usize) -> Result<UnivariateSystem> {
    let m0 = moment(moments, 0)?;
    let m1 = moment(moments, 1)?;
    if m0.hi() <= 0.0 {
        return Err(Error::Univariate {
            n: 0,
            reason: format!("m_0 = {} is not positive", m0.to_f64()),
        });
    }
    if m1.hi() <= 0.0 {
        return Err(Error::Univariate {
            n: 0,
            reason: format!("m_1 = {} is not positive", m1.to_f64()),
        });
    }
    let len = n + 3;
    let mut psi = vec![{
        let mut v = vec![Dd::ZERO; len];
        v[0] = m0.sqrt().recip();
        v
    }];
    let mut omega = Vec::with_capacity(n + 1);
    let mut cs: Vec<Dd> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let cur = &psi[k];
        let shift = if k % 2 == 0 { 1 } else { -1 };
        let q = inner(moments, cur, cur, shift)?;
        if q.hi() <= 0.0 {
            return Err(Error::Univariate {
                n: k,
                reason: format!("<t psi_n, psi_n> = {} is not positive", q.to_f64()),
            });
        }
        let om = q.recip();
        let moved = shifted(cur, shift, len);
        let mut next: Vec<Dd> = if k % 2 == 0 {
            moved.iter().zip(cur).map(|(&a, &b)| om * a - b).collect()
        } else {
            moved.iter().zip(cur).map(|(&a, &b)| b - om * a).collect()
        };
        if k >= 1 {
            let cp = cs[k - 1];
            for (v, &p) in next.iter_mut().zip(&psi[k - 1]) {
                *v -= cp * p;
            }
        }
        let norm2 = inner(moments, &next, &next, 0)?;
        if !(norm2.hi() > 0.0) {
            return Err(Error::Univariate {
                n: k,
                reason: format!("C_n^2 = {} is not positive", norm2.to_f64()),
            });
        }
        let c = norm2.sqrt();
        let inv = c.recip();
        next.iter_mut().for_each(|v| *v = *v * inv);
        omega.push(om);
        cs.push(c);
        psi.push(next);
    }
    Ok(UnivariateSystem {
        moments: moments.clone(),
        psi,
        omega,
        c: cs,
    })
}

impl UnivariateSystem {
    /// Highest `n` with `psi_n` available.
    pub fn max_level(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn moments(&self) -> &UnivariateMoments {
        &self.moments
    }

    pub fn psi_coefficients(&self, n: usize) -> &[Dd] {
        &self.psi[n][..=n]
    }

    pub fn omega(&self, n: usize) -> f64 {
        self.omega[n].to_f64()
    }

    pub fn c(&self, n: usize) -> f64 {
        self.c[n].to_f64()
    }

    /// `Omega_n`, with `Omega_{-1} = 1`.
    pub fn omega_dd(&self, n: i64) -> Dd {
        if n < 0 {
            Dd::ONE
        } else {
            self.omega[n as usize]
        }
    }

    /// `C_n`, with `C_{-1} = 0`.
    pub fn c_dd(&self, n: i64) -> Dd {
        if n < 0 {
            Dd::ZERO
        } else {
            self.c[n as usize]
        }
    }

    /// Number of `(Omega_n, C_n)` pairs.
    pub fn coefficient_count(&self) -> usize {
        self.omega.len()
    }

    pub fn evaluate_dd(&self, n: usize, x: Dd) -> Dd {
        self.psi[n]
            .iter()
            .enumerate()
            .map(|(k, &a)| a * x.powi(c_seq(k) as i32))
            .sum()
    }

    pub fn evaluate(&self, n: usize, x: f64) -> f64 {
        self.evaluate_dd(n, Dd::from(x)).to_f64()
    }

    /// `<psi_n, psi_m>` from the moments.
    pub fn gram(&self, n: usize, m: usize) -> Result<Dd> {
        inner(&self.moments, &self.psi[n], &self.psi[m], 0)
    }

    /// `<(t + 1/t) psi_k, psi_l>`.
    pub fn jacobi_entry(&self, k: usize, l: usize) -> Result<Dd> {
        Ok(inner(&self.moments, &self.psi[k], &self.psi[l], 1)?
            + inner(&self.moments, &self.psi[k], &self.psi[l], -1)?)
    }

    pub fn gamma(&self, l: usize) -> Dd {
        let l = l as i64;
        self.c_dd(l) * self.c_dd(l + 1) / self.omega_dd(l + 1)
    }

    pub fn delta(&self, l: usize) -> Dd {
        let li = l as i64;
        let v = self.c_dd(li) * (self.omega_dd(li).recip() - self.omega_dd(li + 1).recip());
        if l % 2 == 0 {
            v
        } else {
            -v
        }
    }

    pub fn xi(&self, l: usize) -> Dd {
        let l = l as i64;
        let om = self.omega_dd(l);
        om + om.recip()
            + self.c_dd(l).sqr() / self.omega_dd(l + 1)
            + self.c_dd(l - 1).sqr() / self.omega_dd(l - 1)
    }

    /// `(n, Omega_n, C_n)` rows.
    pub fn table(&self) -> Vec<(usize, f64, f64)> {
        (0..self.coefficient_count())
            .map(|n| (n, self.omega(n), self.c(n)))
            .collect()
    }
}

/// `phi_{n,k}(x, y) = psi^x_{n-k}(x) psi^y_k(y)`.
#[derive(Clone, Debug)]
pub struct TensorSystem {
    sx: UnivariateSystem,
    sy: UnivariateSystem,
    system: OrthoSystem,
}

pub fn build_tensor(sx: &UnivariateSystem, sy: &UnivariateSystem, n: usize) -> Result<TensorSystem> {
    let avail = sx.max_level().min(sy.max_level());
    if n > avail {
        return Err(Error::LevelOutOfRange { level: n, max: avail });
    }
    let d = dim(n);
    let mut coeffs = DdMatrix::zeros(d, d);
    for level in 0..=n {
        for k in 0..=level {
            let row = dim(level) - level - 1 + k;
            let px = sx.psi_coefficients(level - k);
            let py = sy.psi_coefficients(k);
            for (a, &ca) in px.iter().enumerate() {
                for (b, &cb) in py.iter().enumerate() {
                    let g = Monomial::new(c_seq(a), c_seq(b)).global_index();
                    coeffs[(row, g)] += ca * cb;
                }
            }
        }
    }
    let provider = MomentProvider::from_univariate(sx.moments().clone(), sy.moments().clone()).ok();
    Ok(TensorSystem {
        sx: sx.clone(),
        sy: sy.clone(),
        system: OrthoSystem::from_coefficients(n, coeffs, provider)?,
    })
}

impl TensorSystem {
    pub fn system(&self) -> &OrthoSystem {
        &self.system
    }

    pub fn factors(&self) -> (&UnivariateSystem, &UnivariateSystem) {
        (&self.sx, &self.sy)
    }

    pub fn max_level(&self) -> usize {
        self.system.max_level()
    }

    /// `phi_{n,k}(x, y)` straight from the factors.
    pub fn phi_nk(&self, n: usize, k: usize, x: f64, y: f64) -> f64 {
        (self.sx.evaluate_dd(n - k, Dd::from(x)) * self.sy.evaluate_dd(k, Dd::from(y))).to_f64()
    }
}

/// Explicit blocks along `axis` in the tensor basis through level `n`.
///
/// Along `y`, `(y + 1/y) phi_{n,k}` only moves the second index, so
/// `D^{(n)}_{n+2}[k][k+2] = Gamma_k`, `D^{(n)}_{n+1}[k][k+1] = Delta_k` and
/// `D^{(n)}_n[k][k] = Xi_k`, all from the `y` factor. Along `x` the first index
/// moves instead and the same entries sit on the main diagonal, read from the
/// `x` factor at `n-k`.
pub fn explicit_blocks(factor: &UnivariateSystem, axis: Axis, n: usize) -> Result<RecurrenceData> {
    if factor.coefficient_count() < n + 2 {
        return Err(Error::LevelOutOfRange {
            level: n + 1,
            max: factor.coefficient_count().saturating_sub(1),
        });
    }
    let mut data = RecurrenceData::new(n);
    let upper = |level: usize, s: usize| -> DdMatrix {
        let mut b = DdMatrix::zeros(level + 1, s + 1);
        for k in 0..=level {
            let v = match (axis, s - level) {
                (Axis::Y, 2) => factor.gamma(k),
                (Axis::Y, 1) => factor.delta(k),
                (Axis::Y, _) => factor.xi(k),
                (Axis::X, 2) => factor.gamma(level - k),
                (Axis::X, 1) => factor.delta(level - k),
                (Axis::X, _) => factor.xi(level - k),
            };
            let col = match axis {
                Axis::Y => k + s - level,
                Axis::X => k,
            };
            b[(k, col)] = v;
        }
        b
    };
    for level in 0..=n {
        for s in neighbours(level, n) {
            let b = if s >= level {
                upper(level, s)
            } else {
                upper(s, level).transpose()
            };
            data.insert(level, s, axis, b);
        }
    }
    Ok(data)
}

pub fn explicit_f2_blocks(sys_y: &UnivariateSystem, n: usize) -> Result<RecurrenceData> {
    explicit_blocks(sys_y, Axis::Y, n)
}

pub fn explicit_f1_blocks(sys_x: &UnivariateSystem, n: usize) -> Result<RecurrenceData> {
    explicit_blocks(sys_x, Axis::X, n)
}

/// `Q_n = <phi^a_n, (phi^b_n)^T>`; orthonormal systems of one functional have
/// `phi^a_n = Q_n phi^b_n` with `Q_n` orthogonal.
pub fn cross_gram(
    a: &OrthoSystem,
    b: &OrthoSystem,
    provider: &MomentProvider,
    n: usize,
) -> Result<Vec<DdMatrix>> {
    let mm = crate::ortho::build_moment_matrix(provider, n)?;
    (0..=n)
        .map(|k| Ok(&(&a.rows(k) * &mm.matrix().submatrix(0, 0, dim(k), dim(k))) * &b.rows(k).transpose()))
        .collect()
}

/// Blocks re-expressed in the basis `phi^b = Q^T phi^a`.
pub fn align_blocks(data: &RecurrenceData, qs: &[DdMatrix]) -> RecurrenceData {
    let mut out = RecurrenceData::new(data.max_level());
    for (&(n, s, axis), d) in data.iter() {
        if n < qs.len() && s < qs.len() {
            out.insert(n, s, axis, &(&qs[n].transpose() * d) * &qs[s]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaEntry {
    /// 1: odd step from an even `psi`, 2: even step from an odd one, 3: the
    /// first step `phi_{1,1}`.
    pub identity: u8,
    pub n: usize,
    pub m: usize,
    /// `None` when the indices fall outside the identity's range.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub entries: Vec<LemmaEntry>,
}

impl LemmaReport {
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| e.residual)
            .fold(0.0, f64::max)
    }

    pub fn evaluated(&self) -> usize {
        self.entries.iter().filter(|e| e.residual.is_some()).count()
    }

    pub fn not_applicable(&self) -> usize {
        self.entries.len() - self.evaluated()
    }
}

/// Pointwise residuals of the `y`-recurrences of the tensor family for all
/// `n <= big_n` and `m` up to `big_n / 2 + 1`.
pub fn lemma_recurrences_check(
    tensor: &TensorSystem,
    big_n: usize,
    points: &[(f64, f64)],
) -> Result<LemmaReport> {
    let top = big_n.min(tensor.max_level());
    let sy = &tensor.sy;
    for &(x, y) in points {
        if x == 0.0 || y == 0.0 {
            return Err(Error::OnAxis { x, y });
        }
    }
    let phi = |n: usize, k: usize, x: f64, y: f64| -> Dd {
        tensor.sx.evaluate_dd(n - k, Dd::from(x)) * sy.evaluate_dd(k, Dd::from(y))
    };
    let worst = |f: &dyn Fn(f64, f64) -> Dd| -> f64 {
        points
            .iter()
            .fold(0.0f64, |acc, &(x, y)| acc.max(f(x, y).abs().to_f64()))
    };
    let mut entries = Vec::new();
    for n in 0..=top {
        for m in 0..=top / 2 + 1 {
            // C_{2m} phi_{n,2m+1} = (Omega_{2m} y - 1) phi_{n-1,2m} - C_{2m-1} phi_{n-2,2m-1}
            let ok1 = m >= 1 && 2 * m + 1 <= n;
            let r1 = ok1.then(|| {
                let (e, o) = (2 * m, 2 * m + 1);
                worst(&|x, y| {
                    let yd = Dd::from(y);
                    sy.c_dd(e as i64) * phi(n, o, x, y)
                        - (sy.omega_dd(e as i64) * yd - Dd::ONE) * phi(n - 1, e, x, y)
                        + sy.c_dd(e as i64 - 1) * phi(n - 2, e - 1, x, y)
                })
            });
            entries.push(LemmaEntry {
                identity: 1,
                n,
                m,
                residual: r1,
            });
            // C_{2m+1} phi_{n+1,2m+2} = (1 - Omega_{2m+1}/y) phi_{n,2m+1} - C_{2m} phi_{n-1,2m}
            let ok2 = 2 * m + 1 <= n && n < top;
            let r2 = ok2.then(|| {
                let (e, o) = (2 * m, 2 * m + 1);
                worst(&|x, y| {
                    let yd = Dd::from(y);
                    sy.c_dd(o as i64) * phi(n + 1, o + 1, x, y)
                        - (Dd::ONE - sy.omega_dd(o as i64) / yd) * phi(n, o, x, y)
                        + sy.c_dd(e as i64) * phi(n - 1, e, x, y)
                })
            });
            entries.push(LemmaEntry {
                identity: 2,
                n,
                m,
                residual: r2,
            });
        }
    }
    let r3 = (top >= 1).then(|| {
        worst(&|x, y| {
            sy.c_dd(0) * phi(1, 1, x, y) - (sy.omega_dd(0) * Dd::from(y) - Dd::ONE) * phi(0, 0, x, y)
        })
    });
    entries.push(LemmaEntry {
        identity: 3,
        n: 1,
        m: 0,
        residual: r3,
    });
    Ok(LemmaReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{analytic_univariate_moments, Weight};

    fn lebesgue_1d(n: usize) -> UnivariateSystem {
        let w = n as i64 + 4;
        let m = analytic_univariate_moments(Weight::Lebesgue, 1.0, 2.0, -w, w).unwrap();
        build_univariate(&m, n).unwrap()
    }

    #[test]
    fn initial_coefficients() {
        let s = lebesgue_1d(3);
        assert!((s.omega(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.c(0) - 1.0 / (3.0 * 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn constant_for_mass_four() {
        let m = UnivariateMoments {
            kmin: -3,
            values: [0.5, 1.0, 2.0, 4.0, 9.0, 21.0, 50.0]
                .iter()
                .map(|&v| Dd::from(v))
                .collect(),
        };
        let s = build_univariate(&m, 0).unwrap();
        assert_eq!(s.psi_coefficients(0)[0].to_f64(), 0.5);
    }

    #[test]
    fn orthonormal_and_positive() {
        let s = lebesgue_1d(8);
        for n in 0..=8 {
            for m in 0..=8 {
                let g = s.gram(n, m).unwrap().to_f64();
                let e = if n == m { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-15, "{n} {m} {g}");
            }
            assert!(s.omega(n) > 0.0 && s.c(n) > 0.0);
        }
    }

    #[test]
    fn jacobi_entries_match_closed_forms() {
        let s = lebesgue_1d(8);
        for l in 0..=6 {
            let g = s.jacobi_entry(l, l + 2).unwrap() - s.gamma(l);
            let d = s.jacobi_entry(l, l + 1).unwrap() - s.delta(l);
            let x = s.jacobi_entry(l, l).unwrap() - s.xi(l);
            for v in [g, d, x] {
                assert!(v.abs().to_f64() < 1e-15, "{l} {}", v.to_f64());
            }
        }
    }

    #[test]
    fn rejects_nonpositive_first_moment() {
        let m = UnivariateMoments {
            kmin: -2,
            values: [1.0, 1.0, 1.0, -1.0, 1.0].iter().map(|&v| Dd::from(v)).collect(),
        };
        assert!(matches!(build_univariate(&m, 1), Err(Error::Univariate { n: 0, .. })));
    }
}
