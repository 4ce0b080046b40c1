//! Reconstruction of an orthonormal system and its moments from recurrence
//! blocks alone.
//!
//! Given the blocks, every `phi_{n+2}` (`n >= 1`) follows
//! from the left-inverse recursion
//!
//! ```text
//! phi_{n+2} = Dbar^T ( [(x+1/x) phi_n; (y+1/y) phi_n] - sum_{s<=n+1} D_s phi_s )
//! ```
//!
//! starting from the seeds `phi_0`, `phi_1`, `phi_2`. The blocks only see the
//! algebra generated by `x+1/x` and `y+1/y`, over which the Laurent
//! polynomials are a free module with basis `1, x, y, xy`, and they do not
//! change when the functional is scaled; the seeds carry the remaining
//! degrees of freedom (the mass and 12 more) and travel with the data. The relations the recursion
//! does not enforce by itself (level zero and, for `n >= 1`, the part of the
//! bracket outside the range of the stacked `D_{n+2}`) are reported as the
//! seed residual. With the functions in hand, orthonormality gives the moment
//! matrix `R R^T` with `R` the inverse of the coefficient matrix.

use std::collections::BTreeMap;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::lattice::{dim, Axis, Monomial};
use crate::linalg::DdMatrix;
use crate::moments::MomentProvider;
use crate::ortho::OrthoSystem;

use super::{left_inverse_tol, neighbours, stacked_top, structural_report, RecurrenceData, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FavardOptions {
    pub rank_tol: f64,
    pub symmetry_tol: f64,
}

impl Default for FavardOptions {
    fn default() -> Self {
        FavardOptions {
            rank_tol: RANK_TOL,
            symmetry_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FavardResult {
    pub system: OrthoSystem,
    /// Moments of the reconstructed functional on the largest complete window.
    pub provider: MomentProvider,
    pub window: i64,
    /// Largest disagreement between entries of `R R^T` that should carry the
    /// same moment.
    pub moment_consistency: f64,
    /// Largest residual of the relations not enforced by the recursion.
    pub seed_residual: f64,
}

const SEEDS: usize = 1 + 6 + 18;

pub fn favard_reconstruct(data: &RecurrenceData) -> Result<FavardResult> {
    favard_reconstruct_with(data, &FavardOptions::default())
}

/// `(t + 1/t)` applied to coefficient rows over the first `width` monomials.
fn shift_rows(rows: &DdMatrix, axis: Axis, width: usize) -> DdMatrix {
    let u = axis.unit();
    let mut out = DdMatrix::zeros(rows.rows(), width);
    for c in 0..rows.cols() {
        let m = Monomial::from_global_index(c);
        let targets = [
            m.times(u).global_index(),
            m.times(Monomial::new(-u.i, -u.j)).global_index(),
        ];
        for r in 0..rows.rows() {
            let v = rows[(r, c)];
            if v.hi() == 0.0 {
                continue;
            }
            for &t in &targets {
                assert!(t < width, "shift leaves the coefficient window");
                out[(r, t)] += v;
            }
        }
    }
    out
}

struct Recursion<'a> {
    data: &'a RecurrenceData,
    big_n: usize,
    width: usize,
    left_inverses: Vec<DdMatrix>,
}

impl Recursion<'_> {
    fn stacked(&self, n: usize, s: usize) -> DdMatrix {
        let a = self.data.block(n, s, Axis::X).expect("checked block");
        let b = self.data.block(n, s, Axis::Y).expect("checked block");
        a.vstack(b)
    }

    /// Bracket `[(x+1/x) phi_n; (y+1/y) phi_n] - sum_{s<=upper} D_s phi_s`.
    fn bracket(&self, phi: &[DdMatrix], n: usize, upper: usize) -> DdMatrix {
        let mut r = shift_rows(&phi[n], Axis::X, self.width).vstack(&shift_rows(
            &phi[n],
            Axis::Y,
            self.width,
        ));
        for s in neighbours(n, upper) {
            r = &r - &(&self.stacked(n, s) * &phi[s]);
        }
        r
    }

    /// Functions `phi_0..phi_N` and the flattened residuals for given seeds.
    fn run(&self, seeds: &[Dd]) -> (Vec<DdMatrix>, Vec<Dd>) {
        let w = self.width;
        let mut phi = Vec::with_capacity(self.big_n + 1);
        let mut p0 = DdMatrix::zeros(1, w);
        p0[(0, 0)] = seeds[0];
        phi.push(p0);
        phi.push(DdMatrix::from_fn(2, w, |r, c| {
            if c < 3 {
                seeds[1 + r * 3 + c]
            } else {
                Dd::ZERO
            }
        }));
        phi.push(DdMatrix::from_fn(3, w, |r, c| {
            if c < 6 {
                seeds[7 + r * 6 + c]
            } else {
                Dd::ZERO
            }
        }));
        let mut residual: Vec<Dd> = self.bracket(&phi, 0, 2).as_slice().to_vec();
        for n in 1..=self.big_n - 2 {
            let r = self.bracket(&phi, n, n + 1);
            let next = &self.left_inverses[n] * &r;
            let miss = &r - &(&self.stacked(n, n + 2) * &next);
            residual.extend_from_slice(miss.as_slice());
            phi.push(next);
        }
        (phi, residual)
    }
}

pub fn favard_reconstruct_with(data: &RecurrenceData, opts: &FavardOptions) -> Result<FavardResult> {
    let big_n = data.max_level();
    if big_n < 4 {
        return Err(Error::InvalidInput(format!(
            "reconstruction needs recurrence data through level 4 or more, got {big_n}"
        )));
    }
    for n in 0..=big_n {
        for s in neighbours(n, big_n) {
            for axis in Axis::BOTH {
                if data.block(n, s, axis).is_none() {
                    return Err(Error::InvalidInput(format!(
                        "missing block D^({n})_({s},{})",
                        axis.number()
                    )));
                }
            }
        }
    }

    let report = structural_report(data, opts.rank_tol);
    if let Some(f) = report.first_rank_failure() {
        return Err(Error::RankDeficient {
            condition: f.condition.clone(),
            rank: f.rank,
            expected: f.expected,
        });
    }
    if report.transpose_symmetry > opts.symmetry_tol {
        return Err(Error::SymmetryViolated {
            condition: "D_{s,i}^{(n)} = (D_{n,i}^{(s)})^T".into(),
            deviation: report.transpose_symmetry,
        });
    }
    if report.diagonal_symmetry > opts.symmetry_tol {
        return Err(Error::SymmetryViolated {
            condition: "D_{n,i}^{(n)} symmetric".into(),
            deviation: report.diagonal_symmetry,
        });
    }

    let mut left_inverses = vec![DdMatrix::zeros(0, 0)];
    for n in 1..=big_n - 2 {
        let st = stacked_top(data, n).expect("checked block");
        left_inverses.push(left_inverse_tol(&st, opts.rank_tol).map_err(|e| match e {
            Error::LeftInverseIllConditioned { ratio, .. } => {
                Error::LeftInverseIllConditioned { level: n, ratio }
            }
            other => other,
        })?);
    }
    let rec = Recursion {
        data,
        big_n,
        width: dim(big_n),
        left_inverses,
    };

    let Some((phi0, phi1, phi2)) = data.initial_levels() else {
        return Err(Error::InvalidInput(
            "initial levels phi_0, phi_1, phi_2 are required: the blocks leave them free".into(),
        ));
    };
    if !(phi0 > Dd::ZERO) {
        return Err(Error::InvalidInput(format!("phi_0 = {phi0} must be positive")));
    }
    let mut seeds = Vec::with_capacity(SEEDS);
    seeds.push(phi0);
    seeds.extend_from_slice(phi1.as_slice());
    seeds.extend_from_slice(phi2.as_slice());
    let (phi, residual) = rec.run(&seeds);
    let seed_residual = residual.iter().fold(0.0f64, |m, v| m.max(v.abs().to_f64()));

    let w = dim(big_n);
    let mut coeffs = DdMatrix::zeros(w, w);
    for (n, p) in phi.iter().enumerate() {
        coeffs.set_block(dim(n) - n - 1, 0, p);
    }
    for n in 0..=big_n {
        if coeffs
            .submatrix(dim(n) - n - 1, dim(n) - n - 1, n + 1, n + 1)
            .determinant()
            .hi()
            == 0.0
        {
            return Err(Error::RankDeficient {
                condition: format!("leading block A_{n}^{{({n})}}"),
                rank: n,
                expected: n + 1,
            });
        }
    }
    let r = coeffs.inverse().ok_or_else(|| Error::RankDeficient {
        condition: "coefficient matrix".into(),
        rank: w - 1,
        expected: w,
    })?;
    let gram = &r * &r.transpose();

    let monos: Vec<Monomial> = (0..w).map(Monomial::from_global_index).collect();
    let mut seen: BTreeMap<(i64, i64), Dd> = BTreeMap::new();
    let mut consistency = 0.0f64;
    for g in 0..w {
        for h in 0..w {
            let e = monos[g].times(monos[h]);
            let v = gram[(g, h)];
            match seen.get(&(e.i, e.j)) {
                Some(&first) => consistency = consistency.max((v - first).abs().to_f64()),
                None => {
                    seen.insert((e.i, e.j), v);
                }
            }
        }
    }
    let mut window = 0i64;
    while (-(window + 1)..=window + 1)
        .all(|i| (-(window + 1)..=window + 1).all(|j| seen.contains_key(&(i, j))))
    {
        window += 1;
    }
    let entries: BTreeMap<(i64, i64), Dd> = seen
        .into_iter()
        .filter(|((i, j), _)| i.abs() <= window && j.abs() <= window)
        .collect();
    let provider = MomentProvider::from_table(window, entries)?;
    let system = OrthoSystem::from_coefficients(big_n, coeffs, Some(provider.clone()))?;
    Ok(FavardResult {
        system,
        provider,
        window,
        moment_consistency: consistency,
        seed_residual,
    })
}
