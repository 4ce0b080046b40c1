//! Five-term recurrence blocks `D^{(n)}_{s,i}`.
//!
//! `D^{(n)}_{s,i} = L((t + 1/t) phi_n phi_s^T)` with `t = x` for `i = 1` and
//! `t = y` for `i = 2`. The blocks are computed from coefficients and moments
//! alone: with `C` the coefficient rows and `T_i` the Gram matrix of the
//! monomials shifted by `t` and `1/t`, all blocks are sub-blocks of
//! `C T_i C^T`.

mod favard;

use std::collections::BTreeMap;

use serde::Serialize;

pub use favard::{favard_reconstruct, favard_reconstruct_with, FavardOptions, FavardResult};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::lattice::{dim, max_exponent, Axis, Monomial};
use crate::linalg::{numerical_rank, DdMatrix};
use crate::moments::{MomentProvider, TABLE_DIGITS};
use crate::ortho::{monomial_values, OrthoSystem};

/// Default relative singular value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceData {
    max_level: usize,
    blocks: BTreeMap<(usize, usize, Axis), DdMatrix>,
    // phi_0 and the coefficient rows of phi_1 (2 x 3) and phi_2 (3 x 6); the
    // blocks are blind to the total mass and fix the functional only on the
    // algebra generated by x+1/x and y+1/y
    initial: Option<(Dd, DdMatrix, DdMatrix)>,
}

fn offset(n: usize) -> usize {
    dim(n) - n - 1
}

/// Levels `s` coupled to `n` by the five-term relation, capped at `max`.
pub fn neighbours(n: usize, max: usize) -> impl Iterator<Item = usize> {
    (n.saturating_sub(2)..=n + 2).filter(move |&s| s <= max)
}

impl RecurrenceData {
    pub fn new(max_level: usize) -> Self {
        RecurrenceData {
            max_level,
            blocks: BTreeMap::new(),
            initial: None,
        }
    }

    /// Attaches the constant `phi_0` and `phi_1`, `phi_2` as coefficient rows
    /// over the first 3 and 6 monomials.
    pub fn set_initial_levels(&mut self, phi0: Dd, phi1: DdMatrix, phi2: DdMatrix) {
        assert_eq!(phi1.shape(), (2, dim(1)));
        assert_eq!(phi2.shape(), (3, dim(2)));
        self.initial = Some((phi0, phi1, phi2));
    }

    pub fn initial_levels(&self) -> Option<(Dd, &DdMatrix, &DdMatrix)> {
        self.initial.as_ref().map(|(c, a, b)| (*c, a, b))
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn block(&self, n: usize, s: usize, axis: Axis) -> Option<&DdMatrix> {
        self.blocks.get(&(n, s, axis))
    }

    pub fn block_mut(&mut self, n: usize, s: usize, axis: Axis) -> Option<&mut DdMatrix> {
        self.blocks.get_mut(&(n, s, axis))
    }

    /// Inserts `D^{(n)}_{s,axis}`; the shape must be `(n+1) x (s+1)`.
    pub fn insert(&mut self, n: usize, s: usize, axis: Axis, block: DdMatrix) {
        assert_eq!(block.shape(), (n + 1, s + 1), "block shape for ({n},{s})");
        assert!(n.abs_diff(s) <= 2 && n.max(s) <= self.max_level);
        self.blocks.insert((n, s, axis), block);
    }

    pub fn has_axis(&self, axis: Axis) -> bool {
        self.blocks.keys().any(|k| k.2 == axis)
    }

    /// Pairs `(n, s)` with `s > N` whose blocks are not available.
    pub fn omitted(&self) -> Vec<(usize, usize)> {
        (0..=self.max_level)
            .flat_map(|n| (self.max_level + 1..=n + 2).map(move |s| (n, s)))
            .collect()
    }

    /// Highest `n` whose five-term relation has every block.
    pub fn complete_through(&self) -> Option<usize> {
        self.max_level.checked_sub(2)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize, Axis), &DdMatrix)> {
        self.blocks.iter()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Block {
            n: usize,
            s: usize,
            axis: u8,
            rows: usize,
            cols: usize,
            values: Vec<String>,
        }
        #[derive(Serialize)]
        struct Out {
            max_level: usize,
            omitted: Vec<(usize, usize)>,
            #[serde(skip_serializing_if = "Option::is_none")]
            initial_levels: Option<[Vec<Vec<String>>; 3]>,
            blocks: Vec<Block>,
        }
        let rows = |m: &DdMatrix| -> Vec<Vec<String>> {
            (0..m.rows())
                .map(|r| (0..m.cols()).map(|c| m[(r, c)].to_decimal(TABLE_DIGITS)).collect())
                .collect()
        };
        let blocks = self
            .blocks
            .iter()
            .map(|(&(n, s, axis), b)| Block {
                n,
                s,
                axis: axis.number(),
                rows: b.rows(),
                cols: b.cols(),
                values: b.as_slice().iter().map(|v| v.to_decimal(TABLE_DIGITS)).collect(),
            })
            .collect();
        let out = Out {
            max_level: self.max_level,
            omitted: self.omitted(),
            initial_levels: self
                .initial
                .as_ref()
                .map(|(c, a, b)| [vec![vec![c.to_decimal(TABLE_DIGITS)]], rows(a), rows(b)]),
            blocks,
        };
        Ok(serde_json::to_string_pretty(&out)? + "\n")
    }
}

/// Gram matrix of `(t + 1/t) x^{a} y^{b}` against `x^{c} y^{d}` over all
/// monomials of level at most `n`.
fn shifted_gram(provider: &MomentProvider, n: usize, axis: Axis) -> Result<DdMatrix> {
    let monos: Vec<Monomial> = (0..dim(n)).map(Monomial::from_global_index).collect();
    let u = axis.unit();
    let d = monos.len();
    let mut g = DdMatrix::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let e = monos[r].times(monos[c]);
            let v = provider.moment(e.i + u.i, e.j + u.j)? + provider.moment(e.i - u.i, e.j - u.j)?;
            g[(r, c)] = v;
            g[(c, r)] = v;
        }
    }
    Ok(g)
}

pub fn compute_recurrence(system: &OrthoSystem, provider: &MomentProvider) -> Result<RecurrenceData> {
    let big_n = system.max_level();
    let need = 2 * max_exponent(big_n) + 1;
    if provider.window() < need {
        return Err(Error::WindowExceeded {
            i: need,
            j: 0,
            window: provider.window(),
        });
    }
    let c = system.coefficients();
    let mut data = RecurrenceData::new(big_n);
    for axis in Axis::BOTH {
        let t = shifted_gram(provider, big_n, axis)?;
        let f = &(c * &t) * &c.transpose();
        for n in 0..=big_n {
            for s in neighbours(n, big_n) {
                data.insert(n, s, axis, f.submatrix(offset(n), offset(s), n + 1, s + 1));
            }
        }
    }
    if big_n >= 2 {
        data.set_initial_levels(
            c[(0, 0)],
            c.submatrix(1, 0, 2, dim(1)),
            c.submatrix(3, 0, 3, dim(2)),
        );
    }
    Ok(data)
}

fn axis_value(axis: Axis, x: Dd, y: Dd) -> Dd {
    let t = match axis {
        Axis::X => x,
        Axis::Y => y,
    };
    t + t.recip()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelResidual {
    pub level: usize,
    pub axis: u8,
    pub max_residual: f64,
}

/// Max-norm residual of `(t + 1/t) phi_n - sum_s D^{(n)}_s phi_s` over the
/// sample points, for every `n` with a complete relation and every axis
/// present in `data`.
pub fn verify_five_term(
    system: &OrthoSystem,
    data: &RecurrenceData,
    points: &[(f64, f64)],
) -> Result<Vec<LevelResidual>> {
    let Some(top) = data.complete_through() else {
        return Ok(Vec::new());
    };
    let top = top.min(system.max_level().saturating_sub(2));
    let upto = (top + 2).min(system.max_level());
    let mut out = Vec::new();
    let mut values = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if x == 0.0 || y == 0.0 {
            return Err(Error::OnAxis { x, y });
        }
        values.push((Dd::from(x), Dd::from(y), system.phi_all_dd(upto, Dd::from(x), Dd::from(y))));
    }
    for axis in Axis::BOTH {
        if !data.has_axis(axis) {
            continue;
        }
        for n in 0..=top {
            let mut worst = 0.0f64;
            for (x, y, phi) in &values {
                let tv = axis_value(axis, *x, *y);
                let mut r: Vec<Dd> = phi[n].iter().map(|&v| v * tv).collect();
                for s in neighbours(n, upto) {
                    let d = data.block(n, s, axis).ok_or_else(|| {
                        Error::InvalidInput(format!("missing block D^({n})_({s},{})", axis.number()))
                    })?;
                    let ds = d.mul_vec(&phi[s]);
                    for (ri, v) in r.iter_mut().zip(ds) {
                        *ri -= v;
                    }
                }
                worst = r.iter().fold(worst, |m, v| m.max(v.abs().to_f64()));
            }
            out.push(LevelResidual {
                level: n,
                axis: axis.number(),
                max_residual: worst,
            });
        }
    }
    Ok(out)
}

/// Truncated block-pentadiagonal matrix of multiplication by `t + 1/t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedOperator {
    pub axis: Axis,
    pub max_level: usize,
    pub matrix: DdMatrix,
}

impl BandedOperator {
    pub fn block(&self, r: usize, c: usize) -> DdMatrix {
        self.matrix.submatrix(offset(r), offset(c), r + 1, c + 1)
    }

    /// Largest entrywise deviation from block (and hence plain) symmetry.
    pub fn asymmetry(&self) -> f64 {
        self.matrix.max_abs_diff(&self.matrix.transpose())
    }

    /// Applies the operator to the stacked values `phi_0 .. phi_N` at a point.
    pub fn apply(&self, stacked: &[Dd]) -> Vec<Dd> {
        self.matrix.mul_vec(stacked)
    }
}

pub fn assemble_operator(data: &RecurrenceData, axis: Axis) -> Result<BandedOperator> {
    let big_n = data.max_level();
    let mut m = DdMatrix::zeros(dim(big_n), dim(big_n));
    for n in 0..=big_n {
        for s in neighbours(n, big_n) {
            let b = data.block(n, s, axis).ok_or_else(|| {
                Error::InvalidInput(format!("missing block D^({n})_({s},{})", axis.number()))
            })?;
            m.set_block(offset(n), offset(s), b);
        }
    }
    Ok(BandedOperator {
        axis,
        max_level: big_n,
        matrix: m,
    })
}

/// Residual of the truncated operator applied to stacked values at a point,
/// restricted to the levels `0..=N-2` where no truncation occurs.
pub fn operator_residual(op: &BandedOperator, system: &OrthoSystem, x: f64, y: f64) -> f64 {
    let (dx, dy) = (Dd::from(x), Dd::from(y));
    let phi = system.phi_all_dd(op.max_level, dx, dy);
    let stacked: Vec<Dd> = phi.iter().flatten().copied().collect();
    let applied = op.apply(&stacked);
    let tv = axis_value(op.axis, dx, dy);
    let interior = match op.max_level.checked_sub(2) {
        Some(k) => dim(k),
        None => 0,
    };
    (0..interior)
        .map(|g| (applied[g] - stacked[g] * tv).abs().to_f64())
        .fold(0.0, f64::max)
}

/// Stacked `[D^{(n)}_{n+2,1}; D^{(n)}_{n+2,2}]`.
pub fn stacked_top(data: &RecurrenceData, n: usize) -> Option<DdMatrix> {
    let a = data.block(n, n + 2, Axis::X)?;
    let b = data.block(n, n + 2, Axis::Y)?;
    Some(a.vstack(b))
}

/// Moore–Penrose left inverse `(D^T D)^{-1} D^T` of a full column rank matrix.
pub fn left_inverse(d: &DdMatrix) -> Result<DdMatrix> {
    left_inverse_tol(d, RANK_TOL)
}

pub fn left_inverse_tol(d: &DdMatrix, rel_tol: f64) -> Result<DdMatrix> {
    let rank = numerical_rank(&d.singular_values(), rel_tol);
    if rank < d.cols() {
        return Err(Error::RankDeficient {
            condition: "left inverse".into(),
            rank,
            expected: d.cols(),
        });
    }
    let dt = d.transpose();
    let normal = &dt * d;
    let (l, _) = normal.cholesky().map_err(|_| Error::RankDeficient {
        condition: "left inverse".into(),
        rank: rank.min(d.cols() - 1),
        expected: d.cols(),
    })?;
    let li = l.lower_triangular_inverse();
    let inv = &li.transpose() * &li;
    let out = &inv * &dt;
    let defect = (&out * d).max_abs_diff(&DdMatrix::identity(d.cols()));
    if defect > 1e-11 {
        return Err(Error::LeftInverseIllConditioned {
            level: d.cols().saturating_sub(3),
            ratio: defect,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankMargin {
    pub condition: String,
    pub rank: usize,
    pub expected: usize,
    /// `sigma_expected / sigma_max`; zero when the block has too few values.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralReport {
    /// Largest `|D^{(n)}_s - (D^{(s)}_n)^T|` over all stored pairs.
    pub transpose_symmetry: f64,
    /// Largest asymmetry of a diagonal block `D^{(n)}_n`.
    pub diagonal_symmetry: f64,
    pub ranks: Vec<RankMargin>,
}

impl StructuralReport {
    pub fn min_margin(&self) -> f64 {
        self.ranks.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn first_rank_failure(&self) -> Option<&RankMargin> {
        self.ranks.iter().find(|r| r.rank < r.expected)
    }
}

fn rank_margin(condition: String, m: &DdMatrix, expected: usize, rel_tol: f64) -> RankMargin {
    let sv = m.singular_values();
    let rank = numerical_rank(&sv, rel_tol);
    let margin = if expected == 0 {
        1.0
    } else if sv.len() >= expected && sv[0] > 0.0 {
        sv[expected - 1] / sv[0]
    } else {
        0.0
    };
    RankMargin {
        condition,
        rank,
        expected,
        margin,
    }
}

/// Symmetry and rank conditions of the recurrence blocks, in the order the
/// reconstruction checks them.
pub fn structural_report(data: &RecurrenceData, rel_tol: f64) -> StructuralReport {
    let big_n = data.max_level();
    let mut ranks = Vec::new();
    if let (Some(a), Some(b)) = (data.block(0, 1, Axis::X), data.block(0, 1, Axis::Y)) {
        ranks.push(rank_margin("rank D_1^{(0)}".into(), &a.vstack(b), 2, rel_tol));
    }
    for n in 0..=big_n.saturating_sub(2) {
        if n + 2 > big_n {
            break;
        }
        for axis in Axis::BOTH {
            let i = axis.number();
            if let Some(b) = data.block(n, n + 2, axis) {
                ranks.push(rank_margin(
                    format!("rank D_{{{},{i}}}^{{({n})}}", n + 2),
                    b,
                    n + 1,
                    rel_tol,
                ));
            }
            if let Some(b) = data.block(n + 2, n, axis) {
                ranks.push(rank_margin(
                    format!("rank D_{{{n},{i}}}^{{({})}}", n + 2),
                    b,
                    n + 1,
                    rel_tol,
                ));
            }
        }
        if n >= 1 {
            if let Some(st) = stacked_top(data, n) {
                ranks.push(rank_margin(
                    format!("rank D_{{{}}}^{{({n})}}", n + 2),
                    &st,
                    n + 3,
                    rel_tol,
                ));
            }
        }
    }
    let mut transpose_symmetry = 0.0f64;
    let mut diagonal_symmetry = 0.0f64;
    for (&(n, s, axis), b) in data.iter() {
        if s < n {
            if let Some(other) = data.block(s, n, axis) {
                transpose_symmetry = transpose_symmetry.max(b.max_abs_diff(&other.transpose()));
            }
        } else if s == n {
            diagonal_symmetry = diagonal_symmetry.max(b.max_abs_diff(&b.transpose()));
        }
    }
    StructuralReport {
        transpose_symmetry,
        diagonal_symmetry,
        ranks,
    }
}

/// `diag(A_n, A_n) B^{(n)}_{n+2} - D^{(n)}_{n+2} A_{n+2}`, max entry.
pub fn leading_block_defect(system: &OrthoSystem, data: &RecurrenceData, n: usize) -> Option<f64> {
    use crate::lattice::struct_matrices;
    if n + 2 > system.max_level() {
        return None;
    }
    let an = system.block(n, n);
    let an2 = system.block(n + 2, n + 2);
    let st = stacked_top(data, n)?;
    let mut lhs = DdMatrix::zeros(2 * (n + 1), n + 3);
    for (k, axis) in Axis::BOTH.into_iter().enumerate() {
        let b = struct_matrices(n, axis).into_iter().find(|b| b.s == n + 2)?;
        let bm = DdMatrix::from_fn(n + 1, n + 3, |r, c| Dd::from_f64(b.data[r][c] as f64));
        lhs.set_block(k * (n + 1), 0, &(&an * &bm));
    }
    Some(lhs.max_abs_diff(&(&st * &an2)))
}

/// Evaluates all `phi` levels of a system at a point (helper for callers
/// that work with stacked vectors).
pub fn stacked_values(system: &OrthoSystem, x: f64, y: f64) -> Vec<Dd> {
    let vals = monomial_values(system.max_level(), Dd::from(x), Dd::from(y));
    system.coefficients().mul_vec(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ortho::orthonormalize;

    fn setup(n: usize) -> (OrthoSystem, RecurrenceData) {
        let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 12).unwrap();
        let s = orthonormalize(&p, n).unwrap();
        let d = compute_recurrence(&s, &p).unwrap();
        (s, d)
    }

    #[test]
    fn level_zero_relation_is_exact() {
        let (s, d) = setup(4);
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|k| (1.0 + 0.05 * k as f64, 1.9 - 0.04 * k as f64))
            .collect();
        let res = verify_five_term(&s, &d, &pts).unwrap();
        assert!(res.iter().all(|r| r.max_residual < 1e-20), "{res:?}");
        assert_eq!(res.len(), 2 * 3);
    }

    #[test]
    fn operator_shape() {
        let (s, d) = setup(5);
        let op = assemble_operator(&d, Axis::X).unwrap();
        assert_eq!(op.block(0, 3).max_abs(), 0.0);
        assert_eq!(op.block(2, 0), op.block(0, 2).transpose());
        assert!(op.asymmetry() < 1e-18, "{}", op.asymmetry());
        assert!(operator_residual(&op, &s, 1.3, 1.7) < 1e-20);
    }

    #[test]
    fn structure_holds() {
        let (s, d) = setup(6);
        let rep = structural_report(&d, RANK_TOL);
        assert!(rep.transpose_symmetry < 1e-18, "{}", rep.transpose_symmetry);
        assert!(rep.diagonal_symmetry < 1e-18);
        assert!(rep.first_rank_failure().is_none(), "{rep:?}");
        for n in 0..=4 {
            let v = leading_block_defect(&s, &d, n).unwrap();
            assert!(v < 1e-15, "{n} {v}");
        }
        assert_eq!(d.omitted(), vec![(5, 7), (6, 7), (6, 8)]);
    }

    #[test]
    fn perturbation_is_detected() {
        let (s, mut d) = setup(5);
        d.block_mut(1, 3, Axis::X).unwrap()[(0, 0)] += 1e-3;
        let pts = [(1.2, 1.4), (1.9, 1.1), (1.5, 1.5)];
        let res = verify_five_term(&s, &d, &pts).unwrap();
        let r1 = res.iter().find(|r| r.level == 1 && r.axis == 1).unwrap();
        assert!(r1.max_residual >= 1e-4);
    }

    #[test]
    fn left_inverse_examples() {
        let mut m = DdMatrix::zeros(6, 3);
        for k in 0..3 {
            m[(k, k)] = Dd::ONE;
        }
        let li = left_inverse(&m).unwrap();
        assert_eq!(&li * &m, DdMatrix::identity(3));
        let r = DdMatrix::from_fn(4, 2, |r, _| Dd::from_f64(r as f64 + 1.0));
        assert!(matches!(left_inverse(&r), Err(Error::RankDeficient { .. })));
    }
}
