//! Reproducing kernels, their Christoffel-Darboux and confluent forms, and a
//! verification predicate for Lagrange/cubature data.

use serde::Serialize;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::lattice::{dim, factorize, Axis, Monomial};
use crate::linalg::DdMatrix;
use crate::moments::MomentProvider;
use crate::ortho::{build_moment_matrix, monomial_values, OrthoSystem};
use crate::recurrence::RecurrenceData;

/// Relative band around a vanishing `t+1/t` difference.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Band around `t^2 = 1` for the confluent prefactor.
pub const CONFLUENT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    system: OrthoSystem,
    data: Option<RecurrenceData>,
}

fn check_point(x: f64, y: f64) -> Result<()> {
    if x == 0.0 || y == 0.0 || !x.is_finite() || !y.is_finite() {
        return Err(Error::OnAxis { x, y });
    }
    Ok(())
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(&u, &v)| u * v).sum()
}

fn axis_coord(axis: Axis, x: Dd, y: Dd) -> Dd {
    match axis {
        Axis::X => x,
        Axis::Y => y,
    }
}

impl KernelEvaluator {
    pub fn new(system: OrthoSystem, data: Option<RecurrenceData>) -> Self {
        KernelEvaluator { system, data }
    }

    pub fn system(&self) -> &OrthoSystem {
        &self.system
    }

    pub fn data(&self) -> Option<&RecurrenceData> {
        self.data.as_ref()
    }

    /// Highest `n` for the direct sum.
    pub fn max_level(&self) -> usize {
        self.system.max_level()
    }

    /// Highest `n` for the closed forms, which need `phi_{n+2}` and `D^{(n)}_{n+2}`.
    pub fn max_closed_form_level(&self) -> Option<usize> {
        let d = self.data.as_ref()?;
        d.max_level().min(self.system.max_level()).checked_sub(2)
    }

    fn check_direct(&self, n: usize) -> Result<()> {
        if n > self.max_level() {
            return Err(Error::LevelOutOfRange {
                level: n,
                max: self.max_level(),
            });
        }
        Ok(())
    }

    fn closed_form_data(&self, n: usize) -> Result<&RecurrenceData> {
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("closed forms need recurrence data".into()))?;
        let max = self.max_closed_form_level().unwrap_or(0);
        if self.max_closed_form_level().is_none() || n > max {
            return Err(Error::LevelOutOfRange { level: n, max });
        }
        Ok(data)
    }

    pub fn kernel(&self, n: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<f64> {
        Ok(self.kernel_dd(n, x1, y1, x2, y2)?.to_f64())
    }

    pub fn kernel_dd(&self, n: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Dd> {
        self.check_direct(n)?;
        check_point(x1, y1)?;
        check_point(x2, y2)?;
        let a = self.system.phi_all_dd(n, Dd::from(x1), Dd::from(y1));
        let b = self.system.phi_all_dd(n, Dd::from(x2), Dd::from(y2));
        Ok(a.iter().zip(&b).map(|(u, v)| dot(u, v)).sum())
    }

    /// `K_n(x, y, x, y)`.
    pub fn diagonal(&self, n: usize, x: f64, y: f64) -> Result<f64> {
        self.kernel(n, x, y, x, y)
    }

    /// `K_n(., ., x, y)` as coefficients over the monomials of level at most `n`.
    pub fn kernel_coefficients(&self, n: usize, x: f64, y: f64) -> Result<Vec<Dd>> {
        self.check_direct(n)?;
        check_point(x, y)?;
        let phi = self.system.phi_all_dd(n, Dd::from(x), Dd::from(y));
        let c = self.system.coefficients();
        let mut out = vec![Dd::ZERO; dim(n)];
        for g in 0..dim(n) {
            let m = Monomial::from_global_index(g);
            let v = phi[m.level()][m.position()];
            for (col, o) in out.iter_mut().enumerate() {
                *o += v * c[(g, col)];
            }
        }
        Ok(out)
    }

    /// Christoffel-Darboux quotient along `axis`.
    pub fn kernel_cd(
        &self,
        n: usize,
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        axis: Axis,
    ) -> Result<f64> {
        let data = self.closed_form_data(n)?;
        check_point(x1, y1)?;
        check_point(x2, y2)?;
        let (x1d, y1d, x2d, y2d) = (Dd::from(x1), Dd::from(y1), Dd::from(x2), Dd::from(y2));
        let t1 = axis_coord(axis, x1d, y1d);
        let t2 = axis_coord(axis, x2d, y2d);
        let s1 = t1 + t1.recip();
        let delta = s1 - (t2 + t2.recip());
        if delta.abs().to_f64() < DEGENERACY_TOL * (1.0 + s1.abs().to_f64()) {
            return Err(Error::DegenerateDenominator {
                value: delta.to_f64(),
            });
        }
        let a = self.system.phi_all_dd(n + 2, x1d, y1d);
        let b = self.system.phi_all_dd(n + 2, x2d, y2d);
        Ok((numerator(data, axis, n, &a, &b) / delta).to_f64())
    }

    /// Diagonal limit of the Christoffel-Darboux quotient along `axis`.
    pub fn kernel_confluent(&self, n: usize, x: f64, y: f64, axis: Axis) -> Result<f64> {
        let data = self.closed_form_data(n)?;
        check_point(x, y)?;
        let (xd, yd) = (Dd::from(x), Dd::from(y));
        let t = axis_coord(axis, xd, yd);
        let t2 = t.sqr();
        let gap = t2 - Dd::ONE;
        if gap.abs().to_f64() < CONFLUENT_TOL {
            return Err(Error::ConfluentSingular {
                value: gap.abs().to_f64(),
            });
        }
        let a = self.system.phi_all_dd(n + 2, xd, yd);
        let da = self.system.dphi_all_dd(n + 2, xd, yd, axis);
        // difference quotients (phi(t2) - phi(t1)) / (t1 - t2) tend to -phi'
        Ok((-(t2 / gap) * numerator(data, axis, n, &a, &da)).to_f64())
    }
}

/// `Omega_n + Lambda_n + Lambda_{n-1}` with the left factors from `a` and the
/// right ones from `b`.
fn numerator(data: &RecurrenceData, axis: Axis, n: usize, a: &[Vec<Dd>], b: &[Vec<Dd>]) -> Dd {
    let term = |k: usize, s: usize| -> Dd {
        let d = data.block(k, s, axis).expect("closed-form block");
        dot(&a[s], &d.transpose().mul_vec(&b[k])) - dot(&a[k], &d.mul_vec(&b[s]))
    };
    let mut total = term(n, n + 1) + term(n, n + 2);
    if n >= 1 {
        total += term(n - 1, n + 1);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisTolerances {
    pub lagrange: f64,
    pub orthogonality: f64,
    pub exactness: f64,
}

impl Default for HarrisTolerances {
    fn default() -> Self {
        HarrisTolerances {
            lagrange: 1e-9,
            orthogonality: 1e-8,
            exactness: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarrisCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarrisReport {
    pub checks: Vec<HarrisCheck>,
    /// Number of basis integrals compared, when the hypotheses hold.
    pub integrals: usize,
    pub holds: bool,
}

impl HarrisReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&HarrisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_LAGRANGE: &str = "lagrange interpolation";
pub const CHECK_KERNEL: &str = "(i) kernel decomposition";
pub const CHECK_REPRODUCTION: &str = "(ii) interpolation remainder";
pub const CHECK_EXACTNESS: &str = "cubature exactness";

fn evaluate(coeffs: &[Dd], x: f64, y: f64, level: usize) -> Dd {
    dot(coeffs, &monomial_values(level, Dd::from(x), Dd::from(y)))
}

/// Largest `|<f, phi_k>|` over `k <= top`, for `f` given by coefficients.
fn projection_defect(system: &OrthoSystem, gram: &DdMatrix, f: &[Dd], top: usize) -> f64 {
    let mf = gram.mul_vec(f);
    let rows = system.coefficients().submatrix(0, 0, dim(top), gram.rows());
    rows.mul_vec(&mf)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs().to_f64()))
}

/// Checks the hypotheses of the Lagrange/kernel decomposition for the rule
/// `(nodes, weights)` with Lagrange functions `lagrange` in `L_p` (coefficients
/// over the monomials of level at most `p`), and if they hold compares the
/// rule with the functional on a monomial basis of `L_{2p-1}`, each monomial
/// split as a product of factors of levels `p-1` and `p`.
pub fn verify_harris(
    evaluator: &KernelEvaluator,
    p: usize,
    nodes: &[(f64, f64)],
    weights: &[f64],
    lagrange: &[Vec<f64>],
) -> Result<HarrisReport> {
    verify_harris_with(evaluator, p, nodes, weights, lagrange, &HarrisTolerances::default())
}

pub fn verify_harris_with(
    evaluator: &KernelEvaluator,
    p: usize,
    nodes: &[(f64, f64)],
    weights: &[f64],
    lagrange: &[Vec<f64>],
    tol: &HarrisTolerances,
) -> Result<HarrisReport> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be at least 1".into()));
    }
    if nodes.len() != weights.len() || nodes.len() != lagrange.len() {
        return Err(Error::InvalidInput(format!(
            "{} nodes, {} weights, {} Lagrange functions",
            nodes.len(),
            weights.len(),
            lagrange.len()
        )));
    }
    for &(x, y) in nodes {
        check_point(x, y)?;
    }
    for (i, a) in nodes.iter().enumerate() {
        if nodes[..i].contains(a) {
            return Err(Error::InvalidInput(format!("duplicate node ({}, {})", a.0, a.1)));
        }
    }
    let w = dim(p);
    if let Some(bad) = lagrange.iter().position(|z| z.len() != w) {
        return Err(Error::InvalidInput(format!(
            "Lagrange function {bad} has {} coefficients, expected {w}",
            lagrange[bad].len()
        )));
    }
    let system = evaluator.system();
    if p > system.max_level() {
        return Err(Error::LevelOutOfRange {
            level: p,
            max: system.max_level(),
        });
    }
    let provider: &MomentProvider = system
        .provider()
        .ok_or_else(|| Error::InvalidInput("the system carries no moments".into()))?;
    let gram = build_moment_matrix(provider, p)?.matrix().clone();
    let zeta: Vec<Vec<Dd>> = lagrange
        .iter()
        .map(|z| z.iter().map(|&v| Dd::from(v)).collect())
        .collect();

    let mut checks = Vec::new();
    fn push(checks: &mut Vec<HarrisCheck>, name: &str, value: f64, tolerance: f64) {
        checks.push(HarrisCheck {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }

    let mut lag = 0.0f64;
    for (i, z) in zeta.iter().enumerate() {
        for (j, &(x, y)) in nodes.iter().enumerate() {
            let target = if i == j { Dd::ONE } else { Dd::ZERO };
            lag = lag.max((evaluate(z, x, y, p) - target).abs().to_f64());
        }
    }
    push(&mut checks, CHECK_LAGRANGE, lag, tol.lagrange);

    let mut cond_i = 0.0f64;
    for (i, z) in zeta.iter().enumerate() {
        let k = evaluator.kernel_coefficients(p - 1, nodes[i].0, nodes[i].1)?;
        let lam = Dd::from(weights[i]);
        let mut eta = z.clone();
        for (e, kv) in eta.iter_mut().zip(&k) {
            *e -= lam * *kv;
        }
        cond_i = cond_i.max(projection_defect(system, &gram, &eta, p - 1));
    }
    push(&mut checks, CHECK_KERNEL, cond_i, tol.orthogonality);

    let mut cond_ii = 0.0f64;
    let rows = system.coefficients().submatrix(0, 0, w, w);
    for g in 0..w {
        let psi = rows.row(g).to_vec();
        let mut eta = psi.clone();
        for (z, &(x, y)) in zeta.iter().zip(nodes) {
            let v = evaluate(&psi, x, y, p);
            for (e, zv) in eta.iter_mut().zip(z) {
                *e -= v * *zv;
            }
        }
        cond_ii = cond_ii.max(projection_defect(system, &gram, &eta, p - 1));
    }
    push(&mut checks, CHECK_REPRODUCTION, cond_ii, tol.orthogonality);

    let mut integrals = 0;
    let hypotheses = checks.iter().all(|c| c.passed);
    if hypotheses {
        let mut worst = 0.0f64;
        for g in 0..dim(2 * p - 1) {
            let m = Monomial::from_global_index(g);
            let (l1, l2) = if p == 1 { (Monomial::ONE, m) } else { factorize(m, p)? };
            debug_assert!(l1.level() < p && l2.level() <= p);
            let rule: Dd = nodes
                .iter()
                .zip(weights)
                .map(|(&(x, y), &lam)| {
                    let (xd, yd) = (Dd::from(x), Dd::from(y));
                    let f1 = xd.powi(l1.i as i32) * yd.powi(l1.j as i32);
                    let f2 = xd.powi(l2.i as i32) * yd.powi(l2.j as i32);
                    Dd::from(lam) * f1 * f2
                })
                .sum();
            let exact = provider.moment(m.i, m.j)?;
            let scale = exact.abs().to_f64().max(f64::MIN_POSITIVE);
            worst = worst.max((rule - exact).abs().to_f64() / scale);
            integrals += 1;
        }
        push(&mut checks, CHECK_EXACTNESS, worst, tol.exactness);
    }
    let holds = hypotheses && checks.iter().all(|c| c.passed);
    Ok(HarrisReport {
        checks,
        integrals,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::AtomicMeasure;
    use crate::ortho::orthonormalize;
    use crate::recurrence::compute_recurrence;

    fn lebesgue(n: usize) -> KernelEvaluator {
        let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 2 * (n as i64) + 2).unwrap();
        let s = orthonormalize(&p, n).unwrap();
        let d = compute_recurrence(&s, &p).unwrap();
        KernelEvaluator::new(s, Some(d))
    }

    #[test]
    fn level_zero_is_constant() {
        let e = lebesgue(2);
        let k = e.kernel(0, 1.3, 1.7, 1.9, 1.1).unwrap();
        assert!((k - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cd_matches_direct_sum() {
        let e = lebesgue(6);
        let (x1, y1, x2, y2) = (1.21, 1.63, 1.78, 1.34);
        for n in 0..=4 {
            let k = e.kernel(n, x1, y1, x2, y2).unwrap();
            for axis in Axis::BOTH {
                let cd = e.kernel_cd(n, x1, y1, x2, y2, axis).unwrap();
                assert!((cd - k).abs() < 1e-10 * k.abs().max(1.0), "{n} {axis:?} {cd} {k}");
            }
        }
    }

    #[test]
    fn confluent_matches_diagonal() {
        let e = lebesgue(6);
        for n in 0..=4 {
            let k = e.diagonal(n, 1.37, 1.82).unwrap();
            for axis in Axis::BOTH {
                let c = e.kernel_confluent(n, 1.37, 1.82, axis).unwrap();
                assert!((c - k).abs() < 1e-10 * k, "{n} {axis:?} {c} {k}");
            }
        }
    }

    #[test]
    fn reciprocal_point_is_degenerate() {
        let e = lebesgue(4);
        let r = e.kernel_cd(1, 1.5, 1.2, 1.0 / 1.5, 1.7, Axis::X);
        assert!(matches!(r, Err(Error::DegenerateDenominator { .. })));
        assert!(matches!(
            e.kernel_confluent(1, 1.0, 1.5, Axis::X),
            Err(Error::ConfluentSingular { .. })
        ));
    }

    fn interpolants(nodes: &[(f64, f64)], p: usize) -> Vec<Vec<f64>> {
        let w = dim(p);
        let v = DdMatrix::from_fn(w, w, |r, c| {
            monomial_values(p, Dd::from(nodes[r].0), Dd::from(nodes[r].1))[c]
        });
        // column i of V^{-1} holds the coefficients of zeta_i
        let inv = v.inverse().unwrap();
        (0..w)
            .map(|i| (0..w).map(|c| inv[(c, i)].to_f64()).collect())
            .collect()
    }

    fn atomic_case(p: usize) -> (KernelEvaluator, Vec<(f64, f64)>, Vec<f64>) {
        let atoms = [
            (1.1, 1.3, 0.2),
            (1.7, 1.2, 0.15),
            (1.4, 1.9, 0.25),
            (1.9, 1.6, 0.1),
            (1.25, 1.55, 0.18),
            (1.6, 1.45, 0.12),
        ];
        let atoms = &atoms[..dim(p)];
        let m = AtomicMeasure::new(atoms.to_vec()).unwrap();
        let prov = MomentProvider::atomic(m, 8).unwrap();
        let s = orthonormalize(&prov, p).unwrap();
        let nodes = atoms.iter().map(|a| (a.0, a.1)).collect();
        let weights = atoms.iter().map(|a| a.2).collect();
        (KernelEvaluator::new(s, None), nodes, weights)
    }

    #[test]
    fn atomic_rule_satisfies_hypotheses() {
        for p in 1..=2 {
            let (e, nodes, weights) = atomic_case(p);
            let z = interpolants(&nodes, p);
            let rep = verify_harris(&e, p, &nodes, &weights, &z).unwrap();
            assert!(rep.holds, "{rep:?}");
            assert_eq!(rep.integrals, dim(2 * p - 1));
        }
    }

    #[test]
    fn wrong_weight_trips_kernel_condition() {
        let (e, nodes, mut weights) = atomic_case(2);
        let z = interpolants(&nodes, 2);
        weights[3] *= 1.5;
        let rep = verify_harris(&e, 2, &nodes, &weights, &z).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.failed(), vec![CHECK_KERNEL]);
        assert_eq!(rep.integrals, 0);
    }
}
