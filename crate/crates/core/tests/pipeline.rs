use lorpl2::lattice::{dim, Axis, Monomial};
use lorpl2::linalg::DdMatrix;
use lorpl2::moments::{AtomicMeasure, MomentProvider, QuadraturePolicy, Weight};
use lorpl2::ortho::{build_moment_matrix, orthonormalize, OrthoSystem};
use lorpl2::recurrence::{
    assemble_operator, compute_recurrence, neighbours, operator_residual, structural_report,
    verify_five_term, RecurrenceData, RANK_TOL,
};
use lorpl2::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
        .collect()
}

fn random_atoms(count: usize, seed: u64) -> AtomicMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..count)
        .map(|_| {
            (
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..1.5) / count as f64,
            )
        })
        .collect();
    AtomicMeasure::new(atoms).unwrap()
}

fn build(p: &MomentProvider, n: usize) -> (OrthoSystem, RecurrenceData) {
    let s = orthonormalize(p, n).unwrap();
    let d = compute_recurrence(&s, p).unwrap();
    (s, d)
}

#[test]
fn lebesgue_square() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let (s, d) = build(&p, 8);
    assert!(s.orthonormality_defect(&p, 8).unwrap() < 1e-9);
    let res = verify_five_term(&s, &d, &points(200, 1.0, 2.0, 1)).unwrap();
    assert_eq!(res.len(), 2 * 7);
    for r in &res {
        assert!(r.max_residual < 1e-8, "{r:?}");
    }
    let rep = structural_report(&d, RANK_TOL);
    assert!(rep.transpose_symmetry < 1e-10 && rep.diagonal_symmetry < 1e-10);
    assert!(rep.first_rank_failure().is_none());
}

#[test]
fn inverse_square_root_weight() {
    let p = MomentProvider::analytic_product(Weight::W2, (1.0, 4.0), Weight::W2, (1.0, 4.0), 10)
        .unwrap();
    let (s, d) = build(&p, 8);
    assert!(s.orthonormality_defect(&p, 8).unwrap() < 1e-9);
    for r in verify_five_term(&s, &d, &points(200, 1.0, 4.0, 2)).unwrap() {
        assert!(r.max_residual < 1e-8, "{r:?}");
    }
}

#[test]
fn quadrature_moments_agree_with_closed_forms() {
    let policy = QuadraturePolicy::default();
    let q = MomentProvider::product_weight(
        Weight::W2,
        (1.0, 4.0),
        Weight::Lebesgue,
        (1.0, 2.0),
        6,
        &policy,
    )
    .unwrap();
    let a = MomentProvider::analytic_product(Weight::W2, (1.0, 4.0), Weight::Lebesgue, (1.0, 2.0), 6)
        .unwrap();
    for i in -6..=6 {
        for j in -6..=6 {
            let (u, v) = (q.moment_f64(i, j).unwrap(), a.moment_f64(i, j).unwrap());
            assert!(((u - v) / v).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn forty_atoms_support_level_seven_but_not_eight() {
    let m = random_atoms(40, 7);
    let p = MomentProvider::atomic(m, 10).unwrap();
    let (s, d) = build(&p, 7);
    assert!(s.orthonormality_defect(&p, 7).unwrap() < 1e-11);
    // the atoms are the whole measure, so the relations hold at the atoms
    let atoms: Vec<(f64, f64)> = p.atomic_measure().unwrap().atoms().iter().map(|a| (a.0, a.1)).collect();
    for r in verify_five_term(&s, &d, &atoms).unwrap() {
        assert!(r.max_residual < 1e-8, "{r:?}");
    }
    // dim L_8 = 45 exceeds the number of atoms
    match orthonormalize(&p, 8) {
        Err(Error::NotPositiveDefinite { level, .. }) | Err(Error::IllConditioned { level, .. }) => {
            assert_eq!(level, 8)
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn symmetric_measure_swaps_axes() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let n_max = 6;
    let (s, d) = build(&p, n_max);
    let mm = build_moment_matrix(&p, n_max).unwrap();
    let c = s.coefficients();
    // psi_n(x, y) = P phi_n(y, x) with P reversing the level vector
    let width = dim(n_max);
    let mut swapped = DdMatrix::zeros(width, width);
    for g in 0..width {
        let m = Monomial::from_global_index(g);
        let row = Monomial::from_level_position(m.level(), m.level() - m.position()).global_index();
        for h in 0..width {
            let col = Monomial::from_global_index(h).swap().global_index();
            swapped[(row, col)] = c[(g, h)];
        }
    }
    // psi_n = Q_n phi_n, so P D_{s,1} P = Q_n D_{s,2} Q_s^T
    let q: Vec<DdMatrix> = (0..=n_max)
        .map(|n| {
            let o = dim(n) - n - 1;
            let a = swapped.submatrix(o, 0, n + 1, width);
            let b = c.submatrix(o, 0, n + 1, width);
            &(&a * mm.matrix()) * &b.transpose()
        })
        .collect();
    for n in 0..=n_max {
        for t in neighbours(n, n_max) {
            let lhs = reversed(d.block(n, t, Axis::X).unwrap());
            let rhs = &(&q[n] * d.block(n, t, Axis::Y).unwrap()) * &q[t].transpose();
            let diff = lhs.max_abs_diff(&rhs);
            assert!(diff < 1e-9, "({n},{t}) {diff}");
        }
    }
}

fn reversed(m: &DdMatrix) -> DdMatrix {
    let (r, c) = m.shape();
    DdMatrix::from_fn(r, c, |i, j| m[(r - 1 - i, c - 1 - j)])
}

#[test]
fn banded_operator_reproduces_multiplication() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let (s, d) = build(&p, 6);
    for axis in Axis::BOTH {
        let op = assemble_operator(&d, axis).unwrap();
        assert!(op.asymmetry() < 1e-10);
        assert_eq!(op.block(0, 3).max_abs(), 0.0);
        for (x, y) in points(10, 1.0, 2.0, 4) {
            assert!(operator_residual(&op, &s, x, y) < 1e-9);
        }
    }
}

#[test]
fn window_too_small_for_recurrence() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 8).unwrap();
    let s = orthonormalize(&p, 8).unwrap();
    assert!(matches!(
        compute_recurrence(&s, &p),
        Err(Error::WindowExceeded { .. })
    ));
}
