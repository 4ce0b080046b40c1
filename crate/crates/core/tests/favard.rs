use lorpl2::kernels::KernelEvaluator;
use lorpl2::lattice::Axis;
use lorpl2::moments::{MomentProvider, Weight};
use lorpl2::ortho::orthonormalize;
use lorpl2::recurrence::{
    compute_recurrence, favard_reconstruct, structural_report, RecurrenceData, RANK_TOL,
};
use lorpl2::{Dd, Error};

fn data(p: &MomentProvider, n: usize) -> RecurrenceData {
    compute_recurrence(&orthonormalize(p, n).unwrap(), p).unwrap()
}

#[test]
fn lebesgue_round_trip() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let d = data(&p, 6);
    let f = favard_reconstruct(&d).unwrap();
    assert!(f.window >= 3);
    for i in -f.window..=f.window {
        for j in -f.window..=f.window {
            let (a, b) = (f.provider.moment_f64(i, j).unwrap(), p.moment_f64(i, j).unwrap());
            assert!((a - b).abs() <= 1e-8 * b.abs(), "({i},{j}) {a} {b}");
        }
    }
    let orig = KernelEvaluator::new(orthonormalize(&p, 6).unwrap(), None);
    let rec = KernelEvaluator::new(f.system.clone(), None);
    for (x1, y1, x2, y2) in [(1.1, 1.2, 1.9, 1.4), (1.5, 1.5, 1.5, 1.5), (1.3, 1.8, 1.0, 2.0)] {
        let (a, b) = (
            orig.kernel(4, x1, y1, x2, y2).unwrap(),
            rec.kernel(4, x1, y1, x2, y2).unwrap(),
        );
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn weighted_round_trip_preserves_orthonormality() {
    let p = MomentProvider::analytic_product(Weight::W2, (1.0, 4.0), Weight::Lebesgue, (0.5, 2.0), 10)
        .unwrap();
    let f = favard_reconstruct(&data(&p, 6)).unwrap();
    assert!(f.seed_residual < 1e-12, "{}", f.seed_residual);
    assert!(f.moment_consistency < 1e-12, "{}", f.moment_consistency);
    // the recovered window supports the Gram check through level 2
    assert!(f.system.orthonormality_defect(&f.provider, 2).unwrap() < 1e-12);
    let mass = p.moment_f64(0, 0).unwrap();
    assert!((f.provider.moment_f64(0, 0).unwrap() - mass).abs() < 1e-12 * mass);
}

#[test]
fn initial_levels_are_required() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let d = data(&p, 6);
    let mut bare = RecurrenceData::new(6);
    for (&(n, s, axis), b) in d.iter() {
        bare.insert(n, s, axis, b.clone());
    }
    assert!(matches!(favard_reconstruct(&bare), Err(Error::InvalidInput(_))));
}

#[test]
fn short_data_is_rejected() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    assert!(matches!(favard_reconstruct(&data(&p, 3)), Err(Error::InvalidInput(_))));
}

#[test]
fn broken_symmetry_is_named() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let mut d = data(&p, 6);
    let b = d.block_mut(3, 3, Axis::Y).unwrap();
    b[(0, 1)] += Dd::from(1e-3);
    assert!(structural_report(&d, RANK_TOL).diagonal_symmetry > 1e-4);
    match favard_reconstruct(&d) {
        Err(Error::SymmetryViolated { condition, deviation }) => {
            assert!(condition.contains("symmetric") && deviation > 1e-4)
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut d = data(&p, 6);
    d.block_mut(2, 4, Axis::X).unwrap()[(1, 1)] += Dd::from(1e-3);
    match favard_reconstruct(&d) {
        Err(Error::SymmetryViolated { condition, .. }) => assert!(condition.contains("^T")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn rank_failure_is_named() {
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 10).unwrap();
    let mut d = data(&p, 6);
    // duplicate row kills the rank of the stacked top block at level 2
    for axis in Axis::BOTH {
        let top = d.block_mut(2, 4, axis).unwrap();
        for c in 0..5 {
            top[(1, c)] = top[(0, c)];
        }
        let back = d.block(2, 4, axis).unwrap().transpose();
        *d.block_mut(4, 2, axis).unwrap() = back;
    }
    match favard_reconstruct(&d) {
        Err(Error::RankDeficient { condition, rank, expected }) => {
            assert!(condition.contains('2'), "{condition}");
            assert!(rank < expected);
        }
        other => panic!("unexpected {other:?}"),
    }
}
