use std::f64::consts::PI;

use lorpl2::lattice::{dim, Monomial};
use lorpl2::moments::{
    univariate_moments, AtomicMeasure, MomentProvider, QuadraturePolicy, Weight,
};
use lorpl2::ortho::build_moment_matrix;
use lorpl2::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn chebyshev_type_weights_match_closed_forms() {
    let pol = QuadraturePolicy::default();
    let (a, b) = (1.0, 3.0);
    let m = univariate_moments(Weight::W1, a, b, -1, 1, &pol).unwrap();
    assert!(rel(m.get(0).unwrap().to_f64(), PI) < 1e-13);
    assert!(rel(m.get(1).unwrap().to_f64(), PI * (a + b) / 2.0) < 1e-13);
    assert!(rel(m.get(-1).unwrap().to_f64(), PI / (a * b).sqrt()) < 1e-13);

    let c = (a * b).sqrt();
    let m5 = univariate_moments(Weight::W5, a, b, 0, 0, &pol).unwrap();
    assert!(rel(m5.get(0).unwrap().to_f64(), PI / ((a + c) * (b + c)).sqrt()) < 1e-13);

    // x (1 + c/x)^2 = x + 2c + c^2/x against the arcsine density
    let m4 = univariate_moments(Weight::W4, a, b, 0, 0, &pol).unwrap();
    let expect = PI * (a + b) / 2.0 + 2.0 * c * PI + c * c * PI / c;
    assert!(rel(m4.get(0).unwrap().to_f64(), expect) < 1e-13);

    // mu = 1/2 gives the constant density 1 / (sqrt b - sqrt a) times x^(-1/2)
    let m3 = univariate_moments(Weight::W3 { mu: 0.5 }, a, b, 0, 0, &pol).unwrap();
    let expect = 2.0 * (b.sqrt() - a.sqrt()) / (b.sqrt() - a.sqrt());
    assert!(rel(m3.get(0).unwrap().to_f64(), expect) < 1e-13);
}

#[test]
fn quadrature_failure_reports_achieved_tolerance() {
    let pol = QuadraturePolicy {
        start_nodes: 16,
        max_nodes: 32,
        rel_tol: 1e-30,
    };
    match univariate_moments(Weight::W6 { kappa: 0.3 }, 0.2, 5.0, -6, 6, &pol) {
        Err(Error::QuadratureNonConvergence { achieved, tolerance }) => {
            assert_eq!(tolerance, 1e-30);
            assert!(achieved.is_finite() && achieved > tolerance);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_intervals_are_rejected() {
    let pol = QuadraturePolicy::default();
    assert!(univariate_moments(Weight::Lebesgue, 0.0, 1.0, 0, 1, &pol).is_err());
    assert!(univariate_moments(Weight::Lebesgue, 2.0, 1.0, 0, 1, &pol).is_err());
    assert!(univariate_moments(Weight::W3 { mu: -0.5 }, 1.0, 2.0, 0, 1, &pol).is_err());
    assert!(MomentProvider::lebesgue([1.0, 2.0, -1.0, 2.0], 4).is_err());
}

#[test]
fn table_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("lorpl2-moments-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("lebesgue.json");
    let p = MomentProvider::lebesgue([1.0, 2.0, 1.0, 2.0], 8).unwrap();
    p.save_table(&path, 8).unwrap();
    let q = MomentProvider::load_table(&path).unwrap();
    assert_eq!(q.window(), 8);
    for i in -8..=8 {
        for j in -8..=8 {
            assert_eq!(p.moment_f64(i, j).unwrap(), q.moment_f64(i, j).unwrap());
        }
    }
    assert_eq!(p.fingerprint(8).unwrap(), q.fingerprint(8).unwrap());

    // drop (-3, 2) from a window-4 table
    let text = p.to_table_json(4).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["entries"]
        .as_array_mut()
        .unwrap()
        .retain(|e| !(e["i"] == -3 && e["j"] == 2));
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(
        MomentProvider::load_table(&path),
        Err(Error::MissingEntry { i: -3, j: 2 })
    ));

    std::fs::write(&path, "{\"format\":\"lorpl2-moments-v1\",\"window\":1}").unwrap();
    assert!(MomentProvider::load_table(&path).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

fn atoms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.3f64..3.0, 0.3f64..3.0, 0.01f64..1.0), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn atomic_quadratic_form_is_nonnegative(
        atoms in atoms(),
        coeffs in prop::collection::vec(-1.0f64..1.0, dim(2)),
    ) {
        let m = AtomicMeasure::new(atoms.clone());
        prop_assume!(m.is_ok());
        let p = MomentProvider::atomic(m.unwrap(), 2).unwrap();
        let g = build_moment_matrix(&p, 2).unwrap();
        let q: f64 = (0..dim(2))
            .flat_map(|r| (0..dim(2)).map(move |c| (r, c)))
            .map(|(r, c)| coeffs[r] * coeffs[c] * g.matrix()[(r, c)].to_f64())
            .sum();
        // oracle: the same sum of squares evaluated atom by atom
        let direct: f64 = atoms
            .iter()
            .map(|&(x, y, w)| {
                let psi: f64 = (0..dim(2))
                    .map(|k| {
                        let mono = Monomial::from_global_index(k);
                        coeffs[k] * x.powi(mono.i as i32) * y.powi(mono.j as i32)
                    })
                    .sum();
                w * psi * psi
            })
            .sum();
        prop_assert!(q >= -1e-12 * direct.max(1.0));
        prop_assert!((q - direct).abs() <= 1e-10 * direct.max(1.0));
    }

    #[test]
    fn gram_entries_depend_on_exponent_sum(
        g1 in 0usize..dim(4), g2 in 0usize..dim(4), h1 in 0usize..dim(4), h2 in 0usize..dim(4)
    ) {
        let p = MomentProvider::analytic_product(Weight::W2, (1.0, 4.0), Weight::Lebesgue, (0.5, 2.0), 4)
            .unwrap();
        let g = build_moment_matrix(&p, 4).unwrap();
        let (a, b) = (Monomial::from_global_index(g1), Monomial::from_global_index(g2));
        let (c, d) = (Monomial::from_global_index(h1), Monomial::from_global_index(h2));
        if a.times(b) == c.times(d) {
            prop_assert_eq!(g.matrix()[(g1, g2)], g.matrix()[(h1, h2)]);
        }
        let e = a.times(b);
        prop_assert_eq!(g.matrix()[(g1, g2)], p.moment(e.i, e.j).unwrap());
    }

    #[test]
    fn product_moments_factor(i in -6i64..=6, j in -6i64..=6) {
        let p = MomentProvider::lebesgue([0.5, 2.0, 1.0, 3.0], 6).unwrap();
        // closed-form integrals of x^i and y^j
        let int = |k: i64, a: f64, b: f64| {
            if k == -1 { (b / a).ln() } else { (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k + 1) as f64 }
        };
        let expect = int(i, 0.5, 2.0) * int(j, 1.0, 3.0);
        prop_assert!(rel(p.moment_f64(i, j).unwrap(), expect) < 1e-13);
    }
}
