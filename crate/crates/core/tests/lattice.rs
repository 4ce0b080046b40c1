use std::collections::BTreeMap;

use lorpl2::lattice::{
    c_seq, dim, factorize, inv_c, level_basis, max_exponent, monomials_up_to, struct_matrices,
    Axis, Monomial,
};
use proptest::prelude::*;

/// Exponent multiset of `(t + 1/t) * m`, and of `sum_s B_s phi_s` read off row
/// `t` of the structure matrices.
fn shifted_exponents(m: Monomial, axis: Axis) -> BTreeMap<(i64, i64), i32> {
    let mut out = BTreeMap::new();
    let (di, dj) = match axis {
        Axis::X => (1, 0),
        Axis::Y => (0, 1),
    };
    *out.entry((m.i + di, m.j + dj)).or_insert(0) += 1;
    *out.entry((m.i - di, m.j - dj)).or_insert(0) += 1;
    out
}

#[test]
fn structure_matrices_reproduce_shifts() {
    for n in 0..=20 {
        let basis = level_basis(n);
        for axis in Axis::BOTH {
            let mats = struct_matrices(n, axis);
            for (t, &m) in basis.entries.iter().enumerate() {
                let mut got = BTreeMap::new();
                for b in &mats {
                    let target = level_basis(b.s);
                    for (col, &v) in b.data[t].iter().enumerate() {
                        if v != 0 {
                            let e = target.entries[col];
                            *got.entry((e.i, e.j)).or_insert(0) += v as i32;
                        }
                    }
                }
                assert_eq!(got, shifted_exponents(m, axis), "n={n} t={t} {axis:?}");
            }
        }
    }
}

#[test]
fn top_structure_blocks_are_shifted_identities() {
    for n in 0..=12 {
        let x = struct_matrices(n, Axis::X);
        let y = struct_matrices(n, Axis::Y);
        let top_x = x.iter().find(|b| b.s == n + 2).unwrap();
        let top_y = y.iter().find(|b| b.s == n + 2).unwrap();
        for r in 0..=n {
            for c in 0..n + 3 {
                assert_eq!(top_x.data[r][c], u8::from(c == r));
                assert_eq!(top_y.data[r][c], u8::from(c == r + 2));
            }
        }
    }
}

#[test]
fn dimensions() {
    for n in 0..=40 {
        assert_eq!(dim(n), (n + 1) * (n + 2) / 2);
        assert_eq!(monomials_up_to(n).len(), dim(n));
        assert_eq!(max_exponent(n), (n as i64 + 1) / 2);
    }
}

/// Exhaustive search for a split of `m` into levels `<= p-1` and `<= p`.
fn some_split_exists(m: Monomial, p: usize) -> bool {
    let low = monomials_up_to(p - 1);
    low.iter().any(|a| Monomial::new(m.i - a.i, m.j - a.j).level() <= p)
}

#[test]
fn factorization_covers_every_monomial() {
    for p in 2..=8 {
        for m in monomials_up_to(2 * p - 1) {
            let (a, b) = factorize(m, p).unwrap();
            assert_eq!(a.times(b), m);
            assert!(a.level() < p && b.level() <= p, "{m} p={p}: {a} * {b}");
            assert!(some_split_exists(m, p));
        }
    }
}

#[test]
fn factorization_rejects_high_levels() {
    assert!(factorize(Monomial::from_level_position(6, 0), 3).is_err());
    assert!(factorize(Monomial::ONE, 1).is_err());
}

proptest! {
    #[test]
    fn c_is_a_bijection(e in -500i64..500) {
        prop_assert_eq!(c_seq(inv_c(e)), e);
    }

    #[test]
    fn global_index_round_trip(g in 0usize..5000) {
        let m = Monomial::from_global_index(g);
        prop_assert_eq!(m.global_index(), g);
        prop_assert_eq!(Monomial::from_level_position(m.level(), m.position()), m);
    }

    #[test]
    fn product_levels_grow_by_at_most_one_per_variable(a in -300i64..300, b in -300i64..300) {
        // x * x = x^2 climbs from 1 + 1 to 3
        prop_assert!(inv_c(a + b) <= inv_c(a) + inv_c(b) + 1);
        if a.signum() * b.signum() <= 0 {
            prop_assert!(inv_c(a + b) <= inv_c(a).max(inv_c(b)));
        }
    }

    #[test]
    fn swap_reverses_positions(g in 0usize..3000) {
        let m = Monomial::from_global_index(g);
        prop_assert_eq!(m.swap().level(), m.level());
        prop_assert_eq!(m.swap().position(), m.level() - m.position());
    }
}
