//! Balanced ordering of two-variable Laurent monomials.
//!
//! The one-variable sequence `c_n` runs `0, 1, -1, 2, -2, ...`. A monomial
//! `x^i y^j` sits at level `inv_c(i) + inv_c(j)`; within level `n` the
//! components are `x^{c_{n-t}} y^{c_t}` for `t = 0..=n`, and levels are laid
//! out one after another to give a 0-based global index.

use std::fmt;

use crate::error::{Error, Result};

pub fn c_seq(n: usize) -> i64 {
    let half = ((n + 1) / 2) as i64;
    if n % 2 == 1 {
        half
    } else {
        -half
    }
}

pub fn inv_c(e: i64) -> usize {
    if e > 0 {
        (2 * e - 1) as usize
    } else {
        (-2 * e) as usize
    }
}

/// Number of monomials of level at most `n`.
pub fn dim(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Largest `|exponent|` appearing among monomials of level at most `n`.
pub fn max_exponent(n: usize) -> i64 {
    ((n + 1) / 2) as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    pub i: i64,
    pub j: i64,
}

impl Monomial {
    pub const ONE: Monomial = Monomial { i: 0, j: 0 };

    pub const fn new(i: i64, j: i64) -> Self {
        Monomial { i, j }
    }

    pub fn level(self) -> usize {
        inv_c(self.i) + inv_c(self.j)
    }

    pub fn position(self) -> usize {
        inv_c(self.j)
    }

    pub fn global_index(self) -> usize {
        let n = self.level();
        n * (n + 1) / 2 + self.position()
    }

    pub fn from_level_position(n: usize, t: usize) -> Self {
        debug_assert!(t <= n);
        Monomial::new(c_seq(n - t), c_seq(t))
    }

    pub fn from_global_index(g: usize) -> Self {
        // level n starts at n(n+1)/2
        let mut n = ((((8 * g + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
        while n * (n + 1) / 2 > g {
            n -= 1;
        }
        while (n + 1) * (n + 2) / 2 <= g {
            n += 1;
        }
        Monomial::from_level_position(n, g - n * (n + 1) / 2)
    }

    pub fn swap(self) -> Self {
        Monomial::new(self.j, self.i)
    }

    /// Exponentwise sum, i.e. the product of the two monomials.
    pub fn times(self, other: Monomial) -> Self {
        Monomial::new(self.i + other.i, self.j + other.j)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x^{} y^{}", self.i, self.j)
    }
}

/// All monomials of level at most `n`, in global order.
pub fn monomials_up_to(n: usize) -> Vec<Monomial> {
    (0..dim(n)).map(Monomial::from_global_index).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelBasis {
    pub n: usize,
    pub entries: Vec<Monomial>,
}

pub fn level_basis(n: usize) -> LevelBasis {
    LevelBasis {
        n,
        entries: (0..=n).map(|t| Monomial::from_level_position(n, t)).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn number(self) -> u8 {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
        }
    }

    pub fn from_number(k: u8) -> Option<Axis> {
        match k {
            1 => Some(Axis::X),
            2 => Some(Axis::Y),
            _ => None,
        }
    }

    pub fn unit(self) -> Monomial {
        match self {
            Axis::X => Monomial::new(1, 0),
            Axis::Y => Monomial::new(0, 1),
        }
    }
}

/// 0/1 matrix `B^{(n)}_{s,axis}` of shape `(n+1) x (s+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructMatrix {
    pub n: usize,
    pub s: usize,
    pub axis: Axis,
    pub data: Vec<Vec<u8>>,
}

impl StructMatrix {
    pub fn rows(&self) -> usize {
        self.n + 1
    }

    pub fn cols(&self) -> usize {
        self.s + 1
    }
}

/// The blocks `B^{(n)}_s` with `(t + 1/t) phi_n = sum_s B^{(n)}_s phi_s`,
/// ordered by `s` among `n-2, n-1, n+1, n+2` (those that are nonnegative).
///
/// Built by multiplying each component of `phi_n` by `t` and `1/t` and
/// locating the two results, so the small levels need no special casing.
pub fn struct_matrices(n: usize, axis: Axis) -> Vec<StructMatrix> {
    let targets: Vec<usize> = [n as i64 - 2, n as i64 - 1, n as i64 + 1, n as i64 + 2]
        .into_iter()
        .filter(|&s| s >= 0)
        .map(|s| s as usize)
        .collect();
    let mut mats: Vec<StructMatrix> = targets
        .iter()
        .map(|&s| StructMatrix {
            n,
            s,
            axis,
            data: vec![vec![0; s + 1]; n + 1],
        })
        .collect();
    let u = axis.unit();
    for (t, m) in level_basis(n).entries.into_iter().enumerate() {
        for shifted in [m.times(u), m.times(Monomial::new(-u.i, -u.j))] {
            let s = shifted.level();
            let k = targets
                .iter()
                .position(|&x| x == s)
                .expect("a shift by t or 1/t moves one or two levels");
            mats[k].data[t][shifted.position()] += 1;
        }
    }
    mats
}

/// `m = m1 * m2` with `level(m1) <= p-1` and `level(m2) <= p`.
///
/// The top two levels `2p-1` and `2p-2` split off a pure power of `x`
/// chosen by the parity of `p` and of the position; components in the back
/// half of a level are handled by exchanging the variables. Anything lower
/// is delegated to `p-1`.
pub fn factorize(m: Monomial, p: usize) -> Result<(Monomial, Monomial)> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "factorization needs p >= 2, got {p}"
        )));
    }
    let s = m.level();
    if s > 2 * p - 1 {
        return Err(Error::InvalidInput(format!(
            "{m} has level {s}, above 2p-1 = {}",
            2 * p - 1
        )));
    }
    Ok(factorize_unchecked(m, p))
}

fn factorize_unchecked(m: Monomial, p: usize) -> (Monomial, Monomial) {
    let s = m.level();
    if s <= p {
        return (Monomial::ONE, m);
    }
    if s + 2 < 2 * p {
        return factorize_unchecked(m, p - 1);
    }
    let t = m.position();
    if t > s / 2 {
        let (a, b) = factorize_unchecked(m.swap(), p);
        return (a.swap(), b.swap());
    }
    let k = (p / 2) as i64;
    let even_t = t % 2 == 0;
    // index r of the split-off factor x^{c_r}; r = -1 means the factor is 1
    let r: i64 = match (s == 2 * p - 1, p % 2 == 0, even_t) {
        (true, true, true) => 2 * k - 1,
        (true, true, false) => 2 * k,
        (true, false, true) => 2 * k + 1,
        (true, false, false) => 2 * k,
        (false, true, true) => 2 * (k - 1),
        (false, true, false) => 2 * (k - 1) - 1,
        (false, false, true) => 2 * k,
        (false, false, false) => 2 * k - 1,
    };
    let e = if r < 0 { 0 } else { c_seq(r as usize) };
    let a = Monomial::new(e, 0);
    let b = Monomial::new(m.i - e, m.j);
    if a.level() <= b.level() {
        (a, b)
    } else {
        (b, a)
    }
}

/// The three index identities behind closure of products in the lattice.
pub fn c_additivity_check(s: usize, t: usize) -> bool {
    let c = |k: usize| c_seq(k);
    if c(2 * s) + c(2 * t) != c(2 * (s + t)) {
        return false;
    }
    if s >= 1 && t >= 1 && c(2 * s - 1) + c(2 * t - 1) != c(2 * (s + t) - 1) {
        return false;
    }
    if t >= 1 {
        let rhs = if t > s {
            c(2 * (t - s) - 1)
        } else {
            c(2 * (s - t))
        };
        if c(2 * s) + c(2 * t - 1) != rhs {
            return false;
        }
    }
    true
}
