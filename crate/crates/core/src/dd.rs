//! Double-double arithmetic.
//!
//! A [`Dd`] carries an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`,
//! giving roughly 106 bits of significand. Moment matrices of Laurent systems
//! lose about one decimal digit per level, so every accumulation on the
//! construction path (moments, factorizations, Gram sums, point evaluation)
//! runs in this type and only final results are rounded to `f64`.
//!
//! The kernels follow the classic error-free transformations (Dekker,
//! Knuth, Bailey's QD package). `two_prod` relies on a fused multiply-add.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd {
    hi: 6.931_471_805_599_453e-1,
    lo: 2.319_046_813_846_299_6e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    /// Machine epsilon of the format, 2^-104.
    pub const EPSILON: f64 = 4.930_380_657_631_324e-32;

    pub const fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Builds a normalized value from two overlapping parts.
    pub fn from_parts(hi: f64, lo: f64) -> Self {
        let (h, l) = two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn sqr(self) -> Self {
        let (p1, mut p2) = two_prod(self.hi, self.hi);
        p2 += 2.0 * self.hi * self.lo;
        let (h, l) = quick_two_sum(p1, p2);
        Dd { hi: h, lo: l }
    }

    pub fn recip(self) -> Self {
        Dd::ONE / self
    }

    pub fn sqrt(self) -> Self {
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        if self.hi < 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = self.hi * x;
        Dd::from_f64(ax) + (self - Dd::from_f64(ax).sqr()).hi * (x * 0.5)
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dd::ONE;
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base.sqr();
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * k) * (1.0 / 1024.0);
        // exp(r) - 1 by Taylor; |r| < 3.4e-4 so 12 terms exceed the format.
        let mut term = r;
        let mut s = r;
        for i in 2..=12 {
            term = term * r / i as f64;
            s += term;
        }
        // (1 + s)^(2^10) tracked as s -> 2s + s^2 to keep the small part exact.
        for _ in 0..10 {
            s = s * 2.0 + s.sqr();
        }
        let e = s + 1.0;
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: e.hi * scale,
            lo: e.lo * scale,
        }
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        // Newton on exp(y) = x, quadratically convergent from an f64 start.
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - 1.0;
        }
        y
    }

    pub fn max(self, other: Dd) -> Dd {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn floor(self) -> Self {
        let f = self.hi.floor();
        if f == self.hi {
            Dd::from_parts(f, self.lo.floor())
        } else {
            Dd::from_f64(f)
        }
    }

    /// Scientific decimal rendering with `sig` significant digits.
    ///
    /// Parsing the output with [`Dd::parse_decimal`] reproduces the value
    /// to about `10^-sig` relative; 32 digits cover the format.
    pub fn to_decimal(self, sig: usize) -> String {
        if !self.is_finite() {
            return format!("{}", self.hi);
        }
        if self.hi == 0.0 {
            return "0".to_string();
        }
        let sig = sig.max(1);
        let neg = self.hi < 0.0;
        let a = self.abs();
        let mut e = a.hi.log10().floor() as i32;
        let mut r = a / Dd::from_f64(10.0).powi(e);
        if r.hi >= 10.0 {
            r /= 10.0;
            e += 1;
        } else if r.hi < 1.0 {
            r *= 10.0;
            e -= 1;
        }
        let mut digits = Vec::with_capacity(sig + 1);
        for _ in 0..=sig {
            let d = r.floor().to_f64().clamp(0.0, 9.0);
            digits.push(d as u8);
            r = (r - d) * 10.0;
        }
        let last = digits.pop().unwrap_or(0);
        if last >= 5 {
            let mut k = digits.len();
            loop {
                if k == 0 {
                    digits.insert(0, 1);
                    digits.pop();
                    e += 1;
                    break;
                }
                k -= 1;
                if digits[k] == 9 {
                    digits[k] = 0;
                } else {
                    digits[k] += 1;
                    break;
                }
            }
        }
        let mut out = String::with_capacity(sig + 8);
        if neg {
            out.push('-');
        }
        out.push((b'0' + digits[0]) as char);
        if digits.len() > 1 {
            out.push('.');
            for &d in &digits[1..] {
                out.push((b'0' + d) as char);
            }
        }
        out.push('e');
        out.push_str(&e.to_string());
        out
    }

    /// Parses `[-+]digits[.digits][e[-+]digits]`.
    pub fn parse_decimal(text: &str) -> Option<Dd> {
        let t = text.trim();
        let (neg, body) = match t.as_bytes().first()? {
            b'-' => (true, &t[1..]),
            b'+' => (false, &t[1..]),
            _ => (false, t),
        };
        let (mant, exp) = match body.find(['e', 'E']) {
            Some(k) => (&body[..k], body[k + 1..].parse::<i32>().ok()?),
            None => (body, 0),
        };
        let (int_part, frac_part) = match mant.find('.') {
            Some(k) => (&mant[..k], &mant[k + 1..]),
            None => (mant, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let mut acc = Dd::ZERO;
        for c in int_part.chars().chain(frac_part.chars()) {
            let d = c.to_digit(10)?;
            acc = acc * 10.0 + d as f64;
        }
        let scale = exp - frac_part.len() as i32;
        let ten = Dd::from_f64(10.0);
        let v = if scale >= 0 {
            acc * ten.powi(scale)
        } else {
            acc / ten.powi(-scale)
        };
        Some(if neg { -v } else { v })
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::from_f64(x)
    }
}

impl From<i64> for Dd {
    fn from(x: i64) -> Self {
        let hi = x as f64;
        let lo = (x - hi as i64) as f64;
        Dd::from_parts(hi, lo)
    }
}

impl From<i32> for Dd {
    fn from(x: i32) -> Self {
        Dd::from_f64(x as f64)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        let (s1, s2) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s1, s2 + self.lo);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p1, mut p2) = two_prod(self.hi, b.hi);
        p2 += self.hi * b.lo + self.lo * b.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let (p1, mut p2) = two_prod(self.hi, b);
        p2 += self.lo * b;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let mut r = self - b * q1;
        let q2 = r.hi / b.hi;
        r -= b * q2;
        let q3 = r.hi / b.hi;
        let (h, l) = quick_two_sum(q1, q2);
        Dd { hi: h, lo: l } + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::from_f64(b)
    }
}

macro_rules! scalar_lhs {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr<Dd> for f64 {
            type Output = Dd;
            fn $method(self, b: Dd) -> Dd {
                Dd::from_f64(self).$method(b)
            }
        }
    )*};
}
scalar_lhs!(Add add, Sub sub, Mul mul, Div div);

macro_rules! assign_ops {
    ($($tr:ident $method:ident $op:tt),*) => {$(
        impl $tr for Dd {
            fn $method(&mut self, b: Dd) {
                *self = *self $op b;
            }
        }
        impl $tr<f64> for Dd {
            fn $method(&mut self, b: f64) {
                *self = *self $op b;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Dd> for Dd {
    fn sum<I: Iterator<Item = &'a Dd>>(iter: I) -> Dd {
        iter.fold(Dd::ZERO, |a, b| a + *b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference digits from a 40-digit mpmath evaluation.
    const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;
    const SQRT2_LO: f64 = -9.667_293_313_452_913e-17;

    fn close(a: Dd, hi: f64, lo: f64, tol: f64) -> bool {
        ((a - Dd::from_parts(hi, lo)).abs().to_f64()) <= tol
    }

    #[test]
    fn division_keeps_low_word() {
        let third = Dd::ONE / Dd::from_f64(3.0);
        assert!(third.lo() != 0.0);
        let back = third * 3.0 - 1.0;
        assert!(back.abs().to_f64() < 1e-31);
    }

    #[test]
    fn sqrt_two() {
        let s = Dd::from_f64(2.0).sqrt();
        assert!(close(s, std::f64::consts::SQRT_2, SQRT2_LO, 1e-31));
        assert!((s.sqr() - 2.0).abs().to_f64() < 1e-31);
    }

    #[test]
    fn ln_two_and_exp_inverse() {
        let l = Dd::from_f64(2.0).ln();
        assert!(close(l, std::f64::consts::LN_2, LN2_LO, 1e-31));
        for x in [0.37, 1.0, 2.5, 17.0, -3.25] {
            let v = Dd::from_f64(x);
            let back = v.exp().ln();
            assert!((back - v).abs().to_f64() < 1e-30 * (1.0 + x.abs()), "x = {x}");
        }
    }

    #[test]
    fn exp_matches_f64() {
        for x in [-20.0, -1.0, 0.0, 0.5, 3.0, 40.0] {
            let e = Dd::from_f64(x).exp().to_f64();
            assert!((e - f64::exp(x)).abs() <= 4.0 * f64::EPSILON * f64::exp(x));
        }
    }

    #[test]
    fn powi_negative_exponents() {
        let x = Dd::from_f64(1.5);
        let p = x.powi(-3) * x.powi(3);
        assert!((p - 1.0).abs().to_f64() < 1e-31);
        assert_eq!(Dd::from_f64(2.0).powi(10).to_f64(), 1024.0);
        assert_eq!(x.powi(0), Dd::ONE);
    }

    #[test]
    fn cancellation_survives() {
        let big = Dd::from_f64(1e17);
        let v = (big + 1.0) - big;
        assert_eq!(v.to_f64(), 1.0);
    }

    #[test]
    fn integer_conversion_is_exact() {
        let n: i64 = (1 << 60) + 3;
        let d = Dd::from(n);
        assert_eq!(d.hi() as i128 + d.lo() as i128, n as i128);
    }

    #[test]
    fn decimal_round_trip() {
        let third = Dd::ONE / Dd::from_f64(3.0);
        let text = third.to_decimal(32);
        assert!(text.starts_with("3.33333333333333333333333333333"));
        let back = Dd::parse_decimal(&text).unwrap();
        assert!(((back - third) / third).abs().to_f64() < 1e-31);
        for v in [1.0, -2.5e-7, 123456.789, 9.999999999999999e22] {
            let x = Dd::from_f64(v) / 7.0;
            let y = Dd::parse_decimal(&x.to_decimal(32)).unwrap();
            assert!(((y - x) / x).abs().to_f64() < 1e-30, "{v}");
        }
        assert_eq!(Dd::from_f64(1.5).to_decimal(3), "1.50e0");
        assert_eq!(Dd::from_f64(9.9999).to_decimal(3), "1.00e1");
        assert_eq!(Dd::ZERO.to_decimal(5), "0");
        assert_eq!(Dd::parse_decimal("-0.25").unwrap().to_f64(), -0.25);
        assert!(Dd::parse_decimal("abc").is_none());
    }
}
