//! Exact arithmetic in a real quadratic field and cyclic order on the circle.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ForgeError;

/// `a + b·√d` with rational `a`, `b` and square-free `d`, stored over a
/// common positive denominator as `(p + q·√d) / den`.
///
/// The canonical form has `d = 0` whenever `b = 0` and a reduced triple, so
/// structural equality coincides with numerical equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QuadraticNumber {
    p: BigInt,
    q: BigInt,
    den: BigInt,
    d: u64,
}

fn square_free_split(d: u64) -> (u64, u64) {
    // d = f² · r with r square-free
    let mut f = 1u64;
    let mut r = d;
    let mut p = 2u64;
    while p * p <= r {
        while r % (p * p) == 0 {
            r /= p * p;
            f *= p;
        }
        p += 1;
    }
    (f, r)
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rational_sqrt(x: &BigRational) -> Option<BigRational> {
    if x.is_negative() {
        return None;
    }
    let n = x.numer().sqrt();
    let d = x.denom().sqrt();
    if &(&n * &n) == x.numer() && &(&d * &d) == x.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

/// Relative margin above which float evaluation decides a sign.
const FILTER: f64 = 1e-9;

fn isign(x: &BigInt) -> i8 {
    match x.sign() {
        num_bigint::Sign::Plus => 1,
        num_bigint::Sign::Minus => -1,
        num_bigint::Sign::NoSign => 0,
    }
}

/// Exact sign of `p + q·√d`.
fn surd_sign(p: &BigInt, q: &BigInt, d: u64) -> i8 {
    let sp = isign(p);
    if d == 0 {
        return sp;
    }
    let sq = isign(q);
    if sp == 0 || sp == sq {
        return sq;
    }
    if let (Some(pf), Some(qf)) = (p.to_f64(), q.to_f64()) {
        let qs = qf * (d as f64).sqrt();
        let v = pf + qs;
        if v.is_finite() && v.abs() > FILTER * (pf.abs() + qs.abs()) {
            return if v > 0.0 { 1 } else { -1 };
        }
    }
    let p2 = p * p;
    let q2d = q * q * BigInt::from(d);
    match p2.cmp(&q2d) {
        Ordering::Greater => sp,
        Ordering::Less => sq,
        Ordering::Equal => 0,
    }
}

impl QuadraticNumber {
    pub fn new(a: BigRational, b: BigRational, d: u64) -> Self {
        if b.is_zero() || d == 0 {
            return Self::rational(a);
        }
        let (f, r) = square_free_split(d);
        let b = b * BigRational::from_integer(BigInt::from(f));
        if r == 1 {
            return Self::rational(a + b);
        }
        let den = a.denom().lcm(b.denom());
        let p = a.numer() * (&den / a.denom());
        let q = b.numer() * (&den / b.denom());
        Self::from_parts(p, q, den, r)
    }

    fn from_parts(mut p: BigInt, mut q: BigInt, mut den: BigInt, mut d: u64) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        if q.is_zero() || d == 0 {
            q = BigInt::zero();
            d = 0;
        }
        if den.is_negative() {
            p = -p;
            q = -q;
            den = -den;
        }
        let g = p.gcd(&q).gcd(&den);
        if !g.is_one() {
            p /= &g;
            q /= &g;
            den /= &g;
        }
        QuadraticNumber { p, q, den, d }
    }

    pub fn rational(a: BigRational) -> Self {
        let (p, den) = a.into();
        QuadraticNumber { p, q: BigInt::zero(), den, d: 0 }
    }

    pub fn from_ratio(n: i64, d: i64) -> Self {
        Self::rational(rat(n, d))
    }

    pub fn from_int(n: i64) -> Self {
        QuadraticNumber { p: BigInt::from(n), q: BigInt::zero(), den: BigInt::one(), d: 0 }
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// `√d` itself.
    pub fn sqrt_of(d: u64) -> Self {
        Self::new(BigRational::zero(), BigRational::one(), d)
    }

    pub fn rational_part(&self) -> BigRational {
        BigRational::new(self.p.clone(), self.den.clone())
    }

    pub fn surd_part(&self) -> BigRational {
        BigRational::new(self.q.clone(), self.den.clone())
    }

    pub fn radicand(&self) -> u64 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        self.d == 0
    }

    pub fn is_zero(&self) -> bool {
        self.d == 0 && self.p.is_zero()
    }

    fn common_field(&self, other: &Self) -> u64 {
        match (self.d, other.d) {
            (0, d) | (d, 0) => d,
            (x, y) if x == y => x,
            (x, y) => panic!("quadratic fields Q(√{x}) and Q(√{y}) cannot be mixed"),
        }
    }

    /// Whether the two values live in a common field.
    pub fn compatible(&self, other: &Self) -> bool {
        self.d == 0 || other.d == 0 || self.d == other.d
    }

    /// Exact sign, filtered through floats and decided by comparing
    /// `p²` with `q²·d` when the filter is inconclusive.
    pub fn sign(&self) -> i8 {
        surd_sign(&self.p, &self.q, self.d)
    }

    pub fn conjugate(&self) -> Self {
        QuadraticNumber { p: self.p.clone(), q: -self.q.clone(), den: self.den.clone(), d: self.d }
    }

    /// Field norm `a² − d·b²`.
    pub fn norm(&self) -> BigRational {
        let n = &self.p * &self.p - &self.q * &self.q * BigInt::from(self.d);
        BigRational::new(n, &self.den * &self.den)
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "division by zero");
        let n = &self.p * &self.p - &self.q * &self.q * BigInt::from(self.d);
        Self::from_parts(&self.den * &self.p, -(&self.den * &self.q), n, self.d)
    }

    pub fn abs(&self) -> Self {
        if self.sign() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Float approximation, for display and heuristics only.
    pub fn approx(&self) -> f64 {
        let den = self.den.to_f64().unwrap_or(f64::NAN);
        let p = self.p.to_f64().unwrap_or(f64::NAN);
        if self.d == 0 {
            return BigRational::new(self.p.clone(), self.den.clone()).to_f64().unwrap_or(p / den);
        }
        (p + self.q.to_f64().unwrap_or(f64::NAN) * (self.d as f64).sqrt()) / den
    }

    /// Float value with an absolute error bound, or `None` on overflow.
    fn bounded_approx(&self) -> Option<(f64, f64)> {
        let den = self.den.to_f64()?;
        let p = self.p.to_f64()?;
        let qs = if self.d == 0 { 0.0 } else { self.q.to_f64()? * (self.d as f64).sqrt() };
        let v = (p + qs) / den;
        let m = (p.abs() + qs.abs()) / den;
        (v.is_finite() && m.is_finite() && den > 0.0).then_some((v, m))
    }

    /// Exact floor.
    pub fn floor(&self) -> BigInt {
        if self.d == 0 {
            return self.p.div_floor(&self.den);
        }
        let guess = self.approx().floor();
        let mut n = if guess.is_finite() && guess.abs() < 1e15 {
            BigInt::from(guess as i64)
        } else {
            // huge values: start from the rational part and walk
            (&self.p + &self.q * BigInt::from(self.d).sqrt()).div_floor(&self.den)
        };
        loop {
            let lo = Self::rational(BigRational::from_integer(n.clone()));
            if *self < lo {
                n -= 1;
                continue;
            }
            let hi = Self::rational(BigRational::from_integer(&n + 1));
            if *self >= hi {
                n += 1;
                continue;
            }
            return n;
        }
    }

    /// `self − floor(self)`, in `[0, 1)`.
    pub fn fract(&self) -> Self {
        let f = self.floor();
        self.add_int(&-f)
    }

    pub fn add_int(&self, k: &BigInt) -> Self {
        Self::from_parts(&self.p + k * &self.den, self.q.clone(), self.den.clone(), self.d)
    }

    /// Square root inside `Q(√field)` when it exists there.
    pub fn sqrt_in(&self, field: u64) -> Option<Self> {
        match self.sign() {
            -1 => return None,
            0 => return Some(Self::zero()),
            _ => {}
        }
        let a = self.rational_part();
        if self.d == 0 {
            if let Some(r) = rational_sqrt(&a) {
                return Some(Self::rational(r));
            }
            if field > 1 {
                let q = &a / BigRational::from_integer(BigInt::from(field));
                if let Some(r) = rational_sqrt(&q) {
                    return Some(Self::new(BigRational::zero(), r, field));
                }
            }
            return None;
        }
        // (c + e√d)² = c² + d e² + 2ce√d
        let n = rational_sqrt(&self.norm())?;
        let two = rat(2, 1);
        for c2 in [(&a + &n) / &two, (&a - &n) / &two] {
            if let Some(c) = rational_sqrt(&c2) {
                if c.is_zero() {
                    continue;
                }
                let e = self.surd_part() / (&two * &c);
                let cand = Self::new(c, e, self.d);
                if &(&cand * &cand) == self {
                    return Some(cand.abs());
                }
            }
        }
        None
    }
}

impl PartialOrd for QuadraticNumber {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuadraticNumber {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        if let (Some((x, mx)), Some((y, my))) = (self.bounded_approx(), other.bounded_approx()) {
            if (x - y).abs() > FILTER * (mx + my) {
                return x.partial_cmp(&y).expect("finite");
            }
        }
        let d = self.common_field(other);
        let p = &self.p * &other.den - &other.p * &self.den;
        let q = &self.q * &other.den - &other.q * &self.den;
        surd_sign(&p, &q, d).cmp(&0)
    }
}

impl<'a> Add<&'a QuadraticNumber> for &'a QuadraticNumber {
    type Output = QuadraticNumber;
    fn add(self, o: &QuadraticNumber) -> QuadraticNumber {
        let d = self.common_field(o);
        if self.den == o.den {
            return QuadraticNumber::from_parts(&self.p + &o.p, &self.q + &o.q, self.den.clone(), d);
        }
        QuadraticNumber::from_parts(
            &self.p * &o.den + &o.p * &self.den,
            &self.q * &o.den + &o.q * &self.den,
            &self.den * &o.den,
            d,
        )
    }
}

impl<'a> Sub<&'a QuadraticNumber> for &'a QuadraticNumber {
    type Output = QuadraticNumber;
    fn sub(self, o: &QuadraticNumber) -> QuadraticNumber {
        let d = self.common_field(o);
        if self.den == o.den {
            return QuadraticNumber::from_parts(&self.p - &o.p, &self.q - &o.q, self.den.clone(), d);
        }
        QuadraticNumber::from_parts(
            &self.p * &o.den - &o.p * &self.den,
            &self.q * &o.den - &o.q * &self.den,
            &self.den * &o.den,
            d,
        )
    }
}

impl<'a> Mul<&'a QuadraticNumber> for &'a QuadraticNumber {
    type Output = QuadraticNumber;
    fn mul(self, o: &QuadraticNumber) -> QuadraticNumber {
        let d = self.common_field(o);
        let p = &self.p * &o.p + &self.q * &o.q * BigInt::from(d);
        let q = &self.p * &o.q + &self.q * &o.p;
        QuadraticNumber::from_parts(p, q, &self.den * &o.den, d)
    }
}

impl<'a> Div<&'a QuadraticNumber> for &'a QuadraticNumber {
    type Output = QuadraticNumber;
    fn div(self, o: &QuadraticNumber) -> QuadraticNumber {
        if o.d == 0 {
            assert!(!o.p.is_zero(), "division by zero");
            return QuadraticNumber::from_parts(&self.p * &o.den, &self.q * &o.den, &self.den * &o.p, self.d);
        }
        self * &o.recip()
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for QuadraticNumber {
            type Output = QuadraticNumber;
            fn $m(self, o: QuadraticNumber) -> QuadraticNumber {
                (&self).$m(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for QuadraticNumber {
    type Output = QuadraticNumber;
    fn neg(self) -> QuadraticNumber {
        QuadraticNumber { p: -self.p, q: -self.q, den: self.den, d: self.d }
    }
}

impl Neg for &QuadraticNumber {
    type Output = QuadraticNumber;
    fn neg(self) -> QuadraticNumber {
        -self.clone()
    }
}

impl fmt::Display for QuadraticNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (self.rational_part(), self.surd_part());
        if self.d == 0 {
            write!(f, "{a}")
        } else if a.is_zero() {
            write!(f, "{b}√{}", self.d)
        } else if b.is_negative() {
            write!(f, "{a} - {}√{}", -b, self.d)
        } else {
            write!(f, "{a} + {b}√{}", self.d)
        }
    }
}

impl fmt::Debug for QuadraticNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational, ForgeError> {
    let s = s.trim();
    BigRational::from_str(s).map_err(|_| ForgeError::Parse(format!("bad rational `{s}`")))
}

#[derive(Serialize, Deserialize)]
struct Triple {
    a: String,
    b: String,
    d: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QnRepr {
    Short(String),
    Int(i64),
    Full(Triple),
}

impl Serialize for QuadraticNumber {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Triple { a: self.rational_part().to_string(), b: self.surd_part().to_string(), d: self.d }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticNumber {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match QnRepr::deserialize(de)? {
            QnRepr::Short(s) => parse_rational(&s).map(QuadraticNumber::rational).map_err(D::Error::custom),
            QnRepr::Int(n) => Ok(QuadraticNumber::from_int(n)),
            QnRepr::Full(t) => {
                let a = parse_rational(&t.a).map_err(D::Error::custom)?;
                let b = parse_rational(&t.b).map_err(D::Error::custom)?;
                Ok(QuadraticNumber::new(a, b, t.d))
            }
        }
    }
}

/// A point of the circle, as an angle in turns reduced into `[0, 1)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CirclePoint(QuadraticNumber);

impl CirclePoint {
    pub fn new(angle: QuadraticNumber) -> Self {
        let zero = QuadraticNumber::zero();
        let one = QuadraticNumber::one();
        if angle >= zero && angle < one {
            CirclePoint(angle)
        } else {
            CirclePoint(angle.fract())
        }
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Self::new(QuadraticNumber::from_ratio(n, d))
    }

    pub fn zero() -> Self {
        CirclePoint(QuadraticNumber::zero())
    }

    pub fn angle(&self) -> &QuadraticNumber {
        &self.0
    }

    pub fn field(&self) -> u64 {
        self.0.radicand()
    }

    /// Counter-clockwise distance from `self` to `to`, in `[0, 1)`.
    pub fn ccw_to(&self, to: &CirclePoint) -> QuadraticNumber {
        let diff = &to.0 - &self.0;
        if diff.sign() < 0 {
            diff + QuadraticNumber::one()
        } else {
            diff
        }
    }

    /// Shorter arc length between the two points, in `[0, 1/2]`.
    pub fn arc_distance(&self, other: &CirclePoint) -> QuadraticNumber {
        let a = self.ccw_to(other);
        let b = other.ccw_to(self);
        if a <= b {
            a
        } else {
            b
        }
    }

    pub fn offset(&self, delta: &QuadraticNumber) -> CirclePoint {
        CirclePoint::new(&self.0 + delta)
    }

    pub fn approx(&self) -> f64 {
        self.0.approx()
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for CirclePoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CirclePoint {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        QuadraticNumber::deserialize(de).map(CirclePoint::new)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclicOrder {
    Positive,
    Negative,
    Degenerate,
}

impl CyclicOrder {
    pub fn as_i8(self) -> Option<i8> {
        match self {
            CyclicOrder::Positive => Some(1),
            CyclicOrder::Negative => Some(-1),
            CyclicOrder::Degenerate => None,
        }
    }
}

/// Orientation of the triple `(p, q, r)` in the counter-clockwise cyclic order.
pub fn cyclic_order(p: &CirclePoint, q: &CirclePoint, r: &CirclePoint) -> CyclicOrder {
    if p == q || q == r || p == r {
        return CyclicOrder::Degenerate;
    }
    let (pq, qr, rp) = (p < q, q < r, r < p);
    // exactly one descent for a positive triple
    if (pq && qr) || (qr && rp) || (rp && pq) {
        CyclicOrder::Positive
    } else {
        CyclicOrder::Negative
    }
}

/// Whether `p` lies strictly inside the counter-clockwise open arc from `a` to `b`.
pub fn arc_contains(a: &CirclePoint, b: &CirclePoint, p: &CirclePoint) -> Result<bool, ForgeError> {
    if a == b {
        return Err(ForgeError::Degenerate(format!("arc with equal ends {a}")));
    }
    Ok(in_open_arc(a, b, p))
}

/// Unchecked form of [`arc_contains`]; `a ≠ b` is the caller's responsibility.
pub(crate) fn in_open_arc(a: &CirclePoint, b: &CirclePoint, p: &CirclePoint) -> bool {
    cyclic_order(a, p, b) == CyclicOrder::Positive
}

/// Checks that every value shares one radicand; returns it (0 if all rational).
pub fn common_radicand<'a>(values: impl IntoIterator<Item = &'a QuadraticNumber>) -> Result<u64, ForgeError> {
    let mut field = 0u64;
    for v in values {
        match (field, v.radicand()) {
            (_, 0) => {}
            (0, d) => field = d,
            (f, d) if f == d => {}
            (f, d) => return Err(ForgeError::FieldMismatch(f, d)),
        }
    }
    Ok(field)
}

/// Integer `n` as a big rational.
pub fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub(crate) fn is_integer(x: &QuadraticNumber) -> bool {
    x.is_rational() && x.rational_part().is_integer()
}

pub(crate) fn to_integer(x: &QuadraticNumber) -> Option<BigInt> {
    if is_integer(x) {
        Some(x.rational_part().to_integer())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: (i64, i64), b: (i64, i64), d: u64) -> QuadraticNumber {
        QuadraticNumber::new(rat(a.0, a.1), rat(b.0, b.1), d)
    }

    #[test]
    fn signs_from_squaring() {
        assert_eq!(q((0, 1), (0, 1), 0).sign(), 0);
        assert_eq!(q((-2, 1), (1, 1), 5).sign(), 1);
        assert_eq!(q((9, 4), (-1, 1), 5).sign(), 1);
        assert_eq!(q((-3, 1), (1, 1), 5).sign(), -1);
        assert_eq!(q((0, 1), (-1, 7), 3).sign(), -1);
    }

    #[test]
    fn canonical_form() {
        assert_eq!(q((1, 1), (0, 1), 5), QuadraticNumber::from_int(1));
        assert_eq!(q((0, 1), (1, 1), 4), QuadraticNumber::from_int(2));
        assert_eq!(q((0, 1), (1, 1), 20), q((0, 1), (2, 1), 5));
    }

    #[test]
    fn division_and_floor() {
        let phi = q((1, 2), (1, 2), 5);
        let inv = QuadraticNumber::one() / phi.clone();
        assert_eq!(inv, &phi - &QuadraticNumber::one());
        assert_eq!(phi.floor(), BigInt::from(1));
        assert_eq!((-phi.clone()).floor(), BigInt::from(-2));
        assert_eq!(q((3, 1), (0, 1), 0).floor(), BigInt::from(3));
        let f = phi.fract();
        assert!(f.sign() >= 0 && f < QuadraticNumber::one());
    }

    #[test]
    fn square_roots_in_field() {
        let x = q((3, 2), (1, 2), 5); // φ² = (3 + √5)/2
        let phi = q((1, 2), (1, 2), 5);
        assert_eq!(x.sqrt_in(5), Some(phi));
        assert_eq!(QuadraticNumber::from_int(5).sqrt_in(5), Some(QuadraticNumber::sqrt_of(5)));
        assert_eq!(QuadraticNumber::from_ratio(9, 4).sqrt_in(5), Some(QuadraticNumber::from_ratio(3, 2)));
        assert_eq!(QuadraticNumber::from_int(2).sqrt_in(5), None);
    }

    #[test]
    fn cyclic_examples() {
        let p = |n, d| CirclePoint::ratio(n, d);
        assert_eq!(cyclic_order(&p(0, 1), &p(1, 4), &p(1, 2)), CyclicOrder::Positive);
        assert_eq!(cyclic_order(&p(0, 1), &p(1, 2), &p(1, 4)), CyclicOrder::Negative);
        assert_eq!(cyclic_order(&p(1, 3), &p(1, 3), &p(1, 2)), CyclicOrder::Degenerate);
        assert!(arc_contains(&p(0, 1), &p(1, 2), &p(1, 4)).unwrap());
        assert!(!arc_contains(&p(1, 2), &p(0, 1), &p(1, 4)).unwrap());
        assert!(arc_contains(&p(3, 4), &p(1, 4), &p(0, 1)).unwrap());
        assert!(arc_contains(&p(1, 4), &p(1, 4), &p(0, 1)).is_err());
    }

    #[test]
    fn reduction_mod_one() {
        assert_eq!(CirclePoint::ratio(5, 4), CirclePoint::ratio(1, 4));
        assert_eq!(CirclePoint::ratio(-1, 4), CirclePoint::ratio(3, 4));
        let s = CirclePoint::new(QuadraticNumber::sqrt_of(5));
        assert_eq!(s.angle(), &(&QuadraticNumber::sqrt_of(5) - &QuadraticNumber::from_int(2)));
    }

    #[test]
    fn json_round_trip() {
        let x = q((-2, 3), (5, 7), 5);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"a":"-2/3","b":"5/7","d":5}"#);
        let back: QuadraticNumber = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        let short: QuadraticNumber = serde_json::from_str(r#""3/8""#).unwrap();
        assert_eq!(short, QuadraticNumber::from_ratio(3, 8));
    }

    #[test]
    fn radicand_mixing_rejected() {
        let v = [QuadraticNumber::sqrt_of(5), QuadraticNumber::sqrt_of(2)];
        assert!(common_radicand(v.iter()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = CirclePoint> {
            (-40i64..40, 1i64..12, -6i64..6, 1i64..12)
                .prop_map(|(a, b, c, d)| CirclePoint::new(QuadraticNumber::new(rat(a, b), rat(c, d), 5)))
        }

        proptest! {
            #[test]
            fn cyclic_order_is_cyclic_and_antisymmetric(p in point(), q in point(), r in point()) {
                prop_assume!(p != q && q != r && p != r);
                let o = cyclic_order(&p, &q, &r);
                prop_assert_eq!(o, cyclic_order(&q, &r, &p));
                prop_assert_eq!(o.as_i8().unwrap(), -cyclic_order(&p, &r, &q).as_i8().unwrap());
            }

            #[test]
            fn arcs_are_complementary(a in point(), b in point(), p in point()) {
                prop_assume!(a != b && p != a && p != b);
                prop_assert!(arc_contains(&a, &b, &p).unwrap() ^ arc_contains(&b, &a, &p).unwrap());
            }

            #[test]
            fn field_operations_agree_with_floats(a in -50i64..50, b in -9i64..9, c in -50i64..50, e in -9i64..9) {
                let x = QuadraticNumber::new(rat(a, 7), rat(b, 3), 5);
                let y = QuadraticNumber::new(rat(c, 5), rat(e, 2), 5);
                let p = &x * &y;
                prop_assert!((p.approx() - x.approx() * y.approx()).abs() < 1e-9);
                if !y.is_zero() {
                    let back = &(&x / &y) * &y;
                    prop_assert_eq!(back, x);
                }
            }
        }
    }
}
