//! Saturating arbitrary-size naturals.
//!
//! Rate values are built from towers such as iterated squaring, so every
//! value is either an exact [`BigUint`] not exceeding a configured [`Cap`] or
//! the marker [`BoundedNat::Saturated`]. All operations are monotone and
//! `Saturated` absorbs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exact natural, or a value known only to exceed the cap.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoundedNat {
    Exact(BigUint),
    Saturated,
}

impl BoundedNat {
    pub fn zero() -> Self {
        BoundedNat::Exact(BigUint::zero())
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self, BoundedNat::Saturated)
    }

    pub fn exact(&self) -> Option<&BigUint> {
        match self {
            BoundedNat::Exact(v) => Some(v),
            BoundedNat::Saturated => None,
        }
    }

    /// The value as `u64`, if exact and small enough.
    pub fn to_u64(&self) -> Option<u64> {
        self.exact().and_then(|v| v.to_u64())
    }

    /// The value as `usize`, if exact and small enough.
    pub fn to_usize(&self) -> Option<usize> {
        self.exact().and_then(|v| v.to_usize())
    }
}

impl From<u64> for BoundedNat {
    fn from(v: u64) -> Self {
        BoundedNat::Exact(BigUint::from(v))
    }
}

impl From<BigUint> for BoundedNat {
    fn from(v: BigUint) -> Self {
        BoundedNat::Exact(v)
    }
}

impl PartialOrd for BoundedNat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BoundedNat {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (BoundedNat::Exact(a), BoundedNat::Exact(b)) => a.cmp(b),
            (BoundedNat::Exact(_), BoundedNat::Saturated) => Ordering::Less,
            (BoundedNat::Saturated, BoundedNat::Exact(_)) => Ordering::Greater,
            (BoundedNat::Saturated, BoundedNat::Saturated) => Ordering::Equal,
        }
    }
}

/// Upper limit for exact values. Defaults to 10^18.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cap(BigUint);

impl Default for Cap {
    fn default() -> Self {
        Cap::pow10(18)
    }
}

impl FromStr for Cap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("10^").or_else(|| s.strip_prefix("1e")) {
            let e: u32 = exp
                .parse()
                .map_err(|_| Error::Config(format!("bad cap exponent in {s:?}")))?;
            return Ok(Cap::pow10(e));
        }
        BigUint::from_str(s)
            .map(Cap)
            .map_err(|_| Error::Config(format!("bad cap {s:?}")))
    }
}

impl TryFrom<String> for Cap {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Cap> for String {
    fn from(c: Cap) -> String {
        c.0.to_string()
    }
}

impl fmt::Display for Cap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Cap {
    pub fn new(limit: BigUint) -> Self {
        Cap(limit)
    }

    pub fn pow10(e: u32) -> Self {
        Cap(num_traits::pow(BigUint::from(10u32), e as usize))
    }

    pub fn limit(&self) -> &BigUint {
        &self.0
    }

    /// Wraps an exact value, saturating above the cap.
    pub fn clamp(&self, v: BigUint) -> BoundedNat {
        if v > self.0 {
            BoundedNat::Saturated
        } else {
            BoundedNat::Exact(v)
        }
    }

    pub fn nat(&self, v: u64) -> BoundedNat {
        self.clamp(BigUint::from(v))
    }

    pub fn add(&self, a: &BoundedNat, b: &BoundedNat) -> BoundedNat {
        match (a, b) {
            (BoundedNat::Exact(x), BoundedNat::Exact(y)) => self.clamp(x + y),
            _ => BoundedNat::Saturated,
        }
    }

    pub fn add_u64(&self, a: &BoundedNat, b: u64) -> BoundedNat {
        match a {
            BoundedNat::Exact(x) => self.clamp(x + b),
            BoundedNat::Saturated => BoundedNat::Saturated,
        }
    }

    pub fn mul(&self, a: &BoundedNat, b: &BoundedNat) -> BoundedNat {
        match (a, b) {
            (BoundedNat::Exact(x), BoundedNat::Exact(y)) => self.clamp(x * y),
            _ => BoundedNat::Saturated,
        }
    }

    pub fn mul_u64(&self, a: &BoundedNat, b: u64) -> BoundedNat {
        match a {
            BoundedNat::Exact(x) => self.clamp(x * b),
            BoundedNat::Saturated => BoundedNat::Saturated,
        }
    }

    pub fn square(&self, a: &BoundedNat) -> BoundedNat {
        self.mul(a, a)
    }

    /// max(a − 1, 0); Saturated stays Saturated.
    pub fn pred(&self, a: &BoundedNat) -> BoundedNat {
        match a {
            BoundedNat::Exact(x) if x.is_zero() => BoundedNat::zero(),
            BoundedNat::Exact(x) => BoundedNat::Exact(x - 1u32),
            BoundedNat::Saturated => BoundedNat::Saturated,
        }
    }

    /// Decimal string, or `SATURATED(cap)`.
    pub fn render(&self, a: &BoundedNat) -> String {
        match a {
            BoundedNat::Exact(v) => v.to_string(),
            BoundedNat::Saturated => format!("SATURATED({})", self.0),
        }
    }
}

pub fn max(a: &BoundedNat, b: &BoundedNat) -> BoundedNat {
    std::cmp::max(a, b).clone()
}

// ---------------------------------------------------------------------------
// Exact exponentials and logarithms
// ---------------------------------------------------------------------------

/// Bounds `lo <= e * 2^p <= hi`.
fn e_fixed(p: u32) -> (BigUint, BigUint) {
    let one = BigUint::one() << p;
    let mut term = one.clone();
    let mut sum = one;
    let mut j = 1u32;
    // floor(floor(a)/j) = floor(a/j), so each term is floor(2^p / j!) and
    // loses less than one unit.
    while !term.is_zero() {
        term /= j;
        sum += &term;
        j += 1;
    }
    // Dropped tail: sum_{i > J} 2^p / i! < 2 once 2^p / J! < 1.
    let hi = &sum + j + 3u32;
    (sum, hi)
}

/// Bounds `lo <= e^m * 2^p <= hi`, by square-and-multiply with outward rounding.
fn exp_fixed(m: u64, p: u32) -> (BigUint, BigUint) {
    let (e_lo, e_hi) = e_fixed(p);
    let mut acc_lo = BigUint::one() << p;
    let mut acc_hi = acc_lo.clone();
    let mut base_lo = e_lo;
    let mut base_hi = e_hi;
    let mut k = m;
    let mask = (BigUint::one() << p) - 1u32;
    let ceil_shift = |v: BigUint| -> BigUint {
        let round_up = !(&v & &mask).is_zero();
        let q = v >> p;
        if round_up {
            q + 1u32
        } else {
            q
        }
    };
    while k > 0 {
        if k & 1 == 1 {
            acc_lo = (&acc_lo * &base_lo) >> p;
            acc_hi = ceil_shift(&acc_hi * &base_hi);
        }
        k >>= 1;
        if k > 0 {
            base_lo = (&base_lo * &base_lo) >> p;
            base_hi = ceil_shift(&base_hi * &base_hi);
        }
    }
    (acc_lo, acc_hi)
}

const MAX_REFINEMENTS: u32 = 12;

/// Bounds on floor(e^m). Equal when resolved exactly.
fn floor_exp_bounds(m: u64) -> (BigUint, BigUint) {
    if m == 0 {
        return (BigUint::one(), BigUint::one());
    }
    // e^m has about 1.4427 m bits; carry that many fractional bits plus margin.
    let mut p = (m as f64 * std::f64::consts::LOG2_E) as u32 + 64;
    let mut last = (BigUint::zero(), BigUint::zero());
    for _ in 0..MAX_REFINEMENTS {
        let (lo, hi) = exp_fixed(m, p);
        let (flo, fhi) = (lo >> p, hi >> p);
        if flo == fhi {
            return (flo, fhi);
        }
        last = (flo, fhi);
        p = p.saturating_mul(2);
    }
    last
}

/// ⌈e^m⌉. Rounds up if the bracketing never resolves.
pub fn ceil_exp(m: u64) -> BigUint {
    if m == 0 {
        return BigUint::one();
    }
    // e^m is irrational for m >= 1, so the ceiling is floor + 1.
    let (_, fhi) = floor_exp_bounds(m);
    fhi + 1u32
}

/// Whether e^m >= x; ambiguous brackets answer `false` so callers round up.
fn exp_at_least(m: u64, x: &BigUint) -> bool {
    if m == 0 {
        return x <= &BigUint::one();
    }
    // For m >= 1 and integer x: e^m >= x  <=>  floor(e^m) >= x.
    let (flo, _) = floor_exp_bounds(m);
    &flo >= x
}

/// Natural log estimate from the leading bits.
fn ln_estimate(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 60 {
        return (x.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 60;
    let lead = (x >> shift).to_u64().unwrap() as f64;
    lead.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Smallest m with e^m >= x (for x >= 1).
pub fn ceil_ln_upper_big(x: &BigUint) -> Result<u64> {
    if x.is_zero() {
        return Err(Error::InvalidParameter("ceil_ln of 0".into()));
    }
    let est = ln_estimate(x);
    let mut m = (est.floor() as i64 - 2).max(0) as u64;
    while m > 0 && exp_at_least(m, x) {
        m -= 1;
    }
    while !exp_at_least(m, x) {
        m += 1;
    }
    Ok(m)
}

/// ⌈ln x⌉ in the sense of the smallest m with e^m >= x, saturating.
pub fn ceil_ln_upper(x: &BoundedNat) -> Result<BoundedNat> {
    match x {
        BoundedNat::Exact(v) => Ok(BoundedNat::from(ceil_ln_upper_big(v)?)),
        BoundedNat::Saturated => Ok(BoundedNat::Saturated),
    }
}

/// ⌈e^(n + shift)⌉ under a cap.
pub fn ceil_exp_capped(n: &BoundedNat, shift: u64, cap: &Cap) -> BoundedNat {
    let BoundedNat::Exact(n) = n else {
        return BoundedNat::Saturated;
    };
    let total = n + shift;
    // e^t > 2^t, so anything beyond the cap's bit length saturates.
    if total > BigUint::from(cap.limit().bits()) {
        return BoundedNat::Saturated;
    }
    let t = total.to_u64().expect("bounded by bit length");
    cap.clamp(ceil_exp(t))
}

/// Integer ceiling of a / b.
pub(crate) fn div_ceil(a: &BigUint, b: &BigUint) -> BigUint {
    let (q, r) = a.div_rem(b);
    if r.is_zero() {
        q
    } else {
        q + 1u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    // e = 2.71828182845904523536028747135266249775724709369995...
    // e^2 = 7.38905609893065022723042746057500781318031557055184...
    // e^10 = 22026.4657948067165169579006452842443663535126185567...
    #[test]
    fn exp_bounds_bracket_reference_digits() {
        let p = 200;
        let (lo, hi) = exp_fixed(1, p);
        let scale = BigUint::from(10u32).pow(40);
        let e40 = BigUint::from_str("27182818284590452353602874713526624977572").unwrap();
        // lo/2^p <= e <= hi/2^p, compared at 40 decimals.
        assert!((&lo * &scale) >> p <= e40.clone() + 1u32);
        assert!(((&hi * &scale) >> p) + 1u32 >= e40);
        assert!(&hi - &lo < big(100));
    }

    #[test]
    fn ceil_exp_small() {
        assert_eq!(ceil_exp(0), big(1));
        assert_eq!(ceil_exp(1), big(3));
        assert_eq!(ceil_exp(2), big(8));
        assert_eq!(ceil_exp(3), big(21));
        assert_eq!(ceil_exp(10), big(22027));
        // e^41 = 639843493530054949.2...
        assert_eq!(ceil_exp(41), big(639843493530054950));
    }

    #[test]
    fn ceil_ln_examples() {
        assert_eq!(ceil_ln_upper_big(&big(1)).unwrap(), 0);
        assert_eq!(ceil_ln_upper_big(&big(2)).unwrap(), 1);
        assert_eq!(ceil_ln_upper_big(&big(3)).unwrap(), 2);
        assert_eq!(ceil_ln_upper_big(&big(7)).unwrap(), 2);
        assert_eq!(ceil_ln_upper_big(&big(8)).unwrap(), 3);
        assert_eq!(ceil_ln_upper_big(&big(22026)).unwrap(), 10);
        assert_eq!(ceil_ln_upper_big(&big(22027)).unwrap(), 11);
        assert!(ceil_ln_upper_big(&big(0)).is_err());
        assert_eq!(ceil_ln_upper(&BoundedNat::Saturated).unwrap(), BoundedNat::Saturated);
    }

    #[test]
    fn ceil_ln_brackets_floats() {
        // e^m >= x and e^(m-1) < x(1 + 1e-12), checked in f64 where it is reliable.
        for x in 1u64..5000 {
            let m = ceil_ln_upper_big(&big(x)).unwrap();
            assert!((m as f64).exp() >= x as f64 * (1.0 - 1e-12), "x={x}");
            if m > 0 {
                assert!(((m - 1) as f64).exp() < x as f64 * (1.0 + 1e-12), "x={x}");
            }
        }
    }

    #[test]
    fn ceil_ln_large_inputs_consistent_with_ceil_exp() {
        for m in [50u64, 100, 333, 1000] {
            let c = ceil_exp(m);
            // floor(e^m) < c and e^m > floor(e^m), so ln(c) > m and ln(c-1) < m.
            assert_eq!(ceil_ln_upper_big(&c).unwrap(), m + 1);
            assert_eq!(ceil_ln_upper_big(&(c - 1u32)).unwrap(), m);
        }
    }

    #[test]
    fn saturation_semantics() {
        let cap = Cap::new(big(100));
        assert_eq!(cap.mul(&cap.nat(10), &cap.nat(10)), cap.nat(100));
        assert_eq!(cap.mul(&cap.nat(10), &cap.nat(11)), BoundedNat::Saturated);
        assert_eq!(cap.add(&BoundedNat::Saturated, &cap.nat(0)), BoundedNat::Saturated);
        assert_eq!(cap.pred(&cap.nat(0)), cap.nat(0));
        assert_eq!(cap.pred(&BoundedNat::Saturated), BoundedNat::Saturated);
        assert!(BoundedNat::Saturated > cap.nat(100));
        assert_eq!(cap.render(&BoundedNat::Saturated), "SATURATED(100)");
        assert_eq!(Cap::default().render(&BoundedNat::Saturated), "SATURATED(1000000000000000000)");
        assert_eq!(ceil_exp_capped(&cap.nat(2), 2, &cap), cap.nat(55));
        assert_eq!(ceil_exp_capped(&cap.nat(3), 2, &cap), BoundedNat::Saturated);
        assert_eq!(ceil_exp_capped(&cap.nat(1000), 2, &cap), BoundedNat::Saturated);
    }

    #[test]
    fn cap_parsing() {
        assert_eq!("10^18".parse::<Cap>().unwrap(), Cap::default());
        assert_eq!("1e3".parse::<Cap>().unwrap(), Cap::new(big(1000)));
        assert_eq!("12345".parse::<Cap>().unwrap(), Cap::new(big(12345)));
        assert!("ten".parse::<Cap>().is_err());
    }
}
