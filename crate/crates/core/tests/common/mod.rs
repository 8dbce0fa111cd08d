//! An unbounded rate evaluator written directly from the formulas, used as an
//! oracle for the saturating evaluator in the library.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use tikhonov::moduli::QuantitativeModuli;
use tikhonov::nat::{BoundedNat, Cap};
use tikhonov::natfn::NatFunction;

/// Why the naive evaluator did not produce an exact value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beyond {
    /// Some intermediate value exceeded the budget. Every formula is monotone
    /// in its intermediates, so the result exceeds it too.
    Huge,
    /// ⌈ln x⌉ was too close to call in floating point.
    Unknown,
}

pub type Val = Result<BigUint, Beyond>;

/// Unbounded evaluator with a size budget of 2^`budget_bits`.
#[derive(Debug, Clone)]
pub struct Naive {
    limit: BigUint,
    budget_bits: u64,
}

impl Naive {
    pub fn new(budget_bits: u64) -> Self {
        Naive {
            limit: BigUint::one() << budget_bits,
            budget_bits,
        }
    }

    fn check(&self, v: BigUint) -> Val {
        if v > self.limit {
            Err(Beyond::Huge)
        } else {
            Ok(v)
        }
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn pred(v: BigUint) -> BigUint {
        if v.is_zero() {
            v
        } else {
            v - 1u32
        }
    }

    /// c(k+1) − 1.
    fn scaled(&self, k: &BigUint, c: u64) -> Val {
        self.check(Self::pred((k + 1u32) * c))
    }

    /// ⌈e^m⌉ from the Taylor series in fixed point with explicit error bounds.
    pub fn ceil_exp(&self, m: u64) -> Val {
        if m == 0 {
            return Ok(BigUint::one());
        }
        if m as f64 * std::f64::consts::LOG2_E > self.budget_bits as f64 + 2.0 {
            return Err(Beyond::Huge);
        }
        let p = (m as f64 * std::f64::consts::LOG2_E) as u64 + 64;
        let one = BigUint::one() << p;
        let mut term = one.clone();
        let mut sum = one;
        let mut j = 1u64;
        // Floors only round down. A unit lost at step i grows by m^t/((i+1)⋯(i+t))
        // ≤ e^m < 2^(p − 63) later, so the sum is short by less than j·2^(p − 63).
        loop {
            term = term * m / j;
            sum += &term;
            if j > 2 * m && term.is_zero() {
                break;
            }
            j += 1;
        }
        let lo = &sum;
        let hi = &sum + (BigUint::from(j + 2) << (p - 63));
        let (flo, fhi) = (lo >> p, hi >> p);
        assert_eq!(flo, fhi, "precision too low for e^{m}");
        // e^m is irrational for m ≥ 1.
        self.check(flo + 1u32)
    }

    /// ⌈ln x⌉ for x ≥ 1, refusing near-integer cases.
    pub fn ceil_ln(&self, x: &BigUint) -> Val {
        if x.is_one() {
            return Ok(BigUint::zero());
        }
        let l = x.to_f64().expect("small argument").ln();
        if (l - l.round()).abs() < 1e-9 {
            return Err(Beyond::Unknown);
        }
        Ok(Self::big(l.ceil() as u64))
    }

    pub fn eval_fn(&self, f: &NatFunction, n: &BigUint) -> Val {
        let v = match f {
            NatFunction::Identity => n.clone(),
            NatFunction::Const { value } => Self::big(*value),
            NatFunction::Affine { a, b } => n * *a + *b,
            NatFunction::Poly { coeffs } => {
                let mut acc = BigUint::zero();
                let mut pw = BigUint::one();
                for &c in coeffs {
                    acc += &pw * c;
                    pw *= n;
                }
                acc
            }
            NatFunction::PolyCeil { coeffs, den } => {
                let num = self.eval_fn(&NatFunction::Poly { coeffs: coeffs.clone() }, n)?;
                (num + (den - 1)) / *den
            }
            NatFunction::ExpCeil { shift } => {
                let t = (n + *shift).to_u64().ok_or(Beyond::Huge)?;
                return self.ceil_exp(t);
            }
            NatFunction::Table { values, tail } => {
                let v = match n.to_usize() {
                    Some(i) if i < values.len() => values[i],
                    _ => tail.unwrap_or(*values.last().expect("tables are nonempty")),
                };
                Self::big(v)
            }
            NatFunction::Compose { outer, inner } => {
                let i = self.eval_fn(inner, n)?;
                return self.eval_fn(outer, &i);
            }
            NatFunction::Max { of } => {
                let mut best = BigUint::zero();
                for g in of {
                    best = best.max(self.eval_fn(g, n)?);
                }
                best
            }
        };
        self.check(v)
    }

    /// A(M − 1 + ⌈ln(3d(k+1))⌉) + 1 with M = max{R(3k+2), G(3k+2) + 1}.
    pub fn theta(
        &self,
        a: &dyn Fn(&BigUint) -> Val,
        r: &dyn Fn(&BigUint) -> Val,
        g: &dyn Fn(&BigUint) -> Val,
        d: u64,
        k: &BigUint,
    ) -> Val {
        let k3 = k * 3u32 + 2u32;
        let m = r(&k3)?.max(g(&k3)? + 1u32);
        let l = self.ceil_ln(&((k + 1u32) * d * 3u32))?;
        let arg = self.check(Self::pred(m) + l)?;
        self.check(a(&arg)? + 1u32)
    }

    /// A(n + ⌈ln(3d(k+1))⌉) + 1.
    pub fn sigma(&self, a: &dyn Fn(&BigUint) -> Val, d: u64, k: &BigUint, n: &BigUint) -> Val {
        let l = self.ceil_ln(&((k + 1u32) * d * 3u32))?;
        self.check(a(&(n + l))? + 1u32)
    }

    /// max{B(4N(k+1) − 1), L(10N(k+1) − 1)}.
    pub fn rate_g(&self, m: &QuantitativeModuli, k: &BigUint) -> Val {
        let b = self.eval_fn(&m.beta_cauchy, &self.scaled(k, 4 * m.bound)?)?;
        let l = self.eval_fn(&m.lambda_cauchy, &self.scaled(k, 10 * m.bound)?)?;
        Ok(b.max(l))
    }

    pub fn nu1(&self, m: &QuantitativeModuli, k: &BigUint) -> Val {
        let a = |x: &BigUint| self.eval_fn(&m.divergence, x);
        let zero = |_: &BigUint| Ok(BigUint::zero());
        let g = |x: &BigUint| self.rate_g(m, x);
        self.theta(&a, &zero, &g, 2 * m.bound, k)
    }

    /// max{b(4Nℓ(k+1) − 1), ν₁(2ℓ(k+1) − 1)}.
    pub fn nu2(&self, m: &QuantitativeModuli, k: &BigUint) -> Val {
        let lhs = self.eval_fn(&m.convergence, &self.scaled(k, 4 * m.bound * m.ell)?)?;
        let rhs = self.nu1(m, &self.scaled(k, 2 * m.ell)?)?;
        Ok(lhs.max(rhs))
    }

    /// max{ν₁(6ℓ(k+1) − 1), b(12ℓN(k+1) − 1)}.
    pub fn dr_gap_threshold(&self, m: &QuantitativeModuli, k: &BigUint) -> Val {
        let lhs = self.nu1(m, &self.scaled(k, 6 * m.ell)?)?;
        let rhs = self.eval_fn(&m.convergence, &self.scaled(k, 12 * m.ell * m.bound)?)?;
        Ok(lhs.max(rhs))
    }

    /// 24N(f̌^{(R)}(0) + 1)² with R = 4N⁴(k+1)² and
    /// f̌(m) = max{f(24N(m+1)²), 24N(m+1)²}.
    pub fn projection_bound(&self, bound: u64, k: &BigUint, f: &dyn Fn(&BigUint) -> Val) -> Val {
        let c = Self::big(24 * bound);
        let times = Self::big(4 * bound.pow(4)) * (k + 1u32) * (k + 1u32);
        let mut x = BigUint::zero();
        let mut i = BigUint::zero();
        while i < times {
            let inner = self.check(&c * (&x + 1u32) * (&x + 1u32))?;
            x = f(&inner)?.max(inner);
            i += 1u32;
        }
        self.check(&c * (&x + 1u32) * (&x + 1u32))
    }
}

/// Whether a saturating result agrees with the naive one: exact values must
/// match exactly; a huge naive value must not come back exact.
pub fn agrees(sat: &BoundedNat, naive: &Val) -> Option<bool> {
    match (sat, naive) {
        (_, Err(Beyond::Unknown)) => None,
        (BoundedNat::Saturated, _) => None,
        (BoundedNat::Exact(v), Ok(w)) => Some(v == w),
        (BoundedNat::Exact(_), Err(Beyond::Huge)) => Some(false),
    }
}

/// Tally of one comparison sweep.
#[derive(Debug, Default, Clone)]
pub struct Sweep {
    /// Pairs where the saturating evaluator returned an exact value.
    pub compared: u64,
    pub saturated: u64,
    pub skipped: u64,
    pub mismatches: Vec<String>,
}

impl Sweep {
    pub fn record(&mut self, label: impl FnOnce() -> String, sat: &BoundedNat, naive: &Val) {
        match agrees(sat, naive) {
            Some(true) => self.compared += 1,
            Some(false) => {
                self.compared += 1;
                if self.mismatches.len() < 10 {
                    self.mismatches.push(format!("{}: saturating {:?} vs naive {:?}", label(), sat, naive));
                }
            }
            None if sat.is_saturated() => self.saturated += 1,
            None => self.skipped += 1,
        }
    }
}

pub const CAPS: [u32; 4] = [18, 100, 1000, 4000];

/// Compares the saturating rates with the naive ones over stock instances,
/// N ∈ {1, 2, 3}, k ≤ 20 and several caps.
pub fn rates_sweep() -> Sweep {
    use tikhonov::moduli::stock_instance;
    use tikhonov::rates;

    let naive = Naive::new(16_000);
    let mut sw = Sweep::default();
    let fs = [
        NatFunction::Identity,
        NatFunction::Affine { a: 2, b: 10 },
        NatFunction::zero(),
    ];
    for name in ["harmonic", "sqrt", "quarter-sqrt"] {
        for bound in 1..=3u64 {
            let m = stock_instance(name, bound).expect("stock").moduli;
            for e in CAPS {
                let cap = Cap::pow10(e);
                for k in 0..=20u64 {
                    let kb = BigUint::from(k);
                    let kk = BoundedNat::from(k);
                    let tag = |what: &str| format!("{what} {name} N={bound} k={k} cap=1e{e}");
                    let g = rates::rate_g(m.bound, &m.beta_cauchy, &m.lambda_cauchy, &kk, &cap);
                    sw.record(|| tag("G"), &g, &naive.rate_g(&m, &kb));
                    sw.record(|| tag("nu1"), &rates::nu1(&m, &kk, &cap), &naive.nu1(&m, &kb));
                    sw.record(|| tag("nu2"), &rates::nu2(&m, &kk, &cap), &naive.nu2(&m, &kb));
                    sw.record(
                        || tag("dr_gap"),
                        &rates::dr_gap_threshold(&m, &kk, &cap),
                        &naive.dr_gap_threshold(&m, &kb),
                    );
                    for n in [0u64, 7, 1000] {
                        let d = 9 * bound * bound;
                        let s = rates::sigma(&m.divergence, &BigUint::from(d), &kk, &BoundedNat::from(n), &cap);
                        let a = |x: &BigUint| naive.eval_fn(&m.divergence, x);
                        sw.record(|| tag(&format!("sigma n={n}")), &s, &naive.sigma(&a, d, &kb, &BigUint::from(n)));
                    }
                    if k <= 1 {
                        for f in &fs {
                            let pb = rates::projection_bound(bound, &kk, f, &cap);
                            let nf = |x: &BigUint| naive.eval_fn(f, x);
                            sw.record(
                                || tag(&format!("projection_bound f={f:?}")),
                                &pb,
                                &naive.projection_bound(bound, &kb, &nf),
                            );
                        }
                    }
                }
            }
        }
    }
    sw
}
