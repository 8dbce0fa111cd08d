//! Monotone functions ℕ → ℕ, serializable as `{kind, params}`.

use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nat::{self, BoundedNat, Cap};

/// A monotone function evaluated under saturation.
///
/// Implementations must map `Saturated` to `Saturated` and be nondecreasing
/// on exact inputs.
pub trait MonotoneFn: Send + Sync {
    fn apply(&self, n: &BoundedNat, cap: &Cap) -> BoundedNat;
}

impl<F> MonotoneFn for F
where
    F: Fn(&BoundedNat, &Cap) -> BoundedNat + Send + Sync,
{
    fn apply(&self, n: &BoundedNat, cap: &Cap) -> BoundedNat {
        self(n, cap)
    }
}

/// Concrete function representations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum NatFunction {
    Identity,
    Const { value: u64 },
    /// a·n + b
    Affine { a: u64, b: u64 },
    /// Σ coeffs[i]·nⁱ
    Poly { coeffs: Vec<u64> },
    /// ⌈(Σ coeffs[i]·nⁱ) / den⌉
    PolyCeil { coeffs: Vec<u64>, den: u64 },
    /// ⌈e^(n + shift)⌉
    ExpCeil { shift: u64 },
    /// values[n] for n < len, then a constant tail (default: last value).
    Table {
        values: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<u64>,
    },
    /// outer(inner(n))
    Compose {
        outer: Box<NatFunction>,
        inner: Box<NatFunction>,
    },
    /// Pointwise maximum.
    Max { of: Vec<NatFunction> },
}

fn poly_value(coeffs: &[u64], n: &BigUint) -> BigUint {
    // Horner
    coeffs
        .iter()
        .rev()
        .fold(BigUint::zero(), |acc, &c| acc * n + c)
}

impl NatFunction {
    pub fn zero() -> Self {
        NatFunction::Const { value: 0 }
    }

    pub fn table(values: Vec<u64>) -> Self {
        NatFunction::Table { values, tail: None }
    }

    /// Checks structural parameters (e.g. a zero denominator).
    pub fn validate(&self) -> Result<()> {
        match self {
            NatFunction::PolyCeil { den, .. } if *den == 0 => {
                Err(Error::Config("poly_ceil: den must be positive".into()))
            }
            NatFunction::Table { values, tail } if values.is_empty() && tail.is_none() => {
                Err(Error::Config("table: needs values or a tail".into()))
            }
            NatFunction::Max { of } if of.is_empty() => Err(Error::Config("max: empty list".into())),
            NatFunction::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            NatFunction::Max { of } => of.iter().try_for_each(|f| f.validate()),
            _ => Ok(()),
        }
    }

    /// Evaluates on a plain natural without a cap.
    pub fn eval_big(&self, n: &BigUint) -> BigUint {
        match self {
            NatFunction::Identity => n.clone(),
            NatFunction::Const { value } => BigUint::from(*value),
            NatFunction::Affine { a, b } => n * *a + *b,
            NatFunction::Poly { coeffs } => poly_value(coeffs, n),
            NatFunction::PolyCeil { coeffs, den } => {
                nat::div_ceil(&poly_value(coeffs, n), &BigUint::from(*den))
            }
            NatFunction::ExpCeil { shift } => {
                let t = (n + *shift).to_u64().expect("exponent too large for exact evaluation");
                nat::ceil_exp(t)
            }
            NatFunction::Table { values, tail } => BigUint::from(table_at(values, *tail, n)),
            NatFunction::Compose { outer, inner } => outer.eval_big(&inner.eval_big(n)),
            NatFunction::Max { of } => of.iter().map(|f| f.eval_big(n)).max().unwrap_or_default(),
        }
    }

    /// Evaluates on small arguments; `None` if the value does not fit in u64.
    pub fn eval_u64(&self, n: u64) -> Option<u64> {
        let cap = Cap::new(BigUint::from(u64::MAX));
        self.apply(&BoundedNat::from(n), &cap).to_u64()
    }

    /// Whether f(m) <= f(m+1) for all m < upto.
    pub fn is_monotone_on(&self, upto: u64) -> bool {
        let cap = Cap::new(BigUint::from(u64::MAX));
        let mut prev = self.apply(&BoundedNat::zero(), &cap);
        for m in 1..=upto {
            let cur = self.apply(&BoundedNat::from(m), &cap);
            if cur < prev {
                return false;
            }
            prev = cur;
        }
        true
    }

    /// The majorant f^maj(n) = max{f(i) : i <= n}.
    ///
    /// Only tables can fail to be monotone; every other representation is
    /// monotone by construction and is returned unchanged.
    pub fn monotonize(self) -> Self {
        match self {
            NatFunction::Table { values, tail } => {
                let values = monotonize(&values);
                let top = values.last().copied().unwrap_or(0);
                let tail = tail.map(|t| t.max(top));
                NatFunction::Table { values, tail }
            }
            NatFunction::Compose { outer, inner } => NatFunction::Compose {
                outer: Box::new(outer.monotonize()),
                inner: Box::new(inner.monotonize()),
            },
            NatFunction::Max { of } => NatFunction::Max {
                of: of.into_iter().map(NatFunction::monotonize).collect(),
            },
            other => other,
        }
    }
}

fn table_at(values: &[u64], tail: Option<u64>, n: &BigUint) -> u64 {
    match n.to_usize() {
        Some(i) if i < values.len() => values[i],
        _ => tail.or_else(|| values.last().copied()).unwrap_or(0),
    }
}

impl MonotoneFn for NatFunction {
    fn apply(&self, n: &BoundedNat, cap: &Cap) -> BoundedNat {
        let BoundedNat::Exact(v) = n else {
            return BoundedNat::Saturated;
        };
        match self {
            NatFunction::ExpCeil { shift } => nat::ceil_exp_capped(n, *shift, cap),
            NatFunction::Compose { outer, inner } => outer.apply(&inner.apply(n, cap), cap),
            NatFunction::Max { of } => of
                .iter()
                .map(|f| f.apply(n, cap))
                .max()
                .unwrap_or_else(BoundedNat::zero),
            // Polynomials of a value below the cap stay within cap^deg, which
            // BigUint handles directly.
            _ => cap.clamp(self.eval_big(v)),
        }
    }
}

/// Prefix maximum of a table.
pub fn monotonize(values: &[u64]) -> Vec<u64> {
    values
        .iter()
        .scan(0u64, |m, &v| {
            *m = (*m).max(v);
            Some(*m)
        })
        .collect()
}

fn parse_args(s: &str) -> Result<Vec<u64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad natural {t:?}")))
        })
        .collect()
}

/// Compact CLI syntax: `identity`, `zero`, `const(c)`, `affine(a,b)`,
/// `poly(c0,c1,...)`, `exp(shift)`, `table[v0,v1,...]`, or a JSON object.
impl FromStr for NatFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            let f: NatFunction =
                serde_json::from_str(s).map_err(|e| Error::Config(format!("bad function json: {e}")))?;
            f.validate()?;
            return Ok(f);
        }
        let bad = || Error::Config(format!("unrecognized function spec {s:?}"));
        if s == "identity" || s == "id" {
            return Ok(NatFunction::Identity);
        }
        if s == "zero" {
            return Ok(NatFunction::zero());
        }
        if let Some(body) = s.strip_prefix("table[").and_then(|r| r.strip_suffix(']')) {
            let values = parse_args(body)?;
            if values.is_empty() {
                return Err(bad());
            }
            return Ok(NatFunction::table(values));
        }
        let (name, body) = s
            .split_once('(')
            .and_then(|(n, r)| r.strip_suffix(')').map(|b| (n.trim(), b)))
            .ok_or_else(bad)?;
        let args = parse_args(body)?;
        match (name, args.as_slice()) {
            ("const", [c]) => Ok(NatFunction::Const { value: *c }),
            ("affine", [a, b]) => Ok(NatFunction::Affine { a: *a, b: *b }),
            ("poly", cs) if !cs.is_empty() => Ok(NatFunction::Poly { coeffs: cs.to_vec() }),
            ("exp", [shift]) => Ok(NatFunction::ExpCeil { shift: *shift }),
            _ => Err(bad()),
        }
    }
}
