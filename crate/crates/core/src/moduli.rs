//! Parameter schedules (β_n), (λ_n) and the quantitative moduli
//! (h, b, D, B, L, ℓ, N) that witness their convergence properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::natfn::NatFunction;
use crate::SLACK;

/// A real sequence n ↦ s_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Sequence {
    Constant { value: f64 },
    /// 1 − c / (n + shift)^p
    OneMinusPower { c: f64, shift: f64, p: f64 },
    /// values[n], then `tail`.
    Table { values: Vec<f64>, tail: f64 },
    /// factor · inner_n
    Scaled { factor: f64, inner: Box<Sequence> },
}

impl Sequence {
    #[inline]
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Sequence::Constant { value } => *value,
            Sequence::OneMinusPower { c, shift, p } => {
                let base = n as f64 + shift;
                let denom = if *p == 1.0 {
                    base
                } else if *p == 0.5 {
                    base.sqrt()
                } else {
                    base.powf(*p)
                };
                1.0 - c / denom
            }
            Sequence::Table { values, tail } => values.get(n).copied().unwrap_or(*tail),
            Sequence::Scaled { factor, inner } => factor * inner.at(n),
        }
    }

    pub fn scaled(&self, factor: f64) -> Sequence {
        Sequence::Scaled {
            factor,
            inner: Box::new(self.clone()),
        }
    }
}

/// The pair of schedules driving a Tikhonov iteration.
///
/// For T-DR the raw relaxation λ_n ∈ (0, 2] is stored; the halving to the
/// equivalent T-KM form happens where the scheme is assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub beta: Sequence,
    pub lambda: Sequence,
}

impl Schedule {
    pub fn new(beta: Sequence, lambda: Sequence) -> Self {
        Schedule { beta, lambda }
    }

    /// Same β with λ multiplied by `factor`.
    pub fn with_lambda_scaled(&self, factor: f64) -> Self {
        Schedule {
            beta: self.beta.clone(),
            lambda: self.lambda.scaled(factor),
        }
    }

    #[inline]
    pub fn beta(&self, n: usize) -> f64 {
        self.beta.at(n)
    }

    #[inline]
    pub fn lambda(&self, n: usize) -> f64 {
        self.lambda.at(n)
    }

    /// Checks 0 < β_n ≤ 1 and 0 < λ_n ≤ `lambda_max` for n ≤ horizon.
    pub fn check_range(&self, horizon: usize, lambda_max: f64) -> Result<()> {
        for n in 0..=horizon {
            let b = self.beta(n);
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::InvalidParameter(format!("beta_{n} = {b} not in (0, 1]")));
            }
            let l = self.lambda(n);
            if !(l > 0.0 && l <= lambda_max + SLACK) {
                return Err(Error::StepsizeOutOfRange(format!(
                    "lambda_{n} = {l} not in (0, {lambda_max}]"
                )));
            }
        }
        Ok(())
    }
}

/// Serialized form; see [`QuantitativeModuli`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModuli {
    h: NatFunction,
    b: NatFunction,
    #[serde(rename = "D")]
    d: NatFunction,
    #[serde(rename = "B")]
    big_b: NatFunction,
    #[serde(rename = "L")]
    big_l: NatFunction,
    ell: u64,
    #[serde(rename = "N")]
    n: u64,
}

/// Witnesses for the conditions
///
/// * (Q₁) β_n ≥ 1/h(n),
/// * (Q₂) |1 − β_n| ≤ 1/(k+1) for n ≥ b(k),
/// * (Q₃) Σ_{i=1}^{D(k)} (1 − β_i) ≥ k,
/// * (Q₄) Σ_{i=B(k)+1}^{B(k)+n} |β_i − β_{i−1}| ≤ 1/(k+1),
/// * (Q₅) λ_n ≥ 1/ℓ,
/// * (Q₆) Σ_{i=L(k)+1}^{L(k)+n} |λ_i − λ_{i−1}| ≤ 1/(k+1),
///
/// plus the radius N ≥ max{‖x₀ − p‖, ‖p‖} for a reference fixed point p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModuli", into = "RawModuli")]
pub struct QuantitativeModuli {
    pub positivity: NatFunction,
    pub convergence: NatFunction,
    pub divergence: NatFunction,
    pub beta_cauchy: NatFunction,
    pub lambda_cauchy: NatFunction,
    pub ell: u64,
    pub bound: u64,
}

/// Range over which moduli are scanned for monotonicity.
pub const MONOTONE_SCAN: u64 = 1000;

impl QuantitativeModuli {
    /// Builds and checks the moduli. Tables are replaced by their majorants.
    pub fn new(
        h: NatFunction,
        b: NatFunction,
        d: NatFunction,
        big_b: NatFunction,
        big_l: NatFunction,
        ell: u64,
        bound: u64,
    ) -> Result<Self> {
        if ell == 0 {
            return Err(Error::Config("ell must be positive".into()));
        }
        if bound == 0 {
            return Err(Error::Config("N must be positive".into()));
        }
        let mut fns = [h, b, d, big_b, big_l];
        for (name, f) in ["h", "b", "D", "B", "L"].iter().zip(fns.iter_mut()) {
            f.validate()?;
            *f = f.clone().monotonize();
            if !f.is_monotone_on(MONOTONE_SCAN) {
                return Err(Error::Config(format!("{name} is not monotone on [0, {MONOTONE_SCAN}]")));
            }
        }
        let [h, b, d, big_b, big_l] = fns;
        if h.eval_u64(0).unwrap_or(1) == 0 {
            return Err(Error::Config("h must take values >= 1".into()));
        }
        Ok(QuantitativeModuli {
            positivity: h,
            convergence: b,
            divergence: d,
            beta_cauchy: big_b,
            lambda_cauchy: big_l,
            ell,
            bound,
        })
    }

    /// Same moduli with ℓ replaced (e.g. by a·ℓ for α-averaged maps).
    pub fn with_ell(&self, ell: u64) -> Self {
        QuantitativeModuli {
            ell,
            ..self.clone()
        }
    }

    pub fn with_bound(&self, bound: u64) -> Self {
        QuantitativeModuli {
            bound,
            ..self.clone()
        }
    }
}

impl TryFrom<RawModuli> for QuantitativeModuli {
    type Error = Error;
    fn try_from(r: RawModuli) -> Result<Self> {
        QuantitativeModuli::new(r.h, r.b, r.d, r.big_b, r.big_l, r.ell, r.n)
    }
}

impl From<QuantitativeModuli> for RawModuli {
    fn from(m: QuantitativeModuli) -> Self {
        RawModuli {
            h: m.positivity,
            b: m.convergence,
            d: m.divergence,
            big_b: m.beta_cauchy,
            big_l: m.lambda_cauchy,
            ell: m.ell,
            n: m.bound,
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One violated instance of a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    pub n: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub passed: bool,
    /// Number of (k, n) instances compared.
    pub checked: u64,
    /// Values of k whose instance lies beyond the horizon.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub beyond_horizon: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    fn new(name: &str) -> Self {
        ConditionReport {
            name: name.to_string(),
            passed: true,
            checked: 0,
            beyond_horizon: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn violate(&mut self, k: Option<u64>, n: u64, detail: String) {
        self.passed = false;
        // The first few suffice to locate the problem.
        if self.violations.len() < 8 {
            self.violations.push(Violation { k, n, detail });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub horizon: u64,
    pub k_max: u64,
    pub conditions: Vec<ConditionReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn nat_at(f: &NatFunction, k: u64) -> Option<u64> {
    f.eval_u64(k)
}

/// Brute-force check of (Q₁)–(Q₆) on all instances with n ≤ horizon, k ≤ k_max.
///
/// `lambda_max` is the admissible upper end of λ_n for the scheme (1 for
/// T-KM, 2 for raw T-DR relaxations).
pub fn validate_q(
    schedule: &Schedule,
    moduli: &QuantitativeModuli,
    horizon: u64,
    k_max: u64,
    lambda_max: f64,
) -> ValidationReport {
    let h_len = horizon as usize + 1;
    let beta: Vec<f64> = (0..h_len).map(|n| schedule.beta(n)).collect();
    let lambda: Vec<f64> = (0..h_len).map(|n| schedule.lambda(n)).collect();
    let mut conditions = Vec::new();

    let mut range = ConditionReport::new("range");
    for n in 0..h_len {
        range.checked += 1;
        if !(beta[n] > 0.0 && beta[n] <= 1.0) {
            range.violate(None, n as u64, format!("beta = {}", beta[n]));
        }
        if !(lambda[n] > 0.0 && lambda[n] <= lambda_max + SLACK) {
            range.violate(None, n as u64, format!("lambda = {}", lambda[n]));
        }
    }
    conditions.push(range);

    let mut mono = ConditionReport::new("monotone");
    for (name, f) in [
        ("h", &moduli.positivity),
        ("b", &moduli.convergence),
        ("D", &moduli.divergence),
        ("B", &moduli.beta_cauchy),
        ("L", &moduli.lambda_cauchy),
    ] {
        mono.checked += MONOTONE_SCAN;
        if !f.is_monotone_on(MONOTONE_SCAN) {
            mono.violate(None, 0, format!("{name} not monotone"));
        }
    }
    conditions.push(mono);

    // (Q1)
    let mut q1 = ConditionReport::new("Q1");
    for n in 0..h_len {
        q1.checked += 1;
        match nat_at(&moduli.positivity, n as u64) {
            Some(h) if h >= 1 && beta[n] >= 1.0 / h as f64 - SLACK => {}
            h => q1.violate(None, n as u64, format!("beta = {} vs 1/h, h = {h:?}", beta[n])),
        }
    }
    conditions.push(q1);

    // (Q2)
    let mut q2 = ConditionReport::new("Q2");
    for k in 0..=k_max {
        let bound = 1.0 / (k as f64 + 1.0);
        let start = match nat_at(&moduli.convergence, k) {
            Some(s) if s <= horizon => s as usize,
            _ => {
                q2.beyond_horizon.push(k);
                continue;
            }
        };
        for n in start..h_len {
            q2.checked += 1;
            let dev = (1.0 - beta[n]).abs();
            if dev > bound + SLACK {
                q2.violate(Some(k), n as u64, format!("|1 - beta| = {dev} > {bound}"));
                break;
            }
        }
    }
    conditions.push(q2);

    // (Q3)
    let mut q3 = ConditionReport::new("Q3");
    let mut prefix = vec![0.0; h_len];
    for i in 1..h_len {
        prefix[i] = prefix[i - 1] + (1.0 - beta[i]);
    }
    for k in 0..=k_max {
        match nat_at(&moduli.divergence, k) {
            Some(d) if d <= horizon => {
                q3.checked += 1;
                let s = prefix[d as usize];
                if s < k as f64 - SLACK {
                    q3.violate(Some(k), d, format!("sum = {s} < {k}"));
                }
            }
            _ => q3.beyond_horizon.push(k),
        }
    }
    conditions.push(q3);

    // (Q4), (Q6): partial sums of nonnegative terms, so the worst n is the last.
    for (name, seq, modulus) in [
        ("Q4", &beta, &moduli.beta_cauchy),
        ("Q6", &lambda, &moduli.lambda_cauchy),
    ] {
        let mut rep = ConditionReport::new(name);
        for k in 0..=k_max {
            let bound = 1.0 / (k as f64 + 1.0);
            let start = match nat_at(modulus, k) {
                Some(s) if s < horizon => s as usize,
                _ => {
                    rep.beyond_horizon.push(k);
                    continue;
                }
            };
            let mut sum = 0.0;
            for i in start + 1..h_len {
                rep.checked += 1;
                sum += (seq[i] - seq[i - 1]).abs();
                if sum > bound + SLACK {
                    rep.violate(Some(k), (i - start) as u64, format!("variation sum = {sum} > {bound}"));
                    break;
                }
            }
        }
        conditions.push(rep);
    }

    // (Q5)
    let mut q5 = ConditionReport::new("Q5");
    let floor = 1.0 / moduli.ell as f64;
    for n in 0..h_len {
        q5.checked += 1;
        if lambda[n] < floor - SLACK {
            q5.violate(None, n as u64, format!("lambda = {} < 1/ell", lambda[n]));
        }
    }
    conditions.push(q5);

    // Q-order for readers: Q1..Q6 after the structural checks.
    conditions.sort_by_key(|c| match c.name.as_str() {
        "range" => 0,
        "monotone" => 1,
        name => 2 + name[1..].parse::<u32>().unwrap_or(0),
    });

    ValidationReport {
        horizon,
        k_max,
        conditions,
    }
}

// ---------------------------------------------------------------------------
// Stock instances
// ---------------------------------------------------------------------------

/// A named schedule with moduli known to satisfy (Q₁)–(Q₆).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockInstance {
    pub name: String,
    pub schedule: Schedule,
    pub moduli: QuantitativeModuli,
    /// Upper end of the admissible λ range the instance is meant for.
    pub lambda_max: f64,
}

fn squared_successor() -> NatFunction {
    // (k + 1)²
    NatFunction::Poly { coeffs: vec![1, 2, 1] }
}

/// β_n = λ_n = 1 − 1/(n+2) with h ≡ 2, b = B = L = Id, D(k) = ⌈e^{k+2}⌉, ℓ = 2.
pub fn harmonic_instance(bound: u64) -> StockInstance {
    let seq = Sequence::OneMinusPower {
        c: 1.0,
        shift: 2.0,
        p: 1.0,
    };
    StockInstance {
        name: "harmonic".into(),
        schedule: Schedule::new(seq.clone(), seq),
        moduli: QuantitativeModuli::new(
            NatFunction::Const { value: 2 },
            NatFunction::Identity,
            NatFunction::ExpCeil { shift: 2 },
            NatFunction::Identity,
            NatFunction::Identity,
            2,
            bound,
        )
        .expect("stock moduli are well-formed"),
        lambda_max: 1.0,
    }
}

/// β_n = 1 − 1/√(n+2), λ_n ≡ 1/2 with h ≡ 4, b = B = (k+1)², D(k) = ⌈(k/2 + 2)²⌉,
/// L ≡ 0, ℓ = 2. Rates are polynomial in k.
pub fn sqrt_instance(bound: u64) -> StockInstance {
    StockInstance {
        name: "sqrt".into(),
        schedule: Schedule::new(
            Sequence::OneMinusPower {
                c: 1.0,
                shift: 2.0,
                p: 0.5,
            },
            Sequence::Constant { value: 0.5 },
        ),
        moduli: QuantitativeModuli::new(
            NatFunction::Const { value: 4 },
            squared_successor(),
            NatFunction::PolyCeil {
                coeffs: vec![16, 8, 1],
                den: 4,
            },
            squared_successor(),
            NatFunction::zero(),
            2,
            bound,
        )
        .expect("stock moduli are well-formed"),
        lambda_max: 1.0,
    }
}

/// β_n = 1 − 1/(4√(n+2)), raw λ_n ≡ 1 (for T-DR) with h ≡ 2,
/// b = B = ⌈(k+1)²/16⌉, D(k) = (2k+2)², L ≡ 0, ℓ = 1.
pub fn quarter_sqrt_instance(bound: u64) -> StockInstance {
    let quarter_square = NatFunction::PolyCeil {
        coeffs: vec![1, 2, 1],
        den: 16,
    };
    StockInstance {
        name: "quarter-sqrt".into(),
        schedule: Schedule::new(
            Sequence::OneMinusPower {
                c: 0.25,
                shift: 2.0,
                p: 0.5,
            },
            Sequence::Constant { value: 1.0 },
        ),
        moduli: QuantitativeModuli::new(
            NatFunction::Const { value: 2 },
            quarter_square.clone(),
            NatFunction::Poly { coeffs: vec![4, 8, 4] },
            quarter_square,
            NatFunction::zero(),
            1,
            bound,
        )
        .expect("stock moduli are well-formed"),
        lambda_max: 2.0,
    }
}

/// All stock instances with radius N = 1.
pub fn stock_instances() -> Vec<StockInstance> {
    vec![harmonic_instance(1), sqrt_instance(1), quarter_sqrt_instance(1)]
}

pub fn stock_instance(name: &str, bound: u64) -> Option<StockInstance> {
    match name {
        "harmonic" => Some(harmonic_instance(bound)),
        "sqrt" => Some(sqrt_instance(bound)),
        "quarter-sqrt" => Some(quarter_sqrt_instance(bound)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences() {
        let s = Sequence::OneMinusPower {
            c: 1.0,
            shift: 2.0,
            p: 1.0,
        };
        assert_eq!(s.at(0), 0.5);
        assert_eq!(s.at(2), 0.75);
        let r = Sequence::OneMinusPower {
            c: 1.0,
            shift: 2.0,
            p: 0.5,
        };
        assert!((r.at(2) - 0.5).abs() < 1e-15);
        let t = Sequence::Table {
            values: vec![0.1, 0.2],
            tail: 0.9,
        };
        assert_eq!(t.at(1), 0.2);
        assert_eq!(t.at(5), 0.9);
    }

    #[test]
    fn constant_half_breaks_q2_at_k2() {
        let schedule = Schedule::new(Sequence::Constant { value: 0.5 }, Sequence::Constant { value: 0.5 });
        let moduli = QuantitativeModuli::new(
            NatFunction::Const { value: 2 },
            NatFunction::Identity,
            NatFunction::Affine { a: 2, b: 0 },
            NatFunction::zero(),
            NatFunction::zero(),
            2,
            1,
        )
        .unwrap();
        let report = validate_q(&schedule, &moduli, 100, 4, 1.0);
        let q2 = report.condition("Q2").unwrap();
        assert!(!q2.passed);
        assert_eq!(q2.violations[0].k, Some(2));
        assert_eq!(q2.violations[0].n, 2);
        // The constant schedule has zero variation and enough divergence.
        assert!(report.condition("Q3").unwrap().passed);
        assert!(report.condition("Q4").unwrap().passed);
        assert!(!report.passed());
    }

    #[test]
    fn broken_b_is_located() {
        let inst = sqrt_instance(1);
        let mut m = inst.moduli.clone();
        m.convergence = NatFunction::Identity;
        let report = validate_q(&inst.schedule, &m, 1000, 3, 1.0);
        let q2 = report.condition("Q2").unwrap();
        assert!(!q2.passed);
        // 1/sqrt(n+2) <= 1/2 needs n >= 2, so k = 1 fails at n = 1.
        assert_eq!(q2.violations[0].k, Some(1));
        assert_eq!(q2.violations[0].n, 1);
    }

    #[test]
    fn small_horizon_stock_instances_pass() {
        for inst in stock_instances() {
            let r = validate_q(&inst.schedule, &inst.moduli, 2000, 4, inst.lambda_max);
            assert!(r.passed(), "{}: {:?}", inst.name, r);
        }
    }

    #[test]
    fn moduli_construction_checks() {
        assert!(QuantitativeModuli::new(
            NatFunction::Const { value: 0 },
            NatFunction::Identity,
            NatFunction::Identity,
            NatFunction::Identity,
            NatFunction::Identity,
            1,
            1
        )
        .is_err());
        assert!(QuantitativeModuli::new(
            NatFunction::Const { value: 1 },
            NatFunction::Identity,
            NatFunction::Identity,
            NatFunction::Identity,
            NatFunction::Identity,
            0,
            1
        )
        .is_err());
        // Tables are majorized at construction.
        let m = QuantitativeModuli::new(
            NatFunction::Const { value: 1 },
            NatFunction::table(vec![3, 1, 5, 2]),
            NatFunction::Identity,
            NatFunction::Identity,
            NatFunction::Identity,
            1,
            1,
        )
        .unwrap();
        assert_eq!(m.convergence, NatFunction::table(vec![3, 3, 5, 5]));
    }

    #[test]
    fn moduli_json_field_names() {
        let m = sqrt_instance(3).moduli;
        let v = serde_json::to_value(&m).unwrap();
        for key in ["h", "b", "D", "B", "L", "ell", "N"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: QuantitativeModuli = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
