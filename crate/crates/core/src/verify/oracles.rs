//! Randomized oracles for the two recurrence lemmas behind θ and σ.
//!
//! Each trial draws sequences (α_n), (r_n), (γ_n) or (v_n), computes the
//! least moduli A, R, G they admit, simulates the recurrence at its upper
//! envelope and compares with the threshold. The α_n are dyadic (multiples
//! of 2⁻²⁰), so partial sums and hence A are exact.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nat::{BoundedNat, Cap};
use crate::natfn::{MonotoneFn, NatFunction};
use crate::rates;
use crate::SLACK;

pub const DEFAULT_SEED: u64 = 20_240_611;

/// α_n = a_n / UNIT.
const UNIT: u64 = 1 << 20;

/// Largest index simulated when a threshold lies far out.
const SIM_LIMIT: u64 = 5_000_000;

/// Largest k checked in θ trials.
const THETA_K_MAX: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleViolation {
    pub trial: usize,
    pub family: String,
    pub k: u64,
    pub n: u64,
    pub value: f64,
    pub bound: f64,
}

/// Which threshold a trial is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// θ and σ as implemented in [`rates`].
    Certified,
    /// Negative control: G(k) − 1 in θ, A(·) − 1 in σ.
    OffByOne,
    /// Negative control: θ and σ without the ⌈ln(3d(k+1))⌉ term.
    NoLogTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub lemma: String,
    pub threshold: Threshold,
    pub seed: u64,
    pub trials: usize,
    /// Number of (trial, k, n) comparisons.
    pub checked: u64,
    /// (trial, k) pairs whose threshold lies beyond the simulated range.
    pub vacuous: u64,
    pub violations: u64,
    /// The first few violations.
    pub examples: Vec<OracleViolation>,
}

impl OracleReport {
    fn new(lemma: &str, threshold: Threshold, seed: u64, trials: usize) -> Self {
        OracleReport {
            lemma: lemma.into(),
            threshold,
            seed,
            trials,
            checked: 0,
            vacuous: 0,
            violations: 0,
            examples: Vec::new(),
        }
    }

    fn absorb(&mut self, out: TrialOutcome) {
        self.checked += out.checked;
        self.vacuous += out.vacuous;
        self.violations += out.violations.len() as u64;
        for v in out.violations {
            if self.examples.len() < 10 {
                self.examples.push(v);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Default)]
struct TrialOutcome {
    checked: u64,
    vacuous: u64,
    violations: Vec<OracleViolation>,
}

/// Least A with Σ_{i=1}^{A(k)} α_i ≥ k, for α given on [0, len) and
/// constant `ext` afterwards.
#[derive(Debug, Clone)]
struct DivergenceRate {
    /// prefix[m] = Σ_{i=1}^{m} a_i for m < len.
    prefix: Vec<u64>,
    ext: u64,
}

impl DivergenceRate {
    fn new(units: &[u64], ext: u64) -> Self {
        assert!(ext > 0 && !units.is_empty());
        let mut prefix = Vec::with_capacity(units.len());
        let mut acc = 0u64;
        prefix.push(0);
        for &a in &units[1..] {
            acc += a;
            prefix.push(acc);
        }
        DivergenceRate { prefix, ext }
    }

    fn at(&self, k: &BigUint) -> BigUint {
        let target = k * UNIT;
        let last = self.prefix.len() - 1;
        let top = BigUint::from(self.prefix[last]);
        if target <= top {
            let t = target.to_u64().expect("bounded by a u64 prefix");
            BigUint::from(self.prefix.partition_point(|&p| p < t) as u64)
        } else {
            let rest = target - top;
            let steps = (&rest + (self.ext - 1)) / self.ext;
            steps + last
        }
    }
}

impl MonotoneFn for DivergenceRate {
    fn apply(&self, n: &BoundedNat, cap: &Cap) -> BoundedNat {
        match n {
            BoundedNat::Exact(k) => cap.clamp(self.at(k)),
            BoundedNat::Saturated => BoundedNat::Saturated,
        }
    }
}

/// Least n₀ with r_n ≤ 1/(k+1) for all n ≥ n₀ (r vanishes beyond the table).
fn convergence_rate(r: &[f64]) -> NatFunction {
    rate_table(r, |tail, k| tail <= 1.0 / (k as f64 + 1.0), true)
}

/// Least G with Σ_{i=G+1}^{G+n} γ_i ≤ 1/(k+1) for all n (γ vanishes beyond the table).
fn cauchy_rate(gamma: &[f64]) -> NatFunction {
    rate_table(gamma, |tail, k| tail <= 1.0 / (k as f64 + 1.0), false)
}

/// Tabulates the least index whose suffix statistic passes, for k up to the
/// point where the answer stops changing.
fn rate_table(seq: &[f64], ok: impl Fn(f64, u64) -> bool, use_max: bool) -> NatFunction {
    let len = seq.len();
    // suffix[i] = max or sum of seq[i..].
    let mut suffix = vec![0.0f64; len + 2];
    for i in (0..len).rev() {
        suffix[i] = if use_max {
            suffix[i + 1].max(seq[i])
        } else {
            suffix[i + 1] + seq[i]
        };
    }
    // For a convergence rate the statistic at n₀ is suffix[n₀]; for a Cauchy
    // rate at G it is the tail from G+1.
    let shift = usize::from(!use_max);
    // The suffix statistic is nonincreasing, so the passing indices form a tail.
    let least = |k: u64| -> u64 {
        let (mut lo, mut hi) = (0, len);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if ok(suffix[mid + shift], k) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u64
    };
    let mut values = Vec::new();
    let mut k = 0u64;
    loop {
        let v = least(k);
        values.push(v);
        // Once the index reaches the last nonzero entry the rate is final.
        if v as usize >= len || k > 4096 {
            break;
        }
        k += 1;
    }
    let tail = Some(len as u64);
    NatFunction::Table { values, tail }
}

fn dyadic(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    rng.gen_range(lo..=hi)
}

fn ceil_bound(max_s: f64) -> u64 {
    (max_s.ceil() as u64).max(1)
}

/// A bound d ≥ `from` with X = 3d(k+1) and L = ⌈ln X⌉ such that
/// (X − 1)e^{1−L} ≥ `ratio`: a start at d contracted by e^{−(L−1)} instead of
/// e^{−L} then overshoots the other thirds of 1/(k+1).
fn sharp_bound(k: u64, from: u64, ratio: f64) -> (u64, u64) {
    (from..)
        .map(|d| {
            let x = (3 * d * (k + 1)) as f64;
            (d, x, x.ln().ceil())
        })
        .find(|&(_, x, l)| (x - 1.0) * (1.0 - l).exp() >= ratio)
        .map(|(d, _, l)| (d, l as u64))
        .expect("the ratio is below e")
}

// ---------------------------------------------------------------------------
// θ: s_{n+1} ≤ (1 − α_n)s_n + α_n r_n + γ_n
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct ThetaInstance {
    family: &'static str,
    s0: f64,
    alpha: Vec<u64>,
    ext: u64,
    r: Vec<f64>,
    gamma: Vec<f64>,
}

impl ThetaInstance {
    fn draw(rng: &mut ChaCha8Rng, trial: usize) -> Self {
        if trial % 5 == 4 {
            return Self::sharp(rng);
        }
        let len = rng.gen_range(1000..=10_000usize);
        match trial % 4 {
            0 => {
                // Pure decay from the top of the range: the log term is sharp here.
                let c = dyadic(rng, UNIT / 64, UNIT / 2);
                ThetaInstance {
                    family: "decay",
                    s0: rng.gen_range(1..=5) as f64,
                    alpha: vec![c; len],
                    ext: c,
                    r: vec![0.0; len],
                    gamma: vec![0.0; len],
                }
            }
            1 => {
                let rho = rng.gen_range(0.5..3.0);
                let p = rng.gen_range(0.5..1.5);
                let g0 = rng.gen_range(0.0..1.0);
                let alpha = (0..len).map(|_| dyadic(rng, 0, UNIT / 2)).collect();
                ThetaInstance {
                    family: "mixed",
                    s0: rng.gen_range(0.0..3.0),
                    alpha,
                    ext: UNIT / 4,
                    r: (0..len).map(|n| (rho / (n as f64 + 1.0).powf(p)).min(1.0)).collect(),
                    gamma: (0..len).map(|n| g0 / ((n as f64 + 1.0) * (n as f64 + 1.0))).collect(),
                }
            }
            2 => {
                // r sits exactly on its own thresholds 1/(j+1).
                let c = dyadic(rng, UNIT / 16, UNIT / 2);
                let block = rng.gen_range(50..=500usize);
                ThetaInstance {
                    family: "stairs",
                    s0: rng.gen_range(0.0..2.0),
                    alpha: vec![c; len],
                    ext: c,
                    r: (0..len).map(|n| 1.0 / ((n / block) as f64 + 1.0)).collect(),
                    gamma: vec![0.0; len],
                }
            }
            _ => {
                let mut alpha: Vec<u64> = (0..len)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            UNIT / 2
                        } else {
                            dyadic(rng, 0, UNIT / 32)
                        }
                    })
                    .collect();
                alpha[0] = 0;
                let mut gamma = vec![0.0; len];
                let mass = rng.gen_range(1.0..2.0);
                let bursts = 20;
                for _ in 0..bursts {
                    let i = rng.gen_range(0..len);
                    gamma[i] += mass / bursts as f64;
                }
                ThetaInstance {
                    family: "bursts",
                    s0: rng.gen_range(0.0..2.0),
                    alpha,
                    ext: UNIT / 8,
                    r: vec![0.0; len],
                    gamma,
                }
            }
        }
    }

    /// Every hypothesis held with equality for one k: α ≡ 1 up to a spike of
    /// γ at P that lifts s to d, r ≡ 1/(3(k+1)), then small dyadic α and one
    /// last γ of 1/(3(k+1)) just before the threshold computed with G − 1.
    fn sharp(rng: &mut ChaCha8Rng) -> Self {
        let k = rng.gen_range(0..=THETA_K_MAX);
        let c = 1.0 / (3.0 * (k as f64 + 1.0));
        let (d, l) = sharp_bound(k, rng.gen_range(1..=30), 1.3);
        let p = rng.gen_range(5..=200usize);
        let eps = UNIT >> rng.gen_range(6..=9);
        // Σ_{i=1}^{P} α_i = P, so A(P − 1 + L) is P plus (L − 1)/ε steps.
        let last = p + ((l - 1) * UNIT / eps) as usize;
        let len = last + rng.gen_range(100..=1000usize);
        let mut alpha = vec![eps; len];
        alpha[..=p].fill(UNIT);
        let mut gamma = vec![0.0; len];
        gamma[p] = (d as f64 - c) * (1.0 - 1e-12);
        gamma[last] = c * (1.0 - 1e-9);
        ThetaInstance {
            family: "sharp",
            s0: c,
            alpha,
            ext: eps,
            r: vec![c; len],
            gamma,
        }
    }

    fn alpha_at(&self, n: usize) -> f64 {
        self.alpha.get(n).copied().unwrap_or(self.ext) as f64 / UNIT as f64
    }

    fn step(&self, n: usize, s: f64) -> f64 {
        let a = self.alpha_at(n);
        let r = self.r.get(n).copied().unwrap_or(0.0);
        let g = self.gamma.get(n).copied().unwrap_or(0.0);
        (1.0 - a) * s + a * r + g
    }

    /// Thresholds θ(k) (or a corrupted variant) for k ≤ THETA_K_MAX, and d.
    fn thresholds(&self, threshold: Threshold, cap: &Cap) -> (Vec<Option<u64>>, u64) {
        // Beyond the table r = γ = 0, so s is nonincreasing there.
        let mut s = self.s0;
        let mut max_s = s;
        for n in 0..self.alpha.len() {
            s = self.step(n, s);
            max_s = max_s.max(s);
        }
        let d = ceil_bound(max_s);
        let a = DivergenceRate::new(&self.alpha, self.ext);
        let r = convergence_rate(&self.r);
        let g = cauchy_rate(&self.gamma);
        let g_short = |k: &BoundedNat, cap: &Cap| cap.pred(&g.apply(k, cap));
        let d_big = BigUint::from(d);
        let th = (0..=THETA_K_MAX)
            .map(|k| {
                let k = BoundedNat::from(k);
                let v = match threshold {
                    Threshold::Certified => rates::theta(&a, &r, &g, &d_big, &k, cap),
                    Threshold::OffByOne => rates::theta(&a, &r, &g_short, &d_big, &k, cap),
                    Threshold::NoLogTerm => {
                        let k3 = cap.add_u64(&cap.mul_u64(&k, 3), 2);
                        let m = std::cmp::max(r.apply(&k3, cap), cap.add_u64(&g.apply(&k3, cap), 1));
                        cap.add_u64(&a.apply(&cap.pred(&m), cap), 1)
                    }
                };
                v.to_u64()
            })
            .collect();
        (th, d)
    }

    fn evaluate(&self, trial: usize, threshold: Threshold) -> TrialOutcome {
        let cap = Cap::default();
        let (th, _) = self.thresholds(threshold, &cap);
        let mut out = TrialOutcome::default();
        let reach = th
            .iter()
            .map(|t| t.filter(|&t| t <= SIM_LIMIT))
            .collect::<Vec<_>>();
        out.vacuous = reach.iter().filter(|t| t.is_none()).count() as u64;
        let end = reach
            .iter()
            .flatten()
            .copied()
            .max()
            .unwrap_or(0)
            .max(self.alpha.len() as u64)
            + 1;
        let mut s = self.s0;
        let mut flagged = vec![false; reach.len()];
        for n in 0..=end {
            for (k, t) in reach.iter().enumerate() {
                if matches!(t, Some(t) if n >= *t) {
                    out.checked += 1;
                    let bound = 1.0 / (k as f64 + 1.0);
                    if s > bound + SLACK && !flagged[k] {
                        flagged[k] = true;
                        out.violations.push(OracleViolation {
                            trial,
                            family: self.family.into(),
                            k: k as u64,
                            n,
                            value: s,
                            bound,
                        });
                    }
                }
            }
            s = self.step(n as usize, s);
        }
        out
    }
}

/// Randomized check of s_n ≤ 1/(k+1) for n ≥ θ(k), k ≤ 5.
pub fn oracle_lemma_theta(trials: usize, seed: u64) -> OracleReport {
    oracle_lemma_theta_with(trials, seed, Threshold::Certified)
}

/// The θ oracle against a chosen threshold; the trials do not depend on it.
pub fn oracle_lemma_theta_with(trials: usize, seed: u64, threshold: Threshold) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("theta", threshold, seed, trials);
    for t in 0..trials {
        let inst = ThetaInstance::draw(&mut rng, t);
        report.absorb(inst.evaluate(t, threshold));
    }
    report
}

// ---------------------------------------------------------------------------
// σ: s_{i+1} ≤ (1 − α_i)(s_i + v_i) + α_i r_i, hypotheses on [n, q]
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct SigmaInstance {
    family: &'static str,
    k: u64,
    n: usize,
    q: usize,
    s0: f64,
    alpha: Vec<u64>,
    ext: u64,
    r: Vec<f64>,
    v: Vec<f64>,
}

impl SigmaInstance {
    fn draw(rng: &mut ChaCha8Rng, trial: usize) -> Self {
        if trial % 5 == 4 {
            return Self::sharp(rng);
        }
        let k = rng.gen_range(0..=5u64);
        let tight = trial % 2 == 0;
        let n = if tight { rng.gen_range(0..=3usize) } else { rng.gen_range(0..=300usize) };
        let q = n + rng.gen_range(500..=5000usize);
        let r_max = 1.0 / (3.0 * (k as f64 + 1.0));
        let v_max = r_max / (q as f64 + 1.0);
        let (alpha, ext) = if trial % 4 < 2 {
            let c = dyadic(rng, UNIT / 8, UNIT);
            (vec![c; q + 1], c)
        } else {
            ((0..=q).map(|_| dyadic(rng, UNIT / 8, UNIT)).collect(), UNIT / 2)
        };
        let mut r = vec![0.0; q + 1];
        let mut v = vec![0.0; q + 1];
        for i in 0..=q {
            if i < n {
                r[i] = rng.gen_range(0.0..2.0);
                v[i] = rng.gen_range(0.0..0.5);
            } else if tight {
                r[i] = r_max;
                v[i] = v_max;
            } else {
                r[i] = rng.gen_range(0.0..=r_max);
                v[i] = rng.gen_range(0.0..=v_max);
            }
        }
        SigmaInstance {
            family: if tight { "tight" } else { "random" },
            k,
            n,
            q,
            s0: rng.gen_range(0.0..=5.0),
            alpha,
            ext,
            r,
            v,
        }
    }

    /// n = 0 with s₀ near d, r and v at their maxima, and α summing to
    /// exactly L − 1 + 2⁻²⁰ over [1, j) before one step of 1 − 2⁻²⁰ at j, so
    /// that A(L) = j and σ(k, 0) = j + 1.
    fn sharp(rng: &mut ChaCha8Rng) -> Self {
        let k = rng.gen_range(0..=5u64);
        let c = 1.0 / (3.0 * (k as f64 + 1.0));
        let (d, l) = sharp_bound(k, rng.gen_range(1..=30), 2.3);
        let eps = UNIT >> rng.gen_range(6..=9);
        let j = 1 + ((l - 1) * UNIT / eps) as usize;
        let q = j + rng.gen_range(10..=100usize);
        let mut alpha = vec![UNIT / 2; q + 1];
        alpha[0] = 1;
        alpha[1..j].fill(eps);
        alpha[1] += 1;
        alpha[j] = UNIT - 1;
        let v = c / (q as f64 + 1.0);
        SigmaInstance {
            family: "sharp",
            k,
            n: 0,
            q,
            s0: d as f64 - 1e-3,
            alpha,
            ext: UNIT / 2,
            r: vec![c; q + 1],
            v: vec![v; q + 1],
        }
    }

    fn evaluate(&self, trial: usize, threshold: Threshold) -> TrialOutcome {
        let cap = Cap::default();
        let mut s = vec![self.s0; self.q + 1];
        for i in 0..self.q {
            let a = self.alpha[i] as f64 / UNIT as f64;
            s[i + 1] = (1.0 - a) * (s[i] + self.v[i]) + a * self.r[i];
        }
        let d = ceil_bound(s.iter().copied().fold(0.0, f64::max));
        let a = DivergenceRate::new(&self.alpha, self.ext);
        let n = BoundedNat::from(self.n as u64);
        let k = BoundedNat::from(self.k);
        let d = BigUint::from(d);
        let start = match threshold {
            Threshold::Certified => rates::sigma(&a, &d, &k, &n, &cap),
            Threshold::OffByOne => {
                let a_short = |m: &BoundedNat, cap: &Cap| cap.pred(&a.apply(m, cap));
                rates::sigma(&a_short, &d, &k, &n, &cap)
            }
            Threshold::NoLogTerm => cap.add_u64(&a.apply(&n, &cap), 1),
        };
        let mut out = TrialOutcome::default();
        let Some(start) = start.to_usize().filter(|&t| t <= self.q) else {
            out.vacuous = 1;
            return out;
        };
        let bound = 1.0 / (self.k as f64 + 1.0);
        for (i, &si) in s.iter().enumerate().take(self.q + 1).skip(start) {
            out.checked += 1;
            if si > bound + SLACK {
                out.violations.push(OracleViolation {
                    trial,
                    family: self.family.into(),
                    k: self.k,
                    n: i as u64,
                    value: si,
                    bound,
                });
                break;
            }
        }
        out
    }
}

/// Randomized check of s_i ≤ 1/(k+1) on [σ(k,n), q].
pub fn oracle_lemma_sigma(trials: usize, seed: u64) -> OracleReport {
    oracle_lemma_sigma_with(trials, seed, Threshold::Certified)
}

/// The σ oracle against a chosen threshold; the trials do not depend on it.
pub fn oracle_lemma_sigma_with(trials: usize, seed: u64, threshold: Threshold) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("sigma", threshold, seed, trials);
    for t in 0..trials {
        let inst = SigmaInstance::draw(&mut rng, t);
        report.absorb(inst.evaluate(t, threshold));
    }
    report
}
