//! Certified rates of asymptotic regularity and metastability.
//!
//! Every rate is evaluated over [`BoundedNat`]: exact while the value stays
//! below the [`Cap`], `Saturated` afterwards. All formulas are compositions
//! of monotone operations, so saturation never turns a valid bound into an
//! invalid one.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::moduli::QuantitativeModuli;
use crate::nat::{self, BoundedNat, Cap};
use crate::natfn::{MonotoneFn, NatFunction};

pub use crate::nat::ceil_ln_upper;

/// f applied `times` times to `start`.
///
/// Stops early once the value saturates or reaches a fixed point. A
/// saturated `times` is handled the same way: the orbit of a monotone map is
/// monotone, so it either settles or eventually exceeds every bound.
pub fn iterate_fn(f: &dyn MonotoneFn, times: &BoundedNat, start: &BoundedNat, cap: &Cap) -> BoundedNat {
    let mut x = start.clone();
    let mut done = BigUint::zero();
    loop {
        if let BoundedNat::Exact(t) = times {
            if &done >= t {
                return x;
            }
        }
        if x.is_saturated() {
            return x;
        }
        let next = f.apply(&x, cap);
        if next == x {
            return x;
        }
        x = next;
        done += 1u32;
    }
}

/// c·(k+1) − 1, the argument pattern shared by most rate formulas.
fn scaled(k: &BoundedNat, c: &BigUint, cap: &Cap) -> BoundedNat {
    let k1 = cap.add_u64(k, 1);
    cap.pred(&cap.mul(&k1, &cap.clamp(c.clone())))
}

fn scaled_u64(k: &BoundedNat, c: u64, cap: &Cap) -> BoundedNat {
    scaled(k, &BigUint::from(c), cap)
}

/// ⌈ln(3d(k+1))⌉, computed exactly whenever k is.
///
/// The logarithm of a saturated argument is still small, but it is not
/// known, so it saturates as well.
fn log_term(d: &BigUint, k: &BoundedNat, cap: &Cap) -> BoundedNat {
    assert!(!d.is_zero(), "d must be positive");
    match k {
        BoundedNat::Exact(k) => {
            let x = d * 3u32 * (k + 1u32);
            let m = nat::ceil_ln_upper_big(&x).expect("argument is positive");
            cap.nat(m)
        }
        BoundedNat::Saturated => BoundedNat::Saturated,
    }
}

/// θ[A, R, G, d](k) = A(M − 1 + ⌈ln(3d(k+1))⌉) + 1 with M = max{R(3k+2), G(3k+2)+1}.
pub fn theta(
    a: &dyn MonotoneFn,
    r: &dyn MonotoneFn,
    g: &dyn MonotoneFn,
    d: &BigUint,
    k: &BoundedNat,
    cap: &Cap,
) -> BoundedNat {
    let k3 = cap.add_u64(&cap.mul_u64(k, 3), 2);
    let m = nat::max(&r.apply(&k3, cap), &cap.add_u64(&g.apply(&k3, cap), 1));
    let arg = cap.add(&cap.pred(&m), &log_term(d, k, cap));
    cap.add_u64(&a.apply(&arg, cap), 1)
}

/// σ[A, d](k, n) = A(n + ⌈ln(3d(k+1))⌉) + 1.
pub fn sigma(a: &dyn MonotoneFn, d: &BigUint, k: &BoundedNat, n: &BoundedNat, cap: &Cap) -> BoundedNat {
    let arg = cap.add(n, &log_term(d, k, cap));
    cap.add_u64(&a.apply(&arg, cap), 1)
}

/// 24N(f̌^{(R)}(0) + 1)² with R = 4N⁴(k+1)² and f̌(m) = max{f(24N(m+1)²), 24N(m+1)²}.
pub fn projection_bound(bound: u64, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    let c = BigUint::from(bound) * 24u32;
    let check = |m: &BoundedNat, cap: &Cap| {
        let inner = cap.mul(&cap.clamp(c.clone()), &cap.square(&cap.add_u64(m, 1)));
        nat::max(&f.apply(&inner, cap), &inner)
    };
    let n4 = num_traits::pow(BigUint::from(bound), 4) * 4u32;
    let times = cap.mul(&cap.clamp(n4), &cap.square(&cap.add_u64(k, 1)));
    let top = iterate_fn(&check, &times, &BoundedNat::zero(), cap);
    cap.mul(&cap.clamp(c), &cap.square(&cap.add_u64(&top, 1)))
}

/// G[N, B, L](k) = max{B(4N(k+1) − 1), L(10N(k+1) − 1)}.
pub fn rate_g(bound: u64, big_b: &dyn MonotoneFn, big_l: &dyn MonotoneFn, k: &BoundedNat, cap: &Cap) -> BoundedNat {
    let n = BigUint::from(bound);
    let lhs = big_b.apply(&scaled(k, &(&n * 4u32), cap), cap);
    let rhs = big_l.apply(&scaled(k, &(&n * 10u32), cap), cap);
    nat::max(&lhs, &rhs)
}

/// Rate for ‖x_{n+1} − x_n‖: θ[D, 0, G, 2N](k).
pub fn nu1(m: &QuantitativeModuli, k: &BoundedNat, cap: &Cap) -> BoundedNat {
    let g = |x: &BoundedNat, cap: &Cap| rate_g(m.bound, &m.beta_cauchy, &m.lambda_cauchy, x, cap);
    let d = BigUint::from(m.bound) * 2u32;
    theta(&m.divergence, &NatFunction::zero(), &g, &d, k, cap)
}

/// Rate for ‖T(x_n) − x_n‖: max{b(4Nℓ(k+1) − 1), ν₁(2ℓ(k+1) − 1)}.
pub fn nu2(m: &QuantitativeModuli, k: &BoundedNat, cap: &Cap) -> BoundedNat {
    let nl = BigUint::from(m.bound) * m.ell;
    let lhs = m.convergence.apply(&scaled(k, &(nl * 4u32), cap), cap);
    let rhs = nu1(m, &scaled(k, &(BigUint::from(m.ell) * 2u32), cap), cap);
    nat::max(&lhs, &rhs)
}

/// ψ(k, f) = ν₂(48N(ǧ^{(R)}(0) + 1)²) with g = f ∘ ν₂ and R = 64N⁴(k+1)².
///
/// This is the projection bound for the ball of radius 2N, fed through ν₂.
pub fn psi(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    let g = |x: &BoundedNat, cap: &Cap| f.apply(&nu2(m, x, cap), cap);
    let n0 = projection_bound(2 * m.bound, k, &g, cap);
    nu2(m, &n0, cap)
}

/// Signature of a ψ evaluator, so tests can substitute a stub.
pub type PsiFn<'a> = &'a dyn Fn(&QuantitativeModuli, &BoundedNat, &dyn MonotoneFn, &Cap) -> BoundedNat;

/// Metastability rate for T-KM.
///
/// μ(k, f) = σ(k̃, max{ψ(12(k̃+1) − 1, f̃), n₁}) where k̃ = 4(k+1)² − 1,
/// n₁ = b(54N²(k̃+1) − 1), σ = σ[D, 9N²],
/// f̄(m) = f(σ(k̃, max{m, n₁})) and f̃(m) = 3(10N+1)(k̃+1)(f̄(m)+1)h(f̄(m)) − 1.
pub fn mu(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    mu_with_psi(m, k, f, cap, &psi)
}

/// [`mu`] with the ψ evaluator supplied by the caller.
pub fn mu_with_psi(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap, psi_fn: PsiFn) -> BoundedNat {
    let n = BigUint::from(m.bound);
    let kt = cap.pred(&cap.mul_u64(&cap.square(&cap.add_u64(k, 1)), 4));
    let n1 = m.convergence.apply(&scaled(&kt, &(&n * &n * 54u32), cap), cap);
    let d = &n * &n * 9u32;
    let sig = |x: &BoundedNat, cap: &Cap| sigma(&m.divergence, &d, &kt, x, cap);
    let fbar = |x: &BoundedNat, cap: &Cap| f.apply(&sig(&nat::max(x, &n1), cap), cap);
    let weight = cap.clamp((&n * 10u32 + 1u32) * 3u32);
    let ftilde = |x: &BoundedNat, cap: &Cap| {
        let fb = fbar(x, cap);
        let hv = m.positivity.apply(&fb, cap);
        let prod = cap.mul(&cap.mul(&weight, &cap.add_u64(&kt, 1)), &cap.mul(&cap.add_u64(&fb, 1), &hv));
        cap.pred(&prod)
    };
    let kpsi = scaled_u64(&kt, 12, cap);
    let n0 = psi_fn(m, &kpsi, &ftilde, cap);
    sig(&nat::max(&n0, &n1), cap)
}

/// μ₁ for α-averaged maps with α ≥ 1/a: μ with ℓ replaced by aℓ.
pub fn mu1(a: u64, m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    assert!(a >= 1, "a must be positive");
    mu(&m.with_ell(a.saturating_mul(m.ell)), k, f, cap)
}

/// μ₂ for T-FB: μ₁ with a = 2.
pub fn mu2(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    mu1(2, m, k, f, cap)
}

/// μ₃ for the x-sequence of T-DR: μ with ℓ replaced by 2ℓ.
pub fn mu3(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    mu1(2, m, k, f, cap)
}

/// μ₄ for the y-sequence of T-DR: max{μ₃(2k+1, g₁), b(8N(k+1) − 1)}
/// with g₁(m) = f(max{m, b(8N(k+1) − 1)}).
pub fn mu4(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    let floor = m.convergence.apply(&scaled(k, &(BigUint::from(m.bound) * 8u32), cap), cap);
    let g1 = |x: &BoundedNat, cap: &Cap| f.apply(&nat::max(x, &floor), cap);
    let k2 = cap.add_u64(&cap.mul_u64(k, 2), 1);
    nat::max(&mu3(m, &k2, &g1, cap), &floor)
}

/// Index after which ‖z_i − y_i‖ ≤ 1/(3(k+1)) in T-DR:
/// max{ν₁(6ℓ(k+1) − 1), b(12ℓN(k+1) − 1)}.
///
/// `m` holds the raw moduli (λ_n ≥ 1/ℓ for the T-DR relaxation); ν₁ does not
/// depend on ℓ.
pub fn dr_gap_threshold(m: &QuantitativeModuli, k: &BoundedNat, cap: &Cap) -> BoundedNat {
    let ell = BigUint::from(m.ell);
    let lhs = nu1(m, &scaled(k, &(&ell * 6u32), cap), cap);
    let rhs = m
        .convergence
        .apply(&scaled(k, &(ell * m.bound * 12u32), cap), cap);
    nat::max(&lhs, &rhs)
}

/// μ₅ for the z-sequence of T-DR:
/// max{μ₄(3k+2, g₂), ν₁(6ℓ(k+1) − 1), b(12ℓN(k+1) − 1)} with
/// g₂(m) = f(max{m, ν₁(6ℓ(k+1) − 1), b(12ℓN(k+1) − 1)}).
pub fn mu5(m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
    let floor = dr_gap_threshold(m, k, cap);
    let g2 = |x: &BoundedNat, cap: &Cap| f.apply(&nat::max(x, &floor), cap);
    let k3 = cap.add_u64(&cap.mul_u64(k, 3), 2);
    nat::max(&mu4(m, &k3, &g2, cap), &floor)
}

/// Which member of the μ family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuVariant {
    Mu,
    /// Averaged map with α ≥ 1/a.
    Mu1(u64),
    Mu2,
    Mu3,
    Mu4,
    Mu5,
}

impl MuVariant {
    pub fn name(&self) -> &'static str {
        match self {
            MuVariant::Mu => "mu",
            MuVariant::Mu1(_) => "mu1",
            MuVariant::Mu2 => "mu2",
            MuVariant::Mu3 => "mu3",
            MuVariant::Mu4 => "mu4",
            MuVariant::Mu5 => "mu5",
        }
    }

    pub fn eval(&self, m: &QuantitativeModuli, k: &BoundedNat, f: &dyn MonotoneFn, cap: &Cap) -> BoundedNat {
        match self {
            MuVariant::Mu => mu(m, k, f, cap),
            MuVariant::Mu1(a) => mu1(*a, m, k, f, cap),
            MuVariant::Mu2 => mu2(m, k, f, cap),
            MuVariant::Mu3 => mu3(m, k, f, cap),
            MuVariant::Mu4 => mu4(m, k, f, cap),
            MuVariant::Mu5 => mu5(m, k, f, cap),
        }
    }
}
