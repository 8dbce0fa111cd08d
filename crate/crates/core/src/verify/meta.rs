//! Brute-force search for metastability witnesses.

use serde_json::json;

use super::{CheckReport, Status};
use crate::iterations::Trajectory;
use crate::moduli::QuantitativeModuli;
use crate::nat::{BoundedNat, Cap};
use crate::natfn::MonotoneFn;
use crate::rates;
use crate::vector;

/// Outcome of a witness scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessSearch {
    /// Least n with ‖x_i − x_j‖ ≤ 1/(k+1) for all i, j ∈ [n, f(n)].
    pub witness: Option<usize>,
    /// Number of candidates n examined; candidates stop once f(n) leaves the run.
    pub scanned: usize,
}

/// Whether all pairwise distances on [lo, hi] are at most eps.
///
/// Distances to x_lo decide most intervals: one beyond eps refutes, all
/// within eps/2 confirm by the triangle inequality. Otherwise every pair is
/// compared.
fn interval_ok<'a>(point: &dyn Fn(usize) -> &'a [f64], lo: usize, hi: usize, eps: f64) -> bool {
    let base = point(lo);
    let mut all_close = true;
    for i in lo..=hi {
        let d = vector::dist(point(i), base);
        if d > eps {
            return false;
        }
        if d > eps / 2.0 {
            all_close = false;
        }
    }
    if all_close {
        return true;
    }
    for i in lo..=hi {
        let xi = point(i);
        for j in i + 1..=hi {
            if vector::dist(xi, point(j)) > eps {
                return false;
            }
        }
    }
    true
}

/// Scans n = 0, 1, … over a sequence of `len` points.
pub fn find_witness<'a>(len: usize, point: &dyn Fn(usize) -> &'a [f64], k: u64, f: &dyn MonotoneFn) -> WitnessSearch {
    let eps = 1.0 / (k as f64 + 1.0);
    let cap = Cap::default();
    let mut scanned = 0;
    for n in 0..len {
        let Some(fn_) = f.apply(&BoundedNat::from(n as u64), &cap).to_usize() else {
            break;
        };
        if fn_ >= len {
            // f is monotone, so no later candidate fits in the run either.
            break;
        }
        scanned += 1;
        if fn_ < n || interval_ok(point, n, fn_, eps) {
            return WitnessSearch {
                witness: Some(n),
                scanned,
            };
        }
    }
    WitnessSearch { witness: None, scanned }
}

/// Witness search on the x-sequence of a trajectory.
pub fn find_metastability_witness(traj: &Trajectory, k: u64, f: &dyn MonotoneFn) -> WitnessSearch {
    find_witness(traj.len(), &|i| traj.x(i), k, f)
}

/// The μ-family bound for the x-sequence of the trajectory's scheme, or
/// `None` for the plain KM baseline, which has no certified rate.
pub fn metastability_rate(
    traj: &Trajectory,
    moduli: &QuantitativeModuli,
    k: u64,
    f: &dyn MonotoneFn,
    cap: &Cap,
) -> Option<BoundedNat> {
    if traj.scheme() == "km" {
        return None;
    }
    // ℓ factor 1 gives μ, 2 gives μ₂ (T-FB) and μ₃ (T-DR), a gives μ₁.
    let a = traj.km_form().ell_factor;
    Some(rates::mu1(a, moduli, &BoundedNat::from(k), f, cap))
}

fn judge(name: &str, search: &WitnessSearch, bound: Option<BoundedNat>, cap: &Cap, k: u64) -> CheckReport {
    let rendered = bound.as_ref().map(|b| cap.render(b));
    let exact = bound.as_ref().and_then(|b| b.to_u64());
    let status = match (search.witness, exact) {
        (Some(w), Some(mu)) if w as u64 > mu => Status::Fail,
        (Some(_), _) => Status::Pass,
        // Every candidate up to an exact μ was examined without success.
        (None, Some(mu)) if (search.scanned as u64) > mu => Status::Fail,
        (None, _) => Status::Unverifiable,
    };
    let mut r = CheckReport::new(format!("{name}[k={k}]"), status).with_detail(json!({
        "mu": rendered,
        "mu_compared": exact.is_some() && search.witness.is_some(),
        "scanned": search.scanned,
    }));
    if let Some(w) = search.witness {
        r.witness = Some(json!({ "n": w }));
    }
    if status == Status::Fail {
        r.violation = Some(json!({ "witness": search.witness, "mu": exact }));
    }
    r
}

/// Witness scan plus comparison with μ (and μ₄, μ₅ on y, z for T-DR).
pub fn check_metastability(
    traj: &Trajectory,
    moduli: &QuantitativeModuli,
    k: u64,
    f: &dyn MonotoneFn,
    cap: &Cap,
) -> Vec<CheckReport> {
    let search = find_metastability_witness(traj, k, f);
    let bound = metastability_rate(traj, moduli, k, f, cap);
    let mut out = vec![judge("metastability_x", &search, bound, cap, k)];
    if traj.has_aux() {
        let len = traj.n_max();
        let kk = BoundedNat::from(k);
        let ys = find_witness(len, &|i| traj.y(i).expect("aux"), k, f);
        out.push(judge("metastability_y", &ys, Some(rates::mu4(moduli, &kk, f, cap)), cap, k));
        let zs = find_witness(len, &|i| traj.z(i).expect("aux"), k, f);
        out.push(judge("metastability_z", &zs, Some(rates::mu5(moduli, &kk, f, cap)), cap, k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::natfn::NatFunction;

    fn seq<'a>(points: &'a [Vec<f64>]) -> impl Fn(usize) -> &'a [f64] + 'a {
        move |i| &points[i][..]
    }

    #[test]
    fn constant_sequence_witness_is_zero() {
        let pts = vec![vec![1.0, 2.0]; 50];
        let f = NatFunction::Affine { a: 2, b: 10 };
        let s = find_witness(pts.len(), &seq(&pts), 9, &f);
        assert_eq!(s.witness, Some(0));
    }

    #[test]
    fn oscillation_has_no_witness() {
        let pts: Vec<_> = (0..500).map(|i| vec![if i % 2 == 0 { 0.0 } else { 0.2 }]).collect();
        let f = NatFunction::Affine { a: 2, b: 10 };
        let s = find_witness(pts.len(), &seq(&pts), 9, &f);
        assert_eq!(s.witness, None);
        assert!(s.scanned > 200);
    }

    #[test]
    fn pairwise_fallback_is_exact() {
        // Every point is within eps of x_0 but two of them are 1.2 eps apart.
        let eps = 0.1;
        let mut pts = vec![vec![0.0, 0.0]; 30];
        pts[5] = vec![0.06, 0.0];
        pts[9] = vec![-0.06, 0.0];
        let f = NatFunction::Identity;
        assert_eq!(find_witness(pts.len(), &seq(&pts), 9, &f).witness, Some(0));
        let f = NatFunction::Affine { a: 1, b: 9 };
        let s = find_witness(pts.len(), &seq(&pts), 9, &f);
        // [n, n+9] contains both 5 and 9 for n ≤ 5 (at 0.12 > eps), so n = 6 is least.
        assert_eq!(s.witness, Some(6));
        assert!(!interval_ok(&seq(&pts), 0, 9, eps));
    }

    #[test]
    fn decreasing_f_gives_empty_interval() {
        let pts = vec![vec![0.0]; 5];
        let f = NatFunction::zero();
        assert_eq!(find_witness(pts.len(), &seq(&pts), 0, &f).witness, Some(0));
    }
}
