//! Boundedness, asymptotic regularity, the T-DR gap and strong convergence.

use serde_json::{json, Value};

use super::{CheckReport, Status};
use crate::error::{Error, Result};
use crate::iterations::{KmForm, Step, Trajectory};
use crate::moduli::QuantitativeModuli;
use crate::nat::{BoundedNat, Cap};
use crate::ops::NonexpansiveOp;
use crate::rates;
use crate::vector::{self, Vector};
use crate::SLACK;

/// Tolerance for ‖T(p) − p‖ when p is supplied as a fixed point.
const FIXED_POINT_TOL: f64 = 1e-10;

/// Tolerance for the identity z_n − y_n = (x_{n+1} − β_n x_n)/λ_n.
const IDENTITY_TOL: f64 = 1e-10;

/// Moduli for the KM form of a scheme: ℓ is multiplied by the scheme's factor.
pub fn effective_moduli(moduli: &QuantitativeModuli, km: &KmForm) -> QuantitativeModuli {
    moduli.with_ell(moduli.ell.saturating_mul(km.ell_factor))
}

#[derive(Debug, Clone, Default)]
struct FirstViolation(Option<Value>);

impl FirstViolation {
    fn record(&mut self, v: impl FnOnce() -> Value) {
        if self.0.is_none() {
            self.0 = Some(v());
        }
    }
}

/// Observes ‖x_n − p‖ ≤ N, ‖x_n‖ ≤ 2N, ‖T(β_n x_n)‖ ≤ 3N and
/// ‖x_{n+1} − p‖ ≤ β_n‖x_n − p‖ + (1 − β_n)‖p‖.
#[derive(Debug, Clone)]
pub struct BoundednessMonitor {
    map: NonexpansiveOp,
    p: Vec<f64>,
    p_norm: f64,
    radius: f64,
    bx: Vec<f64>,
    t: Vec<f64>,
    checked: u64,
    violations: u64,
    first: FirstViolation,
    max_dist: f64,
    max_norm: f64,
    max_image: f64,
    max_step_excess: f64,
}

impl BoundednessMonitor {
    /// `map` is the nonexpansive map of the KM form; `p` must be one of its fixed points.
    pub fn new(map: &NonexpansiveOp, p: &Vector, bound: u64) -> Result<Self> {
        let tp = map.apply(p);
        let defect = tp.dist(p);
        if defect > FIXED_POINT_TOL {
            return Err(Error::InvalidParameter(format!(
                "p is not a fixed point: |T(p) - p| = {defect:e}"
            )));
        }
        let dim = p.dim();
        Ok(BoundednessMonitor {
            map: map.clone(),
            p: p.as_slice().to_vec(),
            p_norm: p.norm(),
            radius: bound as f64,
            bx: vec![0.0; dim],
            t: vec![0.0; dim],
            checked: 0,
            violations: 0,
            first: FirstViolation::default(),
            max_dist: 0.0,
            max_norm: 0.0,
            max_image: 0.0,
            max_step_excess: f64::NEG_INFINITY,
        })
    }

    fn fail(&mut self, n: usize, what: &str, value: f64, bound: f64) {
        self.violations += 1;
        self.first
            .record(|| json!({ "n": n, "inequality": what, "value": value, "bound": bound }));
    }

    fn point(&mut self, n: usize, x: &[f64]) {
        self.checked += 1;
        let d = vector::dist(x, &self.p);
        let nx = vector::norm(x);
        self.max_dist = self.max_dist.max(d);
        self.max_norm = self.max_norm.max(nx);
        if d > self.radius + SLACK {
            self.fail(n, "|x_n - p| <= N", d, self.radius);
        }
        if nx > 2.0 * self.radius + SLACK {
            self.fail(n, "|x_n| <= 2N", nx, 2.0 * self.radius);
        }
    }

    pub fn observe(&mut self, s: &Step) {
        self.point(s.n, s.x);
        for i in 0..s.x.len() {
            self.bx[i] = s.beta * s.x[i];
        }
        self.map.apply_into(&self.bx, &mut self.t);
        let image = vector::norm(&self.t);
        self.max_image = self.max_image.max(image);
        if image > 3.0 * self.radius + SLACK {
            self.fail(s.n, "|T(beta_n x_n)| <= 3N", image, 3.0 * self.radius);
        }
        let lhs = vector::dist(s.next, &self.p);
        let rhs = s.beta * vector::dist(s.x, &self.p) + (1.0 - s.beta) * self.p_norm;
        self.max_step_excess = self.max_step_excess.max(lhs - rhs);
        if lhs > rhs + SLACK {
            self.fail(s.n, "|x_{n+1} - p| <= beta_n |x_n - p| + (1 - beta_n)|p|", lhs, rhs);
        }
    }

    pub fn finish(mut self, n_last: usize, x_last: &[f64]) -> CheckReport {
        self.point(n_last, x_last);
        let status = if self.violations == 0 { Status::Pass } else { Status::Fail };
        let mut report = CheckReport::new("boundedness", status).with_detail(json!({
            "N": self.radius,
            "checked": self.checked,
            "violations": self.violations,
            "max_dist_to_p": self.max_dist,
            "max_norm": self.max_norm,
            "max_image_norm": self.max_image,
            "max_step_excess": self.max_step_excess,
        }));
        report.violation = self.first.0;
        report
    }
}

/// Boundedness invariants along a stored trajectory.
pub fn check_boundedness(traj: &Trajectory, p: &Vector, bound: u64) -> Result<CheckReport> {
    let mut mon = BoundednessMonitor::new(&traj.km_form().map, p, bound)?;
    let km_plain = traj.scheme() == "km";
    for mut s in traj.steps() {
        if km_plain {
            s.beta = 1.0;
        }
        mon.observe(&s);
    }
    Ok(mon.finish(traj.n_max(), traj.x(traj.n_max())))
}

#[derive(Debug, Clone)]
struct RateTrack {
    k: u64,
    threshold: Option<u64>,
    rendered: String,
    checked: u64,
    violations: u64,
    max_residual: f64,
    first: FirstViolation,
}

impl RateTrack {
    fn new(k: u64, value: &BoundedNat, cap: &Cap) -> Self {
        RateTrack {
            k,
            threshold: value.to_u64(),
            rendered: cap.render(value),
            checked: 0,
            violations: 0,
            max_residual: 0.0,
            first: FirstViolation::default(),
        }
    }

    fn active(&self, n: usize) -> bool {
        matches!(self.threshold, Some(t) if (n as u64) >= t)
    }

    fn bound(&self) -> f64 {
        1.0 / (self.k as f64 + 1.0)
    }

    fn observe(&mut self, n: usize, residual: f64, bound: f64) {
        self.checked += 1;
        self.max_residual = self.max_residual.max(residual);
        if residual > bound + SLACK {
            self.violations += 1;
            self.first
                .record(|| json!({ "n": n, "residual": residual, "bound": bound }));
        }
    }

    fn report(&self, name: &str, rate: &str, last: usize) -> CheckReport {
        let status = match self.threshold {
            _ if self.violations > 0 => Status::Fail,
            Some(t) if t <= last as u64 && self.checked > 0 => Status::Pass,
            _ => Status::Unverifiable,
        };
        let mut r = CheckReport::new(format!("{name}[k={}]", self.k), status).with_detail(json!({
            rate: self.rendered,
            "checked": self.checked,
            "violations": self.violations,
            "max_residual": self.max_residual,
            "n_max": last,
        }));
        r.violation = self.first.0.clone();
        r
    }
}

/// Observes ‖x_{n+1} − x_n‖ ≤ 1/(k+1) for n ≥ ν₁(k) and ‖T(x_n) − x_n‖ ≤ 1/(k+1)
/// for n ≥ ν₂(k).
#[derive(Debug, Clone)]
pub struct AsymptoticRegularityMonitor {
    map: NonexpansiveOp,
    step: Vec<RateTrack>,
    fix: Vec<RateTrack>,
    t: Vec<f64>,
    min_fix: Option<u64>,
}

impl AsymptoticRegularityMonitor {
    /// `moduli` must already be the effective moduli of the KM form.
    pub fn new(map: &NonexpansiveOp, moduli: &QuantitativeModuli, k_max: u64, cap: &Cap) -> Self {
        let step: Vec<_> = (0..=k_max)
            .map(|k| RateTrack::new(k, &rates::nu1(moduli, &BoundedNat::from(k), cap), cap))
            .collect();
        let fix: Vec<_> = (0..=k_max)
            .map(|k| RateTrack::new(k, &rates::nu2(moduli, &BoundedNat::from(k), cap), cap))
            .collect();
        let min_fix = fix.iter().filter_map(|r| r.threshold).min();
        AsymptoticRegularityMonitor {
            map: map.clone(),
            step,
            fix,
            t: Vec::new(),
            min_fix,
        }
    }

    /// ν₁(k) and ν₂(k) as used by the monitor (None when saturated).
    pub fn thresholds(&self) -> Vec<(u64, Option<u64>, Option<u64>)> {
        self.step
            .iter()
            .zip(&self.fix)
            .map(|(a, b)| (a.k, a.threshold, b.threshold))
            .collect()
    }

    /// The largest finite threshold, i.e. the run length needed to check every k.
    pub fn horizon(&self) -> Option<u64> {
        self.step
            .iter()
            .chain(&self.fix)
            .filter_map(|r| r.threshold)
            .max()
    }

    fn fix_point(&mut self, n: usize, x: &[f64]) {
        if !matches!(self.min_fix, Some(t) if (n as u64) >= t) {
            return;
        }
        self.t.resize(x.len(), 0.0);
        self.map.apply_into(x, &mut self.t);
        let res = vector::dist(&self.t, x);
        for r in self.fix.iter_mut().filter(|r| r.active(n)) {
            let b = r.bound();
            r.observe(n, res, b);
        }
    }

    pub fn observe(&mut self, s: &Step) {
        let res = vector::dist(s.next, s.x);
        for r in self.step.iter_mut().filter(|r| r.active(s.n)) {
            let b = r.bound();
            r.observe(s.n, res, b);
        }
        self.fix_point(s.n, s.x);
    }

    pub fn finish(mut self, n_last: usize, x_last: &[f64]) -> Vec<CheckReport> {
        self.fix_point(n_last, x_last);
        // Step residuals exist for n < n_last only.
        let step = self
            .step
            .iter()
            .map(|r| r.report("step_residual", "nu1", n_last.saturating_sub(1)));
        let fix = self.fix.iter().map(|r| r.report("fix_residual", "nu2", n_last));
        step.chain(fix).collect()
    }
}

/// Certified asymptotic regularity along a stored trajectory, one report per
/// (residual, k). `moduli` are the raw moduli of the schedule; the scheme's
/// factor on ℓ is applied here.
pub fn check_asymptotic_regularity(
    traj: &Trajectory,
    moduli: &QuantitativeModuli,
    k_max: u64,
    cap: &Cap,
) -> Vec<CheckReport> {
    let km = traj.km_form();
    let eff = effective_moduli(moduli, km);
    let mut mon = AsymptoticRegularityMonitor::new(&km.map, &eff, k_max, cap);
    for s in traj.steps() {
        mon.observe(&s);
    }
    mon.finish(traj.n_max(), traj.x(traj.n_max()))
}

/// Observes z_n − y_n = (x_{n+1} − β_n x_n)/λ_n and ‖z_i − y_i‖ ≤ 1/(3(k+1))
/// for i ≥ max{ν₁(6ℓ(k+1) − 1), b(12ℓN(k+1) − 1)}.
#[derive(Debug, Clone)]
pub struct DrGapMonitor {
    gap: Vec<RateTrack>,
    identity_checked: u64,
    identity_max: f64,
    identity_first: FirstViolation,
    min_gap: Option<u64>,
}

impl DrGapMonitor {
    /// `moduli` are the raw T-DR moduli (λ_n ≥ 1/ℓ for the raw relaxation).
    pub fn new(moduli: &QuantitativeModuli, k_max: u64, cap: &Cap) -> Self {
        let gap: Vec<_> = (0..=k_max)
            .map(|k| RateTrack::new(k, &rates::dr_gap_threshold(moduli, &BoundedNat::from(k), cap), cap))
            .collect();
        let min_gap = gap.iter().filter_map(|r| r.threshold).min();
        DrGapMonitor {
            gap,
            identity_checked: 0,
            identity_max: 0.0,
            identity_first: FirstViolation::default(),
            min_gap,
        }
    }

    pub fn thresholds(&self) -> Vec<(u64, Option<u64>)> {
        self.gap.iter().map(|r| (r.k, r.threshold)).collect()
    }

    pub fn horizon(&self) -> Option<u64> {
        self.gap.iter().filter_map(|r| r.threshold).max()
    }

    pub fn observe(&mut self, s: &Step) {
        let (Some(y), Some(z)) = (s.y, s.z) else {
            return;
        };
        let mut err = 0.0;
        for i in 0..y.len() {
            let e = (z[i] - y[i]) - (s.next[i] - s.beta * s.x[i]) / s.lambda;
            err += e * e;
        }
        let err = err.sqrt();
        self.identity_checked += 1;
        self.identity_max = self.identity_max.max(err);
        if err > IDENTITY_TOL {
            self.identity_first.record(|| json!({ "n": s.n, "defect": err }));
        }
        if !matches!(self.min_gap, Some(t) if (s.n as u64) >= t) {
            return;
        }
        let gap = vector::dist(z, y);
        for r in self.gap.iter_mut().filter(|r| r.active(s.n)) {
            let b = r.bound() / 3.0;
            r.observe(s.n, gap, b);
        }
    }

    pub fn finish(self, n_last: usize) -> Vec<CheckReport> {
        let status = if self.identity_checked == 0 {
            Status::Unverifiable
        } else if self.identity_first.0.is_some() {
            Status::Fail
        } else {
            Status::Pass
        };
        let mut identity = CheckReport::new("dr_identity", status).with_detail(json!({
            "checked": self.identity_checked,
            "max_defect": self.identity_max,
            "tolerance": IDENTITY_TOL,
        }));
        identity.violation = self.identity_first.0.clone();
        let last = n_last.saturating_sub(1);
        std::iter::once(identity)
            .chain(self.gap.iter().map(|r| r.report("dr_gap", "threshold", last)))
            .collect()
    }
}

/// The T-DR gap checks along a stored trajectory with y, z.
pub fn check_dr_gap(traj: &Trajectory, moduli: &QuantitativeModuli, k_max: u64, cap: &Cap) -> Vec<CheckReport> {
    let mut mon = DrGapMonitor::new(moduli, k_max, cap);
    for s in traj.steps() {
        mon.observe(&s);
    }
    mon.finish(traj.n_max())
}

/// Records ‖x_n − target‖ at n = 0, 1, 2, 4, 8, … and at the end.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    target: Vec<f64>,
    curve: Vec<(usize, f64)>,
    next_mark: usize,
}

impl ConvergenceMonitor {
    pub fn new(target: &Vector) -> Self {
        ConvergenceMonitor {
            target: target.as_slice().to_vec(),
            curve: Vec::new(),
            next_mark: 0,
        }
    }

    pub fn observe(&mut self, s: &Step) {
        if s.n == self.next_mark {
            self.curve.push((s.n, vector::dist(s.x, &self.target)));
            self.next_mark = (2 * s.n).max(1);
        }
    }

    pub fn finish(mut self, n_last: usize, x_last: &[f64], tol: f64) -> CheckReport {
        let d = vector::dist(x_last, &self.target);
        if self.curve.last().map(|c| c.0) != Some(n_last) {
            self.curve.push((n_last, d));
        }
        let status = if d <= tol { Status::Pass } else { Status::Fail };
        let mut r = CheckReport::new("strong_convergence", status).with_detail(json!({
            "final_distance": d,
            "tolerance": tol,
            "n_max": n_last,
            "curve": self.curve,
        }));
        if status == Status::Fail {
            r.violation = Some(json!({ "n": n_last, "distance": d, "tolerance": tol }));
        }
        r
    }
}

/// ‖x_{n_max} − target‖ ≤ tol, with the distance curve in the detail.
pub fn check_strong_convergence(traj: &Trajectory, target: &Vector, tol: f64) -> CheckReport {
    let mut mon = ConvergenceMonitor::new(target);
    for s in traj.steps() {
        mon.observe(&s);
    }
    mon.finish(traj.n_max(), traj.x(traj.n_max()), tol)
}
