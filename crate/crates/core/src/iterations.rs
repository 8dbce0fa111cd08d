//! Trajectories of the Tikhonov-regularized schemes and the plain KM baseline.
//!
//! * T-KM: x_{n+1} = β_n x_n + λ_n (T(β_n x_n) − β_n x_n)
//! * T-FB: x_{n+1} = (1 − λ_n) β_n x_n + λ_n J₁(β_n x_n − γ T₂(β_n x_n))
//! * T-DR: y_n = J₂(β_n x_n), z_n = J₁(2y_n − β_n x_n), x_{n+1} = β_n x_n + λ_n (z_n − y_n)
//! * KM:   x_{n+1} = x_n + λ_n (T(x_n) − x_n)
//!
//! Long runs go through [`stream`], which hands every step to a visitor
//! without storing anything; the `run_*` functions store the full trajectory.

use std::io::Write;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::moduli::{Schedule, Sequence};
use crate::ops::{self, AveragedOp, CocoerciveOp, NonexpansiveOp, ResolventOp};
use crate::vector::{self, Vector};

/// A scheme together with its operators.
#[derive(Debug, Clone)]
pub enum Scheme {
    Tkm(NonexpansiveOp),
    /// T-KM on an α-averaged map, with λ_n ∈ (0, 1/α].
    TkmAveraged(AveragedOp),
    /// γ = 0 is allowed and means T = J₁, with λ_n ∈ (0, 2].
    Tfb {
        j1: ResolventOp,
        t2: CocoerciveOp,
        gamma: f64,
    },
    Tdr {
        j1: ResolventOp,
        j2: ResolventOp,
    },
    /// Plain KM; β is ignored.
    Km(NonexpansiveOp),
}

/// The scheme rewritten as T-KM with a nonexpansive map.
///
/// The iterates satisfy x_{n+1} = β_n x_n + c λ_n (T(β_n x_n) − β_n x_n)
/// with c = `lambda_factor`, and (Q₅) holds for cλ_n with ℓ replaced by
/// `ell_factor`·ℓ.
#[derive(Debug, Clone)]
pub struct KmForm {
    pub map: NonexpansiveOp,
    pub lambda_factor: f64,
    pub ell_factor: u64,
}

/// Smallest a with α ≥ 1/a.
fn averaging_index(alpha: f64) -> u64 {
    let a = (1.0 / alpha).ceil().max(1.0) as u64;
    if alpha * (a as f64) >= 1.0 - 1e-12 {
        a
    } else {
        a + 1
    }
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Tkm(_) => "tkm",
            Scheme::TkmAveraged(_) => "tkm_averaged",
            Scheme::Tfb { .. } => "tfb",
            Scheme::Tdr { .. } => "tdr",
            Scheme::Km(_) => "km",
        }
    }

    /// Upper end of the admissible λ range.
    pub fn lambda_max(&self) -> f64 {
        match self {
            Scheme::Tkm(_) | Scheme::Km(_) => 1.0,
            Scheme::TkmAveraged(a) => 1.0 / a.alpha(),
            Scheme::Tfb { t2, gamma, .. } => {
                if *gamma == 0.0 {
                    2.0
                } else {
                    ops::fb_lambda_max(t2.delta(), *gamma)
                }
            }
            Scheme::Tdr { .. } => 2.0,
        }
    }

    pub fn km_form(&self) -> Result<KmForm> {
        Ok(match self {
            Scheme::Tkm(t) | Scheme::Km(t) => KmForm {
                map: t.clone(),
                lambda_factor: 1.0,
                ell_factor: 1,
            },
            Scheme::TkmAveraged(a) => KmForm {
                map: a.inner(),
                lambda_factor: a.alpha(),
                ell_factor: averaging_index(a.alpha()),
            },
            Scheme::Tfb { j1, t2, gamma } => {
                // The map is 2δ/(4δ − γ)-averaged, so α ≥ 1/2 in every case.
                let averaged = if *gamma == 0.0 {
                    AveragedOp::new(0.5, ops::reflected(j1))?
                } else {
                    ops::compose_fb(j1, t2, *gamma)?
                };
                KmForm {
                    map: averaged.inner(),
                    lambda_factor: averaged.alpha(),
                    ell_factor: 2,
                }
            }
            Scheme::Tdr { j1, j2 } => KmForm {
                map: ops::compose_dr(j1, j2)?,
                lambda_factor: 0.5,
                ell_factor: 2,
            },
        })
    }

    pub fn descriptor(&self) -> Value {
        match self {
            Scheme::Tkm(t) | Scheme::Km(t) => json!({ "scheme": self.name(), "t": t.descriptor() }),
            Scheme::TkmAveraged(a) => json!({ "scheme": self.name(), "t": a.descriptor() }),
            Scheme::Tfb { j1, t2, gamma } => json!({
                "scheme": self.name(),
                "j1": j1.descriptor(),
                "t2": t2.descriptor(),
                "gamma": gamma,
            }),
            Scheme::Tdr { j1, j2 } => json!({
                "scheme": self.name(),
                "j1": j1.descriptor(),
                "j2": j2.descriptor(),
            }),
        }
    }

    fn dims(&self) -> Vec<Option<usize>> {
        match self {
            Scheme::Tkm(t) | Scheme::Km(t) => vec![t.dim()],
            Scheme::TkmAveraged(a) => vec![a.map().dim()],
            Scheme::Tfb { j1, t2, .. } => vec![j1.map().dim(), t2.map().dim()],
            Scheme::Tdr { j1, j2 } => vec![j1.map().dim(), j2.map().dim()],
        }
    }

    /// Checks operator compatibility and the parameter ranges up to `n_max`.
    pub fn validate(&self, schedule: &Schedule, x0: &Vector, n_max: usize) -> Result<()> {
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        for d in self.dims().into_iter().flatten() {
            if d != x0.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x0.dim(),
                });
            }
        }
        match self {
            Scheme::Tfb { t2, gamma, .. } => {
                if !(*gamma >= 0.0 && *gamma <= 2.0 * t2.delta()) {
                    return Err(Error::StepsizeOutOfRange(format!(
                        "gamma = {gamma} not in [0, 2 delta] with delta = {}",
                        t2.delta()
                    )));
                }
            }
            Scheme::Tdr { j1, j2 } if j1.gamma() != j2.gamma() => {
                return Err(Error::GammaMismatch(j1.gamma(), j2.gamma()));
            }
            _ => {}
        }
        if let Scheme::Km(_) = self {
            for n in 0..=n_max {
                let l = schedule.lambda(n);
                if !(l > 0.0 && l <= 1.0) {
                    return Err(Error::StepsizeOutOfRange(format!("lambda_{n} = {l} not in (0, 1]")));
                }
            }
            return Ok(());
        }
        schedule.check_range(n_max, self.lambda_max())
    }
}

/// One step n → n+1 as seen by a visitor. `lambda` is the scheme's own
/// relaxation parameter (the raw λ_n for T-DR).
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub n: usize,
    pub x: &'a [f64],
    pub next: &'a [f64],
    pub beta: f64,
    pub lambda: f64,
    pub y: Option<&'a [f64]>,
    pub z: Option<&'a [f64]>,
}

struct Buffers {
    bx: Vec<f64>,
    t: Vec<f64>,
    u: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Buffers {
    fn new(dim: usize) -> Self {
        Buffers {
            bx: vec![0.0; dim],
            t: vec![0.0; dim],
            u: vec![0.0; dim],
            y: vec![0.0; dim],
            z: vec![0.0; dim],
        }
    }
}

/// Computes x_{n+1} into `next`; returns whether y, z were produced.
fn advance(scheme: &Scheme, beta: f64, lambda: f64, x: &[f64], next: &mut [f64], b: &mut Buffers) -> bool {
    match scheme {
        Scheme::Km(t) => {
            t.apply_into(x, &mut b.t);
            for i in 0..x.len() {
                next[i] = x[i] + lambda * (b.t[i] - x[i]);
            }
            false
        }
        Scheme::Tkm(t) => {
            for i in 0..x.len() {
                b.bx[i] = beta * x[i];
            }
            t.apply_into(&b.bx, &mut b.t);
            for i in 0..x.len() {
                next[i] = b.bx[i] + lambda * (b.t[i] - b.bx[i]);
            }
            false
        }
        Scheme::TkmAveraged(a) => {
            for i in 0..x.len() {
                b.bx[i] = beta * x[i];
            }
            a.map().apply_into(&b.bx, &mut b.t);
            for i in 0..x.len() {
                next[i] = b.bx[i] + lambda * (b.t[i] - b.bx[i]);
            }
            false
        }
        Scheme::Tfb { j1, t2, gamma } => {
            for i in 0..x.len() {
                b.bx[i] = beta * x[i];
            }
            t2.map().apply_into(&b.bx, &mut b.t);
            for i in 0..x.len() {
                b.u[i] = b.bx[i] - gamma * b.t[i];
            }
            j1.apply_into(&b.u, &mut b.t);
            for i in 0..x.len() {
                next[i] = (1.0 - lambda) * b.bx[i] + lambda * b.t[i];
            }
            false
        }
        Scheme::Tdr { j1, j2 } => {
            for i in 0..x.len() {
                b.bx[i] = beta * x[i];
            }
            j2.apply_into(&b.bx, &mut b.y);
            for i in 0..x.len() {
                b.u[i] = 2.0 * b.y[i] - b.bx[i];
            }
            j1.apply_into(&b.u, &mut b.z);
            for i in 0..x.len() {
                next[i] = b.bx[i] + lambda * (b.z[i] - b.y[i]);
            }
            true
        }
    }
}

/// Runs n_max steps, calling `visit` after each, and returns x_{n_max}.
pub fn stream(
    scheme: &Scheme,
    schedule: &Schedule,
    x0: &Vector,
    n_max: usize,
    visit: &mut dyn FnMut(&Step),
) -> Result<Vector> {
    scheme.validate(schedule, x0, n_max)?;
    let dim = x0.dim();
    let mut x = x0.as_slice().to_vec();
    let mut next = vec![0.0; dim];
    let mut buf = Buffers::new(dim);
    for n in 0..n_max {
        let beta = schedule.beta(n);
        let lambda = schedule.lambda(n);
        let aux = advance(scheme, beta, lambda, &x, &mut next, &mut buf);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate(n + 1));
        }
        visit(&Step {
            n,
            x: &x,
            next: &next,
            beta,
            lambda,
            y: aux.then_some(&buf.y[..]),
            z: aux.then_some(&buf.z[..]),
        });
        std::mem::swap(&mut x, &mut next);
    }
    Vector::new(x)
}

/// A stored run x₀, …, x_{n_max}, with y_n, z_n (n < n_max) for T-DR.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    xs: Vec<f64>,
    ys: Option<Vec<f64>>,
    zs: Option<Vec<f64>>,
    scheme: &'static str,
    schedule: Schedule,
    km: KmForm,
    problem: Value,
}

/// Runs `scheme` and stores every iterate.
pub fn run(scheme: &Scheme, schedule: &Schedule, x0: &Vector, n_max: usize) -> Result<Trajectory> {
    let dim = x0.dim();
    let km = scheme.km_form()?;
    let aux = matches!(scheme, Scheme::Tdr { .. });
    let mut xs = Vec::with_capacity((n_max + 1) * dim);
    xs.extend_from_slice(x0.as_slice());
    let mut ys = aux.then(|| Vec::with_capacity(n_max * dim));
    let mut zs = aux.then(|| Vec::with_capacity(n_max * dim));
    stream(scheme, schedule, x0, n_max, &mut |s| {
        xs.extend_from_slice(s.next);
        if let (Some(ys), Some(y)) = (ys.as_mut(), s.y) {
            ys.extend_from_slice(y);
        }
        if let (Some(zs), Some(z)) = (zs.as_mut(), s.z) {
            zs.extend_from_slice(z);
        }
    })?;
    Ok(Trajectory {
        dim,
        xs,
        ys,
        zs,
        scheme: scheme.name(),
        schedule: schedule.clone(),
        km,
        problem: scheme.descriptor(),
    })
}

pub fn run_tkm(t: &NonexpansiveOp, schedule: &Schedule, x0: &Vector, n_max: usize) -> Result<Trajectory> {
    run(&Scheme::Tkm(t.clone()), schedule, x0, n_max)
}

/// T-KM on an α-averaged map, with λ_n ∈ (0, 1/α].
pub fn run_tkm_averaged(t: &AveragedOp, schedule: &Schedule, x0: &Vector, n_max: usize) -> Result<Trajectory> {
    run(&Scheme::TkmAveraged(t.clone()), schedule, x0, n_max)
}

pub fn run_tfb(
    j1: &ResolventOp,
    t2: &CocoerciveOp,
    gamma: f64,
    schedule: &Schedule,
    x0: &Vector,
    n_max: usize,
) -> Result<Trajectory> {
    let scheme = Scheme::Tfb {
        j1: j1.clone(),
        t2: t2.clone(),
        gamma,
    };
    run(&scheme, schedule, x0, n_max)
}

/// T-DR with raw relaxation λ_n ∈ (0, 2].
pub fn run_tdr(j1: &ResolventOp, j2: &ResolventOp, schedule: &Schedule, x0: &Vector, n_max: usize) -> Result<Trajectory> {
    let scheme = Scheme::Tdr {
        j1: j1.clone(),
        j2: j2.clone(),
    };
    run(&scheme, schedule, x0, n_max)
}

pub fn run_km(t: &NonexpansiveOp, lambda: &Sequence, x0: &Vector, n_max: usize) -> Result<Trajectory> {
    let schedule = Schedule::new(Sequence::Constant { value: 1.0 }, lambda.clone());
    run(&Scheme::Km(t.clone()), &schedule, x0, n_max)
}

/// CSV export options.
#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    /// Print ‖x_n‖ instead of coordinates.
    pub norms_only: bool,
    /// Keep every `thin`-th row (and always the last).
    pub thin: usize,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            norms_only: false,
            thin: 1,
        }
    }
}

/// 17 significant digits, locale-free.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored iterates, n_max + 1.
    pub fn len(&self) -> usize {
        self.xs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.len() - 1
    }

    pub fn x(&self, n: usize) -> &[f64] {
        &self.xs[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iterate(&self, n: usize) -> Vector {
        Vector::new(self.x(n).to_vec()).expect("stored iterates are finite")
    }

    pub fn last(&self) -> Vector {
        self.iterate(self.n_max())
    }

    pub fn y(&self, n: usize) -> Option<&[f64]> {
        self.ys.as_ref().map(|v| &v[n * self.dim..(n + 1) * self.dim])
    }

    pub fn z(&self, n: usize) -> Option<&[f64]> {
        self.zs.as_ref().map(|v| &v[n * self.dim..(n + 1) * self.dim])
    }

    pub fn has_aux(&self) -> bool {
        self.ys.is_some()
    }

    pub fn scheme(&self) -> &'static str {
        self.scheme
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn km_form(&self) -> &KmForm {
        &self.km
    }

    pub fn problem(&self) -> &Value {
        &self.problem
    }

    /// The step n → n+1 in visitor form.
    pub fn step(&self, n: usize) -> Step<'_> {
        Step {
            n,
            x: self.x(n),
            next: self.x(n + 1),
            beta: self.schedule.beta(n),
            lambda: self.schedule.lambda(n),
            y: self.y(n),
            z: self.z(n),
        }
    }

    pub fn steps(&self) -> impl Iterator<Item = Step<'_>> + '_ {
        (0..self.n_max()).map(move |n| self.step(n))
    }

    /// ‖x_{n+1} − x_n‖.
    pub fn step_residual(&self, n: usize) -> f64 {
        vector::dist(self.x(n + 1), self.x(n))
    }

    /// ‖T(x_n) − x_n‖ for the nonexpansive map of the KM form.
    pub fn fix_residual(&self, n: usize) -> f64 {
        let mut t = vec![0.0; self.dim];
        self.km.map.apply_into(self.x(n), &mut t);
        vector::dist(&t, self.x(n))
    }

    /// Largest relative defect of the KM-form recurrence,
    /// ‖x_{n+1} − (βx_n + cλ_n(T(βx_n) − βx_n))‖ / (1 + ‖x_n‖).
    pub fn max_recurrence_residual(&self) -> f64 {
        let mut bx = vec![0.0; self.dim];
        let mut t = vec![0.0; self.dim];
        let mut worst: f64 = 0.0;
        let km_plain = self.scheme == "km";
        for s in self.steps() {
            let beta = if km_plain { 1.0 } else { s.beta };
            let lambda = self.km.lambda_factor * s.lambda;
            for i in 0..self.dim {
                bx[i] = beta * s.x[i];
            }
            self.km.map.apply_into(&bx, &mut t);
            let mut err = 0.0;
            for i in 0..self.dim {
                let e = s.next[i] - (bx[i] + lambda * (t[i] - bx[i]));
                err += e * e;
            }
            worst = worst.max(err.sqrt() / (1.0 + vector::norm(s.x)));
        }
        worst
    }

    /// Writes `n, coords | norm, step_residual, fix_residual`.
    pub fn write_csv(&self, w: &mut dyn Write, opts: CsvOptions) -> std::io::Result<()> {
        let thin = opts.thin.max(1);
        let mut header = vec!["n".to_string()];
        if opts.norms_only {
            header.push("norm".into());
        } else {
            header.extend((0..self.dim).map(|i| format!("x{i}")));
        }
        header.push("step_residual".into());
        header.push("fix_residual".into());
        writeln!(w, "{}", header.join(","))?;
        let last = self.n_max();
        for n in (0..=last).filter(|n| n % thin == 0 || *n == last) {
            let mut row = vec![n.to_string()];
            if opts.norms_only {
                row.push(fmt_f64(vector::norm(self.x(n))));
            } else {
                row.extend(self.x(n).iter().map(|v| fmt_f64(*v)));
            }
            row.push(if n < last {
                fmt_f64(self.step_residual(n))
            } else {
                String::new()
            });
            row.push(fmt_f64(self.fix_residual(n)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
