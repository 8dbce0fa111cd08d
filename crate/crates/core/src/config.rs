//! JSON experiment configs and the problems they describe.
//!
//! A config names a scheme, a problem, a schedule with its moduli (inline or
//! as a stock instance), a starting point and the list of checks to run.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterations::Scheme;
use crate::moduli::{self, QuantitativeModuli, Schedule, Sequence};
use crate::natfn::NatFunction;
use crate::ops::{self, CocoerciveOp, Matrix, NonexpansiveOp, ResolventOp};
use crate::vector::{self, Vector};

/// Default seed for the random starting point.
pub const DEFAULT_X0_SEED: u64 = 7;

/// Residual below which an iteratively computed fixed point is accepted.
const FIXED_POINT_TOL: f64 = 1e-13;

/// Iteration budget for computing a fixed point.
const FIXED_POINT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Tkm,
    Tfb,
    Tdr,
    Km,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// T = Id on R^dim.
    Identity { dim: usize },
    /// T ≡ c.
    Constant { c: Vec<f64> },
    /// Projection onto {x : ⟨a, x⟩ = c}.
    Hyperplane { a: Vec<f64>, c: f64 },
    /// min ½‖A x − y‖² + w‖x‖₁ split as T₂ = ∇(½‖A x − y‖²), J₁ = soft
    /// thresholding. γ defaults to δ = 1/‖AᵀA‖.
    Lasso {
        a: Vec<Vec<f64>>,
        y: Vec<f64>,
        weight: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// Zeros of w∂‖·‖₁ + (x ↦ Q x − b), split into two resolvents
    /// (J₁ soft thresholding, J₂ affine).
    L1Affine {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        weight: f64,
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Recurrence,
    Boundedness,
    AsymptoticRegularity,
    Metastability,
    StrongConvergence,
    DrGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetastabilitySpec {
    pub k: u64,
    /// Counterexample function, e.g. `affine(2,10)`.
    pub f: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scheme: SchemeKind,
    pub problem: ProblemSpec,
    /// Stock instance name; supplies schedule and moduli.
    #[serde(default)]
    pub instance: Option<String>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub moduli: Option<QuantitativeModuli>,
    /// N; overrides the radius carried by the moduli.
    #[serde(default)]
    pub bound: Option<u64>,
    /// λ_n for the plain KM baseline (defaults to the schedule's λ).
    #[serde(default)]
    pub lambda: Option<Sequence>,
    /// Explicit starting point.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Radius of the ball around the fixed point from which x₀ is drawn.
    #[serde(default = "default_x0_radius")]
    pub x0_radius: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Reference fixed point p (computed when absent).
    #[serde(default)]
    pub fixed_point: Option<Vec<f64>>,
    /// Limit proj_{Fix T}(0) (defaults to p when Fix T is a singleton).
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    pub n_max: usize,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Rate checks run to at least this index, past n_max if needed.
    #[serde(default)]
    pub check_horizon: Option<usize>,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub metastability: Option<MetastabilitySpec>,
}

fn default_x0_radius() -> f64 {
    1.0
}

fn default_k_max() -> u64 {
    2
}

fn default_tol() -> f64 {
    1e-3
}

/// A config with every derived quantity resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scheme: Scheme,
    pub schedule: Schedule,
    /// Raw moduli of the scheme's own schedule.
    pub moduli: QuantitativeModuli,
    pub x0: Vector,
    pub fixed_point: Vector,
    pub target: Option<Vector>,
    pub seed: u64,
    pub meta_f: Option<NatFunction>,
}

fn vec_of(v: &[f64]) -> Result<Vector> {
    Vector::new(v.to_vec())
}

fn matrix_of(rows: &[Vec<f64>]) -> Result<Matrix> {
    Matrix::from_rows(rows)
}

/// Fixed point of `t` by averaged iteration p ← (p + T p)/2 from `start`.
pub fn averaged_fixed_point(t: &NonexpansiveOp, start: &Vector) -> Result<Vector> {
    let mut p = start.as_slice().to_vec();
    let mut tp = vec![0.0; p.len()];
    for _ in 0..FIXED_POINT_BUDGET {
        t.apply_into(&p, &mut tp);
        if vector::dist(&tp, &p) <= FIXED_POINT_TOL {
            return Vector::new(p);
        }
        for (a, b) in p.iter_mut().zip(&tp) {
            *a = 0.5 * (*a + b);
        }
    }
    Err(Error::Config(format!(
        "fixed point iteration did not reach {FIXED_POINT_TOL:e} in {FIXED_POINT_BUDGET} steps"
    )))
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Identity { dim } => *dim,
            ProblemSpec::Constant { c } => c.len(),
            ProblemSpec::Hyperplane { a, .. } => a.len(),
            ProblemSpec::Lasso { a, .. } => a.first().map_or(0, Vec::len),
            ProblemSpec::L1Affine { b, .. } => b.len(),
        }
    }

    fn lasso_parts(a: &[Vec<f64>], y: &[f64], weight: f64, gamma: Option<f64>) -> Result<(ResolventOp, CocoerciveOp, f64)> {
        let t2 = CocoerciveOp::least_squares(a, &vec_of(y)?)?;
        let gamma = gamma.unwrap_or_else(|| t2.delta());
        let j1 = ResolventOp::l1(gamma, weight)?;
        Ok((j1, t2, gamma))
    }

    fn dr_parts(q: &[Vec<f64>], b: &[f64], weight: f64, gamma: f64) -> Result<(ResolventOp, ResolventOp)> {
        let j1 = ResolventOp::l1(gamma, weight)?;
        let j2 = ops::resolvent_affine(&matrix_of(q)?, &vec_of(b)?, gamma)?;
        Ok((j1, j2))
    }

    /// The nonexpansive map whose fixed points the problem asks for.
    pub fn nonexpansive(&self) -> Result<NonexpansiveOp> {
        Ok(match self {
            ProblemSpec::Identity { .. } => NonexpansiveOp::identity(),
            ProblemSpec::Constant { c } => NonexpansiveOp::constant(vec_of(c)?),
            ProblemSpec::Hyperplane { a, c } => NonexpansiveOp::hyperplane(vec_of(a)?, *c)?,
            ProblemSpec::Lasso { a, y, weight, gamma } => {
                let (j1, t2, gamma) = Self::lasso_parts(a, y, *weight, *gamma)?;
                ops::compose_fb(&j1, &t2, gamma)?.as_nonexpansive()
            }
            ProblemSpec::L1Affine { q, b, weight, gamma } => {
                let (j1, j2) = Self::dr_parts(q, b, *weight, *gamma)?;
                ops::compose_dr(&j1, &j2)?
            }
        })
    }

    pub fn scheme(&self, kind: SchemeKind) -> Result<Scheme> {
        match (kind, self) {
            (SchemeKind::Tkm, _) => Ok(Scheme::Tkm(self.nonexpansive()?)),
            (SchemeKind::Km, _) => Ok(Scheme::Km(self.nonexpansive()?)),
            (SchemeKind::Tfb, ProblemSpec::Lasso { a, y, weight, gamma }) => {
                let (j1, t2, gamma) = Self::lasso_parts(a, y, *weight, *gamma)?;
                Ok(Scheme::Tfb { j1, t2, gamma })
            }
            (SchemeKind::Tdr, ProblemSpec::L1Affine { q, b, weight, gamma }) => {
                let (j1, j2) = Self::dr_parts(q, b, *weight, *gamma)?;
                Ok(Scheme::Tdr { j1, j2 })
            }
            (SchemeKind::Tfb, _) => Err(Error::Config("scheme tfb needs a lasso problem".into())),
            (SchemeKind::Tdr, _) => Err(Error::Config("scheme tdr needs an l1_affine problem".into())),
        }
    }

    /// A fixed point: closed form where available, else computed.
    pub fn fixed_point(&self) -> Result<Vector> {
        match self {
            ProblemSpec::Identity { dim } => Ok(Vector::zeros(*dim)),
            ProblemSpec::Constant { c } => vec_of(c),
            ProblemSpec::Hyperplane { a, c } => {
                let a = vec_of(a)?;
                ops::project_affine_hyperplane(&a, *c, &Vector::zeros(a.dim()))
            }
            _ => averaged_fixed_point(&self.nonexpansive()?, &Vector::zeros(self.dim())),
        }
    }

    /// proj_{Fix T}(0) when it is determined by the problem alone.
    ///
    /// Lasso and l1_affine problems are assumed to have a unique solution
    /// (A of full column rank, Q positive definite), so Fix T = {p}.
    pub fn default_target(&self, p: &Vector) -> Option<Vector> {
        match self {
            ProblemSpec::Identity { dim } => Some(Vector::zeros(*dim)),
            _ => Some(p.clone()),
        }
    }
}

/// x₀ = p + r·u with u uniform in the unit ball.
pub fn seeded_start(p: &Vector, radius: f64, seed: u64) -> Result<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p.dim();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = vector::norm(&dir).max(f64::MIN_POSITIVE);
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    Vector::new(p.as_slice().iter().zip(&dir).map(|(pi, u)| pi + r * u / norm).collect())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schedule and raw moduli, from a stock instance or inline, with N applied.
    pub fn schedule_and_moduli(&self) -> Result<(Schedule, QuantitativeModuli)> {
        let (schedule, moduli) = match (&self.instance, &self.schedule, &self.moduli) {
            (Some(name), None, None) => {
                let inst = moduli::stock_instance(name, self.bound.unwrap_or(1))
                    .ok_or_else(|| Error::Config(format!("unknown instance {name:?}")))?;
                (inst.schedule, inst.moduli)
            }
            (None, Some(s), Some(m)) => (s.clone(), m.clone()),
            _ => {
                return Err(Error::Config(
                    "give either `instance` or both `schedule` and `moduli`".into(),
                ))
            }
        };
        let moduli = match self.bound {
            Some(n) if n == 0 => return Err(Error::Config("bound must be positive".into())),
            Some(n) => moduli.with_bound(n),
            None => moduli,
        };
        Ok((schedule, moduli))
    }

    /// Resolves the config; `seed` overrides the config's own seed.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Experiment> {
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be positive".into()));
        }
        let dim = self.problem.dim();
        if dim == 0 {
            return Err(Error::Config("problem has dimension 0".into()));
        }
        let (mut schedule, moduli) = self.schedule_and_moduli()?;
        if self.scheme == SchemeKind::Km {
            if let Some(l) = &self.lambda {
                schedule.lambda = l.clone();
            }
        }
        let scheme = self.problem.scheme(self.scheme)?;
        let fixed_point = match &self.fixed_point {
            Some(p) => vec_of(p)?,
            None => self.problem.fixed_point()?,
        };
        let seed = seed.or(self.seed).unwrap_or(DEFAULT_X0_SEED);
        let x0 = match &self.x0 {
            Some(x) => vec_of(x)?,
            None => {
                if !(self.x0_radius >= 0.0 && self.x0_radius.is_finite()) {
                    return Err(Error::Config("x0_radius must be finite and >= 0".into()));
                }
                seeded_start(&fixed_point, self.x0_radius, seed)?
            }
        };
        for (what, v) in [("x0", &x0), ("fixed_point", &fixed_point)] {
            if v.dim() != dim {
                return Err(Error::Config(format!("{what} has dimension {}, problem has {dim}", v.dim())));
            }
        }
        let target = match &self.target {
            Some(t) => Some(vec_of(t)?),
            None => self.problem.default_target(&fixed_point),
        };
        let meta_f = match &self.metastability {
            Some(m) => Some(m.f.parse::<NatFunction>()?),
            None => None,
        };
        scheme.validate(&schedule, &x0, self.n_max)?;
        Ok(Experiment {
            config: self.clone(),
            scheme,
            schedule,
            moduli,
            x0,
            fixed_point,
            target,
            seed,
            meta_f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyperplane_json(extra: &str) -> String {
        format!(
            r#"{{
                "name": "h",
                "scheme": "tkm",
                "problem": {{ "kind": "hyperplane", "a": [1, 0, 0, 0, 0], "c": 1 }},
                "instance": "sqrt",
                "n_max": 100
                {extra}
            }}"#
        )
    }

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::from_json(&hyperplane_json("")).unwrap();
        assert_eq!(cfg.k_max, 2);
        let e = cfg.resolve(None).unwrap();
        assert_eq!(e.fixed_point.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(e.x0.dist(&e.fixed_point) <= 1.0);
        assert_eq!(e.moduli.bound, 1);
        // Same seed, same start.
        assert_eq!(cfg.resolve(None).unwrap().x0, e.x0);
        assert_ne!(cfg.resolve(Some(99)).unwrap().x0, e.x0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::from_json(&hyperplane_json(r#", "unknown": 1"#)).is_err());
        let cfg = ExperimentConfig::from_json(&hyperplane_json(r#", "x0": [1, 2]"#)).unwrap();
        assert!(cfg.resolve(None).is_err());
        let mut cfg = ExperimentConfig::from_json(&hyperplane_json("")).unwrap();
        cfg.instance = Some("nope".into());
        assert!(cfg.resolve(None).is_err());
        cfg.instance = None;
        assert!(cfg.resolve(None).is_err());
        let mut cfg = ExperimentConfig::from_json(&hyperplane_json("")).unwrap();
        cfg.scheme = SchemeKind::Tdr;
        assert!(cfg.resolve(None).is_err());
    }

    #[test]
    fn computed_fixed_points_are_fixed() {
        let dr = ProblemSpec::L1Affine {
            q: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
            b: vec![1.0, -0.5],
            weight: 0.1,
            gamma: 1.0,
        };
        let p = dr.fixed_point().unwrap();
        let t = dr.nonexpansive().unwrap();
        assert!(t.apply(&p).dist(&p) <= 1e-12);
        let lasso = ProblemSpec::Lasso {
            a: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]],
            y: vec![1.0, 0.5, 0.0],
            weight: 0.1,
            gamma: None,
        };
        let p = lasso.fixed_point().unwrap();
        assert!(lasso.nonexpansive().unwrap().apply(&p).dist(&p) <= 1e-12);
    }

    #[test]
    fn seeded_start_stays_in_ball() {
        let p = Vector::new(vec![1.0, -1.0, 0.5]).unwrap();
        for seed in 0..50 {
            let x = seeded_start(&p, 0.75, seed).unwrap();
            assert!(x.dist(&p) <= 0.75 + 1e-12);
        }
    }
}
