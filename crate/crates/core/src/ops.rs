//! Operator toolbox: projections, proximal maps, resolvents and the
//! combinators that assemble the fixed-point maps of the splitting schemes.
//!
//! Every map implements [`Operator`], which works on raw slices so the
//! iteration engines can run without per-step allocation. The role wrappers
//! ([`NonexpansiveOp`], [`AveragedOp`], [`CocoerciveOp`], [`ResolventOp`])
//! carry the constants the rate calculus needs (`alpha`, `delta`, `gamma`)
//! together with a serializable [`Descriptor`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::vector::{dot, Vector};

/// A single-valued map R^d -> R^d.
pub trait Operator: Send + Sync + fmt::Debug {
    /// Writes the image of `x` into `out`. Both slices have the ambient dimension.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// Fixed input dimension, if the map carries one.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn apply(&self, x: &Vector) -> Vector {
        let mut out = vec![0.0; x.dim()];
        self.apply_into(x.as_slice(), &mut out);
        Vector::from_raw(out)
    }
}

/// Tag plus parameters identifying a concrete map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub tag: String,
    pub params: Value,
}

impl Descriptor {
    pub fn new(tag: &str, params: Value) -> Self {
        Descriptor {
            tag: tag.to_string(),
            params,
        }
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("matrix must be square and non-empty".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Matrix { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    #[inline]
    pub(crate) fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.n).zip(out.iter_mut()) {
            *o = dot(row, x);
        }
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        let mut out = vec![0.0; self.n];
        self.mul_into(x.as_slice(), &mut out);
        Vector::from_raw(out)
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(m[(i, j)]);
            }
        }
        Matrix { n, data }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.to_nalgebra());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// `A^T A` for a (possibly rectangular) matrix given by rows.
    pub fn gram(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(|r| r.len()).unwrap_or(0);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("design matrix must be rectangular and non-empty".into()));
        }
        let mut g = Matrix::zeros(n);
        for r in rows {
            for i in 0..n {
                for j in 0..n {
                    g.data[i * n + j] += r[i] * r[j];
                }
            }
        }
        Ok(g)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn check_dim(expected: usize, v: &Vector) -> Result<()> {
    if v.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: v.dim(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Elementary maps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct IdentityMap;

impl Operator for IdentityMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

#[derive(Debug, Clone)]
struct ConstantMap(Vec<f64>);

impl Operator for ConstantMap {
    fn apply_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn dim(&self) -> Option<usize> {
        Some(self.0.len())
    }
}

#[derive(Debug, Clone)]
struct HyperplaneMap {
    a: Vec<f64>,
    c: f64,
    a_norm2: f64,
}

impl Operator for HyperplaneMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let t = (self.c - dot(&self.a, x)) / self.a_norm2;
        for ((o, xi), ai) in out.iter_mut().zip(x).zip(&self.a) {
            *o = xi + t * ai;
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.a.len())
    }
}

#[derive(Debug, Clone)]
struct HalfspaceMap {
    a: Vec<f64>,
    c: f64,
    a_norm2: f64,
}

impl Operator for HalfspaceMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let excess = dot(&self.a, x) - self.c;
        out.copy_from_slice(x);
        if excess > 0.0 {
            let t = excess / self.a_norm2;
            for (o, ai) in out.iter_mut().zip(&self.a) {
                *o -= t * ai;
            }
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.a.len())
    }
}

#[derive(Debug, Clone)]
struct BoxMap {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Operator for BoxMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.lo.len())
    }
}

#[derive(Debug, Clone)]
struct BallMap {
    center: Vec<f64>,
    radius: f64,
}

impl Operator for BallMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = crate::vector::dist(x, &self.center);
        if d <= self.radius {
            out.copy_from_slice(x);
        } else {
            let s = self.radius / d;
            for i in 0..x.len() {
                out[i] = self.center[i] + s * (x[i] - self.center[i]);
            }
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.center.len())
    }
}

#[derive(Debug, Clone)]
struct SoftThresholdMap {
    threshold: f64,
}

impl Operator for SoftThresholdMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = v.signum() * (v.abs() - self.threshold).max(0.0);
        }
    }
}

/// z = M v + shift with M = (I + gamma Q)^{-1}, shift = gamma M b.
#[derive(Debug, Clone)]
struct AffineResolventMap {
    inverse: Matrix,
    shift: Vec<f64>,
}

impl Operator for AffineResolventMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.inverse.mul_into(x, out);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.shift.len())
    }
}

/// x -> Q x - b
#[derive(Debug, Clone)]
struct AffineMap {
    q: Matrix,
    b: Vec<f64>,
}

impl Operator for AffineMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.q.mul_into(x, out);
        for (o, bi) in out.iter_mut().zip(&self.b) {
            *o -= bi;
        }
    }
    fn dim(&self) -> Option<usize> {
        Some(self.b.len())
    }
}

#[derive(Debug, Clone)]
struct ZeroMap;

impl Operator for ZeroMap {
    fn apply_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// Combinators
// ---------------------------------------------------------------------------

/// Runs `f` on a zeroed buffer of length `len`, on the stack when small.
fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    const STACK: usize = 32;
    if len <= STACK {
        let mut buf = [0.0; STACK];
        f(&mut buf[..len])
    } else {
        f(&mut vec![0.0; len])
    }
}

#[derive(Debug)]
struct ReflectedMap(Arc<dyn Operator>);

impl Operator for ReflectedMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = 2.0 * *o - xi;
        }
    }
    fn dim(&self) -> Option<usize> {
        self.0.dim()
    }
}

/// g(f(x))
#[derive(Debug)]
struct ComposedMap {
    outer: Arc<dyn Operator>,
    inner: Arc<dyn Operator>,
}

impl Operator for ComposedMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        with_scratch(x.len(), |tmp| {
            self.inner.apply_into(x, tmp);
            self.outer.apply_into(tmp, out);
        });
    }
    fn dim(&self) -> Option<usize> {
        self.inner.dim().or(self.outer.dim())
    }
}

/// J(x - gamma B x)
#[derive(Debug)]
struct ForwardBackwardMap {
    resolvent: Arc<dyn Operator>,
    forward: Arc<dyn Operator>,
    gamma: f64,
}

impl Operator for ForwardBackwardMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        with_scratch(x.len(), |tmp| {
            self.forward.apply_into(x, tmp);
            for (t, xi) in tmp.iter_mut().zip(x) {
                *t = xi - self.gamma * *t;
            }
            self.resolvent.apply_into(tmp, out);
        });
    }
    fn dim(&self) -> Option<usize> {
        self.forward.dim().or(self.resolvent.dim())
    }
}

/// (1 - alpha) x + alpha T'(x)
#[derive(Debug)]
struct AveragedMap {
    alpha: f64,
    inner: Arc<dyn Operator>,
}

impl Operator for AveragedMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (1.0 - self.alpha) * xi + self.alpha * *o;
        }
    }
    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }
}

/// (T(x) - (1 - alpha) x) / alpha, the nonexpansive part of an averaged T.
#[derive(Debug)]
struct UnaveragedMap {
    alpha: f64,
    outer: Arc<dyn Operator>,
}

impl Operator for UnaveragedMap {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.outer.apply_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (*o - (1.0 - self.alpha) * xi) / self.alpha;
        }
    }
    fn dim(&self) -> Option<usize> {
        self.outer.dim()
    }
}

// ---------------------------------------------------------------------------
// Role wrappers
// ---------------------------------------------------------------------------

/// A map with ‖T(x) − T(y)‖ ≤ ‖x − y‖.
#[derive(Debug, Clone)]
pub struct NonexpansiveOp {
    map: Arc<dyn Operator>,
    descriptor: Descriptor,
}

impl NonexpansiveOp {
    pub fn identity() -> Self {
        NonexpansiveOp {
            map: Arc::new(IdentityMap),
            descriptor: Descriptor::new("identity", Value::Null),
        }
    }

    /// The constant map x ↦ c, whose only fixed point is c.
    pub fn constant(c: Vector) -> Self {
        let params = json!({ "c": c.as_slice() });
        NonexpansiveOp {
            map: Arc::new(ConstantMap(c.into_inner())),
            descriptor: Descriptor::new("constant", params),
        }
    }

    /// Projection onto {x : ⟨a, x⟩ = c}.
    pub fn hyperplane(a: Vector, c: f64) -> Result<Self> {
        let a_norm2 = dot(a.as_slice(), a.as_slice());
        if a_norm2 == 0.0 {
            return Err(Error::InvalidParameter("hyperplane normal must be nonzero".into()));
        }
        let params = json!({ "a": a.as_slice(), "c": c });
        Ok(NonexpansiveOp {
            map: Arc::new(HyperplaneMap {
                a: a.into_inner(),
                c,
                a_norm2,
            }),
            descriptor: Descriptor::new("hyperplane", params),
        })
    }

    /// A linear map x ↦ M x; the caller asserts ‖M‖₂ ≤ 1.
    pub fn linear(m: Matrix) -> Result<Self> {
        let g = {
            let rows = m.rows();
            Matrix::gram(&rows)?
        };
        let spectral = g.symmetric_eigenvalues().last().copied().unwrap_or(0.0).max(0.0).sqrt();
        if spectral > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "linear map has operator norm {spectral} > 1"
            )));
        }
        let params = json!({ "m": m.rows() });
        let n = m.size();
        Ok(NonexpansiveOp {
            map: Arc::new(AffineMap {
                q: m,
                b: vec![0.0; n],
            }),
            descriptor: Descriptor::new("linear", params),
        })
    }

    /// Wraps an arbitrary map the caller knows to be nonexpansive.
    pub fn from_map(map: Arc<dyn Operator>, descriptor: Descriptor) -> Self {
        NonexpansiveOp { map, descriptor }
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn map(&self) -> &Arc<dyn Operator> {
        &self.map
    }

    pub fn dim(&self) -> Option<usize> {
        self.map.dim()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.map.apply(x)
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.map.apply_into(x, out)
    }
}

impl From<ResolventOp> for NonexpansiveOp {
    fn from(j: ResolventOp) -> Self {
        NonexpansiveOp {
            map: j.map,
            descriptor: j.descriptor,
        }
    }
}

impl From<AveragedOp> for NonexpansiveOp {
    fn from(t: AveragedOp) -> Self {
        NonexpansiveOp {
            map: t.map,
            descriptor: t.descriptor,
        }
    }
}

/// T = (1 − α) Id + α T′ with T′ nonexpansive and α ∈ (0, 1].
#[derive(Debug, Clone)]
pub struct AveragedOp {
    alpha: f64,
    map: Arc<dyn Operator>,
    descriptor: Descriptor,
}

impl AveragedOp {
    pub fn new(alpha: f64, inner: NonexpansiveOp) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} not in (0, 1]")));
        }
        let descriptor = Descriptor::new(
            "averaged",
            json!({ "alpha": alpha, "inner": inner.descriptor }),
        );
        Ok(AveragedOp {
            alpha,
            map: Arc::new(AveragedMap {
                alpha,
                inner: inner.map,
            }),
            descriptor,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The nonexpansive T′ in T = (1 − α) Id + α T′.
    pub fn inner(&self) -> NonexpansiveOp {
        NonexpansiveOp {
            map: Arc::new(UnaveragedMap {
                alpha: self.alpha,
                outer: self.map.clone(),
            }),
            descriptor: Descriptor::new("unaveraged", json!({ "of": self.descriptor })),
        }
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn map(&self) -> &Arc<dyn Operator> {
        &self.map
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.map.apply(x)
    }

    pub fn as_nonexpansive(&self) -> NonexpansiveOp {
        self.clone().into()
    }
}

/// δ-cocoercive single-valued map: ⟨x − y, B x − B y⟩ ≥ δ ‖B x − B y‖².
#[derive(Debug, Clone)]
pub struct CocoerciveOp {
    delta: f64,
    map: Arc<dyn Operator>,
    descriptor: Descriptor,
}

impl CocoerciveOp {
    /// The zero map, cocoercive for every δ > 0 (recorded as δ = ∞).
    pub fn zero() -> Self {
        CocoerciveOp {
            delta: f64::INFINITY,
            map: Arc::new(ZeroMap),
            descriptor: Descriptor::new("zero", Value::Null),
        }
    }

    /// x ↦ Q x − b for symmetric PSD Q, with δ = 1/λ_max(Q).
    pub fn affine(q: Matrix, b: Vector) -> Result<Self> {
        check_dim(q.size(), &b)?;
        let lmax = check_psd(&q)?;
        if lmax <= 0.0 {
            return Err(Error::InvalidParameter(
                "Q = 0 has no finite cocoercivity constant; use CocoerciveOp::zero".into(),
            ));
        }
        let descriptor = Descriptor::new("affine", json!({ "q": q.rows(), "b": b.as_slice() }));
        Ok(CocoerciveOp {
            delta: 1.0 / lmax,
            map: Arc::new(AffineMap { q, b: b.into_inner() }),
            descriptor,
        })
    }

    /// Gradient of ½‖A x − y‖², i.e. x ↦ Aᵀ(A x − y), with δ = 1/‖AᵀA‖.
    pub fn least_squares(a_rows: &[Vec<f64>], y: &Vector) -> Result<Self> {
        if a_rows.len() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: a_rows.len(),
                got: y.dim(),
            });
        }
        let q = Matrix::gram(a_rows)?;
        let n = q.size();
        let mut b = vec![0.0; n];
        for (row, yi) in a_rows.iter().zip(y.as_slice()) {
            for j in 0..n {
                b[j] += row[j] * yi;
            }
        }
        let mut op = CocoerciveOp::affine(q, Vector::new(b)?)?;
        op.descriptor = Descriptor::new("least_squares", json!({ "a": a_rows, "y": y.as_slice() }));
        Ok(op)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn map(&self) -> &Arc<dyn Operator> {
        &self.map
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.map.apply(x)
    }
}

/// Resolvent J_{γA} = (I + γA)⁻¹ of a maximal monotone A (firmly nonexpansive).
#[derive(Debug, Clone)]
pub struct ResolventOp {
    gamma: f64,
    map: Arc<dyn Operator>,
    descriptor: Descriptor,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")))
    }
}

impl ResolventOp {
    /// Resolvent of the zero operator.
    pub fn identity(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(ResolventOp {
            gamma,
            map: Arc::new(IdentityMap),
            descriptor: Descriptor::new("identity", json!({ "gamma": gamma })),
        })
    }

    /// Resolvent of γ·w·∂‖·‖₁: soft thresholding at γ·w.
    pub fn l1(gamma: f64, weight: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("l1 weight = {weight} must be >= 0")));
        }
        Ok(ResolventOp {
            gamma,
            map: Arc::new(SoftThresholdMap {
                threshold: gamma * weight,
            }),
            descriptor: Descriptor::new("l1", json!({ "gamma": gamma, "weight": weight })),
        })
    }

    /// Projection onto a box, the resolvent of its normal cone for every γ.
    pub fn box_projection(gamma: f64, lo: Vector, hi: Vector) -> Result<Self> {
        check_gamma(gamma)?;
        check_box(&lo, &hi)?;
        let descriptor = Descriptor::new(
            "box",
            json!({ "gamma": gamma, "lo": lo.as_slice(), "hi": hi.as_slice() }),
        );
        Ok(ResolventOp {
            gamma,
            map: Arc::new(BoxMap {
                lo: lo.into_inner(),
                hi: hi.into_inner(),
            }),
            descriptor,
        })
    }

    pub fn ball_projection(gamma: f64, center: Vector, radius: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius = {radius} must be positive")));
        }
        let descriptor = Descriptor::new(
            "ball",
            json!({ "gamma": gamma, "center": center.as_slice(), "radius": radius }),
        );
        Ok(ResolventOp {
            gamma,
            map: Arc::new(BallMap {
                center: center.into_inner(),
                radius,
            }),
            descriptor,
        })
    }

    /// Projection onto {x : ⟨a, x⟩ ≤ c}.
    pub fn halfspace_projection(gamma: f64, a: Vector, c: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let a_norm2 = dot(a.as_slice(), a.as_slice());
        if a_norm2 == 0.0 {
            return Err(Error::InvalidParameter("halfspace normal must be nonzero".into()));
        }
        let descriptor = Descriptor::new("halfspace", json!({ "gamma": gamma, "a": a.as_slice(), "c": c }));
        Ok(ResolventOp {
            gamma,
            map: Arc::new(HalfspaceMap {
                a: a.into_inner(),
                c,
                a_norm2,
            }),
            descriptor,
        })
    }

    /// Projection onto {x : ⟨a, x⟩ = c}.
    pub fn hyperplane_projection(gamma: f64, a: Vector, c: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let t = NonexpansiveOp::hyperplane(a, c)?;
        let mut params = t.descriptor.params.clone();
        params["gamma"] = json!(gamma);
        Ok(ResolventOp {
            gamma,
            map: t.map,
            descriptor: Descriptor::new("hyperplane", params),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn map(&self) -> &Arc<dyn Operator> {
        &self.map
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.map.apply(x)
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.map.apply_into(x, out)
    }
}

/// Largest eigenvalue of a symmetric PSD matrix; errors otherwise.
fn check_psd(q: &Matrix) -> Result<f64> {
    let scale = q.max_abs().max(1.0);
    if !q.is_symmetric(1e-12 * scale) {
        return Err(Error::LinearSolve("matrix is not symmetric".into()));
    }
    let ev = q.symmetric_eigenvalues();
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    if lmin < -1e-10 * scale {
        return Err(Error::LinearSolve(format!(
            "matrix is not positive semidefinite (min eigenvalue {lmin:e})"
        )));
    }
    Ok(lmax.max(0.0))
}

fn check_box(lo: &Vector, hi: &Vector) -> Result<()> {
    check_dim(lo.dim(), hi)?;
    if lo.as_slice().iter().zip(hi.as_slice()).any(|(l, h)| l > h) {
        return Err(Error::InvalidParameter("box requires lo <= hi".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Free-standing operations
// ---------------------------------------------------------------------------

/// Projection of `v` onto {x : ⟨a, x⟩ = c}.
pub fn project_affine_hyperplane(a: &Vector, c: f64, v: &Vector) -> Result<Vector> {
    check_dim(a.dim(), v)?;
    let a_norm2 = dot(a.as_slice(), a.as_slice());
    if a_norm2 == 0.0 {
        return Err(Error::InvalidParameter("hyperplane normal must be nonzero".into()));
    }
    let t = (c - dot(a.as_slice(), v.as_slice())) / a_norm2;
    Ok(v.axpy(t, a))
}

pub fn project_box(lo: &Vector, hi: &Vector, v: &Vector) -> Result<Vector> {
    check_box(lo, hi)?;
    check_dim(lo.dim(), v)?;
    let mut out = vec![0.0; v.dim()];
    BoxMap {
        lo: lo.as_slice().to_vec(),
        hi: hi.as_slice().to_vec(),
    }
    .apply_into(v.as_slice(), &mut out);
    Ok(Vector::from_raw(out))
}

pub fn project_ball(center: &Vector, radius: f64, v: &Vector) -> Result<Vector> {
    check_dim(center.dim(), v)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius = {radius} must be positive")));
    }
    let mut out = vec![0.0; v.dim()];
    BallMap {
        center: center.as_slice().to_vec(),
        radius,
    }
    .apply_into(v.as_slice(), &mut out);
    Ok(Vector::from_raw(out))
}

/// Projection onto {x : ⟨a, x⟩ ≤ c}.
pub fn project_halfspace(a: &Vector, c: f64, v: &Vector) -> Result<Vector> {
    check_dim(a.dim(), v)?;
    let j = ResolventOp::halfspace_projection(1.0, a.clone(), c)?;
    Ok(j.apply(v))
}

/// Componentwise sign(v)·max(|v| − γ, 0).
pub fn soft_threshold(gamma: f64, v: &Vector) -> Result<Vector> {
    check_gamma(gamma)?;
    let mut out = vec![0.0; v.dim()];
    SoftThresholdMap { threshold: gamma }.apply_into(v.as_slice(), &mut out);
    Ok(Vector::from_raw(out))
}

/// Resolvent of A = x ↦ Q x − b: solves (I + γQ) z = v + γ b.
pub fn resolvent_affine(q: &Matrix, b: &Vector, gamma: f64) -> Result<ResolventOp> {
    check_gamma(gamma)?;
    check_dim(q.size(), b)?;
    check_psd(q)?;
    let n = q.size();
    let shifted = DMatrix::<f64>::identity(n, n) + q.to_nalgebra() * gamma;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::LinearSolve("I + gamma Q is not positive definite".into()))?;
    let inverse = Matrix::from_nalgebra(&chol.inverse());
    let gb = b.scaled(gamma);
    let shift = inverse.mul_vec(&gb).into_inner();
    let descriptor = Descriptor::new(
        "affine",
        json!({ "gamma": gamma, "q": q.rows(), "b": b.as_slice() }),
    );
    Ok(ResolventOp {
        gamma,
        map: Arc::new(AffineResolventMap { inverse, shift }),
        descriptor,
    })
}

/// Reflected resolvent R = 2J − Id.
pub fn reflected(j: &ResolventOp) -> NonexpansiveOp {
    NonexpansiveOp {
        map: Arc::new(ReflectedMap(j.map.clone())),
        descriptor: Descriptor::new("reflected", json!({ "of": j.descriptor })),
    }
}

/// T = J₁ ∘ (Id − γ T₂), which is 2δ/(4δ − γ)-averaged for γ ∈ (0, 2δ].
pub fn compose_fb(j1: &ResolventOp, t2: &CocoerciveOp, gamma: f64) -> Result<AveragedOp> {
    let delta = t2.delta;
    if !(gamma > 0.0 && gamma <= 2.0 * delta) {
        return Err(Error::StepsizeOutOfRange(format!(
            "gamma = {gamma} not in (0, 2 delta] with delta = {delta}"
        )));
    }
    let alpha = fb_alpha(delta, gamma);
    let descriptor = Descriptor::new(
        "forward_backward",
        json!({ "j1": j1.descriptor, "t2": t2.descriptor, "gamma": gamma, "alpha": alpha }),
    );
    Ok(AveragedOp {
        alpha,
        map: Arc::new(ForwardBackwardMap {
            resolvent: j1.map.clone(),
            forward: t2.map.clone(),
            gamma,
        }),
        descriptor,
    })
}

/// Averagedness constant 2δ/(4δ − γ) of the forward-backward map.
pub fn fb_alpha(delta: f64, gamma: f64) -> f64 {
    if delta.is_infinite() {
        0.5
    } else {
        (2.0 * delta / (4.0 * delta - gamma)).min(1.0)
    }
}

/// Upper end (4δ − γ)/(2δ) of the admissible relaxation range for T-FB.
pub fn fb_lambda_max(delta: f64, gamma: f64) -> f64 {
    1.0 / fb_alpha(delta, gamma)
}

/// T = R_{γT₁} ∘ R_{γT₂}.
pub fn compose_dr(j1: &ResolventOp, j2: &ResolventOp) -> Result<NonexpansiveOp> {
    if j1.gamma != j2.gamma {
        return Err(Error::GammaMismatch(j1.gamma, j2.gamma));
    }
    let r1 = reflected(j1);
    let r2 = reflected(j2);
    Ok(NonexpansiveOp {
        map: Arc::new(ComposedMap {
            outer: r1.map,
            inner: r2.map,
        }),
        descriptor: Descriptor::new(
            "douglas_rachford",
            json!({ "j1": j1.descriptor, "j2": j2.descriptor }),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vector {
        Vector::new((0..dim).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    // Grid search over a 2-D square for the closest feasible point. Independent
    // of the closed-form projections it checks.
    fn grid_project(feasible: impl Fn(f64, f64) -> bool, p: (f64, f64)) -> (f64, f64) {
        let mut best = (f64::NAN, f64::NAN);
        let mut best_d = f64::INFINITY;
        let steps = 2000;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = -3.0 + 6.0 * i as f64 / steps as f64;
                let y = -3.0 + 6.0 * j as f64 / steps as f64;
                if feasible(x, y) {
                    let d = (x - p.0).powi(2) + (y - p.1).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = (x, y);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn hyperplane_projection_examples() {
        let p = project_affine_hyperplane(&v(&[1.0, 0.0]), 1.0, &v(&[0.0, 0.0])).unwrap();
        assert!(close(&p, &v(&[1.0, 0.0]), 1e-15));
        let p = project_affine_hyperplane(&v(&[1.0, 1.0]), 0.0, &v(&[1.0, 1.0])).unwrap();
        assert!(close(&p, &v(&[0.0, 0.0]), 1e-15));
        let on = v(&[1.0, 5.0]);
        let p = project_affine_hyperplane(&v(&[1.0, 0.0]), 1.0, &on).unwrap();
        assert_eq!(p, on);
    }

    #[test]
    fn hyperplane_projection_matches_grid_oracle() {
        // Line x + y = 0: feasible band of half-width one grid cell.
        let h = 6.0 / 2000.0;
        let g = grid_project(|x, y| (x + y).abs() <= h / 2.0, (1.0, 1.0));
        assert!(g.0.abs() < 2.0 * h && g.1.abs() < 2.0 * h);
        let g = grid_project(|x, _| (x - 1.0).abs() <= h / 2.0, (0.0, 0.0));
        assert!((g.0 - 1.0).abs() < 2.0 * h && g.1.abs() < 2.0 * h);
    }

    #[test]
    fn hyperplane_zero_normal_rejected() {
        assert!(project_affine_hyperplane(&v(&[0.0, 0.0]), 1.0, &v(&[1.0, 1.0])).is_err());
        assert!(NonexpansiveOp::hyperplane(v(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn box_and_ball_examples() {
        let lo = v(&[0.0, 0.0]);
        let hi = v(&[1.0, 1.0]);
        assert_eq!(project_box(&lo, &hi, &v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(project_box(&lo, &hi, &v(&[0.3, 0.7])).unwrap(), v(&[0.3, 0.7]));
        let g = grid_project(|x, y| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y), (2.0, -1.0));
        assert!((g.0 - 1.0).abs() < 1e-2 && g.1.abs() < 1e-2);

        let c = Vector::zeros(2);
        let p = project_ball(&c, 1.0, &v(&[2.0, 0.0])).unwrap();
        assert!(close(&p, &v(&[1.0, 0.0]), 1e-15));
        let g = grid_project(|x, y| x * x + y * y <= 1.0, (2.0, 0.0));
        assert!((g.0 - 1.0).abs() < 1e-2 && g.1.abs() < 1e-2);
        assert_eq!(project_ball(&c, 1.0, &v(&[0.2, 0.1])).unwrap(), v(&[0.2, 0.1]));
    }

    #[test]
    fn malformed_regions_rejected() {
        assert!(project_box(&v(&[1.0]), &v(&[0.0]), &v(&[0.5])).is_err());
        assert!(project_ball(&v(&[0.0]), 0.0, &v(&[0.5])).is_err());
        assert!(project_ball(&v(&[0.0]), -1.0, &v(&[0.5])).is_err());
        assert!(project_halfspace(&v(&[0.0, 0.0]), 1.0, &v(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn halfspace_projection() {
        let a = v(&[1.0, 0.0]);
        assert_eq!(project_halfspace(&a, 1.0, &v(&[0.5, 3.0])).unwrap(), v(&[0.5, 3.0]));
        assert!(close(&project_halfspace(&a, 1.0, &v(&[4.0, 3.0])).unwrap(), &v(&[1.0, 3.0]), 1e-15));
    }

    #[test]
    fn soft_threshold_examples() {
        let s = soft_threshold(1.0, &v(&[2.0, 0.5, 0.0, -3.0])).unwrap();
        assert_eq!(s, v(&[1.0, 0.0, 0.0, -2.0]));
        assert!(soft_threshold(0.0, &v(&[1.0])).is_err());
    }

    #[test]
    fn soft_threshold_matches_grid_minimizer() {
        // argmin ½(x − v)² + γ|x| by fine 1-D search.
        for &val in &[2.0, 0.5, -1.7, 0.0, 1.0] {
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=400_000 {
                let x = -4.0 + 8.0 * i as f64 / 400_000.0;
                let obj = 0.5 * (x - val) * (x - val) + x.abs();
                if obj < best.0 {
                    best = (obj, x);
                }
            }
            let s = soft_threshold(1.0, &v(&[val])).unwrap()[0];
            assert!((s - best.1).abs() < 1e-4, "v={val}: {s} vs {}", best.1);
        }
    }

    #[test]
    fn affine_resolvent_examples() {
        let j = resolvent_affine(&Matrix::zeros(2), &Vector::zeros(2), 0.7).unwrap();
        assert_eq!(j.apply(&v(&[3.0, -1.0])), v(&[3.0, -1.0]));
        let j = resolvent_affine(&Matrix::identity(1), &Vector::zeros(1), 1.0).unwrap();
        assert!(close(&j.apply(&v(&[2.0])), &v(&[1.0]), 1e-15));
    }

    #[test]
    fn affine_resolvent_residual_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..7);
            let a: Vec<Vec<f64>> = (0..n + 2)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let q = Matrix::gram(&a).unwrap();
            let b = random_vec(&mut rng, n, 2.0);
            let gamma = rng.gen_range(0.1..3.0);
            let j = resolvent_affine(&q, &b, gamma).unwrap();
            let x = random_vec(&mut rng, n, 5.0);
            let z = j.apply(&x);
            // (I + γQ) z = x + γ b
            let lhs = z.add(&q.mul_vec(&z).scaled(gamma));
            let rhs = x.axpy(gamma, &b);
            assert!(lhs.dist(&rhs) <= 1e-10);
        }
    }

    #[test]
    fn affine_resolvent_rejects_non_psd() {
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -2.0]]).unwrap();
        assert!(matches!(
            resolvent_affine(&q, &Vector::zeros(2), 1.0),
            Err(Error::LinearSolve(_))
        ));
        let q = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            resolvent_affine(&q, &Vector::zeros(2), 1.0),
            Err(Error::LinearSolve(_))
        ));
    }

    #[test]
    fn reflected_examples() {
        let r = reflected(&ResolventOp::identity(1.0).unwrap());
        assert_eq!(r.apply(&v(&[1.0, -2.0])), v(&[1.0, -2.0]));
        // J ≡ c gives x ↦ 2c − x.
        let c = v(&[0.5, 1.0]);
        let j = ResolventOp {
            gamma: 1.0,
            map: Arc::new(ConstantMap(c.as_slice().to_vec())),
            descriptor: Descriptor::new("constant", Value::Null),
        };
        let r = reflected(&j);
        assert_eq!(r.apply(&v(&[3.0, 3.0])), v(&[-2.0, -1.0]));
    }

    #[test]
    fn compose_fb_alpha_cases() {
        let j = ResolventOp::l1(0.5, 1.0).unwrap();
        let t = compose_fb(&j, &CocoerciveOp::zero(), 0.5).unwrap();
        assert_eq!(t.alpha(), 0.5);
        let x = v(&[2.0, -0.2]);
        assert_eq!(t.apply(&x), j.apply(&x));

        let q = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b2 = CocoerciveOp::affine(q, Vector::zeros(2)).unwrap();
        assert_eq!(b2.delta(), 0.5);
        let t = compose_fb(&j, &b2, 1.0).unwrap();
        assert_eq!(t.alpha(), 1.0);
        assert!(compose_fb(&j, &b2, 1.0 + 1e-9).is_err());
        assert!(compose_fb(&j, &b2, 0.0).is_err());
    }

    #[test]
    fn compose_dr_cases() {
        let id = ResolventOp::identity(1.0).unwrap();
        let t = compose_dr(&id, &id).unwrap();
        assert_eq!(t.apply(&v(&[1.0, 2.0])), v(&[1.0, 2.0]));

        let j1 = ResolventOp::l1(1.0, 1.0).unwrap();
        let t = compose_dr(&j1, &id).unwrap();
        let r1 = reflected(&j1);
        let x = v(&[2.0, 0.3]);
        assert_eq!(t.apply(&x), r1.apply(&x));

        let j2 = ResolventOp::l1(2.0, 1.0).unwrap();
        assert_eq!(compose_dr(&j1, &j2).unwrap_err(), Error::GammaMismatch(1.0, 2.0));
    }

    #[test]
    fn averaged_decomposition_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let j = ResolventOp::l1(0.3, 1.0).unwrap();
        let a_rows = vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, -0.3], vec![0.2, 0.0, 0.8]];
        let b2 = CocoerciveOp::least_squares(&a_rows, &v(&[1.0, -1.0, 0.5])).unwrap();
        let t = compose_fb(&j, &b2, b2.delta()).unwrap();
        let inner = t.inner();
        let alpha = t.alpha();
        for _ in 0..1000 {
            let x = random_vec(&mut rng, 3, 4.0);
            let lhs = t.apply(&x);
            let rhs = x.scaled(1.0 - alpha).add(&inner.apply(&x).scaled(alpha));
            assert!(lhs.dist(&rhs) <= 1e-12);
        }
        let avg = AveragedOp::new(0.25, NonexpansiveOp::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap()).unwrap();
        let x = v(&[3.0, -1.0]);
        let p = project_affine_hyperplane(&v(&[1.0, 1.0]), 1.0, &x).unwrap();
        assert!(avg.apply(&x).dist(&x.scaled(0.75).add(&p.scaled(0.25))) <= 1e-15);
        assert!(AveragedOp::new(0.0, NonexpansiveOp::identity()).is_err());
    }

    #[test]
    fn projections_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lo = v(&[-1.0, 0.0, 0.5]);
        let hi = v(&[1.0, 0.0, 2.0]);
        let c = v(&[0.3, -0.2, 0.1]);
        let a = v(&[1.0, -2.0, 0.5]);
        for _ in 0..1000 {
            let x = random_vec(&mut rng, 3, 10.0);
            let p = project_box(&lo, &hi, &x).unwrap();
            assert!(project_box(&lo, &hi, &p).unwrap().dist(&p) <= 1e-12);
            let p = project_ball(&c, 1.5, &x).unwrap();
            assert!(project_ball(&c, 1.5, &p).unwrap().dist(&p) <= 1e-12);
            let p = project_halfspace(&a, 0.7, &x).unwrap();
            assert!(project_halfspace(&a, 0.7, &p).unwrap().dist(&p) <= 1e-12);
            let p = project_affine_hyperplane(&a, 0.7, &x).unwrap();
            assert!(project_affine_hyperplane(&a, 0.7, &p).unwrap().dist(&p) <= 1e-12);
        }
    }

    #[test]
    fn linear_nonexpansive_norm_check() {
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(NonexpansiveOp::linear(rot).is_ok());
        let big = Matrix::from_rows(&[vec![1.5, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(NonexpansiveOp::linear(big).is_err());
    }
}
