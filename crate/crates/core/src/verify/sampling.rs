//! Sampled checks of operator inequalities on random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ops::{CocoerciveOp, Operator};
use crate::vector::{dist, dot};
use crate::SLACK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub property: String,
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed excess of the left side over the right side.
    pub worst_excess: f64,
}

impl SampleReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Draws `pairs` pairs uniformly from [−scale, scale]^dim and records the
/// excess `lhs − rhs` of the inequality for each.
fn sample(
    property: &str,
    map: &dyn Operator,
    dim: usize,
    pairs: usize,
    seed: u64,
    scale: f64,
    excess: impl Fn(&[f64], &[f64], &[f64], &[f64]) -> f64,
) -> SampleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut tx = vec![0.0; dim];
    let mut ty = vec![0.0; dim];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            *a = rng.gen_range(-scale..=scale);
            *b = rng.gen_range(-scale..=scale);
        }
        map.apply_into(&x, &mut tx);
        map.apply_into(&y, &mut ty);
        let e = excess(&x, &y, &tx, &ty);
        if e > SLACK || e.is_nan() {
            violations += 1;
        }
        worst = worst.max(e);
    }
    SampleReport {
        property: property.into(),
        pairs,
        violations,
        worst_excess: worst,
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

/// ‖Tx − Ty‖ ≤ ‖x − y‖.
pub fn sample_nonexpansive(map: &dyn Operator, dim: usize, pairs: usize, seed: u64, scale: f64) -> SampleReport {
    sample("nonexpansive", map, dim, pairs, seed, scale, |x, y, tx, ty| {
        dist(tx, ty) - dist(x, y)
    })
}

/// ‖Tx − Ty‖² ≤ ⟨x − y, Tx − Ty⟩.
pub fn sample_firmly_nonexpansive(
    map: &dyn Operator,
    dim: usize,
    pairs: usize,
    seed: u64,
    scale: f64,
) -> SampleReport {
    sample("firmly_nonexpansive", map, dim, pairs, seed, scale, |x, y, tx, ty| {
        let d = diff(tx, ty);
        dot(&d, &d) - dot(&diff(x, y), &d)
    })
}

/// δ‖Tx − Ty‖² ≤ ⟨x − y, Tx − Ty⟩ with δ the operator's own constant.
pub fn sample_cocoercive(op: &CocoerciveOp, dim: usize, pairs: usize, seed: u64, scale: f64) -> SampleReport {
    let delta = op.delta();
    sample("cocoercive", op.map().as_ref(), dim, pairs, seed, scale, |x, y, tx, ty| {
        let d = diff(tx, ty);
        delta * dot(&d, &d) - dot(&diff(x, y), &d)
    })
}
