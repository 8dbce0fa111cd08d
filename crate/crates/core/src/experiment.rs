//! Runs a resolved experiment and assembles its report.

use std::collections::BTreeMap;

use serde_json::json;

use crate::config::{CheckKind, Experiment};
use crate::error::Result;
use crate::iterations::{self, Step, Trajectory};
use crate::nat::{BoundedNat, Cap};
use crate::rates;
use crate::verify::{
    self, AsymptoticRegularityMonitor, BoundRow, BoundednessMonitor, CheckReport, DrGapMonitor, Report, Status,
};

/// Largest relative recurrence defect accepted by the `recurrence` check.
pub const RECURRENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub trajectory: Trajectory,
}

/// Monitors that only need one pass over the steps, possibly past n_max.
struct Monitors {
    boundedness: Option<BoundednessMonitor>,
    regularity: Option<AsymptoticRegularityMonitor>,
    dr_gap: Option<DrGapMonitor>,
    plain_km: bool,
}

impl Monitors {
    fn observe(&mut self, s: &Step) {
        if let Some(m) = &mut self.boundedness {
            let mut s = *s;
            if self.plain_km {
                s.beta = 1.0;
            }
            m.observe(&s);
        }
        if let Some(m) = &mut self.regularity {
            m.observe(s);
        }
        if let Some(m) = &mut self.dr_gap {
            m.observe(s);
        }
    }
}

fn wants(exp: &Experiment, c: CheckKind) -> bool {
    exp.config.checks.contains(&c)
}

fn bound_rows(exp: &Experiment, traj: &Trajectory, cap: &Cap) -> BTreeMap<u64, BoundRow> {
    let eff = verify::effective_moduli(&exp.moduli, traj.km_form());
    let mut ks: Vec<u64> = (0..=exp.config.k_max).collect();
    if let Some(m) = &exp.config.metastability {
        ks.push(m.k);
    }
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let kk = BoundedNat::from(k);
            let mu = exp
                .meta_f
                .as_ref()
                .and_then(|f| verify::metastability_rate(traj, &exp.moduli, k, f, cap))
                .map(|v| cap.render(&v));
            let row = BoundRow {
                nu1: cap.render(&rates::nu1(&eff, &kk, cap)),
                nu2: cap.render(&rates::nu2(&eff, &kk, cap)),
                mu,
            };
            (k, row)
        })
        .collect()
}

fn recurrence_check(traj: &Trajectory) -> CheckReport {
    let worst = traj.max_recurrence_residual();
    let status = if worst <= RECURRENCE_TOL { Status::Pass } else { Status::Fail };
    CheckReport::new("recurrence", status).with_detail(json!({
        "max_relative_defect": worst,
        "tolerance": RECURRENCE_TOL,
    }))
}

/// Runs the iteration, then every configured check, in config order.
pub fn execute(exp: &Experiment, cap: &Cap) -> Result<Outcome> {
    let cfg = &exp.config;
    let traj = iterations::run(&exp.scheme, &exp.schedule, &exp.x0, cfg.n_max)?;
    let km = traj.km_form().clone();
    let plain_km = traj.scheme() == "km";
    let eff = verify::effective_moduli(&exp.moduli, &km);

    let mut mons = Monitors {
        boundedness: None,
        regularity: None,
        dr_gap: None,
        plain_km,
    };
    if wants(exp, CheckKind::Boundedness) {
        mons.boundedness = Some(BoundednessMonitor::new(&km.map, &exp.fixed_point, exp.moduli.bound)?);
    }
    if wants(exp, CheckKind::AsymptoticRegularity) && !plain_km {
        mons.regularity = Some(AsymptoticRegularityMonitor::new(&km.map, &eff, cfg.k_max, cap));
    }
    if wants(exp, CheckKind::DrGap) && traj.has_aux() {
        mons.dr_gap = Some(DrGapMonitor::new(&exp.moduli, cfg.k_max, cap));
    }

    // One pass over the stored run, continued by streaming when the checks
    // are asked to reach past n_max.
    let horizon = cfg.check_horizon.unwrap_or(0).max(cfg.n_max);
    let x_last = if horizon > cfg.n_max {
        iterations::stream(&exp.scheme, &exp.schedule, &exp.x0, horizon, &mut |s| mons.observe(s))?
    } else {
        for s in traj.steps() {
            mons.observe(&s);
        }
        traj.last()
    };

    let mut checks = Vec::new();
    for kind in &cfg.checks {
        match kind {
            CheckKind::Recurrence => checks.push(recurrence_check(&traj)),
            CheckKind::Boundedness => {
                if let Some(m) = mons.boundedness.take() {
                    checks.push(m.finish(horizon, x_last.as_slice()));
                }
            }
            CheckKind::AsymptoticRegularity => match mons.regularity.take() {
                Some(m) => checks.extend(m.finish(horizon, x_last.as_slice())),
                None if plain_km => checks.push(
                    CheckReport::new("asymptotic_regularity", Status::Unverifiable)
                        .with_detail(json!({ "reason": "no certified rate for the plain KM baseline" })),
                ),
                None => {}
            },
            CheckKind::DrGap => match mons.dr_gap.take() {
                Some(m) => checks.extend(m.finish(horizon)),
                None if !traj.has_aux() => checks.push(
                    CheckReport::new("dr_gap", Status::Unverifiable)
                        .with_detail(json!({ "reason": "the scheme has no y, z sequences" })),
                ),
                None => {}
            },
            CheckKind::StrongConvergence => match &exp.target {
                Some(t) => checks.push(verify::check_strong_convergence(&traj, t, cfg.tol)),
                None => checks.push(
                    CheckReport::new("strong_convergence", Status::Unverifiable)
                        .with_detail(json!({ "reason": "no target" })),
                ),
            },
            CheckKind::Metastability => match (&cfg.metastability, &exp.meta_f) {
                (Some(m), Some(f)) => checks.extend(verify::check_metastability(&traj, &exp.moduli, m.k, f, cap)),
                _ => checks.push(
                    CheckReport::new("metastability", Status::Unverifiable)
                        .with_detail(json!({ "reason": "no `metastability` section in the config" })),
                ),
            },
        }
    }

    let report = Report {
        experiment: cfg.name.clone(),
        moduli: Some(exp.moduli.clone()),
        bounds: bound_rows(exp, &traj, cap),
        checks,
    };
    Ok(Outcome {
        report,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "name": "h",
                "scheme": "tkm",
                "problem": {{ "kind": "hyperplane", "a": [1, 0, 0], "c": 1 }},
                "instance": "sqrt",
                "n_max": 20000,
                "tol": 0.05,
                "checks": ["recurrence", "boundedness", "asymptotic_regularity", "metastability", "strong_convergence"],
                "metastability": {{ "k": 1, "f": "affine(2,10)" }}
                {extra}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn hyperplane_run_passes() {
        let exp = config("").resolve(None).unwrap();
        let out = execute(&exp, &Cap::default()).unwrap();
        let r = &out.report;
        assert!(r.passed(), "{:#?}", r.checks);
        assert_eq!(r.bounds[&0].nu1, "5626");
        assert!(r.bounds[&1].mu.as_deref().unwrap().starts_with("SATURATED"));
        let names: Vec<_> = r.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names[0], "recurrence");
        assert!(names.contains(&"step_residual[k=0]"));
        assert!(names.contains(&"metastability_x[k=1]"));
        // ν₁(0) = 5626 lies inside the run; ν₂(0) does not.
        let step0 = r.checks.iter().find(|c| c.name == "step_residual[k=0]").unwrap();
        assert_eq!(step0.status, Status::Pass);
        let fix0 = r.checks.iter().find(|c| c.name == "fix_residual[k=0]").unwrap();
        assert_eq!(fix0.status, Status::Unverifiable);
    }

    #[test]
    fn undersized_bound_fails() {
        let exp = config(r#", "x0": [3, 3, 0]"#).resolve(None).unwrap();
        let out = execute(&exp, &Cap::default()).unwrap();
        assert!(!out.report.passed());
        let b = out.report.checks.iter().find(|c| c.name == "boundedness").unwrap();
        assert_eq!(b.status, Status::Fail);
    }

    #[test]
    fn check_horizon_extends_the_monitors() {
        let exp = config(r#", "check_horizon": 30000"#).resolve(None).unwrap();
        let out = execute(&exp, &Cap::default()).unwrap();
        assert_eq!(out.trajectory.n_max(), 20000);
        let b = out.report.checks.iter().find(|c| c.name == "boundedness").unwrap();
        assert_eq!(b.detail.as_ref().unwrap()["checked"], 30001);
    }
}
