//! Checks of the certified bounds against trajectories and synthetic recurrences.
//!
//! Trajectory checks come in two forms: monitors that observe a run step by
//! step (so runs longer than memory allows can be checked through
//! [`crate::iterations::stream`]) and `check_*` functions that feed a stored
//! [`Trajectory`](crate::iterations::Trajectory) through the same monitors.

mod bounds;
mod meta;
mod oracles;
mod sampling;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use bounds::{
    check_asymptotic_regularity, check_boundedness, check_dr_gap, check_strong_convergence, effective_moduli,
    AsymptoticRegularityMonitor, BoundednessMonitor, ConvergenceMonitor, DrGapMonitor,
};
pub use meta::{check_metastability, find_metastability_witness, find_witness, metastability_rate, WitnessSearch};
pub use oracles::{
    oracle_lemma_sigma, oracle_lemma_sigma_with, oracle_lemma_theta, oracle_lemma_theta_with, OracleReport, OracleViolation,
    Threshold, DEFAULT_SEED,
};
pub use sampling::{sample_cocoercive, sample_firmly_nonexpansive, sample_nonexpansive, SampleReport};

use crate::moduli::QuantitativeModuli;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The certified bound saturated or lies beyond the run.
    Unverifiable,
}

/// One entry of the `checks` array of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, status: Status) -> Self {
        CheckReport {
            name: name.into(),
            status,
            witness: None,
            violation: None,
            detail: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Rate values at one k, rendered as decimals or `SATURATED(cap)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub nu1: String,
    pub nu2: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
}

/// The JSON report of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub moduli: Option<QuantitativeModuli>,
    pub bounds: BTreeMap<u64, BoundRow>,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(CheckReport::failed)
    }
}
