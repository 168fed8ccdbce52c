//! JSON documents emitted by the subcommands. Each carries `schema_version`
//! and has a matching schema under docs/schemas.

use plg_core::ergodicity::DriftReport;
use plg_core::output::{BetweenWithin, SummaryReport};
use plg_core::verification::CheckResult;
use plg_core::ModelKind;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    /// Samples file the summary was computed from, if any.
    pub source: Option<String>,
    pub summary: SummaryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: String,
    pub model: Option<ModelKind>,
    pub chains: Vec<ChainSummary>,
    /// Present when there are at least two chains.
    pub between_within: Option<Vec<BetweenWithin>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFile {
    pub schema_version: String,
    #[serde(flatten)]
    pub report: DriftReport,
    /// V at the penalized-regression starting value.
    pub default_start_v: f64,
    /// Whether that start lies in the small set {V ≤ d}.
    pub default_start_in_small_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: String,
    pub suite: String,
    pub seed: u64,
    pub mutation: Option<String>,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}
