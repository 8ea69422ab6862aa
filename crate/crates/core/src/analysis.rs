//! What one analyzer invocation produces, and the black-box analyzer interface.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lattice::Setting;

/// Canonical alarm identifier; equality is exact string equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlarmId(String);

impl AlarmId {
    pub fn new(id: impl Into<String>) -> Self {
        AlarmId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AlarmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AlarmId {
    fn from(s: &str) -> Self {
        AlarmId(s.to_string())
    }
}

pub type AlarmSet = BTreeSet<AlarmId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    Crash,
    ParseError,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::Timeout => "timeout",
            FailureReason::Crash => "crash",
            FailureReason::ParseError => "parse_error",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutcomeStatus {
    Completed { alarms: AlarmSet },
    Failed { reason: FailureReason },
}

/// Result of analyzing one setting. `wall_time` is whatever clock the analyzer
/// runs on: measured seconds for real processes, virtual seconds for the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOutcome {
    pub setting: Setting,
    pub wall_time: f64,
    pub status: OutcomeStatus,
}

impl AnalysisOutcome {
    pub fn completed(setting: Setting, wall_time: f64, alarms: AlarmSet) -> Self {
        AnalysisOutcome {
            setting,
            wall_time,
            status: OutcomeStatus::Completed { alarms },
        }
    }

    pub fn failed(setting: Setting, wall_time: f64, reason: FailureReason) -> Self {
        AnalysisOutcome {
            setting,
            wall_time,
            status: OutcomeStatus::Failed { reason },
        }
    }

    pub fn alarms(&self) -> Option<&AlarmSet> {
        match &self.status {
            OutcomeStatus::Completed { alarms } => Some(alarms),
            OutcomeStatus::Failed { .. } => None,
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self.status, OutcomeStatus::Completed { .. })
    }
}

/// A static analyzer seen as a function from settings to alarm sets.
///
/// Implementations never fail past this boundary: every problem is encoded in
/// the returned [`OutcomeStatus`].
pub trait Analyzer: Sync {
    fn analyze(&self, p: &Setting, deadline_seconds: f64) -> AnalysisOutcome;

    /// Alarm count under `p` when it can be obtained without running an
    /// analysis (simulators). Used for round reports only.
    fn peek_alarm_count(&self, _p: &Setting) -> Option<usize> {
        None
    }

    /// Analyzer argument vector for `p`, when the analyzer is a real command.
    fn render(&self, _p: &Setting) -> Option<Vec<String>> {
        None
    }
}
