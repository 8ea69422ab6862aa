//! Driving a real analyzer binary as an [`Analyzer`].

mod extract;
mod process;
mod render;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{normalize, ExtractionMode, ExtractionRule, Extractor, NormStep};
pub use process::{run_with_deadline, ProcessOutput};
pub use render::{render_command, render_params, ArgStyle, EmptySet, RenderRule, PLACEHOLDERS};

use crate::analysis::{AnalysisOutcome, Analyzer, FailureReason};
use crate::lattice::{Profile, ProfileError, Setting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("command template is empty")]
    EmptyCommand,
    #[error("unknown placeholder `{{{0}}}` in command template")]
    UnknownPlaceholder(String),
    #[error("placeholder `{{{0}}}` expands to several arguments and must be a whole argument")]
    EmbeddedListPlaceholder(String),
    #[error("no rendering rule for parameter `{0}`")]
    MissingRendering(String),
    #[error("rendering rule for `{0}` names no parameter")]
    StrayRendering(String),
    #[error("rendering rule for `{name}` does not fit a {kind} parameter")]
    RuleMismatch { name: String, kind: &'static str },
    #[error("parameter `{0}` is infinite and cannot be passed to an analyzer")]
    InfinityNotRenderable(String),
    #[error("bad extraction pattern: {0}")]
    BadPattern(String),
    #[error("unusable analyzer output: {0}")]
    Output(String),
    #[error("timeout_grace_seconds must be finite and non-negative, got {0}")]
    BadGrace(f64),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// The program under analysis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramRef {
    pub id: String,
    pub sources: Vec<String>,
}

fn default_grace() -> f64 {
    1.0
}

fn default_exit_codes() -> Vec<i32> {
    vec![0]
}

/// Everything needed to call one analyzer binary.
///
/// `command` is an argument template; `{program}` expands to the source
/// files, `{params}` to the rendered parameters, `{program_id}` to the id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerProfile {
    pub command: Vec<String>,
    pub renderings: BTreeMap<String, RenderRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env: BTreeMap<String, String>,
    pub extraction: ExtractionRule,
    /// Allowance past the deadline for killing and reaping the process group.
    #[serde(default = "default_grace")]
    pub timeout_grace_seconds: f64,
    /// Exit codes whose output is parsed. Anything else counts as a crash.
    #[serde(default = "default_exit_codes")]
    pub accepted_exit_codes: Vec<i32>,
}

impl AnalyzerProfile {
    pub fn validate(&self, params: &Profile) -> Result<(), AdapterError> {
        render::check_template(&self.command)?;
        if !(self.timeout_grace_seconds.is_finite() && self.timeout_grace_seconds >= 0.0) {
            return Err(AdapterError::BadGrace(self.timeout_grace_seconds));
        }
        for spec in params.specs() {
            self.renderings
                .get(&spec.name)
                .ok_or_else(|| AdapterError::MissingRendering(spec.name.clone()))?
                .check_against(spec)?;
        }
        if let Some(stray) = self.renderings.keys().find(|k| params.index_of(k).is_none()) {
            return Err(AdapterError::StrayRendering(stray.clone()));
        }
        self.extraction.compile()?;
        Ok(())
    }
}

pub struct ExternalAnalyzer {
    profile: AnalyzerProfile,
    params: Profile,
    program: ProgramRef,
    extractor: Extractor,
    scratch_root: PathBuf,
}

/// Directory under which per-invocation scratch directories are created.
/// `LATUNE_TMPDIR` overrides the system default.
pub fn scratch_root() -> PathBuf {
    std::env::var_os("LATUNE_TMPDIR")
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

impl ExternalAnalyzer {
    pub fn new(profile: AnalyzerProfile, params: Profile, program: ProgramRef) -> Result<Self, AdapterError> {
        profile.validate(&params)?;
        let extractor = profile.extraction.compile()?;
        Ok(ExternalAnalyzer {
            profile,
            params,
            program,
            extractor,
            scratch_root: scratch_root(),
        })
    }

    pub fn profile(&self) -> &AnalyzerProfile {
        &self.profile
    }

    pub fn command_for(&self, p: &Setting) -> Result<Vec<String>, AdapterError> {
        render_command(&self.profile, &self.params, &self.program, p)
    }
}

impl Analyzer for ExternalAnalyzer {
    fn analyze(&self, p: &Setting, deadline_seconds: f64) -> AnalysisOutcome {
        let crash = |t: f64| AnalysisOutcome::failed(p.clone(), t, FailureReason::Crash);
        let argv = match self.command_for(p) {
            Ok(a) => a,
            Err(_) => return crash(0.0),
        };
        if deadline_seconds <= 0.0 {
            return AnalysisOutcome::failed(p.clone(), 0.0, FailureReason::Timeout);
        }
        let deadline = (deadline_seconds.is_finite()).then(|| Duration::from_secs_f64(deadline_seconds));

        // Analyzers may drop files in their working directory.
        let scratch;
        let workdir = match &self.profile.workdir {
            Some(d) => d.clone(),
            None => {
                scratch = match tempfile::Builder::new()
                    .prefix("latune-")
                    .tempdir_in(&self.scratch_root)
                {
                    Ok(d) => d,
                    Err(_) => return crash(0.0),
                };
                scratch.path().to_path_buf()
            }
        };

        let out = match run_with_deadline(&argv, Some(&workdir), &self.profile.env, deadline) {
            Ok(o) => o,
            Err(_) => return crash(0.0),
        };
        let t = out.elapsed.as_secs_f64();
        if out.timed_out {
            return AnalysisOutcome::failed(p.clone(), t, FailureReason::Timeout);
        }
        let accepted = out
            .status
            .and_then(|s| s.code())
            .is_some_and(|c| self.profile.accepted_exit_codes.contains(&c));
        if !accepted {
            return crash(t);
        }
        match self.extractor.extract(&out.stdout, &out.stderr) {
            Ok(alarms) => AnalysisOutcome::completed(p.clone(), t, alarms),
            Err(_) => AnalysisOutcome::failed(p.clone(), t, FailureReason::ParseError),
        }
    }

    fn render(&self, p: &Setting) -> Option<Vec<String>> {
        self.command_for(p).ok()
    }
}
