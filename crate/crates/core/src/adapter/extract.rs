//! Pulling canonical alarm identifiers out of analyzer output.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::analysis::{AlarmId, AlarmSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExtractionMode {
    /// Every line of stdout and stderr is matched; capture group 1 is the alarm.
    RegexLines { pattern: String },
    /// Stdout is a JSON document; `pointer` selects the alarm array. Items
    /// are identified by the values at `item_fields` (joined with ` @ `), or
    /// by the item itself when no fields are given. Non-string values are
    /// written as compact JSON.
    JsonPointer {
        pointer: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        item_fields: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormStep {
    StripWhitespace,
    CollapseSpaces,
    /// Removes `file:line[:col]` / `file:line.col-col` suffixes and `line N`.
    DropLineNumbers,
}

fn default_steps() -> Vec<NormStep> {
    vec![
        NormStep::DropLineNumbers,
        NormStep::CollapseSpaces,
        NormStep::StripWhitespace,
    ]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    #[serde(flatten)]
    pub mode: ExtractionMode,
    #[serde(default = "default_steps")]
    pub normalization: Vec<NormStep>,
}

impl ExtractionRule {
    pub fn regex_lines(pattern: &str) -> Self {
        ExtractionRule {
            mode: ExtractionMode::RegexLines {
                pattern: pattern.to_string(),
            },
            normalization: default_steps(),
        }
    }

    pub fn compile(&self) -> Result<Extractor, AdapterError> {
        let mode = match &self.mode {
            ExtractionMode::RegexLines { pattern } => {
                let re = Regex::new(pattern).map_err(|e| AdapterError::BadPattern(e.to_string()))?;
                if re.captures_len() != 2 {
                    return Err(AdapterError::BadPattern(format!(
                        "pattern must have exactly one capture group, found {}",
                        re.captures_len() - 1
                    )));
                }
                Compiled::Regex(re)
            }
            ExtractionMode::JsonPointer { pointer, item_fields } => {
                if let Some(bad) = std::iter::once(pointer)
                    .chain(item_fields)
                    .find(|p| !(p.is_empty() || p.starts_with('/')))
                {
                    return Err(AdapterError::BadPattern(format!(
                        "json pointer `{bad}` must start with '/'"
                    )));
                }
                Compiled::Json(pointer.clone(), item_fields.clone())
            }
        };
        Ok(Extractor {
            mode,
            steps: self.normalization.clone(),
        })
    }
}

#[derive(Clone, Debug)]
enum Compiled {
    Regex(Regex),
    Json(String, Vec<String>),
}

fn json_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Clone, Debug)]
pub struct Extractor {
    mode: Compiled,
    steps: Vec<NormStep>,
}

fn line_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r":\d+(?:[.:]\d+)*(?:-\d+(?:[.:]\d+)*)?|\bline\s+\d+\b").expect("static regex"))
}

fn space_run_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s{2,}").expect("static regex"))
}

fn apply(step: NormStep, s: &str) -> String {
    match step {
        NormStep::StripWhitespace => s.trim().to_string(),
        NormStep::CollapseSpaces => space_run_re().replace_all(s, " ").into_owned(),
        NormStep::DropLineNumbers => line_number_re().replace_all(s, "").into_owned(),
    }
}

/// Applies `steps` in order until nothing changes. Every step only deletes
/// or shrinks text, so this terminates, and the result is a fixpoint, which
/// makes normalization idempotent.
pub fn normalize(steps: &[NormStep], raw: &str) -> String {
    let mut cur = raw.to_string();
    loop {
        let next = steps.iter().fold(cur.clone(), |acc, st| apply(*st, &acc));
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

impl Extractor {
    pub fn extract(&self, stdout: &str, stderr: &str) -> Result<AlarmSet, AdapterError> {
        let raw: Vec<String> = match &self.mode {
            Compiled::Regex(re) => stdout
                .lines()
                .chain(stderr.lines())
                .filter_map(|line| re.captures(line).and_then(|c| c.get(1)).map(|m| m.as_str().to_string()))
                .collect(),
            Compiled::Json(pointer, fields) => {
                let doc: serde_json::Value =
                    serde_json::from_str(stdout).map_err(|e| AdapterError::Output(e.to_string()))?;
                let arr = doc
                    .pointer(pointer)
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| AdapterError::Output(format!("no array at `{pointer}`")))?;
                arr.iter()
                    .map(|item| {
                        if fields.is_empty() {
                            return Ok(json_text(item));
                        }
                        fields
                            .iter()
                            .map(|f| {
                                item.pointer(f)
                                    .map(json_text)
                                    .ok_or_else(|| AdapterError::Output(format!("alarm item lacks `{f}`")))
                            })
                            .collect::<Result<Vec<_>, _>>()
                            .map(|parts| parts.join(" @ "))
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        Ok(raw
            .iter()
            .map(|s| normalize(&self.steps, s))
            .filter(|s| !s.is_empty())
            .map(AlarmId::new)
            .collect())
    }
}
