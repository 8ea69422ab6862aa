//! Tuning configuration files (JSON, schema version 1).
//!
//! Parameter values are written per type: integers as numbers or `"inf"`,
//! booleans as `true`/`false` (or 0/1), enums as a label (or index), string
//! sets as a 0/1 array (or an array of member names). Serialization always
//! produces the first form, which is the canonical one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::adapter::{AnalyzerProfile, ExternalAnalyzer, ProgramRef};
use crate::analysis::{AnalysisOutcome, Analyzer};
use crate::distributions::{DeltaDist, JointDistribution, ParamDistribution, RngSeed};
use crate::engine::HyperParams;
use crate::lattice::{BitSet, Extended, ParamSpec, ParamType, ParamValue, Profile, Setting};
use crate::sim::{SimAlarm, SimModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("at `{field}`: {message}")]
    Syntax { field: String, message: String },
    #[error("`{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Dotted path of the offending field, when known.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Syntax { field, .. } | ConfigError::Field { field, .. } => Some(field),
        }
    }
}

/// On-disk form, before semantic validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: u32,
    pub program: ProgramRef,
    pub analyzer: RawAnalyzer,
    pub profile: Vec<ParamSpec>,
    pub initial_distribution: Map<String, Value>,
    #[serde(default)]
    pub hyper: HyperParams,
    pub budget_seconds: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_cap_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_ladder: Option<Vec<Map<String, Value>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawAnalyzer {
    External(AnalyzerProfile),
    Simulated { model: RawSimModel },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimModel {
    pub base_cost_seconds: f64,
    /// Missing parameters weigh 0.
    #[serde(default)]
    pub cost_weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_cap: Option<f64>,
    pub alarms: Vec<RawSimAlarm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimAlarm {
    pub id: String,
    /// Parameters left out sit at bottom.
    pub thresholds: Vec<Map<String, Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParamDist {
    base: Value,
    delta: DeltaDist<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyzerSpec {
    External(AnalyzerProfile),
    Simulated(SimModel),
}

/// A fully validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub program: ProgramRef,
    pub analyzer: AnalyzerSpec,
    pub profile: Profile,
    pub initial: JointDistribution<f64>,
    pub hyper: HyperParams,
    pub budget_seconds: f64,
    pub seed: RngSeed,
    pub report_path: Option<PathBuf>,
    pub baseline_cap_seconds: Option<f64>,
    pub expert_ladder: Option<Vec<Setting>>,
}

/// Either kind of analyzer behind one [`Analyzer`] impl.
pub enum AnalyzerHandle {
    External(Box<ExternalAnalyzer>),
    Simulated(SimModel),
}

impl Analyzer for AnalyzerHandle {
    fn analyze(&self, p: &Setting, deadline_seconds: f64) -> AnalysisOutcome {
        match self {
            AnalyzerHandle::External(a) => a.analyze(p, deadline_seconds),
            AnalyzerHandle::Simulated(m) => m.analyze(p, deadline_seconds),
        }
    }

    fn peek_alarm_count(&self, p: &Setting) -> Option<usize> {
        match self {
            AnalyzerHandle::External(a) => a.peek_alarm_count(p),
            AnalyzerHandle::Simulated(m) => m.peek_alarm_count(p),
        }
    }

    fn render(&self, p: &Setting) -> Option<Vec<String>> {
        match self {
            AnalyzerHandle::External(a) => Analyzer::render(a.as_ref(), p),
            AnalyzerHandle::Simulated(m) => Analyzer::render(m, p),
        }
    }
}

// ---- parameter values ----

pub fn value_from_json(spec: &ParamSpec, v: &Value) -> Result<ParamValue, String> {
    let bad = || format!("{v} is not a valid {} value", spec.ptype.kind_name());
    let out = match (&spec.ptype, v) {
        (ParamType::Integer, Value::String(s)) if s == "inf" => ParamValue::INFINITY,
        (ParamType::Integer, Value::Number(n)) => ParamValue::int(n.as_u64().ok_or_else(bad)?),
        (ParamType::Boolean, Value::Bool(b)) => ParamValue::Bool(*b),
        (ParamType::Boolean, Value::Number(n)) => match n.as_u64() {
            Some(0) => ParamValue::Bool(false),
            Some(1) => ParamValue::Bool(true),
            _ => return Err(bad()),
        },
        (ParamType::OrderedEnum { labels }, Value::String(s)) => ParamValue::Enum(
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| format!("unknown label {s:?}; expected one of {labels:?}"))?,
        ),
        (ParamType::OrderedEnum { labels }, Value::Number(n)) => {
            let i = n.as_u64().filter(|i| (*i as usize) < labels.len()).ok_or_else(bad)?;
            ParamValue::Enum(i as usize)
        }
        (ParamType::StringSet { members }, Value::Array(items)) => {
            if items.iter().all(Value::is_string) {
                let mut bits = vec![false; members.len()];
                for it in items {
                    let s = it.as_str().expect("checked above");
                    let i = members
                        .iter()
                        .position(|m| m == s)
                        .ok_or_else(|| format!("unknown member {s:?}; expected one of {members:?}"))?;
                    bits[i] = true;
                }
                ParamValue::Bits(BitSet::new(bits))
            } else {
                if items.len() != members.len() {
                    return Err(format!("expected {} bits, got {}", members.len(), items.len()));
                }
                let bits = items
                    .iter()
                    .map(|b| match b {
                        Value::Bool(b) => Ok(*b),
                        Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
                        Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
                        _ => Err(bad()),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ParamValue::Bits(BitSet::new(bits))
            }
        }
        _ => return Err(bad()),
    };
    spec.check(&out).map_err(|e| e.to_string())?;
    Ok(out)
}

pub fn value_to_json(spec: &ParamSpec, v: &ParamValue) -> Value {
    match (v, &spec.ptype) {
        (ParamValue::Int(Extended::Infinity), _) => Value::from("inf"),
        (ParamValue::Int(Extended::Finite(n)), _) => Value::from(*n),
        (ParamValue::Bool(b), _) => Value::from(*b),
        (ParamValue::Enum(i), ParamType::OrderedEnum { labels }) => Value::from(labels[*i].clone()),
        (ParamValue::Enum(i), _) => Value::from(*i),
        (ParamValue::Bits(bits), _) => Value::Array(bits.bits().iter().map(|b| Value::from(u8::from(*b))).collect()),
    }
}

/// Reads a name→value object. Names left out take their value from
/// `defaults`, or are an error when there are none.
pub fn setting_from_json(
    profile: &Profile,
    obj: &Map<String, Value>,
    defaults: Option<&Setting>,
    field: &str,
) -> Result<Setting, ConfigError> {
    if let Some(stray) = obj.keys().find(|k| profile.index_of(k).is_none()) {
        return Err(ConfigError::field(format!("{field}.{stray}"), "no such parameter"));
    }
    let values = profile
        .specs()
        .iter()
        .enumerate()
        .map(|(i, spec)| match (obj.get(&spec.name), defaults) {
            (Some(v), _) => {
                value_from_json(spec, v).map_err(|m| ConfigError::field(format!("{field}.{}", spec.name), m))
            }
            (None, Some(d)) => Ok(d.values()[i].clone()),
            (None, None) => Err(ConfigError::field(format!("{field}.{}", spec.name), "missing value")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Setting::new(values))
}

pub fn setting_to_json(profile: &Profile, p: &Setting) -> Map<String, Value> {
    profile
        .specs()
        .iter()
        .zip(p.values())
        .map(|(spec, v)| (spec.name.clone(), value_to_json(spec, v)))
        .collect()
}

// ---- parsing ----

fn positive(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::field(
            field,
            format!("must be a positive finite number, got {x}"),
        ))
    }
}

fn deserialize<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = match (prefix.is_empty(), path.as_str()) {
            (true, _) => path,
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{path}"),
        };
        ConfigError::Syntax {
            field,
            message: e.into_inner().to_string(),
        }
    })
}

impl TuneConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            field: ".".into(),
            message: e.to_string(),
        })?;
        if let Some(v) = value.get("schema_version") {
            if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) {
                return Err(ConfigError::field(
                    "schema_version",
                    format!("unsupported version {v}; this build reads {SCHEMA_VERSION}"),
                ));
            }
        }
        let raw: RawConfig = deserialize(value, "")?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::field(
                "schema_version",
                format!("unsupported version {}", raw.schema_version),
            ));
        }
        let profile = Profile::new(raw.profile).map_err(|e| ConfigError::field("profile", e))?;
        if profile.is_empty() {
            return Err(ConfigError::field("profile", "needs at least one parameter"));
        }

        if let Some(stray) = raw.initial_distribution.keys().find(|k| profile.index_of(k).is_none()) {
            return Err(ConfigError::field(
                format!("initial_distribution.{stray}"),
                "no such parameter",
            ));
        }
        let mut params = Vec::with_capacity(profile.len());
        for spec in profile.specs() {
            let field = format!("initial_distribution.{}", spec.name);
            let entry = raw
                .initial_distribution
                .get(&spec.name)
                .ok_or_else(|| ConfigError::field(&field, format!("missing entry for parameter `{}`", spec.name)))?;
            let rd: RawParamDist = deserialize(entry.clone(), &field)?;
            let base = value_from_json(spec, &rd.base).map_err(|m| ConfigError::field(format!("{field}.base"), m))?;
            params
                .push(ParamDistribution::new(spec.clone(), base, rd.delta).map_err(|e| ConfigError::field(&field, e))?);
        }
        let initial = JointDistribution::new(params);

        raw.hyper.validate().map_err(|e| match e {
            crate::engine::EngineError::Hyper { field, reason } => ConfigError::field(format!("hyper.{field}"), reason),
            other => ConfigError::field("hyper", other),
        })?;
        let budget_seconds = positive("budget_seconds", raw.budget_seconds)?;
        let baseline_cap_seconds = raw
            .baseline_cap_seconds
            .map(|c| positive("baseline_cap_seconds", c))
            .transpose()?;

        if raw.program.id.is_empty() {
            return Err(ConfigError::field("program.id", "must not be empty"));
        }
        let analyzer = match raw.analyzer {
            RawAnalyzer::External(ap) => {
                if raw.program.sources.is_empty() {
                    return Err(ConfigError::field(
                        "program.sources",
                        "an external analyzer needs at least one source",
                    ));
                }
                ap.validate(&profile).map_err(|e| ConfigError::field("analyzer", e))?;
                AnalyzerSpec::External(ap)
            }
            RawAnalyzer::Simulated { model } => AnalyzerSpec::Simulated(sim_from_raw(&profile, model)?),
        };

        let expert_ladder = raw
            .expert_ladder
            .map(|rungs| ladder_from_json(&profile, &rungs))
            .transpose()?;

        Ok(TuneConfig {
            program: raw.program,
            analyzer,
            profile,
            initial,
            hyper: raw.hyper,
            budget_seconds,
            seed: RngSeed(raw.seed),
            report_path: raw.report_path,
            baseline_cap_seconds,
            expert_ladder,
        })
    }

    pub fn to_raw(&self) -> RawConfig {
        let (base, deltas) = self.initial.extract();
        let initial_distribution = self
            .profile
            .specs()
            .iter()
            .zip(base.values())
            .zip(deltas)
            .map(|((spec, b), d)| {
                let rd = RawParamDist {
                    base: value_to_json(spec, b),
                    delta: d,
                };
                (
                    spec.name.clone(),
                    serde_json::to_value(rd).expect("plain data serializes"),
                )
            })
            .collect();
        let analyzer = match &self.analyzer {
            AnalyzerSpec::External(ap) => RawAnalyzer::External(ap.clone()),
            AnalyzerSpec::Simulated(m) => RawAnalyzer::Simulated {
                model: sim_to_raw(&self.profile, m),
            },
        };
        RawConfig {
            schema_version: SCHEMA_VERSION,
            program: self.program.clone(),
            analyzer,
            profile: self.profile.specs().to_vec(),
            initial_distribution,
            hyper: self.hyper,
            budget_seconds: self.budget_seconds,
            seed: self.seed.0,
            report_path: self.report_path.clone(),
            baseline_cap_seconds: self.baseline_cap_seconds,
            expert_ladder: self
                .expert_ladder
                .as_ref()
                .map(|l| l.iter().map(|p| setting_to_json(&self.profile, p)).collect()),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("plain data serializes")
    }

    /// Builds the analyzer. Relative source paths and workdirs of external
    /// analyzers are resolved against `base_dir`.
    pub fn build_analyzer(&self, base_dir: &Path) -> Result<AnalyzerHandle, ConfigError> {
        match &self.analyzer {
            AnalyzerSpec::Simulated(m) => Ok(AnalyzerHandle::Simulated(m.clone())),
            AnalyzerSpec::External(ap) => {
                let resolve = |s: &str| {
                    let p = Path::new(s);
                    if p.is_absolute() {
                        s.to_string()
                    } else {
                        base_dir.join(p).to_string_lossy().into_owned()
                    }
                };
                let program = ProgramRef {
                    id: self.program.id.clone(),
                    sources: self.program.sources.iter().map(|s| resolve(s)).collect(),
                };
                let mut ap = ap.clone();
                ap.workdir = ap.workdir.map(|w| base_dir.join(w));
                ExternalAnalyzer::new(ap, self.profile.clone(), program)
                    .map(|a| AnalyzerHandle::External(Box::new(a)))
                    .map_err(|e| ConfigError::field("analyzer", e))
            }
        }
    }

    pub fn base(&self) -> Setting {
        self.initial.extract().0
    }
}

fn ladder_from_json(profile: &Profile, rungs: &[Map<String, Value>]) -> Result<Vec<Setting>, ConfigError> {
    if rungs.is_empty() {
        return Err(ConfigError::field("expert_ladder", "must have at least one rung"));
    }
    let bottom = profile.bottom();
    let ladder = rungs
        .iter()
        .enumerate()
        .map(|(i, r)| setting_from_json(profile, r, Some(&bottom), &format!("expert_ladder[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, w) in ladder.windows(2).enumerate() {
        if w[0] == w[1] || !w[0].leq(&w[1]).unwrap_or(false) {
            return Err(ConfigError::field(
                format!("expert_ladder[{}]", i + 1),
                "rungs must strictly increase in the lattice order",
            ));
        }
    }
    Ok(ladder)
}

fn sim_from_raw(profile: &Profile, raw: RawSimModel) -> Result<SimModel, ConfigError> {
    let prefix = "analyzer.model";
    if let Some(stray) = raw.cost_weights.keys().find(|k| profile.index_of(k).is_none()) {
        return Err(ConfigError::field(
            format!("{prefix}.cost_weights.{stray}"),
            "no such parameter",
        ));
    }
    let weights = profile
        .specs()
        .iter()
        .map(|s| raw.cost_weights.get(&s.name).copied().unwrap_or(0.0))
        .collect();
    let bottom = profile.bottom();
    let mut alarms = Vec::with_capacity(raw.alarms.len());
    for (i, a) in raw.alarms.into_iter().enumerate() {
        let thresholds = a
            .thresholds
            .iter()
            .enumerate()
            .map(|(j, t)| {
                setting_from_json(
                    profile,
                    t,
                    Some(&bottom),
                    &format!("{prefix}.alarms[{i}].thresholds[{j}]"),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        alarms.push(SimAlarm {
            id: a.id.as_str().into(),
            thresholds,
        });
    }
    if let Some(cap) = raw.failure_cap {
        positive(&format!("{prefix}.failure_cap"), cap)?;
    }
    SimModel::new(profile.clone(), alarms, raw.base_cost_seconds, weights, raw.failure_cap)
        .map_err(|e| ConfigError::field(prefix, e))
}

fn sim_to_raw(profile: &Profile, m: &SimModel) -> RawSimModel {
    RawSimModel {
        base_cost_seconds: m.base_cost_seconds(),
        cost_weights: profile
            .specs()
            .iter()
            .zip(m.cost_weights())
            .map(|(s, w)| (s.name.clone(), *w))
            .collect(),
        failure_cap: m.failure_cap(),
        alarms: m
            .alarms()
            .iter()
            .map(|a| RawSimAlarm {
                id: a.id.as_str().to_string(),
                thresholds: a.thresholds.iter().map(|t| setting_to_json(profile, t)).collect(),
            })
            .collect(),
    }
}

/// Writes a generated simulator benchmark as a config with the generator's
/// default initial distribution.
pub fn sim_config(
    id: &str,
    model: &SimModel,
    initial: &JointDistribution<f64>,
    budget_seconds: f64,
    seed: u64,
    expert_ladder: Option<Vec<Setting>>,
) -> TuneConfig {
    TuneConfig {
        program: ProgramRef {
            id: id.to_string(),
            sources: Vec::new(),
        },
        analyzer: AnalyzerSpec::Simulated(model.clone()),
        profile: model.profile().clone(),
        initial: initial.clone(),
        hyper: HyperParams::default(),
        budget_seconds,
        seed: RngSeed(seed),
        report_path: None,
        baseline_cap_seconds: None,
        expert_ladder,
    }
}

pub const PRESET_NAMES: [&str; 2] = ["framac-eva", "mopsa"];

/// Bundled presets: complete configs carrying the published initial
/// distributions. The alarm extraction patterns are starting points and
/// need checking against the installed analyzer version.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "framac-eva" => Some(include_str!("../presets/framac-eva.json")),
        "mopsa" => Some(include_str!("../presets/mopsa.json")),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<TuneConfig> {
    preset_text(name).map(|t| TuneConfig::from_json_str(t).expect("bundled preset is valid"))
}
