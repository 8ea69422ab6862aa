//! Line-delimited JSON run reports.
//!
//! Each line is one self-describing record tagged with `record` and
//! `schema_version`. Lines are flushed as they are written so an interrupted
//! run still leaves a readable prefix.

use std::io::{self, BufRead, Write};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{AnalysisOutcome, OutcomeStatus};
use crate::config::{setting_from_json, setting_to_json, ConfigError};
use crate::engine::{
    score_final, tune_with, EngineError, RoundReport, Termination, TuneEvent, TuneRequest, TuneResult,
};
use crate::lattice::{Profile, Setting};
use crate::scalar::Scalar;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn outcome_json(profile: &Profile, o: &AnalysisOutcome, with_setting: bool) -> Value {
    let mut m = Map::new();
    if with_setting {
        m.insert("setting".into(), Value::Object(setting_to_json(profile, &o.setting)));
    }
    m.insert("wall_time_seconds".into(), json!(o.wall_time));
    match &o.status {
        OutcomeStatus::Completed { alarms } => {
            m.insert("status".into(), json!("completed"));
            m.insert("alarm_count".into(), json!(alarms.len()));
            m.insert("alarms".into(), json!(alarms));
        }
        OutcomeStatus::Failed { reason } => {
            m.insert("status".into(), json!("failed"));
            m.insert("reason".into(), json!(reason));
        }
    }
    Value::Object(m)
}

fn header(kind: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("record".into(), json!(kind));
    m.insert("schema_version".into(), json!(REPORT_SCHEMA_VERSION));
    m
}

pub fn baseline_record(profile: &Profile, o: &AnalysisOutcome) -> Value {
    let mut m = header("baseline");
    m.insert("a_uni_size".into(), json!(o.alarms().map(|a| a.len())));
    m.insert("time_seconds".into(), json!(o.wall_time));
    if let Value::Object(rest) = outcome_json(profile, o, true) {
        m.extend(rest);
    }
    Value::Object(m)
}

pub fn round_record<S: Scalar>(profile: &Profile, r: &RoundReport<S>) -> Value {
    let mut m = header("round");
    m.insert("round_index".into(), json!(r.round_index));
    m.insert("round_budget_seconds".into(), json!(r.round_budget_seconds));
    m.insert(
        "sampled".into(),
        Value::Array(
            r.sampled
                .iter()
                .map(|p| Value::Object(setting_to_json(profile, p)))
                .collect(),
        ),
    );
    m.insert(
        "outcomes".into(),
        Value::Array(r.outcomes.iter().map(|o| outcome_json(profile, o, false)).collect()),
    );
    m.insert("completed".into(), json!(r.completed()));
    m.insert("eta".into(), json!(r.eta.as_f64()));
    m.insert(
        "base_after".into(),
        Value::Object(setting_to_json(profile, &r.base_after)),
    );
    m.insert(
        "delta_after".into(),
        Value::Object(
            profile
                .specs()
                .iter()
                .zip(&r.delta_after)
                .map(|(s, d)| {
                    (
                        s.name.clone(),
                        serde_json::to_value(d.cast::<f64>()).expect("plain data"),
                    )
                })
                .collect(),
        ),
    );
    m.insert("alarms_under_base_after".into(), json!(r.alarms_under_base_after));
    m.insert("remaining_budget_seconds".into(), json!(r.remaining_budget_seconds));
    m.insert("elapsed_seconds".into(), json!(r.elapsed_seconds));
    m.insert("anomalies".into(), json!(r.anomalies));
    Value::Object(m)
}

pub struct FinalInfo<'a> {
    pub argv: Option<Vec<String>>,
    pub scoring: Option<&'a AnalysisOutcome>,
}

pub fn final_record<S>(profile: &Profile, res: &TuneResult<S>, info: &FinalInfo<'_>) -> Value {
    let mut m = header("final");
    m.insert(
        "final_setting".into(),
        Value::Object(setting_to_json(profile, &res.final_setting)),
    );
    m.insert("argv".into(), json!(info.argv));
    m.insert("termination".into(), json!(res.termination));
    m.insert("rounds".into(), json!(res.rounds.len()));
    m.insert("a_uni_size".into(), json!(res.a_uni_size));
    m.insert(
        "baseline_alarm_count".into(),
        json!(res.baseline.alarms().map(|a| a.len())),
    );
    m.insert(
        "final_alarm_count".into(),
        json!(info.scoring.and_then(|o| o.alarms()).map(|a| a.len())),
    );
    m.insert(
        "final_analysis".into(),
        json!(info.scoring.map(|o| outcome_json(profile, o, false))),
    );
    m.insert("anomalies".into(), json!(res.anomalies()));
    m.insert("total_seconds".into(), json!(res.total_seconds()));
    Value::Object(m)
}

/// Writes records one per line.
pub struct ReportWriter<W: Write> {
    out: W,
    timestamps: bool,
    started: Instant,
}

impl<W: Write> ReportWriter<W> {
    /// With `timestamps` off, output depends only on the records themselves.
    pub fn new(out: W, timestamps: bool) -> Self {
        ReportWriter {
            out,
            timestamps,
            started: Instant::now(),
        }
    }

    pub fn write(&mut self, mut record: Value) -> io::Result<()> {
        if self.timestamps {
            if let Value::Object(m) = &mut record {
                let now = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs_f64())
                    .unwrap_or(0.0);
                m.insert("timestamp_unix".into(), json!(now));
                m.insert(
                    "real_elapsed_seconds".into(),
                    json!(self.started.elapsed().as_secs_f64()),
                );
            }
        }
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("report has no record {0}")]
    NoSuchRecord(String),
    #[error("record {index} ({kind}) carries no setting")]
    NoSetting { index: usize, kind: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Tunes while streaming baseline, round and final records to `out`. The
/// final record scores the chosen setting with one more analysis. Events are
/// passed on to `observer` after being written.
pub fn tune_reported<S: Scalar, W: Write>(
    req: &TuneRequest<'_, S>,
    out: &mut ReportWriter<W>,
    argv: impl Fn(&Setting) -> Option<Vec<String>>,
    observer: &mut dyn FnMut(TuneEvent<'_, S>),
) -> Result<(TuneResult<S>, AnalysisOutcome), ReportError> {
    let profile = req.initial.profile();
    let mut io_err: Option<io::Error> = None;
    let res = tune_with(req, &mut |ev| {
        if io_err.is_none() {
            let rec = match &ev {
                TuneEvent::Baseline { outcome } => baseline_record(&profile, outcome),
                TuneEvent::Round(r) => round_record(&profile, r),
            };
            if let Err(e) = out.write(rec) {
                io_err = Some(e);
            }
        }
        observer(ev);
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let scoring = score_final(&res, req.analyzer, None);
    let info = FinalInfo {
        argv: argv(&res.final_setting),
        scoring: Some(&scoring),
    };
    out.write(final_record(&profile, &res, &info))?;
    Ok((res, scoring))
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<Value>, ReportError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| ReportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn termination_of(record: &Value) -> Option<Termination> {
    serde_json::from_value(record.get("termination")?.clone()).ok()
}

/// Setting carried by record `index` (0-based, or `last`): the final setting
/// of a final record, `base_after` of a round, the analyzed setting of a
/// baseline.
pub fn setting_from_record(profile: &Profile, records: &[Value], index: &str) -> Result<Setting, ReportError> {
    let i = if index == "last" {
        records.len().checked_sub(1)
    } else {
        index.parse::<usize>().ok().filter(|i| *i < records.len())
    }
    .ok_or_else(|| ReportError::NoSuchRecord(index.to_string()))?;
    let rec = &records[i];
    let kind = rec.get("record").and_then(Value::as_str).unwrap_or("?").to_string();
    let key = match kind.as_str() {
        "final" => "final_setting",
        "round" => "base_after",
        "baseline" => "setting",
        _ => return Err(ReportError::NoSetting { index: i, kind }),
    };
    let obj = rec
        .get(key)
        .and_then(Value::as_object)
        .ok_or(ReportError::NoSetting { index: i, kind })?;
    Ok(setting_from_json(profile, obj, None, key)?)
}
