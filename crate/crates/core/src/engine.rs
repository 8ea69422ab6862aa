//! The budgeted sample / analyze / refine loop.

use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AlarmSet, AnalysisOutcome, Analyzer, FailureReason};
use crate::distributions::{DeltaDist, DistError, JointDistribution, RngSeed};
use crate::lattice::{Profile, Setting};
use crate::refinement::{refine, Observation, RefineError, RefineInput};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid hyper-parameter `{field}`: {reason}")]
    Hyper { field: &'static str, reason: String },
    #[error("budget must be a positive finite number of seconds, got {0}")]
    BadBudget(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

/// How the first round budget is derived from the total budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// `max(α·baseline, β·T)` with β a fraction of the total budget.
    Literal,
    /// `max(α·baseline, T / (2^num_refine − 1))`: the doubling series fills the budget.
    #[default]
    FitSeries,
}

fn d_alpha() -> f64 {
    0.1
}
fn d_beta() -> f64 {
    2.0
}
fn d_num_sample() -> usize {
    4
}
fn d_num_refine() -> u32 {
    7
}
fn d_jobs() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub beta_mode: BetaMode,
    /// Only read in [`BetaMode::Literal`].
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_num_sample")]
    pub num_sample: usize,
    #[serde(default = "d_num_refine")]
    pub num_refine: u32,
    /// Concurrent analyzer invocations.
    #[serde(default = "d_jobs")]
    pub jobs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: d_alpha(),
            beta_mode: BetaMode::default(),
            beta: d_beta(),
            num_sample: d_num_sample(),
            num_refine: d_num_refine(),
            jobs: d_jobs(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |field, reason: &str| {
            Err(EngineError::Hyper {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", "must lie strictly between 0 and 1");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta", "must be positive and finite");
        }
        if self.num_sample == 0 {
            return bad("num_sample", "must be at least 1");
        }
        if self.num_refine > 62 {
            return bad("num_refine", "must be at most 62");
        }
        if self.jobs == 0 {
            return bad("jobs", "must be at least 1");
        }
        Ok(())
    }
}

/// Budget of the first round.
///
/// In fit-series mode the result is nudged down by a few ulps if needed so
/// that the floating-point sum of the doubled budgets never exceeds `total`.
pub fn initial_round_budget(baseline_time: f64, total: f64, hyper: &HyperParams) -> Result<f64, EngineError> {
    if !(total.is_finite() && total > 0.0) {
        return Err(EngineError::BadBudget(total));
    }
    let floor = hyper.alpha * baseline_time.max(0.0);
    match hyper.beta_mode {
        BetaMode::Literal => Ok(floor.max(hyper.beta * total)),
        BetaMode::FitSeries => {
            let n = hyper.num_refine;
            if n == 0 {
                return Ok(floor.max(total));
            }
            let series = |tr: f64| (0..n).fold(0.0, |acc, i| acc + tr * f64::from(2u32).powi(i as i32));
            let mut fit = total / ((1u64 << n) - 1) as f64;
            while series(fit) > total {
                fit = fit.next_down();
            }
            Ok(floor.max(fit))
        }
    }
}

/// Analyzes every setting with at most `jobs` running at once.
///
/// Setting `i` goes to slot `i % jobs`; a slot runs its settings one after
/// another, each capped by what is left of `round_budget` on that slot's
/// clock. Settings that cannot start before the deadline are recorded as
/// timeouts without running. Output order matches input order.
pub fn map_analyze(
    analyzer: &dyn Analyzer,
    settings: &[Setting],
    round_budget: f64,
    jobs: usize,
) -> Vec<AnalysisOutcome> {
    let n = settings.len();
    let jobs = jobs.clamp(1, n.max(1));
    let mut out: Vec<Option<AnalysisOutcome>> = vec![None; n];
    let per_slot: Vec<Vec<(usize, AnalysisOutcome)>> = thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|slot| {
                s.spawn(move || {
                    let mut used = 0.0;
                    let mut done = Vec::new();
                    for i in (slot..n).step_by(jobs) {
                        let left = round_budget - used;
                        let o = if left > 0.0 {
                            analyzer.analyze(&settings[i], left)
                        } else {
                            AnalysisOutcome::failed(settings[i].clone(), 0.0, FailureReason::Timeout)
                        };
                        used += o.wall_time;
                        done.push((i, o));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("analysis slot panicked"))
            .collect()
    });
    for (i, o) in per_slot.into_iter().flatten() {
        out[i] = Some(o);
    }
    out.into_iter()
        .map(|o| o.expect("every index is assigned a slot"))
        .collect()
}

/// Wall time of a round: the busiest slot under the assignment used by
/// [`map_analyze`].
pub fn round_elapsed(outcomes: &[AnalysisOutcome], jobs: usize) -> f64 {
    let jobs = jobs.clamp(1, outcomes.len().max(1));
    (0..jobs)
        .map(|slot| {
            outcomes
                .iter()
                .skip(slot)
                .step_by(jobs)
                .map(|o| o.wall_time)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    RefineCountReached,
    BaselineFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport<S> {
    pub round_index: u32,
    pub round_budget_seconds: f64,
    pub sampled: Vec<Setting>,
    pub outcomes: Vec<AnalysisOutcome>,
    pub eta: S,
    pub base_after: Setting,
    pub delta_after: Vec<DeltaDist<S>>,
    pub alarms_under_base_after: Option<usize>,
    pub remaining_budget_seconds: f64,
    /// Busiest slot's total analysis time this round.
    pub elapsed_seconds: f64,
    /// Alarms reported this round that are not in the baseline universe.
    pub anomalies: usize,
}

impl<S> RoundReport<S> {
    pub fn completed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_completed()).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult<S> {
    pub final_setting: Setting,
    pub baseline: AnalysisOutcome,
    pub a_uni_size: usize,
    pub rounds: Vec<RoundReport<S>>,
    pub termination: Termination,
}

impl<S> TuneResult<S> {
    pub fn anomalies(&self) -> usize {
        self.rounds.iter().map(|r| r.anomalies).sum()
    }

    /// Baseline time plus the elapsed time of every round.
    pub fn total_seconds(&self) -> f64 {
        self.baseline.wall_time + self.rounds.iter().map(|r| r.elapsed_seconds).sum::<f64>()
    }

    /// Next round's budget, had the loop continued.
    pub fn next_round_budget(&self) -> Option<f64> {
        self.rounds.last().map(|r| 2.0 * r.round_budget_seconds)
    }
}

/// Analysis of the final setting, used to score a run.
///
/// The deadline is the budget the next round would have had. With no round
/// run the final setting is the baseline setting and its outcome is reused.
pub fn score_final<S>(res: &TuneResult<S>, analyzer: &dyn Analyzer, deadline: Option<f64>) -> AnalysisOutcome {
    if res.rounds.is_empty() {
        return res.baseline.clone();
    }
    let d = deadline.or(res.next_round_budget()).unwrap_or(f64::INFINITY);
    analyzer.analyze(&res.final_setting, d)
}

/// Progress notifications, delivered on the control thread.
pub enum TuneEvent<'a, S> {
    Baseline { outcome: &'a AnalysisOutcome },
    Round(&'a RoundReport<S>),
}

pub struct TuneRequest<'a, S> {
    pub initial: JointDistribution<S>,
    pub budget_seconds: f64,
    pub hyper: HyperParams,
    pub seed: RngSeed,
    pub analyzer: &'a dyn Analyzer,
    /// Deadline for the baseline analysis; unlimited when `None`.
    pub baseline_cap_seconds: Option<f64>,
}

pub fn tune<S: Scalar>(req: &TuneRequest<'_, S>) -> Result<TuneResult<S>, EngineError> {
    tune_with(req, &mut |_| {})
}

pub fn tune_with<S: Scalar>(
    req: &TuneRequest<'_, S>,
    observer: &mut dyn FnMut(TuneEvent<'_, S>),
) -> Result<TuneResult<S>, EngineError> {
    req.hyper.validate()?;
    if !(req.budget_seconds.is_finite() && req.budget_seconds > 0.0) {
        return Err(EngineError::BadBudget(req.budget_seconds));
    }
    let profile: Profile = req.initial.profile();
    let (mut base, mut delta) = req.initial.extract();

    let baseline = req
        .analyzer
        .analyze(&base, req.baseline_cap_seconds.unwrap_or(f64::INFINITY));
    observer(TuneEvent::Baseline { outcome: &baseline });
    let a_uni: AlarmSet = match baseline.alarms() {
        Some(a) => a.clone(),
        None => {
            return Ok(TuneResult {
                final_setting: base,
                baseline,
                a_uni_size: 0,
                rounds: Vec::new(),
                termination: Termination::BaselineFailed,
            })
        }
    };

    let hyper = &req.hyper;
    let mut remaining = req.budget_seconds;
    let mut round_budget = initial_round_budget(baseline.wall_time, remaining, hyper)?;
    let mut rounds = Vec::new();
    let mut count = 0u32;
    // The baseline alone can eat the whole budget.
    let mut exhausted = baseline.wall_time >= remaining;
    while !exhausted && count < hyper.num_refine {
        let joint = JointDistribution::from_parts(&profile, &base, &delta)?;
        let mut rng = req.seed.substream(u64::from(count));
        let sampled = joint.sample(hyper.num_sample, &mut rng);
        let outcomes = map_analyze(req.analyzer, &sampled, round_budget, hyper.jobs);

        let mut anomalies = 0;
        let r_list: Vec<Observation> = outcomes
            .iter()
            .filter_map(|o| {
                let alarms = o.alarms()?;
                anomalies += alarms.difference(&a_uni).count();
                Some(Observation::new(
                    o.setting.clone(),
                    alarms.intersection(&a_uni).cloned().collect(),
                ))
            })
            .collect();
        let refined = refine(&RefineInput {
            p_list: &sampled,
            r_list: &r_list,
            a_uni: &a_uni,
            base: &base,
            delta: &delta,
        })?;
        base = refined.base;
        delta = refined.delta;

        remaining -= round_budget;
        let report = RoundReport {
            round_index: count,
            round_budget_seconds: round_budget,
            elapsed_seconds: round_elapsed(&outcomes, hyper.jobs),
            sampled,
            outcomes,
            eta: refined.eta,
            alarms_under_base_after: req.analyzer.peek_alarm_count(&base),
            base_after: base.clone(),
            delta_after: delta.clone(),
            remaining_budget_seconds: remaining,
            anomalies,
        };
        observer(TuneEvent::Round(&report));
        rounds.push(report);
        round_budget *= 2.0;
        count += 1;
        exhausted = remaining <= 0.0;
    }
    let termination = if count == hyper.num_refine {
        Termination::RefineCountReached
    } else {
        Termination::BudgetExhausted
    };

    Ok(TuneResult {
        final_setting: base,
        baseline,
        a_uni_size: a_uni.len(),
        rounds,
        termination,
    })
}
