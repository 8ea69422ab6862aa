//! Strategy comparison on benchmark models.
//!
//! A result is best when its alarm count `c` satisfies `c − min ≤ 0.01·c`,
//! `min` being the least count of the row. A row with a single best result
//! marks it exclusively best; otherwise every best result is tied-best.

use std::collections::BTreeMap;
use std::io::Write;
use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{AlarmId, AnalysisOutcome, Analyzer};
use crate::config::{AnalyzerHandle, AnalyzerSpec, TuneConfig};
use crate::distributions::{DeltaDist, JointDistribution, RngSeed};
use crate::engine::{score_final, tune, EngineError, HyperParams, TuneRequest};
use crate::lattice::{BitSet, ParamSpec, ParamType, ParamValue, Profile, Setting};
use crate::sim::{SimAlarm, SimModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("benchmark `{0}` has no expert ladder")]
    NoLadder(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Default,
    Expert,
    Adaptive,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Default, StrategyKind::Expert, StrategyKind::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Default => "default",
            StrategyKind::Expert => "expert",
            StrategyKind::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    /// One analysis under the initial base.
    Default,
    /// Rungs in order; the last one that completes is the result.
    Expert { ladder: Vec<Setting> },
    /// Distribution refinement followed by one scoring analysis.
    Adaptive { hyper: HyperParams },
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Default => StrategyKind::Default,
            Strategy::Expert { .. } => StrategyKind::Expert,
            Strategy::Adaptive { .. } => StrategyKind::Adaptive,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyRun {
    pub kind: StrategyKind,
    pub final_setting: Option<Setting>,
    /// `None` when no analysis under the final setting completed.
    pub alarm_count: Option<usize>,
    /// Time spent choosing the setting.
    pub identification_seconds: f64,
    /// Time of the analysis that produced the reported alarms.
    pub analysis_seconds: f64,
}

fn from_outcome(kind: StrategyKind, o: &AnalysisOutcome, identification_seconds: f64) -> StrategyRun {
    StrategyRun {
        kind,
        final_setting: Some(o.setting.clone()),
        alarm_count: o.alarms().map(|a| a.len()),
        identification_seconds,
        analysis_seconds: o.wall_time,
    }
}

pub fn run_strategy(
    s: &Strategy,
    analyzer: &dyn Analyzer,
    initial: &JointDistribution<f64>,
    budget: f64,
    seed: RngSeed,
) -> Result<StrategyRun, HarnessError> {
    let kind = s.kind();
    match s {
        Strategy::Default => {
            let o = analyzer.analyze(&initial.extract().0, budget);
            Ok(from_outcome(kind, &o, o.wall_time))
        }
        Strategy::Expert { ladder } => {
            let mut left = budget;
            let mut last: Option<AnalysisOutcome> = None;
            for rung in ladder {
                if left <= 0.0 {
                    break;
                }
                let o = analyzer.analyze(rung, left);
                left -= o.wall_time;
                if o.is_completed() {
                    last = Some(o);
                }
            }
            let spent = budget - left;
            Ok(match last {
                Some(o) => from_outcome(kind, &o, spent),
                None => StrategyRun {
                    kind,
                    final_setting: None,
                    alarm_count: None,
                    identification_seconds: spent,
                    analysis_seconds: 0.0,
                },
            })
        }
        Strategy::Adaptive { hyper } => {
            let req = TuneRequest {
                initial: initial.clone(),
                budget_seconds: budget,
                hyper: *hyper,
                seed,
                analyzer,
                baseline_cap_seconds: None,
            };
            let res = tune(&req)?;
            let o = score_final(&res, analyzer, Some(f64::INFINITY));
            let mut run = from_outcome(kind, &o, res.total_seconds());
            run.final_setting = Some(res.final_setting);
            Ok(run)
        }
    }
}

/// Independent repeats, keeping the one with the fewest alarms. With
/// `split_budget` every repeat gets `budget / repeats`.
pub fn run_repeated(
    s: &Strategy,
    analyzer: &dyn Analyzer,
    initial: &JointDistribution<f64>,
    budget: f64,
    seed: RngSeed,
    repeats: u32,
    split_budget: bool,
) -> Result<StrategyRun, HarnessError> {
    let repeats = repeats.max(1);
    let each = if split_budget {
        budget / f64::from(repeats)
    } else {
        budget
    };
    let mut best: Option<StrategyRun> = None;
    let mut spent = 0.0;
    for k in 0..repeats {
        let r = run_strategy(s, analyzer, initial, each, RngSeed(seed.0.wrapping_add(u64::from(k))))?;
        spent += r.identification_seconds;
        let better = match (&best, r.alarm_count) {
            (None, _) => true,
            (Some(b), Some(c)) => b.alarm_count.is_none_or(|bc| c < bc),
            (Some(_), None) => false,
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one repeat");
    best.identification_seconds = spent;
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    ExclusivelyBest,
    TiedBest,
    None,
}

/// `c − min ≤ 0.01·c`.
pub fn within_tie(count: usize, min: usize) -> bool {
    (count - min.min(count)) as f64 <= 0.01 * count as f64
}

/// Marks for one row of counts; failed runs (`None`) are never best.
pub fn mark_row(counts: &[Option<usize>]) -> Vec<Mark> {
    let Some(min) = counts.iter().flatten().min().copied() else {
        return vec![Mark::None; counts.len()];
    };
    let best: Vec<bool> = counts.iter().map(|c| c.is_some_and(|c| within_tie(c, min))).collect();
    let n_best = best.iter().filter(|b| **b).count();
    best.iter()
        .map(|b| match (*b, n_best) {
            (false, _) => Mark::None,
            (true, 1) => Mark::ExclusivelyBest,
            (true, _) => Mark::TiedBest,
        })
        .collect()
}

/// One benchmark ready to run.
pub struct BenchCase {
    pub id: String,
    pub analyzer: AnalyzerHandle,
    pub initial: JointDistribution<f64>,
    pub ladder: Option<Vec<Setting>>,
}

impl BenchCase {
    pub fn from_config(cfg: &TuneConfig, base_dir: &std::path::Path) -> Result<Self, crate::config::ConfigError> {
        Ok(BenchCase {
            id: cfg.program.id.clone(),
            analyzer: cfg.build_analyzer(base_dir)?,
            initial: cfg.initial.clone(),
            ladder: cfg.expert_ladder.clone(),
        })
    }

    pub fn simulated(id: &str, model: SimModel, initial: JointDistribution<f64>, ladder: Option<Vec<Setting>>) -> Self {
        BenchCase {
            id: id.to_string(),
            analyzer: AnalyzerHandle::Simulated(model),
            initial,
            ladder,
        }
    }

    fn strategy(&self, kind: StrategyKind, hyper: &HyperParams) -> Result<Strategy, HarnessError> {
        Ok(match kind {
            StrategyKind::Default => Strategy::Default,
            StrategyKind::Expert => Strategy::Expert {
                ladder: self
                    .ladder
                    .clone()
                    .ok_or_else(|| HarnessError::NoLadder(self.id.clone()))?,
            },
            StrategyKind::Adaptive => Strategy::Adaptive { hyper: *hyper },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub budget: f64,
    pub seeds: Vec<u64>,
    pub hyper: HyperParams,
    pub repeats: u32,
    pub split_budget: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub strategy: StrategyKind,
    pub alarm_count: Option<usize>,
    pub identification_seconds: f64,
    pub analysis_seconds: f64,
    pub mark: Mark,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchOutcome {
    pub benchmark: String,
    pub seed: u64,
    pub results: Vec<CellResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Tally {
    pub exclusively_best: usize,
    pub tied_best: usize,
    pub overall: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<BenchOutcome>,
    pub summary: BTreeMap<StrategyKind, Tally>,
}

/// Runs every strategy on every (benchmark, seed) pair. Rows run in
/// parallel; the result does not depend on scheduling.
pub fn compare(cases: &[BenchCase], kinds: &[StrategyKind], opts: &BenchOptions) -> Result<Comparison, HarnessError> {
    let jobs: Vec<(&BenchCase, u64)> = cases
        .iter()
        .flat_map(|c| opts.seeds.iter().map(move |s| (c, *s)))
        .collect();
    let threads = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    let rows: Vec<Result<BenchOutcome, HarnessError>> = thread::scope(|sc| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let jobs = &jobs;
                sc.spawn(move || {
                    jobs.iter()
                        .enumerate()
                        .skip(t)
                        .step_by(threads)
                        .map(|(i, (case, seed))| (i, run_row(case, *seed, kinds, opts)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles
            .into_iter()
            .flat_map(|h| h.join().expect("bench worker panicked"))
            .collect();
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut summary: BTreeMap<StrategyKind, Tally> = kinds.iter().map(|k| (*k, Tally::default())).collect();
    for row in &rows {
        for r in &row.results {
            let t = summary.entry(r.strategy).or_default();
            match r.mark {
                Mark::ExclusivelyBest => t.exclusively_best += 1,
                Mark::TiedBest => t.tied_best += 1,
                Mark::None => {}
            }
            t.overall = t.exclusively_best + t.tied_best;
        }
    }
    Ok(Comparison { rows, summary })
}

fn run_row(
    case: &BenchCase,
    seed: u64,
    kinds: &[StrategyKind],
    opts: &BenchOptions,
) -> Result<BenchOutcome, HarnessError> {
    let runs = kinds
        .iter()
        .map(|k| {
            let s = case.strategy(*k, &opts.hyper)?;
            run_repeated(
                &s,
                &case.analyzer,
                &case.initial,
                opts.budget,
                RngSeed(seed),
                opts.repeats,
                opts.split_budget,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let marks = mark_row(&runs.iter().map(|r| r.alarm_count).collect::<Vec<_>>());
    Ok(BenchOutcome {
        benchmark: case.id.clone(),
        seed,
        results: runs
            .into_iter()
            .zip(marks)
            .map(|(r, mark)| CellResult {
                strategy: r.kind,
                alarm_count: r.alarm_count,
                identification_seconds: r.identification_seconds,
                analysis_seconds: r.analysis_seconds,
                mark,
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    benchmark: &'a str,
    seed: u64,
    strategy: &'static str,
    alarm_count: Option<usize>,
    identification_seconds: f64,
    analysis_seconds: f64,
    mark: &'static str,
}

fn mark_name(m: Mark) -> &'static str {
    match m {
        Mark::ExclusivelyBest => "exclusively_best",
        Mark::TiedBest => "tied_best",
        Mark::None => "",
    }
}

pub fn write_csv<W: Write>(cmp: &Comparison, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in &cmp.rows {
        for r in &row.results {
            w.serialize(CsvRow {
                benchmark: &row.benchmark,
                seed: row.seed,
                strategy: r.strategy.name(),
                alarm_count: r.alarm_count,
                identification_seconds: r.identification_seconds,
                analysis_seconds: r.analysis_seconds,
                mark: mark_name(r.mark),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One `row` record per (benchmark, seed) and a closing `summary` record.
pub fn write_jsonl<W: Write>(cmp: &Comparison, mut out: W) -> Result<(), HarnessError> {
    for row in &cmp.rows {
        let mut v = serde_json::to_value(row).expect("plain data");
        v.as_object_mut()
            .expect("struct serializes to an object")
            .insert("record".into(), json!("row"));
        writeln!(out, "{v}")?;
    }
    writeln!(out, "{}", json!({"record": "summary", "summary": cmp.summary}))?;
    Ok(())
}

/// Human-readable summary table.
pub fn summary_table(cmp: &Comparison) -> String {
    let mut s = format!(
        "{:<10} {:>17} {:>10} {:>8}\n",
        "strategy", "exclusively_best", "tied_best", "overall"
    );
    for (k, t) in &cmp.summary {
        s.push_str(&format!(
            "{:<10} {:>17} {:>10} {:>8}\n",
            k.name(),
            t.exclusively_best,
            t.tied_best,
            t.overall
        ));
    }
    s
}

/// A precision ladder that raises every parameter together, rung `k` of
/// `steps` placing each coordinate at fraction `k / steps` of its range.
/// Integers span `0..=int_max`.
pub fn diagonal_ladder(profile: &Profile, steps: u64, int_max: u64) -> Vec<Setting> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|k| {
            Setting::new(
                profile
                    .specs()
                    .iter()
                    .map(|spec| match &spec.ptype {
                        ParamType::Integer => ParamValue::int(int_max * k / steps),
                        ParamType::Boolean => ParamValue::Bool(2 * k >= steps && k > 0),
                        ParamType::OrderedEnum { labels } => {
                            ParamValue::Enum(((labels.len() as u64 - 1) * k / steps) as usize)
                        }
                        ParamType::StringSet { members } => {
                            let on = (members.len() as u64 * k).div_ceil(steps) as usize;
                            ParamValue::Bits(BitSet::new((0..members.len()).map(|i| i < on).collect()))
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Parameters of the skewed family: every threshold needs a high value in
/// one hot coordinate and only small values elsewhere, so a diagonal
/// ladder pays for precision in every coordinate to get it in one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewKnobs {
    pub n_params: usize,
    pub n_alarms: usize,
    pub hot_max: u64,
    pub cold_max: u64,
    pub weight: f64,
    pub failure_cap: f64,
    pub ladder_steps: u64,
    pub budget: f64,
}

impl Default for SkewKnobs {
    fn default() -> Self {
        SkewKnobs {
            n_params: 4,
            n_alarms: 12,
            hot_max: 20,
            cold_max: 2,
            weight: 0.1,
            failure_cap: 20.0,
            ladder_steps: 10,
            budget: 1270.0,
        }
    }
}

pub struct SkewedBench {
    pub id: String,
    pub model: SimModel,
    pub initial: JointDistribution<f64>,
    pub ladder: Vec<Setting>,
    pub hot: usize,
}

pub fn skewed_bench(seed: RngSeed, k: &SkewKnobs) -> SkewedBench {
    let mut rng = seed.rng();
    let profile = Profile::new((0..k.n_params).map(|i| ParamSpec::integer(format!("p{i}"))).collect())
        .expect("generated names are unique");
    let hot = rng.gen_range(0..k.n_params);
    let alarms = (0..k.n_alarms)
        .map(|a| {
            let t = (0..k.n_params)
                .map(|i| {
                    ParamValue::int(if i == hot {
                        rng.gen_range(1..=k.hot_max)
                    } else {
                        rng.gen_range(0..=k.cold_max)
                    })
                })
                .collect();
            SimAlarm {
                id: AlarmId::new(format!("a{a}")),
                thresholds: vec![Setting::new(t)],
            }
        })
        .collect();
    let model = SimModel::new(
        profile.clone(),
        alarms,
        1.0,
        vec![k.weight; k.n_params],
        Some(k.failure_cap),
    )
    .expect("generated model is valid");
    let initial = JointDistribution::from_parts(
        &profile,
        &profile.bottom(),
        &vec![DeltaDist::Poisson(k.hot_max as f64 / 4.0); k.n_params],
    )
    .expect("generated distribution is valid");
    SkewedBench {
        id: format!("skew-{}", seed.0),
        ladder: diagonal_ladder(&profile, k.ladder_steps, k.hot_max),
        model,
        initial,
        hot,
    }
}

/// Config form of a case, for `bench --models`.
pub fn case_config(
    id: &str,
    model: &SimModel,
    initial: &JointDistribution<f64>,
    ladder: Vec<Setting>,
    budget: f64,
) -> TuneConfig {
    crate::config::sim_config(id, model, initial, budget, 0, Some(ladder))
}

impl From<SkewedBench> for BenchCase {
    fn from(b: SkewedBench) -> Self {
        BenchCase::simulated(&b.id, b.model, b.initial, Some(b.ladder))
    }
}

pub fn is_simulated(cfg: &TuneConfig) -> bool {
    matches!(cfg.analyzer, AnalyzerSpec::Simulated(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_benchmark, GenKnobs};

    #[test]
    fn tie_rule_examples() {
        assert!(within_tie(1832, 1828));
        assert_eq!(mark_row(&[Some(1832), Some(1828)]), [Mark::TiedBest, Mark::TiedBest]);
        assert_eq!(mark_row(&[Some(5)]), [Mark::ExclusivelyBest]);
        assert_eq!(mark_row(&[Some(7), Some(7)]), [Mark::TiedBest, Mark::TiedBest]);
        assert_eq!(
            mark_row(&[Some(10), Some(9), None]),
            [Mark::None, Mark::ExclusivelyBest, Mark::None]
        );
        assert_eq!(mark_row(&[None, None]), [Mark::None, Mark::None]);
        assert_eq!(mark_row(&[Some(0), Some(1)]), [Mark::ExclusivelyBest, Mark::None]);
        // 1% of the larger count, not of the minimum.
        assert!(within_tie(101, 100));
        assert!(!within_tie(102, 100));
    }

    #[test]
    fn default_on_empty_model() {
        let b = gen_benchmark(RngSeed(1), &GenKnobs::integers(3, 0, 5)).unwrap();
        let init = b.default_initial::<f64>().unwrap();
        let r = run_strategy(&Strategy::Default, &b.model, &init, 10.0, RngSeed(0)).unwrap();
        assert_eq!(r.alarm_count, Some(0));
    }

    #[test]
    fn expert_keeps_highest_completing_rung() {
        let k = SkewKnobs::default();
        let b = skewed_bench(RngSeed(3), &k);
        let r = run_strategy(
            &Strategy::Expert {
                ladder: b.ladder.clone(),
            },
            &b.model,
            &b.initial,
            k.budget,
            RngSeed(0),
        )
        .unwrap();
        // Rung k costs (1 + 0.1·2k)^4; rung 5 is the last one under the cap of 20.
        let expect = b
            .ladder
            .iter()
            .rev()
            .find(|p| b.model.cost(p).unwrap() <= k.failure_cap)
            .unwrap();
        assert_eq!(expect, &b.ladder[5]);
        assert_eq!(r.final_setting.as_ref(), Some(expect));
        assert_eq!(r.alarm_count, Some(b.model.alarms_under(expect).unwrap().len()));
    }

    #[test]
    fn expert_stops_when_budget_is_gone() {
        let k = SkewKnobs::default();
        let b = skewed_bench(RngSeed(3), &k);
        let tight = b.model.cost(&b.ladder[0]).unwrap() + b.model.cost(&b.ladder[1]).unwrap();
        let r = run_strategy(
            &Strategy::Expert {
                ladder: b.ladder.clone(),
            },
            &b.model,
            &b.initial,
            tight,
            RngSeed(0),
        )
        .unwrap();
        assert_eq!(r.final_setting.as_ref(), Some(&b.ladder[1]));
    }

    #[test]
    fn ladder_is_increasing() {
        let profile = Profile::new(vec![
            ParamSpec::integer("i"),
            ParamSpec::boolean("b"),
            ParamSpec::ordered_enum("e", &["x", "y", "z"]),
            ParamSpec::string_set("s", &["a", "b", "c"]),
        ])
        .unwrap();
        let l = diagonal_ladder(&profile, 4, 8);
        assert_eq!(l.first().unwrap(), &profile.bottom());
        assert_eq!(l.last().unwrap().values()[3], ParamValue::bits("111"));
        for w in l.windows(2) {
            assert!(w[0].leq(&w[1]).unwrap() && w[0] != w[1]);
        }
    }

    #[test]
    fn compare_single_default_is_exclusive() {
        let b = gen_benchmark(RngSeed(1), &GenKnobs::integers(2, 3, 5)).unwrap();
        let init = b.default_initial::<f64>().unwrap();
        let cases = vec![BenchCase::simulated(&b.id, b.model.clone(), init, None)];
        let opts = BenchOptions {
            budget: 10.0,
            seeds: vec![1, 2],
            hyper: HyperParams::default(),
            repeats: 1,
            split_budget: false,
        };
        let cmp = compare(&cases, &[StrategyKind::Default], &opts).unwrap();
        assert_eq!(cmp.rows.len(), 2);
        assert_eq!(cmp.summary[&StrategyKind::Default].exclusively_best, 2);
        assert!(matches!(
            compare(&cases, &[StrategyKind::Expert], &opts),
            Err(HarnessError::NoLadder(_))
        ));
        let mut csv = Vec::new();
        write_csv(&cmp, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("benchmark,seed,strategy,alarm_count"));
        assert_eq!(text.lines().count(), 3);
    }
}
