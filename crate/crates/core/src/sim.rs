//! Synthetic monotone analyzer running on a virtual clock.
//!
//! Every alarm carries one or more threshold settings and is eliminated by a
//! setting exactly when that setting dominates one of them. With a single
//! threshold the elimination set is a principal filter; several thresholds
//! give an upward-closed set that is not, which is where meet-based
//! refinement stops being exact.
//!
//! Cost is `base · Π (1 + w_i · magnitude(p_i))`, monotone in the lattice order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AlarmId, AlarmSet, AnalysisOutcome, Analyzer, FailureReason};
use crate::distributions::{DeltaDist, DistError, JointDistribution, RngSeed};
use crate::lattice::{BitSet, ParamSpec, ParamType, ParamValue, Profile, ProfileError, Setting};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("alarm `{0}` has an infinite threshold")]
    InfiniteThreshold(AlarmId),
    #[error("alarm `{0}` has no threshold")]
    NoThreshold(AlarmId),
    #[error("expected {expected} cost weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("cost weights must be finite and non-negative")]
    BadWeight,
    #[error("base cost must be positive and finite, got {0}")]
    BadBaseCost(f64),
    #[error("generator knob `{0}` must be positive")]
    BadKnob(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimAlarm {
    pub id: AlarmId,
    /// Eliminated by `p` iff some threshold `t` satisfies `t ⊑ p`.
    pub thresholds: Vec<Setting>,
}

impl SimAlarm {
    pub fn threshold(id: impl Into<String>, t: Setting) -> Self {
        SimAlarm {
            id: AlarmId::new(id),
            thresholds: vec![t],
        }
    }

    fn eliminated_by(&self, p: &Setting) -> bool {
        self.thresholds.iter().any(|t| t.leq(p).unwrap_or(false))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimModel {
    profile: Profile,
    alarms: Vec<SimAlarm>,
    base_cost_seconds: f64,
    cost_weights: Vec<f64>,
    failure_cap: Option<f64>,
}

impl SimModel {
    pub fn new(
        profile: Profile,
        alarms: Vec<SimAlarm>,
        base_cost_seconds: f64,
        cost_weights: Vec<f64>,
        failure_cap: Option<f64>,
    ) -> Result<Self, SimError> {
        if !(base_cost_seconds > 0.0 && base_cost_seconds.is_finite()) {
            return Err(SimError::BadBaseCost(base_cost_seconds));
        }
        if cost_weights.len() != profile.len() {
            return Err(SimError::WeightCount {
                expected: profile.len(),
                got: cost_weights.len(),
            });
        }
        if cost_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SimError::BadWeight);
        }
        for a in &alarms {
            if a.thresholds.is_empty() {
                return Err(SimError::NoThreshold(a.id.clone()));
            }
            for t in &a.thresholds {
                profile.check(t)?;
                if t.contains_infinity() {
                    return Err(SimError::InfiniteThreshold(a.id.clone()));
                }
            }
        }
        Ok(SimModel {
            profile,
            alarms,
            base_cost_seconds,
            cost_weights,
            failure_cap,
        })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn alarms(&self) -> &[SimAlarm] {
        &self.alarms
    }

    pub fn base_cost_seconds(&self) -> f64 {
        self.base_cost_seconds
    }

    pub fn cost_weights(&self) -> &[f64] {
        &self.cost_weights
    }

    pub fn failure_cap(&self) -> Option<f64> {
        self.failure_cap
    }

    pub fn with_failure_cap(mut self, cap: Option<f64>) -> Self {
        self.failure_cap = cap;
        self
    }

    /// Whether every alarm has exactly one threshold.
    pub fn is_principal(&self) -> bool {
        self.alarms.iter().all(|a| a.thresholds.len() == 1)
    }

    pub fn alarms_under(&self, p: &Setting) -> Result<AlarmSet, SimError> {
        self.profile.check(p)?;
        Ok(self
            .alarms
            .iter()
            .filter(|a| !a.eliminated_by(p))
            .map(|a| a.id.clone())
            .collect())
    }

    pub fn cost(&self, p: &Setting) -> Result<f64, SimError> {
        self.profile.check(p)?;
        Ok(p.values()
            .iter()
            .zip(&self.cost_weights)
            .fold(self.base_cost_seconds, |acc, (v, w)| acc * (1.0 + w * v.magnitude())))
    }

    /// Completed iff the cost fits both the deadline and the failure cap.
    pub fn sim_analyze(&self, p: &Setting, deadline: f64) -> Result<AnalysisOutcome, SimError> {
        let cost = self.cost(p)?;
        if let Some(cap) = self.failure_cap {
            if cost > cap {
                return Ok(AnalysisOutcome::failed(
                    p.clone(),
                    deadline.min(cap),
                    FailureReason::Timeout,
                ));
            }
        }
        if cost > deadline {
            return Ok(AnalysisOutcome::failed(p.clone(), deadline, FailureReason::Timeout));
        }
        Ok(AnalysisOutcome::completed(p.clone(), cost, self.alarms_under(p)?))
    }
}

impl Analyzer for SimModel {
    fn analyze(&self, p: &Setting, deadline_seconds: f64) -> AnalysisOutcome {
        self.sim_analyze(p, deadline_seconds)
            .unwrap_or_else(|_| AnalysisOutcome::failed(p.clone(), 0.0, FailureReason::Crash))
    }

    fn peek_alarm_count(&self, p: &Setting) -> Option<usize> {
        self.alarms_under(p).ok().map(|a| a.len())
    }
}

/// Knobs for [`gen_benchmark`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenKnobs {
    pub n_params: usize,
    pub n_alarms: usize,
    pub max_threshold: u64,
    /// Cost of analyzing the bottom setting, in (virtual) seconds.
    pub cost_scale: f64,
    /// Cycle through all four parameter kinds instead of integers only.
    #[serde(default)]
    pub mixed_types: bool,
    /// Give each alarm two incomparable thresholds.
    #[serde(default)]
    pub non_principal: bool,
    #[serde(default)]
    pub failure_cap: Option<f64>,
}

impl GenKnobs {
    pub fn integers(n_params: usize, n_alarms: usize, max_threshold: u64) -> Self {
        GenKnobs {
            n_params,
            n_alarms,
            max_threshold,
            cost_scale: 1.0,
            mixed_types: false,
            non_principal: false,
            failure_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimBenchmark {
    pub id: String,
    pub model: SimModel,
    pub gen_seed: RngSeed,
    pub knobs: GenKnobs,
}

const ENUM_LABELS: [&str; 4] = ["l0", "l1", "l2", "l3"];
const SET_MEMBERS: [&str; 3] = ["m0", "m1", "m2"];

fn gen_profile(knobs: &GenKnobs) -> Profile {
    let specs = (0..knobs.n_params)
        .map(|i| {
            let name = format!("p{i}");
            match (knobs.mixed_types, i % 4) {
                (true, 1) => ParamSpec::boolean(name),
                (true, 2) => ParamSpec::ordered_enum(name, &ENUM_LABELS),
                (true, 3) => ParamSpec::string_set(name, &SET_MEMBERS),
                _ => ParamSpec::integer(name),
            }
        })
        .collect();
    Profile::new(specs).expect("generated names are unique")
}

/// Largest finite value of a coordinate the generator may use.
fn high_value(ptype: &ParamType, max_threshold: u64) -> ParamValue {
    match ptype {
        ParamType::Integer => ParamValue::int(max_threshold),
        other => other.top(),
    }
}

fn random_value<R: Rng>(ptype: &ParamType, max_threshold: u64, rng: &mut R) -> ParamValue {
    match ptype {
        ParamType::Integer => ParamValue::int(rng.gen_range(0..=max_threshold)),
        ParamType::Boolean => ParamValue::Bool(rng.gen_bool(0.5)),
        ParamType::OrderedEnum { labels } => ParamValue::Enum(rng.gen_range(0..labels.len())),
        ParamType::StringSet { members } => {
            ParamValue::Bits(BitSet::new((0..members.len()).map(|_| rng.gen_bool(0.5)).collect()))
        }
    }
}

/// One step above bottom in a single coordinate.
fn one_step(ptype: &ParamType) -> ParamValue {
    match ptype {
        ParamType::Integer => ParamValue::int(1),
        ParamType::Boolean => ParamValue::Bool(true),
        ParamType::OrderedEnum { .. } => ParamValue::Enum(1),
        ParamType::StringSet { members } => {
            let mut bits = vec![false; members.len()];
            bits[0] = true;
            ParamValue::Bits(BitSet::new(bits))
        }
    }
}

fn weight(ptype: &ParamType, max_threshold: u64) -> f64 {
    match ptype {
        ParamType::Integer => 1.0 / max_threshold as f64,
        ParamType::Boolean => 1.0,
        ParamType::OrderedEnum { labels } => 1.0 / (labels.len() - 1) as f64,
        ParamType::StringSet { members } => 1.0 / members.len() as f64,
    }
}

/// Deterministic benchmark from `(seed, knobs)`.
///
/// The first alarm is eliminated one step above bottom and the last needs the
/// largest value in one coordinate, so landscapes always have an easy and a
/// hard alarm.
pub fn gen_benchmark(seed: RngSeed, knobs: &GenKnobs) -> Result<SimBenchmark, SimError> {
    if knobs.n_params == 0 {
        return Err(SimError::BadKnob("n_params"));
    }
    if knobs.max_threshold == 0 {
        return Err(SimError::BadKnob("max_threshold"));
    }
    if !knobs.cost_scale.is_finite() || knobs.cost_scale <= 0.0 {
        return Err(SimError::BadKnob("cost_scale"));
    }
    let mut rng = seed.rng();
    let profile = gen_profile(knobs);
    let specs = profile.specs();
    let random_threshold = |rng: &mut rand_chacha::ChaCha8Rng| {
        Setting::new(
            specs
                .iter()
                .map(|s| random_value(&s.ptype, knobs.max_threshold, rng))
                .collect(),
        )
    };

    let mut alarms = Vec::with_capacity(knobs.n_alarms);
    for i in 0..knobs.n_alarms {
        let copies = if knobs.non_principal { 2 } else { 1 };
        let mut thresholds = Vec::with_capacity(copies);
        for _ in 0..copies {
            let t = if i == 0 {
                let coord = rng.gen_range(0..specs.len());
                let mut v = profile.bottom().into_values();
                v[coord] = one_step(&specs[coord].ptype);
                Setting::new(v)
            } else if i + 1 == knobs.n_alarms {
                let coord = rng.gen_range(0..specs.len());
                let mut v = random_threshold(&mut rng).into_values();
                v[coord] = high_value(&specs[coord].ptype, knobs.max_threshold);
                Setting::new(v)
            } else {
                random_threshold(&mut rng)
            };
            thresholds.push(t);
        }
        alarms.push(SimAlarm {
            id: AlarmId::new(format!("alarm-{i}")),
            thresholds,
        });
    }
    let weights = specs.iter().map(|s| weight(&s.ptype, knobs.max_threshold)).collect();
    let model = SimModel::new(profile, alarms, knobs.cost_scale, weights, knobs.failure_cap)?;
    Ok(SimBenchmark {
        id: format!("sim-{}", seed.0),
        model,
        gen_seed: seed,
        knobs: knobs.clone(),
    })
}

impl SimBenchmark {
    /// Starting distribution: bottom base, Poisson rate a quarter of the
    /// threshold range for integers, 0.5 elsewhere.
    pub fn default_initial<S: Scalar>(&self) -> Result<JointDistribution<S>, DistError> {
        let profile = self.model.profile();
        let rate = S::lit((self.knobs.max_threshold as f64 / 4.0).max(0.5));
        let deltas: Vec<DeltaDist<S>> = profile
            .specs()
            .iter()
            .map(|s| match &s.ptype {
                ParamType::Integer => DeltaDist::Poisson(rate),
                ParamType::OrderedEnum { .. } => DeltaDist::Poisson(S::lit(0.5)),
                ParamType::Boolean => DeltaDist::Bernoulli(S::lit(0.5)),
                ParamType::StringSet { members } => DeltaDist::JointBernoulli(vec![S::lit(0.5); members.len()]),
            })
            .collect();
        JointDistribution::from_parts(profile, &profile.bottom(), &deltas)
    }
}
