//! One refinement step over a round's results.
//!
//! The base is raised to the join, over every alarm `a` of the universe, of the
//! meet of all completed settings whose analysis did not report `a`. Alarms no
//! sample eliminated contribute nothing. The delta is rescaled by
//! `(2·completed + 1) / sampled`, which is below one exactly when fewer than
//! half of the analyses completed.

use thiserror::Error;

use crate::analysis::{AlarmId, AlarmSet};
use crate::distributions::{DeltaDist, DistError};
use crate::lattice::{LatticeError, Setting};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("cannot compute a scaling factor from zero samples")]
    NoSamples,
    #[error("{completed} completed analyses out of only {sampled} samples")]
    TooManyCompleted { completed: usize, sampled: usize },
    #[error("base has {base} coordinates but {delta} deltas were given")]
    DeltaArity { base: usize, delta: usize },
}

/// A completed analysis: the setting and the alarms it still reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub setting: Setting,
    pub alarms: AlarmSet,
}

impl Observation {
    pub fn new(setting: Setting, alarms: AlarmSet) -> Self {
        Observation { setting, alarms }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RefineInput<'a, S> {
    /// Every setting sampled this round.
    pub p_list: &'a [Setting],
    /// Completed analyses only.
    pub r_list: &'a [Observation],
    pub a_uni: &'a AlarmSet,
    pub base: &'a Setting,
    pub delta: &'a [DeltaDist<S>],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refined<S> {
    pub base: Setting,
    pub delta: Vec<DeltaDist<S>>,
    pub eta: S,
}

/// For each alarm some completed run eliminated, the meet of all such runs:
/// the least setting known (under monotonicity) to get rid of that alarm.
pub fn eliminator_meets(r_list: &[Observation], a_uni: &AlarmSet) -> Result<Vec<(AlarmId, Setting)>, RefineError> {
    let mut out = Vec::new();
    for a in a_uni {
        let mut p_a: Option<Setting> = None;
        for obs in r_list.iter().filter(|o| !o.alarms.contains(a)) {
            p_a = Some(match p_a {
                None => obs.setting.clone(),
                Some(acc) => acc.meet(&obs.setting)?,
            });
        }
        if let Some(p) = p_a {
            out.push((a.clone(), p));
        }
    }
    Ok(out)
}

/// Refined base. Always satisfies `base ⊑ result`.
pub fn refine_base<S>(input: &RefineInput<'_, S>) -> Result<Setting, RefineError> {
    eliminator_meets(input.r_list, input.a_uni)?
        .iter()
        .try_fold(input.base.clone(), |acc, (_, p_a)| acc.join(p_a))
        .map_err(RefineError::from)
}

/// `(2·completed + 1) / sampled`.
pub fn eta_scale<S: Scalar>(completed: usize, sampled: usize) -> Result<S, RefineError> {
    if sampled == 0 {
        return Err(RefineError::NoSamples);
    }
    if completed > sampled {
        return Err(RefineError::TooManyCompleted { completed, sampled });
    }
    Ok(S::lit((2 * completed + 1) as f64) / S::lit(sampled as f64))
}

pub fn refine<S: Scalar>(input: &RefineInput<'_, S>) -> Result<Refined<S>, RefineError> {
    if input.delta.len() != input.base.len() {
        return Err(RefineError::DeltaArity {
            base: input.base.len(),
            delta: input.delta.len(),
        });
    }
    let base = refine_base(input)?;
    let eta = eta_scale::<S>(input.r_list.len(), input.p_list.len())?;
    let delta = input
        .delta
        .iter()
        .map(|d| d.scale(eta))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Refined { base, delta, eta })
}
