//! Per-parameter distributions of the form `base ⊕ delta`.
//!
//! The base is a one-point mass on a lattice element and keeps what earlier
//! rounds learned. The delta explores: integers and ordered enums are shifted
//! right by a Poisson draw, booleans and string sets are or-ed with Bernoulli
//! draws. Scaling a delta by `η` (`η ⊗ d`) grows or shrinks exploration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BitSet, ParamSpec, ParamType, ParamValue, Profile, Setting};
use crate::scalar::Scalar;

/// Inverse-transform sampling is used directly up to this mean; larger means
/// are split into sums of independent Poissons.
const POISSON_SPLIT_LAMBDA: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("poisson rate must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("bernoulli probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("scaling factor must be positive and finite, got {0}")]
    BadEta(f64),
    #[error("parameter `{name}`: a {kind} parameter needs a {expected} delta, got {got}")]
    FamilyMismatch {
        name: String,
        kind: &'static str,
        expected: &'static str,
        got: &'static str,
    },
    #[error("parameter `{name}`: string set has {expected} members but the delta has {got} probabilities")]
    WidthMismatch { name: String, expected: usize, got: usize },
    #[error("parameter `{name}`: base value {value} is not valid for its type")]
    BadBase { name: String, value: String },
    #[error("parameter `{0}`: base value must be finite")]
    InfiniteBase(String),
    #[error("expected {expected} parameters, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Seed of the deterministic random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent stream `index` derived from the same seed.
    pub fn substream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "S: Scalar")]
pub enum DeltaDist<S> {
    Poisson(S),
    Bernoulli(S),
    JointBernoulli(Vec<S>),
}

/// Mean of a delta distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Expectation<S> {
    Scalar(S),
    Vector(Vec<S>),
}

impl<S: Scalar> Expectation<S> {
    pub fn components(&self) -> &[S] {
        match self {
            Expectation::Scalar(x) => std::slice::from_ref(x),
            Expectation::Vector(v) => v,
        }
    }
}

fn check_probability<S: Scalar>(q: S) -> Result<(), DistError> {
    if q >= S::zero() && q <= S::one() {
        Ok(())
    } else {
        Err(DistError::BadProbability(q.as_f64()))
    }
}

impl<S: Scalar> DeltaDist<S> {
    pub fn poisson(lambda: S) -> Result<Self, DistError> {
        let d = DeltaDist::Poisson(lambda);
        d.validate().map(|_| d)
    }

    pub fn bernoulli(q: S) -> Result<Self, DistError> {
        let d = DeltaDist::Bernoulli(q);
        d.validate().map(|_| d)
    }

    pub fn joint_bernoulli(qs: Vec<S>) -> Result<Self, DistError> {
        let d = DeltaDist::JointBernoulli(qs);
        d.validate().map(|_| d)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            DeltaDist::Poisson(l) => {
                if *l > S::zero() && l.is_finite() {
                    Ok(())
                } else {
                    Err(DistError::BadLambda(l.as_f64()))
                }
            }
            DeltaDist::Bernoulli(q) => check_probability(*q),
            DeltaDist::JointBernoulli(qs) => qs.iter().try_for_each(|q| check_probability(*q)),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DeltaDist::Poisson(_) => "poisson",
            DeltaDist::Bernoulli(_) => "bernoulli",
            DeltaDist::JointBernoulli(_) => "joint_bernoulli",
        }
    }

    /// `η ⊗ d`: Poisson rates are multiplied by `η`; a Bernoulli `q` becomes
    /// `1 - (1 - q)^η`, the probability that at least one of `η` independent
    /// trials succeeds. Evaluated as `-expm1(η · ln_1p(-q))`, which keeps
    /// small probabilities accurate and composes to within a few ulps.
    pub fn scale(&self, eta: S) -> Result<Self, DistError> {
        if !(eta > S::zero() && eta.is_finite()) {
            return Err(DistError::BadEta(eta.as_f64()));
        }
        // 1 - (1 - q) does not round-trip in floating point.
        if eta == S::one() {
            return Ok(self.clone());
        }
        let bern = |q: S| {
            let p = -(eta * (-q).ln_1p()).exp_m1();
            p.max(S::zero()).min(S::one())
        };
        Ok(match self {
            DeltaDist::Poisson(l) => DeltaDist::Poisson(*l * eta),
            DeltaDist::Bernoulli(q) => DeltaDist::Bernoulli(bern(*q)),
            DeltaDist::JointBernoulli(qs) => DeltaDist::JointBernoulli(qs.iter().map(|q| bern(*q)).collect()),
        })
    }

    pub fn expectation(&self) -> Expectation<S> {
        match self {
            DeltaDist::Poisson(l) => Expectation::Scalar(*l),
            DeltaDist::Bernoulli(q) => Expectation::Scalar(*q),
            DeltaDist::JointBernoulli(qs) => Expectation::Vector(qs.clone()),
        }
    }

    /// Same family with parameters converted to another scalar type.
    pub fn cast<T: Scalar>(&self) -> DeltaDist<T> {
        let c = |x: &S| T::lit(x.as_f64());
        match self {
            DeltaDist::Poisson(l) => DeltaDist::Poisson(c(l)),
            DeltaDist::Bernoulli(q) => DeltaDist::Bernoulli(c(q)),
            DeltaDist::JointBernoulli(qs) => DeltaDist::JointBernoulli(qs.iter().map(c).collect()),
        }
    }
}

/// Source of delta draws. Implemented for every [`Rng`]; tests can script it.
pub trait DeltaDraws<S> {
    fn poisson(&mut self, lambda: S) -> u64;
    fn bernoulli(&mut self, q: S) -> bool;
}

impl<S: Scalar, R: Rng> DeltaDraws<S> for R {
    fn poisson(&mut self, lambda: S) -> u64 {
        sample_poisson(lambda, self)
    }

    fn bernoulli(&mut self, q: S) -> bool {
        sample_bernoulli(q, self)
    }
}

/// Poisson draw by sequential inverse transform, splitting large rates.
pub fn sample_poisson<S: Scalar, R: Rng + ?Sized>(lambda: S, rng: &mut R) -> u64 {
    if lambda.as_f64() > POISSON_SPLIT_LAMBDA {
        let half = lambda / S::lit(2.0);
        return sample_poisson(half, rng).saturating_add(sample_poisson(lambda - half, rng));
    }
    let u = S::lit(rng.gen::<f64>());
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k: u64 = 0;
    while u > cdf {
        k += 1;
        p = p * lambda / S::lit(k as f64);
        cdf = cdf + p;
        // Past the mode the pmf only shrinks; once it underflows the cdf is as
        // close to 1 as the scalar type allows.
        if p == S::zero() && S::lit(k as f64) > lambda {
            break;
        }
    }
    k
}

pub fn sample_bernoulli<S: Scalar, R: Rng + ?Sized>(q: S, rng: &mut R) -> bool {
    // Compare in f64: a draw just below 1 may round up to 1 in f32.
    rng.gen::<f64>() < q.as_f64()
}

/// One parameter's distribution `base ⊕ delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDistribution<S> {
    spec: ParamSpec,
    base: ParamValue,
    delta: DeltaDist<S>,
}

impl<S: Scalar> ParamDistribution<S> {
    pub fn new(spec: ParamSpec, base: ParamValue, delta: DeltaDist<S>) -> Result<Self, DistError> {
        if !spec.ptype.admits(&base) {
            return Err(DistError::BadBase {
                name: spec.name.clone(),
                value: base.to_string(),
            });
        }
        if base.contains_infinity() {
            return Err(DistError::InfiniteBase(spec.name.clone()));
        }
        delta.validate()?;
        let expected = match &spec.ptype {
            ParamType::Integer | ParamType::OrderedEnum { .. } => "poisson",
            ParamType::Boolean => "bernoulli",
            ParamType::StringSet { .. } => "joint_bernoulli",
        };
        // A two-label enum is a boolean in disguise.
        let two_label_flag = matches!(&spec.ptype, ParamType::OrderedEnum { labels } if labels.len() == 2)
            && delta.family() == "bernoulli";
        if delta.family() != expected && !two_label_flag {
            return Err(DistError::FamilyMismatch {
                name: spec.name.clone(),
                kind: spec.ptype.kind_name(),
                expected,
                got: delta.family(),
            });
        }
        if let (ParamType::StringSet { members }, DeltaDist::JointBernoulli(qs)) = (&spec.ptype, &delta) {
            if members.len() != qs.len() {
                return Err(DistError::WidthMismatch {
                    name: spec.name.clone(),
                    expected: members.len(),
                    got: qs.len(),
                });
            }
        }
        Ok(ParamDistribution { spec, base, delta })
    }

    pub fn spec(&self) -> &ParamSpec {
        &self.spec
    }

    pub fn base(&self) -> &ParamValue {
        &self.base
    }

    pub fn delta(&self) -> &DeltaDist<S> {
        &self.delta
    }

    /// Draws `base ⊕ delta`. Never produces integer infinity; ordered enums
    /// are clamped to their last label.
    pub fn sample<D: DeltaDraws<S> + ?Sized>(&self, draws: &mut D) -> ParamValue {
        match (&self.base, &self.delta, &self.spec.ptype) {
            (ParamValue::Int(b), DeltaDist::Poisson(l), _) => ParamValue::Int(b.saturating_add(draws.poisson(*l))),
            (ParamValue::Enum(i), DeltaDist::Poisson(l), ParamType::OrderedEnum { labels }) => {
                let shifted = (*i as u64).saturating_add(draws.poisson(*l));
                ParamValue::Enum(shifted.min(labels.len() as u64 - 1) as usize)
            }
            (ParamValue::Enum(i), DeltaDist::Bernoulli(q), _) => {
                let d = draws.bernoulli(*q);
                ParamValue::Enum(if d { 1 } else { *i })
            }
            (ParamValue::Bool(b), DeltaDist::Bernoulli(q), _) => {
                // Draw regardless of the base so the stream position does not
                // depend on what earlier rounds learned.
                let d = draws.bernoulli(*q);
                ParamValue::Bool(*b || d)
            }
            (ParamValue::Bits(bits), DeltaDist::JointBernoulli(qs), _) => {
                let out = bits
                    .bits()
                    .iter()
                    .zip(qs)
                    .map(|(b, q)| {
                        let d = draws.bernoulli(*q);
                        *b || d
                    })
                    .collect();
                ParamValue::Bits(BitSet::new(out))
            }
            _ => unreachable!("ParamDistribution invariants checked at construction"),
        }
    }
}

/// Independent product of per-parameter distributions, aligned with a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution<S> {
    params: Vec<ParamDistribution<S>>,
}

impl<S: Scalar> JointDistribution<S> {
    pub fn new(params: Vec<ParamDistribution<S>>) -> Self {
        JointDistribution { params }
    }

    /// Recombines a base setting and delta list (the inverse of [`extract`](Self::extract)).
    pub fn from_parts(profile: &Profile, base: &Setting, deltas: &[DeltaDist<S>]) -> Result<Self, DistError> {
        let n = profile.len();
        if base.len() != n || deltas.len() != n {
            return Err(DistError::Arity {
                expected: n,
                got: if base.len() != n { base.len() } else { deltas.len() },
            });
        }
        profile
            .specs()
            .iter()
            .zip(base.values())
            .zip(deltas)
            .map(|((spec, b), d)| ParamDistribution::new(spec.clone(), b.clone(), d.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map(JointDistribution::new)
    }

    pub fn params(&self) -> &[ParamDistribution<S>] {
        &self.params
    }

    pub fn profile(&self) -> Profile {
        Profile::new(self.params.iter().map(|p| p.spec.clone()).collect())
            .expect("parameter names were validated when the profile was built")
    }

    /// Splits into the one-point base setting and the list of deltas.
    pub fn extract(&self) -> (Setting, Vec<DeltaDist<S>>) {
        let base = Setting::new(self.params.iter().map(|p| p.base.clone()).collect());
        let deltas = self.params.iter().map(|p| p.delta.clone()).collect();
        (base, deltas)
    }

    pub fn sample_one<D: DeltaDraws<S> + ?Sized>(&self, draws: &mut D) -> Setting {
        Setting::new(self.params.iter().map(|p| p.sample(draws)).collect())
    }

    pub fn sample<D: DeltaDraws<S> + ?Sized>(&self, num: usize, draws: &mut D) -> Vec<Setting> {
        (0..num).map(|_| self.sample_one(draws)).collect()
    }
}
