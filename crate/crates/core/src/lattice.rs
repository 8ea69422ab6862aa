//! Parameter spaces as complete lattices.
//!
//! Four parameter kinds are supported, each a complete lattice:
//!
//! | kind          | carrier               | order        | meet / join   |
//! |---------------|-----------------------|--------------|---------------|
//! | `Integer`     | naturals plus ∞       | `≤`, ∞ top   | min / max     |
//! | `Boolean`     | `{0, 1}`              | implication  | and / or      |
//! | `OrderedEnum` | indices `0..k`        | index `≤`    | min / max     |
//! | `StringSet`   | bitvectors of width c | subset       | and / or      |
//!
//! A [`Setting`] is an element of the product lattice, ordered point-wise.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("cannot compare {left} with {right}: values belong to different parameter types")]
    TypeMismatch { left: String, right: String },
    #[error("setting length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{0}`: ordered enum needs at least two labels")]
    TooFewLabels(String),
    #[error("parameter `{0}`: duplicate label `{1}`")]
    DuplicateLabel(String, String),
    #[error("parameter `{0}`: string set needs at least one member")]
    EmptyMembers(String),
    #[error("parameter `{name}`: value {value} does not belong to its type")]
    IllTyped { name: String, value: String },
    #[error("setting has {got} values but the profile has {expected} parameters")]
    WrongArity { expected: usize, got: usize },
}

/// Non-negative integer extended with a symbolic top element.
///
/// `Infinity` only exists to close the lattice; it is never handed to an analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Extended {
    Finite(u64),
    Infinity,
}

impl Extended {
    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinity)
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinity => None,
        }
    }

    /// Saturating shift; infinity absorbs.
    pub fn saturating_add(self, k: u64) -> Self {
        match self {
            Extended::Finite(v) => Extended::Finite(v.saturating_add(k)),
            Extended::Infinity => Extended::Infinity,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinity => f.write_str("inf"),
        }
    }
}

/// Fixed-width bitvector; bit `i` stands for the `i`-th member of a string set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitSet(Vec<bool>);

impl BitSet {
    pub fn new(bits: Vec<bool>) -> Self {
        BitSet(bits)
    }

    pub fn empty(width: usize) -> Self {
        BitSet(vec![false; width])
    }

    pub fn full(width: usize) -> Self {
        BitSet(vec![true; width])
    }

    /// Parses a string of `0`/`1` characters, most significant member first.
    pub fn from_str01(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(BitSet)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        BitSet(self.0.iter().zip(&other.0).map(|(a, b)| f(*a, *b)).collect())
    }
}

impl fmt::Display for BitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ParamValue {
    Int(Extended),
    Bool(bool),
    Enum(usize),
    Bits(BitSet),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Bool(b) => write!(f, "{}", u8::from(*b)),
            ParamValue::Enum(i) => write!(f, "#{i}"),
            ParamValue::Bits(b) => write!(f, "{b}"),
        }
    }
}

impl ParamValue {
    pub fn int(v: u64) -> Self {
        ParamValue::Int(Extended::Finite(v))
    }

    pub const INFINITY: ParamValue = ParamValue::Int(Extended::Infinity);

    pub fn bits(s: &str) -> Self {
        ParamValue::Bits(BitSet::from_str01(s).expect("bit string of 0/1"))
    }

    fn mismatch(&self, other: &Self) -> LatticeError {
        LatticeError::TypeMismatch {
            left: self.to_string(),
            right: other.to_string(),
        }
    }

    /// `self ⊑ other`.
    pub fn leq(&self, other: &Self) -> Result<bool, LatticeError> {
        use ParamValue::*;
        match (self, other) {
            (Int(a), Int(b)) => Ok(a <= b),
            (Bool(a), Bool(b)) => Ok(!a || *b),
            (Enum(a), Enum(b)) => Ok(a <= b),
            (Bits(a), Bits(b)) if a.width() == b.width() => Ok(a.0.iter().zip(&b.0).all(|(x, y)| !x || *y)),
            _ => Err(self.mismatch(other)),
        }
    }

    pub fn meet(&self, other: &Self) -> Result<Self, LatticeError> {
        use ParamValue::*;
        match (self, other) {
            (Int(a), Int(b)) => Ok(Int(*a.min(b))),
            (Bool(a), Bool(b)) => Ok(Bool(*a && *b)),
            (Enum(a), Enum(b)) => Ok(Enum(*a.min(b))),
            (Bits(a), Bits(b)) if a.width() == b.width() => Ok(Bits(a.zip_with(b, |x, y| x && y))),
            _ => Err(self.mismatch(other)),
        }
    }

    pub fn join(&self, other: &Self) -> Result<Self, LatticeError> {
        use ParamValue::*;
        match (self, other) {
            (Int(a), Int(b)) => Ok(Int(*a.max(b))),
            (Bool(a), Bool(b)) => Ok(Bool(*a || *b)),
            (Enum(a), Enum(b)) => Ok(Enum(*a.max(b))),
            (Bits(a), Bits(b)) if a.width() == b.width() => Ok(Bits(a.zip_with(b, |x, y| x || y))),
            _ => Err(self.mismatch(other)),
        }
    }

    /// Scalar size used by cost models: the integer itself, the enum index,
    /// or the number of selected set members.
    pub fn magnitude(&self) -> f64 {
        match self {
            ParamValue::Int(Extended::Finite(v)) => *v as f64,
            ParamValue::Int(Extended::Infinity) => f64::INFINITY,
            ParamValue::Bool(b) => f64::from(u8::from(*b)),
            ParamValue::Enum(i) => *i as f64,
            ParamValue::Bits(b) => b.count_ones() as f64,
        }
    }

    pub fn contains_infinity(&self) -> bool {
        matches!(self, ParamValue::Int(Extended::Infinity))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    Integer,
    Boolean,
    OrderedEnum { labels: Vec<String> },
    StringSet { members: Vec<String> },
}

impl ParamType {
    pub fn bottom(&self) -> ParamValue {
        match self {
            ParamType::Integer => ParamValue::int(0),
            ParamType::Boolean => ParamValue::Bool(false),
            ParamType::OrderedEnum { .. } => ParamValue::Enum(0),
            ParamType::StringSet { members } => ParamValue::Bits(BitSet::empty(members.len())),
        }
    }

    /// The full bitvector is taken as top for string sets.
    pub fn top(&self) -> ParamValue {
        match self {
            ParamType::Integer => ParamValue::INFINITY,
            ParamType::Boolean => ParamValue::Bool(true),
            ParamType::OrderedEnum { labels } => ParamValue::Enum(labels.len() - 1),
            ParamType::StringSet { members } => ParamValue::Bits(BitSet::full(members.len())),
        }
    }

    pub fn admits(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamType::Integer, ParamValue::Int(_)) => true,
            (ParamType::Boolean, ParamValue::Bool(_)) => true,
            (ParamType::OrderedEnum { labels }, ParamValue::Enum(i)) => *i < labels.len(),
            (ParamType::StringSet { members }, ParamValue::Bits(b)) => b.width() == members.len(),
            _ => false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ParamType::Integer => "integer",
            ParamType::Boolean => "boolean",
            ParamType::OrderedEnum { .. } => "ordered_enum",
            ParamType::StringSet { .. } => "string_set",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub ptype: ParamType,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, ptype: ParamType) -> Self {
        ParamSpec {
            name: name.into(),
            ptype,
        }
    }

    pub fn integer(name: impl Into<String>) -> Self {
        Self::new(name, ParamType::Integer)
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Self::new(name, ParamType::Boolean)
    }

    pub fn ordered_enum(name: impl Into<String>, labels: &[&str]) -> Self {
        Self::new(
            name,
            ParamType::OrderedEnum {
                labels: labels.iter().map(|s| s.to_string()).collect(),
            },
        )
    }

    pub fn string_set(name: impl Into<String>, members: &[&str]) -> Self {
        Self::new(
            name,
            ParamType::StringSet {
                members: members.iter().map(|s| s.to_string()).collect(),
            },
        )
    }

    fn validate(&self) -> Result<(), ProfileError> {
        match &self.ptype {
            ParamType::OrderedEnum { labels } => {
                if labels.len() < 2 {
                    return Err(ProfileError::TooFewLabels(self.name.clone()));
                }
                check_distinct(&self.name, labels)
            }
            ParamType::StringSet { members } => {
                if members.is_empty() {
                    return Err(ProfileError::EmptyMembers(self.name.clone()));
                }
                check_distinct(&self.name, members)
            }
            _ => Ok(()),
        }
    }

    pub fn check(&self, v: &ParamValue) -> Result<(), ProfileError> {
        if self.ptype.admits(v) {
            Ok(())
        } else {
            Err(ProfileError::IllTyped {
                name: self.name.clone(),
                value: v.to_string(),
            })
        }
    }
}

fn check_distinct(name: &str, items: &[String]) -> Result<(), ProfileError> {
    let mut seen = HashSet::new();
    for s in items {
        if !seen.insert(s) {
            return Err(ProfileError::DuplicateLabel(name.to_string(), s.clone()));
        }
    }
    Ok(())
}

/// Ordered list of parameter descriptors; settings are aligned positionally with it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamSpec>", into = "Vec<ParamSpec>")]
pub struct Profile(Vec<ParamSpec>);

impl TryFrom<Vec<ParamSpec>> for Profile {
    type Error = ProfileError;

    fn try_from(specs: Vec<ParamSpec>) -> Result<Self, Self::Error> {
        Profile::new(specs)
    }
}

impl From<Profile> for Vec<ParamSpec> {
    fn from(p: Profile) -> Self {
        p.0
    }
}

impl Profile {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self, ProfileError> {
        let mut names = HashSet::new();
        for s in &specs {
            if !names.insert(s.name.as_str()) {
                return Err(ProfileError::DuplicateName(s.name.clone()));
            }
            s.validate()?;
        }
        Ok(Profile(specs))
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|s| s.name == name)
    }

    pub fn bottom(&self) -> Setting {
        Setting(self.0.iter().map(|s| s.ptype.bottom()).collect())
    }

    pub fn top(&self) -> Setting {
        Setting(self.0.iter().map(|s| s.ptype.top()).collect())
    }

    pub fn check(&self, p: &Setting) -> Result<(), ProfileError> {
        if p.len() != self.len() {
            return Err(ProfileError::WrongArity {
                expected: self.len(),
                got: p.len(),
            });
        }
        self.0.iter().zip(p.values()).try_for_each(|(spec, v)| spec.check(v))
    }
}

/// A joint parameter assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Setting(Vec<ParamValue>);

impl Setting {
    pub fn new(values: Vec<ParamValue>) -> Self {
        Setting(values)
    }

    /// Convenience for all-integer profiles.
    pub fn ints(values: &[u64]) -> Self {
        Setting(values.iter().map(|v| ParamValue::int(*v)).collect())
    }

    pub fn values(&self) -> &[ParamValue] {
        &self.0
    }

    pub fn into_values(self) -> Vec<ParamValue> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn aligned(&self, other: &Self) -> Result<(), LatticeError> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(LatticeError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            })
        }
    }

    pub fn leq(&self, other: &Self) -> Result<bool, LatticeError> {
        self.aligned(other)?;
        for (a, b) in self.0.iter().zip(&other.0) {
            if !a.leq(b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn meet(&self, other: &Self) -> Result<Self, LatticeError> {
        self.aligned(other)?;
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.meet(b))
            .collect::<Result<_, _>>()
            .map(Setting)
    }

    pub fn join(&self, other: &Self) -> Result<Self, LatticeError> {
        self.aligned(other)?;
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.join(b))
            .collect::<Result<_, _>>()
            .map(Setting)
    }

    pub fn contains_infinity(&self) -> bool {
        self.0.iter().any(ParamValue::contains_infinity)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}
