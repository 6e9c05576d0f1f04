//! Feature schemas and the three views of a world state: the true state,
//! the masked observation, and the implicit (fully resolved) state.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

/// Index of a value within its feature's domain.
pub type ValueIndex = u16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered list of discrete features. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FeatureSchema {
    id: String,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    id: String,
    features: Vec<Feature>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = GemError;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FeatureSchema::new(raw.id, raw.features)
    }
}

impl From<FeatureSchema> for RawSchema {
    fn from(schema: FeatureSchema) -> Self {
        RawSchema {
            id: schema.id,
            features: schema.features,
        }
    }
}

impl FeatureSchema {
    pub fn new(id: impl Into<String>, features: Vec<Feature>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &features {
            if f.values.is_empty() {
                return Err(GemError::InvalidSchema(format!(
                    "feature `{}` has an empty domain",
                    f.name
                )));
            }
            if f.values.len() > ValueIndex::MAX as usize {
                return Err(GemError::InvalidSchema(format!(
                    "feature `{}` has too many values",
                    f.name
                )));
            }
            let distinct: HashSet<&str> = f.values.iter().map(String::as_str).collect();
            if distinct.len() != f.values.len() {
                return Err(GemError::InvalidSchema(format!(
                    "feature `{}` repeats a value",
                    f.name
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(GemError::InvalidSchema(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        Ok(FeatureSchema {
            id: id.into(),
            features,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn domain_size(&self, feature: usize) -> usize {
        self.features[feature].values.len()
    }

    pub fn value_index(&self, feature: usize, value: &str) -> Result<ValueIndex> {
        let f = &self.features[feature];
        f.values
            .iter()
            .position(|v| v == value)
            .map(|i| i as ValueIndex)
            .ok_or_else(|| GemError::ValueOutOfDomain {
                feature: f.name.clone(),
                value: value.to_string(),
            })
    }

    pub fn value_name(&self, feature: usize, value: ValueIndex) -> &str {
        &self.features[feature].values[value as usize]
    }

    /// Builds a state from value indices, checking length and domains.
    pub fn state(&self, values: Vec<ValueIndex>) -> Result<State> {
        self.check_len(values.len())?;
        for (j, &v) in values.iter().enumerate() {
            if v as usize >= self.domain_size(j) {
                return Err(GemError::ValueOutOfDomain {
                    feature: self.features[j].name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(State(values))
    }

    /// Builds a state from value names in schema order.
    pub fn state_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<State> {
        self.check_len(names.len())?;
        let values = names
            .iter()
            .enumerate()
            .map(|(j, n)| self.value_index(j, n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(State(values))
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(GemError::SchemaMismatch {
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }

    pub fn zero_mask(&self) -> BlindSpotMask {
        BlindSpotMask::zeros(self.len())
    }

    /// Every mask over this schema, in lexicographic bit-string order.
    pub fn all_masks(&self) -> Vec<BlindSpotMask> {
        let k = self.len();
        assert!(k < 64, "cannot enumerate masks over {k} features");
        (0u64..(1u64 << k))
            .map(|bits| BlindSpotMask::from_fn(k, |j| (bits >> (k - 1 - j)) & 1 == 1))
            .collect()
    }
}

/// A complete assignment of one value to every feature.
///
/// Used both for the true world state and for implicit states, which are
/// fully resolved guesses expressed in the same representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(Vec<ValueIndex>);

pub type TrueState = State;
pub type ImplicitState = State;

impl State {
    /// Constructs a state without domain checks. Callers own validity.
    pub fn from_raw(values: Vec<ValueIndex>) -> Self {
        State(values)
    }

    pub fn values(&self) -> &[ValueIndex] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> ValueIndex {
        self.0[feature]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn with(&self, feature: usize, value: ValueIndex) -> State {
        let mut v = self.0.clone();
        v[feature] = value;
        State(v)
    }

    pub fn into_values(self) -> Vec<ValueIndex> {
        self.0
    }

    /// True when this state agrees with `obs` on every observed feature.
    pub fn consistent_with(&self, obs: &Observation) -> bool {
        self.0.len() == obs.len()
            && self
                .0
                .iter()
                .zip(obs.values())
                .all(|(v, o)| o.is_none_or(|o| o == *v))
    }
}

/// Binary mask over features; `true` marks a feature the actor cannot see.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlindSpotMask(Vec<bool>);

impl BlindSpotMask {
    pub fn zeros(len: usize) -> Self {
        BlindSpotMask(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        BlindSpotMask(vec![true; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BlindSpotMask(bits)
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> bool) -> Self {
        BlindSpotMask((0..len).map(f).collect())
    }

    /// Mask with ones exactly at `hidden`.
    pub fn with_hidden(len: usize, hidden: &[usize]) -> Self {
        Self::from_fn(len, |j| hidden.contains(&j))
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(GemError::InvalidConfig(vec![format!(
                    "mask `{bits}` contains `{other}`; expected only 0 and 1"
                )])),
            })
            .collect::<Result<Vec<_>>>()
            .map(BlindSpotMask)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_hidden(&self, feature: usize) -> bool {
        self.0[feature]
    }

    pub fn count_hidden(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn hidden(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j)
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for BlindSpotMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// A state as seen through a mask: `None` marks an unobserved feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation(Vec<Option<ValueIndex>>);

impl Observation {
    pub fn from_raw(values: Vec<Option<ValueIndex>>) -> Self {
        Observation(values)
    }

    pub fn values(&self) -> &[Option<ValueIndex>] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> Option<ValueIndex> {
        self.0[feature]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    pub fn unobserved(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(j, _)| j)
    }

    /// Converts to a state when nothing is masked.
    pub fn to_state(&self) -> Option<State> {
        self.0.iter().copied().collect::<Option<Vec<_>>>().map(State)
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (j, v) in self.0.iter().enumerate() {
            if j > 0 {
                f.write_str(",")?;
            }
            match v {
                Some(v) => write!(f, "{v}")?,
                None => f.write_str("?")?,
            }
        }
        f.write_str(")")
    }
}
