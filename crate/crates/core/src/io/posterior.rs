use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;
use crate::error::{GemError, Result};
use crate::inference::{InferenceMethod, JointPosterior, PosteriorEntry};
use crate::model::priors::NoiseLevel;
use crate::model::schema::{BlindSpotMask, FeatureSchema};

const POSTERIOR_KIND: &str = "posterior";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SupportEntry {
    pub mask: String,
    pub eta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MaskProbability {
    pub mask: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EtaProbability {
    pub eta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ArgmaxEntry {
    pub mask: String,
    pub eta: f64,
    pub mask_tie: bool,
    pub eta_tie: bool,
}

/// Serialized joint posterior. `support` lists every pair with its
/// probability, sorted by mask then noise; marginals are derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PosteriorDocument {
    pub format_version: u32,
    pub kind: String,
    pub method: InferenceMethod,
    pub schema_id: String,
    /// Feature names in mask bit order.
    pub features: Vec<String>,
    pub data_checksum: String,
    pub n: usize,
    pub support: Vec<SupportEntry>,
    pub mask_marginal: Vec<MaskProbability>,
    pub eta_marginal: Vec<EtaProbability>,
    pub argmax: ArgmaxEntry,
}

impl PosteriorDocument {
    pub fn new(posterior: &JointPosterior, schema: &FeatureSchema, data_checksum: String, n: usize) -> Self {
        let argmax = posterior.argmax();
        PosteriorDocument {
            format_version: FORMAT_VERSION,
            kind: POSTERIOR_KIND.into(),
            method: posterior.method().clone(),
            schema_id: schema.id().to_string(),
            features: schema.features().iter().map(|f| f.name.clone()).collect(),
            data_checksum,
            n,
            support: posterior
                .entries()
                .iter()
                .map(|e| SupportEntry {
                    mask: e.mask.to_bit_string(),
                    eta: e.eta.value(),
                    p: e.p,
                })
                .collect(),
            mask_marginal: posterior
                .mask_marginal()
                .into_iter()
                .map(|(m, p)| MaskProbability {
                    mask: m.to_bit_string(),
                    p,
                })
                .collect(),
            eta_marginal: posterior
                .eta_marginal()
                .into_iter()
                .map(|(e, p)| EtaProbability { eta: e.value(), p })
                .collect(),
            argmax: ArgmaxEntry {
                mask: argmax.mask.to_bit_string(),
                eta: argmax.eta.value(),
                mask_tie: argmax.mask_tie,
                eta_tie: argmax.eta_tie,
            },
        }
    }

    /// Rebuilds the joint posterior, checking version, kind and that every
    /// mask has one bit per feature.
    pub fn to_posterior(&self) -> Result<JointPosterior> {
        if self.format_version != FORMAT_VERSION || self.kind != POSTERIOR_KIND {
            return Err(GemError::InvalidConfig(vec![format!(
                "expected a version {FORMAT_VERSION} posterior document, found kind `{}` version {}",
                self.kind, self.format_version
            )]));
        }
        let entries = self
            .support
            .iter()
            .map(|e| {
                let mask = BlindSpotMask::parse(&e.mask)?;
                if mask.len() != self.features.len() {
                    return Err(GemError::SchemaMismatch {
                        expected: self.features.len(),
                        found: mask.len(),
                    });
                }
                Ok(PosteriorEntry {
                    mask,
                    eta: NoiseLevel::new(e.eta)?,
                    p: e.p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        JointPosterior::new(entries, self.method.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
