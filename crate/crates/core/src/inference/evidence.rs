use rayon::prelude::*;

use super::posterior::{InferenceMethod, JointPosterior, PosteriorEntry};
use crate::error::{GemError, Result};
use crate::math::normalize_log;
use crate::model::data::Dataset;
use crate::model::domain::Domain;
use crate::model::likelihood::{mask_shares, noisy_policy};
use crate::model::priors::{NoiseLevel, Priors};
use crate::model::schema::BlindSpotMask;

/// Largest mask support enumerated by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 20;

/// Expected optimal share of each demonstrated action under each mask.
///
/// The per-datapoint likelihood is `(1 - eta) * share + eta / |A|`, so this
/// table determines every likelihood over the enumerated support and can be
/// reused for any prefix of the data.
#[derive(Debug, Clone)]
pub struct Evidence {
    masks: Vec<BlindSpotMask>,
    log_mask_prior: Vec<f64>,
    etas: Vec<NoiseLevel>,
    log_eta_prior: Vec<f64>,
    /// `shares[m][i]`
    shares: Vec<Vec<f64>>,
    action_count: usize,
    len: usize,
}

impl Evidence {
    pub fn new(data: &Dataset, priors: &Priors, domain: &dyn Domain, cap: usize) -> Result<Self> {
        data.require_non_empty()?;
        check_schema(data, priors, domain)?;
        let support = priors.mask_support(cap)?;
        let noise = priors.noise_support();
        if support.is_empty() || noise.is_empty() {
            return Err(GemError::InvalidPriors("prior support is empty".into()));
        }
        let (masks, log_mask_prior): (Vec<_>, Vec<_>) = support.into_iter().unzip();
        let (etas, log_eta_prior): (Vec<_>, Vec<_>) = noise.into_iter().unzip();
        let shares = masks
            .par_iter()
            .map(|m| mask_shares(data, m, domain))
            .collect::<Result<Vec<_>>>()?;
        Ok(Evidence {
            masks,
            log_mask_prior,
            etas,
            log_eta_prior,
            shares,
            action_count: domain.actions().len(),
            len: data.len(),
        })
    }

    pub fn masks(&self) -> &[BlindSpotMask] {
        &self.masks
    }

    pub fn etas(&self) -> &[NoiseLevel] {
        &self.etas
    }

    pub fn log_mask_prior(&self) -> &[f64] {
        &self.log_mask_prior
    }

    pub fn log_eta_prior(&self) -> &[f64] {
        &self.log_eta_prior
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shares(&self, mask: usize) -> &[f64] {
        &self.shares[mask]
    }

    /// `ln P(D[..n] | masks[mask], eta)`.
    pub fn log_likelihood(&self, mask: usize, eta: f64, n: usize) -> f64 {
        self.shares[mask][..n]
            .iter()
            .map(|u| noisy_policy(*u, eta, self.action_count).ln())
            .sum()
    }

    /// Row-major `[mask][eta]` table of log likelihoods for the first `n`
    /// demonstrations.
    pub fn log_likelihood_table(&self, n: usize) -> Vec<f64> {
        let n = self.clamp(n);
        let etas: Vec<f64> = self.etas.iter().map(|e| e.value()).collect();
        (0..self.masks.len())
            .into_par_iter()
            .flat_map_iter(|m| {
                let etas = &etas;
                etas.iter().map(move |e| self.log_likelihood(m, *e, n))
            })
            .collect()
    }

    fn clamp(&self, n: usize) -> usize {
        n.min(self.len)
    }

    /// Exact joint posterior from the first `n` demonstrations.
    pub fn exact(&self, n: usize) -> Result<JointPosterior> {
        let table = self.log_likelihood_table(n);
        let e = self.etas.len();
        let log_weights: Vec<f64> = table
            .iter()
            .enumerate()
            .map(|(k, ll)| self.log_mask_prior[k / e] + self.log_eta_prior[k % e] + ll)
            .collect();
        let probs = normalize_log(&log_weights)
            .ok_or_else(|| GemError::InvalidPriors("every pair has zero posterior mass".into()))?;
        let entries = probs
            .into_iter()
            .enumerate()
            .map(|(k, p)| PosteriorEntry {
                mask: self.masks[k / e].clone(),
                eta: self.etas[k % e],
                p,
            })
            .collect();
        JointPosterior::new(entries, InferenceMethod::Exact)
    }

    /// Posterior over masks with the noise level held at `eta`.
    pub fn fixed_noise(&self, n: usize, eta: f64) -> Result<JointPosterior> {
        let level = NoiseLevel::new(eta)?;
        let n = self.clamp(n);
        let log_weights: Vec<f64> = (0..self.masks.len())
            .into_par_iter()
            .map(|m| self.log_mask_prior[m] + self.log_likelihood(m, eta, n))
            .collect();
        let probs = normalize_log(&log_weights)
            .ok_or_else(|| GemError::InvalidPriors("every mask has zero posterior mass".into()))?;
        let entries = probs
            .into_iter()
            .zip(&self.masks)
            .map(|(p, mask)| PosteriorEntry {
                mask: mask.clone(),
                eta: level,
                p,
            })
            .collect();
        JointPosterior::new(entries, InferenceMethod::FixedNoise { eta })
    }
}

pub(crate) fn check_schema(data: &Dataset, priors: &Priors, domain: &dyn Domain) -> Result<()> {
    let schema = domain.schema();
    if data.schema_id() != schema.id() {
        return Err(GemError::InvalidSchema(format!(
            "dataset uses schema `{}` but the domain is `{}`",
            data.schema_id(),
            schema.id()
        )));
    }
    priors.check_features(schema.len())
}

/// Exact joint posterior, refusing supports above [`DEFAULT_ENUMERATION_CAP`].
pub fn posterior_exact(data: &Dataset, priors: &Priors, domain: &dyn Domain) -> Result<JointPosterior> {
    posterior_exact_with_cap(data, priors, domain, DEFAULT_ENUMERATION_CAP)
}

pub fn posterior_exact_with_cap(
    data: &Dataset,
    priors: &Priors,
    domain: &dyn Domain,
    cap: usize,
) -> Result<JointPosterior> {
    Evidence::new(data, priors, domain, cap)?.exact(data.len())
}

/// Mask posterior with the noise level clamped to `eta_fixed`.
pub fn fixed_noise_posterior(
    data: &Dataset,
    priors: &Priors,
    domain: &dyn Domain,
    eta_fixed: f64,
) -> Result<JointPosterior> {
    NoiseLevel::new(eta_fixed)?;
    Evidence::new(data, priors, domain, DEFAULT_ENUMERATION_CAP)?.fixed_noise(data.len(), eta_fixed)
}
