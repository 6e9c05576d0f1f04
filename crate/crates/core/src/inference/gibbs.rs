use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evidence::{check_schema, Evidence, DEFAULT_ENUMERATION_CAP};
use super::posterior::{InferenceMethod, JointPosterior, PosteriorEntry};
use crate::error::{GemError, Result};
use crate::math::{normalize_log, sample_categorical, sample_log_categorical};
use crate::model::data::Dataset;
use crate::model::domain::Domain;
use crate::model::likelihood::{mask_shares, noisy_policy};
use crate::model::priors::{NoiseLevel, Priors};
use crate::model::schema::BlindSpotMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Sweeps per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    /// Drawn from the OS when absent; the seed used is recorded in the result.
    pub seed: Option<u64>,
    /// Above this many masks the sampler updates one mask bit at a time.
    pub enumeration_cap: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 1100,
            burn_in: 100,
            thin: 1,
            chains: 1,
            seed: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl GibbsConfig {
    pub fn seeded(seed: u64) -> Self {
        GibbsConfig {
            seed: Some(seed),
            ..GibbsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.burn_in >= self.iterations {
            problems.push(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            problems.push("thin: must be at least 1".to_string());
        }
        if self.chains == 0 {
            problems.push("chains: must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GemError::InvalidConfig(problems))
        }
    }

    /// Kept draws per chain.
    pub fn samples_per_chain(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    fn keeps(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in) % self.thin == 0
    }

    fn resolve_seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| rand::rngs::OsRng.gen())
    }

    fn method(&self, seed: u64) -> InferenceMethod {
        InferenceMethod::Gibbs {
            seed,
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            samples: self.chains * self.samples_per_chain(),
        }
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

impl Evidence {
    /// Collapsed Gibbs over the enumerated support using the first `n`
    /// demonstrations. Each step is an exact categorical draw from one
    /// conditional read off the cached likelihood table.
    pub fn gibbs(&self, n: usize, config: &GibbsConfig) -> Result<JointPosterior> {
        config.validate()?;
        let seed = config.resolve_seed();
        let table = self.log_likelihood_table(n);
        let (masks, etas) = (self.masks().len(), self.etas().len());
        let eta_prior = normalize_log(self.log_eta_prior()).expect("positive prior mass");
        let mut counts = vec![0u64; masks * etas];
        let mut mask_weights = vec![0.0; masks];
        let mut eta_weights = vec![0.0; etas];
        for chain in 0..config.chains {
            let mut rng = chain_rng(seed, chain);
            // the first mask draw conditions only on eta
            let mut e = sample_categorical(&eta_prior, &mut rng);
            for t in 0..config.iterations {
                for (m, w) in mask_weights.iter_mut().enumerate() {
                    *w = self.log_mask_prior()[m] + table[m * etas + e];
                }
                let b = sample_log_categorical(&mask_weights, &mut rng);
                for (k, w) in eta_weights.iter_mut().enumerate() {
                    *w = self.log_eta_prior()[k] + table[b * etas + k];
                }
                e = sample_log_categorical(&eta_weights, &mut rng);
                if config.keeps(t) {
                    counts[b * etas + e] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(k, c)| PosteriorEntry {
                mask: self.masks()[k / etas].clone(),
                eta: self.etas()[k % etas],
                p: *c as f64 / total as f64,
            })
            .collect();
        JointPosterior::new(entries, config.method(seed))
    }
}

/// Collapsed Gibbs sampling of `(mask, eta)`.
///
/// Explicit supports and factored supports within the enumeration cap draw
/// the whole mask at once. Larger factored supports draw one mask bit at a
/// time, computing likelihoods only for masks the chain visits.
pub fn gibbs_posterior(
    data: &Dataset,
    priors: &Priors,
    domain: &dyn Domain,
    config: &GibbsConfig,
) -> Result<JointPosterior> {
    config.validate()?;
    let cap = if priors.explicit_support().is_some() {
        usize::MAX
    } else {
        config.enumeration_cap
    };
    match Evidence::new(data, priors, domain, cap) {
        Ok(evidence) => evidence.gibbs(data.len(), config),
        Err(GemError::SupportTooLarge { .. }) => bitwise_gibbs(data, priors, domain, config),
        Err(e) => Err(e),
    }
}

struct LazyShares<'a> {
    data: &'a Dataset,
    domain: &'a dyn Domain,
    cache: HashMap<BlindSpotMask, Vec<f64>>,
}

impl LazyShares<'_> {
    fn log_likelihood(&mut self, mask: &BlindSpotMask, eta: f64) -> Result<f64> {
        if !self.cache.contains_key(mask) {
            let shares = mask_shares(self.data, mask, self.domain)?;
            self.cache.insert(mask.clone(), shares);
        }
        let a = self.domain.actions().len();
        Ok(self.cache[mask]
            .iter()
            .map(|u| noisy_policy(*u, eta, a).ln())
            .sum())
    }
}

fn bitwise_gibbs(
    data: &Dataset,
    priors: &Priors,
    domain: &dyn Domain,
    config: &GibbsConfig,
) -> Result<JointPosterior> {
    data.require_non_empty()?;
    check_schema(data, priors, domain)?;
    let seed = config.resolve_seed();
    let noise = priors.noise_support();
    let (etas, log_eta_prior): (Vec<NoiseLevel>, Vec<f64>) = noise.into_iter().unzip();
    let eta_prior = normalize_log(&log_eta_prior)
        .ok_or_else(|| GemError::InvalidPriors("noise prior has no mass".into()))?;
    let q = priors.q();
    let mut shares = LazyShares {
        data,
        domain,
        cache: HashMap::new(),
    };
    let mut counts: BTreeMap<(BlindSpotMask, usize), u64> = BTreeMap::new();
    for chain in 0..config.chains {
        let mut rng = chain_rng(seed, chain);
        let mut bits: Vec<bool> = q.iter().map(|qj| rng.gen::<f64>() < *qj).collect();
        let mut e = sample_categorical(&eta_prior, &mut rng);
        for t in 0..config.iterations {
            let eta = etas[e].value();
            for j in 0..bits.len() {
                if q[j] <= 0.0 || q[j] >= 1.0 {
                    continue;
                }
                bits[j] = false;
                let off = (1.0 - q[j]).ln() + shares.log_likelihood(&BlindSpotMask::from_bits(bits.clone()), eta)?;
                bits[j] = true;
                let on = q[j].ln() + shares.log_likelihood(&BlindSpotMask::from_bits(bits.clone()), eta)?;
                bits[j] = sample_log_categorical(&[off, on], &mut rng) == 1;
            }
            let mask = BlindSpotMask::from_bits(bits.clone());
            let mut eta_weights = Vec::with_capacity(etas.len());
            for (k, lp) in log_eta_prior.iter().enumerate() {
                eta_weights.push(lp + shares.log_likelihood(&mask, etas[k].value())?);
            }
            e = sample_log_categorical(&eta_weights, &mut rng);
            if config.keeps(t) {
                *counts.entry((mask, e)).or_default() += 1;
            }
        }
    }
    let total: u64 = counts.values().sum();
    let entries = counts
        .into_iter()
        .map(|((mask, e), c)| PosteriorEntry {
            mask,
            eta: etas[e],
            p: c as f64 / total as f64,
        })
        .collect();
    JointPosterior::new(entries, config.method(seed))
}
