use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::priors::NoiseLevel;
use crate::model::schema::BlindSpotMask;

/// Floor applied to the true mask's mass before taking its log.
pub const KL_FLOOR: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-12;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEntry {
    pub mask: BlindSpotMask,
    pub eta: NoiseLevel,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InferenceMethod {
    Exact,
    #[serde(rename_all = "kebab-case")]
    Gibbs {
        seed: u64,
        chains: usize,
        iterations: usize,
        burn_in: usize,
        thin: usize,
        samples: usize,
    },
    #[serde(rename_all = "kebab-case")]
    FixedNoise { eta: f64 },
}

impl InferenceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            InferenceMethod::Exact => "exact",
            InferenceMethod::Gibbs { .. } => "gibbs",
            InferenceMethod::FixedNoise { .. } => "fixed-eta",
        }
    }
}

/// Marginal maxima with tie flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Argmax {
    pub mask: BlindSpotMask,
    pub eta: NoiseLevel,
    pub mask_tie: bool,
    pub eta_tie: bool,
}

/// Probability table over (mask, noise) pairs, sorted by mask then noise.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    entries: Vec<PosteriorEntry>,
    method: InferenceMethod,
}

impl JointPosterior {
    pub fn new(mut entries: Vec<PosteriorEntry>, method: InferenceMethod) -> Result<Self> {
        if entries.is_empty() {
            return Err(GemError::InvalidPriors("posterior support is empty".into()));
        }
        let total: f64 = entries.iter().map(|e| e.p).sum();
        if entries.iter().any(|e| !(e.p >= 0.0)) || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(GemError::InvalidPriors(format!(
                "posterior probabilities must be non-negative and sum to 1 (sum {total})"
            )));
        }
        entries.sort_by(|a, b| a.mask.cmp(&b.mask).then(a.eta.value().total_cmp(&b.eta.value())));
        Ok(JointPosterior { entries, method })
    }

    pub fn entries(&self) -> &[PosteriorEntry] {
        &self.entries
    }

    pub fn method(&self) -> &InferenceMethod {
        &self.method
    }

    pub fn probability(&self, mask: &BlindSpotMask, eta: NoiseLevel) -> f64 {
        self.entries
            .iter()
            .filter(|e| &e.mask == mask && e.eta == eta)
            .map(|e| e.p)
            .sum()
    }

    /// Blind-spot marginal in mask order.
    pub fn mask_marginal(&self) -> Vec<(BlindSpotMask, f64)> {
        let mut out: BTreeMap<&BlindSpotMask, f64> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(&e.mask).or_default() += e.p;
        }
        out.into_iter().map(|(m, p)| (m.clone(), p)).collect()
    }

    /// Noise marginal in increasing order.
    pub fn eta_marginal(&self) -> Vec<(NoiseLevel, f64)> {
        let mut out: Vec<(NoiseLevel, f64)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(eta, _)| *eta == e.eta) {
                Some((_, p)) => *p += e.p,
                None => out.push((e.eta, e.p)),
            }
        }
        out.sort_by(|a, b| a.0.value().total_cmp(&b.0.value()));
        out
    }

    pub fn mask_probability(&self, mask: &BlindSpotMask) -> f64 {
        self.entries.iter().filter(|e| &e.mask == mask).map(|e| e.p).sum()
    }

    /// Most probable mask and noise level taken from their marginals.
    /// Near-ties go to the smaller mask or noise level and raise a flag.
    pub fn argmax(&self) -> Argmax {
        let (mask, mask_tie) = first_max(self.mask_marginal());
        let (eta, eta_tie) = first_max(self.eta_marginal());
        Argmax {
            mask,
            eta,
            mask_tie,
            eta_tie,
        }
    }

    /// The `k` most probable pairs, ties in table order.
    pub fn top(&self, k: usize) -> Vec<&PosteriorEntry> {
        let mut refs: Vec<&PosteriorEntry> = self.entries.iter().collect();
        refs.sort_by(|a, b| b.p.total_cmp(&a.p));
        refs.truncate(k);
        refs
    }
}

fn first_max<T>(marginal: Vec<(T, f64)>) -> (T, bool) {
    let best = marginal.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
    let mut near = marginal.into_iter().filter(|(_, p)| best - p <= TIE_TOLERANCE);
    let (winner, _) = near.next().expect("non-empty marginal");
    (winner, near.next().is_some())
}

/// Pair of the mask and noise argmaxes.
pub fn argmax_prediction(posterior: &JointPosterior) -> (BlindSpotMask, NoiseLevel) {
    let a = posterior.argmax();
    (a.mask, a.eta)
}

/// `-ln` of the posterior mass on `true_mask`, floored at [`KL_FLOOR`].
pub fn kl_to_truth(posterior: &JointPosterior, true_mask: &BlindSpotMask) -> f64 {
    -posterior.mask_probability(true_mask).max(KL_FLOOR).ln()
}

/// Total variation distance between two joint posteriors over the union
/// of their supports.
pub fn total_variation(a: &JointPosterior, b: &JointPosterior) -> f64 {
    let mut diff: BTreeMap<(&BlindSpotMask, u64), f64> = BTreeMap::new();
    for e in &a.entries {
        *diff.entry((&e.mask, e.eta.value().to_bits())).or_default() += e.p;
    }
    for e in &b.entries {
        *diff.entry((&e.mask, e.eta.value().to_bits())).or_default() -= e.p;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mask: &str, eta: f64, p: f64) -> PosteriorEntry {
        PosteriorEntry {
            mask: BlindSpotMask::parse(mask).unwrap(),
            eta: NoiseLevel::new(eta).unwrap(),
            p,
        }
    }

    #[test]
    fn kl_closed_forms() {
        let m = BlindSpotMask::parse("001").unwrap();
        let point = JointPosterior::new(vec![entry("001", 0.1, 1.0)], InferenceMethod::Exact).unwrap();
        assert_eq!(kl_to_truth(&point, &m), 0.0);
        let split = JointPosterior::new(
            vec![entry("001", 0.1, 0.4), entry("001", 0.2, 0.3), entry("000", 0.1, 0.3)],
            InferenceMethod::Exact,
        )
        .unwrap();
        assert!((kl_to_truth(&split, &m) - 0.356_674_943_938_732_4).abs() < 1e-12);
        let miss = BlindSpotMask::parse("111").unwrap();
        assert!((kl_to_truth(&split, &miss) - 20.723_265_836_946_41).abs() < 1e-9);
    }

    #[test]
    fn argmax_breaks_ties_low_and_flags_them() {
        let p = JointPosterior::new(
            vec![entry("010", 0.2, 0.25), entry("001", 0.4, 0.25), entry("100", 0.2, 0.5)],
            InferenceMethod::Exact,
        )
        .unwrap();
        let a = p.argmax();
        assert_eq!(a.mask.to_bit_string(), "100");
        assert!(!a.mask_tie);
        assert_eq!(a.eta.value(), 0.2);
        assert!(!a.eta_tie);

        let tie = JointPosterior::new(
            vec![entry("010", 0.2, 0.5), entry("001", 0.4, 0.5)],
            InferenceMethod::Exact,
        )
        .unwrap();
        let a = tie.argmax();
        assert_eq!(a.mask.to_bit_string(), "001");
        assert!(a.mask_tie);
        assert_eq!(a.eta.value(), 0.2);
        assert!(a.eta_tie);
    }

    #[test]
    fn rejects_unnormalized_tables() {
        assert!(JointPosterior::new(vec![entry("0", 0.1, 0.9)], InferenceMethod::Exact).is_err());
        assert!(JointPosterior::new(vec![], InferenceMethod::Exact).is_err());
    }

    #[test]
    fn total_variation_over_union() {
        let a = JointPosterior::new(vec![entry("0", 0.1, 1.0)], InferenceMethod::Exact).unwrap();
        let b = JointPosterior::new(
            vec![entry("0", 0.1, 0.5), entry("1", 0.1, 0.5)],
            InferenceMethod::Exact,
        )
        .unwrap();
        assert!((total_variation(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(total_variation(&a, &a), 0.0);
    }
}
