use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::schema::BlindSpotMask;

/// The nine admissible execution-noise values, ascending.
pub const NOISE_SUPPORT: [f64; 9] = [0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40];

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Probability that the actor deviates from its optimal policy.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    /// Any noise strictly inside (0, 1). Used for clamped-noise baselines.
    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta > 0.0 && eta < 1.0 {
            Ok(NoiseLevel(eta))
        } else {
            Err(GemError::InvalidNoise(eta))
        }
    }

    /// A noise level drawn from [`NOISE_SUPPORT`].
    pub fn from_support(eta: f64) -> Result<Self> {
        NOISE_SUPPORT
            .iter()
            .find(|s| (**s - eta).abs() < 1e-12)
            .map(|s| NoiseLevel(*s))
            .ok_or(GemError::NotInNoiseSupport(eta))
    }

    pub fn support() -> impl Iterator<Item = NoiseLevel> {
        NOISE_SUPPORT.iter().map(|e| NoiseLevel(*e))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMask {
    #[serde(with = "mask_string")]
    pub mask: BlindSpotMask,
    pub weight: f64,
}

/// Prior over blind-spot masks and noise levels.
///
/// The mask prior is either factored (independent Bernoulli flags with
/// per-feature `q`) or an explicit weighted support which then replaces the
/// factored form entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPriors", into = "RawPriors")]
pub struct Priors {
    q: Vec<f64>,
    alpha: Vec<f64>,
    support: Option<Vec<WeightedMask>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct RawPriors {
    q: Vec<f64>,
    alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<Vec<WeightedMask>>,
}

impl TryFrom<RawPriors> for Priors {
    type Error = GemError;

    fn try_from(raw: RawPriors) -> Result<Self> {
        Priors::new(raw.q, raw.alpha, raw.support)
    }
}

impl From<Priors> for RawPriors {
    fn from(p: Priors) -> Self {
        RawPriors {
            q: p.q,
            alpha: p.alpha,
            support: p.support,
        }
    }
}

impl Priors {
    pub fn new(q: Vec<f64>, alpha: Vec<f64>, support: Option<Vec<WeightedMask>>) -> Result<Self> {
        let mut problems = Vec::new();
        if q.iter().any(|x| !(0.0..=1.0).contains(x)) {
            problems.push("q: every entry must lie in [0, 1]".to_string());
        }
        if alpha.len() != NOISE_SUPPORT.len() {
            problems.push(format!(
                "alpha: expected {} weights, found {}",
                NOISE_SUPPORT.len(),
                alpha.len()
            ));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            problems.push("alpha: weights must be non-negative".to_string());
        }
        if (alpha.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
            problems.push("alpha: weights must sum to 1".to_string());
        }
        if let Some(support) = &support {
            if support.is_empty() {
                problems.push("support: must not be empty".to_string());
            }
            if support.iter().any(|w| !w.weight.is_finite() || w.weight < 0.0) {
                problems.push("support: weights must be non-negative".to_string());
            }
            if (support.iter().map(|w| w.weight).sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
                problems.push("support: weights must sum to 1".to_string());
            }
            if support.iter().any(|w| w.mask.len() != q.len()) {
                problems.push("support: mask length differs from q".to_string());
            }
        }
        if !problems.is_empty() {
            return Err(GemError::InvalidPriors(problems.join("; ")));
        }
        Ok(Priors { q, alpha, support })
    }

    /// `q = 0.5` on every feature and a uniform noise prior.
    pub fn uniform(features: usize) -> Self {
        Priors {
            q: vec![0.5; features],
            alpha: vec![1.0 / NOISE_SUPPORT.len() as f64; NOISE_SUPPORT.len()],
            support: None,
        }
    }

    /// Uniform weights over an explicit list of masks, uniform noise prior.
    pub fn uniform_support(features: usize, masks: Vec<BlindSpotMask>) -> Result<Self> {
        let w = 1.0 / masks.len().max(1) as f64;
        let support = masks
            .into_iter()
            .map(|mask| WeightedMask { mask, weight: w })
            .collect();
        Priors::new(
            vec![0.5; features],
            vec![1.0 / NOISE_SUPPORT.len() as f64; NOISE_SUPPORT.len()],
            Some(support),
        )
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Result<Self> {
        self.alpha = alpha;
        Priors::new(self.q, self.alpha, self.support)
    }

    pub fn feature_count(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn explicit_support(&self) -> Option<&[WeightedMask]> {
        self.support.as_deref()
    }

    pub fn check_features(&self, features: usize) -> Result<()> {
        if self.q.len() != features {
            return Err(GemError::SchemaMismatch {
                expected: features,
                found: self.q.len(),
            });
        }
        Ok(())
    }

    /// Number of masks carrying prior mass (saturating for huge schemas).
    pub fn support_size(&self) -> u128 {
        match &self.support {
            Some(s) => s.iter().filter(|w| w.weight > 0.0).count() as u128,
            None => self.q.iter().fold(1u128, |acc, q| {
                if *q > 0.0 && *q < 1.0 {
                    acc.saturating_mul(2)
                } else {
                    acc
                }
            }),
        }
    }

    pub fn log_mask_prior(&self, mask: &BlindSpotMask) -> f64 {
        match &self.support {
            Some(s) => s
                .iter()
                .find(|w| &w.mask == mask)
                .map_or(f64::NEG_INFINITY, |w| w.weight.ln()),
            None => mask
                .bits()
                .iter()
                .zip(&self.q)
                .map(|(b, q)| if *b { q.ln() } else { (1.0 - q).ln() })
                .sum(),
        }
    }

    /// All masks with positive prior mass paired with their log prior,
    /// provided there are at most `cap` of them.
    pub fn mask_support(&self, cap: usize) -> Result<Vec<(BlindSpotMask, f64)>> {
        let size = self.support_size();
        if size > cap as u128 {
            return Err(GemError::SupportTooLarge { size, cap });
        }
        let masks = match &self.support {
            Some(s) => s
                .iter()
                .filter(|w| w.weight > 0.0)
                .map(|w| (w.mask.clone(), w.weight.ln()))
                .collect(),
            None => {
                let free: Vec<usize> = (0..self.q.len())
                    .filter(|j| self.q[*j] > 0.0 && self.q[*j] < 1.0)
                    .collect();
                let mut out = Vec::with_capacity(size as usize);
                for bits in 0u64..(1u64 << free.len()) {
                    let mut mask = vec![false; self.q.len()];
                    for (j, q) in self.q.iter().enumerate() {
                        if *q >= 1.0 {
                            mask[j] = true;
                        }
                    }
                    for (pos, &j) in free.iter().enumerate() {
                        mask[j] = (bits >> (free.len() - 1 - pos)) & 1 == 1;
                    }
                    let mask = BlindSpotMask::from_bits(mask);
                    let lp = self.log_mask_prior(&mask);
                    out.push((mask, lp));
                }
                out.sort_by(|a, b| a.0.cmp(&b.0));
                out
            }
        };
        Ok(masks)
    }

    /// Noise levels with positive prior mass and their log prior.
    pub fn noise_support(&self) -> Vec<(NoiseLevel, f64)> {
        NoiseLevel::support()
            .zip(&self.alpha)
            .filter(|(_, a)| **a > 0.0)
            .map(|(eta, a)| (eta, a.ln()))
            .collect()
    }
}

pub(crate) mod mask_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::schema::BlindSpotMask;

    pub fn serialize<S: Serializer>(mask: &BlindSpotMask, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&mask.to_bit_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BlindSpotMask, D::Error> {
        let s = String::deserialize(d)?;
        BlindSpotMask::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_support_membership() {
        assert!(NoiseLevel::from_support(0.10).is_ok());
        assert!(NoiseLevel::from_support(0.12).is_err());
        assert!(NoiseLevel::new(0.0).is_err());
        assert!(NoiseLevel::new(1.0).is_err());
        assert_eq!(NoiseLevel::support().count(), 9);
    }

    #[test]
    fn factored_support_enumerates_all_masks() {
        let p = Priors::uniform(3);
        let support = p.mask_support(1 << 20).unwrap();
        assert_eq!(support.len(), 8);
        let total: f64 = support.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(support[1].0.to_string(), "001");
    }

    #[test]
    fn degenerate_q_pins_bits() {
        let p = Priors::new(vec![0.0, 1.0, 0.5], vec![1.0 / 9.0; 9], None).unwrap();
        let support = p.mask_support(16).unwrap();
        let masks: Vec<String> = support.iter().map(|(m, _)| m.to_string()).collect();
        assert_eq!(masks, ["010", "011"]);
    }

    #[test]
    fn cap_is_enforced() {
        let p = Priors::uniform(21);
        assert!(matches!(
            p.mask_support(1 << 20),
            Err(GemError::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_alpha() {
        assert!(Priors::new(vec![0.5], vec![0.5; 9], None).is_err());
        assert!(Priors::new(vec![0.5], vec![1.0 / 9.0; 8], None).is_err());
        assert!(Priors::new(vec![1.5], vec![1.0 / 9.0; 9], None).is_err());
    }

    #[test]
    fn priors_deserialize_with_validation() {
        let json = r#"{"q":[0.5,0.5],"alpha":[0.2,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1],
                       "support":[{"mask":"01","weight":0.25},{"mask":"00","weight":0.75}]}"#;
        let p: Priors = serde_json::from_str(json).unwrap();
        assert_eq!(p.support_size(), 2);
        assert!((p.log_mask_prior(&BlindSpotMask::parse("00").unwrap()) - 0.75f64.ln()).abs() < 1e-12);
        let bad = r#"{"q":[0.5],"alpha":[1.0]}"#;
        assert!(serde_json::from_str::<Priors>(bad).is_err());
    }
}
