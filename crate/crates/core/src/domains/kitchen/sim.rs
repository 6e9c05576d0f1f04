use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Kitchen, KitchenAction, DISHES};
use crate::error::{GemError, Result};
use crate::model::data::{DataSource, Dataset, Demonstration};
use crate::model::domain::Domain;
use crate::model::likelihood::{mask_observe, sample_action};
use crate::model::priors::NoiseLevel;
use crate::model::schema::BlindSpotMask;

/// Participant noise that lands the simulated error profile near 24% total
/// with roughly 7% salt/sugar confusions.
pub const CALIBRATED_NOISE: f64 = 0.22;
pub const TUPLES_PER_PARTICIPANT: usize = 242;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub participants: usize,
    pub per_participant: usize,
    pub noise_true: f64,
    /// Mask held by every participant; `None` means the salt/sugar locations.
    #[serde(with = "optional_mask")]
    pub mask: Option<BlindSpotMask>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            participants: 10,
            per_participant: TUPLES_PER_PARTICIPANT,
            noise_true: CALIBRATED_NOISE,
            mask: None,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    fn validate(&self, kitchen: &Kitchen) -> Result<(BlindSpotMask, NoiseLevel)> {
        let mut problems = Vec::new();
        if self.participants == 0 {
            problems.push("participants: must be at least 1".to_string());
        }
        if self.per_participant == 0 {
            problems.push("per-participant: must be at least 1".to_string());
        }
        let noise = NoiseLevel::new(self.noise_true)
            .map_err(|e| problems.push(format!("noise-true: {e}")))
            .ok();
        let mask = self.mask.clone().unwrap_or_else(|| kitchen.confusable_mask());
        if mask.len() != kitchen.schema().len() {
            problems.push(format!(
                "mask: expected {} bits, found {}",
                kitchen.schema().len(),
                mask.len()
            ));
        }
        match noise {
            Some(noise) if problems.is_empty() => Ok((mask, noise)),
            _ => Err(GemError::InvalidConfig(problems)),
        }
    }
}

/// One dataset per participant. Participant `i` draws from its own stream of
/// the seeded generator, so results do not depend on participant count.
pub fn simulate_participants(kitchen: &Kitchen, config: &SimulationConfig) -> Result<Vec<Dataset>> {
    let (mask, noise) = config.validate(kitchen)?;
    (0..config.participants)
        .map(|i| simulate_one(kitchen, &mask, noise, config.per_participant, config.seed, i as u64))
        .collect()
}

/// Data for a single participant `index` under `config`.
pub fn simulate_participant(kitchen: &Kitchen, config: &SimulationConfig, index: usize) -> Result<Dataset> {
    let (mask, noise) = config.validate(kitchen)?;
    simulate_one(kitchen, &mask, noise, config.per_participant, config.seed, index as u64)
}

fn simulate_one(
    kitchen: &Kitchen,
    mask: &BlindSpotMask,
    noise: NoiseLevel,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut current = kitchen.start_dish(rng.gen_range(0..DISHES));
    let mut demos = Vec::with_capacity(n);
    for _ in 0..n {
        let state = kitchen.encode(&current);
        let obs = mask_observe(&state, mask)?;
        let comps = kitchen.completions(&obs)?;
        let implicit = &comps[rng.gen_range(0..comps.len())];
        let action = sample_action(implicit, noise, kitchen, &mut rng);
        let next_dish = rng.gen_range(0..DISHES);
        current = kitchen.transition(&current, KitchenAction::from_id(action), next_dish);
        demos.push(Demonstration::derived(kitchen, state, action));
    }
    Dataset::new(kitchen, demos, DataSource::Simulated { seed })
}

/// Error counts split by cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ErrorBreakdown {
    pub actions: usize,
    pub blind_spot: usize,
    pub other: usize,
}

impl ErrorBreakdown {
    pub fn total_rate(&self) -> f64 {
        self.rate(self.blind_spot + self.other)
    }

    pub fn blind_spot_rate(&self) -> f64 {
        self.rate(self.blind_spot)
    }

    pub fn other_rate(&self) -> f64 {
        self.rate(self.other)
    }

    fn rate(&self, count: usize) -> f64 {
        if self.actions == 0 {
            0.0
        } else {
            count as f64 / self.actions as f64
        }
    }
}

impl std::ops::Add for ErrorBreakdown {
    type Output = ErrorBreakdown;

    fn add(self, o: ErrorBreakdown) -> ErrorBreakdown {
        ErrorBreakdown {
            actions: self.actions + o.actions,
            blind_spot: self.blind_spot + o.blind_spot,
            other: self.other + o.other,
        }
    }
}

/// An erroneous pick counts as a salt/sugar confusion when it would be
/// optimal had the two ingredients traded places.
pub fn classify_errors(data: &Dataset, kitchen: &Kitchen) -> ErrorBreakdown {
    let mut out = ErrorBreakdown {
        actions: data.len(),
        ..Default::default()
    };
    for d in data.demonstrations().iter().filter(|d| d.error) {
        let action = KitchenAction::from_id(d.action);
        let swapped = kitchen.swap_confusable(&kitchen.decode(&d.state));
        let confusion = matches!(action, KitchenAction::Pick(_))
            && kitchen.kitchen_optimal_set(&swapped).contains(&action);
        if confusion {
            out.blind_spot += 1;
        } else {
            out.other += 1;
        }
    }
    out
}

/// Share of actions that are errors not explained by salt/sugar confusion.
pub fn ground_truth_noise_rate(data: &Dataset, kitchen: &Kitchen) -> Result<f64> {
    data.require_non_empty()?;
    Ok(classify_errors(data, kitchen).other_rate())
}

mod optional_mask {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::schema::BlindSpotMask;

    pub fn serialize<S: Serializer>(mask: &Option<BlindSpotMask>, s: S) -> Result<S::Ok, S::Error> {
        match mask {
            Some(m) => s.serialize_some(&m.to_bit_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BlindSpotMask>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| BlindSpotMask::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
