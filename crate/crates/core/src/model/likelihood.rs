//! The generative model: masking, implicit-state completion, the noisy
//! optimal policy, and the per-datapoint marginal likelihood obtained by
//! summing out the observation and implicit state.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GemError, Result};
use crate::math::sample_categorical;
use crate::model::data::{Dataset, Demonstration};
use crate::model::domain::{ActionId, Domain};
use crate::model::priors::NoiseLevel;
use crate::model::schema::{BlindSpotMask, ImplicitState, Observation, State, TrueState};

/// Hides every feature flagged in `mask`.
pub fn mask_observe(state: &TrueState, mask: &BlindSpotMask) -> Result<Observation> {
    if state.len() != mask.len() {
        return Err(GemError::SchemaMismatch {
            expected: state.len(),
            found: mask.len(),
        });
    }
    Ok(Observation::from_raw(
        state
            .values()
            .iter()
            .zip(mask.bits())
            .map(|(v, hidden)| if *hidden { None } else { Some(*v) })
            .collect(),
    ))
}

/// Uniform distribution over the domain's completions of `obs`.
pub fn implicit_prior(obs: &Observation, domain: &dyn Domain) -> Result<Vec<(ImplicitState, f64)>> {
    let comps = domain.completions(obs)?;
    if comps.is_empty() {
        return Err(GemError::EmptyCompletion(obs.to_string()));
    }
    let p = 1.0 / comps.len() as f64;
    Ok(comps.into_iter().map(|s| (s, p)).collect())
}

/// Probability the optimal policy assigns to `action` in `state`: the
/// action's share of the optimal set, zero outside it.
pub fn optimal_share(domain: &dyn Domain, state: &State, action: ActionId) -> f64 {
    let opt = domain.optimal_actions(state);
    debug_assert!(!opt.is_empty(), "optimal set must be non-empty");
    if opt.contains(&action) {
        1.0 / opt.len() as f64
    } else {
        0.0
    }
}

/// `(1 - eta)` spread over the optimal set plus `eta` spread over all actions.
pub fn action_likelihood(
    action: ActionId,
    implicit: &ImplicitState,
    eta: NoiseLevel,
    domain: &dyn Domain,
) -> Result<f64> {
    domain.check_action(action)?;
    let eta = eta.value();
    Ok((1.0 - eta) * optimal_share(domain, implicit, action)
        + eta / domain.actions().len() as f64)
}

/// Mixes an expected optimal share with uniform noise.
#[inline]
pub fn noisy_policy(share: f64, eta: f64, action_count: usize) -> f64 {
    (1.0 - eta) * share + eta / action_count as f64
}

/// Expected optimal share of the demonstrated action under the implicit
/// prior induced by `mask`. Independent of the noise level, so one value per
/// (datapoint, mask) serves every `eta`.
pub fn expected_optimal_share(
    demo: &Demonstration,
    mask: &BlindSpotMask,
    domain: &dyn Domain,
) -> Result<f64> {
    let obs = mask_observe(&demo.state, mask)?;
    observation_share(&obs, demo.action, domain)
}

/// Mean optimal share of `action` over the completions of `obs`.
pub fn observation_share(obs: &Observation, action: ActionId, domain: &dyn Domain) -> Result<f64> {
    let comps = domain.completions(obs)?;
    if comps.is_empty() {
        return Err(GemError::EmptyCompletion(obs.to_string()));
    }
    let total: f64 = comps.iter().map(|s| optimal_share(domain, s, action)).sum();
    Ok(total / comps.len() as f64)
}

/// [`expected_optimal_share`] for every demonstration, computing each
/// distinct (observation, action) pair once.
pub fn mask_shares(data: &Dataset, mask: &BlindSpotMask, domain: &dyn Domain) -> Result<Vec<f64>> {
    let mut memo: HashMap<(Observation, ActionId), f64> = HashMap::new();
    data.demonstrations()
        .iter()
        .map(|d| {
            let obs = mask_observe(&d.state, mask)?;
            let key = (obs, d.action);
            if let Some(u) = memo.get(&key) {
                return Ok(*u);
            }
            let u = observation_share(&key.0, d.action, domain)?;
            memo.insert(key, u);
            Ok(u)
        })
        .collect()
}

/// `P(a | s_real, b, eta)`, summing over the (deterministic) observation and
/// the implicit state.
pub fn datapoint_likelihood(
    demo: &Demonstration,
    mask: &BlindSpotMask,
    eta: NoiseLevel,
    domain: &dyn Domain,
) -> Result<f64> {
    let obs = mask_observe(&demo.state, mask)?;
    let mut total = 0.0;
    for (s, p) in implicit_prior(&obs, domain)? {
        total += p * action_likelihood(demo.action, &s, eta, domain)?;
    }
    Ok(total)
}

/// `ln P(D | b, eta)`.
pub fn dataset_log_likelihood(
    data: &Dataset,
    mask: &BlindSpotMask,
    eta: NoiseLevel,
    domain: &dyn Domain,
) -> Result<f64> {
    data.require_non_empty()?;
    data.demonstrations()
        .iter()
        .map(|d| datapoint_likelihood(d, mask, eta, domain).map(f64::ln))
        .sum()
}

/// Draws an action from the noisy policy acting on `implicit`.
pub fn sample_action<R: Rng + ?Sized>(
    implicit: &ImplicitState,
    eta: NoiseLevel,
    domain: &dyn Domain,
    rng: &mut R,
) -> ActionId {
    let n = domain.actions().len();
    if rng.gen::<f64>() < eta.value() {
        rng.gen_range(0..n)
    } else {
        let opt = domain.optimal_actions(implicit);
        opt[rng.gen_range(0..opt.len())]
    }
}

/// Runs the generative process once for `state`: mask, draw an implicit
/// state, draw an action, derive the error flag.
pub fn sample_demonstration_with<R: Rng + ?Sized>(
    state: &TrueState,
    mask: &BlindSpotMask,
    eta: NoiseLevel,
    domain: &dyn Domain,
    rng: &mut R,
) -> Result<Demonstration> {
    domain.schema().state(state.values().to_vec())?;
    let obs = mask_observe(state, mask)?;
    let prior = implicit_prior(&obs, domain)?;
    let probs: Vec<f64> = prior.iter().map(|(_, p)| *p).collect();
    let implicit = &prior[sample_categorical(&probs, rng)].0;
    let action = sample_action(implicit, eta, domain, rng);
    Ok(Demonstration::derived(domain, state.clone(), action))
}

/// Seeded form of [`sample_demonstration_with`].
pub fn sample_demonstration(
    state: &TrueState,
    mask: &BlindSpotMask,
    eta: NoiseLevel,
    domain: &dyn Domain,
    seed: u64,
) -> Result<Demonstration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_demonstration_with(state, mask, eta, domain, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::gridworld::{Color, GridAction, GridWorld};
    use crate::model::data::DataSource;

    fn eta(x: f64) -> NoiseLevel {
        NoiseLevel::from_support(x).unwrap()
    }

    #[test]
    fn identity_mask_passes_everything_through() {
        let g = GridWorld::new(10);
        let s = g.state(2, 3, Color::Green);
        let obs = mask_observe(&s, &g.schema().zero_mask()).unwrap();
        assert_eq!(obs.to_state().unwrap(), s);
    }

    #[test]
    fn color_mask_hides_only_color() {
        let g = GridWorld::new(10);
        let s = g.state(2, 3, Color::Green);
        let obs = mask_observe(&s, &BlindSpotMask::parse("001").unwrap()).unwrap();
        assert_eq!(obs.get(0), Some(s.get(0)));
        assert_eq!(obs.get(1), Some(s.get(1)));
        assert_eq!(obs.get(2), None);
        let all = mask_observe(&s, &BlindSpotMask::ones(3)).unwrap();
        assert_eq!(all.unobserved().count(), 3);
        assert!(mask_observe(&s, &BlindSpotMask::zeros(2)).is_err());
    }

    #[test]
    fn implicit_prior_over_color() {
        let g = GridWorld::new(10);
        let s = g.state(2, 3, Color::Green);
        let obs = mask_observe(&s, &BlindSpotMask::parse("001").unwrap()).unwrap();
        let prior = implicit_prior(&obs, &g).unwrap();
        assert_eq!(prior.len(), 2);
        assert!(prior.iter().all(|(_, p)| (*p - 0.5).abs() < 1e-15));
        let full = implicit_prior(&mask_observe(&s, &g.schema().zero_mask()).unwrap(), &g).unwrap();
        assert_eq!(full, vec![(s, 1.0)]);
    }

    #[test]
    fn action_likelihood_closed_forms() {
        let g = GridWorld::new(10);
        // dx = 3, dy = 0: only `right` closes the distance
        let s = g.state(3, 0, Color::Green);
        let right = GridAction::Right as usize;
        assert!((action_likelihood(right, &s, eta(0.10), &g).unwrap() - 0.925).abs() < 1e-12);
        let left = GridAction::Left as usize;
        assert!((action_likelihood(left, &s, eta(0.10), &g).unwrap() - 0.025).abs() < 1e-12);
        let sum: f64 = (0..4)
            .map(|a| action_likelihood(a, &s, eta(0.10), &g).unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // two optimal moves
        let s2 = g.state(2, -1, Color::Green);
        assert!((action_likelihood(right, &s2, eta(0.10), &g).unwrap() - 0.475).abs() < 1e-12);
        assert!(action_likelihood(9, &s2, eta(0.10), &g).is_err());
    }

    #[test]
    fn datapoint_likelihood_with_color_masked() {
        let g = GridWorld::new(10);
        let s = g.state(3, 0, Color::Red);
        let right = GridAction::Right as usize;
        let demo = Demonstration::derived(&g, s.clone(), right);
        let l = datapoint_likelihood(&demo, &BlindSpotMask::parse("001").unwrap(), eta(0.10), &g)
            .unwrap();
        assert!((l - (0.5 * 0.925 + 0.5 * 0.025)).abs() < 1e-12);
        let l0 = datapoint_likelihood(&demo, &g.schema().zero_mask(), eta(0.10), &g).unwrap();
        assert!((l0 - action_likelihood(right, &s, eta(0.10), &g).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn action_outside_every_completion_gets_noise_floor() {
        let g = GridWorld::new(10);
        // object 9 to the right on the x axis: green wants `right`, red can
        // only step off the axis, so `left` is optimal under neither color
        let s = g.state(9, 0, Color::Red);
        let left = GridAction::Left as usize;
        let mask = BlindSpotMask::parse("001").unwrap();
        let comps = g.completions(&mask_observe(&s, &mask).unwrap()).unwrap();
        assert!(comps.iter().all(|c| !g.optimal_actions(c).contains(&left)));
        let demo = Demonstration::derived(&g, s, left);
        let l = datapoint_likelihood(&demo, &mask, eta(0.40), &g).unwrap();
        assert!((l - 0.40 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn expected_share_route_matches_direct_sum() {
        let g = GridWorld::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = g.random_state(&mut rng);
            let a = rng.gen_range(0..4);
            let demo = Demonstration::derived(&g, s, a);
            for mask in g.schema().all_masks() {
                let u = expected_optimal_share(&demo, &mask, &g).unwrap();
                for e in NoiseLevel::support() {
                    let direct = datapoint_likelihood(&demo, &mask, e, &g).unwrap();
                    assert!((noisy_policy(u, e.value(), 4) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dataset_log_likelihood_factorizes() {
        let g = GridWorld::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let demos: Vec<_> = (0..30)
            .map(|_| {
                let s = g.random_state(&mut rng);
                Demonstration::derived(&g, s, rng.gen_range(0..4))
            })
            .collect();
        let data = Dataset::new(&g, demos, DataSource::Ingested).unwrap();
        let mask = BlindSpotMask::parse("001").unwrap();
        let e = eta(0.15);
        let single = data.prefix(1);
        let l1 = dataset_log_likelihood(&single, &mask, e, &g).unwrap();
        let direct = datapoint_likelihood(&data.demonstrations()[0], &mask, e, &g).unwrap().ln();
        assert!((l1 - direct).abs() < 1e-12);

        let a = data.prefix(12);
        let b = data.reordered(&(12..30).collect::<Vec<_>>());
        let joined = dataset_log_likelihood(&a.concat(&b).unwrap(), &mask, e, &g).unwrap();
        let parts = dataset_log_likelihood(&a, &mask, e, &g).unwrap()
            + dataset_log_likelihood(&b, &mask, e, &g).unwrap();
        assert!((joined - parts).abs() < 1e-9);

        let reversed = data.reordered(&(0..30).rev().collect::<Vec<_>>());
        let fwd = dataset_log_likelihood(&data, &mask, e, &g).unwrap();
        let rev = dataset_log_likelihood(&reversed, &mask, e, &g).unwrap();
        assert!((fwd - rev).abs() < 1e-9);
        assert!(fwd <= l1);

        let empty = data.prefix(0);
        assert!(matches!(
            dataset_log_likelihood(&empty, &mask, e, &g),
            Err(GemError::EmptyDataset)
        ));
    }

    #[test]
    fn low_noise_sampler_follows_optimal_action() {
        let g = GridWorld::new(10);
        let s = g.state(3, 0, Color::Green);
        let mask = g.schema().zero_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hits = (0..10_000)
            .filter(|_| {
                let d = sample_demonstration_with(&s, &mask, eta(0.01), &g, &mut rng).unwrap();
                assert_eq!(d.error, !g.acceptable(&s, d.action));
                d.action == GridAction::Right as usize
            })
            .count();
        // closed form 0.99 + 0.01 / 4 = 0.9925
        assert!(hits as f64 / 10_000.0 >= 0.98);
    }

    #[test]
    fn sampler_matches_closed_form_frequencies() {
        let g = GridWorld::new(10);
        let s = g.state(2, 4, Color::Red);
        let mask = BlindSpotMask::parse("001").unwrap();
        let e = eta(0.20);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_demonstration_with(&s, &mask, e, &g, &mut rng).unwrap().action] += 1;
        }
        let tv: f64 = (0..4)
            .map(|a| {
                let demo = Demonstration::derived(&g, s.clone(), a);
                let p = datapoint_likelihood(&demo, &mask, e, &g).unwrap();
                (counts[a] as f64 / n as f64 - p).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let g = GridWorld::new(10);
        let s = g.state(-4, 7, Color::Green);
        let mask = BlindSpotMask::parse("101").unwrap();
        for seed in 0..20 {
            let a = sample_demonstration(&s, &mask, eta(0.30), &g, seed).unwrap();
            let b = sample_demonstration(&s, &mask, eta(0.30), &g, seed).unwrap();
            assert_eq!(a, b);
        }
    }
}
