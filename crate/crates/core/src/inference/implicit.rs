use std::collections::{BTreeMap, HashMap};

use super::posterior::JointPosterior;
use crate::error::{GemError, Result};
use crate::model::data::{Dataset, Demonstration};
use crate::model::domain::{ActionId, Domain};
use crate::model::likelihood::{implicit_prior, mask_observe, noisy_policy, optimal_share};
use crate::model::schema::{BlindSpotMask, ImplicitState, Observation};

/// `P(s_i | D)` for one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitPosterior {
    pub index: usize,
    /// Completion-consistent states in state order.
    pub distribution: Vec<(ImplicitState, f64)>,
    /// `marginals[feature][value]`.
    pub marginals: Vec<Vec<f64>>,
}

impl ImplicitPosterior {
    pub fn probability(&self, state: &ImplicitState) -> f64 {
        self.distribution
            .iter()
            .find(|(s, _)| s == state)
            .map_or(0.0, |(_, p)| *p)
    }
}

/// Which demonstrations enter an aggregated marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    ErrorsOnly,
}

impl Selection {
    fn admits(self, d: &Demonstration) -> bool {
        match self {
            Selection::All => true,
            Selection::ErrorsOnly => d.error,
        }
    }
}

/// Posterior over the implicit state behind demonstration `index`.
///
/// Each `(mask, eta)` pair contributes its posterior weight times the
/// conditional `P(s | s_real, a, mask, eta)`, which is the implicit prior
/// reweighted by the action likelihood and renormalized within the pair.
pub fn implicit_posterior(
    data: &Dataset,
    index: usize,
    posterior: &JointPosterior,
    domain: &dyn Domain,
) -> Result<ImplicitPosterior> {
    let demo = data.get(index)?;
    let distribution = implicit_distribution(demo, posterior, domain)?;
    let schema = domain.schema();
    let mut marginals: Vec<Vec<f64>> = (0..schema.len()).map(|j| vec![0.0; schema.domain_size(j)]).collect();
    for (s, p) in &distribution {
        for (j, v) in s.values().iter().enumerate() {
            marginals[j][*v as usize] += p;
        }
    }
    Ok(ImplicitPosterior {
        index,
        distribution,
        marginals,
    })
}

type MaskWeights<'a> = Vec<(&'a BlindSpotMask, Vec<(f64, f64)>)>;

/// Pairs below this mass are left out of implicit-state queries and the
/// remaining weights renormalized; the induced error is below
/// `support size * NEGLIGIBLE_MASS`.
pub const NEGLIGIBLE_MASS: f64 = 1e-15;

fn group_by_mask(posterior: &JointPosterior) -> MaskWeights<'_> {
    let kept: f64 = posterior
        .entries()
        .iter()
        .filter(|e| e.p >= NEGLIGIBLE_MASS)
        .map(|e| e.p)
        .sum();
    let mut by_mask: BTreeMap<&BlindSpotMask, Vec<(f64, f64)>> = BTreeMap::new();
    for e in posterior.entries().iter().filter(|e| e.p >= NEGLIGIBLE_MASS) {
        by_mask.entry(&e.mask).or_default().push((e.eta.value(), e.p / kept));
    }
    by_mask.into_iter().collect()
}

/// Posterior-weighted conditional over the completions of `obs` for one
/// mask, summed over that mask's noise levels.
fn mask_conditional(
    obs: &Observation,
    action: ActionId,
    etas: &[(f64, f64)],
    domain: &dyn Domain,
) -> Result<Vec<(ImplicitState, f64)>> {
    let actions = domain.actions().len();
    let prior = implicit_prior(obs, domain)?;
    let shares: Vec<f64> = prior.iter().map(|(s, _)| optimal_share(domain, s, action)).collect();
    let mut weights = vec![0.0; prior.len()];
    for (eta, w) in etas {
        let joint: Vec<f64> = prior
            .iter()
            .zip(&shares)
            .map(|((_, p), u)| p * noisy_policy(*u, *eta, actions))
            .collect();
        let total: f64 = joint.iter().sum();
        for (acc, j) in weights.iter_mut().zip(joint) {
            *acc += w * j / total;
        }
    }
    Ok(prior.into_iter().map(|(s, _)| s).zip(weights).collect())
}

fn implicit_distribution(
    demo: &Demonstration,
    posterior: &JointPosterior,
    domain: &dyn Domain,
) -> Result<Vec<(ImplicitState, f64)>> {
    let mut out: BTreeMap<ImplicitState, f64> = BTreeMap::new();
    for (mask, etas) in group_by_mask(posterior) {
        let obs = mask_observe(&demo.state, mask)?;
        for (s, w) in mask_conditional(&obs, demo.action, &etas, domain)? {
            *out.entry(s).or_default() += w;
        }
    }
    if out.is_empty() {
        return Err(GemError::InvalidPriors("posterior carries no mass".into()));
    }
    Ok(out.into_iter().collect())
}

/// Marginal of one feature averaged over the selected demonstrations.
/// Returns the per-value probabilities and the number of demonstrations used.
pub fn aggregate_feature_marginal(
    data: &Dataset,
    posterior: &JointPosterior,
    domain: &dyn Domain,
    feature: usize,
    selection: Selection,
) -> Result<(Vec<f64>, usize)> {
    let schema = domain.schema();
    if feature >= schema.len() {
        return Err(GemError::IndexOutOfRange {
            index: feature,
            len: schema.len(),
        });
    }
    let size = schema.domain_size(feature);
    let grouped = group_by_mask(posterior);
    // the conditional depends on the datapoint only through (obs, action)
    let mut memo: HashMap<(usize, Observation, ActionId), Vec<f64>> = HashMap::new();
    let mut acc = vec![0.0; size];
    let mut used = 0usize;
    for demo in data.demonstrations().iter().filter(|d| selection.admits(d)) {
        for (m, (mask, etas)) in grouped.iter().enumerate() {
            let key = (m, mask_observe(&demo.state, mask)?, demo.action);
            if !memo.contains_key(&key) {
                let mut marginal = vec![0.0; size];
                for (s, w) in mask_conditional(&key.1, demo.action, etas, domain)? {
                    marginal[s.get(feature) as usize] += w;
                }
                memo.insert(key.clone(), marginal);
            }
            acc.iter_mut().zip(&memo[&key]).for_each(|(a, x)| *a += x);
        }
        used += 1;
    }
    if used > 0 {
        acc.iter_mut().for_each(|x| *x /= used as f64);
    }
    Ok((acc, used))
}
