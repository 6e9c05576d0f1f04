use crate::error::{GemError, Result};
use crate::model::schema::{FeatureSchema, Observation, State, ValueIndex};

/// Index into a domain's action list.
pub type ActionId = usize;

/// Upper bound on completions produced by the generic cartesian expansion.
pub const MAX_GENERIC_COMPLETIONS: usize = 1 << 22;

/// Everything the observer knows about a task: its state representation,
/// action set, optimal policy, acceptability function and the admissible
/// completions of a partial observation.
pub trait Domain: Send + Sync {
    fn schema(&self) -> &FeatureSchema;

    fn actions(&self) -> &[String];

    /// Non-empty set of optimal actions in a fully resolved state.
    fn optimal_actions(&self, state: &State) -> Vec<ActionId>;

    fn acceptable(&self, state: &State, action: ActionId) -> bool;

    /// Whether a fully resolved state is a legal world configuration.
    fn admits(&self, _state: &State) -> bool {
        true
    }

    /// Implicit states consistent with `obs`. The default expands every
    /// unobserved feature over its full domain and keeps admitted states.
    fn completions(&self, obs: &Observation) -> Result<Vec<State>> {
        cartesian_completions(self.schema(), obs, |s| self.admits(s))
    }

    fn action_index(&self, name: &str) -> Result<ActionId> {
        self.actions()
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| GemError::UnknownAction(name.to_string()))
    }

    fn action_name(&self, action: ActionId) -> &str {
        &self.actions()[action]
    }

    fn check_action(&self, action: ActionId) -> Result<()> {
        if action < self.actions().len() {
            Ok(())
        } else {
            Err(GemError::UnknownAction(action.to_string()))
        }
    }
}

/// Expands the unobserved features of `obs` over their domains.
pub fn cartesian_completions(
    schema: &FeatureSchema,
    obs: &Observation,
    admits: impl Fn(&State) -> bool,
) -> Result<Vec<State>> {
    schema.check_len(obs.len())?;
    let hidden: Vec<usize> = obs.unobserved().collect();
    let total = hidden
        .iter()
        .try_fold(1usize, |acc, j| acc.checked_mul(schema.domain_size(*j)))
        .filter(|n| *n <= MAX_GENERIC_COMPLETIONS)
        .ok_or_else(|| GemError::UnsupportedMask {
            mask: obs.to_string(),
            reason: "too many completions to enumerate".into(),
        })?;

    let base: Vec<ValueIndex> = obs.values().iter().map(|v| v.unwrap_or(0)).collect();
    let mut out = Vec::with_capacity(total);
    let mut counter = vec![0 as ValueIndex; hidden.len()];
    'outer: loop {
        let mut values = base.clone();
        for (pos, &j) in hidden.iter().enumerate() {
            values[j] = counter[pos];
        }
        let state = State::from_raw(values);
        if admits(&state) {
            out.push(state);
        }
        // odometer increment, last hidden feature fastest
        for pos in (0..hidden.len()).rev() {
            counter[pos] += 1;
            if (counter[pos] as usize) < schema.domain_size(hidden[pos]) {
                continue 'outer;
            }
            counter[pos] = 0;
        }
        break;
    }
    if out.is_empty() {
        return Err(GemError::EmptyCompletion(obs.to_string()));
    }
    Ok(out)
}
