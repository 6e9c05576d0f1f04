//! Small domains given by an explicit optimal-action table. Handy for
//! exhaustive checks on toy schemas.

use std::collections::BTreeMap;

use crate::error::{GemError, Result};
use crate::model::domain::{ActionId, Domain};
use crate::model::schema::{FeatureSchema, State};

#[derive(Debug, Clone)]
pub struct TableDomain {
    schema: FeatureSchema,
    actions: Vec<String>,
    optimal: BTreeMap<State, Vec<ActionId>>,
}

impl TableDomain {
    /// `optimal` must list a non-empty set of known actions for every state
    /// of the schema. Acceptable actions are exactly the optimal ones.
    pub fn new(
        schema: FeatureSchema,
        actions: Vec<String>,
        optimal: BTreeMap<State, Vec<ActionId>>,
    ) -> Result<Self> {
        let expected: usize = (0..schema.len()).map(|j| schema.domain_size(j)).product();
        if optimal.len() != expected {
            return Err(GemError::InvalidConfig(vec![format!(
                "optimal table covers {} of {expected} states",
                optimal.len()
            )]));
        }
        for (state, set) in &optimal {
            schema.state(state.values().to_vec())?;
            if set.is_empty() || set.iter().any(|a| *a >= actions.len()) {
                return Err(GemError::InvalidConfig(vec![format!(
                    "optimal set for {state:?} must be a non-empty subset of the actions"
                )]));
            }
        }
        Ok(TableDomain {
            schema,
            actions,
            optimal,
        })
    }

    /// Every state of `schema`, last feature varying fastest.
    pub fn all_states(schema: &FeatureSchema) -> Vec<State> {
        let mut out = vec![Vec::new()];
        for j in 0..schema.len() {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..schema.domain_size(j) as u16).map(move |v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        out.into_iter().map(State::from_raw).collect()
    }
}

impl Domain for TableDomain {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn actions(&self) -> &[String] {
        &self.actions
    }

    fn optimal_actions(&self, state: &State) -> Vec<ActionId> {
        self.optimal[state].clone()
    }

    fn acceptable(&self, state: &State, action: ActionId) -> bool {
        self.optimal[state].contains(&action)
    }
}
