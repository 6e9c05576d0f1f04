use serde::{Deserialize, Serialize};

use crate::domains::gridworld::GridWorld;
use crate::domains::kitchen::{Kitchen, KitchenConfig};
use crate::error::{GemError, Result};
use crate::model::domain::{ActionId, Domain};
use crate::model::schema::{FeatureSchema, Observation, State};

/// Enough to rebuild a domain from a file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    #[serde(rename_all = "kebab-case")]
    Gridworld { grid_size: usize },
    Kitchen(KitchenConfig),
}

impl DomainSpec {
    pub fn build(&self) -> Result<AnyDomain> {
        match self {
            DomainSpec::Gridworld { grid_size } => {
                if *grid_size < 2 {
                    return Err(GemError::InvalidConfig(vec![format!(
                        "grid-size: {grid_size} is below the minimum of 2"
                    )]));
                }
                Ok(AnyDomain::Gridworld(GridWorld::new(*grid_size)))
            }
            DomainSpec::Kitchen(config) => Ok(AnyDomain::Kitchen(Kitchen::new(config.clone())?)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::Gridworld { .. } => "gridworld",
            DomainSpec::Kitchen(_) => "kitchen",
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyDomain {
    Gridworld(GridWorld),
    Kitchen(Kitchen),
}

impl AnyDomain {
    pub fn spec(&self) -> DomainSpec {
        match self {
            AnyDomain::Gridworld(g) => DomainSpec::Gridworld { grid_size: g.size() },
            AnyDomain::Kitchen(k) => DomainSpec::Kitchen(k.config().clone()),
        }
    }

    pub fn as_kitchen(&self) -> Option<&Kitchen> {
        match self {
            AnyDomain::Kitchen(k) => Some(k),
            AnyDomain::Gridworld(_) => None,
        }
    }

    fn inner(&self) -> &dyn Domain {
        match self {
            AnyDomain::Gridworld(g) => g,
            AnyDomain::Kitchen(k) => k,
        }
    }
}

impl From<GridWorld> for AnyDomain {
    fn from(g: GridWorld) -> Self {
        AnyDomain::Gridworld(g)
    }
}

impl From<Kitchen> for AnyDomain {
    fn from(k: Kitchen) -> Self {
        AnyDomain::Kitchen(k)
    }
}

impl Domain for AnyDomain {
    fn schema(&self) -> &FeatureSchema {
        self.inner().schema()
    }

    fn actions(&self) -> &[String] {
        self.inner().actions()
    }

    fn optimal_actions(&self, state: &State) -> Vec<ActionId> {
        self.inner().optimal_actions(state)
    }

    fn acceptable(&self, state: &State, action: ActionId) -> bool {
        self.inner().acceptable(state, action)
    }

    fn admits(&self, state: &State) -> bool {
        self.inner().admits(state)
    }

    fn completions(&self, obs: &Observation) -> Result<Vec<State>> {
        self.inner().completions(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        for spec in [
            DomainSpec::Gridworld { grid_size: 10 },
            DomainSpec::Kitchen(KitchenConfig::default()),
        ] {
            let text = serde_json::to_string(&spec).unwrap();
            let back: DomainSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.build().unwrap().spec(), spec);
        }
        let grid = serde_json::to_value(DomainSpec::Gridworld { grid_size: 4 }).unwrap();
        assert_eq!(grid, serde_json::json!({"kind": "gridworld", "grid-size": 4}));
    }

    #[test]
    fn tiny_grid_is_rejected() {
        assert!(DomainSpec::Gridworld { grid_size: 1 }.build().is_err());
    }
}
