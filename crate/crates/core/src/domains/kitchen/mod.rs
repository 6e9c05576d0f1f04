//! Kitchen task: a participant prepares dishes from a memorized menu by
//! picking ingredients from 14 kitchen locations and serving. Two of the
//! ingredients (salt and sugar) look identical.

mod session;
mod sim;

pub use session::ingest_session_log;

pub use sim::{
    classify_errors, ground_truth_noise_rate, simulate_participant, simulate_participants,
    ErrorBreakdown, SimulationConfig,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::domain::{ActionId, Domain};
use crate::model::schema::{
    BlindSpotMask, Feature, FeatureSchema, Observation, State, ValueIndex,
};

pub const LOCATIONS: usize = 14;
pub const RECIPE_SIZE: usize = 7;
pub const DISHES: usize = 3;
/// Upper bound on simultaneously hidden locations in the mask support.
pub const MAX_HIDDEN_LOCATIONS: usize = 3;

pub const DISH_FEATURE: usize = 0;
pub const FIRST_FLAG_FEATURE: usize = 1;
pub const FIRST_LOCATION_FEATURE: usize = FIRST_FLAG_FEATURE + RECIPE_SIZE;
pub const FEATURE_COUNT: usize = FIRST_LOCATION_FEATURE + LOCATIONS;

pub const SERVE: ActionId = LOCATIONS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Recipe {
    pub name: String,
    pub ingredients: Vec<String>,
}

/// Menu plus the physical placement of ingredients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct KitchenConfig {
    pub menu: Vec<Recipe>,
    /// Ingredient at each location, location 1 first.
    pub layout: Vec<String>,
    /// The two ingredients the participant cannot tell apart.
    pub confusable: [String; 2],
}

impl Default for KitchenConfig {
    fn default() -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        KitchenConfig {
            menu: vec![
                Recipe {
                    name: "tomato-soup".into(),
                    ingredients: names(&[
                        "tomato", "onion", "garlic", "salt", "sugar", "basil", "butter",
                    ]),
                },
                Recipe {
                    name: "lemon-cake".into(),
                    ingredients: names(&["flour", "sugar", "eggs", "butter", "milk", "lemon", "salt"]),
                },
                Recipe {
                    name: "cheese-bake".into(),
                    ingredients: names(&["flour", "rice", "pepper", "eggs", "milk", "cheese", "garlic"]),
                },
            ],
            layout: names(&[
                "flour", "salt", "tomato", "milk", "basil", "eggs", "onion", "sugar", "cheese",
                "pepper", "garlic", "rice", "lemon", "butter",
            ]),
            confusable: ["salt".into(), "sugar".into()],
        }
    }
}

impl KitchenConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.layout.len() != LOCATIONS {
            problems.push(format!(
                "layout: expected {LOCATIONS} locations, found {}",
                self.layout.len()
            ));
        }
        let distinct: HashSet<&str> = self.layout.iter().map(String::as_str).collect();
        if distinct.len() != self.layout.len() {
            problems.push("layout: every location must hold a different ingredient".into());
        }
        if self.menu.len() != DISHES {
            problems.push(format!("menu: expected {DISHES} dishes, found {}", self.menu.len()));
        }
        for r in &self.menu {
            let unique: HashSet<&str> = r.ingredients.iter().map(String::as_str).collect();
            if r.ingredients.len() != RECIPE_SIZE || unique.len() != RECIPE_SIZE {
                problems.push(format!(
                    "menu: `{}` must list {RECIPE_SIZE} distinct ingredients",
                    r.name
                ));
            }
            if let Some(missing) = r.ingredients.iter().find(|i| !distinct.contains(i.as_str())) {
                problems.push(format!("menu: `{}` uses `{missing}` which is not placed", r.name));
            }
        }
        for c in &self.confusable {
            if !distinct.contains(c.as_str()) {
                problems.push(format!("confusable: `{c}` is not placed"));
            } else if !self.menu.iter().any(|r| r.ingredients.contains(c)) {
                problems.push(format!("confusable: no recipe uses `{c}`"));
            }
        }
        if self.confusable[0] == self.confusable[1] {
            problems.push("confusable: the two ingredients must differ".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GemError::InvalidConfig(problems))
        }
    }
}

/// Decoded kitchen state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KitchenState {
    pub dish: usize,
    pub included: [bool; RECIPE_SIZE],
    /// Ingredient index held at each location.
    pub locations: [usize; LOCATIONS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KitchenAction {
    /// Zero-based location.
    Pick(usize),
    Serve,
}

impl KitchenAction {
    pub fn id(self) -> ActionId {
        match self {
            KitchenAction::Pick(loc) => loc,
            KitchenAction::Serve => SERVE,
        }
    }

    pub fn from_id(id: ActionId) -> Self {
        if id == SERVE {
            KitchenAction::Serve
        } else {
            KitchenAction::Pick(id)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Kitchen {
    config: KitchenConfig,
    schema: FeatureSchema,
    actions: Vec<String>,
    /// Ingredient index per recipe slot.
    recipes: Vec<[usize; RECIPE_SIZE]>,
    /// Ingredient index per location in the true layout.
    layout: [usize; LOCATIONS],
    confusable: [usize; 2],
}

impl Kitchen {
    pub fn new(config: KitchenConfig) -> Result<Self> {
        config.validate()?;
        // ingredients are indexed in layout order
        let ingredients = config.layout.clone();
        let index = |name: &str| ingredients.iter().position(|i| i == name).expect("validated");
        let mut features = vec![Feature {
            name: "dish".into(),
            values: config.menu.iter().map(|r| r.name.clone()).collect(),
        }];
        for slot in 1..=RECIPE_SIZE {
            features.push(Feature {
                name: format!("included-{slot}"),
                values: vec!["0".into(), "1".into()],
            });
        }
        for loc in 1..=LOCATIONS {
            features.push(Feature {
                name: format!("loc-{loc}"),
                values: ingredients.clone(),
            });
        }
        let schema = FeatureSchema::new("kitchen-v1", features)?;
        let mut actions: Vec<String> = (1..=LOCATIONS).map(|l| format!("pick-{l}")).collect();
        actions.push("serve".into());
        let recipes = config
            .menu
            .iter()
            .map(|r| {
                let mut slots = [0; RECIPE_SIZE];
                for (s, name) in slots.iter_mut().zip(&r.ingredients) {
                    *s = index(name);
                }
                slots
            })
            .collect();
        let mut layout = [0; LOCATIONS];
        for (l, slot) in layout.iter_mut().enumerate() {
            *slot = l;
        }
        let confusable = [index(&config.confusable[0]), index(&config.confusable[1])];
        Ok(Kitchen {
            config,
            schema,
            actions,
            recipes,
            layout,
            confusable,
        })
    }

    pub fn config(&self) -> &KitchenConfig {
        &self.config
    }

    pub fn ingredient_name(&self, ingredient: usize) -> &str {
        &self.config.layout[ingredient]
    }

    pub fn ingredient_index(&self, name: &str) -> Option<usize> {
        self.config.layout.iter().position(|i| i == name)
    }

    pub fn recipe(&self, dish: usize) -> &[usize; RECIPE_SIZE] {
        &self.recipes[dish]
    }

    /// Location (zero-based) of an ingredient in the true layout.
    pub fn location_of(&self, ingredient: usize) -> usize {
        self.layout
            .iter()
            .position(|i| *i == ingredient)
            .expect("layout is a bijection")
    }

    pub fn confusable(&self) -> [usize; 2] {
        self.confusable
    }

    /// Schema feature holding the ingredient at `location`.
    pub fn location_feature(location: usize) -> usize {
        FIRST_LOCATION_FEATURE + location
    }

    /// The mask hiding exactly the locations of the two confusable ingredients.
    pub fn confusable_mask(&self) -> BlindSpotMask {
        BlindSpotMask::with_hidden(
            FEATURE_COUNT,
            &[
                Self::location_feature(self.location_of(self.confusable[0])),
                Self::location_feature(self.location_of(self.confusable[1])),
            ],
        )
    }

    /// A fresh order: chosen dish, nothing included, true layout.
    pub fn start_dish(&self, dish: usize) -> KitchenState {
        KitchenState {
            dish,
            included: [false; RECIPE_SIZE],
            locations: self.layout,
        }
    }

    pub fn encode(&self, s: &KitchenState) -> State {
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        values.push(s.dish as ValueIndex);
        values.extend(s.included.iter().map(|b| *b as ValueIndex));
        values.extend(s.locations.iter().map(|i| *i as ValueIndex));
        State::from_raw(values)
    }

    pub fn decode(&self, state: &State) -> KitchenState {
        let v = state.values();
        let mut included = [false; RECIPE_SIZE];
        for (k, flag) in included.iter_mut().enumerate() {
            *flag = v[FIRST_FLAG_FEATURE + k] == 1;
        }
        let mut locations = [0; LOCATIONS];
        for (l, slot) in locations.iter_mut().enumerate() {
            *slot = v[FIRST_LOCATION_FEATURE + l] as usize;
        }
        KitchenState {
            dish: v[DISH_FEATURE] as usize,
            included,
            locations,
        }
    }

    fn slot_of(&self, dish: usize, ingredient: usize) -> Option<usize> {
        self.recipes[dish].iter().position(|i| *i == ingredient)
    }

    /// A pick is acceptable when the ingredient actually at that location is
    /// in the recipe and not yet included; serving is acceptable only for a
    /// complete dish.
    pub fn kitchen_acceptable(&self, s: &KitchenState, action: KitchenAction) -> bool {
        match action {
            KitchenAction::Pick(loc) => self
                .slot_of(s.dish, s.locations[loc])
                .is_some_and(|slot| !s.included[slot]),
            KitchenAction::Serve => s.included.iter().all(|b| *b),
        }
    }

    /// Picks at every location the (believed) layout assigns a still-needed
    /// ingredient, or serve when the dish is complete.
    pub fn kitchen_optimal_set(&self, s: &KitchenState) -> Vec<KitchenAction> {
        if s.included.iter().all(|b| *b) {
            return vec![KitchenAction::Serve];
        }
        (0..LOCATIONS)
            .filter(|loc| {
                self.slot_of(s.dish, s.locations[*loc])
                    .is_some_and(|slot| !s.included[slot])
            })
            .map(KitchenAction::Pick)
            .collect()
    }

    /// Effect of an action on the true state. Serving starts `next_dish`.
    pub fn transition(&self, s: &KitchenState, action: KitchenAction, next_dish: usize) -> KitchenState {
        match action {
            KitchenAction::Pick(loc) => {
                let mut next = s.clone();
                if let Some(slot) = self.slot_of(s.dish, s.locations[loc]) {
                    next.included[slot] = true;
                }
                next
            }
            KitchenAction::Serve => self.start_dish(next_dish),
        }
    }

    /// `s` with the contents of the two confusable locations exchanged.
    pub fn swap_confusable(&self, s: &KitchenState) -> KitchenState {
        let mut swapped = s.clone();
        let a = s.locations.iter().position(|i| *i == self.confusable[0]);
        let b = s.locations.iter().position(|i| *i == self.confusable[1]);
        if let (Some(a), Some(b)) = (a, b) {
            swapped.locations.swap(a, b);
        }
        swapped
    }
}

/// Masks hiding nothing but location features, at most three of them:
/// 1 + 14 + 91 + 364 = 470 vectors, in bit-string order.
pub fn kitchen_blind_spot_support() -> Vec<BlindSpotMask> {
    let mut out = Vec::with_capacity(470);
    for bits in 0u32..(1 << LOCATIONS) {
        if bits.count_ones() as usize > MAX_HIDDEN_LOCATIONS {
            continue;
        }
        out.push(BlindSpotMask::from_fn(FEATURE_COUNT, |j| {
            j >= FIRST_LOCATION_FEATURE
                && (bits >> (LOCATIONS - 1 - (j - FIRST_LOCATION_FEATURE))) & 1 == 1
        }));
    }
    out.sort();
    out
}

impl Domain for Kitchen {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn actions(&self) -> &[String] {
        &self.actions
    }

    fn optimal_actions(&self, state: &State) -> Vec<ActionId> {
        self.kitchen_optimal_set(&self.decode(state))
            .into_iter()
            .map(KitchenAction::id)
            .collect()
    }

    fn acceptable(&self, state: &State, action: ActionId) -> bool {
        self.kitchen_acceptable(&self.decode(state), KitchenAction::from_id(action))
    }

    fn admits(&self, state: &State) -> bool {
        let locs = &state.values()[FIRST_LOCATION_FEATURE..];
        let distinct: HashSet<&ValueIndex> = locs.iter().collect();
        distinct.len() == LOCATIONS
    }

    /// Hidden locations receive every arrangement of the ingredients not
    /// visible elsewhere, so each completion is again a bijection.
    fn completions(&self, obs: &Observation) -> Result<Vec<State>> {
        self.schema.check_len(obs.len())?;
        let hidden: Vec<usize> = obs.unobserved().collect();
        if let Some(bad) = hidden.iter().find(|j| **j < FIRST_LOCATION_FEATURE) {
            return Err(GemError::UnsupportedMask {
                mask: obs.to_string(),
                reason: format!(
                    "feature `{}` is not a location",
                    self.schema.features()[*bad].name
                ),
            });
        }
        let mut visible = [false; LOCATIONS];
        for v in obs.values()[FIRST_LOCATION_FEATURE..].iter().flatten() {
            visible[*v as usize] = true;
        }
        let missing: Vec<ValueIndex> = (0..LOCATIONS as ValueIndex)
            .filter(|i| !visible[*i as usize])
            .collect();
        if missing.len() != hidden.len() {
            return Err(GemError::EmptyCompletion(obs.to_string()));
        }
        let base: Vec<ValueIndex> = obs.values().iter().map(|v| v.unwrap_or(0)).collect();
        let mut out = Vec::new();
        for perm in permutations(&missing) {
            let mut values = base.clone();
            for (j, v) in hidden.iter().zip(perm) {
                values[*j] = v;
            }
            out.push(State::from_raw(values));
        }
        Ok(out)
    }
}

/// All orderings of `items`, lexicographic in input order.
fn permutations(items: &[ValueIndex]) -> Vec<Vec<ValueIndex>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::likelihood::{implicit_prior, mask_observe};

    fn kitchen() -> Kitchen {
        Kitchen::new(KitchenConfig::default()).unwrap()
    }

    fn ing(k: &Kitchen, name: &str) -> usize {
        k.ingredient_index(name).unwrap()
    }

    #[test]
    fn fixture_menu_has_salt_and_sugar_twice() {
        let cfg = KitchenConfig::default();
        cfg.validate().unwrap();
        let count = |name: &str| {
            cfg.menu
                .iter()
                .filter(|r| r.ingredients.iter().any(|i| i == name))
                .count()
        };
        assert_eq!(count("salt"), 2);
        assert_eq!(count("sugar"), 2);
    }

    #[test]
    fn config_validation_lists_problems() {
        let mut cfg = KitchenConfig::default();
        cfg.layout[0] = "salt".into();
        cfg.menu[0].ingredients.pop();
        match cfg.validate() {
            Err(GemError::InvalidConfig(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn salt_pick_when_only_sugar_is_needed_is_an_error() {
        let k = kitchen();
        let salt = ing(&k, "salt");
        let sugar = ing(&k, "sugar");
        let mut s = k.start_dish(1);
        for (slot, i) in k.recipe(1).iter().enumerate() {
            s.included[slot] = *i != sugar;
        }
        assert!(!k.kitchen_acceptable(&s, KitchenAction::Pick(k.location_of(salt))));
        assert!(k.kitchen_acceptable(&s, KitchenAction::Pick(k.location_of(sugar))));
    }

    #[test]
    fn serve_requires_a_complete_dish() {
        let k = kitchen();
        let mut s = k.start_dish(0);
        assert!(!k.kitchen_acceptable(&s, KitchenAction::Serve));
        s.included = [true; RECIPE_SIZE];
        assert!(k.kitchen_acceptable(&s, KitchenAction::Serve));
        assert_eq!(k.kitchen_optimal_set(&s), vec![KitchenAction::Serve]);
    }

    #[test]
    fn repeated_ingredient_is_an_error() {
        let k = kitchen();
        let s = k.start_dish(0);
        let tomato = k.location_of(ing(&k, "tomato"));
        let next = k.transition(&s, KitchenAction::Pick(tomato), 0);
        assert!(k.kitchen_acceptable(&s, KitchenAction::Pick(tomato)));
        assert!(!k.kitchen_acceptable(&next, KitchenAction::Pick(tomato)));
    }

    #[test]
    fn optimal_set_lists_remaining_ingredients() {
        let k = kitchen();
        let mut s = k.start_dish(0);
        // leave only onion and basil outstanding
        for (slot, i) in k.recipe(0).iter().enumerate() {
            let name = k.ingredient_name(*i);
            s.included[slot] = name != "onion" && name != "basil";
        }
        // basil sits at location 5, onion at location 7 (one-based)
        assert_eq!(
            k.kitchen_optimal_set(&s),
            vec![KitchenAction::Pick(4), KitchenAction::Pick(6)]
        );
    }

    #[test]
    fn swapped_belief_points_at_the_wrong_location() {
        let k = kitchen();
        // tomato soup with only salt missing
        let mut s = k.start_dish(0);
        for (slot, i) in k.recipe(0).iter().enumerate() {
            s.included[slot] = k.ingredient_name(*i) != "salt";
        }
        let believed = k.swap_confusable(&s);
        let opt = k.kitchen_optimal_set(&believed);
        assert_eq!(opt, vec![KitchenAction::Pick(k.location_of(ing(&k, "sugar")))]);
        assert!(!k.kitchen_acceptable(&s, opt[0]));
    }

    #[test]
    fn support_has_470_location_only_masks() {
        let support = kitchen_blind_spot_support();
        assert_eq!(support.len(), 1 + 14 + 91 + 364);
        assert!((1.0 / support.len() as f64 - 0.00213).abs() < 1e-5);
        assert!(support.contains(&BlindSpotMask::zeros(FEATURE_COUNT)));
        let four = BlindSpotMask::with_hidden(FEATURE_COUNT, &[8, 9, 10, 11]);
        assert!(!support.contains(&four));
        for m in &support {
            assert!(m.hidden().all(|j| j >= FIRST_LOCATION_FEATURE));
            assert!(m.count_hidden() <= 3);
        }
        let mut sorted = support.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 470);
    }

    #[test]
    fn completion_counts_are_factorial() {
        let k = kitchen();
        let s = k.encode(&k.start_dish(2));
        for m in kitchen_blind_spot_support() {
            let obs = mask_observe(&s, &m).unwrap();
            let comps = k.completions(&obs).unwrap();
            let expected = (1..=m.count_hidden()).product::<usize>();
            assert_eq!(comps.len(), expected);
            for c in &comps {
                assert!(c.consistent_with(&obs));
                assert!(k.admits(c));
            }
        }
    }

    #[test]
    fn salt_sugar_mask_gives_two_equally_likely_layouts() {
        let k = kitchen();
        let s = k.encode(&k.start_dish(0));
        let obs = mask_observe(&s, &k.confusable_mask()).unwrap();
        let prior = implicit_prior(&obs, &k).unwrap();
        assert_eq!(prior.len(), 2);
        assert!(prior.iter().all(|(_, p)| (*p - 0.5).abs() < 1e-15));
        let swapped = k.encode(&k.swap_confusable(&k.start_dish(0)));
        assert!(prior.iter().any(|(c, _)| *c == swapped));
        assert!(prior.iter().any(|(c, _)| *c == s));
    }

    #[test]
    fn masking_non_location_features_is_rejected() {
        let k = kitchen();
        let s = k.encode(&k.start_dish(0));
        let obs = mask_observe(&s, &BlindSpotMask::with_hidden(FEATURE_COUNT, &[0])).unwrap();
        assert!(matches!(
            k.completions(&obs),
            Err(GemError::UnsupportedMask { .. })
        ));
    }

    #[test]
    fn encode_decode_round_trip() {
        let k = kitchen();
        let mut s = k.start_dish(2);
        s.included[3] = true;
        assert_eq!(k.decode(&k.encode(&s)), s);
        k.schema().state(k.encode(&s).into_values()).unwrap();
    }
}
