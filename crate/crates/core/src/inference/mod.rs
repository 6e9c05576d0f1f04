//! Joint posterior over blind-spot masks and noise levels, implicit-state
//! queries and evaluation metrics.

mod evidence;
mod gibbs;
mod implicit;
mod posterior;

pub use evidence::{
    fixed_noise_posterior, posterior_exact, posterior_exact_with_cap, Evidence,
    DEFAULT_ENUMERATION_CAP,
};
pub use gibbs::{gibbs_posterior, GibbsConfig};
pub use implicit::{
    aggregate_feature_marginal, implicit_posterior, ImplicitPosterior, Selection, NEGLIGIBLE_MASS,
};
pub use posterior::{
    argmax_prediction, kl_to_truth, total_variation, Argmax, InferenceMethod, JointPosterior,
    PosteriorEntry, KL_FLOOR,
};
