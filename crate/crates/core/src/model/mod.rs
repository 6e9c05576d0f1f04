pub mod data;
pub mod domain;
pub mod likelihood;
pub mod priors;
pub mod schema;
