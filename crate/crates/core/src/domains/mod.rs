pub mod gridworld;
pub mod kitchen;
pub mod table;
