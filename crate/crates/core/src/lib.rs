//! Inference on whether a parameter vector lies in the cone `{Ax : x >= 0}`,
//! with bootstrap critical values, confidence-interval inversion and a
//! mixed-logit simulation design.

pub mod bootstrap;
pub mod cli;
pub mod hypothesis;
pub mod inference;
pub mod lp;
pub mod matlin;
pub mod mixedlogit;
pub mod restricted;
pub mod statistic;
