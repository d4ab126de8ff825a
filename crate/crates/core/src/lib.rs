//! Discrete-event simulator for segmented video delivery over a federation
//! of fog delivery nodes (FDNs) backed by a central cloud.

pub mod engine;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod stochastic;
