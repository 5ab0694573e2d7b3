//! Desk-scale laboratory for waypoint-based audio-goal navigation.
//!
//! The crate covers the whole loop: a grid simulator with ray-cast vision and
//! geodesic binaural audio ([`world`]), global and egocentric maps
//! ([`mapping`]), recurrent waypoint policies with hand-written reverse-mode
//! gradients ([`nnet`]), Dijkstra planning and execution ([`planner`]),
//! confidence-aware distillation from a point-goal teacher ([`distill`]),
//! PPO training ([`rl`]), omnidirectional information gathering ([`oig`]),
//! evaluation, metrics and ensembling ([`evalx`]), and experiment plumbing
//! ([`config`], [`experiment`]).

pub mod config;
pub mod distill;
pub mod error;
pub mod evalx;
pub mod experiment;
pub mod mapping;
pub mod nnet;
pub mod oig;
pub mod planner;
pub mod rl;
pub mod world;

pub use error::{LabError, Result};
