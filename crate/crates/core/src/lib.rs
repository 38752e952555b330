//! Belief-threshold relay selection for mmWave D2D links under moving
//! obstacles: an exact finite-horizon solver for the two-state link model,
//! and a grid-world simulator comparing it with RSS- and throughput-based
//! relay selection.

pub mod config;
pub mod experiment;
pub mod policy;
pub mod pomdp;
pub mod radio;
pub mod rng;
pub mod sim;
pub mod world;
