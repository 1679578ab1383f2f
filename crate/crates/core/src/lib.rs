//! Simulation and replay toolkit for an ahead-of-time express-lane auction
//! with a just-in-time resale intermediary.

pub mod agents;
pub mod analytics;
pub mod auction;
pub mod config;
pub mod io;
pub mod markout;
pub mod model;
pub mod price;
pub mod replay;
pub mod report;
pub mod resale;
pub mod reserve;
pub mod rng;
pub mod sequencer;
pub mod sim;
