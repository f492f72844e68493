//! Analytical throughput model of the 802.11 distributed coordination
//! function (basic access) under finite load, Rayleigh channel errors,
//! and power capture, together with a slot-level discrete-event simulator
//! used to validate the model.
//!
//! The pieces compose bottom-up: [`config`] holds the parameter sets,
//! [`phy`] turns SNR into a frame error rate, [`capture`] computes the
//! capture-rescue probability, [`markov`] gives the per-station attempt
//! probability, [`metrics`] the slot durations and throughput, and
//! [`solver`] closes the loop into a consistent operating point. [`sim`]
//! replays the same MAC rules event by event, independently of the
//! analytical shortcuts.

pub mod capture;
pub mod config;
pub mod markov;
pub mod metrics;
pub mod phy;
pub mod sim;
pub mod solver;
