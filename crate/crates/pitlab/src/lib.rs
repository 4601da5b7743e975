//! Desk-scale laboratory for studying controllable PIT (precision
//! immobilization technique) maneuvers between two vehicles.
//!
//! The crate is organised as a stack:
//!
//! * [`dynamics`] — the ground-truth plant: a planar two-vehicle contact
//!   simulator with a roll degree of freedom on the target vehicle.
//! * [`surrogate`] — a compact physics-informed one-step model of the target's
//!   contact response, produced by a distill / cluster / finetune pipeline.
//! * [`optim`] — a reverse-mode tape over a small primitive set plus a
//!   projected-gradient solver; every gradient in the repo flows through here
//!   or is checked against it.
//! * [`planner`] — the upper decision layer: virtual interaction pulses rolled
//!   through the surrogate, scored, refined, and packaged for the controller.
//! * [`controller`] — the coupled model-predictive tracking layer and the
//!   phase executive that closes the loop against the plant.
//! * [`scenario`] — scenario sampling from attribute priors with quota
//!   apportionment and prescreening.
//! * [`bench`] — run judging, failure taxonomy, aggregation, and the
//!   parallel benchmark harness behind the command-line tool.

pub mod controller;
pub mod dynamics;
pub mod math;
pub mod optim;
pub mod planner;
pub mod scenario;
pub mod surrogate;
// Modules still being brought up in this scaffold pass:
// pub mod bench;
// pub mod controller;
