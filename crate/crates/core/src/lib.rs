//! Appointment no-show prediction and overbooking decision support.
//!
//! The crate is organised along the flow of data through a clinic:
//!
//! * [`schema`] defines the canonical appointment record shared by every stage.
//! * [`datagen`] produces synthetic clinic histories with a known no-show process.
//! * [`ingest`] maps vendor exports onto the canonical schema and engineers features.
//! * [`model`] trains, evaluates, freezes and serves a random forest.
//! * [`aggregate`] turns per-appointment probabilities into hour-block heatmaps.
//! * [`simulate`] evaluates overbooking policies by Monte-Carlo simulation.
//! * [`snapshot`] packages scored schedules for publication to the read-only API.

pub mod aggregate;
pub mod datagen;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod schema;
pub mod simulate;
pub mod snapshot;
