//! Secure transmit design for a full-duplex link with simultaneous wireless
//! information and power transfer: a base station and a user exchange data
//! while energy receivers, which may eavesdrop, harvest power.
//!
//! The pipeline is [`model`] (channels and rates), [`reduction`] (null-space
//! change of variables), [`srm`] (the per-point convex subproblem and
//! rank-one recovery, solved by [`conic`]) and [`search`] (the outer grid
//! over the leakage split). [`oracle`] holds brute-force references for small
//! instances.

pub mod conic;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod reduction;
pub mod search;
pub mod srm;
