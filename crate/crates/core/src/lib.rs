//! Simulation and verification toolkit for systems of coalescing random
//! walks, their diffusive scaling limits, and the voter models dual to
//! them.
//!
//! The crate is organized around the objects it manipulates:
//!
//! * [`increments`]: one-step increment laws on the integers, exact
//!   ladder-height and limiting-overshoot distributions.
//! * [`walks`]: coalescing systems in discrete and continuous time,
//!   occupancy densities, and an exact rational enumeration oracle.
//! * [`pathspace`]: the compactified plane, the path metric, Hausdorff
//!   distances, arrival counting, and tightness-probe events.
//! * [`maps`]: the crossing-coalescence and coincidence-coalescence maps
//!   applied to independent path families, plus a coalescing Brownian
//!   sampler used as a scale-free reference.
//! * [`voter`]: voter-model states coupled pathwise to dual backward
//!   walks, and interface (boundary) tracing.
//! * [`experiments`]: deterministic, mergeable Monte Carlo experiments
//!   with CSV/JSON reports.
//!
//! All randomness descends from a single 64-bit master seed through
//! keyed hashing (see [`rng`]), so every result is reproducible
//! bit-for-bit regardless of worker count.

pub mod experiments;
pub mod increments;
pub mod maps;
pub mod pathspace;
pub mod rng;
pub mod stats;
pub mod voter;
pub mod walks;
