//! Meshfree Lagrangian simulator for pedestrian flow.
//!
//! Two macroscopic models share one particle discretization:
//!
//! * a vision-based model in which each pedestrian walks at constant speed and
//!   only steers, driven by bearing-rate/time-to-interaction perception of the
//!   surrounding crowd — evaluated either nonlocally (pairwise) or through a
//!   precomputed local kernel table, and
//! * a social-force baseline with a speed degree of freedom whose desired
//!   direction comes from an Eikonal travel-cost field re-solved every step on
//!   the evolving density.
//!
//! Particles are moving grid points: spatial derivatives come from weighted
//! least squares over Gaussian-weighted neighbors, integrals from a first-order
//! rule with per-particle quadrature areas. The `scenario` and `run` modules
//! plus the `pedflow` binary drive bidirectional corridor evacuation
//! experiments end to end.

// validations use `!(x > 0.0)` on purpose: the negation also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod eikonal;
pub mod error;
pub mod interaction;
pub mod local;
pub mod meshfree;
pub mod nonlocal;
pub mod output;
pub mod rng;
pub mod run;
pub mod scenario;
pub mod sha1;
pub mod socialforce;
pub mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;
