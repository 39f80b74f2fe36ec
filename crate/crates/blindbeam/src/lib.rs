//! Blind configuration of discrete-phase reflecting surfaces.
//!
//! A passive surface with N elements sits between a transmitter and a
//! receiver. Each element applies one of K phase shifts from the grid
//! {ω, 2ω, …, Kω}, ω = 2π/K. The crate provides algorithms that pick those
//! shifts purely from received-power measurements, with no channel
//! estimation, plus the channel model, sampling machinery, and experiment
//! harness used to evaluate them.
//!
//! The main entry points are [`algorithms::rms`], [`algorithms::csm`], and
//! [`algorithms::ecsm`] (blind methods), [`algorithms::cpp`] (the oracle
//! that rounds true phase gaps to the grid), and the [`experiments`]
//! module that wraps them into reproducible studies.

// Float validations are written as `!(x >= 0.0)` on purpose: the negated
// form rejects NaN, which the flipped comparison `x < 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod experiments;
pub mod multiuser;
pub mod report;
pub mod sampling;
pub mod seeding;

pub use error::{Error, Result};
