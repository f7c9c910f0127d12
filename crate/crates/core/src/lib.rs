//! Super-resolution operator networks for forced diffusion problems.
//!
//! The crate is organized as a pipeline: [`pde`] and [`sample`] generate
//! low/high-resolution solution pairs of the heat equation under parametric
//! forcing, [`dataset`] packages them into records, [`model`] defines the
//! branch/sensor/trunk operator network, and [`train`] fits it with the tape
//! autodiff in [`tensor`] and scores it against the interpolation baselines
//! in [`baseline`].
//!
//! `no_std` with `alloc` when the `std` feature is disabled; all float math
//! goes through `libm` so results are bit-identical either way.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod math;
pub mod model;
pub mod optim;
pub mod pde;
pub mod rng;
pub mod sample;
pub mod tensor;
pub mod train;

pub use error::Error;
