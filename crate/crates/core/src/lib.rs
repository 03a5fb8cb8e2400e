// SPDX-License-Identifier: Apache-2.0

//! Simulation and offline diagnosis of in-fabric delay monitors on a
//! modeled FPGA routing grid.
//!
//! Numeric kernels (statistics, profile extraction, error probability) are
//! generic over [`Scalar`]; the campaign pipeline runs in `f64`.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod degradation;
pub mod diagnosis;
pub mod fabric;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod sensing;
pub mod stats;
pub mod svg;

pub use scalar::Scalar;

pub type TransitionStatsF64 = fabric::TransitionStats<f64>;
pub type TransitionStatsF32 = fabric::TransitionStats<f32>;
pub type BerProfileF64 = diagnosis::BerProfile<f64>;
pub type BerProfileF32 = diagnosis::BerProfile<f32>;
pub type DelayStatsF64 = diagnosis::DelayStats<f64>;
pub type DelayStatsF32 = diagnosis::DelayStats<f32>;
pub type DeltaStatsF64 = diagnosis::DeltaStats<f64>;
pub type DeltaStatsF32 = diagnosis::DeltaStats<f32>;
pub type CdfF64 = diagnosis::Cdf<f64>;
pub type CdfF32 = diagnosis::Cdf<f32>;
