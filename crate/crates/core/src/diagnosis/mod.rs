// SPDX-License-Identifier: Apache-2.0

//! Offline analysis of measurement records.

use thiserror::Error;

use crate::fabric::DmeId;

pub mod classify;
pub mod correlation;
pub mod profile;

pub use classify::{classify_mechanism, evidence_from_deltas, Evidence, MechanismClass, MechanismVerdict, Thresholds};
pub use correlation::{
    central_reference, correlation_heatmap, dme_count_scaling, per_sweep_delay_series, spatial_correlation_curve,
    CorrelationCurve, HeatmapGrid, ScalingPoint, SeriesRow,
};
pub use profile::{
    compute_delta, empirical_cdf, extract_delay_stats, reconstruct_profile, BerProfile, Cdf, DelayStats, DeltaStats,
    PhaseAxis,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosisError {
    #[error("no records selected")]
    EmptyInput,
    #[error("records mix several (monitor, tap, condition) selections")]
    MixedSelection,
    #[error("phase grid has a gap at index {0}")]
    GapInPhaseGrid(u32),
    #[error("profile does not cover the full transition; widen the sweep range")]
    TransitionOutOfRange,
    #[error("at least 2 sweeps are needed, got {0}")]
    InsufficientSweeps(u32),
    #[error("series has zero variance")]
    ZeroVarianceSeries,
    #[error("fewer than one pair of usable series")]
    TooFewPairs,
    #[error("subset size {requested} exceeds the {available} usable monitors")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("reference monitor {0} has no usable series")]
    ZeroVarianceReference(DmeId),
    #[error("no baseline condition to compare against")]
    MissingBaseline,
}
