// SPDX-License-Identifier: Apache-2.0

//! Delay monitoring element: phase-swept sampling of a tap's transition
//! distribution over fixed observation windows.
//!
//! An error is a sample that still captures the pre-transition value, so
//! the error rate falls from 1 to 0 as the sampling phase moves past the
//! transition.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::{
    effective_transition_distribution, ConditionState, DegradationError, SweepRealization,
};
use crate::fabric::{DmeId, DmePlacement, Instrumentation, TapId, TransitionStats};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;
use crate::stats::normal_sf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("phase range [{start}, {end}] with step {step} holds no sample points")]
    EmptyPhaseRange { start: f64, end: f64, step: f64 },
    #[error("tap {tap} is not in the chain of monitor {dme}")]
    TapNotAssigned { dme: DmeId, tap: TapId },
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Error count is the rounded expectation `N * p`.
    Exact,
    /// Error count is a binomial draw from a keyed stream.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweepConfig {
    /// Picoseconds.
    pub phase_start: f64,
    pub phase_end: f64,
    pub phase_step: f64,
    pub window_cycles: u32,
    pub settle_cycles: u32,
    pub num_sweeps: u32,
    pub mode: SweepMode,
}

impl PhaseSweepConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        let bad = |m: &str| Err(SensingError::InvalidConfig(m.to_string()));
        if !(self.phase_step > 0.0) {
            return bad("phase_step must be > 0");
        }
        if self.window_cycles == 0 {
            return bad("window_cycles must be >= 1");
        }
        if self.num_sweeps == 0 {
            return bad("num_sweeps must be >= 1");
        }
        self.num_phases().map(|_| ())
    }

    /// `floor((end - start) / step) + 1`.
    pub fn num_phases(&self) -> Result<usize, SensingError> {
        let span = (self.phase_end - self.phase_start) / self.phase_step;
        if !(self.phase_end > self.phase_start) || !span.is_finite() {
            return Err(SensingError::EmptyPhaseRange {
                start: self.phase_start,
                end: self.phase_end,
                step: self.phase_step,
            });
        }
        // Absorb representation error when the span is an exact multiple.
        Ok((span + 1e-9).floor() as usize + 1)
    }

    pub fn sample_time(&self, phase_index: usize) -> f64 {
        self.phase_start + phase_index as f64 * self.phase_step
    }

    pub fn phase_grid(&self) -> Result<Vec<f64>, SensingError> {
        Ok((0..self.num_phases()?).map(|i| self.sample_time(i)).collect())
    }
}

/// Step-aligned range covering `[min mu - 6 max sigma, max mu + 6 max sigma]`.
pub fn auto_phase_range(stats: &[TransitionStats], step: f64) -> Option<(f64, f64)> {
    if stats.is_empty() || !(step > 0.0) {
        return None;
    }
    let min_mu = stats.iter().map(|s| s.mu).fold(f64::INFINITY, f64::min);
    let max_mu = stats.iter().map(|s| s.mu).fold(f64::NEG_INFINITY, f64::max);
    let max_sigma = stats.iter().map(|s| s.sigma).fold(0.0, f64::max);
    let lo = ((min_mu - 6.0 * max_sigma) / step).floor() * step;
    let mut hi = ((max_mu + 6.0 * max_sigma) / step).ceil() * step;
    if hi <= lo {
        hi = lo + step;
    }
    Some((lo, hi))
}

/// Probability that a sample at `sample_time` captures the stale value,
/// `P(T > sample_time)` for `T ~ N(mu, sigma)`. Ties go to the new value.
pub fn error_probability<T: Scalar>(stats: TransitionStats<T>, sample_time: T) -> T {
    if stats.sigma <= T::zero() {
        return if sample_time < stats.mu { T::one() } else { T::zero() };
    }
    normal_sf((sample_time - stats.mu) / stats.sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWindowResult {
    pub error_count: u32,
    pub window_cycles: u32,
    pub phase_index: usize,
    /// Picoseconds.
    pub sample_time: f64,
}

/// Identity of one observation window; also keys its random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowKey {
    pub seed: u64,
    pub config_state_id: u32,
    pub sweep_id: u32,
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub phase_index: usize,
}

impl WindowKey {
    pub fn stream(&self) -> rand_chacha::ChaCha8Rng {
        rng::stream(
            self.seed,
            Domain::Window,
            &[
                self.config_state_id as u64,
                self.sweep_id as u64,
                self.dme_id.0 as u64,
                self.dt_id.0 as u64,
                self.phase_index as u64,
            ],
        )
    }
}

pub fn sample_error_count<R: Rng>(
    stats: TransitionStats,
    sample_time: f64,
    phase_index: usize,
    window_cycles: u32,
    mode: SweepMode,
    rng: &mut R,
) -> SampleWindowResult {
    let p = error_probability(stats, sample_time).clamp(0.0, 1.0);
    let n = window_cycles;
    let error_count = match mode {
        SweepMode::Exact => (n as f64 * p).round() as u32,
        SweepMode::MonteCarlo => {
            let b = Binomial::new(n as u64, p).expect("p clamped to [0, 1]");
            b.sample(rng) as u32
        }
    };
    SampleWindowResult { error_count: error_count.min(n), window_cycles: n, phase_index, sample_time }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSweep {
    pub results: Vec<SampleWindowResult>,
    /// Settling cycles spent before the windows; no timing effect.
    pub settle_cycles_total: u64,
}

/// One full sweep of a monitor over one of its taps, with the condition
/// realization held fixed throughout.
#[allow(clippy::too_many_arguments)]
pub fn run_phase_sweep(
    inst: &Instrumentation,
    dme: &DmePlacement,
    tap: TapId,
    condition: &ConditionState,
    realization: &SweepRealization,
    cfg: &PhaseSweepConfig,
    seed: u64,
) -> Result<PhaseSweep, SensingError> {
    if !dme.assigned_taps.contains(&tap) {
        return Err(SensingError::TapNotAssigned { dme: dme.id, tap });
    }
    let k = cfg.num_phases()?;
    let tap_ref = inst.tap(tap).ok_or(SensingError::TapNotAssigned { dme: dme.id, tap })?;
    let path = inst
        .path(tap_ref.path_id)
        .ok_or(SensingError::TapNotAssigned { dme: dme.id, tap })?;
    let stats = effective_transition_distribution(path, tap_ref, condition, realization)?;
    let mut settle_cycles_total = 0u64;
    let results = (0..k)
        .map(|phase_index| {
            settle_cycles_total += cfg.settle_cycles as u64;
            let key = WindowKey {
                seed,
                config_state_id: condition.config_state_id,
                sweep_id: realization.sweep_id,
                dme_id: dme.id,
                dt_id: tap,
                phase_index,
            };
            sample_error_count(
                stats,
                cfg.sample_time(phase_index),
                phase_index,
                cfg.window_cycles,
                cfg.mode,
                &mut key.stream(),
            )
        })
        .collect();
    Ok(PhaseSweep { results, settle_cycles_total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::ConditionKind;
    use crate::fabric::{build_fabric, instrument};

    #[test]
    fn probability_examples() {
        let s = TransitionStats::<f64>::new(500.0, 20.0);
        assert!((error_probability(s, 500.0) - 0.5).abs() < 1e-15);
        assert!(error_probability(s, 400.0) > 0.999_999);
        let z = TransitionStats::new(500.0, 0.0);
        assert_eq!(error_probability(z, 500.0), 0.0);
        assert_eq!(error_probability(z, 499.9), 1.0);
        let s32 = TransitionStats::<f32>::new(500.0, 20.0);
        assert!((error_probability(s32, 500.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn count_examples() {
        let mut r = rng::stream(0, Domain::Window, &[]);
        let s = TransitionStats::<f64>::new(500.0, 20.0);
        let w = sample_error_count(s, 0.0, 0, 1000, SweepMode::MonteCarlo, &mut r);
        assert_eq!(w.error_count, 1000);
        let w = sample_error_count(s, 500.0, 3, 1000, SweepMode::Exact, &mut r);
        assert_eq!(w.error_count, 500);
        assert_eq!(w.phase_index, 3);
    }

    #[test]
    fn phase_count() {
        let cfg = PhaseSweepConfig {
            phase_start: 0.0,
            phase_end: 1500.0,
            phase_step: 20.0,
            window_cycles: 1000,
            settle_cycles: 8,
            num_sweeps: 1,
            mode: SweepMode::Exact,
        };
        assert_eq!(cfg.num_phases().unwrap(), 76);
        let empty = PhaseSweepConfig { phase_end: -1.0, ..cfg };
        assert!(matches!(empty.num_phases(), Err(SensingError::EmptyPhaseRange { .. })));
    }

    #[test]
    fn unassigned_tap_rejected() {
        let inst = instrument(build_fabric(9, 8, 1).unwrap(), 8, 8).unwrap();
        let cond = ConditionState { name: "b".into(), config_state_id: 0, kind: ConditionKind::Baseline };
        let cfg = PhaseSweepConfig {
            phase_start: 0.0,
            phase_end: 2000.0,
            phase_step: 20.0,
            window_cycles: 100,
            settle_cycles: 4,
            num_sweeps: 1,
            mode: SweepMode::Exact,
        };
        let err = run_phase_sweep(&inst, &inst.dmes[0], TapId(5), &cond, &SweepRealization::quiet(0), &cfg, 1);
        assert!(matches!(err, Err(SensingError::TapNotAssigned { .. })));
        let ok = run_phase_sweep(&inst, &inst.dmes[5], TapId(5), &cond, &SweepRealization::quiet(0), &cfg, 1)
            .unwrap();
        assert_eq!(ok.results.len(), 101);
        assert_eq!(ok.settle_cycles_total, 404);
        assert_eq!(ok.results[0].error_count, 100);
        assert_eq!(ok.results.last().unwrap().error_count, 0);
    }
}
