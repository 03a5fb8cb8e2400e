// SPDX-License-Identifier: Apache-2.0

//! BER-versus-phase profiles and the delay statistics extracted from them.

use serde::{Deserialize, Serialize};

use super::DiagnosisError;
use crate::campaign::MeasurementRecord;
use crate::scalar::Scalar;
use crate::stats::{normal_cdf, normal_quantile, pav_non_increasing};

/// Maps phase indices to sample times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAxis {
    pub start: f64,
    pub step: f64,
}

impl PhaseAxis {
    pub fn time<T: Scalar>(&self, phase_index: u32) -> T {
        T::lit(self.start + phase_index as f64 * self.step)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerProfile<T = f64> {
    /// Sample times, picoseconds.
    pub phases: Vec<T>,
    /// Monotone non-increasing error rates.
    pub ber: Vec<T>,
    /// True when the raw rates needed the monotone projection.
    pub monotone_clamped: bool,
    /// True when the profile starts at >= 0.99 and ends at <= 0.01.
    pub coverage_complete: bool,
    /// Half an error over the fewest cycles observed at any phase: the
    /// largest rate a zero count can hide.
    pub resolution: T,
}

/// Aggregates the records of one (monitor, tap, condition) into a profile.
/// With `sweep = Some(s)` only that sweep contributes.
pub fn reconstruct_profile<T: Scalar>(
    records: &[MeasurementRecord],
    sweep: Option<u32>,
    axis: PhaseAxis,
) -> Result<BerProfile<T>, DiagnosisError> {
    let selected: Vec<&MeasurementRecord> =
        records.iter().filter(|r| sweep.is_none_or(|s| r.sweep_id == s)).collect();
    let first = selected.first().ok_or(DiagnosisError::EmptyInput)?;
    let ident = (first.dme_id, first.dt_id, first.config_state_id);
    if selected.iter().any(|r| (r.dme_id, r.dt_id, r.config_state_id) != ident) {
        return Err(DiagnosisError::MixedSelection);
    }
    let lo = selected.iter().map(|r| r.phase_index).min().expect("non-empty");
    let hi = selected.iter().map(|r| r.phase_index).max().expect("non-empty");
    let k = (hi - lo + 1) as usize;
    let mut errors = vec![0u64; k];
    let mut windows = vec![0u64; k];
    for r in &selected {
        let i = (r.phase_index - lo) as usize;
        errors[i] += r.error_count as u64;
        windows[i] += r.window_cycles as u64;
    }
    if let Some(i) = windows.iter().position(|&w| w == 0) {
        return Err(DiagnosisError::GapInPhaseGrid(lo + i as u32));
    }
    let raw: Vec<T> = errors
        .iter()
        .zip(&windows)
        .map(|(&e, &w)| T::lit(e as f64 / w as f64))
        .collect();
    let weights: Vec<T> = windows.iter().map(|&w| T::lit(w as f64)).collect();
    let ber = pav_non_increasing(&raw, &weights);
    let monotone_clamped = ber != raw;
    let coverage_complete =
        ber[0] >= T::lit(0.99) && *ber.last().expect("non-empty") <= T::lit(0.01);
    Ok(BerProfile {
        phases: (lo..=hi).map(|i| axis.time(i)).collect(),
        ber,
        monotone_clamped,
        coverage_complete,
        resolution: T::lit(0.5 / *windows.iter().min().expect("non-empty") as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayStats<T = f64> {
    /// Time of the 0.5 crossing, picoseconds.
    pub median: T,
    /// Half the spread between the 15.87 % and 84.13 % crossings.
    pub sigma_est: T,
    pub q05: T,
    pub q95: T,
}

const ONE_SIGMA_LO: f64 = 0.158_655_253_931_457_05;
const ONE_SIGMA_HI: f64 = 0.841_344_746_068_542_9;

/// Moves saturated values `floor` away from 0 and 1 so they stay usable in
/// probit space.
fn unsaturate<T: Scalar>(f: T, floor: T) -> T {
    f.max(floor).min(T::one() - floor)
}

/// Interpolates between two neighbouring grid points. With both cumulative
/// values inside (0, 1), after lifting saturated ones by `floor`, the
/// interpolation runs in probit space, which is exact for Gaussian
/// transitions; otherwise it is linear in the cumulative value.
fn interpolate_time<T: Scalar>(t0: T, f0: T, t1: T, f1: T, p: T, floor: T) -> T {
    let inside = |f: T| f > T::zero() && f < T::one();
    let (f0, f1) = (unsaturate(f0, floor), unsaturate(f1, floor));
    let (a, b, x) = if inside(f0) && inside(f1) && inside(p) {
        (normal_quantile(f0), normal_quantile(f1), normal_quantile(p))
    } else {
        (f0, f1, p)
    };
    if b == a {
        return t0;
    }
    let frac = ((x - a) / (b - a)).max(T::zero()).min(T::one());
    t0 + (t1 - t0) * frac
}

/// Empirical CDF `F = 1 - BER` of the transition time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cdf<T = f64> {
    pub phases: Vec<T>,
    pub values: Vec<T>,
    /// Stand-in for exact 0 and 1 during probit interpolation; 0 disables it.
    pub floor: T,
}

impl<T: Scalar> Cdf<T> {
    /// First time at which the CDF reaches `p`.
    pub fn quantile(&self, p: T) -> Option<T> {
        let i = self.values.iter().position(|&f| f >= p)?;
        if i == 0 {
            return Some(self.phases[0]);
        }
        Some(interpolate_time(self.phases[i - 1], self.values[i - 1], self.phases[i], self.values[i], p, self.floor))
    }

    /// CDF value at an arbitrary time, clamped outside the grid.
    pub fn eval(&self, t: T) -> T {
        let n = self.phases.len();
        if n == 0 {
            return T::zero();
        }
        if t <= self.phases[0] {
            return self.values[0];
        }
        if t >= self.phases[n - 1] {
            return self.values[n - 1];
        }
        let i = self.phases.iter().position(|&x| x > t).expect("t inside grid");
        let (t0, t1) = (self.phases[i - 1], self.phases[i]);
        if self.values[i - 1] == self.values[i] {
            return self.values[i];
        }
        let (f0, f1) = (unsaturate(self.values[i - 1], self.floor), unsaturate(self.values[i], self.floor));
        let frac = (t - t0) / (t1 - t0);
        let inside = |f: T| f > T::zero() && f < T::one();
        if inside(f0) && inside(f1) {
            let (a, b) = (normal_quantile(f0), normal_quantile(f1));
            normal_cdf(a + (b - a) * frac)
        } else {
            f0 + (f1 - f0) * frac
        }
    }

    /// Slope at the median crossing, per picosecond.
    pub fn slope_at_median(&self, step: T) -> Option<T> {
        let m = self.quantile(T::lit(0.5))?;
        let h = step / T::lit(2.0);
        Some((self.eval(m + h) - self.eval(m - h)) / step)
    }
}

pub fn empirical_cdf<T: Scalar>(profile: &BerProfile<T>) -> Cdf<T> {
    Cdf {
        phases: profile.phases.clone(),
        values: profile.ber.iter().map(|&b| (T::one() - b).max(T::zero()).min(T::one())).collect(),
        floor: profile.resolution,
    }
}

/// Largest vertical gap between `stressed` and `baseline` moved right by
/// `shift`, over the stressed grid points inside the moved baseline grid.
pub fn shift_aligned_deviation<T: Scalar>(baseline: &Cdf<T>, stressed: &Cdf<T>, shift: T) -> T {
    let (Some(&lo), Some(&hi)) = (baseline.phases.first(), baseline.phases.last()) else {
        return T::zero();
    };
    stressed
        .phases
        .iter()
        .zip(&stressed.values)
        .filter(|(&t, _)| t - shift >= lo && t - shift <= hi)
        .map(|(&t, &f)| (f - baseline.eval(t - shift)).abs())
        .fold(T::zero(), T::max)
}

pub fn extract_delay_stats<T: Scalar>(profile: &BerProfile<T>) -> Result<DelayStats<T>, DiagnosisError> {
    if !profile.coverage_complete {
        return Err(DiagnosisError::TransitionOutOfRange);
    }
    let cdf = empirical_cdf(profile);
    let q = |p: f64| cdf.quantile(T::lit(p)).ok_or(DiagnosisError::TransitionOutOfRange);
    let lo = q(ONE_SIGMA_LO)?;
    let hi = q(ONE_SIGMA_HI)?;
    Ok(DelayStats {
        median: q(0.5)?,
        sigma_est: ((hi - lo) / T::lit(2.0)).max(T::zero()),
        q05: q(0.05)?,
        q95: q(0.95)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats<T = f64> {
    pub delta_mu: T,
    pub delta_mu_rel: T,
    pub delta_sigma: T,
    pub delta_mu_steps: T,
    pub delta_sigma_steps: T,
}

/// Stressed minus baseline on the same (monitor, tap).
pub fn compute_delta<T: Scalar>(baseline: &DelayStats<T>, stressed: &DelayStats<T>, phase_step: T) -> DeltaStats<T> {
    let delta_mu = stressed.median - baseline.median;
    let delta_sigma = stressed.sigma_est - baseline.sigma_est;
    DeltaStats {
        delta_mu,
        delta_mu_rel: delta_mu / baseline.median,
        delta_sigma,
        delta_mu_steps: delta_mu / phase_step,
        delta_sigma_steps: delta_sigma / phase_step,
    }
}
