// SPDX-License-Identifier: Apache-2.0

//! Rule-based separation of supply-droop and routing-upset degradation.

use serde::{Deserialize, Serialize};

use super::profile::DeltaStats;
use super::DiagnosisError;
use crate::stats::{coefficient_of_variation, median};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub detect: f64,
    pub uniformity: f64,
    pub spread: f64,
    pub spread_routing: f64,
    /// CLB units.
    pub decay_pdn: f64,
    pub decay_routing: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            detect: 0.005,
            uniformity: 0.15,
            spread: 0.5,
            spread_routing: 1.0,
            decay_pdn: 4.0,
            decay_routing: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Mean of `|delta_mu_rel|` over taps.
    pub mean_abs_shift: f64,
    /// Coefficient of variation of `delta_mu_rel`; `None` when its mean is zero.
    pub shift_cv: Option<f64>,
    /// Median `delta_sigma` in phase steps.
    pub median_spread_steps: f64,
    pub max_spread_steps: f64,
    /// Fitted correlation decay length, CLB units.
    pub decay_length: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismClass {
    NoDegradation,
    PdnInduced,
    RoutingInduced,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismVerdict {
    pub class: MechanismClass,
    pub evidence: Evidence,
    pub thresholds: Thresholds,
}

pub fn evidence_from_deltas(deltas: &[DeltaStats], decay_length: Option<f64>) -> Result<Evidence, DiagnosisError> {
    if deltas.is_empty() {
        return Err(DiagnosisError::EmptyInput);
    }
    let rel: Vec<f64> = deltas.iter().map(|d| d.delta_mu_rel).collect();
    let spread: Vec<f64> = deltas.iter().map(|d| d.delta_sigma_steps).collect();
    Ok(Evidence {
        mean_abs_shift: rel.iter().map(|r| r.abs()).sum::<f64>() / rel.len() as f64,
        shift_cv: coefficient_of_variation(&rel),
        median_spread_steps: median(&spread).expect("non-empty"),
        max_spread_steps: spread.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        decay_length,
    })
}

pub fn classify_mechanism(evidence: Evidence, thresholds: Thresholds) -> MechanismVerdict {
    let t = &thresholds;
    let e = &evidence;
    let class = if e.mean_abs_shift < t.detect {
        MechanismClass::NoDegradation
    } else if e.shift_cv.is_some_and(|u| u < t.uniformity)
        && e.median_spread_steps < t.spread
        && e.decay_length.is_some_and(|l| l > t.decay_pdn)
    {
        MechanismClass::PdnInduced
    } else if e.max_spread_steps >= t.spread_routing && e.decay_length.is_none_or(|l| l < t.decay_routing) {
        MechanismClass::RoutingInduced
    } else {
        MechanismClass::Mixed
    };
    MechanismVerdict { class, evidence, thresholds }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: f64, u: f64, v: f64, l: f64) -> Evidence {
        Evidence {
            mean_abs_shift: s,
            shift_cv: Some(u),
            median_spread_steps: v,
            max_spread_steps: v,
            decay_length: Some(l),
        }
    }

    #[test]
    fn rule_examples() {
        let t = Thresholds::default();
        assert_eq!(classify_mechanism(ev(0.0, 5.0, 9.0, 0.1), t).class, MechanismClass::NoDegradation);
        assert_eq!(classify_mechanism(ev(0.04, 0.03, 0.1, 10.0), t).class, MechanismClass::PdnInduced);
        assert_eq!(classify_mechanism(ev(0.05, 0.6, 1.8, 1.2), t).class, MechanismClass::RoutingInduced);
        assert_eq!(classify_mechanism(ev(0.05, 0.6, 0.2, 3.0), t).class, MechanismClass::Mixed);
    }

    #[test]
    fn verdict_echoes_thresholds() {
        let t = Thresholds { detect: 0.1, ..Default::default() };
        let v = classify_mechanism(ev(0.05, 0.03, 0.1, 10.0), t);
        assert_eq!(v.class, MechanismClass::NoDegradation);
        assert_eq!(v.thresholds, t);
    }
}
