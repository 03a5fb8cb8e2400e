// SPDX-License-Identifier: Apache-2.0

//! The analysis report written as `report.json`.

use serde::{Deserialize, Serialize};

use crate::diagnosis::{CorrelationCurve, DelayStats, DeltaStats, HeatmapGrid, MechanismVerdict, ScalingPoint};
use crate::fabric::{Coord, DmeId, TapId};
use crate::scenario::Scenario;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo { name: TOOL_NAME.into(), version: TOOL_VERSION.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGridInfo {
    /// Picoseconds.
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl PhaseGridInfo {
    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapReport {
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub label: String,
    pub position: Coord,
    pub tap_node_index: usize,
    pub branch_hops: usize,
    /// Clamped BER at every phase, aggregated over sweeps.
    pub ber: Vec<f64>,
    pub stats: Option<DelayStats>,
    pub stats_error: Option<String>,
    /// Against the same (monitor, tap) under the reference baseline.
    pub delta: Option<DeltaStats>,
    pub per_sweep_medians: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialReport {
    pub curve: Option<CorrelationCurve>,
    pub scaling: Vec<ScalingPoint>,
    pub heatmap: Option<HeatmapGrid>,
    /// Analyses that could not run, with the reason.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub config_state_id: u32,
    pub kind: String,
    pub perturbed_taps: Vec<TapId>,
    pub taps: Vec<TapReport>,
    pub spatial: SpatialReport,
    pub verdict: Option<MechanismVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub seed: u64,
    pub scenario: Scenario,
    pub phase_grid: PhaseGridInfo,
    pub conditions: Vec<ConditionReport>,
}

impl Report {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
