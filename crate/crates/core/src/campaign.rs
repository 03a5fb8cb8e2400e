// SPDX-License-Identifier: Apache-2.0

//! Campaign planning, execution and the measurement record store.
//!
//! Planned order is condition-major, then sweep, then (monitor, tap), then
//! phase. The store keeps records keyed by
//! `(config_state_id, dme_id, dt_id, sweep_id, phase_index)` and always
//! serializes in that order, so concurrent execution cannot change output.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::{ConditionSampler, ConditionState, DegradationError, SweepRealization};
use crate::fabric::{DmeId, Instrumentation, TapId};
use crate::sensing::{run_phase_sweep, PhaseSweepConfig, SensingError};

pub const CSV_HEADER: &str = "sweep_id,dme_id,dt_id,phase_index,config_state_id,error_count,window_cycles";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign has no baseline condition")]
    MissingBaseline,
    #[error("campaign schedule is empty")]
    EmptySchedule,
    #[error("schedule pairs monitor {dme} with tap {tap}, which it cannot select")]
    InvalidPair { dme: DmeId, tap: TapId },
    #[error("config_state_id {0} is used by more than one condition")]
    DuplicateConditionId(u32),
    #[error("duplicate record for key {0:?}")]
    DuplicateKey(RecordKey),
    #[error("unexpected CSV header {0:?}")]
    BadHeader(String),
    #[error("record {key:?} has error_count {count} above window_cycles {window}")]
    CountOverflow { key: RecordKey, count: u32, window: u32 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub conditions: Vec<ConditionState>,
    pub schedule: Vec<(DmeId, TapId)>,
    pub sweep: PhaseSweepConfig,
    pub seed: u64,
}

/// One planned observation window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlannedWindow {
    pub config_state_id: u32,
    pub sweep_id: u32,
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub phase_index: u32,
}

pub fn plan_campaign(
    conditions: Vec<ConditionState>,
    schedule: Vec<(DmeId, TapId)>,
    sweep: PhaseSweepConfig,
    seed: u64,
    inst: &Instrumentation,
) -> Result<CampaignPlan, CampaignError> {
    if !conditions.first().is_some_and(ConditionState::is_baseline) {
        return Err(CampaignError::MissingBaseline);
    }
    if schedule.is_empty() {
        return Err(CampaignError::EmptySchedule);
    }
    let mut ids: Vec<u32> = conditions.iter().map(|c| c.config_state_id).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CampaignError::DuplicateConditionId(w[0]));
    }
    for &(dme, tap) in &schedule {
        let ok = inst.dme(dme).is_some_and(|d| d.assigned_taps.contains(&tap));
        if !ok {
            return Err(CampaignError::InvalidPair { dme, tap });
        }
    }
    sweep.validate()?;
    Ok(CampaignPlan { conditions, schedule, sweep, seed })
}

impl CampaignPlan {
    pub fn num_phases(&self) -> usize {
        self.sweep.num_phases().expect("validated at planning")
    }

    pub fn total_windows(&self) -> usize {
        self.conditions.len() * self.schedule.len() * self.sweep.num_sweeps as usize * self.num_phases()
    }

    pub fn windows(&self) -> impl Iterator<Item = PlannedWindow> + '_ {
        let k = self.num_phases() as u32;
        self.conditions.iter().flat_map(move |c| {
            (0..self.sweep.num_sweeps).flat_map(move |s| {
                self.schedule.iter().flat_map(move |&(dme_id, dt_id)| {
                    (0..k).map(move |phase_index| PlannedWindow {
                        config_state_id: c.config_state_id,
                        sweep_id: s,
                        dme_id,
                        dt_id,
                        phase_index,
                    })
                })
            })
        })
    }
}

/// Per-sweep realizations for every condition, drawn once per
/// (condition, sweep) and shared by all monitors.
pub fn realize_conditions(
    conditions: &[ConditionState],
    inst: &Instrumentation,
    seed: u64,
    num_sweeps: u32,
) -> Result<Vec<Vec<SweepRealization>>, DegradationError> {
    conditions
        .iter()
        .map(|c| {
            let sampler = ConditionSampler::new(c, inst)?;
            Ok((0..num_sweeps).map(|s| sampler.realize(seed, s)).collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Concurrent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub sweep_id: u32,
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub phase_index: u32,
    pub config_state_id: u32,
    pub error_count: u32,
    pub window_cycles: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub config_state_id: u32,
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub sweep_id: u32,
    pub phase_index: u32,
}

impl MeasurementRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            config_state_id: self.config_state_id,
            dme_id: self.dme_id,
            dt_id: self.dt_id,
            sweep_id: self.sweep_id,
            phase_index: self.phase_index,
        }
    }
}

/// Any subset of key fields; `None` matches everything.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub config_state_id: Option<u32>,
    pub dme_id: Option<DmeId>,
    pub dt_id: Option<TapId>,
    pub sweep_id: Option<u32>,
    pub phase_index: Option<u32>,
}

impl RecordFilter {
    pub fn matches(&self, r: &MeasurementRecord) -> bool {
        self.config_state_id.is_none_or(|v| v == r.config_state_id)
            && self.dme_id.is_none_or(|v| v == r.dme_id)
            && self.dt_id.is_none_or(|v| v == r.dt_id)
            && self.sweep_id.is_none_or(|v| v == r.sweep_id)
            && self.phase_index.is_none_or(|v| v == r.phase_index)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordStore {
    records: BTreeMap<RecordKey, MeasurementRecord>,
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: MeasurementRecord) -> Result<(), CampaignError> {
        if r.error_count > r.window_cycles {
            return Err(CampaignError::CountOverflow {
                key: r.key(),
                count: r.error_count,
                window: r.window_cycles,
            });
        }
        match self.records.entry(r.key()) {
            std::collections::btree_map::Entry::Occupied(_) => Err(CampaignError::DuplicateKey(r.key())),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(r);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MeasurementRecord> {
        self.records.values()
    }

    pub fn query(&self, filter: &RecordFilter) -> Vec<MeasurementRecord> {
        self.records.values().filter(|r| filter.matches(r)).copied().collect()
    }

    pub fn config_state_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.keys().map(|k| k.config_state_id).collect();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CampaignError> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        for r in self.records.values() {
            wtr.serialize(r)?;
        }
        if self.records.is_empty() {
            wtr.write_record(CSV_HEADER.split(','))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, CampaignError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::None).from_reader(r);
        let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if header != CSV_HEADER {
            return Err(CampaignError::BadHeader(header));
        }
        let mut store = RecordStore::new();
        for rec in rdr.deserialize() {
            store.insert(rec?)?;
        }
        Ok(store)
    }
}

/// Runs every planned window. The output does not depend on `exec`.
pub fn execute_campaign(
    plan: &CampaignPlan,
    inst: &Instrumentation,
    exec: Execution,
) -> Result<RecordStore, CampaignError> {
    let realizations = realize_conditions(&plan.conditions, inst, plan.seed, plan.sweep.num_sweeps)?;
    let units: Vec<(usize, u32, usize)> = (0..plan.conditions.len())
        .flat_map(|c| {
            (0..plan.sweep.num_sweeps)
                .flat_map(move |s| (0..plan.schedule.len()).map(move |p| (c, s, p)))
        })
        .collect();
    let run = |&(c, s, p): &(usize, u32, usize)| -> Result<Vec<MeasurementRecord>, CampaignError> {
        let cond = &plan.conditions[c];
        let (dme_id, dt_id) = plan.schedule[p];
        let dme = inst.dme(dme_id).ok_or(CampaignError::InvalidPair { dme: dme_id, tap: dt_id })?;
        let sweep = run_phase_sweep(inst, dme, dt_id, cond, &realizations[c][s as usize], &plan.sweep, plan.seed)?;
        Ok(sweep
            .results
            .iter()
            .map(|w| MeasurementRecord {
                sweep_id: s,
                dme_id,
                dt_id,
                phase_index: w.phase_index as u32,
                config_state_id: cond.config_state_id,
                error_count: w.error_count,
                window_cycles: w.window_cycles,
            })
            .collect())
    };
    let batches: Vec<Vec<MeasurementRecord>> = match exec {
        Execution::Sequential => units.iter().map(run).collect::<Result<_, _>>()?,
        Execution::Concurrent => units.par_iter().map(run).collect::<Result<_, _>>()?,
    };
    let mut store = RecordStore::new();
    for r in batches.into_iter().flatten() {
        store.insert(r)?;
    }
    Ok(store)
}
