// SPDX-License-Identifier: Apache-2.0

//! End-to-end stages: scenario to instrumented fabric, campaign execution,
//! and offline analysis of a record store into a [`Report`].

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use thiserror::Error;

use crate::campaign::{
    execute_campaign, plan_campaign, realize_conditions, CampaignError, CampaignPlan, Execution, RecordFilter,
    RecordStore,
};
use crate::degradation::{
    effective_transition_distribution, ConditionKind, ConditionState, DegradationError, RoutingPerturbation,
    RoutingStressConfig,
};
use crate::diagnosis::{
    central_reference, classify_mechanism, compute_delta, correlation_heatmap, dme_count_scaling,
    evidence_from_deltas, extract_delay_stats, per_sweep_delay_series, reconstruct_profile,
    spatial_correlation_curve, DiagnosisError, PhaseAxis, SeriesRow,
};
use crate::fabric::{instrument_at, DmeId, FabricError, FabricGrid, Instrumentation, TapId};
use crate::report::{ConditionReport, PhaseGridInfo, Report, SpatialReport, TapReport, ToolInfo};
use crate::scenario::{parse_scenario, ConditionSpec, Scenario, ScenarioError};
use crate::sensing::{auto_phase_range, PhaseSweepConfig, SensingError};
use crate::svg::{self, RenderError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("records do not match the scenario: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Everything a scenario determines before any measurement is taken.
#[derive(Clone, Debug)]
pub struct World {
    pub scenario: Scenario,
    pub inst: Instrumentation,
    pub conditions: Vec<ConditionState>,
    pub sweep: PhaseSweepConfig,
}

impl World {
    pub fn seed(&self) -> u64 {
        self.scenario.seed()
    }

    /// Every (monitor, tap) pair the campaign observes.
    pub fn schedule(&self) -> Vec<(DmeId, TapId)> {
        self.inst.dmes.iter().flat_map(|d| d.assigned_taps.iter().map(move |&t| (d.id, t))).collect()
    }

    pub fn plan(&self) -> Result<CampaignPlan, PipelineError> {
        Ok(plan_campaign(self.conditions.clone(), self.schedule(), self.sweep.clone(), self.seed(), &self.inst)?)
    }

    pub fn axis(&self) -> PhaseAxis {
        PhaseAxis { start: self.sweep.phase_start, step: self.sweep.phase_step }
    }
}

fn routing_perturbation(
    cfg: &RoutingStressConfig,
    inst: &Instrumentation,
    seed: u64,
    config_state_id: u32,
) -> Result<RoutingPerturbation, DegradationError> {
    Ok(RoutingPerturbation {
        upsets: cfg.generate(inst, seed, config_state_id)?,
        drift_fraction: cfg.drift_fraction,
        local_corr_length: cfg.local_corr_length,
    })
}

pub fn build_world(scenario: &Scenario) -> Result<World, PipelineError> {
    let f = &scenario.fabric;
    let seed = scenario.seed();
    let fabric = FabricGrid::with_params(f.width, f.height, seed, f.params.clone())?;
    let inst = instrument_at(fabric, scenario.dmes.count, scenario.taps.per_region, scenario.taps.nodes.as_deref())?;
    let conditions = scenario
        .conditions
        .iter()
        .enumerate()
        .map(|(i, c)| -> Result<ConditionState, PipelineError> {
            let id = i as u32;
            let kind = match &c.spec {
                ConditionSpec::Baseline => ConditionKind::Baseline,
                ConditionSpec::Pdn { pdn } => ConditionKind::PdnStress { pdn: pdn.clone() },
                ConditionSpec::Routing { routing } => {
                    ConditionKind::RoutingPerturb { routing: routing_perturbation(routing, &inst, seed, id)? }
                }
                ConditionSpec::Combined { pdn, routing } => ConditionKind::Combined {
                    pdn: pdn.clone(),
                    routing: routing_perturbation(routing, &inst, seed, id)?,
                },
            };
            Ok(ConditionState { name: c.name.clone(), config_state_id: id, kind })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let s = &scenario.sweep;
    let (phase_start, phase_end) = match (s.phase_start, s.phase_end) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let realizations = realize_conditions(&conditions, &inst, seed, s.num_sweeps)?;
            let mut stats = Vec::new();
            for (cond, reals) in conditions.iter().zip(&realizations) {
                for real in reals {
                    for tap in &inst.taps {
                        let path = inst.path(tap.path_id).expect("tap path exists");
                        stats.push(effective_transition_distribution(path, tap, cond, real)?);
                    }
                }
            }
            auto_phase_range(&stats, s.phase_step).ok_or_else(|| {
                SensingError::InvalidConfig("no taps to derive a phase range from".into())
            })?
        }
    };
    let sweep = PhaseSweepConfig {
        phase_start,
        phase_end,
        phase_step: s.phase_step,
        window_cycles: s.window_cycles,
        settle_cycles: s.settle_cycles,
        num_sweeps: s.num_sweeps,
        mode: s.mode,
    };
    sweep.validate()?;
    debug!(
        "world: {} paths, {} taps, {} monitors, phases {}..{} step {}",
        inst.paths.len(),
        inst.taps.len(),
        inst.dmes.len(),
        phase_start,
        phase_end,
        s.phase_step
    );
    Ok(World { scenario: scenario.clone(), inst, conditions, sweep })
}

pub fn run_campaign(world: &World, exec: Execution) -> Result<RecordStore, PipelineError> {
    let plan = world.plan()?;
    info!("running {} windows", plan.total_windows());
    Ok(execute_campaign(&plan, &world.inst, exec)?)
}

fn kind_name(kind: &ConditionKind) -> &'static str {
    match kind {
        ConditionKind::Baseline => "baseline",
        ConditionKind::PdnStress { .. } => "pdn",
        ConditionKind::RoutingPerturb { .. } => "routing",
        ConditionKind::Combined { .. } => "combined",
    }
}

fn spatial_report(world: &World, rows: &[SeriesRow]) -> SpatialReport {
    let mut out = SpatialReport::default();
    let fabric = &world.inst.fabric;
    match spatial_correlation_curve(rows, fabric.diagonal()) {
        Ok(c) => out.curve = Some(c),
        Err(e) => out.notes.push(format!("correlation curve: {e}")),
    }
    let a = &world.scenario.analysis;
    for &n in &a.subset_sizes {
        match dme_count_scaling(rows, &[n], a.bootstrap_reps, world.seed()) {
            Ok(mut p) => out.scaling.append(&mut p),
            Err(e) => out.notes.push(format!("scaling n={n}: {e}")),
        }
    }
    match central_reference(rows, fabric.width, fabric.height) {
        Some(r) => match correlation_heatmap(rows, fabric.width, fabric.height, r) {
            Ok(h) => out.heatmap = Some(h),
            Err(e) => out.notes.push(format!("heatmap: {e}")),
        },
        None => out.notes.push("heatmap: no monitor has a usable series".into()),
    }
    out
}

/// Offline analysis of a record store against the world it came from.
pub fn analyze(world: &World, store: &RecordStore) -> Result<Report, PipelineError> {
    let axis = world.axis();
    let k = world.sweep.num_phases()?;
    if let Some(id) = store.config_state_ids().into_iter().find(|&id| id as usize >= world.conditions.len()) {
        return Err(PipelineError::Mismatch(format!("config_state_id {id} is not defined by the scenario")));
    }
    let monitors: Vec<_> = world
        .schedule()
        .into_iter()
        .map(|(d, t)| (d, t, world.inst.dme(d).expect("scheduled monitor").position))
        .collect();

    let mut conditions: Vec<ConditionReport> = Vec::new();
    for cond in &world.conditions {
        let id = cond.config_state_id;
        let rows = if world.sweep.num_sweeps >= 2 {
            per_sweep_delay_series(store, id, &monitors, world.sweep.num_sweeps, axis)?
        } else {
            Vec::new()
        };
        let taps = monitors
            .iter()
            .enumerate()
            .map(|(i, &(dme_id, dt_id, position))| {
                let tap = world.inst.tap(dt_id).expect("scheduled tap");
                let recs = store.query(&RecordFilter {
                    config_state_id: Some(id),
                    dme_id: Some(dme_id),
                    dt_id: Some(dt_id),
                    ..Default::default()
                });
                let profile = reconstruct_profile::<f64>(&recs, None, axis);
                let stats = profile.as_ref().map_err(Clone::clone).and_then(extract_delay_stats);
                if let Ok(p) = &profile {
                    if p.ber.len() != k {
                        debug!("{} {}: profile covers {} of {} phases", cond.name, tap.label(), p.ber.len(), k);
                    }
                }
                TapReport {
                    dme_id,
                    dt_id,
                    label: tap.label(),
                    position,
                    tap_node_index: tap.node_index,
                    branch_hops: tap.branch_hops,
                    ber: profile.map(|p| p.ber).unwrap_or_default(),
                    stats: stats.as_ref().ok().copied(),
                    stats_error: stats.err().map(|e| e.to_string()),
                    delta: None,
                    per_sweep_medians: rows.get(i).map(|r| r.medians.clone()).unwrap_or_default(),
                }
            })
            .collect::<Vec<_>>();
        let spatial = if rows.is_empty() {
            SpatialReport { notes: vec![DiagnosisError::InsufficientSweeps(world.sweep.num_sweeps).to_string()], ..Default::default() }
        } else {
            spatial_report(world, &rows)
        };
        conditions.push(ConditionReport {
            name: cond.name.clone(),
            config_state_id: id,
            kind: kind_name(&cond.kind).into(),
            perturbed_taps: cond.routing().map(|r| r.upsets.taps()).unwrap_or_default(),
            taps,
            spatial,
            verdict: None,
        });
    }

    let (reference, stressed) = conditions.split_first_mut().ok_or(DiagnosisError::MissingBaseline)?;
    for c in stressed {
        for (t, b) in c.taps.iter_mut().zip(&reference.taps) {
            if let (Some(s), Some(bs)) = (&t.stats, &b.stats) {
                t.delta = Some(compute_delta(bs, s, world.sweep.phase_step));
            }
        }
        let deltas: Vec<_> = c.taps.iter().filter_map(|t| t.delta).collect();
        match evidence_from_deltas(&deltas, c.spatial.curve.as_ref().map(|cv| cv.decay_length)) {
            Ok(ev) => c.verdict = Some(classify_mechanism(ev, world.scenario.analysis.thresholds)),
            Err(e) => c.spatial.notes.push(format!("verdict: {e}")),
        }
    }

    Ok(Report {
        tool: ToolInfo::default(),
        seed: world.seed(),
        scenario: world.scenario.clone(),
        phase_grid: PhaseGridInfo { start: world.sweep.phase_start, step: world.sweep.phase_step, count: k },
        conditions,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_scenario(&text)?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes every figure of the report into `dir`; returns the files written.
pub fn render_all(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    for (name, doc) in svg::render_report(report) {
        out.push(write(dir, &name, &doc?)?);
    }
    Ok(out)
}

fn finish_analysis(report: &Report, out: &Path) -> Result<(), PipelineError> {
    write(out, "report.json", &report.to_json())?;
    if report.scenario.outputs.svg {
        render_all(report, out)?;
    }
    Ok(())
}

/// `run`: simulate the campaign and analyze it.
pub fn cmd_run(scenario_path: &Path, out: &Path, exec: Execution) -> Result<Report, PipelineError> {
    let scenario = load_scenario(scenario_path)?;
    let world = build_world(&scenario)?;
    let store = run_campaign(&world, exec)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(out, "records.csv", &store.to_csv_string())?;
    let report = analyze(&world, &store)?;
    finish_analysis(&report, out)?;
    Ok(report)
}

/// `analyze`: re-derive the world from the scenario and analyze existing records.
pub fn cmd_analyze(records: &Path, scenario_path: &Path, out: &Path) -> Result<Report, PipelineError> {
    let scenario = load_scenario(scenario_path)?;
    let world = build_world(&scenario)?;
    let file = fs::File::open(records).map_err(io_err(records))?;
    let store = RecordStore::read_csv(std::io::BufReader::new(file))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let report = analyze(&world, &store)?;
    finish_analysis(&report, out)?;
    Ok(report)
}

/// `render`: figures from a saved report.
pub fn cmd_render(report_path: &Path, out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let text = fs::read_to_string(report_path).map_err(io_err(report_path))?;
    render_all(&Report::from_json(&text)?, out)
}
