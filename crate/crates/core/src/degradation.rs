// SPDX-License-Identifier: Apache-2.0

//! Degradation mechanisms: a spatially correlated supply-droop field that
//! scales delays smoothly across the fabric, and localized cumulative delay
//! increments on tap observation branches emulating routing upsets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{
    nominal_transition_stats, Coord, DelayTap, FabricError, FabricGrid, Instrumentation,
    RoutedPath, TapId, TransitionStats,
};
use crate::rng::{self, Domain};

/// Diagonal ridge added to unit-variance kernels before factorization.
pub const COVARIANCE_RIDGE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegradationError {
    #[error("covariance matrix is not positive definite (corr_length = {0})")]
    SingularCovariance(f64),
    #[error("upset on tap {tap} addresses functional segment {segment}")]
    FunctionalPathViolation { tap: TapId, segment: usize },
    #[error("upset on tap {tap} addresses branch segment {segment}, branch has {hops}")]
    InvalidSegment { tap: TapId, segment: usize, hops: usize },
    #[error("upset references unknown tap {0}")]
    UnknownTap(TapId),
    #[error("invalid degradation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdnMode {
    Multiplicative,
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdnStressConfig {
    /// Stressor activity level in [0, 1].
    pub intensity: f64,
    /// Delay sensitivity slope.
    pub kappa: f64,
    /// Spatial correlation length of the droop field, CLB units.
    pub corr_length: f64,
    /// Per-sweep standard deviation of the droop field.
    pub fluct_std: f64,
    pub mode: PdnMode,
    /// Delay scale of the additive mode, picoseconds.
    pub ref_delay: f64,
}

impl Default for PdnStressConfig {
    fn default() -> Self {
        PdnStressConfig {
            intensity: 1.0,
            kappa: 0.04,
            corr_length: 100.0,
            fluct_std: 0.05,
            mode: PdnMode::Multiplicative,
            ref_delay: 1000.0,
        }
    }
}

impl PdnStressConfig {
    pub fn validate(&self) -> Result<(), DegradationError> {
        let bad = |m: &str| Err(DegradationError::InvalidConfig(m.to_string()));
        if !(self.intensity >= 0.0) {
            return bad("intensity must be >= 0");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be >= 0");
        }
        if !(self.corr_length > 0.0) {
            return bad("corr_length must be > 0");
        }
        if !(self.fluct_std >= 0.0) {
            return bad("fluct_std must be >= 0");
        }
        if !(self.ref_delay >= 0.0) {
            return bad("ref_delay must be >= 0");
        }
        Ok(())
    }
}

/// Delay multiplier for a droop field value; never below 1.
pub fn pdn_delay_multiplier(cfg: &PdnStressConfig, field_value: f64) -> f64 {
    (1.0 + cfg.kappa * (cfg.intensity + field_value)).max(1.0)
}

/// One realization of a zero-mean field over every fabric site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub width: u32,
    /// Row-major site values.
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn at(&self, c: Coord) -> f64 {
        self.values.get((c.row * self.width + c.col) as usize).copied().unwrap_or(0.0)
    }
}

/// Zero-mean Gaussian process on the fabric sites with covariance
/// `amplitude^2 * exp(-d / corr_length)`, `d` the Euclidean CLB distance.
#[derive(Clone, Debug)]
pub struct GaussianField {
    width: u32,
    amplitude: f64,
    factor: DMatrix<f64>,
}

impl GaussianField {
    pub fn new(fabric: &FabricGrid, corr_length: f64, amplitude: f64) -> Result<Self, DegradationError> {
        if !(corr_length > 0.0) {
            return Err(DegradationError::InvalidConfig("corr_length must be > 0".into()));
        }
        let sites = fabric.sites();
        let n = sites.len();
        let kernel = DMatrix::from_fn(n, n, |i, j| {
            let k = (-sites[i].euclidean(sites[j]) / corr_length).exp();
            if i == j {
                k + COVARIANCE_RIDGE
            } else {
                k
            }
        });
        let chol = kernel
            .cholesky()
            .ok_or(DegradationError::SingularCovariance(corr_length))?;
        Ok(GaussianField { width: fabric.width, amplitude, factor: chol.l() })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> FieldSample {
        let n = self.factor.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.factor * z;
        FieldSample { width: self.width, values: x.iter().map(|v| v * self.amplitude).collect() }
    }
}

/// Draws the droop field for one sweep.
pub fn sample_pdn_field(
    fabric: &FabricGrid,
    cfg: &PdnStressConfig,
    sweep_id: u32,
    seed: u64,
) -> Result<FieldSample, DegradationError> {
    cfg.validate()?;
    let field = GaussianField::new(fabric, cfg.corr_length, cfg.fluct_std)?;
    Ok(field.sample(&mut rng::stream(seed, Domain::PdnField, &[sweep_id as u64])))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRef {
    Branch(usize),
    Functional(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingUpset {
    pub tap: TapId,
    pub segment: SegmentRef,
    /// Picoseconds, >= 0.
    pub delta_delay: f64,
    /// Picoseconds.
    pub local_jitter_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingUpsetSet {
    pub entries: Vec<RoutingUpset>,
}

impl RoutingUpsetSet {
    /// Validated construction against the taps of an instrumented fabric.
    pub fn new(entries: Vec<RoutingUpset>, inst: &Instrumentation) -> Result<Self, DegradationError> {
        for e in &entries {
            let tap = inst.tap(e.tap).ok_or(DegradationError::UnknownTap(e.tap))?;
            check_entry(tap, e)?;
        }
        Ok(RoutingUpsetSet { entries })
    }

    pub fn union(&self, other: &RoutingUpsetSet) -> RoutingUpsetSet {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        RoutingUpsetSet { entries }
    }

    pub fn taps(&self) -> Vec<TapId> {
        let mut t: Vec<_> = self.entries.iter().map(|e| e.tap).collect();
        t.sort();
        t.dedup();
        t
    }
}

fn check_entry(tap: &DelayTap, e: &RoutingUpset) -> Result<(), DegradationError> {
    match e.segment {
        SegmentRef::Functional(segment) => {
            Err(DegradationError::FunctionalPathViolation { tap: e.tap, segment })
        }
        SegmentRef::Branch(segment) if segment >= tap.branch.len() => {
            Err(DegradationError::InvalidSegment { tap: e.tap, segment, hops: tap.branch.len() })
        }
        _ if !(e.delta_delay >= 0.0) || !(e.local_jitter_std >= 0.0) => Err(
            DegradationError::InvalidConfig("upset delay and jitter must be >= 0".into()),
        ),
        _ => Ok(()),
    }
}

/// Accumulated effect of upsets on one observation branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchPerturbation {
    /// Picoseconds.
    pub delta_delay: f64,
    /// Picoseconds squared.
    pub added_variance: f64,
}

pub fn apply_routing_upsets(
    tap: &DelayTap,
    upsets: &RoutingUpsetSet,
) -> Result<BranchPerturbation, DegradationError> {
    let mut out = BranchPerturbation::default();
    for e in upsets.entries.iter().filter(|e| e.tap == tap.id) {
        check_entry(tap, e)?;
        out.delta_delay += e.delta_delay;
        out.added_variance += e.local_jitter_std * e.local_jitter_std;
    }
    Ok(out)
}

/// Knobs for the auto-generated routing perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingStressConfig {
    /// Fraction of taps with a non-empty branch that receive upsets.
    pub perturb_fraction: f64,
    pub upsets_per_hop: u32,
    pub delta_choices: Vec<f64>,
    pub jitter_choices: Vec<f64>,
    /// Per-sweep drift of a perturbed branch, as a fraction of its added
    /// standard deviation.
    pub drift_fraction: f64,
    /// Correlation length of the per-sweep drift, CLB units.
    pub local_corr_length: f64,
}

impl Default for RoutingStressConfig {
    fn default() -> Self {
        RoutingStressConfig {
            perturb_fraction: 0.75,
            upsets_per_hop: 4,
            delta_choices: vec![20.0, 30.0, 40.0],
            jitter_choices: vec![15.0, 20.0],
            drift_fraction: 0.5,
            local_corr_length: 1.0,
        }
    }
}

impl RoutingStressConfig {
    pub fn validate(&self) -> Result<(), DegradationError> {
        let bad = |m: &str| Err(DegradationError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.perturb_fraction) {
            return bad("perturb_fraction must lie in [0, 1]");
        }
        if self.delta_choices.is_empty() || self.delta_choices.iter().any(|d| !(*d >= 0.0)) {
            return bad("delta_choices must be non-empty and >= 0");
        }
        if self.jitter_choices.is_empty() || self.jitter_choices.iter().any(|d| !(*d >= 0.0)) {
            return bad("jitter_choices must be non-empty and >= 0");
        }
        if !(self.drift_fraction >= 0.0) {
            return bad("drift_fraction must be >= 0");
        }
        if !(self.local_corr_length > 0.0) {
            return bad("local_corr_length must be > 0");
        }
        Ok(())
    }

    /// Seeded choice of perturbed taps and per-upset magnitudes. Every
    /// segment of a chosen tap's branch receives `upsets_per_hop` upsets.
    pub fn generate(
        &self,
        inst: &Instrumentation,
        seed: u64,
        config_state_id: u32,
    ) -> Result<RoutingUpsetSet, DegradationError> {
        self.validate()?;
        let mut r = rng::stream(seed, Domain::UpsetPlan, &[config_state_id as u64]);
        let mut candidates: Vec<&DelayTap> = inst.taps.iter().filter(|t| t.branch_hops > 0).collect();
        let want = (self.perturb_fraction * candidates.len() as f64).round() as usize;
        candidates.shuffle(&mut r);
        let mut chosen: Vec<&DelayTap> = candidates.into_iter().take(want).collect();
        chosen.sort_by_key(|t| t.id);
        let mut entries = Vec::new();
        for tap in chosen {
            for seg in 0..tap.branch.len() {
                for _ in 0..self.upsets_per_hop {
                    let d = self.delta_choices[r.random_range(0..self.delta_choices.len())];
                    let j = self.jitter_choices[r.random_range(0..self.jitter_choices.len())];
                    entries.push(RoutingUpset {
                        tap: tap.id,
                        segment: SegmentRef::Branch(seg),
                        delta_delay: d,
                        local_jitter_std: j,
                    });
                }
            }
        }
        RoutingUpsetSet::new(entries, inst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingPerturbation {
    pub upsets: RoutingUpsetSet,
    pub drift_fraction: f64,
    pub local_corr_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionKind {
    Baseline,
    PdnStress { pdn: PdnStressConfig },
    RoutingPerturb { routing: RoutingPerturbation },
    Combined { pdn: PdnStressConfig, routing: RoutingPerturbation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionState {
    pub name: String,
    pub config_state_id: u32,
    pub kind: ConditionKind,
}

impl ConditionState {
    pub fn is_baseline(&self) -> bool {
        matches!(self.kind, ConditionKind::Baseline)
    }

    pub fn pdn(&self) -> Option<&PdnStressConfig> {
        match &self.kind {
            ConditionKind::PdnStress { pdn } | ConditionKind::Combined { pdn, .. } => Some(pdn),
            _ => None,
        }
    }

    pub fn routing(&self) -> Option<&RoutingPerturbation> {
        match &self.kind {
            ConditionKind::RoutingPerturb { routing } | ConditionKind::Combined { routing, .. } => {
                Some(routing)
            }
            _ => None,
        }
    }
}

/// Stress state held fixed for one complete sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRealization {
    pub sweep_id: u32,
    pub field_sample: Option<FieldSample>,
    /// Picosecond offsets of perturbed branches for this sweep.
    pub local_draws: BTreeMap<TapId, f64>,
}

impl SweepRealization {
    pub fn quiet(sweep_id: u32) -> Self {
        SweepRealization { sweep_id, field_sample: None, local_draws: BTreeMap::new() }
    }
}

/// Pre-factorized samplers for one condition; produces a realization per
/// sweep keyed only by `(seed, sweep_id)`.
/// Drift field plus the position and sensitivity of each perturbed tap.
type DriftModel = (GaussianField, BTreeMap<TapId, (Coord, f64)>);

#[derive(Clone, Debug)]
pub struct ConditionSampler {
    pdn_field: Option<GaussianField>,
    drift: Option<DriftModel>,
}

impl ConditionSampler {
    pub fn new(condition: &ConditionState, inst: &Instrumentation) -> Result<Self, DegradationError> {
        let pdn_field = condition
            .pdn()
            .map(|cfg| {
                cfg.validate()?;
                GaussianField::new(&inst.fabric, cfg.corr_length, cfg.fluct_std)
            })
            .transpose()?;
        let drift = condition
            .routing()
            .map(|rp| -> Result<_, DegradationError> {
                let field = GaussianField::new(&inst.fabric, rp.local_corr_length, 1.0)?;
                let mut scale = BTreeMap::new();
                for id in rp.upsets.taps() {
                    let tap = inst.tap(id).ok_or(DegradationError::UnknownTap(id))?;
                    let p = apply_routing_upsets(tap, &rp.upsets)?;
                    scale.insert(id, (tap.position, rp.drift_fraction * p.added_variance.sqrt()));
                }
                Ok((field, scale))
            })
            .transpose()?;
        Ok(ConditionSampler { pdn_field, drift })
    }

    pub fn realize(&self, seed: u64, sweep_id: u32) -> SweepRealization {
        let key = [sweep_id as u64];
        let field_sample = self
            .pdn_field
            .as_ref()
            .map(|f| f.sample(&mut rng::stream(seed, Domain::PdnField, &key)));
        let local_draws = match &self.drift {
            Some((field, scale)) => {
                let g = field.sample(&mut rng::stream(seed, Domain::LocalDrift, &key));
                scale.iter().map(|(&id, &(pos, s))| (id, s * g.at(pos))).collect()
            }
            None => BTreeMap::new(),
        };
        SweepRealization { sweep_id, field_sample, local_draws }
    }
}

fn apply_pdn(stats: TransitionStats, cfg: &PdnStressConfig, field: f64) -> TransitionStats {
    match cfg.mode {
        PdnMode::Multiplicative => {
            let m = pdn_delay_multiplier(cfg, field);
            TransitionStats::new(stats.mu * m, stats.sigma * m)
        }
        PdnMode::Additive => {
            let shift = (cfg.kappa * (cfg.intensity + field) * cfg.ref_delay).max(0.0);
            TransitionStats::new(stats.mu + shift, stats.sigma)
        }
    }
}

/// Arrival statistics at a tap under a condition and sweep realization.
pub fn effective_transition_distribution(
    path: &RoutedPath,
    tap: &DelayTap,
    condition: &ConditionState,
    realization: &SweepRealization,
) -> Result<TransitionStats, DegradationError> {
    let mut stats = nominal_transition_stats(path, tap)?;
    if let Some(rp) = condition.routing() {
        let p = apply_routing_upsets(tap, &rp.upsets)?;
        let drift = realization.local_draws.get(&tap.id).copied().unwrap_or(0.0);
        stats = TransitionStats::new(
            stats.mu + p.delta_delay + drift,
            (stats.sigma * stats.sigma + p.added_variance).sqrt(),
        );
    }
    if let Some(cfg) = condition.pdn() {
        let field = realization.field_sample.as_ref().map_or(0.0, |f| f.at(tap.position));
        stats = apply_pdn(stats, cfg, field);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{attach_delay_tap, build_fabric, route_functional_path, PathId};

    fn cfg(kappa: f64, intensity: f64) -> PdnStressConfig {
        PdnStressConfig { kappa, intensity, ..Default::default() }
    }

    #[test]
    fn multiplier_examples() {
        assert_eq!(pdn_delay_multiplier(&cfg(0.04, 0.0), 0.0), 1.0);
        assert!((pdn_delay_multiplier(&cfg(0.05, 1.0), 0.0) - 1.05).abs() < 1e-15);
        assert_eq!(pdn_delay_multiplier(&cfg(0.05, 0.0), -0.4), 1.0);
    }

    #[test]
    fn zero_amplitude_field_is_zero() {
        let f = build_fabric(9, 8, 1).unwrap();
        let c = PdnStressConfig { fluct_std: 0.0, corr_length: 2.0, ..Default::default() };
        let s = sample_pdn_field(&f, &c, 3, 9).unwrap();
        assert_eq!(s.values.len(), 72);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    fn fixture() -> (FabricGrid, RoutedPath, DelayTap) {
        let f = build_fabric(6, 6, 11).unwrap();
        let p = route_functional_path(&f, PathId(0), Coord::new(0, 0), Coord::new(5, 0)).unwrap();
        let t = attach_delay_tap(&f, &p, TapId(0), Coord::new(3, 0), Coord::new(3, 4)).unwrap();
        (f, p, t)
    }

    fn upset(seg: SegmentRef, d: f64, j: f64) -> RoutingUpset {
        RoutingUpset { tap: TapId(0), segment: seg, delta_delay: d, local_jitter_std: j }
    }

    #[test]
    fn upset_examples() {
        let (_, _, t) = fixture();
        let p = apply_routing_upsets(&t, &RoutingUpsetSet::default()).unwrap();
        assert_eq!(p, BranchPerturbation::default());
        let set = RoutingUpsetSet {
            entries: vec![
                upset(SegmentRef::Branch(0), 30.0, 5.0),
                upset(SegmentRef::Branch(2), 30.0, 5.0),
            ],
        };
        let p = apply_routing_upsets(&t, &set).unwrap();
        assert_eq!(p.delta_delay, 60.0);
        assert_eq!(p.added_variance, 50.0);
        let bad = RoutingUpsetSet { entries: vec![upset(SegmentRef::Functional(1), 30.0, 5.0)] };
        assert!(matches!(
            apply_routing_upsets(&t, &bad),
            Err(DegradationError::FunctionalPathViolation { .. })
        ));
    }

    #[test]
    fn effective_examples() {
        let (_, p, t) = fixture();
        let nominal = nominal_transition_stats(&p, &t).unwrap();
        let base = ConditionState { name: "b".into(), config_state_id: 0, kind: ConditionKind::Baseline };
        let q = SweepRealization::quiet(0);
        assert_eq!(effective_transition_distribution(&p, &t, &base, &q).unwrap(), nominal);

        let stats = TransitionStats::new(800.0, 6.0);
        let m = pdn_delay_multiplier(&cfg(0.05, 1.0), 0.0);
        let s = apply_pdn(stats, &cfg(0.05, 1.0), 0.0);
        assert!((s.mu - 840.0).abs() < 1e-9 && (s.sigma - 6.3).abs() < 1e-9);
        assert!((m - 1.05).abs() < 1e-15);

        let routing = ConditionState {
            name: "r".into(),
            config_state_id: 1,
            kind: ConditionKind::RoutingPerturb {
                routing: RoutingPerturbation {
                    upsets: RoutingUpsetSet { entries: vec![upset(SegmentRef::Branch(1), 60.0, 8.0)] },
                    drift_fraction: 0.0,
                    local_corr_length: 1.0,
                },
            },
        };
        let s = effective_transition_distribution(&p, &t, &routing, &q).unwrap();
        assert!((s.mu - (nominal.mu + 60.0)).abs() < 1e-9);
        assert!((s.sigma - (nominal.sigma.powi(2) + 64.0).sqrt()).abs() < 1e-9);
        // The root-sum-square example: 6 ps combined with 8 ps gives 10 ps.
        assert!(((6.0_f64 * 6.0 + 8.0 * 8.0).sqrt() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn additive_mode_keeps_sigma() {
        let c = PdnStressConfig { mode: PdnMode::Additive, ..Default::default() };
        let s = apply_pdn(TransitionStats::new(500.0, 7.0), &c, 0.0);
        assert_eq!(s.sigma, 7.0);
        assert!((s.mu - 540.0).abs() < 1e-9);
    }
}
