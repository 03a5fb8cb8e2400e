// SPDX-License-Identifier: Apache-2.0

//! Scenario files: `key = value` lines grouped under `[fabric]`, `[taps]`,
//! `[dmes]`, `[sweep]`, `[condition.NAME]`, `[analysis]` and `[outputs]`.
//!
//! Only `[fabric]` is required. Every omitted key takes its default, and
//! without any condition section the scenario runs `baseline`, `pdn` and
//! `routing` with default parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::degradation::{PdnMode, PdnStressConfig, RoutingStressConfig};
use crate::diagnosis::Thresholds;
use crate::fabric::FabricParams;
use crate::sensing::SweepMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}` should be {expected}")]
    TypeMismatch { key: String, expected: &'static str, line: usize },
    #[error("missing required section [{0}]")]
    MissingSection(String),
    #[error("{0}")]
    ConstraintViolation(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricSection {
    pub width: u32,
    pub height: u32,
    /// Root seed for every random draw of the run.
    pub seed: u64,
    pub params: FabricParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapsSection {
    pub per_region: u32,
    /// Explicit node index of tap `k` on every region path.
    pub nodes: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmesSection {
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub phase_step: f64,
    /// Derived from the transition distributions when absent.
    pub phase_start: Option<f64>,
    pub phase_end: Option<f64>,
    pub window_cycles: u32,
    pub settle_cycles: u32,
    pub num_sweeps: u32,
    pub mode: SweepMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionSpec {
    Baseline,
    Pdn { pdn: PdnStressConfig },
    Routing { routing: RoutingStressConfig },
    Combined { pdn: PdnStressConfig, routing: RoutingStressConfig },
}

impl ConditionSpec {
    pub fn is_baseline(&self) -> bool {
        matches!(self, ConditionSpec::Baseline)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCondition {
    pub name: String,
    pub spec: ConditionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub thresholds: Thresholds,
    pub subset_sizes: Vec<usize>,
    pub bootstrap_reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputsSection {
    pub dir: Option<String>,
    pub svg: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub fabric: FabricSection,
    pub taps: TapsSection,
    pub dmes: DmesSection,
    pub sweep: SweepSection,
    /// Baselines first; position is the condition's config state id.
    pub conditions: Vec<NamedCondition>,
    pub analysis: AnalysisSection,
    pub outputs: OutputsSection,
}

impl Scenario {
    pub fn seed(&self) -> u64 {
        self.fabric.seed
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            fabric: FabricSection { width: 9, height: 8, seed: 1, params: FabricParams::default() },
            taps: TapsSection { per_region: 8, nodes: None },
            dmes: DmesSection { count: 32 },
            sweep: SweepSection {
                phase_step: 20.0,
                phase_start: None,
                phase_end: None,
                window_cycles: 1000,
                settle_cycles: 8,
                num_sweeps: 10,
                mode: SweepMode::Exact,
            },
            conditions: vec![
                NamedCondition { name: "baseline".into(), spec: ConditionSpec::Baseline },
                NamedCondition { name: "pdn".into(), spec: ConditionSpec::Pdn { pdn: PdnStressConfig::default() } },
                NamedCondition {
                    name: "routing".into(),
                    spec: ConditionSpec::Routing { routing: RoutingStressConfig::default() },
                },
            ],
            analysis: AnalysisSection {
                thresholds: Thresholds::default(),
                subset_sizes: vec![8, 16, 32],
                bootstrap_reps: 200,
            },
            outputs: OutputsSection { dir: None, svg: false },
        }
    }
}

/// Line of `key` inside the section whose header reads `header`; falls back
/// to the header line, then to 1.
fn locate(text: &str, header: Option<&str>, key: &str) -> usize {
    let norm = |s: &str| s.chars().filter(|c| !c.is_whitespace() && *c != '"' && *c != '\'').collect::<String>();
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = norm(line.trim_start_matches('[').split(']').next().unwrap_or(""));
            if header.is_none() && name == norm(key) {
                return i + 1;
            }
            if header.is_some_and(|h| norm(h) == name) {
                header_line = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        let in_section = match header {
            Some(h) => current.as_deref() == Some(norm(h).as_str()),
            None => current.is_none(),
        };
        if in_section && line.split('=').next().is_some_and(|k| norm(k) == norm(key)) {
            return i + 1;
        }
    }
    header_line.unwrap_or(1)
}

struct Section<'a> {
    header: String,
    table: &'a Table,
    text: &'a str,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(header: &str, table: &'a Table, text: &'a str) -> Self {
        Section { header: header.to_string(), table, text, used: BTreeSet::new() }
    }

    fn line(&self, key: &str) -> usize {
        locate(self.text, Some(&self.header), key)
    }

    fn mismatch(&self, key: &str, expected: &'static str) -> ScenarioError {
        ScenarioError::TypeMismatch { key: format!("{}.{key}", self.header), expected, line: self.line(key) }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.get(key)
    }

    fn f64(&mut self, key: &'static str, default: f64) -> Result<f64, ScenarioError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => as_f64(v).ok_or_else(|| self.mismatch(key, "a number")),
        }
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>, ScenarioError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| self.mismatch(key, "a number")),
        }
    }

    fn int(&mut self, key: &'static str) -> Result<Option<i64>, ScenarioError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(self.mismatch(key, "an integer")),
        }
    }

    fn u32(&mut self, key: &'static str, default: u32) -> Result<u32, ScenarioError> {
        match self.int(key)? {
            None => Ok(default),
            Some(i) => u32::try_from(i).map_err(|_| {
                ScenarioError::ConstraintViolation(format!("{}.{key} = {i} is out of range", self.header))
            }),
        }
    }

    fn bool(&mut self, key: &'static str, default: bool) -> Result<bool, ScenarioError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.mismatch(key, "true or false")),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<Option<String>, ScenarioError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.mismatch(key, "a string")),
        }
    }

    fn f64_list(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => {
                a.iter().map(as_f64).collect::<Option<Vec<_>>>().ok_or_else(|| self.mismatch(key, "a list of numbers"))
            }
            Some(_) => Err(self.mismatch(key, "a list of numbers")),
        }
    }

    fn u32_list(&mut self, key: &'static str) -> Result<Option<Vec<u32>>, ScenarioError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_integer().and_then(|i| u32::try_from(i).ok()))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| self.mismatch(key, "a list of non-negative integers")),
            Some(_) => Err(self.mismatch(key, "a list of non-negative integers")),
        }
    }

    /// Rejects keys that no getter asked for.
    fn finish(self) -> Result<(), ScenarioError> {
        match self.table.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(ScenarioError::UnknownKey { key: k.clone(), line: self.line(k) }),
            None => Ok(()),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn violation<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::ConstraintViolation(msg.into()))
}

fn sub_table<'a>(root: &'a Table, name: &str, text: &str) -> Result<Option<&'a Table>, ScenarioError> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(ScenarioError::TypeMismatch {
            key: name.to_string(),
            expected: "a section",
            line: locate(text, None, name),
        }),
    }
}

fn parse_pdn(s: &mut Section) -> Result<PdnStressConfig, ScenarioError> {
    let d = PdnStressConfig::default();
    let mode = match s.string("pdn_mode")?.as_deref() {
        None => d.mode,
        Some("multiplicative") => PdnMode::Multiplicative,
        Some("additive") => PdnMode::Additive,
        Some(_) => return Err(s.mismatch("pdn_mode", "\"multiplicative\" or \"additive\"")),
    };
    let cfg = PdnStressConfig {
        intensity: s.f64("intensity", d.intensity)?,
        kappa: s.f64("kappa", d.kappa)?,
        corr_length: s.f64("corr_length", d.corr_length)?,
        fluct_std: s.f64("fluct_std", d.fluct_std)?,
        mode,
        ref_delay: s.f64("ref_delay", d.ref_delay)?,
    };
    cfg.validate().map_err(|e| ScenarioError::ConstraintViolation(format!("[{}] {e}", s.header)))?;
    Ok(cfg)
}

fn parse_routing(s: &mut Section) -> Result<RoutingStressConfig, ScenarioError> {
    let d = RoutingStressConfig::default();
    let cfg = RoutingStressConfig {
        perturb_fraction: s.f64("perturb_fraction", d.perturb_fraction)?,
        upsets_per_hop: s.u32("upsets_per_hop", d.upsets_per_hop)?,
        delta_choices: s.f64_list("delta_choices", &d.delta_choices)?,
        jitter_choices: s.f64_list("jitter_choices", &d.jitter_choices)?,
        drift_fraction: s.f64("drift_fraction", d.drift_fraction)?,
        local_corr_length: s.f64("local_corr_length", d.local_corr_length)?,
    };
    cfg.validate().map_err(|e| ScenarioError::ConstraintViolation(format!("[{}] {e}", s.header)))?;
    Ok(cfg)
}

fn parse_condition(name: &str, table: &Table, text: &str) -> Result<ConditionSpec, ScenarioError> {
    let mut s = Section::new(&format!("condition.{name}"), table, text);
    let kind = match s.string("kind")? {
        Some(k) => k,
        None if ["baseline", "pdn", "routing", "combined"].contains(&name) => name.to_string(),
        None => return violation(format!("[condition.{name}] needs a `kind`")),
    };
    let spec = match kind.as_str() {
        "baseline" => ConditionSpec::Baseline,
        "pdn" => ConditionSpec::Pdn { pdn: parse_pdn(&mut s)? },
        "routing" => ConditionSpec::Routing { routing: parse_routing(&mut s)? },
        "combined" => ConditionSpec::Combined { pdn: parse_pdn(&mut s)?, routing: parse_routing(&mut s)? },
        _ => return Err(s.mismatch("kind", "one of baseline, pdn, routing, combined")),
    };
    s.finish()?;
    Ok(spec)
}

const SECTIONS: [&str; 7] = ["fabric", "taps", "dmes", "sweep", "condition", "analysis", "outputs"];

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(1);
        ScenarioError::Syntax { line, message: e.message().to_string() }
    })?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ScenarioError::UnknownKey { key: k.clone(), line: locate(text, None, k) });
    }
    let empty = Table::new();
    let d = Scenario::default();

    let fabric_t = sub_table(&root, "fabric", text)?.ok_or_else(|| ScenarioError::MissingSection("fabric".into()))?;
    let mut s = Section::new("fabric", fabric_t, text);
    let p = &d.fabric.params;
    let fabric = FabricSection {
        width: s.u32("width", d.fabric.width)?,
        height: s.u32("height", d.fabric.height)?,
        seed: match s.int("seed")? {
            None => d.fabric.seed,
            Some(i) => u64::try_from(i).or_else(|_| violation("fabric.seed must be >= 0"))?,
        },
        params: FabricParams {
            delay_min: s.f64("delay_min", p.delay_min)?,
            delay_max: s.f64("delay_max", p.delay_max)?,
            jitter_min: s.f64("jitter_min", p.jitter_min)?,
            jitter_max: s.f64("jitter_max", p.jitter_max)?,
            launch_delay: s.f64("launch_delay", p.launch_delay)?,
            launch_jitter: s.f64("launch_jitter", p.launch_jitter)?,
        },
    };
    s.finish()?;
    if fabric.width == 0 || fabric.height == 0 {
        return violation("fabric.width and fabric.height must be >= 1");
    }
    fabric.params.validate().map_err(|e| ScenarioError::ConstraintViolation(format!("[fabric] {e}")))?;

    let mut s = Section::new("taps", sub_table(&root, "taps", text)?.unwrap_or(&empty), text);
    let taps = TapsSection { per_region: s.u32("per_region", d.taps.per_region)?, nodes: s.u32_list("nodes")? };
    s.finish()?;
    if taps.per_region == 0 {
        return violation("taps.per_region must be >= 1");
    }
    if taps.nodes.as_ref().is_some_and(|n| n.len() != taps.per_region as usize) {
        return violation("taps.nodes must list exactly per_region node indices");
    }

    let mut s = Section::new("dmes", sub_table(&root, "dmes", text)?.unwrap_or(&empty), text);
    let dmes = DmesSection { count: s.u32("count", d.dmes.count)? };
    s.finish()?;
    if dmes.count == 0 {
        return violation("dmes.count must be >= 1");
    }

    let mut s = Section::new("sweep", sub_table(&root, "sweep", text)?.unwrap_or(&empty), text);
    let ds = &d.sweep;
    let mode = match s.string("mode")?.as_deref() {
        None => ds.mode,
        Some("exact") => SweepMode::Exact,
        Some("monte_carlo") => SweepMode::MonteCarlo,
        Some(_) => return Err(s.mismatch("mode", "\"exact\" or \"monte_carlo\"")),
    };
    let sweep = SweepSection {
        phase_step: s.f64("phase_step", ds.phase_step)?,
        phase_start: s.opt_f64("phase_start")?,
        phase_end: s.opt_f64("phase_end")?,
        window_cycles: s.u32("window_cycles", ds.window_cycles)?,
        settle_cycles: s.u32("settle_cycles", ds.settle_cycles)?,
        num_sweeps: s.u32("num_sweeps", ds.num_sweeps)?,
        mode,
    };
    s.finish()?;
    if !(sweep.phase_step > 0.0 && sweep.phase_step.is_finite()) {
        return violation("sweep.phase_step must be > 0");
    }
    if sweep.window_cycles == 0 || sweep.num_sweeps == 0 {
        return violation("sweep.window_cycles and sweep.num_sweeps must be >= 1");
    }
    match (sweep.phase_start, sweep.phase_end) {
        (None, None) => {}
        (Some(a), Some(b)) if b > a => {}
        (Some(_), Some(_)) => return violation("sweep.phase_end must exceed sweep.phase_start"),
        _ => return violation("sweep.phase_start and sweep.phase_end must be given together"),
    }

    let conditions = match sub_table(&root, "condition", text)? {
        None => d.conditions.clone(),
        Some(t) => {
            let mut list = Vec::new();
            for (name, v) in t {
                let Value::Table(ct) = v else {
                    return Err(ScenarioError::TypeMismatch {
                        key: format!("condition.{name}"),
                        expected: "a section",
                        line: locate(text, Some("condition"), name),
                    });
                };
                list.push(NamedCondition { name: name.clone(), spec: parse_condition(name, ct, text)? });
            }
            // Stable: baselines move to the front, the rest keep file order.
            list.sort_by_key(|c| !c.spec.is_baseline());
            list
        }
    };
    if !conditions.first().is_some_and(|c| c.spec.is_baseline()) {
        return violation("at least one condition must have kind = \"baseline\"");
    }

    let mut s = Section::new("analysis", sub_table(&root, "analysis", text)?.unwrap_or(&empty), text);
    let dt = &d.analysis.thresholds;
    let thresholds = Thresholds {
        detect: s.f64("detect", dt.detect)?,
        uniformity: s.f64("uniformity", dt.uniformity)?,
        spread: s.f64("spread", dt.spread)?,
        spread_routing: s.f64("spread_routing", dt.spread_routing)?,
        decay_pdn: s.f64("decay_pdn", dt.decay_pdn)?,
        decay_routing: s.f64("decay_routing", dt.decay_routing)?,
    };
    let subset_sizes = s
        .u32_list("subset_sizes")?
        .map(|v| v.into_iter().map(|n| n as usize).collect())
        .unwrap_or_else(|| d.analysis.subset_sizes.clone());
    let bootstrap_reps = s.u32("bootstrap_reps", d.analysis.bootstrap_reps as u32)? as usize;
    s.finish()?;
    let t = &thresholds;
    if [t.detect, t.uniformity, t.spread, t.spread_routing, t.decay_pdn, t.decay_routing]
        .iter()
        .any(|x| !(x.is_finite() && *x >= 0.0))
    {
        return violation("analysis thresholds must be finite and >= 0");
    }
    if subset_sizes.iter().any(|&n| n < 2) {
        return violation("analysis.subset_sizes entries must be >= 2");
    }
    if bootstrap_reps == 0 {
        return violation("analysis.bootstrap_reps must be >= 1");
    }
    let analysis = AnalysisSection { thresholds, subset_sizes, bootstrap_reps };

    let mut s = Section::new("outputs", sub_table(&root, "outputs", text)?.unwrap_or(&empty), text);
    let outputs = OutputsSection { dir: s.string("dir")?, svg: s.bool("svg", d.outputs.svg)? };
    s.finish()?;

    Ok(Scenario { fabric, taps, dmes, sweep, conditions, analysis, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fabric_only_gives_defaults() {
        assert_eq!(parse_scenario("[fabric]\n").unwrap(), Scenario::default());
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            parse_scenario("[fabric]\n[sweep]\nphase_step = 0\n"),
            Err(ScenarioError::ConstraintViolation(_))
        ));
        assert_eq!(
            parse_scenario("# comment\n[fabric]\nwidht = 9\n"),
            Err(ScenarioError::UnknownKey { key: "widht".into(), line: 3 })
        );
        assert_eq!(parse_scenario("[sweep]\n"), Err(ScenarioError::MissingSection("fabric".into())));
        assert!(matches!(
            parse_scenario("[fabric]\nwidth = \"nine\"\n"),
            Err(ScenarioError::TypeMismatch { line: 2, .. })
        ));
        assert_eq!(
            parse_scenario("[fabric]\n\n[condition.base]\nkind = \"baseline\"\nintensity = 1\n"),
            Err(ScenarioError::UnknownKey { key: "intensity".into(), line: 5 })
        );
        assert!(matches!(
            parse_scenario("[fabric]\n[condition.p]\nkind = \"pdn\"\n"),
            Err(ScenarioError::ConstraintViolation(_))
        ));
    }

    #[test]
    fn conditions_reordered() {
        let s = parse_scenario(
            "[fabric]\n[condition.stress]\nkind = \"pdn\"\nkappa = 0.08\n[condition.ref]\nkind = \"baseline\"\n",
        )
        .unwrap();
        assert_eq!(s.conditions[0].name, "ref");
        match &s.conditions[1].spec {
            ConditionSpec::Pdn { pdn } => assert_eq!(pdn.kappa, 0.08),
            other => panic!("{other:?}"),
        }
    }
}
