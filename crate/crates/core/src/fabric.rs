// SPDX-License-Identifier: Apache-2.0

//! Abstract routing fabric: a CLB grid with one switch-matrix block per
//! tile, deterministic L-shaped routes, observation-only delay taps and the
//! nominal transition statistics seen at each tap.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Domain};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FabricError {
    #[error("fabric dimensions must be at least 1x1 (got {width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("coordinate {0} lies outside the fabric")]
    OutOfGrid(Coord),
    #[error("node {node} is not on path {path}")]
    NodeNotOnPath { node: Coord, path: PathId },
    #[error("tap {tap} belongs to path {expected}, not path {got}")]
    PathMismatch { tap: TapId, expected: PathId, got: PathId },
    #[error("invalid fabric parameters: {0}")]
    InvalidParams(String),
    #[error("layout does not fit the fabric: {0}")]
    Layout(String),
}

/// CLB coordinate `(col, row)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub col: u32,
    pub row: u32,
}

impl Coord {
    pub const fn new(col: u32, row: u32) -> Self {
        Coord { col, row }
    }

    pub fn manhattan(self, other: Coord) -> u32 {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row)
    }

    pub fn euclidean(self, other: Coord) -> f64 {
        let dc = self.col as f64 - other.col as f64;
        let dr = self.row as f64 - other.row as f64;
        (dc * dc + dr * dr).sqrt()
    }

    fn key(self) -> u64 {
        ((self.col as u64) << 32) | self.row as u64
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

macro_rules! id_newtype {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(PathId, "P");
id_newtype!(TapId, "T");
id_newtype!(DmeId, "D");

/// Endpoint of a routing segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    /// Output pin of the launching logic block.
    LogicPin(Coord),
    /// Switch-matrix block of a CLB tile.
    Switch(Coord),
}

impl Node {
    fn key(self) -> u64 {
        match self {
            Node::LogicPin(c) => c.key() ^ (1 << 63),
            Node::Switch(c) => c.key(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingSegment {
    pub id: usize,
    pub from: Node,
    pub to: Node,
    /// Picoseconds.
    pub nominal_delay: f64,
    /// Standard deviation of the per-traversal random delay, picoseconds.
    pub jitter_std: f64,
}

/// Delay model knobs of the fabric. All times in picoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricParams {
    pub delay_min: f64,
    pub delay_max: f64,
    pub jitter_min: f64,
    pub jitter_max: f64,
    pub launch_delay: f64,
    pub launch_jitter: f64,
}

impl Default for FabricParams {
    fn default() -> Self {
        FabricParams {
            delay_min: 100.0,
            delay_max: 140.0,
            jitter_min: 2.0,
            jitter_max: 4.0,
            launch_delay: 200.0,
            launch_jitter: 5.0,
        }
    }
}

impl FabricParams {
    pub fn validate(&self) -> Result<(), FabricError> {
        let bad = |m: &str| Err(FabricError::InvalidParams(m.to_string()));
        if !(self.delay_min > 0.0 && self.delay_max >= self.delay_min) {
            return bad("require 0 < delay_min <= delay_max");
        }
        if !(self.jitter_min >= 0.0 && self.jitter_max >= self.jitter_min) {
            return bad("require 0 <= jitter_min <= jitter_max");
        }
        if !(self.launch_delay >= 0.0 && self.launch_jitter >= 0.0) {
            return bad("launch delay and jitter must be non-negative");
        }
        if !(self.launch_delay > 0.0 || self.delay_min > 0.0) {
            return bad("transition time must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricGrid {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub params: FabricParams,
    sites: Vec<Coord>,
}

/// Builds a `width x height` fabric with the default delay parameters.
pub fn build_fabric(width: u32, height: u32, seed: u64) -> Result<FabricGrid, FabricError> {
    FabricGrid::with_params(width, height, seed, FabricParams::default())
}

impl FabricGrid {
    pub fn with_params(
        width: u32,
        height: u32,
        seed: u64,
        params: FabricParams,
    ) -> Result<Self, FabricError> {
        if width == 0 || height == 0 {
            return Err(FabricError::ZeroDimension { width, height });
        }
        params.validate()?;
        let sites = (0..height)
            .flat_map(|row| (0..width).map(move |col| Coord::new(col, row)))
            .collect();
        Ok(FabricGrid { width, height, seed, params, sites })
    }

    /// Sites in row-major order; `site_index` maps back into this slice.
    pub fn sites(&self) -> &[Coord] {
        &self.sites
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.col < self.width && c.row < self.height
    }

    pub fn site_index(&self, c: Coord) -> Option<usize> {
        self.contains(c).then(|| (c.row * self.width + c.col) as usize)
    }

    pub fn check(&self, c: Coord) -> Result<(), FabricError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(FabricError::OutOfGrid(c))
        }
    }

    /// Length of the region diagonal, used to normalize distances.
    pub fn diagonal(&self) -> f64 {
        let w = (self.width.max(2) - 1) as f64;
        let h = (self.height.max(2) - 1) as f64;
        (w * w + h * h).sqrt()
    }

    fn draw_segment(&self, domain: Domain, id: usize, from: Node, to: Node) -> RoutingSegment {
        let mut r = rng::stream(self.seed, domain, &[from.key(), to.key()]);
        let p = &self.params;
        let u_delay: f64 = r.random();
        let u_jitter: f64 = r.random();
        RoutingSegment {
            id,
            from,
            to,
            nominal_delay: p.delay_min + (p.delay_max - p.delay_min) * u_delay,
            jitter_std: p.jitter_min + (p.jitter_max - p.jitter_min) * u_jitter,
        }
    }
}

/// Switch-matrix nodes of the horizontal-then-vertical route from `from` to
/// `to`, both endpoints included.
pub fn l_route(from: Coord, to: Coord) -> Vec<Coord> {
    let mut nodes = vec![from];
    let mut cur = from;
    while cur.col != to.col {
        cur.col = if to.col > cur.col { cur.col + 1 } else { cur.col - 1 };
        nodes.push(cur);
    }
    while cur.row != to.row {
        cur.row = if to.row > cur.row { cur.row + 1 } else { cur.row - 1 };
        nodes.push(cur);
    }
    nodes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutedPath {
    pub id: PathId,
    pub source: Coord,
    pub dest: Coord,
    /// Switch-matrix nodes in traversal order.
    pub nodes: Vec<Coord>,
    /// `segments[0]` enters the first switch matrix from the launching pin,
    /// `segments[i]` enters `nodes[i]`.
    pub segments: Vec<RoutingSegment>,
    pub sb_count: usize,
    pub launch_delay: f64,
    pub launch_jitter: f64,
}

impl RoutedPath {
    pub fn node_index(&self, c: Coord) -> Option<usize> {
        self.nodes.iter().position(|&n| n == c)
    }
}

pub fn route_functional_path(
    fabric: &FabricGrid,
    id: PathId,
    source: Coord,
    dest: Coord,
) -> Result<RoutedPath, FabricError> {
    fabric.check(source)?;
    fabric.check(dest)?;
    let nodes = l_route(source, dest);
    let mut segments = Vec::with_capacity(nodes.len());
    let mut prev = Node::LogicPin(source);
    for (i, &n) in nodes.iter().enumerate() {
        let to = Node::Switch(n);
        segments.push(fabric.draw_segment(Domain::FunctionalWire, i, prev, to));
        prev = to;
    }
    Ok(RoutedPath {
        id,
        source,
        dest,
        sb_count: segments.len(),
        nodes,
        segments,
        launch_delay: fabric.params.launch_delay,
        launch_jitter: fabric.params.launch_jitter,
    })
}

/// Observation-only fan-out branch from a switch-matrix node of a path to a
/// monitor input, terminated by an ideal buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayTap {
    pub id: TapId,
    pub path_id: PathId,
    pub tap_node: Coord,
    /// Index of `tap_node` in the path's node list.
    pub node_index: usize,
    pub position: Coord,
    pub monitor_position: Coord,
    pub branch: Vec<RoutingSegment>,
    pub branch_hops: usize,
}

impl DelayTap {
    pub fn label(&self) -> String {
        format!("L{}", self.id.0 + 1)
    }
}

pub fn attach_delay_tap(
    fabric: &FabricGrid,
    path: &RoutedPath,
    id: TapId,
    tap_node: Coord,
    monitor_position: Coord,
) -> Result<DelayTap, FabricError> {
    fabric.check(monitor_position)?;
    let node_index = path
        .node_index(tap_node)
        .ok_or(FabricError::NodeNotOnPath { node: tap_node, path: path.id })?;
    let hops = l_route(tap_node, monitor_position);
    let branch: Vec<_> = hops
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            fabric.draw_segment(Domain::BranchWire, i, Node::Switch(w[0]), Node::Switch(w[1]))
        })
        .collect();
    Ok(DelayTap {
        id,
        path_id: path.id,
        tap_node,
        node_index,
        position: tap_node,
        monitor_position,
        branch_hops: branch.len(),
        branch,
    })
}

/// Mean and spread of a transition arrival time, referenced to the
/// launching clock edge. Picoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats<T = f64> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> TransitionStats<T> {
    pub fn new(mu: T, sigma: T) -> Self {
        TransitionStats { mu, sigma }
    }

    pub fn cast<U: Scalar>(self) -> TransitionStats<U> {
        TransitionStats { mu: U::lit(self.mu.as_f64()), sigma: U::lit(self.sigma.as_f64()) }
    }
}

fn accumulate<'a>(
    launch_delay: f64,
    launch_jitter: f64,
    segs: impl Iterator<Item = &'a RoutingSegment>,
) -> TransitionStats {
    let (mut mu, mut var) = (launch_delay, launch_jitter * launch_jitter);
    for s in segs {
        mu += s.nominal_delay;
        var += s.jitter_std * s.jitter_std;
    }
    TransitionStats { mu, sigma: var.sqrt() }
}

/// Unstressed arrival statistics at a tap's observation buffer: launch,
/// functional segments up to the tap node, then the branch.
pub fn nominal_transition_stats(
    path: &RoutedPath,
    tap: &DelayTap,
) -> Result<TransitionStats, FabricError> {
    if tap.path_id != path.id {
        return Err(FabricError::PathMismatch { tap: tap.id, expected: tap.path_id, got: path.id });
    }
    if path.nodes.get(tap.node_index) != Some(&tap.tap_node) {
        return Err(FabricError::NodeNotOnPath { node: tap.tap_node, path: path.id });
    }
    Ok(accumulate(
        path.launch_delay,
        path.launch_jitter,
        path.segments[..=tap.node_index].iter().chain(&tap.branch),
    ))
}

/// Arrival statistics at the last switch matrix of the functional path.
pub fn endpoint_stats(path: &RoutedPath) -> TransitionStats {
    accumulate(path.launch_delay, path.launch_jitter, path.segments.iter())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmePlacement {
    pub id: DmeId,
    pub position: Coord,
    /// Taps the input multiplexer can select; one is observed at a time.
    pub assigned_taps: Vec<TapId>,
}

/// Placement of the monitored paths, taps and monitors over a fabric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instrumentation {
    pub fabric: FabricGrid,
    pub paths: Vec<RoutedPath>,
    pub taps: Vec<DelayTap>,
    pub dmes: Vec<DmePlacement>,
}

impl Instrumentation {
    pub fn tap(&self, id: TapId) -> Option<&DelayTap> {
        self.taps.iter().find(|t| t.id == id)
    }

    pub fn path(&self, id: PathId) -> Option<&RoutedPath> {
        self.paths.iter().find(|p| p.id == id)
    }

    pub fn dme(&self, id: DmeId) -> Option<&DmePlacement> {
        self.dmes.iter().find(|d| d.id == id)
    }

    pub fn nominal(&self, tap: TapId) -> Result<TransitionStats, FabricError> {
        let tap = self.tap(tap).ok_or(FabricError::Layout(format!("unknown tap {tap}")))?;
        let path = self
            .path(tap.path_id)
            .ok_or(FabricError::Layout(format!("unknown path {}", tap.path_id)))?;
        nominal_transition_stats(path, tap)
    }
}

/// Column/row counts for `n` monitors whose aspect ratio best matches the
/// fabric.
fn monitor_grid(n: u32, width: u32, height: u32) -> Option<(u32, u32)> {
    let target = width as f64 / height as f64;
    (1..=n)
        .filter(|nx| n.is_multiple_of(*nx))
        .map(|nx| (nx, n / nx))
        .filter(|&(nx, ny)| nx <= width && ny <= height)
        .min_by(|a, b| {
            let da = (a.0 as f64 / a.1 as f64 - target).abs();
            let db = (b.0 as f64 / b.1 as f64 - target).abs();
            da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
        })
}

/// Auto-placement: `dme_count` monitors on a uniform grid; monitors are
/// grouped into regions of `taps_per_region`, each region watching one
/// horizontal functional path through taps at evenly spaced switch nodes.
/// Tap `k` of a region feeds the `k`-th monitor of that region.
pub fn instrument(
    fabric: FabricGrid,
    dme_count: u32,
    taps_per_region: u32,
) -> Result<Instrumentation, FabricError> {
    instrument_at(fabric, dme_count, taps_per_region, None)
}

/// Like [`instrument`], but with tap `k` of every region placed at path node
/// `tap_nodes[k]` when given.
pub fn instrument_at(
    fabric: FabricGrid,
    dme_count: u32,
    taps_per_region: u32,
    tap_nodes: Option<&[u32]>,
) -> Result<Instrumentation, FabricError> {
    if tap_nodes.is_some_and(|n| n.len() != taps_per_region as usize) {
        return Err(FabricError::Layout(format!("expected {taps_per_region} explicit tap nodes")));
    }
    if dme_count == 0 || taps_per_region == 0 {
        return Err(FabricError::Layout("need at least one monitor and one tap".into()));
    }
    let (nx, ny) = monitor_grid(dme_count, fabric.width, fabric.height).ok_or_else(|| {
        FabricError::Layout(format!(
            "{dme_count} monitors cannot form a uniform grid on {}x{}",
            fabric.width, fabric.height
        ))
    })?;
    let mut dmes: Vec<DmePlacement> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .enumerate()
        .map(|(k, (i, j))| DmePlacement {
            id: DmeId(k as u32),
            position: Coord::new(
                ((2 * i + 1) * fabric.width) / (2 * nx),
                ((2 * j + 1) * fabric.height) / (2 * ny),
            ),
            assigned_taps: Vec::new(),
        })
        .collect();

    if fabric.width <= taps_per_region {
        return Err(FabricError::Layout(format!(
            "a {}-wide fabric cannot hold {taps_per_region} taps on one path",
            fabric.width
        )));
    }
    let regions = dme_count.div_ceil(taps_per_region);
    let mut paths = Vec::new();
    let mut taps = Vec::new();
    for r in 0..regions {
        let row = ((2 * r + 1) * fabric.height) / (2 * regions);
        let path = route_functional_path(
            &fabric,
            PathId(r),
            Coord::new(0, row),
            Coord::new(fabric.width - 1, row),
        )?;
        let last = (path.nodes.len() - 1) as u32;
        let in_region = (dme_count - r * taps_per_region).min(taps_per_region);
        for k in 0..in_region {
            let index = match tap_nodes {
                Some(n) => n[k as usize],
                None => ((k + 1) * last) / taps_per_region,
            };
            let node = *path.nodes.get(index as usize).ok_or_else(|| {
                FabricError::Layout(format!("tap node {index} is past the end of a {}-node path", last + 1))
            })?;
            let dme = &mut dmes[(r * taps_per_region + k) as usize];
            let tap = attach_delay_tap(&fabric, &path, TapId(taps.len() as u32), node, dme.position)?;
            dme.assigned_taps.push(tap.id);
            taps.push(tap);
        }
        paths.push(path);
    }
    Ok(Instrumentation { fabric, paths, taps, dmes })
}
