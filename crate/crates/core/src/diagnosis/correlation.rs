// SPDX-License-Identifier: Apache-2.0

//! Per-sweep delay series, pairwise spatial correlation, monitor-count
//! scaling and correlation heatmaps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::profile::{extract_delay_stats, reconstruct_profile, PhaseAxis};
use super::DiagnosisError;
use crate::campaign::{RecordFilter, RecordStore};
use crate::fabric::{Coord, DmeId, TapId};
use crate::rng::{self, Domain};
use crate::stats::{pearson, percentile};

/// Median delay of one (monitor, tap) in each sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub dme_id: DmeId,
    pub dt_id: TapId,
    pub position: Coord,
    /// One entry per sweep; `None` where the sweep's profile was missing or
    /// did not cover the transition.
    pub medians: Vec<Option<f64>>,
    pub zero_variance: bool,
}

impl SeriesRow {
    pub fn missing_sweeps(&self) -> Vec<u32> {
        self.medians.iter().enumerate().filter(|(_, m)| m.is_none()).map(|(i, _)| i as u32).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.medians.iter().flatten().copied().collect()
    }
}

/// Builds the delay matrix `D[tap][sweep]` for one condition.
pub fn per_sweep_delay_series(
    store: &RecordStore,
    config_state_id: u32,
    monitors: &[(DmeId, TapId, Coord)],
    num_sweeps: u32,
    axis: PhaseAxis,
) -> Result<Vec<SeriesRow>, DiagnosisError> {
    if num_sweeps < 2 {
        return Err(DiagnosisError::InsufficientSweeps(num_sweeps));
    }
    let mut rows = Vec::with_capacity(monitors.len());
    for &(dme_id, dt_id, position) in monitors {
        let recs = store.query(&RecordFilter {
            config_state_id: Some(config_state_id),
            dme_id: Some(dme_id),
            dt_id: Some(dt_id),
            ..Default::default()
        });
        let medians: Vec<Option<f64>> = (0..num_sweeps)
            .map(|s| {
                reconstruct_profile::<f64>(&recs, Some(s), axis)
                    .and_then(|p| extract_delay_stats(&p))
                    .ok()
                    .map(|d| d.median)
            })
            .collect();
        let present: Vec<f64> = medians.iter().flatten().copied().collect();
        let zero_variance = present.len() < 2 || present.iter().all(|&m| m == present[0]);
        rows.push(SeriesRow { dme_id, dt_id, position, medians, zero_variance });
    }
    Ok(rows)
}

/// Pearson correlation over the sweeps present in both rows.
pub fn row_correlation(a: &SeriesRow, b: &SeriesRow) -> Option<(f64, usize)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .medians
        .iter()
        .zip(&b.medians)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    pearson(&xs, &ys).map(|r| (r, xs.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub dme_i: DmeId,
    pub dme_j: DmeId,
    /// CLB units.
    pub distance: f64,
    /// Distance divided by the region diagonal.
    pub normalized_distance: f64,
    pub r: f64,
    pub n_sweeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub distance_lo: f64,
    pub distance_hi: f64,
    pub mean_r: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub pairs: Vec<PairCorrelation>,
    /// Pairs skipped because a series had zero variance.
    pub excluded_pairs: Vec<(DmeId, DmeId)>,
    pub bins: Vec<DistanceBin>,
    /// Least-squares fit of `r = exp(-d / l)`, CLB units.
    pub decay_length: f64,
    /// First bin whose mean correlation drops below 0.5, if any.
    pub half_correlation_distance: Option<f64>,
}

const DECAY_MIN: f64 = 0.05;
const DECAY_MAX: f64 = 1000.0;

fn decay_loss(pairs: &[PairCorrelation], l: f64) -> f64 {
    pairs.iter().map(|p| (p.r - (-p.distance / l).exp()).powi(2)).sum()
}

/// Least-squares decay length over `[0.05, 1000]` CLB: a log-spaced scan
/// followed by golden-section refinement in log space.
pub fn fit_decay_length(pairs: &[PairCorrelation]) -> f64 {
    let (lmin, lmax) = (DECAY_MIN.ln(), DECAY_MAX.ln());
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|i| lmin + (lmax - lmin) * i as f64 / n as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| {
            decay_loss(pairs, a.1.exp()).partial_cmp(&decay_loss(pairs, b.1.exp())).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n)];
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if decay_loss(pairs, c.exp()) <= decay_loss(pairs, d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    ((a + b) / 2.0).exp()
}

pub fn spatial_correlation_curve(rows: &[SeriesRow], diagonal: f64) -> Result<CorrelationCurve, DiagnosisError> {
    let mut pairs = Vec::new();
    let mut excluded_pairs = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let r = if a.zero_variance || b.zero_variance { None } else { row_correlation(a, b) };
            match r {
                Some((r, n_sweeps)) => {
                    let distance = a.position.euclidean(b.position);
                    pairs.push(PairCorrelation {
                        dme_i: a.dme_id,
                        dme_j: b.dme_id,
                        distance,
                        normalized_distance: distance / diagonal,
                        r,
                        n_sweeps,
                    });
                }
                None => excluded_pairs.push((a.dme_id, b.dme_id)),
            }
        }
    }
    if pairs.is_empty() {
        return Err(DiagnosisError::TooFewPairs);
    }
    let max_bin = pairs.iter().map(|p| p.distance.floor() as usize).max().unwrap_or(0);
    let bins: Vec<DistanceBin> = (0..=max_bin)
        .filter_map(|b| {
            let rs: Vec<f64> = pairs
                .iter()
                .filter(|p| p.distance.floor() as usize == b)
                .map(|p| p.r)
                .collect();
            (!rs.is_empty()).then(|| DistanceBin {
                distance_lo: b as f64,
                distance_hi: (b + 1) as f64,
                mean_r: rs.iter().sum::<f64>() / rs.len() as f64,
                count: rs.len(),
            })
        })
        .collect();
    let half_correlation_distance = bins.iter().find(|b| b.mean_r < 0.5).map(|b| b.distance_lo);
    Ok(CorrelationCurve {
        decay_length: fit_decay_length(&pairs),
        pairs,
        excluded_pairs,
        bins,
        half_correlation_distance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub mean_r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: usize,
}

/// Mean pairwise correlation over growing monitor neighbourhoods. Each
/// replicate picks a seeded random centre monitor and takes the `n`
/// monitors nearest to it; the interval is the 2.5/97.5 percentile range of
/// the replicate means.
pub fn dme_count_scaling(
    rows: &[SeriesRow],
    sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ScalingPoint>, DiagnosisError> {
    let eligible: Vec<&SeriesRow> = rows.iter().filter(|r| !r.zero_variance).collect();
    let m = eligible.len();
    let mut corr = vec![vec![None; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let r = row_correlation(eligible[i], eligible[j]).map(|(r, _)| r);
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    let corr = &corr;
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n > m || n < 2 {
            return Err(DiagnosisError::SubsetTooLarge { requested: n, available: m });
        }
        let mut rng = rng::stream(seed, Domain::Subsets, &[n as u64]);
        let means: Vec<f64> = (0..reps.max(1))
            .filter_map(|_| {
                let centre = eligible[rng.random_range(0..m)].position;
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&a, &b| {
                    let da = centre.euclidean(eligible[a].position);
                    let db = centre.euclidean(eligible[b].position);
                    da.partial_cmp(&db).unwrap().then(eligible[a].dme_id.cmp(&eligible[b].dme_id))
                });
                let subset = &idx[..n];
                let rs: Vec<f64> = subset
                    .iter()
                    .enumerate()
                    .flat_map(|(k, &a)| subset[k + 1..].iter().filter_map(move |&b| corr[a][b]))
                    .collect();
                (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
            })
            .collect();
        if means.is_empty() {
            return Err(DiagnosisError::TooFewPairs);
        }
        out.push(ScalingPoint {
            n,
            mean_r: means.iter().sum::<f64>() / means.len() as f64,
            ci_low: percentile(&means, 2.5).expect("non-empty"),
            ci_high: percentile(&means, 97.5).expect("non-empty"),
            reps: means.len(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub dme_id: DmeId,
    pub position: Coord,
    /// `None` for monitors whose series has zero variance.
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub width: u32,
    pub height: u32,
    pub reference: DmeId,
    pub reference_position: Coord,
    pub cells: Vec<HeatmapCell>,
}

/// Monitor closest to the fabric centre among those with usable series.
pub fn central_reference(rows: &[SeriesRow], width: u32, height: u32) -> Option<DmeId> {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let dist = |c: Coord| ((c.col as f64 - cx).powi(2) + (c.row as f64 - cy).powi(2)).sqrt();
    rows.iter()
        .filter(|r| !r.zero_variance)
        .min_by(|a, b| {
            dist(a.position).partial_cmp(&dist(b.position)).unwrap().then(a.dme_id.cmp(&b.dme_id))
        })
        .map(|r| r.dme_id)
}

pub fn correlation_heatmap(
    rows: &[SeriesRow],
    width: u32,
    height: u32,
    reference: DmeId,
) -> Result<HeatmapGrid, DiagnosisError> {
    let reference_row = rows
        .iter()
        .find(|r| r.dme_id == reference)
        .filter(|r| !r.zero_variance)
        .ok_or(DiagnosisError::ZeroVarianceReference(reference))?;
    let cells = rows
        .iter()
        .map(|row| HeatmapCell {
            dme_id: row.dme_id,
            position: row.position,
            r: if row.dme_id == reference {
                Some(1.0)
            } else if row.zero_variance {
                None
            } else {
                row_correlation(reference_row, row).map(|(r, _)| r)
            },
        })
        .collect();
    Ok(HeatmapGrid { width, height, reference, reference_position: reference_row.position, cells })
}
