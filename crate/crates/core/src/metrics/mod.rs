//! Reconstruction-fidelity metrics: truncated Chamfer distance, depth
//! RMSE, sequence ranking, and object-size distribution statistics.

pub mod kdtree;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::ingest::{BoxLabel, ObjectClass};
use kdtree::NearestNeighborIndex;

/// Symmetric Chamfer distance result. Terms are mean *squared* nearest
/// neighbor distances (square meters), so `total = forward + backward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdResult {
    pub forward_term: f64,
    pub backward_term: f64,
    pub total: f64,
    pub truncation_fraction: f64,
}

/// Mean squared nearest-neighbor distance from `from` into `index`,
/// keeping only the smallest `fraction` of per-point distances. The
/// discard count is `ceil((1 - fraction) * n)`.
fn directed_term(from: &PointCloud, index: &NearestNeighborIndex, fraction: f64) -> f64 {
    let mut dists: Vec<f64> = from
        .points
        .par_iter()
        .map(|&p| index.nearest(p).expect("non-empty index").1)
        .collect();
    let n = dists.len();
    let discard = ((1.0 - fraction) * n as f64).ceil() as usize;
    let kept = n.saturating_sub(discard).max(1);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists.truncate(kept);
    dists.iter().sum::<f64>() / kept as f64
}

/// Truncated symmetric Chamfer distance between a rendered cloud and a
/// reference cloud. `truncation_fraction = 1` is the exact symmetric
/// mean-of-squared-distances form; the 0.97 default drops the worst 3%
/// of matches in each direction independently.
pub fn chamfer(g_hat: &PointCloud, g: &PointCloud, truncation_fraction: f64) -> Result<CdResult> {
    if g_hat.is_empty() || g.is_empty() {
        return Err(Error::invalid("chamfer distance requires non-empty clouds"));
    }
    if !(truncation_fraction > 0.0 && truncation_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "truncation fraction must be in (0, 1], got {truncation_fraction}"
        )));
    }
    let index_g = NearestNeighborIndex::build(&g.points);
    let index_g_hat = NearestNeighborIndex::build(&g_hat.points);
    let forward = directed_term(g_hat, &index_g, truncation_fraction);
    let backward = directed_term(g, &index_g_hat, truncation_fraction);
    Ok(CdResult {
        forward_term: forward,
        backward_term: backward,
        total: forward + backward,
        truncation_fraction,
    })
}

/// Root mean square error between rendered and measured depths.
pub fn rmse_depth(rendered: &[f64], measured: &[f64]) -> Result<f64> {
    if rendered.len() != measured.len() {
        return Err(Error::invalid(format!(
            "rmse_depth length mismatch: {} vs {}",
            rendered.len(),
            measured.len()
        )));
    }
    if rendered.is_empty() {
        return Err(Error::invalid("rmse_depth requires at least one sample"));
    }
    let sum_sq: f64 = rendered
        .iter()
        .zip(measured)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum_sq / rendered.len() as f64).sqrt())
}

/// Per-sequence reconstruction score.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScore {
    pub sequence_id: String,
    pub rmse: f64,
    pub cd: f64,
}

/// Sort ascending by Chamfer distance (lower is better), then RMSE, then
/// sequence id. Stable and deterministic.
pub fn rank_sequences(scores: &[SequenceScore]) -> Vec<SequenceScore> {
    let mut out = scores.to_vec();
    out.sort_by(|a, b| {
        a.cd.partial_cmp(&b.cd)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.rmse.partial_cmp(&b.rmse).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.sequence_id.cmp(&b.sequence_id))
    });
    out
}

/// Box dimension axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Length,
    Width,
    Height,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Length, Dimension::Width, Dimension::Height];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Width => "width",
            Dimension::Height => "height",
        }
    }

    fn pick(self, size: (f64, f64, f64)) -> f64 {
        match self {
            Dimension::Length => size.0,
            Dimension::Width => size.1,
            Dimension::Height => size.2,
        }
    }
}

/// Histogram over one (class, dimension) series.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSeries {
    /// Strictly increasing bin edges; bin i is `[edges[i], edges[i+1])`,
    /// except the last bin which also contains its upper edge.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramSeries {
    fn from_values(values: &[f64], bin_width: f64) -> HistogramSeries {
        debug_assert!(!values.is_empty());
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let nbins = (((hi - lo) / bin_width).ceil() as usize).max(1);
        let edges: Vec<f64> = (0..=nbins).map(|i| lo + i as f64 * bin_width).collect();
        let mut counts = vec![0u64; nbins];
        for &v in values {
            let idx = (((v - lo) / bin_width).floor() as usize).min(nbins - 1);
            counts[idx] += 1;
        }
        HistogramSeries { edges, counts }
    }

    pub fn sample_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    /// Redistribute counts onto `edges`, splitting each source bin's mass
    /// proportionally to overlap (uniform-within-bin assumption).
    fn rebin(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len() - 1];
        for (i, &count) in self.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (s0, s1) = (self.edges[i], self.edges[i + 1]);
            let width = s1 - s0;
            if width <= 0.0 {
                continue;
            }
            for (j, slot) in out.iter_mut().enumerate() {
                let (t0, t1) = (edges[j], edges[j + 1]);
                let overlap = (s1.min(t1) - s0.max(t0)).max(0.0);
                if overlap > 0.0 {
                    *slot += count as f64 * overlap / width;
                }
            }
        }
        out
    }
}

/// Per-class, per-dimension object-size histograms.
#[derive(Debug, Clone, Default)]
pub struct SizeHistogram {
    pub series: BTreeMap<(ObjectClass, Dimension), HistogramSeries>,
}

/// Histogram the (length, width, height) of each label per class.
pub fn size_distribution(labels: &[BoxLabel], bin_width: f64) -> Result<SizeHistogram> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin_width must be positive"));
    }
    let mut grouped: BTreeMap<(ObjectClass, Dimension), Vec<f64>> = BTreeMap::new();
    for label in labels {
        for dim in Dimension::ALL {
            grouped
                .entry((label.class_name, dim))
                .or_default()
                .push(dim.pick(label.size));
        }
    }
    let series = grouped
        .into_iter()
        .map(|(key, values)| (key, HistogramSeries::from_values(&values, bin_width)))
        .collect();
    Ok(SizeHistogram { series })
}

/// 1 minus the mean histogram intersection over all (class, dimension)
/// series present in either input. Series missing on one side, and series
/// with disjoint supports, contribute 1.
pub fn distribution_divergence(a: &SizeHistogram, b: &SizeHistogram) -> f64 {
    let keys: std::collections::BTreeSet<_> =
        a.series.keys().chain(b.series.keys()).cloned().collect();
    if keys.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for key in &keys {
        sum += match (a.series.get(key), b.series.get(key)) {
            (Some(sa), Some(sb)) => series_divergence(sa, sb),
            _ => 1.0,
        };
    }
    sum / keys.len() as f64
}

fn series_divergence(a: &HistogramSeries, b: &HistogramSeries) -> f64 {
    let (a_lo, a_hi) = a.support();
    let (b_lo, b_hi) = b.support();
    if a_hi <= b_lo || b_hi <= a_lo {
        return 1.0;
    }
    // Shared edges: union of supports at the finer of the two bin widths.
    let width_a = (a_hi - a_lo) / a.counts.len() as f64;
    let width_b = (b_hi - b_lo) / b.counts.len() as f64;
    let width = width_a.min(width_b).max(1e-12);
    let lo = a_lo.min(b_lo);
    let hi = a_hi.max(b_hi);
    let nbins = (((hi - lo) / width).ceil() as usize).max(1);
    let edges: Vec<f64> = (0..=nbins).map(|i| lo + i as f64 * width).collect();

    let pa = a.rebin(&edges);
    let pb = b.rebin(&edges);
    let sum_a: f64 = pa.iter().sum();
    let sum_b: f64 = pb.iter().sum();
    if sum_a <= 0.0 || sum_b <= 0.0 {
        return 1.0;
    }
    let intersection: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x / sum_a).min(y / sum_b))
        .sum();
    1.0 - intersection.clamp(0.0, 1.0)
}
