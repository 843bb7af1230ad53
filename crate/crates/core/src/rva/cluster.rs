use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;

use super::cfar::DetectionSet;
use crate::dsp::circular_diff;

/// 8-connected set of detected cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Member cells, sorted.
    pub cells: Vec<(usize, usize)>,
    /// Strongest member.
    pub peak: (usize, usize),
    pub peak_power: f64,
}

/// Connected components of the detection set. Neighbours differ by at most
/// one bin on each axis; the Doppler axis wraps. Groups are ordered by their
/// smallest cell.
pub fn group_detections(detections: &DetectionSet, power: &Array2<f64>) -> Vec<Group> {
    let (rows, cols) = power.dim();
    let mut remaining: BTreeSet<(usize, usize)> = detections
        .cells
        .iter()
        .copied()
        .filter(|&(r, v)| r < rows && v < cols)
        .collect();
    let mut groups = Vec::new();
    while let Some(start) = remaining.pop_first() {
        let mut cells = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some((r, v)) = queue.pop_front() {
            for dr in -1i64..=1 {
                let rr = r as i64 + dr;
                if rr < 0 || rr >= rows as i64 {
                    continue;
                }
                for dv in -1i64..=1 {
                    let vv = (v as i64 + dv).rem_euclid(cols as i64) as usize;
                    let n = (rr as usize, vv);
                    if remaining.remove(&n) {
                        cells.push(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        cells.sort_unstable();
        let mut peak = cells[0];
        for &c in &cells[1..] {
            if power[c] > power[peak] {
                peak = c;
            }
        }
        groups.push(Group {
            peak_power: power[peak],
            peak,
            cells,
        });
    }
    groups
}

/// A grouped detection with its estimated angle bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub k_r: usize,
    pub k_v: usize,
    pub k_theta: usize,
    pub power: f64,
}

/// Largest per-axis bin distance at which two detections are linked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterGaps {
    pub range: usize,
    pub doppler: usize,
    pub angle: usize,
}

impl Default for ClusterGaps {
    fn default() -> Self {
        Self {
            range: 2,
            doppler: 2,
            angle: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub k_r: usize,
    pub k_v: usize,
    /// Natural-order angle bin.
    pub k_theta: usize,
    pub members: usize,
    pub mean_power: f64,
    pub peak_power: f64,
}

fn linked(a: &Detection, b: &Detection, gaps: &ClusterGaps, dims: (usize, usize, usize)) -> bool {
    a.k_r.abs_diff(b.k_r) <= gaps.range
        && circular_diff(a.k_v, b.k_v, dims.1).unsigned_abs() as usize <= gaps.doppler
        && circular_diff(a.k_theta, b.k_theta, dims.2).unsigned_abs() as usize <= gaps.angle
}

/// Single-linkage clustering of `(k_r, k_v, k_theta)` detections.
///
/// The centroid is the power-weighted mean position, taken relative to the
/// strongest member so that the circular Doppler and angle axes average
/// correctly, and rounded to the nearest bin. `dims` is
/// `(N_s, M_c, N_theta)`. Clusters come out strongest first.
pub fn cluster_centroids(
    detections: &[Detection],
    gaps: &ClusterGaps,
    dims: (usize, usize, usize),
) -> Vec<Centroid> {
    let n = detections.len();
    let mut label = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        label[seed] = id;
        let mut members = vec![seed];
        let mut i = 0;
        while i < members.len() {
            let a = &detections[members[i]];
            for j in 0..n {
                if label[j] == usize::MAX && linked(a, &detections[j], gaps, dims) {
                    label[j] = id;
                    members.push(j);
                }
            }
            i += 1;
        }
        clusters.push(members);
    }

    let mut out: Vec<Centroid> = clusters
        .iter()
        .map(|members| centroid_of(members.iter().map(|&i| &detections[i]), dims))
        .collect();
    out.sort_by(|a, b| {
        b.peak_power
            .total_cmp(&a.peak_power)
            .then((a.k_r, a.k_v, a.k_theta).cmp(&(b.k_r, b.k_v, b.k_theta)))
    });
    out
}

fn centroid_of<'a>(members: impl Iterator<Item = &'a Detection> + Clone, dims: (usize, usize, usize)) -> Centroid {
    let strongest = members
        .clone()
        .reduce(|a, b| if b.power > a.power { b } else { a })
        .expect("cluster is never empty");
    let total: f64 = members.clone().map(|d| d.power).sum();
    let count = members.clone().count();
    let weight = |d: &Detection| {
        if total > 0.0 {
            d.power / total
        } else {
            1.0 / count as f64
        }
    };
    let (mut dr, mut dv, mut dt) = (0.0, 0.0, 0.0);
    for d in members {
        let w = weight(d);
        dr += w * (d.k_r as f64 - strongest.k_r as f64);
        dv += w * circular_diff(d.k_v, strongest.k_v, dims.1) as f64;
        dt += w * circular_diff(d.k_theta, strongest.k_theta, dims.2) as f64;
    }
    let wrap = |base: usize, off: f64, n: usize| (base as i64 + off.round() as i64).rem_euclid(n as i64) as usize;
    Centroid {
        k_r: (strongest.k_r as i64 + dr.round() as i64).clamp(0, dims.0 as i64 - 1) as usize,
        k_v: wrap(strongest.k_v, dv, dims.1),
        k_theta: wrap(strongest.k_theta, dt, dims.2),
        members: count,
        mean_power: total / count as f64,
        peak_power: strongest.power,
    }
}
