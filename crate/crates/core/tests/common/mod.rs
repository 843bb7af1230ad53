//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use mdslab::Complex64;
use ndarray::Array2;

/// Direct `O(N^2)` DFT, `X[k] = sum_n x[n] exp(-j 2 pi k n / N)`.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((k * i) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

/// Zero-padded DFT of `x` to length `n`.
pub fn naive_dft_padded(x: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    buf.resize(n, Complex64::new(0.0, 0.0));
    naive_dft(&buf)
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn max_rel_err(got: &[Complex64], want: &[Complex64]) -> f64 {
    let scale = want.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).norm() / scale)
        .fold(0.0, f64::max)
}

/// CA-CFAR by enumerating every cell of the map for every cell under test.
pub fn brute_cfar(p: &Array2<f64>, train: usize, guard: usize, alpha: f64) -> Vec<(usize, usize)> {
    let (rows, cols) = p.dim();
    let outer = train + guard;
    let mut out = Vec::new();
    for r in 0..rows {
        for v in 0..cols {
            let (mut sum, mut n) = (0.0, 0usize);
            for rr in 0..rows {
                let dr = rr.abs_diff(r);
                if dr > outer {
                    continue;
                }
                for vv in 0..cols {
                    let d = vv.abs_diff(v);
                    let dv = d.min(cols - d);
                    if dv <= outer && (dr > guard || dv > guard) {
                        sum += p[[rr, vv]];
                        n += 1;
                    }
                }
            }
            if p[[r, v]] > alpha * sum / n as f64 {
                out.push((r, v));
            }
        }
    }
    out
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Components as sorted member lists, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort();
        comps
    }
}

/// 8-connected components of `cells` with a wrapping column axis.
pub fn union_find_groups(cells: &[(usize, usize)], cols: usize) -> Vec<Vec<(usize, usize)>> {
    let mut cells = cells.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let mut uf = UnionFind::new(cells.len());
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (cells[i], cells[j]);
            let d = a.1.abs_diff(b.1);
            if a.0.abs_diff(b.0) <= 1 && d.min(cols - d) <= 1 {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<(usize, usize)>> = uf
        .components()
        .into_iter()
        .map(|c| c.into_iter().map(|i| cells[i]).collect())
        .collect();
    groups.sort();
    groups
}

fn circ(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Repeatedly merges any two clusters that hold a linked pair until nothing
/// changes. Returns clusters as sorted index lists.
pub fn pairwise_merge(points: &[(usize, usize, usize)], gaps: (usize, usize, usize), dims: (usize, usize, usize)) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let linked = |a: usize, b: usize| {
        let (p, q) = (points[a], points[b]);
        p.0.abs_diff(q.0) <= gaps.0 && circ(p.1, q.1, dims.1) <= gaps.1 && circ(p.2, q.2, dims.2) <= gaps.2
    };
    loop {
        let mut merged = false;
        'outer: for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if clusters[i].iter().any(|&a| clusters[j].iter().any(|&b| linked(a, b))) {
                    let moved = clusters.remove(j);
                    clusters[i].extend(moved);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}

/// Central finite difference of `f` with respect to coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Relative error with an absolute floor for near-zero derivatives.
pub fn grad_rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Ideal virtual-array steering phase `pi n_a sin(az)` wrapped to (-pi, pi].
pub fn steering_phase(n_a: usize, sin_az: f64) -> f64 {
    wrap_phase(PI * n_a as f64 * sin_az)
}

pub fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Spearman correlation computed through the Pearson formula on
/// average ranks obtained by pairwise counting.
pub fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    let rank = |xs: &[f64]| -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let less = xs.iter().filter(|&&y| y < x).count() as f64;
                let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}
