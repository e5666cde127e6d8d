//! Gauss-Seidel fast sweeping for `|grad d| = e^{phi}` with the first-order
//! Godunov upwind update.

use crate::grid::{metric_edge_length, Grid, MetricSpec};

/// Convergence threshold on the largest per-round update.
pub(crate) const SWEEP_TOL: f64 = 1e-10;
const MAX_ROUNDS: usize = 1000;

/// Row segments `[i0, i1)` of nodes taking part in a sweep, ordered by row.
#[derive(Debug, Clone, Default)]
pub(crate) struct Spans {
    spans: Vec<(usize, usize, usize)>,
}

impl Spans {
    pub fn full(grid: &Grid) -> Self {
        Self {
            spans: (0..grid.ny).map(|j| (j, 0, grid.nx)).collect(),
        }
    }

    /// Maximal runs of consecutive nodes for which `keep` holds.
    pub fn from_predicate(grid: &Grid, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut spans = Vec::new();
        for j in 0..grid.ny {
            let mut start = None;
            for i in 0..grid.nx {
                let k = keep(grid.idx(i, j));
                match (k, start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        spans.push((j, s, i));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                spans.push((j, s, grid.nx));
            }
        }
        Self { spans }
    }

    /// Chebyshev dilation by `r` nodes, clipped to the grid.
    pub fn dilate(&self, grid: &Grid, r: usize) -> Self {
        let mut by_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); grid.ny];
        for &(j, a, b) in &self.spans {
            let (lo, hi) = (a.saturating_sub(r), (b + r).min(grid.nx));
            for jj in j.saturating_sub(r)..(j + r + 1).min(grid.ny) {
                by_row[jj].push((lo, hi));
            }
        }
        let mut spans = Vec::new();
        for (j, mut row) in by_row.into_iter().enumerate() {
            row.sort_unstable();
            let mut cur: Option<(usize, usize)> = None;
            for (a, b) in row {
                cur = match cur {
                    Some((s, e)) if a <= e => Some((s, e.max(b))),
                    Some((s, e)) => {
                        spans.push((j, s, e));
                        Some((a, b))
                    }
                    None => Some((a, b)),
                };
            }
            if let Some((s, e)) = cur {
                spans.push((j, s, e));
            }
        }
        Self { spans }
    }

    /// Sub-runs of these spans for which `keep` holds.
    pub fn filter(&self, grid: &Grid, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut spans = Vec::new();
        for &(j, a, b) in &self.spans {
            let mut start = None;
            for i in a..b {
                match (keep(grid.idx(i, j)), start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        spans.push((j, s, i));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                spans.push((j, s, b));
            }
        }
        Self { spans }
    }

    pub fn rows(&self) -> &[(usize, usize, usize)] {
        &self.spans
    }

    pub fn for_each(&self, grid: &Grid, mut f: impl FnMut(usize)) {
        for &(j, a, b) in &self.spans {
            let row = j * grid.nx;
            for i in a..b {
                f(row + i);
            }
        }
    }
}

/// Per-node `e^{phi} h` for the upwind update, taken as the shortest metric
/// edge at the node so that converged solutions are discretely 1-Lipschitz
/// with respect to `metric_edge_length`.
pub(crate) fn edge_slowness(metric: &MetricSpec) -> Vec<f64> {
    let grid = *metric.grid();
    if metric.is_euclidean() {
        return vec![grid.h; grid.len()];
    }
    (0..grid.len())
        .map(|idx| {
            grid.neighbors4(idx)
                .into_iter()
                .flatten()
                .map(|q| metric_edge_length(metric, idx, q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[inline]
pub(crate) fn godunov(a: f64, b: f64, fh: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if !a.is_finite() {
        return f64::INFINITY;
    }
    let gap = b - a;
    if gap >= fh {
        a + fh
    } else {
        0.5 * (a + b + (2.0 * fh * fh - gap * gap).sqrt())
    }
}

#[inline]
fn relax(grid: &Grid, d: &mut [f64], fh: &[f64], idx: usize, i: usize, j: usize) -> f64 {
    let w = if i > 0 { d[idx - 1] } else { f64::INFINITY };
    let e = if i + 1 < grid.nx { d[idx + 1] } else { f64::INFINITY };
    let s = if j > 0 { d[idx - grid.nx] } else { f64::INFINITY };
    let n = if j + 1 < grid.ny { d[idx + grid.nx] } else { f64::INFINITY };
    let cand = godunov(w.min(e), s.min(n), fh[idx]);
    let old = d[idx];
    if cand < old {
        d[idx] = cand;
        if old.is_finite() {
            old - cand
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    }
}

/// Runs rounds of four directional sweeps over `spans` until no node moves by
/// more than `SWEEP_TOL`. Nodes flagged in `fixed` are never updated; nodes
/// outside `spans` act as given data. Returns the number of rounds.
pub(crate) fn sweep(grid: &Grid, d: &mut [f64], fixed: &[bool], fh: &[f64], spans: &Spans) -> usize {
    let rows = &spans.spans;
    for round in 1..=MAX_ROUNDS {
        let mut change: f64 = 0.0;
        for dir in 0..4 {
            let rows_forward = dir < 2;
            let cols_forward = dir % 2 == 0;
            let mut visit = |&(j, a, b): &(usize, usize, usize)| {
                let row = j * grid.nx;
                if cols_forward {
                    for i in a..b {
                        let idx = row + i;
                        if !fixed[idx] {
                            change = change.max(relax(grid, d, fh, idx, i, j));
                        }
                    }
                } else {
                    for i in (a..b).rev() {
                        let idx = row + i;
                        if !fixed[idx] {
                            change = change.max(relax(grid, d, fh, idx, i, j));
                        }
                    }
                }
            };
            if rows_forward {
                rows.iter().for_each(&mut visit);
            } else {
                rows.iter().rev().for_each(&mut visit);
            }
        }
        if change <= SWEEP_TOL {
            return round;
        }
    }
    MAX_ROUNDS
}
