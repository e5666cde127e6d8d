use crate::error::{Error, Result};
use crate::grid::{gradient_at, Grid, MetricSpec, ScalarField};

use super::sweep::{edge_slowness, sweep, Spans};

/// Closed set `{u <= 0}` of a level-set function, normally a signed distance
/// (negative inside).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub u: ScalarField,
}

/// Point where the zero level crosses the grid edge from node `a` to node `b`
/// at fraction `t` of the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCrossing {
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub point: [f64; 2],
}

impl RegionSet {
    pub fn new(u: ScalarField) -> Self {
        Self { u }
    }

    /// Region from an implicit function (not reinitialized).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(ScalarField::from_fn(grid, f))
    }

    /// Euclidean signed distance of the disk `|p - c| <= r`.
    pub fn disk(grid: Grid, center: [f64; 2], r: f64) -> Self {
        Self::from_fn(grid, move |x, y| (x - center[0]).hypot(y - center[1]) - r)
    }

    /// Euclidean signed distance of the half-plane `a x + b y <= c`.
    pub fn half_plane(grid: Grid, a: f64, b: f64, c: f64) -> Self {
        let n = a.hypot(b);
        Self::from_fn(grid, move |x, y| (a * x + b * y - c) / n)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.u.grid
    }

    #[inline]
    pub fn is_inside(&self, idx: usize) -> bool {
        self.u.values[idx] <= 0.0
    }

    pub fn is_empty(&self) -> bool {
        !self.u.values.iter().any(|&v| v <= 0.0)
    }

    pub fn is_everything(&self) -> bool {
        self.u.values.iter().all(|&v| v <= 0.0)
    }

    pub fn inside_count(&self) -> usize {
        self.u.values.iter().filter(|&&v| v <= 0.0).count()
    }

    /// Closure of the complement.
    pub fn complement(&self) -> Self {
        Self::new(ScalarField::new(
            *self.grid(),
            self.u.values.iter().map(|v| -v).collect(),
        ))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(ScalarField::new(
            *self.grid(),
            self.u
                .values
                .iter()
                .zip(&other.u.values)
                .map(|(a, b)| a.min(*b))
                .collect(),
        ))
    }

    pub fn is_interface_node(&self, idx: usize) -> bool {
        let inside = self.is_inside(idx);
        self.grid()
            .neighbors4(idx)
            .into_iter()
            .flatten()
            .any(|q| self.is_inside(q) != inside)
    }

    /// Nodes with a 4-neighbour on the other side of the zero level.
    pub fn interface_nodes(&self) -> Vec<usize> {
        (0..self.grid().len())
            .filter(|&idx| self.is_interface_node(idx))
            .collect()
    }

    pub fn has_interface(&self) -> bool {
        let g = self.grid();
        let v = &self.u.values;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let idx = g.idx(i, j);
                let inside = v[idx] <= 0.0;
                if i + 1 < g.nx && (v[idx + 1] <= 0.0) != inside {
                    return true;
                }
                if j + 1 < g.ny && (v[idx + g.nx] <= 0.0) != inside {
                    return true;
                }
            }
        }
        false
    }

    /// Linearly interpolated zero crossings on every grid edge, each edge once.
    pub fn crossings(&self) -> Vec<EdgeCrossing> {
        edge_crossings(self.grid(), &self.u.values)
    }
}

pub(crate) fn edge_crossings(g: &Grid, v: &[f64]) -> Vec<EdgeCrossing> {
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let a = g.idx(i, j);
            let ia = v[a] <= 0.0;
            let mut push = |b: usize| {
                if (v[b] <= 0.0) != ia {
                    let t = v[a] / (v[a] - v[b]);
                    let pa = g.node_at(a);
                    let pb = g.node_at(b);
                    out.push(EdgeCrossing {
                        a,
                        b,
                        t,
                        point: [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])],
                    });
                }
            };
            if i + 1 < g.nx {
                push(a + 1);
            }
            if j + 1 < g.ny {
                push(a + g.nx);
            }
        }
    }
    out
}

/// Euclidean distance from an interface node to the zero level, from the
/// linearly interpolated crossings along its grid edges. Axes without a
/// crossing fall back to the central-difference slope. Exact for straight
/// interfaces and invariant under positive rescaling of `u`.
pub(crate) fn subcell_distance(g: &Grid, v: &[f64], idx: usize) -> f64 {
    let up = v[idx];
    if up == 0.0 {
        return 0.0;
    }
    let inside = up <= 0.0;
    let [w, e, s, n] = g.neighbors4(idx);
    let axis = |lo: Option<usize>, hi: Option<usize>, slope: f64| -> f64 {
        let mut best = f64::INFINITY;
        for q in [lo, hi].into_iter().flatten() {
            if (v[q] <= 0.0) != inside {
                let t = up.abs() / (up.abs() + v[q].abs());
                best = best.min(t * g.h);
            }
        }
        if best.is_finite() {
            best
        } else if slope != 0.0 {
            up.abs() / slope.abs()
        } else {
            f64::INFINITY
        }
    };
    let grad = gradient_at(g, v, idx);
    let sx = axis(w, e, grad[0]);
    let sy = axis(s, n, grad[1]);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let inv = 1.0 / (sx * sx) + 1.0 / (sy * sy);
    if inv == 0.0 {
        f64::INFINITY
    } else {
        inv.sqrt().recip()
    }
}

/// How interface values are produced during reinitialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SeedRule {
    /// Always use the subcell estimate.
    Subcell,
    /// Keep the current value when it already agrees with the subcell
    /// estimate to within 5%; the zero crossing is then left untouched.
    PreserveNearUnit,
}

pub(crate) const PRESERVE_BAND: f64 = 0.05;

/// Unsigned metric distance estimate at an interface node.
#[inline]
pub(crate) fn interface_seed(g: &Grid, v: &[f64], metric: &MetricSpec, idx: usize, rule: SeedRule) -> f64 {
    let est = subcell_distance(g, v, idx) * metric.scale(idx);
    match rule {
        SeedRule::Subcell => est,
        SeedRule::PreserveNearUnit => {
            let cur = v[idx].abs();
            if est > 0.0 && (cur / est - 1.0).abs() <= PRESERVE_BAND {
                cur
            } else {
                est
            }
        }
    }
}

/// Rebuilds `u` as a signed metric distance from its zero level on the whole
/// grid. Signs are preserved node by node.
pub(crate) fn reinit_full(region: &RegionSet, metric: &MetricSpec, rule: SeedRule) -> Result<RegionSet> {
    let grid = *region.grid();
    let v = &region.u.values;
    let mut d = vec![f64::INFINITY; grid.len()];
    let mut fixed = vec![false; grid.len()];
    let mut any = false;
    for idx in 0..grid.len() {
        if region.is_interface_node(idx) {
            d[idx] = interface_seed(&grid, v, metric, idx, rule);
            fixed[idx] = true;
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyRegion);
    }
    let fh = edge_slowness(metric);
    sweep(&grid, &mut d, &fixed, &fh, &Spans::full(&grid));
    let values = d
        .iter()
        .zip(v)
        .map(|(&dist, &old)| if old <= 0.0 { -dist } else { dist })
        .collect();
    Ok(RegionSet::new(ScalarField::new(grid, values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_metric, MetricKind};

    #[test]
    fn subcell_distance_exact_for_oblique_line() {
        let g = Grid::square(40, -1.0, 1.0).unwrap();
        // scaled implicit function of the line x + 2y = 0.1
        let r = RegionSet::from_fn(g, |x, y| 3.0 * (x + 2.0 * y - 0.1));
        let norm = 5f64.sqrt();
        for idx in r.interface_nodes() {
            let [x, y] = g.node_at(idx);
            let exact = (x + 2.0 * y - 0.1).abs() / norm;
            let est = subcell_distance(&g, &r.u.values, idx);
            assert!((est - exact).abs() < 1e-12, "{est} vs {exact}");
        }
    }

    #[test]
    fn complement_and_union() {
        let g = Grid::square(32, -1.0, 1.0).unwrap();
        let a = RegionSet::disk(g, [-0.4, 0.0], 0.3);
        let b = RegionSet::disk(g, [0.4, 0.0], 0.3);
        let u = a.union(&b);
        assert_eq!(u.inside_count(), a.inside_count() + b.inside_count());
        assert_eq!(a.complement().complement(), a);
        assert!(!a.is_empty() && !a.is_everything());
    }

    #[test]
    fn crossings_lie_on_circle() {
        let g = Grid::square(64, -1.0, 1.0).unwrap();
        let r = RegionSet::disk(g, [0.1, -0.05], 0.5);
        let c = r.crossings();
        assert!(!c.is_empty());
        for x in c {
            let rad = (x.point[0] - 0.1).hypot(x.point[1] + 0.05);
            assert!((rad - 0.5).abs() < g.h * g.h, "{rad}");
        }
    }

    #[test]
    fn reinit_of_scaled_distance_restores_unit_gradient() {
        let g = Grid::square(64, -1.0, 1.0).unwrap();
        let m = make_metric(MetricKind::Euclidean, g, None).unwrap();
        let r = RegionSet::from_fn(g, |x, y| 2.0 * (x.hypot(y) - 0.5));
        let s = reinit_full(&r, &m, SeedRule::Subcell).unwrap();
        for idx in 0..g.len() {
            let [x, y] = g.node_at(idx);
            assert!((s.u.values[idx] - (x.hypot(y) - 0.5)).abs() < 2.0 * g.h);
        }
    }

    #[test]
    fn reinit_without_interface_is_empty_region() {
        let g = Grid::square(16, -1.0, 1.0).unwrap();
        let m = make_metric(MetricKind::Euclidean, g, None).unwrap();
        let r = RegionSet::from_fn(g, |_, _| 1.0);
        assert!(matches!(reinit_full(&r, &m, SeedRule::Subcell), Err(Error::EmptyRegion)));
    }
}
