//! Geodesic distance to sets under a conformal metric, set-to-set distance,
//! offset regions `K(rho)` and foot-point direction diagnostics.

mod closest;
mod region;
pub(crate) mod sweep;

pub(crate) use closest::foot_distance;
pub use region::{EdgeCrossing, RegionSet};
pub(crate) use region::{interface_seed, reinit_full, SeedRule};

use crate::error::{Error, Result};
use crate::grid::{gradient_at, metric_edge_length, Grid, MetricSpec, ScalarField};

use sweep::{edge_slowness, sweep, Spans};

/// The sweep's error from a point source grows like h log(1/h) from the seed
/// outward, so the seed is a disk of fixed cell radius, not one cell.
pub const POINT_SEED_CELLS: f64 = 8.0;

/// Unsigned geodesic distance to a source set; zero on the source.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub d: ScalarField,
    pub source: Option<RegionSet>,
}

impl DistanceField {
    /// Distance to a single point. Nodes within `POINT_SEED_CELLS` cells get
    /// the length of the straight segment; the sweep does the rest.
    pub fn from_point(metric: &MetricSpec, p: [f64; 2]) -> Result<Self> {
        let grid = *metric.grid();
        if !grid.contains(p) {
            return Err(Error::InvalidParameter(format!(
                "point source {p:?} is outside the grid"
            )));
        }
        let mut d = vec![f64::INFINITY; grid.len()];
        let mut fixed = vec![false; grid.len()];
        for idx in 0..grid.len() {
            let q = grid.node_at(idx);
            let r = (q[0] - p[0]).hypot(q[1] - p[1]);
            if r <= POINT_SEED_CELLS * grid.h {
                d[idx] = segment_length(metric, p, q);
                fixed[idx] = true;
            }
        }
        let fh = edge_slowness(metric);
        sweep(&grid, &mut d, &fixed, &fh, &Spans::full(&grid));
        Ok(Self {
            d: ScalarField::new(grid, d),
            source: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.d.grid
    }

    /// Largest violation of `|d(p) - d(q)| <= metric_edge_length(p, q)` over
    /// adjacent node pairs (non-positive when the field is 1-Lipschitz).
    pub fn lipschitz_excess(&self, metric: &MetricSpec) -> f64 {
        let g = *self.grid();
        let d = &self.d.values;
        let mut worst = f64::NEG_INFINITY;
        for idx in 0..g.len() {
            let (i, j) = g.ij(idx);
            for q in [
                (i + 1 < g.nx).then(|| idx + 1),
                (j + 1 < g.ny).then(|| idx + g.nx),
            ]
            .into_iter()
            .flatten()
            {
                let excess = (d[idx] - d[q]).abs() - metric_edge_length(metric, idx, q);
                worst = worst.max(excess);
            }
        }
        worst
    }
}

/// Metric length of the straight segment from `p` to `q`, by Simpson's rule
/// on the interpolated conformal factor.
fn segment_length(metric: &MetricSpec, p: [f64; 2], q: [f64; 2]) -> f64 {
    const PANELS: usize = 8;
    let at = |s: f64| metric.phi.sample([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]).exp();
    let mut sum = at(0.0) + at(1.0);
    for k in 1..PANELS {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * at(k as f64 / PANELS as f64);
    }
    (q[0] - p[0]).hypot(q[1] - p[1]) * sum / (3.0 * PANELS as f64)
}

/// Solves `|grad d| = e^{phi}` outward from the region with first-order
/// fast sweeping. Exterior interface nodes start from subcell estimates; the
/// region itself is held at zero.
pub fn eikonal_distance(region: &RegionSet, metric: &MetricSpec) -> Result<DistanceField> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let grid = *region.grid();
    let v = &region.u.values;
    let mut d = vec![f64::INFINITY; grid.len()];
    let mut fixed = vec![false; grid.len()];
    for idx in 0..grid.len() {
        if v[idx] <= 0.0 {
            d[idx] = 0.0;
            fixed[idx] = true;
        } else if region.is_interface_node(idx) {
            d[idx] = interface_seed(&grid, v, metric, idx, SeedRule::Subcell);
        }
    }
    let fh = edge_slowness(metric);
    sweep(&grid, &mut d, &fixed, &fh, &Spans::full(&grid));
    Ok(DistanceField {
        d: ScalarField::new(grid, d),
        source: Some(region.clone()),
    })
}

/// `inf` of a distance field over a region: the smaller of its node values
/// inside the region and its linear interpolants at the region's zero
/// crossings.
pub fn distance_to_region(field: &DistanceField, region: &RegionSet) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let d = &field.d.values;
    let mut best = f64::INFINITY;
    for (idx, &u) in region.u.values.iter().enumerate() {
        if u <= 0.0 {
            best = best.min(d[idx]);
        }
    }
    for c in region.crossings() {
        best = best.min(d[c.a] + c.t * (d[c.b] - d[c.a]));
    }
    Ok(best)
}

/// Geodesic distance `d(A, B) = inf_{a in A, b in B} d(a, b)`.
pub fn set_distance(a: &RegionSet, b: &RegionSet, metric: &MetricSpec) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let da = eikonal_distance(a, metric)?;
    distance_to_region(&da, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLabel {
    /// Adjacent to the `X` side (`dX < rho`): harmonic value 0.
    Zero,
    /// Adjacent to the `Y` side (`dY < rho`): harmonic value 1.
    One,
    /// Adjacent to nodes closer than `rho` to both sides.
    Ambiguous,
}

/// Node mask of `K(rho) = {p : d(p, X u Y) >= rho}` with boundary labels.
///
/// The region keeps the two level functions `dX - rho` and `dY - rho` so the
/// harmonic solve can place Dirichlet data at their subcell zero crossings.
#[derive(Debug, Clone)]
pub struct OffsetRegion {
    pub grid: Grid,
    pub rho: f64,
    pub mask: Vec<bool>,
    pub labels: Vec<Option<BoundaryLabel>>,
    pub level_x: Vec<f64>,
    pub level_y: Vec<f64>,
}

impl OffsetRegion {
    /// Mask `{level_x >= 0 and level_y >= 0}`; `level_x < 0` marks the side
    /// with harmonic value 0, `level_y < 0` the side with value 1.
    pub fn from_levels(grid: Grid, rho: f64, level_x: Vec<f64>, level_y: Vec<f64>) -> Result<Self> {
        assert_eq!(level_x.len(), grid.len());
        assert_eq!(level_y.len(), grid.len());
        let mask: Vec<bool> = level_x
            .iter()
            .zip(&level_y)
            .map(|(&a, &b)| a >= 0.0 && b >= 0.0)
            .collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyOffsetRegion { rho });
        }
        let labels = (0..grid.len())
            .map(|idx| {
                if !mask[idx] {
                    return None;
                }
                let mut zero = false;
                let mut one = false;
                for q in grid.neighbors4(idx).into_iter().flatten() {
                    if !mask[q] {
                        zero |= level_x[q] < 0.0;
                        one |= level_y[q] < 0.0;
                    }
                }
                match (zero, one) {
                    (true, true) => Some(BoundaryLabel::Ambiguous),
                    (true, false) => Some(BoundaryLabel::Zero),
                    (false, true) => Some(BoundaryLabel::One),
                    (false, false) => None,
                }
            })
            .collect();
        Ok(Self {
            grid,
            rho,
            mask,
            labels,
            level_x,
            level_y,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn label_count(&self, label: BoundaryLabel) -> usize {
        self.labels.iter().filter(|&&l| l == Some(label)).count()
    }

    /// Distance from a mask node to the boundary of `K(rho)`.
    pub fn boundary_distance(&self, idx: usize) -> f64 {
        self.level_x[idx].min(self.level_y[idx])
    }
}

pub fn offset_region(dx: &DistanceField, dy: &DistanceField, rho: f64) -> Result<OffsetRegion> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let grid = *dx.grid();
    let lx = dx.d.values.iter().map(|d| d - rho).collect();
    let ly = dy.d.values.iter().map(|d| d - rho).collect();
    OffsetRegion::from_levels(grid, rho, lx, ly)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentReport {
    /// Half the set distance.
    pub radius: f64,
    pub band_nodes: usize,
    /// Largest angle (radians) between `grad dX` and `-grad dY` on the band.
    pub max_angle: f64,
    pub mean_angle: f64,
}

/// Half the set distance between the sources of two distance fields.
fn half_gap(dx: &DistanceField, dy: &DistanceField) -> Result<f64> {
    let gap = match (&dx.source, &dy.source) {
        (_, Some(y)) => distance_to_region(dx, y)?,
        (Some(x), None) => distance_to_region(dy, x)?,
        (None, None) => {
            return Err(Error::InvalidParameter(
                "alignment needs at least one region-backed distance field".into(),
            ))
        }
    };
    Ok(0.5 * gap)
}

/// Angle between the directions to the nearest points of `X` and `Y` near
/// the equidistant set `{dX = dY = R}`. The foot-point directions are the
/// unit vectors `grad dX` and `-grad dY`; antipodal gradients mean the two
/// nearest points lie on a common geodesic through `p`.
pub fn foot_direction_alignment(dx: &DistanceField, dy: &DistanceField, delta: f64) -> Result<AlignmentReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let radius = half_gap(dx, dy)?;
    let g = *dx.grid();
    let (vx, vy) = (&dx.d.values, &dy.d.values);
    let mut count = 0usize;
    let mut max_angle: f64 = 0.0;
    let mut sum = 0.0;
    for idx in 0..g.len() {
        if (vx[idx] - radius).abs() > 0.5 * delta || (vy[idx] - radius).abs() > 0.5 * delta {
            continue;
        }
        let a = gradient_at(&g, vx, idx);
        let b = gradient_at(&g, vy, idx);
        let na = a[0].hypot(a[1]);
        let nb = b[0].hypot(b[1]);
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let cos = (-(a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0);
        let angle = cos.acos();
        max_angle = max_angle.max(angle);
        sum += angle;
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoBandNodes);
    }
    Ok(AlignmentReport {
        radius,
        band_nodes: count,
        max_angle,
        mean_angle: sum / count as f64,
    })
}

/// Euclidean exterior-ball check at `p`: with `u = grad d(p) / |grad d(p)|`,
/// every ball `B(p - s u, s)` for `0 < s <= d(p)` lies within distance `d(p)`
/// of the source. Returns the largest sampled excess `d(q) - d(p)`.
pub fn exterior_ball_excess(field: &DistanceField, p: [f64; 2], samples: usize) -> f64 {
    let g = *field.grid();
    let dp = field.d.sample(p);
    let Some((i, j)) = g.index_of(p) else {
        return f64::NAN;
    };
    let grad = gradient_at(&g, &field.d.values, g.idx(i, j));
    let n = grad[0].hypot(grad[1]);
    if n == 0.0 || dp <= 0.0 {
        return 0.0;
    }
    let u = [grad[0] / n, grad[1] / n];
    let samples = samples.max(2);
    let mut worst = f64::NEG_INFINITY;
    for k in 1..=samples {
        let s = dp * k as f64 / samples as f64;
        let c = [p[0] - s * u[0], p[1] - s * u[1]];
        for ring in 0..=samples {
            let r = s * ring as f64 / samples as f64;
            let m = (4 * ring).max(1);
            for a in 0..m {
                let th = std::f64::consts::TAU * a as f64 / m as f64;
                let q = [c[0] + r * th.cos(), c[1] + r * th.sin()];
                if g.contains(q) {
                    worst = worst.max(field.d.sample(q) - dp);
                }
            }
        }
    }
    worst
}
