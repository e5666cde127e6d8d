//! Uniform Cartesian grids, node-sampled scalar fields and conformal metrics
//! `g = e^{2 phi} (dx^2 + dy^2)` on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count per axis.
pub const MIN_NODES: usize = 16;

/// Uniform node-centred grid over `[xmin, xmax] x [ymin, ymax]` with equal
/// spacing in both axes. Values are stored row-major, `idx = j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub h: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {nx} x {ny}"
            )));
        }
        if !(x[0].is_finite() && x[1].is_finite() && y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x[1] <= x[0] || y[1] <= y[0] {
            return Err(Error::InvalidGrid("bounds must be increasing".into()));
        }
        let hx = (x[1] - x[0]) / (nx - 1) as f64;
        let hy = (y[1] - y[0]) / (ny - 1) as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::InvalidGrid(format!(
                "spacing differs between axes ({hx} vs {hy})"
            )));
        }
        Ok(Self {
            nx,
            ny,
            xmin: x[0],
            xmax: x[1],
            ymin: y[0],
            ymax: y[1],
            h: hx,
        })
    }

    /// `n x n` nodes on `[lo, hi]^2`.
    pub fn square(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(n, n, [lo, hi], [lo, hi])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.xmin + i as f64 * self.h,
            self.ymin + j as f64 * self.h,
        ]
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        self.node(i, j)
    }

    /// Nearest node indices of a point, or `None` if it lies outside the box
    /// by more than half a cell.
    pub fn index_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fi = ((p[0] - self.xmin) / self.h).round();
        let fj = ((p[1] - self.ymin) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi > (self.nx - 1) as f64 || fj > (self.ny - 1) as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.xmin && p[0] <= self.xmax && p[1] >= self.ymin && p[1] <= self.ymax
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Number of node layers between `(i, j)` and the nearest box edge.
    #[inline]
    pub fn layers_to_boundary(&self, i: usize, j: usize) -> usize {
        i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j)
    }

    /// Indices of the existing 4-neighbours in the order west, east, south, north.
    #[inline]
    pub fn neighbors4(&self, idx: usize) -> [Option<usize>; 4] {
        let (i, j) = self.ij(idx);
        [
            (i > 0).then(|| idx - 1),
            (i + 1 < self.nx).then(|| idx + 1),
            (j > 0).then(|| idx - self.nx),
            (j + 1 < self.ny).then(|| idx + self.nx),
        ]
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        (self.xmax - self.xmin).hypot(self.ymax - self.ymin)
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }
}

/// Real values sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let [x, y] = grid.node(i, j);
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Bilinear interpolation; points outside the box are clamped onto it.
    pub fn sample(&self, p: [f64; 2]) -> f64 {
        let g = &self.grid;
        let fx = ((p[0] - g.xmin) / g.h).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((p[1] - g.ymin) / g.h).clamp(0.0, (g.ny - 1) as f64);
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Central-difference gradient, one-sided on the box boundary.
    pub fn gradient(&self, idx: usize) -> [f64; 2] {
        gradient_at(&self.grid, &self.values, idx)
    }
}

pub(crate) fn gradient_at(grid: &Grid, v: &[f64], idx: usize) -> [f64; 2] {
    let (i, j) = grid.ij(idx);
    let h = grid.h;
    let gx = if i == 0 {
        (v[idx + 1] - v[idx]) / h
    } else if i + 1 == grid.nx {
        (v[idx] - v[idx - 1]) / h
    } else {
        (v[idx + 1] - v[idx - 1]) / (2.0 * h)
    };
    let gy = if j == 0 {
        (v[idx + grid.nx] - v[idx]) / h
    } else if j + 1 == grid.ny {
        (v[idx] - v[idx - grid.nx]) / h
    } else {
        (v[idx + grid.nx] - v[idx - grid.nx]) / (2.0 * h)
    };
    [gx, gy]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    PoincareDisk,
    CustomConformal,
}

/// Conformal metric `e^{2 phi}` times the flat metric, sampled on a grid,
/// with its Ricci (Gauss) curvature lower bound.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub phi: ScalarField,
    pub lambda_lower: f64,
    scale: Vec<f64>,
}

impl MetricSpec {
    pub fn grid(&self) -> &Grid {
        &self.phi.grid
    }

    /// `e^{phi}` at a node: the local ratio of metric to Euclidean length.
    #[inline]
    pub fn scale(&self, idx: usize) -> f64 {
        self.scale[idx]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    /// Largest `e^{-2 phi}` over the grid, the factor in the parabolic time-step bound.
    pub fn max_inv_scale_sq(&self) -> f64 {
        self.scale
            .iter()
            .map(|s| 1.0 / (s * s))
            .fold(0.0, f64::max)
    }

    pub fn is_euclidean(&self) -> bool {
        self.kind == MetricKind::Euclidean
    }
}

/// Poincare disk conformal exponent `ln(2 / (1 - |p|^2))`.
pub fn poincare_phi(x: f64, y: f64) -> f64 {
    (2.0 / (1.0 - (x * x + y * y))).ln()
}

pub fn make_metric(
    kind: MetricKind,
    grid: Grid,
    phi_expr: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<MetricSpec> {
    let phi = match kind {
        MetricKind::Euclidean => ScalarField::constant(grid, 0.0),
        MetricKind::PoincareDisk => {
            let corners = [
                [grid.xmin, grid.ymin],
                [grid.xmin, grid.ymax],
                [grid.xmax, grid.ymin],
                [grid.xmax, grid.ymax],
            ];
            let max_radius = corners
                .iter()
                .map(|c| c[0].hypot(c[1]))
                .fold(0.0, f64::max);
            if max_radius >= 1.0 {
                return Err(Error::DomainOutsideChart { max_radius });
            }
            ScalarField::from_fn(grid, poincare_phi)
        }
        MetricKind::CustomConformal => {
            let f = phi_expr.ok_or(Error::MissingConformalFactor)?;
            ScalarField::from_fn(grid, f)
        }
    };
    if let Some(bad) = phi.values.iter().position(|v| !v.is_finite()) {
        let (i, j) = grid.ij(bad);
        return Err(Error::NonFiniteConformalFactor { i, j });
    }
    let scale = phi.values.iter().map(|p| p.exp()).collect();
    let mut metric = MetricSpec {
        kind,
        phi,
        lambda_lower: 0.0,
        scale,
    };
    metric.lambda_lower = ricci_lower_bound(&metric);
    Ok(metric)
}

/// Gauss curvature `K = -e^{-2 phi} lap(phi)` with the 5-point Laplacian.
/// Boundary nodes copy the value of the nearest interior node.
pub fn gauss_curvature(metric: &MetricSpec) -> ScalarField {
    let grid = *metric.grid();
    let phi = &metric.phi.values;
    let h2 = grid.h * grid.h;
    let mut k = vec![0.0; grid.len()];
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            let idx = grid.idx(i, j);
            let lap = (phi[idx - 1] + phi[idx + 1] + phi[idx - grid.nx] + phi[idx + grid.nx]
                - 4.0 * phi[idx])
                / h2;
            k[idx] = -(-2.0 * phi[idx]).exp() * lap;
        }
    }
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if grid.is_boundary(i, j) {
                let ci = i.clamp(1, grid.nx - 2);
                let cj = j.clamp(1, grid.ny - 2);
                k[grid.idx(i, j)] = k[grid.idx(ci, cj)];
            }
        }
    }
    ScalarField::new(grid, k)
}

/// Minimum of the discrete Gauss curvature over interior nodes.
pub fn discrete_curvature_min(metric: &MetricSpec) -> f64 {
    let grid = *metric.grid();
    let k = gauss_curvature(metric);
    let mut min = f64::INFINITY;
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            min = min.min(k.at(i, j));
        }
    }
    min
}

/// Lower bound for the Ricci curvature. In two dimensions `Ric = K g`, so this
/// is the interior minimum of `K`, replaced by the exact value for the model
/// geometries.
pub fn ricci_lower_bound(metric: &MetricSpec) -> f64 {
    match metric.kind {
        MetricKind::Euclidean => 0.0,
        MetricKind::PoincareDisk => -1.0,
        MetricKind::CustomConformal => discrete_curvature_min(metric),
    }
}

/// Metric length of the grid edge between adjacent nodes `a` and `b`
/// (trapezoidal rule for the conformal factor).
pub fn metric_edge_length(metric: &MetricSpec, a: usize, b: usize) -> f64 {
    let grid = metric.grid();
    debug_assert!(
        {
            let (ia, ja) = grid.ij(a);
            let (ib, jb) = grid.ij(b);
            ia.abs_diff(ib) + ja.abs_diff(jb) == 1
        },
        "nodes are not adjacent"
    );
    let phi = &metric.phi.values;
    grid.h * (0.5 * (phi[a] + phi[b])).exp()
}
