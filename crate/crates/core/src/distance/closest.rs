//! Distances from nodes to the zero level of the C1 bicubic (Catmull-Rom)
//! interpolant of a nodal field. Third-order in h near a smooth zero level,
//! where sweeping is first-order.

use crate::grid::{Grid, MetricSpec};

const MAX_ITER: usize = 24;

/// Catmull-Rom weights for nodes -1, 0, 1, 2 at offset `s` in [0, 1], and
/// their derivatives in `s`.
#[inline]
fn weights(s: f64) -> ([f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            0.5 * (-s + 2.0 * s2 - s3),
            0.5 * (2.0 - 5.0 * s2 + 3.0 * s3),
            0.5 * (s + 4.0 * s2 - 3.0 * s3),
            0.5 * (s3 - s2),
        ],
        [
            0.5 * (-1.0 + 4.0 * s - 3.0 * s2),
            0.5 * (9.0 * s2 - 10.0 * s),
            0.5 * (1.0 + 8.0 * s - 9.0 * s2),
            0.5 * (3.0 * s2 - 2.0 * s),
        ],
    )
}

/// Interpolated value and gradient at `p`; `None` where the 4x4 stencil
/// would leave the grid.
pub(crate) fn bicubic(g: &Grid, u: &[f64], p: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let fx = (p[0] - g.xmin) / g.h;
    let fy = (p[1] - g.ymin) / g.h;
    let (ci, cj) = (fx.floor(), fy.floor());
    if !(ci >= 1.0 && cj >= 1.0 && ci + 3.0 <= g.nx as f64 && cj + 3.0 <= g.ny as f64) {
        return None;
    }
    let (i, j) = (ci as usize, cj as usize);
    let (wx, dx) = weights(fx - ci);
    let (wy, dy) = weights(fy - cj);
    let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for b in 0..4 {
        let start = (j + b - 1) * g.nx + i - 1;
        let row = &u[start..start + 4];
        let (mut r, mut rd) = (0.0, 0.0);
        for a in 0..4 {
            r += wx[a] * row[a];
            rd += dx[a] * row[a];
        }
        v += wy[b] * r;
        gx += wy[b] * rd;
        gy += dy[b] * r;
    }
    Some((v, [gx / g.h, gy / g.h]))
}

/// Nearest point to `y` on the interpolant's zero level, by alternating a
/// Newton projection onto the level with a slide along it. `None` if the
/// iteration leaves the grid, meets a flat spot or does not settle.
pub(crate) fn foot_point(g: &Grid, u: &[f64], y: [f64; 2]) -> Option<[f64; 2]> {
    let mut x = y;
    let tol = 1e-10 * g.h;
    for _ in 0..MAX_ITER {
        let (v, [gx, gy]) = bicubic(g, u, x)?;
        let n2 = gx * gx + gy * gy;
        if !(n2 > 1e-12) {
            return None;
        }
        let d1 = [-v * gx / n2, -v * gy / n2];
        let w = [y[0] - x[0], y[1] - x[1]];
        let wn = (w[0] * gx + w[1] * gy) / n2;
        let mut d2 = [w[0] - wn * gx, w[1] - wn * gy];
        // no more than a cell along the level per iteration
        let len = d2[0].hypot(d2[1]);
        if len > g.h {
            d2 = [d2[0] * g.h / len, d2[1] * g.h / len];
        }
        x = [x[0] + d1[0] + d2[0], x[1] + d1[1] + d2[1]];
        if d1[0].hypot(d1[1]) + len < tol {
            return Some(x);
        }
    }
    None
}

/// Unsigned metric distance from node `k` to the interpolated zero level,
/// accepted only when the foot point lies within `reach` (euclidean).
pub(crate) fn foot_distance(g: &Grid, u: &[f64], metric: &MetricSpec, k: usize, reach: f64) -> Option<f64> {
    let y = g.node_at(k);
    let x = foot_point(g, u, y)?;
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    if r > reach {
        return None;
    }
    if metric.is_euclidean() {
        Some(r)
    } else {
        let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
        Some(r * metric.phi.sample(mid).exp())
    }
}
