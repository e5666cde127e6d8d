//! Marching-squares extraction of zero level sets as polylines.

use std::collections::HashMap;

use crate::distance::RegionSet;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

// Edge ids: 2*idx for the edge (i,j)-(i+1,j), 2*idx+1 for (i,j)-(i,j+1).
fn edge_point(g: &Grid, v: &[f64], edge: usize) -> [f64; 2] {
    let a = edge / 2;
    let b = if edge % 2 == 0 { a + 1 } else { a + g.nx };
    let t = v[a] / (v[a] - v[b]);
    let pa = g.node_at(a);
    let pb = g.node_at(b);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

/// Segments of the zero level, one per crossed cell side pair, with saddles
/// resolved by the cell-centre average.
fn segments(g: &Grid, v: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let i00 = g.idx(i, j);
            let i10 = i00 + 1;
            let i01 = i00 + g.nx;
            let i11 = i01 + 1;
            let inside = |k: usize| v[k] <= 0.0;
            let (a, b, c, d) = (inside(i00), inside(i10), inside(i11), inside(i01));
            let bottom = 2 * i00;
            let right = 2 * i10 + 1;
            let top = 2 * i01;
            let left = 2 * i00 + 1;
            let mut crossed = Vec::with_capacity(4);
            if a != b {
                crossed.push(bottom);
            }
            if b != c {
                crossed.push(right);
            }
            if d != c {
                crossed.push(top);
            }
            if a != d {
                crossed.push(left);
            }
            match crossed.len() {
                2 => out.push((crossed[0], crossed[1])),
                4 => {
                    let centre_inside = (v[i00] + v[i10] + v[i11] + v[i01]) * 0.25 <= 0.0;
                    // `a` and `c` share a side; the centre decides which pair is joined
                    if a == centre_inside {
                        out.push((bottom, right));
                        out.push((top, left));
                    } else {
                        out.push((bottom, left));
                        out.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Zero level of `region` chained into polylines. Closed curves repeat no
/// vertex; open ones end on the box boundary.
pub fn zero_polylines(region: &RegionSet) -> Vec<Polyline> {
    let g = *region.grid();
    let v = &region.u.values;
    let segs = segments(&g, v);
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(p, q) in &segs {
        adj.entry(p).or_default().push(q);
        adj.entry(q).or_default().push(p);
    }
    let mut keys: Vec<usize> = adj.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut lines = Vec::new();

    let walk = |start: usize, visited: &mut HashMap<usize, bool>| -> Polyline {
        let mut pts = vec![edge_point(&g, v, start)];
        visited.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = adj[&cur]
                .iter()
                .copied()
                .find(|&n| n != prev && !visited.get(&n).copied().unwrap_or(false));
            match next {
                Some(n) => {
                    visited.insert(n, true);
                    pts.push(edge_point(&g, v, n));
                    prev = cur;
                    cur = n;
                }
                None => {
                    let closed = pts.len() > 2 && adj[&cur].contains(&start);
                    return Polyline { points: pts, closed };
                }
            }
        }
    };

    // open chains first, starting from their endpoints
    for &k in &keys {
        if adj[&k].len() == 1 && !visited.get(&k).copied().unwrap_or(false) {
            lines.push(walk(k, &mut visited));
        }
    }
    for &k in &keys {
        if !visited.get(&k).copied().unwrap_or(false) {
            lines.push(walk(k, &mut visited));
        }
    }
    lines
}

/// Mean distance from `center` to the edge crossings of the zero level.
pub fn mean_radius(region: &RegionSet, center: [f64; 2]) -> Option<f64> {
    let c = region.crossings();
    if c.is_empty() {
        return None;
    }
    let sum: f64 = c
        .iter()
        .map(|x| (x.point[0] - center[0]).hypot(x.point[1] - center[1]))
        .sum();
    Some(sum / c.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_gives_one_closed_polyline() {
        let g = Grid::square(128, -1.0, 1.0).unwrap();
        let r = RegionSet::disk(g, [0.05, -0.1], 0.45);
        let lines = zero_polylines(&r);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let n = lines[0].points.len() as f64;
        let est = std::f64::consts::TAU * 0.45 / g.h;
        assert!(n >= 0.8 * est && n <= 1.3 * est, "{n} vs {est}");
        let rad = mean_radius(&r, [0.05, -0.1]).unwrap();
        assert!((rad - 0.45).abs() < 1e-3);
    }

    #[test]
    fn line_gives_open_polyline() {
        let g = Grid::square(40, -1.0, 1.0).unwrap();
        let r = RegionSet::half_plane(g, 0.3, 1.0, 0.1);
        let lines = zero_polylines(&r);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
    }

    #[test]
    fn empty_region_has_no_polylines() {
        let g = Grid::square(20, -1.0, 1.0).unwrap();
        let r = RegionSet::from_fn(g, |_, _| 1.0);
        assert!(zero_polylines(&r).is_empty());
        assert_eq!(mean_radius(&r, [0.0, 0.0]), None);
    }
}
