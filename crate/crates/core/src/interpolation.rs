//! Harmonic interpolation between the two sides of an offset region and the
//! midsurface cut out by one of its regular level sets.

use rayon::prelude::*;

use crate::distance::{BoundaryLabel, OffsetRegion, RegionSet};
use crate::error::{Error, Result};
use crate::flow::reinitialize;
use crate::grid::{gradient_at, MetricSpec, ScalarField};

pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_CG_ITERS: usize = 100_000;
const MIN_THETA: f64 = 1e-3;

/// Where Dirichlet data sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirichletPlacement {
    /// On the subcell crossing of the offset level along each cut edge
    /// (symmetric ghost-fluid treatment, second order).
    #[default]
    CutCell,
    /// On the labelled mask nodes themselves (first order).
    Node,
}

#[derive(Debug, Clone)]
pub struct HarmonicField {
    /// Solution on the mask, extended by 0 on the `X` side and 1 on the `Y`
    /// side.
    pub h: ScalarField,
    pub region: OffsetRegion,
    pub placement: DirichletPlacement,
    pub iterations: usize,
    /// Max-norm residual of the discrete equations.
    pub residual: f64,
}

impl HarmonicField {
    pub fn rho(&self) -> f64 {
        self.region.rho
    }

    pub fn grad_norm(&self, idx: usize) -> f64 {
        let [a, b] = gradient_at(&self.h.grid, &self.h.values, idx);
        a.hypot(b)
    }

    /// Largest amount by which a mask value leaves `[0, 1]`.
    pub fn max_principle_excess(&self) -> f64 {
        self.mask_values()
            .map(|v| (-v).max(v - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest `|h(p) - mean of its 4 neighbours|` over mask nodes whose
    /// neighbours are all in the mask.
    pub fn mean_value_defect(&self) -> f64 {
        let g = self.h.grid;
        let v = &self.h.values;
        let mut worst: f64 = 0.0;
        for idx in 0..g.len() {
            if !self.region.mask[idx] {
                continue;
            }
            let nb = g.neighbors4(idx);
            if nb.iter().all(|q| q.is_some_and(|q| self.region.mask[q])) {
                let s: f64 = nb.iter().flatten().map(|&q| v[q]).sum();
                worst = worst.max((v[idx] - 0.25 * s).abs());
            }
        }
        worst
    }

    fn mask_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.h
            .values
            .iter()
            .zip(&self.region.mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }
}

// Dirichlet value and edge fraction for the cut edge from mask node `p` to
// the excluded node `q`; `None` for ambiguous edges (Neumann).
fn cut_edge(r: &OffsetRegion, p: usize, q: usize) -> Option<(f64, f64)> {
    let (lx, ly) = (&r.level_x, &r.level_y);
    let zero = lx[q] < 0.0;
    let one = ly[q] < 0.0;
    let frac = |l: &[f64]| l[p] / (l[p] - l[q]);
    match (zero, one) {
        (true, false) => Some((0.0, frac(lx))),
        (false, true) => Some((1.0, frac(ly))),
        _ => None,
    }
}

struct System {
    unknowns: Vec<usize>,
    diag: Vec<f64>,
    nbrs: Vec<[usize; 4]>,
    rhs: Vec<f64>,
}

const NONE: usize = usize::MAX;

fn assemble(r: &OffsetRegion, placement: DirichletPlacement) -> Result<(System, Vec<Option<f64>>)> {
    let g = r.grid;
    // nodes that carry Dirichlet data themselves
    let mut fixed: Vec<Option<f64>> = vec![None; g.len()];
    match placement {
        DirichletPlacement::Node => {
            for idx in 0..g.len() {
                fixed[idx] = match r.labels[idx] {
                    Some(BoundaryLabel::Zero) => Some(0.0),
                    Some(BoundaryLabel::One) => Some(1.0),
                    _ => None,
                };
            }
        }
        DirichletPlacement::CutCell => {
            // a crossing (almost) on the node: the node carries the data
            for idx in 0..g.len() {
                if !r.mask[idx] {
                    continue;
                }
                for q in g.neighbors4(idx).into_iter().flatten() {
                    if r.mask[q] {
                        continue;
                    }
                    if let Some((val, theta)) = cut_edge(r, idx, q) {
                        if theta < MIN_THETA {
                            fixed[idx] = Some(val);
                        }
                    }
                }
            }
        }
    }
    let mut slot = vec![NONE; g.len()];
    let mut unknowns = Vec::new();
    for idx in 0..g.len() {
        if r.mask[idx] && fixed[idx].is_none() {
            slot[idx] = unknowns.len();
            unknowns.push(idx);
        }
    }
    let (mut has_zero, mut has_one) = (false, false);
    let n = unknowns.len();
    let mut sys = System {
        unknowns,
        diag: vec![0.0; n],
        nbrs: vec![[NONE; 4]; n],
        rhs: vec![0.0; n],
    };
    let mut anchored = vec![false; n];
    for k in 0..n {
        let p = sys.unknowns[k];
        for (s, q) in g.neighbors4(p).into_iter().enumerate() {
            let Some(q) = q else { continue };
            if slot[q] != NONE {
                sys.diag[k] += 1.0;
                sys.nbrs[k][s] = slot[q];
            } else if let Some(val) = fixed[q] {
                sys.diag[k] += 1.0;
                sys.rhs[k] += val;
                anchored[k] = true;
            } else if placement == DirichletPlacement::CutCell && !r.mask[q] {
                if let Some((val, theta)) = cut_edge(r, p, q) {
                    sys.diag[k] += 1.0 / theta;
                    sys.rhs[k] += val / theta;
                    anchored[k] = true;
                    has_zero |= val == 0.0;
                    has_one |= val == 1.0;
                }
            }
        }
    }
    has_zero |= fixed.iter().any(|f| *f == Some(0.0));
    has_one |= fixed.iter().any(|f| *f == Some(1.0));
    if !(has_zero && has_one) {
        return Err(Error::MissingBoundaryClass { has_zero, has_one });
    }
    // every connected component needs Dirichlet data
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut members = 0usize;
        let mut ok = false;
        seen[start] = true;
        while let Some(k) = stack.pop() {
            members += 1;
            ok |= anchored[k];
            for &m in &sys.nbrs[k] {
                if m != NONE && !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if !ok {
            return Err(Error::UnanchoredComponent { nodes: members });
        }
    }
    Ok((sys, fixed))
}

impl System {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(k, yk)| {
            let mut s = self.diag[k] * x[k];
            for &m in &self.nbrs[k] {
                if m != NONE {
                    s -= x[m];
                }
            }
            *yk = s;
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fixed order, so results do not depend on the thread count
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Jacobi-preconditioned conjugate gradients to a max-norm residual of
/// `RESIDUAL_TOL`. Returns (solution, iterations, residual).
fn solve(sys: &System) -> Result<(Vec<f64>, usize, f64)> {
    let n = sys.diag.len();
    let inv: Vec<f64> = sys.diag.iter().map(|d| 1.0 / d).collect();
    let mut x: Vec<f64> = vec![0.5; n];
    let mut ax = vec![0.0; n];
    sys.apply(&x, &mut ax);
    let mut r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, i)| r * i).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=MAX_CG_ITERS {
        if max_abs(&r) <= RESIDUAL_TOL {
            // confirm against the true residual
            sys.apply(&x, &mut ax);
            let true_r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let res = max_abs(&true_r);
            if res <= RESIDUAL_TOL {
                return Ok((x, it - 1, res));
            }
            r = true_r;
            z = r.iter().zip(&inv).map(|(r, i)| r * i).collect();
            p.clone_from(&z);
            rz = dot(&r, &z);
        }
        sys.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            z[k] = r[k] * inv[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    sys.apply(&x, &mut ax);
    let residual = max_abs(&sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
    Err(Error::SolverDiverged {
        iterations: MAX_CG_ITERS,
        residual,
        target: RESIDUAL_TOL,
    })
}

/// Discrete harmonic function on `K(rho)` equal to 0 on the `X` side and 1 on
/// the `Y` side. The flat Laplacian is used for every metric: in two
/// dimensions a conformal factor does not change which functions are
/// harmonic.
pub fn harmonic_interpolant(region: &OffsetRegion, metric: &MetricSpec) -> Result<HarmonicField> {
    harmonic_interpolant_with(region, metric, DirichletPlacement::CutCell)
}

pub fn harmonic_interpolant_with(
    region: &OffsetRegion,
    metric: &MetricSpec,
    placement: DirichletPlacement,
) -> Result<HarmonicField> {
    let g = region.grid;
    if *metric.grid() != g {
        return Err(Error::InvalidGrid("offset region and metric grids differ".into()));
    }
    let (sys, fixed) = assemble(region, placement)?;
    let (x, iterations, residual) = solve(&sys)?;
    let mut values: Vec<f64> = (0..g.len())
        .map(|idx| {
            if let Some(v) = fixed[idx] {
                v
            } else if region.level_x[idx] < region.level_y[idx] {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    for (k, &idx) in sys.unknowns.iter().enumerate() {
        values[idx] = x[k];
    }
    Ok(HarmonicField {
        h: ScalarField::new(g, values),
        region: region.clone(),
        placement,
        iterations,
        residual,
    })
}

/// Gradient threshold below which a level is treated as critical.
pub fn gradient_floor(hf: &HarmonicField) -> f64 {
    1e-4 / hf.h.grid.diameter()
}

/// Smallest `|grad h|` over mask nodes with `|h - c| <= 2 h max|grad h|`,
/// `None` when that band is empty.
pub fn band_min_gradient(hf: &HarmonicField, c: f64) -> Option<f64> {
    let g = hf.h.grid;
    let mask = &hf.region.mask;
    let grads: Vec<(usize, f64)> = (0..g.len())
        .filter(|&i| mask[i])
        .map(|i| (i, hf.grad_norm(i)))
        .collect();
    let gmax = grads.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
    let width = 2.0 * g.h * gmax;
    grads
        .iter()
        .filter(|&&(i, _)| (hf.h.values[i] - c).abs() <= width)
        .map(|&(_, v)| v)
        .reduce(f64::min)
}

/// A level `c` in `[1/3, 2/3]` on which `grad h` stays away from zero:
/// 1/2 when acceptable, otherwise the best of `1/3 + k/48`, smallest first
/// on ties.
pub fn select_regular_value(hf: &HarmonicField) -> Result<f64> {
    let floor = gradient_floor(hf);
    let score = |c: f64| band_min_gradient(hf, c).unwrap_or(0.0);
    if score(0.5) > floor {
        return Ok(0.5);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=16 {
        let c = 1.0 / 3.0 + k as f64 / 48.0;
        let s = score(c);
        if s > best.0 {
            best = (s, c);
        }
    }
    if best.0 > floor {
        Ok(best.1)
    } else {
        Err(Error::NoRegularValue {
            best: best.0,
            threshold: floor,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Midsurface {
    pub c: f64,
    /// `Omega = {h <= c} u {dX <= rho}` as a signed distance; its zero level
    /// is `Sigma`.
    pub sigma: RegionSet,
    /// `(node, grad h / |grad h|, |grad h|)` on the `Sigma` band.
    pub normals: Vec<(usize, [f64; 2], f64)>,
    pub region: OffsetRegion,
    pub g_min: f64,
}

/// Builds `Omega` and `Sigma` at level `c` and certifies
/// `Omega ⊇ {dX <= rho}`, `Omega ∩ {dY < rho} = ∅` and that `Sigma` stays in
/// or next to the mask.
pub fn extract_midsurface(hf: &HarmonicField, c: f64, metric: &MetricSpec) -> Result<Midsurface> {
    let g = hf.h.grid;
    let r = &hf.region;
    let raw: Vec<f64> = (0..g.len())
        .map(|i| (hf.h.values[i] - c).min(r.level_x[i]))
        .collect();
    let sigma = reinitialize(&RegionSet::new(ScalarField::new(g, raw)), metric)?;
    let mut bad = Vec::new();
    for i in 0..g.len() {
        let inside = sigma.is_inside(i);
        if (r.level_x[i] <= 0.0 && !inside) || (r.level_y[i] < 0.0 && inside) {
            bad.push(i);
        }
    }
    let band = sigma.interface_nodes();
    for &i in &band {
        let near = r.mask[i] || g.neighbors4(i).into_iter().flatten().any(|q| r.mask[q]);
        if !near {
            bad.push(i);
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::ContainmentViolated { nodes: bad });
    }
    let normals = band
        .into_iter()
        .filter(|&i| r.mask[i])
        .filter_map(|i| {
            let [a, b] = gradient_at(&g, &hf.h.values, i);
            let n = a.hypot(b);
            (n > 0.0).then(|| (i, [a / n, b / n], n))
        })
        .collect();
    Ok(Midsurface {
        c,
        sigma,
        normals,
        region: r.clone(),
        g_min: gradient_floor(hf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Report {
    pub nodes: usize,
    pub pairs: usize,
    /// Largest angle between normals of close pairs near `∂K`.
    pub max_angle: f64,
    pub min_grad: f64,
    pub g_min: f64,
}

impl C1Report {
    pub fn gradient_ok(&self) -> bool {
        self.nodes == 0 || self.min_grad > self.g_min
    }
}

/// Normal oscillation of `Sigma` near `∂K(rho)`: over band nodes within
/// `delta` of `∂K` and pairs of them closer than `delta`.
pub fn uniform_c1_check(ms: &Midsurface, delta: f64) -> C1Report {
    let g = ms.region.grid;
    let near: Vec<&(usize, [f64; 2], f64)> = ms
        .normals
        .iter()
        .filter(|(i, _, _)| ms.region.boundary_distance(*i) < delta)
        .collect();
    let mut pairs = 0;
    let mut max_angle: f64 = 0.0;
    for (a, (i, n, _)) in near.iter().enumerate() {
        let p = g.node_at(*i);
        for (j, m, _) in &near[a + 1..] {
            let q = g.node_at(*j);
            if (p[0] - q[0]).hypot(p[1] - q[1]) < delta {
                pairs += 1;
                let cos = (n[0] * m[0] + n[1] * m[1]).clamp(-1.0, 1.0);
                max_angle = max_angle.max(cos.acos());
            }
        }
    }
    C1Report {
        nodes: near.len(),
        pairs,
        max_angle,
        min_grad: near.iter().map(|x| x.2).fold(f64::INFINITY, f64::min),
        g_min: ms.g_min,
    }
}
